use crate::error::{Error, Result};
use crate::numerics::nn::Linear;
use crate::numerics::{Bound, ParamStore, Var};
use crate::rng::DetRng;

/// Splits `[N, C_in, H, W]` images into non-overlapping `patch x patch`
/// blocks and projects each to `dim` channels, giving a channels-last
/// `[N, H/patch, W/patch, dim]` grid.
///
/// The projection weight is `[C_in * patch * patch, dim]` with row index
/// `(c * patch + ky) * patch + kx`, i.e. the transpose of the equivalent
/// stride-`patch` convolution kernel flattened.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub patch: usize,
    pub cin: usize,
    pub dim: usize,
    pub proj: Linear,
}

impl PatchEmbed {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cin: usize,
        patch: usize,
        dim: usize,
        rng: &mut DetRng,
    ) -> Result<Self> {
        Ok(PatchEmbed {
            patch,
            cin,
            dim,
            proj: Linear::new(store, &format!("{path}.proj"), cin * patch * patch, dim, true, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, img: &Var<'t>) -> Result<Var<'t>> {
        let dims = img.dims();
        let [n, c, h, w] = dims[..] else {
            return Err(Error::shape(format!("patch_embed expects [N, C, H, W], got {dims:?}")));
        };
        let k = self.patch;
        if c != self.cin || h % k != 0 || w % k != 0 {
            return Err(Error::shape(format!("patch_embed({}, patch {k}) cannot split {dims:?}", self.cin)));
        }
        let tokens = img.reshape(&[n, c, h / k, k, w / k, k])?.permute(&[0, 2, 4, 1, 3, 5])?.reshape(&[
            n,
            h / k,
            w / k,
            c * k * k,
        ])?;
        self.proj.forward(p, &tokens)
    }
}

/// Concatenates each 2x2 neighbourhood of a `[N, H, W, C]` grid into `4C`
/// channels (order `(0,0), (0,1), (1,0), (1,1)` as `(dy, dx)`), then projects
/// to `2C`.
#[derive(Clone, Debug)]
pub struct PatchMerge {
    pub proj: Linear,
}

impl PatchMerge {
    pub fn new(store: &mut ParamStore, path: &str, c: usize, rng: &mut DetRng) -> Result<Self> {
        Ok(PatchMerge { proj: Linear::new(store, &format!("{path}.proj"), 4 * c, 2 * c, true, rng)? })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        self.proj.forward(p, &merge_neighbourhoods(x)?)
    }
}

/// `[N, H, W, C] -> [N, H/2, W/2, 4C]` without projection.
pub fn merge_neighbourhoods<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    let dims = x.dims();
    let [n, h, w, c] = dims[..] else {
        return Err(Error::shape(format!("patch_merge expects [N, H, W, C], got {dims:?}")));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("patch_merge needs an even grid, got {h}x{w}")));
    }
    x.reshape(&[n, h / 2, 2, w / 2, 2, c])?.permute(&[0, 1, 3, 2, 4, 5])?.reshape(&[n, h / 2, w / 2, 4 * c])
}
