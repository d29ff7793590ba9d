use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};

use super::batch_hw;

pub const STRUCT_WINDOW: usize = 7;

/// Window over which the structural statistics are taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructWindow {
    /// Square `k x k` sliding window, stride 1.
    Sliding(usize),
    /// One window covering the whole image.
    Global,
}

/// Per-window `C(x, y) = (cov + theta) / (sd_x * sd_y + theta)` with uniform
/// weights and population moments. `x` and `y` share a `[.., H, W]` shape;
/// the map is `[B, H - k + 1, W - k + 1]` (`[B, 1, 1]` in global mode).
///
/// `sd_x * sd_y` is evaluated as `sqrt(var_x * var_y)`, so `C(x, x) == 1`
/// exactly.
pub fn structural_map<'t>(x: &Var<'t>, y: &Var<'t>, window: StructWindow, theta: f64) -> Result<Var<'t>> {
    if x.dims() != y.dims() {
        return Err(Error::shape(format!("structural metric on {:?} and {:?}", x.dims(), y.dims())));
    }
    if !(theta > 0.0) {
        return Err(Error::config(format!("theta must be > 0, got {theta}")));
    }
    let (b, h, w) = batch_hw(&x.dims(), "structural metric")?;
    let (kh, kw) = match window {
        StructWindow::Sliding(k) => (k, k),
        StructWindow::Global => (h, w),
    };
    if kh == 0 || kh > h || kw > w {
        return Err(Error::shape(format!("window {kh}x{kw} larger than image {h}x{w}")));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let inv_n = 1.0 / (kh * kw) as f64;
    let xv = x.value();
    let yv = y.value();

    // Per-window statistics kept for the backward pass.
    #[derive(Clone, Copy)]
    struct Stats {
        mx: f64,
        my: f64,
        vx: f64,
        vy: f64,
        cxy: f64,
    }
    let mut stats = Vec::with_capacity(b * oh * ow);
    let mut out = Vec::with_capacity(b * oh * ow);
    for s in 0..b {
        let xs = &xv.data()[s * h * w..(s + 1) * h * w];
        let ys = &yv.data()[s * h * w..(s + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (mut sx, mut sy) = (0.0, 0.0);
                for r in oy..oy + kh {
                    for c in ox..ox + kw {
                        sx += xs[r * w + c];
                        sy += ys[r * w + c];
                    }
                }
                let (mx, my) = (sx * inv_n, sy * inv_n);
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for r in oy..oy + kh {
                    for c in ox..ox + kw {
                        let dx = xs[r * w + c] - mx;
                        let dy = ys[r * w + c] - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cxy += dx * dy;
                    }
                }
                let st = Stats { mx, my, vx: vx * inv_n, vy: vy * inv_n, cxy: cxy * inv_n };
                let sd = (st.vx * st.vy).sqrt();
                out.push((st.cxy + theta) / (sd + theta));
                stats.push(st);
            }
        }
    }
    let map = Tensor::new(&[b, oh, ow], out)?;
    let in_dims = x.dims();
    x.tape().record("structural_map", map, &[*x, *y], move |g, needs| {
        let mut gx = vec![0.0; b * h * w];
        let mut gy = vec![0.0; b * h * w];
        for s in 0..b {
            let xs = &xv.data()[s * h * w..(s + 1) * h * w];
            let ys = &yv.data()[s * h * w..(s + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let i = (s * oh + oy) * ow + ox;
                    let go = g.data()[i];
                    if go == 0.0 {
                        continue;
                    }
                    let st = stats[i];
                    let prod = st.vx * st.vy;
                    let sd = prod.sqrt();
                    let den = sd + theta;
                    let d_cxy = go / den;
                    let d_sd = -go * (st.cxy + theta) / (den * den);
                    let (d_vx, d_vy) =
                        if prod > 0.0 { (d_sd * st.vy / (2.0 * sd), d_sd * st.vx / (2.0 * sd)) } else { (0.0, 0.0) };
                    for r in oy..oy + kh {
                        for c in ox..ox + kw {
                            let j = r * w + c;
                            let dx = xs[j] - st.mx;
                            let dy = ys[j] - st.my;
                            gx[s * h * w + j] += inv_n * (d_cxy * dy + 2.0 * d_vx * dx);
                            gy[s * h * w + j] += inv_n * (d_cxy * dx + 2.0 * d_vy * dy);
                        }
                    }
                }
            }
        }
        vec![
            needs[0].then(|| Tensor::new(&in_dims, gx).expect("gradient dims")),
            needs[1].then(|| Tensor::new(&in_dims, gy).expect("gradient dims")),
        ]
    })
}
