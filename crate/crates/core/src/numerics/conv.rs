//! Convolution and spatial resampling on `[N, C, H, W]` (or `[C, H, W]`) maps.

use super::linalg::gemm;
use super::{Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let l = g.col_cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let l = g.col_cols();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Splits an input into batch size and per-sample dims, accepting rank 3 or 4.
fn as_batched(dims: &[usize], op: &str) -> Result<(usize, usize, usize, usize)> {
    match *dims {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::shape(format!("{op} expects [N,C,H,W] or [C,H,W], got {dims:?}"))),
    }
}

fn with_batch_rank(rank: usize, n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if rank == 3 {
        vec![c, h, w]
    } else {
        vec![n, c, h, w]
    }
}

impl<'t> Var<'t> {
    /// Cross-correlation with zero padding. `weight` is `[C_out, C_in, k, k]`,
    /// `bias` is `[C_out]`.
    pub fn conv2d(&self, weight: &Var<'t>, bias: Option<&Var<'t>>, stride: usize, pad: usize) -> Result<Var<'t>> {
        let x = self.value();
        let wv = weight.value();
        let rank = x.rank();
        let (n, cin, h, w) = as_batched(x.dims(), "conv2d")?;
        let (cout, k) = match *wv.dims() {
            [co, ci, kh, kw] if ci == cin && kh == kw => (co, kh),
            _ => return Err(Error::shape(format!("conv2d weight {:?} for input {:?}", wv.dims(), x.dims()))),
        };
        if stride == 0 {
            return Err(Error::config("conv2d stride must be >= 1"));
        }
        if pad >= k {
            return Err(Error::config(format!("conv2d pad {pad} with kernel {k}")));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape(format!("conv2d kernel {k} larger than padded input {h}x{w}")));
        }
        let geom = ConvGeom {
            cin,
            h,
            w,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        };
        let bv = match bias {
            Some(b) => {
                let b = b.value();
                if b.dims() != [cout] {
                    return Err(Error::shape(format!("conv2d bias {:?}", b.dims())));
                }
                Some(b)
            }
            None => None,
        };

        let (rows, l) = (geom.col_rows(), geom.col_cols());
        let in_len = cin * h * w;
        let out_len = cout * l;
        // Pointwise convs read the input directly as the column matrix.
        let mut cols: Vec<f64> = if geom.is_pointwise() { Vec::new() } else { vec![0.0; n * rows * l] };
        let mut out = vec![0.0; n * out_len];
        for s in 0..n {
            let xs = &x.data()[s * in_len..(s + 1) * in_len];
            let col = if geom.is_pointwise() {
                xs
            } else {
                let c = &mut cols[s * rows * l..(s + 1) * rows * l];
                im2col(xs, &geom, c);
                &*c
            };
            let dst = &mut out[s * out_len..(s + 1) * out_len];
            gemm(cout, rows, l, wv.data(), false, col, false, dst, false);
            if let Some(b) = &bv {
                for (co, plane) in dst.chunks_mut(l).enumerate() {
                    let bb = b.data()[co];
                    for v in plane.iter_mut() {
                        *v += bb;
                    }
                }
            }
        }
        let y = Tensor::from_parts(with_batch_rank(rank, n, cout, geom.ho, geom.wo), out);

        let mut parents = vec![*self, *weight];
        if let Some(b) = bias {
            parents.push(*b);
        }
        let x_dims = x.dims().to_vec();
        let w_dims = wv.dims().to_vec();
        self.tape().record("conv2d", y, &parents, move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = vec![0.0; n * in_len];
                let mut dcol = vec![0.0; if geom.is_pointwise() { 0 } else { rows * l }];
                for s in 0..n {
                    let gs = &gd[s * out_len..(s + 1) * out_len];
                    let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                    if geom.is_pointwise() {
                        gemm(rows, cout, l, wv.data(), true, gs, false, dxs, false);
                    } else {
                        gemm(rows, cout, l, wv.data(), true, gs, false, &mut dcol, false);
                        col2im(&dcol, &geom, dxs);
                    }
                }
                Tensor::from_parts(x_dims.clone(), dx)
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![0.0; cout * rows];
                for s in 0..n {
                    let gs = &gd[s * out_len..(s + 1) * out_len];
                    let col = if geom.is_pointwise() {
                        &x.data()[s * in_len..(s + 1) * in_len]
                    } else {
                        &cols[s * rows * l..(s + 1) * rows * l]
                    };
                    gemm(cout, l, rows, gs, false, col, true, &mut dw, true);
                }
                Tensor::from_parts(w_dims.clone(), dw)
            });
            let mut grads = vec![dx, dw];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| {
                    let mut db = vec![0.0; cout];
                    for s in 0..n {
                        for (co, plane) in gd[s * out_len..(s + 1) * out_len].chunks(l).enumerate() {
                            db[co] += plane.iter().sum::<f64>();
                        }
                    }
                    Tensor::from_parts(vec![cout], db)
                }));
            }
            grads
        })
    }

    /// `[.., 4C, H, W] -> [.., C, 2H, 2W]`; output `(c, 2y+dy, 2x+dx)` reads
    /// input channel `4c + 2dy + dx`.
    pub fn pixel_shuffle(&self) -> Result<Var<'t>> {
        let dims = self.dims();
        let rank = dims.len();
        let (n, c4, h, w) = as_batched(&dims, "pixel_shuffle")?;
        if c4 % 4 != 0 {
            return Err(Error::shape(format!("pixel_shuffle needs channels divisible by 4, got {c4}")));
        }
        let c = c4 / 4;
        self.reshape(&[n, c, 2, 2, h, w])?.permute(&[0, 1, 4, 2, 5, 3])?.reshape(&with_batch_rank(
            rank,
            n,
            c,
            2 * h,
            2 * w,
        ))
    }

    /// Inverse of [`Var::pixel_shuffle`].
    pub fn pixel_unshuffle(&self) -> Result<Var<'t>> {
        let dims = self.dims();
        let rank = dims.len();
        let (n, c, h2, w2) = as_batched(&dims, "pixel_unshuffle")?;
        if h2 % 2 != 0 || w2 % 2 != 0 {
            return Err(Error::shape(format!("pixel_unshuffle needs even grid, got {h2}x{w2}")));
        }
        let (h, w) = (h2 / 2, w2 / 2);
        self.reshape(&[n, c, h, 2, w, 2])?.permute(&[0, 1, 3, 5, 2, 4])?.reshape(&with_batch_rank(rank, n, 4 * c, h, w))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Var<'t>> {
        let x = self.value();
        let rank = x.rank();
        let (n, c, h, w) = as_batched(x.dims(), "upsample_nearest")?;
        let (ho, wo) = (h * factor, w * factor);
        let mut out = vec![0.0; n * c * ho * wo];
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    dst[oy * wo + ox] = src[(oy / factor) * w + ox / factor];
                }
            }
        }
        let y = Tensor::from_parts(with_batch_rank(rank, n, c, ho, wo), out);
        let x_dims = x.dims().to_vec();
        self.tape().record("upsample_nearest", y, &[*self], move |g, _| {
            let mut dx = vec![0.0; n * c * h * w];
            for p in 0..n * c {
                let src = &g.data()[p * ho * wo..(p + 1) * ho * wo];
                let dst = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        dst[(oy / factor) * w + ox / factor] += src[oy * wo + ox];
                    }
                }
            }
            vec![Some(Tensor::from_parts(x_dims.clone(), dx))]
        })
    }

    /// Bilinear upsampling by an integer factor with half-pixel centers and
    /// edge clamping.
    pub fn upsample_bilinear(&self, factor: usize) -> Result<Var<'t>> {
        let x = self.value();
        let rank = x.rank();
        let (n, c, h, w) = as_batched(x.dims(), "upsample_bilinear")?;
        let (ho, wo) = (h * factor, w * factor);
        let ys = bilinear_taps(h, ho);
        let xs = bilinear_taps(w, wo);
        let mut out = vec![0.0; n * c * ho * wo];
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                    let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                    dst[oy * wo + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        let y = Tensor::from_parts(with_batch_rank(rank, n, c, ho, wo), out);
        let x_dims = x.dims().to_vec();
        self.tape().record("upsample_bilinear", y, &[*self], move |g, _| {
            let mut dx = vec![0.0; n * c * h * w];
            for p in 0..n * c {
                let src = &g.data()[p * ho * wo..(p + 1) * ho * wo];
                let dst = &mut dx[p * h * w..(p + 1) * h * w];
                for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                        let gv = src[oy * wo + ox];
                        dst[y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                        dst[y0 * w + x1] += gv * (1.0 - fy) * fx;
                        dst[y1 * w + x0] += gv * fy * (1.0 - fx);
                        dst[y1 * w + x1] += gv * fy * fx;
                    }
                }
            }
            vec![Some(Tensor::from_parts(x_dims.clone(), dx))]
        })
    }
}

fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
