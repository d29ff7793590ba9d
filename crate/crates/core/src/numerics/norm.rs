use super::{Tensor, Var};
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: Tensor::zeros(&[channels]), var: Tensor::ones(&[channels]) }
    }
}

impl<'t> Var<'t> {
    /// Normalizes over the last axis, then applies `gamma * x_hat + beta`.
    pub fn layer_norm(&self, gamma: &Var<'t>, beta: &Var<'t>, eps: f64) -> Result<Var<'t>> {
        if eps < 0.0 || eps.is_nan() {
            return Err(Error::config(format!("layer_norm eps must be >= 0, got {eps}")));
        }
        let x = self.value();
        let c = *x.dims().last().unwrap();
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.dims() != [c] || bv.dims() != [c] {
            return Err(Error::shape(format!("layer_norm affine {:?}/{:?} for channels {c}", gv.dims(), bv.dims())));
        }
        let rows = x.numel() / c;
        let mut xhat = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let row = &x.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[r * c + j] = h;
                out[r * c + j] = gv.data()[j] * h + bv.data()[j];
            }
        }
        let y = Tensor::from_parts(x.dims().to_vec(), out);
        let dims = x.dims().to_vec();
        self.tape().record("layer_norm", y, &[*self, *gamma, *beta], move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = vec![0.0; gd.len()];
                let mut dh = vec![0.0; c];
                for r in 0..rows {
                    let (gr, hr) = (&gd[r * c..(r + 1) * c], &xhat[r * c..(r + 1) * c]);
                    for j in 0..c {
                        dh[j] = gr[j] * gv.data()[j];
                    }
                    let m1 = dh.iter().sum::<f64>() / c as f64;
                    let m2 = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        dx[r * c + j] = inv_std[r] * (dh[j] - m1 - hr[j] * m2);
                    }
                }
                Tensor::from_parts(dims.clone(), dx)
            });
            let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
            if needs[1] || needs[2] {
                for r in 0..rows {
                    for j in 0..c {
                        dg[j] += gd[r * c + j] * xhat[r * c + j];
                        db[j] += gd[r * c + j];
                    }
                }
            }
            vec![
                dx,
                needs[1].then(|| Tensor::from_parts(vec![c], dg)),
                needs[2].then(|| Tensor::from_parts(vec![c], db)),
            ]
        })
    }

    /// Batch normalization over axis 1 of an `[N, C, ...]` tensor.
    ///
    /// In [`Mode::Train`] the batch statistics normalize the input and `stats`
    /// is updated by an exponential moving average (the variance update uses
    /// the unbiased estimate). In [`Mode::Eval`] the running statistics are
    /// used as constants.
    pub fn batch_norm(&self, gamma: &Var<'t>, beta: &Var<'t>, stats: &mut RunningStats, mode: Mode) -> Result<Var<'t>> {
        let x = self.value();
        let dims = x.dims().to_vec();
        if dims.len() < 2 {
            return Err(Error::shape(format!("batch_norm needs [N, C, ...], got {dims:?}")));
        }
        let (n, c) = (dims[0], dims[1]);
        let plane: usize = dims[2..].iter().product();
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.dims() != [c] || bv.dims() != [c] || stats.mean.dims() != [c] {
            return Err(Error::shape(format!("batch_norm parameters do not match {c} channels")));
        }
        let count = (n * plane) as f64;
        let at = move |s: usize, ch: usize| (s * c + ch) * plane;

        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut sum = 0.0;
                    for s in 0..n {
                        sum += x.data()[at(s, ch)..at(s, ch) + plane].iter().sum::<f64>();
                    }
                    let m = sum / count;
                    let mut sq = 0.0;
                    for s in 0..n {
                        sq += x.data()[at(s, ch)..at(s, ch) + plane].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = sq / count;
                }
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                for ch in 0..c {
                    let rm = &mut stats.mean.data_mut()[ch];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ch];
                    let rv = &mut stats.var.data_mut()[ch];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ch] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (stats.mean.data().to_vec(), stats.var.data().to_vec()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; x.numel()];
        let mut out = vec![0.0; x.numel()];
        for s in 0..n {
            for ch in 0..c {
                let (g, b) = (gv.data()[ch], bv.data()[ch]);
                for i in at(s, ch)..at(s, ch) + plane {
                    let h = (x.data()[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = g * h + b;
                }
            }
        }
        let y = Tensor::from_parts(dims.clone(), out);
        self.tape().record("batch_norm", y, &[*self, *gamma, *beta], move |g, needs| {
            let gd = g.data();
            let mut dg = vec![0.0; c];
            let mut db = vec![0.0; c];
            for s in 0..n {
                for ch in 0..c {
                    for i in at(s, ch)..at(s, ch) + plane {
                        dg[ch] += gd[i] * xhat[i];
                        db[ch] += gd[i];
                    }
                }
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![0.0; gd.len()];
                for ch in 0..c {
                    let scale = gv.data()[ch] * inv_std[ch];
                    let (m1, m2) = match mode {
                        Mode::Train => (db[ch] / count, dg[ch] / count),
                        Mode::Eval => (0.0, 0.0),
                    };
                    for s in 0..n {
                        for i in at(s, ch)..at(s, ch) + plane {
                            dx[i] = scale * (gd[i] - m1 - xhat[i] * m2);
                        }
                    }
                }
                Tensor::from_parts(dims.clone(), dx)
            });
            vec![
                dx,
                needs[1].then(|| Tensor::from_parts(vec![c], dg)),
                needs[2].then(|| Tensor::from_parts(vec![c], db)),
            ]
        })
    }
}
