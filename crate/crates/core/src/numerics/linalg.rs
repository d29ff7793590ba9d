use super::{Tensor, Var};
use crate::error::{Error, Result};

/// `C (m x n) = op(A) (m x k) * op(B) (k x n) [+ C]`, all buffers row-major.
///
/// With `ta` set, `a` is stored as `k x m`; with `tb` set, `b` is stored as
/// `n x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the `m*k`, `k*n` and `m*n`
    // elements of the checked slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'t> Var<'t> {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (ad, bd) = (a.dims(), b.dims());
        if ad.len() != 2 || bd.len() != 2 || ad[1] != bd[0] {
            return Err(Error::shape(format!("matmul {ad:?} x {bd:?}")));
        }
        let (m, k, n) = (ad[0], ad[1], bd[1]);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut c, false);
        let y = Tensor::from_parts(vec![m, n], c);
        self.tape().record("matmul", y, &[*self, *other], move |g, needs| {
            let da = needs[0].then(|| {
                let mut d = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, b.data(), true, &mut d, false);
                Tensor::from_parts(vec![m, k], d)
            });
            let db = needs[1].then(|| {
                let mut d = vec![0.0; k * n];
                gemm(k, m, n, a.data(), true, g.data(), false, &mut d, false);
                Tensor::from_parts(vec![k, n], d)
            });
            vec![da, db]
        })
    }

    /// Batched product over the leading axis: `[B, m, k] x [B, k, n]`, with
    /// `transpose_rhs` reading the right operand as `[B, n, k]`.
    pub fn bmm(&self, other: &Var<'t>, transpose_rhs: bool) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (ad, bd) = (a.dims().to_vec(), b.dims().to_vec());
        let bad = || Error::shape(format!("bmm {ad:?} x {bd:?} (transpose_rhs={transpose_rhs})"));
        if ad.len() != 3 || bd.len() != 3 || ad[0] != bd[0] {
            return Err(bad());
        }
        let (batch, m, k) = (ad[0], ad[1], ad[2]);
        let (bk, n) = if transpose_rhs { (bd[2], bd[1]) } else { (bd[1], bd[2]) };
        if bk != k {
            return Err(bad());
        }
        let mut c = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                transpose_rhs,
                &mut c[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let y = Tensor::from_parts(vec![batch, m, n], c);
        self.tape().record("bmm", y, &[*self, *other], move |g, needs| {
            let gd = g.data();
            let da = needs[0].then(|| {
                let mut d = vec![0.0; batch * m * k];
                for i in 0..batch {
                    // dA = G * op(B)^T
                    gemm(
                        m,
                        n,
                        k,
                        &gd[i * m * n..(i + 1) * m * n],
                        false,
                        &b.data()[i * k * n..(i + 1) * k * n],
                        !transpose_rhs,
                        &mut d[i * m * k..(i + 1) * m * k],
                        false,
                    );
                }
                Tensor::from_parts(vec![batch, m, k], d)
            });
            let db = needs[1].then(|| {
                let mut d = vec![0.0; batch * k * n];
                for i in 0..batch {
                    let (ga, aa) = (&gd[i * m * n..(i + 1) * m * n], &a.data()[i * m * k..(i + 1) * m * k]);
                    let dst = &mut d[i * k * n..(i + 1) * k * n];
                    if transpose_rhs {
                        // d(B stored n x k) = G^T * A
                        gemm(n, m, k, ga, true, aa, false, dst, false);
                    } else {
                        gemm(k, m, n, aa, true, ga, false, dst, false);
                    }
                }
                Tensor::from_parts(bd.clone(), d)
            });
            vec![da, db]
        })
    }

    /// Softmax over the last axis, stabilized by subtracting the row max.
    pub fn softmax_last(&self) -> Result<Var<'t>> {
        let x = self.value();
        let c = *x.dims().last().ok_or_else(|| Error::shape("softmax of rank-0 tensor"))?;
        let mut y = (*x).clone();
        for row in y.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let yv = y.clone();
        self.tape().record("softmax_last", y, &[*self], move |g, _| {
            let mut d = vec![0.0; g.numel()];
            for ((dr, gr), yr) in d.chunks_mut(c).zip(g.data().chunks(c)).zip(yv.data().chunks(c)) {
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                for ((dv, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                    *dv = yv * (gv - dot);
                }
            }
            vec![Some(Tensor::from_parts(g.dims().to_vec(), d))]
        })
    }

    /// Token-wise affine map: `x [.., in] * w [in, out] + b [out]`.
    pub fn linear(&self, weight: &Var<'t>, bias: Option<&Var<'t>>) -> Result<Var<'t>> {
        let dims = self.dims();
        let wd = weight.dims();
        let cin = *dims.last().unwrap();
        if wd.len() != 2 || wd[0] != cin {
            return Err(Error::shape(format!("linear input {dims:?} with weight {wd:?}")));
        }
        let rows = self.value().numel() / cin;
        let mut y = self.reshape(&[rows, cin])?.matmul(weight)?;
        if let Some(b) = bias {
            y = y.add_bias(b)?;
        }
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = wd[1];
        y.reshape(&out_dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn identity_and_scalar_products() {
        let tape = Tape::new();
        let i2 = tape.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(i2.matmul(&b).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
        let a = tape.constant(Tensor::new(&[1, 1], vec![2.0]).unwrap());
        let c = tape.constant(Tensor::new(&[1, 1], vec![3.0]).unwrap());
        assert_eq!(a.matmul(&c).unwrap().item(), 6.0);
    }

    #[test]
    fn mismatched_inner_dims() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_closed_forms() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2], vec![1.0, 1.0]).unwrap());
        assert_eq!(x.softmax_last().unwrap().value().data(), &[0.5, 0.5]);
        let x = tape.constant(Tensor::new(&[2], vec![0.0, 3f64.ln()]).unwrap());
        let y = x.softmax_last().unwrap().value();
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bmm_transposed_rhs_matches_plain() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin()));
        let b = tape.constant(Tensor::from_fn(&[2, 5, 4], |i| (i as f64 * 0.11).cos()));
        let bt = b.permute(&[0, 2, 1]).unwrap();
        let p = a.bmm(&b, true).unwrap().value();
        let q = a.bmm(&bt, false).unwrap().value();
        assert!(p.max_abs_diff(&q) < 1e-14);
    }
}
