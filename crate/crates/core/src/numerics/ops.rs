//! Elementwise, reduction and layout operations on [`Var`].

use super::tensor::strides_of;
use super::{Tensor, Var};
use crate::error::{Error, Result};

fn same_dims(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("{op}: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Builds a unary elementwise op whose derivative is expressed through the
/// input `x` and output `y`.
fn unary<'t>(
    x: &Var<'t>,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Var<'t>> {
    let xv = x.value();
    let y = xv.map(f);
    let yv = y.clone();
    x.tape().record(op, y, &[*x], move |g, _| {
        let data = g.data().iter().zip(xv.data().iter().zip(yv.data())).map(|(&g, (&x, &y))| g * df(x, y)).collect();
        vec![Some(Tensor::from_parts(g.dims().to_vec(), data))]
    })
}

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
pub(crate) const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_K * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

impl<'t> Var<'t> {
    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_dims("add", &a, &b)?;
        let y = a.zip_map(&b, |x, y| x + y)?;
        self.tape().record("add", y, &[*self, *other], |g, _| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_dims("sub", &a, &b)?;
        let y = a.zip_map(&b, |x, y| x - y)?;
        self.tape().record("sub", y, &[*self, *other], |g, _| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_dims("mul", &a, &b)?;
        let y = a.zip_map(&b, |x, y| x * y)?;
        self.tape().record("mul", y, &[*self, *other], move |g, needs| {
            vec![
                needs[0].then(|| g.zip_map(&b, |g, b| g * b).unwrap()),
                needs[1].then(|| g.zip_map(&a, |g, a| g * a).unwrap()),
            ]
        })
    }

    pub fn scale(&self, c: f64) -> Result<Var<'t>> {
        let y = self.value().map(|v| v * c);
        self.tape().record("scale", y, &[*self], move |g, _| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        let y = self.value().map(|v| v + c);
        self.tape().record("add_scalar", y, &[*self], |g, _| vec![Some(g.clone())])
    }

    /// Adds `bias` (1-D, length = last dim) to every row.
    pub fn add_bias(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        let c = *x.dims().last().unwrap();
        if b.dims() != [c] {
            return Err(Error::shape(format!("add_bias: bias {:?} for input {:?}", b.dims(), x.dims())));
        }
        let mut y = (*x).clone();
        for row in y.data_mut().chunks_mut(c) {
            for (v, bb) in row.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        self.tape().record("add_bias", y, &[*self, *bias], move |g, needs| {
            let db = needs[1].then(|| {
                let mut acc = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::from_parts(vec![c], acc)
            });
            vec![Some(g.clone()), db]
        })
    }

    /// Repeats a `[N, 1, ...]` tensor `c` times along axis 1.
    pub fn broadcast_channels(&self, c: usize) -> Result<Var<'t>> {
        let x = self.value();
        let dims = x.dims().to_vec();
        if dims.len() < 2 || dims[1] != 1 {
            return Err(Error::shape(format!("broadcast_channels needs [N, 1, ...], got {dims:?}")));
        }
        let n = dims[0];
        let plane: usize = dims[2..].iter().product();
        let mut out = Vec::with_capacity(n * c * plane);
        for s in x.data().chunks(plane) {
            for _ in 0..c {
                out.extend_from_slice(s);
            }
        }
        let mut out_dims = dims.clone();
        out_dims[1] = c;
        let y = Tensor::from_parts(out_dims, out);
        self.tape().record("broadcast_channels", y, &[*self], move |g, _| {
            let mut acc = vec![0.0; n * plane];
            for (i, blk) in g.data().chunks(plane).enumerate() {
                let dst = &mut acc[(i / c) * plane..(i / c + 1) * plane];
                for (a, v) in dst.iter_mut().zip(blk) {
                    *a += v;
                }
            }
            vec![Some(Tensor::from_parts(dims.clone(), acc))]
        })
    }

    /// Elementwise `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&self) -> Result<Var<'t>> {
        unary(self, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn gelu(&self) -> Result<Var<'t>> {
        unary(self, "gelu", gelu_scalar, |x, _| gelu_grad(x))
    }

    pub fn sigmoid(&self) -> Result<Var<'t>> {
        unary(self, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn softplus(&self) -> Result<Var<'t>> {
        unary(self, "softplus", softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    pub fn square(&self) -> Result<Var<'t>> {
        unary(self, "square", |x| x * x, |x, _| 2.0 * x)
    }

    /// `|x|` with derivative `sign(x)` (0 at 0).
    pub fn abs(&self) -> Result<Var<'t>> {
        unary(self, "abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `ln(max(x, eps))`; zero gradient where the clamp is active.
    pub fn log_clamped(&self, eps: f64) -> Result<Var<'t>> {
        unary(self, "log_clamped", move |x| x.max(eps).ln(), move |x, _| if x > eps { 1.0 / x } else { 0.0 })
    }

    /// `sqrt(max(x, 0))`; zero gradient where `x <= 0`.
    pub fn sqrt_clamped(&self) -> Result<Var<'t>> {
        unary(self, "sqrt_clamped", |x| x.max(0.0).sqrt(), |x, y| if x > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        let x = self.value();
        let dims = x.dims().to_vec();
        let y = Tensor::scalar(x.sum());
        self.tape().record("sum", y, &[*self], move |g, _| vec![Some(Tensor::full(&dims, g.item()))])
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let n = self.value().numel() as f64;
        self.sum()?.scale(1.0 / n)
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let old = x.dims().to_vec();
        let y = x.reshape(dims)?;
        self.tape()
            .record("reshape", y, &[*self], move |g, _| vec![Some(Tensor::from_parts(old.clone(), g.data().to_vec()))])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let rank = x.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape(format!("permute {axes:?} on rank {rank}")));
        }
        let y = permute_tensor(&x, axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.tape().record("permute", y, &[*self], move |g, _| vec![Some(permute_tensor(g, &inverse))])
    }

    /// Cyclic shift along `axis`: `out[i] = in[(i - shift) mod n]`.
    pub fn roll(&self, axis: usize, shift: isize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::shape(format!("roll axis {axis} on rank {}", x.rank())));
        }
        let y = roll_tensor(&x, axis, shift);
        self.tape().record("roll", y, &[*self], move |g, _| vec![Some(roll_tensor(g, axis, -shift))])
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        let dims = x.dims().to_vec();
        if axis >= dims.len() || len == 0 || start + len > dims[axis] {
            return Err(Error::shape(format!("narrow axis {axis} [{start}, {}) of {dims:?}", start + len)));
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let n = dims[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_dims = dims.clone();
        out_dims[axis] = len;
        let y = Tensor::from_parts(out_dims, out);
        self.tape().record("narrow", y, &[*self], move |g, _| {
            let mut dx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                dx[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::from_parts(dims.clone(), dx))]
        })
    }
}

impl<'t> Var<'t> {
    /// `out[k] = x.flat[index[k]]`, shaped `dims`. Gradients scatter-add back.
    pub fn gather(&self, index: std::rc::Rc<Vec<usize>>, dims: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let n: usize = dims.iter().product();
        if n != index.len() || index.iter().any(|&i| i >= x.numel()) {
            return Err(Error::shape(format!("gather of {} indices into {:?} from {:?}", index.len(), dims, x.dims())));
        }
        let y = Tensor::from_parts(dims.to_vec(), index.iter().map(|&i| x.data()[i]).collect());
        let x_dims = x.dims().to_vec();
        let len = x.numel();
        self.tape().record("gather", y, &[*self], move |g, _| {
            let mut dx = vec![0.0; len];
            for (&i, v) in index.iter().zip(g.data()) {
                dx[i] += v;
            }
            vec![Some(Tensor::from_parts(x_dims.clone(), dx))]
        })
    }
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat<'t>(vars: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = vars.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
    let values: Vec<_> = vars.iter().map(Var::value).collect();
    let base = values[0].dims().to_vec();
    if axis >= base.len() {
        return Err(Error::shape(format!("concat axis {axis} on rank {}", base.len())));
    }
    for v in &values[1..] {
        let d = v.dims();
        if d.len() != base.len() || d.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
            return Err(Error::shape(format!("concat {:?} with {d:?}", base)));
        }
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let sizes: Vec<usize> = values.iter().map(|v| v.dims()[axis]).collect();
    let total: usize = sizes.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &s) in values.iter().zip(&sizes) {
            out.extend_from_slice(&v.data()[o * s * inner..(o + 1) * s * inner]);
        }
    }
    let mut out_dims = base.clone();
    out_dims[axis] = total;
    let y = Tensor::from_parts(out_dims, out);
    first.tape().record("concat", y, vars, move |g, needs| {
        let mut offset = 0;
        let mut grads = Vec::with_capacity(sizes.len());
        for (k, &s) in sizes.iter().enumerate() {
            if needs[k] {
                let mut d = Vec::with_capacity(outer * s * inner);
                for o in 0..outer {
                    let b = (o * total + offset) * inner;
                    d.extend_from_slice(&g.data()[b..b + s * inner]);
                }
                let mut dims = base.clone();
                dims[axis] = s;
                grads.push(Some(Tensor::from_parts(dims, d)));
            } else {
                grads.push(None);
            }
            offset += s;
        }
        grads
    })
}

pub(crate) fn permute_tensor(x: &Tensor, axes: &[usize]) -> Tensor {
    let in_dims = x.dims();
    let in_strides = x.strides();
    let out_dims: Vec<usize> = axes.iter().map(|&a| in_dims[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = out_dims.len();
    let n = x.numel();
    let mut out = Vec::with_capacity(n);
    if rank == 0 {
        return x.clone();
    }
    // Innermost output axis is walked in a tight loop.
    let last = rank - 1;
    let inner_len = out_dims[last];
    let inner_stride = src_strides[last];
    let mut idx = vec![0usize; rank];
    let data = x.data();
    loop {
        let base: usize = idx[..last].iter().zip(&src_strides[..last]).map(|(i, s)| i * s).sum();
        for j in 0..inner_len {
            out.push(data[base + j * inner_stride]);
        }
        let mut ax = last;
        loop {
            if ax == 0 {
                return Tensor::from_parts(out_dims, out);
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < out_dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

pub(crate) fn roll_tensor(x: &Tensor, axis: usize, shift: isize) -> Tensor {
    let dims = x.dims();
    let n = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = strides_of(dims)[axis];
    let s = shift.rem_euclid(n as isize) as usize;
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for i in 0..n {
            let src = (i + n - s) % n;
            let (d, sr) = ((o * n + i) * inner, (o * n + src) * inner);
            out[d..d + inner].copy_from_slice(&x.data()[sr..sr + inner]);
        }
    }
    Tensor::from_parts(dims.to_vec(), out)
}
