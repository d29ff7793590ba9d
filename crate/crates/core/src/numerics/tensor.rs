use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// A `Tensor` is a plain value. Differentiation happens on a
/// [`Tape`](super::Tape), which wraps tensors in [`Var`](super::Var) handles.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("dims {dims:?} hold {n} values, got {}", data.len())));
        }
        Ok(Tensor { dims: dims.to_vec(), data })
    }

    /// Builds a tensor without validating; callers guarantee `product(dims) == data.len()`.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        let n = dims.iter().product();
        Tensor::from_parts(dims.to_vec(), vec![value; n])
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Tensor::full(dims, 0.0)
    }

    pub fn ones(dims: &[usize]) -> Self {
        Tensor::full(dims, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    /// Fills a tensor by evaluating `f` at each flat (row-major) index.
    pub fn from_fn(dims: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = dims.iter().product();
        Tensor::from_parts(dims.to_vec(), (0..n).map(f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        Tensor::new(dims, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("elementwise op on {:?} and {:?}", self.dims, other.dims)));
        }
        Ok(Tensor::from_parts(self.dims.clone(), self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff on mismatched dims");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Row-major strides for the current dims.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        let offset: usize = index.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        self.data[offset]
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}
