//! Parameterized layers. Each layer only remembers the names of its entries
//! in the [`ParamStore`]; values are looked up through a [`Bound`] at
//! forward time.

use super::norm::{Mode, LN_EPS};
use super::{Bound, ParamKind, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng::DetRng;

fn uniform_init(dims: &[usize], bound: f64, rng: &mut DetRng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.range(-bound, bound))
}

/// Token-wise affine map over the last axis. Weight is stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: String,
    bias: Option<String>,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cin: usize,
        cout: usize,
        bias: bool,
        rng: &mut DetRng,
    ) -> Result<Self> {
        let bound = 1.0 / (cin as f64).sqrt();
        let weight = format!("{path}.weight");
        store.insert(&weight, uniform_init(&[cin, cout], bound, rng), ParamKind::Trainable)?;
        let bias = if bias {
            let name = format!("{path}.bias");
            store.insert(&name, uniform_init(&[cout], bound, rng), ParamKind::Trainable)?;
            Some(name)
        } else {
            None
        };
        Ok(Linear { weight, bias, cin, cout })
    }

    pub fn weight_name(&self) -> &str {
        &self.weight
    }

    pub fn bias_name(&self) -> Option<&str> {
        self.bias.as_deref()
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        let w = p.var(&self.weight)?;
        match &self.bias {
            Some(b) => x.linear(&w, Some(&p.var(b)?)),
            None => x.linear(&w, None),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: String,
    bias: String,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut DetRng,
    ) -> Result<Self> {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        let weight = format!("{path}.weight");
        let bias = format!("{path}.bias");
        store.insert(&weight, uniform_init(&[cout, cin, kernel, kernel], bound, rng), ParamKind::Trainable)?;
        store.insert(&bias, uniform_init(&[cout], bound, rng), ParamKind::Trainable)?;
        Ok(Conv2d { weight, bias, stride, pad })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        x.conv2d(&p.var(&self.weight)?, Some(&p.var(&self.bias)?), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gamma: String,
    beta: String,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, path: &str, channels: usize) -> Result<Self> {
        let gamma = format!("{path}.gamma");
        let beta = format!("{path}.beta");
        store.insert(&gamma, Tensor::ones(&[channels]), ParamKind::Trainable)?;
        store.insert(&beta, Tensor::zeros(&[channels]), ParamKind::Trainable)?;
        Ok(LayerNorm { gamma, beta })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(&p.var(&self.gamma)?, &p.var(&self.beta)?, LN_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    prefix: String,
    gamma: String,
    beta: String,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, path: &str, channels: usize) -> Result<Self> {
        let gamma = format!("{path}.gamma");
        let beta = format!("{path}.beta");
        store.insert(&gamma, Tensor::ones(&[channels]), ParamKind::Trainable)?;
        store.insert(&beta, Tensor::zeros(&[channels]), ParamKind::Trainable)?;
        store.insert(&format!("{path}.running_mean"), Tensor::zeros(&[channels]), ParamKind::Buffer)?;
        store.insert(&format!("{path}.running_var"), Tensor::ones(&[channels]), ParamKind::Buffer)?;
        Ok(BatchNorm { prefix: path.to_string(), gamma, beta })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>, mode: Mode) -> Result<Var<'t>> {
        let (g, b) = (p.var(&self.gamma)?, p.var(&self.beta)?);
        p.with_stats(&self.prefix, |s| x.batch_norm(&g, &b, s, mode))
    }
}

/// Two-layer perceptron `fc2(gelu(fc1(x)))` with hidden width `ratio * dim`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub const MLP_RATIO: usize = 4;

impl Mlp {
    pub fn new(store: &mut ParamStore, path: &str, dim: usize, rng: &mut DetRng) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::new(store, &format!("{path}.fc1"), dim, MLP_RATIO * dim, true, rng)?,
            fc2: Linear::new(store, &format!("{path}.fc2"), MLP_RATIO * dim, dim, true, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        let h = self.fc1.forward(p, x)?.gelu()?;
        self.fc2.forward(p, &h)
    }
}

/// Evaluates the two-layer perceptron on raw tensors:
/// `w2 * gelu(w1 * x + b1) + b2` per token.
pub fn mlp2<'t>(x: &Var<'t>, w1: &Var<'t>, b1: &Var<'t>, w2: &Var<'t>, b2: &Var<'t>) -> Result<Var<'t>> {
    x.linear(w1, Some(b1))?.gelu()?.linear(w2, Some(b2))
}
