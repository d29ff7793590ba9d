//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const ABS_FLOOR: f64 = 1e-8;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

fn eval_scalar<F>(f: &F, x: Tensor) -> Result<f64>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let y = f(tape.constant(x))?;
    if y.value().numel() != 1 {
        return Err(Error::Contract("grad_check needs a scalar function".into()));
    }
    Ok(y.item())
}

/// Compares the tape gradient of scalar `f` at `x` with central differences
/// `(f(x + h) - f(x - h)) / 2h` per coordinate and returns the largest
/// relative error.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = f(xv)?;
    let analytic = tape.backward(y)?.wrt(xv);

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval_scalar(&f, plus)? - eval_scalar(&f, minus)?) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    Ok(worst)
}
