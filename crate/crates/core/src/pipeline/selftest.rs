//! Fast invariant checks runnable from the command line.

use crate::blocks::{window_partition, window_reverse};
use crate::error::Result;
use crate::losses::{edge_loss, eval_scalar, silog_loss, structural_map, LossWeights, StructWindow, ValidMask};
use crate::metrics::depth_metrics;
use crate::numerics::io::{decode, encode, Dtype};
use crate::numerics::{grad_check, Tape, Tensor};
use crate::rng::DetRng;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn random(dims: &[usize], rng: &mut DetRng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(dims, |_| rng.range(lo, hi))
}

pub fn run_selftest() -> Vec<Check> {
    let mut rng = DetRng::new(2024);
    let grid = random(&[2, 8, 8, 3], &mut rng, -1.0, 1.0);
    let planes = random(&[2, 8, 4, 4], &mut rng, -1.0, 1.0);
    let conv_in = random(&[1, 2, 5, 5], &mut rng, -1.0, 1.0);
    let conv_w = random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0);
    let logits = random(&[4, 6], &mut rng, -3.0, 3.0);
    let depth = random(&[12, 12], &mut rng, 0.5, 2.0);
    vec![
        check("window partition round trip", || {
            let tape = Tape::new();
            let x = tape.constant(grid.clone());
            let mut ok = true;
            for shift in [0, 2] {
                let back = window_reverse(&window_partition(&x, 4, shift)?, 2, 8, 8, 4, shift)?;
                ok &= *back.value() == grid;
            }
            Ok((ok, "shifts 0 and 2, exact".into()))
        }),
        check("pixel shuffle bijection", || {
            let tape = Tape::new();
            let x = tape.constant(planes.clone());
            let back = x.pixel_shuffle()?.pixel_unshuffle()?;
            Ok((*back.value() == planes, "exact".into()))
        }),
        check("softmax rows sum to one", || {
            let tape = Tape::new();
            let s = tape.constant(logits.clone()).softmax_last()?;
            let v = s.value();
            let worst = v.data().chunks(6).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
            Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
        }),
        check("conv2d gradient", || {
            let w = conv_w.clone();
            let err = grad_check(
                move |x| {
                    let wv = x.tape().constant(w.clone());
                    x.conv2d(&wv, None, 1, 1)?.square()?.sum()
                },
                &conv_in,
                1e-6,
            )?;
            Ok((err < 1e-4, format!("max rel err {err:.2e}")))
        }),
        check("structural metric is one on identical maps", || {
            let tape = Tape::new();
            let x = tape.constant(depth.clone());
            let c = structural_map(&x, &x, StructWindow::Sliding(7), 1e-4)?;
            let v = c.value();
            Ok((v.data().iter().all(|&c| c == 1.0), "exact".into()))
        }),
        check("silog two-pixel case", || {
            let ds = Tensor::new(&[1, 2], vec![1.0, std::f64::consts::E])?;
            let ones = Tensor::ones(&[1, 2]);
            let valid = ValidMask::from_gt(&ones)?;
            let w = LossWeights::default();
            let v = eval_scalar(&[&ds, &ones, &ones], |v| silog_loss(&v[0], &v[1], &v[2], &valid, &w))?;
            let want = 10.0 * 0.2875f64.sqrt();
            Ok(((v - want).abs() <= 1e-9, format!("{v:.12} vs {want:.12}")))
        }),
        check("edge loss ignores constant offsets", || {
            // Dyadic depths keep the differences exact.
            let base = depth.map(|d| (d * 1024.0).round() / 1024.0);
            let shifted = base.map(|d| d + 0.25);
            let mask = Tensor::ones(&[12, 12]);
            let v = eval_scalar(&[&base, &shifted], |v| edge_loss(&v[0], &v[1], &mask))?;
            Ok((v == 0.0, format!("{v:e}")))
        }),
        check("metrics on a perfect prediction", || {
            let mask = Tensor::ones(&[12, 12]);
            let r = depth_metrics(&depth, &depth, &mask)?;
            let ok = r.rmse == 0.0 && r.mae == 0.0 && r.rel == 0.0 && r.deltas() == [100.0; 3];
            Ok((ok, format!("{r:?}")))
        }),
        check("DGT1 round trip", || {
            let (back, dtype) = decode(&encode(&depth, Dtype::F64))?;
            Ok((back == depth && dtype == Dtype::F64, "f64, exact".into()))
        }),
    ]
}
