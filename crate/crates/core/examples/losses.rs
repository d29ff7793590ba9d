//! Distillation objective on a synthetic scene: a student prediction that
//! is a blurred copy of the truth, a teacher that is slightly biased.

use distillgrasp::data::{generate_scene, SceneConfig};
use distillgrasp::losses::{student_objective, LossOptions, LossWeights, ValidMask};
use distillgrasp::networks::Variant;
use distillgrasp::numerics::{Tape, Tensor};

fn blur(t: &Tensor, n: usize) -> Tensor {
    Tensor::from_fn(t.dims(), |i| {
        let (y, x) = (i / n, i % n);
        let mut acc = 0.0;
        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            acc += t.data()[(y + dy).min(n - 1) * n + (x + dx).min(n - 1)];
        }
        acc / 4.0
    })
}

fn main() -> distillgrasp::Result<()> {
    let s = generate_scene(&SceneConfig { seed: 3, ..SceneConfig::default() })?;
    let n = s.gt_depth.dims()[0];
    let gt = s.gt_depth.reshape(&[1, n, n])?;
    let student = blur(&s.gt_depth, n).reshape(&[1, n, n])?;
    let teacher = gt.map(|d| d * 1.02 + 0.01);
    let valid = ValidMask::from_gt(&gt)?;
    let mask = s.mask.reshape(&[1, n, n])?;

    for variant in [Variant::Student, Variant::StuNoDl, Variant::StuAlone] {
        let tape = Tape::new();
        let (ds, dt, dg) = (tape.leaf(student.clone()), tape.constant(teacher.clone()), tape.constant(gt.clone()));
        let parts = student_objective(
            variant,
            &ds,
            Some(&dt),
            &dg,
            &valid,
            &mask,
            &LossWeights::default(),
            &LossOptions::default(),
        )?;
        let terms: Vec<String> = parts.values().iter().map(|(k, v)| format!("{k} {v:.5}")).collect();
        let grad = tape.backward(parts.total)?.wrt(ds);
        println!(
            "{:<11} {}  |grad| {:.4}",
            variant.name(),
            terms.join(", "),
            grad.data().iter().map(|g| g * g).sum::<f64>().sqrt()
        );
    }
    Ok(())
}
