//! The full workflow through the library: generate data, train a teacher,
//! distill a student, evaluate both and complete one depth map.
//!
//! Usage: `cargo run --release --example pipeline -- [steps]`

use distillgrasp::data::{make_dataset, DatasetConfig, SamplePaths, Split};
use distillgrasp::metrics::report_to_json;
use distillgrasp::networks::Variant;
use distillgrasp::pipeline::{complete, evaluate, train_student, train_teacher, CompleteMode, TrainConfig};

fn main() -> distillgrasp::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let dir = tempfile::tempdir().expect("temp dir");
    let data = dir.path().join("data");
    make_dataset(&DatasetConfig { n: 10, n_novel: 2, ..DatasetConfig::default() }, &data)?;

    let teacher = TrainConfig {
        variant: Variant::Teacher,
        steps,
        dataset: data.clone(),
        checkpoint: dir.path().join("teacher.ckpt"),
        ..TrainConfig::default()
    };
    let t = train_teacher(&teacher)?;
    println!("teacher loss {:.4} -> {:.4}", t.initial_loss, t.final_loss);

    let student = TrainConfig {
        variant: Variant::Student,
        checkpoint: dir.path().join("student.ckpt"),
        teacher_checkpoint: Some(teacher.checkpoint.clone()),
        log: Some(dir.path().join("student.jsonl")),
        ..teacher.clone()
    };
    let s = train_student(&student)?;
    println!("student loss {:.4} -> {:.4}", s.initial_loss, s.final_loss);
    if let Some(h) = s.log.iter().rev().find_map(|r| r.heldout) {
        println!("student held-out d105 at the last epoch boundary: {:.2}", h.d105);
    }

    for (name, ckpt) in [("teacher", &teacher.checkpoint), ("student", &student.checkpoint)] {
        for split in [Split::Known, Split::Novel] {
            println!("{name} {split:?}: {}", report_to_json(&evaluate(ckpt, &data, split)?));
        }
    }

    let sample = SamplePaths::for_id(&data, "00000");
    let out = dir.path().join("completed.dgt");
    let depth =
        complete(&student.checkpoint, &sample.rgb, &sample.depth_raw, &sample.mask, &out, CompleteMode::Passthrough)?;
    let (lo, hi) = depth.data().iter().fold((f64::MAX, f64::MIN), |(a, b), &d| (a.min(d), b.max(d)));
    println!("completed depth {:?}, range {lo:.3}..{hi:.3} m", depth.dims());
    Ok(())
}
