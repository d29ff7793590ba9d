//! Small distillation experiment: trains a teacher on 16 synthetic scenes,
//! then paired-seed distilled students and teacher-free students, and
//! compares their transparent-region accuracy on the training split.

use std::time::Instant;

use distillgrasp::data::{make_dataset, Dataset, DatasetConfig};
use distillgrasp::networks::Variant;
use distillgrasp::pipeline::{train_student_with_predictions, train_teacher_on, FrozenTeacher, TrainConfig};

fn main() -> distillgrasp::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let dir = tempfile::tempdir().expect("temp dir");
    make_dataset(&DatasetConfig::default(), dir.path())?;
    let ds = Dataset::load(dir.path())?;

    let started = Instant::now();
    let teacher_cfg = TrainConfig { variant: Variant::Teacher, steps, ..TrainConfig::default() };
    let teacher = train_teacher_on(&teacher_cfg, &ds)?;
    println!(
        "teacher: loss {:.4} -> {:.4} ({:.0}% drop), d105 {:.2}, rmse {:.4}  [{:.1}s]",
        teacher.initial_loss,
        teacher.final_loss,
        100.0 * (1.0 - teacher.final_loss / teacher.initial_loss),
        teacher.train_metrics.d105,
        teacher.train_metrics.rmse,
        started.elapsed().as_secs_f64()
    );
    let frozen = FrozenTeacher { net: teacher.net, store: teacher.store };
    let preds = frozen.predictions(&ds)?;

    let mut wins = 0;
    for seed in 0..4 {
        let mut row = Vec::new();
        for variant in [Variant::Student, Variant::StuAlone] {
            let cfg = TrainConfig { variant, steps, seed, ..TrainConfig::default() };
            let out = train_student_with_predictions(&cfg, &ds, Some(&preds))?;
            row.push(out.train_metrics);
        }
        let won = row[0].d105 >= row[1].d105;
        wins += usize::from(won);
        println!(
            "seed {seed}: student d105 {:.2} rmse {:.4} | alone d105 {:.2} rmse {:.4} {} [{:.1}s]",
            row[0].d105,
            row[0].rmse,
            row[1].d105,
            row[1].rmse,
            if won { "student >= alone" } else { "alone ahead" },
            started.elapsed().as_secs_f64()
        );
    }
    println!("student matched or beat the teacher-free student on {wins} of 4 seeds");
    Ok(())
}
