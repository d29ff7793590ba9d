//! Command-line surface. Exit codes: 0 success, 1 usage, 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::TrainConfig;
use super::eval::{complete, evaluate, evaluate_identity, write_report, CompleteMode};
use super::selftest::run_selftest;
use super::train::{train_student, train_teacher, TrainOutcome};
use crate::data::{make_dataset, DatasetConfig, Split};
use crate::error::{Error, Result};
use crate::metrics::report_to_json;
use crate::networks::Variant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "distillgrasp", version, about = "Teacher/student depth completion for transparent objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenData),
    /// Train a teacher-family variant.
    TrainTeacher(TrainArgs),
    /// Train a student-family variant against a frozen teacher.
    TrainStudent(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Complete one depth map.
    Complete(CompleteArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args, Debug)]
struct GenData {
    /// Dataset JSON config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    /// Number of trailing samples drawn from novel shapes.
    #[arg(long)]
    novel: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    hole: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training JSON config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    teacher_checkpoint: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required_unless_present = "identity")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "known")]
    split: String,
    /// Where to write the JSON report (printed either way).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Score ground truth against itself instead of a model.
    #[arg(long)]
    identity: bool,
}

#[derive(Args, Debug)]
struct CompleteArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    rgb: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "passthrough")]
    mode: String,
}

fn train_config(a: &TrainArgs, default_variant: Variant) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig { variant: default_variant, ..TrainConfig::default() },
    };
    if let Some(v) = &a.variant {
        cfg.variant = v.parse()?;
    }
    if let Some(v) = &a.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = &a.checkpoint {
        cfg.checkpoint = v.clone();
    }
    if let Some(v) = &a.teacher_checkpoint {
        cfg.teacher_checkpoint = Some(v.clone());
    }
    if let Some(v) = &a.log {
        cfg.log = Some(v.clone());
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(out: &TrainOutcome, cfg: &TrainConfig) {
    println!(
        "{}: {} steps, train loss {:.6} -> {:.6}, checkpoint {}",
        cfg.variant,
        out.log.len(),
        out.initial_loss,
        out.final_loss,
        cfg.checkpoint.display()
    );
    println!("train metrics {}", report_to_json(&out.train_metrics));
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenData(a) => {
            let mut cfg = match &a.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_str::<DatasetConfig>(&text)?
                }
                None => DatasetConfig::default(),
            };
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.novel {
                cfg.n_novel = v;
            }
            if let Some(v) = a.size {
                cfg.scene.size = v;
            }
            if let Some(v) = a.objects {
                cfg.scene.n_objects = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.drift {
                cfg.scene.drift = v;
            }
            if let Some(v) = a.hole {
                cfg.scene.hole = v;
            }
            let m = make_dataset(&cfg, &a.out)?;
            println!("wrote {} samples to {}", m.samples.len(), a.out.display());
        }
        Command::TrainTeacher(a) => {
            let cfg = train_config(&a, Variant::Teacher)?;
            let out = train_teacher(&cfg)?;
            summarize(&out, &cfg);
        }
        Command::TrainStudent(a) => {
            let cfg = train_config(&a, Variant::Student)?;
            let out = train_student(&cfg)?;
            summarize(&out, &cfg);
        }
        Command::Eval(a) => {
            let split = Split::parse(&a.split)?;
            let report = if a.identity {
                evaluate_identity(&a.dataset, split)?
            } else {
                let ckpt = a.checkpoint.as_ref().expect("clap enforces --checkpoint");
                evaluate(ckpt, &a.dataset, split)?
            };
            if let Some(p) = &a.report {
                write_report(p, &report)?;
            }
            println!("{}", report_to_json(&report));
        }
        Command::Complete(a) => {
            let mode = CompleteMode::parse(&a.mode)?;
            let out = complete(&a.checkpoint, &a.rgb, &a.depth, &a.mask, &a.out, mode)?;
            println!("wrote {:?} depth to {}", out.dims(), a.out.display());
        }
        Command::Selftest => {
            let checks = run_selftest();
            let mut failed = 0;
            for c in &checks {
                println!("{} {} ({})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(EXIT_RUNTIME);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
