//! Training, evaluation and completion workflows, and the CLI on top.

pub mod cli;
mod config;
mod eval;
mod selftest;
mod train;

pub use config::{CheckpointMeta, TrainConfig};
pub use eval::{
    complete, complete_tensors, evaluate, evaluate_identity, evaluate_split, load_model, metrics_for, predict_samples,
    write_report, CompleteMode,
};
pub use selftest::{run_selftest, Check};
pub use train::{
    make_batch, metrics_on, train_student, train_student_on, train_student_with_predictions, train_teacher,
    train_teacher_on, write_log, Batch, FrozenTeacher, LogRecord, TrainOutcome,
};
