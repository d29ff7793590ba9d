use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{CheckpointMeta, TrainConfig};
use super::eval::{evaluate_split, metrics_for, predict_samples};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::losses::{student_objective, teacher_loss, LossParts, ValidMask};
use crate::metrics::MetricsReport;
use crate::networks::{build_variant, load_checkpoint, mask_depth, save_checkpoint, stack, DepthNet, Network};
use crate::numerics::optim::{clip_global_norm, Adam, AdamConfig};
use crate::numerics::{Mode, ParamStore, Tape, Tensor};
use crate::rng::DetRng;

/// One JSON line per optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    /// Loss terms on the step's batch, before the update.
    pub loss: Vec<(String, f64)>,
    pub grad_norm: f64,
    pub wall_time_s: f64,
    /// Held-out metrics, present on the last step of each epoch.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub heldout: Option<MetricsReport>,
}

impl LogRecord {
    pub fn total(&self) -> f64 {
        self.loss.iter().find(|(k, _)| k == "total").map(|(_, v)| *v).unwrap_or(f64::NAN)
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    pub net: Network,
    pub store: ParamStore,
    pub log: Vec<LogRecord>,
    /// Objective averaged over the whole training split, evaluated in
    /// inference mode before the first and after the last step.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Final metrics over the training split.
    pub train_metrics: MetricsReport,
}

/// Batched tensors for a set of samples: `rgb [B,3,H,W]`, network depth
/// input `[B,1,H,W]`, `gt [B,1,H,W]`, `mask [B,1,H,W]`.
pub struct Batch {
    pub rgb: Tensor,
    pub depth_in: Tensor,
    pub gt: Tensor,
    pub mask: Tensor,
    pub teacher: Option<Tensor>,
}

pub fn make_batch(samples: &[&Sample], teacher: Option<&[&Tensor]>) -> Result<Batch> {
    let masked = samples.iter().map(|s| mask_depth(&s.raw_depth, &s.mask)).collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        rgb: stack(&samples.iter().map(|s| &s.rgb).collect::<Vec<_>>())?,
        depth_in: stack(&masked.iter().collect::<Vec<_>>())?,
        gt: stack(&samples.iter().map(|s| &s.gt_depth).collect::<Vec<_>>())?,
        mask: stack(&samples.iter().map(|s| &s.mask).collect::<Vec<_>>())?,
        teacher: teacher.map(stack).transpose()?,
    })
}

/// Fixed data order: a fresh seeded permutation of the training indices
/// every epoch.
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: DetRng,
}

impl Sampler {
    fn new(indices: Vec<usize>, seed: u64) -> Self {
        let mut s = Sampler { order: indices, cursor: 0, epoch: 0, rng: DetRng::new(seed ^ 0x5eed_da7a) };
        s.rng.shuffle(&mut s.order);
        s
    }

    /// Next batch and whether it finishes the current epoch.
    fn next(&mut self, size: usize) -> (Vec<usize>, bool) {
        let mut out = Vec::with_capacity(size);
        let mut wrapped = false;
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.cursor = 0;
                self.epoch += 1;
                self.rng.shuffle(&mut self.order);
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
            wrapped |= self.cursor == self.order.len();
        }
        (out, wrapped)
    }
}

fn objective<'t>(
    cfg: &TrainConfig,
    net: &Network,
    tape: &'t Tape,
    store: &ParamStore,
    batch: &Batch,
    mode: Mode,
) -> Result<(crate::numerics::Bound<'t>, LossParts<'t>)> {
    let p = store.bind(tape, mode == Mode::Eval);
    let pred = net.forward(&p, &tape.constant(batch.rgb.clone()), &tape.constant(batch.depth_in.clone()), mode)?;
    let gt = tape.constant(batch.gt.clone());
    let valid = ValidMask::from_gt(&batch.gt)?;
    let parts = if cfg.variant.is_teacher() {
        let l = teacher_loss(&pred, &gt, &valid, &cfg.loss)?;
        LossParts { total: l, distance: l, structural: None, edge_gt: None, edge_teacher: None }
    } else {
        let d_t = batch.teacher.as_ref().map(|t| tape.constant(t.clone()));
        student_objective(cfg.variant, &pred, d_t.as_ref(), &gt, &valid, &batch.mask, &cfg.loss, &cfg.loss_options)?
    };
    Ok((p, parts))
}

fn mean_objective(
    cfg: &TrainConfig,
    net: &Network,
    store: &ParamStore,
    ds: &Dataset,
    indices: &[usize],
    teacher: Option<&[Tensor]>,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in indices.chunks(cfg.batch_size) {
        let samples: Vec<&Sample> = chunk.iter().map(|&i| &ds.samples[i]).collect();
        let t: Option<Vec<&Tensor>> = teacher.map(|t| chunk.iter().map(|&i| &t[i]).collect());
        let batch = make_batch(&samples, t.as_deref())?;
        let tape = Tape::new();
        let (_, parts) = objective(cfg, net, &tape, store, &batch, Mode::Eval)?;
        total += parts.total.item() * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

fn train_loop(cfg: &TrainConfig, ds: &Dataset, teacher_preds: Option<&[Tensor]>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_idx = ds.indices(cfg.train_split);
    if train_idx.is_empty() {
        return Err(Error::input(format!("training split {:?} of {} is empty", cfg.train_split, ds.dir.display())));
    }
    let heldout_idx = ds.indices(cfg.heldout_split);
    let mut store = ParamStore::new();
    let net = build_variant(cfg.variant, &cfg.net, &mut store, &mut DetRng::new(cfg.seed))?;
    let prefix = net.prefix();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, prefix);
    let initial_loss = mean_objective(cfg, &net, &store, ds, &train_idx, teacher_preds)?;
    let mut sampler = Sampler::new(train_idx.clone(), cfg.seed);
    let mut log = Vec::with_capacity(cfg.steps);
    let started = Instant::now();
    for step in 0..cfg.steps {
        let (idx, epoch_end) = sampler.next(cfg.batch_size);
        let epoch = sampler.epoch;
        let samples: Vec<&Sample> = idx.iter().map(|&i| &ds.samples[i]).collect();
        let t: Option<Vec<&Tensor>> = teacher_preds.map(|t| idx.iter().map(|&i| &t[i]).collect());
        let batch = make_batch(&samples, t.as_deref())?;

        let tape = Tape::new();
        let (bound, parts) = objective(cfg, &net, &tape, &store, &batch, Mode::Train)?;
        let grads = tape.backward(parts.total)?;
        store.set_grads(&bound, &grads);
        store.commit_stats(&bound);
        let grad_norm = clip_global_norm(&mut store, prefix, cfg.clip_norm);
        adam.step(&mut store);
        store.zero_grads();

        let heldout = if epoch_end && !heldout_idx.is_empty() {
            Some(evaluate_split(&net, &store, ds, &heldout_idx)?)
        } else {
            None
        };
        log.push(LogRecord {
            step,
            epoch,
            loss: parts.values().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            grad_norm,
            wall_time_s: started.elapsed().as_secs_f64(),
            heldout,
        });
    }
    let final_loss = mean_objective(cfg, &net, &store, ds, &train_idx, teacher_preds)?;
    let train_metrics = evaluate_split(&net, &store, ds, &train_idx)?;
    Ok(TrainOutcome { net, store, log, initial_loss, final_loss, train_metrics })
}

fn persist(cfg: &TrainConfig, out: &TrainOutcome) -> Result<()> {
    if let Some(dir) = cfg.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&cfg.checkpoint, &out.store)?;
    CheckpointMeta { variant: cfg.variant, net: cfg.net.clone() }.save(&cfg.checkpoint)?;
    if let Some(path) = &cfg.log {
        write_log(path, &out.log)?;
    }
    Ok(())
}

pub fn write_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in log {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains a teacher-family variant on the teacher objective.
pub fn train_teacher_on(cfg: &TrainConfig, ds: &Dataset) -> Result<TrainOutcome> {
    if !cfg.variant.is_teacher() {
        return Err(Error::config(format!("{} is not a teacher variant", cfg.variant)));
    }
    train_loop(cfg, ds, None)
}

/// Loads `cfg.dataset`, trains, and writes checkpoint, sidecar and log.
pub fn train_teacher(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let ds = Dataset::load(&cfg.dataset)?;
    let out = train_teacher_on(cfg, &ds)?;
    persist(cfg, &out)?;
    Ok(out)
}

/// Frozen teacher loaded from a checkpoint and its sidecar.
pub struct FrozenTeacher {
    pub net: Network,
    pub store: ParamStore,
}

impl FrozenTeacher {
    pub fn load(path: &Path) -> Result<Self> {
        let meta = CheckpointMeta::load(path)?;
        if !meta.variant.is_teacher() {
            return Err(Error::config(format!(
                "{} holds a {} checkpoint, not a teacher",
                path.display(),
                meta.variant
            )));
        }
        let mut store = ParamStore::new();
        let net = build_variant(meta.variant, &meta.net, &mut store, &mut DetRng::new(0))?;
        store.load_from(&load_checkpoint(path)?)?;
        Ok(FrozenTeacher { net, store })
    }

    /// Teacher depth for every sample of `ds`, `[1, H, W]` each.
    pub fn predictions(&self, ds: &Dataset) -> Result<Vec<Tensor>> {
        predict_samples(&self.net, &self.store, &ds.samples)
    }
}

/// Trains a student-family variant. `teacher` is required exactly when the
/// variant distills from one; `StuAlone` never touches it.
pub fn train_student_on(cfg: &TrainConfig, ds: &Dataset, teacher: Option<&FrozenTeacher>) -> Result<TrainOutcome> {
    if cfg.variant.is_teacher() {
        return Err(Error::config(format!("{} is not a student variant", cfg.variant)));
    }
    let preds = if cfg.variant.needs_teacher() {
        let t = teacher.ok_or_else(|| Error::config(format!("{} needs a teacher", cfg.variant)))?;
        Some(t.predictions(ds)?)
    } else {
        None
    };
    train_student_with_predictions(cfg, ds, preds.as_deref())
}

/// As [`train_student_on`] with teacher predictions already computed, one
/// `[1, H, W]` tensor per dataset sample.
pub fn train_student_with_predictions(
    cfg: &TrainConfig,
    ds: &Dataset,
    teacher_preds: Option<&[Tensor]>,
) -> Result<TrainOutcome> {
    if cfg.variant.needs_teacher() && teacher_preds.is_none() {
        return Err(Error::config(format!("{} needs teacher predictions", cfg.variant)));
    }
    let preds = if cfg.variant.needs_teacher() { teacher_preds } else { None };
    if let Some(p) = preds {
        if p.len() != ds.samples.len() {
            return Err(Error::input(format!("{} teacher predictions for {} samples", p.len(), ds.samples.len())));
        }
    }
    train_loop(cfg, ds, preds)
}

/// Loads dataset and (if needed) the teacher checkpoint, trains, persists.
pub fn train_student(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let ds = Dataset::load(&cfg.dataset)?;
    let teacher = if cfg.variant.needs_teacher() {
        let path = cfg
            .teacher_checkpoint
            .as_ref()
            .ok_or_else(|| Error::config(format!("{} needs teacher_checkpoint", cfg.variant)))?;
        Some(FrozenTeacher::load(path)?)
    } else {
        None
    };
    let out = train_student_on(cfg, &ds, teacher.as_ref())?;
    persist(cfg, &out)?;
    Ok(out)
}

/// Metrics of an in-memory model on a subset of samples.
pub fn metrics_on(net: &Network, store: &ParamStore, samples: &[Sample]) -> Result<MetricsReport> {
    let preds = predict_samples(net, store, samples)?;
    metrics_for(samples, &preds)
}
