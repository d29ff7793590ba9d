use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CheckpointMeta;
use crate::data::{image, Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::{depth_metrics, report_to_json, MetricsReport};
use crate::networks::{build_variant, load_checkpoint, mask_depth, predict, stack, Network};
use crate::numerics::io::{load, save, Dtype};
use crate::numerics::{ParamStore, Tensor};
use crate::rng::DetRng;

const EVAL_CHUNK: usize = 4;

/// Inference-mode predictions, one `[1, H, W]` tensor per sample.
pub fn predict_samples(net: &Network, store: &ParamStore, samples: &[Sample]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let masked = chunk.iter().map(|s| mask_depth(&s.raw_depth, &s.mask)).collect::<Result<Vec<_>>>()?;
        let rgb = stack(&chunk.iter().map(|s| &s.rgb).collect::<Vec<_>>())?;
        let depth = stack(&masked.iter().collect::<Vec<_>>())?;
        let pred = predict(net, store, &rgb, &depth)?;
        let [b, 1, h, w] = pred.dims()[..] else {
            return Err(Error::shape(format!("unexpected prediction dims {:?}", pred.dims())));
        };
        for k in 0..b {
            out.push(Tensor::new(&[1, h, w], pred.data()[k * h * w..(k + 1) * h * w].to_vec())?);
        }
    }
    Ok(out)
}

/// Mean of per-sample reports over the transparent regions.
pub fn metrics_for(samples: &[Sample], preds: &[Tensor]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::input("cannot evaluate an empty split"));
    }
    let reports = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| depth_metrics(&p.reshape(s.gt_depth.dims())?, &s.gt_depth, &s.mask))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::mean(&reports)
}

pub fn evaluate_split(net: &Network, store: &ParamStore, ds: &Dataset, indices: &[usize]) -> Result<MetricsReport> {
    let samples: Vec<Sample> = indices.iter().map(|&i| ds.samples[i].clone()).collect();
    let preds = predict_samples(net, store, &samples)?;
    metrics_for(&samples, &preds)
}

/// Rebuilds the network described by the checkpoint's sidecar and loads
/// its parameters.
pub fn load_model(ckpt: &Path) -> Result<(Network, ParamStore)> {
    let meta = CheckpointMeta::load(ckpt)?;
    let mut store = ParamStore::new();
    let net = build_variant(meta.variant, &meta.net, &mut store, &mut DetRng::new(0))?;
    store.load_from(&load_checkpoint(ckpt)?)?;
    Ok((net, store))
}

fn split_samples(ds: &Dataset, split: Split) -> Result<Vec<Sample>> {
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::input(format!("split {split:?} of {} is empty", ds.dir.display())));
    }
    Ok(idx.into_iter().map(|i| ds.samples[i].clone()).collect())
}

/// Evaluates a checkpoint on one split of a dataset directory.
pub fn evaluate(ckpt: &Path, dataset: &Path, split: Split) -> Result<MetricsReport> {
    let (net, store) = load_model(ckpt)?;
    let ds = Dataset::load(dataset)?;
    let samples = split_samples(&ds, split)?;
    let preds = predict_samples(&net, &store, &samples)?;
    metrics_for(&samples, &preds)
}

/// Scores ground truth against itself; a harness check for the evaluation
/// path that needs no model.
pub fn evaluate_identity(dataset: &Path, split: Split) -> Result<MetricsReport> {
    let ds = Dataset::load(dataset)?;
    let samples = split_samples(&ds, split)?;
    let preds: Vec<Tensor> = samples.iter().map(|s| s.gt_depth.clone()).collect();
    metrics_for(&samples, &preds)
}

pub fn write_report(path: &Path, r: &MetricsReport) -> Result<()> {
    fs::write(path, report_to_json(r) + "\n").map_err(|e| Error::io(path, e))
}

/// What `complete` writes outside the transparency mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompleteMode {
    /// Keep the sensor depth, filling only pixels where it is missing.
    #[default]
    Passthrough,
    /// Use the network prediction everywhere.
    Predict,
}

impl CompleteMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "passthrough" => Ok(CompleteMode::Passthrough),
            "predict" => Ok(CompleteMode::Predict),
            other => Err(Error::config(format!("unknown completion mode {other:?}; expected passthrough or predict"))),
        }
    }
}

/// Completes one depth map in memory: `rgb [3,H,W]`, `raw [H,W]`,
/// `mask [H,W]` to `[H,W]`.
pub fn complete_tensors(
    net: &Network,
    store: &ParamStore,
    rgb: &Tensor,
    raw: &Tensor,
    mask: &Tensor,
    mode: CompleteMode,
) -> Result<Tensor> {
    let pred = crate::networks::complete_sample(net, store, rgb, raw, mask)?;
    match mode {
        CompleteMode::Predict => Ok(pred),
        CompleteMode::Passthrough => {
            let data = pred
                .data()
                .iter()
                .zip(raw.data())
                .zip(mask.data())
                .map(|((&p, &r), &m)| if m == 0.0 && r > 0.0 { r } else { p })
                .collect();
            Tensor::new(raw.dims(), data)
        }
    }
}

/// Reads RGB (P6), raw depth (DGT1) and mask (P5), writes the completed
/// depth as f64 DGT1.
pub fn complete(
    ckpt: &Path,
    rgb_path: &Path,
    depth_path: &Path,
    mask_path: &Path,
    out_path: &Path,
    mode: CompleteMode,
) -> Result<Tensor> {
    let (net, store) = load_model(ckpt)?;
    let rgb = image::read_ppm(rgb_path)?;
    let raw = load(depth_path)?;
    let mask = image::read_mask(mask_path)?;
    if raw.dims() != &rgb.dims()[1..] {
        return Err(Error::shape(format!(
            "{} is {:?} but {} is {:?}",
            depth_path.display(),
            raw.dims(),
            rgb_path.display(),
            rgb.dims()
        )));
    }
    if mask.dims() != raw.dims() {
        return Err(Error::shape(format!(
            "{} is {:?} but {} is {:?}",
            mask_path.display(),
            mask.dims(),
            depth_path.display(),
            raw.dims()
        )));
    }
    let out = complete_tensors(&net, &store, &rgb, &raw, &mask, mode)?;
    save(out_path, &out, Dtype::F64)?;
    Ok(out)
}
