use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image::{read_mask, read_ppm, write_pgm, write_ppm};
use super::synth::{generate_scene, Sample, SceneConfig, Shape};
use crate::error::{Error, Result};
use crate::numerics::io::{load, save, Dtype};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const KNOWN_SHAPES: [Shape; 2] = [Shape::SphereCap, Shape::Box];
pub const NOVEL_SHAPES: [Shape; 1] = [Shape::Cylinder];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Known,
    Novel,
}

impl Split {
    pub fn shapes(self) -> &'static [Shape] {
        match self {
            Split::Known => &KNOWN_SHAPES,
            Split::Novel => &NOVEL_SHAPES,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "known" | "train" => Ok(Split::Known),
            "novel" | "test" => Ok(Split::Novel),
            other => Err(Error::config(format!("unknown split {other:?}; expected known or novel"))),
        }
    }
}

/// File names are relative to the dataset directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub rgb: String,
    pub depth_raw: String,
    pub depth_gt: String,
    pub mask: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    pub n: usize,
    /// The last `n_novel` samples use only novel shapes.
    pub n_novel: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { scene: SceneConfig::default(), n: 16, n_novel: 0, seed: 0 }
    }
}

/// Paths of the four files making up one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePaths {
    pub rgb: PathBuf,
    pub depth_raw: PathBuf,
    pub depth_gt: PathBuf,
    pub mask: PathBuf,
}

impl SamplePaths {
    pub fn for_id(dir: &Path, id: &str) -> Self {
        SamplePaths {
            rgb: dir.join(format!("{id}_rgb.ppm")),
            depth_raw: dir.join(format!("{id}_raw.dgt")),
            depth_gt: dir.join(format!("{id}_gt.dgt")),
            mask: dir.join(format!("{id}_mask.pgm")),
        }
    }

    pub fn for_entry(dir: &Path, e: &ManifestEntry) -> Self {
        SamplePaths {
            rgb: dir.join(&e.rgb),
            depth_raw: dir.join(&e.depth_raw),
            depth_gt: dir.join(&e.depth_gt),
            mask: dir.join(&e.mask),
        }
    }
}

/// RGB as P6, depths as f64 DGT1, mask as P5 with 0/255.
pub fn write_sample(paths: &SamplePaths, s: &Sample) -> Result<()> {
    write_ppm(&paths.rgb, &s.rgb)?;
    save(&paths.depth_raw, &s.raw_depth, Dtype::F64)?;
    save(&paths.depth_gt, &s.gt_depth, Dtype::F64)?;
    write_pgm(&paths.mask, &s.mask)
}

pub fn read_sample(paths: &SamplePaths) -> Result<Sample> {
    let rgb = read_ppm(&paths.rgb)?;
    let raw_depth = load(&paths.depth_raw)?;
    let gt_depth = load(&paths.depth_gt)?;
    let mask = read_mask(&paths.mask)?;
    let hw = &rgb.dims()[1..];
    for (name, t) in [("raw depth", &raw_depth), ("gt depth", &gt_depth), ("mask", &mask)] {
        if t.dims() != hw {
            return Err(Error::shape(format!("{name} is {:?} but rgb is {hw:?} ({})", t.dims(), paths.rgb.display())));
        }
    }
    Ok(Sample { rgb, raw_depth, gt_depth, mask })
}

/// Generates `cfg.n` scenes with seeds `cfg.seed..cfg.seed + n` into
/// `out_dir` and writes the manifest.
pub fn make_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    if cfg.n == 0 {
        return Err(Error::config("dataset needs at least one sample"));
    }
    if cfg.n_novel > cfg.n {
        return Err(Error::config(format!("{} novel samples requested out of {}", cfg.n_novel, cfg.n)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut samples = Vec::with_capacity(cfg.n);
    for k in 0..cfg.n {
        let seed = cfg.seed + k as u64;
        let split = if k >= cfg.n - cfg.n_novel { Split::Novel } else { Split::Known };
        let scene = SceneConfig { seed, shapes: split.shapes().to_vec(), ..cfg.scene.clone() };
        let sample = generate_scene(&scene)?;
        let id = format!("{k:05}");
        let paths = SamplePaths::for_id(out_dir, &id);
        write_sample(&paths, &sample)?;
        let name = |p: &Path| p.file_name().expect("file name").to_string_lossy().into_owned();
        samples.push(ManifestEntry {
            rgb: name(&paths.rgb),
            depth_raw: name(&paths.depth_raw),
            depth_gt: name(&paths.depth_gt),
            mask: name(&paths.mask),
            id,
            seed,
            split,
        });
    }
    let manifest = Manifest { samples };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// SHA-256 over the manifest file followed by every referenced file in
/// manifest order, as lowercase hex.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let manifest = Manifest::load(dir)?;
    let mut h = Sha256::new();
    let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
    h.update(read(&dir.join(MANIFEST_FILE))?);
    for e in &manifest.samples {
        let p = SamplePaths::for_entry(dir, e);
        for f in [&p.rgb, &p.depth_raw, &p.depth_gt, &p.mask] {
            h.update(read(f)?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// A dataset directory loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(dir)?;
        let samples = manifest
            .samples
            .iter()
            .map(|e| read_sample(&SamplePaths::for_entry(dir, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { dir: dir.to_path_buf(), manifest, samples })
    }

    /// Indices of samples in `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest.samples.iter().enumerate().filter(|(_, e)| e.split == split).map(|(i, _)| i).collect()
    }
}
