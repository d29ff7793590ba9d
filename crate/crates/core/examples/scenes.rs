//! Writes a small synthetic dataset (the `gen-data` subcommand) and a
//! preview of one scene: RGB, ground truth, sensor depth and mask.
//!
//! Usage: `cargo run --example scenes -- [out_dir]`

use std::path::PathBuf;

use distillgrasp::data::image::{write_pgm, write_ppm};
use distillgrasp::data::{dataset_hash, make_dataset, DatasetConfig, SceneConfig, Split};

fn main() -> distillgrasp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("scenes_out"));
    let cfg = DatasetConfig {
        n: 8,
        n_novel: 2,
        scene: SceneConfig { size: 96, ..SceneConfig::default() },
        ..DatasetConfig::default()
    };
    let manifest = make_dataset(&cfg, &out)?;
    println!(
        "{} samples ({} known, {} novel) in {}, sha256 {}",
        manifest.samples.len(),
        manifest.split(Split::Known).count(),
        manifest.split(Split::Novel).count(),
        out.display(),
        dataset_hash(&out)?
    );

    let s = distillgrasp::data::generate_scene(&SceneConfig { seed: 0, ..cfg.scene.clone() })?;
    let (lo, hi) = (cfg.scene.depth_min, cfg.scene.depth_max);
    let to_gray = |d: f64| if d > 0.0 { 1.0 - (d - lo) / (hi - lo) } else { 0.0 };
    write_ppm(&out.join("preview_rgb.ppm"), &s.rgb)?;
    write_pgm(&out.join("preview_gt.pgm"), &s.gt_depth.map(to_gray))?;
    write_pgm(&out.join("preview_raw.pgm"), &s.raw_depth.map(to_gray))?;
    write_pgm(&out.join("preview_mask.pgm"), &s.mask)?;
    let masked = s.mask.sum();
    let holes = s.raw_depth.data().iter().zip(s.mask.data()).filter(|(&r, &m)| m == 1.0 && r == 0.0).count();
    println!("preview: {masked} transparent pixels, {holes} of them missing in the sensor depth");
    Ok(())
}
