//! Transparent-region metrics for a few corrupted predictions of one scene,
//! printed as the JSON reports the CLI writes.

use distillgrasp::data::{generate_scene, SceneConfig};
use distillgrasp::metrics::{depth_metrics, report_to_json};

fn main() -> distillgrasp::Result<()> {
    let s = generate_scene(&SceneConfig { seed: 11, ..SceneConfig::default() })?;
    let raw_filled = s.raw_depth.zip_map(&s.gt_depth, |r, g| if r > 0.0 { r } else { g * 1.2 })?;
    let cases = [
        ("perfect", s.gt_depth.clone()),
        ("sensor, holes at +20%", raw_filled),
        ("3% too far", s.gt_depth.map(|g| g * 1.03)),
        ("+5 cm offset", s.gt_depth.map(|g| g + 0.05)),
    ];
    for (name, pred) in cases {
        let r = depth_metrics(&pred, &s.gt_depth, &s.mask)?;
        println!("{name:<22} {}", report_to_json(&r));
    }
    Ok(())
}
