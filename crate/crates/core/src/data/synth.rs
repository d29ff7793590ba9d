//! Procedural RGB-D tabletop scenes: a tilted background plane with a few
//! analytic objects, some of which are marked transparent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::DetRng;

pub const SUPPORTED_SIZES: [usize; 3] = [64, 96, 128];
pub const MAX_OBJECTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    SphereCap,
    Box,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::SphereCap, Shape::Box, Shape::Cylinder];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub size: usize,
    pub n_objects: usize,
    pub shapes: Vec<Shape>,
    /// Relative depth drift applied to surviving transparent pixels.
    pub drift: f64,
    /// Probability that a transparent pixel loses its depth.
    pub hole: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            size: 64,
            n_objects: 3,
            shapes: Shape::ALL.to_vec(),
            drift: 0.05,
            hole: 0.6,
            depth_min: 0.3,
            depth_max: 2.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SIZES.contains(&self.size) {
            return Err(Error::config(format!("scene size {} not in {SUPPORTED_SIZES:?}", self.size)));
        }
        if self.n_objects > MAX_OBJECTS {
            return Err(Error::config(format!("at most {MAX_OBJECTS} objects, got {}", self.n_objects)));
        }
        if self.n_objects > 0 && self.shapes.is_empty() {
            return Err(Error::config("objects requested but the shape set is empty"));
        }
        for (name, v) in [("drift", self.drift), ("hole", self.hole)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} fraction {v} outside [0, 1]")));
            }
        }
        if !(self.depth_min > 0.0 && self.depth_min + 0.5 <= self.depth_max) {
            return Err(Error::config(format!(
                "depth range [{}, {}] must be positive and at least 0.5 m wide",
                self.depth_min, self.depth_max
            )));
        }
        Ok(())
    }
}

/// One RGB-D observation with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[3, H, W]` in `[0, 1]`, quantized to 8 bits.
    pub rgb: Tensor,
    /// `[H, W]` sensor depth in meters; 0 where missing.
    pub raw_depth: Tensor,
    /// `[H, W]` true depth in meters, strictly positive.
    pub gt_depth: Tensor,
    /// `[H, W]`, 1 on transparent surfaces.
    pub mask: Tensor,
}

/// Scene object in normalized image coordinates `(u, v) in [0, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Object {
    pub shape: Shape,
    pub cu: f64,
    pub cv: f64,
    pub ru: f64,
    pub rv: f64,
    /// Depth of the object's reference surface at its centre.
    pub z: f64,
    /// Protrusion towards the camera (caps and cylinders) or tilt (boxes).
    pub relief: f64,
    pub tilt_u: f64,
    pub tilt_v: f64,
    pub albedo: [f64; 3],
    pub transparent: bool,
}

impl Object {
    /// Surface depth at `(u, v)`, or `None` outside the footprint.
    pub fn depth_at(&self, u: f64, v: f64) -> Option<f64> {
        let du = (u - self.cu) / self.ru;
        let dv = (v - self.cv) / self.rv;
        match self.shape {
            Shape::SphereCap => {
                let d2 = du * du + dv * dv;
                (d2 < 1.0).then(|| self.z - self.relief * (1.0 - d2).sqrt())
            }
            Shape::Box => (du.abs() < 1.0 && dv.abs() < 1.0)
                .then_some(self.z + self.tilt_u * du * self.ru + self.tilt_v * dv * self.rv),
            Shape::Cylinder => {
                (du.abs() < 1.0 && dv.abs() < 1.0).then(|| self.z - self.relief * (1.0 - du * du).sqrt())
            }
        }
    }
}

/// Background plane `z0 + a * u + b * v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub z0: f64,
    pub a: f64,
    pub b: f64,
    pub albedo: [f64; 3],
}

impl Plane {
    pub fn depth_at(&self, u: f64, v: f64) -> f64 {
        self.z0 + self.a * u + self.b * v
    }
}

/// Analytic description of a scene, before rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneLayout {
    pub plane: Plane,
    pub objects: Vec<Object>,
}

const LIGHT: [f64; 3] = [0.35, -0.45, 0.82];
const AMBIENT: f64 = 0.25;

fn color(rng: &mut DetRng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.range(lo, hi), rng.range(lo, hi), rng.range(lo, hi)]
}

pub fn sample_layout(cfg: &SceneConfig, rng: &mut DetRng) -> Result<SceneLayout> {
    cfg.validate()?;
    let span = cfg.depth_max - cfg.depth_min;
    let plane = Plane {
        z0: cfg.depth_min + span * rng.range(0.6, 0.75),
        a: rng.range(-0.12, 0.12) * span,
        b: rng.range(-0.12, 0.12) * span,
        albedo: color(rng, 0.45, 0.8),
    };
    let mut objects = Vec::with_capacity(cfg.n_objects);
    for _ in 0..cfg.n_objects {
        let shape = cfg.shapes[rng.below(cfg.shapes.len() as u64) as usize];
        let (cu, cv) = (rng.range(0.22, 0.78), rng.range(0.22, 0.78));
        let ru = rng.range(0.1, 0.2);
        let rv = match shape {
            Shape::SphereCap => ru,
            Shape::Box => rng.range(0.1, 0.2),
            Shape::Cylinder => rng.range(0.15, 0.22),
        };
        let lift = span * rng.range(0.12, 0.3);
        objects.push(Object {
            shape,
            cu,
            cv,
            ru,
            rv,
            z: plane.depth_at(cu, cv) - lift,
            relief: span * rng.range(0.03, 0.08),
            tilt_u: rng.range(-0.1, 0.1),
            tilt_v: rng.range(-0.1, 0.1),
            albedo: color(rng, 0.2, 0.95),
            transparent: rng.bernoulli(0.5),
        });
    }
    // The nearest object is always transparent so every populated scene has
    // something to complete.
    if let Some(front) = objects.iter_mut().min_by(|a, b| a.z.partial_cmp(&b.z).expect("finite depths")) {
        front.transparent = true;
    }
    Ok(SceneLayout { plane, objects })
}

/// Ground truth, transparency mask and RGB of `layout` at `size x size`.
pub fn render(layout: &SceneLayout, size: usize, depth_min: f64) -> (Tensor, Tensor, Tensor) {
    let n = size * size;
    let mut gt = vec![0.0; n];
    let mut mask = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            let mut z = layout.plane.depth_at(u, v);
            let mut who = None;
            for (k, o) in layout.objects.iter().enumerate() {
                if let Some(zo) = o.depth_at(u, v) {
                    if zo < z {
                        z = zo;
                        who = Some(k);
                    }
                }
            }
            let i = y * size + x;
            gt[i] = z.max(depth_min);
            owner[i] = who;
            if who.is_some_and(|k| layout.objects[k].transparent) {
                mask[i] = 1.0;
            }
        }
    }

    let light = {
        let l = (LIGHT[0] * LIGHT[0] + LIGHT[1] * LIGHT[1] + LIGHT[2] * LIGHT[2]).sqrt();
        [LIGHT[0] / l, LIGHT[1] / l, LIGHT[2] / l]
    };
    let shade = |i: usize, depth: &dyn Fn(usize, usize) -> f64| -> f64 {
        let (y, x) = (i / size, i % size);
        let xl = x.saturating_sub(1);
        let xr = (x + 1).min(size - 1);
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(size - 1);
        let scale = size as f64 / 4.0;
        let gx = (depth(y, xr) - depth(y, xl)) / (xr - xl).max(1) as f64 * scale;
        let gy = (depth(yd, x) - depth(yu, x)) / (yd - yu).max(1) as f64 * scale;
        let norm = (gx * gx + gy * gy + 1.0).sqrt();
        let ndotl = (-gx * light[0] - gy * light[1] + light[2]) / norm;
        AMBIENT + (1.0 - AMBIENT) * ndotl.max(0.0)
    };
    let gt_at = |y: usize, x: usize| gt[y * size + x];
    let plane_at =
        |y: usize, x: usize| layout.plane.depth_at((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);

    let mut rgb = vec![0.0; 3 * n];
    for i in 0..n {
        let (y, x) = (i / size, i % size);
        let texture = 0.92 + 0.08 * (((x / 4) + (y / 4)) % 2) as f64;
        let bg = shade(i, &plane_at);
        let behind = layout.plane.albedo.map(|a| a * bg * texture);
        let px = match owner[i] {
            None => behind,
            Some(k) => {
                let o = &layout.objects[k];
                let s = shade(i, &gt_at);
                if o.transparent {
                    let glint = if s > 0.95 { 0.25 } else { 0.0 };
                    let mut c = [0.0; 3];
                    for ch in 0..3 {
                        c[ch] = 0.65 * behind[ch] + 0.35 * o.albedo[ch] * s + glint;
                    }
                    c
                } else {
                    o.albedo.map(|a| a * s)
                }
            }
        };
        for ch in 0..3 {
            rgb[ch * n + i] = (px[ch].clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }
    (
        Tensor::new(&[3, size, size], rgb).expect("rgb dims"),
        Tensor::new(&[size, size], gt).expect("depth dims"),
        Tensor::new(&[size, size], mask).expect("mask dims"),
    )
}

/// Sensor corruption inside `mask`: each pixel is dropped to 0 with
/// probability `hole`, otherwise scaled by `uniform(1 - drift, 1 + drift)`.
pub fn corrupt_depth(gt: &Tensor, mask: &Tensor, drift: f64, hole: f64, rng: &mut DetRng) -> Result<Tensor> {
    if gt.dims() != mask.dims() {
        return Err(Error::shape(format!("gt {:?} vs mask {:?}", gt.dims(), mask.dims())));
    }
    if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::input("mask must be binary"));
    }
    let data = gt
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&g, &m)| {
            if m == 0.0 {
                g
            } else if rng.bernoulli(hole) {
                0.0
            } else {
                g * rng.range(1.0 - drift, 1.0 + drift)
            }
        })
        .collect();
    Tensor::new(gt.dims(), data)
}

/// Deterministic scene for `cfg.seed`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Sample> {
    let mut rng = DetRng::new(cfg.seed);
    let layout = sample_layout(cfg, &mut rng)?;
    let (rgb, gt_depth, mask) = render(&layout, cfg.size, cfg.depth_min);
    let mut noise = rng.fork();
    let raw_depth = corrupt_depth(&gt_depth, &mask, cfg.drift, cfg.hole, &mut noise)?;
    Ok(Sample { rgb, raw_depth, gt_depth, mask })
}
