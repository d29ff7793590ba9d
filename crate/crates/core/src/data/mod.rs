//! Synthetic scenes, sensor corruption and on-disk sample formats.

mod dataset;
pub mod image;
mod synth;

pub use dataset::{
    dataset_hash, make_dataset, read_sample, write_sample, Dataset, DatasetConfig, Manifest, ManifestEntry,
    SamplePaths, Split, KNOWN_SHAPES, MANIFEST_FILE, NOVEL_SHAPES,
};
pub use synth::{
    corrupt_depth, generate_scene, render, sample_layout, Object, Plane, Sample, SceneConfig, SceneLayout, Shape,
    MAX_OBJECTS, SUPPORTED_SIZES,
};
