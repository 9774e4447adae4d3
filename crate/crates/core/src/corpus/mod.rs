//! Dataset ingestion, the synthetic natural/smoothed corpus, and robustness perturbations.

mod image_io;
mod manifest;
mod perturb;
mod synth;

pub use image_io::{decode_image, emit_image, encode_png, jpeg_roundtrip};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestEntry};
pub use perturb::{gaussian_blur, resize, PerturbSpec};
pub use synth::{synth_pair, SynthConfig};
