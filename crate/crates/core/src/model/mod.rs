//! Dataset and prediction data model shared by every other module.

mod manifest;
mod maps;

use std::path::{Path, PathBuf};

pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, save_manifest, DatasetManifest,
    GroupEntry, ImageEntry, MaskRef, SCHEMA_VERSION, ZERO_SENTINEL,
};
pub use maps::{
    load_binary_mask, load_prob_map, save_binary_mask, save_prob_map, BinaryMask, ProbMap,
};
pub(crate) use maps::{quantize, write_gray};

/// Location of a per-image map inside a prediction-style directory:
/// `<dir>/<group_id>/<image_id>.png`.
pub fn map_path(dir: &Path, group_id: &str, image_id: &str) -> PathBuf {
    dir.join(group_id).join(format!("{image_id}.png"))
}
