//! Entropy uncertainty maps and the bias-matrix revision of predictions.
//!
//! The uncertainty of a pixel with co-saliency probability `p` is
//! `u = −p · ln(p + ε)`. The revision subtracts the image-wide mean
//! uncertainty and zeroes every prediction where the difference is positive.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{load_prob_map, map_path, quantize, save_prob_map, write_gray, DatasetManifest, ProbMap};

/// Largest value of `−p · ln p` on `[0, 1]`, reached at `p = 1/e`.
pub const MAX_SINGLE_TERM_ENTROPY: f64 = 0.367_879_441_171_442_33;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub epsilon: f64,
    /// Replace negative values (which occur near `p = 1`) with 0.
    pub clamp_negative: bool,
    /// Use `−p ln(p+ε) − (1−p) ln(1−p+ε)` instead of the single term.
    pub full_binary_entropy: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            clamp_negative: true,
            full_binary_entropy: false,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Unclamped uncertainty of a single probability.
    pub fn raw(&self, p: f64) -> f64 {
        let eps = self.epsilon;
        let positive = -p * (p + eps).ln();
        if self.full_binary_entropy {
            positive - (1.0 - p) * (1.0 - p + eps).ln()
        } else {
            positive
        }
    }

    pub fn pixel(&self, p: f64) -> f64 {
        let u = self.raw(p);
        if self.clamp_negative {
            u.max(0.0)
        } else {
            u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl UncertaintyMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::validation("uncertainty map", "value count does not match dimensions"));
        }
        Ok(Self { width, height, values })
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn entropy_map(p: &ProbMap, config: &UncertaintyConfig) -> UncertaintyMap {
    UncertaintyMap {
        width: p.width(),
        height: p.height(),
        values: p.values().iter().map(|&v| config.pixel(v)).collect(),
    }
}

/// Zeroes every prediction whose uncertainty lies strictly above the image
/// mean, i.e. where `u − mean(u) > 0`. Applied once; other pixels are kept.
pub fn revise(p: &ProbMap, u: &UncertaintyMap) -> Result<ProbMap> {
    if p.dims() != u.dims() {
        return Err(Error::DimensionMismatch {
            context: "revision prediction vs uncertainty".into(),
            expected: p.dims(),
            found: u.dims(),
        });
    }
    let mean = u.mean();
    let values = p
        .values()
        .iter()
        .zip(u.values())
        .map(|(&v, &unc)| if unc - mean > 0.0 { 0.0 } else { v })
        .collect();
    ProbMap::new(p.width(), p.height(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUncertainty {
    pub group_id: String,
    pub image_id: String,
    pub mean_uncertainty: f64,
    pub max_uncertainty: f64,
    pub zeroed_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupUncertainty {
    pub group_id: String,
    pub mean_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub config: UncertaintyConfig,
    /// Uncertainty maps are stored as `round(u * scale)`, saturating at 255.
    pub png_scale: f64,
    pub images: Vec<ImageUncertainty>,
    pub groups: Vec<GroupUncertainty>,
}

pub const UNCERTAINTY_DIR: &str = "uncertainty";
pub const REVISED_DIR: &str = "revised";

/// Writes `uncertainty/` maps (8-bit, scaled by `255·e`), `revised/`
/// predictions and `uncertainty_summary.json` under `out_dir`.
pub fn uncertainty_report(
    manifest: &DatasetManifest,
    predictions_dir: &Path,
    config: &UncertaintyConfig,
    out_dir: &Path,
) -> Result<UncertaintySummary> {
    config.validate()?;
    let items: Vec<_> = manifest.images().collect();
    let images: Vec<ImageUncertainty> = items
        .par_iter()
        .map(|(group, image)| {
            let path = map_path(predictions_dir, &group.group_id, &image.image_id);
            if !path.exists() {
                return Err(Error::validation(
                    format!("image '{}' in group '{}'", image.image_id, group.group_id),
                    format!("missing prediction file {}", path.display()),
                ));
            }
            let p = load_prob_map(&path)?;
            let u = entropy_map(&p, config);
            let revised = revise(&p, &u)?;
            let (w, h) = u.dims();
            write_gray(
                &quantize(w, h, u.values(), MAX_SINGLE_TERM_ENTROPY),
                &map_path(&out_dir.join(UNCERTAINTY_DIR), &group.group_id, &image.image_id),
            )?;
            save_prob_map(&revised, map_path(&out_dir.join(REVISED_DIR), &group.group_id, &image.image_id))?;
            let zeroed = p
                .values()
                .iter()
                .zip(revised.values())
                .filter(|(a, b)| a != b)
                .count();
            Ok(ImageUncertainty {
                group_id: group.group_id.clone(),
                image_id: image.image_id.clone(),
                mean_uncertainty: u.mean(),
                max_uncertainty: u.max(),
                zeroed_pixels: zeroed,
            })
        })
        .collect::<Result<_>>()?;

    let groups = manifest
        .groups
        .iter()
        .map(|g| {
            let vals: Vec<f64> = images
                .iter()
                .filter(|i| i.group_id == g.group_id)
                .map(|i| i.mean_uncertainty)
                .collect();
            GroupUncertainty {
                group_id: g.group_id.clone(),
                mean_uncertainty: vals.iter().sum::<f64>() / vals.len() as f64,
            }
        })
        .collect();
    let summary = UncertaintySummary {
        config: *config,
        png_scale: 255.0 / MAX_SINGLE_TERM_ENTROPY,
        images,
        groups,
    };
    let path = out_dir.join("uncertainty_summary.json");
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Internal(format!("summary serialization: {e}")))?;
    text.push('\n');
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
