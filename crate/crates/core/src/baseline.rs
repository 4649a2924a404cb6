//! Training-free co-saliency baseline.
//!
//! `single_saliency` is a plain colour-contrast detector: it highlights every
//! object that stands out from the image's mean colour, the way a
//! single-image salient object detector does. `co_saliency` gates it with a
//! group consensus: a colour histogram of the salient pixels averaged over
//! the group. Colours shared across the group keep their saliency; an image
//! whose salient colours have too little support in the group abstains and
//! predicts an empty map.

use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{map_path, save_prob_map, DatasetManifest, ProbMap};

/// Quantization levels per RGB channel.
pub const COLOR_LEVELS: usize = 8;
pub const COLOR_BINS: usize = COLOR_LEVELS * COLOR_LEVELS * COLOR_LEVELS;

/// Pixels at or above this saliency make up an image's salient support.
pub const SALIENT_LEVEL: f64 = 0.5;

pub fn color_bin(rgb: [u8; 3]) -> usize {
    let q = |c: u8| usize::from(c) * COLOR_LEVELS / 256;
    (q(rgb[0]) * COLOR_LEVELS + q(rgb[1])) * COLOR_LEVELS + q(rgb[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Minimum consensus mass (out of a possible 1) that an image's best
    /// salient colour must reach for the image not to abstain.
    pub affinity_threshold: f64,
    /// Radius of the box filter applied to the contrast map.
    pub smoothing_radius: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            affinity_threshold: 0.25,
            smoothing_radius: 1,
        }
    }
}

fn box_blur(values: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(height - 1));
            let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(width - 1));
            let mut sum = 0.0;
            for yy in y0..=y1 {
                sum += values[yy * width + x0..=yy * width + x1].iter().sum::<f64>();
            }
            out[y * width + x] = sum / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
        }
    }
    out
}

/// Distance of each pixel's colour from the image mean colour, scaled so the
/// most distinct pixel is 1, then box-smoothed. Uniform images give zeros.
pub fn single_saliency_with(image: &RgbImage, config: &BaselineConfig) -> ProbMap {
    let (w, h) = image.dimensions();
    let n = f64::from(w) * f64::from(h);
    let mut mean = [0.0f64; 3];
    for p in image.pixels() {
        for (m, &v) in mean.iter_mut().zip(&p.0) {
            *m += f64::from(v);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let dist: Vec<f64> = image
        .pixels()
        .map(|p| {
            (0..3)
                .map(|c| (f64::from(p.0[c]) - mean[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max = dist.iter().copied().fold(0.0, f64::max);
    if max < 1e-9 {
        return ProbMap::zeros(w, h);
    }
    let scaled: Vec<f64> = dist.iter().map(|d| d / max).collect();
    let smooth = box_blur(&scaled, w as usize, h as usize, config.smoothing_radius as usize);
    ProbMap::new(w, h, smooth.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("values clamped into [0, 1]")
}

pub fn single_saliency(image: &RgbImage) -> ProbMap {
    single_saliency_with(image, &BaselineConfig::default())
}

/// Saliency-weighted colour histogram over the salient support, normalized
/// to sum 1; `None` when the image has no salient pixel.
pub fn salient_histogram(image: &RgbImage, saliency: &ProbMap) -> Option<Vec<f64>> {
    let mut hist = vec![0.0; COLOR_BINS];
    for (p, &s) in image.pixels().zip(saliency.values()) {
        if s >= SALIENT_LEVEL {
            hist[color_bin(p.0)] += s;
        }
    }
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return None;
    }
    hist.iter_mut().for_each(|v| *v /= total);
    Some(hist)
}

/// Group-level colour signature of the salient objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusModel {
    /// Mean of the per-image salient histograms; sums to 1.
    pub histogram: Vec<f64>,
    /// Number of images that contributed a histogram.
    pub support: usize,
    pub affinity_threshold: f64,
}

impl ConsensusModel {
    /// Share of the group's salient mass in the pixel's colour bin, in `[0, 1]`.
    pub fn affinity(&self, rgb: [u8; 3]) -> f64 {
        self.histogram[color_bin(rgb)]
    }

    /// Highest affinity among the image's salient pixels (0 if it has none).
    pub fn best_affinity(&self, image: &RgbImage, saliency: &ProbMap) -> f64 {
        image
            .pixels()
            .zip(saliency.values())
            .filter(|(_, &s)| s >= SALIENT_LEVEL)
            .map(|(p, _)| self.affinity(p.0))
            .fold(0.0, f64::max)
    }

    pub fn abstains(&self, image: &RgbImage, saliency: &ProbMap) -> bool {
        self.best_affinity(image, saliency) < self.affinity_threshold
    }
}

/// Averages the salient histograms of the group in order. Images without
/// salient pixels do not contribute; a group with none yields a uniform
/// histogram.
pub fn group_consensus(items: &[(&RgbImage, &ProbMap)], affinity_threshold: f64) -> ConsensusModel {
    let mut histogram = vec![0.0; COLOR_BINS];
    let mut support = 0;
    for (image, saliency) in items {
        if let Some(h) = salient_histogram(image, saliency) {
            support += 1;
            histogram.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        }
    }
    if support == 0 {
        histogram.fill(1.0 / COLOR_BINS as f64);
    } else {
        histogram.iter_mut().for_each(|v| *v /= support as f64);
    }
    ConsensusModel {
        histogram,
        support,
        affinity_threshold,
    }
}

/// Saliency multiplied by colour affinity and rescaled to a peak of 1, or
/// the empty map when the image abstains.
pub fn co_saliency(image: &RgbImage, saliency: &ProbMap, consensus: &ConsensusModel) -> ProbMap {
    let (w, h) = image.dimensions();
    if consensus.abstains(image, saliency) {
        return ProbMap::zeros(w, h);
    }
    let gated: Vec<f64> = image
        .pixels()
        .zip(saliency.values())
        .map(|(p, &s)| s * consensus.affinity(p.0))
        .collect();
    let peak = gated.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return ProbMap::zeros(w, h);
    }
    ProbMap::new(w, h, gated.into_iter().map(|v| (v / peak).clamp(0.0, 1.0)).collect())
        .expect("values clamped into [0, 1]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPrediction {
    pub single: ProbMap,
    pub co: ProbMap,
    pub best_affinity: f64,
    pub abstained: bool,
}

/// Runs both predictors on one group of images.
pub fn predict_group(images: &[RgbImage], config: &BaselineConfig) -> Vec<GroupPrediction> {
    let singles: Vec<ProbMap> = images.par_iter().map(|img| single_saliency_with(img, config)).collect();
    let items: Vec<(&RgbImage, &ProbMap)> = images.iter().zip(&singles).collect();
    let consensus = group_consensus(&items, config.affinity_threshold);
    images
        .par_iter()
        .zip(singles.par_iter())
        .map(|(img, single)| {
            let best = consensus.best_affinity(img, single);
            GroupPrediction {
                co: co_saliency(img, single, &consensus),
                single: single.clone(),
                best_affinity: best,
                abstained: best < consensus.affinity_threshold,
            }
        })
        .collect()
}

pub const SINGLE_DIR: &str = "single_saliency";
pub const CO_DIR: &str = "co_saliency";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub group_id: String,
    pub image_id: String,
    pub best_affinity: f64,
    pub abstained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub config: BaselineConfig,
    pub images: Vec<PredictionRecord>,
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(img.to_rgb8())
}

/// Predicts every group of `manifest`, writing `single_saliency/` and
/// `co_saliency/` prediction directories under `out_dir`.
pub fn predict_dataset(manifest: &DatasetManifest, out_dir: &Path, config: &BaselineConfig) -> Result<PredictionSummary> {
    let mut records = Vec::with_capacity(manifest.num_images());
    for group in &manifest.groups {
        let images: Vec<RgbImage> = group
            .images
            .par_iter()
            .map(|entry| {
                let img = load_rgb(&manifest.resolve(&entry.image_path))?;
                if img.dimensions() != (entry.width, entry.height) {
                    return Err(Error::DimensionMismatch {
                        context: format!("image '{}' in group '{}'", entry.image_id, group.group_id),
                        expected: (entry.width, entry.height),
                        found: img.dimensions(),
                    });
                }
                Ok(img)
            })
            .collect::<Result<_>>()?;
        let predictions = predict_group(&images, config);
        group
            .images
            .par_iter()
            .zip(predictions.par_iter())
            .try_for_each(|(entry, pred)| -> Result<()> {
                save_prob_map(&pred.single, map_path(&out_dir.join(SINGLE_DIR), &group.group_id, &entry.image_id))?;
                save_prob_map(&pred.co, map_path(&out_dir.join(CO_DIR), &group.group_id, &entry.image_id))
            })?;
        records.extend(group.images.iter().zip(&predictions).map(|(entry, pred)| PredictionRecord {
            group_id: group.group_id.clone(),
            image_id: entry.image_id.clone(),
            best_affinity: pred.best_affinity,
            abstained: pred.abstained,
        }));
    }
    Ok(PredictionSummary {
        config: *config,
        images: records,
    })
}
