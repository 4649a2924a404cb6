//! Co-saliency metrics: IoU, MAE, F-measure, S-measure and E-measure.
//!
//! On an all-zero ground truth the F-, S- (strict mode) and E-measure
//! (xi-mean mode) are 0 for every prediction, so they cannot tell a perfect
//! empty prediction from a bad one. IoU scores the both-empty case as 1 and
//! is the metric that separates them.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{pixel_confidence_strided, BinAccumulator, BinRange, ReliabilityDiagram};
use crate::error::{Error, Result};
use crate::model::{load_prob_map, map_path, BinaryMask, DatasetManifest, ProbMap};

/// Added to the S-measure object-score denominator.
pub const S_OBJECT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SMode {
    /// Empty ground truth scores 0 for every prediction.
    #[default]
    Strict,
    /// Empty ground truth scores `1 - mean(p)`.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EMode {
    /// Mean of the raw alignment matrix.
    XiMean,
    /// Mean of `(1 + ξ)² / 4`.
    #[default]
    Enhanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub binarize_threshold: f64,
    pub beta_squared: f64,
    pub s_alpha: f64,
    /// Number of thresholds in the max-F / max-E sweeps, spaced evenly over `[0, 1]`.
    pub thresholds: usize,
    pub s_mode: SMode,
    pub e_mode: EMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            beta_squared: 0.3,
            s_alpha: 0.5,
            thresholds: 256,
            s_mode: SMode::Strict,
            e_mode: EMode::Enhanced,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarize threshold must lie in (0, 1), got {}",
                self.binarize_threshold
            )));
        }
        if !(self.beta_squared > 0.0) {
            return Err(Error::Config("beta_squared must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.s_alpha) {
            return Err(Error::Config("s_alpha must lie in [0, 1]".into()));
        }
        if self.thresholds < 2 {
            return Err(Error::Config("threshold sweep needs at least 2 thresholds".into()));
        }
        Ok(())
    }

    pub fn sweep(&self) -> Vec<f64> {
        let n = self.thresholds;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

fn check_dims(a: (u32, u32), b: (u32, u32), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: what.into(),
            expected: b,
            found: a,
        });
    }
    Ok(())
}

/// Foreground iff `p >= threshold`.
pub fn binarize(p: &ProbMap, threshold: f64) -> BinaryMask {
    let values = p.values().iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(p.width(), p.height(), values).expect("same shape as the input map")
}

/// `TP / (TP + FP + FN)`, defined as 1 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims(), "iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.values().iter().zip(gt.values()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn mae(p: &ProbMap, gt: &BinaryMask) -> Result<f64> {
    check_dims(p.dims(), gt.dims(), "mae")?;
    let sum: f64 = p
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&v, &y)| (v - f64::from(u8::from(y))).abs())
        .sum();
    Ok(sum / p.len() as f64)
}

/// Confusion counts of `p >= t` against `gt` for any threshold, from the
/// sorted foreground and background probabilities.
struct ThresholdCounter {
    fg: Vec<f64>,
    bg: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

impl ThresholdCounter {
    fn new(p: &ProbMap, gt: &BinaryMask) -> Self {
        let (mut fg, mut bg) = (Vec::new(), Vec::new());
        for (&v, &y) in p.values().iter().zip(gt.values()) {
            if y {
                fg.push(v);
            } else {
                bg.push(v);
            }
        }
        fg.sort_by(f64::total_cmp);
        bg.sort_by(f64::total_cmp);
        Self { fg, bg }
    }

    fn at(&self, t: f64) -> Confusion {
        let tp = self.fg.len() - self.fg.partition_point(|&v| v < t);
        let fp = self.bg.len() - self.bg.partition_point(|&v| v < t);
        Confusion {
            tp,
            fp,
            fn_: self.fg.len() - tp,
            tn: self.bg.len() - fp,
        }
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f_from_counts(c: Confusion, beta_squared: f64) -> f64 {
    let precision = ratio_or_zero(c.tp as f64, (c.tp + c.fp) as f64);
    let recall = ratio_or_zero(c.tp as f64, (c.tp + c.fn_) as f64);
    ratio_or_zero(
        (1.0 + beta_squared) * precision * recall,
        beta_squared * precision + recall,
    )
}

/// A metric evaluated at every threshold of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub max: f64,
}

impl Curve {
    fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        Self {
            thresholds,
            values,
            max,
        }
    }
}

/// F-measure of `p >= threshold`; 0/0 is taken as 0 for precision, recall and F.
pub fn f_measure_at(p: &ProbMap, gt: &BinaryMask, threshold: f64, beta_squared: f64) -> Result<f64> {
    check_dims(p.dims(), gt.dims(), "f-measure")?;
    Ok(f_from_counts(ThresholdCounter::new(p, gt).at(threshold), beta_squared))
}

pub fn f_measure(p: &ProbMap, gt: &BinaryMask, config: &MetricConfig) -> Result<Curve> {
    check_dims(p.dims(), gt.dims(), "f-measure")?;
    let counter = ThresholdCounter::new(p, gt);
    let thresholds = config.sweep();
    let values = thresholds
        .iter()
        .map(|&t| f_from_counts(counter.at(t), config.beta_squared))
        .collect();
    Ok(Curve::new(thresholds, values))
}

fn alignment(phi_s: f64, phi_y: f64) -> f64 {
    ratio_or_zero(2.0 * phi_s * phi_y, phi_s * phi_s + phi_y * phi_y)
}

/// Every pixel falls in one of four (prediction, truth) classes, and the
/// alignment value depends only on the class.
fn e_from_counts(c: Confusion, mode: EMode) -> f64 {
    let n = (c.tp + c.fp + c.fn_ + c.tn) as f64;
    let mu_s = (c.tp + c.fp) as f64 / n;
    let mu_y = (c.tp + c.fn_) as f64 / n;
    let classes = [
        (c.tp, 1.0 - mu_s, 1.0 - mu_y),
        (c.fp, 1.0 - mu_s, -mu_y),
        (c.fn_, -mu_s, 1.0 - mu_y),
        (c.tn, -mu_s, -mu_y),
    ];
    let total: f64 = classes
        .iter()
        .filter(|(count, _, _)| *count > 0)
        .map(|&(count, a, b)| {
            let xi = alignment(a, b);
            let score = match mode {
                EMode::XiMean => xi,
                EMode::Enhanced => (1.0 + xi) * (1.0 + xi) / 4.0,
            };
            count as f64 * score
        })
        .sum();
    total / n
}

pub fn e_measure_at(p: &ProbMap, gt: &BinaryMask, threshold: f64, mode: EMode) -> Result<f64> {
    check_dims(p.dims(), gt.dims(), "e-measure")?;
    Ok(e_from_counts(ThresholdCounter::new(p, gt).at(threshold), mode))
}

pub fn e_measure(p: &ProbMap, gt: &BinaryMask, config: &MetricConfig) -> Result<Curve> {
    check_dims(p.dims(), gt.dims(), "e-measure")?;
    let counter = ThresholdCounter::new(p, gt);
    let thresholds = config.sweep();
    let values = thresholds
        .iter()
        .map(|&t| e_from_counts(counter.at(t), config.e_mode))
        .collect();
    Ok(Curve::new(thresholds, values))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (mean, std) = mean_std(values);
    2.0 * mean / (mean * mean + 1.0 + std + S_OBJECT_EPS)
}

fn s_object(p: &ProbMap, gt: &BinaryMask) -> f64 {
    let (mut fg, mut bg) = (Vec::new(), Vec::new());
    for (&v, &y) in p.values().iter().zip(gt.values()) {
        if y {
            fg.push(v);
        } else {
            bg.push(1.0 - v);
        }
    }
    let u = fg.len() as f64 / p.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

fn block_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let denom = (n - 1.0).max(1.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in pred.iter().zip(gt) {
        sxx += (a - x) * (a - x);
        syy += (b - y) * (b - y);
        sxy += (a - x) * (b - y);
    }
    let (sigma_x, sigma_y, sigma_xy) = (sxx / denom, syy / denom, sxy / denom);
    let alpha = 4.0 * x * y * sigma_xy;
    let beta = (x * x + y * y) * (sigma_x + sigma_y);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(p: &ProbMap, gt: &BinaryMask) -> f64 {
    let (w, h) = (p.width() as usize, p.height() as usize);
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for (i, &on) in gt.values().iter().enumerate() {
        if on {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            count += 1;
        }
    }
    // split point one past the rounded foreground centroid
    let cx = ((sx / count as f64).round_ties_even() as usize + 1).min(w);
    let cy = ((sy / count as f64).round_ties_even() as usize + 1).min(h);
    let area = (w * h) as f64;
    let blocks = [(0, cx, 0, cy), (cx, w, 0, cy), (0, cx, cy, h), (cx, w, cy, h)];
    let pv = p.values();
    let gv: Vec<f64> = gt.values().iter().map(|&b| f64::from(u8::from(b))).collect();
    blocks
        .iter()
        .filter(|(x0, x1, y0, y1)| x1 > x0 && y1 > y0)
        .map(|&(x0, x1, y0, y1)| {
            let mut pb = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut gb = Vec::with_capacity(pb.capacity());
            for row in y0..y1 {
                pb.extend_from_slice(&pv[row * w + x0..row * w + x1]);
                gb.extend_from_slice(&gv[row * w + x0..row * w + x1]);
            }
            let weight = ((x1 - x0) * (y1 - y0)) as f64 / area;
            weight * block_ssim(&pb, &gb)
        })
        .sum()
}

/// Structure measure `α·S_o + (1−α)·S_r`.
pub fn s_measure(p: &ProbMap, gt: &BinaryMask, config: &MetricConfig) -> Result<f64> {
    check_dims(p.dims(), gt.dims(), "s-measure")?;
    let fg = gt.count_ones();
    if fg == 0 {
        return Ok(match config.s_mode {
            SMode::Strict => 0.0,
            SMode::Reference => 1.0 - p.mean(),
        });
    }
    if fg == gt.len() {
        return Ok(p.mean());
    }
    let alpha = config.s_alpha;
    let score = alpha * s_object(p, gt) + (1.0 - alpha) * s_region(p, gt);
    Ok(score.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub iou: f64,
    pub mae: f64,
    pub f_max: f64,
    pub s: f64,
    /// Max E-measure in the configured mode.
    pub e: f64,
    pub e_xi_mean: f64,
    pub e_enhanced: f64,
}

/// All per-image metrics of one prediction.
pub fn evaluate_pair(p: &ProbMap, gt: &BinaryMask, config: &MetricConfig) -> Result<MetricValues> {
    check_dims(p.dims(), gt.dims(), "prediction vs ground truth")?;
    let xi = e_measure(p, gt, &MetricConfig { e_mode: EMode::XiMean, ..*config })?.max;
    let enhanced = e_measure(p, gt, &MetricConfig { e_mode: EMode::Enhanced, ..*config })?.max;
    Ok(MetricValues {
        iou: iou(&binarize(p, config.binarize_threshold), gt)?,
        mae: mae(p, gt)?,
        f_max: f_measure(p, gt, config)?.max,
        s: s_measure(p, gt, config)?,
        e: match config.e_mode {
            EMode::XiMean => xi,
            EMode::Enhanced => enhanced,
        },
        e_xi_mean: xi,
        e_enhanced: enhanced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub group_id: String,
    pub image_id: String,
    pub iou: f64,
    pub mae: f64,
    pub f_max: f64,
    pub s: f64,
    pub e: f64,
    pub e_xi_mean: f64,
    pub e_enhanced: f64,
    pub is_zero_gt: bool,
}

/// Arithmetic means over the evaluated images; `miou` is the mean per-image IoU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub images: usize,
    pub miou: f64,
    pub mae: f64,
    pub f_max: f64,
    pub s: f64,
    pub e: f64,
    pub e_xi_mean: f64,
    pub e_enhanced: f64,
}

impl MetricSummary {
    fn from_images<'a>(images: impl IntoIterator<Item = &'a ImageMetrics>) -> Option<Self> {
        let mut n = 0usize;
        let mut sums = [0.0; 7];
        for m in images {
            n += 1;
            for (acc, v) in sums.iter_mut().zip([m.iou, m.mae, m.f_max, m.s, m.e, m.e_xi_mean, m.e_enhanced]) {
                *acc += v;
            }
        }
        let [iou, mae, f, s, e, e_xi, e_enh] = sums;
        (n > 0).then(|| {
            let k = n as f64;
            Self {
                images: n,
                miou: iou / k,
                mae: mae / k,
                f_max: f / k,
                s: s / k,
                e: e / k,
                e_xi_mean: e_xi / k,
                e_enhanced: e_enh / k,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub summary: Option<MetricSummary>,
}

/// An image that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalIssue {
    pub group_id: String,
    pub image_id: String,
    pub message: String,
}

/// Pixel-level calibration settings for [`evaluate_dataset_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub bins: usize,
    /// Keep every `stride`-th pixel of each image.
    pub stride: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            bins: crate::calibration::DEFAULT_BINS,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub config: MetricConfig,
    /// False when any image is missing or failed; see `issues`.
    pub complete: bool,
    pub issues: Vec<EvalIssue>,
    pub dataset: Option<MetricSummary>,
    pub groups: Vec<GroupSummary>,
    pub per_image: Vec<ImageMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<ReliabilityDiagram>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// Flat per-image table, one row per evaluated image in manifest order.
    pub fn per_image_csv(&self) -> String {
        let mut out = String::from("group_id,image_id,iou,mae,f_max,s,e,e_xi_mean,e_enhanced,is_zero_gt\n");
        for m in &self.per_image {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.group_id, m.image_id, m.iou, m.mae, m.f_max, m.s, m.e, m.e_xi_mean, m.e_enhanced, m.is_zero_gt
            );
        }
        out
    }
}

/// Evaluates `<predictions_dir>/<group_id>/<image_id>.png` for every image.
pub fn evaluate_dataset(manifest: &DatasetManifest, predictions_dir: &Path, config: &MetricConfig) -> Result<EvalReport> {
    evaluate_dataset_with(manifest, predictions_dir, config, None)
}

/// Like [`evaluate_dataset`], optionally also accumulating pixel-level
/// calibration. Per-image failures are recorded as issues and evaluation
/// continues; aggregation follows manifest order.
pub fn evaluate_dataset_with(
    manifest: &DatasetManifest,
    predictions_dir: &Path,
    config: &MetricConfig,
    calibration: Option<CalibrationOptions>,
) -> Result<EvalReport> {
    config.validate()?;
    if let Some(c) = calibration {
        if c.bins == 0 {
            return Err(Error::Config("number of calibration bins must be positive".into()));
        }
    }
    let items: Vec<_> = manifest.images().collect();
    let results: Vec<std::result::Result<(ImageMetrics, Option<BinAccumulator>), EvalIssue>> = items
        .par_iter()
        .map(|(group, image)| {
            let issue = |message: String| EvalIssue {
                group_id: group.group_id.clone(),
                image_id: image.image_id.clone(),
                message,
            };
            let path = map_path(predictions_dir, &group.group_id, &image.image_id);
            if !path.exists() {
                return Err(issue(format!("missing prediction file {}", path.display())));
            }
            let eval = || -> Result<_> {
                let p = load_prob_map(&path)?;
                let gt = manifest.load_ground_truth(image)?;
                let values = evaluate_pair(&p, &gt, config)?;
                let bins = match calibration {
                    Some(c) => {
                        let mut acc = BinAccumulator::new(c.bins, BinRange::MaxConfidence);
                        acc.extend(pixel_confidence_strided(&p, &gt, c.stride)?);
                        Some(acc)
                    }
                    None => None,
                };
                Ok((values, gt.is_all_zero(), bins))
            };
            let (v, is_zero_gt, bins) = eval().map_err(|e| issue(e.to_string()))?;
            Ok((
                ImageMetrics {
                    group_id: group.group_id.clone(),
                    image_id: image.image_id.clone(),
                    iou: v.iou,
                    mae: v.mae,
                    f_max: v.f_max,
                    s: v.s,
                    e: v.e,
                    e_xi_mean: v.e_xi_mean,
                    e_enhanced: v.e_enhanced,
                    is_zero_gt,
                },
                bins,
            ))
        })
        .collect();

    let mut per_image = Vec::with_capacity(results.len());
    let mut issues = Vec::new();
    let mut merged = calibration.map(|c| BinAccumulator::new(c.bins, BinRange::MaxConfidence));
    for r in results {
        match r {
            Ok((m, bins)) => {
                if let (Some(total), Some(part)) = (merged.as_mut(), bins) {
                    total.merge(&part);
                }
                per_image.push(m);
            }
            Err(issue) => issues.push(issue),
        }
    }
    let groups = manifest
        .groups
        .iter()
        .map(|g| GroupSummary {
            group_id: g.group_id.clone(),
            summary: MetricSummary::from_images(per_image.iter().filter(|m| m.group_id == g.group_id)),
        })
        .collect();
    let calibration = match merged {
        Some(acc) if acc.total() > 0 => Some(acc.finish()?),
        _ => None,
    };
    Ok(EvalReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: *config,
        complete: issues.is_empty(),
        issues,
        dataset: MetricSummary::from_images(&per_image),
        groups,
        per_image,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: u32, h: u32, on: &[(u32, u32)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| on.contains(&(x, y)))
    }

    #[test]
    fn binarize_uses_ge() {
        let p = ProbMap::filled(2, 2, 0.4).unwrap();
        assert!(binarize(&p, 0.5).is_all_zero());
        let p = ProbMap::filled(2, 2, 0.5).unwrap();
        assert_eq!(binarize(&p, 0.5).count_ones(), 4);
        let p = ProbMap::new(2, 1, vec![0.2, 0.7]).unwrap();
        assert_eq!(binarize(&p, 0.5).values(), &[false, true]);
    }

    #[test]
    fn iou_examples() {
        let empty = BinaryMask::zeros(2, 2);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&mask(2, 2, &[(0, 0)]), &empty).unwrap(), 0.0);
        let top = mask(2, 2, &[(0, 0), (1, 0)]);
        let left = mask(2, 2, &[(0, 0), (0, 1)]);
        assert_eq!(iou(&top, &left).unwrap(), 1.0 / 3.0);
        assert!(iou(&top, &BinaryMask::zeros(3, 2)).is_err());
    }

    #[test]
    fn mae_examples() {
        let gt = mask(2, 2, &[(1, 1)]);
        assert_eq!(mae(&gt.to_prob_map(), &gt).unwrap(), 0.0);
        let zero = BinaryMask::zeros(2, 2);
        assert_eq!(mae(&ProbMap::filled(2, 2, 1.0).unwrap(), &zero).unwrap(), 1.0);
        assert_eq!(mae(&ProbMap::filled(2, 2, 0.25).unwrap(), &zero).unwrap(), 0.25);
    }

    #[test]
    fn f_measure_examples() {
        let cfg = MetricConfig::default();
        let zero = BinaryMask::zeros(4, 4);
        let p = ProbMap::from_fn(4, 4, |x, y| f64::from(x * y) / 9.0);
        let curve = f_measure(&p, &zero, &cfg).unwrap();
        assert!(curve.values.iter().all(|&v| v == 0.0));

        let gt = mask(4, 4, &[(0, 0), (1, 2)]);
        assert_eq!(f_measure(&gt.to_prob_map(), &gt, &cfg).unwrap().max, 1.0);

        // half the pixels foreground, prediction all ones
        let half = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let ones = ProbMap::filled(4, 4, 1.0).unwrap();
        let f = f_measure_at(&ones, &half, 0.5, 0.3).unwrap();
        let expected = 1.3 * 0.5 / (0.3 * 0.5 + 1.0);
        assert!((f - expected).abs() < 1e-15);
        assert!((f - 0.565_217_391_304_347_8).abs() < 1e-12);
    }

    #[test]
    fn s_measure_examples() {
        let strict = MetricConfig::default();
        let reference = MetricConfig { s_mode: SMode::Reference, ..strict };
        let zero = BinaryMask::zeros(5, 5);
        let p = ProbMap::from_fn(5, 5, |x, _| f64::from(x) / 4.0);
        assert_eq!(s_measure(&p, &zero, &strict).unwrap(), 0.0);
        assert_eq!(s_measure(&ProbMap::zeros(5, 5), &zero, &reference).unwrap(), 1.0);
        assert!((s_measure(&p, &zero, &reference).unwrap() - 0.5).abs() < 1e-12);

        let gt = BinaryMask::from_fn(6, 5, |x, y| (1..4).contains(&x) && (2..5).contains(&y));
        let s = s_measure(&gt.to_prob_map(), &gt, &strict).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
        let inverted = ProbMap::from_fn(6, 5, |x, y| f64::from(u8::from(!gt.get(x, y))));
        assert!(s_measure(&inverted, &gt, &strict).unwrap() < 0.2);
    }

    #[test]
    fn e_measure_examples() {
        let xi = MetricConfig { e_mode: EMode::XiMean, ..Default::default() };
        let zero = BinaryMask::zeros(4, 4);
        let p = ProbMap::from_fn(4, 4, |x, y| f64::from(x + y) / 6.0);
        assert!(e_measure(&p, &zero, &xi).unwrap().values.iter().all(|&v| v == 0.0));

        let gt = mask(4, 4, &[(0, 0), (1, 0), (2, 3)]);
        assert_eq!(e_measure_at(&gt.to_prob_map(), &gt, 0.5, EMode::XiMean).unwrap(), 1.0);
        let constant = ProbMap::filled(4, 4, 0.7).unwrap();
        assert_eq!(e_measure_at(&constant, &gt, 0.5, EMode::XiMean).unwrap(), 0.0);
        assert_eq!(e_measure_at(&constant, &gt, 0.5, EMode::Enhanced).unwrap(), 0.25);
    }

    fn naive_e(p: &ProbMap, gt: &BinaryMask, t: f64, mode: EMode) -> f64 {
        let s: Vec<f64> = p.values().iter().map(|&v| if v >= t { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = gt.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let n = s.len() as f64;
        let ms = s.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut total = 0.0;
        for (a, b) in s.iter().zip(&y) {
            let (ps, py) = (a - ms, b - my);
            let den = ps * ps + py * py;
            let xi = if den == 0.0 { 0.0 } else { 2.0 * ps * py / den };
            total += match mode {
                EMode::XiMean => xi,
                EMode::Enhanced => (1.0 + xi).powi(2) / 4.0,
            };
        }
        total / n
    }

    proptest! {
        #[test]
        fn e_measure_matches_pixelwise_formula(
            vals in prop::collection::vec(0.0f64..=1.0, 36),
            bits in prop::collection::vec(any::<bool>(), 36),
            t in 0.0f64..=1.0,
        ) {
            let p = ProbMap::new(6, 6, vals).unwrap();
            let gt = BinaryMask::new(6, 6, bits).unwrap();
            for mode in [EMode::XiMean, EMode::Enhanced] {
                let fast = e_measure_at(&p, &gt, t, mode).unwrap();
                prop_assert!((fast - naive_e(&p, &gt, t, mode)).abs() < 1e-12);
            }
        }

        #[test]
        fn bounded_scores(
            vals in prop::collection::vec(0.0f64..=1.0, 64),
            bits in prop::collection::vec(any::<bool>(), 64),
        ) {
            let p = ProbMap::new(8, 8, vals).unwrap();
            let gt = BinaryMask::new(8, 8, bits).unwrap();
            let v = evaluate_pair(&p, &gt, &MetricConfig::default()).unwrap();
            for x in [v.iou, v.mae, v.f_max, v.s, v.e] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x), "{:?}", v);
            }
        }

        #[test]
        fn adding_a_correct_pixel_never_lowers_iou(
            pred in prop::collection::vec(any::<bool>(), 25),
            gt in prop::collection::vec(any::<bool>(), 25),
            at in 0usize..25,
        ) {
            let g = BinaryMask::new(5, 5, gt.clone()).unwrap();
            let before = iou(&BinaryMask::new(5, 5, pred.clone()).unwrap(), &g).unwrap();
            let mut grown = pred;
            if gt[at] {
                grown[at] = true;
            }
            let after = iou(&BinaryMask::new(5, 5, grown).unwrap(), &g).unwrap();
            prop_assert!(after >= before);
        }
    }
}
