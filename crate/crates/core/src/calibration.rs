//! Expected calibration error over dense binary predictions, with
//! reliability diagrams.
//!
//! Every pixel is one prediction: the predicted label is `p >= 0.5`, its
//! confidence `max(p, 1 - p)`. Confidences are binned into `K` equal-width
//! bins and `ECE = Σ |B_i| / N · |acc(B_i) − conf(B_i)|`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMask, ProbMap};

pub const DEFAULT_BINS: usize = 10;

/// Interval covered by the bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinRange {
    /// `[0.5, 1]`, the range of two-class max-confidence.
    #[default]
    MaxConfidence,
    /// `[0, 1]`, for raw probabilities.
    Probability,
}

impl BinRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            BinRange::MaxConfidence => (0.5, 1.0),
            BinRange::Probability => (0.0, 1.0),
        }
    }

    /// Lower edge of bin `i`; `edge(k, k)` is the upper bound of the range.
    pub fn edge(self, i: usize, num_bins: usize) -> f64 {
        let (lo, hi) = self.bounds();
        if i == num_bins {
            hi
        } else {
            lo + (hi - lo) * i as f64 / num_bins as f64
        }
    }

    /// Bin of `confidence`: bins are `[edge_i, edge_{i+1})` except the top one,
    /// which is closed. Values outside the range go to the nearest end bin.
    pub fn bin_index(self, confidence: f64, num_bins: usize) -> usize {
        let (lo, hi) = self.bounds();
        let guess = ((confidence - lo) / (hi - lo) * num_bins as f64).floor();
        let mut idx = if guess.is_nan() { 0 } else { guess.clamp(0.0, (num_bins - 1) as f64) as usize };
        // floor() of the scaled value can land one bin off near an edge
        while idx > 0 && confidence < self.edge(idx, num_bins) {
            idx -= 1;
        }
        while idx + 1 < num_bins && confidence >= self.edge(idx + 1, num_bins) {
            idx += 1;
        }
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub confidence: f64,
    pub correct: bool,
}

impl CalibrationSample {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self { confidence, correct }
    }
}

/// Confidence and correctness of every pixel, row-major.
pub fn pixel_confidence(p: &ProbMap, gt: &BinaryMask) -> Result<Vec<CalibrationSample>> {
    pixel_confidence_strided(p, gt, 1)
}

/// Like [`pixel_confidence`] but keeps only every `stride`-th pixel.
pub fn pixel_confidence_strided(p: &ProbMap, gt: &BinaryMask, stride: usize) -> Result<Vec<CalibrationSample>> {
    if p.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            context: "calibration prediction vs ground truth".into(),
            expected: gt.dims(),
            found: p.dims(),
        });
    }
    let stride = stride.max(1);
    Ok(p.values()
        .iter()
        .zip(gt.values())
        .step_by(stride)
        .map(|(&v, &y)| {
            let predicted = v >= 0.5;
            CalibrationSample::new(v.max(1.0 - v), predicted == y)
        })
        .collect())
}

/// Per-bin running sums. Accumulators built on different workers merge
/// exactly; merge them in a fixed order for bit-stable results.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccumulator {
    range: BinRange,
    counts: Vec<usize>,
    confidence_sums: Vec<f64>,
    correct: Vec<usize>,
}

impl BinAccumulator {
    pub fn new(num_bins: usize, range: BinRange) -> Self {
        assert!(num_bins >= 1, "at least one bin is required");
        Self {
            range,
            counts: vec![0; num_bins],
            confidence_sums: vec![0.0; num_bins],
            correct: vec![0; num_bins],
        }
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, sample: CalibrationSample) {
        let b = self.range.bin_index(sample.confidence, self.num_bins());
        self.counts[b] += 1;
        self.confidence_sums[b] += sample.confidence;
        self.correct[b] += usize::from(sample.correct);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = CalibrationSample>) {
        for s in samples {
            self.add(s);
        }
    }

    pub fn merge(&mut self, other: &BinAccumulator) {
        assert_eq!(self.num_bins(), other.num_bins());
        assert_eq!(self.range, other.range);
        for b in 0..self.num_bins() {
            self.counts[b] += other.counts[b];
            self.confidence_sums[b] += other.confidence_sums[b];
            self.correct[b] += other.correct[b];
        }
    }

    pub fn finish(&self) -> Result<ReliabilityDiagram> {
        let total = self.total();
        if total == 0 {
            return Err(Error::validation("calibration samples", "stream is empty"));
        }
        let k = self.num_bins();
        let mut ece = 0.0;
        let bins = (0..k)
            .map(|b| {
                let count = self.counts[b];
                let (mean_confidence, mean_accuracy) = if count == 0 {
                    (None, None)
                } else {
                    let conf = self.confidence_sums[b] / count as f64;
                    let acc = self.correct[b] as f64 / count as f64;
                    ece += count as f64 / total as f64 * (acc - conf).abs();
                    (Some(conf), Some(acc))
                };
                ReliabilityBin {
                    lo: self.range.edge(b, k),
                    hi: self.range.edge(b + 1, k),
                    count,
                    mean_confidence,
                    mean_accuracy,
                }
            })
            .collect();
        Ok(ReliabilityDiagram {
            range: self.range,
            num_bins: k,
            total,
            ece,
            bins,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub range: BinRange,
    pub num_bins: usize,
    pub total: usize,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
}

/// Equal-width ECE with `num_bins` bins over `range`.
pub fn ece(
    samples: impl IntoIterator<Item = CalibrationSample>,
    num_bins: usize,
    range: BinRange,
) -> Result<ReliabilityDiagram> {
    if num_bins == 0 {
        return Err(Error::Config("number of calibration bins must be positive".into()));
    }
    let mut acc = BinAccumulator::new(num_bins, range);
    acc.extend(samples);
    acc.finish()
}

pub fn diagram_csv(d: &ReliabilityDiagram) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("bin,lo,hi,count,mean_confidence,mean_accuracy\n");
    for (i, b) in d.bins.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            b.lo,
            b.hi,
            b.count,
            opt(b.mean_confidence),
            opt(b.mean_accuracy)
        );
    }
    out
}

/// Reliability diagram as SVG: per-bin accuracy bars over the confidence
/// axis and the identity "Oracle" diagonal. Empty bins are left as gaps.
pub fn diagram_svg(d: &ReliabilityDiagram) -> String {
    const SIZE: f64 = 360.0;
    const MARGIN: f64 = 48.0;
    let (lo, hi) = d.range.bounds();
    let sx = |v: f64| MARGIN + (v - lo) / (hi - lo) * SIZE;
    let sy = |v: f64| MARGIN + (1.0 - v) * SIZE;
    let total = SIZE + 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{total}" height="{total}" fill="white"/>"#);
    for b in &d.bins {
        if let Some(acc) = b.mean_accuracy {
            let (x0, x1) = (sx(b.lo), sx(b.hi));
            let y = sy(acc);
            let _ = writeln!(
                svg,
                r##"<rect class="bar" x="{x0:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="#3b6fb6" stroke="#1d3d66"/>"##,
                x1 - x0,
                sy(0.0) - y
            );
        }
    }
    // the oracle maps confidence c to accuracy c
    let _ = writeln!(
        svg,
        r##"<line class="oracle" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#c0392b" stroke-width="2" stroke-dasharray="6 4"/>"##,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Confidence</text>"#,
        MARGIN + SIZE / 2.0,
        total - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">Accuracy</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}">ECE = {:.4} (K = {}, N = {})</text>"#,
        MARGIN + 6.0,
        MARGIN + 16.0,
        d.ece,
        d.num_bins,
        d.total
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" fill="#c0392b">Oracle</text>"##,
        sx(hi) - 46.0,
        sy(hi) + 28.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<stem>.csv` and `<stem>.svg`, returning both paths.
pub fn render_reliability(d: &ReliabilityDiagram, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&csv, diagram_csv(d)).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&svg, diagram_svg(d)).map_err(|e| Error::io(&svg, e))?;
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(c: f64, ok: bool) -> CalibrationSample {
        CalibrationSample::new(c, ok)
    }

    #[test]
    fn pixel_examples() {
        let p = ProbMap::new(3, 1, vec![0.9, 0.2, 0.5]).unwrap();
        let gt = BinaryMask::new(3, 1, vec![true, true, false]).unwrap();
        let out = pixel_confidence(&p, &gt).unwrap();
        assert_eq!(out, vec![s(0.9, true), s(0.8, false), s(0.5, false)]);
        let wrong = BinaryMask::zeros(2, 2);
        assert!(pixel_confidence(&p, &wrong).is_err());
    }

    #[test]
    fn worked_example() {
        let samples = [s(0.95, true), s(0.95, false), s(0.65, true)];
        for range in [BinRange::MaxConfidence, BinRange::Probability] {
            let d = ece(samples, 10, range).unwrap();
            let expected = (2.0 / 3.0) * (0.5f64 - 0.95).abs() + (1.0 / 3.0) * (1.0f64 - 0.65).abs();
            assert!((d.ece - expected).abs() < 1e-12);
            assert!((d.ece - 0.416_666_666_666_666_7).abs() < 1e-12);
            let filled: Vec<_> = d.bins.iter().filter(|b| b.count > 0).collect();
            assert_eq!(filled.len(), 2);
            assert_eq!(filled[0].mean_accuracy, Some(1.0));
            assert!(filled[0].lo <= 0.65 && 0.65 < filled[0].hi);
            assert_eq!(filled[1].mean_accuracy, Some(0.5));
            assert!(filled[1].lo <= 0.95 && 0.95 <= filled[1].hi);
        }
    }

    #[test]
    fn confidence_equal_to_accuracy_is_calibrated() {
        // one bin holding {1.0 correct}, another holding 0.75 with 3/4 correct
        let samples = [s(1.0, true), s(0.75, true), s(0.75, true), s(0.75, true), s(0.75, false)];
        let d = ece(samples, 10, BinRange::MaxConfidence).unwrap();
        assert!(d.ece.abs() < 1e-15);
        assert_eq!(d.bins[9].count, 1, "top bin is right-closed");
    }

    #[test]
    fn edges_are_exact() {
        let r = BinRange::MaxConfidence;
        assert_eq!(r.bin_index(0.95, 10), 9);
        assert_eq!(r.bin_index(0.5, 10), 0);
        assert_eq!(r.bin_index(1.0, 10), 9);
        assert_eq!(r.bin_index(0.55, 10), 1);
        assert_eq!(BinRange::Probability.bin_index(0.3, 10), 3);
        assert_eq!(BinRange::Probability.bin_index(0.7, 10), 7);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(ece(std::iter::empty(), 10, BinRange::MaxConfidence).is_err());
        assert!(ece([s(0.7, true)], 0, BinRange::MaxConfidence).is_err());
    }

    #[test]
    fn csv_and_svg_render_gaps() {
        let d = ece([s(0.95, true), s(0.95, false), s(0.65, true)], 10, BinRange::MaxConfidence).unwrap();
        let csv = diagram_csv(&d);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.lines().nth(1).unwrap().ends_with(",0,,"));
        let svg = diagram_svg(&d);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 2);
        assert!(svg.contains("Oracle"));

        let dir = tempfile::tempdir().unwrap();
        let (c, v) = render_reliability(&d, &dir.path().join("diag")).unwrap();
        assert!(c.exists() && v.exists());
    }

    proptest! {
        #[test]
        fn ece_is_bounded_and_order_free(
            raw in prop::collection::vec((0.5f64..=1.0, any::<bool>()), 1..200),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let samples: Vec<_> = raw.iter().map(|&(c, ok)| s(c, ok)).collect();
            let a = ece(samples.clone(), 10, BinRange::MaxConfidence).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.ece));
            prop_assert_eq!(a.bins.iter().map(|b| b.count).sum::<usize>(), samples.len());
            let mut shuffled = samples;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = ece(shuffled, 10, BinRange::MaxConfidence).unwrap();
            prop_assert!((a.ece - b.ece).abs() < 1e-12);
        }
    }
}
