//! Re-arranges a source dataset into evaluation groups where the co-salient
//! object is only partially present ("common" groups) or absent altogether
//! ("zero" groups).
//!
//! Every output image keeps pointing at its source file. Output image ids are
//! `<source_group_id>__<source_image_id>` so ids stay unique inside a group.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{DatasetManifest, GroupEntry, ImageEntry, MaskRef};
use crate::rng::derive_rng;

/// Maximum number of draws per output group before a build gives up.
pub const REDRAW_BUDGET: usize = 1000;

/// A real interval with independently open or closed ends, e.g. `[0.2,0.4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRange {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl RatioRange {
    pub const fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            lo_closed: true,
            hi,
            hi_closed: false,
        }
    }

    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            lo_closed: true,
            hi,
            hi_closed: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    fn overlaps(&self, other: &RatioRange) -> bool {
        let (a, b) = if self.lo <= other.lo { (self, other) } else { (other, self) };
        if b.lo < a.hi {
            return true;
        }
        b.lo == a.hi && a.hi_closed && b.lo_closed
    }
}

impl fmt::Display for RatioRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

impl FromStr for RatioRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed ratio range '{s}', expected e.g. [0.2,0.4)"));
        let s = s.trim();
        let lo_closed = match s.chars().next() {
            Some('[') => true,
            Some('(') => false,
            _ => return Err(bad()),
        };
        let hi_closed = match s.chars().last() {
            Some(']') => true,
            Some(')') => false,
            _ => return Err(bad()),
        };
        let inner = &s[1..s.len() - 1];
        let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        Ok(Self {
            lo,
            lo_closed,
            hi,
            hi_closed,
        })
    }
}

impl Serialize for RatioRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RatioRange {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated list such as `[0.2,0.4),[0.4,0.6),[0.6,0.8]`.
pub fn parse_ratio_ranges(s: &str) -> Result<Vec<RatioRange>> {
    let mut ranges = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' if start.is_none() => start = Some(i),
            ']' | ')' => {
                let begin = start
                    .take()
                    .ok_or_else(|| Error::Config(format!("unbalanced ratio ranges '{s}'")))?;
                ranges.push(s[begin..=i].parse()?);
            }
            ',' | ' ' if start.is_none() => {}
            _ if start.is_some() => {}
            _ => return Err(Error::Config(format!("unexpected '{c}' in ratio ranges '{s}'"))),
        }
    }
    if start.is_some() || ranges.is_empty() {
        return Err(Error::Config(format!("malformed ratio ranges '{s}'")));
    }
    Ok(ranges)
}

pub fn default_ratio_ranges() -> Vec<RatioRange> {
    vec![
        RatioRange::half_open(0.2, 0.4),
        RatioRange::half_open(0.4, 0.6),
        RatioRange::closed(0.6, 0.8),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonBuildConfig {
    pub ratio_ranges: Vec<RatioRange>,
    /// Variant `v` targets `ratio_ranges[v % ratio_ranges.len()]`.
    pub variants_per_category: usize,
    pub seed: u64,
    /// Categories never used as noisy fillers.
    pub exclusions: BTreeSet<String>,
}

impl Default for CommonBuildConfig {
    fn default() -> Self {
        Self {
            ratio_ranges: default_ratio_ranges(),
            variants_per_category: 3,
            seed: 0,
            exclusions: BTreeSet::new(),
        }
    }
}

impl CommonBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratio_ranges.is_empty() {
            return Err(Error::Config("at least one ratio range is required".into()));
        }
        if self.variants_per_category == 0 {
            return Err(Error::Config("variants_per_category must be positive".into()));
        }
        for (i, r) in self.ratio_ranges.iter().enumerate() {
            if r.is_empty() || r.lo < 0.0 || (r.lo == 0.0 && r.lo_closed) || r.hi > 1.0 {
                return Err(Error::Config(format!("ratio range {r} must be a non-empty subset of (0,1]")));
            }
            if let Some(o) = self.ratio_ranges[..i].iter().find(|o| o.overlaps(r)) {
                return Err(Error::Config(format!("ratio ranges {o} and {r} overlap")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBuildConfig {
    pub num_groups: usize,
    pub min_group_size: usize,
    pub max_group_size: usize,
    pub seed: u64,
    /// Tags tolerated as shared secondary objects.
    pub exclusions: BTreeSet<String>,
}

impl Default for ZeroBuildConfig {
    fn default() -> Self {
        Self {
            num_groups: 55,
            min_group_size: 5,
            max_group_size: 6,
            seed: 0,
            exclusions: BTreeSet::new(),
        }
    }
}

impl ZeroBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_groups == 0 {
            return Err(Error::Config("num_groups must be positive".into()));
        }
        if self.min_group_size == 0 || self.min_group_size > self.max_group_size {
            return Err(Error::Config(format!(
                "group sizes must satisfy 1 <= min <= max, got {}..{}",
                self.min_group_size, self.max_group_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSource {
    pub image_id: String,
    pub source_group_id: String,
    pub source_image_id: String,
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group_id: String,
    pub category: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_range: Option<RatioRange>,
    pub n_primary: usize,
    pub size: usize,
    pub ratio: f64,
    pub attempts: usize,
    pub members: Vec<MemberSource>,
}

/// A tag shared by too many images of one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub group_id: String,
    pub tag: String,
    pub count: usize,
    pub group_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub mode: String,
    pub seed: u64,
    pub groups: Vec<GroupStats>,
    pub violations: Vec<Violation>,
}

fn derived_image(group: &GroupEntry, image: &ImageEntry, mask: MaskRef) -> ImageEntry {
    ImageEntry {
        image_id: format!("{}__{}", group.group_id, image.image_id),
        mask_path: mask,
        ..image.clone()
    }
}

fn member(group: &GroupEntry, image: &ImageEntry, primary: bool) -> MemberSource {
    MemberSource {
        image_id: format!("{}__{}", group.group_id, image.image_id),
        source_group_id: group.group_id.clone(),
        source_image_id: image.image_id.clone(),
        primary,
    }
}

fn derived_manifest(source: &DatasetManifest, groups: Vec<GroupEntry>) -> DatasetManifest {
    DatasetManifest {
        schema_version: source.schema_version,
        root: source.root.clone(),
        groups,
        base_dir: source.base_dir.clone(),
    }
}

/// Builds groups in which the source category is present in a controlled
/// fraction of the images; the remaining slots hold ZERO-labelled fillers,
/// each from a different source group and never showing the category.
pub fn build_common(
    source: &DatasetManifest,
    config: &CommonBuildConfig,
) -> Result<(DatasetManifest, BuildStats)> {
    config.validate()?;
    if source.num_groups() < 2 {
        return Err(Error::Capacity {
            context: "source groups for common build".into(),
            requested: 2,
            available: source.num_groups(),
        });
    }
    let mut groups = Vec::new();
    let mut stats = Vec::new();
    for (gi, group) in source.groups.iter().enumerate() {
        let n = group.len();
        // Fillers: other categories, not excluded, with at least one image
        // that does not show this group's category.
        let pool: Vec<(&GroupEntry, Vec<&ImageEntry>)> = source
            .groups
            .iter()
            .filter(|g| g.category != group.category && !config.exclusions.contains(&g.category))
            .map(|g| {
                let clean = g.images.iter().filter(|i| !i.tags.contains(&group.category)).collect();
                (g, clean)
            })
            .filter(|(_, clean): &(_, Vec<_>)| !clean.is_empty())
            .collect();

        for v in 0..config.variants_per_category {
            let range = config.ratio_ranges[v % config.ratio_ranges.len()];
            let feasible: Vec<usize> = (1..=n).filter(|&np| range.contains(np as f64 / n as f64)).collect();
            if feasible.is_empty() {
                return Err(Error::Infeasible(format!(
                    "ratio range {range} admits no primary count for group '{}' of size {n}",
                    group.group_id
                )));
            }
            let mut rng = derive_rng("build-common", config.seed, &[gi as u64, v as u64]);
            let n_primary = feasible[rng.random_range(0..feasible.len())];
            let n_noisy = n - n_primary;
            if pool.len() < n_noisy {
                return Err(Error::Infeasible(format!(
                    "group '{}' needs {n_noisy} noisy fillers from distinct groups, only {} eligible after exclusions",
                    group.group_id,
                    pool.len()
                )));
            }

            let mut keep = index::sample(&mut rng, n, n_primary).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<(ImageEntry, MemberSource)> = keep
                .into_iter()
                .map(|i| {
                    let img = &group.images[i];
                    (derived_image(group, img, img.mask_path.clone()), member(group, img, true))
                })
                .collect();
            let mut fillers = index::sample(&mut rng, pool.len(), n_noisy).into_vec();
            fillers.sort_unstable();
            for pi in fillers {
                let (src, clean) = &pool[pi];
                let img = clean[rng.random_range(0..clean.len())];
                slots.push((derived_image(src, img, MaskRef::Zero), member(src, img, false)));
            }
            slots.shuffle(&mut rng);

            let group_id = format!("{}_v{v}", group.group_id);
            let (images, members): (Vec<_>, Vec<_>) = slots.into_iter().unzip();
            stats.push(GroupStats {
                group_id: group_id.clone(),
                category: group.category.clone(),
                target_range: Some(range),
                n_primary,
                size: n,
                ratio: n_primary as f64 / n as f64,
                attempts: 1,
                members,
            });
            groups.push(GroupEntry {
                group_id,
                category: group.category.clone(),
                images,
            });
        }
    }
    let manifest = derived_manifest(source, groups);
    manifest.validate_structure()?;
    Ok((
        manifest,
        BuildStats {
            mode: "common".into(),
            seed: config.seed,
            groups: stats,
            violations: Vec::new(),
        },
    ))
}

/// Category assigned to groups without a co-salient object.
pub const ZERO_GROUP_CATEGORY: &str = "none";

/// Builds groups that share no salient category: at most one image per source
/// group, all labels ZERO, and no non-excluded tag on two or more images.
/// Dirty draws are discarded and redrawn.
pub fn build_zero(
    source: &DatasetManifest,
    config: &ZeroBuildConfig,
) -> Result<(DatasetManifest, BuildStats)> {
    config.validate()?;
    let k = source.num_groups();
    if k < config.max_group_size {
        return Err(Error::Capacity {
            context: "source groups for zero build (one image per source group)".into(),
            requested: config.max_group_size,
            available: k,
        });
    }
    let mut groups = Vec::with_capacity(config.num_groups);
    let mut stats = Vec::with_capacity(config.num_groups);
    for g in 0..config.num_groups {
        let group_id = format!("zero_{g:03}");
        let mut accepted = None;
        for attempt in 0..REDRAW_BUDGET {
            let mut rng = derive_rng("build-zero", config.seed, &[g as u64, attempt as u64]);
            let size = rng.random_range(config.min_group_size..=config.max_group_size);
            let mut picked = index::sample(&mut rng, k, size).into_vec();
            picked.sort_unstable();
            let chosen: Vec<(&GroupEntry, &ImageEntry)> = picked
                .into_iter()
                .map(|si| {
                    let src = &source.groups[si];
                    (src, &src.images[rng.random_range(0..src.len())])
                })
                .collect();
            let candidate = GroupEntry {
                group_id: group_id.clone(),
                category: ZERO_GROUP_CATEGORY.into(),
                images: chosen
                    .iter()
                    .map(|(src, img)| derived_image(src, img, MaskRef::Zero))
                    .collect(),
            };
            if group_violations(&candidate, &config.exclusions, 0.0).is_empty() {
                accepted = Some((candidate, chosen, attempt + 1));
                break;
            }
        }
        let (group, chosen, attempts) = accepted.ok_or_else(|| {
            Error::Infeasible(format!(
                "no tag-disjoint draw for '{group_id}' within {REDRAW_BUDGET} attempts; \
                 relax group sizes or add exclusions"
            ))
        })?;
        stats.push(GroupStats {
            group_id: group.group_id.clone(),
            category: group.category.clone(),
            target_range: None,
            n_primary: 0,
            size: group.len(),
            ratio: 0.0,
            attempts,
            members: chosen.iter().map(|(src, img)| member(src, img, false)).collect(),
        });
        groups.push(group);
    }
    let manifest = derived_manifest(source, groups);
    manifest.validate_structure()?;
    let violations = validate_zero(&manifest, &config.exclusions);
    if !violations.is_empty() {
        return Err(Error::Internal(format!("zero build produced {} violations", violations.len())));
    }
    Ok((
        manifest,
        BuildStats {
            mode: "zero".into(),
            seed: config.seed,
            groups: stats,
            violations,
        },
    ))
}

fn group_violations(group: &GroupEntry, exclusions: &BTreeSet<String>, overlap_threshold: f64) -> Vec<Violation> {
    let size = group.len();
    let min_count = ((overlap_threshold * size as f64).ceil() as usize).max(2);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for img in &group.images {
        for tag in &img.tags {
            *counts.entry(tag.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(tag, count)| *count >= min_count && !exclusions.contains(*tag))
        .map(|(tag, count)| Violation {
            group_id: group.group_id.clone(),
            tag: tag.to_string(),
            count,
            group_size: size,
        })
        .collect()
}

/// Reports every group in which a non-excluded tag is shared by two or more images.
pub fn validate_zero(manifest: &DatasetManifest, exclusions: &BTreeSet<String>) -> Vec<Violation> {
    validate_zero_with_threshold(manifest, exclusions, 0.0)
}

/// Like [`validate_zero`], flagging tags present in at least
/// `max(2, ceil(overlap_threshold * group_size))` images.
pub fn validate_zero_with_threshold(
    manifest: &DatasetManifest,
    exclusions: &BTreeSet<String>,
    overlap_threshold: f64,
) -> Vec<Violation> {
    manifest
        .groups
        .iter()
        .flat_map(|g| group_violations(g, exclusions, overlap_threshold))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub group_id: String,
    pub category: String,
    pub n_primary: usize,
    pub size: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBin {
    pub range: RatioRange,
    pub count: usize,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioHistogram {
    pub rows: Vec<RatioRow>,
    pub bins: Vec<RatioBin>,
    /// Groups whose ratio falls in none of the ranges.
    pub unbinned: usize,
}

/// Primary ratio of every group (non-ZERO labels over group size), binned by `ranges`.
pub fn primary_ratio_histogram(manifest: &DatasetManifest, ranges: &[RatioRange]) -> RatioHistogram {
    let rows: Vec<RatioRow> = manifest
        .groups
        .iter()
        .map(|g| {
            let n_primary = g.images.iter().filter(|i| !i.mask_path.is_zero()).count();
            RatioRow {
                group_id: g.group_id.clone(),
                category: g.category.clone(),
                n_primary,
                size: g.len(),
                ratio: n_primary as f64 / g.len() as f64,
            }
        })
        .collect();
    let mut bins: Vec<RatioBin> = ranges
        .iter()
        .map(|&range| RatioBin {
            range,
            count: 0,
            categories: Vec::new(),
        })
        .collect();
    let mut unbinned = 0;
    for row in &rows {
        match bins.iter_mut().find(|b| b.range.contains(row.ratio)) {
            Some(bin) => {
                bin.count += 1;
                bin.categories.push(row.category.clone());
            }
            None => unbinned += 1,
        }
    }
    RatioHistogram {
        rows,
        bins,
        unbinned,
    }
}
