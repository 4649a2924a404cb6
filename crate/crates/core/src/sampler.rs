//! Generalised co-saliency training group synthesis.
//!
//! For every primary group a replacement ratio `r̃` is drawn, turned into a
//! replacement count `r`, and `r` primary slots are overwritten by one image
//! from each of `r` distinct secondary groups. Replaced slots carry the ZERO
//! label, so the learner sees explicit "no co-salient object here" targets.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetManifest, GroupEntry, ImageEntry, MaskRef};
use crate::rng::derive_rng;

/// How the replacement count is derived from the uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMode {
    /// `r̃ ~ U[0, 1)`, `r = ⌊N · r̃⌋`. Full replacement never happens.
    #[default]
    FloorUniform,
    /// `r ~ U{0, …, N}`; both the untouched and the fully replaced group occur.
    IntegerUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub full_replacement_mode: RatioMode,
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Primary,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledEntry {
    pub image: ImageEntry,
    pub source_group_id: String,
    pub role: Role,
    pub effective_mask: MaskRef,
}

/// One training group as seen by the learner for a single draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroup {
    pub group_id: String,
    pub draw_index: u64,
    pub drawn_ratio: f64,
    pub replacement_count: usize,
    pub entries: Vec<SampledEntry>,
}

impl SampledGroup {
    pub fn noisy_count(&self) -> usize {
        self.entries.iter().filter(|e| e.role == Role::Noisy).count()
    }

    pub fn to_record(&self) -> SampledGroupRecord {
        SampledGroupRecord {
            group_id: self.group_id.clone(),
            draw_index: self.draw_index,
            drawn_ratio: self.drawn_ratio,
            replacement_count: self.replacement_count,
            entries: self
                .entries
                .iter()
                .map(|e| SampledEntryRecord {
                    image_id: e.image.image_id.clone(),
                    source_group_id: e.source_group_id.clone(),
                    role: e.role,
                })
                .collect(),
        }
    }
}

/// Serialized form of a [`SampledGroup`], one line per group in a stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGroupRecord {
    pub group_id: String,
    pub draw_index: u64,
    pub drawn_ratio: f64,
    pub replacement_count: usize,
    pub entries: Vec<SampledEntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledEntryRecord {
    pub image_id: String,
    pub source_group_id: String,
    pub role: Role,
}

/// `r = ⌊N · r̃⌋`, capped at `N`.
pub fn replacement_count_from_ratio(group_size: usize, ratio: f64) -> usize {
    ((group_size as f64 * ratio).floor().max(0.0) as usize).min(group_size)
}

/// Draws `(r̃, r)` for a group of `group_size` images.
///
/// In integer-uniform mode the recorded ratio is `r / N`.
pub fn draw_replacement_count<R: Rng + ?Sized>(
    group_size: usize,
    mode: RatioMode,
    rng: &mut R,
) -> (f64, usize) {
    assert!(group_size >= 1, "group size must be positive");
    match mode {
        RatioMode::FloorUniform => {
            let ratio: f64 = rng.random();
            (ratio, replacement_count_from_ratio(group_size, ratio))
        }
        RatioMode::IntegerUniform => {
            let r = rng.random_range(0..=group_size);
            (r as f64 / group_size as f64, r)
        }
    }
}

/// Picks `r` distinct secondary groups and one uniformly drawn image from each.
pub fn sample_noisy_sources<'m, R: Rng + ?Sized>(
    primary_group_id: &str,
    r: usize,
    manifest: &'m DatasetManifest,
    rng: &mut R,
) -> Result<Vec<(&'m str, &'m ImageEntry)>> {
    let secondary: Vec<&GroupEntry> = manifest
        .groups
        .iter()
        .filter(|g| g.group_id != primary_group_id)
        .collect();
    if r > secondary.len() {
        return Err(Error::Capacity {
            context: format!(
                "noisy sources for group '{primary_group_id}' (K = {})",
                manifest.num_groups()
            ),
            requested: r,
            available: secondary.len(),
        });
    }
    let mut picked = index::sample(rng, secondary.len(), r).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|gi| {
            let group = secondary[gi];
            let image = &group.images[rng.random_range(0..group.images.len())];
            (group.group_id.as_str(), image)
        })
        .collect())
}

/// Replaces a uniformly random subset of `noisy.len()` primary slots in place.
///
/// The returned group has `draw_index = 0` and `drawn_ratio = |noisy| / N`;
/// [`sample_group`] overwrites both with the recorded draw.
pub fn compose_training_group<R: Rng + ?Sized>(
    primary: &GroupEntry,
    noisy: &[(&str, &ImageEntry)],
    rng: &mut R,
) -> Result<SampledGroup> {
    let n = primary.images.len();
    if noisy.len() > n {
        return Err(Error::Capacity {
            context: format!("replacement slots in group '{}'", primary.group_id),
            requested: noisy.len(),
            available: n,
        });
    }
    let mut slots = index::sample(rng, n, noisy.len()).into_vec();
    slots.sort_unstable();

    let mut entries: Vec<SampledEntry> = primary
        .images
        .iter()
        .map(|img| SampledEntry {
            image: img.clone(),
            source_group_id: primary.group_id.clone(),
            role: Role::Primary,
            effective_mask: img.mask_path.clone(),
        })
        .collect();
    for (&slot, &(source, image)) in slots.iter().zip(noisy) {
        entries[slot] = SampledEntry {
            image: image.clone(),
            source_group_id: source.to_string(),
            role: Role::Noisy,
            effective_mask: MaskRef::Zero,
        };
    }
    Ok(SampledGroup {
        group_id: primary.group_id.clone(),
        draw_index: 0,
        drawn_ratio: if n == 0 { 0.0 } else { noisy.len() as f64 / n as f64 },
        replacement_count: noisy.len(),
        entries,
    })
}

/// Samples the training group for `manifest.groups[group_index]`, using only
/// the stream keyed by `(seed, epoch, group_index)`.
pub fn sample_group(
    manifest: &DatasetManifest,
    group_index: usize,
    config: &SamplerConfig,
) -> Result<SampledGroup> {
    let primary = &manifest.groups[group_index];
    let mut rng = derive_rng("gct-sampler", config.seed, &[config.epoch, group_index as u64]);
    let (ratio, r) = draw_replacement_count(primary.len(), config.full_replacement_mode, &mut rng);
    let noisy = sample_noisy_sources(&primary.group_id, r, manifest, &mut rng)?;
    let mut group = compose_training_group(primary, &noisy, &mut rng)?;
    group.draw_index = config.epoch;
    group.drawn_ratio = ratio;
    Ok(group)
}

/// One sampled group per manifest group, in manifest order.
///
/// Groups are sampled in parallel on the current rayon pool; the output does
/// not depend on the pool size.
pub fn sample_epoch(manifest: &DatasetManifest, config: &SamplerConfig) -> Result<Vec<SampledGroup>> {
    if manifest.num_groups() < 2 {
        return Err(Error::Capacity {
            context: "secondary groups for training-group sampling (need K >= 2)".into(),
            requested: 2,
            available: manifest.num_groups(),
        });
    }
    (0..manifest.num_groups())
        .into_par_iter()
        .map(|gi| sample_group(manifest, gi, config))
        .collect()
}

/// Writes one JSON record per group, newline-terminated.
pub fn write_stream<W: Write>(groups: &[SampledGroup], mut out: W) -> Result<()> {
    for group in groups {
        let line = serde_json::to_string(&group.to_record())
            .map_err(|e| Error::Internal(format!("stream serialization: {e}")))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<sample stream>", e))?;
    }
    Ok(())
}

pub fn stream_to_string(groups: &[SampledGroup]) -> Result<String> {
    let mut buf = Vec::new();
    write_stream(groups, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy_manifest;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn floor_rule_examples() {
        assert_eq!(replacement_count_from_ratio(10, 0.37), 3);
        assert_eq!(replacement_count_from_ratio(10, 0.0), 0);
        assert_eq!(replacement_count_from_ratio(5, 0.999), 4);
        assert_eq!(replacement_count_from_ratio(5, 1.0), 5);
    }

    #[test]
    fn zero_ratio_leaves_group_unchanged() {
        let m = toy_manifest(3, 10);
        let mut rng = derive_rng("t", 0, &[]);
        let g = compose_training_group(&m.groups[0], &[], &mut rng).unwrap();
        assert!(g.entries.iter().all(|e| e.role == Role::Primary));
        let imgs: Vec<_> = g.entries.iter().map(|e| e.image.clone()).collect();
        assert_eq!(imgs, m.groups[0].images);
    }

    #[test]
    fn full_replacement_yields_all_zero_labels() {
        let m = toy_manifest(5, 4);
        let mut rng = derive_rng("t", 1, &[]);
        let noisy = sample_noisy_sources("g0", 4, &m, &mut rng).unwrap();
        let g = compose_training_group(&m.groups[0], &noisy, &mut rng).unwrap();
        assert_eq!(g.noisy_count(), 4);
        assert!(g.entries.iter().all(|e| e.effective_mask == MaskRef::Zero));
    }

    #[test]
    fn partial_replacement_counts() {
        let m = toy_manifest(12, 10);
        let mut rng = derive_rng("t", 2, &[]);
        let noisy = sample_noisy_sources("g3", 3, &m, &mut rng).unwrap();
        let g = compose_training_group(&m.groups[3], &noisy, &mut rng).unwrap();
        let zeros = g.entries.iter().filter(|e| e.effective_mask.is_zero()).count();
        assert_eq!(zeros, 3);
        assert_eq!(g.entries.len() - zeros, 7);
    }

    #[test]
    fn sources_are_distinct_secondary_groups() {
        let m = toy_manifest(3, 2);
        assert!(sample_noisy_sources("g1", 0, &m, &mut derive_rng("t", 0, &[]))
            .unwrap()
            .is_empty());
        let picked = sample_noisy_sources("g1", 2, &m, &mut derive_rng("t", 0, &[])).unwrap();
        let ids: HashSet<_> = picked.iter().map(|(g, _)| *g).collect();
        assert_eq!(ids, HashSet::from(["g0", "g2"]));
    }

    #[test]
    fn too_many_replacements_is_capacity_error() {
        let m = toy_manifest(3, 5);
        let err = sample_noisy_sources("g0", 3, &m, &mut derive_rng("t", 0, &[])).unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 3, available: 2, .. }));

        let noisy: Vec<_> = m.groups[1].images.iter().map(|i| ("g1", i)).collect();
        let small = GroupEntry {
            images: m.groups[0].images[..2].to_vec(),
            ..m.groups[0].clone()
        };
        assert!(compose_training_group(&small, &noisy, &mut derive_rng("t", 0, &[])).is_err());
    }

    #[test]
    fn single_group_manifest_cannot_be_sampled() {
        let m = toy_manifest(1, 4);
        assert!(matches!(
            sample_epoch(&m, &SamplerConfig::default()),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn epochs_differ_and_repeat() {
        let m = toy_manifest(8, 6);
        let c0 = SamplerConfig { seed: 9, epoch: 0, ..Default::default() };
        let c1 = SamplerConfig { epoch: 1, ..c0 };
        let a = stream_to_string(&sample_epoch(&m, &c0).unwrap()).unwrap();
        let b = stream_to_string(&sample_epoch(&m, &c0).unwrap()).unwrap();
        let c = stream_to_string(&sample_epoch(&m, &c1).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.lines().count(), 8);
    }

    #[test]
    fn integer_uniform_reaches_both_extremes() {
        let mut rng = derive_rng("t", 5, &[]);
        let counts: HashSet<usize> = (0..2000)
            .map(|_| draw_replacement_count(4, RatioMode::IntegerUniform, &mut rng).1)
            .collect();
        assert_eq!(counts, (0..=4).collect());
    }

    proptest! {
        #[test]
        fn sampled_groups_satisfy_invariants(
            seed in any::<u64>(),
            epoch in 0u64..50,
            k in 2usize..9,
            n in 1usize..8,
            integer in any::<bool>(),
        ) {
            let m = toy_manifest(k, n);
            let mode = if integer { RatioMode::IntegerUniform } else { RatioMode::FloorUniform };
            let cfg = SamplerConfig { seed, epoch, full_replacement_mode: mode };
            for gi in 0..k {
                let g = match sample_group(&m, gi, &cfg) {
                    Ok(g) => g,
                    Err(Error::Capacity { requested, available, .. }) => {
                        prop_assert!(requested > available);
                        continue;
                    }
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                };
                let primary = &m.groups[gi];
                prop_assert_eq!(g.entries.len(), primary.len());
                prop_assert_eq!(g.noisy_count(), g.replacement_count);
                let mut sources = HashSet::new();
                for e in &g.entries {
                    let noisy = e.role == Role::Noisy;
                    prop_assert_eq!(noisy, e.source_group_id != g.group_id);
                    prop_assert_eq!(noisy, e.effective_mask.is_zero());
                    if noisy {
                        prop_assert!(sources.insert(e.source_group_id.clone()));
                    } else {
                        prop_assert!(primary.images.contains(&e.image));
                        prop_assert_eq!(&e.effective_mask, &e.image.mask_path);
                    }
                }
            }
        }
    }
}
