//! Synthetic co-saliency datasets: flat-coloured shapes on low-amplitude
//! value-noise backgrounds.
//!
//! Each image shows one instance of its group's category (the co-salient
//! object, whose pixels form the mask) plus a few distractor instances of
//! other categories. Objects never overlap, so masks are exact.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{save_binary_mask, save_manifest, BinaryMask, DatasetManifest, GroupEntry, ImageEntry, MaskRef};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Circle,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Rectangle, Shape::Circle, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Rectangle => "rectangle",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }
}

/// Saturated palette; every colour falls in its own 8x8x8 RGB bin, away from
/// the grey background bins.
pub const PALETTE: [(&str, [u8; 3]); 12] = [
    ("red", [230, 25, 40]),
    ("green", [40, 190, 60]),
    ("yellow", [250, 220, 30]),
    ("blue", [20, 90, 220]),
    ("orange", [250, 140, 20]),
    ("purple", [140, 30, 190]),
    ("cyan", [40, 230, 230]),
    ("magenta", [235, 40, 220]),
    ("lime", [170, 250, 40]),
    ("navy", [20, 20, 120]),
    ("teal", [0, 140, 130]),
    ("brown", [150, 80, 20]),
];

pub const MAX_CATEGORIES: usize = PALETTE.len() * Shape::ALL.len();

/// A `(shape, colour)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Category {
    pub shape: Shape,
    pub color: usize,
}

impl Category {
    /// The `index`-th category. The first twelve all have distinct colours.
    pub fn from_index(index: usize) -> Self {
        let p = PALETTE.len();
        Self {
            color: index % p,
            shape: Shape::ALL[(index + index / p) % Shape::ALL.len()],
        }
    }

    pub fn rgb(&self) -> [u8; 3] {
        PALETTE[self.color].1
    }

    pub fn name(&self) -> String {
        format!("{}_{}", PALETTE[self.color].0, self.shape.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_categories: usize,
    pub groups_per_category: usize,
    pub group_size: usize,
    pub image_size: u32,
    pub min_distractors: usize,
    pub max_distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_categories: 12,
            groups_per_category: 1,
            group_size: 10,
            image_size: 96,
            min_distractors: 0,
            max_distractors: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_categories == 0 || self.num_categories > MAX_CATEGORIES {
            return Err(Error::Config(format!(
                "num_categories must be in 1..={MAX_CATEGORIES}, got {}",
                self.num_categories
            )));
        }
        if self.groups_per_category == 0 || self.group_size == 0 {
            return Err(Error::Config("groups_per_category and group_size must be positive".into()));
        }
        if self.image_size < 32 {
            return Err(Error::Config(format!("image_size must be at least 32, got {}", self.image_size)));
        }
        if self.min_distractors > self.max_distractors {
            return Err(Error::Config("min_distractors exceeds max_distractors".into()));
        }
        if self.max_distractors >= self.num_categories {
            return Err(Error::Config(format!(
                "{} distractors need at least {} categories",
                self.max_distractors,
                self.max_distractors + 1
            )));
        }
        Ok(())
    }
}

/// One rendered object and its exact pixel set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub category: Category,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    /// The first instance is the co-salient object.
    pub instances: Vec<Instance>,
}

impl Scene {
    pub fn tags(&self) -> std::collections::BTreeSet<String> {
        self.instances.iter().map(|i| i.category.name()).collect()
    }
}

const PLACEMENT_RETRIES: usize = 500;
const GAP: i64 = 2;

fn value_noise<R: Rng + ?Sized>(size: u32, rng: &mut R) -> Vec<f64> {
    let cell = 16u32;
    let lattice = size / cell + 2;
    let knots: Vec<f64> = (0..lattice * lattice).map(|_| rng.random()).collect();
    let mut out = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let (gx, gy) = (x / cell, y / cell);
            let (fx, fy) = (f64::from(x % cell) / f64::from(cell), f64::from(y % cell) / f64::from(cell));
            let k = |i: u32, j: u32| knots[((gy + j) * lattice + gx + i) as usize];
            let top = k(0, 0) * (1.0 - fx) + k(1, 0) * fx;
            let bottom = k(0, 1) * (1.0 - fx) + k(1, 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

fn inside(shape: Shape, w: i64, h: i64, dx: i64, dy: i64) -> bool {
    let px = dx as f64 + 0.5;
    let py = dy as f64 + 0.5;
    let (w, h) = (w as f64, h as f64);
    match shape {
        Shape::Rectangle => true,
        Shape::Circle => {
            let (rx, ry) = (w / 2.0, h / 2.0);
            ((px - rx) / rx).powi(2) + ((py - ry) / ry).powi(2) <= 1.0
        }
        Shape::Triangle => {
            // apex at top centre, base along the bottom edge
            let half = (w / 2.0) * (py / h);
            (px - w / 2.0).abs() <= half
        }
    }
}

/// Renders `categories` (first = co-salient) with the given sizes as a
/// fraction of the image side.
pub fn render_scene<R: Rng + ?Sized>(
    image_size: u32,
    objects: &[(Category, f64)],
    rng: &mut R,
) -> Result<Scene> {
    let s = i64::from(image_size);
    let noise = value_noise(image_size, rng);
    let mut image = RgbImage::from_fn(image_size, image_size, |x, y| {
        let v = 128.0 + 24.0 * (noise[(y * image_size + x) as usize] - 0.5);
        let v = v.round() as u8;
        Rgb([v, v, v])
    });

    let mut boxes: Vec<(i64, i64, i64, i64)> = Vec::new();
    let mut instances = Vec::with_capacity(objects.len());
    for &(category, frac) in objects {
        let side = ((frac * s as f64).round() as i64).clamp(6, s - 2 * GAP);
        let (w, h) = match category.shape {
            Shape::Rectangle => {
                let aspect = rng.random_range(0.7..1.3);
                (side, ((side as f64 * aspect).round() as i64).clamp(6, s - 2 * GAP))
            }
            _ => (side, side),
        };
        let placed = (0..PLACEMENT_RETRIES).find_map(|_| {
            let x0 = rng.random_range(GAP..=s - GAP - w);
            let y0 = rng.random_range(GAP..=s - GAP - h);
            let clear = boxes.iter().all(|&(bx, by, bw, bh)| {
                x0 + w + GAP <= bx || bx + bw + GAP <= x0 || y0 + h + GAP <= by || by + bh + GAP <= y0
            });
            clear.then_some((x0, y0))
        });
        let (x0, y0) = placed.ok_or_else(|| {
            Error::Infeasible(format!(
                "could not place {} ({w}x{h}) in a {image_size}px image after {PLACEMENT_RETRIES} tries",
                category.name()
            ))
        })?;
        boxes.push((x0, y0, w, h));

        let rgb = Rgb(category.rgb());
        let mask = BinaryMask::from_fn(image_size, image_size, |x, y| {
            let (dx, dy) = (i64::from(x) - x0, i64::from(y) - y0);
            (0..w).contains(&dx) && (0..h).contains(&dy) && inside(category.shape, w, h, dx, dy)
        });
        for (i, &on) in mask.values().iter().enumerate() {
            if on {
                image.put_pixel(i as u32 % image_size, i as u32 / image_size, rgb);
            }
        }
        instances.push(Instance { category, mask });
    }
    Ok(Scene { image, instances })
}

/// Renders one dataset image: the group category plus a random number of
/// distractors from other categories.
pub fn render_group_image(config: &SynthConfig, category_index: usize, group_index: usize, image_index: usize) -> Result<Scene> {
    let mut rng = derive_rng("synth", config.seed, &[group_index as u64, image_index as u64]);
    let n_distractors = rng.random_range(config.min_distractors..=config.max_distractors);
    let others: Vec<usize> = (0..config.num_categories).filter(|&c| c != category_index).collect();
    let mut objects = vec![(Category::from_index(category_index), rng.random_range(0.30..0.42))];
    for i in index::sample(&mut rng, others.len(), n_distractors) {
        objects.push((Category::from_index(others[i]), rng.random_range(0.10..0.15)));
    }
    render_scene(config.image_size, &objects, &mut rng)
}

/// Renders the whole dataset under `out_dir` (`images/`, `masks/`,
/// `manifest.json`) and returns the saved manifest.
pub fn generate_synthetic_dataset(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let jobs: Vec<(usize, usize, usize, String)> = (0..config.num_categories)
        .flat_map(|c| {
            (0..config.groups_per_category).map(move |k| {
                let name = Category::from_index(c).name();
                let gid = if config.groups_per_category == 1 { name } else { format!("{name}_{k}") };
                (c, c * config.groups_per_category + k, k, gid)
            })
        })
        .flat_map(|(c, gi, _, gid)| (0..config.group_size).map(move |j| (c, gi, j, gid.clone())))
        .collect();

    let entries: Vec<ImageEntry> = jobs
        .par_iter()
        .map(|(c, gi, j, gid)| {
            let scene = render_group_image(config, *c, *gi, *j)?;
            let image_id = format!("img{j:03}");
            let image_path = Path::new("images").join(gid).join(format!("{image_id}.png"));
            let mask_path = Path::new("masks").join(gid).join(format!("{image_id}.png"));
            let abs = out_dir.join(&image_path);
            if let Some(parent) = abs.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            scene.image.save_with_format(&abs, image::ImageFormat::Png).map_err(|e| Error::Image {
                path: abs.clone(),
                message: e.to_string(),
            })?;
            save_binary_mask(&scene.instances[0].mask, out_dir.join(&mask_path))?;
            Ok(ImageEntry {
                image_id,
                image_path,
                mask_path: MaskRef::File(mask_path),
                width: config.image_size,
                height: config.image_size,
                tags: scene.tags(),
            })
        })
        .collect::<Result<_>>()?;

    let mut groups: Vec<GroupEntry> = Vec::new();
    for ((c, _, _, gid), entry) in jobs.iter().zip(entries) {
        match groups.last_mut() {
            Some(g) if &g.group_id == gid => g.images.push(entry),
            _ => groups.push(GroupEntry {
                group_id: gid.clone(),
                category: Category::from_index(*c).name(),
                images: vec![entry],
            }),
        }
    }
    let mut manifest = DatasetManifest::new(".", groups);
    manifest.base_dir = out_dir.to_path_buf();
    save_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn categories_are_distinct_pairs() {
        let all: HashSet<(usize, &str)> = (0..MAX_CATEGORIES)
            .map(|i| {
                let c = Category::from_index(i);
                (c.color, c.shape.name())
            })
            .collect();
        assert_eq!(all.len(), MAX_CATEGORIES);
        let first: HashSet<usize> = (0..PALETTE.len()).map(|i| Category::from_index(i).color).collect();
        assert_eq!(first.len(), PALETTE.len());
    }

    #[test]
    fn palette_colours_have_private_bins() {
        let bin = |c: [u8; 3]| (c[0] >> 5, c[1] >> 5, c[2] >> 5);
        let bins: HashSet<_> = PALETTE.iter().map(|(_, c)| bin(*c)).collect();
        assert_eq!(bins.len(), PALETTE.len());
        for (name, c) in PALETTE {
            let (r, g, b) = bin(c);
            let greyish = [r, g, b].iter().all(|v| (3..=4).contains(v));
            assert!(!greyish, "{name} shares a bin with the background");
        }
    }

    #[test]
    fn masks_match_rendered_pixels() {
        let cfg = SynthConfig { max_distractors: 2, ..Default::default() };
        for j in 0..5 {
            let scene = render_group_image(&cfg, 3, 3, j).unwrap();
            let rgb = Category::from_index(3).rgb();
            for inst in &scene.instances {
                assert!(inst.mask.count_ones() > 0);
            }
            let main = &scene.instances[0].mask;
            for (i, p) in scene.image.pixels().enumerate() {
                assert_eq!(main.values()[i], p.0 == rgb, "pixel {i}");
            }
            assert!(scene.tags().contains(&Category::from_index(3).name()));
            assert_eq!(scene.tags().len(), scene.instances.len());
        }
    }

    #[test]
    fn infeasible_placement_is_reported() {
        let objects: Vec<_> = (0..12).map(|i| (Category::from_index(i), 0.45)).collect();
        let err = render_scene(64, &objects, &mut derive_rng("t", 0, &[])).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn config_limits() {
        assert!(SynthConfig { num_categories: 37, ..Default::default() }.validate().is_err());
        assert!(SynthConfig { num_categories: 2, max_distractors: 2, ..Default::default() }.validate().is_err());
    }
}
