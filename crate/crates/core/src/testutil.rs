//! Manifest fixtures for unit tests.

use std::collections::BTreeSet;

use crate::model::{DatasetManifest, GroupEntry, ImageEntry, MaskRef};

fn image(id: String, tags: BTreeSet<String>) -> ImageEntry {
    ImageEntry {
        image_path: format!("images/{id}.png").into(),
        mask_path: MaskRef::File(format!("masks/{id}.png").into()),
        image_id: id,
        width: 8,
        height: 8,
        tags,
    }
}

/// `k` groups `g0..`, category `c<i>`, `n` images each tagged with their category.
pub fn toy_manifest(k: usize, n: usize) -> DatasetManifest {
    let groups = (0..k)
        .map(|gi| GroupEntry {
            group_id: format!("g{gi}"),
            category: format!("c{gi}"),
            images: (0..n)
                .map(|j| image(format!("g{gi}_{j}"), [format!("c{gi}")].into()))
                .collect(),
        })
        .collect();
    DatasetManifest::new(".", groups)
}

/// One group holding one image per row of tags.
pub fn single_group_manifest(rows: &[&[&str]]) -> DatasetManifest {
    let images = rows
        .iter()
        .enumerate()
        .map(|(j, tags)| image(format!("i{j}"), tags.iter().map(|t| t.to_string()).collect()))
        .collect();
    DatasetManifest::new(
        ".",
        vec![GroupEntry {
            group_id: "g".into(),
            category: "none".into(),
            images,
        }],
    )
}

/// One single-image source group per row; the first tag is the category.
pub fn tagged_sources(rows: &[&[&str]]) -> DatasetManifest {
    let groups = rows
        .iter()
        .enumerate()
        .map(|(gi, tags)| GroupEntry {
            group_id: format!("g{gi}"),
            category: tags[0].to_string(),
            images: vec![image(format!("g{gi}_0"), tags.iter().map(|t| t.to_string()).collect())],
        })
        .collect();
    DatasetManifest::new(".", groups)
}
