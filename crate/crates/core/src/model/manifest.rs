//! Dataset manifests: groups of images with ground-truth masks and category tags.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::maps::{load_binary_mask, BinaryMask};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Mask sentinel meaning "all-zero ground truth of the image's size".
pub const ZERO_SENTINEL: &str = "ZERO";

/// Where an image's ground truth comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MaskRef {
    File(PathBuf),
    /// Complete-negative ground truth: no co-salient object in the image.
    Zero,
}

impl MaskRef {
    pub fn is_zero(&self) -> bool {
        matches!(self, MaskRef::Zero)
    }
}

impl fmt::Display for MaskRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskRef::File(p) => write!(f, "{}", p.display()),
            MaskRef::Zero => f.write_str(ZERO_SENTINEL),
        }
    }
}

impl Serialize for MaskRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MaskRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(if s == ZERO_SENTINEL {
            MaskRef::Zero
        } else {
            MaskRef::File(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_path: MaskRef,
    pub width: u32,
    pub height: u32,
    /// Every salient-object category visible in the image.
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEntry {
    pub group_id: String,
    pub category: String,
    pub images: Vec<ImageEntry>,
}

impl GroupEntry {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// A dataset `D = {G_k}`: an ordered list of image groups under a common root.
///
/// `root` is stored exactly as written; a relative root is resolved against
/// the directory the manifest was loaded from (`base_dir`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub root: PathBuf,
    pub groups: Vec<GroupEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.schema_version == other.schema_version
            && self.root == other.root
            && self.groups == other.groups
    }
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, groups: Vec<GroupEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            root: root.into(),
            groups,
            base_dir: PathBuf::new(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_images(&self) -> usize {
        self.groups.iter().map(GroupEntry::len).sum()
    }

    pub fn group(&self, group_id: &str) -> Option<&GroupEntry> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    /// Absolute (or base-relative) directory that entry paths are relative to.
    pub fn root_dir(&self) -> PathBuf {
        self.base_dir.join(&self.root)
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root_dir().join(relative)
    }

    /// Iterates `(group, image)` pairs in manifest order.
    pub fn images(&self) -> impl Iterator<Item = (&GroupEntry, &ImageEntry)> {
        self.groups
            .iter()
            .flat_map(|g| g.images.iter().map(move |img| (g, img)))
    }

    /// Loads the ground truth of `image`, materializing ZERO as an all-zero mask.
    pub fn load_ground_truth(&self, image: &ImageEntry) -> Result<BinaryMask> {
        match &image.mask_path {
            MaskRef::Zero => Ok(BinaryMask::zeros(image.width, image.height)),
            MaskRef::File(rel) => {
                let path = self.resolve(rel);
                let mask = load_binary_mask(&path)?;
                if mask.dims() != (image.width, image.height) {
                    return Err(Error::DimensionMismatch {
                        context: format!("mask {}", path.display()),
                        expected: (image.width, image.height),
                        found: mask.dims(),
                    });
                }
                Ok(mask)
            }
        }
    }

    /// Checks the invariants that do not need the filesystem.
    pub fn validate_structure(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "manifest",
                format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let mut group_ids = HashSet::new();
        for group in &self.groups {
            let gid = &group.group_id;
            if gid.is_empty() {
                return Err(Error::validation("group", "empty group_id"));
            }
            if !group_ids.insert(gid.as_str()) {
                return Err(Error::validation(
                    format!("group '{gid}'"),
                    "duplicate group_id",
                ));
            }
            if group.images.is_empty() {
                return Err(Error::validation(format!("group '{gid}'"), "has no images"));
            }
            let mut image_ids = HashSet::new();
            for img in &group.images {
                let entity = format!("image '{}' in group '{gid}'", img.image_id);
                if img.image_id.is_empty() {
                    return Err(Error::validation(entity, "empty image_id"));
                }
                if !image_ids.insert(img.image_id.as_str()) {
                    return Err(Error::validation(entity, "duplicate image_id"));
                }
                if img.width == 0 || img.height == 0 {
                    return Err(Error::validation(entity, "width and height must be positive"));
                }
                check_relative(&entity, &img.image_path)?;
                if let MaskRef::File(mask) = &img.mask_path {
                    check_relative(&entity, mask)?;
                }
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists and has the declared dimensions.
    pub fn validate_files(&self) -> Result<()> {
        for (group, img) in self.images() {
            let entity = format!("image '{}' in group '{}'", img.image_id, group.group_id);
            let mut paths = vec![("image", &img.image_path)];
            if let MaskRef::File(mask) = &img.mask_path {
                paths.push(("mask", mask));
            }
            for (kind, rel) in paths {
                let path = self.resolve(rel);
                let dims = image::image_dimensions(&path).map_err(|e| {
                    Error::validation(&entity, format!("{kind} file {}: {e}", path.display()))
                })?;
                if dims != (img.width, img.height) {
                    return Err(Error::validation(
                        &entity,
                        format!(
                            "{kind} file {} is {}x{}, manifest declares {}x{}",
                            path.display(),
                            dims.0,
                            dims.1,
                            img.width,
                            img.height
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Returns a copy whose `root` is expressed relative to `new_base_dir`,
    /// pointing at the same data directory as before.
    pub fn rebased(&self, new_base_dir: &Path) -> Result<Self> {
        let data_dir = self.root_dir();
        let data_abs = std::path::absolute(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
        let base_abs = std::path::absolute(new_base_dir).map_err(|e| Error::io(new_base_dir, e))?;
        let root = pathdiff::diff_paths(normalize(&data_abs), normalize(&base_abs))
            .unwrap_or(data_abs);
        let root = if root.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            root
        };
        Ok(Self {
            schema_version: self.schema_version,
            root,
            groups: self.groups.clone(),
            base_dir: new_base_dir.to_path_buf(),
        })
    }
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

fn check_relative(entity: &str, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() || path.is_absolute() {
        return Err(Error::validation(
            entity,
            format!("path '{}' must be relative to the manifest root", path.display()),
        ));
    }
    Ok(())
}

/// Parses and fully validates a manifest file, including referenced files.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let manifest = parse_manifest(path.as_ref())?;
    manifest.validate_files()?;
    Ok(manifest)
}

/// Parses a manifest and checks its structural invariants without touching
/// the referenced image files.
pub fn parse_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest.validate_structure()?;
    Ok(manifest)
}

/// Canonical form: pretty JSON, fields in declaration order, trailing newline.
pub fn manifest_to_string(manifest: &DatasetManifest) -> Result<String> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    manifest.validate_structure()?;
    let text = manifest_to_string(manifest)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::maps::save_binary_mask;

    fn entry(id: &str) -> ImageEntry {
        ImageEntry {
            image_id: id.into(),
            image_path: format!("images/{id}.png").into(),
            mask_path: MaskRef::File(format!("masks/{id}.png").into()),
            width: 4,
            height: 3,
            tags: ["cat".to_string()].into(),
        }
    }

    fn write_files(dir: &Path, ids: &[&str]) {
        for id in ids {
            let m = BinaryMask::from_fn(4, 3, |x, _| x < 2);
            save_binary_mask(&m, dir.join(format!("images/{id}.png"))).unwrap();
            save_binary_mask(&m, dir.join(format!("masks/{id}.png"))).unwrap();
        }
    }

    fn minimal() -> DatasetManifest {
        DatasetManifest::new(
            ".",
            vec![GroupEntry {
                group_id: "cats".into(),
                category: "cat".into(),
                images: vec![entry("a")],
            }],
        )
    }

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), &["a"]);
        let path = dir.path().join("manifest.json");
        save_manifest(&minimal(), &path).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.num_groups(), 1);
        assert_eq!(m.groups[0].len(), 1);
        assert_eq!(m, minimal());
    }

    #[test]
    fn duplicate_image_id_names_the_id() {
        let mut m = minimal();
        m.groups[0].images.push(entry("a"));
        let err = m.validate_structure().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("image 'a'") && msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn duplicate_group_id_rejected() {
        let mut m = minimal();
        m.groups.push(m.groups[0].clone());
        assert!(m.validate_structure().unwrap_err().to_string().contains("group 'cats'"));
    }

    #[test]
    fn missing_file_and_wrong_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        save_manifest(&minimal(), &path).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("image 'a'"), "{err}");

        write_files(dir.path(), &["a"]);
        let mut m = minimal();
        m.groups[0].images[0].width = 5;
        save_manifest(&m, &path).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("declares 5x3"), "{err}");
    }

    #[test]
    fn absolute_paths_rejected() {
        let mut m = minimal();
        m.groups[0].images[0].image_path = "/abs/a.png".into();
        assert!(m.validate_structure().is_err());
    }

    #[test]
    fn malformed_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn save_is_canonical_and_round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = minimal();
        m.groups[0].images.push(ImageEntry {
            mask_path: MaskRef::Zero,
            ..entry("b")
        });
        let p1 = dir.path().join("one.json");
        let p2 = dir.path().join("two.json");
        save_manifest(&m, &p1).unwrap();
        save_manifest(&m, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        assert_eq!(b1, std::fs::read(&p2).unwrap());
        assert_eq!(*b1.last().unwrap(), b'\n');

        let loaded = parse_manifest(&p1).unwrap();
        assert_eq!(loaded.groups[0].images[1].mask_path, MaskRef::Zero);
        save_manifest(&loaded, &p2).unwrap();
        assert_eq!(b1, std::fs::read(&p2).unwrap());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = save_manifest(&minimal(), blocker.join("manifest.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn zero_mask_materializes_with_image_dims() {
        let mut m = minimal();
        m.groups[0].images[0].mask_path = MaskRef::Zero;
        let gt = m.load_ground_truth(&m.groups[0].images[0]).unwrap();
        assert_eq!(gt.dims(), (4, 3));
        assert!(gt.is_all_zero());
    }

    #[test]
    fn rebase_points_at_same_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = minimal();
        m.base_dir = dir.path().join("data");
        let out = dir.path().join("runs/build");
        let r = m.rebased(&out).unwrap();
        assert_eq!(r.root, PathBuf::from("../../data"));
        assert_eq!(
            normalize(&r.root_dir()),
            normalize(&dir.path().join("data"))
        );
    }
}
