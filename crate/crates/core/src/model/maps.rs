//! Dense per-pixel maps and their 8-bit grayscale raster interchange format.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader};

use crate::error::{Error, Result};

/// Per-pixel probability grid, row-major, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::validation(
                "probability map",
                format!("value {v} at index {i} is outside [0, 1]"),
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Builds a map by evaluating `f(x, y)` and clamping the result into `[0, 1]`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn to_gray_image(&self) -> GrayImage {
        quantize(self.width, self.height, &self.values, 1.0)
    }
}

/// Per-pixel `{0, 1}` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, values: Vec<bool>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// True when no pixel is foreground (the complete-negative ground truth).
    pub fn is_all_zero(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    pub fn to_prob_map(&self) -> ProbMap {
        ProbMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f64::from(u8::from(v))).collect(),
        }
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let data = self.values.iter().map(|&v| if v { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width, self.height, data).expect("buffer sized from dims")
    }
}

fn check_shape(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::validation(
            "map",
            format!("dimensions must be positive, got {width}x{height}"),
        ));
    }
    if len != width as usize * height as usize {
        return Err(Error::validation(
            "map",
            format!("{len} values do not fill a {width}x{height} grid"),
        ));
    }
    Ok(())
}

/// Quantizes `values / full_scale` to 8 bits with `round(v * 255)`, saturating at 255.
pub(crate) fn quantize(width: u32, height: u32, values: &[f64], full_scale: f64) -> GrayImage {
    let data = values
        .iter()
        .map(|&v| ((v / full_scale).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(width, height, data).expect("buffer sized from dims")
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let image_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.decode().map_err(|e| image_err(e.to_string()))? {
        DynamicImage::ImageLuma8(img) => Ok(img),
        other => Err(image_err(format!(
            "expected 8-bit single-channel grayscale, found {:?}",
            other.color()
        ))),
    }
}

/// Reads a grayscale raster as probabilities, `value = pixel / 255`.
pub fn load_prob_map(path: impl AsRef<Path>) -> Result<ProbMap> {
    let img = read_gray(path.as_ref())?;
    let (width, height) = img.dimensions();
    let values = img.into_raw().into_iter().map(|p| f64::from(p) / 255.0).collect();
    ProbMap::new(width, height, values)
}

/// Reads a grayscale raster that must contain only the pixel values 0 and 255.
pub fn load_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = read_gray(path)?;
    let (width, height) = img.dimensions();
    let mut values = Vec::with_capacity(img.len());
    for (i, &p) in img.as_raw().iter().enumerate() {
        match p {
            0 => values.push(false),
            255 => values.push(true),
            other => {
                return Err(Error::Image {
                    path: path.to_path_buf(),
                    message: format!(
                        "non-binary pixel value {other} at ({}, {})",
                        i as u32 % width,
                        i as u32 / width
                    ),
                })
            }
        }
    }
    BinaryMask::new(width, height, values)
}

pub(crate) fn write_gray(img: &GrayImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Writes a probability map as an 8-bit PNG, `pixel = round(p * 255)`.
pub fn save_prob_map(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    write_gray(&map.to_gray_image(), path.as_ref())
}

pub fn save_binary_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_gray(&mask.to_gray_image(), path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_values_scale_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let img = GrayImage::from_raw(3, 1, vec![0, 128, 255]).unwrap();
        write_gray(&img, &path).unwrap();

        let map = load_prob_map(&path).unwrap();
        assert_eq!(map.values()[0], 0.0);
        assert_eq!(map.values()[1], 128.0 / 255.0);
        assert!((map.values()[1] - 0.50196).abs() < 1e-5);
        assert_eq!(map.values()[2], 1.0);
    }

    #[test]
    fn non_binary_mask_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_gray(&GrayImage::from_raw(2, 1, vec![255, 7]).unwrap(), &path).unwrap();
        let err = load_binary_mask(&path).unwrap_err();
        assert!(err.to_string().contains("non-binary pixel value 7"), "{err}");
        // the same raster is still a valid probability map
        assert!(load_prob_map(&path).is_ok());
    }

    #[test]
    fn multi_channel_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&path).unwrap();
        let err = load_prob_map(&path).unwrap_err();
        assert!(err.to_string().contains("single-channel"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_prob_map("/nonexistent/x.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn writes_quantize_by_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.png");
        let map = ProbMap::new(2, 1, vec![0.5, 0.25]).unwrap();
        save_prob_map(&map, &path).unwrap();
        let back = load_prob_map(&path).unwrap();
        assert_eq!(back.values(), &[128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn binary_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        let mask = BinaryMask::from_fn(4, 3, |x, y| x == y);
        save_binary_mask(&mask, &path).unwrap();
        assert_eq!(load_binary_mask(&path).unwrap(), mask);
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(ProbMap::new(1, 1, vec![1.5]).is_err());
        assert!(ProbMap::new(1, 1, vec![f64::NAN]).is_err());
        assert!(ProbMap::new(2, 2, vec![0.0; 3]).is_err());
    }
}
