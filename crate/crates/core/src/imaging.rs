//! Raster types, image I/O and the linear-ramp preprocessing step.
//!
//! Pixels are stored row-major as `f64` so that the sub-quantum ramp added by
//! [`apply_linear_ramp`] survives. All coordinates outside the ramp formula
//! are 0-based `(row, col)`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader};

use crate::error::{Error, Result};

/// BT.601 luma weights for (R, G, B).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Largest admissible total ramp span, as a fraction of 8-bit full scale.
pub const MAX_RAMP_FRACTION: f64 = 0.05;

/// A grayscale raster with real-valued intensities in 8-bit units.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    id: String,
    nr: usize,
    nc: usize,
    pixels: Vec<f64>,
}

impl IntensityImage {
    pub fn new(id: impl Into<String>, nr: usize, nc: usize, pixels: Vec<f64>) -> Result<Self> {
        if nr == 0 || nc == 0 {
            return Err(Error::config(format!("image dimensions must be positive, got {nr}x{nc}")));
        }
        if pixels.len() != nr * nc {
            return Err(Error::Contract(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                nr * nc
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("pixel {i} is not finite")));
        }
        Ok(Self {
            id: id.into(),
            nr,
            nc,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        id: impl Into<String>,
        nr: usize,
        nc: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(nr * nc);
        for r in 0..nr {
            for c in 0..nc {
                pixels.push(f(r, c));
            }
        }
        Self::new(id, nr, nc, pixels)
    }

    pub fn from_gray8(id: impl Into<String>, nr: usize, nc: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(id, nr, nc, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.nc + col]
    }

    /// Rounds and saturates to 8-bit gray.
    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.pixels.iter().map(|&v| quantize(v)).collect();
        GrayImage::from_raw(self.nc as u32, self.nr as u32, bytes).expect("buffer matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_gray_png(&self.to_gray8(), path.as_ref())
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// BT.601 luma of one 8-bit RGB pixel. Gray pixels (r = g = b) map to
/// themselves exactly.
pub fn rgb_to_gray(r: u8, g: u8, b: u8) -> f64 {
    if r == g && g == b {
        return f64::from(r);
    }
    LUMA_WEIGHTS[0] * f64::from(r) + LUMA_WEIGHTS[1] * f64::from(g) + LUMA_WEIGHTS[2] * f64::from(b)
}

/// Loads a PNG, JPEG or binary PGM file as a grayscale [`IntensityImage`].
///
/// The image id is the file name.
pub fn load_image(path: impl AsRef<Path>) -> Result<IntensityImage> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let fmt_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(io_err)?
        .with_guessed_format()
        .map_err(io_err)?;
    if reader.format().is_none() {
        return Err(fmt_err("unrecognized image format".into()));
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => io_err(source),
        other => fmt_err(other.to_string()),
    })?;
    let id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    from_dynamic(id, &decoded).map_err(|e| match e {
        Error::Contract(reason) | Error::Config(reason) => fmt_err(reason),
        other => other,
    })
}

/// Converts a decoded image to grayscale intensities.
pub fn from_dynamic(id: impl Into<String>, img: &DynamicImage) -> Result<IntensityImage> {
    let (nc, nr) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| f64::from(v)).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(rgb) => rgb.pixels().map(|p| rgb_to_gray(p[0], p[1], p[2])).collect(),
        DynamicImage::ImageRgba8(rgba) => rgba.pixels().map(|p| rgb_to_gray(p[0], p[1], p[2])).collect(),
        other => {
            return Err(Error::Contract(format!(
                "only 8-bit images are supported, got {:?}",
                other.color()
            )))
        }
    };
    IntensityImage::new(id, nr, nc, pixels)
}

/// An image with the linear background ramp applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RampedImage {
    source_id: String,
    nr: usize,
    nc: usize,
    alpha: f64,
    pixels: Vec<f64>,
}

impl RampedImage {
    /// Wraps an image without adding any ramp. Window extrema of flat
    /// regions are then decided purely by scan order.
    pub fn unramped(img: &IntensityImage) -> Self {
        Self {
            source_id: img.id.clone(),
            nr: img.nr,
            nc: img.nc,
            alpha: 0.0,
            pixels: img.pixels.clone(),
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.nc + col]
    }

    /// Multiplies every intensity (ramp included) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            source_id: self.source_id.clone(),
            nr: self.nr,
            nc: self.nc,
            alpha: self.alpha * k,
            pixels: self.pixels.iter().map(|v| v * k).collect(),
        }
    }
}

/// The ramp coefficient used when none is configured: the whole ramp spans
/// `1e-6 * 255` intensity units regardless of image size.
pub fn default_alpha(nr: usize, nc: usize) -> f64 {
    1e-6 * 255.0 / (nr as f64 * nc as f64)
}

/// Checks `alpha > 0` and that the full ramp stays below 5% of full scale.
pub fn validate_alpha(alpha: f64, nr: usize, nc: usize) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    let span = alpha * nr as f64 * nc as f64;
    if span > MAX_RAMP_FRACTION * 255.0 {
        return Err(Error::config(format!(
            "alpha {alpha} too large for a {nr}x{nc} image: ramp span {span:.4} exceeds {}",
            MAX_RAMP_FRACTION * 255.0
        )));
    }
    Ok(())
}

/// Adds `((i-1)*nc + j) * alpha` to every pixel, with 1-based `(i, j)`.
pub fn apply_linear_ramp(img: &IntensityImage, alpha: f64) -> Result<RampedImage> {
    validate_alpha(alpha, img.nr, img.nc)?;
    let pixels = img
        .pixels
        .iter()
        .enumerate()
        .map(|(k, v)| v + (k + 1) as f64 * alpha)
        .collect();
    Ok(RampedImage {
        source_id: img.id.clone(),
        nr: img.nr,
        nc: img.nc,
        alpha,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Rgb};

    #[test]
    fn pgm_decodes_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        std::fs::write(&path, bytes).unwrap();

        let img = load_image(&path).unwrap();
        assert_eq!((img.nr(), img.nc()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 255.0, 128.0, 64.0]);
        assert_eq!(img.id(), "tiny.pgm");
    }

    #[test]
    fn pure_red_uses_bt601() {
        assert!((rgb_to_gray(255, 0, 0) - 76.245).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        ImageBuffer::from_pixel(1, 1, Rgb([255u8, 0, 0])).save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(0, 0) - 76.245).abs() < 1e-12);
    }

    #[test]
    fn gray_conversion_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let src = IntensityImage::from_fn("g", 5, 7, |r, c| ((r * 37 + c * 11) % 256) as f64).unwrap();
        src.save_png(&path).unwrap();
        let once = load_image(&path).unwrap();
        assert_eq!(once.pixels(), src.pixels());

        let rgb = ImageBuffer::from_fn(7, 5, |x, y| {
            let v = src.get(y as usize, x as usize) as u8;
            Rgb([v, v, v])
        });
        let as_rgb = from_dynamic("rgb", &DynamicImage::ImageRgb8(rgb)).unwrap();
        assert_eq!(as_rgb.pixels(), src.pixels());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn garbage_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"this is not an image at all").unwrap();
        assert!(matches!(load_image(&path).unwrap_err(), Error::Format { .. }));
    }

    #[test]
    fn ramp_matches_hand_values() {
        let img = IntensityImage::new("c", 2, 2, vec![10.0; 4]).unwrap();
        let ramped = apply_linear_ramp(&img, 0.1).unwrap();
        let expected = [10.1, 10.2, 10.3, 10.4];
        for (got, want) in ramped.pixels().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(ramped.alpha(), 0.1);
        assert_eq!(ramped.source_id(), "c");
    }

    #[test]
    fn ramp_residual_is_index_times_alpha() {
        let img = IntensityImage::from_fn("r", 9, 13, |r, c| ((r * 31 + c * 17) % 251) as f64).unwrap();
        let alpha = 1e-4;
        let ramped = apply_linear_ramp(&img, alpha).unwrap();
        for r in 0..9 {
            for c in 0..13 {
                // 1-based (i, j) as in the ramp definition
                let (i, j) = (r + 1, c + 1);
                let expect = ((i - 1) * 13 + j) as f64 * alpha;
                let resid = ramped.get(r, c) - img.get(r, c);
                assert!((resid - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_ramps_strictly_increasing() {
        let img = IntensityImage::new("k", 64, 64, vec![200.0; 64 * 64]).unwrap();
        let ramped = apply_linear_ramp(&img, 1e-4).unwrap();
        assert!(ramped.pixels().windows(2).all(|w| w[1] > w[0]));
        let (imax, _) = ramped
            .pixels()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(imax, 64 * 64 - 1);
    }

    #[test]
    fn default_alpha_survives_in_f64() {
        let (nr, nc) = (3072, 4096);
        let img = IntensityImage::new("big", nr, nc, vec![255.0; nr * nc]).unwrap();
        let ramped = apply_linear_ramp(&img, default_alpha(nr, nc)).unwrap();
        assert!(ramped.pixels().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bad_alpha_rejected() {
        let img = IntensityImage::new("x", 10, 10, vec![0.0; 100]).unwrap();
        for alpha in [0.0, -1e-3, f64::NAN, 1.0] {
            assert!(matches!(apply_linear_ramp(&img, alpha), Err(Error::Config(_))), "{alpha}");
        }
        // 0.05 * 255 / 100 is the largest admissible value
        assert!(apply_linear_ramp(&img, 0.1275).is_ok());
        assert!(apply_linear_ramp(&img, 0.1276).is_err());
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(IntensityImage::new("z", 0, 3, vec![]).is_err());
        assert!(IntensityImage::new("z", 2, 2, vec![0.0; 3]).is_err());
        assert!(IntensityImage::new("z", 1, 1, vec![f64::INFINITY]).is_err());
    }
}
