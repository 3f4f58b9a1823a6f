//! SIFT-style orientation-histogram descriptors over scale-adaptive regions.
//!
//! The region side is `w = beta * L * d` with `beta = beta0 * (L / L_max)^(-1/2)`,
//! clamped so that `w <= L` and `w` is a multiple of `d`. The region is cut
//! into `d x d` subregions of `w / d` pixels; every pixel's central-difference
//! gradient is hard-binned into one of 8 directions of its subregion, weighted
//! by magnitude. With orientation normalization on, the sampling grid and the
//! gradient angles are both expressed relative to the feature's dominant
//! orientation.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{FeaturePoint, ScaleSet};
use crate::error::{Error, Result};
use crate::imaging::RampedImage;

pub const ORIENTATION_BINS: usize = 8;
pub const DOMINANT_BINS: usize = 36;
/// Per-element cap applied between the two normalizations.
pub const CLAMP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub beta0: f64,
    pub d: usize,
    pub l_max: usize,
    pub orientation_normalize: bool,
}

impl DescriptorConfig {
    /// Validates `beta0` against the region bound for `scales`.
    pub fn new(beta0: f64, d: usize, scales: &ScaleSet, orientation_normalize: bool) -> Result<Self> {
        let cfg = Self {
            beta0,
            d,
            l_max: scales.l_max(),
            orientation_normalize,
        };
        cfg.validate(scales)?;
        Ok(cfg)
    }

    /// Largest `beta0` for which `w <= L` holds at every scale:
    /// `(1/d) * (L_min / L_max)^(1/2)`.
    pub fn max_beta0(d: usize, scales: &ScaleSet) -> f64 {
        (scales.l_min() as f64 / scales.l_max() as f64).sqrt() / d as f64
    }

    pub fn validate(&self, scales: &ScaleSet) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("descriptor grid d must be at least 1"));
        }
        if !(self.beta0 > 0.0) || !self.beta0.is_finite() {
            return Err(Error::config(format!("beta0 must be positive, got {}", self.beta0)));
        }
        if self.l_max != scales.l_max() {
            return Err(Error::config(format!(
                "descriptor L_max {} does not match the scale set maximum {}",
                self.l_max,
                scales.l_max()
            )));
        }
        let bound = Self::max_beta0(self.d, scales);
        if self.beta0 > bound * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "beta0 {} exceeds {bound:.6} = (1/d)(L_min/L_max)^(1/2) for scales {:?}",
                self.beta0,
                scales.sizes()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.d * self.d * ORIENTATION_BINS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSample {
    pub magnitude: f64,
    /// Radians in `[0, 2*pi)`, measured from the row axis towards the column axis.
    pub orientation: f64,
    /// Row difference.
    pub a: f64,
    /// Column difference.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    pub values: Vec<f64>,
    pub feature: FeaturePoint,
    pub region_size: usize,
    pub subregion_size: usize,
    /// Dominant orientation the histogram is relative to (0 when disabled).
    pub orientation: f64,
    /// `[row, col]` the sampling region is centered on; differs from the
    /// feature position only when the region was translated off a border.
    pub center: [usize; 2],
}

/// Region side `w` for a feature detected at scale `l`.
pub fn region_size(l: usize, cfg: &DescriptorConfig) -> usize {
    let d = cfg.d.max(1);
    let beta = cfg.beta0 * (l as f64 / cfg.l_max as f64).powf(-0.5);
    // f64::round is half-away-from-zero
    let w = (beta * l as f64 * d as f64).round() as usize;
    let w = w.min(l);
    (w / d * d).max(d)
}

#[inline]
fn gradient_unchecked(img: &RampedImage, row: usize, col: usize) -> GradientSample {
    let a = img.get(row + 1, col) - img.get(row - 1, col);
    let b = img.get(row, col + 1) - img.get(row, col - 1);
    let magnitude = (a * a + b * b).sqrt();
    let orientation = if magnitude == 0.0 { 0.0 } else { wrap_once(b.atan2(a)) };
    GradientSample {
        magnitude,
        orientation,
        a,
        b,
    }
}

/// Central-difference gradient at an interior pixel.
pub fn gradient_at(img: &RampedImage, row: usize, col: usize) -> Result<GradientSample> {
    if row < 1 || col < 1 || row + 2 > img.nr() || col + 2 > img.nc() {
        return Err(Error::Boundary {
            row,
            col,
            nr: img.nr(),
            nc: img.nc(),
        });
    }
    Ok(gradient_unchecked(img, row, col))
}

/// Maps any angle into `[0, 2*pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// [`wrap_angle`] for inputs already in `(-2*pi, 2*pi)`.
#[inline]
fn wrap_once(t: f64) -> f64 {
    let t = if t < 0.0 { t + TAU } else { t };
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Clamps a region center so that `[c - lo, c + hi]` stays within the
/// gradient interior `[1, n - 2]`. Falls back to the middle when the image is
/// too small.
fn clamp_center(c: usize, lo: usize, hi: usize, n: usize) -> usize {
    let min = 1 + lo;
    if n < 2 + hi + min {
        return n / 2;
    }
    let max = n - 2 - hi;
    c.clamp(min, max)
}

fn in_interior(img: &RampedImage, r: isize, c: isize) -> bool {
    r >= 1 && c >= 1 && r + 2 <= img.nr() as isize && c + 2 <= img.nc() as isize
}

/// Gradient magnitudes and orientations over a rectangle; pixels outside the
/// gradient interior are stored with zero magnitude.
struct GradientPatch {
    r0: isize,
    c0: isize,
    rows: usize,
    cols: usize,
    samples: Vec<(f64, f64)>,
}

impl GradientPatch {
    fn new(img: &RampedImage, r0: isize, c0: isize, rows: usize, cols: usize) -> Self {
        let mut samples = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows as isize {
            for c in c0..c0 + cols as isize {
                if in_interior(img, r, c) {
                    let g = gradient_unchecked(img, r as usize, c as usize);
                    samples.push((g.magnitude, g.orientation));
                } else {
                    samples.push((0.0, 0.0));
                }
            }
        }
        Self {
            r0,
            c0,
            rows,
            cols,
            samples,
        }
    }

    #[inline]
    fn get(&self, r: isize, c: isize) -> Option<(f64, f64)> {
        let (i, j) = (r - self.r0, c - self.c0);
        if i < 0 || j < 0 || i as usize >= self.rows || j as usize >= self.cols {
            return None;
        }
        Some(self.samples[i as usize * self.cols + j as usize])
    }
}

/// The axis-aligned `w x w` region used for the dominant orientation.
fn orientation_patch(img: &RampedImage, fp: &FeaturePoint, w: usize) -> GradientPatch {
    let half = w / 2;
    let hi = w.saturating_sub(half + 1);
    let cr = clamp_center(fp.row, half, hi, img.nr()) as isize;
    let cc = clamp_center(fp.col, half, hi, img.nc()) as isize;
    let n = half + hi + 1;
    GradientPatch::new(img, cr - half as isize, cc - half as isize, n, n)
}

fn peak_orientation(patch: &GradientPatch) -> f64 {
    let width = TAU / DOMINANT_BINS as f64;
    let mut hist = [0.0f64; DOMINANT_BINS];
    for &(m, o) in &patch.samples {
        if m == 0.0 {
            continue;
        }
        let k = (o / width).round() as usize % DOMINANT_BINS;
        hist[k] += m;
    }
    let mut best = 0;
    for k in 1..DOMINANT_BINS {
        if hist[k] > hist[best] {
            best = k;
        }
    }
    best as f64 * width
}

/// Peak of a 36-bin, magnitude-weighted histogram of gradient orientations
/// over the axis-aligned `w x w` region. Bin `k` is centered on `k * 10` degrees
/// and the returned angle is that center.
pub fn dominant_orientation(img: &RampedImage, fp: &FeaturePoint, w: usize, cfg: &DescriptorConfig) -> f64 {
    if !cfg.orientation_normalize {
        return 0.0;
    }
    peak_orientation(&orientation_patch(img, fp, w))
}

/// `(cos, sin)` with values within 1e-12 of 0 or 1 snapped, so that
/// quarter-turn frames sample the exact same pixel grid.
pub(crate) fn frame_rotation(phi: f64) -> (f64, f64) {
    let snap = |x: f64| {
        if x.abs() < 1e-12 {
            0.0
        } else if (x.abs() - 1.0).abs() < 1e-12 {
            x.signum()
        } else {
            x
        }
    };
    (snap(phi.cos()), snap(phi.sin()))
}

/// Builds the descriptor of one feature.
pub fn compute_descriptor(img: &RampedImage, fp: &FeaturePoint, cfg: &DescriptorConfig) -> DescriptorVector {
    let d = cfg.d.max(1);
    let w = region_size(fp.scale, cfg);
    let ws = w / d;
    let patch = cfg.orientation_normalize.then(|| orientation_patch(img, fp, w));
    let phi = patch.as_ref().map_or(0.0, peak_orientation);
    let (cos, sin) = frame_rotation(phi);

    let half = (w / 2) as isize;
    // Pixel offsets scanned around the center: the exact square when
    // axis-aligned, a square enclosing every rotation otherwise.
    let (lo, hi) = if cfg.orientation_normalize {
        let r = (w as f64 * std::f64::consts::FRAC_1_SQRT_2).ceil() as isize;
        (r, r)
    } else {
        (half, w as isize - half - 1)
    };
    let cr = clamp_center(fp.row, lo as usize, hi as usize, img.nr()) as isize;
    let cc = clamp_center(fp.col, lo as usize, hi as usize, img.nc()) as isize;

    let bin_width = TAU / ORIENTATION_BINS as f64;
    let mut hist = vec![0.0f64; cfg.len()];
    for dr in -lo..=hi {
        for dc in -lo..=hi {
            let (dr_f, dc_f) = (dr as f64, dc as f64);
            let u = dr_f * cos + dc_f * sin + half as f64;
            let v = -dr_f * sin + dc_f * cos + half as f64;
            if u < 0.0 || v < 0.0 {
                continue;
            }
            let (i, j) = ((u / ws as f64).floor() as usize, (v / ws as f64).floor() as usize);
            if i >= d || j >= d {
                continue;
            }
            let (r, c) = (cr + dr, cc + dc);
            let (m, o) = match patch.as_ref().and_then(|p| p.get(r, c)) {
                Some(s) => s,
                None if in_interior(img, r, c) => {
                    let g = gradient_unchecked(img, r as usize, c as usize);
                    (g.magnitude, g.orientation)
                }
                None => continue,
            };
            if m == 0.0 {
                continue;
            }
            let rel = wrap_once(o - phi);
            let bin = (rel / bin_width).round() as usize % ORIENTATION_BINS;
            hist[(i * d + j) * ORIENTATION_BINS + bin] += m;
        }
    }
    normalize_descriptor(&mut hist);
    DescriptorVector {
        values: hist,
        feature: *fp,
        region_size: w,
        subregion_size: ws,
        orientation: phi,
        center: [cr as usize, cc as usize],
    }
}

/// L2-normalize, cap every element at [`CLAMP`], renormalize. All-zero input
/// is left untouched.
pub fn normalize_descriptor(v: &mut [f64]) {
    let scale = |v: &mut [f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        norm
    };
    if scale(v) == 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x = x.min(CLAMP));
    scale(v);
}

/// Describes every feature; output order follows `features`.
pub fn describe_features(img: &RampedImage, features: &[FeaturePoint], cfg: &DescriptorConfig) -> Vec<DescriptorVector> {
    features
        .par_iter()
        .map(|fp| compute_descriptor(img, fp, cfg))
        .collect()
}
