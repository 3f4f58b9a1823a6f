//! Multiscale local-peak detection.
//!
//! The ramped image is tiled into non-overlapping `L x L` interrogation
//! windows for every scale `L`; each window contributes its maximum and its
//! minimum as feature points. Windows along the bottom and right edges are
//! shrunk to the remaining pixels.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RampedImage;

/// Smallest admissible window side.
pub const MIN_WINDOW: usize = 8;

/// Ordered set of window sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSet {
    sizes: Vec<usize>,
}

impl ScaleSet {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::config("scale set is empty"));
        }
        if let Some(&l) = sizes.iter().find(|&&l| l < MIN_WINDOW) {
            return Err(Error::config(format!("window size {l} is below {MIN_WINDOW}")));
        }
        if sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(format!("window sizes must be strictly increasing: {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    /// Geometric sequence `l_min, 2 l_min, ...` below `l_max`, closed by `l_max`.
    pub fn from_range(l_min: usize, l_max: usize) -> Result<Self> {
        if l_max < l_min {
            return Err(Error::config(format!("window range [{l_min}, {l_max}] is empty")));
        }
        let mut sizes = Vec::new();
        let mut l = l_min;
        while l < l_max {
            sizes.push(l);
            l *= 2;
        }
        sizes.push(l_max);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn l_min(&self) -> usize {
        self.sizes[0]
    }

    pub fn l_max(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    /// Every scale must fit inside the image.
    pub fn validate_for(&self, nr: usize, nc: usize) -> Result<()> {
        let limit = nr.min(nc);
        if self.l_max() > limit {
            return Err(Error::config(format!(
                "window size {} exceeds the smaller image side {limit} ({nr}x{nc})",
                self.l_max()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[serde(rename = "max")]
    Maximum,
    #[serde(rename = "min")]
    Minimum,
}

/// One interrogation window, in 0-based pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub index: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub row: usize,
    pub col: usize,
    pub scale: usize,
    pub polarity: Polarity,
    pub window_index: usize,
    pub value: f64,
}

/// Number of windows a scale produces: `ceil(nr/L) * ceil(nc/L)`.
pub fn window_count(nr: usize, nc: usize, l: usize) -> usize {
    nr.div_ceil(l) * nc.div_ceil(l)
}

/// Row-major tiling of an `nr x nc` image by windows of side `l`.
pub fn partition_windows(nr: usize, nc: usize, l: usize) -> Result<Vec<Window>> {
    if l < MIN_WINDOW {
        return Err(Error::config(format!("window size {l} is below {MIN_WINDOW}")));
    }
    if l > nr.min(nc) {
        return Err(Error::config(format!("window size {l} exceeds image {nr}x{nc}")));
    }
    let mut out = Vec::with_capacity(window_count(nr, nc, l));
    for row0 in (0..nr).step_by(l) {
        for col0 in (0..nc).step_by(l) {
            out.push(Window {
                index: out.len(),
                row0,
                col0,
                rows: l.min(nr - row0),
                cols: l.min(nc - col0),
            });
        }
    }
    Ok(out)
}

/// Maximum and minimum of one window. Ties go to the first pixel in
/// row-major order.
pub fn detect_window_extrema(img: &RampedImage, window: &Window, scale: usize) -> (FeaturePoint, FeaturePoint) {
    debug_assert!(window.row0 + window.rows <= img.nr() && window.col0 + window.cols <= img.nc());
    let nc = img.nc();
    let px = img.pixels();
    let first = window.row0 * nc + window.col0;
    let (mut max_at, mut max_v) = (first, px[first]);
    let (mut min_at, mut min_v) = (first, px[first]);
    for r in window.row0..window.row0 + window.rows {
        let start = r * nc + window.col0;
        for (k, &v) in px[start..start + window.cols].iter().enumerate() {
            if v > max_v {
                max_v = v;
                max_at = start + k;
            }
            if v < min_v {
                min_v = v;
                min_at = start + k;
            }
        }
    }
    let point = |at: usize, value: f64, polarity| FeaturePoint {
        row: at / nc,
        col: at % nc,
        scale,
        polarity,
        window_index: window.index,
        value,
    };
    (point(max_at, max_v, Polarity::Maximum), point(min_at, min_v, Polarity::Minimum))
}

/// All window extrema for every scale, before deduplication, ordered by
/// `(scale, window_index, polarity)`.
pub fn detect_features_raw(img: &RampedImage, scales: &ScaleSet) -> Result<Vec<FeaturePoint>> {
    scales.validate_for(img.nr(), img.nc())?;
    let mut out = Vec::new();
    for &l in scales.sizes() {
        let windows = partition_windows(img.nr(), img.nc(), l)?;
        let pairs: Vec<_> = windows
            .par_iter()
            .map(|w| detect_window_extrema(img, w, l))
            .collect();
        out.reserve(2 * pairs.len());
        for (max, min) in pairs {
            out.push(max);
            out.push(min);
        }
    }
    Ok(out)
}

/// Multiscale local peaks, deduplicated.
pub fn detect_features(img: &RampedImage, scales: &ScaleSet) -> Result<Vec<FeaturePoint>> {
    let mut pts = dedupe_features(detect_features_raw(img, scales)?);
    pts.sort_by_key(|p| (p.scale, p.window_index, p.polarity));
    Ok(pts)
}

/// Keeps one feature per `(row, col, polarity)`, choosing the smallest scale.
/// Survivors keep their relative input order.
pub fn dedupe_features(pts: Vec<FeaturePoint>) -> Vec<FeaturePoint> {
    let mut best: std::collections::HashMap<(usize, usize, Polarity), usize> = Default::default();
    for (i, p) in pts.iter().enumerate() {
        best.entry((p.row, p.col, p.polarity))
            .and_modify(|j| {
                if p.scale < pts[*j].scale {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let keep: HashSet<usize> = best.into_values().collect();
    pts.into_iter()
        .enumerate()
        .filter_map(|(i, p)| keep.contains(&i).then_some(p))
        .collect()
}
