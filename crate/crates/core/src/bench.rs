//! Synthetic benchmark harness.
//!
//! A benchmark description is a `key = value` file:
//!
//! ```text
//! sizes_mpx   = 0.25, 1, 4        # image sizes of each pair member
//! aspect      = 1.3333            # width / height
//! overlap     = 0.5               # fraction of width shared by the pair
//! transforms  = translation, rotation
//! rotation_deg = 15
//! repetitions = 3
//! window_min  = 32
//! window_max  = 64
//! scale_windows = false           # scale L with sqrt(size / reference_mpx)
//! reference_mpx = 1
//! seed = 1
//! ```
//!
//! Every cell generates a fresh synthetic pair with a known rigid transform,
//! runs the full pipeline and records stage times, counts and the transform
//! error. The pre-deduplication feature count of each image is checked
//! against `sum_L 2 * ceil(nr/L) * ceil(nc/L)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{parse_key_values, PipelineConfig};
use crate::detector::{detect_features_raw, window_count, ScaleSet};
use crate::error::{Error, Result};
use crate::imaging::apply_linear_ramp;
use crate::pipeline::stitch_pair;
use crate::registration::{normalize_angle, RigidTransform};
use crate::synth::{crop, render_view, synthetic_photo, view_about};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Translation,
    Rotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub sizes_mpx: Vec<f64>,
    pub aspect: f64,
    pub overlap: f64,
    pub transforms: Vec<TransformKind>,
    pub rotation_deg: f64,
    pub repetitions: usize,
    pub window_min: usize,
    pub window_max: usize,
    pub scale_windows: bool,
    pub reference_mpx: f64,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes_mpx: Vec::new(),
            aspect: 4.0 / 3.0,
            overlap: 0.5,
            transforms: vec![TransformKind::Translation],
            rotation_deg: 15.0,
            repetitions: 1,
            window_min: 32,
            window_max: 64,
            scale_windows: false,
            reference_mpx: 1.0,
            seed: 1,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value {v:?} for {key}")))
}

impl BenchSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        if pairs.is_empty() {
            return Err(Error::config("benchmark description is empty"));
        }
        let mut spec = Self::default();
        for (k, v) in pairs {
            match k.as_str() {
                "sizes_mpx" | "sizes" => {
                    spec.sizes_mpx = v.split(',').map(|s| num(&k, s)).collect::<Result<_>>()?;
                }
                "aspect" => spec.aspect = num(&k, &v)?,
                "overlap" => spec.overlap = num(&k, &v)?,
                "transforms" => {
                    spec.transforms = v
                        .split(',')
                        .map(|s| match s.trim() {
                            "translation" => Ok(TransformKind::Translation),
                            "rotation" => Ok(TransformKind::Rotation),
                            other => Err(Error::config(format!("unknown transform type {other:?}"))),
                        })
                        .collect::<Result<_>>()?;
                }
                "rotation_deg" => spec.rotation_deg = num(&k, &v)?,
                "repetitions" => spec.repetitions = num(&k, &v)?,
                "window_min" => spec.window_min = num(&k, &v)?,
                "window_max" => spec.window_max = num(&k, &v)?,
                "scale_windows" => {
                    spec.scale_windows = match v.as_str() {
                        "true" | "yes" | "1" => true,
                        "false" | "no" | "0" => false,
                        _ => return Err(Error::config(format!("invalid boolean {v:?} for scale_windows"))),
                    }
                }
                "reference_mpx" => spec.reference_mpx = num(&k, &v)?,
                "seed" => spec.seed = num(&k, &v)?,
                other => return Err(Error::config(format!("unknown benchmark key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes_mpx.is_empty() {
            return Err(Error::config("benchmark needs at least one image size"));
        }
        if self.sizes_mpx.iter().any(|&s| !(s > 0.0) || s > 100.0) {
            return Err(Error::config("image sizes must be in (0, 100] Mpx"));
        }
        if self.transforms.is_empty() || self.repetitions == 0 {
            return Err(Error::config("benchmark needs transforms and repetitions >= 1"));
        }
        if !(0.1..=0.95).contains(&self.overlap) {
            return Err(Error::config("overlap must be in [0.1, 0.95]"));
        }
        if !(self.aspect > 0.0) || !(self.reference_mpx > 0.0) {
            return Err(Error::config("aspect and reference_mpx must be positive"));
        }
        ScaleSet::from_range(self.window_min, self.window_max)?;
        Ok(())
    }

    /// Image dimensions `(nr, nc)` for a size in megapixels.
    pub fn dims(&self, mpx: f64) -> (usize, usize) {
        let px = mpx * 1e6;
        let nr = (px / self.aspect).sqrt().round() as usize;
        let nc = (px / nr as f64).round() as usize;
        (nr, nc)
    }

    /// Window range used at a given size.
    pub fn windows_for(&self, mpx: f64) -> (usize, usize) {
        if !self.scale_windows {
            return (self.window_min, self.window_max);
        }
        let k = (mpx / self.reference_mpx).sqrt();
        let lo = ((self.window_min as f64 * k).round() as usize).max(crate::detector::MIN_WINDOW);
        let hi = ((self.window_max as f64 * k).round() as usize).max(lo);
        (lo, hi)
    }
}

/// Number of window extrema a scale set produces before deduplication.
pub fn expected_raw_count(nr: usize, nc: usize, scales: &ScaleSet) -> usize {
    scales.sizes().iter().map(|&l| 2 * window_count(nr, nc, l)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size_mpx: f64,
    pub nr: usize,
    pub nc: usize,
    pub transform: TransformKind,
    pub repetition: usize,
    pub window_min: usize,
    pub window_max: usize,
    pub raw_features: usize,
    pub features_a: usize,
    pub features_b: usize,
    pub matched_pairs: usize,
    pub inliers: usize,
    pub success: bool,
    pub theta_err_deg: f64,
    pub t_err_px: f64,
    pub t_detection: f64,
    pub t_description: f64,
    pub t_matching: f64,
    pub t_stitching: f64,
    pub t_total: f64,
}

/// A synthetic pair and the transform mapping the second onto the first.
pub struct SyntheticPair {
    pub reference: crate::imaging::IntensityImage,
    pub registered: crate::imaging::IntensityImage,
    pub truth: RigidTransform,
}

/// Builds a pair of `nr x nc` views of one synthetic scene.
pub fn synthetic_pair(nr: usize, nc: usize, kind: TransformKind, overlap: f64, rotation_deg: f64, seed: u64) -> Result<SyntheticPair> {
    let shift_x = ((1.0 - overlap) * nc as f64).round() as usize;
    let shift_y = nr / 16;
    match kind {
        TransformKind::Translation => {
            let src = synthetic_photo(nr + shift_y, nc + shift_x, seed);
            let reference = crop(&src, 0, 0, nr, nc)?.with_id("a");
            let registered = crop(&src, shift_y, shift_x, nr, nc)?.with_id("b");
            Ok(SyntheticPair {
                reference,
                registered,
                truth: RigidTransform::new(0.0, shift_x as f64, shift_y as f64),
            })
        }
        TransformKind::Rotation => {
            let margin = ((nr.max(nc) as f64) * 0.75).ceil() as usize;
            let (snr, snc) = (nr + shift_y + 2 * margin, nc + shift_x + 2 * margin);
            let src = synthetic_photo(snr, snc, seed);
            let a_to_src = RigidTransform::new(0.0, margin as f64, margin as f64);
            let reference = render_view(&src, &a_to_src, nr, nc)?.with_id("a");
            let center = [
                margin as f64 + shift_x as f64 + (nc - 1) as f64 / 2.0,
                margin as f64 + shift_y as f64 + (nr - 1) as f64 / 2.0,
            ];
            let b_to_src = view_about(rotation_deg.to_radians(), center, nr, nc);
            let registered = render_view(&src, &b_to_src, nr, nc)?.with_id("b");
            Ok(SyntheticPair {
                reference,
                registered,
                truth: a_to_src.inverse().compose(&b_to_src),
            })
        }
    }
}

/// Runs every cell of the benchmark.
pub fn run_bench(spec: &BenchSpec, base: &PipelineConfig) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (si, &mpx) in spec.sizes_mpx.iter().enumerate() {
        let (nr, nc) = spec.dims(mpx);
        let (lo, hi) = spec.windows_for(mpx);
        let mut cfg = base.clone();
        cfg.window_min = lo;
        cfg.window_max = hi;
        cfg.beta0 = None;
        cfg.validate()?;
        let scales = cfg.scales()?;
        scales.validate_for(nr, nc)?;
        for (ti, &kind) in spec.transforms.iter().enumerate() {
            for rep in 0..spec.repetitions {
                let seed = spec.seed ^ ((si as u64) << 32 | (ti as u64) << 16 | rep as u64);
                let pair = synthetic_pair(nr, nc, kind, spec.overlap, spec.rotation_deg, seed)?;

                let alpha = cfg.alpha_for(nr, nc)?;
                let raw = detect_features_raw(&apply_linear_ramp(&pair.reference, alpha)?, &scales)?.len();
                let expected = expected_raw_count(nr, nc, &scales);
                if raw != expected {
                    return Err(Error::Contract(format!(
                        "feature-count law violated at {nr}x{nc}, scales {:?}: {raw} != {expected}",
                        scales.sizes()
                    )));
                }

                let out = stitch_pair(&pair.reference, &pair.registered, &cfg)?;
                let (theta_err_deg, t_err_px) = match &out.registration {
                    Some(r) => (
                        normalize_angle(r.transform.theta - pair.truth.theta).abs().to_degrees(),
                        (r.transform.tx - pair.truth.tx).hypot(r.transform.ty - pair.truth.ty),
                    ),
                    None => (f64::NAN, f64::NAN),
                };
                let t = out.report.timings;
                rows.push(BenchRow {
                    size_mpx: mpx,
                    nr,
                    nc,
                    transform: kind,
                    repetition: rep,
                    window_min: lo,
                    window_max: hi,
                    raw_features: raw,
                    features_a: out.report.images[0].features,
                    features_b: out.report.images[1].features,
                    matched_pairs: out.report.matched_pairs,
                    inliers: out.report.registration.inliers,
                    success: out.report.success,
                    theta_err_deg,
                    t_err_px,
                    t_detection: t.detection,
                    t_description: t.description,
                    t_matching: t.matching,
                    t_stitching: t.stitching,
                    t_total: out.report.total_time,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Contract(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Contract(format!("csv: {e}")))?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median stage times and counts per (size, transform) cell.
pub fn summary_table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>8} {:>11} {:>11} {:>9} {:>9} {:>6} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "Mpx", "size", "transform", "L", "features", "pairs", "ok", "detect", "describe", "match", "stitch", "total"
    );
    let mut cells: Vec<(f64, TransformKind)> = Vec::new();
    for r in rows {
        if !cells.contains(&(r.size_mpx, r.transform)) {
            cells.push((r.size_mpx, r.transform));
        }
    }
    for (mpx, kind) in cells {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.size_mpx == mpx && r.transform == kind).collect();
        let f = |g: fn(&BenchRow) -> f64| median(sel.iter().map(|r| g(r)).collect());
        let first = sel[0];
        s += &format!(
            "{:>8.2} {:>11} {:>11} {:>9} {:>9.0} {:>6.0} {:>3}/{:<3} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            mpx,
            format!("{}x{}", first.nr, first.nc),
            format!("{kind:?}").to_lowercase(),
            format!("{}-{}", first.window_min, first.window_max),
            f(|r| r.features_a as f64),
            f(|r| r.matched_pairs as f64),
            sel.iter().filter(|r| r.success).count(),
            sel.len(),
            f(|r| r.t_detection),
            f(|r| r.t_description),
            f(|r| r.t_matching),
            f(|r| r.t_stitching),
            f(|r| r.t_total),
        );
    }
    s
}
