//! Rigid (rotation + translation) registration with RANSAC.
//!
//! Points are `(x, y) = (col, row)`. A [`RigidTransform`] acts on column
//! vectors `(x, y, 1)` through
//! `[[cos t, -sin t, tx], [sin t, cos t, ty], [0, 0, 1]]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchPair;

/// `(x, y)` in pixels.
pub type Point = [f64; 2];

/// RANSAC iterations evaluated per independently seeded batch.
const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self { theta, tx, ty }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]]
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.tx, s * p[0] + c * p[1] + self.ty]
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        // R^T (-t)
        Self::new(-self.theta, -(c * self.tx + s * self.ty), s * self.tx - c * self.ty)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply([other.tx, other.ty]);
        Self::new(normalize_angle(self.theta + other.theta), t[0], t[1])
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// Correspondence from a source point to its target-frame counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub src: Point,
    pub dst: Point,
}

impl PointPair {
    pub fn new(src: Point, dst: Point) -> Self {
        Self { src, dst }
    }

    /// Forward transfer error `|H src - dst|`.
    #[inline]
    pub fn transfer_error(&self, h: &RigidTransform) -> f64 {
        let p = h.apply(self.src);
        (p[0] - self.dst[0]).hypot(p[1] - self.dst[1])
    }
}

impl From<&MatchPair> for PointPair {
    /// Maps the registered-image region center onto the reference-image one.
    fn from(m: &MatchPair) -> Self {
        Self::new([m.c2[1], m.c2[0]], [m.c1[1], m.c1[0]])
    }
}

/// Closed-form least-squares rigid fit (2-D Procrustes without scale).
pub fn estimate_rigid(pairs: &[PointPair]) -> Result<RigidTransform> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateSample(format!("need at least 2 pairs, got {}", pairs.len())));
    }
    let n = pairs.len() as f64;
    let (mut cs, mut cd) = ([0.0; 2], [0.0; 2]);
    for p in pairs {
        cs[0] += p.src[0];
        cs[1] += p.src[1];
        cd[0] += p.dst[0];
        cd[1] += p.dst[1];
    }
    cs = [cs[0] / n, cs[1] / n];
    cd = [cd[0] / n, cd[1] / n];

    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (sx, sy) = (p.src[0] - cs[0], p.src[1] - cs[1]);
        let (dx, dy) = (p.dst[0] - cd[0], p.dst[1] - cd[1]);
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
        spread += sx * sx + sy * sy;
    }
    if spread <= 1e-12 {
        return Err(Error::DegenerateSample("source points coincide".into()));
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Ok(RigidTransform::new(
        theta,
        cd[0] - (c * cs[0] - s * cs[1]),
        cd[1] - (s * cs[0] + c * cs[1]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_tol: 3.0,
            min_inliers: 8,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("RANSAC needs at least one iteration"));
        }
        if !(self.inlier_tol > 0.0) || !self.inlier_tol.is_finite() {
            return Err(Error::config(format!("inlier tolerance must be positive, got {}", self.inlier_tol)));
        }
        if self.min_inliers < 2 {
            return Err(Error::config(format!("min_inliers must be at least 2, got {}", self.min_inliers)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    /// Indices into the input pairs, ascending.
    pub inliers: Vec<usize>,
    pub residual_rms: f64,
}

#[derive(Debug, Clone)]
struct Consensus {
    transform: RigidTransform,
    inliers: Vec<usize>,
    rms: f64,
}

impl Consensus {
    fn evaluate(pairs: &[PointPair], h: RigidTransform, tol: f64) -> Self {
        let mut inliers = Vec::new();
        let mut sq = 0.0;
        for (k, p) in pairs.iter().enumerate() {
            let e = p.transfer_error(&h);
            if e <= tol {
                inliers.push(k);
                sq += e * e;
            }
        }
        let rms = if inliers.is_empty() { f64::INFINITY } else { (sq / inliers.len() as f64).sqrt() };
        Self {
            transform: h,
            inliers,
            rms,
        }
    }

    /// More inliers wins, then the lower RMS.
    fn beats(&self, other: &Self) -> bool {
        self.inliers.len() > other.inliers.len()
            || (self.inliers.len() == other.inliers.len() && self.rms < other.rms)
    }
}

fn run_batch(pairs: &[PointPair], cfg: &RansacConfig, batch: usize, count: usize) -> Option<Consensus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch as u64);
    let n = pairs.len();
    let mut best: Option<Consensus> = None;
    for _ in 0..count {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Ok(h) = estimate_rigid(&[pairs[i], pairs[j]]) else {
            continue;
        };
        let cand = Consensus::evaluate(pairs, h, cfg.inlier_tol);
        if best.as_ref().map_or(true, |b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best
}

/// RANSAC over point correspondences.
///
/// Iterations are split into fixed-size batches, each with its own stream of
/// the seeded generator, and reduced in batch order, so the result does not
/// depend on the number of worker threads.
pub fn ransac_rigid_points(pairs: &[PointPair], cfg: &RansacConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    if pairs.len() < cfg.min_inliers {
        return Err(Error::RegistrationFailure(format!(
            "{} pairs available, {} inliers required",
            pairs.len(),
            cfg.min_inliers
        )));
    }
    let batches = cfg.iterations.div_ceil(BATCH);
    let results: Vec<Option<Consensus>> = (0..batches)
        .into_par_iter()
        .map(|b| run_batch(pairs, cfg, b, BATCH.min(cfg.iterations - b * BATCH)))
        .collect();
    let mut best: Option<Consensus> = None;
    for cand in results.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    let Some(mut best) = best else {
        return Err(Error::RegistrationFailure("every sample was degenerate".into()));
    };
    if best.inliers.len() < cfg.min_inliers {
        return Err(Error::RegistrationFailure(format!(
            "best consensus has {} inliers, {} required",
            best.inliers.len(),
            cfg.min_inliers
        )));
    }

    // Refit on the consensus set; keep the refit only while it does not lose support.
    for _ in 0..3 {
        let subset: Vec<PointPair> = best.inliers.iter().map(|&k| pairs[k]).collect();
        let Ok(h) = estimate_rigid(&subset) else { break };
        let refit = Consensus::evaluate(pairs, h, cfg.inlier_tol);
        if refit.inliers.len() < best.inliers.len() || refit.inliers == best.inliers && refit.rms >= best.rms {
            break;
        }
        best = refit;
    }

    Ok(RegistrationResult {
        transform: best.transform,
        inliers: best.inliers,
        residual_rms: best.rms,
    })
}

/// RANSAC on matched features; the returned transform maps registered-image
/// coordinates (`p2`) into the reference frame (`p1`).
pub fn ransac_rigid(pairs: &[MatchPair], cfg: &RansacConfig) -> Result<RegistrationResult> {
    let points: Vec<PointPair> = pairs.iter().map(PointPair::from).collect();
    ransac_rigid_points(&points, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn apply_hand_values() {
        assert_eq!(RigidTransform::identity().apply([7.0, -2.0]), [7.0, -2.0]);
        let h = RigidTransform::new(FRAC_PI_2, 5.0, -3.0);
        assert!(close(h.apply([1.0, 0.0]), [5.0, -2.0], 1e-12));
        assert!(close(h.apply([0.0, 1.0]), [4.0, -3.0], 1e-12));
    }

    #[test]
    fn matrix_is_proper_rotation() {
        let m = RigidTransform::new(0.7, 3.0, 4.0).matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((det - 1.0).abs() < 1e-12);
        assert_eq!(m[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let h = RigidTransform::new(-2.3, 17.5, -4.25);
        let id = h.compose(&h.inverse());
        assert!(id.theta.abs() < 1e-12 && id.tx.abs() < 1e-9 && id.ty.abs() < 1e-9);
        let id = h.inverse().compose(&h);
        assert!(id.theta.abs() < 1e-12 && id.tx.abs() < 1e-9 && id.ty.abs() < 1e-9);
    }

    #[test]
    fn compose_matches_sequential_apply() {
        let a = RigidTransform::new(0.4, 1.0, 2.0);
        let b = RigidTransform::new(-1.1, -3.0, 0.5);
        let p = [2.5, -7.0];
        assert!(close(a.compose(&b).apply(p), a.apply(b.apply(p)), 1e-12));
    }

    #[test]
    fn estimate_identity_and_quarter_turn() {
        let h = estimate_rigid(&[PointPair::new([0.0, 0.0], [0.0, 0.0]), PointPair::new([1.0, 0.0], [1.0, 0.0])]).unwrap();
        assert!(h.theta.abs() < 1e-15 && h.tx.abs() < 1e-15 && h.ty.abs() < 1e-15);

        let h = estimate_rigid(&[PointPair::new([1.0, 0.0], [5.0, -2.0]), PointPair::new([0.0, 1.0], [4.0, -3.0])]).unwrap();
        assert!((h.theta - FRAC_PI_2).abs() < 1e-12);
        assert!((h.tx - 5.0).abs() < 1e-12 && (h.ty + 3.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_rejects_degenerate() {
        assert!(matches!(estimate_rigid(&[PointPair::new([1.0, 1.0], [0.0, 0.0])]), Err(Error::DegenerateSample(_))));
        let same = PointPair::new([3.0, 3.0], [1.0, 2.0]);
        assert!(matches!(estimate_rigid(&[same, same]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn ransac_outlier_free() {
        let truth = RigidTransform::new(0.3, 12.0, -7.0);
        let pairs: Vec<PointPair> = (0..20)
            .map(|k| {
                let p = [(k * 13 % 50) as f64, (k * 7 % 31) as f64 * 2.0];
                PointPair::new(p, truth.apply(p))
            })
            .collect();
        let r = ransac_rigid_points(&pairs, &RansacConfig::default()).unwrap();
        assert_eq!(r.inliers.len(), 20);
        assert!((r.transform.theta - 0.3).abs() < 1e-9);
        assert!((r.transform.tx - 12.0).abs() < 1e-9 && (r.transform.ty + 7.0).abs() < 1e-9);
    }

    #[test]
    fn ransac_too_few_pairs() {
        let pairs: Vec<PointPair> = (0..5).map(|k| PointPair::new([k as f64, 0.0], [k as f64, 0.0])).collect();
        assert!(matches!(
            ransac_rigid_points(&pairs, &RansacConfig::default()),
            Err(Error::RegistrationFailure(_))
        ));
    }

    #[test]
    fn match_pair_direction() {
        let m = MatchPair {
            p1: [10.0, 20.0],
            p2: [1.0, 2.0],
            c1: [11.0, 20.0],
            c2: [1.0, 3.0],
            delta: 0.1,
            ref1: 0,
            ref2: 0,
        };
        let p = PointPair::from(&m);
        assert_eq!(p.src, [3.0, 1.0]);
        assert_eq!(p.dst, [20.0, 11.0]);
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { inlier_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { min_inliers: 1, ..Default::default() }.validate().is_err());
    }
}
