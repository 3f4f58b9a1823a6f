//! Straight-loop reference implementations and scene builders shared by the
//! integration tests. Nothing here calls into the detector or descriptor
//! code under test.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use lpsift::detector::{FeaturePoint, Polarity};
use lpsift::imaging::RampedImage;
use lpsift::registration::RigidTransform;
use lpsift::synth::{render_view, synthetic_photo, view_about};
use lpsift::IntensityImage;

/// Every pixel of every `L x L` tile (shrunk at the far edges) is visited;
/// a strictly larger (smaller) value replaces the running max (min). Results
/// are reduced to one entry per `(row, col, polarity)` at the smallest scale.
pub fn oracle_detect(img: &RampedImage, scales: &[usize]) -> BTreeSet<(usize, usize, usize, Polarity)> {
    let (nr, nc) = (img.nr(), img.nc());
    let mut raw = Vec::new();
    for &l in scales {
        let mut r0 = 0;
        while r0 < nr {
            let mut c0 = 0;
            while c0 < nc {
                let (mut max, mut min) = ((r0, c0), (r0, c0));
                for r in r0..(r0 + l).min(nr) {
                    for c in c0..(c0 + l).min(nc) {
                        let v = img.pixels()[r * nc + c];
                        if v > img.pixels()[max.0 * nc + max.1] {
                            max = (r, c);
                        }
                        if v < img.pixels()[min.0 * nc + min.1] {
                            min = (r, c);
                        }
                    }
                }
                raw.push((max.0, max.1, l, Polarity::Maximum));
                raw.push((min.0, min.1, l, Polarity::Minimum));
                c0 += l;
            }
            r0 += l;
        }
    }
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    raw.sort_by_key(|&(_, _, l, _)| l);
    for (r, c, l, p) in raw {
        if seen.insert((r, c, p)) {
            out.insert((r, c, l, p));
        }
    }
    out
}

pub fn oracle_raw_count(nr: usize, nc: usize, l: usize) -> usize {
    let tiles = |n: usize| (n + l - 1) / l;
    2 * tiles(nr) * tiles(nc)
}

/// Parameters of the reference descriptor.
#[derive(Clone, Copy)]
pub struct OracleParams {
    pub beta0: f64,
    pub d: usize,
    pub l_max: usize,
    pub orientation: bool,
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else if (x.abs() - 1.0).abs() < 1e-12 {
        x.signum()
    } else {
        x
    }
}

/// `(magnitude, angle in [0, 2pi))` of the central difference, `None`
/// outside the one-pixel border.
fn grad(img: &RampedImage, r: i64, c: i64) -> Option<(f64, f64)> {
    let (nr, nc) = (img.nr() as i64, img.nc() as i64);
    if r < 1 || c < 1 || r > nr - 2 || c > nc - 2 {
        return None;
    }
    let px = |r: i64, c: i64| img.pixels()[(r * nc + c) as usize];
    let a = px(r + 1, c) - px(r - 1, c);
    let b = px(r, c + 1) - px(r, c - 1);
    let m = (a * a + b * b).sqrt();
    if m == 0.0 {
        return Some((0.0, 0.0));
    }
    let mut t = b.atan2(a);
    if t < 0.0 {
        t += TAU;
    }
    if t >= TAU {
        t = 0.0;
    }
    Some((m, t))
}

/// Region centre so that `[c - lo, c + hi]` lies in `[1, n - 2]`.
fn centre(c: usize, lo: usize, hi: usize, n: usize) -> i64 {
    if n < 3 + lo + hi {
        return (n / 2) as i64;
    }
    c.max(1 + lo).min(n - 2 - hi) as i64
}

/// Region side in pixels.
pub fn oracle_region(l: usize, p: &OracleParams) -> usize {
    let beta = p.beta0 / (l as f64 / p.l_max as f64).sqrt();
    let w = ((beta * (l * p.d) as f64).round() as usize).min(l);
    let w = w - w % p.d;
    w.max(p.d)
}

/// Descriptor, dominant orientation and region centre of one feature.
pub fn oracle_descriptor(img: &RampedImage, fp: &FeaturePoint, p: &OracleParams) -> (Vec<f64>, f64, [usize; 2]) {
    let w = oracle_region(fp.scale, p);
    let ws = w / p.d;
    let half = w / 2;
    let rest = w - half - 1;

    let mut phi = 0.0;
    if p.orientation {
        let cr = centre(fp.row, half, rest, img.nr());
        let cc = centre(fp.col, half, rest, img.nc());
        let mut hist = [0.0; 36];
        for r in cr - half as i64..=cr + rest as i64 {
            for c in cc - half as i64..=cc + rest as i64 {
                if let Some((m, t)) = grad(img, r, c) {
                    if m > 0.0 {
                        hist[(t / (TAU / 36.0)).round() as usize % 36] += m;
                    }
                }
            }
        }
        let mut k = 0;
        for j in 0..36 {
            if hist[j] > hist[k] {
                k = j;
            }
        }
        phi = k as f64 * (TAU / 36.0);
    }
    let (cos, sin) = (snap(phi.cos()), snap(phi.sin()));

    let (lo, hi) = if p.orientation {
        let r = (w as f64 / 2f64.sqrt()).ceil() as usize;
        (r, r)
    } else {
        (half, rest)
    };
    let cr = centre(fp.row, lo, hi, img.nr());
    let cc = centre(fp.col, lo, hi, img.nc());

    let mut v = vec![0.0; p.d * p.d * 8];
    for r in cr - lo as i64..=cr + hi as i64 {
        for c in cc - lo as i64..=cc + hi as i64 {
            let (dr, dc) = ((r - cr) as f64, (c - cc) as f64);
            let u = dr * cos + dc * sin + half as f64;
            let s = -dr * sin + dc * cos + half as f64;
            if u < 0.0 || s < 0.0 {
                continue;
            }
            let (i, j) = ((u / ws as f64).floor() as usize, (s / ws as f64).floor() as usize);
            if i >= p.d || j >= p.d {
                continue;
            }
            let Some((m, t)) = grad(img, r, c) else { continue };
            if m == 0.0 {
                continue;
            }
            let mut rel = t - phi;
            if rel < 0.0 {
                rel += TAU;
            }
            if rel >= TAU {
                rel = 0.0;
            }
            let bin = (rel / (TAU / 8.0)).round() as usize % 8;
            v[(i * p.d + j) * 8 + bin] += m;
        }
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = norm(&v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x / n).min(0.2);
        }
        let n = norm(&v);
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    (v, phi, [cr as usize, cc as usize])
}

/// Two `side x side` views of one scene: `a` axis-aligned, `b` rotated by
/// `deg` about a point of their overlap that is also `b`'s centre.
/// Returns `(a, b, b_to_a)`.
pub fn rotated_pair(side: usize, deg: f64, offset: [f64; 2], seed: u64) -> (IntensityImage, IntensityImage, RigidTransform) {
    let margin = side as f64;
    let scene = (3 * side) as usize;
    let src = synthetic_photo(scene, scene, seed);
    let a_to_src = RigidTransform::new(0.0, margin, margin);
    let a = render_view(&src, &a_to_src, side, side).expect("view inside scene").with_id("a");
    let mid = (side - 1) as f64 / 2.0;
    let centre = [margin + mid + offset[0], margin + mid + offset[1]];
    let b_to_src = view_about(deg.to_radians(), centre, side, side);
    let b = render_view(&src, &b_to_src, side, side).expect("view inside scene").with_id("b");
    (a, b, a_to_src.inverse().compose(&b_to_src))
}

/// Angle difference in degrees, wrapped to `[0, 180]`.
pub fn angle_err_deg(a: f64, b: f64) -> f64 {
    lpsift::registration::normalize_angle(a - b).abs().to_degrees()
}

pub fn translation_err(a: &RigidTransform, b: &RigidTransform) -> f64 {
    (a.tx - b.tx).hypot(a.ty - b.ty)
}
