//! Synthetic test imagery with known geometry: textured "photos", crops,
//! rotated views and shuffled fragment sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::IntensityImage;
use crate::registration::RigidTransform;

/// A smooth, blob-textured 8-bit scene. Intensities are integers in
/// `[8, 247]`.
pub fn synthetic_photo(nr: usize, nc: usize, seed: u64) -> IntensityImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = vec![0.0f64; nr * nc];

    // broad shading, then blobs from coarse to fine
    let broad = 6;
    let blobs = (nr * nc) / 300 + 4;
    for k in 0..broad + blobs {
        let sigma = if k < broad {
            rng.gen_range(0.15..0.4) * nr.max(nc) as f64
        } else {
            // log-uniform in [1.5, 24]
            (rng.gen_range(1.5f64.ln()..24f64.ln())).exp()
        };
        let amp = rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let cy = rng.gen_range(0.0..nr as f64);
        let cx = rng.gen_range(0.0..nc as f64);
        let reach = (3.0 * sigma).ceil();
        let r0 = (cy - reach).max(0.0) as usize;
        let r1 = ((cy + reach) as usize).min(nr - 1);
        let c0 = (cx - reach).max(0.0) as usize;
        let c1 = ((cx + reach) as usize).min(nc - 1);
        let inv = -0.5 / (sigma * sigma);
        for r in r0..=r1 {
            let dy = r as f64 - cy;
            let row = &mut field[r * nc..(r + 1) * nc];
            for (c, v) in row.iter_mut().enumerate().take(c1 + 1).skip(c0) {
                let dx = c as f64 - cx;
                *v += amp * ((dx * dx + dy * dy) * inv).exp();
            }
        }
    }

    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-12);
    let pixels = field.iter().map(|v| (8.0 + 239.0 * (v - lo) / span).round()).collect();
    IntensityImage::new(format!("photo-{seed}"), nr, nc, pixels).expect("valid dimensions")
}

/// Uniform 8-bit noise.
pub fn noise_image(nr: usize, nc: usize, seed: u64) -> IntensityImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..nr * nc).map(|_| f64::from(rng.gen_range(0u8..=255))).collect();
    IntensityImage::new(format!("noise-{seed}"), nr, nc, pixels).expect("valid dimensions")
}

/// Exact sub-image.
pub fn crop(src: &IntensityImage, row0: usize, col0: usize, nr: usize, nc: usize) -> Result<IntensityImage> {
    if row0 + nr > src.nr() || col0 + nc > src.nc() {
        return Err(Error::Contract(format!(
            "crop {nr}x{nc} at ({row0}, {col0}) exceeds {}x{}",
            src.nr(),
            src.nc()
        )));
    }
    IntensityImage::from_fn(
        format!("{}@{row0},{col0}", src.id()),
        nr,
        nc,
        |r, c| src.get(row0 + r, col0 + c),
    )
}

/// Renders an `nr x nc` view whose pixel `(x, y)` shows the source at
/// `view_to_src.apply((x, y))`, bilinearly sampled and rounded to 8-bit.
pub fn render_view(src: &IntensityImage, view_to_src: &RigidTransform, nr: usize, nc: usize) -> Result<IntensityImage> {
    let (w, h) = ((src.nc() - 1) as f64, (src.nr() - 1) as f64);
    for p in [[0.0, 0.0], [(nc - 1) as f64, 0.0], [0.0, (nr - 1) as f64], [(nc - 1) as f64, (nr - 1) as f64]] {
        let q = view_to_src.apply(p);
        if q[0] < 0.0 || q[1] < 0.0 || q[0] > w || q[1] > h {
            return Err(Error::Contract(format!("view corner {p:?} maps outside the source to {q:?}")));
        }
    }
    IntensityImage::from_fn(format!("{}@view", src.id()), nr, nc, |r, c| {
        let [x, y] = view_to_src.apply([c as f64, r as f64]);
        let (c0, r0) = (x.floor() as usize, y.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(src.nc() - 1), (r0 + 1).min(src.nr() - 1));
        let (fx, fy) = (x - c0 as f64, y - r0 as f64);
        let top = src.get(r0, c0) * (1.0 - fx) + src.get(r0, c1) * fx;
        let bottom = src.get(r1, c0) * (1.0 - fx) + src.get(r1, c1) * fx;
        (top * (1.0 - fy) + bottom * fy).round()
    })
}

/// Rigid map that rotates a view by `theta` about its own center and places
/// that center at `center_in_src`.
pub fn view_about(theta: f64, center_in_src: [f64; 2], nr: usize, nc: usize) -> RigidTransform {
    let vc = [(nc - 1) as f64 / 2.0, (nr - 1) as f64 / 2.0];
    let rot = RigidTransform::new(theta, 0.0, 0.0);
    let rc = rot.apply(vc);
    RigidTransform::new(theta, center_in_src[0] - rc[0], center_in_src[1] - rc[1])
}

/// A cut-out of a larger image with its known origin.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub image: IntensityImage,
    pub row0: usize,
    pub col0: usize,
}

/// Cuts `src` into a `rows x cols` grid of equally sized tiles whose
/// neighbours overlap by `overlap` of the tile side, then shuffles them.
pub fn fragment_grid(src: &IntensityImage, rows: usize, cols: usize, overlap: f64, seed: u64) -> Result<Vec<Fragment>> {
    if rows == 0 || cols == 0 || !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("fragment grid needs rows, cols >= 1 and overlap in [0, 1)"));
    }
    let tile = |n: usize, k: usize| -> (usize, usize) {
        let size = (n as f64 / (k as f64 - (k as f64 - 1.0) * overlap)).ceil() as usize;
        let size = size.min(n);
        let stride = if k > 1 { (n - size) / (k - 1) } else { 0 };
        (size, stride)
    };
    let (h, sr) = tile(src.nr(), rows);
    let (w, sc) = tile(src.nc(), cols);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (row0, col0) = (i * sr, j * sc);
            let image = crop(src, row0, col0, h, w)?;
            out.push(Fragment { image, row0, col0 });
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (k, f) in out.iter_mut().enumerate() {
        f.image = f.image.clone().with_id(format!("fragment-{k}"));
    }
    Ok(out)
}
