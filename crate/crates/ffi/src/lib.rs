//! C ABI over the `lpsift` library.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every call returns an
//! [`LpsStatus`]; on failure [`lps_last_error`] describes what went wrong.
//! Panics are caught and reported as [`LpsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lpsift::imaging::load_image;
use lpsift::matcher::MatchPair;
use lpsift::pipeline::{match_prepared, prepare, stitch_pair, PreparedImage};
use lpsift::registration::ransac_rigid;
use lpsift::{Error, IntensityImage, PipelineConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Boundary = 6,
    Contract = 7,
    Degenerate = 8,
    RegistrationFailed = 9,
    Panic = 10,
}

/// Loaded grayscale image.
pub struct LpsImage(IntensityImage);

/// Features and descriptors of one image.
pub struct LpsFeatures(PreparedImage);

/// Correspondences between two feature sets.
pub struct LpsMatches(Vec<MatchPair>);

/// Pipeline parameters. Non-positive `alpha` or `beta0` select the
/// per-image defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LpsConfig {
    pub alpha: f64,
    pub window_min: usize,
    pub window_max: usize,
    pub beta0: f64,
    pub d: usize,
    pub orientation: bool,
    pub delta_s: f64,
    pub ransac_iterations: usize,
    pub ransac_tol: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

/// A detected extremum. `polarity` is 1 for a maximum and -1 for a minimum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpsFeature {
    pub row: usize,
    pub col: usize,
    pub scale: usize,
    pub polarity: i32,
    pub value: f64,
}

/// Reference position `(row1, col1)` and registered position `(row2, col2)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpsMatch {
    pub row1: f64,
    pub col1: f64,
    pub row2: f64,
    pub col2: f64,
    pub delta: f64,
}

/// Rigid map from registered-image `(x, y)` to reference-image `(x, y)`,
/// with `x` the column.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpsTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(LpsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => LpsStatus::Io,
            Error::Format { .. } => LpsStatus::Format,
            Error::Config(_) => LpsStatus::Config,
            Error::Boundary { .. } => LpsStatus::Boundary,
            Error::Contract(_) => LpsStatus::Contract,
            Error::DegenerateSample(_) => LpsStatus::Degenerate,
            Error::RegistrationFailure(_) => LpsStatus::RegistrationFailed,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LpsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            LpsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(LpsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn pipeline_config(cfg: *const LpsConfig) -> Result<PipelineConfig, Failure> {
    let c = deref(cfg, "config")?;
    let mut p = PipelineConfig {
        alpha: (c.alpha > 0.0).then_some(c.alpha),
        window_min: c.window_min,
        window_max: c.window_max,
        beta0: (c.beta0 > 0.0).then_some(c.beta0),
        d: c.d,
        orientation_normalize: c.orientation,
        ..PipelineConfig::default()
    };
    p.matcher.delta_s = c.delta_s;
    p.ransac.iterations = c.ransac_iterations;
    p.ransac.inlier_tol = c.ransac_tol;
    p.ransac.min_inliers = c.min_inliers;
    p.ransac.seed = c.seed;
    p.validate()?;
    Ok(p)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fills `out_cfg` with the library defaults.
///
/// # Safety
/// `out_cfg` must be null or point to writable memory for an `LpsConfig`.
#[no_mangle]
pub unsafe extern "C" fn lps_config_default(out_cfg: *mut LpsConfig) -> LpsStatus {
    guard(|| {
        let d = PipelineConfig::default();
        *out(out_cfg, "out")? = LpsConfig {
            alpha: 0.0,
            window_min: d.window_min,
            window_max: d.window_max,
            beta0: 0.0,
            d: d.d,
            orientation: d.orientation_normalize,
            delta_s: d.matcher.delta_s,
            ransac_iterations: d.ransac.iterations,
            ransac_tol: d.ransac.inlier_tol,
            min_inliers: d.ransac.min_inliers,
            seed: d.ransac.seed,
        };
        Ok(())
    })
}

/// Loads an image file and converts it to grayscale.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out_img` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_image_load(file: *const c_char, out_img: *mut *mut LpsImage) -> LpsStatus {
    guard(|| {
        let slot = out(out_img, "out")?;
        *slot = ptr::null_mut();
        let img = load_image(path(file, "path")?)?;
        *slot = boxed(LpsImage(img));
        Ok(())
    })
}

/// Wraps a row-major 8-bit buffer of `rows * cols` bytes.
///
/// # Safety
/// `data` must point to at least `rows * cols` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn lps_image_from_gray8(data: *const u8, rows: usize, cols: usize, out_img: *mut *mut LpsImage) -> LpsStatus {
    guard(|| {
        let slot = out(out_img, "out")?;
        *slot = ptr::null_mut();
        if data.is_null() {
            return Err(null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(LpsStatus::InvalidArgument, "image size overflows".into()))?;
        let bytes = std::slice::from_raw_parts(data, len);
        *slot = boxed(LpsImage(IntensityImage::from_gray8("buffer", rows, cols, bytes)?));
        Ok(())
    })
}

/// # Safety
/// `img` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_image_dims(img: *const LpsImage, rows: *mut usize, cols: *mut usize) -> LpsStatus {
    guard(|| {
        let img = &deref(img, "image")?.0;
        *out(rows, "rows")? = img.nr();
        *out(cols, "cols")? = img.nc();
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lps_image_free(img: *mut LpsImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Detects features and computes their descriptors.
///
/// # Safety
/// `img` and `cfg` must be valid; the out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_features_compute(img: *const LpsImage, cfg: *const LpsConfig, out_feats: *mut *mut LpsFeatures) -> LpsStatus {
    guard(|| {
        let slot = out(out_feats, "out")?;
        *slot = ptr::null_mut();
        let img = &deref(img, "image")?.0;
        let cfg = pipeline_config(cfg)?;
        *slot = boxed(LpsFeatures(prepare(img, &cfg)?));
        Ok(())
    })
}

/// Number of features in the set; 0 for a null handle.
///
/// # Safety
/// `feats` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lps_features_count(feats: *const LpsFeatures) -> usize {
    feats.as_ref().map_or(0, |f| f.0.features.len())
}

/// # Safety
/// `feats` must be a live handle; the out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_features_get(feats: *const LpsFeatures, index: usize, out_feat: *mut LpsFeature) -> LpsStatus {
    guard(|| {
        let f = &deref(feats, "features")?.0;
        let fp = f
            .features
            .get(index)
            .ok_or_else(|| Failure(LpsStatus::InvalidArgument, format!("feature index {index} out of range")))?;
        *out(out_feat, "out")? = LpsFeature {
            row: fp.row,
            col: fp.col,
            scale: fp.scale,
            polarity: if fp.polarity == lpsift::detector::Polarity::Maximum { 1 } else { -1 },
            value: fp.value,
        };
        Ok(())
    })
}

/// Copies the descriptor of feature `index` into `buf`, which must hold
/// `len` values. `len` must equal the descriptor length (`8 * d * d`).
///
/// # Safety
/// `feats` must be a live handle; `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lps_features_descriptor(feats: *const LpsFeatures, index: usize, buf: *mut f64, len: usize) -> LpsStatus {
    guard(|| {
        let f = &deref(feats, "features")?.0;
        let d = f
            .descriptors
            .get(index)
            .ok_or_else(|| Failure(LpsStatus::InvalidArgument, format!("feature index {index} out of range")))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != d.values.len() {
            return Err(Failure(
                LpsStatus::InvalidArgument,
                format!("descriptor has {} values, buffer holds {len}", d.values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&d.values);
        Ok(())
    })
}

/// # Safety
/// `feats` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lps_features_free(feats: *mut LpsFeatures) {
    if !feats.is_null() {
        drop(Box::from_raw(feats));
    }
}

/// Matches the registered set against the reference set.
///
/// # Safety
/// Handles and `cfg` must be valid; the out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_match(
    reference: *const LpsFeatures,
    registered: *const LpsFeatures,
    cfg: *const LpsConfig,
    out_matches: *mut *mut LpsMatches,
) -> LpsStatus {
    guard(|| {
        let slot = out(out_matches, "out")?;
        *slot = ptr::null_mut();
        let (a, b) = (&deref(reference, "reference")?.0, &deref(registered, "registered")?.0);
        let cfg = pipeline_config(cfg)?;
        *slot = boxed(LpsMatches(match_prepared(a, b, &cfg)?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lps_matches_count(m: *const LpsMatches) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `m` must be a live handle; the out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_matches_get(m: *const LpsMatches, index: usize, out_match: *mut LpsMatch) -> LpsStatus {
    guard(|| {
        let p = deref(m, "matches")?
            .0
            .get(index)
            .ok_or_else(|| Failure(LpsStatus::InvalidArgument, format!("match index {index} out of range")))?;
        *out(out_match, "out")? = LpsMatch {
            row1: p.p1[0],
            col1: p.p1[1],
            row2: p.p2[0],
            col2: p.p2[1],
            delta: p.delta,
        };
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lps_matches_free(m: *mut LpsMatches) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Fits a rigid transform to the matches with RANSAC. Returns
/// `REGISTRATION_FAILED` when too few inliers support any hypothesis.
///
/// # Safety
/// `m` and `cfg` must be valid; `out_tf` and `inliers` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lps_register(m: *const LpsMatches, cfg: *const LpsConfig, out_tf: *mut LpsTransform, inliers: *mut usize) -> LpsStatus {
    guard(|| {
        let m = &deref(m, "matches")?.0;
        let cfg = pipeline_config(cfg)?;
        let (tf, n) = (out(out_tf, "out")?, out(inliers, "inliers")?);
        *n = 0;
        let r = ransac_rigid(m, &cfg.ransac)?;
        *tf = LpsTransform {
            theta: r.transform.theta,
            tx: r.transform.tx,
            ty: r.transform.ty,
        };
        *n = r.inliers.len();
        Ok(())
    })
}

/// Stitches two image files and writes the composite as PNG. `out_tf` may
/// be null.
///
/// # Safety
/// Paths must be NUL-terminated strings; `cfg` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lps_stitch_files(
    reference: *const c_char,
    registered: *const c_char,
    output: *const c_char,
    cfg: *const LpsConfig,
    out_tf: *mut LpsTransform,
) -> LpsStatus {
    guard(|| {
        let cfg = pipeline_config(cfg)?;
        let a = load_image(path(reference, "reference")?)?;
        let b = load_image(path(registered, "registered")?)?;
        let dest = path(output, "output")?;
        let outcome = stitch_pair(&a, &b, &cfg)?;
        let (Some(r), Some(canvas)) = (outcome.registration, outcome.canvas) else {
            let why = outcome.report.error.unwrap_or_else(|| "no consistent transform".into());
            return Err(Failure(LpsStatus::RegistrationFailed, why));
        };
        canvas.to_image("stitched").save_png(dest)?;
        if let Some(tf) = out_tf.as_mut() {
            *tf = LpsTransform {
                theta: r.transform.theta,
                tx: r.transform.tx,
                ty: r.transform.ty,
            };
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message() -> String {
        unsafe { CStr::from_ptr(lps_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), LpsStatus::Panic);
        assert_eq!(message(), "panic: boom");
        assert_eq!(guard(|| Ok(())), LpsStatus::Ok);
        assert_eq!(message(), "panic: boom");
    }

    #[test]
    fn errors_map_to_codes() {
        let cases = [
            (Error::Config("x".into()), LpsStatus::Config),
            (Error::Contract("x".into()), LpsStatus::Contract),
            (Error::DegenerateSample("x".into()), LpsStatus::Degenerate),
            (Error::RegistrationFailure("x".into()), LpsStatus::RegistrationFailed),
            (Error::Boundary { row: 0, col: 0, nr: 1, nc: 1 }, LpsStatus::Boundary),
        ];
        for (e, code) in cases {
            let text = e.to_string();
            assert_eq!(guard(|| Err(e.into())), code);
            assert_eq!(message(), text);
        }
    }

    #[test]
    fn interior_nul_is_replaced() {
        set_error("a\0b");
        assert_eq!(message(), "a b");
    }
}
