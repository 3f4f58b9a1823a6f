//! End-to-end two-image stitching built from the individual stages.

use std::time::Instant;

use crate::compositor::{compute_canvas, warp_and_blend, Canvas, Placement};
use crate::config::PipelineConfig;
use crate::descriptor::{describe_features, DescriptorVector};
use crate::detector::{detect_features, FeaturePoint};
use crate::error::Result;
use crate::imaging::{apply_linear_ramp, IntensityImage, RampedImage};
use crate::matcher::{match_features, MatchPair};
use crate::registration::{ransac_rigid, RegistrationResult, RigidTransform};
use crate::report::{ImageSummary, RegistrationReport, RunReport, StageTimes};

/// An image after detection and description.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image: IntensityImage,
    pub ramped: RampedImage,
    pub features: Vec<FeaturePoint>,
    pub descriptors: Vec<DescriptorVector>,
    /// Seconds spent ramping and detecting.
    pub detection_time: f64,
    pub description_time: f64,
}

impl PreparedImage {
    pub fn summary(&self) -> ImageSummary {
        ImageSummary {
            id: self.image.id().to_string(),
            nr: self.image.nr(),
            nc: self.image.nc(),
            features: self.features.len(),
        }
    }
}

/// Ramps, detects and describes one image.
pub fn prepare(image: &IntensityImage, cfg: &PipelineConfig) -> Result<PreparedImage> {
    let scales = cfg.scales()?;
    let dcfg = cfg.descriptor_config()?;
    let alpha = cfg.alpha_for(image.nr(), image.nc())?;

    let t0 = Instant::now();
    let ramped = apply_linear_ramp(image, alpha)?;
    let features = detect_features(&ramped, &scales)?;
    let detection_time = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let descriptors = describe_features(&ramped, &features, &dcfg);
    let description_time = t1.elapsed().as_secs_f64();

    Ok(PreparedImage {
        image: image.clone(),
        ramped,
        features,
        descriptors,
        detection_time,
        description_time,
    })
}

/// Matches two prepared images; `reference` provides `p1`.
pub fn match_prepared(reference: &PreparedImage, registered: &PreparedImage, cfg: &PipelineConfig) -> Result<Vec<MatchPair>> {
    match_features(&reference.descriptors, &registered.descriptors, &cfg.matcher)
}

/// Result of stitching one pair.
#[derive(Debug, Clone)]
pub struct StitchOutcome {
    pub report: RunReport,
    pub matches: Vec<MatchPair>,
    /// `None` when registration failed.
    pub registration: Option<RegistrationResult>,
    pub canvas: Option<Canvas>,
}

/// Full pipeline on two images: the second is registered onto the first.
///
/// Registration failure is not an error here; it is reported through
/// [`StitchOutcome::registration`] and the report.
pub fn stitch_pair(reference: &IntensityImage, registered: &IntensityImage, cfg: &PipelineConfig) -> Result<StitchOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let a = prepare(reference, cfg)?;
    let b = prepare(registered, cfg)?;

    let t = Instant::now();
    let matches = match_prepared(&a, &b, cfg)?;
    let matching = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (registration, error) = match ransac_rigid(&matches, &cfg.ransac) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let canvas = match &registration {
        Some(r) => {
            let placements = [
                Placement {
                    image_id: reference.id().to_string(),
                    transform: RigidTransform::identity(),
                },
                Placement {
                    image_id: registered.id().to_string(),
                    transform: r.transform,
                },
            ];
            let dims = [(reference.nr(), reference.nc()), (registered.nr(), registered.nc())];
            let extents = compute_canvas(&placements, &dims)?;
            Some(warp_and_blend(&[reference, registered], &placements, extents, cfg.blend, cfg.resample)?)
        }
        None => None,
    };
    let stitching = t.elapsed().as_secs_f64();

    let timings = StageTimes {
        detection: a.detection_time + b.detection_time,
        description: a.description_time + b.description_time,
        matching,
        stitching,
    };
    let report = RunReport {
        success: registration.is_some(),
        error,
        images: vec![a.summary(), b.summary()],
        matched_pairs: matches.len(),
        registration: RegistrationReport::new(registration.as_ref(), matches.len()),
        canvas_width: canvas.as_ref().map_or(0, |c| c.width()),
        canvas_height: canvas.as_ref().map_or(0, |c| c.height()),
        timings,
        total_time: start.elapsed().as_secs_f64(),
    };
    Ok(StitchOutcome {
        report,
        matches,
        registration,
        canvas,
    })
}
