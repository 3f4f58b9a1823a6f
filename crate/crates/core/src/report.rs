//! JSON run reports.
//!
//! Every numeric field is always present; failed registrations report zeros
//! with `accepted: false`.

use serde::{Deserialize, Serialize};

use crate::registration::RegistrationResult;

/// Wall time in seconds of the four pipeline stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub detection: f64,
    pub description: f64,
    pub matching: f64,
    pub stitching: f64,
}

impl StageTimes {
    pub fn sum(&self) -> f64 {
        self.detection + self.description + self.matching + self.stitching
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub id: String,
    pub nr: usize,
    pub nc: usize,
    pub features: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub accepted: bool,
    pub theta_deg: f64,
    pub t_x: f64,
    pub t_y: f64,
    pub inliers: usize,
    pub pairs_in: usize,
    pub residual_rms: f64,
}

impl RegistrationReport {
    pub fn new(result: Option<&RegistrationResult>, pairs_in: usize) -> Self {
        match result {
            Some(r) => Self {
                accepted: true,
                theta_deg: r.transform.theta_deg(),
                t_x: r.transform.tx,
                t_y: r.transform.ty,
                inliers: r.inliers.len(),
                pairs_in,
                residual_rms: r.residual_rms,
            },
            None => Self {
                pairs_in,
                ..Self::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub success: bool,
    pub error: Option<String>,
    pub images: Vec<ImageSummary>,
    pub matched_pairs: usize,
    pub registration: RegistrationReport,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub timings: StageTimes,
    pub total_time: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
