//! Detections, calibration rigs, ground truth and their document formats.

mod config;
mod detection;
pub mod io;

pub use config::{EpipolarFeature, PipelineConfig};
pub use detection::{filter_by_confidence, BoundingBox, Detection, DetectionRef, FrameDetections, Keypoint2D};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CameraCalibration;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error in {context}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, context: String, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("inconsistent topology: {0}")]
    InconsistentTopology(String),
    #[error("view {view_id} has no calibration in the rig")]
    UnknownView { view_id: String },
    #[error("invalid {name} = {value}")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        DataError::Validation(msg.into())
    }

    /// Line number attached to a parse or record error, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Parse { line, .. } => *line,
            _ => None,
        }
    }
}

/// Calibrated cameras keyed by id, kept in id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Rig {
    cameras: Vec<CameraCalibration>,
}

impl Rig {
    pub fn new(mut cameras: Vec<CameraCalibration>) -> Result<Self, DataError> {
        cameras.sort_by(|a, b| a.camera_id().cmp(b.camera_id()));
        if let Some(w) = cameras.windows(2).find(|w| w[0].camera_id() == w[1].camera_id()) {
            return Err(DataError::validation(format!("duplicate camera_id {}", w[0].camera_id())));
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[CameraCalibration] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn get(&self, camera_id: &str) -> Option<&CameraCalibration> {
        self.cameras
            .binary_search_by(|c| c.camera_id().cmp(camera_id))
            .ok()
            .map(|i| &self.cameras[i])
    }
}

/// One annotated person, world frame, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthPose {
    pub person_id: u32,
    pub joints: Vec<Point3<f64>>,
    pub joint_valid: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_id: u64,
    pub persons: Vec<GroundTruthPose>,
}

/// Pairs `(predicted joint index, ground-truth joint index)`; unmapped joints are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointMapping {
    pub pred_to_gt: Vec<(usize, usize)>,
}

impl JointMapping {
    pub fn identity(joints: usize) -> Self {
        Self { pred_to_gt: (0..joints).map(|j| (j, j)).collect() }
    }

    pub fn len(&self) -> usize {
        self.pred_to_gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred_to_gt.is_empty()
    }
}
