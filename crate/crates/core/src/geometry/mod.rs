//! Calibrated camera models and the projective and epipolar primitives used
//! by association and triangulation.
//!
//! All functions here are pure. Pixel coordinates passed to [`triangulate_dlt`]
//! and the epipolar functions are ideal pinhole coordinates; fisheye
//! observations are undistorted once at ingestion.

mod camera;
mod dlt;
mod epipolar;

pub use camera::{look_at_rotation, CameraCalibration, CameraModel, MIN_DEPTH, ROTATION_TOLERANCE};
pub use dlt::triangulate_dlt;
pub use epipolar::{epipolar_line, fundamental_matrix, point_line_distance, relative_pose, EpipolarLine};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("camera {camera_id}: {reason}")]
    InvalidCamera { camera_id: String, reason: String },
    #[error("point behind camera {camera_id} (depth {depth:.3e} m)")]
    PointBehindCamera { camera_id: String, depth: f64 },
    #[error("undistortion did not converge for camera {camera_id} (residual {residual_px:.3e} px)")]
    NonConvergence { camera_id: String, residual_px: f64 },
    #[error("degenerate triangulation geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("triangulation needs at least 2 weighted observations, got {0}")]
    TooFewObservations(usize),
    #[error("{weights} weights given for {observations} observations")]
    WeightMismatch { observations: usize, weights: usize },
    #[error("weights must be finite and nonnegative")]
    InvalidWeight,
    #[error("cameras {camera_a} and {camera_b} share a center; epipolar geometry undefined")]
    CoincidentCenters { camera_a: String, camera_b: String },
    #[error("point maps to the epipole; epipolar line undefined")]
    DegenerateLine,
}
