use nalgebra::{Matrix3, Point2};

use super::procrustes::procrustes_align;
use super::MatchingError;
use crate::data::Detection;
use crate::geometry::{epipolar_line, point_line_distance, triangulate_dlt, CameraCalibration};

/// Mean reprojection error of the triangulated bounding-box centers.
///
/// `+∞` when the two centers cannot be triangulated or the point falls
/// behind either camera.
pub fn bbox_reprojection_error(det_a: &Detection, det_b: &Detection, cam_a: &CameraCalibration, cam_b: &CameraCalibration) -> f64 {
    let (ca, cb) = (det_a.bbox.center(), det_b.bbox.center());
    let Ok(x) = triangulate_dlt(&[(cam_a, ca), (cam_b, cb)], None) else {
        return f64::INFINITY;
    };
    match (cam_a.project_undistorted(&x), cam_b.project_undistorted(&x)) {
        (Ok(pa), Ok(pb)) => 0.5 * ((pa - ca).norm() + (pb - cb).norm()),
        _ => f64::INFINITY,
    }
}

/// Mean point-to-epipolar-line distance over corresponding 2D samples,
/// lines induced by `from` in the second view, distances measured to `to`.
///
/// Samples whose line is undefined (the epipole) are skipped.
fn mean_epipolar_distance<'a>(
    pairs: impl Iterator<Item = (&'a Point2<f64>, &'a Point2<f64>)>,
    f: &Matrix3<f64>,
) -> Result<f64, MatchingError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (from, to) in pairs {
        if let Ok(line) = epipolar_line(f, from) {
            sum += point_line_distance(to, &line);
            count += 1;
        }
    }
    if count == 0 {
        return Err(MatchingError::EmptyVertexSet);
    }
    Ok(sum / count as f64)
}

/// Dense mesh epipolar distance a→b over every `stride`-th vertex.
///
/// `f_ab` maps view-a pixels to view-b lines.
pub fn mesh_epipolar_distance(det_a: &Detection, det_b: &Detection, f_ab: &Matrix3<f64>, stride: usize) -> Result<f64, MatchingError> {
    if det_a.vertex_count() != det_b.vertex_count() {
        return Err(MatchingError::LengthMismatch { left: det_a.vertex_count(), right: det_b.vertex_count() });
    }
    let stride = stride.max(1);
    mean_epipolar_distance(
        det_a.mesh_vertices_2d.iter().step_by(stride).zip(det_b.mesh_vertices_2d.iter().step_by(stride)),
        f_ab,
    )
}

/// Sparse variant of the epipolar distance over keypoints valid in both detections.
///
/// Fewer than three usable keypoints makes the pair unusable.
pub fn keypoint_epipolar_distance(det_a: &Detection, det_b: &Detection, f_ab: &Matrix3<f64>) -> Result<f64, MatchingError> {
    if det_a.joint_count() != det_b.joint_count() {
        return Err(MatchingError::LengthMismatch { left: det_a.joint_count(), right: det_b.joint_count() });
    }
    let both: Vec<_> = det_a
        .keypoints_2d
        .iter()
        .zip(&det_b.keypoints_2d)
        .filter(|(a, b)| a.valid && b.valid)
        .map(|(a, b)| (&a.position, &b.position))
        .collect();
    if both.len() < 3 {
        return Err(MatchingError::TooFewKeypoints(both.len()));
    }
    mean_epipolar_distance(both.into_iter(), f_ab)
}

/// PA-MPJPE (mm) between the camera-relative 3D keypoints, `det_b` aligned onto `det_a`.
pub fn pa_mpjpe_cost(det_a: &Detection, det_b: &Detection) -> Result<f64, MatchingError> {
    let mask = vec![true; det_a.keypoints_3d_cam.len()];
    procrustes_align(&det_b.keypoints_3d_cam, &det_a.keypoints_3d_cam, &mask).map(|fit| fit.mean_residual_mm)
}
