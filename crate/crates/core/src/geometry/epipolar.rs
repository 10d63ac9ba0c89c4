use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraCalibration, GeometryError};

const MIN_BASELINE: f64 = 1e-9;
const MIN_LINE_NORM_SQ: f64 = 1e-18;

/// Image line `a·x + b·y + c = 0` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpipolarLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EpipolarLine {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        if a * a + b * b <= MIN_LINE_NORM_SQ || !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(GeometryError::DegenerateLine);
        }
        Ok(Self { a, b, c })
    }

    /// Endpoints of the line segment inside `[0, width] × [0, height]`.
    pub fn clip_to_image(&self, width: f64, height: f64) -> Option<(Point2<f64>, Point2<f64>)> {
        let mut hits: Vec<Point2<f64>> = Vec::with_capacity(4);
        let mut push = |p: Point2<f64>| {
            if p.x >= -1e-9 && p.x <= width + 1e-9 && p.y >= -1e-9 && p.y <= height + 1e-9
                && !hits.iter().any(|q| (q - p).norm() < 1e-9)
            {
                hits.push(p);
            }
        };
        if self.b.abs() > 0.0 {
            for x in [0.0, width] {
                push(Point2::new(x, -(self.a * x + self.c) / self.b));
            }
        }
        if self.a.abs() > 0.0 {
            for y in [0.0, height] {
                push(Point2::new(-(self.b * y + self.c) / self.a, y));
            }
        }
        match hits.len() {
            0 | 1 => None,
            _ => Some((hits[0], hits[1])),
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Relative pose `(R_ab, t_ab)` mapping camera-a coordinates into camera b.
pub fn relative_pose(cam_a: &CameraCalibration, cam_b: &CameraCalibration) -> (Matrix3<f64>, Vector3<f64>) {
    let r_ab = cam_b.rotation() * cam_a.rotation().transpose();
    let t_ab = cam_b.translation() - r_ab * cam_a.translation();
    (r_ab, t_ab)
}

/// Fundamental matrix `F = K_b⁻ᵀ [t_ab]ₓ R_ab K_a⁻¹` scaled to unit Frobenius norm.
///
/// Satisfies `x̃_bᵀ F x̃_a = 0` for ideal pixel correspondences.
pub fn fundamental_matrix(cam_a: &CameraCalibration, cam_b: &CameraCalibration) -> Result<Matrix3<f64>, GeometryError> {
    let (r_ab, t_ab) = relative_pose(cam_a, cam_b);
    if t_ab.norm() <= MIN_BASELINE {
        return Err(GeometryError::CoincidentCenters {
            camera_a: cam_a.camera_id().to_owned(),
            camera_b: cam_b.camera_id().to_owned(),
        });
    }
    let f = cam_b.intrinsics_inv().transpose() * skew(&t_ab) * r_ab * cam_a.intrinsics_inv();
    Ok(f / f.norm())
}

/// Epipolar line `F · (x, y, 1)ᵀ` in the second view.
pub fn epipolar_line(f: &Matrix3<f64>, point: &Point2<f64>) -> Result<EpipolarLine, GeometryError> {
    let l = f * Vector3::new(point.x, point.y, 1.0);
    EpipolarLine::new(l.x, l.y, l.z)
}

/// `|a·x + b·y + c| / √(a² + b²)`.
pub fn point_line_distance(point: &Point2<f64>, line: &EpipolarLine) -> f64 {
    (line.a * point.x + line.b * point.y + line.c).abs() / (line.a * line.a + line.b * line.b).sqrt()
}
