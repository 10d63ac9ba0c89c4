use nalgebra::{Matrix3, Matrix3x4, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Tolerance on `RᵀR − I` and `det R − 1` accepted at validation time.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Depth (camera-frame Z, meters) at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const UNDISTORT_MAX_ITERATIONS: usize = 20;
const UNDISTORT_TARGET_PX: f64 = 1e-6;
const UNDISTORT_REJECT_PX: f64 = 1e-3;

/// Lens model of a calibrated camera.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    Pinhole,
    /// Equidistant fisheye: `θd = θ (1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸)`.
    FisheyeEquidistant,
}

impl CameraModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CameraModel::Pinhole => "pinhole",
            CameraModel::FisheyeEquidistant => "fisheye_equidistant",
        }
    }
}

/// Intrinsics, world→camera extrinsics and lens distortion of one view.
///
/// Construct through [`CameraCalibration::new`], which enforces the model
/// invariants (orthonormal `R` with `det R = +1`, upper-triangular `K` with
/// positive focal lengths, non-empty image).
#[derive(Clone, Debug, PartialEq)]
pub struct CameraCalibration {
    camera_id: String,
    intrinsics: Matrix3<f64>,
    intrinsics_inv: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    distortion: Vec<f64>,
    model: CameraModel,
    image_size: (u32, u32),
}

impl CameraCalibration {
    pub fn new(
        camera_id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        distortion: Vec<f64>,
        model: CameraModel,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let camera_id = camera_id.into();
        let invalid = |reason: String| GeometryError::InvalidCamera {
            camera_id: camera_id.clone(),
            reason,
        };

        if !intrinsics.iter().chain(rotation.iter()).chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(invalid("non-finite matrix entry".into()));
        }
        if intrinsics[(1, 0)] != 0.0 || intrinsics[(2, 0)] != 0.0 || intrinsics[(2, 1)] != 0.0 {
            return Err(invalid("K is not upper-triangular".into()));
        }
        if intrinsics[(0, 0)] <= 0.0 || intrinsics[(1, 1)] <= 0.0 {
            return Err(invalid("K focal entries must be positive".into()));
        }
        if intrinsics[(2, 2)] != 1.0 {
            return Err(invalid("K[2,2] must equal 1".into()));
        }
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if orth > ROTATION_TOLERANCE {
            return Err(invalid(format!("R is not orthonormal (|RᵀR − I| = {orth:.3e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(invalid(format!("det R = {det} (expected +1)")));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(invalid("image size must be positive".into()));
        }
        if distortion.iter().any(|k| !k.is_finite()) {
            return Err(invalid("non-finite distortion coefficient".into()));
        }
        match model {
            CameraModel::Pinhole if distortion.iter().any(|&k| k != 0.0) => {
                return Err(invalid("pinhole model does not take distortion coefficients".into()));
            }
            CameraModel::FisheyeEquidistant if distortion.len() > 4 => {
                return Err(invalid(format!(
                    "equidistant fisheye takes at most 4 coefficients, got {}",
                    distortion.len()
                )));
            }
            _ => {}
        }
        let intrinsics_inv = intrinsics
            .try_inverse()
            .ok_or_else(|| invalid("K is singular".into()))?;

        Ok(Self {
            camera_id,
            intrinsics,
            intrinsics_inv,
            rotation,
            translation,
            distortion,
            model,
            image_size,
        })
    }

    /// Ideal pinhole camera placed at `center` with the given world→camera rotation.
    pub fn pinhole_at(
        camera_id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        center: Point3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let translation = -(rotation * center.coords);
        Self::new(camera_id, intrinsics, rotation, translation, Vec::new(), CameraModel::Pinhole, image_size)
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn intrinsics_inv(&self) -> &Matrix3<f64> {
        &self.intrinsics_inv
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn distortion(&self) -> &[f64] {
        &self.distortion
    }

    pub fn model(&self) -> CameraModel {
        self.model
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    /// Camera center in world coordinates, `C = −Rᵀ t`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// `K [R | t]` for the ideal (undistorted) image.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics * rt
    }

    pub fn world_to_camera(&self, point: &Point3<f64>) -> Vector3<f64> {
        self.rotation * point.coords + self.translation
    }

    /// True when the model's forward distortion is the identity.
    pub fn is_ideal(&self) -> bool {
        self.model == CameraModel::Pinhole || self.distortion.iter().all(|&k| k == 0.0)
    }

    /// Projects a world point into the original (distorted) image.
    pub fn project(&self, point: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        let pc = self.depth_checked(point)?;
        let (x, y) = (pc.x / pc.z, pc.y / pc.z);
        let (xd, yd) = match self.model {
            CameraModel::Pinhole => (x, y),
            CameraModel::FisheyeEquidistant => self.distort_normalized(x, y),
        };
        Ok(self.to_pixel(xd, yd))
    }

    /// Projects a world point into the ideal pinhole image (distortion removed).
    ///
    /// Detections are undistorted at load, so every association and
    /// triangulation step measures reprojection error with this projection.
    pub fn project_undistorted(&self, point: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        let pc = self.depth_checked(point)?;
        Ok(self.to_pixel(pc.x / pc.z, pc.y / pc.z))
    }

    /// World point at camera-frame depth `depth` along the ray of an original-image pixel.
    pub fn unproject(&self, pixel: &Point2<f64>, depth: f64) -> Result<Point3<f64>, GeometryError> {
        let ideal = self.undistort_point(pixel)?;
        let ray = self.intrinsics_inv * Vector3::new(ideal.x, ideal.y, 1.0);
        let pc = ray * (depth / ray.z);
        Ok(Point3::from(self.rotation.transpose() * (pc - self.translation)))
    }

    /// Maps original-image pixels to ideal pinhole pixels of the same `K`.
    pub fn undistort_points(&self, points: &[Point2<f64>]) -> Result<Vec<Point2<f64>>, GeometryError> {
        points.iter().map(|p| self.undistort_point(p)).collect()
    }

    pub fn undistort_point(&self, pixel: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        if self.is_ideal() {
            return Ok(*pixel);
        }
        let n = self.intrinsics_inv * Vector3::new(pixel.x, pixel.y, 1.0);
        let (xd, yd) = (n.x / n.z, n.y / n.z);
        let theta_d = (xd * xd + yd * yd).sqrt();
        if theta_d == 0.0 {
            return Ok(*pixel);
        }

        // Newton on θ(1 + k1θ² + …) = θd, starting from θ = θd.
        let k = self.fisheye_coefficients();
        let mut theta = theta_d;
        let mut residual_px = f64::INFINITY;
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            let (f, df) = equidistant_poly(theta, &k);
            if df.abs() < f64::EPSILON {
                break;
            }
            theta -= (f - theta_d) / df;
            residual_px = (equidistant_poly(theta, &k).0 - theta_d).abs() * self.focal_scale();
            if residual_px < UNDISTORT_TARGET_PX {
                break;
            }
        }
        if !(residual_px <= UNDISTORT_REJECT_PX) || !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
            return Err(GeometryError::NonConvergence {
                camera_id: self.camera_id.clone(),
                residual_px,
            });
        }
        let scale = theta.tan() / theta_d;
        Ok(self.to_pixel(xd * scale, yd * scale))
    }

    /// Forward equidistant distortion of normalized coordinates.
    fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r = (x * x + y * y).sqrt();
        if r == 0.0 {
            return (x, y);
        }
        let theta = r.atan();
        let (theta_d, _) = equidistant_poly(theta, &self.fisheye_coefficients());
        let scale = theta_d / r;
        (x * scale, y * scale)
    }

    fn fisheye_coefficients(&self) -> [f64; 4] {
        let mut k = [0.0; 4];
        for (dst, src) in k.iter_mut().zip(&self.distortion) {
            *dst = *src;
        }
        k
    }

    fn focal_scale(&self) -> f64 {
        0.5 * (self.intrinsics[(0, 0)] + self.intrinsics[(1, 1)])
    }

    fn to_pixel(&self, x: f64, y: f64) -> Point2<f64> {
        let p = self.intrinsics * Vector3::new(x, y, 1.0);
        Point2::new(p.x, p.y)
    }

    fn depth_checked(&self, point: &Point3<f64>) -> Result<Vector3<f64>, GeometryError> {
        let pc = self.world_to_camera(point);
        if !(pc.z > MIN_DEPTH) {
            return Err(GeometryError::PointBehindCamera {
                camera_id: self.camera_id.clone(),
                depth: pc.z,
            });
        }
        Ok(pc)
    }
}

/// `(θd(θ), dθd/dθ)` for the equidistant polynomial.
fn equidistant_poly(theta: f64, k: &[f64; 4]) -> (f64, f64) {
    let t2 = theta * theta;
    let t4 = t2 * t2;
    let t6 = t4 * t2;
    let t8 = t4 * t4;
    let value = theta * (1.0 + k[0] * t2 + k[1] * t4 + k[2] * t6 + k[3] * t8);
    let deriv = 1.0 + 3.0 * k[0] * t2 + 5.0 * k[1] * t4 + 7.0 * k[2] * t6 + 9.0 * k[3] * t8;
    (value, deriv)
}

/// World→camera rotation for a camera at `eye` looking at `target`, with
/// world `+Z` as up. Camera axes: x right, y down, z forward.
pub fn look_at_rotation(eye: &Point3<f64>, target: &Point3<f64>) -> Option<Matrix3<f64>> {
    let forward = (target - eye).try_normalize(1e-12)?;
    let up = Vector3::z();
    let right = forward.cross(&up).try_normalize(1e-12)?;
    let down = forward.cross(&right);
    Some(Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]))
}
