use nalgebra::{DMatrix, Matrix3, Point2, Point3};

use super::{CameraCalibration, GeometryError};

/// Relative gap between the two smallest singular values below which the
/// null space of the DLT system is taken to be at least two-dimensional.
const SINGULAR_GAP_TOLERANCE: f64 = 1e-12;
const MIN_BASELINE: f64 = 1e-9;

/// Linear triangulation of one world point from calibrated observations.
///
/// Observations are ideal (undistorted) pixel coordinates. Every view adds
/// the two rows `x·P₃ − P₁` and `y·P₃ − P₂`, built from Hartley-normalized
/// coordinates and multiplied by the view's weight (1 when `weights` is
/// `None`). Weights are rescaled by their maximum first, which leaves the
/// least-squares solution unchanged and makes uniform weights bit-identical
/// to the unweighted call.
pub fn triangulate_dlt(
    observations: &[(&CameraCalibration, Point2<f64>)],
    weights: Option<&[f64]>,
) -> Result<Point3<f64>, GeometryError> {
    if observations.len() < 2 {
        return Err(GeometryError::TooFewObservations(observations.len()));
    }
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != observations.len() {
                return Err(GeometryError::WeightMismatch {
                    observations: observations.len(),
                    weights: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(GeometryError::InvalidWeight);
            }
            let max = w.iter().cloned().fold(0.0, f64::max);
            if w.iter().filter(|&&v| v > 0.0).count() < 2 {
                return Err(GeometryError::TooFewObservations(w.iter().filter(|&&v| v > 0.0).count()));
            }
            w.iter().map(|v| v / max).collect()
        }
        None => vec![1.0; observations.len()],
    };

    let active: Vec<usize> = (0..observations.len()).filter(|&i| weights[i] > 0.0).collect();
    let first_center = observations[active[0]].0.center();
    if active
        .iter()
        .all(|&i| (observations[i].0.center() - first_center).norm() <= MIN_BASELINE)
    {
        return Err(GeometryError::DegenerateGeometry("camera centers coincide"));
    }

    let norm = hartley_normalization(active.iter().map(|&i| &observations[i].1));
    let mut design = DMatrix::<f64>::zeros(2 * observations.len(), 4);
    for (i, ((camera, pixel), w)) in observations.iter().zip(&weights).enumerate() {
        if *w == 0.0 {
            continue;
        }
        let p = norm * camera.projection_matrix();
        let x = norm[(0, 0)] * pixel.x + norm[(0, 2)];
        let y = norm[(1, 1)] * pixel.y + norm[(1, 2)];
        let row_x = (p.row(2) * x - p.row(0)) * *w;
        let row_y = (p.row(2) * y - p.row(1)) * *w;
        design.row_mut(2 * i).copy_from(&row_x);
        design.row_mut(2 * i + 1).copy_from(&row_y);
    }

    let svd = design.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(GeometryError::DegenerateGeometry("SVD did not converge"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if sv(0) <= 0.0 || sv(2) - sv(3) <= SINGULAR_GAP_TOLERANCE * sv(0) {
        return Err(GeometryError::DegenerateGeometry("rank-deficient design matrix"));
    }
    let h = v_t.row(order[3]);
    let scale = h.norm();
    if h[3].abs() <= SINGULAR_GAP_TOLERANCE * scale {
        return Err(GeometryError::DegenerateGeometry("point at infinity (parallel rays)"));
    }
    Ok(Point3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Similarity taking the points to zero centroid and mean distance √2.
fn hartley_normalization<'a>(points: impl Iterator<Item = &'a Point2<f64>> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points.map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}
