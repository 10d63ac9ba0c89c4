use nalgebra::{Matrix3, Point3, Vector3};

use super::MatchingError;

const MIN_SOURCE_VARIANCE: f64 = 1e-12;

/// `x ↦ scale · rotation · x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcrustesFit {
    pub transform: Similarity,
    /// Mean distance between target and aligned source over the masked joints, millimetres.
    pub mean_residual_mm: f64,
    pub joints_used: usize,
}

/// Least-squares similarity aligning `source` onto `target` (meters).
///
/// Closed form from the SVD of the centered cross-covariance, with the sign of
/// the last singular direction flipped when needed so the rotation is proper.
/// Only joints whose `mask` entry is set take part.
pub fn procrustes_align(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    mask: &[bool],
) -> Result<ProcrustesFit, MatchingError> {
    let idx = masked(source, target, mask)?;
    let weights = vec![1.0; idx.len()];
    let transform = weighted_similarity(source, target, &idx, &weights)?;
    Ok(fit(source, target, &idx, transform))
}

/// Similarity minimizing the mean (not squared) distance of aligned joints.
///
/// Starts from the better of the identity and the least-squares fit, then
/// runs iteratively reweighted least squares with weights `1 / residual`.
/// Each step minimizes a quadratic upper bound of the mean distance, so the
/// objective never increases: the result is never worse than either start.
pub fn procrustes_align_mean_distance(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    mask: &[bool],
) -> Result<ProcrustesFit, MatchingError> {
    const MAX_ITERATIONS: usize = 1000;
    const RESIDUAL_FLOOR_M: f64 = 1e-12;
    let idx = masked(source, target, mask)?;
    let least_squares = fit(source, target, &idx, weighted_similarity(source, target, &idx, &vec![1.0; idx.len()])?);
    let identity = fit(source, target, &idx, Similarity::identity());
    let mut best = if identity.mean_residual_mm < least_squares.mean_residual_mm { identity } else { least_squares };
    for _ in 0..MAX_ITERATIONS {
        if best.mean_residual_mm < 1e-9 {
            break;
        }
        let weights: Vec<f64> = idx
            .iter()
            .map(|&j| 1.0 / (target[j] - best.transform.apply(&source[j])).norm().max(RESIDUAL_FLOOR_M))
            .collect();
        let Ok(next) = weighted_similarity(source, target, &idx, &weights).map(|t| fit(source, target, &idx, t)) else { break };
        let gain = best.mean_residual_mm - next.mean_residual_mm;
        if gain <= 0.0 {
            break;
        }
        best = next;
    }
    Ok(best)
}

fn masked(source: &[Point3<f64>], target: &[Point3<f64>], mask: &[bool]) -> Result<Vec<usize>, MatchingError> {
    if source.len() != target.len() || source.len() != mask.len() {
        return Err(MatchingError::LengthMismatch { left: source.len(), right: target.len() });
    }
    let idx: Vec<usize> = (0..source.len()).filter(|&j| mask[j]).collect();
    if idx.len() < 3 {
        return Err(MatchingError::DegenerateConfiguration(format!("{} valid joints (need 3)", idx.len())));
    }
    Ok(idx)
}

fn fit(source: &[Point3<f64>], target: &[Point3<f64>], idx: &[usize], transform: Similarity) -> ProcrustesFit {
    let residual = idx.iter().map(|&j| (target[j] - transform.apply(&source[j])).norm()).sum::<f64>() / idx.len() as f64;
    ProcrustesFit { transform, mean_residual_mm: residual * 1000.0, joints_used: idx.len() }
}

fn weighted_similarity(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    idx: &[usize],
    weights: &[f64],
) -> Result<Similarity, MatchingError> {
    let total: f64 = weights.iter().sum();
    let mu_s = idx.iter().zip(weights).map(|(&j, &w)| w * source[j].coords).sum::<Vector3<f64>>() / total;
    let mu_t = idx.iter().zip(weights).map(|(&j, &w)| w * target[j].coords).sum::<Vector3<f64>>() / total;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (&j, &w) in idx.iter().zip(weights) {
        let ds = source[j].coords - mu_s;
        let dt = target[j].coords - mu_t;
        cov += w * dt * ds.transpose();
        var_s += w * ds.norm_squared();
    }
    cov /= total;
    var_s /= total;
    if !(var_s >= MIN_SOURCE_VARIANCE) {
        return Err(MatchingError::DegenerateConfiguration(format!("source variance {var_s:.3e} m²")));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(MatchingError::DegenerateConfiguration("SVD failed".into())),
    };
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let smallest = svd.singular_values.imin();
        signs[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = svd.singular_values.component_mul(&signs).sum() / var_s;
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(Similarity { scale, rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn skeleton() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.05, 1.5),
            Point3::new(0.02, 0.0, 1.75),
            Point3::new(-0.2, 0.0, 1.45),
            Point3::new(0.2, 0.03, 1.45),
            Point3::new(-0.35, 0.1, 1.2),
            Point3::new(0.1, 0.0, 0.5),
            Point3::new(-0.1, 0.02, 0.08),
        ]
    }

    #[test]
    fn identity_alignment() {
        let s = skeleton();
        let fit = procrustes_align(&s, &s, &[true; 8]).unwrap();
        assert!((fit.transform.scale - 1.0).abs() < 1e-12);
        assert!((fit.transform.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(fit.transform.translation.norm() < 1e-12);
        assert!(fit.mean_residual_mm < 1e-9);
    }

    #[test]
    fn recovers_known_similarity() {
        let s = skeleton();
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let t = Vector3::new(1.0, 2.0, 3.0);
        let target: Vec<_> = s.iter().map(|p| Point3::from(2.0 * (r * p.coords) + t)).collect();
        let fit = procrustes_align(&s, &target, &[true; 8]).unwrap();
        assert!((fit.transform.scale - 2.0).abs() < 1e-12);
        assert!((fit.transform.rotation - r).norm() < 1e-12);
        assert!((fit.transform.translation - t).norm() < 1e-12);
        assert!(fit.mean_residual_mm < 1e-9);
    }

    #[test]
    fn reflection_is_excluded() {
        let s = skeleton();
        let mirrored: Vec<_> = s.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let fit = procrustes_align(&s, &mirrored, &[true; 8]).unwrap();
        assert!(fit.mean_residual_mm > 1.0);
        assert!((fit.transform.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_and_degenerate_inputs() {
        let s = skeleton();
        let mut mask = [false; 8];
        mask[0] = true;
        mask[1] = true;
        assert!(matches!(procrustes_align(&s, &s, &mask), Err(MatchingError::DegenerateConfiguration(_))));
        let flat = vec![Point3::new(1.0, 1.0, 1.0); 5];
        assert!(procrustes_align(&flat, &flat, &[true; 5]).is_err());
        // masked-out joints do not influence the fit
        let mut target = s.clone();
        target[7] = Point3::new(50.0, 50.0, 50.0);
        let mut mask = [true; 8];
        mask[7] = false;
        assert!(procrustes_align(&s, &target, &mask).unwrap().mean_residual_mm < 1e-9);
    }

    #[test]
    fn mean_distance_fit_never_loses_to_identity_or_least_squares() {
        let s = skeleton();
        // one joint far off: least squares spreads the error, the mean-distance fit does not
        let mut target = s.clone();
        target[2].x += 0.4;
        let ls = procrustes_align(&s, &target, &[true; 8]).unwrap();
        let md = procrustes_align_mean_distance(&s, &target, &[true; 8]).unwrap();
        assert!(md.mean_residual_mm <= ls.mean_residual_mm);
        assert!(md.mean_residual_mm <= 400.0 / 8.0 + 1e-9);
        let r = Rotation3::from_euler_angles(0.3, 0.1, -1.0).into_inner();
        let moved: Vec<_> = s.iter().map(|p| Point3::from(1.2 * (r * p.coords) + Vector3::new(3.0, 0.0, 1.0))).collect();
        assert!(procrustes_align_mean_distance(&s, &moved, &[true; 8]).unwrap().mean_residual_mm < 1e-9);
    }
}
