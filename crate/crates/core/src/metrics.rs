//! Pose accuracy and detection metrics against annotated ground truth.
//!
//! Predictions are paired with ground-truth persons per frame by minimum
//! total MPJPE; pairs above the false-positive threshold count as false
//! positives. AP at δ is precision over all emitted predictions: matched
//! pairs with MPJPE strictly below δ, divided by every prediction.

use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::io::PoseFrame;
use crate::data::{GroundTruthFrame, GroundTruthPose, JointMapping};
use crate::matching::{hungarian_assign, procrustes_align_mean_distance, CostMatrix, MatchingError};
use crate::triangulation::Pose3D;

pub const AP_THRESHOLDS_MM: [f64; 4] = [75.0, 100.0, 125.0, 150.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no joint is valid in both poses")]
    NoCommonJoints,
    #[error(transparent)]
    Alignment(#[from] MatchingError),
}

/// Jointly valid mapped joint pairs `(pred, gt)`.
fn common_joints(pred: &Pose3D, gt: &GroundTruthPose, mapping: &JointMapping) -> (Vec<Point3<f64>>, Vec<Point3<f64>>) {
    mapping
        .pred_to_gt
        .iter()
        .filter(|&&(p, g)| {
            pred.joint_valid.get(p).copied().unwrap_or(false) && gt.joint_valid.get(g).copied().unwrap_or(false)
        })
        .map(|&(p, g)| (pred.joints[p], gt.joints[g]))
        .unzip()
}

/// Mean world-frame joint distance in mm, no alignment.
pub fn mpjpe(pred: &Pose3D, gt: &GroundTruthPose, mapping: &JointMapping) -> Result<f64, MetricsError> {
    let (p, g) = common_joints(pred, gt, mapping);
    if p.is_empty() {
        return Err(MetricsError::NoCommonJoints);
    }
    Ok(1000.0 * p.iter().zip(&g).map(|(a, b)| (a - b).norm()).sum::<f64>() / p.len() as f64)
}

/// MPJPE after similarity-aligning the prediction onto the ground truth, mm.
///
/// The alignment minimizes the mean joint distance itself, so the result never
/// exceeds [`mpjpe`]; for exact similarity copies it matches the least-squares fit.
pub fn pa_mpjpe_metric(pred: &Pose3D, gt: &GroundTruthPose, mapping: &JointMapping) -> Result<f64, MetricsError> {
    let (p, g) = common_joints(pred, gt, mapping);
    let mask = vec![true; p.len()];
    Ok(procrustes_align_mean_distance(&p, &g, &mask)?.mean_residual_mm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub mpjpe_mm: f64,
    /// `None` when fewer than three joints are shared.
    pub pa_mpjpe_mm: Option<f64>,
    pub true_positive: bool,
}

/// Outcome of pairing one frame's predictions with its ground truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl FrameMatch {
    pub fn true_positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.true_positive).count()
    }

    /// Matched pairs above the threshold plus unmatched predictions.
    pub fn false_positives(&self) -> usize {
        self.pairs.len() - self.true_positives() + self.unmatched_preds.len()
    }

    /// Ground-truth persons without a true-positive match.
    pub fn false_negatives(&self) -> usize {
        self.unmatched_gts.len() + self.pairs.len() - self.true_positives()
    }

    pub fn prediction_count(&self) -> usize {
        self.pairs.len() + self.unmatched_preds.len()
    }
}

/// Minimum-total-MPJPE pairing; pairs with MPJPE ≤ `fp_threshold_mm` are true positives.
pub fn match_predictions_to_gt(
    preds: &[Pose3D],
    gts: &[GroundTruthPose],
    mapping: &JointMapping,
    fp_threshold_mm: f64,
) -> FrameMatch {
    let mut costs = CostMatrix::forbidden(preds.len(), gts.len());
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            costs.set(i, j, mpjpe(p, g, mapping).ok());
        }
    }
    let assignment = hungarian_assign(&costs);
    let pairs: Vec<MatchedPair> = assignment
        .iter()
        .map(|&(i, j)| {
            let e = costs.get(i, j).expect("assigned entries are allowed");
            MatchedPair {
                pred: i,
                gt: j,
                mpjpe_mm: e,
                pa_mpjpe_mm: pa_mpjpe_metric(&preds[i], &gts[j], mapping).ok(),
                true_positive: e <= fp_threshold_mm,
            }
        })
        .collect();
    FrameMatch {
        unmatched_preds: (0..preds.len()).filter(|i| !assignment.iter().any(|p| p.0 == *i)).collect(),
        unmatched_gts: (0..gts.len()).filter(|j| !assignment.iter().any(|p| p.1 == *j)).collect(),
        pairs,
    }
}

/// Percentage of predictions matched with MPJPE < `delta_mm`; `None` without predictions.
pub fn ap_at(matches: &[FrameMatch], delta_mm: f64) -> Option<f64> {
    let total: usize = matches.iter().map(FrameMatch::prediction_count).sum();
    if total == 0 {
        return None;
    }
    let hits = matches
        .iter()
        .flat_map(|m| &m.pairs)
        .filter(|p| p.true_positive && p.mpjpe_mm < delta_mm)
        .count();
    Some(100.0 * hits as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gt_total: usize,
    pub matched_tp: usize,
    pub unmatched_pred_fp: usize,
    pub unmatched_gt_fn: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApEntry {
    pub delta_mm: f64,
    pub ap_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: u64,
    pub counts: Counts,
    /// MPJPE of each true positive, in match order.
    pub tp_mpjpe_mm: Vec<f64>,
}

/// Pooled sequence metrics; error statistics are over true-positive person instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe_mean_mm: Option<f64>,
    pub mpjpe_median_mm: Option<f64>,
    pub pa_mpjpe_mean_mm: Option<f64>,
    pub pa_mpjpe_median_mm: Option<f64>,
    pub recall_pct: Option<f64>,
    pub ap: Vec<ApEntry>,
    pub counts: Counts,
    pub frames: Vec<FrameReport>,
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Evaluates every ground-truth frame; prediction frames without ground truth are ignored
/// and ground-truth frames without predictions count every person as missed.
pub fn evaluate_sequence(
    predictions: &[PoseFrame],
    ground_truth: &[GroundTruthFrame],
    mapping: &JointMapping,
    fp_threshold_mm: f64,
) -> EvalReport {
    let by_frame: BTreeMap<u64, &PoseFrame> = predictions.iter().map(|f| (f.frame_id, f)).collect();
    let mut gts: Vec<&GroundTruthFrame> = ground_truth.iter().collect();
    gts.sort_by_key(|g| g.frame_id);

    let mut matches = Vec::with_capacity(gts.len());
    let mut frames = Vec::with_capacity(gts.len());
    let mut totals = Counts::default();
    let (mut errors, mut pa_errors) = (Vec::new(), Vec::new());
    for gt in gts {
        let preds = by_frame.get(&gt.frame_id).map_or(&[][..], |f| &f.poses[..]);
        let m = match_predictions_to_gt(preds, &gt.persons, mapping, fp_threshold_mm);
        let counts = Counts {
            gt_total: gt.persons.len(),
            matched_tp: m.true_positives(),
            unmatched_pred_fp: m.false_positives(),
            unmatched_gt_fn: m.false_negatives(),
        };
        totals.gt_total += counts.gt_total;
        totals.matched_tp += counts.matched_tp;
        totals.unmatched_pred_fp += counts.unmatched_pred_fp;
        totals.unmatched_gt_fn += counts.unmatched_gt_fn;
        let tp: Vec<&MatchedPair> = m.pairs.iter().filter(|p| p.true_positive).collect();
        errors.extend(tp.iter().map(|p| p.mpjpe_mm));
        pa_errors.extend(tp.iter().filter_map(|p| p.pa_mpjpe_mm));
        frames.push(FrameReport { frame_id: gt.frame_id, counts, tp_mpjpe_mm: tp.iter().map(|p| round6(p.mpjpe_mm)).collect() });
        matches.push(m);
    }

    let recall = (totals.gt_total > 0).then(|| 100.0 * totals.matched_tp as f64 / totals.gt_total as f64);
    EvalReport {
        mpjpe_mean_mm: mean(&errors).map(round6),
        mpjpe_median_mm: median(&errors).map(round6),
        pa_mpjpe_mean_mm: mean(&pa_errors).map(round6),
        pa_mpjpe_median_mm: median(&pa_errors).map(round6),
        recall_pct: recall.map(round6),
        ap: AP_THRESHOLDS_MM
            .iter()
            .map(|&d| ApEntry { delta_mm: d, ap_pct: ap_at(&matches, d).map(round6) })
            .collect(),
        counts: totals,
        frames,
    }
}

/// One-line summary: Recall, MPJPE mean/median, PA-MPJPE mean/median, AP at each threshold.
pub fn format_table_row(report: &EvalReport) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
    let mut row = format!(
        "Recall {} | MPJPE {}/{} | PA-MPJPE {}/{}",
        f(report.recall_pct),
        f(report.mpjpe_mean_mm),
        f(report.mpjpe_median_mm),
        f(report.pa_mpjpe_mean_mm),
        f(report.pa_mpjpe_median_mm)
    );
    for a in &report.ap {
        row.push_str(&format!(" | AP@{} {}", a.delta_mm, f(a.ap_pct)));
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    fn gt(id: u32, joints: Vec<Point3<f64>>) -> GroundTruthPose {
        let n = joints.len();
        GroundTruthPose { person_id: id, joints, joint_valid: vec![true; n] }
    }

    fn pred(joints: Vec<Point3<f64>>) -> Pose3D {
        let n = joints.len();
        Pose3D {
            person_index: 0,
            joints,
            joint_valid: vec![true; n],
            joint_inlier_count: vec![2; n],
            cluster_views: vec![],
            post_fit_error_px: vec![None; n],
        }
    }

    fn skeleton(at: Vector3<f64>) -> Vec<Point3<f64>> {
        [(0.0, 0.0, 1.0), (0.0, 0.1, 1.5), (0.2, 0.0, 1.4), (-0.2, 0.05, 1.4), (0.1, 0.0, 0.1), (-0.1, 0.02, 0.5)]
            .iter()
            .map(|&(x, y, z)| Point3::new(x, y, z) + at)
            .collect()
    }

    fn shifted(p: &[Point3<f64>], d: Vector3<f64>) -> Vec<Point3<f64>> {
        p.iter().map(|q| q + d).collect()
    }

    #[test]
    fn mpjpe_basic_values() {
        let s = skeleton(Vector3::zeros());
        let map = JointMapping::identity(6);
        assert_eq!(mpjpe(&pred(s.clone()), &gt(0, s.clone()), &map).unwrap(), 0.0);
        let e = mpjpe(&pred(shifted(&s, Vector3::new(0.01, 0.0, 0.0))), &gt(0, s.clone()), &map).unwrap();
        assert!((e - 10.0).abs() < 1e-9);
        // J = 3 by hand: distances 0.003, 0.004 (3-4-5 → 0.005), 0
        let g = gt(0, vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)]);
        let p = pred(vec![Point3::new(0.003, 0.0, 0.0), Point3::new(1.003, 0.004, 0.0), Point3::new(0.0, 1.0, 0.0)]);
        assert!((mpjpe(&p, &g, &JointMapping::identity(3)).unwrap() - (3.0 + 5.0) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn mapping_and_validity_masks() {
        let s = skeleton(Vector3::zeros());
        let mut p = pred(shifted(&s, Vector3::new(0.02, 0.0, 0.0)));
        p.joints[0].x += 5.0;
        p.joint_valid[0] = false;
        let e = mpjpe(&p, &gt(0, s.clone()), &JointMapping::identity(6)).unwrap();
        assert!((e - 20.0).abs() < 1e-9);
        let none = JointMapping { pred_to_gt: vec![(0, 0)] };
        assert_eq!(mpjpe(&p, &gt(0, s), &none), Err(MetricsError::NoCommonJoints));
    }

    #[test]
    fn pa_absorbs_similarity() {
        let s = skeleton(Vector3::zeros());
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.0);
        let moved: Vec<_> = s.iter().map(|p| Point3::from(1.3 * (r * p.coords) + Vector3::new(4.0, 1.0, 0.0))).collect();
        let map = JointMapping::identity(6);
        assert!(pa_mpjpe_metric(&pred(moved), &gt(0, s.clone()), &map).unwrap() < 1e-9);
        assert!(pa_mpjpe_metric(&pred(shifted(&s, Vector3::new(0.1, 0.0, 0.0))), &gt(0, s), &map).unwrap() < 1e-9);
    }

    #[test]
    fn far_prediction_is_a_false_positive() {
        let a = skeleton(Vector3::zeros());
        let b = skeleton(Vector3::new(3.0, 0.0, 0.0));
        let map = JointMapping::identity(6);
        let gts = [gt(0, a.clone()), gt(1, b.clone())];
        let m = match_predictions_to_gt(&[pred(a.clone()), pred(b.clone())], &gts, &map, 500.0);
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives()), (2, 0, 0));
        let far = skeleton(Vector3::new(-2.0, 9.0, 0.0));
        let m = match_predictions_to_gt(&[pred(a), pred(b), pred(far)], &gts, &map, 500.0);
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives()), (2, 1, 0));
    }

    #[test]
    fn crossed_predictions_take_cheapest_pairing() {
        let a = skeleton(Vector3::zeros());
        let b = skeleton(Vector3::new(0.3, 0.0, 0.0));
        let gts = [gt(0, a.clone()), gt(1, b.clone())];
        // pred 0 sits near gt 1, pred 1 near gt 0
        let preds = [pred(shifted(&b, Vector3::new(0.01, 0.0, 0.0))), pred(shifted(&a, Vector3::new(0.0, 0.02, 0.0)))];
        let m = match_predictions_to_gt(&preds, &gts, &JointMapping::identity(6), 500.0);
        let got: Vec<_> = m.pairs.iter().map(|p| (p.pred, p.gt)).collect();
        assert_eq!(got, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn ap_counts_and_monotonicity() {
        let pair = |e: f64| MatchedPair { pred: 0, gt: 0, mpjpe_mm: e, pa_mpjpe_mm: None, true_positive: e <= 500.0 };
        let m = FrameMatch { pairs: vec![pair(50.0), pair(90.0), pair(130.0)], ..Default::default() };
        let ap = ap_at(std::slice::from_ref(&m), 100.0).unwrap();
        assert!((ap - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(ap_at(&[FrameMatch::default()], 100.0), None);
        let mut last = 0.0;
        for d in AP_THRESHOLDS_MM {
            let v = ap_at(std::slice::from_ref(&m), d).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn pooled_report() {
        let a = skeleton(Vector3::zeros());
        let b = skeleton(Vector3::new(4.0, 0.0, 0.0));
        let frame = GroundTruthFrame { frame_id: 7, persons: vec![gt(0, a.clone()), gt(1, b.clone())] };
        let preds = PoseFrame {
            frame_id: 7,
            poses: vec![pred(shifted(&a, Vector3::new(0.04, 0.0, 0.0))), pred(shifted(&b, Vector3::new(0.0, 0.08, 0.0)))],
        };
        let r = evaluate_sequence(&[preds], std::slice::from_ref(&frame), &JointMapping::identity(6), 500.0);
        assert_eq!(r.mpjpe_mean_mm, Some(60.0));
        assert_eq!(r.mpjpe_median_mm, Some(60.0));
        assert_eq!(r.recall_pct, Some(100.0));
        assert_eq!(r.ap.iter().map(|a| a.ap_pct).collect::<Vec<_>>(), vec![Some(50.0), Some(100.0), Some(100.0), Some(100.0)]);
        assert_eq!(r.pa_mpjpe_mean_mm, Some(0.0));

        let perfect = PoseFrame { frame_id: 7, poses: vec![pred(a), pred(b)] };
        let r = evaluate_sequence(&[perfect], std::slice::from_ref(&frame), &JointMapping::identity(6), 500.0);
        assert_eq!((r.mpjpe_mean_mm, r.mpjpe_median_mm), (Some(0.0), Some(0.0)));
        assert!(r.ap.iter().all(|a| a.ap_pct == Some(100.0)));

        let r = evaluate_sequence(&[], &[frame], &JointMapping::identity(6), 500.0);
        assert_eq!((r.recall_pct, r.counts.unmatched_gt_fn, r.mpjpe_mean_mm), (Some(0.0), 2, None));
        assert_eq!(r.ap[0].ap_pct, None);
        assert!(format_table_row(&r).starts_with("Recall 0.0 | MPJPE n/a/n/a"));
    }
}
