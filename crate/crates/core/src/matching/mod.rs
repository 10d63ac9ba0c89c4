//! Cross-view association: geometric pair filters, shape cost, per-camera-pair
//! assignment, disjoint-set clustering and same-view conflict removal.

mod candidates;
mod clustering;
mod filters;
mod hungarian;
mod procrustes;

pub use candidates::{assign_matches, associate, build_candidates, build_candidates_with_stats, Association, CascadeStats};
pub use clustering::{cluster_detections, resolve_conflicts, UnionFind};
pub use filters::{bbox_reprojection_error, keypoint_epipolar_distance, mesh_epipolar_distance, pa_mpjpe_cost};
pub use hungarian::{hungarian_assign, CostMatrix};
pub use procrustes::{procrustes_align, procrustes_align_mean_distance, ProcrustesFit, Similarity};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DetectionRef;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("every vertex sits on the epipole")]
    EmptyVertexSet,
    #[error("only {0} keypoints valid in both views (need 3)")]
    TooFewKeypoints(usize),
    #[error("view {0} has no calibration in the rig")]
    UnknownView(String),
}

/// A cross-view detection pair; `a.view_id < b.view_id` always holds.
///
/// Filter values stay `None` when the filter was disabled or never reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: DetectionRef,
    pub b: DetectionRef,
    pub bbox_reproj_err: Option<f64>,
    pub mesh_epi_dist: Option<f64>,
    pub pa_cost: Option<f64>,
}

impl CandidatePair {
    /// Orders the two references canonically; `None` for same-view pairs.
    pub fn new(x: DetectionRef, y: DetectionRef) -> Option<Self> {
        let (a, b) = match x.view_id.cmp(&y.view_id) {
            std::cmp::Ordering::Less => (x, y),
            std::cmp::Ordering::Greater => (y, x),
            std::cmp::Ordering::Equal => return None,
        };
        Some(Self { a, b, bbox_reproj_err: None, mesh_epi_dist: None, pa_cost: None })
    }
}

/// Detections believed to show one person.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonCluster {
    pub members: BTreeSet<DetectionRef>,
    /// Largest shape cost (mm) among the accepted matches touching each member.
    pub member_costs: BTreeMap<DetectionRef, f64>,
}

impl PersonCluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distinct views, sorted.
    pub fn views(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.members.iter().map(|m| m.view_id.as_str()).collect();
        v.dedup();
        v
    }

    pub fn is_conflict_free(&self) -> bool {
        self.views().len() == self.members.len()
    }
}
