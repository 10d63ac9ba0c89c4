use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::clustering::{cluster_detections, resolve_conflicts};
use super::filters::{bbox_reprojection_error, keypoint_epipolar_distance, mesh_epipolar_distance, pa_mpjpe_cost};
use super::hungarian::{hungarian_assign, CostMatrix};
use super::{CandidatePair, MatchingError, PersonCluster};
use crate::data::{Detection, DetectionRef, EpipolarFeature, FrameDetections, PipelineConfig, Rig};
use crate::geometry::fundamental_matrix;

/// Pair counts and wall time spent in each stage of the filter cascade.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub pairs_total: usize,
    pub pairs_after_a: usize,
    pub pairs_after_b: usize,
    #[serde(skip)]
    pub filter_a: Duration,
    #[serde(skip)]
    pub filter_b: Duration,
    #[serde(skip)]
    pub cost: Duration,
}

/// Candidate pairs surviving the enabled filters, with their shape costs.
pub fn build_candidates(frame: &FrameDetections, rig: &Rig, config: &PipelineConfig) -> Result<Vec<CandidatePair>, MatchingError> {
    build_candidates_with_stats(frame, rig, config).map(|(c, _)| c)
}

fn passes(value: f64, tau: f64) -> bool {
    value <= tau
}

pub fn build_candidates_with_stats(
    frame: &FrameDetections,
    rig: &Rig,
    config: &PipelineConfig,
) -> Result<(Vec<CandidatePair>, CascadeStats), MatchingError> {
    let mut stats = CascadeStats::default();
    let views: Vec<&String> = frame.per_view.keys().collect();
    for v in &views {
        if rig.get(v).is_none() {
            return Err(MatchingError::UnknownView(v.to_string()));
        }
    }

    // Step A over every cross-view pair, view pairs in lexicographic order.
    let started = Instant::now();
    let mut survivors: Vec<(&Detection, &Detection, CandidatePair)> = Vec::new();
    for (i, va) in views.iter().enumerate() {
        for vb in &views[i + 1..] {
            let (cam_a, cam_b) = (rig.get(va).unwrap(), rig.get(vb).unwrap());
            let mut dets_a: Vec<&Detection> = frame.per_view[*va].iter().collect();
            let mut dets_b: Vec<&Detection> = frame.per_view[*vb].iter().collect();
            dets_a.sort_by_key(|d| d.detection_id);
            dets_b.sort_by_key(|d| d.detection_id);
            for da in &dets_a {
                for db in &dets_b {
                    stats.pairs_total += 1;
                    let mut pair = CandidatePair::new(da.reference(), db.reference()).expect("distinct views");
                    if config.reprojection_filter_enabled {
                        let e = bbox_reprojection_error(da, db, cam_a, cam_b);
                        pair.bbox_reproj_err = Some(e);
                        if !passes(e, config.tau_reproj_bbox) {
                            continue;
                        }
                    }
                    survivors.push((da, db, pair));
                }
            }
        }
    }
    stats.pairs_after_a = survivors.len();
    stats.filter_a = started.elapsed();

    // Step B, one fundamental matrix per camera pair.
    let started = Instant::now();
    if config.epipolar_feature != EpipolarFeature::None {
        let mut fundamentals = BTreeMap::new();
        survivors.retain_mut(|(da, db, pair)| {
            let f = fundamentals
                .entry((pair.a.view_id.clone(), pair.b.view_id.clone()))
                .or_insert_with(|| {
                    let (cam_a, cam_b) = (rig.get(&pair.a.view_id).unwrap(), rig.get(&pair.b.view_id).unwrap());
                    fundamental_matrix(cam_a, cam_b).ok()
                });
            let d = f.map_or(f64::INFINITY, |f| epipolar_distance(da, db, &f, config));
            pair.mesh_epi_dist = Some(d);
            passes(d, config.tau_mesh)
        });
    }
    stats.pairs_after_b = survivors.len();
    stats.filter_b = started.elapsed();

    let started = Instant::now();
    let candidates = survivors
        .into_iter()
        .map(|(da, db, mut pair)| {
            pair.pa_cost = pa_mpjpe_cost(da, db).ok();
            pair
        })
        .collect();
    stats.cost = started.elapsed();
    Ok((candidates, stats))
}

fn epipolar_distance(da: &Detection, db: &Detection, f: &nalgebra::Matrix3<f64>, config: &PipelineConfig) -> f64 {
    let one_way = |x: &Detection, y: &Detection, f: &nalgebra::Matrix3<f64>| match config.epipolar_feature {
        EpipolarFeature::DenseMesh => mesh_epipolar_distance(x, y, f, config.mesh_vertex_stride),
        EpipolarFeature::SparseKeypoints => keypoint_epipolar_distance(x, y, f),
        EpipolarFeature::None => Ok(0.0),
    };
    let forward = one_way(da, db, f).unwrap_or(f64::INFINITY);
    if !config.symmetric_epipolar {
        return forward;
    }
    let backward = one_way(db, da, &f.transpose()).unwrap_or(f64::INFINITY);
    0.5 * (forward + backward)
}

/// Runs an optimal one-to-one assignment per camera pair and returns the
/// accepted pairs. Pairs without a shape cost never match.
pub fn assign_matches(candidates: &[CandidatePair]) -> Vec<CandidatePair> {
    let mut by_views: BTreeMap<(&str, &str), Vec<&CandidatePair>> = BTreeMap::new();
    for c in candidates {
        by_views.entry((&c.a.view_id, &c.b.view_id)).or_default().push(c);
    }
    let mut accepted = Vec::new();
    for group in by_views.values() {
        let mut rows: Vec<&DetectionRef> = group.iter().map(|c| &c.a).collect();
        let mut cols: Vec<&DetectionRef> = group.iter().map(|c| &c.b).collect();
        rows.sort();
        rows.dedup();
        cols.sort();
        cols.dedup();
        let mut costs = CostMatrix::forbidden(rows.len(), cols.len());
        let mut lookup = BTreeMap::new();
        for c in group {
            let r = rows.binary_search(&&c.a).unwrap();
            let k = cols.binary_search(&&c.b).unwrap();
            costs.set(r, k, c.pa_cost);
            lookup.insert((r, k), *c);
        }
        accepted.extend(hungarian_assign(&costs).into_iter().map(|rc| lookup[&rc].clone()));
    }
    accepted
}

/// Everything the association stage produces for one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Association {
    pub candidates: Vec<CandidatePair>,
    pub matches: Vec<CandidatePair>,
    /// Union-Find components before conflict removal, singletons included.
    pub raw_clusters: Vec<PersonCluster>,
    /// Conflict-free clusters spanning at least `k_min` views.
    pub clusters: Vec<PersonCluster>,
    pub stats: CascadeStats,
    pub assignment_time: Duration,
}

/// Filter cascade, assignment, clustering and conflict removal for one frame.
pub fn associate(frame: &FrameDetections, rig: &Rig, config: &PipelineConfig) -> Result<Association, MatchingError> {
    let (candidates, stats) = build_candidates_with_stats(frame, rig, config)?;
    let started = Instant::now();
    let matches = assign_matches(&candidates);
    let refs: Vec<DetectionRef> = frame.detections().map(Detection::reference).collect();
    let raw_clusters = cluster_detections(&refs, &matches);
    let clusters = resolve_conflicts(&raw_clusters, config.k_min);
    Ok(Association { candidates, matches, raw_clusters, clusters, stats, assignment_time: started.elapsed() })
}
