//! One frame end to end: confidence filter, association, triangulation.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::data::{filter_by_confidence, DataError, FrameDetections, PipelineConfig, Rig};
use crate::matching::{associate, Association, MatchingError};
use crate::triangulation::{reconstruct_poses, Pose3D};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub filter_a: Duration,
    pub filter_b: Duration,
    /// Shape costs, assignment, clustering and conflict removal.
    pub assignment: Duration,
    pub triangulation: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub frame_id: u64,
    pub detections_in: usize,
    pub detections_kept: usize,
    pub association: Association,
    pub poses: Vec<Pose3D>,
    pub timings: StageTimings,
}

pub fn process_frame(frame: &FrameDetections, rig: &Rig, config: &PipelineConfig) -> Result<FrameResult, PipelineError> {
    config.validate()?;
    let kept = filter_by_confidence(frame, config.tau_det)?;
    let association = associate(&kept, rig, config)?;
    let started = Instant::now();
    let poses = reconstruct_poses(&association.clusters, &kept, rig, config);
    let timings = StageTimings {
        filter_a: association.stats.filter_a,
        filter_b: association.stats.filter_b,
        assignment: association.stats.cost + association.assignment_time,
        triangulation: started.elapsed(),
    };
    Ok(FrameResult {
        frame_id: frame.frame_id,
        detections_in: frame.detection_count(),
        detections_kept: kept.detection_count(),
        association,
        poses,
        timings,
    })
}
