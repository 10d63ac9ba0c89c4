use std::io::{Read, Write};
use std::path::Path;

use courtpose_core::data::io::{read_calibration, read_detections, read_detections_lenient, write_pose_frame, PoseFrame};
use courtpose_core::data::{FrameDetections, PipelineConfig};
use courtpose_core::pipeline::{process_frame, FrameResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{create, io_err, open, CliError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub filter_a_ms: f64,
    pub filter_b_ms: f64,
    pub assignment_ms: f64,
    pub triangulation_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateCounts {
    pub pairs_total: usize,
    pub pairs_after_a: usize,
    pub pairs_after_b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: u64,
    pub detections_in: usize,
    pub detections_kept: usize,
    pub candidates: CandidateCounts,
    pub matches: usize,
    pub clusters: usize,
    pub poses: usize,
    pub timing: FrameTiming,
}

/// Everything needed to audit a run: resolved config, input digests,
/// per-frame cascade counts and stage timings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub workers: usize,
    pub totals: CandidateCounts,
    pub frames: Vec<FrameEntry>,
    pub warnings: Vec<String>,
}

fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let mut hasher = Sha256::new();
    let mut reader = open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest { path: path.display().to_string(), sha256: hex::encode(hasher.finalize()) })
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn entry(r: &FrameResult) -> FrameEntry {
    let s = &r.association.stats;
    FrameEntry {
        frame_id: r.frame_id,
        detections_in: r.detections_in,
        detections_kept: r.detections_kept,
        candidates: CandidateCounts { pairs_total: s.pairs_total, pairs_after_a: s.pairs_after_a, pairs_after_b: s.pairs_after_b },
        matches: r.association.matches.len(),
        clusters: r.association.clusters.len(),
        poses: r.poses.len(),
        timing: FrameTiming {
            filter_a_ms: ms(r.timings.filter_a),
            filter_b_ms: ms(r.timings.filter_b),
            assignment_ms: ms(r.timings.assignment),
            triangulation_ms: ms(r.timings.triangulation),
        },
    }
}

/// Confidence filter, association and triangulation over every frame.
///
/// Frames run on `workers` threads; the pose document is written in input
/// order, so its bytes do not depend on the worker count.
pub fn cmd_run(
    calibration: &Path,
    detections: &Path,
    config: &PipelineConfig,
    output: &Path,
    manifest_path: &Path,
    workers: usize,
    lenient: bool,
) -> Result<RunManifest, CliError> {
    config.validate()?;
    if workers == 0 {
        return Err(CliError::validation("--workers must be at least 1"));
    }
    let inputs = vec![digest(calibration)?, digest(detections)?];
    let rig = read_calibration(open(calibration)?)?;
    if rig.len() < 2 {
        return Err(CliError::validation(format!("rig has {} camera(s); at least 2 are required", rig.len())));
    }
    let mut warnings = Vec::new();
    let frames: Vec<FrameDetections> = if lenient {
        let load = read_detections_lenient(open(detections)?, &rig)?;
        warnings.extend(load.errors.iter().map(|e| format!("skipped frame record: {e}")));
        load.frames
    } else {
        read_detections(open(detections)?, &rig)?
    };
    if frames.is_empty() {
        warnings.push("detection document holds no frames; output is empty".into());
    }
    if config.k_min > rig.len() {
        warnings.push(format!("k_min = {} exceeds the {} cameras in the rig; no cluster can qualify", config.k_min, rig.len()));
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::other(e.to_string()))?;
    let results: Vec<FrameResult> = pool.install(|| {
        frames
            .par_iter()
            .map(|f| process_frame(f, &rig, config).map_err(|e| CliError::validation(format!("frame {}: {e}", f.frame_id))))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut out = create(output)?;
    let mut entries = Vec::with_capacity(results.len());
    let mut totals = CandidateCounts::default();
    for r in &results {
        write_pose_frame(&PoseFrame { frame_id: r.frame_id, poses: r.poses.clone() }, &mut out)?;
        let e = entry(r);
        totals.pairs_total += e.candidates.pairs_total;
        totals.pairs_after_a += e.candidates.pairs_after_a;
        totals.pairs_after_b += e.candidates.pairs_after_b;
        if r.poses.is_empty() && r.detections_in > 0 {
            warnings.push(format!("frame {}: no person reconstructed", r.frame_id));
        }
        for p in r.poses.iter().filter(|p| p.valid_joint_count() == 0) {
            warnings.push(format!("frame {}: person {} has no valid joint", r.frame_id, p.person_index));
        }
        entries.push(e);
    }
    out.flush().map_err(io_err(output))?;

    let manifest = RunManifest {
        tool: "courtpose".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs,
        workers,
        totals,
        frames: entries,
        warnings,
    };
    let mut w = create(manifest_path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::other(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(manifest_path))?;
    w.flush().map_err(io_err(manifest_path))?;
    Ok(manifest)
}
