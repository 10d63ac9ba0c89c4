use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use courtpose_core::data::io::{write_calibration, write_detections, write_ground_truth};
use courtpose_core::data::DetectionRef;
use courtpose_core::synth::{build_rig, generate_frame, render_detections, DegradationSpec, SceneSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{create, io_err, open, CliError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub view_id: String,
    pub detection_id: u32,
    pub person_id: u32,
}

/// Identity labels of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub frame_id: u64,
    pub labels: Vec<LabelEntry>,
}

impl LabelRecord {
    pub fn to_map(&self) -> BTreeMap<DetectionRef, u32> {
        self.labels.iter().map(|l| (DetectionRef::new(l.view_id.clone(), l.detection_id), l.person_id)).collect()
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::parse(format!("{} line {}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// Writes `calibration.json`, `detections.jsonl`, `ground_truth.jsonl` and
/// `labels.jsonl` into `output_dir`; returns their paths.
pub fn cmd_synth(scene: Option<&Path>, degradation: Option<&Path>, output_dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let mut spec: SceneSpec = read_toml(scene)?;
    let degradation: DegradationSpec = read_toml(degradation)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let echo = |e: courtpose_core::synth::SynthError| CliError::validation(format!("{e}; spec: {spec:?}"));
    spec.validate().map_err(echo)?;
    degradation.validate()?;

    let rig = build_rig(&spec).map_err(echo)?;
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut truth = Vec::with_capacity(spec.n_frames);
    let mut labels = Vec::with_capacity(spec.n_frames);
    for f in 0..spec.n_frames as u64 {
        let scene = generate_frame(&spec, f).map_err(echo)?;
        let rendered = render_detections(&scene, &degradation, spec.seed)?;
        truth.push(scene.ground_truth());
        labels.push(LabelRecord {
            frame_id: f,
            labels: rendered
                .labels
                .iter()
                .map(|(r, &p)| LabelEntry { view_id: r.view_id.clone(), detection_id: r.detection_id, person_id: p })
                .collect(),
        });
        frames.push(rendered.detections);
    }

    let paths: Vec<PathBuf> = ["calibration.json", "detections.jsonl", "ground_truth.jsonl", "labels.jsonl"]
        .iter()
        .map(|n| output_dir.join(n))
        .collect();
    let mut w = create(&paths[0])?;
    write_calibration(&rig, &mut w)?;
    w.write_all(b"\n").map_err(io_err(&paths[0]))?;
    w.flush().map_err(io_err(&paths[0]))?;
    let mut w = create(&paths[1])?;
    write_detections(&frames, &mut w)?;
    w.flush().map_err(io_err(&paths[1]))?;
    let mut w = create(&paths[2])?;
    write_ground_truth(&truth, &mut w)?;
    w.flush().map_err(io_err(&paths[2]))?;
    let mut w = create(&paths[3])?;
    for l in &labels {
        serde_json::to_writer(&mut w, l).map_err(|e| CliError::other(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(&paths[3]))?;
    }
    w.flush().map_err(io_err(&paths[3]))?;
    Ok(paths)
}
