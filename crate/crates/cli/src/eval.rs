use std::io::Write;
use std::path::Path;

use courtpose_core::data::io::{read_ground_truth, read_joint_mapping, read_poses};
use courtpose_core::data::JointMapping;
use courtpose_core::metrics::{evaluate_sequence, EvalReport};

use crate::{create, io_err, open, CliError};

/// Scores a pose document and writes the report as pretty JSON.
pub fn cmd_eval(
    predictions: &Path,
    ground_truth: &Path,
    mapping: Option<&Path>,
    report: &Path,
    fp_threshold_mm: f64,
) -> Result<EvalReport, CliError> {
    if !(fp_threshold_mm > 0.0) {
        return Err(CliError::validation("fp_threshold_mm must be positive"));
    }
    let mapping = mapping.map(|p| open(p).and_then(|r| Ok(read_joint_mapping(r)?))).transpose()?;
    let preds = read_poses(open(predictions)?)?;
    let gts = read_ground_truth(open(ground_truth)?)?;
    if gts.is_empty() {
        return Err(CliError::validation("ground-truth document holds no frames"));
    }
    let mapping = mapping.unwrap_or_else(|| {
        let joints = preds.iter().flat_map(|f| &f.poses).map(|p| p.joints.len()).max().unwrap_or(0);
        JointMapping::identity(joints)
    });
    if mapping.len() < 3 {
        return Err(CliError::validation(format!("joint mapping covers {} joints (need 3)", mapping.len())));
    }
    let r = evaluate_sequence(&preds, &gts, &mapping, fp_threshold_mm);
    let mut w = create(report)?;
    serde_json::to_writer_pretty(&mut w, &r).map_err(|e| CliError::other(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(report))?;
    w.flush().map_err(io_err(report))?;
    Ok(r)
}
