use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use courtpose_core::data::io::{read_calibration, read_poses};
use courtpose_core::geometry::{epipolar_line, fundamental_matrix};
use courtpose_core::synth::BONES;
use serde::Serialize;

use crate::{create, io_err, open, CliError};

const PALETTE: [&str; 10] = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324"];

#[derive(Serialize)]
struct OverlayPerson {
    person_index: usize,
    color_index: usize,
    /// Pixel per joint; `null` for invalid joints.
    joints: Vec<Option<[f64; 2]>>,
}

#[derive(Serialize)]
struct OverlayLine {
    person_index: usize,
    joint: usize,
    from: [f64; 2],
    to: [f64; 2],
}

#[derive(Serialize)]
struct OverlayView {
    frame_id: u64,
    view_id: String,
    width: u32,
    height: u32,
    persons: Vec<OverlayPerson>,
    epipolar_lines: Vec<OverlayLine>,
    notes: Vec<String>,
}

/// Reprojects every pose into every camera.
///
/// Writes `overlay.json` plus one `frame<id>_<view>.svg` per frame and view
/// into `output`. A person with any valid joint behind a camera is left out of
/// that view and noted. With `epipolar_from`, the other views also show the
/// epipolar lines of that view's joint projections, clipped to the image.
pub fn cmd_overlay(predictions: &Path, calibration: &Path, output: &Path, epipolar_from: Option<&str>) -> Result<Vec<String>, CliError> {
    let rig = read_calibration(open(calibration)?)?;
    let frames = read_poses(open(predictions)?)?;
    let reference = match epipolar_from {
        Some(id) => Some(rig.get(id).ok_or_else(|| CliError::validation(format!("--epipolar-from {id}: no such camera")))?),
        None => None,
    };
    let mut views = Vec::new();
    let mut notes = Vec::new();
    for frame in &frames {
        for cam in rig.cameras() {
            let (width, height) = cam.image_size();
            let mut view = OverlayView {
                frame_id: frame.frame_id,
                view_id: cam.camera_id().to_string(),
                width,
                height,
                persons: Vec::new(),
                epipolar_lines: Vec::new(),
                notes: Vec::new(),
            };
            for pose in &frame.poses {
                let projected: Result<Vec<Option<[f64; 2]>>, _> = pose
                    .joints
                    .iter()
                    .zip(&pose.joint_valid)
                    .map(|(j, &v)| if v { cam.project(j).map(|p| Some([p.x, p.y])) } else { Ok(None) })
                    .collect();
                match projected {
                    Ok(joints) => view.persons.push(OverlayPerson { person_index: pose.person_index, color_index: pose.person_index % PALETTE.len(), joints }),
                    Err(_) => {
                        let note = format!("frame {} view {}: person {} is behind the camera, omitted", frame.frame_id, cam.camera_id(), pose.person_index);
                        view.notes.push(note.clone());
                        notes.push(note);
                    }
                }
                let Some(reference) = reference.filter(|r| r.camera_id() != cam.camera_id()) else { continue };
                let Ok(f) = fundamental_matrix(reference, cam) else { continue };
                for (j, (x, &v)) in pose.joints.iter().zip(&pose.joint_valid).enumerate() {
                    let Some(seen) = v.then(|| reference.project_undistorted(x).ok()).flatten() else { continue };
                    let Some((a, b)) = epipolar_line(&f, &seen).ok().and_then(|l| l.clip_to_image(width as f64, height as f64)) else { continue };
                    view.epipolar_lines.push(OverlayLine { person_index: pose.person_index, joint: j, from: [a.x, a.y], to: [b.x, b.y] });
                }
            }
            views.push(view);
        }
    }

    std::fs::create_dir_all(output).map_err(io_err(output))?;
    for v in &views {
        let path = output.join(format!("frame{:06}_{}.svg", v.frame_id, v.view_id));
        let mut w = create(&path)?;
        w.write_all(svg(v).as_bytes()).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }
    let path = output.join("overlay.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &views).map_err(|e| CliError::other(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    Ok(notes)
}

fn svg(v: &OverlayView) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">"#, v.width, v.height);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff" stroke="#000000"/>"##);
    for l in &v.epipolar_lines {
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}" stroke-opacity="0.35" stroke-dasharray="6 4"/>"#,
            l.from[0],
            l.from[1],
            l.to[0],
            l.to[1],
            PALETTE[l.person_index % PALETTE.len()]
        );
    }
    for p in &v.persons {
        let color = PALETTE[p.color_index];
        for &(a, b) in &BONES {
            if let (Some(Some(pa)), Some(Some(pb))) = (p.joints.get(a), p.joints.get(b)) {
                let _ = writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" stroke-width="2"/>"#, pa[0], pa[1], pb[0], pb[1]);
            }
        }
        for q in p.joints.iter().flatten() {
            let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#, q[0], q[1]);
        }
    }
    s.push_str("</svg>\n");
    s
}
