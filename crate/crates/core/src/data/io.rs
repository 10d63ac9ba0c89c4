//! Document formats.
//!
//! * Calibration: a JSON array with one record per camera
//!   (`camera_id`, `model`, `K` and `R` as 9 reals row-major, `t`, `dist`,
//!   `width`, `height`).
//! * Detections, ground truth and poses: JSON lines, one frame per line.
//! * Joint mapping: a JSON object `{"pred_to_gt": [[p, g], ...]}`.
//!
//! Fisheye detections are undistorted while loading so everything downstream
//! works in ideal pinhole pixels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{BoundingBox, DataError, Detection, FrameDetections, GroundTruthFrame, GroundTruthPose, JointMapping, Keypoint2D, Rig};
use crate::geometry::{CameraCalibration, CameraModel};
use crate::triangulation::Pose3D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    camera_id: String,
    model: CameraModel,
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
    #[serde(default)]
    dist: Vec<f64>,
    width: u32,
    height: u32,
}

impl CameraRecord {
    fn from_camera(c: &CameraCalibration) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for (i, v) in out.iter_mut().enumerate() {
                *v = m[(i / 3, i % 3)];
            }
            out
        };
        let t = c.translation();
        Self {
            camera_id: c.camera_id().to_owned(),
            model: c.model(),
            k: row_major(c.intrinsics()),
            r: row_major(c.rotation()),
            t: [t.x, t.y, t.z],
            dist: c.distortion().to_vec(),
            width: c.image_size().0,
            height: c.image_size().1,
        }
    }

    fn into_camera(self) -> Result<CameraCalibration, DataError> {
        if self.dist.len() > 8 {
            return Err(DataError::validation(format!(
                "camera {}: {} distortion coefficients (at most 8)",
                self.camera_id,
                self.dist.len()
            )));
        }
        CameraCalibration::new(
            self.camera_id,
            Matrix3::from_row_slice(&self.k),
            Matrix3::from_row_slice(&self.r),
            Vector3::from(self.t),
            self.dist,
            self.model,
            (self.width, self.height),
        )
        .map_err(|e| DataError::validation(e.to_string()))
    }
}

fn json_error(context: &str, e: serde_json::Error, line_offset: Option<usize>) -> DataError {
    DataError::Parse {
        line: Some(line_offset.unwrap_or(e.line())),
        context: context.to_owned(),
        message: e.to_string(),
    }
}

pub fn read_calibration<R: Read>(reader: R) -> Result<Rig, DataError> {
    let records: Vec<CameraRecord> = serde_json::from_reader(reader).map_err(|e| json_error("calibration", e, None))?;
    let cameras = records.into_iter().map(CameraRecord::into_camera).collect::<Result<Vec<_>, _>>()?;
    Rig::new(cameras)
}

pub fn write_calibration<W: Write>(rig: &Rig, writer: W) -> Result<(), DataError> {
    let records: Vec<CameraRecord> = rig.cameras().iter().map(CameraRecord::from_camera).collect();
    serde_json::to_writer_pretty(writer, &records).map_err(|e| DataError::Io(e.into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub view_id: String,
    pub detection_id: u32,
    pub bbox: [f64; 4],
    pub confidence: f64,
    pub kps2d: Vec<[f64; 3]>,
    pub kps3d: Vec<[f64; 3]>,
    pub mesh2d: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub detections: Vec<DetectionRecord>,
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            view_id: d.view_id.clone(),
            detection_id: d.detection_id,
            bbox: d.bbox.as_array(),
            confidence: d.confidence,
            kps2d: d
                .keypoints_2d
                .iter()
                .map(|k| [k.position.x, k.position.y, if k.valid { 1.0 } else { 0.0 }])
                .collect(),
            kps3d: d.keypoints_3d_cam.iter().map(|p| [p.x, p.y, p.z]).collect(),
            mesh2d: d.mesh_vertices_2d.iter().map(|p| [p.x, p.y]).collect(),
        }
    }

    fn into_detection(self, camera: &CameraCalibration) -> Result<Detection, DataError> {
        let mut keypoints_2d = Vec::with_capacity(self.kps2d.len());
        for [x, y, v] in self.kps2d {
            let valid = match v {
                1.0 => true,
                0.0 => false,
                other => {
                    return Err(DataError::validation(format!(
                        "view {} detection {}: keypoint valid flag {other} is not 0 or 1",
                        self.view_id, self.detection_id
                    )))
                }
            };
            keypoints_2d.push(Keypoint2D { position: Point2::new(x, y), valid });
        }
        let [x0, y0, x1, y1] = self.bbox;
        let mut detection = Detection {
            bbox: BoundingBox::new(x0, y0, x1, y1)
                .map_err(|e| DataError::validation(format!("view {} detection {}: {e}", self.view_id, self.detection_id)))?,
            view_id: self.view_id,
            detection_id: self.detection_id,
            confidence: self.confidence,
            keypoints_2d,
            keypoints_3d_cam: self.kps3d.into_iter().map(Point3::from).collect(),
            mesh_vertices_2d: self.mesh2d.into_iter().map(|[x, y]| Point2::new(x, y)).collect(),
        };
        detection.validate()?;
        if !camera.is_ideal() {
            undistort_detection(&mut detection, camera)?;
        }
        Ok(detection)
    }
}

fn undistort_detection(d: &mut Detection, camera: &CameraCalibration) -> Result<(), DataError> {
    let ctx = |e: crate::geometry::GeometryError| {
        DataError::validation(format!("view {} detection {}: {e}", d.view_id, d.detection_id))
    };
    let mut keypoints = d.keypoints_2d.clone();
    for k in &mut keypoints {
        k.position = camera.undistort_point(&k.position).map_err(ctx)?;
    }
    let corners = camera.undistort_points(&d.bbox.corners()).map_err(ctx)?;
    let mesh = camera.undistort_points(&d.mesh_vertices_2d).map_err(ctx)?;
    d.bbox = BoundingBox::enclosing(&corners).ok_or_else(|| DataError::validation("bbox collapsed after undistortion"))?;
    d.keypoints_2d = keypoints;
    d.mesh_vertices_2d = mesh;
    Ok(())
}

/// Result of a lenient detection load: every record is either in `frames`
/// or accounted for in `errors`.
#[derive(Debug, Default)]
pub struct DetectionLoad {
    pub frames: Vec<FrameDetections>,
    pub errors: Vec<DataError>,
    pub records_read: usize,
}

#[derive(Default)]
struct Topology {
    joints: Option<usize>,
    vertices: Option<usize>,
}

impl Topology {
    fn check(&mut self, d: &Detection) -> Result<(), DataError> {
        for (slot, count, what) in [
            (&mut self.joints, d.joint_count(), "joint count"),
            (&mut self.vertices, d.vertex_count(), "mesh vertex count"),
        ] {
            match *slot {
                None => *slot = Some(count),
                Some(expected) if expected != count => {
                    return Err(DataError::InconsistentTopology(format!(
                        "view {} detection {} has {what} {count}, dataset uses {expected}",
                        d.view_id, d.detection_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn parse_frame_line(line: &str, line_no: usize, rig: &Rig, topology: &mut Topology) -> Result<FrameDetections, DataError> {
    let record: FrameRecord = serde_json::from_str(line).map_err(|e| json_error("detections", e, Some(line_no)))?;
    let with_line = |e: DataError| match e {
        DataError::Validation(m) => DataError::Validation(format!("line {line_no}: {m}")),
        DataError::InconsistentTopology(m) => DataError::InconsistentTopology(format!("line {line_no}: {m}")),
        other => other,
    };
    let mut frame = FrameDetections::new(record.frame_id);
    let mut seen = BTreeSet::new();
    let mut pending = Topology { joints: topology.joints, vertices: topology.vertices };
    for rec in record.detections {
        let camera = rig.get(&rec.view_id).ok_or_else(|| DataError::UnknownView { view_id: rec.view_id.clone() })?;
        if !seen.insert((rec.view_id.clone(), rec.detection_id)) {
            return Err(with_line(DataError::validation(format!(
                "duplicate detection_id {} in view {}",
                rec.detection_id, rec.view_id
            ))));
        }
        let det = rec.into_detection(camera).map_err(with_line)?;
        pending.check(&det).map_err(with_line)?;
        frame.push(det);
    }
    *topology = pending;
    Ok(frame)
}

/// Strict load: aborts on the first malformed or invalid frame record.
pub fn read_detections<R: BufRead>(reader: R, rig: &Rig) -> Result<Vec<FrameDetections>, DataError> {
    let mut topology = Topology::default();
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(parse_frame_line(&line, i + 1, rig, &mut topology)?);
    }
    Ok(frames)
}

/// Lenient load: skips bad frame records and reports each one.
pub fn read_detections_lenient<R: BufRead>(reader: R, rig: &Rig) -> Result<DetectionLoad, DataError> {
    let mut topology = Topology::default();
    let mut load = DetectionLoad::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        load.records_read += 1;
        match parse_frame_line(&line, i + 1, rig, &mut topology) {
            Ok(frame) => load.frames.push(frame),
            Err(e) => load.errors.push(e),
        }
    }
    Ok(load)
}

pub fn write_frame_record<W: Write>(record: &FrameRecord, mut writer: W) -> Result<(), DataError> {
    serde_json::to_writer(&mut writer, record).map_err(|e| DataError::Io(e.into()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Writes frames as stored (callers own any re-distortion for fisheye views).
pub fn write_detections<W: Write>(frames: &[FrameDetections], mut writer: W) -> Result<(), DataError> {
    for frame in frames {
        let record = FrameRecord {
            frame_id: frame.frame_id,
            detections: frame.detections().map(DetectionRecord::from_detection).collect(),
        };
        write_frame_record(&record, &mut writer)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GroundTruthPersonRecord {
    person_id: u32,
    joints: Vec<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFrameRecord {
    frame_id: u64,
    persons: Vec<GroundTruthPersonRecord>,
}

fn joint_row(p: &Point3<f64>, valid: bool) -> [f64; 4] {
    [p.x, p.y, p.z, if valid { 1.0 } else { 0.0 }]
}

fn parse_joint_rows(rows: &[[f64; 4]], ctx: &str) -> Result<(Vec<Point3<f64>>, Vec<bool>), DataError> {
    let mut joints = Vec::with_capacity(rows.len());
    let mut valid = Vec::with_capacity(rows.len());
    for r in rows {
        let flag = match r[3] {
            1.0 => true,
            0.0 => false,
            v => return Err(DataError::validation(format!("{ctx}: joint valid flag {v} is not 0 or 1"))),
        };
        if flag && !r[..3].iter().all(|v| v.is_finite()) {
            return Err(DataError::validation(format!("{ctx}: non-finite joint")));
        }
        joints.push(Point3::new(r[0], r[1], r[2]));
        valid.push(flag);
    }
    Ok((joints, valid))
}

fn json_lines<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R, context: &str) -> Result<Vec<(usize, T)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, serde_json::from_str(&line).map_err(|e| json_error(context, e, Some(i + 1)))?));
    }
    Ok(out)
}

pub fn read_ground_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruthFrame>, DataError> {
    json_lines::<_, GroundTruthFrameRecord>(reader, "ground truth")?
        .into_iter()
        .map(|(line, rec)| {
            let persons = rec
                .persons
                .into_iter()
                .map(|p| {
                    let (joints, joint_valid) = parse_joint_rows(&p.joints, &format!("line {line} person {}", p.person_id))?;
                    Ok(GroundTruthPose { person_id: p.person_id, joints, joint_valid })
                })
                .collect::<Result<Vec<_>, DataError>>()?;
            Ok(GroundTruthFrame { frame_id: rec.frame_id, persons })
        })
        .collect()
}

pub fn write_ground_truth<W: Write>(frames: &[GroundTruthFrame], mut writer: W) -> Result<(), DataError> {
    for f in frames {
        let rec = GroundTruthFrameRecord {
            frame_id: f.frame_id,
            persons: f
                .persons
                .iter()
                .map(|p| GroundTruthPersonRecord {
                    person_id: p.person_id,
                    joints: p.joints.iter().zip(&p.joint_valid).map(|(j, &v)| joint_row(j, v)).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &rec).map_err(|e| DataError::Io(e.into()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reconstructed poses of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseFrame {
    pub frame_id: u64,
    pub poses: Vec<Pose3D>,
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    person_index: usize,
    joints: Vec<[f64; 4]>,
    #[serde(default)]
    inlier_counts: Vec<usize>,
    #[serde(default)]
    cluster_views: Vec<String>,
    #[serde(default)]
    post_fit_error_px: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PoseFrameRecord {
    frame_id: u64,
    poses: Vec<PoseRecord>,
}

pub fn read_poses<R: BufRead>(reader: R) -> Result<Vec<PoseFrame>, DataError> {
    json_lines::<_, PoseFrameRecord>(reader, "poses")?
        .into_iter()
        .map(|(line, rec)| {
            let poses = rec
                .poses
                .into_iter()
                .map(|p| {
                    let (joints, joint_valid) = parse_joint_rows(&p.joints, &format!("line {line} pose {}", p.person_index))?;
                    let n = joints.len();
                    let pad = |mut v: Vec<usize>| {
                        v.resize(n, 0);
                        v
                    };
                    let mut post_fit = p.post_fit_error_px;
                    post_fit.resize(n, None);
                    Ok(Pose3D {
                        person_index: p.person_index,
                        joint_inlier_count: pad(p.inlier_counts),
                        joints,
                        joint_valid,
                        cluster_views: p.cluster_views,
                        post_fit_error_px: post_fit,
                    })
                })
                .collect::<Result<Vec<_>, DataError>>()?;
            Ok(PoseFrame { frame_id: rec.frame_id, poses })
        })
        .collect()
}

pub fn write_pose_frame<W: Write>(frame: &PoseFrame, mut writer: W) -> Result<(), DataError> {
    let rec = PoseFrameRecord {
        frame_id: frame.frame_id,
        poses: frame
            .poses
            .iter()
            .map(|p| PoseRecord {
                person_index: p.person_index,
                joints: p.joints.iter().zip(&p.joint_valid).map(|(j, &v)| joint_row(j, v)).collect(),
                inlier_counts: p.joint_inlier_count.clone(),
                cluster_views: p.cluster_views.clone(),
                post_fit_error_px: p.post_fit_error_px.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut writer, &rec).map_err(|e| DataError::Io(e.into()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_joint_mapping<R: Read>(reader: R) -> Result<JointMapping, DataError> {
    let mapping: JointMapping = serde_json::from_reader(reader).map_err(|e| json_error("joint mapping", e, None))?;
    let mut pred = BTreeMap::new();
    for &(p, g) in &mapping.pred_to_gt {
        if pred.insert(p, g).is_some() {
            return Err(DataError::validation(format!("joint mapping lists predicted joint {p} twice")));
        }
    }
    Ok(mapping)
}
