//! Synthetic multi-camera scenes with known identities.
//!
//! A scene holds a fixed rig and persons built from an articulated
//! 15-joint template with a capsule surface envelope. Rendering projects
//! every person into every camera and applies the requested degradations,
//! producing the same detection records the pipeline ingests from files.
//!
//! Randomness comes from ChaCha8 seeded with `SceneSpec::seed`; frame `f`
//! uses stream `2f` for the scene and `2f + 1` for rendering, so frames are
//! independent and reproducible on any platform.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BoundingBox, Detection, DetectionRef, FrameDetections, GroundTruthFrame, GroundTruthPose, Keypoint2D, Rig};
use crate::geometry::{look_at_rotation, CameraCalibration};
use crate::matching::PersonCluster;

pub const TEMPLATE_JOINTS: usize = 15;

/// Template joint names, in output order.
pub const JOINT_NAMES: [&str; TEMPLATE_JOINTS] = [
    "pelvis", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist", "l_hip", "l_knee",
    "l_ankle", "r_hip", "r_knee", "r_ankle",
];

/// Parent-child pairs drawn as limbs.
pub const BONES: [(usize, usize); 14] = [
    (0, 1),
    (1, 2),
    (1, 3),
    (3, 4),
    (4, 5),
    (1, 6),
    (6, 7),
    (7, 8),
    (0, 9),
    (9, 10),
    (10, 11),
    (0, 12),
    (12, 13),
    (13, 14),
];

// capsule radius per bone, meters; the head gets a sphere instead
const BONE_RADII: [f64; 14] = [0.15, 0.06, 0.06, 0.05, 0.04, 0.06, 0.05, 0.04, 0.08, 0.08, 0.055, 0.08, 0.08, 0.055];
const HEAD_RADIUS: f64 = 0.11;
const ANKLE_HEIGHT: f64 = 0.08;
const MIN_VISIBLE_FRACTION: f64 = 0.5;
const MIN_DEPTH_M: f64 = 0.1;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid degradation spec: {0}")]
    InvalidDegradation(String),
    #[error("could not place person {person} after {attempts} attempts")]
    PlacementFailure { person: usize, attempts: usize },
    #[error("detection {0} has no identity label")]
    UnlabeledDetection(DetectionRef),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraLayout {
    /// Evenly spaced on a circle outside the court, 6 m up, aimed at the center.
    RingElevated,
    /// At the court corners (then evenly along the perimeter), 1.7 m up.
    CourtCorners,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub n_persons: usize,
    pub n_cameras: usize,
    /// Court length and width in meters, centered on the world origin.
    pub court_extent: (f64, f64),
    pub camera_layout: CameraLayout,
    pub person_min_separation: f64,
    /// Joint count; the first `joints` template joints are emitted.
    pub joints: usize,
    pub n_v: usize,
    pub seed: u64,
    pub n_frames: usize,
    pub focal_px: f64,
    pub image_size: (u32, u32),
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_persons: 10,
            n_cameras: 6,
            court_extent: (28.0, 15.0),
            camera_layout: CameraLayout::RingElevated,
            person_min_separation: 1.0,
            joints: TEMPLATE_JOINTS,
            n_v: 1024,
            seed: 0,
            n_frames: 1,
            focal_px: 800.0,
            image_size: (1920, 1080),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.n_persons < 1 {
            return bad("n_persons must be at least 1");
        }
        if self.n_cameras < 2 {
            return bad("n_cameras must be at least 2 (a rig needs two views)");
        }
        if !(self.court_extent.0 > 0.0 && self.court_extent.1 > 0.0) {
            return bad("court_extent must be positive");
        }
        if !(self.person_min_separation > 0.0) {
            return bad("person_min_separation must be positive");
        }
        if !(3..=TEMPLATE_JOINTS).contains(&self.joints) {
            return bad("joints must be within 3..=15");
        }
        if self.n_v < self.joints {
            return bad("n_v must be at least the joint count");
        }
        if self.n_frames < 1 {
            return bad("n_frames must be at least 1");
        }
        if !(self.focal_px > 0.0) || self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("focal_px and image_size must be positive");
        }
        Ok(())
    }
}

/// Maps person visibility to a detector confidence:
/// `s = clamp(base − slope·(1 − visibility) + noise_sd·ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceModel {
    pub base: f64,
    pub slope: f64,
    pub noise_sd: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self { base: 0.97, slope: 0.2, noise_sd: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSpec {
    pub keypoint_noise_px: f64,
    pub mesh_noise_px: f64,
    pub bbox_center_noise_px: f64,
    pub kps3d_noise_mm: f64,
    /// Per (person, view) probability that the detection is missing.
    pub occlusion_drop_prob: f64,
    pub confidence_model: ConfidenceModel,
    /// Per (person, view, joint) probability of a gross 2D keypoint error.
    pub outlier_view_prob: f64,
    pub outlier_displacement_px: f64,
    /// Per (person, view) probability that the lower body is cut off.
    pub truncation_prob: f64,
    /// Kept fraction of body height (from the top) for truncated detections, sampled uniformly.
    pub truncation_keep_range: (f64, f64),
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            keypoint_noise_px: 0.0,
            mesh_noise_px: 0.0,
            bbox_center_noise_px: 0.0,
            kps3d_noise_mm: 0.0,
            occlusion_drop_prob: 0.0,
            confidence_model: ConfidenceModel::default(),
            outlier_view_prob: 0.0,
            outlier_displacement_px: 100.0,
            truncation_prob: 0.0,
            truncation_keep_range: (0.1, 0.9),
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let sigmas = [self.keypoint_noise_px, self.mesh_noise_px, self.bbox_center_noise_px, self.kps3d_noise_mm, self.confidence_model.noise_sd];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SynthError::InvalidDegradation("noise levels must be finite and nonnegative".into()));
        }
        let probs = [self.occlusion_drop_prob, self.outlier_view_prob, self.truncation_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SynthError::InvalidDegradation("probabilities must lie in [0, 1]".into()));
        }
        if !(self.outlier_displacement_px >= 100.0) {
            return Err(SynthError::InvalidDegradation("outlier_displacement_px must be at least 100".into()));
        }
        let (lo, hi) = self.truncation_keep_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(SynthError::InvalidDegradation("truncation_keep_range must satisfy 0 < lo <= hi <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPerson {
    pub person_id: u32,
    /// World joints, meters.
    pub joints: Vec<Point3<f64>>,
    /// World surface samples, same template for every person.
    pub mesh: Vec<Point3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    pub frame_id: u64,
    pub rig: Rig,
    pub persons: Vec<SynthPerson>,
}

impl GroundTruthScene {
    pub fn ground_truth(&self) -> GroundTruthFrame {
        GroundTruthFrame {
            frame_id: self.frame_id,
            persons: self
                .persons
                .iter()
                .map(|p| GroundTruthPose { person_id: p.person_id, joints: p.joints.clone(), joint_valid: vec![true; p.joints.len()] })
                .collect(),
        }
    }
}

/// Rendered detections and the identity behind each one.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub detections: FrameDetections,
    pub labels: BTreeMap<DetectionRef, u32>,
}

fn frame_rng(seed: u64, frame: u64, render: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * frame + u64::from(render));
    rng
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// The camera rig for a spec; depends only on layout, count, court and optics.
pub fn build_rig(spec: &SceneSpec) -> Result<Rig, SynthError> {
    spec.validate()?;
    let (lx, ly) = spec.court_extent;
    let (w, h) = spec.image_size;
    let k = Matrix3::new(spec.focal_px, 0.0, w as f64 / 2.0, 0.0, spec.focal_px, h as f64 / 2.0, 0.0, 0.0, 1.0);
    let n = spec.n_cameras;
    let centers: Vec<Point3<f64>> = match spec.camera_layout {
        CameraLayout::RingElevated => {
            let r = 0.5 * lx.hypot(ly) + 6.0;
            (0..n)
                .map(|i| {
                    let a = TAU * i as f64 / n as f64;
                    Point3::new(r * a.cos(), r * a.sin(), 6.0)
                })
                .collect()
        }
        CameraLayout::CourtCorners => {
            let (hx, hy) = (lx / 2.0 + 3.0, ly / 2.0 + 3.0);
            let corners = [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)];
            if n <= 4 {
                corners[..n].iter().map(|&(x, y)| Point3::new(x, y, 1.7)).collect()
            } else {
                let perimeter = 4.0 * (hx + hy);
                (0..n).map(|i| perimeter_point(i as f64 * perimeter / n as f64, hx, hy)).collect()
            }
        }
    };
    let target = Point3::new(0.0, 0.0, 1.0);
    let cameras = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r = look_at_rotation(c, &target).expect("cameras sit off the court center");
            CameraCalibration::pinhole_at(format!("cam{i:02}"), k, r, *c, spec.image_size).expect("valid synthetic camera")
        })
        .collect();
    Ok(Rig::new(cameras).expect("unique camera ids"))
}

/// Counter-clockwise walk along the offset court rectangle, starting at (+x, +y).
fn perimeter_point(s: f64, hx: f64, hy: f64) -> Point3<f64> {
    let sides = [(2.0 * hx, (hx, hy), (-1.0, 0.0)), (2.0 * hy, (-hx, hy), (0.0, -1.0)), (2.0 * hx, (-hx, -hy), (1.0, 0.0)), (2.0 * hy, (hx, -hy), (0.0, 1.0))];
    let mut s = s;
    for (len, (x0, y0), (dx, dy)) in sides {
        if s < len {
            return Point3::new(x0 + dx * s, y0 + dy * s, 1.7);
        }
        s -= len;
    }
    Point3::new(hx, hy, 1.7)
}

/// Scene for frame 0.
pub fn generate_scene(spec: &SceneSpec) -> Result<GroundTruthScene, SynthError> {
    generate_frame(spec, 0)
}

/// Scene for frame `frame_id`; the rig is shared, persons are re-sampled.
pub fn generate_frame(spec: &SceneSpec, frame_id: u64) -> Result<GroundTruthScene, SynthError> {
    let rig = build_rig(spec)?;
    let mut rng = frame_rng(spec.seed, frame_id, false);
    let (lx, ly) = spec.court_extent;
    // fewer persons crowd toward the center
    let spread = 0.8 * ((spec.n_persons as f64) / 10.0).sqrt().min(1.0);
    let (hx, hy) = (spread * lx / 2.0, spread * ly / 2.0);
    let template = MeshTemplate::new(spec.n_v);

    let mut placed: Vec<Vector2<f64>> = Vec::with_capacity(spec.n_persons);
    let mut persons = Vec::with_capacity(spec.n_persons);
    for person in 0..spec.n_persons {
        let mut spot = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let c = Vector2::new(rng.random_range(-hx..=hx), rng.random_range(-hy..=hy));
            if placed.iter().all(|p| (p - c).norm() >= spec.person_min_separation) {
                spot = Some(c);
                break;
            }
        }
        let spot = spot.ok_or(SynthError::PlacementFailure { person, attempts: PLACEMENT_ATTEMPTS })?;
        placed.push(spot);
        let joints = sample_skeleton(&mut rng, spot);
        let mesh = template.attach(&joints);
        persons.push(SynthPerson { person_id: person as u32, joints: joints[..spec.joints].to_vec(), mesh });
    }
    Ok(GroundTruthScene { frame_id, rig, persons })
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

fn rotate(axis: Vector3<f64>, angle: f64, v: Vector3<f64>) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle) * v
}

/// Unit vector along `toward` with the `along` component removed (fallback `alt`).
fn orthogonal_part(toward: Vector3<f64>, along: Vector3<f64>, alt: Vector3<f64>) -> Vector3<f64> {
    let v = toward - along * along.dot(&toward);
    if v.norm() > 1e-6 {
        v.normalize()
    } else {
        (alt - along * along.dot(&alt)).normalize()
    }
}

/// Template skeleton with random scale, lean, limb angles, heading and position.
fn sample_skeleton(rng: &mut ChaCha8Rng, at: Vector2<f64>) -> [Point3<f64>; TEMPLATE_JOINTS] {
    let s = rng.random_range(0.9..1.1);
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let lean = Rotation3::from_euler_angles(deg(rng.random_range(-8.0..8.0)), deg(rng.random_range(-10.0..20.0)), 0.0);
    let spine = lean * z;
    let side = lean * y;

    let mut j = [Point3::origin(); TEMPLATE_JOINTS];
    j[1] = j[0] + spine * 0.52 * s;
    j[2] = j[1] + spine * 0.22 * s;
    for (sign, sh, el, wr) in [(1.0, 3, 4, 5), (-1.0, 6, 7, 8)] {
        j[sh] = j[1] + side * sign * 0.18 * s;
        let abduct = deg(rng.random_range(5.0..80.0));
        let flex = deg(rng.random_range(-40.0..100.0));
        let upper = rotate(y, -flex, rotate(x, sign * abduct, -z));
        let bend = deg(rng.random_range(0.0..120.0));
        let fore = upper * bend.cos() + orthogonal_part(x, upper, z) * bend.sin();
        j[el] = j[sh] + upper * 0.29 * s;
        j[wr] = j[el] + fore * 0.26 * s;
    }
    for (sign, hip, knee, ankle) in [(1.0, 9, 10, 11), (-1.0, 12, 13, 14)] {
        j[hip] = j[0] + y * sign * 0.10 * s;
        let flex = deg(rng.random_range(-25.0..45.0));
        let abduct = deg(rng.random_range(0.0..20.0));
        let thigh = rotate(y, -flex, rotate(x, sign * abduct, -z));
        let bend = deg(rng.random_range(0.0..70.0));
        let shin = thigh * bend.cos() + orthogonal_part(-x, thigh, -z) * bend.sin();
        j[knee] = j[hip] + thigh * 0.43 * s;
        j[ankle] = j[knee] + shin * 0.42 * s;
    }

    let lift = ANKLE_HEIGHT - j[11].z.min(j[14].z);
    let heading = Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..TAU));
    let offset = Vector3::new(at.x, at.y, lift);
    j.map(|p| Point3::from(heading * p.coords + offset))
}

/// Fixed per-vertex surface parameters; a function of the vertex count only.
#[derive(Clone, Debug)]
struct MeshTemplate {
    /// (bone index or `None` for the head sphere, axial t, angle, height on sphere)
    samples: Vec<(Option<usize>, f64, f64)>,
}

impl MeshTemplate {
    fn new(n_v: usize) -> Self {
        let bone_lengths = [0.52, 0.22, 0.18, 0.29, 0.26, 0.18, 0.29, 0.26, 0.10, 0.43, 0.42, 0.10, 0.43, 0.42];
        let mut areas: Vec<f64> = bone_lengths.iter().zip(BONE_RADII).map(|(l, r)| TAU * r * l).collect();
        areas[1] = 4.0 * PI * HEAD_RADIUS * HEAD_RADIUS; // neck→head bone is the head sphere
        let total: f64 = areas.iter().sum();
        // largest-remainder allocation so the counts sum to n_v
        let exact: Vec<f64> = areas.iter().map(|a| a / total * n_v as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        for &b in order.iter().cycle().take(n_v - counts.iter().sum::<usize>()) {
            counts[b] += 1;
        }
        let golden = PI * (3.0 - 5f64.sqrt());
        let mut samples = Vec::with_capacity(n_v);
        for (b, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                let phi = i as f64 * golden;
                samples.push(if b == 1 { (None, 1.0 - 2.0 * t, phi) } else { (Some(b), t, phi) });
            }
        }
        Self { samples }
    }

    fn attach(&self, j: &[Point3<f64>; TEMPLATE_JOINTS]) -> Vec<Point3<f64>> {
        self.samples
            .iter()
            .map(|&(bone, t, phi)| match bone {
                None => {
                    // Fibonacci sphere around the head joint
                    let r = (1.0 - t * t).max(0.0).sqrt();
                    j[2] + HEAD_RADIUS * Vector3::new(r * phi.cos(), r * phi.sin(), t)
                }
                Some(b) => {
                    let (a, c) = BONES[b];
                    let d = j[c] - j[a];
                    let axis = d.normalize();
                    let u = orthogonal_part(Vector3::z(), axis, Vector3::x());
                    let v = axis.cross(&u);
                    j[a] + d * t + BONE_RADII[b] * (u * phi.cos() + v * phi.sin())
                }
            })
            .collect()
    }
}

fn inside(p: &Point2<f64>, size: (u32, u32)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= size.0 as f64 && p.y <= size.1 as f64
}

/// Projects every person into every view with the given degradations.
///
/// A person yields no detection in a view when dropped by occlusion, when any
/// surface point is within 0.1 m of the camera plane, or when less than half
/// of the surface lands inside the image.
pub fn render_detections(scene: &GroundTruthScene, degradation: &DegradationSpec, seed: u64) -> Result<RenderedFrame, SynthError> {
    degradation.validate()?;
    let mut rng = frame_rng(seed, scene.frame_id, true);
    let mut detections = FrameDetections::new(scene.frame_id);
    let mut labels = BTreeMap::new();
    for cam in scene.rig.cameras() {
        let size = cam.image_size();
        let mut rendered = Vec::new();
        for person in &scene.persons {
            // fixed draw order so noise levels do not shift the random stream
            let dropped = rng.random::<f64>() < degradation.occlusion_drop_prob;
            let truncated = rng.random::<f64>() < degradation.truncation_prob;
            let (lo, hi) = degradation.truncation_keep_range;
            let keep = if truncated { lo + (hi - lo) * rng.random::<f64>() } else { 1.0 };
            let conf_noise = gauss(&mut rng);
            let center_noise = Vector2::new(gauss(&mut rng), gauss(&mut rng));
            let mesh_noise: Vec<Vector2<f64>> = person.mesh.iter().map(|_| Vector2::new(gauss(&mut rng), gauss(&mut rng))).collect();
            let joint_noise: Vec<(Vector2<f64>, Vector3<f64>, f64, f64)> = person
                .joints
                .iter()
                .map(|_| {
                    let n2 = Vector2::new(gauss(&mut rng), gauss(&mut rng));
                    let n3 = Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng));
                    (n2, n3, rng.random::<f64>(), rng.random_range(0.0..TAU))
                })
                .collect();
            if dropped {
                continue;
            }
            if person.mesh.iter().any(|p| cam.world_to_camera(p).z < MIN_DEPTH_M) {
                continue;
            }
            let mesh: Vec<Point2<f64>> = person
                .mesh
                .iter()
                .zip(&mesh_noise)
                .map(|(p, n)| cam.project(p).expect("in front of camera") + n * degradation.mesh_noise_px)
                .collect();
            let visible = mesh.iter().filter(|p| inside(p, size)).count() as f64 / mesh.len() as f64;
            if visible < MIN_VISIBLE_FRACTION {
                continue;
            }
            let top = person.mesh.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
            let cut = top * (1.0 - keep);
            let keypoints_2d = person
                .joints
                .iter()
                .zip(&joint_noise)
                .map(|(p, (n2, _, u, angle))| {
                    let mut q = cam.project(p).expect("in front of camera") + n2 * degradation.keypoint_noise_px;
                    if *u < degradation.outlier_view_prob {
                        q += Vector2::new(angle.cos(), angle.sin()) * degradation.outlier_displacement_px;
                    }
                    Keypoint2D { position: q, valid: inside(&q, size) && p.z >= cut }
                })
                .collect();
            let keypoints_3d_cam = person
                .joints
                .iter()
                .zip(&joint_noise)
                .map(|(p, (_, n3, _, _))| Point3::from(cam.world_to_camera(p) + n3 * degradation.kps3d_noise_mm / 1000.0))
                .collect();
            let extent = BoundingBox::enclosing(&mesh).expect("non-empty mesh");
            let shift = center_noise * degradation.bbox_center_noise_px;
            let bbox = BoundingBox::new(extent.x_min + shift.x, extent.y_min + shift.y, extent.x_max + shift.x, extent.y_max + shift.y)
                .expect("mesh extent has area");
            let cm = degradation.confidence_model;
            let confidence = (cm.base - cm.slope * (1.0 - visible * keep) + cm.noise_sd * conf_noise).clamp(0.0, 1.0);
            rendered.push((person.person_id, Detection {
                view_id: cam.camera_id().to_string(),
                detection_id: 0,
                bbox,
                confidence,
                keypoints_2d,
                keypoints_3d_cam,
                mesh_vertices_2d: mesh,
            }));
        }
        rendered.shuffle(&mut rng);
        for (id, (person, mut det)) in rendered.into_iter().enumerate() {
            det.detection_id = id as u32;
            labels.insert(det.reference(), person);
            detections.push(det);
        }
    }
    Ok(RenderedFrame { detections, labels })
}

/// Displaces, for every person and joint, the keypoint of one randomly chosen
/// view (among views that see the person) by `displacement_px` in a random
/// direction. Returns the affected `(person, joint, view)` triples.
pub fn inject_joint_outliers(frame: &mut RenderedFrame, displacement_px: f64, rng: &mut impl Rng) -> Vec<(u32, usize, String)> {
    let mut by_person: BTreeMap<u32, Vec<DetectionRef>> = BTreeMap::new();
    for (r, &p) in &frame.labels {
        by_person.entry(p).or_default().push(r.clone());
    }
    let mut injected = Vec::new();
    for (person, refs) in by_person {
        let joints = frame.detections.get(&refs[0]).map_or(0, Detection::joint_count);
        for j in 0..joints {
            let r = &refs[rng.random_range(0..refs.len())];
            let angle = rng.random_range(0.0..TAU);
            let det = frame.detections.per_view.get_mut(&r.view_id).and_then(|v| v.iter_mut().find(|d| d.detection_id == r.detection_id));
            if let Some(det) = det {
                det.keypoints_2d[j].position += Vector2::new(angle.cos(), angle.sin()) * displacement_px;
                injected.push((person, j, r.view_id.clone()));
            }
        }
    }
    injected
}

/// Association quality against identity labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationScore {
    /// Fraction of clusters whose members share one identity (1 with no clusters).
    pub purity: f64,
    /// Fraction of identities seen in at least `k_min` views whose labelled
    /// detections all sit in a single cluster (1 with no such identities).
    pub completeness: f64,
    pub exact_partition: bool,
}

/// Scores `clusters` against `labels`; only labelled detections define what is visible.
pub fn association_accuracy(clusters: &[PersonCluster], labels: &BTreeMap<DetectionRef, u32>, k_min: usize) -> Result<AssociationScore, SynthError> {
    let mut pure = 0usize;
    let mut cluster_of: BTreeMap<&DetectionRef, usize> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        let mut ids = BTreeSet::new();
        for m in &c.members {
            ids.insert(*labels.get(m).ok_or_else(|| SynthError::UnlabeledDetection(m.clone()))?);
            cluster_of.insert(m, i);
        }
        pure += usize::from(ids.len() <= 1);
    }
    let mut visible: BTreeMap<u32, Vec<&DetectionRef>> = BTreeMap::new();
    for (r, &p) in labels {
        visible.entry(p).or_default().push(r);
    }
    let eligible: Vec<&Vec<&DetectionRef>> = visible.values().filter(|refs| refs.iter().map(|r| &r.view_id).collect::<BTreeSet<_>>().len() >= k_min).collect();
    let complete = eligible
        .iter()
        .filter(|refs| {
            let homes: BTreeSet<Option<&usize>> = refs.iter().map(|r| cluster_of.get(r)).collect();
            homes.len() == 1 && !homes.contains(&None)
        })
        .count();
    let purity = if clusters.is_empty() { 1.0 } else { pure as f64 / clusters.len() as f64 };
    let completeness = if eligible.is_empty() { 1.0 } else { complete as f64 / eligible.len() as f64 };
    Ok(AssociationScore { purity, completeness, exact_partition: pure == clusters.len() && complete == eligible.len() && clusters.len() == eligible.len() })
}

/// Labels restricted to the detections present in `frame`.
pub fn labels_within(labels: &BTreeMap<DetectionRef, u32>, frame: &FrameDetections) -> BTreeMap<DetectionRef, u32> {
    labels.iter().filter(|(r, _)| frame.get(r).is_some()).map(|(r, &p)| (r.clone(), p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{epipolar_line, fundamental_matrix, point_line_distance};
    use crate::matching::procrustes_align;

    fn spec(n: usize) -> SceneSpec {
        SceneSpec { n_persons: n, seed: 11, ..Default::default() }
    }

    #[test]
    fn single_person_near_center() {
        for layout in [CameraLayout::RingElevated, CameraLayout::CourtCorners] {
            let s = generate_scene(&SceneSpec { camera_layout: layout, ..spec(1) }).unwrap();
            assert_eq!(s.persons.len(), 1);
            let p = s.persons[0].joints[0];
            assert!(p.x.abs() < 4.0 && p.y.abs() < 2.5, "{p:?}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_scene(&spec(10)).unwrap(), generate_scene(&spec(10)).unwrap());
        assert_ne!(generate_scene(&spec(10)).unwrap(), generate_scene(&SceneSpec { seed: 12, ..spec(10) }).unwrap());
        let s = generate_scene(&spec(10)).unwrap();
        let d = DegradationSpec { keypoint_noise_px: 1.0, occlusion_drop_prob: 0.2, ..Default::default() };
        assert_eq!(render_detections(&s, &d, 3).unwrap(), render_detections(&s, &d, 3).unwrap());
    }

    #[test]
    fn ten_persons_keep_their_distance() {
        let s = generate_scene(&spec(10)).unwrap();
        for (i, a) in s.persons.iter().enumerate() {
            for b in &s.persons[i + 1..] {
                assert!((a.joints[0].xy() - b.joints[0].xy()).norm() >= 1.0);
            }
            assert_eq!(a.mesh.len(), 1024);
            let lowest = a.joints.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            assert!((lowest - ANKLE_HEIGHT).abs() < 1e-9);
        }
    }

    #[test]
    fn crowded_spec_fails_placement() {
        let s = SceneSpec { n_persons: 50, court_extent: (2.0, 2.0), ..Default::default() };
        assert!(matches!(generate_scene(&s), Err(SynthError::PlacementFailure { .. })));
        assert!(generate_scene(&SceneSpec { n_cameras: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn clean_render_is_epipolar_exact_and_rigid() {
        let s = generate_scene(&spec(4)).unwrap();
        let r = render_detections(&s, &DegradationSpec::default(), 1).unwrap();
        let by_person = |p: u32| -> Vec<&Detection> {
            r.labels.iter().filter(|(_, &q)| q == p).map(|(d, _)| r.detections.get(d).unwrap()).collect()
        };
        for p in 0..4 {
            let dets = by_person(p);
            assert!(dets.len() >= 2);
            let (a, b) = (dets[0], dets[1]);
            let f = fundamental_matrix(s.rig.get(&a.view_id).unwrap(), s.rig.get(&b.view_id).unwrap()).unwrap();
            for (u, v) in a.mesh_vertices_2d.iter().zip(&b.mesh_vertices_2d) {
                assert!(point_line_distance(v, &epipolar_line(&f, u).unwrap()) < 1e-9);
            }
            let fit = procrustes_align(&a.keypoints_3d_cam, &b.keypoints_3d_cam, &[true; 15]).unwrap();
            assert!(fit.mean_residual_mm < 1e-9);
        }
    }

    #[test]
    fn full_occlusion_empties_the_frame() {
        let s = generate_scene(&spec(5)).unwrap();
        let r = render_detections(&s, &DegradationSpec { occlusion_drop_prob: 1.0, ..Default::default() }, 0).unwrap();
        assert_eq!(r.detections.detection_count(), 0);
        assert!(r.labels.is_empty());
    }

    #[test]
    fn keypoint_noise_statistic() {
        // mean 2D residual of unit isotropic noise is sqrt(pi/2)
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..40 {
            let s = generate_scene(&SceneSpec { seed, ..spec(10) }).unwrap();
            let r = render_detections(&s, &DegradationSpec { keypoint_noise_px: 1.0, ..Default::default() }, seed).unwrap();
            for (d, &p) in &r.labels {
                let det = r.detections.get(d).unwrap();
                let cam = s.rig.get(&d.view_id).unwrap();
                for (k, j) in det.keypoints_2d.iter().zip(&s.persons[p as usize].joints) {
                    sum += (k.position - cam.project(j).unwrap()).norm();
                    n += 1;
                }
            }
        }
        assert!(n >= 10_000, "{n}");
        let mean = sum / n as f64;
        assert!((mean - (PI / 2.0).sqrt()).abs() < 0.1 * (PI / 2.0).sqrt(), "{mean}");
    }

    #[test]
    fn truncation_invalidates_lower_joints_only() {
        let s = generate_scene(&spec(3)).unwrap();
        let d = DegradationSpec { truncation_prob: 1.0, truncation_keep_range: (0.5, 0.5), ..Default::default() };
        let r = render_detections(&s, &d, 0).unwrap();
        for (dref, &p) in &r.labels {
            let det = r.detections.get(dref).unwrap();
            let person = &s.persons[p as usize];
            assert!(!det.keypoints_2d[11].valid && !det.keypoints_2d[14].valid);
            assert!(det.keypoints_2d[2].valid);
            assert_eq!(det.vertex_count(), person.mesh.len());
            assert!(det.confidence < 0.97);
        }
    }

    #[test]
    fn scoring_partitions() {
        let r = |v: &str, d: u32| DetectionRef::new(v, d);
        let labels: BTreeMap<_, _> = [(r("a", 0), 0), (r("b", 0), 0), (r("a", 1), 1), (r("b", 1), 1)].into_iter().collect();
        let cluster = |ms: &[DetectionRef]| PersonCluster { members: ms.iter().cloned().collect(), ..Default::default() };
        let truth = [cluster(&[r("a", 0), r("b", 0)]), cluster(&[r("a", 1), r("b", 1)])];
        assert_eq!(association_accuracy(&truth, &labels, 2).unwrap(), AssociationScore { purity: 1.0, completeness: 1.0, exact_partition: true });
        let merged = [cluster(&[r("a", 0), r("b", 0), r("b", 1)])];
        let score = association_accuracy(&merged, &labels, 2).unwrap();
        assert!(score.purity < 1.0 && !score.exact_partition);
        assert_eq!(score.completeness, 0.5);
        let stray = [cluster(&[r("z", 9)])];
        assert!(matches!(association_accuracy(&stray, &labels, 2), Err(SynthError::UnlabeledDetection(_))));
    }

    #[test]
    fn random_partition_scores_match_a_naive_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..20 {
            // 6 views × 10 identities, scattered over 12 clusters
            let mut labels = BTreeMap::new();
            let mut groups: Vec<Vec<DetectionRef>> = vec![Vec::new(); 12];
            for v in 0..6 {
                for p in 0..10u32 {
                    let r = DetectionRef::new(format!("v{v}"), p);
                    labels.insert(r.clone(), p);
                    groups[rng.random_range(0..12)].push(r);
                }
            }
            let clusters: Vec<PersonCluster> =
                groups.iter().filter(|g| !g.is_empty()).map(|g| PersonCluster { members: g.iter().cloned().collect(), ..Default::default() }).collect();
            let score = association_accuracy(&clusters, &labels, 1).unwrap();

            let mut pure = 0;
            for c in &clusters {
                let first = labels[c.members.iter().next().unwrap()];
                if c.members.iter().all(|m| labels[m] == first) {
                    pure += 1;
                }
            }
            let mut whole = 0;
            for p in 0..10u32 {
                if clusters.iter().any(|c| (0..6).all(|v| c.members.contains(&DetectionRef::new(format!("v{v}"), p)))) {
                    whole += 1;
                }
            }
            assert_eq!(score.purity, pure as f64 / clusters.len() as f64);
            assert_eq!(score.completeness, whole as f64 / 10.0);
        }
    }

    #[test]
    fn court_corner_rig_is_low() {
        let rig = build_rig(&SceneSpec { n_cameras: 4, camera_layout: CameraLayout::CourtCorners, ..Default::default() }).unwrap();
        assert_eq!(rig.len(), 4);
        assert!(rig.cameras().iter().all(|c| (c.center().z - 1.7).abs() < 1e-9));
        let ring = build_rig(&SceneSpec::default()).unwrap();
        assert!(ring.cameras().iter().all(|c| (c.center().z - 6.0).abs() < 1e-9));
    }
}
