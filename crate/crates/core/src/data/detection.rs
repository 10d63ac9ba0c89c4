use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::DataError;

/// Axis-aligned box in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, DataError> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(DataError::validation(format!(
                "bbox [{x_min}, {y_min}, {x_max}, {y_max}] is empty or inverted"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Tight box around a point set.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point2<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self { x_min: first.x, y_min: first.y, x_max: first.x, y_max: first.y };
        for p in it {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn corners(&self) -> [Point2<f64>; 4] {
        [
            Point2::new(self.x_min, self.y_min),
            Point2::new(self.x_max, self.y_min),
            Point2::new(self.x_max, self.y_max),
            Point2::new(self.x_min, self.y_max),
        ]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint2D {
    pub position: Point2<f64>,
    pub valid: bool,
}

/// One person candidate in one view: the four frontend outputs consumed downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub view_id: String,
    pub detection_id: u32,
    pub bbox: BoundingBox,
    /// Detection confidence in `[0, 1]`.
    pub confidence: f64,
    pub keypoints_2d: Vec<Keypoint2D>,
    /// Camera-relative 3D keypoints, meters.
    pub keypoints_3d_cam: Vec<Point3<f64>>,
    pub mesh_vertices_2d: Vec<Point2<f64>>,
}

impl Detection {
    pub fn reference(&self) -> DetectionRef {
        DetectionRef::new(self.view_id.clone(), self.detection_id)
    }

    pub fn joint_count(&self) -> usize {
        self.keypoints_2d.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh_vertices_2d.len()
    }

    pub(crate) fn validate(&self) -> Result<(), DataError> {
        let ctx = |msg: String| DataError::validation(format!("view {} detection {}: {msg}", self.view_id, self.detection_id));
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ctx(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        if self.keypoints_2d.len() != self.keypoints_3d_cam.len() {
            return Err(ctx(format!(
                "{} 2D keypoints but {} 3D keypoints",
                self.keypoints_2d.len(),
                self.keypoints_3d_cam.len()
            )));
        }
        let finite2 = |p: &Point2<f64>| p.x.is_finite() && p.y.is_finite();
        if !self.keypoints_2d.iter().all(|k| finite2(&k.position))
            || !self.mesh_vertices_2d.iter().all(finite2)
            || !self.keypoints_3d_cam.iter().all(|p| p.coords.iter().all(|v| v.is_finite()))
        {
            return Err(ctx("non-finite coordinate".into()));
        }
        BoundingBox::new(self.bbox.x_min, self.bbox.y_min, self.bbox.x_max, self.bbox.y_max).map_err(|e| ctx(e.to_string()))?;
        Ok(())
    }
}

/// `(view_id, detection_id)`; ordered by view then id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionRef {
    pub view_id: String,
    pub detection_id: u32,
}

impl DetectionRef {
    pub fn new(view_id: impl Into<String>, detection_id: u32) -> Self {
        Self { view_id: view_id.into(), detection_id }
    }
}

impl fmt::Display for DetectionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.view_id, self.detection_id)
    }
}

/// All detections of one time instant, grouped by view.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameDetections {
    pub frame_id: u64,
    pub per_view: BTreeMap<String, Vec<Detection>>,
}

impl FrameDetections {
    pub fn new(frame_id: u64) -> Self {
        Self { frame_id, per_view: BTreeMap::new() }
    }

    pub fn push(&mut self, detection: Detection) {
        self.per_view.entry(detection.view_id.clone()).or_default().push(detection);
    }

    pub fn detection_count(&self) -> usize {
        self.per_view.values().map(Vec::len).sum()
    }

    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.per_view.values().flatten()
    }

    pub fn get(&self, r: &DetectionRef) -> Option<&Detection> {
        self.per_view.get(&r.view_id)?.iter().find(|d| d.detection_id == r.detection_id)
    }
}

/// Drops detections with confidence strictly below `tau_det`; survivors keep their order.
pub fn filter_by_confidence(frame: &FrameDetections, tau_det: f64) -> Result<FrameDetections, DataError> {
    if !(0.0..=1.0).contains(&tau_det) {
        return Err(DataError::InvalidThreshold { name: "tau_det", value: tau_det });
    }
    let per_view = frame
        .per_view
        .iter()
        .map(|(view, dets)| {
            let kept = dets.iter().filter(|d| !(d.confidence < tau_det)).cloned().collect();
            (view.clone(), kept)
        })
        .collect();
    Ok(FrameDetections { frame_id: frame.frame_id, per_view })
}
