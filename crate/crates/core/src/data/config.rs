use serde::{Deserialize, Serialize};

use super::DataError;

/// Feature set used by the epipolar consistency check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpipolarFeature {
    /// Projected mesh vertices.
    DenseMesh,
    /// Jointly valid projected 2D keypoints.
    SparseKeypoints,
    /// No epipolar check.
    None,
}

/// Every threshold and switch of the association and triangulation stages.
///
/// `Default` is the elevated six-camera preset ([`PipelineConfig::sportcenter`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau_det: f64,
    pub tau_reproj_bbox: f64,
    pub tau_mesh: f64,
    pub k_min: usize,
    pub tau_reproj_kps: f64,
    pub epipolar_feature: EpipolarFeature,
    pub reprojection_filter_enabled: bool,
    pub mesh_vertex_stride: usize,
    pub fp_threshold_mm: f64,
    /// Average the a→b and b→a epipolar distances instead of a→b only.
    pub symmetric_epipolar: bool,
    /// Fall back to the best two-view hypothesis whenever the weighted re-fit loses an inlier.
    pub strict_refit: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::sportcenter()
    }
}

impl PipelineConfig {
    /// Six elevated fisheye cameras.
    pub fn sportcenter() -> Self {
        Self {
            tau_det: 0.9,
            tau_reproj_bbox: 10.0,
            tau_mesh: 8.0,
            k_min: 4,
            tau_reproj_kps: 20.0,
            epipolar_feature: EpipolarFeature::DenseMesh,
            reprojection_filter_enabled: true,
            mesh_vertex_stride: 1,
            fp_threshold_mm: 500.0,
            symmetric_epipolar: false,
            strict_refit: false,
        }
    }

    /// Three or four person-height corner cameras.
    pub fn human_m3() -> Self {
        Self {
            tau_det: 0.7,
            tau_reproj_bbox: 30.0,
            k_min: 2,
            ..Self::sportcenter()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let config: Self = toml::from_str(text).map_err(|e| DataError::Parse {
            line: e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)),
            context: "config".into(),
            message: e.message().to_owned(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("tau_reproj_bbox", self.tau_reproj_bbox),
            ("tau_mesh", self.tau_mesh),
            ("tau_reproj_kps", self.tau_reproj_kps),
            ("fp_threshold_mm", self.fp_threshold_mm),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DataError::InvalidThreshold { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.tau_det) {
            return Err(DataError::InvalidThreshold { name: "tau_det", value: self.tau_det });
        }
        if self.k_min < 2 {
            return Err(DataError::InvalidThreshold { name: "k_min", value: self.k_min as f64 });
        }
        if self.mesh_vertex_stride < 1 {
            return Err(DataError::InvalidThreshold { name: "mesh_vertex_stride", value: 0.0 });
        }
        Ok(())
    }
}
