//! Training-free multi-view multi-person 3D pose reconstruction.
//!
//! Per-view person detections are associated across calibrated cameras by a
//! bounding-box reprojection test, a dense epipolar test over projected body
//! surface points, and a shape cost resolved by optimal assignment and
//! disjoint-set clustering. Each associated person is then triangulated
//! joint by joint with an exhaustive two-view consensus search.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod triangulation;
