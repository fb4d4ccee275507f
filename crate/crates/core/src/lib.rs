//! Instance clustering of LiDAR scans on spherical range images.
//!
//! Thing points are projected to a range image, grown from voxel seeds into
//! many small local clusters, and the local clusters are merged by counting
//! how many boundary pixel pairs pass or fail an angle test.

pub mod baseline;
pub mod connectivity;
pub mod error;
pub mod io_kitti;
pub mod local_cluster;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod range_image;
pub mod synth;

pub use error::{Error, Result};
pub use metrics::{panoptic_quality, EvalConfig, PanopticFrame, PanopticReport};
pub use pipeline::{Connectivity, FrameOutput, Pipeline, PipelineConfig};
pub use range_image::{Point, PointCloud, ProjectionConfig, RangeImage};
pub use synth::synth_scene;
