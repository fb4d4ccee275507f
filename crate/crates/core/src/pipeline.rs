//! End-to-end frame clustering: mask thing points, project, seed, divide,
//! merge, map back to points, BEV fix-up, and dense instance ids.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baseline::depth_cluster;
use crate::connectivity::{AngleCondition, ConditionParams, EuclideanCondition, PairPredicate};
use crate::error::{Error, Result};
use crate::io_kitti::class_mask;
use crate::local_cluster::{local_cluster_with, select_seeds, DivideStats, LabelImage, Unreached, VoxelGridConfig};
use crate::merge::{vote_and_merge_owned, MergeStats};
use crate::metrics::KITTI_THING_CLASSES;
use crate::postprocess::bev_merge;
use crate::range_image::{unproject_labels, PointCloud, ProjectionConfig, RangeImage};

/// Pixel-pair test used while growing clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Connectivity {
    /// Angle between the far return and the line to the near return must
    /// exceed `theta_deg`.
    Angle,
    /// 3D distance below `max_distance` meters.
    Euclidean { max_distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Voxel edge for seeding, meters.
    pub voxel_size: f64,
    pub theta_deg: f64,
    pub projection: ProjectionConfig,
    /// Semantic classes that form the object mask.
    pub things: BTreeSet<u32>,
    pub postprocess: bool,
    /// Treat the first and last image columns as adjacent.
    pub wrap: bool,
    pub connectivity: Connectivity,
    /// Whether thing pixels that no seed reaches get labels of their own.
    pub unreached: Unreached,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.5,
            theta_deg: crate::connectivity::DEFAULT_THETA_DEG,
            projection: ProjectionConfig::default(),
            things: KITTI_THING_CLASSES.into_iter().collect(),
            postprocess: true,
            wrap: true,
            connectivity: Connectivity::Angle,
            unreached: Unreached::Leave,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "voxel size must be positive, got {}",
                self.voxel_size
            )));
        }
        if !(self.theta_deg > 0.0 && self.theta_deg < 90.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must be in (0, 90) degrees, got {}",
                self.theta_deg
            )));
        }
        if let Connectivity::Euclidean { max_distance } = self.connectivity {
            if !(max_distance.is_finite() && max_distance > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "distance threshold must be positive, got {max_distance}"
                )));
            }
        }
        self.projection.validate()
    }
}

/// Wall time spent in each stage of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub project: Duration,
    pub seed: Duration,
    pub divide: Duration,
    pub merge: Duration,
    pub unproject: Duration,
    pub postprocess: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameDiagnostics {
    pub n_points: usize,
    /// Points whose class is in the thing set.
    pub n_masked: usize,
    /// Local labels before merging: the seeds plus any labels opened for
    /// unreached pixels. 0 on the baseline path.
    pub m: usize,
    /// Instances in the output.
    pub k: usize,
    pub divide: DivideStats,
    pub merge: MergeStats,
    /// Fraction of nonzero off-diagonal vote entries.
    pub vote_density: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    /// Per-point instance id: 0 for stuff and unlabeled points, `1..=k`
    /// otherwise.
    pub instances: Vec<u32>,
    pub diagnostics: FrameDiagnostics,
}

/// Immutable once built; share it freely between threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    angle: AngleCondition,
    voxels: VoxelGridConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let angle = AngleCondition::new(ConditionParams::from_projection(&cfg.projection, cfg.theta_deg)?)?;
        let voxels = VoxelGridConfig::new(cfg.voxel_size)?;
        Ok(Self { cfg, angle, voxels })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Divide-and-merge clustering of one frame.
    pub fn cluster_frame(&self, cloud: &PointCloud, semantics: &[u32]) -> Result<FrameOutput> {
        match self.cfg.connectivity {
            Connectivity::Angle => self.run(cloud, semantics, &self.angle, false),
            Connectivity::Euclidean { max_distance } => {
                let cond = EuclideanCondition { cloud, max_distance };
                self.run(cloud, semantics, &cond, false)
            }
        }
    }

    /// Same stages with single-pass range-image labeling in place of
    /// divide-and-merge.
    pub fn cluster_frame_baseline(&self, cloud: &PointCloud, semantics: &[u32]) -> Result<FrameOutput> {
        match self.cfg.connectivity {
            Connectivity::Angle => self.run(cloud, semantics, &self.angle, true),
            Connectivity::Euclidean { max_distance } => {
                let cond = EuclideanCondition { cloud, max_distance };
                self.run(cloud, semantics, &cond, true)
            }
        }
    }

    fn run<P>(&self, cloud: &PointCloud, semantics: &[u32], cond: &P, baseline: bool) -> Result<FrameOutput>
    where
        P: PairPredicate + ?Sized,
    {
        let start = Instant::now();
        if semantics.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                what: "semantic labels",
                expected: cloud.len(),
                actual: semantics.len(),
            });
        }
        let mut diag = FrameDiagnostics {
            n_points: cloud.len(),
            ..Default::default()
        };
        let mask = class_mask(semantics, &self.cfg.things);
        diag.n_masked = mask.iter().filter(|&&b| b).count();

        let t = Instant::now();
        let img = RangeImage::project_masked(cloud, Some(&mask), &self.cfg.projection)?;
        diag.timings.project = t.elapsed();

        let labels: LabelImage = if baseline {
            let t = Instant::now();
            let labels = depth_cluster(&img, cond, self.cfg.wrap);
            diag.timings.divide = t.elapsed();
            labels
        } else {
            let t = Instant::now();
            let seeds = select_seeds(cloud, &img, &mask, &self.voxels)?;
            diag.timings.seed = t.elapsed();

            let t = Instant::now();
            let local = local_cluster_with(&img, &seeds, cond, self.cfg.wrap, self.cfg.unreached)?;
            diag.m = local.votes.dim();
            diag.timings.divide = t.elapsed();
            diag.divide = local.stats;
            diag.vote_density = local.votes.density();

            let t = Instant::now();
            let (merged, result) = vote_and_merge_owned(local.votes, &local.labels)?;
            diag.timings.merge = t.elapsed();
            diag.merge = result.stats;
            merged
        };

        let t = Instant::now();
        let mut instances = unproject_labels(&img, &labels, cloud.len(), Some(semantics))?;
        diag.timings.unproject = t.elapsed();

        if self.cfg.postprocess {
            let t = Instant::now();
            instances = bev_merge(&instances, semantics, cloud)?;
            diag.timings.postprocess = t.elapsed();
        }

        diag.k = compact_ids(&mut instances);
        diag.timings.total = start.elapsed();
        Ok(FrameOutput {
            instances,
            diagnostics: diag,
        })
    }
}

/// Renumbers nonzero ids to `1..=k` in order of first appearance; returns k.
pub fn compact_ids(ids: &mut [u32]) -> usize {
    let mut map: HashMap<u32, u32> = HashMap::new();
    for id in ids.iter_mut().filter(|id| **id != 0) {
        let next = map.len() as u32 + 1;
        *id = *map.entry(*id).or_insert(next);
    }
    map.len()
}
