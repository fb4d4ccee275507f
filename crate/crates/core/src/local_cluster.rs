//! The divide step: one seed per occupied voxel, breadth-first growth of all
//! seeds in round-robin order, and vote counting on every pixel pair that
//! touches two different local labels.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::connectivity::{Grid, PairPredicate};
use crate::error::{Error, Result};
use crate::range_image::{Pixel, PointCloud, RangeImage};

/// Grid of component labels; 0 means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            labels: vec![0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "label grid",
                expected: rows * cols,
                actual: labels.len(),
            });
        }
        Ok(Self { rows, cols, labels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, px: Pixel) -> u32 {
        self.labels[px.row * self.cols + px.col]
    }

    pub fn set(&mut self, px: Pixel, label: u32) {
        self.labels[px.row * self.cols + px.col] = label;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn as_mut_slice(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.labels
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Dense square matrix of vote counts, indexed by 0-based local label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    dim: usize,
    data: Vec<u32>,
}

impl VoteMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0; dim * dim],
        }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::LengthMismatch {
                    what: "vote matrix row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: u32) {
        self.data[i * self.dim + j] = value;
    }

    /// Increments both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn add_symmetric(&mut self, i: usize, j: usize) {
        self.data[i * self.dim + j] += 1;
        self.data[j * self.dim + i] += 1;
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `row[dst] += row[src]`, element-wise.
    #[inline]
    pub fn fold_row(&mut self, src: usize, dst: usize) {
        if src == dst {
            let row = &mut self.data[dst * self.dim..(dst + 1) * self.dim];
            row.iter_mut().for_each(|v| *v = v.saturating_mul(2));
            return;
        }
        let d = self.dim;
        let (s, t) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * d);
            (&lo[src * d..(src + 1) * d], &mut hi[..d])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * d);
            (&hi[..d], &mut lo[dst * d..(dst + 1) * d])
        };
        for (t, s) in t.iter_mut().zip(s) {
            *t = t.saturating_add(*s);
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Number of nonzero off-diagonal entries.
    pub fn off_diagonal_nonzeros(&self) -> usize {
        (0..self.dim)
            .map(|i| (0..self.dim).filter(|&j| j != i && self.get(i, j) != 0).count())
            .sum()
    }

    /// Sum of the off-diagonal entries.
    pub fn off_diagonal_total(&self) -> u64 {
        let mut total = 0u64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    total += self.get(i, j) as u64;
                }
            }
        }
        total
    }
}

/// Edge evidence between local labels: `plus` counts neighbor pairs that
/// satisfied the connectivity condition, `minus` those that failed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotingMatrices {
    pub plus: VoteMatrix,
    pub minus: VoteMatrix,
}

impl VotingMatrices {
    pub fn zeros(m: usize) -> Self {
        Self {
            plus: VoteMatrix::zeros(m),
            minus: VoteMatrix::zeros(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    /// Fraction of off-diagonal label pairs with any vote.
    pub fn density(&self) -> f64 {
        let m = self.dim();
        if m < 2 {
            return 0.0;
        }
        let mut touched = 0usize;
        for i in 0..m {
            for j in 0..m {
                if i != j && (self.plus.get(i, j) != 0 || self.minus.get(i, j) != 0) {
                    touched += 1;
                }
            }
        }
        touched as f64 / (m * (m - 1)) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridConfig {
    /// Voxel edge length, meters.
    pub edge: f64,
}

impl VoxelGridConfig {
    pub fn new(edge: f64) -> Result<Self> {
        let cfg = Self { edge };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.edge > 0.0 && self.edge.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "voxel edge must be positive, got {}",
                self.edge
            )));
        }
        Ok(())
    }

    pub fn key(&self, x: f64, y: f64, z: f64) -> [i64; 3] {
        [
            (x / self.edge).floor() as i64,
            (y / self.edge).floor() as i64,
            (z / self.edge).floor() as i64,
        ]
    }
}

/// Seed pixels; seed `i` starts local label `i + 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedList(Vec<Pixel>);

impl SeedList {
    pub fn new(seeds: Vec<Pixel>) -> Self {
        Self(seeds)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Pixel] {
        &self.0
    }
}

/// One seed per non-empty voxel of edge `cfg.edge`, taken over the points
/// that are masked in and visible in `img`. Each voxel's seed is its
/// lowest-index point; seeds come out ordered by that index.
pub fn select_seeds(cloud: &PointCloud, img: &RangeImage, mask: &[bool], cfg: &VoxelGridConfig) -> Result<SeedList> {
    cfg.validate()?;
    if mask.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "seed mask",
            expected: cloud.len(),
            actual: mask.len(),
        });
    }
    if img.n_points() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "range image source cloud",
            expected: cloud.len(),
            actual: img.n_points(),
        });
    }

    let mut voxels: HashMap<[i64; 3], ()> = HashMap::new();
    let mut seeds = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if !mask[i] || !img.is_visible(i) {
            continue;
        }
        let key = cfg.key(p.x as f64, p.y as f64, p.z as f64);
        if let Entry::Vacant(slot) = voxels.entry(key) {
            slot.insert(());
            seeds.push(img.pixel_of(i).expect("visible point has a pixel"));
        }
    }
    Ok(SeedList(seeds))
}

/// Operation counts of one divide step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DivideStats {
    pub seeds: usize,
    pub pops: usize,
    pub neighbor_evals: usize,
    pub claims: usize,
    pub plus_votes: usize,
    pub minus_votes: usize,
    pub undecided: usize,
    /// Labels opened for pixels no seed reached.
    pub extra_labels: usize,
}

impl DivideStats {
    /// Queue pops plus neighbor evaluations.
    pub fn operations(&self) -> usize {
        self.pops + self.neighbor_evals
    }
}

#[derive(Debug, Clone)]
pub struct LocalClustering {
    pub labels: LabelImage,
    pub votes: VotingMatrices,
    pub stats: DivideStats,
}

/// What happens to occupied pixels that no seed can reach through
/// connected neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unreached {
    /// They stay unlabeled (0).
    #[default]
    Leave,
    /// Once every queue drains, each one still unlabeled, in row-major order,
    /// opens a fresh label that grows like a seed.
    NewLabel,
}

/// Grows every seed breadth-first, one pop per live queue per round, over
/// the occupied pixels of `img`. Unreached pixels stay unlabeled; see
/// [`local_cluster_with`].
pub fn local_cluster<P>(img: &RangeImage, seeds: &SeedList, condition: &P, wrap: bool) -> Result<LocalClustering>
where
    P: PairPredicate + ?Sized,
{
    local_cluster_with(img, seeds, condition, wrap, Unreached::Leave)
}

/// Grows every seed breadth-first, one pop per live queue per round, over
/// the occupied pixels of `img`.
///
/// An unlabeled neighbor that passes `condition` is claimed by the current
/// label. A neighbor already held by another label adds a symmetric vote to
/// `plus` or `minus` depending on the condition. A failing unlabeled
/// neighbor is parked; once growth stops it votes into `minus` if it ended
/// up under a different label.
///
/// Labels opened for unreached pixels come after the seeds, so the vote
/// matrices can be larger than the seed list.
pub fn local_cluster_with<P>(
    img: &RangeImage,
    seeds: &SeedList,
    condition: &P,
    wrap: bool,
    unreached: Unreached,
) -> Result<LocalClustering>
where
    P: PairPredicate + ?Sized,
{
    let m = seeds.len();
    if m >= u32::MAX as usize {
        return Err(Error::InvalidSeed("too many seeds".into()));
    }
    let grid = Grid::of(img, wrap);
    let mut labels = vec![0u32; img.len()];
    let mut queues: Vec<VecDeque<usize>> = Vec::with_capacity(m);
    for (i, &px) in seeds.as_slice().iter().enumerate() {
        if !img.contains(px) {
            return Err(Error::InvalidSeed(format!("seed {i} at {px:?} is out of bounds")));
        }
        let flat = img.flat(px);
        if !img.is_occupied_flat(flat) {
            return Err(Error::InvalidSeed(format!("seed {i} at {px:?} is an empty pixel")));
        }
        if labels[flat] != 0 {
            return Err(Error::InvalidSeed(format!("seed {i} at {px:?} is a duplicate")));
        }
        labels[flat] = i as u32 + 1;
        queues.push(VecDeque::from([flat]));
    }

    let mut stats = DivideStats {
        seeds: m,
        ..Default::default()
    };
    // (label, label, connected), 1-based
    let mut edge_votes: Vec<(u32, u32, bool)> = Vec::new();
    let mut undecided: Vec<(usize, usize)> = Vec::new();
    let mut live: Vec<usize> = (0..m).collect();
    let mut cursor = 0;

    loop {
        while !live.is_empty() {
            for &q in &live {
                let Some(current) = queues[q].pop_front() else {
                    continue;
                };
                stats.pops += 1;
                let label = labels[current];
                let here = img.pixel(current);
                for neighbor in grid.neighbors(current) {
                    if !img.is_occupied_flat(neighbor) {
                        continue;
                    }
                    stats.neighbor_evals += 1;
                    let connected = condition.connected(img, here, img.pixel(neighbor));
                    let other = labels[neighbor];
                    match (connected, other) {
                        (true, 0) => {
                            labels[neighbor] = label;
                            queues[q].push_back(neighbor);
                            stats.claims += 1;
                        }
                        (false, 0) => {
                            undecided.push((current, neighbor));
                            stats.undecided += 1;
                        }
                        (_, l) if l == label => {}
                        (true, l) => {
                            edge_votes.push((label, l, true));
                            stats.plus_votes += 1;
                        }
                        (false, l) => {
                            edge_votes.push((label, l, false));
                            stats.minus_votes += 1;
                        }
                    }
                }
            }
            live.retain(|&q| !queues[q].is_empty());
        }

        if unreached == Unreached::Leave {
            break;
        }
        while cursor < labels.len() && (labels[cursor] != 0 || !img.is_occupied_flat(cursor)) {
            cursor += 1;
        }
        if cursor == labels.len() {
            break;
        }
        if queues.len() >= u32::MAX as usize {
            return Err(Error::InvalidSeed("too many labels".into()));
        }
        queues.push(VecDeque::from([cursor]));
        labels[cursor] = queues.len() as u32;
        live.push(queues.len() - 1);
        stats.extra_labels += 1;
    }

    let mut votes = VotingMatrices::zeros(queues.len());
    for (a, b, connected) in edge_votes {
        let matrix = if connected { &mut votes.plus } else { &mut votes.minus };
        matrix.add_symmetric(a as usize - 1, b as usize - 1);
    }
    for (current, neighbor) in undecided {
        let (a, b) = (labels[current], labels[neighbor]);
        if b != 0 && a != b {
            votes.minus.add_symmetric(a as usize - 1, b as usize - 1);
            stats.minus_votes += 1;
        }
    }

    Ok(LocalClustering {
        labels: LabelImage {
            rows: img.rows(),
            cols: img.cols(),
            labels,
        },
        votes,
        stats,
    })
}
