//! Neighbor connectivity on the range image: the 4-neighborhood with
//! azimuth wraparound, and the predicates that decide whether two adjacent
//! returns come from the same object.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::range_image::{Pixel, PointCloud, ProjectionConfig, RangeImage};

/// Default angle threshold, degrees.
pub const DEFAULT_THETA_DEG: f64 = 10.0;

/// Angle at the farther return between the line joining the two returns and
/// the farther beam. `alpha` is the angle between the two beams.
///
/// `d1 - d2 cos(alpha)` is evaluated as `(d1 - d2) + 2 d2 sin^2(alpha / 2)`
/// to avoid cancellation at nearly equal ranges and tiny beam angles.
#[inline]
pub fn beta(d_a: f64, d_b: f64, alpha: f64) -> f64 {
    let (d1, d2) = if d_a >= d_b { (d_a, d_b) } else { (d_b, d_a) };
    let h = (0.5 * alpha).sin();
    (d2 * alpha.sin()).atan2((d1 - d2) + 2.0 * d2 * h * h)
}

/// True when the two returns are judged to lie on one surface, i.e. the
/// angle from [`beta`] exceeds `theta_deg`.
pub fn angle_condition(d_a: f64, d_b: f64, alpha: f64, theta_deg: f64) -> Result<bool> {
    for d in [d_a, d_b] {
        if d.is_nan() || d <= 0.0 {
            return Err(Error::NonPositiveRange(d));
        }
    }
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(Error::InvalidConfig(format!("beam angle {alpha} outside (0, pi/2)")));
    }
    Ok(beta(d_a, d_b, alpha) > theta_deg.to_radians())
}

/// Up to four neighbors of a pixel, in up/down/left/right order.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors {
    items: [usize; 4],
    len: u8,
    next: u8,
}

impl Neighbors {
    fn push(&mut self, flat: usize, origin: usize) {
        if flat != origin && !self.items[..self.len as usize].contains(&flat) {
            self.items[self.len as usize] = flat;
            self.len += 1;
        }
    }
}

impl Iterator for Neighbors {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.next < self.len {
            self.next += 1;
            Some(self.items[self.next as usize - 1])
        } else {
            None
        }
    }
}

/// Image shape plus whether columns wrap around (a full 360 degree sweep).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub wrap: bool,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, wrap: bool) -> Self {
        Self { rows, cols, wrap }
    }

    pub fn of(img: &RangeImage, wrap: bool) -> Self {
        Self::new(img.rows(), img.cols(), wrap)
    }

    /// Flat indices of the 4-neighbors of flat pixel `flat`.
    #[inline]
    pub fn neighbors(&self, flat: usize) -> Neighbors {
        let (row, col) = (flat / self.cols, flat % self.cols);
        let mut n = Neighbors {
            items: [0; 4],
            len: 0,
            next: 0,
        };
        if row > 0 {
            n.push(flat - self.cols, flat);
        }
        if row + 1 < self.rows {
            n.push(flat + self.cols, flat);
        }
        let base = flat - col;
        if col > 0 {
            n.push(flat - 1, flat);
        } else if self.wrap {
            n.push(base + self.cols - 1, flat);
        }
        if col + 1 < self.cols {
            n.push(flat + 1, flat);
        } else if self.wrap {
            n.push(base, flat);
        }
        n
    }
}

/// 4-neighborhood of `p`. Columns wrap when `wrap` is set; rows never do.
pub fn neighborhood(p: Pixel, rows: usize, cols: usize, wrap: bool) -> Vec<Pixel> {
    debug_assert!(p.row < rows && p.col < cols);
    Grid::new(rows, cols, wrap)
        .neighbors(p.row * cols + p.col)
        .map(|f| Pixel::new(f / cols, f % cols))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelPair {
    pub a: Pixel,
    pub b: Pixel,
}

impl PixelPair {
    pub fn new(a: impl Into<Pixel>, b: impl Into<Pixel>) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
        }
    }
}

/// Beam geometry and threshold for the angle condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionParams {
    pub theta_deg: f64,
    pub cols: usize,
    /// Azimuth increment between adjacent columns, radians.
    pub horizontal_step: f64,
    /// `vertical_steps[r]` is the elevation increment between rows `r` and `r + 1`.
    pub vertical_steps: Vec<f64>,
}

impl ConditionParams {
    /// Uniformly spaced rows over the projection's vertical field of view.
    pub fn from_projection(cfg: &ProjectionConfig, theta_deg: f64) -> Result<Self> {
        cfg.validate()?;
        let params = Self {
            theta_deg,
            cols: cfg.cols,
            horizontal_step: cfg.horizontal_step(),
            vertical_steps: vec![cfg.vertical_step(); cfg.rows.saturating_sub(1)],
        };
        params.validate()?;
        Ok(params)
    }

    /// Per-row elevations (radians, one per row, top row first) from a
    /// calibrated scanner instead of uniform spacing.
    pub fn with_row_elevations(mut self, elevations: &[f64]) -> Result<Self> {
        self.vertical_steps = elevations.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_deg > 0.0 && self.theta_deg < 90.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in (0, 90) degrees, got {}",
                self.theta_deg
            )));
        }
        let ok = |a: f64| a > 0.0 && a < FRAC_PI_2;
        if !ok(self.horizontal_step) || !self.vertical_steps.iter().all(|&a| ok(a)) {
            return Err(Error::InvalidConfig("beam step angles must lie in (0, pi/2)".into()));
        }
        Ok(())
    }

    #[inline]
    fn alpha_unchecked(&self, a: Pixel, b: Pixel) -> f64 {
        if a.row == b.row {
            self.horizontal_step
        } else {
            self.vertical_steps[a.row.min(b.row)]
        }
    }
}

/// Beam angle between the two pixels of a 4-adjacent pair.
pub fn pair_alpha(pair: PixelPair, params: &ConditionParams) -> Result<f64> {
    let PixelPair { a, b } = pair;
    let not_adjacent = || Error::NotAdjacent(a.row, a.col, b.row, b.col);
    if a.row == b.row {
        let cols = params.cols;
        let dc = a.col.abs_diff(b.col);
        if dc == 1 || (cols > 2 && dc == cols - 1) {
            return Ok(params.horizontal_step);
        }
        return Err(not_adjacent());
    }
    if a.col == b.col && a.row.abs_diff(b.row) == 1 {
        return params
            .vertical_steps
            .get(a.row.min(b.row))
            .copied()
            .ok_or_else(not_adjacent);
    }
    Err(not_adjacent())
}

/// Decides whether two adjacent occupied pixels belong to one object.
pub trait PairPredicate {
    fn connected(&self, img: &RangeImage, a: Pixel, b: Pixel) -> bool;
}

impl<F> PairPredicate for F
where
    F: Fn(&RangeImage, Pixel, Pixel) -> bool,
{
    fn connected(&self, img: &RangeImage, a: Pixel, b: Pixel) -> bool {
        self(img, a, b)
    }
}

/// Every adjacent occupied pair is connected; reduces clustering to binary CCL.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysConnected;

impl PairPredicate for AlwaysConnected {
    fn connected(&self, _: &RangeImage, _: Pixel, _: Pixel) -> bool {
        true
    }
}

/// The angle threshold test on neighboring range returns.
#[derive(Debug, Clone)]
pub struct AngleCondition {
    params: ConditionParams,
    theta_rad: f64,
}

impl AngleCondition {
    pub fn new(params: ConditionParams) -> Result<Self> {
        params.validate()?;
        let theta_rad = params.theta_deg.to_radians();
        Ok(Self { params, theta_rad })
    }

    pub fn params(&self) -> &ConditionParams {
        &self.params
    }
}

impl PairPredicate for AngleCondition {
    #[inline]
    fn connected(&self, img: &RangeImage, a: Pixel, b: Pixel) -> bool {
        match (img.range(a), img.range(b)) {
            (Some(da), Some(db)) => beta(da as f64, db as f64, self.params.alpha_unchecked(a, b)) > self.theta_rad,
            _ => false,
        }
    }
}

/// Connects returns closer than `max_distance` meters in 3D. Kept for
/// comparison; it cannot separate objects that nearly touch.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanCondition<'a> {
    pub cloud: &'a PointCloud,
    pub max_distance: f64,
}

impl PairPredicate for EuclideanCondition<'_> {
    fn connected(&self, img: &RangeImage, a: Pixel, b: Pixel) -> bool {
        let (Some(ia), Some(ib)) = (img.point_at(a), img.point_at(b)) else {
            return false;
        };
        let (p, q) = (&self.cloud.points()[ia], &self.cloud.points()[ib]);
        let (dx, dy, dz) = ((p.x - q.x) as f64, (p.y - q.y) as f64, (p.z - q.z) as f64);
        (dx * dx + dy * dy + dz * dz).sqrt() < self.max_distance
    }
}
