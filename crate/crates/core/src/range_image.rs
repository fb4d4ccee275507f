//! Spherical projection of a LiDAR sweep onto a range image, and the way back
//! from per-pixel labels to per-point labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local_cluster::LabelImage;

/// Range stored in pixels that received no point.
pub const EMPTY_RANGE: f32 = -1.0;

const NO_POINT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub remission: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, remission: f32) -> Self {
        Self { x, y, z, remission }
    }

    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.remission.is_finite()
    }
}

/// One LiDAR frame. Point indices are stable for the lifetime of the cloud.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    /// Builds a cloud, rejecting any point with a NaN or infinite field.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Option<&Point> {
        self.points.get(index)
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// A pixel location on a range or label image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<(usize, usize)> for Pixel {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub rows: usize,
    pub cols: usize,
    /// Upper edge of the vertical field of view, degrees.
    pub fov_up_deg: f64,
    /// Lower edge of the vertical field of view, degrees.
    pub fov_down_deg: f64,
}

impl Default for ProjectionConfig {
    /// HDL-64E layout used by SemanticKITTI.
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 2048,
            fov_up_deg: 3.0,
            fov_down_deg: -25.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "projection needs at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.fov_up_deg.is_finite() && self.fov_down_deg.is_finite()) || self.fov_up_deg <= self.fov_down_deg {
            return Err(Error::InvalidConfig(format!(
                "vertical fov up ({}) must exceed fov down ({})",
                self.fov_up_deg, self.fov_down_deg
            )));
        }
        Ok(())
    }

    pub fn vertical_fov_rad(&self) -> f64 {
        (self.fov_up_deg - self.fov_down_deg).to_radians()
    }

    /// Azimuth increment between adjacent columns.
    pub fn horizontal_step(&self) -> f64 {
        std::f64::consts::TAU / self.cols as f64
    }

    /// Elevation increment between adjacent rows.
    pub fn vertical_step(&self) -> f64 {
        self.vertical_fov_rad() / self.rows as f64
    }

    /// Elevation of the center of `row`, radians.
    pub fn row_elevation(&self, row: usize) -> f64 {
        self.fov_up_deg.to_radians() - (row as f64 + 0.5) * self.vertical_step()
    }

    /// Azimuth of the center of `col`, radians. Column `cols / 2` looks down +x.
    pub fn col_azimuth(&self, col: usize) -> f64 {
        std::f64::consts::PI * (1.0 - 2.0 * (col as f64 + 0.5) / self.cols as f64)
    }

    /// Pixel a direction falls into. Elevations outside the field of view are
    /// clamped to the first or last row.
    pub fn pixel_for(&self, x: f64, y: f64, z: f64) -> Option<Pixel> {
        let range = (x * x + y * y + z * z).sqrt();
        if range <= 0.0 {
            return None;
        }
        let elevation = (z / range).clamp(-1.0, 1.0).asin();
        let azimuth = y.atan2(x);

        let v = (self.fov_up_deg.to_radians() - elevation) / self.vertical_fov_rad();
        let row = (v * self.rows as f64).floor().clamp(0.0, (self.rows - 1) as f64) as usize;

        let u = 0.5 * (1.0 - azimuth / std::f64::consts::PI) * self.cols as f64;
        let col = (u.floor() as i64).rem_euclid(self.cols as i64) as usize;
        Some(Pixel { row, col })
    }
}

/// Range image with the pixel/point correspondence of the frame it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    rows: usize,
    cols: usize,
    range: Vec<f32>,
    point_index: Vec<u32>,
    /// Flat pixel each source point projected to, `NO_POINT` when dropped.
    pixel_of_point: Vec<u32>,
}

impl RangeImage {
    /// Projects every point of `cloud`.
    pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<Self> {
        Self::project_masked(cloud, None, cfg)
    }

    /// Projects the points selected by `mask` (all points when `None`).
    /// Point indices keep referring to the full cloud.
    ///
    /// Collisions keep the nearest point; equal ranges keep the lower index.
    pub fn project_masked(cloud: &PointCloud, mask: Option<&[bool]>, cfg: &ProjectionConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(mask) = mask {
            if mask.len() != cloud.len() {
                return Err(Error::LengthMismatch {
                    what: "projection mask",
                    expected: cloud.len(),
                    actual: mask.len(),
                });
            }
        }
        if cloud.len() >= NO_POINT as usize {
            return Err(Error::InvalidConfig("cloud too large to index".into()));
        }

        let n_pixels = cfg.rows * cfg.cols;
        let mut img = Self {
            rows: cfg.rows,
            cols: cfg.cols,
            range: vec![EMPTY_RANGE; n_pixels],
            point_index: vec![NO_POINT; n_pixels],
            pixel_of_point: vec![NO_POINT; cloud.len()],
        };

        for (i, p) in cloud.points().iter().enumerate() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            let Some(px) = cfg.pixel_for(x, y, z) else {
                continue;
            };
            let flat = px.row * cfg.cols + px.col;
            img.pixel_of_point[i] = flat as u32;
            let r = (p.range() as f32).max(f32::MIN_POSITIVE);
            let current = img.range[flat];
            if current < 0.0 || r < current {
                img.range[flat] = r;
                img.point_index[flat] = i as u32;
            }
        }
        Ok(img)
    }

    /// Builds an image directly from a row-major grid of ranges. Occupied
    /// pixels (range > 0) are assigned point indices in row-major order, as
    /// if a cloud had one point per occupied pixel in that order.
    pub fn from_ranges(rows: usize, cols: usize, ranges: &[f32]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "image needs at least one row and column, got {rows}x{cols}"
            )));
        }
        if ranges.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "range grid",
                expected: rows * cols,
                actual: ranges.len(),
            });
        }
        let mut range = vec![EMPTY_RANGE; rows * cols];
        let mut point_index = vec![NO_POINT; rows * cols];
        let mut pixel_of_point = Vec::new();
        for (flat, &r) in ranges.iter().enumerate() {
            if r > 0.0 && r.is_finite() {
                range[flat] = r;
                point_index[flat] = pixel_of_point.len() as u32;
                pixel_of_point.push(flat as u32);
            }
        }
        Ok(Self {
            rows,
            cols,
            range,
            point_index,
            pixel_of_point,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of points in the source cloud.
    pub fn n_points(&self) -> usize {
        self.pixel_of_point.len()
    }

    pub fn flat(&self, px: Pixel) -> usize {
        px.row * self.cols + px.col
    }

    pub fn pixel(&self, flat: usize) -> Pixel {
        Pixel::new(flat / self.cols, flat % self.cols)
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px.row < self.rows && px.col < self.cols
    }

    /// Range at `px`, `None` when empty.
    pub fn range(&self, px: Pixel) -> Option<f32> {
        self.range_flat(self.flat(px))
    }

    pub fn range_flat(&self, flat: usize) -> Option<f32> {
        let r = self.range[flat];
        (r > 0.0).then_some(r)
    }

    /// Raw range grid, [`EMPTY_RANGE`] where empty.
    pub fn ranges(&self) -> &[f32] {
        &self.range
    }

    pub fn point_at(&self, px: Pixel) -> Option<usize> {
        self.point_at_flat(self.flat(px))
    }

    pub fn point_at_flat(&self, flat: usize) -> Option<usize> {
        let i = self.point_index[flat];
        (i != NO_POINT).then_some(i as usize)
    }

    pub fn is_occupied_flat(&self, flat: usize) -> bool {
        self.point_index[flat] != NO_POINT
    }

    /// Pixel that point `index` projected to, whether or not it won the pixel.
    pub fn pixel_of(&self, index: usize) -> Option<Pixel> {
        match self.pixel_of_point.get(index) {
            Some(&flat) if flat != NO_POINT => Some(self.pixel(flat as usize)),
            _ => None,
        }
    }

    /// True when point `index` is the one stored in its pixel.
    pub fn is_visible(&self, index: usize) -> bool {
        match self.pixel_of_point.get(index) {
            Some(&flat) if flat != NO_POINT => self.point_index[flat as usize] == index as u32,
            _ => false,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.point_index.iter().filter(|&&i| i != NO_POINT).count()
    }
}

/// Maps pixel labels back onto the `n_points` points of the source cloud.
///
/// The point stored in a pixel takes that pixel's label. A point that lost
/// its pixel to a nearer return takes the label only when `semantics` is
/// given and it agrees with the winner's class; otherwise it gets 0.
pub fn unproject_labels(
    img: &RangeImage,
    labels: &LabelImage,
    n_points: usize,
    semantics: Option<&[u32]>,
) -> Result<Vec<u32>> {
    if labels.rows() != img.rows() || labels.cols() != img.cols() {
        return Err(Error::DimensionMismatch {
            rows: img.rows(),
            cols: img.cols(),
            actual_rows: labels.rows(),
            actual_cols: labels.cols(),
        });
    }
    if n_points != img.n_points() {
        return Err(Error::LengthMismatch {
            what: "point count",
            expected: img.n_points(),
            actual: n_points,
        });
    }
    if let Some(sem) = semantics {
        if sem.len() != n_points {
            return Err(Error::LengthMismatch {
                what: "semantic labels",
                expected: n_points,
                actual: sem.len(),
            });
        }
    }

    let pixel_labels = labels.as_slice();
    let out = img
        .pixel_of_point
        .iter()
        .enumerate()
        .map(|(i, &flat)| {
            if flat == NO_POINT {
                return 0;
            }
            let flat = flat as usize;
            let winner = img.point_index[flat];
            if winner == i as u32 {
                return pixel_labels[flat];
            }
            match semantics {
                Some(sem) if winner != NO_POINT && sem[winner as usize] == sem[i] => pixel_labels[flat],
                _ => 0,
            }
        })
        .collect();
    Ok(out)
}
