//! Reference clusterers: plain connected-component labeling on binary images,
//! and single-pass range-image labeling driven by a pair predicate.

use std::collections::VecDeque;

use crate::connectivity::{Grid, PairPredicate};
use crate::error::{Error, Result};
use crate::local_cluster::LabelImage;
use crate::range_image::RangeImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "binary image needs at least one row and column, got {rows}x{cols}"
            )));
        }
        if bits.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "binary image",
                expected: rows * cols,
                actual: bits.len(),
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Range image with range 1 on set pixels.
    pub fn to_range_image(&self) -> RangeImage {
        let ranges: Vec<f32> = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        RangeImage::from_ranges(self.rows, self.cols, &ranges).expect("dimensions already validated")
    }
}

fn flood<F>(grid: Grid, start: usize, label: u32, labels: &mut [u32], queue: &mut VecDeque<usize>, mut joins: F)
where
    F: FnMut(usize, usize) -> bool,
{
    labels[start] = label;
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        for n in grid.neighbors(cur) {
            if labels[n] == 0 && joins(cur, n) {
                labels[n] = label;
                queue.push_back(n);
            }
        }
    }
}

/// 4-connected components of the set pixels, labeled `1..=k` in row-major
/// discovery order. No column wraparound.
pub fn ccl_binary(img: &BinaryImage) -> LabelImage {
    let grid = Grid::new(img.rows, img.cols, false);
    let mut labels = vec![0u32; img.bits.len()];
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..img.bits.len() {
        if img.bits[start] && labels[start] == 0 {
            next += 1;
            flood(grid, start, next, &mut labels, &mut queue, |_, n| img.bits[n]);
        }
    }
    LabelImage::from_vec(img.rows, img.cols, labels).expect("sized from image")
}

/// Range-image labeling: every unlabeled occupied pixel, in row-major order,
/// opens a new label that floods through neighbors accepted by `condition`.
pub fn depth_cluster<P>(img: &RangeImage, condition: &P, wrap: bool) -> LabelImage
where
    P: PairPredicate + ?Sized,
{
    let grid = Grid::of(img, wrap);
    let mut labels = vec![0u32; img.len()];
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..img.len() {
        if img.is_occupied_flat(start) && labels[start] == 0 {
            next += 1;
            flood(grid, start, next, &mut labels, &mut queue, |cur, n| {
                img.is_occupied_flat(n) && condition.connected(img, img.pixel(cur), img.pixel(n))
            });
        }
    }
    LabelImage::from_vec(img.rows(), img.cols(), labels).expect("sized from image")
}
