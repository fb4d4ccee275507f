//! Bird's-eye-view fix-up for SemanticKITTI's object definition: instances of
//! the same class whose ground-plane footprints overlap are one object (a
//! driver seen through the windshield belongs to the car).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::range_image::PointCloud;

/// Axis-aligned ground-plane rectangle of one (instance, class) segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevFootprint {
    pub instance: u32,
    pub semantic: u32,
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl BevFootprint {
    fn at(instance: u32, semantic: u32, x: f64, y: f64) -> Self {
        Self {
            instance,
            semantic,
            min_x: x,
            max_x: x,
            min_y: y,
            max_y: y,
        }
    }

    fn include(&mut self, x: f64, y: f64) {
        self.min_x = self.min_x.min(x);
        self.max_x = self.max_x.max(x);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }

    /// Closed-rectangle intersection; touching edges count.
    pub fn overlaps(&self, other: &Self) -> bool {
        self.min_x <= other.max_x && other.min_x <= self.max_x && self.min_y <= other.max_y && other.min_y <= self.max_y
    }
}

/// Footprints of every segment with a nonzero instance, ordered by
/// (semantic, instance).
pub fn footprints(instances: &[u32], semantics: &[u32], cloud: &PointCloud) -> Result<Vec<BevFootprint>> {
    check_lengths(instances, semantics, cloud)?;
    let mut map: BTreeMap<(u32, u32), BevFootprint> = BTreeMap::new();
    for ((&inst, &sem), p) in instances.iter().zip(semantics).zip(cloud.points()) {
        if inst == 0 {
            continue;
        }
        let (x, y) = (p.x as f64, p.y as f64);
        map.entry((sem, inst))
            .and_modify(|f| f.include(x, y))
            .or_insert_with(|| BevFootprint::at(inst, sem, x, y));
    }
    Ok(map.into_values().collect())
}

fn check_lengths(instances: &[u32], semantics: &[u32], cloud: &PointCloud) -> Result<()> {
    for (what, len) in [
        ("instance labels", instances.len()),
        ("semantic labels", semantics.len()),
    ] {
        if len != cloud.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: cloud.len(),
                actual: len,
            });
        }
    }
    Ok(())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges same-class instances whose footprints overlap, relabeling each
/// group to its smallest instance id. Footprints are recomputed after every
/// pass until nothing changes, since a merged footprint can reach further.
pub fn bev_merge(instances: &[u32], semantics: &[u32], cloud: &PointCloud) -> Result<Vec<u32>> {
    check_lengths(instances, semantics, cloud)?;
    let mut labels = instances.to_vec();
    loop {
        let prints = footprints(&labels, semantics, cloud)?;
        let mut parent: Vec<usize> = (0..prints.len()).collect();
        let mut start = 0;
        while start < prints.len() {
            let class = prints[start].semantic;
            let end = start + prints[start..].iter().take_while(|f| f.semantic == class).count();
            for i in start..end {
                for j in i + 1..end {
                    if prints[i].overlaps(&prints[j]) {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        // within a class footprints are sorted by instance, so
                        // the lower index keeps the smaller id
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
            start = end;
        }

        let mut remap: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for i in 0..prints.len() {
            let root = find(&mut parent, i);
            if root != i {
                remap.insert((prints[i].semantic, prints[i].instance), prints[root].instance);
            }
        }
        if remap.is_empty() {
            return Ok(labels);
        }
        for (l, &sem) in labels.iter_mut().zip(semantics) {
            if let Some(&to) = remap.get(&(sem, *l)) {
                *l = to;
            }
        }
    }
}
