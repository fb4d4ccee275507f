//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use dmcluster::EvalConfig;

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            std::cmp::Ordering::Less => self.parent[a] = b,
            std::cmp::Ordering::Greater => self.parent[b] = a,
            std::cmp::Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
    }
}

/// Two-pass 4-connected labeling with a union-find over provisional labels.
pub fn union_find_ccl(rows: usize, cols: usize, bits: &[bool]) -> Vec<u32> {
    let mut uf = UnionFind::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !bits[i] {
                continue;
            }
            if c > 0 && bits[i - 1] {
                uf.union(i, i - 1);
            }
            if r > 0 && bits[i - cols] {
                uf.union(i, i - cols);
            }
        }
    }
    let mut ids = HashMap::new();
    (0..rows * cols)
        .map(|i| {
            if !bits[i] {
                return 0;
            }
            let root = uf.find(i);
            let next = ids.len() as u32 + 1;
            *ids.entry(root).or_insert(next)
        })
        .collect()
}

/// True when both labelings have the same zero set and induce the same
/// partition of the nonzero entries.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut bwd = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteClass {
    pub pq: f64,
    pub rq: f64,
    pub sq: f64,
    pub tp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteReport {
    pub classes: BTreeMap<u32, BruteClass>,
    pub pq: Option<f64>,
    pub rq: Option<f64>,
    pub sq: Option<f64>,
}

/// Panoptic quality by explicit segment sets: every predicted segment is
/// compared with every ground-truth segment of the same class.
pub fn brute_force_pq(
    pred_sem: &[u32],
    pred_inst: &[u32],
    gt_sem: &[u32],
    gt_inst: &[u32],
    cfg: &EvalConfig,
) -> BruteReport {
    let n = gt_sem.len();
    let valid: Vec<usize> = (0..n).filter(|&i| !cfg.ignore.contains(&gt_sem[i])).collect();
    let mut classes = BTreeMap::new();
    for class in cfg.things.iter().chain(&cfg.stuff).copied().collect::<BTreeSet<_>>() {
        let pred_pts: BTreeSet<usize> = valid.iter().copied().filter(|&i| pred_sem[i] == class).collect();
        let gt_pts: BTreeSet<usize> = valid.iter().copied().filter(|&i| gt_sem[i] == class).collect();
        if pred_pts.union(&gt_pts).count() == 0 {
            continue;
        }
        let segments = |pts: &BTreeSet<usize>, inst: &[u32]| {
            let mut s: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
            for &i in pts {
                s.entry(inst[i]).or_default().insert(i);
            }
            s
        };
        let ps = segments(&pred_pts, pred_inst);
        let gs = segments(&gt_pts, gt_inst);
        let mut tp = 0;
        let mut iou_sum = 0.0;
        let mut matched_p = BTreeSet::new();
        let mut matched_g = BTreeSet::new();
        for (pi, p) in &ps {
            for (gi, g) in &gs {
                let inter = p.intersection(g).count();
                let union = p.union(g).count();
                let iou = inter as f64 / union as f64;
                if iou > 0.5 {
                    tp += 1;
                    iou_sum += iou;
                    matched_p.insert(*pi);
                    matched_g.insert(*gi);
                }
            }
        }
        let fp = ps
            .iter()
            .filter(|(k, v)| !matched_p.contains(*k) && v.len() >= cfg.min_points)
            .count();
        let fn_ = gs
            .iter()
            .filter(|(k, v)| !matched_g.contains(*k) && v.len() >= cfg.min_points)
            .count();
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        let (pq, rq) = if denom > 0.0 {
            (iou_sum / denom, tp as f64 / denom)
        } else {
            (0.0, 0.0)
        };
        let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
        classes.insert(class, BruteClass { pq, rq, sq, tp });
    }
    let avg = |f: fn(&BruteClass) -> f64| {
        (!classes.is_empty()).then(|| classes.values().map(f).sum::<f64>() / classes.len() as f64)
    };
    BruteReport {
        pq: avg(|c| c.pq),
        rq: avg(|c| c.rq),
        sq: avg(|c| c.sq),
        classes,
    }
}

/// Angle at the farther return by the law of tangents, a formula independent
/// of the `atan2` form used by the library.
pub fn beta_oracle(d_a: f64, d_b: f64, alpha: f64) -> f64 {
    let (d1, d2) = if d_a >= d_b { (d_a, d_b) } else { (d_b, d_a) };
    let half_sum = 0.5 * (std::f64::consts::PI - alpha);
    let half_diff = ((d1 - d2) / (d1 + d2) / (0.5 * alpha).tan()).atan();
    half_sum - half_diff
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
