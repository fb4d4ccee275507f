//! Panoptic quality evaluation for point-wise (class, instance) labelings.
//!
//! A segment is the set of points sharing one (class, instance) pair; stuff
//! classes carry instance 0 and so form one segment per class. A predicted
//! and a ground-truth segment of the same class match when their IoU is
//! strictly above 0.5, which makes the matching unique. Per class,
//!
//! ```text
//! PQ = sum(IoU over matches) / (TP + FP/2 + FN/2)
//! RQ = TP / (TP + FP/2 + FN/2)
//! SQ = sum(IoU over matches) / TP
//! ```
//!
//! PQ-dagger swaps PQ for the point-wise semantic IoU on stuff classes.
//! Class averages are unweighted and skip classes absent from both sides.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SemanticKITTI thing classes: car, bicycle, motorcycle, truck,
/// other-vehicle, person, bicyclist, motorcyclist.
pub const KITTI_THING_CLASSES: [u32; 8] = [10, 11, 15, 18, 20, 30, 31, 32];

/// SemanticKITTI stuff classes: road, parking, sidewalk, other-ground,
/// building, fence, vegetation, trunk, terrain, pole, traffic-sign.
pub const KITTI_STUFF_CLASSES: [u32; 11] = [40, 44, 48, 49, 50, 51, 70, 71, 72, 80, 81];

/// Unlabeled and outlier.
pub const KITTI_IGNORE_CLASSES: [u32; 2] = [0, 1];

/// Per-point semantic class and instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PanopticFrame {
    pub semantics: Vec<u32>,
    pub instances: Vec<u32>,
}

impl PanopticFrame {
    pub fn new(semantics: Vec<u32>, instances: Vec<u32>) -> Result<Self> {
        if semantics.len() != instances.len() {
            return Err(Error::LengthMismatch {
                what: "instance labels",
                expected: semantics.len(),
                actual: instances.len(),
            });
        }
        Ok(Self { semantics, instances })
    }

    pub fn len(&self) -> usize {
        self.semantics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantics.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub things: BTreeSet<u32>,
    pub stuff: BTreeSet<u32>,
    /// Points whose ground-truth class is listed here are dropped before matching.
    pub ignore: BTreeSet<u32>,
    /// Unmatched segments smaller than this are not counted as FP/FN.
    pub min_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            things: KITTI_THING_CLASSES.into_iter().collect(),
            stuff: KITTI_STUFF_CLASSES.into_iter().collect(),
            ignore: KITTI_IGNORE_CLASSES.into_iter().collect(),
            min_points: 0,
        }
    }
}

impl EvalConfig {
    pub fn classes(&self) -> BTreeSet<u32> {
        self.things.union(&self.stuff).copied().collect()
    }

    fn validate(&self) -> Result<()> {
        if self.things.is_empty() && self.stuff.is_empty() {
            return Err(Error::InvalidConfig("evaluation needs at least one class".into()));
        }
        if let Some(c) = self.things.intersection(&self.stuff).next() {
            return Err(Error::InvalidConfig(format!("class {c} is both thing and stuff")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentMatch {
    /// (predicted instance, ground-truth instance, IoU)
    pub tp: Vec<(u32, u32, f64)>,
    /// Unmatched predicted instances.
    pub fp: Vec<u32>,
    /// Unmatched ground-truth instances.
    pub fn_: Vec<u32>,
}

fn check_frames(pred: &PanopticFrame, gt: &PanopticFrame) -> Result<()> {
    for f in [pred, gt] {
        if f.semantics.len() != f.instances.len() {
            return Err(Error::LengthMismatch {
                what: "instance labels",
                expected: f.semantics.len(),
                actual: f.instances.len(),
            });
        }
    }
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "prediction points",
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// Matches the segments of `class` between `pred` and `gt`.
pub fn match_segments(pred: &PanopticFrame, gt: &PanopticFrame, class: u32, cfg: &EvalConfig) -> Result<SegmentMatch> {
    check_frames(pred, gt)?;
    let mut pred_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut gt_sizes: BTreeMap<u32, u64> = BTreeMap::new();
    let mut overlap: HashMap<(u32, u32), u64> = HashMap::new();
    for i in 0..gt.len() {
        if cfg.ignore.contains(&gt.semantics[i]) {
            continue;
        }
        let in_pred = pred.semantics[i] == class;
        let in_gt = gt.semantics[i] == class;
        if in_pred {
            *pred_sizes.entry(pred.instances[i]).or_default() += 1;
        }
        if in_gt {
            *gt_sizes.entry(gt.instances[i]).or_default() += 1;
        }
        if in_pred && in_gt {
            *overlap.entry((pred.instances[i], gt.instances[i])).or_default() += 1;
        }
    }

    let mut out = SegmentMatch::default();
    let mut matched_pred = BTreeSet::new();
    let mut matched_gt = BTreeSet::new();
    let mut pairs: Vec<_> = overlap.into_iter().collect();
    pairs.sort_unstable();
    for ((p, g), inter) in pairs {
        let union = pred_sizes[&p] + gt_sizes[&g] - inter;
        let iou = inter as f64 / union as f64;
        if iou > 0.5 {
            out.tp.push((p, g, iou));
            matched_pred.insert(p);
            matched_gt.insert(g);
        }
    }
    let min = cfg.min_points as u64;
    out.fp = pred_sizes
        .iter()
        .filter(|&(p, &n)| !matched_pred.contains(p) && n >= min)
        .map(|(&p, _)| p)
        .collect();
    out.fn_ = gt_sizes
        .iter()
        .filter(|&(g, &n)| !matched_gt.contains(g) && n >= min)
        .map(|(&g, _)| g)
        .collect();
    Ok(out)
}

/// Sufficient statistics for one class; summing accumulators over frames
/// and then reporting equals evaluating the frames jointly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAccumulator {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou_sum: f64,
    pub semantic_intersection: u64,
    pub semantic_union: u64,
}

impl ClassAccumulator {
    pub fn combine(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
        self.semantic_intersection += other.semantic_intersection;
        self.semantic_union += other.semantic_union;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: u32,
    pub thing: bool,
    pub pq: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq_dagger: f64,
    pub iou: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassReport {
    fn from_accumulator(class: u32, thing: bool, a: &ClassAccumulator) -> Self {
        let denom = a.tp as f64 + 0.5 * a.fp as f64 + 0.5 * a.fn_ as f64;
        let (pq, rq) = if denom > 0.0 {
            (a.iou_sum / denom, a.tp as f64 / denom)
        } else {
            (0.0, 0.0)
        };
        let sq = if a.tp > 0 { a.iou_sum / a.tp as f64 } else { 0.0 };
        let iou = if a.semantic_union > 0 {
            a.semantic_intersection as f64 / a.semantic_union as f64
        } else {
            0.0
        };
        Self {
            class,
            thing,
            pq,
            rq,
            sq,
            pq_dagger: if thing { pq } else { iou },
            iou,
            tp: a.tp,
            fp: a.fp,
            fn_: a.fn_,
        }
    }
}

/// Class-averaged metrics. A field is `None` when no class of its group
/// occurred in either labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticReport {
    pub pq: Option<f64>,
    pub pq_dagger: Option<f64>,
    pub rq: Option<f64>,
    pub sq: Option<f64>,
    pub pq_things: Option<f64>,
    pub rq_things: Option<f64>,
    pub sq_things: Option<f64>,
    pub pq_stuff: Option<f64>,
    pub rq_stuff: Option<f64>,
    pub sq_stuff: Option<f64>,
    pub miou: Option<f64>,
    /// Classes that occurred in either labeling.
    pub classes: Vec<ClassReport>,
}

fn mean<'a>(reports: impl Iterator<Item = &'a ClassReport>, f: impl Fn(&ClassReport) -> f64) -> Option<f64> {
    let (sum, n) = reports.fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl PanopticReport {
    fn from_classes(classes: Vec<ClassReport>) -> Self {
        let all = || classes.iter();
        let things = || classes.iter().filter(|c| c.thing);
        let stuff = || classes.iter().filter(|c| !c.thing);
        Self {
            pq: mean(all(), |c| c.pq),
            pq_dagger: mean(all(), |c| c.pq_dagger),
            rq: mean(all(), |c| c.rq),
            sq: mean(all(), |c| c.sq),
            pq_things: mean(things(), |c| c.pq),
            rq_things: mean(things(), |c| c.rq),
            sq_things: mean(things(), |c| c.sq),
            pq_stuff: mean(stuff(), |c| c.pq),
            rq_stuff: mean(stuff(), |c| c.rq),
            sq_stuff: mean(stuff(), |c| c.sq),
            miou: mean(all(), |c| c.iou),
            classes,
        }
    }

    /// Human-readable multi-line summary.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "PQ {}  PQ† {}  RQ {}  SQ {}  mIoU {}",
            fmt(self.pq),
            fmt(self.pq_dagger),
            fmt(self.rq),
            fmt(self.sq),
            fmt(self.miou)
        );
        let _ = writeln!(
            s,
            "things: PQ {}  RQ {}  SQ {}",
            fmt(self.pq_things),
            fmt(self.rq_things),
            fmt(self.sq_things)
        );
        let _ = writeln!(
            s,
            "stuff:  PQ {}  RQ {}  SQ {}",
            fmt(self.pq_stuff),
            fmt(self.rq_stuff),
            fmt(self.sq_stuff)
        );
        for c in &self.classes {
            let _ = writeln!(
                s,
                "class {:>3} {:5}  PQ {:5.1}  RQ {:5.1}  SQ {:5.1}  IoU {:5.1}  tp {} fp {} fn {}",
                c.class,
                if c.thing { "thing" } else { "stuff" },
                100.0 * c.pq,
                100.0 * c.rq,
                100.0 * c.sq,
                100.0 * c.iou,
                c.tp,
                c.fp,
                c.fn_
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Accumulates frames and reports class-averaged metrics.
#[derive(Debug, Clone)]
pub struct PanopticEvaluator {
    cfg: EvalConfig,
    acc: BTreeMap<u32, ClassAccumulator>,
}

impl PanopticEvaluator {
    pub fn new(cfg: EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let acc = cfg
            .classes()
            .into_iter()
            .map(|c| (c, ClassAccumulator::default()))
            .collect();
        Ok(Self { cfg, acc })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn accumulators(&self) -> &BTreeMap<u32, ClassAccumulator> {
        &self.acc
    }

    pub fn add_frame(&mut self, pred: &PanopticFrame, gt: &PanopticFrame) -> Result<()> {
        check_frames(pred, gt)?;
        let mut inter: HashMap<u32, u64> = HashMap::new();
        let mut union: HashMap<u32, u64> = HashMap::new();
        for (&ps, &gs) in pred.semantics.iter().zip(&gt.semantics) {
            if self.cfg.ignore.contains(&gs) {
                continue;
            }
            if ps == gs {
                *inter.entry(gs).or_default() += 1;
                *union.entry(gs).or_default() += 1;
            } else {
                *union.entry(gs).or_default() += 1;
                *union.entry(ps).or_default() += 1;
            }
        }

        let classes: Vec<u32> = self.acc.keys().copied().collect();
        for class in classes {
            let u = union.get(&class).copied().unwrap_or(0);
            if u == 0 {
                continue;
            }
            let m = match_segments(pred, gt, class, &self.cfg)?;
            let a = self.acc.get_mut(&class).expect("class registered");
            a.tp += m.tp.len() as u64;
            a.fp += m.fp.len() as u64;
            a.fn_ += m.fn_.len() as u64;
            a.iou_sum += m.tp.iter().map(|t| t.2).sum::<f64>();
            a.semantic_intersection += inter.get(&class).copied().unwrap_or(0);
            a.semantic_union += u;
        }
        Ok(())
    }

    /// Adds another evaluator's counts (same configuration assumed).
    pub fn combine(&mut self, other: &PanopticEvaluator) {
        for (class, a) in &other.acc {
            self.acc.entry(*class).or_default().combine(a);
        }
    }

    pub fn report(&self) -> PanopticReport {
        let classes = self
            .acc
            .iter()
            .filter(|(_, a)| a.semantic_union > 0)
            .map(|(&c, a)| ClassReport::from_accumulator(c, self.cfg.things.contains(&c), a))
            .collect();
        PanopticReport::from_classes(classes)
    }
}

/// Evaluates a single frame.
pub fn panoptic_quality(pred: &PanopticFrame, gt: &PanopticFrame, cfg: &EvalConfig) -> Result<PanopticReport> {
    let mut ev = PanopticEvaluator::new(cfg.clone())?;
    ev.add_frame(pred, gt)?;
    Ok(ev.report())
}
