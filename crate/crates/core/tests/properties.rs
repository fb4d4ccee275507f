mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use common::{same_partition, union_find_ccl};
use dmcluster::baseline::depth_cluster;
use dmcluster::connectivity::{neighborhood, AngleCondition, ConditionParams, Grid, PairPredicate};
use dmcluster::io_kitti::class_mask;
use dmcluster::local_cluster::{
    local_cluster, local_cluster_with, select_seeds, LabelImage, SeedList, Unreached, VoteMatrix, VotingMatrices,
    VoxelGridConfig,
};
use dmcluster::merge::{merge_mapping, vote_and_merge};
use dmcluster::pipeline::compact_ids;
use dmcluster::postprocess::bev_merge;
use dmcluster::range_image::Pixel;
use dmcluster::synth::{random_street, SensorModel, StreetParams};
use dmcluster::{
    panoptic_quality, synth_scene, EvalConfig, PanopticFrame, Pipeline, PipelineConfig, Point, PointCloud,
    ProjectionConfig, RangeImage,
};

fn condition(cols: usize, rows: usize) -> AngleCondition {
    AngleCondition::new(ConditionParams {
        theta_deg: 10.0,
        cols,
        horizontal_step: 0.05,
        vertical_steps: vec![0.07; rows.saturating_sub(1)],
    })
    .unwrap()
}

/// A small range grid, roughly a third empty, with a few depth levels so
/// both passing and failing pairs occur.
fn range_grid() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (1usize..8, 1usize..14).prop_flat_map(|(rows, cols)| {
        let cell = prop_oneof![
            1 => Just(-1.0f32),
            2 => prop::sample::select(vec![5.0f32, 5.2, 6.0, 9.0, 20.0]),
        ];
        (Just(rows), Just(cols), prop::collection::vec(cell, rows * cols))
    })
}

/// Range grid plus distinct seed pixels drawn from its occupied cells.
fn seeded_grid() -> impl Strategy<Value = (RangeImage, Vec<Pixel>, bool)> {
    (
        range_grid(),
        any::<bool>(),
        prop::collection::vec(any::<prop::sample::Index>(), 0..12),
    )
        .prop_map(|((rows, cols, ranges), wrap, picks)| {
            let img = RangeImage::from_ranges(rows, cols, &ranges).unwrap();
            let occupied: Vec<usize> = (0..rows * cols).filter(|&f| img.is_occupied_flat(f)).collect();
            let mut chosen = BTreeSet::new();
            let mut seeds = Vec::new();
            if !occupied.is_empty() {
                for p in picks {
                    let f = occupied[p.index(occupied.len())];
                    if chosen.insert(f) {
                        seeds.push(img.pixel(f));
                    }
                }
            }
            (img, seeds, wrap)
        })
}

/// Components of the graph whose edges are adjacent occupied pairs that pass
/// `cond`, as one label per pixel (0 for empty pixels).
fn passing_components<P: PairPredicate>(img: &RangeImage, cond: &P, wrap: bool) -> Vec<u32> {
    let n = img.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let grid = Grid::of(img, wrap);
    for f in 0..n {
        if !img.is_occupied_flat(f) {
            continue;
        }
        for g in grid.neighbors(f) {
            if img.is_occupied_flat(g) && cond.connected(img, img.pixel(f), img.pixel(g)) {
                let (a, b) = (find(&mut parent, f), find(&mut parent, g));
                parent[a] = b;
            }
        }
    }
    (0..n)
        .map(|f| {
            if img.is_occupied_flat(f) {
                find(&mut parent, f) as u32 + 1
            } else {
                0
            }
        })
        .collect()
}

fn random_votes() -> impl Strategy<Value = VotingMatrices> {
    (1usize..10).prop_flat_map(|m| {
        let entries = prop::collection::vec((0u32..5, 0u32..5), m * (m - 1) / 2);
        entries.prop_map(move |e| {
            let mut v = VotingMatrices::zeros(m);
            let mut k = 0;
            for i in 0..m {
                for j in i + 1..m {
                    let (p, q) = e[k];
                    k += 1;
                    v.plus.set(i, j, p);
                    v.plus.set(j, i, p);
                    v.minus.set(i, j, q);
                    v.minus.set(j, i, q);
                }
            }
            v
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn neighborhoods_are_adjacent_and_symmetric(rows in 1usize..6, cols in 1usize..8, wrap: bool, r in 0usize..6, c in 0usize..8) {
        let p = Pixel::new(r % rows, c % cols);
        let ns = neighborhood(p, rows, cols, wrap);
        prop_assert!(ns.len() <= 4);
        prop_assert_eq!(ns.iter().collect::<BTreeSet<_>>().len(), ns.len());
        for q in &ns {
            prop_assert!(*q != p);
            let dr = p.row.abs_diff(q.row);
            let dc = p.col.abs_diff(q.col);
            let horizontal = dr == 0 && (dc == 1 || (wrap && dc == cols - 1));
            let vertical = dc == 0 && dr == 1;
            prop_assert!(horizontal || vertical, "{:?} -> {:?}", p, q);
            prop_assert!(neighborhood(*q, rows, cols, wrap).contains(&p));
        }
    }

    #[test]
    fn divide_labels_only_reachable_occupied_pixels((img, seeds, wrap) in seeded_grid()) {
        let cond = condition(img.cols(), img.rows());
        let m = seeds.len();
        let local = local_cluster(&img, &SeedList::new(seeds.clone()), &cond, wrap).unwrap();
        prop_assert_eq!(local.votes.dim(), m);

        let components = passing_components(&img, &cond, wrap);
        let seeded: BTreeSet<u32> = seeds.iter().map(|&s| components[img.flat(s)]).collect();
        for (f, &l) in local.labels.as_slice().iter().enumerate() {
            prop_assert!(l as usize <= m);
            if !img.is_occupied_flat(f) {
                prop_assert_eq!(l, 0);
            } else {
                // labeled exactly when some seed shares the pixel's passing component
                prop_assert_eq!(l != 0, seeded.contains(&components[f]));
            }
            if l != 0 {
                prop_assert_eq!(components[f], components[img.flat(seeds[l as usize - 1])]);
            }
        }
        for (i, &s) in seeds.iter().enumerate() {
            prop_assert_eq!(local.labels.get(s), i as u32 + 1);
        }
    }

    #[test]
    fn votes_are_symmetric_with_empty_diagonal((img, seeds, wrap) in seeded_grid()) {
        let cond = condition(img.cols(), img.rows());
        let local = local_cluster(&img, &SeedList::new(seeds), &cond, wrap).unwrap();
        prop_assert!(local.votes.plus.is_symmetric());
        prop_assert!(local.votes.minus.is_symmetric());
        for i in 0..local.votes.dim() {
            prop_assert_eq!(local.votes.plus.get(i, i), 0);
            prop_assert_eq!(local.votes.minus.get(i, i), 0);
        }
    }

    #[test]
    fn new_labels_cover_every_occupied_pixel((img, seeds, wrap) in seeded_grid()) {
        let cond = condition(img.cols(), img.rows());
        let local = local_cluster_with(&img, &SeedList::new(seeds.clone()), &cond, wrap, Unreached::NewLabel).unwrap();
        let m = local.votes.dim();
        prop_assert_eq!(m, seeds.len() + local.stats.extra_labels);
        for (f, &l) in local.labels.as_slice().iter().enumerate() {
            prop_assert_eq!(l != 0, img.is_occupied_flat(f));
            prop_assert!(l as usize <= m);
        }
    }

    #[test]
    fn merged_instances_never_cross_passing_components((img, seeds, wrap) in seeded_grid()) {
        let cond = condition(img.cols(), img.rows());
        let local = local_cluster(&img, &SeedList::new(seeds), &cond, wrap).unwrap();
        let (merged, result) = vote_and_merge(&local.votes, &local.labels).unwrap();
        let baseline = depth_cluster(&img, &cond, wrap);
        let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
        for (&inst, &base) in merged.as_slice().iter().zip(baseline.as_slice()) {
            if inst != 0 {
                prop_assert_ne!(base, 0);
                prop_assert_eq!(*owner.entry(inst).or_insert(base), base);
            }
        }
        prop_assert!(result.n_instances <= local.votes.dim());
    }

    #[test]
    fn merge_is_a_coarsening(votes in random_votes()) {
        let m = votes.dim();
        let r = merge_mapping(&votes).unwrap();
        prop_assert!(r.n_instances >= 1 && r.n_instances <= m);
        let used: BTreeSet<u32> = r.merged_label_list.iter().copied().collect();
        prop_assert_eq!(used, (1..=r.n_instances as u32).collect::<BTreeSet<_>>());
        // instances open in order of their lowest local label
        let mut seen = 0;
        for &x in &r.merged_label_list {
            prop_assert!(x <= seen + 1);
            seen = seen.max(x);
        }
        // a label merges only into a cluster it has a strictly winning edge to
        for i in 0..m {
            let group = r.merged_label_list[i];
            let alone = r.merged_label_list.iter().filter(|&&g| g == group).count() == 1;
            let supported = (0..m).any(|j| j != i && r.merged_label_list[j] == group && votes.plus.get(i, j) > 0);
            prop_assert!(alone || supported);
        }
    }

    #[test]
    fn no_positive_votes_keeps_every_label(m in 1usize..30, minus in prop::collection::vec(0u32..4, 900)) {
        let mut v = VotingMatrices::zeros(m);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let x = minus[(i.min(j)) * 30 + i.max(j)];
                    v.minus.set(i, j, x);
                }
            }
        }
        prop_assert_eq!(merge_mapping(&v).unwrap().n_instances, m);
    }

    #[test]
    fn connected_support_without_negatives_merges_all(m in 1usize..30, extra in prop::collection::vec((0usize..30, 0usize..30), 0..40)) {
        let mut plus = VoteMatrix::zeros(m);
        for i in 1..m {
            plus.set(i - 1, i, 1);
            plus.set(i, i - 1, 1);
        }
        for (a, b) in extra {
            let (a, b) = (a % m, b % m);
            if a != b {
                plus.add_symmetric(a, b);
            }
        }
        let v = VotingMatrices { plus, minus: VoteMatrix::zeros(m) };
        prop_assert_eq!(merge_mapping(&v).unwrap().n_instances, 1);
    }

    #[test]
    fn binary_images_match_union_find(rows in 1usize..9, cols in 1usize..12, bits in prop::collection::vec(any::<bool>(), 96)) {
        let bits = &bits[..rows * cols];
        let ranges: Vec<f32> = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let img = RangeImage::from_ranges(rows, cols, &ranges).unwrap();
        let oracle = union_find_ccl(rows, cols, bits);
        // one seed at the first pixel of every component
        let mut first = BTreeMap::new();
        for (f, &l) in oracle.iter().enumerate() {
            if l != 0 {
                first.entry(l).or_insert(f);
            }
        }
        let seeds = first.values().map(|&f| img.pixel(f)).collect();
        let all = |_: &RangeImage, _: Pixel, _: Pixel| true;
        let local = local_cluster(&img, &SeedList::new(seeds), &all, false).unwrap();
        let (merged, _) = vote_and_merge(&local.votes, &local.labels).unwrap();
        prop_assert!(same_partition(merged.as_slice(), &oracle));
    }

    #[test]
    fn compact_ids_are_dense(ids in prop::collection::vec(prop_oneof![Just(0u32), 0u32..1000], 0..200)) {
        let mut out = ids.clone();
        let k = compact_ids(&mut out);
        prop_assert!(same_partition(&ids, &out));
        let used: BTreeSet<u32> = out.iter().copied().filter(|&x| x != 0).collect();
        prop_assert_eq!(used, (1..=k as u32).collect::<BTreeSet<_>>());
        let again = { let mut a = out.clone(); compact_ids(&mut a); a };
        prop_assert_eq!(again, out);
    }

    #[test]
    fn pq_stays_in_unit_interval(
        labels in prop::collection::vec((prop::sample::select(vec![0u32, 10, 11, 40, 50]), 0u32..4, prop::sample::select(vec![0u32, 10, 11, 40, 50]), 0u32..4), 1..150)
    ) {
        let (ps, pi, gs, gi) = labels.iter().fold((vec![], vec![], vec![], vec![]), |mut acc, &(a, b, c, d)| {
            acc.0.push(a); acc.1.push(b); acc.2.push(c); acc.3.push(d);
            acc
        });
        let cfg = EvalConfig::default();
        let pred = PanopticFrame::new(ps, pi).unwrap();
        let gt = PanopticFrame::new(gs, gi).unwrap();
        let report = panoptic_quality(&pred, &gt, &cfg).unwrap();
        for v in [report.pq, report.rq, report.sq, report.miou, report.pq_dagger].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
        let perfect = panoptic_quality(&gt, &gt, &cfg).unwrap();
        if let Some(pq) = perfect.pq {
            prop_assert!((pq - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bev_merge_is_idempotent(
        pts in prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0, prop::sample::select(vec![10u32, 30]), 0u32..6), 1..60)
    ) {
        let cloud = PointCloud::new(pts.iter().map(|&(x, y, _, _)| Point::new(x, y, 0.0, 0.0)).collect()).unwrap();
        let sem: Vec<u32> = pts.iter().map(|p| p.2).collect();
        let inst: Vec<u32> = pts.iter().map(|p| p.3).collect();
        let once = bev_merge(&inst, &sem, &cloud).unwrap();
        prop_assert_eq!(&bev_merge(&once, &sem, &cloud).unwrap(), &once);
        for (&a, &b) in inst.iter().zip(&once) {
            prop_assert_eq!(a == 0, b == 0);
        }
        // only merges: points sharing an instance and class before still do
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if inst[i] == inst[j] && sem[i] == sem[j] {
                    prop_assert_eq!(once[i], once[j]);
                }
            }
        }
    }

    #[test]
    fn halving_the_voxel_never_loses_seeds(
        pts in prop::collection::vec((-20.0f32..20.0, -20.0f32..20.0, -2.0f32..1.0), 1..300),
        edge in 0.2f64..4.0,
    ) {
        let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.0)).collect()).unwrap();
        let cfg = ProjectionConfig { rows: 16, cols: 256, ..Default::default() };
        let img = RangeImage::project(&cloud, &cfg).unwrap();
        let mask = vec![true; cloud.len()];
        let coarse = select_seeds(&cloud, &img, &mask, &VoxelGridConfig::new(edge).unwrap()).unwrap();
        let fine = select_seeds(&cloud, &img, &mask, &VoxelGridConfig::new(edge / 2.0).unwrap()).unwrap();
        prop_assert!(fine.len() >= coarse.len());
        prop_assert!(fine.len() <= img.occupied_count());
        let distinct: BTreeSet<Pixel> = fine.as_slice().iter().copied().collect();
        prop_assert_eq!(distinct.len(), fine.len());
    }
}

fn small_sensor() -> SensorModel {
    SensorModel {
        projection: ProjectionConfig {
            rows: 32,
            cols: 512,
            ..Default::default()
        },
        range_noise: 0.02,
        dropout: 0.02,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_scenes_are_deterministic(seed in any::<u64>()) {
        let spec = random_street(&StreetParams::default(), small_sensor(), seed);
        prop_assert_eq!(&spec, &random_street(&StreetParams::default(), small_sensor(), seed));
        let (a, ga) = synth_scene(&spec, seed).unwrap();
        let (b, gb) = synth_scene(&spec, seed).unwrap();
        prop_assert_eq!(a.points(), b.points());
        prop_assert_eq!(ga, gb);
    }

    #[test]
    fn pipeline_labels_only_thing_points(seed in any::<u64>(), wrap: bool, postprocess: bool) {
        let sensor = small_sensor();
        let spec = random_street(&StreetParams::default(), sensor.clone(), seed);
        let (cloud, gt) = synth_scene(&spec, seed).unwrap();
        let cfg = PipelineConfig { projection: sensor.projection, wrap, postprocess, ..Default::default() };
        let things = class_mask(&gt.semantics, &cfg.things);
        let pipeline = Pipeline::new(cfg).unwrap();
        for out in [
            pipeline.cluster_frame(&cloud, &gt.semantics).unwrap(),
            pipeline.cluster_frame_baseline(&cloud, &gt.semantics).unwrap(),
        ] {
            prop_assert_eq!(out.instances.len(), cloud.len());
            let used: BTreeSet<u32> = out.instances.iter().copied().filter(|&x| x != 0).collect();
            prop_assert_eq!(used, (1..=out.diagnostics.k as u32).collect::<BTreeSet<_>>());
            for (&inst, &thing) in out.instances.iter().zip(&things) {
                prop_assert!(thing || inst == 0);
            }
        }
    }
}

#[test]
fn label_image_shape_is_checked() {
    assert!(LabelImage::from_vec(2, 3, vec![0; 5]).is_err());
}
