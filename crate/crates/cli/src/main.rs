//! `dmcluster`: cluster SemanticKITTI-style scans into instances, evaluate
//! the result, sweep the voxel size, or write a synthetic corpus.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dmcluster::io_kitti::{
    list_frames, read_labels, read_scan, write_labels, write_scan, LABEL_EXTENSION, SCAN_EXTENSION,
};
use dmcluster::local_cluster::Unreached;
use dmcluster::metrics::PanopticEvaluator;
use dmcluster::synth::{random_street, SensorModel, StreetParams};
use dmcluster::{
    synth_scene, Connectivity, EvalConfig, FrameOutput, PanopticFrame, Pipeline, PipelineConfig, ProjectionConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "dmcluster",
    version,
    about = "Divide-and-merge instance clustering for LiDAR scans"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster every scan in a directory and write label files.
    Cluster(ClusterArgs),
    /// Score predicted label files against ground truth.
    Eval(EvalArgs),
    /// Cluster with several voxel sizes and report cost and quality.
    Sweep(SweepArgs),
    /// Write a corpus of synthetic street scans with ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Voxel edge for seeding, meters.
    #[arg(long, default_value_t = 0.5)]
    voxel_size: f64,
    /// Angle threshold, degrees.
    #[arg(long, default_value_t = 10.0)]
    theta: f64,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 2048)]
    cols: usize,
    /// Skip the bird's-eye-view merge of overlapping instances.
    #[arg(long)]
    no_postprocess: bool,
    /// Do not treat the first and last columns as adjacent.
    #[arg(long)]
    no_wrap: bool,
    /// Single-pass range-image labeling instead of divide-and-merge.
    #[arg(long)]
    baseline: bool,
    /// Link neighbors closer than this many meters instead of using the angle test.
    #[arg(long, value_name = "METERS")]
    euclidean: Option<f64>,
    /// Give thing pixels that no seed reaches labels of their own.
    #[arg(long)]
    label_unreached: bool,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            voxel_size: self.voxel_size,
            theta_deg: self.theta,
            projection: ProjectionConfig {
                rows: self.rows,
                cols: self.cols,
                ..Default::default()
            },
            postprocess: !self.no_postprocess,
            wrap: !self.no_wrap,
            connectivity: match self.euclidean {
                Some(max_distance) => Connectivity::Euclidean { max_distance },
                None => Connectivity::Angle,
            },
            unreached: if self.label_unreached {
                Unreached::NewLabel
            } else {
                Unreached::Leave
            },
            ..Default::default()
        }
    }

    fn run(&self, pipeline: &Pipeline, scan: &Path, semantics: &Path) -> Result<(Vec<u32>, FrameOutput)> {
        let cloud = read_scan(scan)?;
        let frame = read_labels(semantics, Some(cloud.len()))?;
        let out = if self.baseline {
            pipeline.cluster_frame_baseline(&cloud, &frame.semantics)?
        } else {
            pipeline.cluster_frame(&cloud, &frame.semantics)?
        };
        Ok((frame.semantics, out))
    }
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Directory of `.bin` scans.
    #[arg(long)]
    scans: PathBuf,
    /// Directory of `.label` files whose semantic part drives the thing mask.
    #[arg(long)]
    semantics: PathBuf,
    /// Output directory for `.label` files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Also write the report as JSON to this file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Unmatched segments smaller than this are not counted.
    #[arg(long, default_value_t = 0)]
    min_points: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    scans: PathBuf,
    /// Ground-truth labels; their semantic part is also the clustering input.
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated voxel sizes, meters.
    #[arg(long, value_delimiter = ',', required = true)]
    voxel_sizes: Vec<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory; scans go to `velodyne/`, labels to `labels/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Range noise standard deviation, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Probability that a ray returns nothing.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 2048)]
    cols: usize,
}

/// Pairs each scan with the same-stem label file in `labels`.
fn paired_frames(scans: &Path, labels: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let scan_list = list_frames(scans, SCAN_EXTENSION).with_context(|| format!("listing {}", scans.display()))?;
    let label_list: BTreeMap<String, PathBuf> = list_frames(labels, LABEL_EXTENSION)
        .with_context(|| format!("listing {}", labels.display()))?
        .into_iter()
        .collect();
    ensure!(
        scan_list.len() == label_list.len(),
        "{} scans but {} label files",
        scan_list.len(),
        label_list.len()
    );
    scan_list
        .into_iter()
        .map(|(stem, scan)| {
            let label = label_list
                .get(&stem)
                .with_context(|| format!("no label file for scan {stem}"))?;
            Ok((stem, scan, label.clone()))
        })
        .collect()
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cluster(args: &ClusterArgs) -> Result<()> {
    let pipeline = Pipeline::new(args.pipeline.config())?;
    let frames = paired_frames(&args.scans, &args.semantics)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let results: Vec<(String, Result<Duration>)> = frames
        .par_iter()
        .map(|(stem, scan, sem)| {
            let result = (|| {
                let (semantics, out) = args.pipeline.run(&pipeline, scan, sem)?;
                let path = args.out.join(format!("{stem}.{LABEL_EXTENSION}"));
                write_labels(&semantics, &out.instances, &path)?;
                Ok(out.diagnostics.timings.total)
            })();
            (stem.clone(), result)
        })
        .collect();

    let mut times = Vec::new();
    let mut failed = 0;
    for (stem, r) in results {
        match r {
            Ok(t) => times.push(millis(t)),
            Err(e) => {
                failed += 1;
                eprintln!("frame {stem}: {e:#}");
            }
        }
    }
    times.sort_by(f64::total_cmp);
    if times.is_empty() {
        println!("clustered 0 frames");
    } else {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        println!(
            "clustered {} frames: mean {mean:.1} ms, median {:.1} ms, max {:.1} ms",
            times.len(),
            times[times.len() / 2],
            times[times.len() - 1]
        );
    }
    if failed > 0 {
        bail!("{failed} of {} frames failed", frames.len());
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let gt = list_frames(&args.gt, LABEL_EXTENSION).with_context(|| format!("listing {}", args.gt.display()))?;
    let pred: BTreeMap<String, PathBuf> = list_frames(&args.pred, LABEL_EXTENSION)
        .with_context(|| format!("listing {}", args.pred.display()))?
        .into_iter()
        .collect();
    ensure!(
        gt.len() == pred.len(),
        "{} ground-truth frames but {} predictions",
        gt.len(),
        pred.len()
    );
    let cfg = EvalConfig {
        min_points: args.min_points,
        ..Default::default()
    };
    let evaluators: Vec<PanopticEvaluator> = gt
        .par_iter()
        .map(|(stem, gt_path)| {
            let pred_path = pred
                .get(stem)
                .with_context(|| format!("no prediction for frame {stem}"))?;
            let g = read_labels(gt_path, None)?;
            let p = read_labels(pred_path, Some(g.len())).with_context(|| format!("frame {stem}"))?;
            let mut ev = PanopticEvaluator::new(cfg.clone())?;
            ev.add_frame(&p, &g)?;
            Ok(ev)
        })
        .collect::<Result<_>>()?;
    let mut total = PanopticEvaluator::new(cfg)?;
    for ev in &evaluators {
        total.combine(ev);
    }
    let report = total.report();
    println!("{} frames", gt.len());
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        fs::write(path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let frames = paired_frames(&args.scans, &args.gt)?;
    ensure!(!frames.is_empty(), "no frames in {}", args.scans.display());
    println!("voxel_size,mean_m,mean_ms,pq");
    for &l in &args.voxel_sizes {
        let pipeline = Pipeline::new(PipelineConfig {
            voxel_size: l,
            ..args.pipeline.config()
        })?;
        let per_frame: Vec<(usize, f64, PanopticEvaluator)> = frames
            .par_iter()
            .map(|(stem, scan, gt_path)| {
                let (semantics, out) = args
                    .pipeline
                    .run(&pipeline, scan, gt_path)
                    .with_context(|| format!("frame {stem}"))?;
                let gt = read_labels(gt_path, None)?;
                let mut ev = PanopticEvaluator::new(EvalConfig::default())?;
                ev.add_frame(&PanopticFrame::new(semantics, out.instances)?, &gt)?;
                Ok((out.diagnostics.m, millis(out.diagnostics.timings.total), ev))
            })
            .collect::<Result<_>>()?;
        let n = per_frame.len() as f64;
        let mut total = PanopticEvaluator::new(EvalConfig::default())?;
        for (_, _, ev) in &per_frame {
            total.combine(ev);
        }
        let mean_m = per_frame.iter().map(|f| f.0 as f64).sum::<f64>() / n;
        let mean_ms = per_frame.iter().map(|f| f.1).sum::<f64>() / n;
        let pq = total
            .report()
            .pq
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!("{l},{mean_m:.1},{mean_ms:.2},{pq}");
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let sensor = SensorModel {
        projection: ProjectionConfig {
            rows: args.rows,
            cols: args.cols,
            ..Default::default()
        },
        range_noise: args.noise,
        dropout: args.dropout,
        ..Default::default()
    };
    let scans = args.out.join("velodyne");
    let labels = args.out.join("labels");
    fs::create_dir_all(&scans)?;
    fs::create_dir_all(&labels)?;
    (0..args.frames).into_par_iter().try_for_each(|i| -> Result<()> {
        let seed = args.seed.wrapping_add(i);
        let spec = random_street(&StreetParams::default(), sensor.clone(), seed);
        let (cloud, gt) = synth_scene(&spec, seed)?;
        write_scan(&cloud, scans.join(format!("{i:06}.{SCAN_EXTENSION}")))?;
        write_labels(
            &gt.semantics,
            &gt.instances,
            labels.join(format!("{i:06}.{LABEL_EXTENSION}")),
        )?;
        Ok(())
    })?;
    println!("wrote {} frames to {}", args.frames, args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting worker threads")?;
    match &cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
