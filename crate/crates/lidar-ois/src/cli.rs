//! Batch front-end: segment scan directories, run isolated stages,
//! evaluate predictions, and export colored point clouds.
//!
//! Scans (`.bin`) pair with labels (`.label`) by filename stem. All
//! subcommands are deterministic: identical invocations produce identical
//! output bytes regardless of the worker count.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::clustering::{ellipsoidal_cluster, euclidean_cluster, ClusterRun};
use crate::io;
use crate::metrics::{self, MatchTable};
use crate::pipeline::{run_pipeline, split_points, PipelineConfig};
use crate::refinement::{refine_known, KnownInstanceSet};
use crate::types::{ClassConfig, EllipsoidParams, InstanceLabeling};

#[derive(Debug, Parser)]
#[command(name = "lidar-ois", version, about = "Open-world LiDAR instance segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: background removal, unknown clustering, known refinement
    Segment(SegmentArgs),
    /// Class-agnostic clustering of whole scans
    Cluster(ClusterArgs),
    /// Diffuse-search refinement of known instances only
    Refine(SegmentArgs),
    /// Score predictions against ground-truth labels
    Eval(EvalArgs),
    /// Write one colored PLY per scan
    ExportPly(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// Directory of .bin scan files
    #[arg(long)]
    pub scans: PathBuf,
    /// Directory of .label prediction files paired by stem
    #[arg(long)]
    pub preds: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config file; CLI flags override file values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Fixed ellipsoid axis length, meters
    #[arg(long)]
    pub rho: Option<f64>,
    /// Horizontal angular aperture, degrees
    #[arg(long)]
    pub theta: Option<f64>,
    /// Vertical angular aperture, degrees
    #[arg(long)]
    pub phi: Option<f64>,
    /// Expand every accepted point instead of skipping cluster interiors
    #[arg(long)]
    pub no_early_termination: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Skip diffuse-search refinement of known instances
    #[arg(long)]
    pub no_refine: bool,
    /// Drop unknown clusters smaller than this
    #[arg(long)]
    pub min_unknown_points: Option<usize>,
    /// Diffuse searching radius, meters
    #[arg(long)]
    pub diffuse_r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Elc,
    Euclidean,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long, value_enum, default_value_t = Algo::Elc)]
    pub algo: Algo,
    /// Euclidean clustering radius, meters (defaults to rho/2)
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted .label files
    #[arg(long)]
    pub preds: PathBuf,
    /// Directory of ground-truth .label files
    #[arg(long)]
    pub gt: PathBuf,
    /// Output directory for the report
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// IoU thresholds, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.7, 0.5])]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Validated invocation paths and parallelism.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scans: PathBuf,
    pub preds: Option<PathBuf>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunManifest {
    pub fn from_shared(shared: &SharedArgs) -> Result<Self> {
        if !shared.scans.is_dir() {
            bail!("scan directory {} does not exist", shared.scans.display());
        }
        if let Some(preds) = &shared.preds {
            if !preds.is_dir() {
                bail!("prediction directory {} does not exist", preds.display());
            }
        }
        if shared.jobs < 1 {
            bail!("--jobs must be >= 1");
        }
        fs::create_dir_all(&shared.out)
            .with_context(|| format!("creating output dir {}", shared.out.display()))?;
        Ok(Self {
            scans: shared.scans.clone(),
            preds: shared.preds.clone(),
            out: shared.out.clone(),
            jobs: shared.jobs,
        })
    }
}

/// On-disk configuration; every field optional, unset fields keep defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rho: Option<f64>,
    pub theta_deg: Option<f64>,
    pub phi_deg: Option<f64>,
    pub d_min: Option<f64>,
    pub diffuse_r: Option<f64>,
    pub refine_known: Option<bool>,
    pub early_termination: Option<bool>,
    pub unknown_min_points: Option<usize>,
    pub background_ids: Option<Vec<u16>>,
    pub known_thing_ids: Option<Vec<u16>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Defaults <- config file <- CLI flags, validated before any file I/O.
pub fn resolve_config(
    config_path: Option<&Path>,
    tuning: Option<&TuningArgs>,
    segment: Option<&SegmentArgs>,
) -> Result<PipelineConfig> {
    let file = match config_path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let defaults = PipelineConfig::default();

    let mut rho = file.rho.unwrap_or(2.0);
    let mut theta = file.theta_deg.unwrap_or(2.0);
    let mut phi = file.phi_deg.unwrap_or(7.5);
    let d_min = file.d_min.unwrap_or(EllipsoidParams::DEFAULT_D_MIN);
    let mut early = file.early_termination.unwrap_or(true);
    if let Some(t) = tuning {
        rho = t.rho.unwrap_or(rho);
        theta = t.theta.unwrap_or(theta);
        phi = t.phi.unwrap_or(phi);
        if t.no_early_termination {
            early = false;
        }
    }
    let params = EllipsoidParams::with_d_min(rho, theta, phi, d_min)?;

    let kitti = ClassConfig::semantic_kitti();
    let background: BTreeSet<u16> = file
        .background_ids
        .map(|v| v.into_iter().collect())
        .unwrap_or_else(|| kitti.background_ids().clone());
    let known: BTreeSet<u16> = file
        .known_thing_ids
        .map(|v| v.into_iter().collect())
        .unwrap_or_else(|| kitti.known_thing_ids().clone());
    let classes = ClassConfig::new(background, known)?;

    let mut diffuse_r = file.diffuse_r.unwrap_or(defaults.diffuse_r);
    let mut refine = file.refine_known.unwrap_or(true);
    let mut min_points = file.unknown_min_points.unwrap_or(defaults.unknown_min_points);
    if let Some(s) = segment {
        diffuse_r = s.diffuse_r.unwrap_or(diffuse_r);
        if s.no_refine {
            refine = false;
        }
        min_points = s.min_unknown_points.unwrap_or(min_points);
    }
    if !(diffuse_r > 0.0) {
        bail!("diffuse_r must be > 0, got {diffuse_r}");
    }
    if min_points < 1 {
        bail!("unknown_min_points must be >= 1");
    }

    Ok(PipelineConfig {
        params,
        classes,
        diffuse_r,
        refine_known: refine,
        unknown_min_points: min_points,
        early_termination: early,
    })
}

/// Sorted (stem, path) pairs for every file in `dir` with `ext`.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn pred_path(manifest: &RunManifest, stem: &str) -> Result<PathBuf> {
    let dir = manifest
        .preds
        .as_ref()
        .context("this command requires --preds")?;
    let path = dir.join(format!("{stem}.label"));
    if !path.is_file() {
        bail!("no prediction file for scan {stem} (expected {})", path.display());
    }
    Ok(path)
}

fn run_parallel<F>(manifest: &RunManifest, stems: &[(String, PathBuf)], f: F) -> Result<usize>
where
    F: Fn(&str, &Path) -> Result<()> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.jobs)
        .build()
        .context("building worker pool")?;
    let failures: Vec<String> = pool.install(|| {
        stems
            .par_iter()
            .filter_map(|(stem, path)| {
                f(stem, path)
                    .err()
                    .map(|e| format!("{stem}: {e:#}"))
            })
            .collect()
    });
    if !failures.is_empty() {
        for msg in &failures {
            eprintln!("error: {msg}");
        }
        bail!("{} of {} scans failed", failures.len(), stems.len());
    }
    Ok(stems.len())
}

fn write_instances(
    manifest: &RunManifest,
    stem: &str,
    semantic: &[u16],
    labeling: &InstanceLabeling,
) -> Result<()> {
    let records = io::pack_records(semantic, &labeling.ids)?;
    io::write_labels(&records, &manifest.out.join(format!("{stem}.label")))?;
    Ok(())
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    let cfg = resolve_config(
        args.shared.config.as_deref(),
        Some(&args.tuning),
        Some(args),
    )?;
    let manifest = RunManifest::from_shared(&args.shared)?;
    let stems = files_with_ext(&manifest.scans, "bin")?;
    if stems.is_empty() {
        eprintln!("warning: no .bin scans found in {}", manifest.scans.display());
    }
    let start = Instant::now();
    let n = run_parallel(&manifest, &stems, |stem, scan_path| {
        let cloud = io::read_scan(scan_path)?;
        let labels = io::read_labels(&pred_path(&manifest, stem)?, cloud.len())?;
        let scan = io::ScanBundle::new(cloud, &labels)?;
        let result = run_pipeline(&scan, &cfg)?;
        write_instances(&manifest, stem, &result.semantic, &result.labeling)
    })?;
    println!("segmented {n} scan(s) in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let cfg = resolve_config(args.shared.config.as_deref(), Some(&args.tuning), None)?;
    let radius = args.radius.unwrap_or(cfg.params.rho() / 2.0);
    if args.algo == Algo::Euclidean && !(radius > 0.0) {
        bail!("--radius must be > 0, got {radius}");
    }
    let manifest = RunManifest::from_shared(&args.shared)?;
    let stems = files_with_ext(&manifest.scans, "bin")?;
    if stems.is_empty() {
        eprintln!("warning: no .bin scans found in {}", manifest.scans.display());
    }
    let start = Instant::now();
    let n = run_parallel(&manifest, &stems, |stem, scan_path| {
        let cloud = io::read_scan(scan_path)?;
        // with predictions supplied, drop background points first
        let (semantic, keep): (Vec<u16>, Vec<usize>) = if manifest.preds.is_some() {
            let labels = io::read_labels(&pred_path(&manifest, stem)?, cloud.len())?;
            let semantic: Vec<u16> = labels.iter().map(|l| l.semantic()).collect();
            let keep = (0..cloud.len())
                .filter(|&i| !cfg.classes.is_background(semantic[i]))
                .collect();
            (semantic, keep)
        } else {
            (vec![0; cloud.len()], (0..cloud.len()).collect())
        };

        let mut ids = vec![0u32; cloud.len()];
        if !keep.is_empty() {
            let sub = cloud.subset(&keep);
            let run: ClusterRun = match args.algo {
                Algo::Elc => ellipsoidal_cluster(&sub, &cfg.params, cfg.early_termination)?,
                Algo::Euclidean => euclidean_cluster(&sub, radius)?,
            };
            for (&pi, &id) in keep.iter().zip(&run.labeling.ids) {
                ids[pi] = id;
            }
        }
        write_instances(&manifest, stem, &semantic, &InstanceLabeling::new(ids))
    })?;
    println!("clustered {n} scan(s) in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_refine(args: &SegmentArgs) -> Result<()> {
    let cfg = resolve_config(
        args.shared.config.as_deref(),
        Some(&args.tuning),
        Some(args),
    )?;
    let manifest = RunManifest::from_shared(&args.shared)?;
    let stems = files_with_ext(&manifest.scans, "bin")?;
    let start = Instant::now();
    let n = run_parallel(&manifest, &stems, |stem, scan_path| {
        let cloud = io::read_scan(scan_path)?;
        let labels = io::read_labels(&pred_path(&manifest, stem)?, cloud.len())?;
        let scan = io::ScanBundle::new(cloud, &labels)?;
        let split = split_points(&scan, &cfg.classes);
        let mut ids = vec![0u32; scan.len()];
        if !split.known.is_empty() {
            let indices: Vec<usize> = split.known.iter().map(|&(i, _)| i).collect();
            let original: Vec<u32> = split.known.iter().map(|&(_, id)| id).collect();
            let set =
                KnownInstanceSet::new(scan.cloud.subset(&indices), original, cfg.diffuse_r)?;
            let refined = refine_known(&set, &cfg.params, cfg.early_termination)?;
            for (&pi, &id) in indices.iter().zip(&refined.ids) {
                ids[pi] = id;
            }
        }
        write_instances(&manifest, stem, &scan.semantic, &InstanceLabeling::new(ids))
    })?;
    println!("refined {n} scan(s) in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    for tau in &args.thresholds {
        if !(*tau > 0.0 && *tau <= 1.0) {
            bail!("thresholds must be in (0, 1], got {tau}");
        }
    }
    let cfg = resolve_config(args.config.as_deref(), None, None)?;
    if !args.gt.is_dir() {
        bail!("ground-truth directory {} does not exist", args.gt.display());
    }
    if !args.preds.is_dir() {
        bail!("prediction directory {} does not exist", args.preds.display());
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output dir {}", args.out.display()))?;

    let gt_files = files_with_ext(&args.gt, "label")?;
    let pred_files = files_with_ext(&args.preds, "label")?;
    let pred_stems: BTreeSet<&String> = pred_files.iter().map(|(s, _)| s).collect();
    let gt_stems: BTreeSet<&String> = gt_files.iter().map(|(s, _)| s).collect();
    let unpaired: Vec<&str> = gt_stems
        .symmetric_difference(&pred_stems)
        .map(|s| s.as_str())
        .collect();
    if !unpaired.is_empty() {
        bail!("unpaired label files: {}", unpaired.join(", "));
    }

    let mut table = MatchTable::new();
    for (stem, gt_path) in &gt_files {
        let n = fs::metadata(gt_path)
            .with_context(|| format!("reading {}", gt_path.display()))?
            .len() as usize
            / 4;
        let gt = io::read_labels(gt_path, n)?;
        let pred = io::read_labels(&args.preds.join(format!("{stem}.label")), n)?;
        let gt_sem: Vec<u16> = gt.iter().map(|l| l.semantic()).collect();
        let gt_inst: Vec<u32> = gt.iter().map(|l| l.instance() as u32).collect();
        let pred_inst: Vec<u32> = pred.iter().map(|l| l.instance() as u32).collect();
        table.add_scan(&gt_sem, &gt_inst, &pred_inst, &cfg.classes)?;
    }

    let report = metrics::report(&table, &args.thresholds);
    let text = report.render_text();
    print!("{text}");
    fs::write(args.out.join("report.txt"), &text).context("writing report.txt")?;
    fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).context("serializing report")?,
    )
    .context("writing report.json")?;
    Ok(())
}

pub fn cmd_export_ply(args: &ExportArgs) -> Result<()> {
    let manifest = RunManifest::from_shared(&args.shared)?;
    let stems = files_with_ext(&manifest.scans, "bin")?;
    let start = Instant::now();
    let n = run_parallel(&manifest, &stems, |stem, scan_path| {
        let cloud = io::read_scan(scan_path)?;
        let labels = io::read_labels(&pred_path(&manifest, stem)?, cloud.len())?;
        let ids: Vec<u32> = labels.iter().map(|l| l.instance() as u32).collect();
        io::export_ply(
            &cloud,
            &InstanceLabeling::new(ids),
            &manifest.out.join(format!("{stem}.ply")),
        )?;
        Ok(())
    })?;
    println!("exported {n} PLY file(s) in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Segment(args) => cmd_segment(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportPly(args) => cmd_export_ply(args),
    }
}
