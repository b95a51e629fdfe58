//! Command-line interface: `simulate`, `track`, `evaluate` and `sweep`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::association::{total_cost, ClassId, CostWeights};
use crate::fusion::{AssociationMode, PillarDims};
use crate::geometry::CameraModel;
use crate::io::{
    class_name, default_tracker_path, load_scenario, load_tracker_file, parse_class, read_jsonl,
    replay_to_inputs, scene_records, to_jsonl, write_atomic, write_jsonl, DisplacementFallback,
    GroundTruthRecord, ReplayRecord, ResultRecord, TrackerFile,
};
use crate::metrics::{amota, MetricsReport, PredictionFrame, ProtocolParams, Sequence};
use crate::oracle::{min_cost_matchings, CostMatrix};
use crate::simulator::{crossing_scenario, generate, ScenarioConfig};
use crate::tracker::{run_sequence, FrameInput, Tracker, TrackerConfig};

pub const REPLAY_FILE: &str = "replay.jsonl";
pub const GROUND_TRUTH_FILE: &str = "gt.jsonl";
pub const SCENARIO_FILE: &str = "scenario.toml";

#[derive(Debug, Parser)]
#[command(
    name = "radarmot",
    version,
    about = "Radar-camera fusion multi-object tracking"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: replay.jsonl, gt.jsonl and scenario.toml.
    Simulate(SimulateArgs),
    /// Run the tracker over a replay file.
    Track(TrackArgs),
    /// Score tracking results against ground truth.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of association weights.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(
        long,
        conflicts_with = "crossing",
        required_unless_present = "crossing"
    )]
    pub config: Option<PathBuf>,
    /// Use the built-in two-object crossing scenario.
    #[arg(long)]
    pub crossing: bool,
    #[arg(long, default_value_t = 10.0, requires = "crossing")]
    pub depth_gap: f64,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

/// Tracker settings shared by `track` and `sweep`.
#[derive(Debug, Args, Clone)]
pub struct TrackerArgs {
    /// Tracker TOML file; defaults to $RADAR_MOT_CONFIG_DIR/tracker.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario TOML whose camera the replay was recorded with.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub max_age: Option<u64>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    /// Disable radar fusion.
    #[arg(long)]
    pub no_fusion: bool,
    /// Fractional half-width of the frustum depth window.
    #[arg(long)]
    pub depth_tolerance: Option<f64>,
    /// Pillar size as `width_y,height_z,depth_x` in meters.
    #[arg(long, value_parser = parse_pillar)]
    pub pillar: Option<PillarDims>,
    #[arg(long, value_enum)]
    pub fusion_mode: Option<FusionModeArg>,
    /// Fill in missing displacements in the replay.
    #[arg(long, value_enum, default_value = "zero")]
    pub displacement_fallback: FallbackArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FusionModeArg {
    Shared,
    Exclusive,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FallbackArg {
    Zero,
    ConstantVelocity,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub replay: PathBuf,
    #[command(flatten)]
    pub tracker: TrackerArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Gate radius in pixels; alpha defaults to 1/radius² unless given.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Results JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ProtocolArgs {
    /// Number of recall thresholds n.
    #[arg(long, default_value_t = 40)]
    pub thresholds: usize,
    /// Ground-plane matching distance, meters.
    #[arg(long, default_value_t = 2.0)]
    pub dist: f64,
    /// Comma-separated class names or ids to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Replay files; paired in order with --gt.
    #[arg(long, required = true)]
    pub replay: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Comma-separated grids; alpha defaults to 1/radius² per radius.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub radius: Vec<f64>,
    /// Print rows as JSON lines.
    #[arg(long)]
    pub json: bool,
}

fn parse_pillar(s: &str) -> Result<PillarDims, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [width_y, height_z, depth_x] = v[..] else {
        return Err(format!("expected width_y,height_z,depth_x, got {s:?}"));
    };
    let dims = PillarDims {
        width_y,
        height_z,
        depth_x,
    };
    dims.validate().map_err(|e| e.to_string())?;
    Ok(dims)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Track(a) => track(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Sweep(a) => sweep(&a),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg: ScenarioConfig = match &a.config {
        Some(p) => load_scenario(p)?,
        None => {
            ensure!(
                a.depth_gap.is_finite() && a.depth_gap >= 0.0,
                "--depth-gap must be non-negative"
            );
            crossing_scenario(a.depth_gap, 0)
        }
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let scene = generate(&cfg)?;
    let (replay, gt) = scene_records(&scene);
    let scenario_text = toml::to_string(&cfg).context("serializing the scenario")?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_jsonl(&a.out.join(REPLAY_FILE), &replay)?;
    write_jsonl(&a.out.join(GROUND_TRUTH_FILE), &gt)?;
    write_atomic(&a.out.join(SCENARIO_FILE), scenario_text.as_bytes())?;
    eprintln!("wrote {} frames to {}", replay.len(), a.out.display());
    Ok(())
}

/// Tracker configuration and camera after applying files and flags.
fn resolve_tracker(
    args: &TrackerArgs,
) -> Result<(TrackerConfig, CameraModel, DisplacementFallback)> {
    let file = match args.config.clone().or_else(default_tracker_path) {
        Some(p) => load_tracker_file(&p)?,
        None => TrackerFile::default(),
    };
    let mut cfg = file.tracker;
    let camera = match &args.scenario {
        Some(p) => load_scenario(p)?.camera,
        None => file.camera.unwrap_or_default(),
    };
    if let Some(v) = args.max_age {
        cfg.max_age = v;
    }
    if let Some(v) = args.min_confidence {
        cfg.min_confidence = v;
    }
    if args.no_fusion {
        cfg.fusion.enabled = false;
    }
    if let Some(v) = args.depth_tolerance {
        cfg.fusion.depth_tolerance = v;
    }
    if let Some(v) = args.pillar {
        cfg.fusion.pillar = v;
    }
    if let Some(m) = args.fusion_mode {
        cfg.fusion.mode = match m {
            FusionModeArg::Shared => AssociationMode::Shared,
            FusionModeArg::Exclusive => AssociationMode::Exclusive,
        };
    }
    let fallback = match args.displacement_fallback {
        FallbackArg::Zero => DisplacementFallback::Zero,
        FallbackArg::ConstantVelocity => DisplacementFallback::ConstantVelocity,
    };
    Ok((cfg, camera, fallback))
}

/// Weights with flag overrides; a new radius resets alpha to 1/radius²
/// unless alpha is also given.
pub fn override_weights(
    base: CostWeights,
    alpha: Option<f64>,
    beta: Option<f64>,
    delta: Option<f64>,
    radius: Option<f64>,
) -> Result<CostWeights> {
    let mut w = base;
    if let Some(r) = radius {
        w.radius = r;
        w.alpha = 1.0 / (r * r);
    }
    if let Some(a) = alpha {
        w.alpha = a;
    }
    if let Some(b) = beta {
        w.beta = b;
    }
    if let Some(d) = delta {
        w.delta = d;
    }
    w.validate()?;
    Ok(w)
}

fn load_inputs(
    replay: &Path,
    camera: &CameraModel,
    fallback: DisplacementFallback,
) -> Result<Vec<FrameInput>> {
    let records: Vec<ReplayRecord> = read_jsonl(replay)?;
    Ok(replay_to_inputs(&records, camera, fallback))
}

fn track(a: &TrackArgs) -> Result<()> {
    let (mut cfg, camera, fallback) = resolve_tracker(&a.tracker)?;
    cfg.weights = override_weights(cfg.weights, a.alpha, a.beta, a.delta, a.radius)?;
    cfg.validate()?;
    let inputs = load_inputs(&a.replay, &camera, fallback)?;
    let out = run_sequence(&inputs, camera, &cfg)?;
    let records: Vec<ResultRecord> = out.results.iter().map(ResultRecord::from_result).collect();
    write_jsonl(&a.out, &records)?;
    let l = out.latency;
    eprintln!(
        "latency over {} frames: median {:.3} ms, p99 {:.3} ms, max {:.3} ms",
        l.frames, l.median_ms, l.p99_ms, l.max_ms
    );
    Ok(())
}

fn protocol(p: &ProtocolArgs) -> Result<ProtocolParams> {
    let classes = if p.classes.is_empty() {
        None
    } else {
        Some(
            p.classes
                .iter()
                .map(|c| parse_class(c))
                .collect::<Result<Vec<ClassId>, _>>()?,
        )
    };
    ensure!(p.thresholds >= 2, "--thresholds must be at least 2");
    ensure!(
        p.dist.is_finite() && p.dist > 0.0,
        "--dist must be positive"
    );
    Ok(ProtocolParams {
        num_thresholds: p.thresholds,
        dist_threshold: p.dist,
        classes,
    })
}

fn sequence(results: Vec<PredictionFrame>, gt: &[GroundTruthRecord]) -> Result<Sequence> {
    Ok(Sequence::new(
        results,
        gt.iter().map(GroundTruthRecord::to_frame).collect(),
    )?)
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let params = protocol(&a.protocol)?;
    let results: Vec<ResultRecord> = read_jsonl(&a.results)?;
    let gt: Vec<GroundTruthRecord> = read_jsonl(&a.gt)?;
    let seq = sequence(
        results.iter().map(ResultRecord::to_predictions).collect(),
        &gt,
    )
    .with_context(|| format!("aligning {} with {}", a.results.display(), a.gt.display()))?;
    let report = amota(&[seq], &params)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", format_report(&report));
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Fixed-width table: an overall row and one row per class.
pub fn format_report(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "recall thresholds: {}, distance gate: {} m, annotations: {}",
        r.num_thresholds, r.dist_threshold, r.num_gt
    );
    let _ = writeln!(
        s,
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>6}",
        "class", "AMOTA", "AMOTP", "MOTAR", "MOTA", "MOTP", "Recall", "IDS", "FP", "FN", "GT"
    );
    let a = &r.aggregate;
    let _ = writeln!(
        s,
        "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8.4} {:>6} {:>6} {:>6} {:>6}",
        "overall",
        a.amota,
        a.amotp,
        a.motar,
        a.mota,
        opt(a.motp),
        a.recall,
        a.id_switches,
        a.false_positives,
        a.false_negatives,
        r.num_gt
    );
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8.4} {:>6} {:>6} {:>6} {:>6}",
            class_name(c.class),
            c.amota,
            c.amotp,
            c.motar,
            c.mota,
            opt(c.motp),
            c.recall,
            c.id_switches,
            c.false_positives,
            c.false_negatives,
            c.num_gt
        );
    }
    s
}

/// One sweep grid point and its scores.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub radius: f64,
    pub amota: f64,
    pub motar: f64,
    pub mota: f64,
    pub id_switches: usize,
    /// Summed greedy minus optimal association cost at equal cardinality.
    pub cost_gap: f64,
    /// Frames where greedy was strictly worse than optimal.
    pub suboptimal_frames: usize,
    pub frames: usize,
}

/// Tracks every sequence with `cfg`, recording the greedy-vs-optimal cost
/// gap of each association step.
pub fn sweep_point(
    data: &[(Vec<FrameInput>, Vec<GroundTruthRecord>)],
    camera: &CameraModel,
    cfg: &TrackerConfig,
    params: &ProtocolParams,
) -> Result<SweepRow> {
    let mut seqs = Vec::with_capacity(data.len());
    let (mut gap, mut worse, mut frames) = (0.0, 0, 0);
    for (inputs, gt) in data {
        let mut trk = Tracker::new(*camera);
        let mut preds = Vec::with_capacity(inputs.len());
        for input in inputs {
            let (res, trace) = trk.step_traced(input, cfg)?;
            let m =
                CostMatrix::from_association(&trace.detections, &trace.candidates, &cfg.weights);
            let k = trace.association.matches.len();
            let greedy = total_cost(
                &trace.association,
                &trace.detections,
                &trace.candidates,
                &cfg.weights,
            );
            let optimal = min_cost_matchings(&m)
                .into_iter()
                .nth(k)
                .context("greedy matching size exceeds the maximum matching")?
                .cost;
            let g = greedy - optimal;
            gap += g;
            worse += usize::from(g > 1e-9 * greedy.abs().max(1.0));
            frames += 1;
            preds.push(PredictionFrame::from(&res));
        }
        seqs.push(sequence(preds, gt)?);
    }
    let report = amota(&seqs, params)?;
    let w = cfg.weights;
    Ok(SweepRow {
        alpha: w.alpha,
        beta: w.beta,
        delta: w.delta,
        radius: w.radius,
        amota: report.aggregate.amota,
        motar: report.aggregate.motar,
        mota: report.aggregate.mota,
        id_switches: report.aggregate.id_switches,
        cost_gap: gap,
        suboptimal_frames: worse,
        frames,
    })
}

/// Resolved, deduplicated weight grid in a fixed order.
pub fn weight_grid(
    base: CostWeights,
    alpha: &[f64],
    beta: &[f64],
    delta: &[f64],
    radius: &[f64],
) -> Result<Vec<CostWeights>> {
    let opts = |v: &[f64]| -> Vec<Option<f64>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    };
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in opts(radius) {
        for a in opts(alpha) {
            for b in opts(beta) {
                for d in opts(delta) {
                    let w = override_weights(base, a, b, d, r).with_context(|| {
                        format!("grid point alpha={a:?} beta={b:?} delta={d:?} radius={r:?}")
                    })?;
                    if seen.insert([
                        w.alpha.to_bits(),
                        w.beta.to_bits(),
                        w.delta.to_bits(),
                        w.radius.to_bits(),
                    ]) {
                        out.push(w);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    ensure!(
        a.replay.len() == a.gt.len(),
        "{} replay files but {} ground-truth files",
        a.replay.len(),
        a.gt.len()
    );
    let params = protocol(&a.protocol)?;
    let (cfg, camera, fallback) = resolve_tracker(&a.tracker)?;
    let grid = weight_grid(cfg.weights, &a.alpha, &a.beta, &a.delta, &a.radius)?;
    if grid.is_empty() {
        bail!("empty weight grid");
    }
    let data = a
        .replay
        .iter()
        .zip(&a.gt)
        .map(|(r, g)| {
            Ok((
                load_inputs(r, &camera, fallback)?,
                read_jsonl::<GroundTruthRecord>(g)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = grid
        .par_iter()
        .map(|w| {
            let mut c = cfg;
            c.weights = *w;
            c.validate()?;
            sweep_point(&data, &camera, &c, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    // stable: grid order breaks AMOTA ties
    rows.sort_by(|x, y| y.amota.total_cmp(&x.amota));

    if a.json {
        print!("{}", to_jsonl(&rows));
    } else {
        print!("{}", format_sweep(&rows));
    }
    Ok(())
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6} {:>12} {:>12}",
        "alpha",
        "beta",
        "delta",
        "radius",
        "AMOTA",
        "MOTAR",
        "MOTA",
        "IDS",
        "cost_gap",
        "subopt/frames"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10.6} {:>8.4} {:>8.4} {:>8.2} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>12.6} {:>12}",
            r.alpha,
            r.beta,
            r.delta,
            r.radius,
            r.amota,
            r.motar,
            r.mota,
            r.id_switches,
            r.cost_gap,
            format!("{}/{}", r.suboptimal_frames, r.frames)
        );
    }
    s
}
