//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use radarmot::association::{
    greedy_associate, total_cost, CostWeights, Detection, Offset, Track, TrackId, Velocity,
};
use radarmot::fusion::{
    expand_pillars, frustum_associate, AssociationMode, BBox2d, Pillar, PillarDims,
    PreliminaryDetection, RadarPoint,
};
use radarmot::geometry::{CameraModel, Pixel, VehiclePoint};
use radarmot::heatmap::{
    extract_peaks, focal_loss, render_gaussian, FocalParams, GridCell, Heatmap, HeatmapConfig,
    PeakSpec,
};
use radarmot::metrics::{
    amota, count_sequence_errors, motar, ErrorCounts, PredictionFrame, ProtocolParams, Sequence,
};
use radarmot::oracle::{
    optimal_assignment, optimal_assignments_by_size, recount_metrics, CostMatrix,
};
use radarmot::simulator::{
    crossing_scenario, generate, NoiseConfig, ObjectSize, ObjectSpec, OcclusionConfig, RadarConfig,
    ScenarioConfig,
};
use radarmot::tracker::{run_sequence, FrameInput, LatencyStats, Tracker, TrackerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

/// Criterion tolerances and thresholds.
const FORMULA_TOL: f64 = 1e-12;
const FOCAL_TOL: f64 = 1e-12;
const FOCAL_EPS_BOUND: f64 = 1e-5;
const MICRO_SCENES: usize = 300;
const ASSIGNMENT_INSTANCES: usize = 1000;
const ASSIGNMENT_MAX_SIDE: usize = 6;
const ORACLE_BUDGET_S: f64 = 60.0;
const CROSSING_SEEDS: u64 = 100;
const CROSSING_DEPTH_GAP: f64 = 10.0;
const CROSSING_ZERO_IDS_FRACTION: f64 = 0.90;
const CROSSING_BUDGET_S: f64 = 120.0;
const FRUSTUM_SCENES: usize = 500;
const HEATMAP_LAYOUTS: usize = 200;
const LATENCY_TRACKS: usize = 500;
const LATENCY_FRAMES: u64 = 200;
const LATENCY_MEDIAN_MS: f64 = 5.0;
const LATENCY_P99_MS: f64 = 35.0;
const LATENCY_BUDGET_S: f64 = 60.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Option<Outcome>)> = vec![
        ("1 benchmark numbers", criterion_1),
        ("2 metric formula fidelity", criterion_2),
        ("3 oracle equivalence", criterion_3),
        ("4 occlusion robustness", criterion_4),
        ("5 focal loss", criterion_5),
        ("6 frustum association", criterion_6),
        ("7 heatmap inverse", criterion_7),
        ("8 performance budget", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(outcome(false, format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            None => println!("[N/A ] criterion {name}: not reproducible at desk scale; needs the trained network and the full nuScenes dataset; substituted by criteria 2-9"),
            Some(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!("[{}] criterion {name}: {} ({secs:.2} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

fn criterion_1() -> Option<Outcome> {
    None
}

fn criterion_2() -> Option<Outcome> {
    let counts = |ids, fp, fn_, p| ErrorCounts {
        id_switches: ids,
        false_positives: fp,
        false_negatives: fn_,
        num_gt: p,
        ..Default::default()
    };
    let m = motar(&counts(10, 20, 30, 100), 0.5, 100).unwrap();
    let clamp = motar(&counts(150, 100, 50, 100), 0.5, 100).unwrap();
    let one = motar(&counts(0, 0, 0, 100), 1.0, 100).unwrap();

    let seq = common::build(
        (0..8)
            .map(|t| {
                let x = 10.0 + t as f64;
                let g = vec![
                    radarmot::metrics::GroundTruthObject {
                        id: 1,
                        x,
                        y: 0.0,
                        class: 0,
                    },
                    radarmot::metrics::GroundTruthObject {
                        id: 2,
                        x,
                        y: 4.0,
                        class: 4,
                    },
                ];
                let p = g
                    .iter()
                    .map(|o| radarmot::metrics::PredictedObject {
                        track_id: TrackId(o.id + 100),
                        x: o.x,
                        y: o.y,
                        class: o.class,
                        confidence: 1.0,
                    })
                    .collect();
                (p, g)
            })
            .collect(),
    );
    let perfect = amota(&[seq], &ProtocolParams::default())
        .unwrap()
        .aggregate
        .amota;

    let pass = (m - 0.8).abs() <= FORMULA_TOL
        && clamp == 0.0
        && (one - 1.0).abs() <= FORMULA_TOL
        && (perfect - 1.0).abs() <= FORMULA_TOL;
    Some(outcome(
        pass,
        format!(
            "MOTAR(r=0.5,P=100,E=60)={m:.15} (|err|={:.1e}, tol {FORMULA_TOL:.0e}); clamp case={clamp}; perfect AMOTA={perfect}",
            (m - 0.8).abs()
        ),
    ))
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    dominance: bool,
) -> (Vec<Detection>, Vec<Track>, CostWeights) {
    let n_trk = rng.gen_range(usize::from(dominance)..=ASSIGNMENT_MAX_SIDE);
    let n_det = if dominance {
        rng.gen_range(1..=n_trk)
    } else {
        rng.gen_range(0..=ASSIGNMENT_MAX_SIDE)
    };
    let radius = rng.gen_range(30.0..120.0);
    let w = CostWeights::new(
        rng.gen_range(0.0..1.0) / (radius * radius),
        rng.gen_range(0.0..0.1),
        rng.gen_range(0.0..0.5),
        radius,
    )
    .unwrap();
    let classes = if rng.gen_bool(0.3) { 2 } else { 1 };
    let tracks: Vec<Track> = (0..n_trk)
        .map(|i| Track {
            id: TrackId(i as u64 + 1),
            center: Pixel::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)),
            depth: rng.gen_range(5.0..50.0),
            velocity: Velocity::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            class: rng.gen_range(0..classes),
            confidence: 0.5,
            first_seen: 0,
            last_seen: 0,
            age: 0,
        })
        .collect();
    let dets = (0..n_det)
        .map(|i| {
            let (center, depth, velocity, class) = if dominance {
                let t = &tracks[i];
                (
                    Pixel::new(
                        t.center.u + rng.gen_range(-5.0..5.0),
                        t.center.v + rng.gen_range(-5.0..5.0),
                    ),
                    t.depth + rng.gen_range(-1.0..1.0),
                    Velocity::new(
                        t.velocity.vx + rng.gen_range(-0.5..0.5),
                        t.velocity.vy + rng.gen_range(-0.5..0.5),
                    ),
                    t.class,
                )
            } else {
                (
                    Pixel::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)),
                    rng.gen_range(5.0..50.0),
                    Velocity::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                    rng.gen_range(0..classes),
                )
            };
            Detection {
                center,
                depth,
                velocity,
                class,
                confidence: rng.gen_range(0.0..=1.0),
                displacement: Offset::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
                bbox: None,
            }
        })
        .collect();
    (dets, tracks, w)
}

/// Every row has a unique finite minimum whose column's unique minimum is
/// that row.
fn mutually_best(m: &CostMatrix) -> bool {
    let argmin_row = |r: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        let mut unique = true;
        for c in 0..m.cols() {
            if !m.is_allowed(r, c) {
                continue;
            }
            match best {
                None => best = Some(c),
                Some(b) if m.get(r, c) < m.get(r, b) => {
                    best = Some(c);
                    unique = true
                }
                Some(b) if m.get(r, c) == m.get(r, b) => unique = false,
                _ => {}
            }
        }
        best.filter(|_| unique)
    };
    (0..m.rows()).all(|r| match argmin_row(r) {
        None => false,
        Some(c) => (0..m.rows()).all(|r2| r2 == r || !(m.get(r2, c) <= m.get(r, c))),
    })
}

fn criterion_3() -> Option<Outcome> {
    let start = Instant::now();
    let mut scene_mismatch = 0;
    let mut checked = 0;
    for seed in 0..MICRO_SCENES as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::micro(rng.gen_range(1..=10), rng.gen_range(1..=4), seed);
        for floor in [0.0, 0.4, 0.6, 0.8, 1.0] {
            checked += 1;
            if count_sequence_errors(&s, floor, 2.0).unwrap()
                != recount_metrics(&s, floor, 2.0).unwrap()
            {
                scene_mismatch += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xA55);
    let (mut below, mut compared) = (0, 0);
    for _ in 0..ASSIGNMENT_INSTANCES {
        let (dets, tracks, w) = random_instance(&mut rng, false);
        let a = greedy_associate(&dets, &tracks, &w).unwrap();
        let m = CostMatrix::from_association(&dets, &tracks, &w);
        let greedy = total_cost(&a, &dets, &tracks, &w);
        let by_size = optimal_assignments_by_size(&m).unwrap();
        let k = a.matches.len();
        if greedy < by_size[k].cost {
            below += 1;
        }
        let best = optimal_assignment(&m).unwrap();
        if best.len() == k && greedy < best.cost {
            below += 1;
        }
        compared += 1;
    }

    let (mut dominance, mut unequal, mut attempts) = (0, 0, 0);
    while dominance < ASSIGNMENT_INSTANCES {
        attempts += 1;
        let (dets, tracks, w) = random_instance(&mut rng, true);
        let m = CostMatrix::from_association(&dets, &tracks, &w);
        if !mutually_best(&m) {
            continue;
        }
        dominance += 1;
        let a = greedy_associate(&dets, &tracks, &w).unwrap();
        let best = optimal_assignment(&m).unwrap();
        if total_cost(&a, &dets, &tracks, &w) != best.cost || a.matches.len() != best.len() {
            unequal += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Some(outcome(
        scene_mismatch == 0 && below == 0 && unequal == 0 && secs < ORACLE_BUDGET_S,
        format!(
            "{scene_mismatch}/{checked} count mismatches over {MICRO_SCENES} micro-scenes x 5 floors; greedy below optimal on {below}/{compared} arbitrary instances; greedy != optimal on {unequal}/{dominance} dominance instances ({attempts} sampled); {secs:.1} s of {ORACLE_BUDGET_S} s"
        ),
    ))
}

/// Total id switches and zero-switch seeds for one weighting.
fn crossing_switches(cfg: &TrackerConfig) -> (usize, u64) {
    let (mut total, mut clean) = (0, 0);
    for seed in 0..CROSSING_SEEDS {
        let scene = generate(&crossing_scenario(CROSSING_DEPTH_GAP, seed)).unwrap();
        let out = run_sequence(&scene.inputs(), scene.camera, cfg).unwrap();
        let seq = Sequence::new(
            out.results.iter().map(PredictionFrame::from).collect(),
            scene.ground_truth(),
        )
        .unwrap();
        let ids = count_sequence_errors(&seq, 0.0, 2.0).unwrap().id_switches;
        total += ids;
        clean += u64::from(ids == 0);
    }
    (total, clean)
}

fn criterion_4() -> Option<Outcome> {
    let start = Instant::now();
    let full = TrackerConfig::default();
    let mut pixel = full;
    pixel.weights.beta = 0.0;
    pixel.weights.delta = 0.0;
    let (full_ids, full_clean) = crossing_switches(&full);
    let (pix_ids, pix_clean) = crossing_switches(&pixel);
    let secs = start.elapsed().as_secs_f64();
    let frac = full_clean as f64 / CROSSING_SEEDS as f64;
    Some(outcome(
        full_ids < pix_ids && frac >= CROSSING_ZERO_IDS_FRACTION && secs < CROSSING_BUDGET_S,
        format!(
            "full cost {full_ids} IDS, {full_clean}/{CROSSING_SEEDS} seeds clean ({:.0}% >= {:.0}%); pixel-only {pix_ids} IDS, {pix_clean}/{CROSSING_SEEDS} clean; {secs:.1} s of {CROSSING_BUDGET_S} s",
            frac * 100.0,
            CROSSING_ZERO_IDS_FRACTION * 100.0
        ),
    ))
}

fn criterion_5() -> Option<Outcome> {
    let one =
        |v: f64| Heatmap::from_values(HeatmapConfig::new(4, 4, 4, 1).unwrap(), vec![v]).unwrap();
    let p = FocalParams {
        alpha: 2.0,
        beta: 4.0,
    };
    let pos = focal_loss(&one(0.5), &one(1.0), p, 1).unwrap();
    let neg = focal_loss(&one(0.5), &one(0.5), p, 1).unwrap();
    let pos_ref = -(0.5f64 * 0.5) * 0.5f64.ln();
    let neg_ref = -(0.5f64 * 0.5 * 0.5 * 0.5) * (0.5 * 0.5) * 0.5f64.ln();

    let cfg = HeatmapConfig::new(64, 64, 4, 1).unwrap();
    let mut values = vec![0.0; cfg.len()];
    values[4 * cfg.cols() + 3] = 1.0;
    let gt = Heatmap::from_values(cfg, values).unwrap();
    let perfect = focal_loss(&gt, &gt, FocalParams::default(), 1).unwrap();

    let e_pos = (pos - pos_ref).abs();
    let e_neg = (neg - neg_ref).abs();
    Some(outcome(
        e_pos <= FOCAL_TOL && e_neg <= FOCAL_TOL && (pos - 0.173_286_795).abs() < 1e-9 && (neg - 0.010_830_424_7).abs() < 1e-9 && perfect <= FOCAL_EPS_BOUND,
        format!("positive {pos:.16} (|err| {e_pos:.1e}), negative {neg:.16} (|err| {e_neg:.1e}), tol {FOCAL_TOL:.0e}; perfect loss {perfect:.2e} <= {FOCAL_EPS_BOUND:.0e}"),
    ))
}

/// Independent containment check for the default forward camera: depth is
/// vehicle x, u = cx - fx*y/x, v = cy - fy*z/x.
fn oracle_inside(p: &Pillar, det: &PreliminaryDetection, tol: f64) -> bool {
    let cam = CameraModel::default();
    let b = p.base.position;
    if !(b.x >= det.est_depth * (1.0 - tol) && b.x <= det.est_depth * (1.0 + tol)) {
        return false;
    }
    let (hx, hy) = (p.dims.depth_x / 2.0, p.dims.width_y / 2.0);
    let mut probes = vec![b];
    for dx in [-hx, hx] {
        for dy in [-hy, hy] {
            for z in [b.z, b.z + p.dims.height_z] {
                probes.push(VehiclePoint::new(b.x + dx, b.y + dy, z));
            }
        }
    }
    probes.iter().any(|q| {
        if q.x <= 0.0 {
            return false;
        }
        let u = cam.cx() - cam.fx() * q.y / q.x;
        let v = cam.cy() - cam.fy() * q.z / q.x;
        u >= det.bbox.u_min && u <= det.bbox.u_max && v >= det.bbox.v_min && v <= det.bbox.v_max
    })
}

fn criterion_6() -> Option<Outcome> {
    let cam = CameraModel::default();
    let tol = 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(0xF5);
    let (mut violations, mut matched, mut dets_total) = (0, 0, 0);
    for _ in 0..FRUSTUM_SCENES {
        let dets: Vec<PreliminaryDetection> = (0..rng.gen_range(1..6))
            .map(|_| {
                let x: f64 = rng.gen_range(5.0..60.0);
                let y = rng.gen_range(-0.35..0.35) * x;
                let z = rng.gen_range(-0.2..0.2) * x;
                let c = cam
                    .project_unbounded(&VehiclePoint::new(x, y, z).to_vector())
                    .unwrap();
                let (hw, hh) = (rng.gen_range(5.0..80.0), rng.gen_range(5.0..60.0));
                PreliminaryDetection {
                    bbox: BBox2d::new(c.u - hw, c.v - hh, c.u + hw, c.v + hh),
                    est_depth: x * rng.gen_range(0.85..1.15),
                    class: 0,
                    confidence: rng.gen_range(0.0..1.0),
                }
            })
            .collect();
        let points: Vec<RadarPoint> = (0..rng.gen_range(0..40))
            .map(|_| {
                let x: f64 = rng.gen_range(3.0..70.0);
                RadarPoint {
                    position: VehiclePoint::new(
                        x,
                        rng.gen_range(-0.4..0.4) * x,
                        rng.gen_range(-1.5..0.5),
                    ),
                    vx: rng.gen_range(-5.0..5.0),
                    vy: rng.gen_range(-5.0..5.0),
                }
            })
            .collect();
        let pillars = expand_pillars(&points, PillarDims::default()).unwrap();
        let res = frustum_associate(&dets, &pillars, &cam, tol, AssociationMode::Shared).unwrap();
        for (d, m) in dets.iter().zip(&res) {
            dets_total += 1;
            let inside: Vec<usize> = (0..pillars.len())
                .filter(|&i| oracle_inside(&pillars[i], d, tol))
                .collect();
            let min_depth = inside
                .iter()
                .map(|&i| pillars[i].base.position.x)
                .fold(f64::INFINITY, f64::min);
            let ok = match m {
                None => inside.is_empty(),
                Some(m) => {
                    matched += 1;
                    inside.contains(&m.pillar_index) && m.depth == min_depth
                }
            };
            violations += usize::from(!ok);
        }
    }

    // closest of two pillars in the same frustum is kept
    let det = PreliminaryDetection {
        bbox: BBox2d::new(350.0, 174.0, 450.0, 274.0),
        est_depth: 20.0,
        class: 0,
        confidence: 0.9,
    };
    let pts = [22.0, 18.0].map(|x| RadarPoint {
        position: VehiclePoint::new(x, 0.0, 0.0),
        vx: x,
        vy: 0.0,
    });
    let two = frustum_associate(
        &[det],
        &expand_pillars(&pts, PillarDims::default()).unwrap(),
        &cam,
        tol,
        AssociationMode::Shared,
    )
    .unwrap();
    let closest_ok = two[0].is_some_and(|m| m.pillar_index == 1 && m.depth == 18.0);

    Some(outcome(
        violations == 0 && closest_ok,
        format!("{violations} violations over {dets_total} detections in {FRUSTUM_SCENES} scenes ({matched} matched); two-pillar fixture keeps 18 m: {closest_ok}"),
    ))
}

fn criterion_7() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E);
    let (mut failures, mut centers_total) = (0, 0);
    for _ in 0..HEATMAP_LAYOUTS {
        let window = [3usize, 5, 7][rng.gen_range(0..3)];
        let classes = rng.gen_range(1..=3);
        let cfg = HeatmapConfig::new(
            4 * rng.gen_range(8..40),
            4 * rng.gen_range(8..40),
            4,
            classes,
        )
        .unwrap();
        let mut peaks: Vec<PeakSpec> = Vec::new();
        for _ in 0..rng.gen_range(1..12) {
            let p = PeakSpec {
                col: rng.gen_range(0..cfg.cols()),
                row: rng.gen_range(0..cfg.rows()),
                class: rng.gen_range(0..classes as usize),
                sigma: rng.gen_range(0.5..4.0),
            };
            let separated = peaks
                .iter()
                .filter(|q| q.class == p.class)
                .all(|q| q.col.abs_diff(p.col).max(q.row.abs_diff(p.row)) >= window);
            if separated {
                peaks.push(p);
            }
        }
        centers_total += peaks.len();
        let hm = render_gaussian(&peaks, cfg).unwrap();
        let found = extract_peaks(&hm, 0.5, window).unwrap();
        let mut want: Vec<GridCell> = peaks
            .iter()
            .map(|p| GridCell {
                class: p.class,
                row: p.row,
                col: p.col,
            })
            .collect();
        want.sort();
        let mut got: Vec<GridCell> = found.iter().map(|p| p.cell).collect();
        got.sort();
        if got != want || found.iter().any(|p| p.score != 1.0) {
            failures += 1;
        }
    }
    Some(outcome(
        failures == 0,
        format!("{failures}/{HEATMAP_LAYOUTS} layouts failed; {centers_total} centers recovered with score 1.0"),
    ))
}

fn benchmark_scene() -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBE);
    let objects = (0..LATENCY_TRACKS)
        .map(|_| {
            let x: f64 = rng.gen_range(10.0..70.0);
            ObjectSpec {
                class: rng.gen_range(0..3),
                position: VehiclePoint::new(
                    x,
                    rng.gen_range(-0.3..0.3) * x,
                    rng.gen_range(-0.1..0.1) * x,
                ),
                velocity: Velocity::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                size: ObjectSize {
                    length: 4.0,
                    width: 1.8,
                    height: 1.5,
                },
            }
        })
        .collect();
    ScenarioConfig {
        seed: 11,
        num_frames: LATENCY_FRAMES + 1,
        frame_dt: 0.05,
        camera: CameraModel::default(),
        dropout: 0.0,
        noise: NoiseConfig::standard(),
        radar: RadarConfig {
            points_per_object: 2,
            ..RadarConfig::standard()
        },
        occlusion: OcclusionConfig {
            enabled: false,
            ..OcclusionConfig::default()
        },
        objects,
    }
}

fn criterion_8() -> Option<Outcome> {
    let start = Instant::now();
    let scene = generate(&benchmark_scene()).unwrap();
    let inputs: Vec<FrameInput> = scene.inputs();
    let cfg = TrackerConfig::default();
    let mut trk = Tracker::new(scene.camera);
    trk.step(&inputs[0], &cfg).unwrap();
    let (mut samples, mut live, mut dets, mut radar, mut fused) =
        (Vec::new(), 0usize, 0usize, 0usize, 0usize);
    for input in &inputs[1..] {
        live += trk.tracks().len();
        dets += input.detections.len();
        radar += input.radar.len();
        let t0 = Instant::now();
        let r = trk.step(input, &cfg).unwrap();
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
        fused += r.tracks.iter().filter(|t| t.fused).count();
    }
    let n = samples.len();
    let stats = LatencyStats::from_samples(&samples);
    let secs = start.elapsed().as_secs_f64();
    Some(outcome(
        stats.median_ms < LATENCY_MEDIAN_MS && stats.p99_ms < LATENCY_P99_MS && secs < LATENCY_BUDGET_S,
        format!(
            "median {:.3} ms (< {LATENCY_MEDIAN_MS}), p99 {:.3} ms (< {LATENCY_P99_MS}) over {n} frames; mean {:.0} live tracks, {:.0} detections, {:.0} radar points, {:.0} fused per frame",
            stats.median_ms,
            stats.p99_ms,
            live as f64 / n as f64,
            dets as f64 / n as f64,
            radar as f64 / n as f64,
            fused as f64 / n as f64
        ),
    ))
}

fn cli(args: &[&str], dir: &Path) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_radarmot"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (out.stdout, out.status.success())
}

/// simulate + track + evaluate + sweep in `dir`; returns every produced byte.
fn pipeline(dir: &Path, threads: &str) -> Vec<Vec<u8>> {
    let mut outputs = Vec::new();
    let steps: [&[&str]; 5] = [
        &[
            "--threads",
            threads,
            "simulate",
            "--crossing",
            "--seed",
            "17",
            "--out",
            "scene",
        ],
        &[
            "--threads",
            threads,
            "track",
            "--replay",
            "scene/replay.jsonl",
            "--scenario",
            "scene/scenario.toml",
            "--out",
            "results.jsonl",
        ],
        &[
            "--threads",
            threads,
            "evaluate",
            "--results",
            "results.jsonl",
            "--gt",
            "scene/gt.jsonl",
        ],
        &[
            "--threads",
            threads,
            "evaluate",
            "--results",
            "results.jsonl",
            "--gt",
            "scene/gt.jsonl",
            "--json",
        ],
        &[
            "--threads",
            threads,
            "sweep",
            "--replay",
            "scene/replay.jsonl",
            "--gt",
            "scene/gt.jsonl",
            "--scenario",
            "scene/scenario.toml",
            "--beta",
            "0,0.04",
            "--delta",
            "0,0.25",
        ],
    ];
    for args in steps {
        let (stdout, ok) = cli(args, dir);
        assert!(ok, "radarmot {args:?} failed");
        outputs.push(stdout);
    }
    for f in [
        "scene/replay.jsonl",
        "scene/gt.jsonl",
        "scene/scenario.toml",
        "results.jsonl",
    ] {
        outputs.push(std::fs::read(dir.join(f)).unwrap());
    }
    outputs
}

fn criterion_9() -> Option<Outcome> {
    let runs: Vec<Vec<Vec<u8>>> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(_, threads)| {
            let dir = tempfile::tempdir().unwrap();
            pipeline(dir.path(), threads)
        })
        .collect();
    let bytes: usize = runs[0].iter().map(Vec::len).sum();
    let same_runs = runs[0] == runs[1];
    let same_threads = runs[0] == runs[2];
    Some(outcome(
        same_runs && same_threads,
        format!("{} artifacts, {bytes} bytes; identical across runs: {same_runs}; identical with 1 vs 4 threads: {same_threads}", runs[0].len()),
    ))
}
