//! Identity switches in the synthetic crossing across depth gaps, for each
//! cost term ablation and with radar fusion disabled.
//!
//! Run with `cargo run --release --example crossing_ablation`.

use anyhow::Result;
use radarmot::metrics::{amota, count_sequence_errors, PredictionFrame, ProtocolParams, Sequence};
use radarmot::simulator::{crossing_scenario, generate};
use radarmot::tracker::{run_sequence, TrackerConfig};

const SEEDS: u64 = 100;
const GAPS: [f64; 6] = [0.0, 2.0, 5.0, 10.0, 15.0, 20.0];

fn main() -> Result<()> {
    let full = TrackerConfig::default();
    let variants = [
        ("full", full.weights.beta, full.weights.delta, true),
        ("no velocity", full.weights.beta, 0.0, true),
        ("no depth", 0.0, full.weights.delta, true),
        ("pixel only", 0.0, 0.0, true),
        ("camera only", full.weights.beta, full.weights.delta, false),
    ];
    println!("crossing scenario, {SEEDS} seeds per cell, recall thresholds 40, gate 2 m");
    println!(
        "{:>8} {:<12} {:>8} {:>10} {:>8}",
        "gap [m]", "cost", "IDS", "clean [%]", "AMOTA"
    );
    for gap in GAPS {
        let scenes = (0..SEEDS)
            .map(|s| generate(&crossing_scenario(gap, s)))
            .collect::<Result<Vec<_>, _>>()?;
        for (name, beta, delta, fusion) in variants {
            let mut cfg = full;
            cfg.weights.beta = beta;
            cfg.weights.delta = delta;
            cfg.fusion.enabled = fusion;
            let mut seqs = Vec::with_capacity(scenes.len());
            let (mut ids, mut clean) = (0, 0);
            for scene in &scenes {
                let out = run_sequence(&scene.inputs(), scene.camera, &cfg)?;
                let seq = Sequence::new(
                    out.results.iter().map(PredictionFrame::from).collect(),
                    scene.ground_truth(),
                )?;
                let n = count_sequence_errors(&seq, 0.0, 2.0)?.id_switches;
                ids += n;
                clean += usize::from(n == 0);
                seqs.push(seq);
            }
            let report = amota(&seqs, &ProtocolParams::default())?;
            println!(
                "{gap:>8.1} {name:<12} {ids:>8} {:>10.1} {:>8.4}",
                100.0 * clean as f64 / SEEDS as f64,
                report.aggregate.amota
            );
        }
    }
    Ok(())
}
