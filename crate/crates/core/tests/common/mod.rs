//! Scene builders shared by integration tests.
#![allow(dead_code)]

use radarmot::association::TrackId;
use radarmot::metrics::{
    GroundTruthFrame, GroundTruthObject, PredictedObject, PredictionFrame, Sequence,
};

pub fn build(frames: Vec<(Vec<PredictedObject>, Vec<GroundTruthObject>)>) -> Sequence {
    let (p, g): (Vec<_>, Vec<_>) = frames
        .into_iter()
        .enumerate()
        .map(|(i, (p, g))| {
            (
                PredictionFrame {
                    frame_index: i as u64,
                    objects: p,
                },
                GroundTruthFrame {
                    frame_index: i as u64,
                    objects: g,
                },
            )
        })
        .unzip();
    Sequence::new(p, g).unwrap()
}

/// Random micro-scene: up to 4 objects, jittered predictions with id swaps,
/// drops, duplicates and clutter near the gate.
pub fn micro(frames: usize, objects: usize, seed: u64) -> Sequence {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut next_id = 10;
    let mut assigned: Vec<u64> = (1..=objects as u64).collect();
    for t in 0..frames {
        let mut g = Vec::new();
        let mut p = Vec::new();
        for o in 0..objects {
            let x = o as f64 * 1.5 + t as f64 * 0.3;
            let y = (o % 2) as f64 * 1.0;
            let class = (o % 2) as u32;
            if rng.gen_bool(0.85) {
                g.push(GroundTruthObject {
                    id: o as u64 + 1,
                    x,
                    y,
                    class,
                });
            }
            if rng.gen_bool(0.1) {
                assigned[o] = next_id;
                next_id += 1;
            }
            if rng.gen_bool(0.8) {
                p.push(PredictedObject {
                    track_id: TrackId(assigned[o]),
                    x: x + rng.gen_range(-1.5..1.5),
                    y: y + rng.gen_range(-1.5..1.5),
                    class: if rng.gen_bool(0.9) { class } else { 1 - class },
                    confidence: (rng.gen_range(1..=5) as f64) / 5.0,
                });
            }
        }
        if p.len() < 6 && rng.gen_bool(0.3) {
            p.push(PredictedObject {
                track_id: TrackId(next_id),
                x: rng.gen_range(0.0..6.0),
                y: rng.gen_range(-1.0..2.0),
                class: rng.gen_range(0..2),
                confidence: 0.4,
            });
            next_id += 1;
        }
        // shuffle track ids occasionally so sticky matching is exercised
        if p.len() >= 2 && rng.gen_bool(0.15) {
            let (a, b) = (p[0].track_id, p[1].track_id);
            let (ra, rb) = (a.0, b.0);
            p[0].track_id = b;
            p[1].track_id = a;
            assigned.iter_mut().for_each(|id| {
                if *id == ra {
                    *id = rb
                } else if *id == rb {
                    *id = ra
                }
            });
        }
        out.push((p, g));
    }
    build(out)
}
