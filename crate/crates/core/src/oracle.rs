//! Exact reference implementations: optimal assignment by exhaustive search
//! and by successive shortest augmenting paths, and a brute-force recount of
//! tracking errors that enumerates every per-frame matching.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::association::{gated_cost, CostWeights, Detection, Track, TrackId};
use crate::metrics::{ground_distance, ErrorCounts, GroundTruthObject, PredictedObject, Sequence};

/// Largest side accepted by the exhaustive assignment search.
pub const MAX_EXHAUSTIVE_SIDE: usize = 10;
/// Largest side accepted by the exhaustive per-cardinality search.
pub const MAX_EXHAUSTIVE_PARTIAL_SIDE: usize = 8;
/// Recount limits.
pub const MAX_RECOUNT_FRAMES: usize = 10;
pub const MAX_RECOUNT_OBJECTS: usize = 4;
pub const MAX_RECOUNT_PREDICTIONS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("cost matrix {rows}x{cols} exceeds the exhaustive search limit of {limit}")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },
    #[error("cost matrix data has {got} entries, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("cost entries must be finite or +inf, got {0}")]
    InvalidCost(f64),
    #[error("no matching with {0} pairs exists")]
    InfeasibleSize(usize),
    #[error("recount limited to {MAX_RECOUNT_FRAMES} frames, {MAX_RECOUNT_OBJECTS} ground-truth objects and {MAX_RECOUNT_PREDICTIONS} predictions per frame")]
    InstanceTooLarge,
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Dense row-major cost matrix; rows are detections, columns tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, OracleError> {
        if data.len() != rows * cols {
            return Err(OracleError::WrongLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(&bad) = data
            .iter()
            .find(|c| c.is_nan() || **c < 0.0 || **c == f64::NEG_INFINITY)
        {
            return Err(OracleError::InvalidCost(bad));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OracleError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(OracleError::WrongLength {
                expected: cols,
                got: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Gated association costs of every detection/track pair.
    pub fn from_association(dets: &[Detection], tracks: &[Track], w: &CostWeights) -> Self {
        let data = dets
            .iter()
            .flat_map(|d| tracks.iter().map(move |t| gated_cost(d, t, w)))
            .collect();
        Self {
            rows: dets.len(),
            cols: tracks.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_finite()
    }
}

/// (row, col) index pairs.
pub type Pairs = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// (row, col) pairs sorted by row.
    pub pairs: Pairs,
    /// Sum of matched costs in row order.
    pub cost: f64,
}

impl Assignment {
    fn from_pairs(m: &CostMatrix, mut pairs: Pairs) -> Self {
        pairs.sort_unstable();
        let cost = pairs.iter().map(|&(r, c)| m.get(r, c)).sum();
        Self { pairs, cost }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_side(m: &CostMatrix, limit: usize) -> Result<(), OracleError> {
    if m.rows > limit || m.cols > limit {
        return Err(OracleError::TooLarge {
            rows: m.rows,
            cols: m.cols,
            limit,
        });
    }
    Ok(())
}

/// Maximum-cardinality matching of minimum total cost over allowed pairs, by
/// exhaustive search.
pub fn optimal_assignment(m: &CostMatrix) -> Result<Assignment, OracleError> {
    check_side(m, MAX_EXHAUSTIVE_SIDE)?;
    struct Search<'a> {
        m: &'a CostMatrix,
        used: Vec<bool>,
        current: Pairs,
        best: Option<(usize, f64, Pairs)>,
    }
    impl Search<'_> {
        fn visit(&mut self, row: usize, cost: f64) {
            if row == self.m.rows {
                let better = match &self.best {
                    None => true,
                    Some((n, c, _)) => {
                        self.current.len() > *n || (self.current.len() == *n && cost < *c)
                    }
                };
                if better {
                    self.best = Some((self.current.len(), cost, self.current.clone()));
                }
                return;
            }
            for col in 0..self.m.cols {
                if !self.used[col] && self.m.is_allowed(row, col) {
                    self.used[col] = true;
                    self.current.push((row, col));
                    self.visit(row + 1, cost + self.m.get(row, col));
                    self.current.pop();
                    self.used[col] = false;
                }
            }
            self.visit(row + 1, cost);
        }
    }
    let mut s = Search {
        m,
        used: vec![false; m.cols],
        current: Vec::new(),
        best: None,
    };
    s.visit(0, 0.0);
    let (_, _, pairs) = s.best.expect("the empty matching is always visited");
    Ok(Assignment::from_pairs(m, pairs))
}

/// Minimum-cost matching for every feasible cardinality, by exhaustive
/// search. Entry `k` holds the best matching with `k` pairs.
pub fn optimal_assignments_by_size(m: &CostMatrix) -> Result<Vec<Assignment>, OracleError> {
    check_side(m, MAX_EXHAUSTIVE_PARTIAL_SIDE)?;
    fn visit(
        m: &CostMatrix,
        row: usize,
        cost: f64,
        used: &mut [bool],
        cur: &mut Pairs,
        best: &mut Vec<Option<(f64, Pairs)>>,
    ) {
        if row == m.rows {
            let k = cur.len();
            if best.len() <= k {
                best.resize(k + 1, None);
            }
            if best[k].as_ref().is_none_or(|(c, _)| cost < *c) {
                best[k] = Some((cost, cur.clone()));
            }
            return;
        }
        for col in 0..m.cols {
            if !used[col] && m.is_allowed(row, col) {
                used[col] = true;
                cur.push((row, col));
                visit(m, row + 1, cost + m.get(row, col), used, cur, best);
                cur.pop();
                used[col] = false;
            }
        }
        visit(m, row + 1, cost, used, cur, best);
    }
    let mut best = Vec::new();
    visit(
        m,
        0,
        0.0,
        &mut vec![false; m.cols],
        &mut Vec::new(),
        &mut best,
    );
    Ok(best
        .into_iter()
        .map(|b| {
            let (_, pairs) =
                b.expect("cardinalities below the maximum are reachable by dropping pairs");
            Assignment::from_pairs(m, pairs)
        })
        .collect())
}

/// Minimum-cost matching for every feasible cardinality by successive
/// shortest augmenting paths. Polynomial in the matrix size.
pub fn min_cost_matchings(m: &CostMatrix) -> Vec<Assignment> {
    // nodes: source, rows, cols, sink
    let source = 0;
    let sink = m.rows + m.cols + 1;
    let n = sink + 1;
    struct Edge {
        to: usize,
        cap: i32,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cost: f64| {
        adj[from].push(edges.len());
        edges.push(Edge { to, cap: 1, cost });
        adj[to].push(edges.len());
        edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    };
    for r in 0..m.rows {
        add(&mut edges, source, 1 + r, 0.0);
    }
    let mut pair_edges = Vec::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            if m.is_allowed(r, c) {
                pair_edges.push((edges.len(), r, c));
                add(&mut edges, 1 + r, 1 + m.rows + c, m.get(r, c));
            }
        }
    }
    for c in 0..m.cols {
        add(&mut edges, 1 + m.rows + c, sink, 0.0);
    }

    let current = |edges: &[Edge]| -> Pairs {
        pair_edges
            .iter()
            .filter(|(e, _, _)| edges[*e].cap == 0)
            .map(|&(_, r, c)| (r, c))
            .collect()
    };

    let mut out = vec![Assignment::from_pairs(m, Vec::new())];
    loop {
        // Bellman-Ford over the residual graph; residual costs may be negative
        // but the graph has no negative cycles after each shortest augmentation.
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            break;
        }
        let mut v = sink;
        while let Some(e) = via[v] {
            edges[e].cap -= 1;
            edges[e ^ 1].cap += 1;
            v = edges[e ^ 1].to;
        }
        out.push(Assignment::from_pairs(m, current(&edges)));
    }
    out
}

/// Maximum-cardinality minimum-cost matching, polynomial method.
pub fn min_cost_max_matching(m: &CostMatrix) -> Assignment {
    min_cost_matchings(m)
        .pop()
        .expect("the empty matching is always present")
}

/// Minimum-cost matching with exactly `k` pairs, polynomial method.
pub fn min_cost_matching_of_size(m: &CostMatrix, k: usize) -> Result<Assignment, OracleError> {
    min_cost_matchings(m)
        .into_iter()
        .nth(k)
        .ok_or(OracleError::InfeasibleSize(k))
}

type EdgeKey = (f64, u64, TrackId);

fn cmp_keys(a: &[EdgeKey], b: &[EdgeKey]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2));
        if o != Ordering::Equal {
            return o;
        }
    }
    // a missing entry counts as +inf, so the longer list is smaller
    b.len().cmp(&a.len())
}

/// Every injective set of valid (gt index, pred index) pairs.
fn all_matchings(gt: &[GroundTruthObject], preds: &[PredictedObject], dist: f64) -> Vec<Pairs> {
    fn rec(
        gi: usize,
        gt: &[GroundTruthObject],
        preds: &[PredictedObject],
        dist: f64,
        used: &mut Vec<bool>,
        cur: &mut Pairs,
        out: &mut Vec<Pairs>,
    ) {
        if gi == gt.len() {
            out.push(cur.clone());
            return;
        }
        rec(gi + 1, gt, preds, dist, used, cur, out);
        for pi in 0..preds.len() {
            if !used[pi]
                && preds[pi].class == gt[gi].class
                && ground_distance(&preds[pi], &gt[gi]) <= dist
            {
                used[pi] = true;
                cur.push((gi, pi));
                rec(gi + 1, gt, preds, dist, used, cur, out);
                cur.pop();
                used[pi] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(
        0,
        gt,
        preds,
        dist,
        &mut vec![false; preds.len()],
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// Recounts tracking errors by enumerating all valid matchings per frame.
/// Among matchings that keep every still-valid previous pairing (the lowest
/// ground-truth id wins a contested track), the one whose sorted
/// (distance, gt id, track id) keys are lexicographically smallest is taken.
pub fn recount_metrics(
    seq: &Sequence,
    confidence_floor: f64,
    dist_threshold: f64,
) -> Result<ErrorCounts, OracleError> {
    seq.validate()?;
    if seq.ground_truth.len() > MAX_RECOUNT_FRAMES
        || seq
            .ground_truth
            .iter()
            .any(|f| f.objects.len() > MAX_RECOUNT_OBJECTS)
        || seq
            .predictions
            .iter()
            .any(|f| f.objects.len() > MAX_RECOUNT_PREDICTIONS)
    {
        return Err(OracleError::InstanceTooLarge);
    }
    let mut last: BTreeMap<u64, TrackId> = BTreeMap::new();
    let mut counts = ErrorCounts::default();
    for (pf, gf) in seq.predictions.iter().zip(&seq.ground_truth) {
        let preds: Vec<PredictedObject> = pf
            .objects
            .iter()
            .filter(|o| o.confidence >= confidence_floor)
            .copied()
            .collect();
        let gt = &gf.objects;
        let valid = |gi: usize, pi: usize| {
            preds[pi].class == gt[gi].class
                && ground_distance(&preds[pi], &gt[gi]) <= dist_threshold
        };

        let mut sticky: Pairs = Vec::new();
        for (pi, p) in preds.iter().enumerate() {
            let claim = (0..gt.len())
                .filter(|&gi| last.get(&gt[gi].id) == Some(&p.track_id) && valid(gi, pi))
                .min_by_key(|&gi| gt[gi].id);
            if let Some(gi) = claim {
                sticky.push((gi, pi));
            }
        }

        let key_of = |m: &[(usize, usize)]| -> Vec<EdgeKey> {
            let mut k: Vec<EdgeKey> = m
                .iter()
                .filter(|e| !sticky.contains(e))
                .map(|&(gi, pi)| {
                    (
                        ground_distance(&preds[pi], &gt[gi]),
                        gt[gi].id,
                        preds[pi].track_id,
                    )
                })
                .collect();
            k.sort_by(|a, b| cmp_keys(std::slice::from_ref(a), std::slice::from_ref(b)));
            k
        };
        let chosen = all_matchings(gt, &preds, dist_threshold)
            .into_iter()
            .filter(|m| sticky.iter().all(|s| m.contains(s)))
            .map(|m| (key_of(&m), m))
            .min_by(|a, b| cmp_keys(&a.0, &b.0))
            .map(|(_, m)| m)
            .expect("the sticky pairs alone form a valid matching");

        let mut pairs: Vec<(u64, TrackId, f64)> = chosen
            .iter()
            .map(|&(gi, pi)| {
                (
                    gt[gi].id,
                    preds[pi].track_id,
                    ground_distance(&preds[pi], &gt[gi]),
                )
            })
            .collect();
        pairs.sort_by_key(|p| p.0);
        for (gid, tid, d) in pairs {
            if let Some(prev) = last.insert(gid, tid) {
                counts.id_switches += usize::from(prev != tid);
            }
            counts.distances.push(d);
        }
        counts.matches += chosen.len();
        counts.false_positives += preds.len() - chosen.len();
        counts.false_negatives += gt.len() - chosen.len();
        counts.num_gt += gt.len();
    }
    Ok(counts)
}
