//! Bottom-k Laplacian eigenvectors from a stream of edges.
//!
//! The Laplacian is never formed: with `X` the edge-by-node incidence matrix,
//! `Lv = XᵀXv` is a gather (`v[out] − v[in]` per edge) followed by a
//! scatter-add back onto the nodes. Player 0 runs power iteration on `L` to
//! estimate its top eigenvalue; players `1..=k` play the unbiased game on the
//! shifted operator `λ*I − L`, whose top eigenvectors are the bottom
//! eigenvectors of `L`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat, SymEig};
use crate::metrics::{self, MetricRow, MetricTrace, STREAK_THRESHOLD};
use crate::rng;
use crate::solver::{aggregate_shards, apply_update, init_state, step_size, OptState, SolverConfig};
use crate::updates::{Constraint, EigenState, UpdateRule};

/// Undirected graph as a list of `(out, in)` node pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    edges: Vec<(usize, usize)>,
    num_nodes: usize,
}

impl EdgeList {
    pub fn new(edges: Vec<(usize, usize)>, num_nodes: usize) -> Result<Self> {
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a == b {
                return Err(Error::config(format!("edge {e} is a self-loop on node {a}")));
            }
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::config(format!(
                    "edge {e} ({a}, {b}) exceeds {num_nodes} nodes"
                )));
            }
        }
        Ok(EdgeList { edges, num_nodes })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Dense unnormalized Laplacian `D − A` (parallel edges add up).
    pub fn laplacian(&self) -> Mat {
        let mut l = Mat::zeros(self.num_nodes, self.num_nodes);
        for &(a, b) in &self.edges {
            l[(a, a)] += 1.0;
            l[(b, b)] += 1.0;
            l[(a, b)] -= 1.0;
            l[(b, a)] -= 1.0;
        }
        l
    }

    /// Number of connected components, isolated nodes included.
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.num_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.num_nodes;
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
        count
    }

    /// Component index of every node, numbered by first appearance.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut adjacency = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut labels = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        for start in 0..self.num_nodes {
            if labels[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            labels[start] = next;
            while let Some(n) = stack.pop() {
                for &m in &adjacency[n] {
                    if labels[m] == usize::MAX {
                        labels[m] = next;
                        stack.push(m);
                    }
                }
            }
            next += 1;
        }
        labels
    }
}

fn check_ids(edges: &[(usize, usize)], num_nodes: usize) -> Result<()> {
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= num_nodes || b >= num_nodes) {
        return Err(Error::Index {
            index: a.max(b),
            len: num_nodes,
        });
    }
    Ok(())
}

/// `Xv`: one entry `v[out] − v[in]` per edge.
pub fn incidence_apply(edges: &[(usize, usize)], v: &[f64]) -> Result<Vec<f64>> {
    check_ids(edges, v.len())?;
    Ok(edges.iter().map(|&(a, b)| v[a] - v[b]).collect())
}

/// `Xᵀw`: scatter-adds `+w_e` onto `out(e)` and `−w_e` onto `in(e)`.
pub fn incidence_t_apply(edges: &[(usize, usize)], w: &[f64], num_nodes: usize) -> Result<Vec<f64>> {
    if w.len() != edges.len() {
        return Err(Error::shape(format!(
            "{} edge weights for {} edges",
            w.len(),
            edges.len()
        )));
    }
    check_ids(edges, num_nodes)?;
    let mut out = vec![0.0; num_nodes];
    for (&(a, b), &x) in edges.iter().zip(w) {
        out[a] += x;
        out[b] -= x;
    }
    Ok(out)
}

/// A block of edges standing for the whole graph: its Laplacian estimate is
/// `scale · XᵀX` with `scale = |E| / len`.
#[derive(Debug, Clone)]
pub struct EdgeBatch {
    pub edges: Vec<(usize, usize)>,
    pub num_nodes: usize,
    pub scale: f64,
}

impl EdgeBatch {
    /// The full edge set, an exact Laplacian.
    pub fn full(graph: &EdgeList) -> Self {
        EdgeBatch {
            edges: graph.edges().to_vec(),
            num_nodes: graph.num_nodes(),
            scale: 1.0,
        }
    }

    /// A subset of `graph`'s edges, rescaled to be unbiased for `L`.
    pub fn sampled(graph: &EdgeList, edges: Vec<(usize, usize)>) -> Self {
        let scale = graph.len() as f64 / edges.len() as f64;
        EdgeBatch {
            edges,
            num_nodes: graph.num_nodes(),
            scale,
        }
    }

    /// Estimated `Lv` and the estimate of `‖Xv‖²`.
    fn laplacian_apply(&self, v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let xv = incidence_apply(&self.edges, v)?;
        let energy = self.scale * dot(&xv, &xv);
        let mut lv = incidence_t_apply(&self.edges, &xv, self.num_nodes)?;
        lv.iter_mut().for_each(|x| *x *= self.scale);
        Ok((lv, energy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaStarMode {
    /// Always `2|V|`, an upper bound on the top Laplacian eigenvalue.
    FixedTwoV,
    /// Running maximum of the Rayleigh estimates `‖Xv̂₁‖²`.
    TrackedMax,
}

impl fmt::Display for LambdaStarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaStarMode::FixedTwoV => "fixed2v",
            LambdaStarMode::TrackedMax => "tracked",
        })
    }
}

impl FromStr for LambdaStarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed2v" | "fixed_2v" | "fixed-2v" => Ok(LambdaStarMode::FixedTwoV),
            "tracked" | "tracked_max" | "tracked-max" => Ok(LambdaStarMode::TrackedMax),
            other => Err(Error::config(format!("unknown lambda-star mode {other:?}"))),
        }
    }
}

/// The spectral shift `λ*` and the latest estimate of `λ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTracker {
    lambda_star: f64,
    mode: LambdaStarMode,
    observed: Option<f64>,
}

impl LambdaTracker {
    /// Starts at `2|V|`.
    pub fn new(num_nodes: usize, mode: LambdaStarMode) -> Self {
        LambdaTracker {
            lambda_star: 2.0 * num_nodes as f64,
            mode,
            observed: None,
        }
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Latest Rayleigh estimate of the top Laplacian eigenvalue.
    pub fn estimate(&self) -> Option<f64> {
        self.observed
    }

    pub fn observe(&mut self, estimate: f64) {
        if self.mode == LambdaStarMode::TrackedMax {
            self.lambda_star = match self.observed_max() {
                Some(m) => m.max(estimate),
                None => estimate,
            };
        }
        self.observed = Some(estimate);
    }

    fn observed_max(&self) -> Option<f64> {
        self.observed.map(|_| self.lambda_star)
    }
}

/// Update direction for player `i` (0 is the top-eigenvalue tracker) on one
/// edge batch, under the current shift `λ*`.
pub fn graph_update(batch: &EdgeBatch, state: &EigenState, i: usize, tracker: &LambdaTracker) -> Result<Vec<f64>> {
    Ok(graph_direction(batch, state, i, tracker.lambda_star())?.0)
}

/// Estimates `λ₁` from player 0 on `batch` and feeds it to the tracker.
pub fn track_lambda(batch: &EdgeBatch, state: &EigenState, tracker: &mut LambdaTracker) -> Result<f64> {
    if state.k() == 0 {
        return Err(Error::Index { index: 0, len: 0 });
    }
    let (_, energy) = batch.laplacian_apply(&state.vector(0))?;
    tracker.observe(energy);
    Ok(energy)
}

/// Direction for player `i` and, for player 0, the batch `‖Xv̂₁‖²` estimate.
fn graph_direction(batch: &EdgeBatch, state: &EigenState, i: usize, lambda_star: f64) -> Result<(Vec<f64>, f64)> {
    if i >= state.k() {
        return Err(Error::Index {
            index: i,
            len: state.k(),
        });
    }
    if state.dim() != batch.num_nodes {
        return Err(Error::shape(format!(
            "state has dimension {}, graph has {} nodes",
            state.dim(),
            batch.num_nodes
        )));
    }
    if lambda_star.is_nan() || lambda_star <= 0.0 {
        return Err(Error::config(format!("lambda* must be positive, got {lambda_star}")));
    }
    let vi = state.vector(i);
    let (lv, energy) = batch.laplacian_apply(&vi)?;
    if i == 0 {
        return Ok((lv, energy));
    }
    let mut shifted = vi.clone();
    let mut laplacian = lv.clone();
    for j in 1..i {
        let vj = state.vector(j);
        axpy(-dot(&vi, &vj), &vj, &mut shifted);
        axpy(-dot(&vj, &lv), &vj, &mut laplacian);
    }
    let dir = shifted
        .iter()
        .zip(&laplacian)
        .map(|(s, l)| lambda_star * s - l)
        .collect();
    Ok((dir, energy))
}

/// Output of [`run_graph`].
#[derive(Debug, Clone)]
pub struct GraphRun {
    /// `|V| x k`, ordered by ascending Laplacian eigenvalue.
    pub vectors: Mat,
    pub trace: MetricTrace,
    pub tracker: LambdaTracker,
}

/// Learns the bottom `config.k` Laplacian eigenvectors.
///
/// Each iteration takes `config.batch_size` edges (the whole edge list when
/// the batch size equals the edge count, otherwise uniform draws with
/// replacement), splits them into `config.shards` blocks and reduces the
/// block directions as in [`crate::solver::run`]. `truth`, when given, is the
/// eigensystem of the dense Laplacian.
pub fn run_graph(
    config: &SolverConfig,
    graph: &EdgeList,
    mode: LambdaStarMode,
    truth: Option<&SymEig>,
) -> Result<GraphRun> {
    let n = graph.num_nodes();
    let k = config.k;
    let mut tracker = LambdaTracker::new(n, mode);
    if k == 0 {
        return Ok(GraphRun {
            vectors: Mat::zeros(n, 0),
            trace: MetricTrace::default(),
            tracker,
        });
    }
    if graph.is_empty() {
        return Err(Error::config("graph has no edges"));
    }
    if k + 1 > n {
        return Err(Error::config(format!(
            "cannot learn {k} bottom eigenvectors of a {n}-node graph"
        )));
    }
    if config.rule != UpdateRule::Mu {
        return Err(Error::config("graph runs use the mu update"));
    }
    config.validate()?;
    let truth_vectors = match truth {
        Some(t) if t.dim() != n => return Err(Error::shape("ground truth does not match the graph")),
        Some(t) => {
            let mut ascending = t.eigenvalues.clone();
            ascending.reverse();
            metrics::warn_if_degenerate(&ascending, k);
            Some(t.bottom(k))
        }
        None => None,
    };

    let players = k + 1;
    let mut state = init_state(n, players, config.seed, Constraint::UnitSphere)?;
    let mut opt = OptState::zeros(n, players);
    let mut rng = rng::stream(config.seed, rng::streams::BATCHES);
    let full_batch = config.batch_size == graph.len();
    let mut trace = MetricTrace::default();
    let started = Instant::now();

    for t in 1..=config.steps {
        let snapshot = state.clone();
        let lambda_star = tracker.lambda_star();
        let edges: Vec<(usize, usize)> = if full_batch {
            graph.edges().to_vec()
        } else {
            (0..config.batch_size)
                .map(|_| graph.edges()[rng.random_range(0..graph.len())])
                .collect()
        };
        let per_shard = edges.len() / config.shards;
        let batches: Vec<EdgeBatch> = edges
            .chunks(per_shard)
            .map(|chunk| {
                if full_batch && config.shards == 1 {
                    EdgeBatch::full(graph)
                } else {
                    EdgeBatch::sampled(graph, chunk.to_vec())
                }
            })
            .collect();

        let shard_results: Vec<Vec<(Vec<f64>, f64)>> = batches
            .par_iter()
            .map(|b| {
                (0..players)
                    .map(|i| graph_direction(b, &snapshot, i, lambda_star))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let sizes: Vec<usize> = batches.iter().map(|b| b.edges.len()).collect();

        let estimates: Vec<Vec<f64>> = shard_results.iter().map(|s| vec![s[0].1]).collect();
        let estimate = aggregate_shards(&estimates, &sizes)?[0];

        let eta = step_size(config.schedule, t);
        for i in 0..players {
            let dirs: Vec<Vec<f64>> = shard_results.iter().map(|s| s[i].0.clone()).collect();
            let dir = aggregate_shards(&dirs, &sizes)?;
            let mut buf = opt.column(i);
            let next = apply_update(&snapshot.vector(i), &dir, eta, &mut buf, config)?;
            opt.set_column(i, &buf)?;
            state.set_vector(i, &next)?;
        }
        state.check()?;
        tracker.observe(estimate);

        if t % config.eval_every == 0 || t == config.steps {
            let reported = reported_vectors(&state, k)?;
            let utilities = shifted_utilities(&batches, &sizes, &state, tracker.lambda_star())?;
            let (streak, subspace_distance) = match &truth_vectors {
                Some(tv) => (
                    metrics::longest_streak(&reported, tv, STREAK_THRESHOLD).ok(),
                    metrics::subspace_distance(&reported, tv).ok(),
                ),
                None => (None, None),
            };
            trace.rows.push(MetricRow {
                iteration: t,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                streak,
                subspace_distance,
                utilities,
                skipped_players: 0,
            });
        }
    }

    Ok(GraphRun {
        vectors: reported_vectors(&state, k)?,
        trace,
        tracker,
    })
}

fn reported_vectors(state: &EigenState, k: usize) -> Result<Mat> {
    let cols: Vec<Vec<f64>> = (1..=k).map(|i| state.vector(i)).collect();
    Mat::from_cols(&cols)
}

/// Deflated Rayleigh values of the reported players on `λ*I − L`.
fn shifted_utilities(batches: &[EdgeBatch], sizes: &[usize], state: &EigenState, lambda_star: f64) -> Result<Vec<f64>> {
    let players = state.k();
    let mut lv = Vec::with_capacity(players);
    for i in 0..players {
        let per_shard: Vec<Vec<f64>> = batches
            .iter()
            .map(|b| b.laplacian_apply(&state.vector(i)).map(|(l, _)| l))
            .collect::<Result<_>>()?;
        lv.push(aggregate_shards(&per_shard, sizes)?);
    }
    let shifted = |a: usize, b: usize| lambda_star * dot(&state.vector(a), &state.vector(b)) - dot(&state.vector(a), &lv[b]);
    Ok((1..players)
        .map(|i| {
            let mut u = shifted(i, i);
            for j in 1..i {
                u -= dot(&state.vector(i), &state.vector(j)) * shifted(j, i);
            }
            u
        })
        .collect())
}
