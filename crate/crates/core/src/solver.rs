//! Simultaneous-update training loop with simulated data parallelism.
//!
//! Each iteration snapshots the state, draws one minibatch, splits it into
//! `shards` contiguous blocks, computes every player's direction on every
//! block against the snapshot (in parallel), reduces the blocks left to right
//! with size weights, and applies the step.

use std::fmt;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data_io::{sample_batch, Dataset, SamplerState};
use crate::error::{Error, Result};
use crate::linalg::{self, axpy, norm, retract, tangent_project, Mat, SymEig};
use crate::metrics::{self, MetricRow, MetricTrace, STREAK_THRESHOLD};
use crate::rng;
use crate::updates::{Constraint, CovProducts, CovView, EigenState, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `η₀ / t`
    InverseT(f64),
}

impl Schedule {
    fn base(self) -> f64 {
        match self {
            Schedule::Constant(eta) | Schedule::InverseT(eta) => eta,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(_) => f.write_str("constant"),
            Schedule::InverseT(_) => f.write_str("inv-t"),
        }
    }
}

/// Parses a schedule kind (`constant` or `inv-t`) around a base rate.
pub fn parse_schedule(kind: &str, eta: f64) -> Result<Schedule> {
    match kind {
        "constant" => Ok(Schedule::Constant(eta)),
        "inv-t" | "inverse-t" | "inverse_t" => Ok(Schedule::InverseT(eta)),
        other => Err(Error::config(format!("unknown schedule {other:?}"))),
    }
}

/// Step size at iteration `t ≥ 1`.
pub fn step_size(schedule: Schedule, t: usize) -> f64 {
    match schedule {
        Schedule::Constant(eta) => eta,
        Schedule::InverseT(eta) => eta / t.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub k: usize,
    pub rule: UpdateRule,
    pub steps: usize,
    /// Rows per iteration; ignored for explicit-covariance sources.
    pub batch_size: usize,
    /// Simulated machines per player; must divide `batch_size`.
    pub shards: usize,
    pub schedule: Schedule,
    pub momentum: f64,
    pub nesterov: bool,
    /// Project directions onto the tangent space before stepping.
    pub riemannian_projection: bool,
    pub seed: u64,
    pub eval_every: usize,
}

impl SolverConfig {
    pub fn new(k: usize, rule: UpdateRule) -> Self {
        SolverConfig {
            k,
            rule,
            steps: 1000,
            batch_size: 1,
            shards: 1,
            schedule: Schedule::Constant(0.1),
            momentum: 0.0,
            nesterov: false,
            riemannian_projection: false,
            seed: 0,
            eval_every: 100,
        }
    }

    /// SGD with Nesterov momentum 0.9 at rate 5e-5, the large-scale language
    /// embedding settings.
    pub fn large_scale_profile(k: usize) -> Self {
        SolverConfig {
            schedule: Schedule::Constant(5e-5),
            momentum: 0.9,
            nesterov: true,
            ..SolverConfig::new(k, UpdateRule::Mu)
        }
    }

    pub fn constraint(&self) -> Constraint {
        self.rule.constraint()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.shards == 0 {
            return Err(Error::config("shards must be at least 1"));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(self.shards) {
            return Err(Error::config(format!(
                "{} shards must evenly divide batch size {}",
                self.shards, self.batch_size
            )));
        }
        let eta = self.schedule.base();
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("learning rate must be non-negative, got {eta}")));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0,1), got {}", self.momentum)));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if self.riemannian_projection && self.constraint() == Constraint::UnitBall {
            return Err(Error::config(
                "tangent projection needs unit-sphere iterates; GHA runs in the unit ball",
            ));
        }
        Ok(())
    }
}

/// Momentum buffers, one column per player.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    momentum: Mat,
}

impl OptState {
    pub fn zeros(d: usize, k: usize) -> Self {
        OptState {
            momentum: Mat::zeros(d, k),
        }
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.momentum.col(i)
    }

    pub fn set_column(&mut self, i: usize, v: &[f64]) -> Result<()> {
        self.momentum.set_col(i, v)
    }
}

/// `k` seeded standard-normal columns, each normalized to unit length.
pub fn init_state(d: usize, k: usize, seed: u64, constraint: Constraint) -> Result<EigenState> {
    if k > d {
        return Err(Error::config(format!("cannot fit {k} eigenvectors in dimension {d}")));
    }
    let mut rng = rng::stream(seed, rng::streams::INIT);
    let mut cols = Vec::with_capacity(k);
    while cols.len() < k {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(v) = linalg::normalized(&g) {
            cols.push(v);
        }
    }
    let vectors = if k == 0 {
        Mat::zeros(d, 0)
    } else {
        Mat::from_cols(&cols)?
    };
    EigenState::new(vectors, constraint)
}

/// Size-weighted mean `Σₘ (nₘ / Σn) gₘ`, reduced in shard order.
pub fn aggregate_shards(dirs: &[Vec<f64>], sizes: &[usize]) -> Result<Vec<f64>> {
    if dirs.is_empty() || dirs.len() != sizes.len() {
        return Err(Error::shape(format!(
            "{} directions with {} shard sizes",
            dirs.len(),
            sizes.len()
        )));
    }
    let len = dirs[0].len();
    if dirs.iter().any(|d| d.len() != len) {
        return Err(Error::shape("shard directions differ in length"));
    }
    if sizes.contains(&0) {
        return Err(Error::shape("shard with zero samples"));
    }
    let total: usize = sizes.iter().sum();
    let mut out = vec![0.0; len];
    for (dir, &size) in dirs.iter().zip(sizes) {
        axpy(size as f64 / total as f64, dir, &mut out);
    }
    Ok(out)
}

/// One optimizer step for a single player: optional tangent projection,
/// (Nesterov) momentum, then retraction to the sphere or projection into the
/// unit ball.
pub fn apply_update(
    v: &[f64],
    dir: &[f64],
    eta: f64,
    momentum_buf: &mut [f64],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let grad = if config.riemannian_projection {
        tangent_project(v, dir)?
    } else {
        dir.to_vec()
    };
    let step = if config.momentum > 0.0 {
        for (b, g) in momentum_buf.iter_mut().zip(&grad) {
            *b = g + config.momentum * *b;
        }
        if config.nesterov {
            grad.iter()
                .zip(momentum_buf.iter())
                .map(|(g, b)| g + config.momentum * b)
                .collect()
        } else {
            momentum_buf.to_vec()
        }
    } else {
        grad
    };
    let z: Vec<f64> = step.iter().map(|s| eta * s).collect();
    match config.constraint() {
        Constraint::UnitSphere => retract(v, &z),
        Constraint::UnitBall => {
            let mut moved: Vec<f64> = v.iter().zip(&z).map(|(a, b)| a + b).collect();
            let n = norm(&moved);
            if n > 1.0 {
                moved.iter_mut().for_each(|x| *x /= n);
            }
            Ok(moved)
        }
    }
}

/// Where minibatches come from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// Full-batch updates on an explicit covariance.
    Covariance(&'a Mat),
    Samples(&'a Dataset),
}

impl Source<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Source::Covariance(s) => s.cols(),
            Source::Samples(ds) => ds.dim(),
        }
    }
}

/// Runs the solver from a seeded initialization; see the module docs.
pub fn run(config: &SolverConfig, source: Source<'_>, truth: Option<&SymEig>) -> Result<(EigenState, MetricTrace)> {
    config.validate()?;
    let init = init_state(source.dim(), config.k, config.seed, config.constraint())?;
    run_from(config, source, truth, init)
}

/// As [`run`], starting from the given state.
pub fn run_from(
    config: &SolverConfig,
    source: Source<'_>,
    truth: Option<&SymEig>,
    mut state: EigenState,
) -> Result<(EigenState, MetricTrace)> {
    config.validate()?;
    let (d, k) = (state.dim(), state.k());
    if d != source.dim() {
        return Err(Error::shape(format!(
            "data has dimension {}, state has {d}",
            source.dim()
        )));
    }
    if let Source::Covariance(s) = source {
        CovView::sigma(s)?;
    }
    let truth_vectors = match truth {
        Some(t) if t.eigenvectors.rows() != d || t.eigenvectors.cols() < k || t.dim() < k => {
            return Err(Error::shape("ground truth does not match the data dimension"))
        }
        Some(t) => {
            metrics::warn_if_degenerate(&t.eigenvalues, k);
            Some(t.top(k))
        }
        None => None,
    };

    let mut opt = OptState::zeros(d, k);
    let mut sampler = SamplerState::new(config.seed);
    let mut trace = MetricTrace::default();
    let mut skipped = 0;
    let started = Instant::now();

    for t in 1..=config.steps {
        let snapshot = state.clone();
        let batch = match source {
            Source::Covariance(_) => None,
            Source::Samples(ds) => Some(sample_batch(ds, config.batch_size, &mut sampler)?),
        };
        let shard_dirs = shard_directions(config, source, batch.as_ref(), &snapshot)?;
        let eta = step_size(config.schedule, t);

        let sizes: Vec<usize> = shard_dirs.iter().map(|(_, n)| *n).collect();
        let mut per_player: Vec<Vec<Result<Vec<f64>>>> =
            (0..k).map(|_| Vec::with_capacity(sizes.len())).collect();
        for (dirs, _) in shard_dirs {
            for (i, dir) in dirs.into_iter().enumerate() {
                per_player[i].push(dir);
            }
        }

        for (i, results) in per_player.into_iter().enumerate() {
            let dirs = match results.into_iter().collect::<Result<Vec<_>>>() {
                Ok(dirs) => dirs,
                Err(Error::SingularPenalty { parent, value }) => {
                    log::debug!("iteration {t}: skipping player {i}, parent {parent} denominator {value:e}");
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let dir = aggregate_shards(&dirs, &sizes)?;
            let v = snapshot.vector(i);
            let mut buf = opt.column(i);
            let next = apply_update(&v, &dir, eta, &mut buf, config)?;
            opt.set_column(i, &buf)?;
            state.set_vector(i, &next)?;
        }
        state.check()?;

        if t % config.eval_every == 0 || t == config.steps {
            let view = match (&batch, source) {
                (Some(b), _) => CovView::Batch(b),
                (None, Source::Covariance(s)) => CovView::Sigma(s),
                (None, Source::Samples(_)) => unreachable!("samples always produce a batch"),
            };
            trace.rows.push(evaluate(
                config.rule,
                view,
                &state,
                truth_vectors.as_ref(),
                t,
                started.elapsed().as_secs_f64() * 1e3,
                skipped,
            )?);
            skipped = 0;
        }
    }
    Ok((state, trace))
}

type ShardResult = (Vec<Result<Vec<f64>>>, usize);

fn shard_directions(
    config: &SolverConfig,
    source: Source<'_>,
    batch: Option<&Mat>,
    snapshot: &EigenState,
) -> Result<Vec<ShardResult>> {
    let k = snapshot.k();
    let directions = |view: CovView<'_>| -> Result<Vec<Result<Vec<f64>>>> {
        let products = CovProducts::compute(view, snapshot, k)?;
        Ok((0..k).map(|i| products.direction(config.rule, snapshot, i)).collect())
    };
    match (source, batch) {
        (Source::Covariance(s), _) => Ok(vec![(directions(CovView::Sigma(s))?, 1)]),
        (Source::Samples(_), Some(batch)) => {
            let per_shard = batch.rows() / config.shards;
            let blocks: Vec<Mat> = (0..config.shards)
                .map(|m| batch.row_block(m * per_shard, (m + 1) * per_shard))
                .collect();
            blocks
                .par_iter()
                .map(|block| Ok((directions(CovView::Batch(block))?, block.rows())))
                .collect()
        }
        (Source::Samples(_), None) => Err(Error::shape("sample source without a batch")),
    }
}

fn evaluate(
    rule: UpdateRule,
    view: CovView<'_>,
    state: &EigenState,
    truth: Option<&Mat>,
    iteration: usize,
    wall_ms: f64,
    skipped_players: usize,
) -> Result<MetricRow> {
    let k = state.k();
    let products = CovProducts::compute(view, state, k)?;
    let utilities = (0..k)
        .map(|i| {
            let u = match rule {
                UpdateRule::Alpha => products.alpha_utility(i),
                _ => products.mu_utility(state, i),
            };
            u.unwrap_or(f64::NAN)
        })
        .collect();
    let (streak, subspace_distance) = match truth {
        Some(t) if k > 0 => {
            let streak = metrics::longest_streak(state.vectors(), t, STREAK_THRESHOLD).ok();
            let dist = match metrics::subspace_distance(state.vectors(), t) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("iteration {iteration}: subspace distance unavailable: {e}");
                    None
                }
            };
            (streak, dist)
        }
        Some(_) => (Some(0), Some(0.0)),
        None => (None, None),
    };
    Ok(MetricRow {
        iteration,
        wall_ms,
        streak,
        subspace_distance,
        utilities,
        skipped_players,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_size_examples() {
        assert_eq!(step_size(Schedule::Constant(0.1), 7), 0.1);
        assert_eq!(step_size(Schedule::InverseT(1.0), 1), 1.0);
        assert_eq!(step_size(Schedule::InverseT(0.5), 4), 0.125);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_shards(&[vec![1.0, 2.0]], &[5]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            aggregate_shards(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[4, 4]).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            aggregate_shards(&[vec![4.0, 0.0], vec![0.0, 4.0]], &[3, 1]).unwrap(),
            vec![3.0, 1.0]
        );
        assert!(aggregate_shards(&[vec![1.0], vec![1.0, 2.0]], &[1, 1]).is_err());
        assert!(aggregate_shards(&[], &[]).is_err());
    }

    fn plain(rule: UpdateRule) -> SolverConfig {
        SolverConfig::new(1, rule)
    }

    #[test]
    fn apply_update_examples() {
        let config = plain(UpdateRule::Mu);
        let mut buf = vec![0.0, 0.0];
        assert_eq!(apply_update(&[1.0, 0.0], &[5.0, -3.0], 0.0, &mut buf, &config).unwrap(), vec![1.0, 0.0]);

        let v = [0.6, 0.8];
        let dir = [0.3, -2.0];
        let got = apply_update(&v, &dir, 0.25, &mut buf, &config).unwrap();
        assert_eq!(got, retract(&v, &[0.075, -0.5]).unwrap());

        let h = 0.5f64.sqrt();
        let got = apply_update(&[1.0, 0.0], &[0.0, 1.0], 1.0, &mut buf, &config).unwrap();
        assert!((got[0] - h).abs() < 1e-15 && (got[1] - h).abs() < 1e-15);
    }

    #[test]
    fn apply_update_projection_and_ball() {
        let mut config = plain(UpdateRule::Mu);
        config.riemannian_projection = true;
        let mut buf = vec![0.0, 0.0];
        // Radial component is removed before stepping.
        let got = apply_update(&[1.0, 0.0], &[7.0, 1.0], 1.0, &mut buf, &config).unwrap();
        let h = 0.5f64.sqrt();
        assert!((got[0] - h).abs() < 1e-15 && (got[1] - h).abs() < 1e-15);

        let gha = plain(UpdateRule::Gha);
        let inside = apply_update(&[0.5, 0.0], &[0.0, 0.5], 1.0, &mut buf, &gha).unwrap();
        assert_eq!(inside, vec![0.5, 0.5]);
        let clipped = apply_update(&[1.0, 0.0], &[0.0, 1.0], 1.0, &mut buf, &gha).unwrap();
        assert!((norm(&clipped) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_update_momentum() {
        let mut config = plain(UpdateRule::Mu);
        config.momentum = 0.5;
        let mut buf = vec![0.0, 0.0];
        let dir = [0.0, 1.0];
        // Heavy ball: buffers 1 then 1.5.
        apply_update(&[1.0, 0.0], &dir, 0.1, &mut buf, &config).unwrap();
        assert_eq!(buf, vec![0.0, 1.0]);
        let got = apply_update(&[1.0, 0.0], &dir, 0.1, &mut buf, &config).unwrap();
        assert_eq!(buf, vec![0.0, 1.5]);
        close(&got, &retract(&[1.0, 0.0], &[0.0, 0.15]).unwrap());

        config.nesterov = true;
        let mut buf = vec![0.0, 0.0];
        // Nesterov: step = g + μ(g + μ·0) = 1.5 on the first call.
        let got = apply_update(&[1.0, 0.0], &dir, 0.1, &mut buf, &config).unwrap();
        close(&got, &retract(&[1.0, 0.0], &[0.0, 0.15]).unwrap());
    }

    fn close(a: &[f64], b: &[f64]) {
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15), "{a:?} vs {b:?}");
    }

    #[test]
    fn config_validation() {
        let mut c = plain(UpdateRule::Mu);
        c.steps = 0;
        assert!(c.validate().is_err());
        let mut c = plain(UpdateRule::Mu);
        c.batch_size = 10;
        c.shards = 4;
        assert!(c.validate().is_err());
        let mut c = plain(UpdateRule::Mu);
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let mut c = plain(UpdateRule::Gha);
        c.riemannian_projection = true;
        assert!(c.validate().is_err());
        let mut c = plain(UpdateRule::Mu);
        c.schedule = Schedule::Constant(-1.0);
        assert!(c.validate().is_err());
        let p = SolverConfig::large_scale_profile(4);
        assert!(p.validate().is_ok());
        assert_eq!(p.momentum, 0.9);
    }

    #[test]
    fn init_state_examples() {
        let s = init_state(7, 3, 1, Constraint::UnitSphere).unwrap();
        for i in 0..3 {
            assert!((norm(&s.vector(i)) - 1.0).abs() <= 1e-12);
        }
        assert_eq!(s, init_state(7, 3, 1, Constraint::UnitSphere).unwrap());
        assert!(init_state(2, 3, 1, Constraint::UnitSphere).is_err());
        for seed in 0..1000 {
            let s = init_state(2, 1, seed, Constraint::UnitSphere).unwrap();
            assert!(s.vector(0)[0] != 0.0);
        }
    }

    #[test]
    fn zero_rate_single_step_keeps_initialization() {
        let sigma = Mat::from_diag(&[3.0, 2.0, 1.0]);
        let mut config = SolverConfig::new(2, UpdateRule::Mu);
        config.steps = 1;
        config.schedule = Schedule::Constant(0.0);
        let (state, trace) = run(&config, Source::Covariance(&sigma), None).unwrap();
        assert_eq!(state, init_state(3, 2, config.seed, Constraint::UnitSphere).unwrap());
        assert_eq!(trace.rows.len(), 1);
        config.steps = 0;
        assert!(run(&config, Source::Covariance(&sigma), None).is_err());
    }

    #[test]
    fn small_full_batch_run_converges() {
        let sigma = Mat::from_diag(&[3.0, 2.0, 1.0]);
        let truth = linalg::jacobi_eigh(&sigma).unwrap();
        let mut config = SolverConfig::new(3, UpdateRule::Mu);
        config.steps = 500;
        config.schedule = Schedule::Constant(0.1);
        config.seed = 3;
        let (_, trace) = run(&config, Source::Covariance(&sigma), Some(&truth)).unwrap();
        let last = trace.last().unwrap();
        assert_eq!(last.iteration, 500);
        assert_eq!(last.streak, Some(3));
        assert!(last.subspace_distance.unwrap() < 1e-3);
    }
}
