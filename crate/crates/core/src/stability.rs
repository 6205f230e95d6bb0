//! Monte-Carlo construction of the finite chain over pure strategy states,
//! its stationary distribution, and long-run occupancy of the perturbed
//! process.
//!
//! A row of the chain is estimated by starting at a pure strategy state,
//! letting exactly one uniformly chosen agent tremble for one step, and then
//! running the unperturbed process (`lambda = 0`) until it is absorbed near
//! some pure strategy state or `t_max` steps elapse. Absorption means the
//! state is in the open `delta`-neighborhood of that vertex and every agent's
//! largest strategy entry is at least `1 - delta`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify, enumerate_pss, PureStrategyState};
use crate::dynamics::{apply_profile, sample_action, step, LearnerParams, SimState};
use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec};
use crate::rng::{derive_seed, SimRng};
use crate::stats::{mean, standard_error};

const ROW_TAG: u64 = 0x5048_4154; // "PHAT"
const OCCUPANCY_TAG: u64 = 0x4f43_4355; // "OCCU"
const SWEEP_TAG: u64 = 0x5357_4550; // "SWEP"

/// Power iteration stops once successive iterates differ by less than this
/// in L1.
pub const POWER_TOLERANCE: f64 = 1e-12;
/// A stationary vector is accepted when `|pi P - pi|_1` is below this.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 10_000_000;

/// Knobs for estimating the chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub delta: f64,
    pub n_samples: usize,
    pub t_max: u64,
    /// Largest tolerated fraction of runs per row that are not absorbed by
    /// `t_max`.
    pub max_unresolved: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            delta: 0.05,
            n_samples: 10_000,
            t_max: 10_000,
            max_unresolved: 0.01,
        }
    }
}

/// Estimated transition matrix over pure strategy states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalChain {
    pub labels: Vec<String>,
    #[serde(skip)]
    pub states: Vec<PureStrategyState>,
    pub matrix: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    pub samples_per_row: usize,
    pub delta: f64,
    pub t_max: u64,
    pub seed: u64,
    pub unresolved_fraction: Vec<f64>,
}

impl EmpiricalChain {
    /// Wraps a given row-stochastic matrix (states are labeled `s0, s1, ...`).
    pub fn from_matrix(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Argument(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Argument(format!("row {i} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Argument(format!("row {i} sums to {sum}")));
            }
        }
        Ok(EmpiricalChain {
            labels: (0..n).map(|i| format!("s{i}")).collect(),
            states: Vec::new(),
            counts: Vec::new(),
            samples_per_row: 0,
            delta: 0.0,
            t_max: 0,
            seed: 0,
            unresolved_fraction: vec![0.0; n],
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

/// Tally of one estimated row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowEstimate {
    pub counts: Vec<u64>,
    pub unresolved: u64,
}

impl RowEstimate {
    pub fn resolved(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn unresolved_fraction(&self) -> f64 {
        let total = self.resolved() + self.unresolved;
        if total == 0 {
            0.0
        } else {
            self.unresolved as f64 / total as f64
        }
    }

    /// Empirical frequencies over resolved runs.
    pub fn probabilities(&self) -> Vec<f64> {
        let resolved = self.resolved() as f64;
        self.counts.iter().map(|&c| c as f64 / resolved).collect()
    }
}

/// One step in which exactly one agent, chosen uniformly, plays a uniformly
/// random action while every other agent repeats its vertex action.
pub fn tremble_once(
    pss: &PureStrategyState,
    game: &GameSpec,
    params: &LearnerParams,
    rng: &mut SimRng,
) -> Result<SimState> {
    let n = game.num_players();
    let trembler = rng.shared().random_range(0..n);
    let mut state = pss.to_state(game);
    let actions = (0..n)
        .map(|i| {
            if i == trembler {
                Ok(rng.agent(i).random_range(0..game.action_counts()[i]))
            } else {
                sample_action(&state.strategies[i], 0.0, rng.agent(i))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    apply_profile(&mut state, &ActionProfile(actions), game, params, rng)?;
    Ok(state)
}

fn check_delta(game: &GameSpec, delta: f64) -> Result<()> {
    let bound = game.noise().bound;
    if !(delta > bound) {
        return Err(Error::Argument(format!(
            "delta = {delta} must exceed the noise bound {bound}"
        )));
    }
    Ok(())
}

/// Runs one tremble followed by the unperturbed process; returns the index
/// of the absorbing state, or `None` if `t_max` steps pass first.
fn absorb_after_tremble(
    from: &PureStrategyState,
    game: &GameSpec,
    states: &[PureStrategyState],
    params: &LearnerParams,
    settings: &ChainSettings,
    seed: u64,
) -> Result<Option<usize>> {
    let mut rng = SimRng::new(seed, game.num_players());
    let mut state = tremble_once(from, game, params, &mut rng)?;
    if let Some(j) = classify(&state, game, states, settings.delta) {
        return Ok(Some(j));
    }
    for _ in 0..settings.t_max {
        step(&mut state, game, params, &mut rng)?;
        if let Some(j) = classify(&state, game, states, settings.delta) {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Tallies where `n_samples` tremble-then-relax runs from `pss` end up.
/// Runs are seeded from `params.seed`, the row index and the sample index, so
/// the result does not depend on thread scheduling.
pub fn estimate_row_counts(
    pss: &PureStrategyState,
    game: &GameSpec,
    params: &LearnerParams,
    settings: &ChainSettings,
) -> Result<RowEstimate> {
    check_delta(game, settings.delta)?;
    if settings.n_samples == 0 {
        return Err(Error::Argument("n_samples must be positive".into()));
    }
    let states = enumerate_pss(game);
    let unperturbed = params.with_lambda(0.0);
    let outcomes = (0..settings.n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(params.seed, &[ROW_TAG, pss.index as u64, k]);
            absorb_after_tremble(pss, game, &states, &unperturbed, settings, seed)
        })
        .collect::<Vec<_>>();
    let mut counts = vec![0u64; states.len()];
    let mut unresolved = 0;
    for o in first_error(outcomes)? {
        match o {
            Some(j) => counts[j] += 1,
            None => unresolved += 1,
        }
    }
    Ok(RowEstimate { counts, unresolved })
}

fn check_row_quality(pss: &PureStrategyState, row: &RowEstimate, settings: &ChainSettings) -> Result<()> {
    let frac = row.unresolved_fraction();
    if row.resolved() == 0 || frac > settings.max_unresolved {
        return Err(Error::EstimationQuality(format!(
            "row {}: {:.2}% of runs not absorbed within t_max = {} (limit {:.2}%); increase t_max",
            pss.label,
            100.0 * frac,
            settings.t_max,
            100.0 * settings.max_unresolved
        )));
    }
    Ok(())
}

/// Estimated transition probabilities out of `pss`, with its unresolved
/// fraction.
pub fn estimate_phat_row(
    pss: &PureStrategyState,
    game: &GameSpec,
    params: &LearnerParams,
    settings: &ChainSettings,
) -> Result<(Vec<f64>, f64)> {
    let row = estimate_row_counts(pss, game, params, settings)?;
    check_row_quality(pss, &row, settings)?;
    Ok((row.probabilities(), row.unresolved_fraction()))
}

/// Estimates every row of the chain.
pub fn estimate_phat(game: &GameSpec, params: &LearnerParams, settings: &ChainSettings) -> Result<EmpiricalChain> {
    check_delta(game, settings.delta)?;
    let states = enumerate_pss(game);
    let rows = first_error(
        states
            .par_iter()
            .map(|s| estimate_row_counts(s, game, params, settings))
            .collect(),
    )?;
    for (s, row) in states.iter().zip(&rows) {
        check_row_quality(s, row, settings)?;
    }
    Ok(EmpiricalChain {
        labels: states.iter().map(|s| s.label.clone()).collect(),
        matrix: rows.iter().map(RowEstimate::probabilities).collect(),
        unresolved_fraction: rows.iter().map(RowEstimate::unresolved_fraction).collect(),
        counts: rows.into_iter().map(|r| r.counts).collect(),
        states,
        samples_per_row: settings.n_samples,
        delta: settings.delta,
        t_max: settings.t_max,
        seed: params.seed,
    })
}

/// Communicating classes of the positive-entry pattern, and which of them
/// are closed (no positive transition leaves the class).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassStructure {
    pub classes: Vec<Vec<usize>>,
    pub closed: Vec<bool>,
}

impl ClassStructure {
    pub fn closed_classes(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.classes.iter().zip(&self.closed).filter(|(_, &c)| c).map(|(c, _)| c)
    }

    pub fn is_irreducible(&self) -> bool {
        self.classes.len() == 1
    }
}

pub fn class_structure(matrix: &[Vec<f64>]) -> ClassStructure {
    let n = matrix.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for (j, &p) in matrix[i].iter().enumerate() {
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if class_of[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (i..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &members {
            class_of[j] = classes.len();
        }
        classes.push(members);
    }
    let closed = classes
        .iter()
        .enumerate()
        .map(|(c, members)| {
            members
                .iter()
                .all(|&i| (0..n).all(|j| matrix[i][j] <= 0.0 || class_of[j] == c))
        })
        .collect();
    ClassStructure { classes, closed }
}

/// `|pi P - pi|_1`.
pub fn residual(matrix: &[Vec<f64>], pi: &[f64]) -> f64 {
    let n = matrix.len();
    (0..n)
        .map(|j| {
            let next: f64 = (0..n).map(|i| pi[i] * matrix[i][j]).sum();
            (next - pi[j]).abs()
        })
        .sum()
}

/// Power iteration on the lazy chain `(I + P)/2`, which has the same
/// stationary vectors as `P` and is aperiodic. Returns `None` if the L1
/// change does not drop below `tolerance` within `max_iterations`.
pub fn power_iteration(matrix: &[Vec<f64>], tolerance: f64, max_iterations: usize) -> Option<Vec<f64>> {
    let n = matrix.len();
    if n == 0 {
        return None;
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iterations {
        next.iter_mut().zip(&pi).for_each(|(v, p)| *v = 0.5 * p);
        for (i, row) in matrix.iter().enumerate() {
            let w = 0.5 * pi[i];
            for (v, p) in next.iter_mut().zip(row) {
                *v += w * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < tolerance {
            return Some(pi);
        }
    }
    None
}

/// Solves `pi (P - I) = 0` with one balance equation replaced by
/// `sum(pi) = 1`.
pub fn direct_solve(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::Argument("empty chain".into()));
    }
    let mut a = DMatrix::from_fn(n, n, |r, c| matrix[c][r] - if r == c { 1.0 } else { 0.0 });
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::EstimationQuality("balance equations are singular".into()))?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    PowerIteration,
    DirectSolve,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub residual: f64,
    pub method: StationaryMethod,
}

/// Unique stationary distribution of the chain.
///
/// The stationary vector is unique exactly when the positive-entry pattern
/// has a single closed communicating class; transient states get weight
/// zero. Several closed classes are reported as [`Error::ReducibleChain`].
pub fn stationary(chain: &EmpiricalChain) -> Result<StationaryDistribution> {
    let matrix = &chain.matrix;
    if matrix.is_empty() {
        return Err(Error::Argument("empty chain".into()));
    }
    let structure = class_structure(matrix);
    let closed: Vec<&Vec<usize>> = structure.closed_classes().collect();
    if closed.len() != 1 {
        let name = |c: &Vec<usize>| c.iter().map(|&i| chain.labels[i].clone()).collect::<Vec<_>>();
        return Err(Error::ReducibleChain {
            closed: closed.into_iter().map(name).collect(),
            classes: structure.classes.iter().map(name).collect(),
        });
    }
    let (weights, method) = match power_iteration(matrix, POWER_TOLERANCE, POWER_MAX_ITERATIONS) {
        Some(pi) if residual(matrix, &pi) < RESIDUAL_TOLERANCE => (pi, StationaryMethod::PowerIteration),
        _ => (direct_solve(matrix)?, StationaryMethod::DirectSolve),
    };
    let mut weights = weights;
    let keep = closed[0];
    for (i, w) in weights.iter_mut().enumerate() {
        if !keep.contains(&i) {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(StationaryDistribution {
        labels: chain.labels.clone(),
        residual: residual(matrix, &weights),
        weights,
        method,
    })
}

/// `(1/2) sum |p_i - q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Argument(format!(
            "distributions of different length ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Long-run fraction of time spent absorbed near each pure strategy state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyEstimate {
    pub labels: Vec<String>,
    pub fractions: Vec<f64>,
    pub unclassified: f64,
    pub horizon: u64,
    pub burn_in: u64,
    pub lambda: f64,
    pub delta: f64,
    pub seed: u64,
}

impl OccupancyEstimate {
    /// Occupancy renormalized over the classified time, or `None` if the
    /// process never entered any neighborhood.
    pub fn conditioned(&self) -> Option<Vec<f64>> {
        let mass: f64 = self.fractions.iter().sum();
        (mass > 0.0).then(|| self.fractions.iter().map(|f| f / mass).collect())
    }
}

/// Runs the perturbed process for `burn_in + horizon` steps from the default
/// initial state and records, after every post-burn-in step, which
/// absorption region (if any) contains the state.
pub fn estimate_occupancy(
    game: &GameSpec,
    params: &LearnerParams,
    horizon: u64,
    burn_in: u64,
    delta: f64,
) -> Result<OccupancyEstimate> {
    if !(params.lambda > 0.0) {
        return Err(Error::Argument("occupancy needs lambda > 0".into()));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    check_delta(game, delta)?;
    let states = enumerate_pss(game);
    let mut rng = SimRng::new(params.seed, game.num_players());
    let mut state = SimState::initial(game, params, &mut rng)?;
    for _ in 0..burn_in {
        step(&mut state, game, params, &mut rng)?;
    }
    let mut counts = vec![0u64; states.len()];
    let mut outside = 0u64;
    for _ in 0..horizon {
        step(&mut state, game, params, &mut rng)?;
        match classify(&state, game, &states, delta) {
            Some(j) => counts[j] += 1,
            None => outside += 1,
        }
    }
    let h = horizon as f64;
    Ok(OccupancyEstimate {
        labels: states.iter().map(|s| s.label.clone()).collect(),
        fractions: counts.iter().map(|&c| c as f64 / h).collect(),
        unclassified: outside as f64 / h,
        horizon,
        burn_in,
        lambda: params.lambda,
        delta,
        seed: params.seed,
    })
}

/// Independent occupancy replicas; replica `r` is seeded from
/// `params.seed` and `r`.
pub fn estimate_occupancy_replicas(
    game: &GameSpec,
    params: &LearnerParams,
    horizon: u64,
    burn_in: u64,
    delta: f64,
    replicas: usize,
) -> Result<Vec<OccupancyEstimate>> {
    first_error(
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let p = params.with_seed(derive_seed(params.seed, &[OCCUPANCY_TAG, r]));
                estimate_occupancy(game, &p, horizon, burn_in, delta)
            })
            .collect(),
    )
}

/// Distance between a conditioned occupancy and `pi`; an occupancy with no
/// classified time counts as maximally distant.
pub fn occupancy_distance(occ: &OccupancyEstimate, pi: &[f64]) -> Result<f64> {
    match occ.conditioned() {
        Some(c) => total_variation(&c, pi),
        None => Ok(1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Replica-mean total-variation distance to the stationary vector.
    pub tv: f64,
    pub tv_se: f64,
    pub unclassified: f64,
    pub replicas: usize,
}

/// For each `lambda`, the replica-averaged distance between the conditioned
/// occupancy and the chain's stationary distribution. All `lambda` values
/// share the same replica seeds.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lambda(
    game: &GameSpec,
    params: &LearnerParams,
    lambdas: &[f64],
    horizon: u64,
    burn_in: u64,
    delta: f64,
    chain: &EmpiricalChain,
    replicas: usize,
) -> Result<Vec<SweepRow>> {
    if replicas == 0 {
        return Err(Error::Argument("replicas must be positive".into()));
    }
    let pi = stationary(chain)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let runs = first_error(
                (0..replicas as u64)
                    .into_par_iter()
                    .map(|r| {
                        let p = LearnerParams {
                            lambda,
                            seed: derive_seed(params.seed, &[SWEEP_TAG, r]),
                            ..params.clone()
                        };
                        estimate_occupancy(game, &p, horizon, burn_in, delta)
                    })
                    .collect(),
            )?;
            let tvs = runs
                .iter()
                .map(|o| occupancy_distance(o, &pi.weights))
                .collect::<Result<Vec<_>>>()?;
            let unclassified: Vec<f64> = runs.iter().map(|o| o.unclassified).collect();
            Ok(SweepRow {
                lambda,
                tv: mean(&tvs),
                tv_se: standard_error(&tvs),
                unclassified: mean(&unclassified),
                replicas,
            })
        })
        .collect()
}
