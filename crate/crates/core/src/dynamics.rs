//! One synchronous iteration of the learning dynamics for all agents, and
//! whole trajectories.
//!
//! Per step every agent
//! 1. picks an action from its strategy, or uniformly with probability
//!    `lambda` (a tremble);
//! 2. receives a noisy measurement of its utility at the joint profile;
//! 3. reinforces the chosen action by `epsilon * phi`, where `phi` is the
//!    aspiration factor (APLA) or the measurement itself (PLA);
//! 4. moves its aspiration level toward the measurement at rate
//!    `epsilon * nu(epsilon)`.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec};
use crate::rng::SimRng;

/// Renormalize a strategy when its sum drifts further than this from 1.
const RENORM_TOLERANCE: f64 = 1e-15;
/// Input strategies must sum to 1 within this tolerance.
const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Aspiration-scaled reinforcement.
    #[default]
    Apla,
    /// Reinforcement proportional to the measured utility.
    Pla,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "apla" => Ok(Mode::Apla),
            "pla" => Ok(Mode::Pla),
            other => Err(Error::Argument(format!("unknown mode '{other}'"))),
        }
    }
}

/// Rule producing the aspiration timescale factor `nu(epsilon)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum NuRule {
    /// `nu(epsilon) = epsilon`.
    #[default]
    Identity,
    /// `nu(epsilon) = epsilon^exponent`.
    Power { exponent: f64 },
    /// A fixed `nu`, independent of `epsilon`.
    Constant { value: f64 },
}

impl NuRule {
    pub fn nu(&self, epsilon: f64) -> f64 {
        match *self {
            NuRule::Identity => epsilon,
            NuRule::Power { exponent } => epsilon.powf(exponent),
            NuRule::Constant { value } => value,
        }
    }

    /// Whether `nu(epsilon) -> 0` as `epsilon -> 0`, i.e. aspirations move on
    /// a slower timescale than strategies.
    pub fn is_slower_timescale(&self) -> bool {
        match *self {
            NuRule::Identity => true,
            NuRule::Power { exponent } => exponent > 0.0,
            NuRule::Constant { .. } => false,
        }
    }
}

/// Full parameterization of the learning dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(default)]
    pub nu_rule: NuRule,
    pub h: f64,
    pub c: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerParams {
    pub fn nu(&self) -> f64 {
        self.nu_rule.nu(self.epsilon)
    }

    /// Aspiration step size `epsilon * nu(epsilon)`.
    pub fn aspiration_rate(&self) -> f64 {
        self.epsilon * self.nu()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        LearnerParams { lambda, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        LearnerParams { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!("lambda must be in [0,1], got {}", self.lambda)));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::Parameter(format!("c must be >= 0, got {}", self.c)));
        }
        if self.mode == Mode::Apla && !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Parameter(format!("h must be > 0, got {}", self.h)));
        }
        let rate = self.aspiration_rate();
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon*nu(epsilon) must lie in (0,1), got {rate}"
            )));
        }
        Ok(())
    }
}

/// State `(alpha, x, rho)` of all agents, plus the last noise draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub profile: ActionProfile,
    pub strategies: Vec<Vec<f64>>,
    pub aspirations: Vec<f64>,
    /// Noise realization of the most recent evaluation (diagnostic only).
    pub last_noise: Vec<f64>,
    pub step_count: u64,
}

impl SimState {
    /// Builds a state after checking shapes and simplex membership.
    pub fn new(
        game: &GameSpec,
        profile: ActionProfile,
        strategies: Vec<Vec<f64>>,
        aspirations: Vec<f64>,
    ) -> Result<Self> {
        game.check_profile(&profile)?;
        let n = game.num_players();
        if strategies.len() != n || aspirations.len() != n {
            return Err(Error::Argument(format!("state must describe {n} agents")));
        }
        for (x, &k) in strategies.iter().zip(game.action_counts()) {
            if x.len() != k {
                return Err(Error::Argument("strategy length mismatch".into()));
            }
            check_simplex(x)?;
        }
        Ok(SimState {
            profile,
            strategies,
            aspirations,
            last_noise: vec![0.0; n],
            step_count: 0,
        })
    }

    /// Uniform strategies; the first profile is sampled (with trembles) and
    /// each aspiration starts at that profile's measured utility.
    pub fn initial(game: &GameSpec, params: &LearnerParams, rng: &mut SimRng) -> Result<Self> {
        let strategies: Vec<Vec<f64>> = game
            .action_counts()
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        let actions = strategies
            .iter()
            .enumerate()
            .map(|(i, x)| sample_action(x, params.lambda, rng.agent(i)))
            .collect::<Result<Vec<_>>>()?;
        let profile = ActionProfile(actions);
        let idx = game.index_unchecked(profile.actions());
        let noise = game.noise();
        let last_noise: Vec<f64> = (0..game.num_players())
            .map(|i| noise.sample(rng.agent(i)))
            .collect();
        let aspirations = last_noise
            .iter()
            .enumerate()
            .map(|(i, v)| game.utility_table(i)[idx] + v)
            .collect();
        Ok(SimState {
            profile,
            strategies,
            aspirations,
            last_noise,
            step_count: 0,
        })
    }

    /// Measured utilities `u_i(alpha) + v_i` of the last evaluation.
    pub fn measured_utilities(&self, game: &GameSpec) -> Vec<f64> {
        let idx = game.index_unchecked(self.profile.actions());
        self.last_noise
            .iter()
            .enumerate()
            .map(|(i, v)| game.utility_table(i)[idx] + v)
            .collect()
    }
}

fn check_simplex(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Argument("empty strategy".into()));
    }
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Argument(format!("strategy {x:?} has a negative entry")));
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Argument(format!("strategy {x:?} sums to {sum}")));
    }
    Ok(())
}

/// Draws an action: uniformly with probability `lambda`, otherwise from
/// `strategy`. The effective law is `(1-lambda) x + lambda/|A|`.
///
/// Sampling from the strategy uses one uniform draw against cumulative sums;
/// floating-point slack in the last bucket goes to the last action with
/// positive probability.
pub fn sample_action<R: Rng + ?Sized>(strategy: &[f64], lambda: f64, rng: &mut R) -> Result<usize> {
    check_simplex(strategy)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Argument(format!("lambda must be in [0,1], got {lambda}")));
    }
    if lambda > 0.0 && rng.random::<f64>() < lambda {
        return Ok(rng.random_range(0..strategy.len()));
    }
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, &p) in strategy.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = j;
            if u < cum {
                return Ok(j);
            }
        }
    }
    Ok(last_positive)
}

/// Aspiration factor: the measurement itself when satisfied (`gap >= 0`),
/// otherwise `max(h, measured + c * gap)`.
pub fn aspiration_factor(measured: f64, gap: f64, h: f64, c: f64) -> f64 {
    if gap >= 0.0 {
        measured
    } else {
        h.max(measured + c * gap)
    }
}

/// In-place `x <- x + epsilon * (e_chosen - x) * phi`.
pub fn update_strategy_in_place(x: &mut [f64], chosen: usize, phi: f64, epsilon: f64) -> Result<()> {
    let rate = epsilon * phi;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!(
            "epsilon*phi = {rate} must lie in [0,1) to stay on the simplex"
        )));
    }
    if chosen >= x.len() {
        return Err(Error::Argument(format!("action {chosen} out of range")));
    }
    for (j, v) in x.iter_mut().enumerate() {
        let target = if j == chosen { 1.0 } else { 0.0 };
        *v += rate * (target - *v);
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOLERANCE {
        x.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Reinforces `chosen` in `strategy` by `epsilon * phi`.
pub fn strategy_update(strategy: &[f64], chosen: usize, phi: f64, epsilon: f64) -> Result<Vec<f64>> {
    check_simplex(strategy)?;
    let mut x = strategy.to_vec();
    update_strategy_in_place(&mut x, chosen, phi, epsilon)?;
    Ok(x)
}

/// `rho + epsilon * nu * (measured - rho)`.
pub fn aspiration_update(rho: f64, measured: f64, epsilon: f64, nu: f64) -> f64 {
    rho + epsilon * nu * (measured - rho)
}

/// Evaluates `profile` with fresh noise and applies the strategy and
/// aspiration updates for every agent.
pub fn apply_profile(
    state: &mut SimState,
    profile: &ActionProfile,
    game: &GameSpec,
    params: &LearnerParams,
    rng: &mut SimRng,
) -> Result<()> {
    game.check_profile(profile)?;
    let idx = game.index_unchecked(profile.actions());
    let noise = game.noise();
    let rate = params.aspiration_rate();
    for i in 0..game.num_players() {
        let v = noise.sample(rng.agent(i));
        let measured = game.utility_table(i)[idx] + v;
        let rho = state.aspirations[i];
        let phi = match params.mode {
            Mode::Apla => aspiration_factor(measured, measured - rho, params.h, params.c),
            Mode::Pla => measured,
        };
        update_strategy_in_place(&mut state.strategies[i], profile.0[i], phi, params.epsilon)?;
        state.aspirations[i] = rho + rate * (measured - rho);
        state.last_noise[i] = v;
    }
    state.profile.0.clone_from(&profile.0);
    state.step_count += 1;
    Ok(())
}

/// One synchronous iteration for all agents.
pub fn step(state: &mut SimState, game: &GameSpec, params: &LearnerParams, rng: &mut SimRng) -> Result<()> {
    let actions = state
        .strategies
        .iter()
        .enumerate()
        .map(|(i, x)| sample_action(x, params.lambda, rng.agent(i)))
        .collect::<Result<Vec<_>>>()?;
    apply_profile(state, &ActionProfile(actions), game, params, rng)
}

/// Which parts of the state a trajectory keeps, and how often.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recorder {
    pub stride: u64,
    pub actions: bool,
    pub strategies: bool,
    pub aspirations: bool,
}

impl Default for Recorder {
    fn default() -> Self {
        Recorder {
            stride: 1,
            actions: true,
            strategies: true,
            aspirations: true,
        }
    }
}

impl Recorder {
    pub fn every(stride: u64) -> Self {
        Recorder {
            stride: stride.max(1),
            ..Recorder::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub t: u64,
    pub profile: Option<ActionProfile>,
    pub strategies: Option<Vec<Vec<f64>>>,
    pub aspirations: Option<Vec<f64>>,
    pub measured: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn snapshot(state: &SimState, game: &GameSpec, rec: &Recorder) -> Record {
    Record {
        t: state.step_count,
        profile: rec.actions.then(|| state.profile.clone()),
        strategies: rec.strategies.then(|| state.strategies.clone()),
        aspirations: rec.aspirations.then(|| state.aspirations.clone()),
        measured: state.measured_utilities(game),
    }
}

/// Applies [`step`] `horizon` times, recording the initial state and every
/// state whose step count is a multiple of the stride.
pub fn run(
    initial: &SimState,
    game: &GameSpec,
    params: &LearnerParams,
    horizon: u64,
    recorder: &Recorder,
    rng: &mut SimRng,
) -> Result<(Trajectory, SimState)> {
    let stride = recorder.stride.max(1);
    let mut state = initial.clone();
    let mut traj = Trajectory {
        records: vec![snapshot(&state, game, recorder)],
    };
    for _ in 0..horizon {
        step(&mut state, game, params, rng)?;
        if state.step_count.is_multiple_of(stride) {
            traj.records.push(snapshot(&state, game, recorder));
        }
    }
    Ok((traj, state))
}

/// Runs from the default initial state with streams seeded by `params.seed`.
pub fn simulate(
    game: &GameSpec,
    params: &LearnerParams,
    horizon: u64,
    recorder: &Recorder,
) -> Result<Trajectory> {
    let mut rng = SimRng::new(params.seed, game.num_players());
    let init = SimState::initial(game, params, &mut rng)?;
    Ok(run(&init, game, params, horizon, recorder, &mut rng)?.0)
}

/// Writes `t,agent,action,x_0..x_k,rho,u_measured`, one row per agent per
/// record. Columns not recorded are left empty; `x_j` beyond an agent's
/// action count is empty too.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, game: &GameSpec, out: &mut W) -> io::Result<()> {
    let width = game.action_counts().iter().copied().max().unwrap_or(1);
    let xs: Vec<String> = (0..width).map(|j| format!("x_{j}")).collect();
    writeln!(out, "t,agent,action,{},rho,u_measured", xs.join(","))?;
    for r in &traj.records {
        for i in 0..game.num_players() {
            let action = r
                .profile
                .as_ref()
                .map(|p| p.0[i].to_string())
                .unwrap_or_default();
            let x: Vec<String> = (0..width)
                .map(|j| {
                    r.strategies
                        .as_ref()
                        .and_then(|s| s[i].get(j))
                        .map(|v| v.to_string())
                        .unwrap_or_default()
                })
                .collect();
            let rho = r
                .aspirations
                .as_ref()
                .map(|a| a[i].to_string())
                .unwrap_or_default();
            writeln!(out, "{},{i},{action},{},{rho},{}", r.t, x.join(","), r.measured[i])?;
        }
    }
    Ok(())
}
