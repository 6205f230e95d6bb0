//! Finite strategic-form games with strictly positive utilities and bounded
//! measurement noise.
//!
//! Utilities are stored densely, one flat array per player. The flat index of
//! a joint action profile `(a_1, ..., a_n)` is player-1-fastest:
//!
//! ```text
//! index = a_1 + |A_1| * (a_2 + |A_2| * (a_3 + ...))
//! ```
//!
//! so for a 2x2 game the order is `(A,A), (B,A), (A,B), (B,B)`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{LearnerParams, Mode};
use crate::error::{Error, Result};

/// A joint action, one action index per player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionProfile(pub Vec<usize>);

impl ActionProfile {
    pub fn new(actions: Vec<usize>) -> Self {
        ActionProfile(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for ActionProfile {
    fn from(v: Vec<usize>) -> Self {
        ActionProfile(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on `[-bound, bound]`.
    #[default]
    Uniform,
    /// Symmetric triangular on `[-bound, bound]` (mean of two uniforms).
    Triangular,
}

/// Bounded additive measurement noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub bound: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            bound: 0.0,
            distribution: NoiseDistribution::Uniform,
        }
    }

    pub fn uniform(bound: f64) -> Self {
        NoiseModel {
            bound,
            distribution: NoiseDistribution::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound.is_finite() && self.bound >= 0.0) {
            return Err(Error::Argument(format!(
                "noise bound must be finite and non-negative, got {}",
                self.bound
            )));
        }
        Ok(())
    }

    /// Draws one noise sample. A zero bound consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.bound;
        if b == 0.0 {
            return 0.0;
        }
        match self.distribution {
            NoiseDistribution::Uniform => rng.random_range(-b..=b),
            NoiseDistribution::Triangular => {
                let a: f64 = rng.random_range(-b..=b);
                let c: f64 = rng.random_range(-b..=b);
                0.5 * (a + c)
            }
        }
    }
}

/// A finite game with strictly positive utilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameFile", into = "GameFile")]
pub struct GameSpec {
    action_counts: Vec<usize>,
    utilities: Vec<Vec<f64>>,
    labels: Vec<Vec<String>>,
    noise: NoiseModel,
}

/// On-disk game definition.
///
/// `utilities[i]` is player `i`'s flat utility array in player-1-fastest
/// order (see the module docs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub players: usize,
    pub action_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Vec<String>>>,
    pub utilities: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl TryFrom<GameFile> for GameSpec {
    type Error = Error;

    fn try_from(f: GameFile) -> Result<Self> {
        if f.players != f.action_counts.len() {
            return Err(Error::Argument(format!(
                "players = {} but {} action counts given",
                f.players,
                f.action_counts.len()
            )));
        }
        let mut game = GameSpec::new(f.action_counts, f.utilities)?;
        if let Some(labels) = f.labels {
            game = game.with_labels(labels)?;
        }
        game.with_noise(f.noise)
    }
}

impl From<GameSpec> for GameFile {
    fn from(g: GameSpec) -> Self {
        GameFile {
            players: g.action_counts.len(),
            action_counts: g.action_counts,
            labels: Some(g.labels),
            utilities: g.utilities,
            noise: g.noise,
        }
    }
}

fn default_label(j: usize) -> String {
    if j < 26 {
        char::from(b'A' + j as u8).to_string()
    } else {
        format!("a{j}")
    }
}

impl GameSpec {
    /// Builds a noise-free game.
    pub fn new(action_counts: Vec<usize>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        if action_counts.is_empty() {
            return Err(Error::Argument("a game needs at least one player".into()));
        }
        if let Some(i) = action_counts.iter().position(|&k| k == 0) {
            return Err(Error::Argument(format!("player {i} has no actions")));
        }
        let size = action_counts
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .ok_or_else(|| Error::Argument("joint action space too large".into()))?;
        if utilities.len() != action_counts.len() {
            return Err(Error::Argument(format!(
                "expected {} utility tensors, got {}",
                action_counts.len(),
                utilities.len()
            )));
        }
        for (i, u) in utilities.iter().enumerate() {
            if u.len() != size {
                return Err(Error::Argument(format!(
                    "player {i}: utility tensor has {} entries, expected {size}",
                    u.len()
                )));
            }
            if let Some(v) = u.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Argument(format!(
                    "player {i}: utilities must be strictly positive, found {v}"
                )));
            }
        }
        let labels = action_counts
            .iter()
            .map(|&k| (0..k).map(default_label).collect())
            .collect();
        Ok(GameSpec {
            action_counts,
            utilities,
            labels,
            noise: NoiseModel::none(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.len() != self.action_counts.len()
            || labels
                .iter()
                .zip(&self.action_counts)
                .any(|(l, &k)| l.len() != k)
        {
            return Err(Error::Argument(
                "labels must name every action of every player".into(),
            ));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Number of joint action profiles.
    pub fn num_profiles(&self) -> usize {
        self.action_counts.iter().product()
    }

    /// Player `i`'s flat utility array.
    pub fn utility_table(&self, player: usize) -> &[f64] {
        &self.utilities[player]
    }

    pub fn check_profile(&self, profile: &ActionProfile) -> Result<()> {
        if profile.len() != self.num_players() {
            return Err(Error::Argument(format!(
                "profile has {} actions, game has {} players",
                profile.len(),
                self.num_players()
            )));
        }
        for (i, (&a, &k)) in profile.0.iter().zip(&self.action_counts).enumerate() {
            if a >= k {
                return Err(Error::Argument(format!(
                    "player {i}: action {a} out of range (has {k} actions)"
                )));
            }
        }
        Ok(())
    }

    /// Flat index of a profile. The profile must be valid.
    pub(crate) fn index_unchecked(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.action_counts)
            .rev()
            .fold(0, |acc, (&a, &k)| acc * k + a)
    }

    pub fn profile_index(&self, profile: &ActionProfile) -> Result<usize> {
        self.check_profile(profile)?;
        Ok(self.index_unchecked(&profile.0))
    }

    pub fn profile_at(&self, mut index: usize) -> Result<ActionProfile> {
        if index >= self.num_profiles() {
            return Err(Error::Argument(format!(
                "profile index {index} out of range"
            )));
        }
        let actions = self
            .action_counts
            .iter()
            .map(|&k| {
                let a = index % k;
                index /= k;
                a
            })
            .collect();
        Ok(ActionProfile(actions))
    }

    /// All profiles in flat-index order.
    pub fn profiles(&self) -> impl Iterator<Item = ActionProfile> + '_ {
        (0..self.num_profiles()).map(|i| self.profile_at(i).expect("index in range"))
    }

    /// Nominal (noise-free) utility `u_i(profile)`.
    pub fn utility(&self, player: usize, profile: &ActionProfile) -> Result<f64> {
        if player >= self.num_players() {
            return Err(Error::Argument(format!("player {player} out of range")));
        }
        let idx = self.profile_index(profile)?;
        Ok(self.utilities[player][idx])
    }

    /// Noisy measurement `u_i(profile) + v` with `v` drawn from `noise`.
    pub fn measure_utility<R: Rng + ?Sized>(
        &self,
        player: usize,
        profile: &ActionProfile,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<f64> {
        Ok(self.utility(player, profile)? + noise.sample(rng))
    }

    pub fn min_utility(&self, player: usize) -> f64 {
        self.utilities[player]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_utility(&self, player: usize) -> f64 {
        self.utilities[player]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Human-readable profile name such as `"A,B"`.
    pub fn profile_label(&self, profile: &ActionProfile) -> String {
        profile
            .0
            .iter()
            .zip(&self.labels)
            .map(|(&a, l)| l[a].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Two-player, two-action game from the two payoff matrices written
/// row-player first: `rows[a1][a2] = (u_1, u_2)`.
fn bimatrix(rows: [[(f64, f64); 2]; 2]) -> Result<GameSpec> {
    let mut u1 = vec![0.0; 4];
    let mut u2 = vec![0.0; 4];
    for (a1, row) in rows.iter().enumerate() {
        for (a2, &(p, q)) in row.iter().enumerate() {
            u1[a1 + 2 * a2] = p;
            u2[a1 + 2 * a2] = q;
        }
    }
    GameSpec::new(vec![2, 2], vec![u1, u2])
}

/// Symmetric Stag-Hunt: `u_1(A,A)=a`, `u_1(A,B)=b`, `u_1(B,B)=c`,
/// `u_1(B,A)=d`, and `u_2(a_1,a_2) = u_1(a_2,a_1)`.
pub fn stag_hunt(a: f64, b: f64, c: f64, d: f64) -> Result<GameSpec> {
    bimatrix([[(a, a), (b, d)], [(d, b), (c, c)]])
}

/// Looks up a named example game.
///
/// Accepted names: `stag_hunt` (defaults to `stag_hunt(5,1,4,3)`),
/// `stag_hunt(a,b,c,d)`, `typewriter` and `prisoners_dilemma`.
pub fn builtin(name: &str) -> Result<GameSpec> {
    let name = name.trim();
    match name {
        "stag_hunt" => return stag_hunt(5.0, 1.0, 4.0, 3.0),
        "typewriter" => return bimatrix([[(3.0, 3.0), (1.0, 1.0)], [(1.0, 1.0), (2.0, 2.0)]]),
        "prisoners_dilemma" => {
            return bimatrix([[(3.0, 3.0), (1.0, 4.0)], [(4.0, 1.0), (2.0, 2.0)]])
        }
        _ => {}
    }
    if let Some(args) = name
        .strip_prefix("stag_hunt(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let vals = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Argument(format!("bad stag_hunt parameters '{args}': {e}")))?;
        if let [a, b, c, d] = vals[..] {
            return stag_hunt(a, b, c, d);
        }
        return Err(Error::Argument(format!(
            "stag_hunt takes 4 parameters, got {}",
            vals.len()
        )));
    }
    Err(Error::Argument(format!("unknown game '{name}'")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

/// Outcome of [`validate_hypotheses`]; failures are carried, not raised.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            writeln!(f, "[{tag}] {:<20} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Checks the standing hypotheses on `(game, params)` that keep every
/// measured utility in `(h, 1/epsilon)` almost surely, plus `delta > bound`
/// when a neighborhood radius is given.
pub fn validate_hypotheses(
    game: &GameSpec,
    params: &LearnerParams,
    delta: Option<f64>,
) -> ValidationReport {
    let noise = game.noise().bound;
    let n = game.num_players();
    let max_u = (0..n).map(|i| game.max_utility(i)).fold(f64::NEG_INFINITY, f64::max);
    let min_u = (0..n).map(|i| game.min_utility(i)).fold(f64::INFINITY, f64::min);
    let mut checks = Vec::new();

    checks.push(match params.validate() {
        Ok(()) => Check {
            name: "parameters",
            status: CheckStatus::Pass,
            detail: "epsilon > 0, lambda in [0,1], c >= 0, h > 0".into(),
        },
        Err(e) => Check {
            name: "parameters",
            status: CheckStatus::Fail,
            detail: e.to_string(),
        },
    });

    let worst = params.epsilon * (max_u + noise);
    checks.push(Check {
        name: "step_size",
        status: status(worst < 1.0),
        detail: format!(
            "epsilon*(max u + noise) = {}*({max_u} + {noise}) = {worst} < 1",
            params.epsilon
        ),
    });

    let floor = min_u - noise;
    checks.push(Check {
        name: "positivity",
        status: status(floor > 0.0),
        detail: format!("min u - noise = {min_u} - {noise} = {floor} > 0"),
    });

    checks.push(match params.mode {
        Mode::Apla => Check {
            name: "aspiration_floor",
            status: status(params.h < floor),
            detail: format!("h = {} < min u - noise = {floor}", params.h),
        },
        Mode::Pla => Check {
            name: "aspiration_floor",
            status: CheckStatus::Skipped,
            detail: "h is unused in PLA mode".into(),
        },
    });

    let rate = params.aspiration_rate();
    checks.push(Check {
        name: "aspiration_rate",
        status: status(rate > 0.0 && rate < 1.0),
        detail: format!("epsilon*nu(epsilon) = {rate} in (0,1)"),
    });

    checks.push(Check {
        name: "timescale",
        status: status(params.nu_rule.is_slower_timescale()),
        detail: format!(
            "nu rule {:?}: epsilon*nu(epsilon)/epsilon -> 0 as epsilon -> 0",
            params.nu_rule
        ),
    });

    checks.push(match delta {
        Some(d) => Check {
            name: "neighborhood_radius",
            status: status(d > noise),
            detail: format!("delta = {d} > noise bound = {noise}"),
        },
        None => Check {
            name: "neighborhood_radius",
            status: CheckStatus::Skipped,
            detail: "no delta supplied".into(),
        },
    });

    ValidationReport { checks }
}
