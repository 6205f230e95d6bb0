//! Pure strategy states, their neighborhoods, and the closed-form behavior of
//! the dynamics when one action profile is played forever.

use serde::Serialize;

use crate::dynamics::{aspiration_factor, LearnerParams, Mode, SimState};
use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec};

/// A vertex state: every agent plays its action of `profile` with
/// probability one and aspires to exactly its nominal utility there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PureStrategyState {
    pub index: usize,
    pub label: String,
    pub profile: ActionProfile,
    pub aspirations: Vec<f64>,
}

impl PureStrategyState {
    pub fn new(game: &GameSpec, profile: ActionProfile) -> Result<Self> {
        let index = game.profile_index(&profile)?;
        let aspirations = (0..game.num_players())
            .map(|i| game.utility_table(i)[index])
            .collect();
        Ok(PureStrategyState {
            index,
            label: game.profile_label(&profile),
            profile,
            aspirations,
        })
    }

    /// Vertex strategies `e_{alpha_i}`.
    pub fn strategies(&self, game: &GameSpec) -> Vec<Vec<f64>> {
        self.profile
            .0
            .iter()
            .zip(game.action_counts())
            .map(|(&a, &k)| {
                let mut e = vec![0.0; k];
                e[a] = 1.0;
                e
            })
            .collect()
    }

    /// The process state sitting exactly at this vertex.
    pub fn to_state(&self, game: &GameSpec) -> SimState {
        SimState {
            profile: self.profile.clone(),
            strategies: self.strategies(game),
            aspirations: self.aspirations.clone(),
            last_noise: vec![0.0; game.num_players()],
            step_count: 0,
        }
    }
}

/// All pure strategy states in flat profile order.
pub fn enumerate_pss(game: &GameSpec) -> Vec<PureStrategyState> {
    game.profiles()
        .map(|p| PureStrategyState::new(game, p).expect("enumerated profile is valid"))
        .collect()
}

/// Euclidean distances `(|x - x*|, |rho - rho*|)` over the concatenated
/// per-agent blocks, where `x*` is the vertex of `profile`.
fn block_distances(state: &SimState, profile: &[usize], aspirations: &[f64]) -> (f64, f64) {
    let dx2: f64 = state
        .strategies
        .iter()
        .zip(profile)
        .flat_map(|(x, &a)| {
            x.iter()
                .enumerate()
                .map(move |(j, &v)| if j == a { (1.0 - v).powi(2) } else { v * v })
        })
        .sum();
    let dr2: f64 = state
        .aspirations
        .iter()
        .zip(aspirations)
        .map(|(r, s)| (r - s).powi(2))
        .sum();
    (dx2.sqrt(), dr2.sqrt())
}

/// Whether `state` lies in the open `delta`-neighborhood of `pss`.
pub fn in_neighborhood(state: &SimState, pss: &PureStrategyState, delta: f64) -> bool {
    if state.profile != pss.profile {
        return false;
    }
    let (dx, dr) = block_distances(state, &pss.profile.0, &pss.aspirations);
    dx < delta && dr < delta
}

/// Neighborhood membership plus every agent's top strategy entry being at
/// least `1 - delta`. Used as the absorption test when truncating runs of the
/// unperturbed process and when classifying occupancy.
pub fn is_absorbed(state: &SimState, pss: &PureStrategyState, delta: f64) -> bool {
    in_neighborhood(state, pss, delta)
        && state
            .strategies
            .iter()
            .all(|x| x.iter().copied().fold(0.0, f64::max) >= 1.0 - delta)
}

/// Index of the pure strategy state whose absorption region contains
/// `state`, if any. `states` must be [`enumerate_pss`] of `game`.
pub fn classify(state: &SimState, game: &GameSpec, states: &[PureStrategyState], delta: f64) -> Option<usize> {
    let idx = game.index_unchecked(state.profile.actions());
    is_absorbed(state, &states[idx], delta).then_some(idx)
}

/// The pure strategy state sharing the current profile, and the combined
/// distance `sqrt(|x - x*|^2 + |rho - rho*|^2)` to it.
pub fn nearest_pss(state: &SimState, game: &GameSpec) -> Result<(PureStrategyState, f64)> {
    let pss = PureStrategyState::new(game, state.profile.clone())?;
    let (dx, dr) = block_distances(state, &pss.profile.0, &pss.aspirations);
    Ok((pss, dx.hypot(dr)))
}

/// Inputs of the constant-action closed form for one agent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormInputs {
    /// Initial probability `x_ij(0)` of the action being played.
    pub x0: f64,
    /// Initial aspiration `rho_i(0)`.
    pub rho0: f64,
    /// Nominal utility `u_i(alpha)` of the constant profile.
    pub utility: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub h: f64,
    pub c: f64,
    pub mode: Mode,
}

impl ClosedFormInputs {
    pub fn new(params: &LearnerParams, utility: f64, x0: f64, rho0: f64) -> Self {
        ClosedFormInputs {
            x0,
            rho0,
            utility,
            epsilon: params.epsilon,
            nu: params.nu(),
            h: params.h,
            c: params.c,
            mode: params.mode,
        }
    }

    /// Contraction factor `H = 1 - epsilon * phi(measured, measured - rho)`.
    pub fn contraction(&self, measured: f64, rho: f64) -> f64 {
        let phi = match self.mode {
            Mode::Apla => aspiration_factor(measured, measured - rho, self.h, self.c),
            Mode::Pla => measured,
        };
        1.0 - self.epsilon * phi
    }

    /// `X = 1 - epsilon * nu`.
    pub fn x_rate(&self) -> f64 {
        1.0 - self.epsilon * self.nu
    }

    /// `Y = 1 + epsilon * nu`.
    pub fn y_rate(&self) -> f64 {
        1.0 + self.epsilon * self.nu
    }

    /// `u_i(alpha) - rho_i(0)`.
    pub fn delta_u(&self) -> f64 {
        self.utility - self.rho0
    }
}

fn measurement(inputs: &ClosedFormInputs, measured: Option<&[f64]>, k: usize) -> f64 {
    measured.map_or(inputs.utility, |m| m[k])
}

/// `x_ij(t) = 1 - (1 - x_ij(0)) * prod_{k<t} H(rho(k))` for a profile played
/// at every step. `rho_path[k]` is the aspiration before step `k`;
/// `measured`, when given, supplies the noisy measurement at step `k`
/// (otherwise the nominal utility is used).
pub fn closed_form_strategy(
    inputs: &ClosedFormInputs,
    rho_path: &[f64],
    measured: Option<&[f64]>,
    t: i64,
) -> Result<f64> {
    if t < 0 {
        return Err(Error::Argument(format!("t must be non-negative, got {t}")));
    }
    let t = t as usize;
    if t == 0 {
        return Ok(inputs.x0);
    }
    if rho_path.len() < t || measured.is_some_and(|m| m.len() < t) {
        return Err(Error::Argument(format!("paths shorter than t = {t}")));
    }
    let prod: f64 = (0..t)
        .map(|k| inputs.contraction(measurement(inputs, measured, k), rho_path[k]))
        .product();
    Ok(1.0 - (1.0 - inputs.x0) * prod)
}

/// [`closed_form_strategy`] for every `t` in `0..=rho_path.len()`, sharing
/// the running product.
pub fn closed_form_path(inputs: &ClosedFormInputs, rho_path: &[f64], measured: Option<&[f64]>) -> Vec<f64> {
    let mut prod = 1.0;
    let mut out = Vec::with_capacity(rho_path.len() + 1);
    out.push(inputs.x0);
    for (k, &rho) in rho_path.iter().enumerate() {
        prod *= inputs.contraction(measurement(inputs, measured, k), rho);
        out.push(1.0 - (1.0 - inputs.x0) * prod);
    }
    out
}

/// Almost-sure bounds on `rho_i(t) - u_i(alpha)` under a constant profile:
/// `lower = v - X^t du - Y^t v`, `upper = -v - X^t du + Y^t v`.
pub fn aspiration_envelope(delta_u: f64, noise_bound: f64, epsilon: f64, nu: f64, t: u64) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::Argument("envelope is defined for t > 0".into()));
    }
    let t = i32::try_from(t).map_err(|_| Error::Argument("t too large".into()))?;
    let xt = (1.0 - epsilon * nu).powi(t);
    let yt = (1.0 + epsilon * nu).powi(t);
    Ok((
        noise_bound - xt * delta_u - yt * noise_bound,
        -noise_bound - xt * delta_u + yt * noise_bound,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{apply_profile, NuRule};
    use crate::game::{builtin, NoiseModel};
    use crate::rng::SimRng;

    fn sh() -> GameSpec {
        builtin("stag_hunt").unwrap()
    }

    fn params() -> LearnerParams {
        LearnerParams {
            epsilon: 0.06,
            lambda: 0.0,
            nu_rule: NuRule::Identity,
            h: 0.04,
            c: 10.0,
            mode: Mode::Apla,
            seed: 0,
        }
    }

    #[test]
    fn enumeration() {
        let states = enumerate_pss(&sh());
        assert_eq!(states.len(), 4);
        assert_eq!(states[0].label, "A,A");
        assert_eq!(states[0].aspirations, vec![5.0, 5.0]);
        assert_eq!(states[3].label, "B,B");
        assert_eq!(states[1].profile.0, vec![1, 0]);

        let three = crate::game::GameSpec::new(vec![2, 2, 2], vec![vec![1.0; 8]; 3]).unwrap();
        assert_eq!(enumerate_pss(&three).len(), 8);
    }

    #[test]
    fn neighborhood_membership() {
        let g = sh();
        let states = enumerate_pss(&g);
        let s = states[0].to_state(&g);
        assert!(in_neighborhood(&s, &states[0], 1e-9));
        assert!(!in_neighborhood(&s, &states[3], 100.0));

        // |x - x*| exactly delta is excluded.
        let mut t = s.clone();
        t.strategies[0] = vec![0.75, 0.25];
        let delta = (2.0f64 * 0.25 * 0.25).sqrt();
        assert!(!in_neighborhood(&t, &states[0], delta));
        assert!(in_neighborhood(&t, &states[0], delta * (1.0 + 1e-9)));

        t.aspirations = vec![5.0, 4.9];
        assert!(!in_neighborhood(&t, &states[0], 0.1));
    }

    #[test]
    fn each_pss_lies_in_exactly_one_neighborhood() {
        let g = sh();
        let states = enumerate_pss(&g);
        for s in &states {
            let st = s.to_state(&g);
            let hits = states.iter().filter(|o| in_neighborhood(&st, o, 0.5)).count();
            assert_eq!(hits, 1);
            assert_eq!(classify(&st, &g, &states, 0.05), Some(s.index));
        }
    }

    #[test]
    fn absorption_requires_top_entry() {
        let g = crate::game::GameSpec::new(vec![3], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let states = enumerate_pss(&g);
        let mut st = states[0].to_state(&g);
        st.strategies[0] = vec![0.9, 0.05, 0.05];
        assert!(in_neighborhood(&st, &states[0], 0.2));
        assert!(!is_absorbed(&st, &states[0], 0.09));
    }

    #[test]
    fn nearest_examples() {
        let g = sh();
        let states = enumerate_pss(&g);
        let (p, d) = nearest_pss(&states[2].to_state(&g), &g).unwrap();
        assert_eq!(p, states[2]);
        assert_eq!(d, 0.0);

        let mut st = states[0].to_state(&g);
        st.strategies = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let (_, d) = nearest_pss(&st, &g).unwrap();
        assert!((d - (2.0f64 * 0.25 * 2.0).sqrt()).abs() < 1e-15);

        st.aspirations[0] += 1e-6;
        let (_, d2) = nearest_pss(&st, &g).unwrap();
        assert!((d2 - d).abs() < 1e-6);
    }

    #[test]
    fn closed_form_at_zero_and_errors() {
        let inputs = ClosedFormInputs::new(&params(), 5.0, 0.3, 5.0);
        assert_eq!(closed_form_strategy(&inputs, &[], None, 0).unwrap(), 0.3);
        assert!(closed_form_strategy(&inputs, &[], None, -1).is_err());
        assert!(closed_form_strategy(&inputs, &[5.0], None, 2).is_err());
    }

    #[test]
    fn geometric_case() {
        // rho == u keeps phi = u, so x(t) = 1 - (1 - x0)(1 - eps u)^t.
        let p = params();
        let inputs = ClosedFormInputs::new(&p, 4.0, 0.2, 4.0);
        let rho = vec![4.0; 50];
        let path = closed_form_path(&inputs, &rho, None);
        let mut x = 0.2;
        for (t, v) in path.iter().enumerate() {
            let geo = 1.0 - 0.8 * (1.0 - 0.06 * 4.0f64).powi(t as i32);
            assert!((v - geo).abs() < 1e-14);
            assert!((v - x).abs() < 1e-14);
            x += 0.06 * (1.0 - x) * 4.0;
        }
        assert_eq!(closed_form_strategy(&inputs, &rho, None, 50).unwrap(), path[50]);
    }

    #[test]
    fn closed_form_matches_forced_dynamics() {
        let g = sh().with_noise(NoiseModel::uniform(0.02)).unwrap();
        let p = params();
        let profile = ActionProfile(vec![0, 1]);
        let mut state = SimState::new(&g, profile.clone(), vec![vec![0.1, 0.9], vec![0.6, 0.4]], vec![4.5, 0.5]).unwrap();
        let mut rng = SimRng::new(11, 2);
        let (mut rho, mut meas, mut xs) = (vec![], vec![], vec![state.strategies[0][0]]);
        for _ in 0..3000 {
            rho.push(state.aspirations[0]);
            apply_profile(&mut state, &profile, &g, &p, &mut rng).unwrap();
            meas.push(state.measured_utilities(&g)[0]);
            xs.push(state.strategies[0][0]);
        }
        let inputs = ClosedFormInputs::new(&p, 1.0, 0.1, 4.5);
        let path = closed_form_path(&inputs, &rho, Some(&meas));
        for (a, b) in path.iter().zip(&xs) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn envelope_collapses_without_noise() {
        let (lo, hi) = aspiration_envelope(2.0, 0.0, 0.06, 0.06, 10).unwrap();
        let expect = -(1.0f64 - 0.0036).powi(10) * 2.0;
        assert!((lo - expect).abs() < 1e-15 && (hi - expect).abs() < 1e-15);
        let (lo, hi) = aspiration_envelope(2.0, 0.0, 0.06, 0.06, 20_000).unwrap();
        assert!(lo.abs() < 1e-25 && hi.abs() < 1e-25);
        assert!(aspiration_envelope(2.0, 0.02, 0.06, 0.06, 0).is_err());
    }

    #[test]
    fn noise_free_constant_action_is_monotone() {
        let g = sh();
        let p = params();
        let profile = ActionProfile(vec![1, 0]);
        let mut state = SimState::new(&g, profile.clone(), vec![vec![0.9, 0.1], vec![0.5, 0.5]], vec![5.0, 5.0]).unwrap();
        let mut rng = SimRng::new(0, 2);
        let mut prev = state.strategies[0][1];
        for _ in 0..20_000 {
            apply_profile(&mut state, &profile, &g, &p, &mut rng).unwrap();
            let cur = state.strategies[0][1];
            assert!(cur >= prev);
            prev = cur;
        }
        assert!(prev > 1.0 - 1e-9);
    }
}
