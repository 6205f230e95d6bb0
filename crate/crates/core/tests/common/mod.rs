#![allow(dead_code)]

use apla_lab::dynamics::{LearnerParams, SimState};
use apla_lab::game::{ActionProfile, GameSpec};
use rand::Rng;

/// Strategies strictly inside the simplex, aspirations in the utility range
/// and a uniformly drawn current profile.
pub fn random_interior_state<R: Rng>(game: &GameSpec, rng: &mut R) -> SimState {
    let n = game.num_players();
    let strategies = game
        .action_counts()
        .iter()
        .map(|&k| {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let aspirations = (0..n)
        .map(|i| rng.random_range(game.min_utility(i)..=game.max_utility(i)))
        .collect();
    let profile = ActionProfile(
        game.action_counts()
            .iter()
            .map(|&k| rng.random_range(0..k))
            .collect(),
    );
    SimState::new(game, profile, strategies, aspirations).unwrap()
}

/// `k` actions, utilities in `[lo, hi]`.
pub fn random_game<R: Rng>(rng: &mut R, counts: Vec<usize>, lo: f64, hi: f64) -> GameSpec {
    let m: usize = counts.iter().product();
    let n = counts.len();
    let utilities = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    GameSpec::new(counts, utilities).unwrap()
}

/// Largest `epsilon` allowed by the step-size hypothesis, scaled by `frac`.
pub fn epsilon_for(game: &GameSpec, frac: f64) -> f64 {
    let b = game.noise().bound;
    let max_u = (0..game.num_players())
        .map(|i| game.max_utility(i))
        .fold(f64::NEG_INFINITY, f64::max);
    frac / (max_u + b)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn params_with(epsilon: f64, lambda: f64, h: f64, c: f64, pla: bool, seed: u64) -> LearnerParams {
    LearnerParams {
        epsilon,
        lambda,
        nu_rule: Default::default(),
        h,
        c,
        mode: if pla {
            apla_lab::dynamics::Mode::Pla
        } else {
            apla_lab::dynamics::Mode::Apla
        },
        seed,
    }
}
