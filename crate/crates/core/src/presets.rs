//! The reference Stag-Hunt experiment: `stag_hunt(5,1,4,3)` with uniform
//! measurement noise of size 0.02, `epsilon = nu = 0.06`, `lambda = 0.04`,
//! `h = 0.04`, `c = 10` and neighborhood radius 0.05.

use crate::dynamics::{LearnerParams, Mode, NuRule};
use crate::game::{stag_hunt, GameSpec, NoiseModel};

pub const REFERENCE_NOISE: f64 = 0.02;
pub const REFERENCE_DELTA: f64 = 0.05;

pub fn reference_game() -> GameSpec {
    stag_hunt(5.0, 1.0, 4.0, 3.0)
        .and_then(|g| g.with_noise(NoiseModel::uniform(REFERENCE_NOISE)))
        .expect("reference game is valid")
}

pub fn reference_params(mode: Mode) -> LearnerParams {
    LearnerParams {
        epsilon: 0.06,
        lambda: 0.04,
        nu_rule: NuRule::Identity,
        h: 0.04,
        c: 10.0,
        mode,
        seed: 0,
    }
}
