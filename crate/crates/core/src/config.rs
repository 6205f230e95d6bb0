//! Experiment configuration: one JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{LearnerParams, Mode, NuRule};
use crate::error::{Error, Result};
use crate::game::{builtin, GameSpec, NoiseModel};
use crate::presets;
use crate::stability::ChainSettings;

/// Where the game comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    /// A named example game, e.g. `"stag_hunt"` or `"stag_hunt(5,1,4,3)"`.
    Builtin(String),
    /// Path to a game definition file.
    File(PathBuf),
    Inline(GameSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(default)]
    pub nu_rule: NuRule,
    pub h: f64,
    pub c: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ParamsBlock {
    pub fn to_params(&self) -> LearnerParams {
        LearnerParams {
            epsilon: self.epsilon,
            lambda: self.lambda,
            nu_rule: self.nu_rule,
            h: self.h,
            c: self.c,
            mode: self.mode,
            seed: self.seed.unwrap_or(0),
        }
    }
}

/// Settings for the constant-action comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormBlock {
    /// Profile played at every step; defaults to the first profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<usize>>,
    /// Initial probability of each agent's played action.
    pub x0: f64,
    /// Initial aspirations; default to each agent's smallest utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Vec<f64>>,
    pub steps: u64,
}

impl Default for ClosedFormBlock {
    fn default() -> Self {
        ClosedFormBlock {
            profile: None,
            x0: 0.5,
            rho0: None,
            steps: 1000,
        }
    }
}

fn default_delta() -> f64 {
    presets::REFERENCE_DELTA
}
fn default_horizon() -> u64 {
    200_000
}
fn default_burn_in() -> u64 {
    20_000
}
fn default_samples() -> usize {
    10_000
}
fn default_t_max() -> u64 {
    10_000
}
fn default_max_unresolved() -> f64 {
    0.01
}
fn default_lambdas() -> Vec<f64> {
    vec![0.08, 0.04, 0.02, 0.01]
}
fn default_replicas() -> usize {
    10
}
fn default_stride() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSource,
    /// Overrides the noise model of the game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub params: ParamsBlock,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_t_max")]
    pub t_max: u64,
    #[serde(default = "default_max_unresolved")]
    pub max_unresolved: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Independent runs averaged by `occupancy` and `sweep`.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Trajectory record stride for `simulate`.
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default)]
    pub closedform: ClosedFormBlock,
    /// Chain file written by `phat`, reused by `sweep` instead of
    /// re-estimating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub allow_unvalidated: bool,
}

impl Default for ExperimentConfig {
    /// The reference Stag-Hunt APLA experiment.
    fn default() -> Self {
        let p = presets::reference_params(Mode::Apla);
        ExperimentConfig {
            game: GameSource::Builtin("stag_hunt".into()),
            noise: Some(NoiseModel::uniform(presets::REFERENCE_NOISE)),
            params: ParamsBlock {
                epsilon: p.epsilon,
                lambda: p.lambda,
                nu_rule: p.nu_rule,
                h: p.h,
                c: p.c,
                mode: p.mode,
                seed: None,
            },
            delta: default_delta(),
            horizon: default_horizon(),
            burn_in: default_burn_in(),
            n_samples: default_samples(),
            t_max: default_t_max(),
            max_unresolved: default_max_unresolved(),
            lambdas: default_lambdas(),
            replicas: default_replicas(),
            stride: default_stride(),
            closedform: ClosedFormBlock::default(),
            chain_file: None,
            out: None,
            threads: None,
            allow_unvalidated: false,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub game: Option<String>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<u64>,
    pub burn_in: Option<u64>,
    pub samples: Option<usize>,
    pub t_max: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub allow_unvalidated: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. A relative game or chain path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let GameSource::File(p) = &mut cfg.game {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut cfg.chain_file {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_json_compact(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Applies overrides; the seed falls back to `env_seed` when neither the
    /// flags nor the file set one.
    pub fn apply(&mut self, o: &Overrides, env_seed: Option<u64>) {
        if let Some(g) = &o.game {
            self.game = GameSource::Builtin(g.clone());
        }
        if let Some(s) = o.seed {
            self.params.seed = Some(s);
        } else if self.params.seed.is_none() {
            self.params.seed = env_seed;
        }
        if self.params.seed.is_none() {
            self.params.seed = Some(0);
        }
        if let Some(m) = o.mode {
            self.params.mode = m;
        }
        if let Some(l) = o.lambda {
            self.params.lambda = l;
        }
        if let Some(d) = o.delta {
            self.delta = d;
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if let Some(b) = o.burn_in {
            self.burn_in = b;
        }
        if let Some(s) = o.samples {
            self.n_samples = s;
        }
        if let Some(t) = o.t_max {
            self.t_max = t;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        self.allow_unvalidated |= o.allow_unvalidated;
    }

    pub fn resolve_game(&self) -> Result<GameSpec> {
        let game = match &self.game {
            GameSource::Builtin(name) => builtin(name).map_err(|e| Error::Config(e.to_string()))?,
            GameSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read game {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad game file {}: {e}", path.display())))?
            }
            GameSource::Inline(g) => g.clone(),
        };
        match self.noise {
            Some(n) => game.with_noise(n).map_err(|e| Error::Config(e.to_string())),
            None => Ok(game),
        }
    }

    pub fn learner_params(&self) -> LearnerParams {
        self.params.to_params()
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            delta: self.delta,
            n_samples: self.n_samples,
            t_max: self.t_max,
            max_unresolved: self.max_unresolved,
        }
    }
}
