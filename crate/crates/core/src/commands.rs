//! Subcommand implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde_json::json;

use crate::analysis::{aspiration_envelope, closed_form_path, enumerate_pss, ClosedFormInputs};
use crate::config::ExperimentConfig;
use crate::dynamics::{apply_profile, run, write_trajectory_csv, Recorder, SimState};
use crate::error::Error;
use crate::game::{validate_hypotheses, ActionProfile, GameSpec, ValidationReport};
use crate::rng::SimRng;
use crate::stability::{estimate_occupancy_replicas, estimate_phat, stationary, sweep_lambda, EmpiricalChain};
use crate::stats::standard_error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Simulate,
    Closedform,
    Phat,
    Occupancy,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Closedform => "closedform",
            Command::Phat => "phat",
            Command::Occupancy => "occupancy",
            Command::Sweep => "sweep",
        }
    }

    fn uses_delta(self) -> bool {
        matches!(self, Command::Phat | Command::Occupancy | Command::Sweep | Command::Validate)
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

#[derive(Debug)]
pub enum Failure {
    Validation(ValidationReport),
    Lib(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Lib(e) => match e {
                Error::Io(_) => EXIT_IO,
                Error::EstimationQuality(_) | Error::ReducibleChain { .. } => EXIT_ESTIMATION,
                Error::Argument(_) | Error::Parameter(_) | Error::Config(_) => EXIT_CONFIG,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(r) => write!(f, "hypotheses not satisfied:\n{r}"),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// What a command produced. An artifact may accompany a failure, e.g. a
/// chain whose stationary distribution is not unique.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifact: Option<String>,
    pub failure: Option<Failure>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn ok(artifact: String) -> Self {
        Outcome {
            artifact: Some(artifact),
            ..Outcome::default()
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(EXIT_OK, Failure::exit_code)
    }
}

/// Runs `cmd` inside a pool of `config.threads` workers when set.
pub fn execute(cmd: Command, config: &ExperimentConfig) -> Outcome {
    match config.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute_inner(cmd, config)),
            Err(e) => Outcome {
                failure: Some(Failure::Lib(Error::Config(format!("thread pool: {e}")))),
                ..Outcome::default()
            },
        },
        None => execute_inner(cmd, config),
    }
}

fn execute_inner(cmd: Command, config: &ExperimentConfig) -> Outcome {
    let game = match config.resolve_game() {
        Ok(g) => g,
        Err(e) => return failed(e.into()),
    };
    let params = config.learner_params();
    let delta = cmd.uses_delta().then_some(config.delta);
    let report = validate_hypotheses(&game, &params, delta);
    if cmd == Command::Validate {
        let text = csv_header(cmd, config) + &report.to_string();
        return Outcome {
            failure: (!report.passed()).then_some(Failure::Validation(report)),
            artifact: Some(text),
            warnings: Vec::new(),
        };
    }
    let mut warnings = Vec::new();
    if !report.passed() {
        if !config.allow_unvalidated {
            return failed(Failure::Validation(report));
        }
        warnings.extend(report.failures().map(|c| format!("unvalidated: {} ({})", c.name, c.detail)));
    }
    let mut outcome = match cmd {
        Command::Validate => unreachable!(),
        Command::Simulate => wrap(simulate_cmd(&game, config)),
        Command::Closedform => wrap(closedform_cmd(&game, config)),
        Command::Phat => phat_cmd(&game, config),
        Command::Occupancy => wrap(occupancy_cmd(&game, config)),
        Command::Sweep => wrap(sweep_cmd(&game, config)),
    };
    outcome.warnings.splice(0..0, warnings);
    outcome
}

fn failed(f: Failure) -> Outcome {
    Outcome {
        failure: Some(f),
        ..Outcome::default()
    }
}

fn wrap(r: crate::Result<String>) -> Outcome {
    match r {
        Ok(text) => Outcome::ok(text),
        Err(e) => failed(e.into()),
    }
}

/// The config as embedded in outputs. Worker count and output path do not
/// affect results and are left out so reruns compare byte for byte.
fn provenance(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        threads: None,
        out: None,
        ..config.clone()
    }
}

fn csv_header(cmd: Command, config: &ExperimentConfig) -> String {
    format!(
        "# command: {}\n# config: {}\n",
        cmd.name(),
        provenance(config).to_json_compact()
    )
}

fn simulate_cmd(game: &GameSpec, config: &ExperimentConfig) -> crate::Result<String> {
    let params = config.learner_params();
    let mut rng = SimRng::new(params.seed, game.num_players());
    let init = SimState::initial(game, &params, &mut rng)?;
    let (traj, _) = run(&init, game, &params, config.horizon, &Recorder::every(config.stride), &mut rng)?;
    let mut buf = csv_header(Command::Simulate, config).into_bytes();
    write_trajectory_csv(&traj, game, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Plays one profile at every step and compares the iterated strategy with
/// the product formula, alongside the aspiration envelope.
fn closedform_cmd(game: &GameSpec, config: &ExperimentConfig) -> crate::Result<String> {
    let params = config.learner_params();
    let block = &config.closedform;
    let n = game.num_players();
    let profile = ActionProfile(block.profile.clone().unwrap_or_else(|| vec![0; n]));
    game.check_profile(&profile)?;
    if !(0.0..=1.0).contains(&block.x0) {
        return Err(Error::Config(format!("closedform.x0 = {} is not a probability", block.x0)));
    }
    let rho0 = match &block.rho0 {
        Some(r) if r.len() == n => r.clone(),
        Some(r) => return Err(Error::Config(format!("closedform.rho0 has {} entries, expected {n}", r.len()))),
        None => (0..n).map(|i| game.min_utility(i)).collect(),
    };
    let strategies = (0..n)
        .map(|i| {
            let k = game.action_counts()[i];
            let a = profile.0[i];
            (0..k)
                .map(|j| {
                    if j == a {
                        block.x0
                    } else if k > 1 {
                        (1.0 - block.x0) / (k - 1) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut state = SimState::new(game, profile.clone(), strategies, rho0.clone())?;
    let mut rng = SimRng::new(params.seed, n);
    let steps = block.steps as usize;
    let mut rho_paths = (0..n).map(|_| Vec::with_capacity(steps)).collect::<Vec<_>>();
    let mut measured = (0..n).map(|_| Vec::with_capacity(steps)).collect::<Vec<_>>();
    let mut iterated = vec![vec![block.x0]; n];
    for _ in 0..steps {
        for i in 0..n {
            rho_paths[i].push(state.aspirations[i]);
        }
        apply_profile(&mut state, &profile, game, &params, &mut rng)?;
        let m = state.measured_utilities(game);
        for i in 0..n {
            measured[i].push(m[i]);
            iterated[i].push(state.strategies[i][profile.0[i]]);
        }
    }

    let mut out = csv_header(Command::Closedform, config);
    out.push_str("t,agent,lower,rho_minus_u,upper,x_closed_form,x_iterated\n");
    let noise = game.noise().bound;
    let mut aspirations = rho_paths.clone();
    for i in 0..n {
        aspirations[i].push(state.aspirations[i]);
    }
    let closed: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let u = game.utility_table(i)[game.index_unchecked(&profile.0)];
            let inputs = ClosedFormInputs::new(&params, u, block.x0, rho0[i]);
            closed_form_path(&inputs, &rho_paths[i], Some(&measured[i]))
        })
        .collect();
    for t in 0..=steps {
        for i in 0..n {
            let u = game.utility_table(i)[game.index_unchecked(&profile.0)];
            let (lo, hi) = if t == 0 {
                (String::new(), String::new())
            } else {
                let (lo, hi) = aspiration_envelope(u - rho0[i], noise, params.epsilon, params.nu(), t as u64)?;
                (lo.to_string(), hi.to_string())
            };
            writeln!(
                out,
                "{t},{i},{lo},{},{hi},{},{}",
                aspirations[i][t] - u,
                closed[i][t],
                iterated[i][t]
            )
            .expect("string write");
        }
    }
    Ok(out)
}

fn phat_cmd(game: &GameSpec, config: &ExperimentConfig) -> Outcome {
    let params = config.learner_params();
    let chain = match estimate_phat(game, &params, &config.chain_settings()) {
        Ok(c) => c,
        Err(e) => return failed(e.into()),
    };
    let (stationary_json, failure) = match stationary(&chain) {
        Ok(s) => (json!(s), None),
        Err(e) => (serde_json::Value::Null, Some(Failure::Lib(e))),
    };
    let mut doc = json!({
        "command": Command::Phat.name(),
        "config": provenance(config),
        "chain": chain,
        "stationary": stationary_json,
    });
    if let Some(f) = &failure {
        doc["stationary_error"] = json!(f.to_string());
    }
    Outcome {
        artifact: Some(serde_json::to_string_pretty(&doc).expect("json") + "\n"),
        failure,
        warnings: Vec::new(),
    }
}

fn occupancy_cmd(game: &GameSpec, config: &ExperimentConfig) -> crate::Result<String> {
    let params = config.learner_params();
    let replicas = config.replicas.max(1);
    let runs = estimate_occupancy_replicas(game, &params, config.horizon, config.burn_in, config.delta, replicas)?;
    let mut out = csv_header(Command::Occupancy, config);
    out.push_str("state,fraction,se\n");
    let labels = &runs[0].labels;
    for (j, label) in labels.iter().enumerate() {
        let v: Vec<f64> = runs.iter().map(|o| o.fractions[j]).collect();
        writeln!(out, "{label},{},{}", crate::stats::mean(&v), standard_error(&v)).expect("string write");
    }
    let v: Vec<f64> = runs.iter().map(|o| o.unclassified).collect();
    writeln!(out, "unclassified,{},{}", crate::stats::mean(&v), standard_error(&v)).expect("string write");
    Ok(out)
}

fn load_chain(path: &Path, game: &GameSpec) -> crate::Result<EmpiricalChain> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read chain {}: {e}", path.display())))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad chain file: {e}")))?;
    let body = doc.get("chain").cloned().unwrap_or(doc);
    let mut chain: EmpiricalChain =
        serde_json::from_value(body).map_err(|e| Error::Config(format!("bad chain file: {e}")))?;
    let states = enumerate_pss(game);
    let labels: Vec<&String> = states.iter().map(|s| &s.label).collect();
    if chain.labels.iter().collect::<Vec<_>>() != labels {
        return Err(Error::Config(format!(
            "chain states {:?} do not match the game's {:?}",
            chain.labels, labels
        )));
    }
    chain.states = states;
    Ok(chain)
}

fn sweep_cmd(game: &GameSpec, config: &ExperimentConfig) -> crate::Result<String> {
    let params = config.learner_params();
    let chain = match &config.chain_file {
        Some(p) => load_chain(p, game)?,
        None => estimate_phat(game, &params, &config.chain_settings())?,
    };
    let rows = sweep_lambda(
        game,
        &params,
        &config.lambdas,
        config.horizon,
        config.burn_in,
        config.delta,
        &chain,
        config.replicas,
    )?;
    let mut out = csv_header(Command::Sweep, config);
    out.push_str("lambda,tv,tv_se,unclassified,replicas\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.lambda, r.tv, r.tv_se, r.unclassified, r.replicas).expect("string write");
    }
    Ok(out)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Executes `cmd`, writes its artifact to `config.out` (or stdout) and
/// returns the process exit code.
pub fn run_command(cmd: Command, config: &ExperimentConfig) -> i32 {
    let outcome = execute(cmd, config);
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(text) = &outcome.artifact {
        match &config.out {
            Some(path) => {
                if let Err(e) = write_atomic(path, text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return EXIT_IO;
                }
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                    return EXIT_IO;
                }
            }
        }
    }
    if let Some(f) = &outcome.failure {
        eprintln!("error: {f}");
    }
    outcome.exit_code()
}
