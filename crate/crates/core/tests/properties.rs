mod common;

use apla_lab::analysis::{
    aspiration_envelope, closed_form_path, closed_form_strategy, enumerate_pss, in_neighborhood,
    ClosedFormInputs,
};
use apla_lab::dynamics::{apply_profile, step, Mode, SimState};
use apla_lab::game::{builtin, validate_hypotheses, ActionProfile, NoiseModel};
use apla_lab::presets::{reference_game, reference_params, REFERENCE_DELTA};
use apla_lab::rng::SimRng;
use apla_lab::stability::{
    direct_solve, estimate_occupancy, estimate_phat, estimate_row_counts, power_iteration, residual,
    total_variation, tremble_once, ChainSettings,
};
use apla_lab::dynamics::sample_action;
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum()
}

fn critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(0.99)
}

#[test]
fn noise_is_uniform_on_its_support() {
    let noise = NoiseModel::uniform(0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bins = 20;
    let mut counts = vec![0u64; bins];
    let n = 100_000;
    for _ in 0..n {
        let v = noise.sample(&mut rng);
        assert!(v.abs() <= 0.02);
        let b = (((v + 0.02) / 0.04) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let expected = vec![n as f64 / bins as f64; bins];
    assert!(chi_square(&counts, &expected) < critical(bins - 1));
}

#[test]
fn noisy_measurement_mean() {
    let g = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let aa = ActionProfile(vec![0, 0]);
    let n = 1_000_000;
    let sum: f64 = (0..n)
        .map(|_| g.measure_utility(0, &aa, g.noise(), &mut rng).unwrap())
        .sum();
    assert!((sum / n as f64 - 5.0).abs() < 1e-3);
}

#[test]
fn action_frequencies_follow_perturbed_strategy() {
    for x in [vec![0.5, 0.5], vec![0.8, 0.2]] {
        let lambda = 0.04;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = [0u64; 2];
        for _ in 0..n {
            counts[sample_action(&x, lambda, &mut rng).unwrap()] += 1;
        }
        let expected: Vec<f64> = x
            .iter()
            .map(|p| n as f64 * ((1.0 - lambda) * p + lambda / 2.0))
            .collect();
        assert!(chi_square(&counts, &expected) < critical(1), "{x:?}: {counts:?}");
    }
}

#[test]
fn single_tremble_frequencies() {
    // From (A,A): each agent trembles with probability 1/2 and then plays
    // either action with probability 1/2, so the next profile is AA, BA, AB
    // with probabilities 1/2, 1/4, 1/4.
    let g = reference_game();
    let p = reference_params(Mode::Apla);
    let aa = &enumerate_pss(&g)[0];
    let n = 100_000u64;
    let mut counts = [0u64; 4];
    for k in 0..n {
        let mut rng = SimRng::new(k, 2);
        let s = tremble_once(aa, &g, &p, &mut rng).unwrap();
        counts[g.profile_index(&s.profile).unwrap()] += 1;
    }
    assert_eq!(counts[3], 0);
    let nf = n as f64;
    let stat = chi_square(&counts[..3], &[nf / 2.0, nf / 4.0, nf / 4.0]);
    assert!(stat < critical(2), "{counts:?}");
}

#[test]
fn builtin_utilities_are_positive() {
    for name in ["stag_hunt", "typewriter", "prisoners_dilemma"] {
        let g = builtin(name).unwrap();
        for i in 0..g.num_players() {
            for p in g.profiles() {
                assert!(g.utility(i, &p).unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn each_pss_in_exactly_one_neighborhood() {
    let g = reference_game();
    let states = enumerate_pss(&g);
    for s in &states {
        let st = s.to_state(&g);
        let hits = states.iter().filter(|t| in_neighborhood(&st, t, REFERENCE_DELTA)).count();
        assert_eq!(hits, 1);
    }
}

/// The strategy update applied step by step to the played action's probability under
/// the given aspiration and measurement paths.
fn recursion_oracle(inputs: &ClosedFormInputs, rho: &[f64], measured: &[f64]) -> Vec<f64> {
    let mut x = inputs.x0;
    let mut out = vec![x];
    for k in 0..rho.len() {
        let u = measured[k];
        let gap = u - rho[k];
        let phi = match inputs.mode {
            Mode::Pla => u,
            Mode::Apla => {
                if gap >= 0.0 {
                    u
                } else {
                    inputs.h.max(u + inputs.c * gap)
                }
            }
        };
        x += inputs.epsilon * phi * (1.0 - x);
        out.push(x);
    }
    out
}

#[test]
fn product_form_matches_recursion_on_forced_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..50 {
        let g = random_game(&mut rng, vec![2, 2], 0.5, 6.0);
        let u = g.utility_table(0)[trial % 4];
        let eps = epsilon_for(&g, rng.random_range(0.05..0.95));
        let pla = trial % 2 == 1;
        let p = params_with(eps, 0.0, 0.01, rng.random_range(0.0..20.0), pla, 0);
        let x0 = rng.random_range(0.0..1.0);
        let t = 10_000;
        let rho: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..7.0)).collect();
        let measured: Vec<f64> = (0..t).map(|_| u + rng.random_range(-0.02..0.02)).collect();
        let inputs = ClosedFormInputs::new(&p, u, x0, rho[0]);
        let oracle = recursion_oracle(&inputs, &rho, &measured);
        let path = closed_form_path(&inputs, &rho, Some(&measured));
        for k in [0, 1, 2, 17, 999, 5_000, t] {
            let direct = closed_form_strategy(&inputs, &rho, Some(&measured), k as i64).unwrap();
            assert!(relative_error(direct, oracle[k]) < 1e-10, "trial {trial} t {k}");
        }
        for (a, b) in path.iter().zip(&oracle) {
            assert!(relative_error(*a, *b) < 1e-10);
        }
    }
}

#[test]
fn noise_free_constant_action_approaches_one() {
    let g = builtin("stag_hunt").unwrap();
    let p = reference_params(Mode::Apla).with_lambda(0.0);
    let aa = ActionProfile(vec![0, 0]);
    let mut state = SimState::new(&g, aa.clone(), vec![vec![0.3, 0.7]; 2], vec![2.0; 2]).unwrap();
    let mut rng = SimRng::new(0, 2);
    let mut prev = 0.3;
    for _ in 0..2000 {
        apply_profile(&mut state, &aa, &g, &p, &mut rng).unwrap();
        let x = state.strategies[0][0];
        assert!(x >= prev);
        prev = x;
    }
    assert!(prev > 1.0 - 1e-12);
}

#[test]
fn envelope_collapses_without_noise() {
    for t in [1, 10, 500] {
        let (lo, hi) = aspiration_envelope(1.5, 0.0, 0.06, 0.06, t).unwrap();
        assert_eq!(lo, hi);
        assert!((lo + (1.0f64 - 0.0036).powi(t as i32) * 1.5).abs() < 1e-12);
    }
}

#[test]
fn rows_identical_serial_and_parallel() {
    let g = reference_game();
    let p = reference_params(Mode::Apla).with_seed(21);
    let settings = ChainSettings {
        n_samples: 400,
        ..ChainSettings::default()
    };
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| estimate_phat(&g, &p, &settings)).unwrap();
    let b = parallel.install(|| estimate_phat(&g, &p, &settings)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn row_estimates_agree_across_sample_sizes() {
    let g = reference_game();
    let p = reference_params(Mode::Apla);
    let small = ChainSettings {
        n_samples: 10_000,
        ..ChainSettings::default()
    };
    let large = ChainSettings {
        n_samples: 100_000,
        ..ChainSettings::default()
    };
    for s in enumerate_pss(&g) {
        let a = estimate_row_counts(&s, &g, &p.with_seed(1), &small).unwrap();
        let b = estimate_row_counts(&s, &g, &p.with_seed(2), &large).unwrap();
        let (pa, pb) = (a.probabilities(), b.probabilities());
        let (na, nb) = (a.resolved() as f64, b.resolved() as f64);
        for j in 0..pa.len() {
            let pooled = (pa[j] * na + pb[j] * nb) / (na + nb);
            let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
            assert!(
                (pa[j] - pb[j]).abs() <= 3.0 * se,
                "row {} entry {j}: {} vs {} (se {se})",
                s.label,
                pa[j],
                pb[j]
            );
        }
    }
}

#[test]
fn occupancy_fractions_sum_to_one() {
    let g = reference_game();
    for mode in [Mode::Apla, Mode::Pla] {
        let p = reference_params(mode).with_seed(4);
        let occ = estimate_occupancy(&g, &p, 20_000, 1_000, REFERENCE_DELTA).unwrap();
        let total: f64 = occ.fractions.iter().sum::<f64>() + occ.unclassified;
        assert!((total - 1.0).abs() < 1e-12);
    }
}

fn arb_stochastic(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_methods_agree(m in (2usize..7).prop_flat_map(arb_stochastic)) {
        let pi = power_iteration(&m, 1e-14, 1_000_000).unwrap();
        let direct = direct_solve(&m).unwrap();
        prop_assert!(residual(&m, &pi) < 1e-10);
        prop_assert!(residual(&m, &direct) < 1e-10);
        prop_assert!(total_variation(&pi, &direct).unwrap() < 1e-8);
    }

    #[test]
    fn simplex_is_preserved(seed in any::<u64>(), frac in 0.05f64..0.95, lambda in 0.0f64..0.5,
                            c in 0.0f64..30.0, pla in any::<bool>(), k in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, vec![k, 2], 0.5, 6.0)
            .with_noise(NoiseModel::uniform(0.1)).unwrap();
        let p = params_with(epsilon_for(&g, frac), lambda, 0.05, c, pla, seed);
        prop_assert!(validate_hypotheses(&g, &p, None).passed());
        let mut state = random_interior_state(&g, &mut rng);
        let mut srng = SimRng::new(seed, 2);
        for _ in 0..300 {
            step(&mut state, &g, &p, &mut srng).unwrap();
            for x in &state.strategies {
                prop_assert!(x.iter().all(|v| *v >= 0.0));
                prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apla_without_penalty_reduces_to_pla(seed in any::<u64>(), frac in 0.05f64..0.95, lambda in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, vec![2, 3], 0.5, 6.0)
            .with_noise(NoiseModel::uniform(0.1)).unwrap();
        let floor = (0..2).map(|i| g.min_utility(i)).fold(f64::INFINITY, f64::min) - 0.1;
        let eps = epsilon_for(&g, frac);
        let apla = params_with(eps, lambda, floor, 0.0, false, seed);
        let pla = params_with(eps, lambda, floor, 0.0, true, seed);
        let init = random_interior_state(&g, &mut rng);
        let (mut a, mut b) = (init.clone(), init);
        let (mut ra, mut rb) = (SimRng::new(seed, 2), SimRng::new(seed, 2));
        for _ in 0..300 {
            step(&mut a, &g, &apla, &mut ra).unwrap();
            step(&mut b, &g, &pla, &mut rb).unwrap();
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn chosen_action_is_reinforced(seed in any::<u64>(), frac in 0.05f64..0.95, c in 0.0f64..30.0, pla in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, vec![2, 2], 0.5, 6.0)
            .with_noise(NoiseModel::uniform(0.1)).unwrap();
        let p = params_with(epsilon_for(&g, frac), 0.1, 0.05, c, pla, seed);
        let mut state = random_interior_state(&g, &mut rng);
        let mut srng = SimRng::new(seed, 2);
        for _ in 0..300 {
            let before = state.strategies.clone();
            step(&mut state, &g, &p, &mut srng).unwrap();
            for i in 0..2 {
                let a = state.profile.0[i];
                prop_assert!(state.strategies[i][a] >= before[i][a]);
            }
        }
    }

    #[test]
    fn aspirations_stay_in_measured_range(seed in any::<u64>(), frac in 0.05f64..0.95, lambda in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, vec![2, 2], 0.5, 6.0)
            .with_noise(NoiseModel::uniform(0.1)).unwrap();
        let p = params_with(epsilon_for(&g, frac), lambda, 0.05, 10.0, false, seed);
        let mut state = random_interior_state(&g, &mut rng);
        let mut srng = SimRng::new(seed, 2);
        for _ in 0..500 {
            step(&mut state, &g, &p, &mut srng).unwrap();
            for i in 0..2 {
                let (lo, hi) = (g.min_utility(i) - 0.1, g.max_utility(i) + 0.1);
                prop_assert!(state.aspirations[i] >= lo && state.aspirations[i] <= hi);
            }
        }
    }

    #[test]
    fn runs_are_determined_by_seed(seed in any::<u64>()) {
        let g = reference_game();
        let p = reference_params(Mode::Apla).with_seed(seed);
        let rec = apla_lab::dynamics::Recorder::every(7);
        let a = apla_lab::dynamics::simulate(&g, &p, 500, &rec).unwrap();
        let b = apla_lab::dynamics::simulate(&g, &p, 500, &rec).unwrap();
        prop_assert_eq!(a, b);
    }
}
