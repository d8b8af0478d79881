//! Gillespie sampler against exact laws, and its reproducibility.

mod common;

use common::*;
use exitfsp::{
    dkw_half_width, ks_critical, monte_carlo_exit, simulate_exit, wilson_interval, CensorReason, ChainModel, Cmp,
    DomainPredicate, InitialDistribution, ReactionChannel, SimulationCaps, State,
};

const CAPS: SimulationCaps = SimulationCaps {
    time_cap: 1e6,
    jump_cap: 10_000_000,
};

const ALPHA: f64 = 0.01;

#[test]
fn pure_death_exit_times_pass_ks() {
    let model = pure_death(1.0);
    let n = 20_000;
    let set = monte_carlo_exit(&model, &positive(), &InitialDistribution::dirac([3]), n, 11, CAPS).unwrap();
    assert_eq!(set.censored(), 0);
    let d = set.ks_distance(|t| hypoexponential_cdf(&[3.0, 2.0, 1.0], t));
    assert!(d < ks_critical(n, ALPHA), "KS distance {d}");
    assert!(set.samples.iter().all(|s| s.state == State::from([0]) && s.jumps == 3));
}

#[test]
fn competing_exits_match_branching_probabilities() {
    // From 0: to +1 at rate 2, to a second exit state via `b` at rate 1.
    let model = ChainModel::new(
        vec!["a".into(), "b".into()],
        vec![
            ReactionChannel::mass_action("up", vec![1, 0], 2.0, vec![]),
            ReactionChannel::mass_action("side", vec![0, 1], 1.0, vec![]),
        ],
    )
    .unwrap();
    let dom = DomainPredicate::parse("a == 0 && b == 0", &["a".into(), "b".into()]).unwrap();
    let n = 30_000;
    let set = monte_carlo_exit(&model, &dom, &InitialDistribution::dirac([0, 0]), n, 5, CAPS).unwrap();
    let up = set.count_where(|s| s.state == State::from([1, 0]));
    let (lo, hi) = wilson_interval(up, n, ALPHA);
    assert!(lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi, "[{lo}, {hi}]");
    let d = set.ks_distance(|t| 1.0 - (-3.0 * t).exp());
    assert!(d < ks_critical(n, ALPHA));
}

#[test]
fn same_seed_same_samples_regardless_of_threads() {
    let model = pure_death(0.7);
    let gamma = InitialDistribution::new([(State::from([2]), 0.4), (State::from([5]), 0.6)]).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_exit(&model, &positive(), &gamma, 500, 42, CAPS).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.samples, b.samples);
    let c = monte_carlo_exit(&model, &positive(), &gamma, 500, 43, CAPS).unwrap();
    assert_ne!(a.samples, c.samples);
    let single = simulate_exit(&model, &positive(), &gamma, 42, CAPS).unwrap();
    assert_eq!(single, a.samples[0]);
}

#[test]
fn initial_mixture_is_sampled_in_proportion() {
    let model = pure_death(1.0);
    let gamma = InitialDistribution::new([(State::from([1]), 0.25), (State::from([4]), 0.75)]).unwrap();
    let n = 20_000;
    let set = monte_carlo_exit(&model, &positive(), &gamma, n, 3, CAPS).unwrap();
    let short = set.count_where(|s| s.jumps == 1);
    let (lo, hi) = wilson_interval(short, n, ALPHA);
    assert!(lo <= 0.25 && 0.25 <= hi);
}

#[test]
fn starting_outside_exits_at_time_zero() {
    let model = pure_death(1.0);
    let s = simulate_exit(&model, &positive(), &InitialDistribution::dirac([0]), 1, CAPS).unwrap();
    assert_eq!((s.exit_time, s.jumps, s.censored), (0.0, 0, None));
}

#[test]
fn censoring_reasons() {
    // A chain that never leaves is censored at the time cap.
    let stuck = pure_death(1.0);
    let caps = SimulationCaps {
        time_cap: 7.5,
        jump_cap: 100,
    };
    let s = simulate_exit(&stuck, &below(1), &InitialDistribution::dirac([0]), 0, caps).unwrap();
    assert_eq!(s.censored, Some(CensorReason::TimeCap));
    assert_eq!(s.exit_time, 7.5);

    // Explosive birth never leaves `{n ≥ 0}` and runs into the jump cap.
    let boom = pure_birth(|n| ((n + 1) as f64).powi(2));
    let all = DomainPredicate::coordinate(1, 0, Cmp::Ge, 0);
    let s = simulate_exit(&boom, &all, &InitialDistribution::dirac([0]), 0, caps).unwrap();
    assert!(matches!(s.censored, Some(CensorReason::JumpCap | CensorReason::TimeCap)));
    if s.censored == Some(CensorReason::JumpCap) {
        assert_eq!(s.jumps, 100);
        assert!(s.exit_time < 2.0);
    }

    let slow = pure_death(1e-3);
    let set = monte_carlo_exit(&slow, &positive(), &InitialDistribution::dirac([1]), 200, 9, caps).unwrap();
    assert!(set.censored() > 150);
    assert!(set.samples.iter().filter(|s| !s.exited()).all(|s| s.exit_time == 7.5));
}

#[test]
fn band_and_interval_formulas() {
    // DKW at n = 10⁴, α = 0.01: sqrt(ln 200 / 2e4).
    assert!((dkw_half_width(10_000, 0.01) - 0.016_276).abs() < 1e-5);
    // Wilson 99% for 50 of 100: centre 0.5, half-width z/(1 + z²/n) · sqrt(0.25/n + z²/4n²).
    let (lo, hi) = wilson_interval(50, 100, 0.01);
    let z: f64 = 2.575_829_303_549;
    let half = z / (1.0 + z * z / 100.0) * (0.25 / 100.0 + z * z / 40_000.0).sqrt();
    assert!((lo - (0.5 - half)).abs() < 1e-9 && (hi - (0.5 + half)).abs() < 1e-9);
    assert!((ks_critical(100, 0.05) - 0.135_810).abs() < 1e-5);
}
