//! Structural invariants checked over random models.

mod common;

use std::sync::Arc;

use common::*;
use exitfsp::{
    assemble_operators, build_truncation, etfsp_solve, etfsp_solve_family, sweep, uniform_grid, ChainModel,
    DomainPredicate, InitialDistribution, IntegrationSpec, ReactionChannel, Slot, State, TruncationSpec,
};
use proptest::prelude::*;

/// Two-species birth-death network with mass-action rates.
fn network(rates: &[f64; 6]) -> ChainModel {
    ChainModel::new(
        vec!["a".into(), "b".into()],
        vec![
            ReactionChannel::mass_action("make_a", vec![1, 0], rates[0], vec![]),
            ReactionChannel::mass_action("lose_a", vec![-1, 0], rates[1], vec![(0, 1)]),
            ReactionChannel::mass_action("a_to_b", vec![-1, 1], rates[2], vec![(0, 1)]),
            ReactionChannel::mass_action("lose_b", vec![0, -1], rates[3], vec![(1, 1)]),
            ReactionChannel::mass_action("make_b", vec![0, 1], rates[4], vec![(0, 1)]),
            ReactionChannel::mass_action("pair", vec![-1, -1], rates[5], vec![(0, 1), (1, 1)]),
        ],
    )
    .unwrap()
}

fn arb_rates() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(0.05..3.0f64)
}

fn arb_family() -> impl Strategy<Value = TruncationSpec> {
    prop_oneof![
        Just(TruncationSpec::rectangle(vec![0, 1], vec![])),
        Just(TruncationSpec::simplex(vec![0, 1])),
        Just(TruncationSpec::reachable()),
    ]
}

fn domain() -> DomainPredicate {
    DomainPredicate::parse("b < 6", &["a".into(), "b".into()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncations_are_nested_and_split_by_domain(family in arb_family(), r in 1u32..8, x0 in (0u32..3, 0u32..3)) {
        let m = network(&[1.0; 6]);
        let d = domain();
        let gamma = InitialDistribution::dirac([x0.0, x0.1]);
        let small = build_truncation(&m, &d, &family, r, Some(&gamma)).unwrap();
        let big = build_truncation(&m, &d, &family, r + 1, Some(&gamma)).unwrap();
        prop_assert!(small.is_nested_in(&big));
        prop_assert!(small.len() < big.len());
        prop_assert_eq!(small.interior_len() + small.boundary_len(), small.len());
        for x in small.states() {
            match small.slot(x).unwrap() {
                Slot::Interior(i) => {
                    prop_assert!(d.contains(x));
                    prop_assert_eq!(small.interior_state(i), x);
                }
                Slot::Boundary(b) => {
                    prop_assert!(!d.contains(x));
                    prop_assert_eq!(small.boundary_state(b), x);
                }
            }
        }
        let mut sorted = small.states().to_vec();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), small.len());
    }

    #[test]
    fn operator_rows_conserve_rate(rates in arb_rates(), family in arb_family(), r in 1u32..7) {
        let m = network(&rates);
        let d = domain();
        let gamma = InitialDistribution::dirac([1, 1]);
        let tr = build_truncation(&m, &d, &family, r, Some(&gamma)).unwrap();
        let ops = assemble_operators(&m, &tr).unwrap();
        let dd = ops.q_dd.row_sums();
        let db = ops.q_db.row_sums();
        for (i, x) in tr.interior_states().enumerate() {
            prop_assert!(ops.leak[i] >= 0.0);
            prop_assert!((dd[i] + db[i] + ops.leak[i]).abs() < 1e-12 * (1.0 + ops.q_dd.get(i, i).abs()));
            // Leak equals the total rate into states outside the truncation.
            let mut out = vec![0.0; m.jumps().len()];
            m.jump_rates(x.coords(), &mut out);
            let lost: f64 = m
                .jumps()
                .iter()
                .zip(&out)
                .filter(|(j, _)| x.shifted(&j.change).is_some_and(|y| !tr.contains(&y)))
                .map(|(_, &a)| a)
                .sum();
            prop_assert!((lost - ops.leak[i]).abs() < 1e-12 * (1.0 + lost));
            for (j, &v) in ops.q_db.row(i).0.iter().zip(ops.q_db.row(i).1) {
                prop_assert!(v >= 0.0 && !d.contains(tr.boundary_state(*j)));
            }
        }
    }

    #[test]
    fn mass_balance_and_error_bound(rates in arb_rates(), r in 2u32..7, tf in 0.1..8.0f64) {
        let m = network(&rates);
        let d = domain();
        let gamma = InitialDistribution::dirac([1, 0]);
        let spec = IntegrationSpec::with_grid(uniform_grid(tf, 9)).tolerances(1e-12, 1e-10);
        let sol = etfsp_solve_family(&m, &d, &TruncationSpec::simplex(vec![0, 1]), r, &gamma, tf, &spec).unwrap();
        prop_assert!(sol.epsilon >= -1e-9 && sol.epsilon <= 1.0 + 1e-9);
        let leak = sol.leak_trace();
        let occ = sol.occupied_mass();
        let cdf = sol.exit_cdf();
        for k in 0..sol.grid.len() {
            prop_assert!((occ[k] + cdf[k] + leak[k] - 1.0).abs() < 1e-8);
            prop_assert!(sol.nu[k].iter().all(|&v| v >= 0.0));
            prop_assert!(sol.mu[k].iter().all(|&v| v >= 0.0));
        }
        prop_assert!(leak.windows(2).all(|w| w[0] <= w[1] + 1e-9));
        prop_assert!(cdf.windows(2).all(|w| w[0] <= w[1] + 1e-9));
        let final_inside: f64 = sol.nu.last().unwrap().iter().sum();
        prop_assert!((sol.epsilon - final_inside - leak.last().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn growing_truncations_tighten_the_bound(rates in arb_rates(), family in arb_family()) {
        let m = network(&rates);
        let d = domain();
        let gamma = InitialDistribution::dirac([0, 0]);
        let spec = IntegrationSpec::with_grid(uniform_grid(3.0, 7)).tolerances(1e-12, 1e-10);
        let schedule = [(2, 3.0), (3, 3.0), (5, 3.0), (8, 3.0)];
        let sols = sweep(&m, &d, &family, &schedule, &gamma, &spec).unwrap();
        for w in sols.windows(2) {
            prop_assert!(w[1].epsilon <= w[0].epsilon + 1e-9);
            for (b, x) in w[0].truncation.boundary_states().enumerate() {
                if let Some(c) = w[1].truncation.boundary_position(x) {
                    prop_assert!(w[0].mu_cum[b] <= w[1].mu_cum[c] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn longer_horizons_tighten_the_bound(rates in arb_rates(), t1 in 0.1..4.0f64, dt in 0.0..4.0f64) {
        let m = network(&rates);
        let d = domain();
        let gamma = InitialDistribution::dirac([2, 0]);
        let spec = IntegrationSpec::with_grid(vec![]).tolerances(1e-12, 1e-10);
        let fam = TruncationSpec::rectangle(vec![0, 1], vec![]);
        let a = etfsp_solve_family(&m, &d, &fam, 5, &gamma, t1, &spec).unwrap();
        let b = etfsp_solve_family(&m, &d, &fam, 5, &gamma, t1 + dt, &spec).unwrap();
        prop_assert!(b.epsilon <= a.epsilon + 1e-9);
    }

    #[test]
    fn domain_expressions_round_trip(c0 in -3i64..4, c1 in -3i64..4, rhs in -5i64..10, x in (0u32..8, 0u32..8)) {
        let species = vec!["a".to_string(), "b".to_string()];
        let expr = format!("{c0}*a + {c1}*b <= {rhs} || !(a == 2)");
        let p = DomainPredicate::parse(&expr, &species).unwrap();
        let again = DomainPredicate::parse(&p.display(&species).to_string(), &species).unwrap();
        let s = State::from([x.0, x.1]);
        let direct = c0 * x.0 as i64 + c1 * x.1 as i64 <= rhs || x.0 != 2;
        prop_assert_eq!(p.contains(&s), direct);
        prop_assert_eq!(again.contains(&s), direct);
    }
}

#[test]
fn tightening_tolerances_converges() {
    // Against a tight reference, errors shrink with the tolerances.
    let m = network(&[1.0, 0.5, 0.7, 0.3, 0.2, 0.4]);
    let d = domain();
    let gamma = InitialDistribution::dirac([0, 0]);
    let fam = TruncationSpec::rectangle(vec![0, 1], vec![]);
    let tr = Arc::new(build_truncation(&m, &d, &fam, 10, Some(&gamma)).unwrap());
    let run = |atol: f64| {
        let spec = IntegrationSpec::with_grid(uniform_grid(10.0, 11)).tolerances(atol, atol * 100.0);
        etfsp_solve(&m, tr.clone(), &gamma, 10.0, &spec).unwrap()
    };
    let reference = run(1e-15);
    let err = |atol: f64| {
        let s = run(atol);
        s.mu.iter()
            .zip(&reference.mu)
            .map(|(a, b)| max_abs_diff(a, b))
            .fold((s.epsilon - reference.epsilon).abs(), f64::max)
    };
    let errs: Vec<f64> = [1e-6, 1e-8, 1e-10].iter().map(|&t| err(t)).collect();
    assert!(errs[0] < 1e-4 && errs[1] < 1e-6 && errs[2] < 1e-8, "{errs:?}");
    assert!(errs[2] < errs[0]);
}

#[test]
fn absorbing_domain_complement_is_ignored() {
    // Rates out of boundary states never enter the operators.
    let m = network(&[1.0; 6]);
    let d = domain();
    let tr = build_truncation(&m, &d, &TruncationSpec::rectangle(vec![0, 1], vec![]), 8, None).unwrap();
    let ops = assemble_operators(&m, &tr).unwrap();
    assert_eq!(ops.q_dd.nrows(), tr.interior_len());
    assert_eq!(ops.q_db.ncols(), tr.boundary_len());
    assert!(tr.boundary_states().all(|x| x.coords()[1] >= 6));
    assert!(tr.boundary_states().any(|x| x.coords()[1] == 7));
}
