//! Structural invariants of the walk, the lattice solver and the
//! variational functionals, plus a Feynman-Kac cross-check of the solver.

use pamlab::lattice::{LatticeBox, LatticeField, SemigroupMethod};
use pamlab::pam::{solve_pam, Initial};
use pamlab::variational::{chi_closed_form, functional, log_sobolev_gap, Grid, Nonlinearity, Profile};
use pamlab::walk::{simulate_walk, walk_statistic, LocalTimes};
use proptest::prelude::*;

fn field(d: usize, radius: usize, values: &[f64]) -> LatticeField {
    let lbox = LatticeBox::centered(d, radius);
    let n = lbox.len();
    LatticeField::new(lbox, values[..n].to_vec()).unwrap()
}

fn u_at_origin(xi: &LatticeField, t: f64) -> f64 {
    let origin = vec![0; xi.lbox.dim()];
    solve_pam(xi, t, Initial::Flat, SemigroupMethod::Eigen).unwrap().log_value(&origin).unwrap()
}

/// `exp(Σ_x ξ(x) ℓ_t(x))` on paths that stay in the box, zero otherwise.
fn feynman_kac_weight(xi: &LatticeField, radius: usize, lt: &LocalTimes) -> f64 {
    if !lt.confined_to(radius) {
        return 0.0;
    }
    let exponent: f64 = (0..lt.len()).map(|k| xi.get(lt.site(k)).unwrap() * lt.time(k)).sum();
    exponent.exp()
}

#[test]
fn feynman_kac_monte_carlo_matches_the_solver() {
    for (d, radius, t, seed) in [(1, 2, 1.5, 1u64), (2, 1, 1.0, 2), (1, 1, 2.0, 3)] {
        let lbox = LatticeBox::centered(d, radius);
        let values: Vec<f64> = (0..lbox.len()).map(|i| ((i * 7 + 3) % 5) as f64 * 0.3 - 0.5).collect();
        let xi = LatticeField::new(lbox, values).unwrap();
        let exact = u_at_origin(&xi, t).exp();
        let (mean, se) = walk_statistic(t, d, 100_000, seed, |lt| feynman_kac_weight(&xi, radius, lt)).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "d={d} R={radius}: {mean} +- {se} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_times_add_up_and_stay_connected(t in 0.0f64..20.0, d in 1usize..=3, seed in any::<u64>()) {
        let lt = simulate_walk(t, d, seed).unwrap();
        prop_assert!((lt.total() - t).abs() <= 1e-12 * t.max(1.0));
        prop_assert!(lt.support_is_connected());
        prop_assert!(lt.times().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn solution_is_monotone_in_the_potential(
        d in 1usize..=2,
        values in prop::collection::vec(-2.0f64..2.0, 25),
        bumps in prop::collection::vec(0.0f64..1.0, 25),
        t in 0.1f64..3.0,
    ) {
        let xi = field(d, 2, &values);
        let raised: Vec<f64> = values.iter().zip(&bumps).map(|(a, b)| a + b).collect();
        let xi2 = field(d, 2, &raised);
        prop_assert!(u_at_origin(&xi2, t) >= u_at_origin(&xi, t) - 1e-12);
    }

    #[test]
    fn solution_grows_with_the_box(values in prop::collection::vec(-2.0f64..2.0, 9), t in 0.1f64..3.0) {
        // the potential on the larger box extends the one on the smaller box
        let small = field(1, 2, &values[2..7]);
        let large = field(1, 4, &values);
        prop_assert!(u_at_origin(&large, t) >= u_at_origin(&small, t) - 1e-12);
    }

    #[test]
    fn constant_shift_multiplies_by_exp_ct(values in prop::collection::vec(-2.0f64..2.0, 9), c in -3.0f64..3.0, t in 0.1f64..3.0) {
        let xi = field(2, 1, &values);
        let shifted = xi.map(|v| v + c);
        prop_assert!((u_at_origin(&shifted, t) - u_at_origin(&xi, t) - c * t).abs() < 1e-9);
    }

    #[test]
    fn entropy_functional_is_bounded_below_by_its_minimum(
        amps in prop::collection::vec(-1.0f64..1.0, 3),
        centers in prop::collection::vec(-1.5f64..1.5, 3),
        rho in 0.5f64..3.0,
    ) {
        let grid = Grid::cartesian(1, 0.025, 8.0).unwrap();
        let g = Profile::from_fn(grid, |x| {
            amps.iter().zip(&centers).map(|(a, c)| a * (-(x[0] - c).powi(2)).exp()).sum::<f64>()
                + 1e-3 * (-0.5 * x[0] * x[0]).exp()
        })
        .normalized_l2();
        prop_assert!(!log_sobolev_gap(&g, rho).violated);
        let value = functional(&g, Nonlinearity::Entropy { rho });
        prop_assert!(value >= chi_closed_form(rho, 1) - 1e-6);
    }
}
