use super::*;
use crate::numerics::quad::integrate;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn closed_form_examples() {
    assert!((chi_closed_form(PI, 3) - 3.0 * PI).abs() < 1e-12);
    assert!((chi_closed_form(1.0, 1) - 1.572_364_942_924_7).abs() < 1e-12);
    assert!((chi_tilde_closed_form(E, 2) - chi_closed_form(E, 2)).abs() < 1e-12);
    assert!((chi_tilde_closed_form(1.0, 1) - 0.5 * PI.ln()).abs() < 1e-12);
    for rho in [1e-3, 1e-6, 1e-9] {
        let r = chi_closed_form(rho, 2) / (2.0 * rho * (1.0 - 0.5 * (rho / PI).ln()));
        assert_eq!(r, 1.0);
    }
}

#[test]
fn chi_numeric_one_dimension() {
    let grid = default_grid(1.0, 1, false).unwrap();
    let sol = chi_numeric(1.0, &grid).unwrap();
    assert!((sol.value - 1.57236).abs() < 1e-3, "{}", sol.value);
    assert!(sol.gradient_norm < FLOW_TOL);
    let b = sol.minimizer.barycenter()[0];
    let g = Profile::from_fn(grid, |x| PI.powf(-0.25) * (-0.5 * (x[0] - b).powi(2)).exp());
    assert!(sol.minimizer.sup_distance(&g) < 1e-2);
}

#[test]
fn chi_numeric_radial_two_dimensions() {
    let grid = default_grid(PI, 2, true).unwrap();
    let sol = chi_numeric(PI, &grid).unwrap();
    assert!((sol.value - 2.0 * PI).abs() < 1e-2, "{}", sol.value);
}

#[test]
fn chi_numeric_cartesian_two_dimensions_spot_check() {
    let grid = Grid::cartesian(2, 0.1, 5.0).unwrap();
    let sol = chi_numeric(1.0, &grid).unwrap();
    assert!((sol.value - chi_closed_form(1.0, 2)).abs() < 1e-2, "{}", sol.value);
}

#[test]
fn flow_started_at_gaussian_stays_put() {
    let grid = default_grid(2.0, 1, false).unwrap();
    let g = Profile::gaussian(grid, 2.0);
    let nl = Nonlinearity::Entropy { rho: 2.0 };
    let sol = minimize(&g, nl, FlowOptions::default()).unwrap();
    assert!((sol.value - functional(&g, nl)).abs() < 1e-6);
    assert!(sol.minimizer.sup_distance(&g) < 1e-3);
}

#[test]
fn grid_refinement_changes_value_little() {
    let a = chi_numeric(1.0, &Grid::cartesian(1, 0.05, 5.0).unwrap()).unwrap();
    let b = chi_numeric(1.0, &Grid::cartesian(1, 0.025, 5.0).unwrap()).unwrap();
    assert!((a.value - b.value).abs() < 4e-3);
    // second-order stencil: error ratio close to 4
    let exact = chi_closed_form(1.0, 1);
    let ratio = (a.value - exact) / (b.value - exact);
    assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
}

#[test]
fn entropy_examples() {
    for (grid, rho) in [(default_grid(1.0, 1, false).unwrap(), 1.0), (default_grid(2.0, 2, true).unwrap(), 2.0)] {
        let d = grid.dim() as f64;
        // midpoint rule on shells is second order
        let tol = if matches!(grid, Grid::Radial { .. }) { 1e-4 } else { 1e-8 };
        let gsq = Profile::gaussian(grid, rho).map(|x| x * x);
        let exact = rho * (d / 2.0 * (rho / PI).ln() - d / 2.0);
        assert!((entropy_functional(&gsq, rho) - exact).abs() < tol);
    }
    // independent oracle for the Gaussian moment integral
    let q = integrate(
        |x| {
            let s = (-x * x).exp() / PI.sqrt();
            s * s.ln()
        },
        -12.0,
        12.0,
        1e-14,
        1e-13,
    )
    .unwrap();
    assert!((q.value - (0.5 * (1.0 / PI).ln() - 0.5)).abs() < 1e-10);

    let grid = Grid::cartesian(1, 0.5, 2.0).unwrap();
    let n = grid.len() as f64;
    let uniform = Profile::from_fn(grid.clone(), |_| 1.0 / (0.5 * n));
    assert!((entropy_functional(&uniform, 3.0) + 3.0 * (0.5 * n).ln()).abs() < 1e-12);
    let half = Profile::from_fn(grid, |x| if x[0] < 0.0 { 2.0 / (0.5 * n) } else { 0.0 });
    let half = half.map(|v| v / half.integral());
    assert!(entropy_functional(&half, 1.0) > entropy_functional(&uniform, 1.0));
}

#[test]
fn legendre_examples() {
    for (rho, d) in [(1.0, 1), (PI, 1), (1.0, 2)] {
        let grid = Grid::cartesian(d, 0.05 / f64::sqrt(rho), 6.0 / f64::sqrt(rho)).unwrap();
        let psi = Profile::parabola(grid, rho);
        assert!((legendre_l(&psi, rho).unwrap() - rho).abs() < 1e-6);
        let shifted = psi.map(|p| p + 0.7);
        let ratio = legendre_l(&shifted, rho).unwrap() / legendre_l(&psi, rho).unwrap();
        assert!((ratio - (0.7 / rho).exp()).abs() < 1e-10);
    }
    let grid = Grid::cartesian(1, 0.25, 2.0).unwrap();
    let vol = grid.len() as f64 * 0.25;
    let rho = 1.7;
    let flat = Profile::from_fn(grid, |_| rho * (1.0 - vol.ln()));
    assert!((legendre_l(&flat, rho).unwrap() - rho).abs() < 1e-12);
    assert!(legendre_l(&flat.map(|_| 1e6), 1.0).is_err());
}

#[test]
fn spectral_lambda_examples() {
    let grid = default_grid(1.0, 1, false).unwrap();
    let lam = spectral_lambda(&Profile::parabola(grid, 1.0)).unwrap();
    assert!((lam + 0.5 * PI.ln()).abs() < 1e-2, "{lam}");

    for d in [1, 2] {
        let grid = Grid::cartesian(d, 0.1, 3.0).unwrap();
        let l = grid.half_width();
        let lam = spectral_lambda(&Profile::from_fn(grid, |_| 0.0)).unwrap();
        let exact = -(d as f64) * (PI / (2.0 * l)).powi(2);
        assert!((lam / exact - 1.0).abs() < 0.02, "{lam} {exact}");
    }
    let grid = Grid::cartesian(1, 0.1, 30.0).unwrap();
    let lam = spectral_lambda(&Profile::from_fn(grid, |_| 5.0)).unwrap();
    assert!((lam - 5.0).abs() < 5e-3);

    // radial and Cartesian agree on a radial potential
    let rg = default_grid(1.0, 2, true).unwrap();
    let cg = Grid::cartesian(2, 0.05, 5.0).unwrap();
    let a = spectral_lambda(&Profile::parabola(rg, 1.0)).unwrap();
    let b = spectral_lambda(&Profile::parabola(cg, 1.0)).unwrap();
    assert!((a - lambda_parabola_closed_form(1.0, 2)).abs() < 1e-2);
    assert!((b - lambda_parabola_closed_form(1.0, 2)).abs() < 1e-2);
}

#[test]
fn chi_tilde_certificate() {
    let grid = default_grid(1.0, 1, false).unwrap();
    let c = chi_tilde(1.0, &grid).unwrap();
    assert!((c.value - 0.5 * PI.ln()).abs() < 1e-12);
    assert!((c.l_value - 1.0).abs() < 1e-6);
    assert!((c.minus_lambda - c.value).abs() < 1e-2);
    let g2 = default_grid(E, 1, false).unwrap();
    let ce = chi_tilde(E, &g2).unwrap();
    assert!((ce.value - chi_closed_form(E, 1)).abs() < 1e-12);
}

#[test]
fn discrete_examples() {
    // the point mass has value 2d, so the minimum lies below
    for d in [1, 2] {
        for delta in [0.1, 1.0, 10.0] {
            let radius = if d == 1 { discrete_radius(delta) } else { discrete_radius(delta).min(15) };
            let sol = chi_discrete(delta, d, radius, 1e-8).unwrap();
            assert!(sol.value <= 2.0 * d as f64 + 1e-12);
            assert!(sol.value > 0.0);
        }
    }
    let mut point = vec![0.0; 9];
    point[4] = 1.0;
    let p = Profile::new(Grid::lattice(1, 4), point).unwrap();
    assert!((functional(&p, Nonlinearity::Entropy { rho: 3.0 }) - 2.0).abs() < 1e-15);

    let small = chi_discrete(0.0, 1, 10, 1e-8).unwrap().value;
    let large = chi_discrete(0.0, 1, 40, 1e-8).unwrap().value;
    assert!(large < small && large < 0.01);

    let delta = 0.02;
    let sol = chi_discrete(delta, 1, discrete_radius(delta), 1e-8).unwrap();
    let asym = delta / 2.0 * (PI * E * E / delta).ln();
    assert!((sol.value / asym - 1.0).abs() < 0.15, "{} {}", sol.value, asym);

    let mut prev = 0.0;
    for delta in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
        let v = chi_discrete(delta, 1, discrete_radius(delta), 1e-8).unwrap().value;
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn gamma_gaussian_oracle() {
    for (rho, d, gamma) in [(1.0, 1, 0.5), (2.0, 1, 0.9), (1.0, 2, 0.7)] {
        let grid = default_grid(rho, d, d > 1).unwrap();
        let g = Profile::gaussian(grid, rho);
        let v = gamma_functional(&g, rho, gamma);
        assert!((v - gaussian_gamma_value(rho, gamma, d)).abs() < 1e-4, "{v}");
    }
    // the closed form itself against quadrature (d = 1)
    let (rho, gamma) = (1.3, 0.6);
    let g = |x: f64| (rho / PI).powf(0.25) * (-0.5 * rho * x * x).exp();
    let q = integrate(|x| g(x).powf(2.0 * gamma), -40.0, 40.0, 1e-14, 1e-13).unwrap().value;
    let form = rho / 2.0 + rho * (q - 1.0) / (1.0 - gamma);
    assert!((form - gaussian_gamma_value(rho, gamma, 1)).abs() < 1e-10);
}

#[test]
fn gamma_values_decrease_to_entropy_constant() {
    let rho = 1.0;
    let grid = default_grid(rho, 1, false).unwrap();
    let chi = chi_numeric(rho, &grid).unwrap().value;
    let mut gaps = Vec::new();
    for gamma in [0.5, 0.9, 0.99] {
        let sol = chi_gamma(rho, gamma, &grid).unwrap();
        assert!(sol.value <= gaussian_gamma_value(rho, gamma, 1) + 1e-4);
        gaps.push(sol.value - chi);
    }
    assert!(gaps.iter().all(|g| *g > 0.0), "{gaps:?}");
    assert!(gaps[0] > gaps[1] && gaps[1] * 0.5 >= gaps[2], "{gaps:?}");
}

#[test]
fn support_problem_matches_interval_formula() {
    let grid = default_grid(1.0, 1, false).unwrap();
    let sol = chi_gamma(2.0, 0.0, &grid).unwrap();
    // interval of length l: (π/l)² + ρl - ρ, optimum at l = (2π²/ρ)^{1/3}
    let l = (2.0 * PI * PI / 2.0f64).powf(1.0 / 3.0);
    assert!((sol.value - ((PI / l).powi(2) + 2.0 * l - 2.0)).abs() < 1e-12);
    assert!((sol.minimizer.l2_norm_sq() - 1.0).abs() < 1e-10);
}

fn random_profile(grid: &Grid, rng: &mut ChaCha8Rng) -> Profile {
    let d = grid.dim();
    let bumps: Vec<(f64, Vec<f64>, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            let amp = rng.random_range(-1.0..1.0);
            let center = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let width = rng.random_range(0.4..1.5);
            (amp, center, width)
        })
        .collect();
    Profile::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|(a, c, w)| {
                let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum::<f64>()
            + 1e-3 * (-0.5 * profile::norm_sq(x)).exp()
    })
    .normalized_l2()
}

#[test]
fn log_sobolev_gap_examples() {
    let grid = Grid::cartesian(1, 0.025, 8.0).unwrap();
    for rho in [0.5, 1.0, 3.0] {
        let g = Profile::gaussian(grid.clone(), rho);
        assert!(log_sobolev_gap(&g, rho).raw.abs() < 1e-4);
        let shifted =
            Profile::from_fn(grid.clone(), |x| (rho / PI).powf(0.25) * (-0.5 * rho * (x[0] - 0.37).powi(2)).exp());
        assert!(log_sobolev_gap(&shifted, rho).raw.abs() < 1e-4);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..30 {
        let p = random_profile(&grid, &mut rng);
        let gap = log_sobolev_gap(&p, 0.5 + (k % 4) as f64);
        assert!(!gap.violated, "{gap:?}");
    }
}

#[test]
fn dual_gap_examples() {
    let grid = default_grid(1.0, 1, false).unwrap();
    let psi = Profile::parabola(grid.clone(), 1.0);
    let gap = dual_gap(&psi, 1.0).unwrap();
    assert!(gap.gap.abs() < 1e-2);
    assert!((gap.unit_rho_form - (gap.l_value - gap.lambda)).abs() < 1e-10);
    let bumped = Profile::from_fn(grid, |x| {
        let base = 1.0 + 0.5 * (1.0 / PI).ln() - x[0] * x[0];
        base + 0.1 * (-(x[0] - 0.5).powi(2) * 4.0).exp()
    });
    assert!(dual_gap(&bumped, 1.0).unwrap().gap > gap.gap + 1e-4);
}

#[test]
fn duality_chain_at_numerical_minimizer() {
    let rho = 1.0;
    let grid = default_grid(rho, 1, false).unwrap();
    let sol = chi_numeric(rho, &grid).unwrap();
    let psi = sol.minimizer.map(|g| rho + rho * (g * g).max(SQ_FLOOR).ln());
    let l = legendre_l(&psi, rho).unwrap();
    let lam = spectral_lambda(&psi).unwrap();
    assert!((l - lam - sol.value).abs() < 5e-2);
}
