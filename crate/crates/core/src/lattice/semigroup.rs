use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::eigen::eig_operator;
use super::{AndersonOperator, EigCount, EigenDecomposition, LatticeField};
use crate::error::{invalid, PamError, Result};
use crate::numerics::linalg::{dot, norm};

/// Relative accuracy requested from the Krylov integrator.
const KRYLOV_TOL: f64 = 1e-12;
const KRYLOV_DIM: usize = 40;
const MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemigroupMethod {
    /// Full eigenfunction expansion (dense spectrum).
    Eigen,
    /// Time stepping of the ODE `u' = (Δ^d + V)u` by an adaptive Krylov
    /// exponential integrator.
    Ode,
}

/// A field stored as `exp(log_scale) * values`, so that solutions which
/// overflow `f64` can still be handled.
#[derive(Debug, Clone)]
pub struct ScaledField {
    pub log_scale: f64,
    pub values: LatticeField,
}

impl ScaledField {
    /// `log Σ_z u(z)`; `-inf` if the field vanishes.
    pub fn log_sum(&self) -> f64 {
        self.log_scale + self.values.sum().ln()
    }

    /// Logarithm of the value at box index `i`.
    pub fn log_value(&self, i: usize) -> f64 {
        self.log_scale + self.values.values[i].ln()
    }

    /// The plain field; fails when some entry overflows.
    pub fn to_field(&self) -> Result<LatticeField> {
        let s = self.log_scale.exp();
        let out = self.values.map(|x| x * s);
        if let Some(bad) = out.values.iter().find(|x| !x.is_finite()) {
            return Err(PamError::NonFinite { t: f64::NAN, value: *bad });
        }
        Ok(out)
    }
}

/// `e^{t(Δ^d + V)} init` with zero boundary condition, returned in plain form.
///
/// Errors with [`PamError::NonFinite`] if the result overflows; use
/// [`semigroup_apply_scaled`] when `t · max V` is large.
pub fn semigroup_apply(v: &LatticeField, t: f64, init: &LatticeField, method: SemigroupMethod) -> Result<LatticeField> {
    let scaled = semigroup_apply_scaled(v, t, init, method)?;
    scaled.to_field().map_err(|e| match e {
        PamError::NonFinite { value, .. } => PamError::NonFinite { t, value },
        other => other,
    })
}

/// `e^{t(Δ^d + V)} init` carried with a separate logarithmic scale.
///
/// The generator is shifted by an upper bound of its spectrum before
/// exponentiating, so the stored values never overflow.
pub fn semigroup_apply_scaled(
    v: &LatticeField,
    t: f64,
    init: &LatticeField,
    method: SemigroupMethod,
) -> Result<ScaledField> {
    check_inputs(v, t, init)?;
    if t == 0.0 {
        return Ok(ScaledField { log_scale: 0.0, values: init.clone() });
    }
    let op = AndersonOperator::new(v);
    if op.dim() == 0 {
        return Ok(ScaledField { log_scale: 0.0, values: LatticeField::constant(v.lbox.clone(), 0.0) });
    }
    match method {
        SemigroupMethod::Eigen => {
            let dec = eig_operator(op, EigCount::All, 1e-8)?;
            Ok(apply_decomposition(&dec, t, init))
        }
        SemigroupMethod::Ode => {
            let b = op.restrict(init);
            let shift = op.spectral_upper_bound();
            let mut u = krylov_expv(&op, shift, t, &b)?;
            if init.values.iter().all(|x| *x >= 0.0) {
                u.iter_mut().for_each(|x| *x = x.max(0.0));
            }
            Ok(ScaledField { log_scale: t * shift, values: op.extend(&u) })
        }
    }
}

/// Eigenfunction expansion `Σ_k e^{tλ_k} ⟨e_k, init⟩ e_k` from an already
/// computed full spectrum.
pub fn apply_decomposition(dec: &EigenDecomposition, t: f64, init: &LatticeField) -> ScaledField {
    let op = dec.operator();
    let b = op.restrict(init);
    let top = dec.eigenvalues[0];
    let mut u = vec![0.0; op.dim()];
    for (lam, e) in dec.eigenvalues.iter().zip(&dec.eigenvectors) {
        let c = dot(e, &b) * (t * (lam - top)).exp();
        if c != 0.0 {
            u.iter_mut().zip(e).for_each(|(acc, x)| *acc += c * x);
        }
    }
    if init.values.iter().all(|x| *x >= 0.0) {
        u.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    ScaledField { log_scale: t * top, values: op.extend(&u) }
}

fn check_inputs(v: &LatticeField, t: f64, init: &LatticeField) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    if v.lbox != init.lbox {
        return invalid("potential and initial datum live on different boxes");
    }
    if init.values.iter().any(|x| !x.is_finite()) {
        return invalid("initial datum must be finite");
    }
    Ok(())
}

/// `e^{t(A - shift)} b` by adaptive Krylov stepping. `A - shift` is negative
/// semidefinite, so the iterate norm is nonincreasing.
fn krylov_expv(op: &AndersonOperator, shift: f64, t: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = op.dim();
    let m_max = KRYLOV_DIM.min(n);
    let mut w = b.to_vec();
    let mut done = 0.0;
    let mut tau = t;
    let mut steps = 0;
    let scale0 = norm(b).max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    let mut av = vec![0.0; n];
    while done < t {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(PamError::NotConverged {
                what: "Krylov exponential integrator",
                iterations: MAX_STEPS,
                residual: t - done,
            });
        }
        let beta = norm(&w);
        if beta == 0.0 {
            break;
        }
        // Lanczos with full reorthogonalisation
        basis.clear();
        basis.push(w.iter().map(|x| x / beta).collect());
        let mut alpha = Vec::with_capacity(m_max);
        let mut offd = Vec::with_capacity(m_max);
        let mut h_next = 0.0;
        let mut happy = false;
        for j in 0..m_max {
            op.apply_shifted(&basis[j], &mut av, shift);
            let a = dot(&av, &basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&av, q);
                    av.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let hb = norm(&av);
            if hb <= 1e-13 * (a.abs() + 1.0) || basis.len() == n {
                happy = true;
                break;
            }
            if j + 1 == m_max {
                h_next = hb;
                break;
            }
            offd.push(hb);
            basis.push(av.iter().map(|x| x / hb).collect());
        }
        let m = alpha.len();
        let mut tm = DMatrix::zeros(m, m);
        for i in 0..m {
            tm[(i, i)] = alpha[i];
            if i + 1 < m {
                tm[(i, i + 1)] = offd[i];
                tm[(i + 1, i)] = offd[i];
            }
        }
        let se = SymmetricEigen::new(tm);
        let remaining = t - done;
        tau = tau.min(remaining);
        loop {
            // c = e^{τT} e1 and the last component of τ φ1(τT) e1
            let mut c = vec![0.0; m];
            let mut phi_last = 0.0;
            for k in 0..m {
                let q0 = se.eigenvectors[(0, k)];
                let x = tau * se.eigenvalues[k];
                let ex = x.exp();
                let phi = if x.abs() < 1e-8 { 1.0 + 0.5 * x } else { (ex - 1.0) / x };
                for (i, ci) in c.iter_mut().enumerate() {
                    *ci += se.eigenvectors[(i, k)] * q0 * ex;
                }
                phi_last += se.eigenvectors[(m - 1, k)] * q0 * phi * tau;
            }
            let err = if happy { 0.0 } else { beta * h_next * phi_last.abs() };
            let allowed = KRYLOV_TOL * scale0 * (tau / t);
            if err <= allowed || tau < 1e-14 * t {
                let mut next = vec![0.0; n];
                for (ci, q) in c.iter().zip(&basis) {
                    next.iter_mut().zip(q).for_each(|(x, y)| *x += beta * ci * y);
                }
                w = next;
                done += tau;
                if happy {
                    // the Krylov space is invariant: one step reaches any time
                    tau = t - done;
                } else if err < 0.1 * allowed {
                    tau *= 2.0;
                }
                break;
            }
            tau *= 0.5;
        }
        if happy && done < t {
            continue;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn pseudo_random(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| 6.0 * (((i as f64 + seed) * 12.9898).sin() * 43758.5453).fract().abs() - 3.0).collect()
    }

    #[test]
    fn zero_time_is_identity() {
        let b = LatticeBox::centered(1, 3);
        let v = LatticeField::new(b.clone(), pseudo_random(7, 1.0)).unwrap();
        let f = LatticeField::new(b, (0..7).map(|i| i as f64).collect()).unwrap();
        for m in [SemigroupMethod::Eigen, SemigroupMethod::Ode] {
            assert_eq!(semigroup_apply(&v, 0.0, &f, m).unwrap().values, f.values);
        }
    }

    #[test]
    fn free_mass_is_nonincreasing_and_bounded() {
        let b = LatticeBox::centered(2, 3);
        let v = LatticeField::constant(b.clone(), 0.0);
        let one = LatticeField::constant(b.clone(), 1.0);
        let mut prev = b.len() as f64;
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let mass = semigroup_apply(&v, t, &one, SemigroupMethod::Ode).unwrap().sum();
            assert!(mass <= prev + 1e-12);
            prev = mass;
        }
    }

    #[test]
    fn constant_shift_factorizes() {
        let b = LatticeBox::centered(1, 4);
        let zero = LatticeField::constant(b.clone(), 0.0);
        let c = LatticeField::constant(b.clone(), 0.8);
        let one = LatticeField::constant(b, 1.0);
        for m in [SemigroupMethod::Eigen, SemigroupMethod::Ode] {
            let a = semigroup_apply(&zero, 1.7, &one, m).unwrap();
            let s = semigroup_apply(&c, 1.7, &one, m).unwrap();
            for (x, y) in a.values.iter().zip(&s.values) {
                assert!((y - (0.8f64 * 1.7).exp() * x).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn methods_agree_on_random_potentials() {
        for seed in 0..5 {
            for (d, r) in [(1, 4), (2, 2)] {
                let b = LatticeBox::centered(d, r);
                let v = LatticeField::new(b.clone(), pseudo_random(b.len(), seed as f64)).unwrap();
                let one = LatticeField::constant(b, 1.0);
                let a = semigroup_apply(&v, 1.3, &one, SemigroupMethod::Eigen).unwrap();
                let o = semigroup_apply(&v, 1.3, &one, SemigroupMethod::Ode).unwrap();
                let diff = a.values.iter().zip(&o.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-9, "seed {seed} d {d}: {diff}");
            }
        }
    }

    #[test]
    fn semigroup_property() {
        let b = LatticeBox::centered(1, 10);
        let v = LatticeField::new(b.clone(), pseudo_random(21, 3.0)).unwrap();
        let f = LatticeField::delta(b, &[2]).unwrap();
        let whole = semigroup_apply(&v, 1.5, &f, SemigroupMethod::Ode).unwrap();
        let half = semigroup_apply(&v, 0.6, &f, SemigroupMethod::Ode).unwrap();
        let two = semigroup_apply(&v, 0.9, &half, SemigroupMethod::Ode).unwrap();
        for (x, y) in whole.values.iter().zip(&two.values) {
            assert!((x - y).abs() < 1e-8 * whole.max().max(1.0));
        }
    }

    #[test]
    fn large_potential_stays_finite_in_log_space() {
        let b = LatticeBox::centered(1, 2);
        let v = LatticeField::constant(b.clone(), 500.0);
        let one = LatticeField::constant(b, 1.0);
        let s = semigroup_apply_scaled(&v, 10.0, &one, SemigroupMethod::Ode).unwrap();
        let e = semigroup_apply_scaled(&v, 10.0, &one, SemigroupMethod::Eigen).unwrap();
        assert!(s.log_sum().is_finite());
        assert!((s.log_sum() - e.log_sum()).abs() < 1e-9);
        assert!(semigroup_apply(&v, 10.0, &one, SemigroupMethod::Ode).is_err());
    }

    #[test]
    fn trap_sites_stay_empty() {
        let b = LatticeBox::centered(1, 2);
        let v = LatticeField::new(b.clone(), vec![0.0, f64::NEG_INFINITY, 0.0, 0.0, 0.0]).unwrap();
        let one = LatticeField::constant(b, 1.0);
        let u = semigroup_apply(&v, 1.0, &one, SemigroupMethod::Ode).unwrap();
        assert_eq!(u.values[1], 0.0);
        assert!(u.values[0] > 0.0);
    }
}
