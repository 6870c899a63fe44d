use nalgebra::{DMatrix, SymmetricEigen};

use super::{AndersonOperator, LatticeField};
use crate::error::{invalid, PamError, Result};
use crate::numerics::linalg::{dot, norm};
use crate::seed::splitmix64;

/// Largest box handled by the dense path.
pub const DENSE_LIMIT: usize = 4096;

/// Boxes at most this large always go through the dense solver.
const SMALL_DENSE: usize = 256;

const MAX_BASIS: usize = 300;
const MAX_RESTARTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigCount {
    All,
    Top(usize),
}

/// Eigenpairs of `Δ^d + V` with zero boundary condition, eigenvalues in
/// descending order. Eigenvectors are stored on the operator's active sites.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// max over pairs of `‖(Δ^d+V)e - λe‖₂`
    pub max_residual: f64,
    op: AndersonOperator,
}

impl EigenDecomposition {
    pub fn operator(&self) -> &AndersonOperator {
        &self.op
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenfunction `k` extended by zero to the whole box.
    pub fn eigenfunction(&self, k: usize) -> LatticeField {
        self.op.extend(&self.eigenvectors[k])
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..=i {
                let g = dot(&self.eigenvectors[i], &self.eigenvectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Spectrum of `Δ^d + V` on the box carried by `v`.
///
/// `EigCount::All` (or any request on a small box) uses a dense symmetric
/// solve; `Top(k)` on larger boxes runs a restarted Lanczos iteration with full
/// reorthogonalisation from a fixed start vector, so repeated calls are
/// bit-identical. `tol` bounds the eigenpair residual `‖Ae - λe‖₂`.
pub fn eig(v: &LatticeField, count: EigCount, tol: f64) -> Result<EigenDecomposition> {
    eig_operator(AndersonOperator::new(v), count, tol)
}

pub(crate) fn eig_operator(op: AndersonOperator, count: EigCount, tol: f64) -> Result<EigenDecomposition> {
    let n = op.dim();
    if n == 0 {
        return invalid("every site of the box is a trap");
    }
    let want = match count {
        EigCount::All => n,
        EigCount::Top(k) => {
            if k == 0 || k > n {
                return invalid(format!("requested {k} eigenpairs of a {n}-site operator"));
            }
            k
        }
    };
    let dense = matches!(count, EigCount::All) || n <= SMALL_DENSE;
    let (vals, vecs) = if dense {
        if n > DENSE_LIMIT {
            return Err(PamError::DenseLimit { sites: n, limit: DENSE_LIMIT });
        }
        dense_eig(&op, want)
    } else {
        lanczos_top(&op, want, tol)?
    };
    let mut dec = EigenDecomposition { eigenvalues: vals, eigenvectors: vecs, max_residual: 0.0, op };
    dec.max_residual = residual(&dec);
    if dec.max_residual > tol.max(1e-8) {
        return Err(PamError::NotConverged { what: "eigensolver", iterations: 0, residual: dec.max_residual });
    }
    Ok(dec)
}

fn residual(dec: &EigenDecomposition) -> f64 {
    let n = dec.op.dim();
    let mut av = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for (lam, v) in dec.eigenvalues.iter().zip(&dec.eigenvectors) {
        dec.op.apply(v, &mut av);
        let r: f64 = av.iter().zip(v).map(|(a, x)| (a - lam * x) * (a - lam * x)).sum::<f64>().sqrt();
        worst = worst.max(r);
    }
    worst
}

/// Makes the sign deterministic: largest-magnitude entry positive, ties
/// resolved by the first index.
fn fix_sign(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    let flip = if s.abs() > 1e-10 {
        s < 0.0
    } else {
        let (mut best, mut idx) = (0.0, 0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best + 1e-12 {
                best = x.abs();
                idx = i;
            }
        }
        v[idx] < 0.0
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense_eig(op: &AndersonOperator, want: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let se = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let mut vals = Vec::with_capacity(want);
    let mut vecs = Vec::with_capacity(want);
    for &k in order.iter().take(want) {
        vals.push(se.eigenvalues[k]);
        let mut v: Vec<f64> = se.eigenvectors.column(k).iter().copied().collect();
        fix_sign(&mut v);
        vecs.push(v);
    }
    (vals, vecs)
}

/// Deterministic start vector: ones plus a fixed pseudo-random perturbation
/// of size 1/2, so that no eigenvector (in particular odd modes of symmetric
/// potentials, which are orthogonal to the all-ones vector) is missed.
fn start_vector(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let u = (splitmix64(0x5eed_0000 + i as u64) >> 11) as f64 / (1u64 << 53) as f64;
            1.0 + (u - 0.5)
        })
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Gram–Schmidt (applied twice) of `w` against the columns of `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn lanczos_top(op: &AndersonOperator, want: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = op.dim();
    let max_basis = MAX_BASIS.min(n).max(want + 2);
    let keep = (want + 8).min(max_basis / 2).max(want);
    let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut next: Option<Vec<f64>> = None;
    let mut worst_res = f64::INFINITY;
    let mut seed_counter = 0usize;
    for _restart in 0..MAX_RESTARTS {
        // extend the basis
        loop {
            while images.len() < basis.len() {
                let mut w = vec![0.0; n];
                op.apply(&basis[images.len()], &mut w);
                images.push(w);
            }
            if basis.len() >= max_basis {
                break;
            }
            let mut w = next.take().unwrap_or_else(|| images.last().unwrap().clone());
            orthogonalize(&mut w, &basis);
            let mut nw = norm(&w);
            if nw < 1e-10 {
                // invariant subspace: continue with a fresh deterministic direction
                if basis.len() == n {
                    break;
                }
                seed_counter += 1;
                w = (0..n).map(|i| ((i as f64 + 1.0) * (seed_counter as f64 + 0.5) * 0.754_877_666).sin()).collect();
                orthogonalize(&mut w, &basis);
                nw = norm(&w);
                if nw < 1e-10 {
                    break;
                }
            }
            w.iter_mut().for_each(|x| *x /= nw);
            basis.push(w);
        }
        // Rayleigh–Ritz
        let m = basis.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let se = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
        let ritz = |k: usize, src: &[Vec<f64>]| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (i, b) in src.iter().enumerate() {
                let c = se.eigenvectors[(i, k)];
                y.iter_mut().zip(b).for_each(|(acc, x)| *acc += c * x);
            }
            y
        };
        let n_keep = keep.min(m);
        let mut new_basis = Vec::with_capacity(n_keep);
        let mut new_images = Vec::with_capacity(n_keep);
        let mut residuals = Vec::with_capacity(n_keep);
        for &k in order.iter().take(n_keep) {
            let y = ritz(k, &basis);
            let ay = ritz(k, &images);
            let theta = se.eigenvalues[k];
            let r: Vec<f64> = ay.iter().zip(&y).map(|(a, x)| a - theta * x).collect();
            residuals.push(r);
            new_basis.push(y);
            new_images.push(ay);
        }
        worst_res = residuals[..want].iter().map(|r| norm(r)).fold(0.0, f64::max);
        if worst_res <= tol || m == n {
            let mut vals = Vec::with_capacity(want);
            let mut vecs = Vec::with_capacity(want);
            for (i, &k) in order.iter().take(want).enumerate() {
                vals.push(se.eigenvalues[k]);
                let mut v = new_basis[i].clone();
                let nv = norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                fix_sign(&mut v);
                vecs.push(v);
            }
            return Ok((vals, vecs));
        }
        // thick restart: keep the leading Ritz vectors, continue from the
        // residual of the first unconverged wanted pair
        let first_bad = residuals[..want].iter().position(|r| norm(r) > tol).unwrap_or(0);
        next = Some(residuals[first_bad].clone());
        basis = new_basis;
        images = new_images;
    }
    Err(PamError::NotConverged { what: "restarted Lanczos", iterations: MAX_RESTARTS, residual: worst_res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    #[test]
    fn single_site_eigenvalue() {
        let v = LatticeField::constant(LatticeBox::centered(2, 0), 0.7);
        let e = eig(&v, EigCount::All, 1e-10).unwrap();
        assert_eq!(e.eigenvalues.len(), 1);
        assert!((e.eigenvalues[0] - (0.7 - 4.0)).abs() < 1e-14);
    }

    #[test]
    fn free_dirichlet_chain_spectrum() {
        let n = 9;
        let v = LatticeField::constant(LatticeBox::centered(1, 4), 0.0);
        let e = eig(&v, EigCount::All, 1e-10).unwrap();
        for k in 1..=n {
            let exact = -2.0 + 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((e.eigenvalues[k - 1] - exact).abs() < 1e-12);
        }
        assert!(e.orthonormality_defect() < 1e-10);
        assert!(e.max_residual < 1e-8);
    }

    #[test]
    fn constant_shift_moves_top_eigenvalue() {
        let b = LatticeBox::centered(1, 5);
        let vals: Vec<f64> = (0..11).map(|i| ((i * 7) % 5) as f64 * 0.3).collect();
        let v = LatticeField::new(b.clone(), vals.clone()).unwrap();
        let w = LatticeField::new(b, vals.iter().map(|x| x + 1.25).collect()).unwrap();
        let a = eig(&v, EigCount::Top(1), 1e-10).unwrap().eigenvalues[0];
        let c = eig(&w, EigCount::Top(1), 1e-10).unwrap().eigenvalues[0];
        assert!((c - a - 1.25).abs() < 1e-12);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let b = LatticeBox::centered(2, 12); // 625 sites, above the small-dense cutoff
        let vals: Vec<f64> = (0..b.len()).map(|i| 3.0 * ((i as f64 * 12.9898).sin() * 43758.5453).fract()).collect();
        let v = LatticeField::new(b, vals).unwrap();
        let top = eig(&v, EigCount::Top(4), 1e-10).unwrap();
        let all = eig(&v, EigCount::All, 1e-10).unwrap();
        for k in 0..4 {
            assert!(
                (top.eigenvalues[k] - all.eigenvalues[k]).abs() < 1e-9,
                "k={k}: {} vs {}",
                top.eigenvalues[k],
                all.eigenvalues[k]
            );
        }
        assert!(top.max_residual < 1e-8);
        assert!(top.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn lanczos_finds_odd_modes_of_symmetric_potential() {
        let v = LatticeField::constant(LatticeBox::centered(1, 200), 0.0);
        let e = eig(&v, EigCount::Top(2), 1e-10).unwrap();
        let n = 401.0;
        let exact2 = -2.0 + 2.0 * (2.0 * std::f64::consts::PI / (n + 1.0)).cos();
        assert!((e.eigenvalues[1] - exact2).abs() < 1e-9, "{:?} vs {exact2}", e.eigenvalues);
    }

    #[test]
    fn perron_vector_is_positive() {
        let b = LatticeBox::centered(1, 3);
        let v = LatticeField::new(b, vec![0.1, -1.0, 0.4, 2.0, -0.5, 0.3, 0.0]).unwrap();
        let e = eig(&v, EigCount::All, 1e-10).unwrap();
        assert!(e.eigenvectors[0].iter().all(|x| *x > 0.0));
        assert!(e.eigenvalues[0] > e.eigenvalues[1]);
    }
}
