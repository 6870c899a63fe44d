use crate::error::{PamError, Result};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` couples row `i` to `i - 1` (ignored for `i = 0`), `upper[i]`
/// couples row `i` to `i + 1` (ignored for the last row).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradient for an SPD operator.
///
/// `apply(x, out)` writes `A x` into `out`; `diag` is the diagonal of `A`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    diag: &[f64],
    rhs: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = norm(rhs).max(f64::MIN_POSITIVE);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rn = norm(&r);
        if rn <= rel_tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            break;
        }
    }
    let rn = norm(&r);
    if rn <= rel_tol * bnorm {
        Ok(x)
    } else {
        Err(PamError::NotConverged { what: "conjugate gradient", iterations: max_iter, residual: rn / bnorm })
    }
}
