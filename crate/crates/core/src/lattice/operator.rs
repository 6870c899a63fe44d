use nalgebra::DMatrix;

use super::{LatticeBox, LatticeField};
use crate::error::{invalid, Result};

/// `Δ^d f` with zero boundary condition: neighbours outside the box
/// contribute the value 0, so the diagonal is always `-2d`.
pub fn laplacian_apply(f: &LatticeField) -> Result<LatticeField> {
    if f.values.iter().any(|v| !v.is_finite()) {
        return invalid("laplacian_apply requires a finite field");
    }
    let b = &f.lbox;
    let two_d = 2.0 * b.dim() as f64;
    let mut nb = Vec::with_capacity(2 * b.dim());
    let values = (0..b.len())
        .map(|i| {
            b.neighbors(i, &mut nb);
            nb.iter().map(|&j| f.values[j]).sum::<f64>() - two_d * f.values[i]
        })
        .collect();
    Ok(LatticeField { lbox: b.clone(), values })
}

/// The Anderson Hamiltonian `Δ^d + V` on a box with zero boundary condition.
///
/// Sites where `V = -inf` are hard traps: their rows and columns are deleted,
/// which is the same as imposing the zero boundary condition there. All
/// vectors handled by the operator live on the remaining "active" sites.
#[derive(Debug, Clone)]
pub struct AndersonOperator {
    lbox: LatticeBox,
    /// active position -> box index
    active: Vec<usize>,
    /// box index -> active position
    position: Vec<Option<usize>>,
    diag: Vec<f64>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
}

impl AndersonOperator {
    pub fn new(potential: &LatticeField) -> Self {
        let lbox = potential.lbox.clone();
        let two_d = 2.0 * lbox.dim() as f64;
        let mut position = vec![None; lbox.len()];
        let mut active = Vec::new();
        for (i, v) in potential.values.iter().enumerate() {
            if *v > f64::NEG_INFINITY {
                position[i] = Some(active.len());
                active.push(i);
            }
        }
        let mut offsets = Vec::with_capacity(active.len() + 1);
        let mut adjacency = Vec::with_capacity(active.len() * 2 * lbox.dim());
        let mut diag = Vec::with_capacity(active.len());
        let mut nb = Vec::new();
        offsets.push(0);
        for &i in &active {
            lbox.neighbors(i, &mut nb);
            adjacency.extend(nb.iter().filter_map(|&j| position[j]));
            offsets.push(adjacency.len());
            diag.push(potential.values[i] - two_d);
        }
        Self { lbox, active, position, diag, offsets, adjacency }
    }

    /// Free Laplacian on a box (`V ≡ 0`).
    pub fn free(lbox: &LatticeBox) -> Self {
        Self::new(&LatticeField::constant(lbox.clone(), 0.0))
    }

    pub fn lbox(&self) -> &LatticeBox {
        &self.lbox
    }

    /// Number of active (non-trap) sites.
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn active_sites(&self) -> &[usize] {
        &self.active
    }

    pub fn position(&self, box_index: usize) -> Option<usize> {
        self.position[box_index]
    }

    /// `out = (Δ^d + V - shift) x` on the active sites.
    pub fn apply_shifted(&self, x: &[f64], out: &mut [f64], shift: f64) {
        for k in 0..self.active.len() {
            let mut acc = (self.diag[k] - shift) * x[k];
            for &j in &self.adjacency[self.offsets[k]..self.offsets[k + 1]] {
                acc += x[j];
            }
            out[k] = acc;
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.apply_shifted(x, out, 0.0)
    }

    /// Largest diagonal entry plus the maximal off-diagonal row sum; an upper
    /// bound on the spectrum (Gershgorin).
    pub fn spectral_upper_bound(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.diag[k] + (self.offsets[k + 1] - self.offsets[k]) as f64)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_lower_bound(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.diag[k] - (self.offsets[k + 1] - self.offsets[k]) as f64)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = self.diag[k];
            for &j in &self.adjacency[self.offsets[k]..self.offsets[k + 1]] {
                m[(k, j)] = 1.0;
            }
        }
        m
    }

    /// Restricts a box field to the active sites.
    pub fn restrict(&self, f: &LatticeField) -> Vec<f64> {
        self.active.iter().map(|&i| f.values[i]).collect()
    }

    /// Extends an active-site vector by zero on trap sites.
    pub fn extend(&self, x: &[f64]) -> LatticeField {
        let mut values = vec![0.0; self.lbox.len()];
        for (k, &i) in self.active.iter().enumerate() {
            values[i] = x[k];
        }
        LatticeField { lbox: self.lbox.clone(), values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_laplacian() {
        for d in 1..=3 {
            let f = LatticeField::constant(LatticeBox::centered(d, 0), 1.5);
            let g = laplacian_apply(&f).unwrap();
            assert_eq!(g.values[0], -2.0 * d as f64 * 1.5);
        }
    }

    #[test]
    fn one_dimensional_bump() {
        let f = LatticeField::new(LatticeBox::centered(1, 1), vec![0.0, 1.0, 0.0]).unwrap();
        let g = laplacian_apply(&f).unwrap();
        assert_eq!(g.values, vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn constant_field_is_harmonic_in_the_interior() {
        let f = LatticeField::constant(LatticeBox::centered(2, 3), 2.0);
        let g = laplacian_apply(&f).unwrap();
        for (i, z) in f.lbox.sites().enumerate() {
            if z.iter().all(|c| c.abs() < 3) {
                assert_eq!(g.values[i], 0.0);
            }
        }
    }

    #[test]
    fn traps_are_removed() {
        let v = LatticeField::new(LatticeBox::centered(1, 1), vec![0.0, f64::NEG_INFINITY, 0.5]).unwrap();
        let op = AndersonOperator::new(&v);
        assert_eq!(op.dim(), 2);
        let m = op.to_dense();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 1)], 0.5 - 2.0);
    }

    #[test]
    fn operator_matches_laplacian_plus_potential() {
        let b = LatticeBox::centered(2, 2);
        let v = LatticeField::new(b.clone(), (0..25).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let f = LatticeField::new(b, (0..25).map(|i| (i as f64 * 1.3).cos()).collect()).unwrap();
        let op = AndersonOperator::new(&v);
        let mut out = vec![0.0; 25];
        op.apply(&f.values, &mut out);
        let lap = laplacian_apply(&f).unwrap();
        for (i, o) in out.iter().enumerate() {
            assert!((o - lap.values[i] - v.values[i] * f.values[i]).abs() < 1e-14);
        }
    }
}
