//! Finite-box lattice infrastructure: boxes, fields, the discrete Laplacian,
//! Anderson Hamiltonians with zero boundary condition, eigensolvers, heat
//! semigroups and resolvents.

mod eigen;
mod green;
mod operator;
mod semigroup;

pub use eigen::{eig, EigCount, EigenDecomposition, DENSE_LIMIT};
pub use green::{green_function, green_function_auto, GreenMatrix, LEAK_THRESHOLD};
pub use operator::{laplacian_apply, AndersonOperator};
pub use semigroup::{apply_decomposition, semigroup_apply, semigroup_apply_scaled, ScaledField, SemigroupMethod};

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{invalid, Result};

pub type Site = Vec<i64>;

/// The sup-norm ball `center + [-radius, radius]^d` intersected with `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    center: Site,
    radius: usize,
}

impl LatticeBox {
    pub fn new(center: Site, radius: usize) -> Result<Self> {
        if center.is_empty() {
            return invalid("box dimension must be at least 1");
        }
        Ok(Self { center, radius })
    }

    /// `B_R` centred at the origin of `Z^d`.
    pub fn centered(d: usize, radius: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Self { center: vec![0; d], radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, z: &[i64]) -> bool {
        z.len() == self.dim() && z.iter().zip(&self.center).all(|(a, c)| (a - c).unsigned_abs() as usize <= self.radius)
    }

    /// Linear index of site `z`, lexicographic in the coordinates.
    pub fn index_of(&self, z: &[i64]) -> Option<usize> {
        if !self.contains(z) {
            return None;
        }
        let side = self.side();
        let mut idx = 0usize;
        for (a, c) in z.iter().zip(&self.center) {
            idx = idx * side + (a - c + self.radius as i64) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Site {
        let side = self.side();
        let d = self.dim();
        let mut z = vec![0i64; d];
        for k in (0..d).rev() {
            z[k] = self.center[k] + (idx % side) as i64 - self.radius as i64;
            idx /= side;
        }
        z
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// Box with the same center and `margin` extra layers.
    pub fn enlarged(&self, margin: usize) -> Self {
        Self { center: self.center.clone(), radius: self.radius + margin }
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &LatticeBox) -> bool {
        self.dim() == other.dim()
            && self
                .center
                .iter()
                .zip(&other.center)
                .all(|(a, b)| (a - b).unsigned_abs() as usize + self.radius <= other.radius)
    }

    /// Neighbour indices of `idx` inside the box; `outside` counts the
    /// neighbours that fall off the box.
    pub(crate) fn neighbors(&self, idx: usize, out: &mut Vec<usize>) -> usize {
        out.clear();
        let side = self.side();
        let d = self.dim();
        let mut outside = 0;
        let mut stride = 1usize;
        for k in (0..d).rev() {
            let coord = (idx / stride) % side;
            if coord > 0 {
                out.push(idx - stride);
            } else {
                outside += 1;
            }
            if coord + 1 < side {
                out.push(idx + stride);
            } else {
                outside += 1;
            }
            let _ = k;
            stride *= side;
        }
        outside
    }
}

/// Real values on the sites of a box. `-inf` marks hard traps.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub lbox: LatticeBox,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lbox: LatticeBox, values: Vec<f64>) -> Result<Self> {
        if values.len() != lbox.len() {
            return invalid(format!("field has {} values, box has {} sites", values.len(), lbox.len()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return invalid("field values must be finite or -inf");
        }
        Ok(Self { lbox, values })
    }

    pub fn constant(lbox: LatticeBox, c: f64) -> Self {
        let n = lbox.len();
        Self { lbox, values: vec![c; n] }
    }

    /// Indicator of a single site.
    pub fn delta(lbox: LatticeBox, z: &[i64]) -> Result<Self> {
        let Some(i) = lbox.index_of(z) else {
            return invalid(format!("site {z:?} is not in the box"));
        };
        let mut f = Self::constant(lbox, 0.0);
        f.values[i] = 1.0;
        Ok(f)
    }

    pub fn get(&self, z: &[i64]) -> Option<f64> {
        self.lbox.index_of(z).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        crate::numerics::stats::pairwise_sum(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { lbox: self.lbox.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// CSV rows `x1,...,xd,value` with a header line.
    pub fn to_csv(&self) -> String {
        let d = self.lbox.dim();
        let mut s = String::new();
        let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        let _ = writeln!(s, "{},value", header.join(","));
        for (i, v) in self.values.iter().enumerate() {
            let z = self.lbox.site(i);
            let coords: Vec<String> = z.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{},{}", coords.join(","), crate::experiments::fmt_f64(*v));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_cardinality_and_roundtrip() {
        let b = LatticeBox::new(vec![3, -2], 2).unwrap();
        assert_eq!(b.len(), 25);
        for i in 0..b.len() {
            let z = b.site(i);
            assert!(b.contains(&z));
            assert_eq!(b.index_of(&z), Some(i));
        }
        assert!(!b.contains(&[6, -2]));
        assert!(b.contains(&[5, 0]));
    }

    #[test]
    fn neighbors_count_boundary_correctly() {
        let b = LatticeBox::centered(2, 1);
        let mut nb = Vec::new();
        let center = b.index_of(&[0, 0]).unwrap();
        assert_eq!(b.neighbors(center, &mut nb), 0);
        assert_eq!(nb.len(), 4);
        let corner = b.index_of(&[-1, 1]).unwrap();
        assert_eq!(b.neighbors(corner, &mut nb), 2);
        assert_eq!(nb.len(), 2);
        let single = LatticeBox::centered(3, 0);
        assert_eq!(single.neighbors(0, &mut nb), 6);
    }

    #[test]
    fn subset_relation() {
        let small = LatticeBox::new(vec![1], 1).unwrap();
        assert!(small.is_subset_of(&LatticeBox::centered(1, 2)));
        assert!(!small.is_subset_of(&LatticeBox::centered(1, 1)));
    }
}
