//! Operators as sums of few-body terms.
//!
//! Single-site operators are written in the Ising eigenbasis: [`SiteOp::X`]
//! is the Ising axis `diag(1, -1)` and [`SiteOp::Z`] is the transverse field,
//! which flips spins.

pub mod environment;

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::LatticeSpec;
use crate::C64;

pub use environment::{
    build_environments, collapse_branches, CollapsePlan, EnvError, EnvironmentCache, Grouping,
    LinkOperator, NodeOperator, Side,
};

#[derive(Debug, Error, PartialEq)]
pub enum HamiltonianError {
    #[error("term {term}: site {site} appears twice")]
    RepeatedSite { term: usize, site: usize },
    #[error("term {term}: site {site} is outside the lattice")]
    SiteOutOfRange { term: usize, site: usize },
    #[error("term {0} has no Hermitian partner")]
    NotHermitian(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SiteOp {
    /// Ising axis, `diag(1, -1)`.
    X,
    /// Transverse field, `[[0, 1], [1, 0]]`.
    Z,
    Identity,
    /// `|↑⟩⟨↑|`.
    ProjUp,
    /// `|↓⟩⟨↓|`.
    ProjDown,
    /// Row-major `[[a, b], [c, d]]` as `(re, im)` pairs.
    Custom([[(f64, f64); 2]; 2]),
}

impl SiteOp {
    pub fn matrix(&self) -> Array2<C64> {
        let c = |re: f64| C64::new(re, 0.0);
        match self {
            SiteOp::X => array![[c(1.0), c(0.0)], [c(0.0), c(-1.0)]],
            SiteOp::Z => array![[c(0.0), c(1.0)], [c(1.0), c(0.0)]],
            SiteOp::Identity => Array2::eye(2),
            SiteOp::ProjUp => array![[c(1.0), c(0.0)], [c(0.0), c(0.0)]],
            SiteOp::ProjDown => array![[c(0.0), c(0.0)], [c(0.0), c(1.0)]],
            SiteOp::Custom(m) => Array2::from_shape_fn((2, 2), |(i, j)| {
                C64::new(m[i][j].0, m[i][j].1)
            }),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        let m = self.matrix();
        (0..2).all(|i| (0..2).all(|j| (m[[i, j]] - m[[j, i]].conj()).norm() < 1e-14))
    }

    pub fn adjoint(&self) -> SiteOp {
        match self {
            SiteOp::Custom(m) => {
                let mut out = [[(0.0, 0.0); 2]; 2];
                for (i, row) in out.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (m[j][i].0, -m[j][i].1);
                    }
                }
                SiteOp::Custom(out)
            }
            other => *other,
        }
    }
}

/// `coefficient · ⊗_k op_k` over distinct sites. An empty factor list is the
/// identity, i.e. a constant shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTerm {
    pub coefficient: C64,
    pub factors: Vec<(usize, SiteOp)>,
}

impl LocalTerm {
    pub fn new(coefficient: f64, factors: Vec<(usize, SiteOp)>) -> Self {
        Self {
            coefficient: C64::new(coefficient, 0.0),
            factors,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.factors.iter().map(|f| f.0)
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    fn adjoint(&self) -> LocalTerm {
        LocalTerm {
            coefficient: self.coefficient.conj(),
            factors: self.factors.iter().map(|(s, o)| (*s, o.adjoint())).collect(),
        }
    }

    fn same_operator(&self, other: &LocalTerm) -> bool {
        if (self.coefficient - other.coefficient).norm() > 1e-14
            || self.factors.len() != other.factors.len()
        {
            return false;
        }
        let mut a = self.factors.clone();
        let mut b = other.factors.clone();
        a.sort_by_key(|f| f.0);
        b.sort_by_key(|f| f.0);
        a.iter().zip(&b).all(|((sa, oa), (sb, ob))| {
            sa == sb && {
                let (ma, mb) = (oa.matrix(), ob.matrix());
                ma.iter().zip(mb.iter()).all(|(x, y)| (x - y).norm() < 1e-14)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSumOperator {
    pub lattice: LatticeSpec,
    pub terms: Vec<LocalTerm>,
}

impl LocalSumOperator {
    /// Validates site ranges and distinctness within each term.
    pub fn new(lattice: LatticeSpec, terms: Vec<LocalTerm>) -> Result<Self, HamiltonianError> {
        let n = lattice.n_sites();
        for (k, t) in terms.iter().enumerate() {
            let mut seen = Vec::with_capacity(t.factors.len());
            for s in t.sites() {
                if s >= n {
                    return Err(HamiltonianError::SiteOutOfRange { term: k, site: s });
                }
                if seen.contains(&s) {
                    return Err(HamiltonianError::RepeatedSite { term: k, site: s });
                }
                seen.push(s);
            }
        }
        Ok(Self { lattice, terms })
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn count_by_support(&self, n_sites: usize) -> usize {
        self.terms.iter().filter(|t| t.factors.len() == n_sites).count()
    }

    /// Sum of coefficients of constant terms.
    pub fn constant(&self) -> C64 {
        self.terms
            .iter()
            .filter(|t| t.is_constant())
            .map(|t| t.coefficient)
            .sum()
    }

    /// Checks that the sum is Hermitian: each term must be self-adjoint or
    /// have its adjoint elsewhere in the list.
    pub fn check_hermitian(&self) -> Result<(), HamiltonianError> {
        for (k, t) in self.terms.iter().enumerate() {
            let adj = t.adjoint();
            if adj.same_operator(t) {
                continue;
            }
            if !self.terms.iter().any(|u| u.same_operator(&adj)) {
                return Err(HamiltonianError::NotHermitian(k));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("operator serializes")
    }
}

/// `H = -J Σ_⟨ij⟩ σx_i σx_j - Σ_i (g σz_i + h σx_i)`.
pub fn tfim_terms(j: f64, g: f64, h: f64, lattice: &LatticeSpec) -> LocalSumOperator {
    let mut terms = Vec::new();
    for &(a, b) in &lattice.bonds {
        terms.push(LocalTerm::new(-j, vec![(a, SiteOp::X), (b, SiteOp::X)]));
    }
    if g != 0.0 {
        for s in 0..lattice.n_sites() {
            terms.push(LocalTerm::new(-g, vec![(s, SiteOp::Z)]));
        }
    }
    if h != 0.0 {
        for s in 0..lattice.n_sites() {
            terms.push(LocalTerm::new(-h, vec![(s, SiteOp::X)]));
        }
    }
    LocalSumOperator {
        lattice: lattice.clone(),
        terms,
    }
}

/// `D = ½ Σ_⟨ij⟩ (1 - σx_i σx_j)`: a constant plus one two-site term per bond.
pub fn domain_wall_operator(lattice: &LatticeSpec) -> LocalSumOperator {
    let mut terms = vec![LocalTerm::new(0.5 * lattice.bonds.len() as f64, vec![])];
    for &(a, b) in &lattice.bonds {
        terms.push(LocalTerm::new(-0.5, vec![(a, SiteOp::X), (b, SiteOp::X)]));
    }
    LocalSumOperator {
        lattice: lattice.clone(),
        terms,
    }
}

/// Dense `2^N × 2^N` matrix, for small checks only (`N ≤ 12`).
pub fn dense_matrix(op: &LocalSumOperator) -> Array2<C64> {
    let n = op.lattice.n_sites();
    assert!(n <= 12, "dense matrix limited to 12 sites");
    let dim = 1usize << n;
    let mut out = Array2::<C64>::zeros((dim, dim));
    for t in &op.terms {
        let mats: Vec<(usize, Array2<C64>)> =
            t.factors.iter().map(|(s, o)| (*s, o.matrix())).collect();
        for col in 0..dim {
            // expand the action on basis state `col`
            let mut amps = vec![(col, t.coefficient)];
            for (s, m) in &mats {
                let mut next = Vec::with_capacity(amps.len() * 2);
                for &(idx, a) in &amps {
                    let b = idx >> s & 1;
                    for nb in 0..2 {
                        let v = m[[nb, b]];
                        if v != C64::new(0.0, 0.0) {
                            next.push(((idx & !(1 << s)) | (nb << s), a * v));
                        }
                    }
                }
                amps = next;
            }
            for (row, a) in amps {
                out[[row, col]] += a;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_lattice;

    fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
            a[[i / br, j / bc]] * b[[i % br, j % bc]]
        })
    }

    /// Operator on `n` sites acting with `ops` at the given sites, built with
    /// Kronecker products; site 0 is the least significant bit.
    fn kron_chain(n: usize, ops: &[(usize, Array2<C64>)]) -> Array2<C64> {
        let mut out = Array2::<C64>::eye(1);
        for s in (0..n).rev() {
            let m = ops
                .iter()
                .find(|(q, _)| *q == s)
                .map(|(_, m)| m.clone())
                .unwrap_or_else(|| Array2::eye(2));
            out = kron(&out, &m);
        }
        out
    }

    #[test]
    fn term_counts() {
        let l2 = build_lattice(2, 2).unwrap();
        let h = tfim_terms(1.0, 0.0, 0.0, &l2);
        assert_eq!(h.count_by_support(2), 4);
        assert_eq!(h.n_terms(), 4);
        let l4 = build_lattice(4, 4).unwrap();
        assert_eq!(tfim_terms(1.0, 0.1, 0.0, &l4).n_terms(), 24 + 16);
        assert_eq!(tfim_terms(1.0, 0.1, 0.2, &l4).n_terms(), 24 + 32);
        let l8 = build_lattice(8, 8).unwrap();
        assert_eq!(tfim_terms(1.0, 1.0, 0.0, &l8).n_terms(), 112 + 64);
    }

    #[test]
    fn classical_ground_states() {
        let lat = build_lattice(2, 2).unwrap();
        let m = dense_matrix(&tfim_terms(1.0, 0.0, 0.0, &lat));
        // all up = index 0, all down = index 15
        assert!((m[[0, 0]] - C64::new(-4.0, 0.0)).norm() < 1e-14);
        assert!((m[[15, 15]] - C64::new(-4.0, 0.0)).norm() < 1e-14);
        let min = (0..16).map(|i| m[[i, i]].re).fold(f64::INFINITY, f64::min);
        assert_eq!(min, -4.0);
    }

    #[test]
    fn dense_matches_kronecker_assembly() {
        let lat = build_lattice(2, 2).unwrap();
        let (j, g, h) = (1.3, 0.7, -0.4);
        let m = dense_matrix(&tfim_terms(j, g, h, &lat));
        let x = SiteOp::X.matrix();
        let z = SiteOp::Z.matrix();
        let mut expect = Array2::<C64>::zeros((16, 16));
        for &(a, b) in &lat.bonds {
            expect = expect - kron_chain(4, &[(a, x.clone()), (b, x.clone())]) * C64::new(j, 0.0);
        }
        for s in 0..4 {
            expect = expect - kron_chain(4, &[(s, z.clone())]) * C64::new(g, 0.0);
            expect = expect - kron_chain(4, &[(s, x.clone())]) * C64::new(h, 0.0);
        }
        for (a, b) in m.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn domain_wall_counts_misaligned_bonds() {
        let lat = build_lattice(4, 2).unwrap();
        let d = dense_matrix(&domain_wall_operator(&lat));
        assert!(d[[0, 0]].norm() < 1e-14);
        // single flipped spin at (1,0) with three neighbours
        let idx = 1 << lat.site(1, 0);
        assert!((d[[idx, idx]].re - 3.0).abs() < 1e-14);
        // left column down: two misaligned bonds
        let col: usize = (0..2).map(|y| 1 << lat.site(0, y)).sum();
        assert!((d[[col, col]].re - 2.0).abs() < 1e-14);
        assert!(d.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn hermiticity_checks() {
        let lat = build_lattice(2, 2).unwrap();
        assert!(tfim_terms(1.0, 0.5, 0.2, &lat).check_hermitian().is_ok());
        let raising = SiteOp::Custom([[(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 0.0)]]);
        let mut op = LocalSumOperator::new(
            lat.clone(),
            vec![LocalTerm::new(1.0, vec![(0, raising)])],
        )
        .unwrap();
        assert_eq!(op.check_hermitian(), Err(HamiltonianError::NotHermitian(0)));
        op.terms.push(LocalTerm::new(1.0, vec![(0, raising.adjoint())]));
        assert!(op.check_hermitian().is_ok());
        let mut op = tfim_terms(1.0, 0.0, 0.0, &lat);
        op.terms[0].coefficient = C64::new(1.0, 0.5);
        assert!(op.check_hermitian().is_err());
    }

    #[test]
    fn invalid_terms_are_rejected() {
        let lat = build_lattice(2, 2).unwrap();
        assert!(LocalSumOperator::new(
            lat.clone(),
            vec![LocalTerm::new(1.0, vec![(0, SiteOp::X), (0, SiteOp::Z)])]
        )
        .is_err());
        assert!(LocalSumOperator::new(lat, vec![LocalTerm::new(1.0, vec![(9, SiteOp::X)])]).is_err());
    }

    #[test]
    fn json_dump_round_trips() {
        let lat = build_lattice(2, 2).unwrap();
        let op = tfim_terms(1.0, 0.5, 0.0, &lat);
        let back: LocalSumOperator = serde_json::from_str(&op.to_json()).unwrap();
        assert_eq!(back, op);
    }
}
