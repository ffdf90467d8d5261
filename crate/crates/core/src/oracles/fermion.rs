//! Free fermions hopping in a linear potential (Wannier-Stark ladder).
//!
//! `h_sp = -g Σ (|x⟩⟨x+1| + h.c.) + 2h Σ (x - x_c) |x⟩⟨x|` on an open chain.
//! Densities follow from propagating the occupied orbitals.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::tnalg::eigh_real;
use crate::C64;

type Result<T> = std::result::Result<T, OracleError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermionChain {
    pub n_sites: usize,
    pub g: f64,
    pub h: f64,
    /// Site where the potential vanishes.
    pub center: f64,
}

impl FermionChain {
    pub const DEFAULT_SITES: usize = 64;

    pub fn new(n_sites: usize, g: f64, h: f64) -> Self {
        Self {
            n_sites,
            g,
            h,
            center: (n_sites / 2) as f64,
        }
    }

    pub fn hamiltonian(&self) -> Array2<f64> {
        let n = self.n_sites;
        let mut m = Array2::<f64>::zeros((n, n));
        for x in 0..n {
            m[[x, x]] = 2.0 * self.h * (x as f64 - self.center);
            if x + 1 < n {
                m[[x, x + 1]] = -self.g;
                m[[x + 1, x]] = -self.g;
            }
        }
        m
    }

    /// Eigenvalues and eigenvectors of the single-particle Hamiltonian.
    pub fn spectrum(&self) -> Result<(Array1<f64>, Array2<f64>)> {
        Ok(eigh_real(&self.hamiltonian())?)
    }

    /// `exp(-i h_sp t)`.
    pub fn propagator(&self, t: f64) -> Result<Array2<C64>> {
        let (w, u) = self.spectrum()?;
        let n = self.n_sites;
        let phased = Array2::from_shape_fn((n, n), |(x, k)| {
            C64::new(u[[x, k]], 0.0) * C64::new(0.0, -w[k] * t).exp()
        });
        let ut = u.t().mapv(|v| C64::new(v, 0.0));
        Ok(phased.dot(&ut))
    }

    /// Site densities at time `t` for particles initially on `occupied`.
    pub fn densities(&self, occupied: &[usize], t: f64) -> Result<Vec<f64>> {
        for &o in occupied {
            if o >= self.n_sites {
                return Err(OracleError::SiteOutOfRange(o));
            }
        }
        let u = self.propagator(t)?;
        Ok((0..self.n_sites)
            .map(|x| occupied.iter().map(|&o| u[[x, o]].norm_sqr()).sum())
            .collect())
    }

    /// Revival period `2π/Δ` from the median level spacing `Δ` of the
    /// states localized away from the chain ends.
    pub fn revival_period(&self) -> Result<f64> {
        if self.h == 0.0 {
            return Err(OracleError::NoRevival);
        }
        let (w, _) = self.spectrum()?;
        let n = w.len();
        let lo = n / 4;
        let hi = (3 * n / 4).max(lo + 2);
        let mut gaps: Vec<f64> = (lo..hi - 1).map(|k| w[k + 1] - w[k]).collect();
        gaps.sort_by(f64::total_cmp);
        let spacing = gaps[gaps.len() / 2];
        Ok(2.0 * std::f64::consts::PI / spacing)
    }

    /// Largest RMS displacement `sqrt(Σ_x n_x (x - x_0)²)` of a single
    /// particle started on `site`, sampled over one revival period.
    pub fn breathing_amplitude(&self, site: usize, samples: usize) -> Result<f64> {
        let period = self.revival_period()?;
        let mut best: f64 = 0.0;
        for k in 0..=samples {
            let t = period * k as f64 / samples as f64;
            let n = self.densities(&[site], t)?;
            let msd: f64 = n
                .iter()
                .enumerate()
                .map(|(x, p)| p * (x as f64 - site as f64).powi(2))
                .sum();
            best = best.max(msd.sqrt());
        }
        Ok(best)
    }
}

/// Densities of `occupied` at each time in `times`.
pub fn fermion_evolve(chain: &FermionChain, occupied: &[usize], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    times.iter().map(|&t| chain.densities(occupied, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn no_hopping_is_static() {
        let c = FermionChain::new(16, 0.0, 0.3);
        let n = c.densities(&[3, 4, 9], 7.3).unwrap();
        for (x, v) in n.iter().enumerate() {
            let expect = if [3, 4, 9].contains(&x) { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn single_particle_revives_at_pi_over_h() {
        let c = FermionChain::new(FermionChain::DEFAULT_SITES, 0.05, 0.05);
        let period = c.revival_period().unwrap();
        assert!((period - PI / 0.05).abs() < 1e-6);
        let n0 = c.densities(&[32], 0.0).unwrap();
        let n1 = c.densities(&[32], period).unwrap();
        let nmid = c.densities(&[32], period / 2.0).unwrap();
        assert!(n0.iter().zip(&n1).all(|(a, b)| (a - b).abs() < 1e-8));
        assert!((nmid[32] - 1.0).abs() > 1e-3);
    }

    #[test]
    fn particle_number_is_conserved() {
        let c = FermionChain::new(32, 0.4, 0.1);
        for t in [0.3, 4.0, 17.5] {
            let n: f64 = c.densities(&[10, 11, 12, 20], t).unwrap().iter().sum();
            assert!((n - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_is_linear_in_g_over_h() {
        let h = 0.1;
        let a1 = FermionChain::new(64, 0.25 * h, h).breathing_amplitude(32, 200).unwrap();
        let a2 = FermionChain::new(64, 0.5 * h, h).breathing_amplitude(32, 200).unwrap();
        let a3 = FermionChain::new(64, 1.0 * h, h).breathing_amplitude(32, 200).unwrap();
        assert!((a2 / a1 - 2.0).abs() < 0.2);
        assert!((a3 / a2 - 2.0).abs() < 0.2);
    }

    #[test]
    fn hamiltonian_is_tridiagonal_symmetric() {
        let m = FermionChain::new(8, 0.3, 0.2).hamiltonian();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(m[[i, j]], m[[j, i]]);
                if i.abs_diff(j) > 1 {
                    assert_eq!(m[[i, j]], 0.0);
                }
            }
        }
    }
}
