//! The constrained (PXP) model: a spin may flip only if that leaves the
//! number of domain walls on its bonds unchanged, i.e. it has as many up as
//! down neighbours. Sites with an odd number of neighbours never flip.
//!
//! Two independent constructions are provided: projector terms fed through
//! the generic local-sum machinery, and a direct masked flip on basis
//! states.

use ndarray::Array1;

use super::ed::{DenseState, MAX_ED_SITES};
use super::OracleError;
use crate::hamiltonian::{LocalSumOperator, LocalTerm, SiteOp};
use crate::tdvp::krylov_expm;
use crate::tnalg::{Leg, Tensor};
use crate::topology::LatticeSpec;
use crate::C64;

type Result<T> = std::result::Result<T, OracleError>;

/// `-g Σ_i Z_i Π_{n ∈ N(i)} P_n` over balanced neighbour configurations,
/// plus `-h Σ_i X_i`.
pub fn pxp_terms(g: f64, h: f64, lat: &LatticeSpec) -> LocalSumOperator {
    let mut terms = Vec::new();
    for i in 0..lat.n_sites() {
        let nb = lat.neighbors(i);
        let k = nb.len();
        if k % 2 == 1 || g == 0.0 {
            continue;
        }
        for config in 0..1usize << k {
            if config.count_ones() as usize != k / 2 {
                continue;
            }
            let mut factors = vec![(i, SiteOp::Z)];
            for (b, &n) in nb.iter().enumerate() {
                let op = if config >> b & 1 == 1 {
                    SiteOp::ProjDown
                } else {
                    SiteOp::ProjUp
                };
                factors.push((n, op));
            }
            terms.push(LocalTerm::new(-g, factors));
        }
    }
    if h != 0.0 {
        for i in 0..lat.n_sites() {
            terms.push(LocalTerm::new(-h, vec![(i, SiteOp::X)]));
        }
    }
    LocalSumOperator {
        lattice: lat.clone(),
        terms,
    }
}

/// Direct application of the constrained Hamiltonian to a statevector.
#[derive(Clone, Debug)]
pub struct PxpOperator {
    g: f64,
    h: f64,
    neighbor_masks: Vec<usize>,
    n_sites: usize,
}

impl PxpOperator {
    pub fn new(g: f64, h: f64, lat: &LatticeSpec) -> Result<Self> {
        let n = lat.n_sites();
        if n > MAX_ED_SITES {
            return Err(OracleError::TooLarge { n, max: MAX_ED_SITES });
        }
        let neighbor_masks = (0..n)
            .map(|i| lat.neighbors(i).iter().fold(0usize, |m, &j| m | 1 << j))
            .collect();
        Ok(Self {
            g,
            h,
            neighbor_masks,
            n_sites: n,
        })
    }

    /// Whether site `i` may flip in basis state `idx`.
    pub fn flippable(&self, idx: usize, i: usize) -> bool {
        let mask = self.neighbor_masks[i];
        let down = (idx & mask).count_ones();
        2 * down == mask.count_ones()
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::<C64>::zeros(v.len());
        for (idx, a) in v.iter().enumerate() {
            let ups = self.n_sites as f64 - 2.0 * idx.count_ones() as f64;
            out[idx] += C64::new(-self.h * ups, 0.0) * a;
            for i in 0..self.n_sites {
                if self.flippable(idx, i) {
                    out[idx ^ (1 << i)] += C64::new(-self.g, 0.0) * a;
                }
            }
        }
        out
    }

    pub fn propagate(&self, psi: &DenseState, tau: f64, tol: f64) -> Result<DenseState> {
        let wrap = |a: Array1<C64>| Tensor::new(vec![Leg::Aux(0)], a.into_dyn());
        let r = krylov_expm(
            |x| Ok(wrap(self.apply(&Array1::from(x.as_slice().to_vec())))?),
            &wrap(psi.amplitudes.clone())?,
            C64::new(tau, 0.0),
            60,
            tol,
        )?;
        DenseState::new(psi.n_sites, Array1::from(r.vector.as_slice().to_vec()))
    }
}

/// Constrained evolution on the grid `0, dt, ...` up to `t_max`; `observe`
/// sees each state in turn.
pub fn pxp_evolve<F>(
    op: &PxpOperator,
    psi0: &DenseState,
    dt: f64,
    t_max: f64,
    mut observe: F,
) -> Result<DenseState>
where
    F: FnMut(f64, &DenseState),
{
    let n = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut psi = psi0.clone();
    observe(0.0, &psi);
    for k in 1..=n {
        psi = op.propagate(&psi, dt, 1e-12)?;
        observe(k as f64 * dt, &psi);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::domain_wall_operator;
    use crate::initstates::{make_pattern, CornerAnchor, PatternSpec, Spin};
    use crate::oracles::ed::DenseOperator;
    use crate::state::LocalState;
    use crate::topology::build_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn term_counts_follow_boundary_rule() {
        let lat = build_lattice(4, 4).unwrap();
        let op = pxp_terms(0.1, 0.0, &lat);
        // 4 interior sites with 6 balanced configurations, 4 corners with 2
        assert_eq!(op.terms.len(), 4 * 6 + 4 * 2);
        assert!(op.check_hermitian().is_ok());
    }

    #[test]
    fn both_constructions_agree() {
        let lat = build_lattice(4, 4).unwrap();
        let a = DenseOperator::from_local_sum(&pxp_terms(0.3, 0.7, &lat)).unwrap();
        let b = PxpOperator::new(0.3, 0.7, &lat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = Array1::from_shape_fn(1 << 16, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let d = &a.apply(&v) - &b.apply(&v);
        assert!(d.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn uniform_state_is_frozen() {
        let lat = build_lattice(4, 4).unwrap();
        let op = PxpOperator::new(1.0, 0.0, &lat).unwrap();
        let psi = DenseState::product(&[LocalState::Up; 16]).unwrap();
        assert!(op.apply(&psi.amplitudes).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn interior_balanced_spin_flips_with_minus_g() {
        let lat = build_lattice(4, 4).unwrap();
        let op = PxpOperator::new(0.25, 0.0, &lat).unwrap();
        // (1,1): left and down neighbours down, right and up neighbours up
        let mut locals = vec![LocalState::Up; 16];
        locals[lat.site(0, 1)] = LocalState::Down;
        locals[lat.site(1, 0)] = LocalState::Down;
        let psi = DenseState::product(&locals).unwrap();
        let out = op.apply(&psi.amplitudes);
        let idx = psi.amplitudes.iter().position(|z| z.norm() > 0.5).unwrap();
        let flipped = idx ^ (1 << lat.site(1, 1));
        assert!((out[flipped] - C64::new(-0.25, 0.0)).norm() < 1e-15);
        assert!(op.flippable(idx, lat.site(1, 1)));
        assert!(!op.flippable(idx, lat.site(2, 2)));
    }

    #[test]
    fn domain_walls_are_conserved() {
        let lat = build_lattice(4, 4).unwrap();
        let spec = PatternSpec::Corner { size: 3, anchor: CornerAnchor::Origin, background: Spin::Down };
        let psi0 = DenseState::product(&make_pattern(&lat, &spec).unwrap()).unwrap();
        let op = PxpOperator::new(0.1, 0.05, &lat).unwrap();
        let dw = DenseOperator::from_local_sum(&domain_wall_operator(&lat)).unwrap();
        let d0 = psi0.expectation(&dw).re;
        pxp_evolve(&op, &psi0, 0.5, 20.0, |_, psi| {
            assert!((psi.expectation(&dw).re - d0).abs() < 1e-10);
        })
        .unwrap();
    }
}
