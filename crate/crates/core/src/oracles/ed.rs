//! Exact statevector evolution for up to 20 sites.
//!
//! Operators are compiled into a diagonal vector plus a list of bit-flip
//! pieces and applied without ever forming the `2^N × 2^N` matrix.

use ndarray::{Array1, Array2};

use super::OracleError;
use crate::hamiltonian::LocalSumOperator;
use crate::state::{entropy_of, LocalState};
use crate::tdvp::krylov_expm;
use crate::tnalg::{singular_values, Leg, Tensor};
use crate::C64;

pub const MAX_ED_SITES: usize = 20;

type Result<T> = std::result::Result<T, OracleError>;

/// Amplitudes indexed by `Σ_i b_i 2^i`, `b_i = 0` for up along x.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub n_sites: usize,
    pub amplitudes: Array1<C64>,
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_ED_SITES {
        return Err(OracleError::TooLarge { n, max: MAX_ED_SITES });
    }
    Ok(())
}

impl DenseState {
    pub fn new(n_sites: usize, amplitudes: Array1<C64>) -> Result<Self> {
        check_size(n_sites)?;
        if amplitudes.len() != 1 << n_sites {
            return Err(OracleError::Dimension {
                expected: 1 << n_sites,
                got: amplitudes.len(),
            });
        }
        Ok(Self {
            n_sites,
            amplitudes,
        })
    }

    pub fn product(locals: &[LocalState]) -> Result<Self> {
        let n = locals.len();
        check_size(n)?;
        let mut v = Array1::from_elem(1, C64::new(1.0, 0.0));
        for (site, l) in locals.iter().enumerate() {
            let a = l.amplitudes();
            let norm = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
            let mut next = Array1::<C64>::zeros(v.len() * 2);
            let half = 1usize << site;
            for (idx, amp) in v.iter().enumerate() {
                next[idx] = amp * a[0] / norm;
                next[idx + half] = amp * a[1] / norm;
            }
            v = next;
        }
        Self::new(n, v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `⟨σx_i⟩` for every site.
    pub fn sx(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sites];
        for (idx, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (i, o) in out.iter_mut().enumerate() {
                *o += if idx >> i & 1 == 0 { p } else { -p };
            }
        }
        out
    }

    /// `⟨σz_i⟩` for every site.
    pub fn sz(&self) -> Vec<f64> {
        (0..self.n_sites)
            .map(|i| {
                let bit = 1usize << i;
                self.amplitudes
                    .iter()
                    .enumerate()
                    .map(|(idx, a)| (self.amplitudes[idx ^ bit].conj() * a).re)
                    .sum()
            })
            .collect()
    }

    /// `⟨σx_i σx_j⟩`.
    pub fn xx(&self, i: usize, j: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(idx, a)| {
                let s = if (idx >> i ^ idx >> j) & 1 == 0 { 1.0 } else { -1.0 };
                s * a.norm_sqr()
            })
            .sum()
    }

    /// `⟨σz_i σz_j⟩`.
    pub fn zz(&self, i: usize, j: usize) -> f64 {
        let mask = (1usize << i) | (1usize << j);
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(idx, a)| (self.amplitudes[idx ^ mask].conj() * a).re)
            .sum()
    }

    pub fn expectation(&self, op: &DenseOperator) -> C64 {
        let hv = op.apply(&self.amplitudes);
        self.amplitudes
            .iter()
            .zip(hv.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Schmidt values for the bipartition `region | rest`.
    pub fn schmidt_values(&self, region: &[usize]) -> Result<Vec<f64>> {
        let rest: Vec<usize> = (0..self.n_sites).filter(|s| !region.contains(s)).collect();
        let (ra, rb) = (1usize << region.len(), 1usize << rest.len());
        let mut m = Array2::<C64>::zeros((ra, rb));
        for (idx, a) in self.amplitudes.iter().enumerate() {
            let gather = |sites: &[usize]| {
                sites
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (k, &s)| acc | ((idx >> s & 1) << k))
            };
            m[[gather(region), gather(&rest)]] = *a;
        }
        Ok(singular_values(&m)?)
    }

    pub fn entropy(&self, region: &[usize]) -> Result<f64> {
        Ok(entropy_of(&self.schmidt_values(region)?))
    }
}

/// A product of single-site matrices applied to basis states, moving
/// `idx → idx ^ mask`.
#[derive(Clone, Debug)]
struct FlipPiece {
    mask: usize,
    coefficient: C64,
    /// `(site, m)` with `m[out][in]`.
    factors: Vec<(usize, [[C64; 2]; 2])>,
}

/// Matrix-free form of a local sum.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    n_sites: usize,
    diag: Array1<C64>,
    pieces: Vec<FlipPiece>,
}

impl DenseOperator {
    pub fn from_local_sum(op: &LocalSumOperator) -> Result<Self> {
        let n = op.lattice.n_sites();
        check_size(n)?;
        let dim = 1usize << n;
        let mut diag = Array1::<C64>::zeros(dim);
        let mut pieces = Vec::new();
        for term in &op.terms {
            let mats: Vec<(usize, [[C64; 2]; 2])> = term
                .factors
                .iter()
                .map(|(s, o)| {
                    let m = o.matrix();
                    (*s, [[m[[0, 0]], m[[0, 1]]], [m[[1, 0]], m[[1, 1]]]])
                })
                .collect();
            // split every factor into its diagonal and off-diagonal parts
            let k = mats.len();
            for choice in 0..1usize << k {
                let mut mask = 0usize;
                let mut factors = Vec::with_capacity(k);
                let mut zero = false;
                for (f, (s, m)) in mats.iter().enumerate() {
                    let flip = choice >> f & 1 == 1;
                    let part = if flip {
                        mask |= 1 << s;
                        [[C64::new(0.0, 0.0), m[0][1]], [m[1][0], C64::new(0.0, 0.0)]]
                    } else {
                        [[m[0][0], C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), m[1][1]]]
                    };
                    if part.iter().flatten().all(|z| z.norm() == 0.0) {
                        zero = true;
                        break;
                    }
                    factors.push((*s, part));
                }
                if zero {
                    continue;
                }
                let piece = FlipPiece {
                    mask,
                    coefficient: term.coefficient,
                    factors,
                };
                if mask == 0 {
                    for (idx, d) in diag.iter_mut().enumerate() {
                        *d += piece.amplitude(idx);
                    }
                } else {
                    pieces.push(piece);
                }
            }
        }
        Ok(Self {
            n_sites: n,
            diag,
            pieces,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_flip_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out: Array1<C64> = &self.diag * v;
        for p in &self.pieces {
            for (idx, a) in v.iter().enumerate() {
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let amp = p.amplitude(idx);
                if amp.norm_sqr() != 0.0 {
                    out[idx ^ p.mask] += amp * a;
                }
            }
        }
        out
    }

    /// `exp(-iHτ) ψ` by Krylov iteration on the dense vector.
    pub fn propagate(&self, psi: &DenseState, tau: f64, tol: f64) -> Result<DenseState> {
        let wrap = |a: Array1<C64>| Tensor::new(vec![Leg::Aux(0)], a.into_dyn());
        let v = wrap(psi.amplitudes.clone())?;
        let r = krylov_expm(
            |x| {
                let a = Array1::from(x.as_slice().to_vec());
                Ok(wrap(self.apply(&a))?)
            },
            &v,
            C64::new(tau, 0.0),
            60,
            tol,
        )?;
        DenseState::new(psi.n_sites, Array1::from(r.vector.as_slice().to_vec()))
    }
}

impl FlipPiece {
    /// `⟨idx ^ mask| piece |idx⟩`.
    fn amplitude(&self, idx: usize) -> C64 {
        let mut amp = self.coefficient;
        for (s, m) in &self.factors {
            let bin = idx >> s & 1;
            let bout = bin ^ (self.mask >> s & 1);
            amp *= m[bout][bin];
        }
        amp
    }
}

/// States at `t = 0, dt, 2dt, ...` up to `t_max`.
pub fn ed_evolve(
    op: &LocalSumOperator,
    psi0: &DenseState,
    dt: f64,
    t_max: f64,
) -> Result<Vec<(f64, DenseState)>> {
    let h = DenseOperator::from_local_sum(op)?;
    let n = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut psi = psi0.clone();
    out.push((0.0, psi.clone()));
    for k in 1..=n {
        psi = h.propagate(&psi, dt, 1e-13)?;
        out.push((k as f64 * dt, psi.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{dense_matrix, domain_wall_operator, tfim_terms};
    use crate::tnalg::{dense_expm_apply, eigh};
    use crate::topology::build_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, seed: u64) -> DenseState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Array1::from_shape_fn(1 << n, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        DenseState::new(n, v.mapv(|z| z / norm)).unwrap()
    }

    #[test]
    fn matrix_free_matches_dense_matrix() {
        let lat = build_lattice(4, 2).unwrap();
        for op in [tfim_terms(1.0, 0.7, 0.3, &lat), domain_wall_operator(&lat)] {
            let h = DenseOperator::from_local_sum(&op).unwrap();
            let m = dense_matrix(&op);
            let v = random_state(8, 4).amplitudes;
            let d = &h.apply(&v) - &m.dot(&v);
            assert!(d.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn two_site_chain_closed_form() {
        // H = -XX - (Z1 + Z2) on two sites in the basis {↑↑, ↓↑, ↑↓, ↓↓}
        let lat = crate::topology::LatticeSpec {
            lx: 2,
            ly: 1,
            boundary: crate::topology::Boundary::Open,
            bonds: vec![(0, 1)],
        };
        let op = tfim_terms(1.0, 1.0, 0.0, &lat);
        let psi0 = DenseState::product(&[LocalState::Up, LocalState::Up]).unwrap();
        let traj = ed_evolve(&op, &psi0, 0.05, 1.0).unwrap();
        let c = |x: f64| C64::new(x, 0.0);
        let h = ndarray::array![
            [c(-1.0), c(-1.0), c(-1.0), c(0.0)],
            [c(-1.0), c(1.0), c(0.0), c(-1.0)],
            [c(-1.0), c(0.0), c(1.0), c(-1.0)],
            [c(0.0), c(-1.0), c(-1.0), c(-1.0)]
        ];
        let (w, u) = eigh(&h).unwrap();
        for (t, psi) in &traj {
            let coeffs: Array1<C64> = u.row(0).mapv(|z| z.conj());
            let v: Array1<C64> = (0..4)
                .map(|k| {
                    (0..4)
                        .map(|l| u[[k, l]] * coeffs[l] * (C64::new(0.0, -t * w[l])).exp())
                        .sum()
                })
                .collect();
            let exact = DenseState::new(2, v).unwrap();
            let (a, b) = (psi.sz(), exact.sz());
            assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn propagation_matches_dense_exponential() {
        let lat = build_lattice(2, 4).unwrap();
        let op = tfim_terms(1.0, 3.04, 0.2, &lat);
        let h = DenseOperator::from_local_sum(&op).unwrap();
        let psi = random_state(8, 9);
        let got = h.propagate(&psi, 0.3, 1e-13).unwrap();
        let exact = dense_expm_apply(&dense_matrix(&op), &psi.amplitudes, C64::new(0.3, 0.0)).unwrap();
        assert!((&got.amplitudes - &exact).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn classical_state_is_stationary() {
        let lat = build_lattice(4, 2).unwrap();
        let op = tfim_terms(1.0, 0.0, 0.0, &lat);
        let locals: Vec<_> = (0..8).map(|s| if s % 3 == 0 { LocalState::Down } else { LocalState::Up }).collect();
        let psi0 = DenseState::product(&locals).unwrap();
        let traj = ed_evolve(&op, &psi0, 0.1, 1.0).unwrap();
        for (_, psi) in traj {
            assert!((psi.inner(&psi0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_is_conserved() {
        let lat = build_lattice(4, 2).unwrap();
        let op = tfim_terms(1.0, 3.04, 0.0, &lat);
        let h = DenseOperator::from_local_sum(&op).unwrap();
        let psi0 = DenseState::product(&vec![LocalState::z_plus(); 8]).unwrap();
        let e0 = psi0.expectation(&h).re;
        let traj = ed_evolve(&op, &psi0, 0.005, 2.0).unwrap();
        for (_, psi) in traj.iter().step_by(50) {
            assert!((psi.expectation(&h).re - e0).abs() < 1e-9);
        }
    }

    #[test]
    fn measurements() {
        let psi = DenseState::product(&[LocalState::Up, LocalState::Down, LocalState::z_plus()]).unwrap();
        let sx = psi.sx();
        assert!((sx[0] - 1.0).abs() < 1e-14 && (sx[1] + 1.0).abs() < 1e-14 && sx[2].abs() < 1e-14);
        assert!((psi.sz()[2] - 1.0).abs() < 1e-14);
        assert!((psi.xx(0, 1) + 1.0).abs() < 1e-14);
        assert!(psi.entropy(&[0]).unwrap().abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = DenseState::new(2, ndarray::array![C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)]).unwrap();
        assert!((bell.entropy(&[1]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bell.xx(0, 1) - 1.0).abs() < 1e-14);
        assert!((bell.zz(0, 1) - 1.0).abs() < 1e-14);
        assert!(matches!(DenseState::product(&vec![LocalState::Up; 21]), Err(OracleError::TooLarge { .. })));
    }
}
