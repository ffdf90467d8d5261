//! Measurements on TTN states.
//!
//! Single-site quantities come from one top-down pass that builds every
//! site's reduced density matrix. Correlators insert operators into a copy of
//! the state and take the overlap. Domain walls go through the environment
//! cache like any other local sum.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::{
    build_environments, collapse_branches, CollapsePlan, EnvError, Grouping, LocalSumOperator,
    SiteOp,
};
use crate::state::{overlap, SchmidtData, StateError, TtnState};
use crate::oracles::{DenseOperator, DenseState, OracleError};
use crate::tnalg::{Leg, TensorError};
use crate::topology::{Child, LatticeSpec, TreeTopology};
use crate::C64;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

const NORM_TOL: f64 = 1e-8;
const IMAG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("site {0} out of range")]
    SiteOutOfRange(usize),
    #[error("two-point function needs distinct sites, got {0} twice")]
    SameSite(usize),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("expectation value has imaginary part {0}")]
    Imaginary(f64),
    #[error("region is empty")]
    EmptyRegion,
    #[error("tree level {0} has no link")]
    BadLevel(usize),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

type Result<T> = std::result::Result<T, ObservableError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pauli {
    /// Ising axis.
    X,
    /// Transverse axis.
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Array2<C64> {
        match self {
            Pauli::X => SiteOp::X.matrix(),
            Pauli::Z => SiteOp::Z.matrix(),
        }
    }
}

fn real(z: C64, scale: f64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * scale.max(1.0) {
        return Err(ObservableError::Imaginary(z.im));
    }
    Ok(z.re)
}

fn check_site(state: &TtnState, site: usize) -> Result<()> {
    if site >= state.topology().n_sites() {
        return Err(ObservableError::SiteOutOfRange(site));
    }
    Ok(())
}

/// A root-gauged normalized copy of `state`.
fn gauged(state: &TtnState) -> Result<TtnState> {
    let mut s = state.clone();
    s.isometrize(s.topology().root())?;
    let n = s.norm();
    if (n * n - 1.0).abs() > NORM_TOL {
        return Err(ObservableError::NotNormalized(n));
    }
    Ok(s)
}

/// Reduced density matrices `ρ[a, a'] = Σ ψ_a conj(ψ_a')` of every site.
pub fn site_density_matrices(state: &TtnState) -> Result<Vec<Array2<C64>>> {
    let s = gauged(state)?;
    let topo = s.topology();
    let mut out = vec![Array2::<C64>::zeros((2, 2)); topo.n_sites()];
    // density matrix on the up leg of each node
    let mut up: Vec<Option<Array2<C64>>> = vec![None; topo.n_nodes()];
    for n in 0..topo.n_nodes() {
        let t = s.tensor(n);
        let y = match up[n].take() {
            Some(rho) => t.apply_on_leg(Leg::Link(n), rho.t())?,
            None => t.clone(),
        };
        for child in topo.nodes[n].children {
            let leg = match child {
                Child::Node(c) => Leg::Link(c),
                Child::Leaf(site) => Leg::Site(site),
            };
            let (my, _) = y.to_matrix(&[leg])?;
            let (mt, _) = t.to_matrix(&[leg])?;
            let rho = my.dot(&mt.t().mapv(|z| z.conj()));
            match child {
                Child::Node(c) => up[c] = Some(rho),
                Child::Leaf(site) => out[site] = rho,
            }
        }
    }
    Ok(out)
}

fn expect_2x2(rho: &Array2<C64>, op: &Array2<C64>) -> C64 {
    op.dot(rho).diag().sum()
}

/// `⟨σ^axis_site⟩`.
pub fn site_expectation(state: &TtnState, site: usize, axis: Pauli) -> Result<f64> {
    check_site(state, site)?;
    let rhos = site_density_matrices(state)?;
    real(expect_2x2(&rhos[site], &axis.matrix()), 1.0)
}

/// `(⟨σx_i⟩, ⟨σz_i⟩)` for all sites from a single pass.
pub fn magnetizations(state: &TtnState) -> Result<(Vec<f64>, Vec<f64>)> {
    let rhos = site_density_matrices(state)?;
    let (px, pz) = (Pauli::X.matrix(), Pauli::Z.matrix());
    let mut sx = Vec::with_capacity(rhos.len());
    let mut sz = Vec::with_capacity(rhos.len());
    for r in &rhos {
        sx.push(real(expect_2x2(r, &px), 1.0)?);
        sz.push(real(expect_2x2(r, &pz), 1.0)?);
    }
    Ok((sx, sz))
}

/// Applies single-site operators to a copy of `state`.
fn with_insertions(state: &TtnState, ops: &[(usize, Array2<C64>)]) -> Result<TtnState> {
    let mut s = state.clone();
    for (site, op) in ops {
        let node = s.topology().site_parent[*site];
        let t = s.tensor(node).apply_on_leg(Leg::Site(*site), op.view())?;
        s.set_tensor(node, t)?;
    }
    Ok(s)
}

/// `⟨σ^axis_i σ^axis_j⟩`.
pub fn two_point(state: &TtnState, i: usize, j: usize, axis: Pauli) -> Result<f64> {
    check_site(state, i)?;
    check_site(state, j)?;
    if i == j {
        return Err(ObservableError::SameSite(i));
    }
    let s = gauged(state)?;
    let m = axis.matrix();
    let o = with_insertions(&s, &[(i, m.clone()), (j, m)])?;
    real(overlap(&s, &o)?, 1.0)
}

/// `⟨σ_i σ_j⟩ − ⟨σ_i⟩⟨σ_j⟩`.
pub fn two_point_connected(state: &TtnState, i: usize, j: usize, axis: Pauli) -> Result<f64> {
    let full = two_point(state, i, j, axis)?;
    let rhos = site_density_matrices(state)?;
    let m = axis.matrix();
    let a = real(expect_2x2(&rhos[i], &m), 1.0)?;
    let b = real(expect_2x2(&rhos[j], &m), 1.0)?;
    Ok(full - a * b)
}

/// Expectation of a local sum through a freshly built environment cache.
pub fn operator_expectation(state: &TtnState, plan: &Arc<CollapsePlan>) -> Result<f64> {
    let s = gauged(state)?;
    let cache = build_environments(&s, plan.clone())?;
    let e = cache.expectation(&s)?;
    real(e, e.norm())
}

/// Reusable `⟨D⟩` evaluator.
#[derive(Clone, Debug)]
pub struct DomainWallMeter {
    plan: Arc<CollapsePlan>,
}

impl DomainWallMeter {
    pub fn new(state: &TtnState, dw: &LocalSumOperator) -> Result<Self> {
        let plan = collapse_branches(dw, state.topology_arc().clone(), Grouping::Collapsed)?;
        Ok(Self {
            plan: Arc::new(plan),
        })
    }

    pub fn measure(&self, state: &TtnState) -> Result<f64> {
        operator_expectation(state, &self.plan)
    }
}

/// `⟨D⟩` for the domain-wall operator `dw`.
pub fn domain_wall_length(state: &TtnState, dw: &LocalSumOperator) -> Result<f64> {
    DomainWallMeter::new(state, dw)?.measure(state)
}

pub fn region_mean(state: &TtnState, sites: &[usize], axis: Pauli) -> Result<f64> {
    if sites.is_empty() {
        return Err(ObservableError::EmptyRegion);
    }
    for &s in sites {
        check_site(state, s)?;
    }
    let (sx, sz) = magnetizations(state)?;
    let v = match axis {
        Pauli::X => sx,
        Pauli::Z => sz,
    };
    Ok(sites.iter().map(|&s| v[s]).sum::<f64>() / sites.len() as f64)
}

/// Mean of per-site values over a region.
pub fn mean_over(values: &[f64], sites: &[usize]) -> f64 {
    sites.iter().map(|&s| values[s]).sum::<f64>() / sites.len() as f64
}

/// Schmidt data across the link that splits off `1/2^level` of the system
/// (level 1 is the half-system cut below the root).
pub fn schmidt_at_levels(state: &TtnState, levels: &[usize]) -> Result<Vec<(usize, SchmidtData)>> {
    let mut s = gauged(state)?;
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let link = s
            .topology()
            .level_node(level)
            .ok_or(ObservableError::BadLevel(level))?;
        out.push((level, s.schmidt_spectrum(link)?));
    }
    Ok(out)
}

pub fn entropy_profile(state: &TtnState, levels: &[usize]) -> Result<BTreeMap<usize, f64>> {
    Ok(schmidt_at_levels(state, levels)?
        .into_iter()
        .map(|(l, sd)| (l, sd.entropy))
        .collect())
}

/// Sites at Chebyshev distance `r = 1, 2, ...` from `(Lx/2, Ly/2)`.
fn chebyshev_shells(lat: &LatticeSpec) -> Vec<Vec<usize>> {
    let (cx, cy) = (lat.lx / 2, lat.ly / 2);
    let rmax = cx.max(cy).max(lat.lx - 1 - cx).max(lat.ly - 1 - cy);
    let mut shells = vec![Vec::new(); rmax];
    for site in 0..lat.n_sites() {
        let (x, y) = lat.coords(site);
        let r = x.abs_diff(cx).max(y.abs_diff(cy));
        if r > 0 {
            shells[r - 1].push(site);
        }
    }
    shells
}

/// Connected `⟨σz_c σz_r⟩` from the central site `(Lx/2, Ly/2)`, averaged
/// over sites at Chebyshev distance `r = 1, 2, ...`.
pub fn correlation_spread(state: &TtnState) -> Result<Vec<f64>> {
    let lat = &state.topology().lattice;
    let center = lat.site(lat.lx / 2, lat.ly / 2);
    let s = gauged(state)?;
    let (_, sz) = magnetizations(&s)?;
    let m = Pauli::Z.matrix();
    chebyshev_shells(lat)
        .iter()
        .map(|shell| {
            let mut acc = 0.0;
            for &site in shell {
                let o = with_insertions(&s, &[(center, m.clone()), (site, m.clone())])?;
                acc += real(overlap(&s, &o)?, 1.0)? - sz[center] * sz[site];
            }
            Ok(acc / shell.len() as f64)
        })
        .collect()
}

/// One time slice of measured quantities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub schema_version: u32,
    /// Backend that produced the record (`ttn`, `ed`, `pxp_ed`, `fermion`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub time: f64,
    pub sx: Vec<f64>,
    pub sz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dw_length: Option<f64>,
    #[serde(default)]
    pub entropies: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<SchmidtData>>,
    #[serde(default)]
    pub region_means: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_spread: Option<Vec<f64>>,
    /// Site densities of the fermion chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<f64>>,
}

/// Which quantities a [`Recorder`] evaluates.
#[derive(Clone, Debug, Default)]
pub struct RecordSpec {
    pub levels: Vec<usize>,
    pub spectrum_levels: Vec<usize>,
    pub regions: BTreeMap<String, (Vec<usize>, Pauli)>,
    pub domain_walls: bool,
    pub correlations: bool,
}

/// Produces [`ObservableRecord`]s for a fixed set of observables.
#[derive(Clone, Debug)]
pub struct Recorder {
    spec: RecordSpec,
    dw: Option<DomainWallMeter>,
}

impl Recorder {
    pub fn new(state: &TtnState, spec: RecordSpec) -> Result<Self> {
        let dw = if spec.domain_walls {
            let op = crate::hamiltonian::domain_wall_operator(&state.topology().lattice);
            Some(DomainWallMeter::new(state, &op)?)
        } else {
            None
        };
        Ok(Self { spec, dw })
    }

    pub fn record(&self, time: f64, state: &TtnState) -> Result<ObservableRecord> {
        let (sx, sz) = magnetizations(state)?;
        let region_means = self
            .spec
            .regions
            .iter()
            .map(|(name, (sites, axis))| {
                let v = match axis {
                    Pauli::X => &sx,
                    Pauli::Z => &sz,
                };
                (name.clone(), mean_over(v, sites))
            })
            .collect();
        let dw_length = match &self.dw {
            Some(m) => Some(m.measure(state)?),
            None => None,
        };
        let entropies = entropy_profile(state, &self.spec.levels)?;
        let spectrum = if self.spec.spectrum_levels.is_empty() {
            None
        } else {
            Some(
                schmidt_at_levels(state, &self.spec.spectrum_levels)?
                    .into_iter()
                    .map(|(_, sd)| sd)
                    .collect(),
            )
        };
        let correlation_spread = if self.spec.correlations {
            Some(correlation_spread(state)?)
        } else {
            None
        };
        Ok(ObservableRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            source: Some("ttn".into()),
            time,
            sx,
            sz,
            dw_length,
            entropies,
            spectrum,
            region_means,
            correlation_spread,
            densities: None,
        })
    }
}

/// [`ObservableRecord`]s from dense statevectors, with entropies taken over
/// the same tree cuts as the TTN recorder.
#[derive(Clone, Debug)]
pub struct DenseRecorder {
    spec: RecordSpec,
    topology: Arc<TreeTopology>,
    dw: Option<DenseOperator>,
    source: String,
}

impl DenseRecorder {
    pub fn new(topology: Arc<TreeTopology>, spec: RecordSpec, source: &str) -> Result<Self> {
        for &l in spec.levels.iter().chain(&spec.spectrum_levels) {
            topology.level_node(l).ok_or(ObservableError::BadLevel(l))?;
        }
        let dw = if spec.domain_walls {
            let op = crate::hamiltonian::domain_wall_operator(&topology.lattice);
            Some(DenseOperator::from_local_sum(&op)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            topology,
            dw,
            source: source.into(),
        })
    }

    fn schmidt(&self, psi: &DenseState, level: usize) -> Result<SchmidtData> {
        let node = self
            .topology
            .level_node(level)
            .ok_or(ObservableError::BadLevel(level))?;
        let values = psi
            .schmidt_values(self.topology.sites_of(node))?;
        Ok(SchmidtData {
            link: node,
            entropy: crate::state::entropy_of(&values),
            values,
        })
    }

    pub fn record(&self, time: f64, psi: &DenseState) -> Result<ObservableRecord> {
        let n = psi.norm();
        if (n * n - 1.0).abs() > NORM_TOL {
            return Err(ObservableError::NotNormalized(n));
        }
        let (sx, sz) = (psi.sx(), psi.sz());
        let region_means = self
            .spec
            .regions
            .iter()
            .map(|(name, (sites, axis))| {
                let v = match axis {
                    Pauli::X => &sx,
                    Pauli::Z => &sz,
                };
                (name.clone(), mean_over(v, sites))
            })
            .collect();
        let dw_length = match &self.dw {
            Some(op) => Some(real(psi.expectation(op), 1.0)?),
            None => None,
        };
        let mut entropies = BTreeMap::new();
        for &l in &self.spec.levels {
            entropies.insert(l, self.schmidt(psi, l)?.entropy);
        }
        let spectrum = if self.spec.spectrum_levels.is_empty() {
            None
        } else {
            Some(
                self.spec
                    .spectrum_levels
                    .iter()
                    .map(|&l| self.schmidt(psi, l))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let correlation_spread = if self.spec.correlations {
            let lat = &self.topology.lattice;
            let (cx, cy) = (lat.lx / 2, lat.ly / 2);
            let center = lat.site(cx, cy);
            Some(
                chebyshev_shells(lat)
                    .iter()
                    .map(|shell| {
                        shell
                            .iter()
                            .map(|&j| psi.zz(center, j) - sz[center] * sz[j])
                            .sum::<f64>()
                            / shell.len() as f64
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(ObservableRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            source: Some(self.source.clone()),
            time,
            sx,
            sz,
            dw_length,
            entropies,
            spectrum,
            region_means,
            correlation_spread,
            densities: None,
        })
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[ObservableRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<ObservableRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Wide CSV: `schema_version, source, time, sx_<x>_<y>.., sz_<x>_<y>..,
/// dw_length, ent_L<level>.., region_<name>.., n_<x>..`. Columns follow the
/// first record; spectra and correlation profiles are JSONL-only.
pub fn write_csv<W: Write>(w: W, records: &[ObservableRecord], lx: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = records.first() else {
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["schema_version".to_string(), "source".to_string(), "time".to_string()];
    header.extend((0..first.sx.len()).map(|i| format!("sx_{}_{}", i % lx, i / lx)));
    header.extend((0..first.sz.len()).map(|i| format!("sz_{}_{}", i % lx, i / lx)));
    header.push("dw_length".into());
    header.extend(first.entropies.keys().map(|l| format!("ent_L{l}")));
    header.extend(first.region_means.keys().map(|k| format!("region_{k}")));
    let n_dens = first.densities.as_ref().map_or(0, Vec::len);
    header.extend((0..n_dens).map(|x| format!("n_{x}")));
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.schema_version.to_string(),
            r.source.clone().unwrap_or_default(),
            r.time.to_string(),
        ];
        row.extend(r.sx.iter().map(f64::to_string));
        row.extend(r.sz.iter().map(f64::to_string));
        row.push(r.dw_length.map(|d| d.to_string()).unwrap_or_default());
        row.extend(first.entropies.keys().map(|l| {
            r.entropies.get(l).map(f64::to_string).unwrap_or_default()
        }));
        row.extend(first.region_means.keys().map(|k| {
            r.region_means.get(k).map(f64::to_string).unwrap_or_default()
        }));
        if let Some(d) = &r.densities {
            row.extend(d.iter().take(n_dens).map(f64::to_string));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::domain_wall_operator;
    use crate::state::{node_legs, LocalState};
    use crate::tnalg::Tensor;
    use crate::topology::{build_lattice, build_tree, Orientation, TreeTopology};
    use ndarray::Array1;
    use proptest::prelude::*;

    fn topo(lx: usize, ly: usize) -> Arc<TreeTopology> {
        Arc::new(build_tree(&build_lattice(lx, ly).unwrap(), Orientation::Standard))
    }

    fn dense_site_op(v: &Array1<C64>, n: usize, ops: &[(usize, Array2<C64>)]) -> C64 {
        let mut w = v.clone();
        for (site, m) in ops {
            let mut next = Array1::<C64>::zeros(w.len());
            for (idx, amp) in w.iter().enumerate() {
                let b = (idx >> site) & 1;
                for a in 0..2 {
                    let target = (idx & !(1 << site)) | (a << site);
                    next[target] += m[[a, b]] * amp;
                }
            }
            w = next;
        }
        let _ = n;
        v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn product_state_values() {
        let t = topo(4, 4);
        let up = TtnState::product_state(t.clone(), &[LocalState::Up; 16], 4).unwrap();
        assert!((site_expectation(&up, 5, Pauli::X).unwrap() - 1.0).abs() < 1e-12);
        let zp = TtnState::product_state(t.clone(), &[LocalState::z_plus(); 16], 4).unwrap();
        let (sx, sz) = magnetizations(&zp).unwrap();
        assert!(sx.iter().all(|v| v.abs() < 1e-12));
        assert!(sz.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(two_point_connected(&zp, 0, 9, Pauli::Z).unwrap().abs() < 1e-10);
        assert!(domain_wall_length(&up, &domain_wall_operator(&t.lattice)).unwrap().abs() < 1e-10);
        let e = entropy_profile(&zp, &[1, 2, 3]).unwrap();
        assert!(e.values().all(|s| s.abs() < 1e-10));
        assert!((region_mean(&zp, &[1, 2], Pauli::Z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_pair_correlator() {
        // (|↑↑⟩+|↓↓⟩)/√2 on two sites sharing a node, others up
        let t = topo(2, 2);
        let mut s = TtnState::product_state(t.clone(), &[LocalState::Up; 4], 4).unwrap();
        let pair = t.site_parent[t.leaf_order[0]];
        let (i, j) = (t.leaf_order[0], t.leaf_order[1]);
        let old = s.tensor(pair).clone();
        let shape = old.shape().to_vec();
        let mut tt = Tensor::zeros(node_legs(&t, pair), &shape).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        tt.data_mut()[[0, 0, 0]] = C64::new(h, 0.0);
        tt.data_mut()[[1, 1, 0]] = C64::new(h, 0.0);
        s.set_tensor(pair, tt).unwrap();
        assert!((two_point(&s, i, j, Pauli::X).unwrap() - 1.0).abs() < 1e-12);
        assert!((two_point_connected(&s, i, j, Pauli::X).unwrap() - 1.0).abs() < 1e-12);
        assert!(site_expectation(&s, i, Pauli::X).unwrap().abs() < 1e-12);
        assert!(matches!(two_point(&s, i, i, Pauli::X), Err(ObservableError::SameSite(_))));
        assert!(matches!(site_expectation(&s, 4, Pauli::X), Err(ObservableError::SiteOutOfRange(4))));
    }

    #[test]
    fn random_state_matches_dense() {
        let t = topo(4, 2);
        let s = TtnState::random(t.clone(), 8, 11).unwrap();
        let v = s.to_statevector().unwrap();
        let (sx, sz) = magnetizations(&s).unwrap();
        for site in 0..8 {
            let ex = dense_site_op(&v, 8, &[(site, Pauli::X.matrix())]).re;
            let ez = dense_site_op(&v, 8, &[(site, Pauli::Z.matrix())]).re;
            assert!((sx[site] - ex).abs() < 1e-10);
            assert!((sz[site] - ez).abs() < 1e-10);
        }
        for (i, j) in [(0, 1), (0, 7), (3, 4), (2, 6)] {
            let d = dense_site_op(&v, 8, &[(i, Pauli::Z.matrix()), (j, Pauli::Z.matrix())]).re;
            assert!((two_point(&s, i, j, Pauli::Z).unwrap() - d).abs() < 1e-10);
        }
    }

    #[test]
    fn domain_wall_sum_rule() {
        let t = topo(4, 4);
        let s = TtnState::random(t.clone(), 8, 3).unwrap();
        let d = domain_wall_length(&s, &domain_wall_operator(&t.lattice)).unwrap();
        let sum: f64 = t
            .lattice
            .bonds
            .iter()
            .map(|&(a, b)| 0.5 * (1.0 - two_point(&s, a, b, Pauli::X).unwrap()))
            .sum();
        assert!((d - sum).abs() < 1e-9, "{d} vs {sum}");
        assert!(d >= -1e-9 && d <= t.lattice.bonds.len() as f64 + 1e-9);
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let t = topo(2, 2);
        let mut s = TtnState::random(t, 4, 1).unwrap();
        let root = s.topology().root();
        let mut r = s.tensor(root).clone();
        r.scale(C64::new(2.0, 0.0));
        s.set_tensor(root, r).unwrap();
        assert!(matches!(magnetizations(&s), Err(ObservableError::NotNormalized(_))));
    }

    #[test]
    fn records_serialize() {
        let t = topo(4, 4);
        let s = TtnState::random(t.clone(), 4, 2).unwrap();
        let mut spec = RecordSpec {
            levels: vec![1, 2],
            spectrum_levels: vec![1],
            domain_walls: true,
            correlations: true,
            ..Default::default()
        };
        spec.regions.insert("center".into(), (vec![5, 6, 9, 10], Pauli::Z));
        let rec = Recorder::new(&s, spec).unwrap();
        let records = vec![rec.record(0.0, &s).unwrap(), rec.record(0.1, &s).unwrap()];
        assert_eq!(records[0].correlation_spread.as_ref().unwrap().len(), 2);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        let back = read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, records);
        let mut csvbuf = Vec::new();
        write_csv(&mut csvbuf, &records, 4).unwrap();
        let text = String::from_utf8(csvbuf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.contains("sx_3_2,") && header.contains("ent_L2"));
        assert_eq!(header.split(',').count(), 3 + 32 + 1 + 2 + 1);
        assert_eq!(text.lines().count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn observables_are_gauge_invariant(seed in 0u64..1000, target in 0usize..15) {
            let t = topo(4, 4);
            let s = TtnState::random(t.clone(), 6, seed).unwrap();
            let mut g = s.clone();
            g.isometrize(target).unwrap();
            let (a, b) = (magnetizations(&s).unwrap(), magnetizations(&g).unwrap());
            for k in 0..16 {
                prop_assert!((a.0[k] - b.0[k]).abs() < 1e-10);
                prop_assert!((a.1[k] - b.1[k]).abs() < 1e-10);
            }
            let e1 = entropy_profile(&s, &[1, 2, 3]).unwrap();
            let e2 = entropy_profile(&g, &[1, 2, 3]).unwrap();
            for l in 1..=3 {
                prop_assert!((e1[&l] - e2[&l]).abs() < 1e-10);
            }
            prop_assert!((two_point(&s, 0, 15, Pauli::X).unwrap() - two_point(&g, 0, 15, Pauli::X).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn magnetizations_are_bounded(seed in 0u64..1000) {
            let s = TtnState::random(topo(4, 2), 4, seed).unwrap();
            let (sx, sz) = magnetizations(&s).unwrap();
            prop_assert!(sx.iter().chain(sz.iter()).all(|v| v.abs() <= 1.0 + 1e-9));
        }
    }
}
