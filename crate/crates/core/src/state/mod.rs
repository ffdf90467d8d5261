//! Tree tensor network states.
//!
//! Node `n` stores a tensor with legs `[child0, child1, Link(n)]`, where a
//! child leg is `Link(c)` for a child node and `Site(s)` for a lattice site.
//! The root has no upper leg. With a gauge center set, every other tensor is
//! an isometry pointing toward it.

pub mod checkpoint;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tnalg::{self, contract, factorize, FactorizeMode, Leg, Tensor, TensorError};
use crate::topology::{Child, TreeTopology};
use crate::C64;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};

#[derive(Debug, Error)]
pub enum StateError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("expected {expected} local states, got {got}")]
    SiteCount { expected: usize, got: usize },
    #[error("local state of site {0} has zero norm")]
    ZeroLocalState(usize),
    #[error("bond dimension must be at least 1")]
    ZeroBond,
    #[error("state has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("{0} sites exceed the dense-vector limit of 20")]
    TooLarge(usize),
    #[error("states live on different topologies")]
    TopologyMismatch,
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("no gauge center is set")]
    NoCenter,
    #[error("tensor for node {node} has legs {got:?}, expected {expected:?}")]
    LegMismatch {
        node: usize,
        got: Vec<Leg>,
        expected: Vec<Leg>,
    },
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Singular values across one link and the resulting entanglement entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtData {
    pub link: usize,
    /// Descending.
    pub values: Vec<f64>,
    /// `-Σ σ² ln σ²`, natural log.
    pub entropy: f64,
}

pub fn entropy_of(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|s| s * s)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Single-site spin state in the Ising (σx) basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LocalState {
    Up,
    Down,
    Amplitudes([C64; 2]),
}

impl LocalState {
    pub fn amplitudes(&self) -> [C64; 2] {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        match self {
            LocalState::Up => [one, zero],
            LocalState::Down => [zero, one],
            LocalState::Amplitudes(a) => *a,
        }
    }

    /// `+1` eigenstate of the transverse σz: `(|↑⟩ + |↓⟩)/√2`.
    pub fn z_plus() -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        LocalState::Amplitudes([s, s])
    }
}

/// Leg label that a node uses for one of its children.
pub fn child_leg(child: Child) -> Leg {
    match child {
        Child::Node(c) => Leg::Link(c),
        Child::Leaf(s) => Leg::Site(s),
    }
}

/// Canonical leg order of a node tensor.
pub fn node_legs(topo: &TreeTopology, node: usize) -> Vec<Leg> {
    let n = &topo.nodes[node];
    let mut legs = vec![child_leg(n.children[0]), child_leg(n.children[1])];
    if n.parent.is_some() {
        legs.push(Leg::Link(node));
    }
    legs
}

/// `min(chi, exact bound)` for the link above `node`.
pub fn capped_bond(topo: &TreeTopology, node: usize, chi: usize) -> usize {
    chi.min(topo.exact_bond_bound(node))
}

/// Leg labels used for a link matrix between split and absorb.
pub const LINK_LOW: Leg = Leg::Aux(0);
pub const LINK_UP: Leg = Leg::Aux(1);
const SCRATCH: Leg = Leg::Aux(100);

/// Bond matrix produced by [`TtnState::split_toward`]. Its legs are
/// [`LINK_LOW`] (basis of the lower subtree) and [`LINK_UP`] (basis of the
/// rest of the tree).
#[derive(Clone, Debug)]
pub struct LinkMatrix {
    /// Id of the link, i.e. of its lower node.
    pub link: usize,
    /// Node that will absorb the matrix.
    pub target: usize,
    pub matrix: Tensor,
}

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct TtnState {
    topology: Arc<TreeTopology>,
    tensors: Vec<Tensor>,
    center: Option<usize>,
    versions: Vec<u64>,
    clock: u64,
    uid: u64,
}

impl Clone for TtnState {
    /// Clones get a fresh identity so that environment caches built for the
    /// original are rejected for the copy.
    fn clone(&self) -> Self {
        Self {
            topology: self.topology.clone(),
            tensors: self.tensors.clone(),
            center: self.center,
            versions: self.versions.clone(),
            clock: self.clock,
            uid: fresh_uid(),
        }
    }
}

impl TtnState {
    /// Assembles a state from node tensors. The caller vouches for `center`.
    pub fn from_tensors(
        topology: Arc<TreeTopology>,
        tensors: Vec<Tensor>,
        center: Option<usize>,
    ) -> Result<Self> {
        if tensors.len() != topology.n_nodes() {
            return Err(StateError::SiteCount {
                expected: topology.n_nodes(),
                got: tensors.len(),
            });
        }
        let mut out = Vec::with_capacity(tensors.len());
        for (n, t) in tensors.into_iter().enumerate() {
            out.push(canonical(&topology, n, t)?);
        }
        for n in 0..out.len() {
            for (k, child) in topology.nodes[n].children.iter().enumerate() {
                let expect = match child {
                    Child::Leaf(_) => 2,
                    Child::Node(c) => {
                        let up = out[*c].dim_of(Leg::Link(*c))?;
                        up
                    }
                };
                if out[n].shape()[k] != expect {
                    return Err(TensorError::DimensionMismatch {
                        leg: child_leg(*child),
                        left: out[n].shape()[k],
                        right: expect,
                    }
                    .into());
                }
            }
        }
        let n = out.len();
        Ok(Self {
            topology,
            tensors: out,
            center,
            versions: (1..=n as u64).collect(),
            clock: n as u64,
            uid: fresh_uid(),
        })
    }

    /// Exact product state, padded to bond dimension `min(chi, bound)`.
    ///
    /// Column 0 of each node carries the product state; the remaining columns
    /// complete an orthonormal set by Gram-Schmidt over standard basis vectors
    /// in index order. The gauge center is the root.
    pub fn product_state(
        topology: Arc<TreeTopology>,
        locals: &[LocalState],
        chi: usize,
    ) -> Result<Self> {
        let n_sites = topology.n_sites();
        if locals.len() != n_sites {
            return Err(StateError::SiteCount {
                expected: n_sites,
                got: locals.len(),
            });
        }
        if chi == 0 {
            return Err(StateError::ZeroBond);
        }
        let mut amps = Vec::with_capacity(n_sites);
        for (s, l) in locals.iter().enumerate() {
            let a = l.amplitudes();
            let norm = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
            if norm == 0.0 {
                return Err(StateError::ZeroLocalState(s));
            }
            amps.push([a[0] / norm, a[1] / norm]);
        }
        let mut tensors = Vec::with_capacity(topology.n_nodes());
        for id in 0..topology.n_nodes() {
            let node = &topology.nodes[id];
            let child_vec = |c: Child| -> Array1<C64> {
                match c {
                    Child::Leaf(s) => Array1::from(amps[s].to_vec()),
                    Child::Node(c) => {
                        let d = capped_bond(&topology, c, chi);
                        let mut v = Array1::zeros(d);
                        v[0] = C64::new(1.0, 0.0);
                        v
                    }
                }
            };
            let v0 = child_vec(node.children[0]);
            let v1 = child_vec(node.children[1]);
            let (d0, d1) = (v0.len(), v1.len());
            let mut first = Array1::zeros(d0 * d1);
            for a in 0..d0 {
                for b in 0..d1 {
                    first[a * d1 + b] = v0[a] * v1[b];
                }
            }
            let legs = node_legs(&topology, id);
            let t = if node.parent.is_some() {
                let d = capped_bond(&topology, id, chi);
                let cols = complete_columns(&first, d);
                Tensor::new(
                    legs,
                    cols.into_shape_with_order(IxDyn(&[d0, d1, d]))
                        .expect("shape")
                        .into_dyn(),
                )?
            } else {
                Tensor::new(
                    legs,
                    first.into_shape_with_order(IxDyn(&[d0, d1])).expect("shape"),
                )?
            };
            tensors.push(t);
        }
        Self::from_tensors(topology, tensors, Some(0))
    }

    /// Random state with bond dimensions `min(chi, bound)`, normalized and
    /// gauged to the root.
    pub fn random(topology: Arc<TreeTopology>, chi: usize, seed: u64) -> Result<Self> {
        if chi == 0 {
            return Err(StateError::ZeroBond);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::with_capacity(topology.n_nodes());
        for id in 0..topology.n_nodes() {
            let node = &topology.nodes[id];
            let mut shape: Vec<usize> = node
                .children
                .iter()
                .map(|&c| match c {
                    Child::Leaf(_) => 2,
                    Child::Node(c) => capped_bond(&topology, c, chi),
                })
                .collect();
            if node.parent.is_some() {
                shape.push(capped_bond(&topology, id, chi));
            }
            let len: usize = shape.iter().product();
            let data: Vec<C64> = (0..len)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            tensors.push(Tensor::from_vec(node_legs(&topology, id), &shape, data)?);
        }
        let mut s = Self::from_tensors(topology, tensors, None)?;
        s.isometrize(0)?;
        s.normalize();
        Ok(s)
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn topology_arc(&self) -> &Arc<TreeTopology> {
        &self.topology
    }

    pub fn tensor(&self, node: usize) -> &Tensor {
        &self.tensors[node]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Identity of this state object; fresh for every clone.
    pub fn uid(&self) -> u64 {
        self.uid
    }

    /// Modification stamp of a node tensor; strictly increases on each change.
    pub fn version(&self, node: usize) -> u64 {
        self.versions[node]
    }

    pub fn bond_dim(&self, link: usize) -> usize {
        self.tensors[link]
            .dim_of(Leg::Link(link))
            .expect("non-root tensors carry their upper link")
    }

    /// Bond dimension per link id; the root entry is 0.
    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.tensors.len())
            .map(|n| {
                if self.topology.nodes[n].parent.is_some() {
                    self.bond_dim(n)
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn touch(&mut self, node: usize) {
        self.clock += 1;
        self.versions[node] = self.clock;
    }

    /// Replaces a node tensor, keeping the gauge center label untouched.
    pub fn set_tensor(&mut self, node: usize, t: Tensor) -> Result<()> {
        if node >= self.tensors.len() {
            return Err(StateError::UnknownNode(node));
        }
        let t = canonical(&self.topology, node, t)?;
        if t.shape() != self.tensors[node].shape() {
            return Err(TensorError::DimensionMismatch {
                leg: t.legs()[0],
                left: t.shape()[0],
                right: self.tensors[node].shape()[0],
            }
            .into());
        }
        self.tensors[node] = t;
        self.touch(node);
        Ok(())
    }

    /// Overrides the recorded gauge center; used after external edits.
    pub fn set_center(&mut self, center: Option<usize>) {
        self.center = center;
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.tensors.len() {
            Err(StateError::UnknownNode(node))
        } else {
            Ok(())
        }
    }

    fn adjacent_leg(&self, from: usize, to: usize) -> Result<Leg> {
        let topo = &self.topology;
        if topo.nodes[from].parent == Some(to) {
            Ok(Leg::Link(from))
        } else if topo.nodes[to].parent == Some(from) {
            Ok(Leg::Link(to))
        } else {
            Err(StateError::NotAdjacent(from, to))
        }
    }

    /// QR-splits the tensor at `from` (normally the center), leaving it an
    /// isometry toward `to`, and returns the bond matrix for that link. The
    /// state has no gauge center until [`absorb`](Self::absorb) is called.
    pub fn split_toward(&mut self, from: usize, to: usize) -> Result<LinkMatrix> {
        self.check_node(from)?;
        self.check_node(to)?;
        let leg = self.adjacent_leg(from, to)?;
        let t = &self.tensors[from];
        let rows: Vec<Leg> = t.legs().iter().copied().filter(|&l| l != leg).collect();
        let d = factorize(t, &rows, FactorizeMode::Qr, None, SCRATCH)?;
        let mut q = d.isometry;
        q.relabel(SCRATCH, leg)?;
        let mut r = d.remainder;
        let link = match leg {
            Leg::Link(l) => l,
            _ => unreachable!(),
        };
        if link == from {
            r.relabel(SCRATCH, LINK_LOW)?;
            r.relabel(leg, LINK_UP)?;
        } else {
            r.relabel(SCRATCH, LINK_UP)?;
            r.relabel(leg, LINK_LOW)?;
        }
        self.tensors[from] = canonical(&self.topology, from, q)?;
        self.touch(from);
        self.center = None;
        Ok(LinkMatrix {
            link,
            target: to,
            matrix: r,
        })
    }

    /// Multiplies a bond matrix into its target node, which becomes the
    /// gauge center.
    pub fn absorb(&mut self, m: LinkMatrix) -> Result<()> {
        let link = m.link;
        let target = m.target;
        let t = &self.tensors[target];
        let out = if target == link {
            // lower node absorbs: new T[.., j] = Σ_k T[.., k] M[k, j]
            let mut o = contract(t, &m.matrix, &[(Leg::Link(link), LINK_LOW)])?;
            o.relabel(LINK_UP, Leg::Link(link))?;
            o
        } else {
            let mut o = contract(&m.matrix, t, &[(LINK_UP, Leg::Link(link))])?;
            o.relabel(LINK_LOW, Leg::Link(link))?;
            o
        };
        self.tensors[target] = canonical(&self.topology, target, out)?;
        self.touch(target);
        self.center = Some(target);
        Ok(())
    }

    /// Moves the gauge center to an adjacent node.
    pub fn move_center(&mut self, to: usize) -> Result<()> {
        let from = self.center.ok_or(StateError::NoCenter)?;
        let m = self.split_toward(from, to)?;
        self.absorb(m)
    }

    /// Brings the gauge center to `target` by QR sweeps, leaving the physical
    /// state unchanged.
    pub fn isometrize(&mut self, target: usize) -> Result<()> {
        self.check_node(target)?;
        match self.center {
            Some(c) => {
                let path = self.topology.path(c, target);
                for w in path.windows(2) {
                    self.move_center(w[1])?;
                }
            }
            None => {
                // farthest nodes first, each pushed toward its neighbour on
                // the way to the target
                let order = bfs_from(&self.topology, target);
                for &(node, toward) in order.iter().rev() {
                    if let Some(next) = toward {
                        let m = self.split_toward(node, next)?;
                        self.absorb(m)?;
                    }
                }
                self.center = Some(target);
            }
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        match self.center {
            Some(c) => self.tensors[c].norm_sqr(),
            None => overlap(self, self).map(|z| z.re).unwrap_or(f64::NAN),
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales the center tensor to unit norm. Without a center the root
    /// tensor is rescaled using the full overlap.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            let node = self.center.unwrap_or(0);
            self.tensors[node].scale(C64::new(1.0 / n, 0.0));
            self.touch(node);
        }
    }

    /// Largest deviation from the isometry condition over non-center nodes.
    pub fn isometry_error(&self) -> Result<f64> {
        let center = self.center.ok_or(StateError::NoCenter)?;
        let mut worst: f64 = 0.0;
        for n in 0..self.tensors.len() {
            if n == center {
                continue;
            }
            let path = self.topology.path(n, center);
            let leg = self.adjacent_leg(n, path[1])?;
            worst = worst.max(isometry_deviation(&self.tensors[n], leg)?);
        }
        Ok(worst)
    }

    /// Schmidt values across the link above `link`. Moves the gauge center to
    /// that node.
    pub fn schmidt_spectrum(&mut self, link: usize) -> Result<SchmidtData> {
        self.check_node(link)?;
        if self.topology.nodes[link].parent.is_none() {
            return Err(StateError::UnknownNode(link));
        }
        if self.center.is_none() {
            self.isometrize(link)?;
        }
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > 1e-8 {
            return Err(StateError::NotNormalized(n2.sqrt()));
        }
        self.isometrize(link)?;
        let t = &self.tensors[link];
        let (m, _) = t.to_matrix(&t.legs()[..2])?;
        let values = tnalg::singular_values(&m)?;
        Ok(SchmidtData {
            link,
            entropy: entropy_of(&values),
            values,
        })
    }

    /// Dense amplitudes indexed by `Σ_i b_i 2^i`.
    pub fn to_statevector(&self) -> Result<Array1<C64>> {
        let topo = &self.topology;
        let n = topo.n_sites();
        if n > 20 {
            return Err(StateError::TooLarge(n));
        }
        // rows indexed by Σ_k b_{s_k} 2^k over the node's in-order sites
        let mut blocks: Vec<Option<Array2<C64>>> = vec![None; topo.n_nodes()];
        for id in topo.post_order() {
            let node = &topo.nodes[id];
            let child_block = |c: Child, blocks: &mut Vec<Option<Array2<C64>>>| match c {
                Child::Leaf(_) => Array2::<C64>::eye(2),
                Child::Node(c) => blocks[c].take().expect("post-order"),
            };
            let b0 = child_block(node.children[0], &mut blocks);
            let b1 = child_block(node.children[1], &mut blocks);
            let t = &self.tensors[id];
            let (r0, d0) = b0.dim();
            let (r1, d1) = b1.dim();
            let du = if node.parent.is_some() { t.shape()[2] } else { 1 };
            let tm = t
                .data()
                .view()
                .into_shape_with_order((d0, d1 * du))
                .expect("standard layout");
            // (r0, d1*du) then contract child1
            let x = b0.dot(&tm);
            let x = x.into_shape_with_order((r0, d1, du)).expect("shape");
            let mut out = Array2::<C64>::zeros((r0 * r1, du));
            for i0 in 0..r0 {
                let xi = x.index_axis(ndarray::Axis(0), i0);
                let y = b1.dot(&xi);
                for i1 in 0..r1 {
                    for u in 0..du {
                        out[[i0 + r0 * i1, u]] = y[[i1, u]];
                    }
                }
            }
            blocks[id] = Some(out);
        }
        let root = blocks[0].take().expect("root block");
        let order = topo.leaf_order.clone();
        let mut psi = Array1::<C64>::zeros(1 << n);
        for local in 0..(1usize << n) {
            let mut global = 0;
            for (k, &s) in order.iter().enumerate() {
                if local >> k & 1 == 1 {
                    global |= 1 << s;
                }
            }
            psi[global] = root[[local, 0]];
        }
        Ok(psi)
    }
}

/// `⟨a|b⟩` by a bottom-up contraction.
pub fn overlap(a: &TtnState, b: &TtnState) -> Result<C64> {
    if a.topology.as_ref() != b.topology.as_ref() {
        return Err(StateError::TopologyMismatch);
    }
    let topo = &a.topology;
    let mut env: Vec<Option<Tensor>> = vec![None; topo.n_nodes()];
    for id in topo.post_order() {
        let node = &topo.nodes[id];
        let ta = a.tensors[id].conj();
        let mut tb = b.tensors[id].clone();
        for c in node.children {
            if let Child::Node(c) = c {
                // E has legs [Aux(0) = bra, Aux(1) = ket]
                let e = env[c].take().expect("post-order");
                tb = contract(&e, &tb, &[(Leg::Aux(1), Leg::Link(c))])?;
                tb.relabel(Leg::Aux(0), Leg::Link(c))?;
            }
        }
        let mut pairs: Vec<(Leg, Leg)> = node
            .children
            .iter()
            .map(|&c| (child_leg(c), child_leg(c)))
            .collect();
        if node.parent.is_none() {
            pairs.sort();
            let s = contract(&ta, &tb, &pairs)?;
            return Ok(s.as_slice()[0]);
        }
        let mut ta = ta;
        ta.relabel(Leg::Link(id), Leg::Aux(0))?;
        tb.relabel(Leg::Link(id), Leg::Aux(1))?;
        env[id] = Some(contract(&ta, &tb, &pairs)?);
    }
    unreachable!("root is last in post-order")
}

/// `‖T†T − 1‖_max` with `T` viewed as a matrix from all legs except `out_leg`
/// to `out_leg`.
pub fn isometry_deviation(t: &Tensor, out_leg: Leg) -> Result<f64> {
    let rows: Vec<Leg> = t.legs().iter().copied().filter(|&l| l != out_leg).collect();
    let (m, _) = t.to_matrix(&rows)?;
    let g = m.t().mapv(|z| z.conj()).dot(&m);
    let mut worst: f64 = 0.0;
    for ((i, j), v) in g.indexed_iter() {
        let e = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - C64::new(e, 0.0)).norm());
    }
    Ok(worst)
}

fn canonical(topo: &TreeTopology, node: usize, t: Tensor) -> Result<Tensor> {
    let legs = node_legs(topo, node);
    let mut sorted_t = t.legs().to_vec();
    let mut sorted_e = legs.clone();
    sorted_t.sort();
    sorted_e.sort();
    if sorted_t != sorted_e {
        return Err(StateError::LegMismatch {
            node,
            got: t.legs().to_vec(),
            expected: legs,
        });
    }
    if t.legs() == legs.as_slice() {
        Ok(t)
    } else {
        Ok(t.permuted(&legs)?)
    }
}

/// Nodes in BFS order from `target`, each with its neighbour toward `target`.
fn bfs_from(topo: &TreeTopology, target: usize) -> Vec<(usize, Option<usize>)> {
    let mut out = Vec::with_capacity(topo.n_nodes());
    let mut seen = vec![false; topo.n_nodes()];
    let mut queue = VecDeque::from([(target, None)]);
    seen[target] = true;
    while let Some((n, toward)) = queue.pop_front() {
        out.push((n, toward));
        let node = &topo.nodes[n];
        let mut nbrs: Vec<usize> = node
            .children
            .iter()
            .filter_map(|c| match c {
                Child::Node(c) => Some(*c),
                Child::Leaf(_) => None,
            })
            .collect();
        if let Some(p) = node.parent {
            nbrs.push(p);
        }
        for m in nbrs {
            if !seen[m] {
                seen[m] = true;
                queue.push_back((m, Some(n)));
            }
        }
    }
    out
}

/// `d` orthonormal columns (as a `len × d` row-major array flattened to
/// `ArrayD`), the first parallel to `first`.
fn complete_columns(first: &Array1<C64>, d: usize) -> ArrayD<C64> {
    let len = first.len();
    let mut cols: Vec<Array1<C64>> = Vec::with_capacity(d);
    let norm = first.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    cols.push(first.mapv(|z| z / norm));
    let mut e = 0;
    while cols.len() < d && e < len {
        let mut v = Array1::<C64>::zeros(len);
        v[e] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for c in &cols {
                let p: C64 = c.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                v.zip_mut_with(c, |x, y| *x -= p * y);
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            cols.push(v.mapv(|z| z / n));
        }
        e += 1;
    }
    let mut out = ArrayD::<C64>::zeros(IxDyn(&[len, d]));
    for (k, c) in cols.iter().enumerate() {
        for i in 0..len {
            out[[i, k]] = c[i];
        }
    }
    out
}
