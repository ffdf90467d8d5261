//! Effective Hamiltonians from local sums, with branch collapsing.
//!
//! Every link `c` separates the lattice into the sites below it and the rest.
//! For each side the cache keeps operator blocks on the link's basis:
//!
//! * a *collapsed* block, the sum of all terms supported entirely on that side,
//!   coefficients included;
//! * one *partial* block per term that crosses the link, holding the product
//!   of that term's factors on the side (no coefficient).
//!
//! At a node the three regions (two children and the outside) combine into
//! `H_eff = const + Σ_regions C + Σ_straddling c_t ⊗_r P_{r,t}`.
//!
//! With [`Grouping::Naive`] nothing is collapsed and every term keeps its own
//! block on every side it touches. That is the per-term reference the
//! collapsed form is checked against.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LocalSumOperator;
use crate::state::{child_leg, TtnState, LINK_LOW, LINK_UP};
use crate::tnalg::{contract, Leg, Tensor, TensorError};
use crate::topology::{Child, TreeTopology};
use crate::C64;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("operator lattice {op:?} does not match the tree lattice {tree:?}")]
    LatticeMismatch {
        op: (usize, usize),
        tree: (usize, usize),
    },
    #[error("cache was built for a different state object")]
    WrongState,
    #[error("block {0:?} is not available")]
    Missing(Side),
    #[error("block {0:?} is stale: its region changed after it was built")]
    Stale(Side),
    #[error("state has no gauge center")]
    NoCenter,
    #[error("node {0} is not the gauge center")]
    NotCenter(usize),
}

pub type Result<T> = std::result::Result<T, EnvError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Collapsed,
    Naive,
}

/// One side of a cut: a single site, the sites below a link, or the sites
/// above it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Site(usize),
    Below(usize),
    Above(usize),
}

#[derive(Clone, Debug)]
struct PlanTerm {
    coefficient: C64,
    factors: Vec<(usize, Array2<C64>)>,
}

#[derive(Clone, Debug, Default)]
struct SidePlan {
    /// Term ids with a partial block on this side, ascending.
    open: Vec<usize>,
    has_collapsed: bool,
}

impl SidePlan {
    fn index(&self, term: usize) -> Option<usize> {
        self.open.binary_search(&term).ok()
    }
}

/// Term id with a partial-block index for each region it touches.
type Route<const K: usize> = (usize, [Option<usize>; K]);

#[derive(Clone, Debug)]
struct AbovePlan {
    child: usize,
    sibling_slot: usize,
    /// Terms inside `Above(child)` that straddle the sibling and the outside.
    inner: Vec<Route<2>>,
    /// Per open term of `Above(child)`: indices in the sibling and outside.
    open: Vec<[Option<usize>; 2]>,
}

#[derive(Clone, Debug)]
struct NodePlan {
    regions: Vec<Side>,
    legs: Vec<Leg>,
    /// Terms acting on more than one region (all touching terms when naive).
    open: Vec<Route<3>>,
    /// Terms inside the node that straddle its two children.
    below_inner: Vec<Route<2>>,
    /// Per open term of `Below(node)`: indices in child 0 and child 1.
    below_open: Vec<[Option<usize>; 2]>,
    above: [Option<AbovePlan>; 2],
}

/// Grouping of a local sum over a tree: which terms collapse into which
/// branch blocks and which stay open at each node and link.
#[derive(Clone, Debug)]
pub struct CollapsePlan {
    topology: Arc<TreeTopology>,
    grouping: Grouping,
    constant: C64,
    terms: Vec<PlanTerm>,
    raw_terms: usize,
    sites: Vec<SidePlan>,
    below: Vec<SidePlan>,
    above: Vec<SidePlan>,
    nodes: Vec<NodePlan>,
    /// Per link: open terms with indices into the below and above blocks.
    links: Vec<Vec<Route<2>>>,
    site_blocks: Vec<Blocks>,
}

fn side_contains(topo: &TreeTopology, side: Side, site: usize) -> bool {
    match side {
        Side::Site(s) => s == site,
        Side::Below(c) => topo.covers(c, site),
        Side::Above(c) => !topo.covers(c, site),
    }
}

fn child_side(child: Child) -> Side {
    match child {
        Child::Node(c) => Side::Below(c),
        Child::Leaf(s) => Side::Site(s),
    }
}

/// Groups the terms of `op` over `topology`.
pub fn collapse_branches(
    op: &LocalSumOperator,
    topology: Arc<TreeTopology>,
    grouping: Grouping,
) -> Result<CollapsePlan> {
    let lat = &topology.lattice;
    if (op.lattice.lx, op.lattice.ly) != (lat.lx, lat.ly) {
        return Err(EnvError::LatticeMismatch {
            op: (op.lattice.lx, op.lattice.ly),
            tree: (lat.lx, lat.ly),
        });
    }
    let topo = topology.as_ref();
    let constant: C64 = op.constant();
    let terms: Vec<PlanTerm> = op
        .terms
        .iter()
        .filter(|t| !t.is_constant())
        .map(|t| PlanTerm {
            coefficient: t.coefficient,
            factors: t.factors.iter().map(|(s, o)| (*s, o.matrix())).collect(),
        })
        .collect();

    let touches = |t: &PlanTerm, side: Side| t.factors.iter().any(|f| side_contains(topo, side, f.0));
    let inside = |t: &PlanTerm, side: Side| t.factors.iter().all(|f| side_contains(topo, side, f.0));
    let side_plan = |side: Side| {
        let mut sp = SidePlan::default();
        for (k, t) in terms.iter().enumerate() {
            if !touches(t, side) {
                continue;
            }
            if grouping == Grouping::Collapsed && inside(t, side) {
                sp.has_collapsed = true;
            } else {
                sp.open.push(k);
            }
        }
        sp
    };

    let n_nodes = topo.n_nodes();
    let sites: Vec<SidePlan> = (0..topo.n_sites()).map(|s| side_plan(Side::Site(s))).collect();
    let mut below = vec![SidePlan::default(); n_nodes];
    let mut above = vec![SidePlan::default(); n_nodes];
    for n in 1..n_nodes {
        below[n] = side_plan(Side::Below(n));
        above[n] = side_plan(Side::Above(n));
    }
    let side_of = |side: Side| -> &SidePlan {
        match side {
            Side::Site(s) => &sites[s],
            Side::Below(c) => &below[c],
            Side::Above(c) => &above[c],
        }
    };

    let mut nodes = Vec::with_capacity(n_nodes);
    for p in 0..n_nodes {
        let node = &topo.nodes[p];
        let mut regions = vec![child_side(node.children[0]), child_side(node.children[1])];
        let mut legs = vec![child_leg(node.children[0]), child_leg(node.children[1])];
        if node.parent.is_some() {
            regions.push(Side::Above(p));
            legs.push(Leg::Link(p));
        }
        let mask = |t: &PlanTerm| -> u8 {
            regions
                .iter()
                .enumerate()
                .filter(|(_, &r)| touches(t, r))
                .fold(0u8, |m, (k, _)| m | 1 << k)
        };
        let route3 = |k: usize, m: u8| -> Route<3> {
            let mut idx = [None; 3];
            for (r, region) in regions.iter().enumerate() {
                if m >> r & 1 == 1 {
                    idx[r] = Some(side_of(*region).index(k).expect("open in touched region"));
                }
            }
            (k, idx)
        };
        let mut open = Vec::new();
        let mut below_inner = Vec::new();
        let mut above_inner: [Vec<Route<2>>; 2] = [Vec::new(), Vec::new()];
        for (k, t) in terms.iter().enumerate() {
            let m = mask(t);
            let straddles = m.count_ones() >= 2;
            if m != 0 && (grouping == Grouping::Naive || straddles) {
                open.push(route3(k, m));
            }
            if grouping == Grouping::Collapsed && straddles {
                let r = route3(k, m).1;
                if m == 0b011 && node.parent.is_some() {
                    below_inner.push((k, [r[0], r[1]]));
                }
                // sibling slot s together with the outside
                if m == 0b110 {
                    above_inner[0].push((k, [r[1], r[2]]));
                }
                if m == 0b101 {
                    above_inner[1].push((k, [r[0], r[2]]));
                }
            }
        }
        let below_open = if node.parent.is_some() {
            below[p]
                .open
                .iter()
                .map(|&k| {
                    let t = &terms[k];
                    [0, 1].map(|r| {
                        if touches(t, regions[r]) {
                            side_of(regions[r]).index(k)
                        } else {
                            None
                        }
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut above_plans: [Option<AbovePlan>; 2] = [None, None];
        for slot in 0..2 {
            if let Child::Node(c) = node.children[slot] {
                let sib = 1 - slot;
                let open_routes = above[c]
                    .open
                    .iter()
                    .map(|&k| {
                        let t = &terms[k];
                        let s = if touches(t, regions[sib]) {
                            side_of(regions[sib]).index(k)
                        } else {
                            None
                        };
                        let o = if regions.len() == 3 && touches(t, regions[2]) {
                            side_of(regions[2]).index(k)
                        } else {
                            None
                        };
                        [s, o]
                    })
                    .collect();
                above_plans[slot] = Some(AbovePlan {
                    child: c,
                    sibling_slot: sib,
                    inner: std::mem::take(&mut above_inner[slot]),
                    open: open_routes,
                });
            }
        }
        nodes.push(NodePlan {
            regions,
            legs,
            open,
            below_inner,
            below_open,
            above: above_plans,
        });
    }

    let mut links = vec![Vec::new(); n_nodes];
    for c in 1..n_nodes {
        let (b, a) = (Side::Below(c), Side::Above(c));
        for (k, t) in terms.iter().enumerate() {
            let tb = touches(t, b);
            let ta = touches(t, a);
            let open = match grouping {
                Grouping::Collapsed => tb && ta,
                Grouping::Naive => tb || ta,
            };
            if open {
                let ib = if tb { below[c].index(k) } else { None };
                let ia = if ta { above[c].index(k) } else { None };
                links[c].push((k, [ib, ia]));
            }
        }
    }

    let site_blocks = (0..topo.n_sites())
        .map(|s| {
            let sp = &sites[s];
            let collapsed = if sp.has_collapsed {
                let mut m = Array2::<C64>::zeros((2, 2));
                for t in terms.iter().filter(|t| t.factors.len() == 1 && t.factors[0].0 == s) {
                    m = m + &t.factors[0].1 * t.coefficient;
                }
                Some(m)
            } else {
                None
            };
            let partial = sp
                .open
                .iter()
                .map(|&k| {
                    terms[k]
                        .factors
                        .iter()
                        .find(|f| f.0 == s)
                        .map(|f| f.1.clone())
                        .expect("open term touches the site")
                })
                .collect();
            Blocks {
                collapsed,
                partial,
                stamp: 0,
            }
        })
        .collect();

    Ok(CollapsePlan {
        topology,
        grouping,
        constant,
        raw_terms: op.n_terms(),
        terms,
        sites,
        below,
        above,
        nodes,
        links,
        site_blocks,
    })
}

impl CollapsePlan {
    pub fn grouping(&self) -> Grouping {
        self.grouping
    }

    pub fn topology(&self) -> &Arc<TreeTopology> {
        &self.topology
    }

    pub fn constant(&self) -> C64 {
        self.constant
    }

    /// Number of terms in the source operator, constants included.
    pub fn raw_term_count(&self) -> usize {
        self.raw_terms
    }

    /// Summands in the effective Hamiltonian of `node`: one per collapsed
    /// region block, one per open term, plus one for a nonzero constant.
    pub fn node_summands(&self, node: usize) -> usize {
        let np = &self.nodes[node];
        let collapsed = np
            .regions
            .iter()
            .filter(|&&r| self.side(r).has_collapsed)
            .count();
        collapsed + np.open.len() + usize::from(self.constant != C64::new(0.0, 0.0))
    }

    /// Summands in the effective Hamiltonian of the link above `link`.
    pub fn link_summands(&self, link: usize) -> usize {
        let collapsed = [Side::Below(link), Side::Above(link)]
            .iter()
            .filter(|&&r| self.side(r).has_collapsed)
            .count();
        collapsed + self.links[link].len() + usize::from(self.constant != C64::new(0.0, 0.0))
    }

    /// Number of open (uncollapsed) terms with a partial block on `side`.
    pub fn open_terms(&self, side: Side) -> usize {
        self.side(side).open.len()
    }

    fn side(&self, side: Side) -> &SidePlan {
        match side {
            Side::Site(s) => &self.sites[s],
            Side::Below(c) => &self.below[c],
            Side::Above(c) => &self.above[c],
        }
    }
}

#[derive(Clone, Debug)]
struct Blocks {
    collapsed: Option<Array2<C64>>,
    partial: Vec<Array2<C64>>,
    stamp: u64,
}

/// Operator blocks for every link side, tied to one state object.
#[derive(Clone, Debug)]
pub struct EnvironmentCache {
    plan: Arc<CollapsePlan>,
    state_uid: u64,
    below: Vec<Option<Blocks>>,
    above: Vec<Option<Blocks>>,
}

/// Sum of node versions inside (`inside = true`) or outside the subtree of
/// `node`. Node ids are pre-order, so a subtree is a contiguous id range.
fn region_stamp(state: &TtnState, node: usize, inside: bool) -> u64 {
    let topo = state.topology();
    let size = topo.nodes[node].n_leaves - 1;
    let range = node..node + size;
    (0..topo.n_nodes())
        .filter(|n| range.contains(n) == inside)
        .fold(0u64, |acc, n| acc.wrapping_add(state.version(n)))
}

/// Builds every block that is valid for the current gauge center: `Below(c)`
/// for links whose subtree excludes the center and `Above(c)` for links whose
/// subtree contains it.
pub fn build_environments(state: &TtnState, plan: Arc<CollapsePlan>) -> Result<EnvironmentCache> {
    let mut cache = EnvironmentCache::empty(state, plan)?;
    cache.rebuild(state)?;
    Ok(cache)
}

impl EnvironmentCache {
    pub fn empty(state: &TtnState, plan: Arc<CollapsePlan>) -> Result<Self> {
        if state.topology() != plan.topology.as_ref() {
            let lat = &state.topology().lattice;
            return Err(EnvError::LatticeMismatch {
                op: (plan.topology.lattice.lx, plan.topology.lattice.ly),
                tree: (lat.lx, lat.ly),
            });
        }
        let n = plan.topology.n_nodes();
        Ok(Self {
            plan,
            state_uid: state.uid(),
            below: vec![None; n],
            above: vec![None; n],
        })
    }

    pub fn plan(&self) -> &Arc<CollapsePlan> {
        &self.plan
    }

    /// Rebinds the cache to `state` (e.g. a clone) and rebuilds all blocks.
    pub fn rebuild(&mut self, state: &TtnState) -> Result<()> {
        let center = state.center().ok_or(EnvError::NoCenter)?;
        self.state_uid = state.uid();
        let topo = self.plan.topology.clone();
        for b in self.below.iter_mut().chain(self.above.iter_mut()) {
            *b = None;
        }
        for n in topo.post_order() {
            if n != 0 && !topo.is_in_subtree(n, center) {
                self.update_below(state, n)?;
            }
        }
        let path = topo.path(0, center);
        for &n in path.iter().skip(1) {
            self.update_above(state, n)?;
        }
        Ok(())
    }

    pub fn has(&self, side: Side) -> bool {
        match side {
            Side::Site(_) => true,
            Side::Below(c) => self.below[c].is_some(),
            Side::Above(c) => self.above[c].is_some(),
        }
    }

    pub fn invalidate_below(&mut self, link: usize) {
        self.below[link] = None;
    }

    pub fn invalidate_above(&mut self, link: usize) {
        self.above[link] = None;
    }

    fn blocks(&self, state: &TtnState, side: Side) -> Result<&Blocks> {
        if state.uid() != self.state_uid {
            return Err(EnvError::WrongState);
        }
        let (b, stamp) = match side {
            Side::Site(s) => return Ok(&self.plan.site_blocks[s]),
            Side::Below(c) => (&self.below[c], region_stamp(state, c, true)),
            Side::Above(c) => (&self.above[c], region_stamp(state, c, false)),
        };
        let b = b.as_ref().ok_or(EnvError::Missing(side))?;
        if b.stamp != stamp {
            return Err(EnvError::Stale(side));
        }
        Ok(b)
    }

    /// Recomputes `Below(link)` from the current tensor of `link`, which must
    /// be an isometry toward its parent.
    pub fn update_below(&mut self, state: &TtnState, link: usize) -> Result<()> {
        let plan = self.plan.clone();
        let np = &plan.nodes[link];
        let t = state.tensor(link);
        let r0 = self.blocks(state, np.regions[0])?;
        let r1 = self.blocks(state, np.regions[1])?;
        let (l0, l1) = (np.legs[0], np.legs[1]);
        let open_leg = Leg::Link(link);
        let conj = t.conj();

        let collapsed = if plan.below[link].has_collapsed {
            let mut y: Option<Tensor> = None;
            let mut add = |x: Tensor, coef: C64| -> Result<()> {
                match &mut y {
                    None => {
                        let mut x = x;
                        if coef != C64::new(1.0, 0.0) {
                            x.scale(coef);
                        }
                        y = Some(x);
                    }
                    Some(acc) => acc.add_scaled(coef, &x)?,
                }
                Ok(())
            };
            let one = C64::new(1.0, 0.0);
            if let Some(c) = &r0.collapsed {
                add(t.apply_on_leg(l0, c.view())?, one)?;
            }
            if let Some(c) = &r1.collapsed {
                add(t.apply_on_leg(l1, c.view())?, one)?;
            }
            for &(k, [i0, i1]) in &np.below_inner {
                let x = t.apply_on_leg(l0, r0.partial[i0.unwrap()].view())?;
                let x = x.apply_on_leg(l1, r1.partial[i1.unwrap()].view())?;
                add(x, plan.terms[k].coefficient)?;
            }
            match y {
                Some(y) => Some(dress(&conj, &y, open_leg)?),
                None => None,
            }
        } else {
            None
        };
        let mut partial = Vec::with_capacity(np.below_open.len());
        for idx in &np.below_open {
            let mut y = t.clone();
            if let Some(i) = idx[0] {
                y = y.apply_on_leg(l0, r0.partial[i].view())?;
            }
            if let Some(i) = idx[1] {
                y = y.apply_on_leg(l1, r1.partial[i].view())?;
            }
            partial.push(dress(&conj, &y, open_leg)?);
        }
        self.below[link] = Some(Blocks {
            collapsed,
            partial,
            stamp: region_stamp(state, link, true),
        });
        Ok(())
    }

    /// Recomputes `Above(link)` from the parent tensor, which must be an
    /// isometry toward `link`.
    pub fn update_above(&mut self, state: &TtnState, link: usize) -> Result<()> {
        let plan = self.plan.clone();
        let topo = &plan.topology;
        let parent = topo.nodes[link]
            .parent
            .ok_or(EnvError::Missing(Side::Above(link)))?;
        let np = &plan.nodes[parent];
        let slot = topo.child_slot(parent, link).expect("child of its parent");
        let ap = np.above[slot].as_ref().expect("node child has an above plan");
        debug_assert_eq!(ap.child, link);
        let sib = ap.sibling_slot;
        let t = state.tensor(parent);
        let rs = self.blocks(state, np.regions[sib])?;
        let ro = if np.regions.len() == 3 {
            Some(self.blocks(state, np.regions[2])?)
        } else {
            None
        };
        let ls = np.legs[sib];
        let lo = np.legs.get(2).copied();
        let open_leg = np.legs[slot];
        let conj = t.conj();

        let collapsed = if plan.above[link].has_collapsed {
            let mut y: Option<Tensor> = None;
            let one = C64::new(1.0, 0.0);
            let mut add = |x: Tensor, coef: C64| -> Result<()> {
                match &mut y {
                    None => {
                        let mut x = x;
                        if coef != one {
                            x.scale(coef);
                        }
                        y = Some(x);
                    }
                    Some(acc) => acc.add_scaled(coef, &x)?,
                }
                Ok(())
            };
            if let Some(c) = &rs.collapsed {
                add(t.apply_on_leg(ls, c.view())?, one)?;
            }
            if let (Some(ro), Some(lo)) = (ro, lo) {
                if let Some(c) = &ro.collapsed {
                    add(t.apply_on_leg(lo, c.view())?, one)?;
                }
                for &(k, [is, io]) in &ap.inner {
                    let x = t.apply_on_leg(ls, rs.partial[is.unwrap()].view())?;
                    let x = x.apply_on_leg(lo, ro.partial[io.unwrap()].view())?;
                    add(x, plan.terms[k].coefficient)?;
                }
            }
            match y {
                Some(y) => Some(dress(&conj, &y, open_leg)?),
                None => None,
            }
        } else {
            None
        };
        let mut partial = Vec::with_capacity(ap.open.len());
        for idx in &ap.open {
            let mut y = t.clone();
            if let Some(i) = idx[0] {
                y = y.apply_on_leg(ls, rs.partial[i].view())?;
            }
            if let Some(i) = idx[1] {
                let (ro, lo) = (ro.expect("outside region"), lo.expect("outside leg"));
                y = y.apply_on_leg(lo, ro.partial[i].view())?;
            }
            partial.push(dress(&conj, &y, open_leg)?);
        }
        self.above[link] = Some(Blocks {
            collapsed,
            partial,
            stamp: region_stamp(state, link, false),
        });
        Ok(())
    }

    /// Effective Hamiltonian of `node`. Fails if any block it needs is
    /// missing or stale.
    pub fn node_operator(&self, state: &TtnState, node: usize) -> Result<NodeOperator<'_>> {
        let np = &self.plan.nodes[node];
        let blocks = np
            .regions
            .iter()
            .map(|&r| self.blocks(state, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(NodeOperator {
            plan: &self.plan,
            node: np,
            blocks,
        })
    }

    /// Effective Hamiltonian of the bond matrix on `link`.
    pub fn link_operator(&self, state: &TtnState, link: usize) -> Result<LinkOperator<'_>> {
        Ok(LinkOperator {
            plan: &self.plan,
            link,
            below: self.blocks(state, Side::Below(link))?,
            above: self.blocks(state, Side::Above(link))?,
        })
    }

    /// `⟨ψ|H|ψ⟩` evaluated at the gauge center.
    pub fn expectation(&self, state: &TtnState) -> Result<C64> {
        let c = state.center().ok_or(EnvError::NoCenter)?;
        let t = state.tensor(c);
        let ht = self.node_operator(state, c)?.apply(t)?;
        Ok(t.inner(&ht)?)
    }
}

/// `D[i, j] = Σ conj(T[.., i]) Y[.., j]` over all legs but `open`.
fn dress(conj: &Tensor, y: &Tensor, open: Leg) -> Result<Array2<C64>> {
    let mut a = conj.clone();
    let mut b = y.clone();
    a.relabel(open, Leg::Aux(0))?;
    b.relabel(open, Leg::Aux(1))?;
    let pairs: Vec<(Leg, Leg)> = a
        .legs()
        .iter()
        .copied()
        .filter(|&l| l != Leg::Aux(0))
        .map(|l| (l, l))
        .collect();
    let d = contract(&a, &b, &pairs)?;
    Ok(d.to_matrix(&[Leg::Aux(0)])?.0)
}

/// `H_eff` of one node, borrowed from a validated cache.
pub struct NodeOperator<'a> {
    plan: &'a CollapsePlan,
    node: &'a NodePlan,
    blocks: Vec<&'a Blocks>,
}

impl NodeOperator<'_> {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let np = self.node;
        let mut out = x.clone();
        out.scale(self.plan.constant);
        let one = C64::new(1.0, 0.0);
        for (k, b) in self.blocks.iter().enumerate() {
            if let Some(c) = &b.collapsed {
                out.add_scaled(one, &x.apply_on_leg(np.legs[k], c.view())?)?;
            }
        }
        for &(term, idx) in &np.open {
            let mut y: Option<Tensor> = None;
            for (k, i) in idx.iter().enumerate() {
                if let Some(i) = i {
                    let src = y.as_ref().unwrap_or(x);
                    y = Some(src.apply_on_leg(np.legs[k], self.blocks[k].partial[*i].view())?);
                }
            }
            let y = y.expect("open terms touch a region");
            out.add_scaled(self.plan.terms[term].coefficient, &y)?;
        }
        Ok(out)
    }

    pub fn summands(&self) -> usize {
        self.blocks.iter().filter(|b| b.collapsed.is_some()).count() + self.node.open.len()
    }
}

/// `H̃_eff` of one bond matrix with legs [`LINK_LOW`], [`LINK_UP`].
pub struct LinkOperator<'a> {
    plan: &'a CollapsePlan,
    link: usize,
    below: &'a Blocks,
    above: &'a Blocks,
}

impl LinkOperator<'_> {
    pub fn apply(&self, m: &Tensor) -> Result<Tensor> {
        let mut out = m.clone();
        out.scale(self.plan.constant);
        let one = C64::new(1.0, 0.0);
        if let Some(c) = &self.below.collapsed {
            out.add_scaled(one, &m.apply_on_leg(LINK_LOW, c.view())?)?;
        }
        if let Some(c) = &self.above.collapsed {
            out.add_scaled(one, &m.apply_on_leg(LINK_UP, c.view())?)?;
        }
        for &(term, [ib, ia]) in &self.plan.links[self.link] {
            let mut y = match ib {
                Some(i) => m.apply_on_leg(LINK_LOW, self.below.partial[i].view())?,
                None => m.clone(),
            };
            if let Some(i) = ia {
                y = y.apply_on_leg(LINK_UP, self.above.partial[i].view())?;
            }
            out.add_scaled(self.plan.terms[term].coefficient, &y)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{dense_matrix, tfim_terms, LocalTerm};
    use crate::state::{LocalState, LINK_LOW, LINK_UP};
    use crate::topology::{build_lattice, build_tree, Orientation};
    use ndarray::Array1;

    fn setup(lx: usize, ly: usize) -> Arc<TreeTopology> {
        Arc::new(build_tree(&build_lattice(lx, ly).unwrap(), Orientation::Standard))
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        let b = b.permuted(a.legs()).unwrap();
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn random_like(t: &Tensor, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t.len())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        Tensor::from_vec(t.legs().to_vec(), t.shape(), data).unwrap()
    }

    fn dense_expect(state: &TtnState, op: &LocalSumOperator) -> C64 {
        let v = state.to_statevector().unwrap();
        let h = dense_matrix(op);
        let hv = h.dot(&v);
        v.iter().zip(hv.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn classical_energy_of_product_state() {
        let topo = setup(4, 4);
        let lat = topo.lattice.clone();
        let locals: Vec<_> = (0..16)
            .map(|s| if s == lat.site(1, 1) { LocalState::Down } else { LocalState::Up })
            .collect();
        let state = TtnState::product_state(topo.clone(), &locals, 4).unwrap();
        let op = tfim_terms(1.0, 0.0, 0.0, &lat);
        let plan = Arc::new(collapse_branches(&op, topo, Grouping::Collapsed).unwrap());
        let cache = build_environments(&state, plan).unwrap();
        // 24 bonds, 4 of them broken
        let e = cache.expectation(&state).unwrap();
        assert!((e.re - (-20.0 + 4.0)).abs() < 1e-12 && e.im.abs() < 1e-12);
    }

    #[test]
    fn expectation_matches_dense_on_2x2() {
        let topo = setup(2, 2);
        let state = TtnState::random(topo.clone(), 4, 8).unwrap();
        let op = tfim_terms(1.0, 0.7, 0.3, &topo.lattice);
        for g in [Grouping::Collapsed, Grouping::Naive] {
            let plan = Arc::new(collapse_branches(&op, topo.clone(), g).unwrap());
            let cache = build_environments(&state, plan).unwrap();
            let e = cache.expectation(&state).unwrap();
            assert!((e - dense_expect(&state, &op)).norm() < 1e-12);
        }
    }

    #[test]
    fn expectation_is_gauge_invariant() {
        let topo = setup(4, 2);
        let op = tfim_terms(1.0, 0.4, 0.2, &topo.lattice);
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let mut state = TtnState::random(topo.clone(), 4, 3).unwrap();
        let dense = dense_expect(&state, &op);
        for target in 0..topo.n_nodes() {
            state.isometrize(target).unwrap();
            let cache = build_environments(&state, plan.clone()).unwrap();
            let e = cache.expectation(&state).unwrap();
            assert!((e - dense).norm() < 1e-10, "center {target}");
        }
    }

    #[test]
    fn identity_operator_scales_by_one() {
        let topo = setup(2, 2);
        let op = LocalSumOperator {
            lattice: topo.lattice.clone(),
            terms: vec![LocalTerm::new(1.0, vec![])],
        };
        let state = TtnState::random(topo.clone(), 4, 1).unwrap();
        let plan = Arc::new(collapse_branches(&op, topo, Grouping::Collapsed).unwrap());
        let cache = build_environments(&state, plan).unwrap();
        let t = state.tensor(0);
        let out = cache.node_operator(&state, 0).unwrap().apply(t).unwrap();
        assert!(max_diff(t, &out) < 1e-15);
    }

    /// Projection of the dense Hamiltonian onto the tangent coordinates of
    /// the center node: `E† H E` with `E` the embedding of the node tensor.
    #[test]
    fn node_operator_matches_dense_projection() {
        let topo = setup(2, 2);
        let op = tfim_terms(1.0, 0.9, -0.3, &topo.lattice);
        let h = dense_matrix(&op);
        let mut state = TtnState::random(topo.clone(), 4, 12).unwrap();
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        for node in [0, 1, 2] {
            state.isometrize(node).unwrap();
            let cache = build_environments(&state, plan.clone()).unwrap();
            let hop = cache.node_operator(&state, node).unwrap();
            let t0 = state.tensor(node).clone();
            let dim = t0.len();
            // embed each unit tensor and build the dense images
            let mut emb = Vec::with_capacity(dim);
            let mut images = Vec::with_capacity(dim);
            for k in 0..dim {
                let mut e = t0.clone();
                e.as_slice_mut().iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                e.as_slice_mut()[k] = C64::new(1.0, 0.0);
                let mut s = state.clone();
                s.set_tensor(node, e.clone()).unwrap();
                emb.push(s.to_statevector().unwrap());
                images.push(hop.apply(&e).unwrap());
            }
            for i in 0..dim {
                let hv: Array1<C64> = h.dot(&emb[i]);
                for j in 0..dim {
                    let dense: C64 = emb[j].iter().zip(hv.iter()).map(|(a, b)| a.conj() * b).sum();
                    let ours = images[i].as_slice()[j];
                    assert!((dense - ours).norm() < 1e-12, "node {node} ({j},{i})");
                }
            }
        }
    }

    #[test]
    fn node_operator_is_hermitian() {
        let topo = setup(4, 4);
        let op = tfim_terms(1.0, 1.1, 0.2, &topo.lattice);
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let mut state = TtnState::random(topo.clone(), 8, 5).unwrap();
        state.isometrize(3).unwrap();
        let cache = build_environments(&state, plan).unwrap();
        let hop = cache.node_operator(&state, 3).unwrap();
        let u = random_like(state.tensor(3), 1);
        let v = random_like(state.tensor(3), 2);
        let a = u.inner(&hop.apply(&v).unwrap()).unwrap();
        let b = v.inner(&hop.apply(&u).unwrap()).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
    }

    fn collapsed_vs_naive(lx: usize, ly: usize, chi: usize, seed: u64) {
        let topo = setup(lx, ly);
        let op = tfim_terms(1.0, 0.8, 0.3, &topo.lattice);
        let pc = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let pn = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Naive).unwrap());
        let mut state = TtnState::random(topo.clone(), chi, seed).unwrap();
        for node in [0, topo.n_nodes() / 2, topo.n_nodes() - 1] {
            state.isometrize(node).unwrap();
            let cc = build_environments(&state, pc.clone()).unwrap();
            let cn = build_environments(&state, pn.clone()).unwrap();
            let x = random_like(state.tensor(node), seed + 1);
            let a = cc.node_operator(&state, node).unwrap().apply(&x).unwrap();
            let b = cn.node_operator(&state, node).unwrap().apply(&x).unwrap();
            let scale = b.norm().max(1.0);
            assert!(max_diff(&a, &b) / scale < 1e-12, "node {node}");
        }
        assert!(pc.node_summands(0) < op.n_terms());
    }

    #[test]
    fn collapsed_equals_naive_4x4() {
        collapsed_vs_naive(4, 4, 8, 31);
    }

    #[test]
    fn link_operator_matches_node_contraction() {
        // H̃ R must equal Q† H_eff (Q R) for the split of the center node
        let topo = setup(4, 4);
        let op = tfim_terms(1.0, 0.6, 0.2, &topo.lattice);
        for g in [Grouping::Collapsed, Grouping::Naive] {
            let plan = Arc::new(collapse_branches(&op, topo.clone(), g).unwrap());
            let mut state = TtnState::random(topo.clone(), 8, 17).unwrap();
            let c = 2;
            let p = topo.nodes[c].parent.unwrap();
            state.isometrize(c).unwrap();
            let mut cache = build_environments(&state, plan.clone()).unwrap();
            let full = state.tensor(c).clone();
            let h_full = cache.node_operator(&state, c).unwrap().apply(&full).unwrap();
            let m = state.split_toward(c, p).unwrap();
            cache.update_below(&state, c).unwrap();
            let link = cache.link_operator(&state, c).unwrap();
            let hm = link.apply(&m.matrix).unwrap();
            // Q† (H_eff (Q R)) with Q the new isometry at c
            let q = state.tensor(c).clone();
            let mut qc = q.conj();
            qc.relabel(Leg::Link(c), LINK_LOW).unwrap();
            let pairs: Vec<(Leg, Leg)> = q
                .legs()
                .iter()
                .copied()
                .filter(|&l| l != Leg::Link(c))
                .map(|l| (l, l))
                .collect();
            let mut proj = contract(&qc, &h_full, &pairs).unwrap();
            proj.relabel(Leg::Link(c), LINK_UP).unwrap();
            assert!(max_diff(&hm, &proj) < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn incremental_update_matches_rebuild() {
        let topo = setup(4, 4);
        let op = tfim_terms(1.0, 0.6, 0.2, &topo.lattice);
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let mut state = TtnState::random(topo.clone(), 8, 2).unwrap();
        let mut cache = build_environments(&state, plan.clone()).unwrap();
        let child = match topo.nodes[0].children[1] {
            Child::Node(c) => c,
            _ => unreachable!(),
        };
        // move the center down: Above(child) from the new root isometry
        state.move_center(child).unwrap();
        cache.invalidate_below(child);
        cache.update_above(&state, child).unwrap();
        let fresh = build_environments(&state, plan).unwrap();
        for side in [Side::Above(child)] {
            let (a, b) = (cache.blocks(&state, side).unwrap(), fresh.blocks(&state, side).unwrap());
            let (ca, cb) = (a.collapsed.as_ref().unwrap(), b.collapsed.as_ref().unwrap());
            assert!(ca.iter().zip(cb.iter()).all(|(x, y)| (x - y).norm() < 1e-12));
            for (pa, pb) in a.partial.iter().zip(&b.partial) {
                assert!(pa.iter().zip(pb.iter()).all(|(x, y)| (x - y).norm() < 1e-12));
            }
        }
        let x = state.tensor(child).clone();
        let a = cache.node_operator(&state, child).unwrap().apply(&x).unwrap();
        let b = fresh.node_operator(&state, child).unwrap().apply(&x).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn stale_blocks_are_reported() {
        let topo = setup(4, 4);
        let op = tfim_terms(1.0, 0.6, 0.0, &topo.lattice);
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let mut state = TtnState::random(topo.clone(), 8, 2).unwrap();
        let cache = build_environments(&state, plan).unwrap();
        let child = match topo.nodes[0].children[0] {
            Child::Node(c) => c,
            _ => unreachable!(),
        };
        // touch a tensor below the root without updating the cache
        let t = state.tensor(child + 1).clone();
        state.set_tensor(child + 1, t).unwrap();
        assert!(matches!(
            cache.node_operator(&state, 0),
            Err(EnvError::Stale(Side::Below(c))) if c == child
        ));
        let other = state.clone();
        assert!(matches!(cache.node_operator(&other, 0), Err(EnvError::WrongState)));
    }

    #[test]
    fn lattice_mismatch_is_rejected() {
        let topo = setup(4, 4);
        let op = tfim_terms(1.0, 0.6, 0.0, &build_lattice(2, 2).unwrap());
        assert!(collapse_branches(&op, topo, Grouping::Collapsed).is_err());
    }

    #[test]
    fn collapsing_reduces_summands() {
        // a bond whose sites share the lowest node contributes through one
        // collapsed block everywhere above it
        let topo = setup(8, 8);
        let op = tfim_terms(1.0, 1.0, 0.5, &topo.lattice);
        let pc = collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap();
        let pn = collapse_branches(&op, topo.clone(), Grouping::Naive).unwrap();
        assert_eq!(pn.node_summands(0), op.n_terms());
        assert!(pc.node_summands(0) < op.n_terms());
        for n in 0..topo.n_nodes() {
            assert!(pc.node_summands(n) <= pn.node_summands(n));
        }
        let leafy = topo.site_parent[0];
        let (a, b) = match topo.nodes[leafy].children {
            [Child::Leaf(a), Child::Leaf(b)] => (a, b),
            _ => unreachable!(),
        };
        let k = op
            .terms
            .iter()
            .position(|t| {
                let s: Vec<_> = t.sites().collect();
                s == vec![a.min(b), a.max(b)]
            })
            .unwrap();
        // the bond is open at its own node, collapsed everywhere above
        assert!(pc.nodes[leafy].open.iter().any(|r| r.0 == k));
        for anc in topo.path_to_root(leafy).into_iter().skip(1) {
            assert!(!pc.nodes[anc].open.iter().any(|r| r.0 == k));
        }
    }

    #[test]
    fn link_operator_uses_fresh_split() {
        let topo = setup(2, 2);
        let op = tfim_terms(1.0, 0.5, 0.0, &topo.lattice);
        let plan = Arc::new(collapse_branches(&op, topo.clone(), Grouping::Collapsed).unwrap());
        let mut state = TtnState::random(topo.clone(), 4, 9).unwrap();
        let mut cache = build_environments(&state, plan).unwrap();
        let m = state.split_toward(0, 1).unwrap();
        // Above(1) depends on the root, which was just rewritten
        assert!(matches!(
            cache.link_operator(&state, 1),
            Err(EnvError::Stale(Side::Above(1))) | Err(EnvError::Missing(_))
        ));
        cache.update_above(&state, 1).unwrap();
        assert!(cache.link_operator(&state, 1).is_ok());
        assert_eq!(m.matrix.legs().len(), 2);
        assert!(m.matrix.has_leg(LINK_LOW) && m.matrix.has_leg(LINK_UP));
    }
}
