//! The sweep order of one TDVP step.
//!
//! The first half-sweep walks the tree depth first from the root. Each time
//! it climbs from a node to its parent, the node is evolved forward by
//! `dt/2` and the bond it leaves through is evolved backward by `dt/2`; the
//! root is evolved last. The second half-sweep is the first one played
//! backwards, which makes the step symmetric.

use serde::{Deserialize, Serialize};

use crate::topology::{Child, TreeTopology};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// Move the gauge center between adjacent nodes without evolving.
    Move { from: usize, to: usize },
    /// `exp(-i H_eff fraction·dt)` on the center tensor.
    EvolveNode { node: usize, fraction: f64 },
    /// Split `from` toward `to`, evolve the bond matrix of `link` by
    /// `exp(+i H̃_eff fraction·dt)` and absorb it into `to`.
    EvolveLink {
        link: usize,
        from: usize,
        to: usize,
        fraction: f64,
    },
}

impl Action {
    /// The action that undoes the gauge movement of `self`, in reverse time
    /// order.
    pub fn reversed(&self) -> Action {
        match *self {
            Action::Move { from, to } => Action::Move { from: to, to: from },
            Action::EvolveNode { .. } => *self,
            Action::EvolveLink {
                link,
                from,
                to,
                fraction,
            } => Action::EvolveLink {
                link,
                from: to,
                to: from,
                fraction,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSchedule {
    pub actions: Vec<Action>,
    /// Index where the second half-sweep starts.
    pub phase_split: usize,
}

pub fn make_schedule(topo: &TreeTopology) -> SweepSchedule {
    fn visit(t: &TreeTopology, n: usize, out: &mut Vec<Action>) {
        for c in t.nodes[n].children {
            if let Child::Node(c) = c {
                out.push(Action::Move { from: n, to: c });
                visit(t, c, out);
                out.push(Action::EvolveNode {
                    node: c,
                    fraction: 0.5,
                });
                out.push(Action::EvolveLink {
                    link: c,
                    from: c,
                    to: n,
                    fraction: 0.5,
                });
            }
        }
    }
    let mut first = Vec::new();
    visit(topo, topo.root(), &mut first);
    first.push(Action::EvolveNode {
        node: topo.root(),
        fraction: 0.5,
    });
    let second: Vec<Action> = first.iter().rev().map(Action::reversed).collect();
    let phase_split = first.len();
    first.extend(second);
    SweepSchedule {
        actions: first,
        phase_split,
    }
}

impl SweepSchedule {
    /// Gauge-center position after each action, starting from the root.
    pub fn center_path(&self, root: usize) -> Vec<usize> {
        let mut cur = root;
        let mut out = vec![cur];
        for a in &self.actions {
            match *a {
                Action::Move { to, .. } | Action::EvolveLink { to, .. } => cur = to,
                Action::EvolveNode { node, .. } => debug_assert_eq!(node, cur),
            }
            out.push(cur);
        }
        out
    }

    /// Forward evolution fraction per node.
    pub fn node_time(&self, n_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_nodes];
        for a in &self.actions {
            if let Action::EvolveNode { node, fraction } = *a {
                out[node] += fraction;
            }
        }
        out
    }

    /// Backward evolution fraction per link.
    pub fn link_time(&self, n_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_nodes];
        for a in &self.actions {
            if let Action::EvolveLink { link, fraction, .. } = *a {
                out[link] += fraction;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_lattice, build_tree, Orientation};
    use std::collections::HashSet;

    fn tree(lx: usize, ly: usize) -> TreeTopology {
        build_tree(&build_lattice(lx, ly).unwrap(), Orientation::Standard)
    }

    #[test]
    fn four_leaf_tree_times() {
        let t = tree(2, 2);
        let s = make_schedule(&t);
        assert!(s.node_time(3).iter().all(|&x| (x - 1.0).abs() < 1e-15));
        let links = s.link_time(3);
        assert_eq!(links[0], 0.0);
        assert!(links[1..].iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert_eq!(
            s.actions[..4],
            [
                Action::Move { from: 0, to: 1 },
                Action::EvolveNode { node: 1, fraction: 0.5 },
                Action::EvolveLink { link: 1, from: 1, to: 0, fraction: 0.5 },
                Action::Move { from: 0, to: 2 },
            ]
        );
    }

    #[test]
    fn phases_are_mirror_images() {
        let t = tree(4, 4);
        let s = make_schedule(&t);
        let (a, b) = s.actions.split_at(s.phase_split);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert_eq!(x.reversed(), *y);
        }
    }

    #[test]
    fn path_starts_and_ends_at_root_and_visits_everything() {
        let t = tree(4, 4);
        let s = make_schedule(&t);
        let path = s.center_path(0);
        assert_eq!(path[0], 0);
        assert_eq!(*path.last().unwrap(), 0);
        assert_eq!(path[s.phase_split], 0);
        for w in path.windows(2) {
            assert!(w[0] == w[1] || t.nodes[w[0]].parent == Some(w[1]) || t.nodes[w[1]].parent == Some(w[0]));
        }
        let first: HashSet<_> = path[..=s.phase_split].iter().copied().collect();
        let second: HashSet<_> = path[s.phase_split..].iter().copied().collect();
        assert_eq!(first.len(), 15);
        assert_eq!(second.len(), 15);
    }

    #[test]
    fn evolution_happens_on_layer_changes_only() {
        let t = tree(4, 4);
        let s = make_schedule(&t);
        // first phase evolves nodes on the way up, second on the way down
        for (i, a) in s.actions.iter().enumerate() {
            if let Action::EvolveLink { from, to, .. } = *a {
                let upward = t.nodes[from].parent == Some(to);
                assert_eq!(upward, i < s.phase_split);
            }
        }
    }
}
