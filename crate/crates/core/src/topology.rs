//! Square lattices with open boundaries and the binary trees that cover them.
//!
//! The tree is built by recursive bisection of the lattice rectangle. Tensors
//! live on the `N - 1` binary nodes; the `N` leaves are the lattice sites
//! themselves, so the lowest nodes carry two physical legs. Node ids are
//! assigned in pre-order with the root at id 0. The link above a non-root node
//! shares that node's id.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("lattice dimension {name}={value} must be a power of two and at least 2")]
    BadDimension { name: &'static str, value: usize },
    #[error("Hilbert ordering needs a square power-of-two lattice, got {lx}x{ly}")]
    NotSquare { lx: usize, ly: usize },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("site {0} is outside the lattice")]
    UnknownSite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
}

/// `Lx × Ly` square lattice. Site index is `x + Lx * y`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    /// Nearest-neighbour pairs `(i, j)` with `i < j`: all horizontal bonds
    /// row by row, then all vertical bonds.
    pub bonds: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        x + self.lx * y
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.lx, site / self.lx)
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let (x, y) = self.coords(site);
        let mut out = Vec::with_capacity(4);
        if x > 0 {
            out.push(self.site(x - 1, y));
        }
        if x + 1 < self.lx {
            out.push(self.site(x + 1, y));
        }
        if y > 0 {
            out.push(self.site(x, y - 1));
        }
        if y + 1 < self.ly {
            out.push(self.site(x, y + 1));
        }
        out
    }
}

fn check_dim(name: &'static str, value: usize) -> Result<(), TopologyError> {
    if value < 2 || !value.is_power_of_two() {
        return Err(TopologyError::BadDimension { name, value });
    }
    Ok(())
}

pub fn build_lattice(lx: usize, ly: usize) -> Result<LatticeSpec, TopologyError> {
    check_dim("Lx", lx)?;
    check_dim("Ly", ly)?;
    let mut bonds = Vec::with_capacity(lx * (ly - 1) + ly * (lx - 1));
    for y in 0..ly {
        for x in 0..lx - 1 {
            bonds.push((x + lx * y, x + 1 + lx * y));
        }
    }
    for y in 0..ly - 1 {
        for x in 0..lx {
            bonds.push((x + lx * y, x + lx * (y + 1)));
        }
    }
    Ok(LatticeSpec {
        lx,
        ly,
        boundary: Boundary::Open,
        bonds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Square rectangles are split along x first.
    Standard,
    /// Square rectangles are split along y first.
    Rotated90,
}

/// Axis-aligned block of sites `[x0, x0 + w) × [y0, y0 + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    /// Distance from the root; the root has depth 0.
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: [Child; 2],
    pub rect: Rect,
    /// Offset of this node's first site in [`TreeTopology::leaf_order`].
    pub leaf_start: usize,
    pub n_leaves: usize,
}

/// Virtual bond between `lower` and its parent `upper`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTopology {
    pub lattice: LatticeSpec,
    pub orientation: Orientation,
    pub nodes: Vec<TreeNode>,
    /// Sites in in-order leaf sequence; every node covers a contiguous range.
    pub leaf_order: Vec<usize>,
    /// Inverse of `leaf_order`.
    pub leaf_position: Vec<usize>,
    /// Parent node of each site.
    pub site_parent: Vec<usize>,
}

pub fn build_tree(lattice: &LatticeSpec, orientation: Orientation) -> TreeTopology {
    let n = lattice.n_sites();
    let mut topo = TreeTopology {
        lattice: lattice.clone(),
        orientation,
        nodes: Vec::with_capacity(n - 1),
        leaf_order: Vec::with_capacity(n),
        leaf_position: vec![0; n],
        site_parent: vec![0; n],
    };
    let root = Rect {
        x0: 0,
        y0: 0,
        w: lattice.lx,
        h: lattice.ly,
    };
    build_node(&mut topo, root, None, 0);
    for (pos, &s) in topo.leaf_order.iter().enumerate() {
        topo.leaf_position[s] = pos;
    }
    topo
}

fn split(rect: Rect, orientation: Orientation) -> (Rect, Rect) {
    let along_x = match rect.w.cmp(&rect.h) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => orientation == Orientation::Standard,
    };
    if along_x {
        let w = rect.w / 2;
        (
            Rect { w, ..rect },
            Rect {
                x0: rect.x0 + w,
                w: rect.w - w,
                ..rect
            },
        )
    } else {
        let h = rect.h / 2;
        (
            Rect { h, ..rect },
            Rect {
                y0: rect.y0 + h,
                h: rect.h - h,
                ..rect
            },
        )
    }
}

fn build_node(topo: &mut TreeTopology, rect: Rect, parent: Option<usize>, depth: usize) -> usize {
    let id = topo.nodes.len();
    topo.nodes.push(TreeNode {
        id,
        depth,
        parent,
        children: [Child::Leaf(0); 2],
        rect,
        leaf_start: topo.leaf_order.len(),
        n_leaves: rect.area(),
    });
    let halves = split(rect, topo.orientation);
    let mut children = [Child::Leaf(0); 2];
    for (k, half) in [halves.0, halves.1].into_iter().enumerate() {
        children[k] = if half.area() == 1 {
            let s = topo.lattice.site(half.x0, half.y0);
            topo.leaf_order.push(s);
            topo.site_parent[s] = id;
            Child::Leaf(s)
        } else {
            Child::Node(build_node(topo, half, Some(id), depth + 1))
        };
    }
    topo.nodes[id].children = children;
    id
}

impl TreeTopology {
    pub fn root(&self) -> usize {
        0
    }

    pub fn n_sites(&self) -> usize {
        self.leaf_order.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> Result<&TreeNode, TopologyError> {
        self.nodes.get(id).ok_or(TopologyError::UnknownNode(id))
    }

    /// Number of edges from the root to the deepest leaf.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth + 1).max().unwrap_or(0)
    }

    pub fn links(&self) -> Vec<Link> {
        self.nodes
            .iter()
            .filter_map(|n| {
                n.parent.map(|p| Link {
                    id: n.id,
                    lower: n.id,
                    upper: p,
                })
            })
            .collect()
    }

    pub fn sites_of(&self, node: usize) -> &[usize] {
        let n = &self.nodes[node];
        &self.leaf_order[n.leaf_start..n.leaf_start + n.n_leaves]
    }

    /// Whether `site` lies in the subtree of `node`.
    pub fn covers(&self, node: usize, site: usize) -> bool {
        let n = &self.nodes[node];
        let p = self.leaf_position[site];
        p >= n.leaf_start && p < n.leaf_start + n.n_leaves
    }

    /// Whether `inner` is `outer` or one of its descendants.
    pub fn is_in_subtree(&self, outer: usize, inner: usize) -> bool {
        let (a, b) = (&self.nodes[outer], &self.nodes[inner]);
        b.leaf_start >= a.leaf_start && b.leaf_start + b.n_leaves <= a.leaf_start + a.n_leaves
    }

    pub fn child_sites(&self, child: Child) -> &[usize] {
        match child {
            Child::Node(c) => self.sites_of(c),
            Child::Leaf(s) => {
                let p = self.leaf_position[s];
                &self.leaf_order[p..p + 1]
            }
        }
    }

    pub fn child_covers(&self, child: Child, site: usize) -> bool {
        match child {
            Child::Node(c) => self.covers(c, site),
            Child::Leaf(s) => s == site,
        }
    }

    /// Which child slot of `parent` holds node `child`.
    pub fn child_slot(&self, parent: usize, child: usize) -> Option<usize> {
        self.nodes[parent]
            .children
            .iter()
            .position(|&c| c == Child::Node(child))
    }

    /// Nodes in post-order (children before parents).
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        fn rec(t: &TreeTopology, n: usize, out: &mut Vec<usize>) {
            for c in t.nodes[n].children {
                if let Child::Node(c) = c {
                    rec(t, c, out);
                }
            }
            out.push(n);
        }
        rec(self, self.root(), &mut out);
        out
    }

    /// Nodes from `node` up to the root, inclusive.
    pub fn path_to_root(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Node sequence from `from` to `to` along the tree, inclusive.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let up_a = self.path_to_root(from);
        let up_b = self.path_to_root(to);
        let lca = *up_a
            .iter()
            .find(|n| up_b.contains(n))
            .expect("trees are connected");
        let mut out: Vec<usize> = up_a.iter().copied().take_while(|&n| n != lca).collect();
        out.push(lca);
        let tail: Vec<usize> = up_b.iter().copied().take_while(|&n| n != lca).collect();
        out.extend(tail.into_iter().rev());
        out
    }

    /// Largest number of physical states that can flow through the link
    /// above `node`: `min(2^{|sites|}, 2^{N - |sites|})`, saturating.
    pub fn exact_bond_bound(&self, node: usize) -> usize {
        let inside = self.nodes[node].n_leaves;
        let smaller = inside.min(self.n_sites() - inside);
        if smaller >= usize::BITS as usize - 1 {
            usize::MAX
        } else {
            1usize << smaller
        }
    }

    /// First node at the given depth along the leftmost branch; the link above
    /// it splits off `1/2^depth` of the system.
    pub fn level_node(&self, level: usize) -> Option<usize> {
        let mut cur = self.root();
        for _ in 0..level {
            match self.nodes[cur].children[0] {
                Child::Node(c) => cur = c,
                Child::Leaf(_) => return None,
            }
        }
        if cur == self.root() {
            None
        } else {
            Some(cur)
        }
    }

    /// SHA-256 over the canonical JSON form; identifies a topology in
    /// checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("topology serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }
}

/// Visiting order of the order-`log2(L)` Hilbert curve on an `L × L` lattice,
/// as site indices `x + L * y`.
pub fn hilbert_order(l: usize) -> Result<Vec<usize>, TopologyError> {
    if l < 2 || !l.is_power_of_two() {
        return Err(TopologyError::NotSquare { lx: l, ly: l });
    }
    Ok((0..l * l)
        .map(|d| {
            let (x, y) = hilbert_d2xy(l, d);
            x + l * y
        })
        .collect())
}

fn hilbert_d2xy(n: usize, d: usize) -> (usize, usize) {
    let (mut x, mut y) = (0usize, 0usize);
    let mut t = d;
    let mut s = 1;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

/// Fraction of consecutive pairs in the tree's leaf order that are lattice
/// neighbours. Equals 1 only when the leaf order is itself a Hilbert-like
/// path; reported as a diagnostic.
pub fn leaf_order_adjacency(topo: &TreeTopology) -> f64 {
    let lat = &topo.lattice;
    let pairs = topo.leaf_order.windows(2);
    let total = topo.leaf_order.len().saturating_sub(1).max(1);
    let adjacent = pairs
        .filter(|w| {
            let (a, b) = (lat.coords(w[0]), lat.coords(w[1]));
            a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
        })
        .count();
    adjacent as f64 / total as f64
}
