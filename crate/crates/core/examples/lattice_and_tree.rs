//! Builds the lattice and its bisection tree and prints the tree layout.

use tree_tdvp::topology::{build_lattice, build_tree, hilbert_order, leaf_order_adjacency, Child, Orientation};

fn main() {
    let lat = build_lattice(8, 8).expect("lattice");
    println!("{}x{} lattice: {} sites, {} bonds", lat.lx, lat.ly, lat.n_sites(), lat.bonds.len());

    for orientation in [Orientation::Standard, Orientation::Rotated90] {
        let topo = build_tree(&lat, orientation);
        println!(
            "{orientation:?}: {} nodes, depth {}, leaf-order adjacency {:.3}, hash {}",
            topo.n_nodes(),
            topo.depth(),
            leaf_order_adjacency(&topo),
            &topo.hash()[..12]
        );
    }

    let topo = build_tree(&lat, Orientation::Standard);
    println!("\nlevel  node  sites  exact bond bound");
    for level in 1..=topo.depth() {
        if let Some(n) = topo.level_node(level) {
            println!("{level:>5} {n:>5} {:>6} {:>17}", topo.sites_of(n).len(), topo.exact_bond_bound(n));
        }
    }

    println!("\nfirst nodes (pre-order):");
    for node in topo.nodes.iter().take(8) {
        let show = |c: Child| match c {
            Child::Node(n) => format!("node {n}"),
            Child::Leaf(s) => format!("site {s}"),
        };
        println!(
            "  {:>2}: depth {}, {}x{} block at ({}, {}), children [{}, {}]",
            node.id,
            node.depth,
            node.rect.w,
            node.rect.h,
            node.rect.x0,
            node.rect.y0,
            show(node.children[0]),
            show(node.children[1])
        );
    }

    let hilbert = hilbert_order(8).expect("power of two");
    println!("\nHilbert curve on 8x8 starts {:?}", &hilbert[..8]);
}
