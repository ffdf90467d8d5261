//! Term grouping: how many effective-Hamiltonian summands remain after
//! collapsing, and the time per step for both groupings.

use std::sync::Arc;

use tree_tdvp::cli::{bench, BenchOptions};
use tree_tdvp::hamiltonian::{collapse_branches, tfim_terms, Grouping};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};
use tree_tdvp::G_CRITICAL;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for l in [4, 8, 16] {
        let lat = build_lattice(l, l)?;
        let topo = Arc::new(build_tree(&lat, Orientation::Standard));
        let op = tfim_terms(1.0, G_CRITICAL, 0.1, &lat);
        let c = collapse_branches(&op, topo.clone(), Grouping::Collapsed)?;
        let n = collapse_branches(&op, topo.clone(), Grouping::Naive)?;
        let sum = |p: &tree_tdvp::hamiltonian::CollapsePlan| (0..topo.n_nodes()).map(|i| p.node_summands(i)).sum::<usize>();
        println!(
            "{l}x{l}: {} raw terms, node summands per sweep collapsed {} vs naive {}",
            c.raw_term_count(),
            sum(&c),
            sum(&n)
        );
    }

    let report = bench(&BenchOptions {
        sizes: vec![4],
        chis: vec![8, 16],
        steps: 2,
        ..Default::default()
    })?;
    print!("\n{}", report.table());
    Ok(())
}
