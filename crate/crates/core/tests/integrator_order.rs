//! Order of the symmetric TDVP step when the bond dimension is truncated.
//!
//! At full bond dimension the integrator is exact, so its order is only
//! visible on a truncated manifold. The reference is the same integrator run
//! with many small sub-steps, which converges to the exact projected flow.

use std::sync::Arc;

use tree_tdvp::cli::loglog_slope;
use tree_tdvp::hamiltonian::{tfim_terms, Grouping};
use tree_tdvp::state::TtnState;
use tree_tdvp::tdvp::{Engine, TdvpConfig};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};
use tree_tdvp::G_CRITICAL;

fn evolve(state: &TtnState, dt: f64, substeps: usize) -> Vec<tree_tdvp::C64> {
    let op = tfim_terms(1.0, G_CRITICAL, 0.2, &state.topology().lattice);
    let h = dt / substeps as f64;
    let mut cfg = TdvpConfig::new(h, dt);
    cfg.krylov_tol = 1e-14;
    cfg.krylov_max = 40;
    let mut e = Engine::new(state.clone(), &op, Grouping::Collapsed, cfg).unwrap();
    for _ in 0..substeps {
        e.step().unwrap();
    }
    e.state().to_statevector().unwrap().to_vec()
}

#[test]
fn local_error_is_third_order_on_truncated_manifold() {
    let topo = Arc::new(build_tree(&build_lattice(4, 2).unwrap(), Orientation::Standard));
    let mut s = TtnState::random(topo, 3, 11).unwrap();
    s.normalize();
    let dts = [0.04, 0.02, 0.01, 0.005];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let one = evolve(&s, dt, 1);
            let fine = evolve(&s, dt, 64);
            one.iter().zip(&fine).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        })
        .collect();
    let slope = loglog_slope(&dts, &errs).unwrap();
    eprintln!("slope {slope:.3}, errors {errs:?}");
    assert!((2.7..=3.3).contains(&slope), "slope {slope}, errors {errs:?}");
}
