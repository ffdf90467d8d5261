//! Global quench on a 4x2 lattice: TDVP at exact bond dimension against
//! dense statevector evolution.

use std::sync::Arc;

use tree_tdvp::hamiltonian::{tfim_terms, Grouping};
use tree_tdvp::observables::{entropy_profile, magnetizations};
use tree_tdvp::oracles::{DenseOperator, DenseState};
use tree_tdvp::state::{LocalState, TtnState};
use tree_tdvp::tdvp::{Engine, TdvpConfig};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};
use tree_tdvp::G_CRITICAL;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lat = build_lattice(4, 2)?;
    let topo = Arc::new(build_tree(&lat, Orientation::Standard));
    let op = tfim_terms(1.0, 2.0 * G_CRITICAL, 0.0, &lat);
    let locals = vec![LocalState::Up; lat.n_sites()];

    let chi = 16;
    let state = TtnState::product_state(topo.clone(), &locals, chi)?;
    let (dt, t_max) = (0.02, 1.0);
    let mut engine = Engine::new(state, &op, Grouping::Collapsed, TdvpConfig::new(dt, t_max))?;

    let dense = DenseOperator::from_local_sum(&op)?;
    let mut psi = DenseState::product(&locals)?;
    let half: Vec<usize> = topo.sites_of(topo.level_node(1).expect("level")).to_vec();

    println!("   t     <sx> ttn      <sx> ed       S ttn      S ed");
    for k in 1..=engine.config().n_steps() {
        engine.step()?;
        psi = dense.propagate(&psi, dt, 1e-13)?;
        if k % 10 == 0 {
            let (sx, _) = magnetizations(engine.state())?;
            let mean_ttn = sx.iter().sum::<f64>() / sx.len() as f64;
            let sx_ed = psi.sx();
            let mean_ed = sx_ed.iter().sum::<f64>() / sx_ed.len() as f64;
            let s_ttn = entropy_profile(engine.state(), &[1])?[&1];
            println!(
                "{:5.2} {:12.8} {:12.8} {:10.6} {:10.6}",
                engine.time(),
                mean_ttn,
                mean_ed,
                s_ttn,
                psi.entropy(&half)?
            );
        }
    }
    println!("energy drift {:.2e}", engine.energy()? - tree_tdvp::oracles::DenseState::product(&locals)?.expectation(&dense).re);
    Ok(())
}
