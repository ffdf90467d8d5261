//! A flipped bubble in a longitudinal field: domain-wall length and
//! half-system entropy for a weak and a strong field.

use std::sync::Arc;

use tree_tdvp::hamiltonian::{domain_wall_operator, tfim_terms, Grouping};
use tree_tdvp::initstates::{make_pattern, PatternSpec, Spin};
use tree_tdvp::observables::{entropy_profile, DomainWallMeter};
use tree_tdvp::state::TtnState;
use tree_tdvp::tdvp::{evolve, Engine, TdvpConfig, TdvpError};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lat = build_lattice(8, 8)?;
    let topo = Arc::new(build_tree(&lat, Orientation::Standard));
    let spec = PatternSpec::Bubble {
        w: 4,
        h: 4,
        x0: 2,
        y0: 2,
        background: Spin::Up,
    };
    let locals = make_pattern(&lat, &spec)?;
    let dw = domain_wall_operator(&lat);

    for h in [0.05, 0.5] {
        let state = TtnState::product_state(topo.clone(), &locals, 8)?;
        let meter = DomainWallMeter::new(&state, &dw)?;
        let op = tfim_terms(1.0, 0.4, h, &lat);
        let mut engine = Engine::new(state, &op, Grouping::Collapsed, TdvpConfig::new(0.1, 2.0))?;
        println!("h = {h}");
        evolve(&mut engine, 5, |t, s| {
            let d = meter.measure(s).map_err(|e| TdvpError::Observe(e.to_string()))?;
            let ent = entropy_profile(s, &[1]).map_err(|e| TdvpError::Observe(e.to_string()))?[&1];
            println!("  t = {t:4.1}: D = {d:7.3}, S = {ent:.4}");
            Ok(())
        })?;
    }
    Ok(())
}
