//! A flipped strip on a 4x4 lattice in the weak-field regime, compared with
//! the constrained (PXP) model.

use std::sync::Arc;

use tree_tdvp::hamiltonian::{tfim_terms, Grouping};
use tree_tdvp::initstates::{make_pattern, PatternSpec, Spin, StripOrientation};
use tree_tdvp::observables::{region_mean, Pauli};
use tree_tdvp::oracles::{pxp_evolve, strip_prediction, DenseState, PxpOperator};
use tree_tdvp::state::TtnState;
use tree_tdvp::tdvp::{evolve, Engine, TdvpConfig};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lat = build_lattice(4, 4)?;
    let topo = Arc::new(build_tree(&lat, Orientation::Standard));
    let spec = PatternSpec::Strip {
        length: 4,
        width: 1,
        x0: 0,
        y0: 1,
        orientation: StripOrientation::Horizontal,
        background: Spin::Up,
    };
    let (bulk, edges) = spec.strip_regions(&lat, 2)?;
    let locals = make_pattern(&lat, &spec)?;
    let (g, dt, t_max) = (0.1, 0.05, 20.0);

    let pxp = PxpOperator::new(g, 0.0, &lat)?;
    let mut pxp_bulk = Vec::new();
    pxp_evolve(&pxp, &DenseState::product(&locals)?, dt, t_max, |t, psi| {
        let sx = psi.sx();
        pxp_bulk.push((t, bulk.iter().map(|&i| sx[i]).sum::<f64>() / bulk.len() as f64));
    })?;

    let op = tfim_terms(1.0, g, 0.0, &lat);
    let state = TtnState::product_state(topo, &locals, 16)?;
    let mut engine = Engine::new(state, &op, Grouping::Collapsed, TdvpConfig::new(dt, t_max))?;
    let mut ttn = Vec::new();
    evolve(&mut engine, 40, |t, s| {
        let b = region_mean(s, &bulk, Pauli::X).map_err(|e| tree_tdvp::tdvp::TdvpError::Observe(e.to_string()))?;
        let e = region_mean(s, &edges, Pauli::X).map_err(|e| tree_tdvp::tdvp::TdvpError::Observe(e.to_string()))?;
        ttn.push((t, b, e));
        Ok(())
    })?;

    println!("   t    bulk ttn   bulk pxp   edge ttn");
    for (t, b, e) in &ttn {
        let p = pxp_bulk.iter().min_by(|a, c| (a.0 - t).abs().total_cmp(&(c.0 - t).abs())).expect("grid").1;
        println!("{t:5.1} {b:10.5} {p:10.5} {e:10.5}");
    }
    println!("predicted bulk magnitude 1/sqrt(5) = {:.5}", strip_prediction().magnitude);
    Ok(())
}
