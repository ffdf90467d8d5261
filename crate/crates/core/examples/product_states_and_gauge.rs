//! Product states on the tree, gauge moves and Schmidt spectra of a random
//! state.

use std::sync::Arc;

use tree_tdvp::initstates::{ascii_dump, make_pattern, PatternSpec, Spin, StripOrientation};
use tree_tdvp::observables::magnetizations;
use tree_tdvp::state::{overlap, TtnState};
use tree_tdvp::topology::{build_lattice, build_tree, Orientation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lat = build_lattice(8, 4)?;
    let topo = Arc::new(build_tree(&lat, Orientation::Standard));

    let spec = PatternSpec::Strip {
        length: 4,
        width: 1,
        x0: 2,
        y0: 1,
        orientation: StripOrientation::Horizontal,
        background: Spin::Up,
    };
    let locals = make_pattern(&lat, &spec)?;
    println!("strip pattern:\n{}", ascii_dump(&lat, &locals));

    let mut s = TtnState::product_state(topo.clone(), &locals, 8)?;
    let (sx, _) = magnetizations(&s)?;
    println!("bond dims {:?}", s.bond_dims());
    println!("sx row y=1: {:?}", &sx[8..16]);

    let before = s.clone();
    let far = topo.n_nodes() - 1;
    s.isometrize(far)?;
    println!(
        "center moved 0 -> {far}: isometry error {:.1e}, overlap with original {:.12}",
        s.isometry_error()?,
        overlap(&before, &s)?.re
    );

    let mut r = TtnState::random(topo.clone(), 8, 3)?;
    for level in 1..=3 {
        let link = topo.level_node(level).expect("level");
        let sd = r.schmidt_spectrum(link)?;
        println!(
            "random state, level {level} (link {link}): S = {:.4}, top values {:?}",
            sd.entropy,
            sd.values.iter().take(3).map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
