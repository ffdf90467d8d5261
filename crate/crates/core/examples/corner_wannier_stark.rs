//! Free-fermion picture of a flipped corner in a longitudinal field: Bloch
//! oscillation of the interface with period 2π/(2h).

use tree_tdvp::oracles::{fermion_evolve, FermionChain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 64;
    let occupied: Vec<usize> = (0..n / 2).collect();
    for (g, h) in [(0.05, 0.05), (0.5, 0.25), (0.25, 0.25)] {
        let chain = FermionChain::new(n, g, h);
        let period = chain.revival_period()?;
        let site = n / 2;
        let amp = chain.breathing_amplitude(site, 64)?;
        println!("g = {g}, h = {h}: period {period:.4} (pi/h = {:.4}), breathing amplitude {amp:.4}", std::f64::consts::PI / h);
    }

    let chain = FermionChain::new(n, 0.05, 0.05);
    let period = chain.revival_period()?;
    let times: Vec<f64> = (0..=8).map(|k| k as f64 * period / 8.0).collect();
    let rows = fermion_evolve(&chain, &occupied, &times)?;
    println!("\ndensity near the interface over one period:");
    for (t, d) in times.iter().zip(&rows) {
        let window: Vec<String> = d[n / 2 - 3..n / 2 + 3].iter().map(|x| format!("{x:.3}")).collect();
        println!("t = {t:7.3}: {}", window.join(" "));
    }
    Ok(())
}
