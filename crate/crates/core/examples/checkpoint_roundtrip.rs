//! Runs a short configured simulation through the library front end, then
//! reloads and inspects its checkpoint.

use tree_tdvp::cli::{inspect, inspect::render, run, RunConfig};
use tree_tdvp::state::load_checkpoint;

const CONFIG: &str = r#"
schema_version = 1
chi = 8

[lattice]
lx = 4
ly = 4

[model]
g = 0.5
h = 0.1

[initial]
kind = "corner"
size = 2

[evolution]
dt = 0.05
t_max = 0.5

[observables]
stride = 5
levels = [1, 2]
domain_walls = true
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("tree_tdvp_checkpoint_example");
    let mut cfg = RunConfig::from_toml(CONFIG)?;
    cfg.output.directory = dir.clone();
    let out = run(&cfg)?;
    println!("{} records, files:", out.records.len());
    for f in &out.manifest.files {
        println!("  {:<14} {:>8} bytes  {}", f.name, f.bytes, &f.sha256[..16]);
    }

    let path = dir.join("final.ckpt");
    let loaded = load_checkpoint(&path)?;
    let last = out.final_state.as_ref().ok_or("ttn run has a final state")?;
    let ov = tree_tdvp::state::overlap(&loaded, last)?;
    println!("reloaded state overlap with the in-memory state: {:.15}", ov.norm());
    print!("{}", render(&inspect(&path)?));
    Ok(())
}
