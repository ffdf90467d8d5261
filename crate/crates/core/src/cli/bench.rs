//! The `bench` subcommand: TDVP step time against lattice size and bond
//! dimension, collapsed against naive term grouping.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::hamiltonian::{build_environments, collapse_branches, tfim_terms, Grouping, Side};
use crate::state::{capped_bond, LocalState, TtnState};
use crate::tdvp::{Engine, TdvpConfig};
use crate::topology::{build_lattice, build_tree, Orientation, TreeTopology};
use crate::G_CRITICAL;

/// Largest relative difference tolerated between the two groupings.
pub const PREFLIGHT_TOL: f64 = 1e-12;
const BYTES_PER_ENTRY: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub chis: Vec<usize>,
    pub modes: Vec<Grouping>,
    /// Timed steps per cell, after one untimed warmup step.
    pub steps: usize,
    pub g: f64,
    pub dt: f64,
    /// Cells whose estimate exceeds this are skipped.
    pub memory_limit_bytes: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            sizes: vec![8],
            chis: vec![32, 64, 128],
            modes: vec![Grouping::Collapsed, Grouping::Naive],
            steps: 5,
            g: G_CRITICAL,
            dt: 0.01,
            memory_limit_bytes: 8 << 30,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub l: usize,
    pub chi: usize,
    pub mode: Grouping,
    /// Median wall time per step; `None` if the cell was skipped or failed.
    pub step_seconds: Option<f64>,
    pub samples: Vec<f64>,
    pub memory_estimate_bytes: usize,
    /// Effective-Hamiltonian summands over one sweep (nodes and links).
    pub summands: usize,
    pub raw_terms: usize,
    pub krylov_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preflight {
    pub l: usize,
    pub chi: usize,
    pub max_rel_diff: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub options: BenchOptions,
    pub preflight: Vec<Preflight>,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn cell(&self, l: usize, chi: usize, mode: Grouping) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.l == l && c.chi == chi && c.mode == mode)
    }

    /// Log-log slope of step time against χ for one size and mode, over the
    /// cells that were timed.
    pub fn chi_slope(&self, l: usize, mode: Grouping) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .cells
            .iter()
            .filter(|c| c.l == l && c.mode == mode)
            .filter_map(|c| c.step_seconds.map(|t| (c.chi as f64, t)))
            .unzip();
        loglog_slope(&xs, &ys)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "l",
            "chi",
            "mode",
            "step_seconds",
            "memory_estimate_bytes",
            "summands",
            "raw_terms",
            "krylov_iterations",
            "skipped",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.l.to_string(),
                c.chi.to_string(),
                mode_name(c.mode).to_string(),
                c.step_seconds.map(|t| t.to_string()).unwrap_or_default(),
                c.memory_estimate_bytes.to_string(),
                c.summands.to_string(),
                c.raw_terms.to_string(),
                c.krylov_iterations.to_string(),
                c.skipped.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Compare(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii"))
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>5} {:>10} {:>12} {:>10} {:>9} {:>9}",
            "L", "chi", "mode", "step [s]", "mem [MB]", "summands", "terms"
        );
        for c in &self.cells {
            let t = match (&c.step_seconds, &c.skipped) {
                (Some(t), _) => format!("{t:.4}"),
                (None, Some(_)) => "skipped".into(),
                _ => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:>4} {:>5} {:>10} {:>12} {:>10.1} {:>9} {:>9}",
                c.l,
                c.chi,
                mode_name(c.mode),
                t,
                c.memory_estimate_bytes as f64 / 1e6,
                c.summands,
                c.raw_terms
            );
        }
        for p in &self.preflight {
            let _ = writeln!(
                s,
                "pre-flight L={} chi={}: max rel diff {:.2e} {}",
                p.l,
                p.chi,
                p.max_rel_diff,
                if p.pass { "ok" } else { "FAILED" }
            );
        }
        s
    }
}

fn mode_name(m: Grouping) -> &'static str {
    match m {
        Grouping::Collapsed => "collapsed",
        Grouping::Naive => "naive",
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 || !sxy.is_finite() {
        return None;
    }
    Some(sxy / sxx)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// Rough peak memory of a TDVP run: the state, its backup, the Krylov basis
/// for the largest node and every environment block.
pub fn memory_estimate(topo: &TreeTopology, chi: usize, grouping: Grouping, krylov_max: usize) -> Result<usize, CliError> {
    let op = tfim_terms(1.0, 1.0, 0.0, &topo.lattice);
    let plan = collapse_branches(&op, Arc::new(topo.clone()), grouping)?;
    let dim = |c: crate::topology::Child| match c {
        crate::topology::Child::Leaf(_) => 2,
        crate::topology::Child::Node(c) => capped_bond(topo, c, chi),
    };
    let mut state = 0usize;
    let mut largest = 0usize;
    let mut env = 0usize;
    for (id, node) in topo.nodes.iter().enumerate() {
        let up = if node.parent.is_some() { capped_bond(topo, id, chi) } else { 1 };
        let n = dim(node.children[0]) * dim(node.children[1]) * up;
        state += n;
        largest = largest.max(n);
        if node.parent.is_some() {
            let blocks = 2 + plan.open_terms(Side::Below(id)) + plan.open_terms(Side::Above(id));
            env += blocks * up * up;
        }
    }
    Ok((2 * state + (krylov_max + 2) * largest + env) * BYTES_PER_ENTRY)
}

/// Collapsed and naive effective Hamiltonians applied to the root tensor of
/// a random state; returns the relative difference.
pub fn preflight(topo: Arc<TreeTopology>, chi: usize, seed: u64) -> Result<f64, CliError> {
    let op = tfim_terms(1.0, G_CRITICAL, 0.3, &topo.lattice);
    let state = TtnState::random(topo.clone(), chi, seed)?;
    let root = topo.root();
    let mut out = Vec::new();
    for g in [Grouping::Collapsed, Grouping::Naive] {
        let plan = Arc::new(collapse_branches(&op, topo.clone(), g)?);
        let cache = build_environments(&state, plan)?;
        out.push(cache.node_operator(&state, root)?.apply(state.tensor(root))?);
    }
    let mut diff = out[0].clone();
    diff.add_scaled(crate::C64::new(-1.0, 0.0), &out[1])?;
    Ok(diff.norm() / out[1].norm().max(f64::MIN_POSITIVE))
}

fn time_cell(topo: Arc<TreeTopology>, chi: usize, mode: Grouping, opts: &BenchOptions) -> Result<(Vec<f64>, usize), CliError> {
    let locals = vec![LocalState::z_plus(); topo.n_sites()];
    let state = TtnState::product_state(topo.clone(), &locals, chi)?;
    let op = tfim_terms(1.0, opts.g, 0.0, &topo.lattice);
    let cfg = TdvpConfig::new(opts.dt, opts.dt * (opts.steps + 1) as f64);
    let mut engine = Engine::new(state, &op, mode, cfg)?;
    engine.step()?;
    let mut samples = Vec::with_capacity(opts.steps);
    let mut iters = 0;
    for _ in 0..opts.steps {
        let t0 = Instant::now();
        let stats = engine.step()?;
        samples.push(t0.elapsed().as_secs_f64());
        iters += stats.krylov_iterations;
    }
    Ok((samples, iters))
}

fn summands(topo: &Arc<TreeTopology>, mode: Grouping) -> Result<(usize, usize), CliError> {
    let op = tfim_terms(1.0, 1.0, 0.0, &topo.lattice);
    let plan = collapse_branches(&op, topo.clone(), mode)?;
    let mut n = 0;
    for id in 0..topo.n_nodes() {
        n += plan.node_summands(id);
        if id != topo.root() {
            n += plan.link_summands(id);
        }
    }
    Ok((n, plan.raw_term_count()))
}

/// Runs every `(L, χ, mode)` cell. A failed pre-flight check aborts; a cell
/// that would exceed the memory limit or fails is recorded and skipped.
pub fn bench(opts: &BenchOptions) -> Result<BenchReport, CliError> {
    if opts.steps == 0 {
        return Err(CliError::Compare("bench needs at least one timed step".into()));
    }
    let mut report = BenchReport {
        options: opts.clone(),
        preflight: Vec::new(),
        cells: Vec::new(),
    };
    for &l in &opts.sizes {
        let topo = Arc::new(build_tree(&build_lattice(l, l)?, Orientation::Standard));
        for &chi in &opts.chis {
            let mem: Vec<usize> = opts
                .modes
                .iter()
                .map(|&m| memory_estimate(&topo, chi, m, 30))
                .collect::<Result<_, _>>()?;
            if mem.iter().all(|&m| m <= opts.memory_limit_bytes) {
                let d = preflight(topo.clone(), chi, opts.seed)?;
                report.preflight.push(Preflight {
                    l,
                    chi,
                    max_rel_diff: d,
                    pass: d <= PREFLIGHT_TOL,
                });
                if d > PREFLIGHT_TOL {
                    return Err(CliError::Compare(format!(
                        "pre-flight failed at L={l} chi={chi}: collapsed and naive differ by {d:.3e}"
                    )));
                }
            }
            for (&mode, &memory) in opts.modes.iter().zip(&mem) {
                let (summands, raw_terms) = summands(&topo, mode)?;
                let mut cell = BenchCell {
                    l,
                    chi,
                    mode,
                    step_seconds: None,
                    samples: Vec::new(),
                    memory_estimate_bytes: memory,
                    summands,
                    raw_terms,
                    krylov_iterations: 0,
                    skipped: None,
                };
                if memory > opts.memory_limit_bytes {
                    cell.skipped = Some(format!(
                        "estimated {:.1} GB exceeds the limit",
                        memory as f64 / 1e9
                    ));
                } else {
                    match time_cell(topo.clone(), chi, mode, opts) {
                        Ok((samples, iters)) => {
                            cell.step_seconds = median(&samples);
                            cell.samples = samples;
                            cell.krylov_iterations = iters;
                        }
                        Err(e) => cell.skipped = Some(e.to_string()),
                    }
                }
                report.cells.push(cell);
            }
        }
    }
    Ok(report)
}
