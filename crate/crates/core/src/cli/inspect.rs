//! The `inspect-state` subcommand.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::observables::{magnetizations, schmidt_at_levels};
use crate::state::{load_checkpoint, TtnState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub link: usize,
    pub entropy: f64,
    pub leading_schmidt_values: Vec<f64>,
    /// `σ_χ / σ_1`.
    pub tail_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub lx: usize,
    pub ly: usize,
    pub n_nodes: usize,
    pub max_bond_dim: usize,
    pub norm: f64,
    pub isometry_error: f64,
    pub sx: Vec<f64>,
    pub sz: Vec<f64>,
    pub levels: Vec<LevelSummary>,
}

const LEADING: usize = 4;

pub fn summarize(state: &TtnState) -> Result<StateSummary, CliError> {
    let topo = state.topology();
    let mut gauged = state.clone();
    gauged.isometrize(topo.root())?;
    let norm = gauged.norm();
    gauged.normalize();
    let (sx, sz) = magnetizations(&gauged)?;
    let levels: Vec<usize> = (1..=topo.depth()).filter(|&l| topo.level_node(l).is_some()).collect();
    let levels = schmidt_at_levels(&gauged, &levels)?
        .into_iter()
        .map(|(level, sd)| LevelSummary {
            level,
            link: sd.link,
            entropy: sd.entropy,
            leading_schmidt_values: sd.values.iter().take(LEADING).copied().collect(),
            tail_ratio: match (sd.values.first(), sd.values.last()) {
                (Some(&a), Some(&b)) if a > 0.0 => b / a,
                _ => 0.0,
            },
        })
        .collect();
    Ok(StateSummary {
        lx: topo.lattice.lx,
        ly: topo.lattice.ly,
        n_nodes: topo.n_nodes(),
        max_bond_dim: state.max_bond_dim(),
        norm,
        isometry_error: gauged.isometry_error()?,
        sx,
        sz,
        levels,
    })
}

pub fn inspect(path: &Path) -> Result<StateSummary, CliError> {
    summarize(&load_checkpoint(path)?)
}

/// Magnetization map (top row first) and per-level entanglement.
pub fn render(s: &StateSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}x{} lattice, {} nodes, max bond {}, norm {:.12}, isometry error {:.2e}",
        s.lx, s.ly, s.n_nodes, s.max_bond_dim, s.norm, s.isometry_error
    );
    let _ = writeln!(out, "<sx> (pattern: + up, - down, . mixed):");
    for y in (0..s.ly).rev() {
        let mut line = String::new();
        let mut glyphs = String::new();
        for x in 0..s.lx {
            let v = s.sx[x + s.lx * y];
            let _ = write!(line, "{v:>7.3}");
            glyphs.push(if v > 0.5 {
                '+'
            } else if v < -0.5 {
                '-'
            } else {
                '.'
            });
        }
        let _ = writeln!(out, "  {glyphs}  {line}");
    }
    let _ = writeln!(out, "level  link  entropy   tail ratio  leading Schmidt values");
    for l in &s.levels {
        let _ = writeln!(
            out,
            "{:>5} {:>5} {:>8.5} {:>12.3e}  {:?}",
            l.level,
            l.link,
            l.entropy,
            l.tail_ratio,
            l.leading_schmidt_values
                .iter()
                .map(|v| (v * 1e6).round() / 1e6)
                .collect::<Vec<_>>()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initstates::{make_pattern, CornerAnchor, PatternSpec, Spin};
    use crate::state::save_checkpoint;
    use crate::topology::{build_lattice, build_tree, Orientation};
    use std::sync::Arc;

    #[test]
    fn product_checkpoint_summary() {
        let lat = build_lattice(4, 4).unwrap();
        let topo = Arc::new(build_tree(&lat, Orientation::Standard));
        let spec = PatternSpec::Corner {
            size: 2,
            anchor: CornerAnchor::Origin,
            background: Spin::Down,
        };
        let s = TtnState::product_state(topo, &make_pattern(&lat, &spec).unwrap(), 4).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("s.ckpt");
        save_checkpoint(&s, &p).unwrap();
        let sum = inspect(&p).unwrap();
        assert!((sum.norm - 1.0).abs() < 1e-12);
        assert_eq!(sum.sx[0], 1.0);
        assert_eq!(sum.sx[15], -1.0);
        assert!(sum.levels.iter().all(|l| l.entropy.abs() < 1e-12));
        let text = render(&sum);
        assert!(text.contains("  ----"));
        assert!(text.contains("  ++--"));
    }
}
