//! The `compare` subcommand: observable-by-observable deviations between two
//! runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::RECORDS_JSONL;
use super::CliError;
use crate::observables::{read_jsonl, ObservableRecord};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const TIME_EPS: f64 = 1e-9;

/// Absolute tolerances per observable family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub sx: f64,
    pub sz: f64,
    pub entropy: f64,
    pub dw_length: f64,
    pub region: f64,
    pub density: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sx: 1e-3,
            sz: 1e-3,
            entropy: 1e-3,
            dw_length: 1e-3,
            region: 1e-3,
            density: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub observable: String,
    pub samples: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeDeviation {
    pub time: f64,
    /// Largest deviation over all compared observables at this time.
    pub max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_a: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_b: Option<PathBuf>,
    pub interpolated: bool,
    pub n_times: usize,
    pub deviations: Vec<Deviation>,
    pub per_time: Vec<TimeDeviation>,
    pub pass: bool,
}

/// `b` evaluated at time `t`, linearly interpolated between neighbouring
/// records.
fn interpolate(b: &[ObservableRecord], t: f64) -> Option<ObservableRecord> {
    let k = b.iter().position(|r| r.time >= t - TIME_EPS)?;
    if (b[k].time - t).abs() <= TIME_EPS {
        return Some(b[k].clone());
    }
    if k == 0 {
        return None;
    }
    let (lo, hi) = (&b[k - 1], &b[k]);
    let w = (t - lo.time) / (hi.time - lo.time);
    let mix = |x: f64, y: f64| (1.0 - w) * x + w * y;
    let mix_vec = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| mix(*p, *q)).collect::<Vec<_>>();
    let mix_map = |x: &BTreeMap<usize, f64>, y: &BTreeMap<usize, f64>| {
        x.iter()
            .filter_map(|(k, v)| y.get(k).map(|w2| (*k, mix(*v, *w2))))
            .collect()
    };
    Some(ObservableRecord {
        schema_version: lo.schema_version,
        source: lo.source.clone(),
        time: t,
        sx: mix_vec(&lo.sx, &hi.sx),
        sz: mix_vec(&lo.sz, &hi.sz),
        dw_length: lo.dw_length.zip(hi.dw_length).map(|(x, y)| mix(x, y)),
        entropies: mix_map(&lo.entropies, &hi.entropies),
        spectrum: None,
        region_means: lo
            .region_means
            .iter()
            .filter_map(|(k, v)| hi.region_means.get(k).map(|w2| (k.clone(), mix(*v, *w2))))
            .collect(),
        correlation_spread: None,
        densities: lo
            .densities
            .as_ref()
            .zip(hi.densities.as_ref())
            .map(|(x, y)| mix_vec(x, y)),
    })
}

#[derive(Default)]
struct Acc {
    n: usize,
    max: f64,
    sum: f64,
    tol: f64,
}

impl Acc {
    fn add(&mut self, d: f64) {
        self.n += 1;
        self.sum += d;
        self.max = self.max.max(d);
    }
}

/// Deviations between two trajectories. Without `interpolate` the time grids
/// must agree record by record; with it, `b` is interpolated onto the times
/// of `a` that lie inside its range.
pub fn compare_records(
    a: &[ObservableRecord],
    b: &[ObservableRecord],
    tol: &Tolerances,
    interpolate_grid: bool,
) -> Result<CompareReport, CliError> {
    for r in a.iter().chain(b) {
        if r.schema_version != a.first().map_or(r.schema_version, |f| f.schema_version) {
            return Err(CliError::Compare("record schema versions differ".into()));
        }
    }
    let same_grid = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x.time - y.time).abs() <= TIME_EPS);
    let pairs: Vec<(&ObservableRecord, ObservableRecord)> = if same_grid {
        a.iter().zip(b.iter().cloned()).collect()
    } else if interpolate_grid {
        a.iter().filter_map(|r| interpolate(b, r.time).map(|x| (r, x))).collect()
    } else {
        return Err(CliError::Compare(format!(
            "time grids differ ({} vs {} records); enable interpolation",
            a.len(),
            b.len()
        )));
    };
    if pairs.is_empty() {
        return Err(CliError::Compare("no overlapping times".into()));
    }

    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    let mut per_time = Vec::with_capacity(pairs.len());
    for (x, y) in &pairs {
        let mut worst: f64 = 0.0;
        let mut add = |name: String, tolerance: f64, d: f64| {
            let e = acc.entry(name).or_insert_with(|| Acc {
                tol: tolerance,
                ..Default::default()
            });
            e.add(d);
            worst = worst.max(d);
        };
        if x.sx.len() == y.sx.len() {
            for (p, q) in x.sx.iter().zip(&y.sx) {
                add("sx".into(), tol.sx, (p - q).abs());
            }
        }
        if x.sz.len() == y.sz.len() {
            for (p, q) in x.sz.iter().zip(&y.sz) {
                add("sz".into(), tol.sz, (p - q).abs());
            }
        }
        for (l, v) in &x.entropies {
            if let Some(w) = y.entropies.get(l) {
                add(format!("ent_L{l}"), tol.entropy, (v - w).abs());
            }
        }
        if let (Some(p), Some(q)) = (x.dw_length, y.dw_length) {
            add("dw_length".into(), tol.dw_length, (p - q).abs());
        }
        for (k, v) in &x.region_means {
            if let Some(w) = y.region_means.get(k) {
                add(format!("region_{k}"), tol.region, (v - w).abs());
            }
        }
        if let (Some(p), Some(q)) = (&x.densities, &y.densities) {
            if p.len() == q.len() {
                for (u, v) in p.iter().zip(q) {
                    add("densities".into(), tol.density, (u - v).abs());
                }
            }
        }
        per_time.push(TimeDeviation {
            time: x.time,
            max_abs: worst,
        });
    }
    if acc.is_empty() {
        return Err(CliError::Compare("the runs share no observables".into()));
    }
    let deviations: Vec<Deviation> = acc
        .into_iter()
        .map(|(observable, a)| Deviation {
            observable,
            samples: a.n,
            max_abs: a.max,
            mean_abs: a.sum / a.n as f64,
            tolerance: a.tol,
            pass: a.max <= a.tol,
        })
        .collect();
    Ok(CompareReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run_a: None,
        run_b: None,
        interpolated: !same_grid,
        n_times: pairs.len(),
        pass: deviations.iter().all(|d| d.pass),
        deviations,
        per_time,
    })
}

pub fn load_records(dir: &Path) -> Result<Vec<ObservableRecord>, CliError> {
    let p = dir.join(RECORDS_JSONL);
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    Ok(read_jsonl(&text)?)
}

/// Compares the `records.jsonl` of two run directories.
pub fn compare(run_a: &Path, run_b: &Path, tol: &Tolerances, interpolate_grid: bool) -> Result<CompareReport, CliError> {
    let a = load_records(run_a)?;
    let b = load_records(run_b)?;
    let mut report = compare_records(&a, &b, tol, interpolate_grid)?;
    report.run_a = Some(run_a.to_path_buf());
    report.run_b = Some(run_b.to_path_buf());
    Ok(report)
}
