//! The `run` subcommand: one trajectory, written as records, checkpoint and
//! manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Backend, Format, RunConfig};
use super::CliError;
use crate::hamiltonian::tfim_terms;
use crate::initstates::{ascii_dump, make_pattern, PatternSpec};
use crate::observables::{
    write_csv, write_jsonl, DenseRecorder, ObservableRecord, Pauli, RecordSpec, Recorder,
    RECORD_SCHEMA_VERSION,
};
use crate::oracles::{DenseOperator, DenseState, FermionChain, PxpOperator};
use crate::state::{save_checkpoint, LocalState, TtnState};
use crate::tdvp::{evolve, Engine, TdvpError};
use crate::topology::{build_tree, LatticeSpec, TreeTopology};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const RECORDS_JSONL: &str = "records.jsonl";
pub const RECORDS_CSV: &str = "records.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const FAILED_CHECKPOINT: &str = "last_good.ckpt";
pub const LOG_FILE: &str = "run.log";
pub const MANIFEST: &str = "manifest.json";

const DENSE_KRYLOV_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub record_schema_version: u32,
    pub code_version: String,
    pub backend: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_seconds: f64,
    pub n_records: usize,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
}

/// What a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<ObservableRecord>,
    pub final_state: Option<TtnState>,
    pub manifest: Manifest,
    pub directory: PathBuf,
}

/// Named regions for the observables section plus the ones implied by the
/// initial pattern.
pub fn resolve_regions(cfg: &RunConfig, lat: &LatticeSpec) -> BTreeMap<String, (Vec<usize>, Pauli)> {
    let mut out = BTreeMap::new();
    if cfg.observables.auto_regions {
        match &cfg.initial {
            spec @ PatternSpec::Strip { length, .. } if *length >= 3 => {
                let n_bulk = (*length - 2).min(4);
                if let Ok((bulk, edges)) = spec.strip_regions(lat, n_bulk) {
                    out.insert("bulk".to_string(), (bulk, Pauli::X));
                    out.insert("edges".to_string(), (edges, Pauli::X));
                }
            }
            spec @ PatternSpec::Corner { .. } => {
                if let Ok(c) = spec.corner_site(lat) {
                    out.insert("corner".to_string(), (vec![c], Pauli::X));
                }
            }
            _ => {}
        }
    }
    for (name, r) in &cfg.observables.regions {
        let sites = r.sites.iter().map(|&[x, y]| lat.site(x, y)).collect();
        out.insert(name.clone(), (sites, r.axis));
    }
    out
}

pub fn record_spec(cfg: &RunConfig, lat: &LatticeSpec) -> RecordSpec {
    RecordSpec {
        levels: cfg.observables.levels.clone(),
        spectrum_levels: cfg.observables.spectrum_levels.clone(),
        regions: resolve_regions(cfg, lat),
        domain_walls: cfg.observables.domain_walls,
        correlations: cfg.observables.correlations,
    }
}

fn sha256_file(path: &Path) -> Result<FileEntry, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileEntry {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

struct Trajectory {
    records: Vec<ObservableRecord>,
    state: Option<TtnState>,
    failure: Option<(String, Option<TtnState>)>,
    log: Vec<String>,
}

fn times(cfg: &RunConfig) -> Vec<(usize, f64)> {
    let n = cfg.evolution.n_steps();
    let stride = cfg.observables.stride.max(1);
    (0..=n)
        .filter(|&k| k == 0 || k % stride == 0 || k == n)
        .map(|k| (k, k as f64 * cfg.evolution.dt))
        .collect()
}

fn run_ttn(cfg: &RunConfig, topo: Arc<TreeTopology>, locals: &[LocalState]) -> Result<Trajectory, CliError> {
    let state = TtnState::product_state(topo.clone(), locals, cfg.chi)?;
    let op = tfim_terms(cfg.model.j, cfg.g(), cfg.h(), &topo.lattice);
    let mut engine = Engine::new(state, &op, cfg.grouping, cfg.evolution.clone())?;
    let recorder = Recorder::new(engine.state(), record_spec(cfg, &topo.lattice))?;
    let mut records = Vec::new();
    let mut log = vec![format!(
        "bond dims {:?}, {} raw terms",
        engine.state().bond_dims(),
        engine.plan().raw_term_count()
    )];
    let res = evolve(&mut engine, cfg.observables.stride, |t, s| {
        let r = recorder
            .record(t, s)
            .map_err(|e| TdvpError::Observe(e.to_string()))?;
        records.push(r);
        log.push(format!("t = {t:.6}"));
        Ok(())
    });
    Ok(match res {
        Ok(()) => Trajectory {
            records,
            state: Some(engine.into_state()),
            failure: None,
            log,
        },
        Err(e) => Trajectory {
            records,
            state: None,
            failure: Some((e.to_string(), Some(*e.last_good))),
            log,
        },
    })
}

fn run_dense(
    cfg: &RunConfig,
    topo: Arc<TreeTopology>,
    locals: &[LocalState],
    backend: Backend,
) -> Result<Trajectory, CliError> {
    let lat = topo.lattice.clone();
    let recorder = DenseRecorder::new(topo, record_spec(cfg, &lat), backend.name())?;
    let mut psi = DenseState::product(locals)?;
    let step: Box<dyn Fn(&DenseState) -> Result<DenseState, crate::oracles::OracleError>> = match backend {
        Backend::Ed => {
            let op = DenseOperator::from_local_sum(&tfim_terms(cfg.model.j, cfg.g(), cfg.h(), &lat))?;
            let dt = cfg.evolution.dt;
            Box::new(move |p| op.propagate(p, dt, DENSE_KRYLOV_TOL))
        }
        _ => {
            let op = PxpOperator::new(cfg.g(), cfg.h(), &lat)?;
            let dt = cfg.evolution.dt;
            Box::new(move |p| op.propagate(p, dt, DENSE_KRYLOV_TOL))
        }
    };
    let mut records = Vec::new();
    let mut log = Vec::new();
    let mut done = 0;
    for (k, t) in times(cfg) {
        while done < k {
            psi = match step(&psi) {
                Ok(p) => p,
                Err(e) => {
                    return Ok(Trajectory {
                        records,
                        state: None,
                        failure: Some((format!("step {}: {e}", done + 1), None)),
                        log,
                    })
                }
            };
            done += 1;
        }
        records.push(recorder.record(t, &psi)?);
        log.push(format!("t = {t:.6}"));
    }
    Ok(Trajectory {
        records,
        state: None,
        failure: None,
        log,
    })
}

fn run_fermion(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let f = cfg.fermion.clone().unwrap_or_default();
    let chain = FermionChain::new(f.n_sites, cfg.g(), cfg.h());
    let occupied = f.occupied_sites();
    let mut records = Vec::new();
    for (_, t) in times(cfg) {
        records.push(ObservableRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            source: Some(Backend::Fermion.name().into()),
            time: t,
            densities: Some(chain.densities(&occupied, t)?),
            ..Default::default()
        });
    }
    let mut log = vec![format!("chain of {} sites, occupied {:?}", f.n_sites, occupied)];
    if let Ok(p) = chain.revival_period() {
        log.push(format!("revival period {p:.6}"));
    }
    Ok(Trajectory {
        records,
        state: None,
        failure: None,
        log,
    })
}

fn write_records(dir: &Path, cfg: &RunConfig, records: &[ObservableRecord]) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for fmt in &cfg.output.formats {
        match fmt {
            Format::Jsonl => {
                let p = dir.join(RECORDS_JSONL);
                let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
                write_jsonl(BufWriter::new(f), records)?;
                written.push(p);
            }
            Format::Csv => {
                let p = dir.join(RECORDS_CSV);
                let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
                write_csv(BufWriter::new(f), records, cfg.lattice.lx)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Runs `cfg` and writes its artifacts. A failure after the output directory
/// exists still writes the records so far, a checkpoint of the last good
/// state (TTN backend) and a manifest marked `failed`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let start = Instant::now();
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let mut log = vec![
        format!("tree-tdvp {}", env!("CARGO_PKG_VERSION")),
        format!(
            "backend {}, {}x{}, J = {}, g = {}, h = {}, chi = {}, dt = {}, t_max = {}",
            cfg.backend.name(),
            cfg.lattice.lx,
            cfg.lattice.ly,
            cfg.model.j,
            cfg.g(),
            cfg.h(),
            cfg.chi,
            cfg.evolution.dt,
            cfg.evolution.t_max
        ),
    ];
    let traj = if cfg.backend == Backend::Fermion {
        run_fermion(cfg)?
    } else {
        let lat = cfg.lattice_spec().expect("validated");
        let topo = Arc::new(build_tree(&lat, cfg.lattice.orientation));
        let locals = make_pattern(&lat, &cfg.initial)?;
        log.push(format!("initial pattern ({}):", cfg.initial.kind_name()));
        log.push(ascii_dump(&lat, &locals).trim_end().to_string());
        match cfg.backend {
            Backend::Ttn => run_ttn(cfg, topo, &locals)?,
            b => run_dense(cfg, topo, &locals, b)?,
        }
    };
    log.extend(traj.log);

    let mut written = write_records(&dir, cfg, &traj.records)?;
    let failed = traj.failure.is_some();
    let error = traj.failure.as_ref().map(|(msg, _)| msg.clone());
    if let Some((msg, last_good)) = &traj.failure {
        log.push(format!("FAILED: {msg}"));
        if let Some(s) = last_good {
            let p = dir.join(FAILED_CHECKPOINT);
            save_checkpoint(s, &p)?;
            log.push(format!("last good state written to {FAILED_CHECKPOINT}"));
            written.push(p);
        }
    } else if let (Some(s), true) = (&traj.state, cfg.output.checkpoint) {
        let p = dir.join(FINAL_CHECKPOINT);
        save_checkpoint(s, &p)?;
        written.push(p);
    }
    let wall = start.elapsed().as_secs_f64();
    log.push(format!("{} records, wall time {wall:.3} s", traj.records.len()));
    let log_path = dir.join(LOG_FILE);
    fs::write(&log_path, log.join("\n") + "\n").map_err(|e| CliError::io(&log_path, e))?;
    written.push(log_path);

    let files = written.iter().map(|p| sha256_file(p)).collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        record_schema_version: RECORD_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        backend: cfg.backend.name().into(),
        status: if failed { "failed" } else { "ok" }.into(),
        error: error.clone(),
        wall_time_seconds: wall,
        n_records: traj.records.len(),
        config: cfg.clone(),
        files,
    };
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| CliError::io(&mpath, e))?;
    if let Some(msg) = error {
        return Err(CliError::RunFailed { directory: dir, message: msg });
    }
    Ok(RunOutcome {
        records: traj.records,
        final_state: traj.state,
        manifest,
        directory: dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{Coupling, LatticeConfig, ModelConfig, ObservablesConfig, OutputConfig};
    use crate::initstates::{Spin, StripOrientation};
    use crate::observables::read_jsonl;
    use crate::state::load_checkpoint;
    use crate::tdvp::TdvpConfig;

    fn config(dir: &Path, backend: Backend, t_max: f64) -> RunConfig {
        RunConfig {
            schema_version: 1,
            seed: 0,
            backend,
            chi: 16,
            grouping: crate::hamiltonian::Grouping::Collapsed,
            lattice: LatticeConfig {
                lx: 4,
                ly: 2,
                orientation: crate::topology::Orientation::Standard,
            },
            model: ModelConfig {
                j: 1.0,
                g: Coupling::Value(0.7),
                h: Coupling::Value(0.1),
            },
            initial: PatternSpec::Strip {
                length: 4,
                width: 1,
                x0: 0,
                y0: 0,
                orientation: StripOrientation::Horizontal,
                background: Spin::Down,
            },
            evolution: TdvpConfig::new(0.05, t_max),
            observables: ObservablesConfig {
                domain_walls: true,
                ..Default::default()
            },
            output: OutputConfig {
                directory: dir.to_path_buf(),
                ..Default::default()
            },
            fermion: None,
        }
    }

    #[test]
    fn zero_duration_gives_one_record() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&config(tmp.path(), Backend::Ttn, 0.0)).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].time, 0.0);
        let text = fs::read_to_string(tmp.path().join(RECORDS_JSONL)).unwrap();
        assert_eq!(read_jsonl(&text).unwrap(), out.records);
        assert_eq!(out.records[0].region_means["bulk"], 1.0);
    }

    #[test]
    fn manifest_lists_every_file_with_hash() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&config(tmp.path(), Backend::Ttn, 0.2)).unwrap();
        let names: Vec<&str> = out.manifest.files.iter().map(|f| f.name.as_str()).collect();
        for n in [RECORDS_JSONL, RECORDS_CSV, FINAL_CHECKPOINT, LOG_FILE] {
            assert!(names.contains(&n), "{n}");
        }
        for f in &out.manifest.files {
            let bytes = fs::read(tmp.path().join(&f.name)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256);
        }
        let on_disk: Manifest =
            serde_json::from_str(&fs::read_to_string(tmp.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(on_disk.config, out.manifest.config);
        let s = load_checkpoint(&tmp.path().join(FINAL_CHECKPOINT)).unwrap();
        assert_eq!(s.bond_dims(), out.final_state.unwrap().bond_dims());
    }

    #[test]
    fn reruns_are_bit_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&config(a.path(), Backend::Ttn, 0.3)).unwrap();
        run(&config(b.path(), Backend::Ttn, 0.3)).unwrap();
        for f in [RECORDS_JSONL, RECORDS_CSV, FINAL_CHECKPOINT] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn ttn_and_ed_backends_agree() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run(&config(a.path(), Backend::Ttn, 0.5)).unwrap();
        let rb = run(&config(b.path(), Backend::Ed, 0.5)).unwrap();
        assert_eq!(ra.records.len(), rb.records.len());
        for (x, y) in ra.records.iter().zip(&rb.records) {
            assert_eq!(x.time, y.time);
            for (p, q) in x.sz.iter().zip(&y.sz) {
                assert!((p - q).abs() < 1e-8);
            }
            assert!((x.entropies[&1] - y.entropies[&1]).abs() < 1e-8);
            assert!((x.dw_length.unwrap() - y.dw_length.unwrap()).abs() < 1e-8);
        }
        assert_eq!(rb.records[0].source.as_deref(), Some("ed"));
    }

    #[test]
    fn fermion_backend_records_densities() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = config(tmp.path(), Backend::Fermion, 1.0);
        c.fermion = Some(Default::default());
        let out = run(&c).unwrap();
        let d = out.records.last().unwrap().densities.as_ref().unwrap();
        assert_eq!(d.len(), FermionChain::DEFAULT_SITES);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_reported_per_field() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = config(tmp.path(), Backend::Ed, 0.1);
        c.chi = 0;
        c.lattice.lx = 8;
        c.lattice.ly = 4;
        match run(&c) {
            Err(CliError::Config(errs)) => assert!(errs.len() >= 2),
            other => panic!("{other:?}"),
        }
    }
}
