//! Run configuration, read from TOML. The schema is documented in
//! `docs/config-schema.md`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::hamiltonian::Grouping;
use crate::initstates::PatternSpec;
use crate::observables::Pauli;
use crate::oracles::{FermionChain, MAX_ED_SITES};
use crate::tdvp::TdvpConfig;
use crate::topology::{build_lattice, build_tree, LatticeSpec, Orientation};
use crate::G_CRITICAL;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Ttn,
    Ed,
    PxpEd,
    Fermion,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Ttn => "ttn",
            Backend::Ed => "ed",
            Backend::PxpEd => "pxp_ed",
            Backend::Fermion => "fermion",
        }
    }
}

/// A coupling given directly or as a multiple of the critical field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Value(f64),
    Critical { gc: f64 },
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::Value(0.0)
    }
}

impl Coupling {
    pub fn value(self) -> f64 {
        match self {
            Coupling::Value(v) => v,
            Coupling::Critical { gc } => gc * G_CRITICAL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub lx: usize,
    pub ly: usize,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
}

fn default_orientation() -> Orientation {
    Orientation::Standard
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub g: Coupling,
    #[serde(default)]
    pub h: Coupling,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    /// `[x, y]` pairs.
    pub sites: Vec<[usize; 2]>,
    #[serde(default = "axis_x")]
    pub axis: Pauli,
}

fn axis_x() -> Pauli {
    Pauli::X
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    /// Record every `stride` steps.
    #[serde(default = "one_usize")]
    pub stride: usize,
    /// Tree levels whose cut entropy is recorded.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub spectrum_levels: Vec<usize>,
    #[serde(default)]
    pub domain_walls: bool,
    #[serde(default)]
    pub correlations: bool,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionConfig>,
    /// Add the regions implied by the initial pattern (strip bulk and ends,
    /// corner site).
    #[serde(default = "yes")]
    pub auto_regions: bool,
}

fn one_usize() -> usize {
    1
}

fn default_levels() -> Vec<usize> {
    vec![1]
}

fn yes() -> bool {
    true
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            levels: default_levels(),
            spectrum_levels: Vec::new(),
            domain_walls: false,
            correlations: false,
            regions: BTreeMap::new(),
            auto_regions: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Write the final TTN state.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Jsonl, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            formats: default_formats(),
            checkpoint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FermionConfig {
    #[serde(default = "default_chain")]
    pub n_sites: usize,
    /// Initially occupied sites; defaults to the chain center.
    #[serde(default)]
    pub occupied: Vec<usize>,
}

fn default_chain() -> usize {
    FermionChain::DEFAULT_SITES
}

impl Default for FermionConfig {
    fn default() -> Self {
        Self {
            n_sites: default_chain(),
            occupied: Vec::new(),
        }
    }
}

impl FermionConfig {
    pub fn occupied_sites(&self) -> Vec<usize> {
        if self.occupied.is_empty() {
            vec![self.n_sites / 2]
        } else {
            self.occupied.clone()
        }
    }
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_chi() -> usize {
    16
}

fn default_grouping() -> Grouping {
    Grouping::Collapsed
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Echoed into the manifest; runs are deterministic and draw no random
    /// numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_chi")]
    pub chi: usize,
    #[serde(default = "default_grouping")]
    pub grouping: Grouping,
    pub lattice: LatticeConfig,
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    pub initial: PatternSpec,
    pub evolution: TdvpConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fermion: Option<FermionConfig>,
}

fn default_model() -> ModelConfig {
    ModelConfig {
        j: 1.0,
        g: Coupling::default(),
        h: Coupling::default(),
    }
}

/// One rejected field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn lattice_spec(&self) -> Option<LatticeSpec> {
        build_lattice(self.lattice.lx, self.lattice.ly).ok()
    }

    pub fn g(&self) -> f64 {
        self.model.g.value()
    }

    pub fn h(&self) -> f64 {
        self.model.h.value()
    }

    /// Every problem found, one entry per field.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.into(),
                message,
            })
        };
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bad(
                "schema_version",
                format!("expected {CONFIG_SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if self.chi == 0 {
            bad("chi", "must be at least 1".into());
        }
        for (name, v) in [("model.j", self.model.j), ("model.g", self.g()), ("model.h", self.h())] {
            if !v.is_finite() {
                bad(name, format!("must be finite, got {v}"));
            }
        }
        if let Err(e) = self.evolution.validate() {
            bad("evolution", e.to_string());
        }
        if self.observables.stride == 0 {
            bad("observables.stride", "must be at least 1".into());
        }
        if self.output.formats.is_empty() {
            bad("output.formats", "list at least one format".into());
        }
        let lat = match build_lattice(self.lattice.lx, self.lattice.ly) {
            Ok(l) => l,
            Err(e) => {
                bad("lattice", e.to_string());
                return errs;
            }
        };
        let n = lat.n_sites();
        if matches!(self.backend, Backend::Ed | Backend::PxpEd) && n > MAX_ED_SITES {
            bad(
                "backend",
                format!("{} needs at most {MAX_ED_SITES} sites, lattice has {n}", self.backend.name()),
            );
        }
        if self.backend != Backend::Fermion {
            if let Err(e) = self.initial.validate(&lat) {
                bad("initial", e.to_string());
            }
            let topo = build_tree(&lat, self.lattice.orientation);
            for &l in self.observables.levels.iter().chain(&self.observables.spectrum_levels) {
                if topo.level_node(l).is_none() {
                    bad("observables.levels", format!("tree has no cut at level {l}"));
                }
            }
            for (name, r) in &self.observables.regions {
                if r.sites.is_empty() {
                    bad(&format!("observables.regions.{name}"), "no sites".into());
                }
                for &[x, y] in &r.sites {
                    if x >= lat.lx || y >= lat.ly {
                        bad(
                            &format!("observables.regions.{name}"),
                            format!("site ({x}, {y}) outside the {}x{} lattice", lat.lx, lat.ly),
                        );
                    }
                }
            }
        }
        if self.backend == Backend::Fermion {
            let f = self.fermion.clone().unwrap_or_default();
            if f.n_sites < 2 {
                bad("fermion.n_sites", "must be at least 2".into());
            }
            for o in f.occupied_sites() {
                if o >= f.n_sites {
                    bad("fermion.occupied", format!("site {o} outside a chain of {}", f.n_sites));
                }
            }
        }
        errs
    }
}
