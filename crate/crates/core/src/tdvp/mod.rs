//! Single-site TDVP on tree tensor networks.
//!
//! Node tensors are propagated with `exp(-i H_eff δ)` and bond matrices with
//! `exp(+i H̃_eff δ)`, following [`schedule::make_schedule`]. Each step starts
//! and ends with the gauge center at the root.

pub mod krylov;
pub mod schedule;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::{
    build_environments, collapse_branches, CollapsePlan, EnvError, EnvironmentCache, Grouping,
    LocalSumOperator,
};
use crate::state::{StateError, TtnState};
use crate::tnalg::TensorError;
use crate::C64;

pub use krylov::{krylov_expm, KrylovResult};
pub use schedule::{make_schedule, Action, SweepSchedule};

#[derive(Debug, Error)]
pub enum TdvpError {
    #[error("Krylov start vector is zero")]
    ZeroVector,
    #[error("effective Hamiltonian produced NaN or Inf")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("observer failed: {0}")]
    Observe(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdvpConfig {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_krylov_max")]
    pub krylov_max: usize,
    #[serde(default = "default_krylov_tol")]
    pub krylov_tol: f64,
    #[serde(default = "default_true")]
    pub renormalize: bool,
}

fn default_krylov_max() -> usize {
    30
}

fn default_krylov_tol() -> f64 {
    1e-10
}

fn default_true() -> bool {
    true
}

impl TdvpConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self {
            dt,
            t_max,
            krylov_max: default_krylov_max(),
            krylov_tol: default_krylov_tol(),
            renormalize: true,
        }
    }

    pub fn validate(&self) -> Result<(), TdvpError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TdvpError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(TdvpError::Config(format!("t_max must be >= 0, got {}", self.t_max)));
        }
        if self.t_max > 0.0 && self.dt > self.t_max {
            return Err(TdvpError::Config(format!(
                "dt = {} exceeds t_max = {}",
                self.dt, self.t_max
            )));
        }
        if self.krylov_max < 2 {
            return Err(TdvpError::Config("krylov_max must be at least 2".into()));
        }
        if !(self.krylov_tol > 0.0) {
            return Err(TdvpError::Config("krylov_tol must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_max`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Per-step solver statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub krylov_calls: usize,
    pub krylov_iterations: usize,
    pub max_error_estimate: f64,
}

/// Advances `state` by one time step `cfg.dt`. The state must be gauged at
/// the root and `cache` built for it.
pub fn tdvp_step(
    state: &mut TtnState,
    cache: &mut EnvironmentCache,
    schedule: &SweepSchedule,
    cfg: &TdvpConfig,
) -> Result<StepStats, TdvpError> {
    let root = state.topology().root();
    if state.center() != Some(root) {
        return Err(EnvError::NotCenter(root).into());
    }
    let mut stats = StepStats::default();
    let mut record = |r: &KrylovResult| {
        stats.krylov_calls += 1;
        stats.krylov_iterations += r.iterations;
        stats.max_error_estimate = stats.max_error_estimate.max(r.error_estimate);
    };
    for action in &schedule.actions {
        match *action {
            Action::Move { from, to } => {
                debug_assert_eq!(state.center(), Some(from));
                state.move_center(to)?;
                if state.topology().nodes[to].parent == Some(from) {
                    cache.invalidate_below(to);
                    cache.update_above(state, to)?;
                } else {
                    cache.update_below(state, from)?;
                    cache.invalidate_above(from);
                }
            }
            Action::EvolveNode { node, fraction } => {
                let tau = C64::new(fraction * cfg.dt, 0.0);
                let r = {
                    let op = cache.node_operator(state, node)?;
                    krylov_expm(
                        |x| Ok(op.apply(x)?),
                        state.tensor(node),
                        tau,
                        cfg.krylov_max,
                        cfg.krylov_tol,
                    )?
                };
                record(&r);
                state.set_tensor(node, r.vector)?;
            }
            Action::EvolveLink {
                link,
                from,
                to,
                fraction,
            } => {
                let upward = from == link;
                let mut m = state.split_toward(from, to)?;
                if upward {
                    cache.update_below(state, link)?;
                } else {
                    cache.update_above(state, link)?;
                }
                let tau = C64::new(-fraction * cfg.dt, 0.0);
                let r = {
                    let op = cache.link_operator(state, link)?;
                    krylov_expm(
                        |x| Ok(op.apply(x)?),
                        &m.matrix,
                        tau,
                        cfg.krylov_max,
                        cfg.krylov_tol,
                    )?
                };
                record(&r);
                m.matrix = r.vector;
                state.absorb(m)?;
                if upward {
                    cache.invalidate_above(link);
                } else {
                    cache.invalidate_below(link);
                }
            }
        }
    }
    if cfg.renormalize {
        state.normalize();
    }
    Ok(stats)
}

/// A state together with everything needed to step it.
pub struct Engine {
    state: TtnState,
    plan: Arc<CollapsePlan>,
    cache: EnvironmentCache,
    schedule: SweepSchedule,
    cfg: TdvpConfig,
    time: f64,
    steps: usize,
}

impl Engine {
    /// Gauges `state` to the root and builds the environment cache.
    pub fn new(
        mut state: TtnState,
        op: &LocalSumOperator,
        grouping: Grouping,
        cfg: TdvpConfig,
    ) -> Result<Self, TdvpError> {
        cfg.validate()?;
        let plan = Arc::new(collapse_branches(op, state.topology_arc().clone(), grouping)?);
        state.isometrize(state.topology().root())?;
        let cache = build_environments(&state, plan.clone())?;
        let schedule = make_schedule(state.topology());
        Ok(Self {
            state,
            plan,
            cache,
            schedule,
            cfg,
            time: 0.0,
            steps: 0,
        })
    }

    pub fn step(&mut self) -> Result<StepStats, TdvpError> {
        let stats = tdvp_step(&mut self.state, &mut self.cache, &self.schedule, &self.cfg)?;
        self.steps += 1;
        self.time = self.steps as f64 * self.cfg.dt;
        Ok(stats)
    }

    pub fn state(&self) -> &TtnState {
        &self.state
    }

    pub fn into_state(self) -> TtnState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &TdvpConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &Arc<CollapsePlan> {
        &self.plan
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` from the cached environments.
    pub fn energy(&self) -> Result<f64, TdvpError> {
        let e = self.cache.expectation(&self.state)?;
        Ok(e.re / self.state.norm_sqr())
    }
}

/// Failure inside [`evolve`], carrying the last state that completed a step.
#[derive(Debug, Error)]
#[error("step {step} (t = {time}) failed: {source}")]
pub struct EvolveError {
    pub step: usize,
    pub time: f64,
    pub last_good: Box<TtnState>,
    #[source]
    pub source: TdvpError,
}

/// Runs `engine` to `t_max`, calling `observe(time, state)` at `t = 0` and
/// after every `stride` steps (and after the final step).
pub fn evolve<F>(engine: &mut Engine, stride: usize, mut observe: F) -> Result<(), EvolveError>
where
    F: FnMut(f64, &TtnState) -> Result<(), TdvpError>,
{
    let stride = stride.max(1);
    let n = engine.cfg.n_steps();
    let wrap = |engine: &Engine, last: TtnState, source: TdvpError| EvolveError {
        step: engine.steps,
        time: engine.time,
        last_good: Box::new(last),
        source,
    };
    if let Err(e) = observe(engine.time, &engine.state) {
        return Err(wrap(engine, engine.state.clone(), e));
    }
    for k in 1..=n {
        let backup = engine.state.clone();
        if let Err(e) = engine.step() {
            return Err(wrap(engine, backup, e));
        }
        if k % stride == 0 || k == n {
            if let Err(e) = observe(engine.time, &engine.state) {
                return Err(wrap(engine, engine.state.clone(), e));
            }
        }
    }
    Ok(())
}
