//! Event-driven simulation of the branching processes, explosion-time proxies,
//! one-sided domination tests, the generation-growth diagnostic and the
//! exploding-path search for forward incubation processes.
//!
//! Explosion itself cannot be observed; a trial counts as exploded when it reaches
//! `cap` births before `horizon`, and the time of the cap-th birth stands in for
//! the explosion time.

mod davies;
mod engine;
mod path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, QuadratureOptions};
use crate::fpe::{FpeError, ProcessSpec};
use crate::stats;
use crate::Exec;

pub use davies::{davies_growth_diagnostic, GrowthDiagnostic, DAVIES_SUBSAMPLE};
pub use engine::{simulate_backward, simulate_forward, simulate_traced, Simulator};
pub use path::{exploding_path_search, minimal_path_m, PathSearchResult};

pub const DEFAULT_CAP: u64 = 100_000;
pub const DEFAULT_LEVEL: f64 = 0.01;
/// Pending births may not exceed this multiple of the cap.
pub const PENDING_FACTOR: u64 = 8;
pub const MIN_EFFECTIVE_SAMPLE: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("{pending} pending births exceed {PENDING_FACTOR} x cap = {limit}")]
    CapMemoryExceeded { pending: usize, limit: u64 },
    #[error("only {got} uncensored samples, need at least {MIN_EFFECTIVE_SAMPLE}")]
    SampleTooSmall { got: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Fpe(#[from] FpeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub spec: ProcessSpec,
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub cap: u64,
    pub trials: usize,
    pub master_seed: u64,
    /// Grid for the thinned lifetime law of backward specs.
    #[serde(default)]
    pub quadrature: QuadratureOptions,
}

fn default_cap() -> u64 {
    DEFAULT_CAP
}

impl SimConfig {
    pub fn new(spec: ProcessSpec, horizon: f64, cap: u64, trials: usize, master_seed: u64) -> Self {
        SimConfig { spec, horizon, cap, trials, master_seed, quadrature: QuadratureOptions::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0) {
            return Err(SimError::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.cap < 1 || self.trials < 1 {
            return Err(SimError::InvalidConfig("cap and trials must be at least 1".into()));
        }
        self.spec.validate()?;
        Ok(())
    }
}

/// One processed birth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub birth_time: f64,
    pub offspring_count: u64,
    /// Contagious or incubation period; absent for classical and backward specs.
    pub period: Option<f64>,
    pub generation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub exploded_proxy: bool,
    /// Time of the cap-th birth, or +inf.
    pub proxy_time: f64,
    pub births: u64,
    /// Births per generation, starting with the root.
    pub generation_sizes: Vec<u64>,
    /// Potential children of all processed nodes.
    pub candidate_children: f64,
    /// Potential children the variant's rule admits, before the horizon cut.
    pub admitted_children: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// Finite proxy times, sorted.
    pub sample: Vec<f64>,
    /// Trials that never reached the cap.
    pub censored: usize,
}

impl EmpiricalDistribution {
    pub fn from_times(times: impl IntoIterator<Item = f64>) -> Self {
        let (finite, inf): (Vec<f64>, Vec<f64>) = times.into_iter().partition(|t| t.is_finite());
        EmpiricalDistribution { sample: stats::sorted(finite), censored: inf.len() }
    }

    pub fn trials(&self) -> usize {
        self.sample.len() + self.censored
    }

    /// The sample with censored trials as +inf.
    pub fn with_censored(&self) -> Vec<f64> {
        let mut v = self.sample.clone();
        v.extend(std::iter::repeat_n(f64::INFINITY, self.censored));
        v
    }

    pub fn median(&self) -> f64 {
        let all = self.with_censored();
        all[all.len() / 2]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("proxy_time,censored\n");
        for t in &self.sample {
            out.push_str(&format!("{t:.17e},0\n"));
        }
        for _ in 0..self.censored {
            out.push_str("inf,1\n");
        }
        out
    }
}

/// Proxy explosion times over `config.trials` independent trials.
pub fn empirical_explosion_time(config: &SimConfig, exec: Exec) -> Result<EmpiricalDistribution, SimError> {
    let sim = Simulator::new(config)?;
    let outcomes: Result<Vec<_>, _> = exec.map(config.trials, |i| sim.run(i as u64)).into_iter().collect();
    Ok(EmpiricalDistribution::from_times(outcomes?.into_iter().map(|o| o.proxy_time)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub violated: bool,
    /// sup_t (F_upper(t) - F_lower(t)).
    pub max_gap: f64,
    pub critical_value: f64,
}

/// One-sided KS test of `lower` being stochastically smaller than `upper`.
pub fn domination_test(lower: &EmpiricalDistribution, upper: &EmpiricalDistribution, level: f64) -> Result<DominationReport, SimError> {
    let got = lower.sample.len().min(upper.sample.len());
    if got < MIN_EFFECTIVE_SAMPLE {
        return Err(SimError::SampleTooSmall { got });
    }
    let max_gap = stats::sup_ecdf_gap(&upper.with_censored(), &lower.with_censored()).max(0.0);
    let critical_value = stats::ks_critical_one_sided(level, lower.trials(), upper.trials());
    Ok(DominationReport { violated: max_gap > critical_value, max_gap, critical_value })
}

/// Seed offset that keeps the second side of a comparison independent of the first.
pub fn partner_seed(master_seed: u64) -> u64 {
    master_seed ^ 0x9E37_79B9_7F4A_7C15
}
