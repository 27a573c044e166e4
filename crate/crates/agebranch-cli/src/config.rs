use std::path::{Path, PathBuf};

use agebranch::dist::QuadratureOptions;
use agebranch::fpe::{ProcessSpec, SolverOptions, TimeGrid, DEFAULT_MAX_ITERS, DEFAULT_THRESHOLD, DEFAULT_TOL};
use agebranch::minsum::{DEFAULT_MC_TERMS, DEFAULT_SERIES_TERMS};
use agebranch::sim::{SimConfig, DEFAULT_CAP, DEFAULT_LEVEL};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One run, read from a JSON file. Every section but `process` may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub minsum: MinsumSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { dt: 1e-3, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    pub threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub trials: usize,
    pub cap: u64,
    pub master_seed: u64,
    /// Simulated time window; trials that miss the cap by then are censored.
    pub horizon: f64,
    /// Significance level of the domination test.
    pub level: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { trials: 1000, cap: DEFAULT_CAP, master_seed: 0, horizon: 10.0, level: DEFAULT_LEVEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinsumSection {
    pub n: usize,
    pub m0_override: Option<u64>,
    /// Heavy-tail exponents for the invariance scan; empty skips it.
    pub alphas: Vec<f64>,
    /// Monte Carlo trials; zero skips the estimator.
    pub mc_trials: usize,
    pub mc_terms: usize,
}

impl Default for MinsumSection {
    fn default() -> Self {
        MinsumSection { n: DEFAULT_SERIES_TERMS, m0_override: None, alphas: Vec::new(), mc_trials: 0, mc_terms: DEFAULT_MC_TERMS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field} must be positive and finite, got {v}")))
    }
}

fn unit_open(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field} must lie in (0, 1), got {v}")))
    }
}

fn at_least_one(field: &str, v: u64) -> Result<(), CliError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field} must be at least 1")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("field `{path}`: {inner}"))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.out {
            self.output.path = Some(p.clone());
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if let Some(s) = o.seed {
            self.sim.master_seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.process.validate().map_err(|e| CliError::Config(format!("process: {e}")))?;
        positive("grid.dt", self.grid.dt)?;
        positive("grid.horizon", self.grid.horizon)?;
        if self.grid.dt > self.grid.horizon {
            return Err(CliError::Config(format!("grid.dt = {} exceeds grid.horizon = {}", self.grid.dt, self.grid.horizon)));
        }
        positive("solver.tol", self.solver.tol)?;
        at_least_one("solver.max_iters", self.solver.max_iters as u64)?;
        unit_open("solver.threshold", self.solver.threshold)?;
        at_least_one("sim.trials", self.sim.trials as u64)?;
        at_least_one("sim.cap", self.sim.cap)?;
        positive("sim.horizon", self.sim.horizon)?;
        unit_open("sim.level", self.sim.level)?;
        at_least_one("minsum.n", self.minsum.n as u64)?;
        if let Some(m0) = self.minsum.m0_override {
            at_least_one("minsum.m0_override", m0)?;
        }
        for &a in &self.minsum.alphas {
            unit_open("minsum.alphas", a)?;
        }
        if self.minsum.mc_trials > 0 && self.minsum.mc_terms < 2 {
            return Err(CliError::Config("minsum.mc_terms must be at least 2".into()));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.dt, self.grid.horizon).expect("validated grid")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.solver.tol, max_iters: self.solver.max_iters, threshold: self.solver.threshold, ..SolverOptions::default() }
    }

    /// Quadrature for quantities over all time: the grid step, the law's own reach.
    pub fn open_quadrature(&self) -> QuadratureOptions {
        QuadratureOptions { dt: self.grid.dt, horizon: None }
    }

    pub fn sim_config(&self, spec: ProcessSpec, master_seed: u64) -> SimConfig {
        SimConfig {
            spec,
            horizon: self.sim.horizon,
            cap: self.sim.cap,
            trials: self.sim.trials,
            master_seed,
            quadrature: QuadratureOptions { dt: self.grid.dt, horizon: None },
        }
    }
}
