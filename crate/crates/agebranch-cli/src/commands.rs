use agebranch::dist::OffspringLaw;
use agebranch::fpe::{explosion_verdict, iterate_phi, survival_probability, FpeError, PhiTable, ProcessSpec, SurvivalReport, Verdict};
use agebranch::minsum::{alpha_invariance_scan, default_m0, growth_sequence, minsum_monte_carlo, minsum_series, AlphaScan, GrowthSequence, MinSumReport};
use agebranch::sim::{domination_test, empirical_explosion_time, partner_seed, DominationReport, EmpiricalDistribution};
use agebranch::Exec;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::write;
use crate::{CliError, Exit, Outcome};

/// Starting value for laws that fail the plumpness check; their verdict is
/// Inconclusive regardless.
const FALLBACK_M0: u64 = 2;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveSummary {
    pub verdict: Verdict,
    pub explosion_mass: f64,
    pub iterations_used: usize,
    pub sup_residual: f64,
    pub converged: bool,
}

#[derive(Serialize)]
struct SolveResult<'a> {
    #[serde(flatten)]
    summary: SolveSummary,
    table: &'a PhiTable,
}

/// Solves the fixed-point equation on the configured grid. A table that did not
/// converge is still written, with exit code 2.
pub fn cmd_solve(config: &RunConfig) -> Result<Outcome, CliError> {
    let opts = config.solver_options();
    let (table, exit) = match iterate_phi(&config.process, config.time_grid(), &opts) {
        Ok(t) => (t, Exit::Success),
        Err(FpeError::NotConverged { table }) => (*table, Exit::NotConverged),
        Err(e) => return Err(CliError::Run(e.to_string())),
    };
    let summary = SolveSummary {
        verdict: explosion_verdict(&table, opts.threshold, opts.tol),
        explosion_mass: table.explosion_mass(),
        iterations_used: table.iterations_used,
        sup_residual: table.sup_residual,
        converged: table.converged,
    };
    write(config, "solve", SolveResult { summary, table: &table }, summary, || table.to_csv())?;
    let line = format!(
        "solve: {:?}, 1 - phi(T) = {:.6e} after {} iterations (residual {:.3e})",
        summary.verdict, summary.explosion_mass, summary.iterations_used, summary.sup_residual
    );
    Ok(Outcome { exit, summary: line })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinsumResult {
    pub verdict: Verdict,
    pub growth: GrowthSequence,
    pub series: MinSumReport,
    pub monte_carlo: Option<MinSumReport>,
    pub alpha_scan: Option<AlphaScan>,
}

/// Min-summability classification of a classical spec. Exit code 3 flags verdicts
/// that change with the heavy-tail exponent.
pub fn cmd_minsum(config: &RunConfig) -> Result<Outcome, CliError> {
    let ProcessSpec::Classical { offspring: h, lifetime: g } = &config.process else {
        return Err(CliError::Config(format!("process: minsum classifies classical specs, got {}", config.process.name())));
    };
    let ms = &config.minsum;
    let run = |e: agebranch::minsum::MinSumError| CliError::Run(e.to_string());
    let m0 = ms.m0_override.or_else(|| default_m0(h)).unwrap_or(FALLBACK_M0);
    let growth = growth_sequence(h, m0, ms.n).map_err(run)?;
    let series = minsum_series(h, g, &growth);
    let monte_carlo = if ms.mc_trials > 0 {
        let &OffspringLaw::HeavyTailAlpha { alpha } = h else {
            return Err(CliError::Config("minsum.mc_trials: the Monte Carlo estimator needs a heavy_tail_alpha offspring law".into()));
        };
        Some(minsum_monte_carlo(alpha, g, ms.mc_terms, ms.mc_trials, config.sim.master_seed, Exec::default()).map_err(run)?)
    } else {
        None
    };
    let alpha_scan = if ms.alphas.is_empty() { None } else { Some(alpha_invariance_scan(g, &ms.alphas, ms.n).map_err(run)?) };
    let exit = if alpha_scan.as_ref().is_some_and(|s| s.violation) { Exit::Violation } else { Exit::Success };

    let result = MinsumResult { verdict: series.verdict, growth, series, monte_carlo, alpha_scan };
    let mut line = format!("minsum: {:?} by {:?}", result.verdict, result.series.method);
    if let Some(mc) = &result.monte_carlo {
        line.push_str(&format!(", Monte Carlo {:?}", mc.verdict));
    }
    if let Some(s) = &result.alpha_scan {
        line.push_str(&format!(", alpha scan {:?}", s.verdicts));
    }
    let csv = || {
        let mut out = String::from("n,log_f,term,partial_sum\n");
        for (i, ((l, t), s)) in result.growth.log_values.iter().zip(&result.series.terms).zip(&result.series.partial_sums).enumerate() {
            out.push_str(&format!("{i},{l:.17e},{t:.17e},{s:.17e}\n"));
        }
        out
    };
    write(config, "minsum", &result, MinsumSummary::from(&result), csv)?;
    Ok(Outcome { exit, summary: line })
}

#[derive(Serialize)]
struct MinsumSummary<'a> {
    verdict: Verdict,
    method: agebranch::minsum::Method,
    monte_carlo: Option<Verdict>,
    alpha_scan: Option<&'a AlphaScan>,
}

impl<'a> From<&'a MinsumResult> for MinsumSummary<'a> {
    fn from(r: &'a MinsumResult) -> Self {
        MinsumSummary { verdict: r.verdict, method: r.series.method, monte_carlo: r.monte_carlo.as_ref().map(|m| m.verdict), alpha_scan: r.alpha_scan.as_ref() }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleSummary {
    pub trials: usize,
    pub exploded: usize,
    pub censored: usize,
    /// Median over all trials; null when most trials are censored.
    pub median: f64,
}

impl From<&EmpiricalDistribution> for SampleSummary {
    fn from(d: &EmpiricalDistribution) -> Self {
        SampleSummary { trials: d.trials(), exploded: d.sample.len(), censored: d.censored, median: d.median() }
    }
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    #[serde(flatten)]
    summary: SampleSummary,
    distribution: &'a EmpiricalDistribution,
}

fn sample(config: &RunConfig, spec: &ProcessSpec, seed: u64) -> Result<EmpiricalDistribution, CliError> {
    empirical_explosion_time(&config.sim_config(spec.clone(), seed), Exec::default()).map_err(|e| CliError::Run(e.to_string()))
}

/// Proxy explosion times of the configured spec.
pub fn cmd_simulate(config: &RunConfig) -> Result<Outcome, CliError> {
    let dist = sample(config, &config.process, config.sim.master_seed)?;
    let summary = SampleSummary::from(&dist);
    write(config, "simulate", SimulateResult { summary, distribution: &dist }, summary, || dist.to_csv())?;
    let line = format!("simulate: {} of {} trials reached the cap, median proxy time {:.6e}", summary.exploded, summary.trials, summary.median);
    Ok(Outcome { exit: Exit::Success, summary: line })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompareSummary {
    pub domination: DominationReport,
    pub forward_seed: u64,
    pub backward_seed: u64,
    pub forward: SampleSummary,
    pub backward: SampleSummary,
}

#[derive(Serialize)]
struct CompareResult<'a> {
    #[serde(flatten)]
    summary: CompareSummary,
    forward_distribution: &'a EmpiricalDistribution,
    backward_distribution: &'a EmpiricalDistribution,
}

/// Tests that the backward process explodes no later than its forward partner.
/// Exit code 3 when the one-sided test rejects that ordering.
pub fn cmd_compare(config: &RunConfig) -> Result<Outcome, CliError> {
    let partner = config
        .process
        .partner()
        .ok_or_else(|| CliError::Config(format!("process: compare needs a forward or backward spec, got {}", config.process.name())))?;
    let (fwd, bwd) = if config.process.is_backward() { (partner, config.process.clone()) } else { (config.process.clone(), partner) };
    let forward_seed = config.sim.master_seed;
    let backward_seed = partner_seed(forward_seed);
    let fd = sample(config, &fwd, forward_seed)?;
    let bd = sample(config, &bwd, backward_seed)?;
    let domination = domination_test(&bd, &fd, config.sim.level).map_err(|e| CliError::Run(e.to_string()))?;
    let summary = CompareSummary { domination, forward_seed, backward_seed, forward: (&fd).into(), backward: (&bd).into() };
    let csv = || {
        let mut out = String::from("side,proxy_time,censored\n");
        for (side, d) in [("forward", &fd), ("backward", &bd)] {
            for line in d.to_csv().lines().skip(1) {
                out.push_str(&format!("{side},{line}\n"));
            }
        }
        out
    };
    write(config, "compare", CompareResult { summary, forward_distribution: &fd, backward_distribution: &bd }, summary, csv)?;
    let exit = if domination.violated { Exit::Violation } else { Exit::Success };
    let line = format!(
        "compare: sup gap {:.4} vs critical {:.4} at level {}, {}",
        domination.max_gap,
        domination.critical_value,
        config.sim.level,
        if domination.violated { "ordering violated" } else { "no violation" }
    );
    Ok(Outcome { exit, summary: line })
}

/// Probability of never dying out.
pub fn cmd_survival(config: &RunConfig) -> Result<Outcome, CliError> {
    let r: SurvivalReport = survival_probability(&config.process, &config.open_quadrature()).map_err(|e| CliError::Run(e.to_string()))?;
    let csv = || format!("eta_infinity,extinction_q\n{:.17e},{:.17e}\n", r.eta_infinity, r.extinction_q);
    write(config, "survival", r, r, csv)?;
    Ok(Outcome { exit: Exit::Success, summary: format!("survival: eta_infinity = {:.12}", r.eta_infinity) })
}
