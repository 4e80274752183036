use std::sync::Arc;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{Check, ExperimentReport};
use super::HarnessError;
use crate::cascade::CascadeRealization;
use crate::dimension::quantum_dimension;
use crate::kpz::{solve_zeta, DEFAULT_SOLVE_TOL};
use crate::stats::{median, Summary};

/// Largest tolerated share of realizations without a partition root.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;
/// Stochastic identities pass within this many standard errors.
pub const STDERR_GATE: f64 = 4.0;
pub const ATOM_LEVELS: [u32; 4] = [4, 8, 12, 16];
pub const NEG_MOMENT_LEVELS: [u32; 3] = [4, 8, 12];
pub const NEG_MOMENT_MAX_RATIO: f64 = 4.0;
pub const RECURSION_LEVELS: [u32; 3] = [1, 4, 8];
pub const RECURSION_TOL: f64 = 1e-11;

/// One realization per seed, in seed order.
pub fn realizations(config: &ExperimentConfig) -> Vec<CascadeRealization<f64>> {
    let model = Arc::new(config.model.clone());
    config
        .seeds
        .iter()
        .map(|&seed| CascadeRealization::shared(model.clone(), seed).with_max_level(config.max_level))
        .collect()
}

fn per_replicate<F>(reals: &[CascadeRealization<f64>], f: F) -> Result<Vec<f64>, HarnessError>
where
    F: Fn(&CascadeRealization<f64>) -> Result<f64, crate::cascade::CascadeError> + Sync,
{
    reals.par_iter().map(|r| f(r).map_err(HarnessError::from)).collect()
}

fn require_valid(config: &ExperimentConfig) -> Result<(), HarnessError> {
    let report = config.model.validate();
    if report.is_valid() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("weight model rejected: {}", report.messages.join("; "))))
    }
}

/// Partition-exponent estimate of the quantum dimension against the root of `φ(ζ) = ζ₀`.
pub fn run_kpz_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    require_valid(config)?;
    let mut report = ExperimentReport::new("kpz_experiment", config);
    let zeta0 = config.set.zeta0::<f64>();
    let predicted = solve_zeta(&config.model, zeta0, DEFAULT_SOLVE_TOL)?;
    let reals = realizations(config);
    let estimate = quantum_dimension(&reals, &config.set, config.n_min, config.n_max, config.tol, config.aggregation)?;

    let total = reals.len() as f64;
    let failure_fraction = estimate.failures as f64 / total;
    if failure_fraction > MAX_FAILURE_FRACTION {
        return Err(HarnessError::TooManyFailures { failures: estimate.failures, total: reals.len() });
    }
    if estimate.failures > 0 {
        report.warnings.push(format!("{} of {} realizations had no partition root", estimate.failures, reals.len()));
    }

    let gap = (estimate.value - predicted.zeta).abs();
    let z_score = if gap == 0.0 { 0.0 } else { gap / estimate.stderr };
    let count = estimate.realizations;
    let half = estimate.stderr * crate::stats::Z95;
    report.quantity(
        "quantum_dimension",
        Summary {
            count,
            mean: estimate.value,
            stderr: estimate.stderr,
            ci95_lo: estimate.value - half,
            ci95_hi: estimate.value + half,
        },
    );
    report.value("zeta0", zeta0);
    report.value("predicted_zeta", predicted.zeta);
    report.value("solve_residual", predicted.residual);
    report.value("gap", gap);
    report.value("z_score", z_score);
    report.value("fit_r2", estimate.fit_r2);
    report.value("failure_fraction", failure_fraction);
    report.value("n_min", config.n_min as f64);
    report.value("n_max", config.n_max as f64);
    report.checks.push(Check::at_most("gap", gap, config.gap_tol, "|estimate - predicted| <= gap_tol"));
    report.checks.push(Check::at_most(
        "failure_fraction",
        failure_fraction,
        MAX_FAILURE_FRACTION,
        "share of realizations without a root <= 0.2",
    ));
    Ok(report)
}

/// Replicate mean of `ℓₙ` at `n = nmax` against its expectation 1.
pub fn diag_mean_ell(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("mean_ell", config);
    let n = config.n_max;
    let reals = realizations(config);
    let ells = per_replicate(&reals, |r| r.ell_n(n))?;
    let s = Summary::of(&ells);
    let deviation = (s.mean - 1.0).abs();
    report.quantity(format!("ell_{n}"), s);
    report.checks.push(Check::at_most(
        "mean_ell_is_one",
        deviation,
        STDERR_GATE * s.stderr,
        "|mean - 1| <= 4 stderr",
    ));
    Ok(report)
}

/// Median largest cell mass at levels 4, 8, 12, 16 (those within `max_level`).
pub fn diag_atoms(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("atoms", config);
    let reals = realizations(config);
    if reals.len() == 1 {
        report.warnings.push("single replicate: medians are single values".into());
    }
    let mut medians = Vec::new();
    for &n in ATOM_LEVELS.iter().filter(|&&n| n <= config.max_level) {
        let atoms = per_replicate(&reals, |r| r.max_atom(n))?;
        let m = median(&atoms);
        report.quantity(format!("max_atom_{n}"), Summary::of(&atoms));
        report.value(format!("median_max_atom_{n}"), m);
        medians.push(m);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let worst = medians.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    report.checks.push(Check::flag(
        "median_strictly_decreasing",
        decreasing && medians.len() >= 2,
        worst,
        1.0,
        "median max-cell mass strictly decreasing in level",
    ));
    Ok(report)
}

/// Replicate mean of `ℓₙ^{−r}` at levels 4, 8, 12.
pub fn diag_neg_moments(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("neg_moments", config);
    let r = config.r;
    let weight_moment = config.model.neg_moment(r);
    report.value("r", r);
    report.value("neg_weight_moment", weight_moment);
    if !weight_moment.is_finite() {
        report.warnings.push(format!("E[W^-{r}] is infinite; boundedness is not expected"));
    }
    let reals = realizations(config);
    let mut means = Vec::new();
    for &n in NEG_MOMENT_LEVELS.iter().filter(|&&n| n <= config.max_level) {
        let xs = per_replicate(&reals, |c| c.ell_n(n).map(|l| l.powf(-r)))?;
        let s = Summary::of(&xs);
        means.push(s.mean);
        report.quantity(format!("ell_{n}_neg_r"), s);
    }
    let (lo, hi) = means.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    let ratio = hi / lo;
    report.value("ratio", ratio);
    report.checks.push(Check::flag(
        "bounded_ratio",
        ratio.is_finite() && ratio <= NEG_MOMENT_MAX_RATIO,
        ratio,
        NEG_MOMENT_MAX_RATIO,
        "max/min of the level means <= 4",
    ));
    Ok(report)
}

/// Worst relative violation of `ℓ = W(ℓ₁ + ℓ₂)/2` at levels 1, 4, 8.
pub fn diag_recursion(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("recursion", config);
    let reals = realizations(config);
    let mut worst: f64 = 0.0;
    for &n in RECURSION_LEVELS.iter().filter(|&&n| n <= config.max_level) {
        let errs = per_replicate(&reals, |r| r.recursion_check(n))?;
        let m = errs.iter().copied().fold(0.0, f64::max);
        report.value(format!("max_relative_error_{n}"), m);
        worst = worst.max(m);
    }
    report.checks.push(Check::at_most("recursion", worst, RECURSION_TOL, "max relative error <= 1e-11"));
    Ok(report)
}

/// All four diagnostics in one report.
pub fn run_diagnostics(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let mut report = ExperimentReport::new("diagnostics", config);
    report.absorb(diag_mean_ell(config)?);
    report.absorb(diag_atoms(config)?);
    report.absorb(diag_neg_moments(config)?);
    report.absorb(diag_recursion(config)?);
    Ok(report)
}
