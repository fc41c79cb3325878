//! Output documents. JSON reports all carry `schema_version`; CSV files
//! start with a `# schema_version=1` comment line.

use serde::Serialize;
use std::io::Write;
use std::path::Path;

use gridge::causal::{CausalDiagnostics, IpwEstimate, IpwQuantile};
use gridge::estimator::FitResult;
use gridge::mclab::{MetricsReport, StudyOutput};
use gridge::tuner::RiskCurve;

use crate::config::SCHEMA_VERSION;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct CoordinateReport {
    pub index: usize,
    pub label: String,
    pub estimate: f64,
}

#[derive(Debug, Serialize)]
pub struct FitBlock {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub objective_value: f64,
    pub suspect_separation: bool,
    pub max_abs_estimate: f64,
    pub coordinates: Vec<CoordinateReport>,
}

impl FitBlock {
    pub fn from_fit(fit: &FitResult) -> Self {
        let labels = fit.theta_hat.layout.labels();
        let coordinates = fit
            .theta_hat
            .values
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(index, (estimate, label))| CoordinateReport {
                index,
                label: label.to_string(),
                estimate: *estimate,
            })
            .collect();
        FitBlock {
            converged: fit.converged,
            iterations: fit.iterations,
            final_gradient_norm: fit.final_gradient_norm,
            objective_value: fit.objective_value,
            suspect_separation: fit.suspect_separation,
            max_abs_estimate: fit.theta_hat.max_abs(),
            coordinates,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub family: String,
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub weighting: String,
    pub fit: FitBlock,
}

#[derive(Debug, Serialize)]
pub struct TuneReport {
    pub schema_version: u32,
    pub family: String,
    pub selector: String,
    pub weighting: String,
    pub n: usize,
    pub p: usize,
    pub lambda_hat: f64,
    pub selected_index: usize,
    pub unconverged_fits: usize,
    pub suspect_separation: bool,
    pub grid: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub refit: FitBlock,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub n: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub theta0: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub achieved_probs: Vec<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
pub struct CausalReport {
    pub schema_version: u32,
    pub n: usize,
    pub groups: usize,
    pub selected_lambda: Option<f64>,
    pub diagnostics: CausalDiagnostics,
    pub means: Vec<IpwEstimate>,
    pub quantiles: Vec<IpwQuantile>,
}

#[derive(Debug, Serialize)]
pub struct RiskPoint {
    pub lambda: f64,
    pub trace_risk: f64,
    pub variance_trace: f64,
    pub bias_sq_trace: f64,
}

#[derive(Debug, Serialize)]
pub struct ThresholdReport {
    /// Whether the curvature-root weighting check applies to this run.
    pub applies: bool,
    pub improves_for_all: Option<bool>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RiskReport {
    pub schema_version: u32,
    pub family: String,
    pub weighting: String,
    pub n: usize,
    pub p: usize,
    /// None means the bound is unbounded (the hypothesis matches the
    /// estimate on every penalized coordinate).
    pub improvement_bound: Option<f64>,
    pub improvement_unbounded: bool,
    pub always_improves: ThresholdReport,
    pub points: Vec<RiskPoint>,
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn emit_json<T: Serialize>(path: Option<&Path>, report: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_output(path, &text)
}

pub fn write_curve_csv(path: &Path, curve: &RiskCurve) -> Result<(), CliError> {
    let mut text = format!("# schema_version={SCHEMA_VERSION}\n");
    text.push_str("lambda,r_hat,selected\n");
    for (i, (lambda, r1)) in curve.grid.iter().zip(&curve.r_hat).enumerate() {
        let selected = if i == curve.selected_index { 1 } else { 0 };
        text.push_str(&format!("{lambda},{r1},{selected}\n"));
    }
    write_output(Some(path), &text)
}

pub fn write_records_csv(path: &Path, output: &StudyOutput) -> Result<(), CliError> {
    let mut text = format!("# schema_version={SCHEMA_VERSION}\n");
    text.push_str(
        "replication,seed,config,selected_lambda,converged,suspect_separation,\
         max_abs_slope_estimate,max_abs_slope_error,slope_sq_error,prediction_loss,\
         hessian_condition\n",
    );
    for rec in &output.records {
        for est in &rec.estimates {
            let lambda = est
                .selected_lambda
                .map(|l| l.to_string())
                .unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                rec.replication,
                rec.seed,
                est.config_name,
                lambda,
                est.converged,
                est.suspect_separation,
                est.max_abs_slope_estimate,
                est.max_abs_slope_error,
                est.slope_sq_error,
                est.prediction_loss,
                rec.hessian_condition,
            ));
        }
    }
    write_output(Some(path), &text)
}

/// Histogram of the assigned-group propensities on a log10 scale, one row
/// per unit-width bin. Bins with zero count are kept so the file always
/// spans the observed range.
pub fn write_propensity_histogram(path: &Path, assigned: &[f64]) -> Result<(), CliError> {
    if assigned.is_empty() {
        return Err(CliError::Config("no propensities to summarize".into()));
    }
    let bin_of = |p: f64| -> i32 {
        // Guard against log of zero; probabilities this small are pinned
        // to the lowest representable bin.
        let clamped = p.max(1e-300);
        let mut b = clamped.log10().floor() as i32;
        if b > -1 {
            b = -1;
        }
        b
    };
    let bins: Vec<i32> = assigned.iter().map(|&p| bin_of(p)).collect();
    let lo = *bins.iter().min().unwrap();
    let hi = *bins.iter().max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    let mut text = format!("# schema_version={SCHEMA_VERSION}\n");
    text.push_str("log10_lower,log10_upper,count\n");
    for (offset, count) in counts.iter().enumerate() {
        let low = lo + offset as i32;
        text.push_str(&format!("{},{},{}\n", low, low + 1, count));
    }
    write_output(Some(path), &text)
}
