//! Inverse probability weighting for multi-valued treatments, with
//! penalized propensity estimation.
//!
//! Rare treatment groups make plain maximum-likelihood propensity models
//! fragile: near-separated fits push some probabilities to zero and the
//! corresponding weights explode. The estimators here accept any of the
//! penalty selectors, floor the fitted probabilities before weighting,
//! and report diagnostics so the flooring and the fit quality are
//! visible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, FitResult};
use crate::family::Family;
use crate::penalty::{build_template, Weighting};
use crate::tuner::{
    build_grid, lambda_max, refit_at, select_cv, select_sure, RiskCurve, SelectorSpec, SureInputs,
};

/// Outcome, treatment group, and covariates for a weighting analysis.
#[derive(Debug, Clone)]
pub struct CausalDataset {
    outcome: DVector<f64>,
    propensity: Dataset,
}

impl CausalDataset {
    /// Treatments must be integer labels 1..=G with every group observed
    /// at least once.
    pub fn new(
        outcome: DVector<f64>,
        treatment: DVector<f64>,
        covariates: DMatrix<f64>,
        expected_groups: Option<usize>,
    ) -> Result<Self> {
        if outcome.len() != treatment.len() {
            return Err(Error::data("outcome and treatment lengths differ"));
        }
        if let Some(bad) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "outcome at row {} is not finite",
                bad + 1
            )));
        }
        let mut observed_max = 0usize;
        for (i, t) in treatment.iter().enumerate() {
            if !t.is_finite() || t.fract() != 0.0 || *t < 1.0 {
                return Err(Error::data(format!(
                    "treatment at row {} must be an integer label starting at 1, got {t}",
                    i + 1
                )));
            }
            observed_max = observed_max.max(*t as usize);
        }
        let groups = match expected_groups {
            Some(g) => {
                if observed_max > g {
                    return Err(Error::data(format!(
                        "treatment label {observed_max} exceeds the declared {g} groups"
                    )));
                }
                g
            }
            None => observed_max,
        };
        if groups < 2 {
            return Err(Error::data("need at least two treatment groups"));
        }
        let propensity = Dataset::categorical(treatment, covariates, groups)?;
        for g in 1..=groups {
            if !(0..propensity.n()).any(|i| propensity.category(i) == g) {
                return Err(Error::data(format!(
                    "treatment group {g} has no observations"
                )));
            }
        }
        Ok(CausalDataset {
            outcome,
            propensity,
        })
    }

    /// Reads a CSV with header columns `y` (outcome), `t` (treatment
    /// group), and any number of covariate columns.
    pub fn from_csv<P: AsRef<Path>>(path: P, expected_groups: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())
            .map_err(|e| Error::data(format!("cannot open CSV: {e}")))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::data(format!("cannot read CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let y_col = headers.iter().position(|h| h == "y");
        let t_col = headers.iter().position(|h| h == "t");
        let (y_col, t_col) = match (y_col, t_col) {
            (Some(y), Some(t)) => (y, t),
            _ => return Err(Error::data("CSV must contain both a 'y' and a 't' column")),
        };
        let cov_cols: Vec<usize> = (0..headers.len())
            .filter(|&c| c != y_col && c != t_col)
            .collect();

        let mut y = Vec::new();
        let mut t = Vec::new();
        let mut x = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::data(format!("row {}: {e}", idx + 2)))?;
            let parse = |col: usize| -> Result<f64> {
                record
                    .get(col)
                    .ok_or_else(|| {
                        Error::data(format!(
                            "row {}, column '{}' is missing",
                            idx + 2,
                            headers[col]
                        ))
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| {
                        Error::data(format!(
                            "row {}, column '{}': cannot parse '{}' as a number",
                            idx + 2,
                            headers[col],
                            record.get(col).unwrap_or("")
                        ))
                    })
            };
            y.push(parse(y_col)?);
            t.push(parse(t_col)?);
            for &c in &cov_cols {
                x.push(parse(c)?);
            }
        }
        if y.is_empty() {
            return Err(Error::data("CSV contains no data rows"));
        }
        let n = y.len();
        let covariates = DMatrix::from_row_slice(n, cov_cols.len(), &x);
        CausalDataset::new(
            DVector::from_vec(y),
            DVector::from_vec(t),
            covariates,
            expected_groups,
        )
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn groups(&self) -> usize {
        self.propensity.category_count()
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcome[i]
    }

    pub fn group(&self, i: usize) -> usize {
        self.propensity.category(i)
    }

    pub fn group_rows(&self, group: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.group(i) == group).collect()
    }

    /// The treatment-on-covariates sample the propensity model fits.
    pub fn propensity_data(&self) -> &Dataset {
        &self.propensity
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityConfig {
    pub selector: SelectorSpec,
    pub weighting: Weighting,
    pub grid_size: usize,
    /// Detectable deviation scale for the search region.
    pub r: f64,
    /// Fitted probabilities below this are raised to it before weighting.
    pub floor: f64,
    /// Seed for cross-validation fold shuffling.
    pub fold_seed: u64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            selector: SelectorSpec::Sure,
            weighting: Weighting::Hessian,
            grid_size: 50,
            r: 0.1,
            floor: 1e-8,
            fold_seed: 0,
        }
    }
}

impl PropensityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::invalid("grid size must be positive"));
        }
        if !self.r.is_finite() || self.r <= 0.0 {
            return Err(Error::invalid("deviation scale r must be positive"));
        }
        if !self.floor.is_finite() || self.floor <= 0.0 || self.floor >= 0.5 {
            return Err(Error::invalid(format!(
                "probability floor must lie in (0, 0.5), got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

/// A fitted propensity model plus the probability matrix it implies.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub fit: FitResult,
    pub selected_lambda: Option<f64>,
    pub risk_curve: Option<RiskCurve>,
    pub floor: f64,
    /// Assigned-group probabilities raised to the floor, by group.
    pub floored_per_group: Vec<usize>,
    pub floored_count: usize,
    raw: DMatrix<f64>,
    floored: DMatrix<f64>,
}

impl PropensityFit {
    /// Fitted probabilities as estimated, observations by groups.
    pub fn raw_probs(&self) -> &DMatrix<f64> {
        &self.raw
    }

    /// Fitted probabilities after flooring.
    pub fn floored_probs(&self) -> &DMatrix<f64> {
        &self.floored
    }
}

/// Fits the propensity model with the configured selector and shrinkage
/// toward zero slopes; intercepts stay unpenalized.
pub fn fit_propensity(cds: &CausalDataset, config: &PropensityConfig) -> Result<PropensityFit> {
    config.validate()?;
    let family = Family::MultinomialLogit;
    let ds = cds.propensity_data();
    let mle = fit_mle(family, ds, &family.zero_params(ds))?;
    let p = mle.theta_hat.len();

    let (fitted, selected_lambda, risk_curve) = match config.selector {
        SelectorSpec::Mle => (mle.clone(), None, None),
        SelectorSpec::Fixed { lambda } => {
            let template = build_template(
                config.weighting,
                family,
                ds,
                &mle.theta_hat.values,
                DVector::zeros(p),
                None,
            )?;
            let refit = refit_at(family, ds, &template, lambda, &mle.theta_hat)?;
            (refit, Some(lambda), None)
        }
        SelectorSpec::Sure => {
            let template = build_template(
                config.weighting,
                family,
                ds,
                &mle.theta_hat.values,
                DVector::zeros(p),
                None,
            )?;
            let grid = build_grid(lambda_max(ds.n(), &template, config.r)?, config.grid_size)?;
            let inputs = SureInputs::from_fit(family, ds, &mle, template.clone())?;
            let curve = select_sure(&inputs, &grid)?;
            let refit = refit_at(family, ds, &template, curve.lambda_hat, &mle.theta_hat)?;
            (refit, Some(curve.lambda_hat), Some(curve))
        }
        SelectorSpec::Cv { folds } => {
            let template = build_template(
                config.weighting,
                family,
                ds,
                &mle.theta_hat.values,
                DVector::zeros(p),
                None,
            )?;
            let grid = build_grid(lambda_max(ds.n(), &template, config.r)?, config.grid_size)?;
            let curve = select_cv(family, ds, &template, &grid, folds, config.fold_seed)?;
            let refit = refit_at(family, ds, &template, curve.lambda_hat, &mle.theta_hat)?;
            (refit, Some(curve.lambda_hat), Some(curve))
        }
    };

    let n = cds.n();
    let groups = cds.groups();
    let mut raw = DMatrix::zeros(n, groups);
    for i in 0..n {
        let z = cds.propensity.covariate_row(i);
        let probs = family.predict(&fitted.theta_hat.values, &z)?;
        for g in 0..groups {
            raw[(i, g)] = probs[g];
        }
    }
    let mut floored = raw.clone();
    let mut floored_per_group = vec![0usize; groups];
    for i in 0..n {
        for g in 0..groups {
            if floored[(i, g)] < config.floor {
                floored[(i, g)] = config.floor;
                if cds.group(i) == g + 1 {
                    floored_per_group[g] += 1;
                }
            }
        }
    }
    let floored_count = floored_per_group.iter().sum();

    Ok(PropensityFit {
        fit: fitted,
        selected_lambda,
        risk_curve,
        floor: config.floor,
        floored_per_group,
        floored_count,
        raw,
        floored,
    })
}

fn weights_for(pfit: &PropensityFit, cds: &CausalDataset, group: usize) -> Result<Vec<f64>> {
    if group == 0 || group > cds.groups() {
        return Err(Error::invalid(format!(
            "group {group} is out of range 1..={}",
            cds.groups()
        )));
    }
    if pfit.raw.nrows() != cds.n() {
        return Err(Error::invalid("propensity fit does not match the sample"));
    }
    Ok((0..cds.n())
        .map(|i| {
            if cds.group(i) == group {
                1.0 / pfit.floored[(i, group - 1)]
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpwEstimate {
    pub group: usize,
    pub value: f64,
    pub std_error: f64,
    pub weight_sum: f64,
}

/// Self-normalized weighted mean of the outcome under treatment `group`,
/// with a sandwich standard error treating the weights as fixed.
pub fn ipw_mean(pfit: &PropensityFit, cds: &CausalDataset, group: usize) -> Result<IpwEstimate> {
    let w = weights_for(pfit, cds, group)?;
    let weight_sum: f64 = w.iter().sum();
    if weight_sum <= 0.0 {
        return Err(Error::invalid(format!("group {group} carries no weight")));
    }
    let value = w
        .iter()
        .enumerate()
        .map(|(i, wi)| wi * cds.outcome(i))
        .sum::<f64>()
        / weight_sum;
    let psi_sq: f64 = w
        .iter()
        .enumerate()
        .map(|(i, wi)| {
            let psi = wi * (cds.outcome(i) - value);
            psi * psi
        })
        .sum();
    Ok(IpwEstimate {
        group,
        value,
        std_error: psi_sq.sqrt() / weight_sum,
        weight_sum,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = p * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn silverman_bandwidth(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let mut scale = sd.min(iqr / 1.34);
    if scale <= 0.0 {
        scale = sd.max(1e-6);
    }
    0.9 * scale * m.powf(-0.2)
}

fn gaussian_kernel(u: f64, h: f64) -> f64 {
    let z = u / h;
    (-(0.5) * z * z).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpwQuantile {
    pub group: usize,
    pub tau: f64,
    pub value: f64,
    pub std_error: f64,
    /// Kernel estimate of the weighted outcome density at the quantile.
    pub jacobian: f64,
}

/// Weighted tau-th quantile of the outcome under treatment `group`: the
/// observed group outcome whose weighted moment condition
/// n^-1 sum w_i (1{y_i <= q} - tau) is closest to zero, ties resolved
/// toward the smaller value.
pub fn ipw_quantile(
    pfit: &PropensityFit,
    cds: &CausalDataset,
    group: usize,
    tau: f64,
) -> Result<IpwQuantile> {
    if !(0.0..1.0).contains(&tau) || tau == 0.0 {
        return Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {tau}"
        )));
    }
    let w = weights_for(pfit, cds, group)?;
    let n = cds.n() as f64;
    let rows = cds.group_rows(group);
    let mut candidates: Vec<f64> = rows.iter().map(|&i| cds.outcome(i)).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let moment = |q: f64| -> f64 {
        w.iter()
            .enumerate()
            .map(|(i, wi)| {
                if *wi == 0.0 {
                    0.0
                } else {
                    wi * (if cds.outcome(i) <= q { 1.0 } else { 0.0 } - tau)
                }
            })
            .sum::<f64>()
            / n
    };
    // Exact ties (for example tau = 0.5 with symmetric counts) must pick
    // the smaller candidate, so allow for rounding when comparing.
    let abs_moments: Vec<f64> = candidates.iter().map(|&q| moment(q).abs()).collect();
    let smallest = abs_moments.iter().cloned().fold(f64::INFINITY, f64::min);
    let tie_slack = 1e-9 * smallest + 1e-12;
    let pick = abs_moments
        .iter()
        .position(|a| *a <= smallest + tie_slack)
        .expect("nonempty candidate list");
    let best = candidates[pick];

    let group_values: Vec<f64> = rows.iter().map(|&i| cds.outcome(i)).collect();
    let h = silverman_bandwidth(&group_values);
    let jacobian = w
        .iter()
        .enumerate()
        .map(|(i, wi)| wi * gaussian_kernel(cds.outcome(i) - best, h))
        .sum::<f64>()
        / n;
    let psi_sq: f64 = w
        .iter()
        .enumerate()
        .map(|(i, wi)| {
            if *wi == 0.0 {
                return 0.0;
            }
            let psi = wi * (if cds.outcome(i) <= best { 1.0 } else { 0.0 } - tau);
            psi * psi
        })
        .sum();
    let std_error = if jacobian > 0.0 {
        (psi_sq.sqrt() / n) / jacobian
    } else {
        f64::INFINITY
    };
    Ok(IpwQuantile {
        group,
        tau,
        value: best,
        std_error,
        jacobian,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalDiagnostics {
    /// Largest absolute propensity coefficient; huge values flag
    /// separation.
    pub max_abs_coefficient: f64,
    pub selected_lambda: Option<f64>,
    pub suspect_separation: bool,
    pub converged: bool,
    pub floor: f64,
    pub floored_count: usize,
    pub floored_per_group: Vec<usize>,
    /// Share of observations whose most probable group is not the one
    /// observed.
    pub misclassification_rate: f64,
    /// Smallest density Jacobian across groups and requested quantile
    /// levels; near-zero values mean unstable quantile standard errors.
    pub min_quantile_jacobian: Option<f64>,
}

pub fn diagnostics(
    pfit: &PropensityFit,
    cds: &CausalDataset,
    taus: &[f64],
) -> Result<CausalDiagnostics> {
    let n = cds.n();
    let mut misclassified = 0usize;
    for i in 0..n {
        let mut best = 0usize;
        for g in 1..cds.groups() {
            if pfit.raw[(i, g)] > pfit.raw[(i, best)] {
                best = g;
            }
        }
        if best + 1 != cds.group(i) {
            misclassified += 1;
        }
    }
    let mut min_jac: Option<f64> = None;
    for g in 1..=cds.groups() {
        for &tau in taus {
            let q = ipw_quantile(pfit, cds, g, tau)?;
            min_jac = Some(match min_jac {
                Some(current) => current.min(q.jacobian),
                None => q.jacobian,
            });
        }
    }
    Ok(CausalDiagnostics {
        max_abs_coefficient: pfit.fit.theta_hat.max_abs(),
        selected_lambda: pfit.selected_lambda,
        suspect_separation: pfit.fit.suspect_separation,
        converged: pfit.fit.converged,
        floor: pfit.floor,
        floored_count: pfit.floored_count,
        floored_per_group: pfit.floored_per_group.clone(),
        misclassification_rate: misclassified as f64 / n as f64,
        min_quantile_jacobian: min_jac,
    })
}
