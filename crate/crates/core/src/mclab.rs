//! Simulation laboratory: calibrated multinomial designs, replicated
//! estimator comparisons, and summary metrics.
//!
//! The flagship design is a three-category logit with one deliberately
//! rare category, which is where plain maximum likelihood produces
//! occasional wild coefficient estimates and shrinkage has the most to
//! offer. Intercepts are calibrated by simulation so the marginal
//! category probabilities hit their targets regardless of the slope
//! configuration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, FitResult};
use crate::family::Family;
use crate::linalg;
use crate::param::{ParamLayout, ParamVector};
use crate::penalty::{build_template, Weighting};
use crate::tuner::{
    build_grid, lambda_max, refit_at, select_cv, select_sure, SelectorSpec, SureInputs,
};

/// Slope matrix used by the stock rare-category design: two non-base
/// categories by eight covariates, frozen so studies are reproducible
/// across machines.
pub const FROZEN_SLOPES: [[f64; 8]; 2] = [
    [
        -1.0236191509407198,
        -0.5352417242137784,
        -1.1810884452619403,
        -0.5740677824050205,
        -1.4722344423069378,
        -0.9209218476579424,
        0.5104978825756522,
        0.048753068485724096,
    ],
    [
        -0.2405107775862254,
        -0.11702423134561367,
        -0.5244319772107578,
        -0.005095970334767471,
        0.33911537000049613,
        -0.5896625088833017,
        -0.44264626083098313,
        0.26748708700557583,
    ],
];

/// Seed for the direction in which hypothesized slope values are
/// perturbed away from the truth. Fixed so every study disagrees with
/// the truth in the same direction.
const DIRECTION_SEED: u64 = 20_250_815;

/// Salt mixed into a replication seed to decorrelate fold shuffling
/// from data generation.
const FOLD_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

const CALIBRATION_REL_TOL: f64 = 1e-6;
const CALIBRATION_MAX_CYCLES: usize = 500;

/// Generating design for a multinomial logit sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    /// Observations per replication.
    pub n: usize,
    /// Number of outcome categories; the last is the base.
    pub categories: usize,
    pub covariate_count: usize,
    /// Standard deviation of each (independent, centered normal) covariate.
    pub covariate_sd: Vec<f64>,
    /// Slopes per non-base category, row c for category c+1.
    pub slopes: Vec<Vec<f64>>,
    /// Marginal probability each category should achieve.
    pub target_probs: Vec<f64>,
    /// Simulated draws used to calibrate intercepts.
    pub calibration_draws: usize,
    /// Seed for the calibration draws (not the replication data).
    pub seed: u64,
}

impl DgpSpec {
    /// Three categories, eight covariates, and category 1 calibrated to
    /// an expected count of 16 regardless of the sample size. The rest
    /// of the mass splits evenly.
    pub fn rare_category(n: usize) -> Result<Self> {
        if n <= 16 {
            return Err(Error::InvalidSpec(format!(
                "rare-category design needs n > 16, got {n}"
            )));
        }
        let rare = 16.0 / n as f64;
        let rest = (1.0 - rare) / 2.0;
        let spec = DgpSpec {
            n,
            categories: 3,
            covariate_count: 8,
            covariate_sd: (0..8).map(|j| 0.5 + 0.25 * j as f64).collect(),
            slopes: FROZEN_SLOPES.iter().map(|row| row.to_vec()).collect(),
            target_probs: vec![rare, rest, rest],
            calibration_draws: 1_000_000,
            seed: 7_113_001,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn custom(
        n: usize,
        covariate_sd: Vec<f64>,
        slopes: Vec<Vec<f64>>,
        target_probs: Vec<f64>,
        calibration_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = DgpSpec {
            n,
            categories: target_probs.len(),
            covariate_count: covariate_sd.len(),
            covariate_sd,
            slopes,
            target_probs,
            calibration_draws,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.categories;
        let k = self.covariate_count;
        if j < 2 {
            return Err(Error::InvalidSpec(
                "need at least two outcome categories".into(),
            ));
        }
        if k == 0 || self.covariate_sd.len() != k {
            return Err(Error::InvalidSpec(
                "covariate standard deviations do not match the covariate count".into(),
            ));
        }
        if self
            .covariate_sd
            .iter()
            .any(|s| !s.is_finite() || *s <= 0.0)
        {
            return Err(Error::InvalidSpec(
                "covariate standard deviations must be positive".into(),
            ));
        }
        if self.slopes.len() != j - 1 || self.slopes.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidSpec(format!(
                "slopes must be a {} x {k} array",
                j - 1
            )));
        }
        if self
            .slopes
            .iter()
            .any(|row| row.iter().any(|b| !b.is_finite()))
        {
            return Err(Error::InvalidSpec("slopes must be finite".into()));
        }
        if self.target_probs.len() != j {
            return Err(Error::InvalidSpec(
                "need one target probability per category".into(),
            ));
        }
        if self
            .target_probs
            .iter()
            .any(|p| !p.is_finite() || *p <= 0.0 || *p >= 1.0)
        {
            return Err(Error::InvalidSpec(
                "target probabilities must lie strictly inside (0, 1)".into(),
            ));
        }
        let total: f64 = self.target_probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSpec(format!(
                "target probabilities sum to {total}, expected 1"
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidSpec("sample size must be positive".into()));
        }
        if self.calibration_draws < 1_000 {
            return Err(Error::InvalidSpec(
                "calibration needs at least 1000 draws".into(),
            ));
        }
        Ok(())
    }

    fn parameter_layout_len(&self) -> usize {
        (self.categories - 1) * (self.covariate_count + 1)
    }
}

/// A design whose intercepts have been solved for, ready to generate data.
#[derive(Debug, Clone)]
pub struct CalibratedDgp {
    spec: DgpSpec,
    intercepts: Vec<f64>,
    achieved: Vec<f64>,
}

fn mean_category_prob(etas: &DMatrix<f64>, intercepts: &[f64], cat: usize) -> f64 {
    // Mean over draws of P(Y = cat+1), categories indexed from 0 here.
    let draws = etas.nrows();
    let jm1 = etas.ncols();
    let mut total = 0.0;
    for r in 0..draws {
        let mut terms = Vec::with_capacity(jm1 + 1);
        terms.push(0.0);
        for c in 0..jm1 {
            terms.push(intercepts[c] + etas[(r, c)]);
        }
        let lse = linalg::log_sum_exp(&terms);
        total += (intercepts[cat] + etas[(r, cat)] - lse).exp();
    }
    total / draws as f64
}

/// Solves the intercept of one category so its mean probability hits the
/// target, holding the others fixed. The mean is increasing in the
/// intercept, so plain bracketed bisection works.
fn solve_intercept(
    etas: &DMatrix<f64>,
    intercepts: &[f64],
    cat: usize,
    target: f64,
) -> Result<f64> {
    let draws = etas.nrows();
    let jm1 = etas.ncols();
    // Per draw, the other categories contribute a fixed denominator term.
    let mut denom_other = Vec::with_capacity(draws);
    let mut own = Vec::with_capacity(draws);
    for r in 0..draws {
        let mut d = 1.0;
        for c in 0..jm1 {
            if c != cat {
                d += (intercepts[c] + etas[(r, c)]).exp();
            }
        }
        denom_other.push(d);
        own.push(etas[(r, cat)]);
    }
    let mean_at = |alpha: f64| -> f64 {
        let mut total = 0.0;
        for r in 0..draws {
            let t = (alpha + own[r]).exp();
            total += if t.is_infinite() {
                1.0
            } else {
                t / (denom_other[r] + t)
            };
        }
        total / draws as f64
    };

    let mut lo = intercepts[cat] - 2.0;
    let mut hi = intercepts[cat] + 2.0;
    let mut width = 2.0;
    for _ in 0..60 {
        if mean_at(lo) <= target {
            break;
        }
        width *= 2.0;
        lo -= width;
    }
    for _ in 0..60 {
        if mean_at(hi) >= target {
            break;
        }
        width *= 2.0;
        hi += width;
    }
    if mean_at(lo) > target || mean_at(hi) < target {
        return Err(Error::SolverFailure(
            "could not bracket the intercept during calibration".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let value = mean_at(mid);
        if (value - target).abs() <= 1e-9 * target {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + mid.abs()) {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

impl DgpSpec {
    /// Calibrates intercepts by cyclic one-dimensional bisection on a
    /// fixed sample of covariate draws until every category's achieved
    /// marginal is within a relative 1e-6 of its target.
    pub fn calibrate(&self) -> Result<CalibratedDgp> {
        self.validate()?;
        let j = self.categories;
        let k = self.covariate_count;
        let draws = self.calibration_draws;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // Slope parts of the linear predictors, fixed across the search.
        let mut etas = DMatrix::zeros(draws, j - 1);
        for r in 0..draws {
            for col in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                let x = self.covariate_sd[col] * z;
                for c in 0..(j - 1) {
                    etas[(r, c)] += self.slopes[c][col] * x;
                }
            }
        }

        let base_target = self.target_probs[j - 1];
        let mut intercepts: Vec<f64> = (0..(j - 1))
            .map(|c| (self.target_probs[c] / base_target).ln())
            .collect();
        for _ in 0..CALIBRATION_MAX_CYCLES {
            for c in 0..(j - 1) {
                intercepts[c] = solve_intercept(&etas, &intercepts, c, self.target_probs[c])?;
            }
            let achieved: Vec<f64> = (0..(j - 1))
                .map(|c| mean_category_prob(&etas, &intercepts, c))
                .collect();
            let worst = achieved
                .iter()
                .zip(&self.target_probs)
                .map(|(a, t)| (a - t).abs() / t)
                .fold(0.0f64, f64::max);
            if worst <= CALIBRATION_REL_TOL {
                let mut full = achieved;
                full.push(1.0 - full.iter().sum::<f64>());
                return Ok(CalibratedDgp {
                    spec: self.clone(),
                    intercepts,
                    achieved: full,
                });
            }
        }
        Err(Error::SolverFailure(
            "intercept calibration did not converge".into(),
        ))
    }
}

impl CalibratedDgp {
    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    /// Marginal probabilities achieved on the calibration sample.
    pub fn achieved_probs(&self) -> &[f64] {
        &self.achieved
    }

    /// True parameter vector in estimation layout: per non-base category,
    /// an intercept followed by the slopes.
    pub fn theta0(&self) -> ParamVector {
        let spec = &self.spec;
        let layout = ParamLayout::per_category(spec.categories, spec.covariate_count);
        let mut values = DVector::zeros(spec.parameter_layout_len());
        let block = spec.covariate_count + 1;
        for c in 0..(spec.categories - 1) {
            values[c * block] = self.intercepts[c];
            for col in 0..spec.covariate_count {
                values[c * block + 1 + col] = spec.slopes[c][col];
            }
        }
        ParamVector::new(values, layout).expect("calibrated parameters are finite")
    }

    pub fn generate_covariate_row(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.spec
            .covariate_sd
            .iter()
            .map(|sd| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Draws a sample of `n` observations. Covariates and the outcome are
    /// drawn row by row, so a longer sample extends a shorter one drawn
    /// from the same generator state.
    pub fn generate(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Dataset> {
        let spec = &self.spec;
        let j = spec.categories;
        let k = spec.covariate_count;
        let mut x = DMatrix::zeros(n, k);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let row = self.generate_covariate_row(rng);
            for col in 0..k {
                x[(i, col)] = row[col];
            }
            let probs = self.true_probs_for(&row);
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut cat = j;
            for (c, p) in probs.iter().enumerate() {
                cum += p;
                if u < cum {
                    cat = c + 1;
                    break;
                }
            }
            y[i] = cat as f64;
        }
        Dataset::categorical(y, x, j)
    }

    /// Category probabilities at one covariate row under the true design.
    pub fn true_probs_for(&self, row: &[f64]) -> Vec<f64> {
        let spec = &self.spec;
        let jm1 = spec.categories - 1;
        let mut terms = Vec::with_capacity(spec.categories);
        terms.push(0.0);
        for c in 0..jm1 {
            let mut eta = self.intercepts[c];
            for (s, x) in spec.slopes[c].iter().zip(row) {
                eta += s * x;
            }
            terms.push(eta);
        }
        let lse = linalg::log_sum_exp(&terms);
        let mut probs: Vec<f64> = (1..=jm1).map(|c| (terms[c] - lse).exp()).collect();
        probs.push((terms[0] - lse).exp());
        probs
    }
}

/// How the hypothesized parameter relates to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpec {
    /// Hypothesis equals the truth.
    Correct,
    /// Truth plus a unit slope direction scaled by 0.5.
    Moderate,
    /// Truth plus the same direction scaled by 2.
    Severe,
    /// All-zero hypothesis.
    Zero,
}

impl TargetSpec {
    /// Unit direction over slope coordinates (intercepts untouched),
    /// shared by every design of the same dimension.
    fn direction(theta0: &ParamVector) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
        let mut u = DVector::zeros(theta0.len());
        for idx in theta0.layout.slope_indices() {
            u[idx] = rng.sample::<f64, _>(StandardNormal);
        }
        let norm = u.norm();
        u / norm
    }

    pub fn instantiate(self, theta0: &ParamVector) -> DVector<f64> {
        match self {
            TargetSpec::Correct => theta0.values.clone(),
            TargetSpec::Moderate => &theta0.values + Self::direction(theta0) * 0.5,
            TargetSpec::Severe => &theta0.values + Self::direction(theta0) * 2.0,
            TargetSpec::Zero => DVector::zeros(theta0.len()),
        }
    }
}

/// One estimator entering a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub name: String,
    pub selector: SelectorSpec,
    pub weighting: Weighting,
    pub target: TargetSpec,
}

impl EstimatorConfig {
    pub fn mle() -> Self {
        EstimatorConfig {
            name: "mle".into(),
            selector: SelectorSpec::Mle,
            weighting: Weighting::Identity,
            target: TargetSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StudyOptions {
    pub grid_size: usize,
    /// Detectable deviation scale for the search region.
    pub r: f64,
    pub folds: usize,
    /// A replication counts as extreme when its largest absolute slope
    /// estimation error exceeds this.
    pub extreme_threshold: f64,
    /// Tail summaries average the worst (1 - alpha) share of replications.
    pub tail_alpha: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            grid_size: 50,
            r: 0.1,
            folds: 5,
            extreme_threshold: 50.0,
            tail_alpha: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySpec {
    pub dgp: DgpSpec,
    pub estimators: Vec<EstimatorConfig>,
    pub replications: usize,
    pub base_seed: u64,
    pub options: StudyOptions,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidSpec("need at least one replication".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidSpec("need at least one estimator".into()));
        }
        let mut names: Vec<&str> = self.estimators.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.estimators.len() {
            return Err(Error::InvalidSpec("estimator names must be unique".into()));
        }
        if self.estimators.iter().any(|e| e.name.is_empty()) {
            return Err(Error::InvalidSpec(
                "estimator names must be nonempty".into(),
            ));
        }
        let o = &self.options;
        if o.grid_size == 0 || o.folds < 2 {
            return Err(Error::InvalidSpec(
                "grid size must be positive and folds at least 2".into(),
            ));
        }
        if !o.r.is_finite() || o.r <= 0.0 {
            return Err(Error::InvalidSpec(
                "deviation scale r must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&o.tail_alpha) {
            return Err(Error::InvalidSpec("tail alpha must lie in [0, 1)".into()));
        }
        if !o.extreme_threshold.is_finite() || o.extreme_threshold <= 0.0 {
            return Err(Error::InvalidSpec(
                "extreme threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-estimator results within one replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub config_name: String,
    pub selected_lambda: Option<f64>,
    pub converged: bool,
    pub suspect_separation: bool,
    pub theta_hat: Vec<f64>,
    pub max_abs_slope_estimate: f64,
    pub max_abs_slope_error: f64,
    pub slope_sq_error: f64,
    /// Mean squared probability error over a fresh covariate sample.
    pub prediction_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    /// Condition number of the negative average Hessian at the
    /// unpenalized estimate.
    pub hessian_condition: f64,
    pub estimates: Vec<EstimateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutput {
    pub spec: StudySpec,
    pub theta0: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub achieved_probs: Vec<f64>,
    pub records: Vec<ReplicationRecord>,
}

fn slope_metrics(theta_hat: &ParamVector, theta0: &ParamVector) -> (f64, f64, f64) {
    let mut max_est = 0.0f64;
    let mut max_err = 0.0f64;
    let mut sq_err = 0.0f64;
    for idx in theta0.layout.slope_indices() {
        let est = theta_hat.values[idx];
        let err = est - theta0.values[idx];
        max_est = max_est.max(est.abs());
        max_err = max_err.max(err.abs());
        sq_err += err * err;
    }
    (max_est, max_err, sq_err)
}

fn prediction_loss(
    dgp: &CalibratedDgp,
    theta_hat: &DVector<f64>,
    fresh_rows: &[Vec<f64>],
) -> Result<f64> {
    let family = Family::MultinomialLogit;
    let k = dgp.spec().covariate_count;
    let mut total = 0.0;
    for row in fresh_rows {
        let z = DVector::from_row_slice(row);
        debug_assert_eq!(z.len(), k);
        let fitted = family.predict(theta_hat, &z)?;
        let truth = dgp.true_probs_for(row);
        for (a, b) in fitted.iter().zip(truth.iter()) {
            total += (a - b) * (a - b);
        }
    }
    Ok(total / fresh_rows.len() as f64)
}

/// Selection inside the study searches the open region above zero: the
/// unpenalized fit is the benchmark being stabilized, not a candidate.
fn positive_grid(lambda_max: f64, size: usize) -> Result<Vec<f64>> {
    let mut grid = build_grid(lambda_max, size)?;
    grid.retain(|&l| l > 0.0);
    Ok(grid)
}

fn run_replication(
    dgp: &CalibratedDgp,
    spec: &StudySpec,
    theta0: &ParamVector,
    rep: usize,
) -> Result<ReplicationRecord> {
    let family = Family::MultinomialLogit;
    let seed = spec.base_seed ^ rep as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = dgp.generate(&mut rng, spec.dgp.n)?;
    let fresh_rows: Vec<Vec<f64>> = (0..spec.dgp.n)
        .map(|_| dgp.generate_covariate_row(&mut rng))
        .collect();

    let mle = fit_mle(family, &ds, &family.zero_params(&ds))?;
    let info = -family.hessian_sum(&ds, &mle.theta_hat.values)?;
    let hessian_condition = linalg::sym_condition(&info);

    let mut estimates = Vec::with_capacity(spec.estimators.len());
    for config in &spec.estimators {
        let (fitted, selected_lambda): (FitResult, Option<f64>) = match config.selector {
            SelectorSpec::Mle => (mle.clone(), None),
            SelectorSpec::Fixed { lambda } => {
                let target = config.target.instantiate(theta0);
                let template = build_template(
                    config.weighting,
                    family,
                    &ds,
                    &mle.theta_hat.values,
                    target,
                    None,
                )?;
                (
                    refit_at(family, &ds, &template, lambda, &mle.theta_hat)?,
                    Some(lambda),
                )
            }
            SelectorSpec::Sure => {
                let target = config.target.instantiate(theta0);
                let template = build_template(
                    config.weighting,
                    family,
                    &ds,
                    &mle.theta_hat.values,
                    target,
                    None,
                )?;
                let grid = positive_grid(
                    lambda_max(ds.n(), &template, spec.options.r)?,
                    spec.options.grid_size,
                )?;
                let inputs = SureInputs::from_fit(family, &ds, &mle, template.clone())?;
                let curve = select_sure(&inputs, &grid)?;
                (
                    refit_at(family, &ds, &template, curve.lambda_hat, &mle.theta_hat)?,
                    Some(curve.lambda_hat),
                )
            }
            SelectorSpec::Cv { folds } => {
                let target = config.target.instantiate(theta0);
                let template = build_template(
                    config.weighting,
                    family,
                    &ds,
                    &mle.theta_hat.values,
                    target,
                    None,
                )?;
                let grid = positive_grid(
                    lambda_max(ds.n(), &template, spec.options.r)?,
                    spec.options.grid_size,
                )?;
                let curve = select_cv(family, &ds, &template, &grid, folds, seed ^ FOLD_SEED_SALT)?;
                (
                    refit_at(family, &ds, &template, curve.lambda_hat, &mle.theta_hat)?,
                    Some(curve.lambda_hat),
                )
            }
        };
        let (max_est, max_err, sq_err) = slope_metrics(&fitted.theta_hat, theta0);
        let loss = prediction_loss(dgp, &fitted.theta_hat.values, &fresh_rows)?;
        estimates.push(EstimateRecord {
            config_name: config.name.clone(),
            selected_lambda,
            converged: fitted.converged,
            suspect_separation: fitted.suspect_separation,
            theta_hat: fitted.theta_hat.values.iter().copied().collect(),
            max_abs_slope_estimate: max_est,
            max_abs_slope_error: max_err,
            slope_sq_error: sq_err,
            prediction_loss: loss,
        });
    }

    Ok(ReplicationRecord {
        replication: rep,
        seed,
        hessian_condition,
        estimates,
    })
}

/// Runs the full replication study. Replications execute in parallel but
/// each one's randomness depends only on `base_seed ^ replication`, so
/// results do not depend on thread count.
pub fn run_study(spec: &StudySpec) -> Result<StudyOutput> {
    spec.validate()?;
    let dgp = spec.dgp.calibrate()?;
    let theta0 = dgp.theta0();
    let records: Vec<ReplicationRecord> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(&dgp, spec, &theta0, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyOutput {
        spec: spec.clone(),
        theta0: theta0.values.iter().copied().collect(),
        intercepts: dgp.intercepts().to_vec(),
        achieved_probs: dgp.achieved_probs().to_vec(),
        records,
    })
}

/// Which per-replication statistic ranks replications for tail summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRanking {
    /// Rank by the unpenalized estimator's prediction loss.
    MleLoss,
    /// Rank by the unpenalized estimator's largest absolute slope.
    MleMaxCoef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigMetrics {
    pub name: String,
    pub mean_slope_sq_error: f64,
    /// Mean squared slope error divided by the unpenalized estimator's.
    pub coefficient_risk_ratio: f64,
    pub extreme_count: usize,
    pub prediction_mse: f64,
    /// Mean prediction loss divided by the unpenalized estimator's.
    pub prediction_mse_ratio: f64,
    /// Mean prediction loss over the worst-ranked replications.
    pub tail_prediction_loss: f64,
    /// Tail prediction loss divided by the unpenalized estimator's.
    pub tail_prediction_loss_ratio: f64,
    pub mean_selected_lambda: Option<f64>,
    pub unconverged: usize,
    pub suspect: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replications: usize,
    pub tail_alpha: f64,
    pub tail_count: usize,
    pub tail_ranking: TailRanking,
    pub extreme_threshold: f64,
    pub per_config: Vec<ConfigMetrics>,
}

fn tail_size(replications: usize, alpha: f64) -> usize {
    let raw = ((1.0 - alpha) * replications as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, replications)
}

impl MetricsReport {
    pub fn from_output(output: &StudyOutput, ranking: TailRanking) -> Result<Self> {
        let spec = &output.spec;
        let records = &output.records;
        if records.is_empty() {
            return Err(Error::invalid("study produced no replications"));
        }
        let mle_positions: Vec<usize> = spec
            .estimators
            .iter()
            .enumerate()
            .filter(|(_, e)| e.selector == SelectorSpec::Mle)
            .map(|(i, _)| i)
            .collect();
        if mle_positions.len() != 1 {
            return Err(Error::invalid(
                "risk normalization needs exactly one unpenalized estimator in the study",
            ));
        }
        let mle_idx = mle_positions[0];
        let r = records.len();
        let alpha = spec.options.tail_alpha;
        let m = tail_size(r, alpha);

        // Worst replications by the chosen MLE statistic; ties keep the
        // earlier replication first.
        let mut order: Vec<usize> = (0..r).collect();
        let key = |rec: &ReplicationRecord| -> f64 {
            let e = &rec.estimates[mle_idx];
            match ranking {
                TailRanking::MleLoss => e.prediction_loss,
                TailRanking::MleMaxCoef => e.max_abs_slope_estimate,
            }
        };
        order.sort_by(|&a, &b| {
            key(&records[b])
                .partial_cmp(&key(&records[a]))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let tail: Vec<usize> = order[..m].to_vec();

        let mle_mean_sq: f64 = records
            .iter()
            .map(|rec| rec.estimates[mle_idx].slope_sq_error)
            .sum::<f64>()
            / r as f64;
        if !(mle_mean_sq > 0.0) {
            return Err(Error::invalid(
                "unpenalized estimator has zero risk; normalization is undefined",
            ));
        }
        let mle_pred_mean: f64 = records
            .iter()
            .map(|rec| rec.estimates[mle_idx].prediction_loss)
            .sum::<f64>()
            / r as f64;
        let mle_tail_mean: f64 = tail
            .iter()
            .map(|&t| records[t].estimates[mle_idx].prediction_loss)
            .sum::<f64>()
            / m as f64;
        if !(mle_pred_mean > 0.0) {
            return Err(Error::invalid(
                "unpenalized estimator has zero prediction loss; normalization is undefined",
            ));
        }

        let mut per_config = Vec::with_capacity(spec.estimators.len());
        for (idx, config) in spec.estimators.iter().enumerate() {
            let mean_sq: f64 = records
                .iter()
                .map(|rec| rec.estimates[idx].slope_sq_error)
                .sum::<f64>()
                / r as f64;
            let extreme = records
                .iter()
                .filter(|rec| {
                    rec.estimates[idx].max_abs_slope_error > spec.options.extreme_threshold
                })
                .count();
            let pred: f64 = records
                .iter()
                .map(|rec| rec.estimates[idx].prediction_loss)
                .sum::<f64>()
                / r as f64;
            let tail_loss: f64 = tail
                .iter()
                .map(|&t| records[t].estimates[idx].prediction_loss)
                .sum::<f64>()
                / m as f64;
            let lambdas: Vec<f64> = records
                .iter()
                .filter_map(|rec| rec.estimates[idx].selected_lambda)
                .collect();
            let mean_lambda = if lambdas.is_empty() {
                None
            } else {
                Some(lambdas.iter().sum::<f64>() / lambdas.len() as f64)
            };
            let unconverged = records
                .iter()
                .filter(|rec| !rec.estimates[idx].converged)
                .count();
            let suspect = records
                .iter()
                .filter(|rec| rec.estimates[idx].suspect_separation)
                .count();
            per_config.push(ConfigMetrics {
                name: config.name.clone(),
                mean_slope_sq_error: mean_sq,
                coefficient_risk_ratio: mean_sq / mle_mean_sq,
                extreme_count: extreme,
                prediction_mse: pred,
                prediction_mse_ratio: pred / mle_pred_mean,
                tail_prediction_loss: tail_loss,
                tail_prediction_loss_ratio: tail_loss / mle_tail_mean,
                mean_selected_lambda: mean_lambda,
                unconverged,
                suspect,
            });
        }

        Ok(MetricsReport {
            replications: r,
            tail_alpha: alpha,
            tail_count: m,
            tail_ranking: ranking,
            extreme_threshold: spec.options.extreme_threshold,
            per_config,
        })
    }
}
