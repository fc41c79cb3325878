//! Data-driven penalty strength selection.
//!
//! Two selectors share a common grid: an unbiased-risk (SURE-style)
//! criterion evaluated from a single unpenalized fit, and likelihood-based
//! K-fold cross-validation. Both return a `RiskCurve`; the chosen strength
//! minimizes the curve, with ties resolved toward the smallest strength.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit, FitResult};
use crate::family::Family;
use crate::linalg;
use crate::param::ParamVector;
use crate::penalty::PenaltyTemplate;

/// How a penalty strength gets chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectorSpec {
    /// No penalty: plain maximum likelihood.
    Mle,
    /// A fixed strength, no selection.
    Fixed { lambda: f64 },
    /// Unbiased-risk estimate minimized over the grid.
    Sure,
    /// K-fold cross-validated held-out log-likelihood.
    Cv { folds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Sure,
    Cv,
}

/// Estimated risk over a strength grid plus the selected strength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskCurve {
    pub grid: Vec<f64>,
    /// Estimated risk per grid point. For the cross-validation selector
    /// this is the negative mean held-out per-observation log-likelihood.
    pub r_hat: Vec<f64>,
    pub lambda_hat: f64,
    pub selected_index: usize,
    pub selector: SelectorKind,
    /// Propagated from the unpenalized fit that fed the selector.
    pub suspect_separation: bool,
    /// Fits that hit the iteration cap while scanning the grid.
    pub unconverged_fits: usize,
}

/// Everything the unbiased-risk criterion needs, computed once from an
/// unpenalized fit.
#[derive(Debug, Clone)]
pub struct SureInputs {
    theta: DVector<f64>,
    j_hat: DMatrix<f64>,
    v_hat: DMatrix<f64>,
    template: PenaltyTemplate,
    suspect_separation: bool,
}

impl SureInputs {
    /// Validates that `v_hat` equals `j_hat`^-1 / n.
    pub fn new(
        theta: DVector<f64>,
        j_hat: DMatrix<f64>,
        v_hat: DMatrix<f64>,
        n: usize,
        template: PenaltyTemplate,
        suspect_separation: bool,
    ) -> Result<Self> {
        let p = template.p();
        if theta.len() != p || j_hat.nrows() != p || j_hat.ncols() != p || v_hat.nrows() != p {
            return Err(Error::invalid(
                "selector inputs must all match the penalty template's dimension",
            ));
        }
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let expected = linalg::invert(&j_hat, "J_hat")? / n as f64;
        let scale = expected.amax().max(1.0);
        if (&expected - &v_hat).amax() > 1e-8 * scale {
            return Err(Error::invalid("V_hat does not equal J_hat^-1 / n"));
        }
        Ok(SureInputs {
            theta,
            j_hat,
            v_hat,
            template,
            suspect_separation,
        })
    }

    /// Builds selector inputs from an unpenalized fit: J_hat is the
    /// negative average Hessian at the estimate, used as-is even when the
    /// fit is flagged as suspect.
    pub fn from_fit(
        family: Family,
        ds: &Dataset,
        mle: &FitResult,
        template: PenaltyTemplate,
    ) -> Result<Self> {
        let j_hat = -family.hessian_sum(ds, &mle.theta_hat.values)?;
        let v_hat = linalg::invert(&j_hat, "J_hat")? / ds.n() as f64;
        Self::new(
            mle.theta_hat.values.clone(),
            j_hat,
            v_hat,
            ds.n(),
            template,
            mle.suspect_separation,
        )
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn v_hat(&self) -> &DMatrix<f64> {
        &self.v_hat
    }

    pub fn template(&self) -> &PenaltyTemplate {
        &self.template
    }

    /// Affine shrinkage map at strength `lambda`: returns the shrunken
    /// estimate delta and the matrix A with delta = theta_H + A (theta -
    /// theta_H).
    pub fn shrink_affine(&self, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!(
                "penalty strength must be finite and nonnegative, got {lambda}"
            )));
        }
        let p = self.template.p();
        if lambda == 0.0 {
            return Ok((self.theta.clone(), DMatrix::identity(p, p)));
        }
        let m = &self.j_hat + self.template.gram() * (2.0 * lambda);
        let a = m.lu().solve(&self.j_hat).ok_or_else(|| {
            Error::SingularMoment("J_hat + 2 lambda Lambda'Lambda is singular".into())
        })?;
        let target = self.template.target();
        let delta = target + &a * (&self.theta - target);
        Ok((delta, a))
    }

    /// Unbiased risk estimate at strength `lambda`:
    /// ||delta - theta||^2 + 2 tr(V_hat A) - tr(V_hat).
    pub fn sure_value(&self, lambda: f64) -> Result<f64> {
        let (delta, a) = self.shrink_affine(lambda)?;
        let fit_term = (&delta - &self.theta).norm_squared();
        Ok(fit_term + 2.0 * (&self.v_hat * &a).trace() - self.v_hat.trace())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("strength grid is empty"));
    }
    for (i, &l) in grid.iter().enumerate() {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::invalid(format!(
                "grid entry {l} at index {i} is invalid"
            )));
        }
        if i > 0 && l <= grid[i - 1] {
            return Err(Error::invalid("strength grid must be strictly increasing"));
        }
    }
    Ok(())
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Upper end of the search region: 1 / (N min_eig(Lambda'Lambda) r^2),
/// with the eigenvalue taken on the penalized block. `r` is the assumed
/// detectable deviation scale.
pub fn lambda_max(n: usize, template: &PenaltyTemplate, r: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(format!(
            "deviation scale r must be positive, got {r}"
        )));
    }
    if template.masked_count() == 0 {
        return Err(Error::InvalidWeighting(
            "search region needs at least one penalized coordinate".into(),
        ));
    }
    let block = linalg::masked_block(&template.gram(), template.mask());
    let min_eig = linalg::min_eigenvalue(&block);
    if min_eig <= linalg::EIG_FLOOR {
        return Err(Error::InvalidWeighting(format!(
            "weight gram matrix is degenerate (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(1.0 / (n as f64 * min_eig * r * r))
}

/// Geometric grid from lambda_max * 1e-4 up to lambda_max with `size`
/// points, with 0 prepended.
pub fn build_grid(lambda_max: f64, size: usize) -> Result<Vec<f64>> {
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::invalid(format!(
            "grid upper end must be positive and finite, got {lambda_max}"
        )));
    }
    if size == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let mut grid = Vec::with_capacity(size + 1);
    grid.push(0.0);
    if size == 1 {
        grid.push(lambda_max);
        return Ok(grid);
    }
    for i in 0..size {
        let exponent = -4.0 * (1.0 - i as f64 / (size as f64 - 1.0));
        grid.push(lambda_max * 10f64.powf(exponent));
    }
    Ok(grid)
}

/// Minimizes the unbiased risk estimate over the grid.
pub fn select_sure(inputs: &SureInputs, grid: &[f64]) -> Result<RiskCurve> {
    check_grid(grid)?;
    let mut r_hat = Vec::with_capacity(grid.len());
    for &lambda in grid {
        r_hat.push(inputs.sure_value(lambda)?);
    }
    let selected_index = argmin_first(&r_hat);
    Ok(RiskCurve {
        grid: grid.to_vec(),
        r_hat,
        lambda_hat: grid[selected_index],
        selected_index,
        selector: SelectorKind::Sure,
        suspect_separation: inputs.suspect_separation,
        unconverged_fits: 0,
    })
}

fn is_stratified(family: Family) -> bool {
    matches!(family, Family::MultinomialLogit | Family::BinaryLogit)
}

/// Deterministic fold assignment. Categorical outcomes are stratified:
/// each category's rows are shuffled and dealt round-robin, so category
/// proportions stay balanced across folds.
pub fn fold_assignment(
    family: Family,
    ds: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if ds.n() < folds {
        return Err(Error::invalid(format!(
            "cannot split {} observations into {folds} folds",
            ds.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; ds.n()];
    if is_stratified(family) {
        for cat in 1..=ds.category_count() {
            let mut rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.category(i) == cat).collect();
            rows.shuffle(&mut rng);
            for (pos, &row) in rows.iter().enumerate() {
                assignment[row] = pos % folds;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..ds.n()).collect();
        rows.shuffle(&mut rng);
        for (pos, &row) in rows.iter().enumerate() {
            assignment[row] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Cross-validation with an explicit fold assignment (fold index per row).
pub fn select_cv_assigned(
    family: Family,
    ds: &Dataset,
    template: &PenaltyTemplate,
    grid: &[f64],
    assignment: &[usize],
) -> Result<RiskCurve> {
    check_grid(grid)?;
    if assignment.len() != ds.n() {
        return Err(Error::invalid(
            "fold assignment length does not match the sample",
        ));
    }
    let folds = assignment.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }

    let mut heldout_total = vec![0.0f64; grid.len()];
    let mut unconverged = 0usize;
    let mut any_suspect = false;
    for f in 0..folds {
        let train_rows: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] != f).collect();
        let test_rows: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] == f).collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(Error::DegenerateFold(format!(
                "fold {f} is empty on one side"
            )));
        }
        let train = ds.subset(&train_rows)?;
        let test = ds.subset(&test_rows)?;
        if is_stratified(family) {
            for cat in 1..=ds.category_count() {
                if !(0..train.n()).any(|i| train.category(i) == cat) {
                    return Err(Error::DegenerateFold(format!(
                        "training data for fold {f} lost outcome category {cat}"
                    )));
                }
            }
        }

        let mut init = family.zero_params(&train);
        for (l, &lambda) in grid.iter().enumerate() {
            let spec = template.with_lambda(lambda)?;
            let fitted = fit(family, &train, &spec, &init)?;
            if !fitted.converged {
                unconverged += 1;
            }
            any_suspect |= fitted.suspect_separation;
            heldout_total[l] += family.loglik(&test, &fitted.theta_hat.values)? * test.n() as f64;
            init = fitted.theta_hat;
        }
    }

    let n = ds.n() as f64;
    let r_hat: Vec<f64> = heldout_total.iter().map(|h| -(h / n)).collect();
    let selected_index = argmin_first(&r_hat);
    Ok(RiskCurve {
        grid: grid.to_vec(),
        r_hat,
        lambda_hat: grid[selected_index],
        selected_index,
        selector: SelectorKind::Cv,
        suspect_separation: any_suspect,
        unconverged_fits: unconverged,
    })
}

/// K-fold cross-validation with seeded stratified folds.
pub fn select_cv(
    family: Family,
    ds: &Dataset,
    template: &PenaltyTemplate,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<RiskCurve> {
    let assignment = fold_assignment(family, ds, folds, seed)?;
    select_cv_assigned(family, ds, template, grid, &assignment)
}

/// Warm-started penalized fit at the selected strength. `warm` is usually
/// the unpenalized fit the selector was built from.
pub fn refit_at(
    family: Family,
    ds: &Dataset,
    template: &PenaltyTemplate,
    lambda: f64,
    warm: &ParamVector,
) -> Result<FitResult> {
    let spec = template.with_lambda(lambda)?;
    fit(family, ds, &spec, warm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn lambda_max_basic_values() {
        let template = PenaltyTemplate::identity(DVector::zeros(2), vec![true; 2]).unwrap();
        assert_relative_eq!(
            lambda_max(100, &template, 0.1).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            lambda_max(25, &template, 0.2).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Doubling the weight scale quarters the upper end.
        let double = PenaltyTemplate::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::zeros(2),
            vec![true; 2],
        )
        .unwrap();
        assert_relative_eq!(
            lambda_max(100, &double, 0.1).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_is_geometric_with_zero_prepended() {
        let grid = build_grid(1.0, 5).unwrap();
        let expected = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
        assert_eq!(grid.len(), 6);
        for (g, e) in grid.iter().zip(expected.iter()) {
            assert_relative_eq!(g, e, epsilon = 1e-12);
        }
        check_grid(&grid).unwrap();
    }

    fn scalar_inputs(theta: f64, sigma_sq: f64) -> SureInputs {
        // J_hat = 1 and n = 1/sigma^2 gives V_hat = sigma^2.
        let n = (1.0 / sigma_sq).round() as usize;
        let template = PenaltyTemplate::identity(DVector::zeros(1), vec![true]).unwrap();
        SureInputs::new(
            DVector::from_vec(vec![theta]),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, sigma_sq),
            n,
            template,
            false,
        )
        .unwrap()
    }

    #[test]
    fn sure_at_zero_is_trace_v() {
        let inputs = scalar_inputs(0.4, 0.01);
        assert_relative_eq!(inputs.sure_value(0.0).unwrap(), 0.01, epsilon = 1e-14);
        let (delta, a) = inputs.shrink_affine(0.0).unwrap();
        assert_eq!(delta, *inputs.theta());
        assert_eq!(a, DMatrix::identity(1, 1));
    }

    #[test]
    fn scalar_sure_matches_closed_form() {
        // Scalar shrinkage with unit J_hat and zero target:
        // A = 1/(1+2l), delta = theta/(1+2l),
        // R(l) = theta^2 (2l/(1+2l))^2 + 2 sigma^2/(1+2l) - sigma^2.
        let theta = 0.7;
        let sigma_sq = 0.01;
        let inputs = scalar_inputs(theta, sigma_sq);
        for i in 0..20 {
            let lambda = 0.01 * (i as f64 + 1.0) * 1.7;
            let shrink = 1.0 / (1.0 + 2.0 * lambda);
            let expected = theta * theta * (2.0 * lambda * shrink).powi(2)
                + 2.0 * sigma_sq * shrink
                - sigma_sq;
            assert_relative_eq!(
                inputs.sure_value(lambda).unwrap(),
                expected,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn huge_lambda_pulls_masked_coordinates_to_target() {
        let template =
            PenaltyTemplate::identity(DVector::from_vec(vec![0.5, -0.5]), vec![true, true])
                .unwrap();
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.2, 0.2, 1.0]);
        let v = linalg::invert(&j, "j").unwrap() / 50.0;
        let inputs =
            SureInputs::new(DVector::from_vec(vec![2.0, 1.0]), j, v, 50, template, false).unwrap();
        let (delta, _) = inputs.shrink_affine(1e9).unwrap();
        assert!((delta[0] - 0.5).abs() <= 1e-6);
        assert!((delta[1] + 0.5).abs() <= 1e-6);
    }

    #[test]
    fn selected_lambda_is_within_one_cell_of_scalar_optimum() {
        // Closed-form minimizer: lambda* = sigma^2 / (2 (theta^2 - sigma^2)).
        let theta = 0.3f64;
        let sigma_sq = 0.01f64;
        let inputs = scalar_inputs(theta, sigma_sq);
        let lam_star = sigma_sq / (2.0 * (theta * theta - sigma_sq));
        let grid = build_grid(lambda_max(100, inputs.template(), 0.1).unwrap(), 50).unwrap();
        let curve = select_sure(&inputs, &grid).unwrap();
        // Find the cell containing the continuous optimum.
        let hi = grid.iter().position(|&g| g >= lam_star).unwrap();
        let cell = [grid[hi - 1], grid[hi]];
        assert!(
            cell.contains(&curve.lambda_hat),
            "selected {} not in bracketing cell [{}, {}] around {lam_star}",
            curve.lambda_hat,
            cell[0],
            cell[1]
        );
    }

    #[test]
    fn decreasing_curve_selects_grid_maximum() {
        // theta^2 < sigma^2: shrinking all the way to the target wins.
        let inputs = scalar_inputs(0.05, 0.01);
        let grid = build_grid(1.0, 30).unwrap();
        let curve = select_sure(&inputs, &grid).unwrap();
        assert_relative_eq!(curve.lambda_hat, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_term_and_trace_term_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let p = 4;
            let raw = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let j = &raw * raw.transpose() + DMatrix::identity(p, p);
            let v = linalg::invert(&j, "j").unwrap() / 80.0;
            let mask = vec![false, true, true, true];
            let template = PenaltyTemplate::identity(DVector::zeros(p), mask).unwrap();
            let theta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let inputs = SureInputs::new(theta.clone(), j, v.clone(), 80, template, false).unwrap();
            let mut prev_fit = -1.0;
            let mut prev_trace = f64::INFINITY;
            for &lambda in &[0.0, 0.01, 0.1, 0.5, 2.0, 10.0, 100.0] {
                let (delta, a) = inputs.shrink_affine(lambda).unwrap();
                let fit_term = (&delta - &theta).norm_squared();
                let trace_term = (&v * &a).trace();
                assert!(fit_term >= prev_fit - 1e-10, "fit term fell at {lambda}");
                assert!(
                    trace_term <= prev_trace + 1e-10,
                    "trace term rose at {lambda}"
                );
                prev_fit = fit_term;
                prev_trace = trace_term;
            }
        }
    }

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logit_sample(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            let eta: f64 = 1.2 * x[(i, 0)] - 0.8 * x[(i, 1)];
            let p = 1.0 / (1.0 + (-eta).exp());
            if rng.gen::<f64>() < p {
                1.0
            } else {
                2.0
            }
        });
        Dataset::categorical(y, x, 2).unwrap()
    }

    #[test]
    fn single_point_grid_is_selected() {
        let ds = logit_sample(3, 60);
        let template = PenaltyTemplate::identity(DVector::zeros(2), vec![true; 2]).unwrap();
        let curve = select_cv(Family::BinaryLogit, &ds, &template, &[0.37], 3, 11).unwrap();
        assert_eq!(curve.lambda_hat, 0.37);
        assert_eq!(curve.selected_index, 0);
    }

    #[test]
    fn duplicated_halves_reproduce_in_sample_curve() {
        // Two identical copies as the two folds: held-out likelihood equals
        // in-sample likelihood of a fit on one copy, because all objectives
        // are per-observation averages.
        let half = logit_sample(9, 40);
        let n = half.n();
        let rows: Vec<usize> = (0..n).chain(0..n).collect();
        let doubled = half.subset(&rows).unwrap();
        let assignment: Vec<usize> = (0..2 * n).map(|i| if i < n { 0 } else { 1 }).collect();
        let template = PenaltyTemplate::identity(DVector::zeros(2), vec![true; 2]).unwrap();
        let grid = [0.0, 0.05, 0.2, 1.0];
        let curve =
            select_cv_assigned(Family::BinaryLogit, &doubled, &template, &grid, &assignment)
                .unwrap();
        let mut init = Family::BinaryLogit.zero_params(&half);
        for (l, &lambda) in grid.iter().enumerate() {
            let spec = template.with_lambda(lambda).unwrap();
            let fitted = fit(Family::BinaryLogit, &half, &spec, &init).unwrap();
            let in_sample = -Family::BinaryLogit
                .loglik(&half, &fitted.theta_hat.values)
                .unwrap();
            assert_relative_eq!(curve.r_hat[l], in_sample, epsilon = 1e-6);
            init = fitted.theta_hat;
        }
    }

    #[test]
    fn training_folds_keep_every_category() {
        let ds = logit_sample(5, 30);
        let assignment = fold_assignment(Family::BinaryLogit, &ds, 5, 42).unwrap();
        for f in 0..5 {
            for cat in 1..=2 {
                let present = (0..ds.n()).any(|i| assignment[i] != f && ds.category(i) == cat);
                assert!(present, "fold {f} lost category {cat}");
            }
        }
    }

    #[test]
    fn rare_category_fold_failure_is_reported() {
        // Category 2 has a single row: it cannot appear in every training
        // fold, so some training fold must lose it.
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        let x = DMatrix::from_fn(6, 1, |i, _| i as f64 / 3.0 - 1.0);
        let ds = Dataset::categorical(y, x, 2).unwrap();
        let template = PenaltyTemplate::identity(DVector::zeros(1), vec![true]).unwrap();
        let err = select_cv(Family::BinaryLogit, &ds, &template, &[0.0, 0.1], 3, 7);
        assert!(matches!(err, Err(Error::DegenerateFold(_))), "{err:?}");
    }

    #[test]
    fn cv_curve_is_deterministic_in_seed() {
        let ds = logit_sample(21, 50);
        let template = PenaltyTemplate::identity(DVector::zeros(2), vec![true; 2]).unwrap();
        let grid = build_grid(1.0, 8).unwrap();
        let a = select_cv(Family::BinaryLogit, &ds, &template, &grid, 5, 99).unwrap();
        let b = select_cv(Family::BinaryLogit, &ds, &template, &grid, 5, 99).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
        assert_eq!(a.lambda_hat, b.lambda_hat);
        let c = select_cv(Family::BinaryLogit, &ds, &template, &grid, 5, 100).unwrap();
        assert_eq!(c.grid, a.grid);
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let inputs = scalar_inputs(0.3, 0.01);
        assert!(select_sure(&inputs, &[0.5, 0.1]).is_err());
        assert!(select_sure(&inputs, &[]).is_err());
        assert!(select_sure(&inputs, &[-0.1, 0.2]).is_err());
    }
}
