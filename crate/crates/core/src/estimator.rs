//! Penalized maximum-likelihood fitting.
//!
//! Maximizes M(theta) = L_N(theta) - lambda ||Lambda (theta - theta_H)||^2
//! by damped Newton steps on the penalized objective. The Newton system
//! falls back to Levenberg-style diagonal damping when the curvature matrix
//! is not positive definite, and every accepted step satisfies an Armijo
//! condition, so the objective never decreases between iterations.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::param::ParamVector;
use crate::penalty::PenaltySpec;

pub const MAX_ITERATIONS: usize = 200;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 50;
const DAMPING_START: f64 = 1e-10;
const DAMPING_LIMIT: f64 = 1e16;

/// Thresholds for the separation heuristic.
const SEPARATION_COEF: f64 = 1e3;
const SEPARATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Penalized objective value at the solution.
    pub objective_value: f64,
    /// Hessian of the penalized objective at the solution, symmetric.
    pub observed_hessian: DMatrix<f64>,
    /// True when the fit looks separated: some coefficient exceeds 1e3 in
    /// absolute value or the observed Hessian has condition number above
    /// 1e12.
    pub suspect_separation: bool,
}

struct Problem<'a> {
    family: Family,
    ds: &'a Dataset,
    penalty: &'a PenaltySpec,
    /// 2 lambda Lambda' Lambda, precomputed.
    gram2: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    fn new(family: Family, ds: &'a Dataset, penalty: &'a PenaltySpec) -> Self {
        let gram2 = penalty.gram() * (2.0 * penalty.lambda());
        Problem {
            family,
            ds,
            penalty,
            gram2,
        }
    }

    fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        let ll = self.family.loglik(self.ds, theta)?;
        let dev = theta - self.penalty.target();
        let quad = (self.gram2.clone() * &dev).dot(&dev) * 0.5;
        Ok(ll - quad)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let score = self.family.score_sum(self.ds, theta)?;
        let dev = theta - self.penalty.target();
        Ok(score - &self.gram2 * dev)
    }

    fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.family.hessian_sum(self.ds, theta)? - &self.gram2)
    }
}

/// Solves (-H + mu I) d = g, escalating mu from `DAMPING_START` by factors
/// of 10 until the factorization succeeds.
fn damped_newton_direction(
    neg_hessian: &DMatrix<f64>,
    gradient: &DVector<f64>,
) -> Result<DVector<f64>> {
    if let Some(chol) = neg_hessian.clone().cholesky() {
        return Ok(chol.solve(gradient));
    }
    let mut mu = DAMPING_START;
    while mu < DAMPING_LIMIT {
        let mut damped = neg_hessian.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += mu;
        }
        if let Some(chol) = damped.cholesky() {
            return Ok(chol.solve(gradient));
        }
        mu *= 10.0;
    }
    Err(Error::SolverFailure(
        "Newton system stayed singular after diagonal damping".into(),
    ))
}

/// Fits the penalized estimator from `init`.
///
/// Non-convergence within the iteration budget is reported through
/// `converged = false`, not as an error; only an unsalvageable Newton
/// system is.
pub fn fit(
    family: Family,
    ds: &Dataset,
    penalty: &PenaltySpec,
    init: &ParamVector,
) -> Result<FitResult> {
    family.check_dataset(ds)?;
    let p = family.param_len(ds);
    if p == 0 {
        return Err(Error::invalid("model has no parameters"));
    }
    if penalty.p() != p {
        return Err(Error::invalid(format!(
            "penalty is for {} parameters but the model has {p}",
            penalty.p()
        )));
    }
    if init.len() != p {
        return Err(Error::invalid(format!(
            "initial point has {} entries but the model has {p} parameters",
            init.len()
        )));
    }

    let problem = Problem::new(family, ds, penalty);
    let mut theta = init.values.clone();
    let mut objective = problem.objective(&theta)?;
    if !objective.is_finite() {
        return Err(Error::SolverFailure(
            "objective is not finite at the initial point".into(),
        ));
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut gradient = problem.gradient(&theta)?;
    while iterations < MAX_ITERATIONS {
        let gnorm = gradient.norm();
        if gnorm <= GRADIENT_TOL * theta.norm().max(1.0) {
            converged = true;
            break;
        }

        let neg_hessian = -problem.hessian(&theta)?;
        let direction = damped_newton_direction(&neg_hessian, &gradient)?;
        let slope = gradient.dot(&direction);
        if slope <= 0.0 {
            // Damping produced a non-ascent direction; nothing useful left.
            break;
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &theta + &direction * step;
            let value = problem.objective(&candidate)?;
            if value.is_finite() && value >= objective + ARMIJO_C * step * slope {
                theta = candidate;
                objective = value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        gradient = problem.gradient(&theta)?;
        if gradient.norm() <= GRADIENT_TOL * theta.norm().max(1.0) {
            converged = true;
            break;
        }
    }

    let observed_hessian = linalg::symmetrize(&problem.hessian(&theta)?);
    let final_gradient_norm = problem.gradient(&theta)?.norm();
    let max_abs = theta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let suspect_separation = max_abs > SEPARATION_COEF
        || linalg::sym_condition(&observed_hessian) > SEPARATION_CONDITION;
    let theta_hat = ParamVector::new(theta, family.layout(ds))?;
    Ok(FitResult {
        theta_hat,
        converged,
        iterations,
        final_gradient_norm,
        objective_value: objective,
        observed_hessian,
        suspect_separation,
    })
}

/// Maximum-likelihood fit: `fit` with a zero-strength penalty.
pub fn fit_mle(family: Family, ds: &Dataset, init: &ParamVector) -> Result<FitResult> {
    let penalty = PenaltySpec::unpenalized(family.param_len(ds));
    fit(family, ds, &penalty, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltyTemplate;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_toy(seed: u64, n: usize, k: usize) -> (Dataset, DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(k, |i, _| 0.5 - 0.2 * i as f64);
        let y = &x * &beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ds = Dataset::continuous(y.clone(), x.clone()).unwrap();
        (ds, x, y)
    }

    #[test]
    fn unpenalized_gaussian_fit_is_ols() {
        let (ds, x, y) = gaussian_toy(3, 40, 3);
        let fit = fit_mle(
            Family::LinearGaussian,
            &ds,
            &Family::LinearGaussian.zero_params(&ds),
        )
        .unwrap();
        let ols = (x.transpose() * &x)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.theta_hat.values, ols, epsilon = 1e-10);
    }

    #[test]
    fn ridge_fit_matches_closed_form() {
        let (ds, x, y) = gaussian_toy(11, 30, 4);
        let template = PenaltyTemplate::identity(DVector::zeros(4), vec![true; 4]).unwrap();
        for lambda in [0.05, 0.5, 5.0] {
            let spec = template.with_lambda(lambda).unwrap();
            let fit = fit(
                Family::LinearGaussian,
                &ds,
                &spec,
                &Family::LinearGaussian.zero_params(&ds),
            )
            .unwrap();
            let n = ds.n() as f64;
            let m = x.transpose() * &x / n + DMatrix::identity(4, 4) * (2.0 * lambda);
            let rhs = x.transpose() * &y / n;
            let oracle = m.lu().solve(&rhs).unwrap();
            assert_relative_eq!(fit.theta_hat.values, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_lambda_fit_equals_mle_bitwise() {
        let (ds, _, _) = gaussian_toy(21, 25, 3);
        let template =
            PenaltyTemplate::identity(DVector::from_vec(vec![1.0, -2.0, 0.5]), vec![true; 3])
                .unwrap();
        let spec = template.with_lambda(0.0).unwrap();
        let init = Family::LinearGaussian.zero_params(&ds);
        let a = fit(Family::LinearGaussian, &ds, &spec, &init).unwrap();
        let b = fit_mle(Family::LinearGaussian, &ds, &init).unwrap();
        assert_eq!(a.theta_hat.values, b.theta_hat.values);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    }

    #[test]
    fn huge_lambda_pins_estimate_to_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| if x[(i, 0)] > 0.0 { 1.0 } else { 2.0 });
        let ds = Dataset::categorical(y, x, 2).unwrap();
        let target = DVector::from_vec(vec![0.3, -0.7]);
        let template = PenaltyTemplate::identity(target.clone(), vec![true; 2]).unwrap();
        let spec = template.with_lambda(1e6).unwrap();
        let fit = fit(
            Family::BinaryLogit,
            &ds,
            &spec,
            &Family::BinaryLogit.zero_params(&ds),
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.theta_hat.values - target).norm() <= 1e-3);
    }

    #[test]
    fn separated_logit_is_flagged() {
        // Perfectly separated on a weak covariate: the slope has to run
        // far past the coefficient threshold before the gradient flattens.
        let x = DMatrix::from_fn(20, 1, |i, _| (i as f64 - 9.5) / 1000.0);
        let y = DVector::from_fn(20, |i, _| if i >= 10 { 2.0 } else { 1.0 });
        let ds = Dataset::categorical(y, x, 2).unwrap();
        let fit = fit_mle(
            Family::BinaryLogit,
            &ds,
            &Family::BinaryLogit.zero_params(&ds),
        )
        .unwrap();
        assert!(!fit.converged || fit.suspect_separation);
    }

    #[test]
    fn different_inits_reach_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 120;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            let eta: f64 = 0.8 * x[(i, 0)] - 0.5 * x[(i, 1)];
            let p = 1.0 / (1.0 + (-eta).exp());
            if rng.gen::<f64>() < p {
                1.0
            } else {
                2.0
            }
        });
        let ds = Dataset::categorical(y, x, 2).unwrap();
        let template = PenaltyTemplate::identity(DVector::zeros(2), vec![true; 2]).unwrap();
        let spec = template.with_lambda(0.3).unwrap();
        let zero = Family::BinaryLogit.zero_params(&ds);
        let other =
            ParamVector::new(DVector::from_vec(vec![2.0, -3.0]), zero.layout.clone()).unwrap();
        let a = fit(Family::BinaryLogit, &ds, &spec, &zero).unwrap();
        let b = fit(Family::BinaryLogit, &ds, &spec, &other).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.theta_hat.values - b.theta_hat.values).norm() <= 1e-6);
    }

    #[test]
    fn penalized_deviation_shrinks_as_lambda_grows() {
        let (ds, _, _) = gaussian_toy(31, 60, 3);
        let target = DVector::from_vec(vec![0.1, 0.1, 0.1]);
        let template = PenaltyTemplate::identity(target.clone(), vec![true; 3]).unwrap();
        let mut previous = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let spec = template.with_lambda(lambda).unwrap();
            let fit = fit(
                Family::LinearGaussian,
                &ds,
                &spec,
                &Family::LinearGaussian.zero_params(&ds),
            )
            .unwrap();
            let dev = (fit.theta_hat.values - &target).norm();
            assert!(
                dev <= previous + 1e-10,
                "lambda {lambda}: {dev} > {previous}"
            );
            previous = dev;
        }
    }

    #[test]
    fn objective_never_below_initial_value() {
        let (ds, _, _) = gaussian_toy(44, 30, 3);
        let template = PenaltyTemplate::identity(DVector::zeros(3), vec![true; 3]).unwrap();
        let spec = template.with_lambda(0.2).unwrap();
        let init = ParamVector::new(
            DVector::from_vec(vec![5.0, -5.0, 5.0]),
            Family::LinearGaussian.layout(&ds),
        )
        .unwrap();
        let problem_value_at_init = {
            let ll = Family::LinearGaussian.loglik(&ds, &init.values).unwrap();
            let dev = &init.values - spec.target();
            ll - spec.lambda() * (spec.gram() * &dev).dot(&dev)
        };
        let fit = fit(Family::LinearGaussian, &ds, &spec, &init).unwrap();
        assert!(fit.objective_value >= problem_value_at_init - 1e-12);
    }

    #[test]
    fn mismatched_penalty_dimension_is_rejected() {
        let (ds, _, _) = gaussian_toy(1, 10, 3);
        let penalty = PenaltySpec::unpenalized(2);
        let err = fit(
            Family::LinearGaussian,
            &ds,
            &penalty,
            &Family::LinearGaussian.zero_params(&ds),
        );
        assert!(err.is_err());
    }
}
