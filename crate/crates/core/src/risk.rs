//! First-order risk approximation for the penalized estimator.
//!
//! Inputs are the moment matrices E(H_1) and E(SS') at a reference
//! parameter, a sample size, and a penalty template. The approximation for
//! the mean squared error matrix is
//!
//!   MSE(lambda) = N^-1 Q_l E(SS') Q_l' + b(lambda) b(lambda)',
//!
//! with Q_l = (E(H_1) - 2 lambda Lambda'Lambda)^-1 and first-order bias
//! b(lambda) = 2 lambda Q_l Lambda'Lambda (theta_ref - theta_H). The first
//! term is the variance contribution and the second the squared bias.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::penalty::PenaltyTemplate;

/// Moment matrices and penalty geometry at a reference parameter.
#[derive(Debug, Clone)]
pub struct MomentInputs {
    eh1: DMatrix<f64>,
    ess: DMatrix<f64>,
    n: usize,
    template: PenaltyTemplate,
    theta_ref: DVector<f64>,
}

/// The two components of the first-order mean squared error.
#[derive(Debug, Clone)]
pub struct RiskApprox {
    pub variance: DMatrix<f64>,
    pub bias_sq: DMatrix<f64>,
    pub total: DMatrix<f64>,
    pub trace_risk: f64,
}

/// Outcome of the curvature-weighted improvement threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImprovementRange {
    /// Risk improves over maximum likelihood for every positive strength.
    All,
    /// Risk improves for strengths up to the contained threshold.
    Bounded(f64),
}

impl MomentInputs {
    pub fn new(
        eh1: DMatrix<f64>,
        ess: DMatrix<f64>,
        n: usize,
        template: PenaltyTemplate,
        theta_ref: DVector<f64>,
    ) -> Result<Self> {
        let p = template.p();
        if eh1.nrows() != p || eh1.ncols() != p || ess.nrows() != p || ess.ncols() != p {
            return Err(Error::invalid(format!(
                "moment matrices must be {p}x{p} to match the penalty template"
            )));
        }
        if theta_ref.len() != p {
            return Err(Error::invalid(format!(
                "reference parameter has {} entries, expected {p}",
                theta_ref.len()
            )));
        }
        if theta_ref.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reference parameter has a non-finite entry"));
        }
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let scale = eh1.amax().max(1.0);
        if linalg::asymmetry(&eh1) > 1e-8 * scale {
            return Err(Error::invalid("E(H1) is not symmetric"));
        }
        let ess_scale = ess.amax().max(1.0);
        if linalg::asymmetry(&ess) > 1e-8 * ess_scale {
            return Err(Error::invalid("E(SS') is not symmetric"));
        }
        let neg_min = linalg::min_eigenvalue(&(-&eh1));
        if neg_min <= linalg::EIG_FLOOR * scale {
            return Err(Error::SingularMoment(format!(
                "-E(H1) is not positive definite (min eigenvalue {neg_min:.3e})"
            )));
        }
        let ess_min = linalg::min_eigenvalue(&ess);
        if ess_min < -1e-10 * ess_scale {
            return Err(Error::SingularMoment(format!(
                "E(SS') is not positive semidefinite (min eigenvalue {ess_min:.3e})"
            )));
        }
        Ok(MomentInputs {
            eh1: linalg::symmetrize(&eh1),
            ess: linalg::symmetrize(&ess),
            n,
            template,
            theta_ref,
        })
    }

    /// Sample-moment construction: E(H1) from the average Hessian and
    /// E(SS') from the average score outer product, both at `theta_ref`.
    pub fn from_sample(
        family: Family,
        ds: &crate::dataset::Dataset,
        theta_ref: &DVector<f64>,
        template: PenaltyTemplate,
    ) -> Result<Self> {
        let eh1 = family.hessian_sum(ds, theta_ref)?;
        let p = theta_ref.len();
        let mut ess = DMatrix::zeros(p, p);
        for i in 0..ds.n() {
            let s = family.score_obs(ds, theta_ref, i)?;
            ess.ger(1.0, &s, &s, 1.0);
        }
        ess /= ds.n() as f64;
        MomentInputs::new(eh1, ess, ds.n(), template, theta_ref.clone())
    }

    pub fn eh1(&self) -> &DMatrix<f64> {
        &self.eh1
    }

    pub fn ess(&self) -> &DMatrix<f64> {
        &self.ess
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn template(&self) -> &PenaltyTemplate {
        &self.template
    }

    pub fn theta_ref(&self) -> &DVector<f64> {
        &self.theta_ref
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!(
                "penalty strength must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(())
    }

    /// Q_lambda = (E(H1) - 2 lambda Lambda'Lambda)^-1.
    pub fn q_lambda(&self, lambda: f64) -> Result<DMatrix<f64>> {
        Self::check_lambda(lambda)?;
        let m = &self.eh1 - self.template.gram() * (2.0 * lambda);
        linalg::invert(&m, "E(H1) - 2 lambda Lambda'Lambda")
    }

    /// First-order bias vector of the penalized estimator.
    ///
    /// Zero at lambda = 0 and whenever the target equals the reference
    /// parameter; matches the closed-form expectation of the linear
    /// Gaussian ridge estimator.
    pub fn bias_first_order(&self, lambda: f64) -> Result<DVector<f64>> {
        let q = self.q_lambda(lambda)?;
        let dev = &self.theta_ref - self.template.target();
        Ok(q * (self.template.gram() * dev) * (2.0 * lambda))
    }

    /// First-order MSE split into variance and squared-bias terms.
    pub fn mse_first_order(&self, lambda: f64) -> Result<RiskApprox> {
        let q = self.q_lambda(lambda)?;
        let variance = linalg::symmetrize(&(&q * &self.ess * q.transpose() / self.n as f64));
        let bias = self.bias_first_order(lambda)?;
        let mut bias_sq = DMatrix::zeros(bias.len(), bias.len());
        bias_sq.ger(1.0, &bias, &bias, 1.0);
        let total = &variance + &bias_sq;
        let trace_risk = total.trace();
        Ok(RiskApprox {
            variance,
            bias_sq,
            total,
            trace_risk,
        })
    }

    /// Largest strength guaranteed to improve the full MSE matrix over
    /// maximum likelihood, evaluated on the penalized coordinates:
    /// min_eig(A_mm) / (N d_m' A_mm A_mm d_m) with A = Lambda'Lambda and
    /// d = theta_ref - theta_H. Infinite when the target is correct on the
    /// penalized coordinates.
    pub fn improvement_bound(&self) -> f64 {
        let mask = self.template.mask();
        if self.template.masked_count() == 0 {
            return f64::INFINITY;
        }
        let gram = self.template.gram();
        let a = linalg::masked_block(&gram, mask);
        let dev = &self.theta_ref - self.template.target();
        let d = linalg::masked_entries(&dev, mask);
        let ad = &a * &d;
        let denom = self.n as f64 * ad.norm_squared();
        if denom == 0.0 {
            return f64::INFINITY;
        }
        linalg::min_eigenvalue(&a) / denom
    }

    /// Improvement range for the curvature square-root weighting, where
    /// the threshold has the closed form t / (||d||^2 - t) with
    /// t = trace(N^-1 Q E(SS') Q') on the penalized coordinates.
    ///
    /// Fails unless the template's weight equals the symmetric PSD square
    /// root of -E(H1) on the penalized block.
    pub fn prop1_threshold(&self) -> Result<ImprovementRange> {
        let mask = self.template.mask();
        if self.template.masked_count() == 0 {
            return Err(Error::InvalidWeighting(
                "improvement threshold needs at least one penalized coordinate".into(),
            ));
        }
        let info_block = linalg::masked_block(&(-&self.eh1), mask);
        let expected_root = linalg::psd_sqrt(&info_block);
        let actual_root = linalg::masked_block(self.template.weight(), mask);
        let scale = expected_root.amax().max(1.0);
        if (&expected_root - &actual_root).amax() > 1e-8 * scale {
            return Err(Error::InvalidWeighting(
                "threshold formula needs the curvature square-root weighting".into(),
            ));
        }

        let q = linalg::invert(&self.eh1, "E(H1)")?;
        let sandwich = &q * &self.ess * q.transpose() / self.n as f64;
        let trace_term: f64 = mask
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| sandwich[(i, i)])
            .sum();
        let dev = &self.theta_ref - self.template.target();
        let dist = linalg::masked_entries(&dev, mask).norm_squared();
        if dist > trace_term {
            Ok(ImprovementRange::Bounded(trace_term / (dist - trace_term)))
        } else {
            Ok(ImprovementRange::All)
        }
    }

    /// Delta-method prediction MSE at covariate point `z`: one value per
    /// prediction component, grad' MSE(lambda) grad.
    pub fn prediction_mse_first_order(
        &self,
        family: Family,
        z: &DVector<f64>,
        lambda: f64,
    ) -> Result<DVector<f64>> {
        let approx = self.mse_first_order(lambda)?;
        let grad = family.prediction_gradient(&self.theta_ref, z)?;
        let m = grad.nrows();
        let mut out = DVector::zeros(m);
        for r in 0..m {
            let g = grad.row(r).transpose();
            out[r] = (&approx.total * &g).dot(&g);
        }
        Ok(out)
    }
}
