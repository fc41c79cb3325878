//! Model families: per-observation log density, score, and Hessian, plus
//! prediction maps.
//!
//! All aggregate quantities are sample averages (the N^-1 convention), so
//! objective values, scores, and Hessians are comparable across sample
//! sizes. Probabilities are always computed through max-subtracted
//! log-sum-exp, so linear predictors up to +-700 never overflow.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::param::{ParamLayout, ParamVector};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// log(exp(a) + exp(b)) without overflow.
fn lse2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Outcomes in 1..=J with the last category as base; per-category
    /// intercept plus slopes, p = (J-1)(k+1).
    MultinomialLogit,
    /// Outcomes in {1, 2}; P(y=1) = sigmoid(x'theta), p = k. No implicit
    /// intercept: include a constant column if one is wanted.
    BinaryLogit,
    /// Nonnegative integer counts with mean exp(x'theta), p = k.
    PoissonLog,
    /// Real outcomes, unit error variance, mean x'theta, p = k.
    LinearGaussian,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial-logit" | "multinomial" => Ok(Family::MultinomialLogit),
            "binary-logit" | "logit" => Ok(Family::BinaryLogit),
            "poisson-log-link" | "poisson" => Ok(Family::PoissonLog),
            "linear-gaussian-known-variance" | "linear-gaussian" | "gaussian" => {
                Ok(Family::LinearGaussian)
            }
            other => Err(Error::invalid(format!("unknown model family '{other}'"))),
        }
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::MultinomialLogit => "multinomial-logit",
            Family::BinaryLogit => "binary-logit",
            Family::PoissonLog => "poisson-log-link",
            Family::LinearGaussian => "linear-gaussian-known-variance",
        }
    }

    /// Checks that the dataset's outcomes are representable by this family.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        match self {
            Family::MultinomialLogit => {
                if ds.category_count() < 2 {
                    return Err(Error::invalid(
                        "multinomial logit needs a categorical dataset with at least 2 categories",
                    ));
                }
            }
            Family::BinaryLogit => {
                if ds.category_count() != 2 {
                    return Err(Error::invalid(
                        "binary logit needs a categorical dataset with exactly 2 categories",
                    ));
                }
            }
            Family::PoissonLog => {
                for (i, y) in ds.outcomes().iter().enumerate() {
                    if *y < 0.0 || y.fract() != 0.0 {
                        return Err(Error::invalid(format!(
                            "outcome {} at row {} is not a nonnegative integer count",
                            y,
                            i + 1
                        )));
                    }
                }
            }
            Family::LinearGaussian => {}
        }
        Ok(())
    }

    pub fn param_len(&self, ds: &Dataset) -> usize {
        match self {
            Family::MultinomialLogit => (ds.category_count() - 1) * (ds.covariate_count() + 1),
            _ => ds.covariate_count(),
        }
    }

    pub fn layout(&self, ds: &Dataset) -> ParamLayout {
        match self {
            Family::MultinomialLogit => {
                ParamLayout::per_category(ds.category_count(), ds.covariate_count())
            }
            _ => ParamLayout::slopes_only(ds.covariate_count()),
        }
    }

    pub fn zero_params(&self, ds: &Dataset) -> ParamVector {
        ParamVector::zeros(self.layout(ds))
    }

    fn check_theta(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<()> {
        let want = self.param_len(ds);
        if theta.len() != want {
            return Err(Error::invalid(format!(
                "{} on this dataset needs {} parameters, got {}",
                self.name(),
                want,
                theta.len()
            )));
        }
        Ok(())
    }

    /// Linear predictors for the non-base categories of observation `i`.
    fn mnl_eta(ds: &Dataset, theta: &DVector<f64>, i: usize, eta: &mut [f64]) {
        let k = ds.covariate_count();
        for (c, e) in eta.iter_mut().enumerate() {
            let base = c * (k + 1);
            let mut v = theta[base];
            for j in 0..k {
                v += theta[base + 1 + j] * ds.covariate(i, j);
            }
            *e = v;
        }
    }

    /// Category probabilities of observation `i` written into `probs`
    /// (length J); returns the log normalizer.
    fn mnl_probs(eta: &[f64], probs: &mut [f64]) -> f64 {
        let j = probs.len();
        let mut m = 0.0f64;
        for &e in eta {
            m = m.max(e);
        }
        let mut sum = 0.0;
        for c in 0..j - 1 {
            let v = (eta[c] - m).exp();
            probs[c] = v;
            sum += v;
        }
        let base = (-m).exp();
        probs[j - 1] = base;
        sum += base;
        for p in probs.iter_mut() {
            *p /= sum;
        }
        m + sum.ln()
    }

    fn xi(ds: &Dataset, i: usize, j_in_block: usize) -> f64 {
        if j_in_block == 0 {
            1.0
        } else {
            ds.covariate(i, j_in_block - 1)
        }
    }

    /// log f(z_i; theta) for a single observation.
    pub fn loglik_obs(&self, ds: &Dataset, theta: &DVector<f64>, i: usize) -> Result<f64> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        Ok(self.loglik_obs_unchecked(ds, theta, i))
    }

    fn loglik_obs_unchecked(&self, ds: &Dataset, theta: &DVector<f64>, i: usize) -> f64 {
        match self {
            Family::MultinomialLogit => {
                let j = ds.category_count();
                let mut eta = vec![0.0; j - 1];
                Self::mnl_eta(ds, theta, i, &mut eta);
                let y = ds.category(i);
                let lse = {
                    let mut m = 0.0f64;
                    for &e in &eta {
                        m = m.max(e);
                    }
                    let mut sum = (-m).exp();
                    for &e in &eta {
                        sum += (e - m).exp();
                    }
                    m + sum.ln()
                };
                let own = if y == j { 0.0 } else { eta[y - 1] };
                own - lse
            }
            Family::BinaryLogit => {
                let eta = theta.dot(&ds.covariate_row(i));
                let lse = lse2(0.0, eta);
                if ds.category(i) == 1 {
                    eta - lse
                } else {
                    -lse
                }
            }
            Family::PoissonLog => {
                let eta = theta.dot(&ds.covariate_row(i));
                let y = ds.outcome(i);
                y * eta - eta.exp() - ln_gamma(y + 1.0)
            }
            Family::LinearGaussian => {
                let eta = theta.dot(&ds.covariate_row(i));
                let r = ds.outcome(i) - eta;
                -0.5 * r * r - HALF_LN_TWO_PI
            }
        }
    }

    /// Sample-average log-likelihood L_N(theta).
    pub fn loglik(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<f64> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        let mut total = 0.0;
        for i in 0..ds.n() {
            total += self.loglik_obs_unchecked(ds, theta, i);
        }
        Ok(total / ds.n() as f64)
    }

    /// Score of a single observation, as a p-vector.
    pub fn score_obs(&self, ds: &Dataset, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        let mut out = DVector::zeros(theta.len());
        self.accumulate_score(ds, theta, i, &mut out);
        Ok(out)
    }

    fn accumulate_score(
        &self,
        ds: &Dataset,
        theta: &DVector<f64>,
        i: usize,
        out: &mut DVector<f64>,
    ) {
        match self {
            Family::MultinomialLogit => {
                let j = ds.category_count();
                let k = ds.covariate_count();
                let mut eta = vec![0.0; j - 1];
                let mut probs = vec![0.0; j];
                Self::mnl_eta(ds, theta, i, &mut eta);
                Self::mnl_probs(&eta, &mut probs);
                let y = ds.category(i);
                for (c, &p) in probs.iter().enumerate().take(j - 1) {
                    let resid = (if y == c + 1 { 1.0 } else { 0.0 }) - p;
                    let base = c * (k + 1);
                    for a in 0..=k {
                        out[base + a] += resid * Self::xi(ds, i, a);
                    }
                }
            }
            Family::BinaryLogit => {
                let x = ds.covariate_row(i);
                let eta = theta.dot(&x);
                let p1 = (eta - lse2(0.0, eta)).exp();
                let resid = (if ds.category(i) == 1 { 1.0 } else { 0.0 }) - p1;
                out.axpy(resid, &x, 1.0);
            }
            Family::PoissonLog => {
                let x = ds.covariate_row(i);
                let eta = theta.dot(&x);
                let resid = ds.outcome(i) - eta.exp();
                out.axpy(resid, &x, 1.0);
            }
            Family::LinearGaussian => {
                let x = ds.covariate_row(i);
                let resid = ds.outcome(i) - theta.dot(&x);
                out.axpy(resid, &x, 1.0);
            }
        }
    }

    /// Sample-average score N^-1 sum_i S(z_i; theta).
    pub fn score_sum(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        let mut out = DVector::zeros(theta.len());
        for i in 0..ds.n() {
            self.accumulate_score(ds, theta, i, &mut out);
        }
        out /= ds.n() as f64;
        Ok(out)
    }

    /// Hessian of a single observation's log density, as a p x p matrix.
    pub fn hessian_obs(
        &self,
        ds: &Dataset,
        theta: &DVector<f64>,
        i: usize,
    ) -> Result<DMatrix<f64>> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        let mut out = DMatrix::zeros(theta.len(), theta.len());
        self.accumulate_hessian(ds, theta, i, &mut out);
        Ok(out)
    }

    fn accumulate_hessian(
        &self,
        ds: &Dataset,
        theta: &DVector<f64>,
        i: usize,
        out: &mut DMatrix<f64>,
    ) {
        match self {
            Family::MultinomialLogit => {
                let j = ds.category_count();
                let k = ds.covariate_count();
                let mut eta = vec![0.0; j - 1];
                let mut probs = vec![0.0; j];
                Self::mnl_eta(ds, theta, i, &mut eta);
                Self::mnl_probs(&eta, &mut probs);
                for c in 0..j - 1 {
                    for d in 0..j - 1 {
                        let delta = if c == d { 1.0 } else { 0.0 };
                        let w = -probs[c] * (delta - probs[d]);
                        if w == 0.0 {
                            continue;
                        }
                        let bc = c * (k + 1);
                        let bd = d * (k + 1);
                        for a in 0..=k {
                            let xa = Self::xi(ds, i, a);
                            for b in 0..=k {
                                out[(bc + a, bd + b)] += w * xa * Self::xi(ds, i, b);
                            }
                        }
                    }
                }
            }
            Family::BinaryLogit => {
                let x = ds.covariate_row(i);
                let eta = theta.dot(&x);
                let p1 = (eta - lse2(0.0, eta)).exp();
                let w = -p1 * (1.0 - p1);
                out.ger(w, &x, &x, 1.0);
            }
            Family::PoissonLog => {
                let x = ds.covariate_row(i);
                let w = -theta.dot(&x).exp();
                out.ger(w, &x, &x, 1.0);
            }
            Family::LinearGaussian => {
                let x = ds.covariate_row(i);
                out.ger(-1.0, &x, &x, 1.0);
            }
        }
    }

    /// Sample-average Hessian N^-1 sum_i H(z_i; theta). Always symmetric.
    pub fn hessian_sum(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dataset(ds)?;
        self.check_theta(ds, theta)?;
        let p = theta.len();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..ds.n() {
            self.accumulate_hessian(ds, theta, i, &mut out);
        }
        out /= ds.n() as f64;
        Ok(crate::linalg::symmetrize(&out))
    }

    /// Number of entries `predict` returns for a covariate vector of
    /// length `k` under a p-dimensional parameter.
    pub fn prediction_len(&self, p: usize, k: usize) -> Result<usize> {
        match self {
            Family::MultinomialLogit => {
                if p == 0 || !p.is_multiple_of(k + 1) {
                    return Err(Error::invalid(format!(
                        "parameter length {p} is not a multiple of k+1 = {}",
                        k + 1
                    )));
                }
                Ok(p / (k + 1) + 1)
            }
            Family::BinaryLogit => {
                if p != k {
                    return Err(Error::invalid(format!(
                        "binary logit needs {k} parameters for a {k}-covariate point, got {p}"
                    )));
                }
                Ok(2)
            }
            Family::PoissonLog | Family::LinearGaussian => {
                if p != k {
                    return Err(Error::invalid(format!(
                        "{} needs {k} parameters for a {k}-covariate point, got {p}",
                        self.name()
                    )));
                }
                Ok(1)
            }
        }
    }

    /// Prediction at covariate point `z`: a probability vector over
    /// categories for the discrete families, the mean otherwise.
    pub fn predict(&self, theta: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.prediction_len(theta.len(), z.len())?;
        match self {
            Family::MultinomialLogit => {
                let j = m;
                let k = z.len();
                let mut eta = vec![0.0; j - 1];
                for (c, e) in eta.iter_mut().enumerate() {
                    let base = c * (k + 1);
                    let mut v = theta[base];
                    for a in 0..k {
                        v += theta[base + 1 + a] * z[a];
                    }
                    *e = v;
                }
                let mut probs = vec![0.0; j];
                Self::mnl_probs(&eta, &mut probs);
                Ok(DVector::from_vec(probs))
            }
            Family::BinaryLogit => {
                let eta = theta.dot(z);
                let p1 = (eta - lse2(0.0, eta)).exp();
                Ok(DVector::from_vec(vec![p1, 1.0 - p1]))
            }
            Family::PoissonLog => Ok(DVector::from_vec(vec![theta.dot(z).exp()])),
            Family::LinearGaussian => Ok(DVector::from_vec(vec![theta.dot(z)])),
        }
    }

    /// Jacobian of `predict` with respect to theta: one row per prediction
    /// component, p columns.
    pub fn prediction_gradient(
        &self,
        theta: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let m = self.prediction_len(theta.len(), z.len())?;
        let p = theta.len();
        let k = z.len();
        match self {
            Family::MultinomialLogit => {
                let probs = self.predict(theta, z)?;
                let j = m;
                let mut out = DMatrix::zeros(j, p);
                // d p_r / d eta_c = p_r (1{r=c} - p_c); d eta_c / d theta = x-tilde
                for r in 0..j {
                    for c in 0..j - 1 {
                        let dpr = probs[r] * ((if r == c { 1.0 } else { 0.0 }) - probs[c]);
                        let base = c * (k + 1);
                        out[(r, base)] += dpr;
                        for a in 0..k {
                            out[(r, base + 1 + a)] += dpr * z[a];
                        }
                    }
                }
                Ok(out)
            }
            Family::BinaryLogit => {
                let probs = self.predict(theta, z)?;
                let w = probs[0] * (1.0 - probs[0]);
                let mut out = DMatrix::zeros(2, p);
                for a in 0..p {
                    out[(0, a)] = w * z[a];
                    out[(1, a)] = -w * z[a];
                }
                Ok(out)
            }
            Family::PoissonLog => {
                let mu = theta.dot(z).exp();
                let mut out = DMatrix::zeros(1, p);
                for a in 0..p {
                    out[(0, a)] = mu * z[a];
                }
                Ok(out)
            }
            Family::LinearGaussian => {
                let mut out = DMatrix::zeros(1, p);
                for a in 0..p {
                    out[(0, a)] = z[a];
                }
                Ok(out)
            }
        }
    }
}
