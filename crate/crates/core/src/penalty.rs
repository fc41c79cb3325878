//! Penalty templates: weight matrix, shrinkage target, and coordinate mask.
//!
//! A template fixes everything about the penalty except the scalar strength
//! lambda. The weight matrix is stored already embedded on the mask, so the
//! unpenalized rows and columns are exactly zero and the masked block of
//! Lambda' Lambda is positive definite.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg;

/// Recipe for the penalty weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Lambda = identity on the masked coordinates.
    Identity,
    /// Lambda = symmetric PSD square root of the masked block of the
    /// negative average Hessian at a reference estimate.
    Hessian,
    /// Lambda = symmetric PSD square root of the sample second-moment
    /// matrix of the covariates, repeated on each slope block.
    Covariate,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Weighting::Identity),
            "hessian" => Ok(Weighting::Hessian),
            "covariate" => Ok(Weighting::Covariate),
            other => Err(Error::invalid(format!("unknown weighting '{other}'"))),
        }
    }
}

impl Weighting {
    pub fn name(&self) -> &'static str {
        match self {
            Weighting::Identity => "identity",
            Weighting::Hessian => "hessian",
            Weighting::Covariate => "covariate",
        }
    }
}

/// Penalty with everything fixed except lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTemplate {
    weight: DMatrix<f64>,
    target: DVector<f64>,
    mask: Vec<bool>,
}

impl PenaltyTemplate {
    /// Builds a template, zeroing the unmasked rows and columns of `weight`
    /// and checking that the masked block of Lambda' Lambda is positive
    /// definite.
    pub fn new(weight: DMatrix<f64>, target: DVector<f64>, mask: Vec<bool>) -> Result<Self> {
        let p = mask.len();
        if weight.nrows() != p || weight.ncols() != p {
            return Err(Error::invalid(format!(
                "weight matrix is {}x{} but the mask has {} coordinates",
                weight.nrows(),
                weight.ncols(),
                p
            )));
        }
        if target.len() != p {
            return Err(Error::invalid(format!(
                "target has {} entries but the mask has {}",
                target.len(),
                p
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("target has a non-finite entry"));
        }
        if weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeighting(
                "weight has a non-finite entry".into(),
            ));
        }
        let mut weight = weight;
        for (i, &on) in mask.iter().enumerate() {
            if !on {
                weight.row_mut(i).fill(0.0);
                weight.column_mut(i).fill(0.0);
            }
        }
        let masked = mask.iter().filter(|&&b| b).count();
        if masked > 0 {
            let gram = weight.transpose() * &weight;
            let block = linalg::masked_block(&gram, &mask);
            let min = linalg::min_eigenvalue(&block);
            if min <= linalg::EIG_FLOOR {
                return Err(Error::InvalidWeighting(format!(
                    "weight gram matrix is singular on the penalized coordinates (min eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(PenaltyTemplate {
            weight,
            target,
            mask,
        })
    }

    /// Template that penalizes nothing. The only valid strength is 0.
    pub fn inert(p: usize) -> Self {
        PenaltyTemplate {
            weight: DMatrix::zeros(p, p),
            target: DVector::zeros(p),
            mask: vec![false; p],
        }
    }

    /// Identity weight on the masked coordinates.
    pub fn identity(target: DVector<f64>, mask: Vec<bool>) -> Result<Self> {
        let p = mask.len();
        let weight = DMatrix::from_fn(p, p, |i, j| if i == j && mask[i] { 1.0 } else { 0.0 });
        Self::new(weight, target, mask)
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn p(&self) -> usize {
        self.mask.len()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Lambda' Lambda, the matrix the penalty actually uses.
    pub fn gram(&self) -> DMatrix<f64> {
        linalg::symmetrize(&(self.weight.transpose() * &self.weight))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<PenaltySpec> {
        PenaltySpec::new(lambda, self.clone())
    }
}

/// A template plus a strength: the object the estimator consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    lambda: f64,
    template: PenaltyTemplate,
}

impl PenaltySpec {
    pub fn new(lambda: f64, template: PenaltyTemplate) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid(format!(
                "penalty strength must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(PenaltySpec { lambda, template })
    }

    /// The unpenalized specification used by maximum likelihood.
    pub fn unpenalized(p: usize) -> Self {
        PenaltySpec {
            lambda: 0.0,
            template: PenaltyTemplate::inert(p),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn template(&self) -> &PenaltyTemplate {
        &self.template
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        self.template.weight()
    }

    pub fn target(&self) -> &DVector<f64> {
        self.template.target()
    }

    pub fn mask(&self) -> &[bool] {
        self.template.mask()
    }

    pub fn p(&self) -> usize {
        self.template.p()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.template.gram()
    }
}

/// Parameter indices of each slope block, in covariate order. Multinomial
/// layouts have one block per non-base category; the other families have a
/// single block covering all coordinates.
pub fn slope_blocks(family: Family, ds: &Dataset) -> Vec<Vec<usize>> {
    let k = ds.covariate_count();
    match family {
        Family::MultinomialLogit => (0..ds.category_count() - 1)
            .map(|c| {
                let base = c * (k + 1);
                (base + 1..=base + k).collect()
            })
            .collect(),
        _ => vec![(0..k).collect()],
    }
}

/// Builds a penalty template for a fitted model.
///
/// `theta_ref` is the estimate the Hessian weighting differentiates at
/// (normally the maximum-likelihood fit). `mask` defaults to the slope
/// coordinates of the family's layout.
pub fn build_template(
    kind: Weighting,
    family: Family,
    ds: &Dataset,
    theta_ref: &DVector<f64>,
    target: DVector<f64>,
    mask: Option<Vec<bool>>,
) -> Result<PenaltyTemplate> {
    let layout = family.layout(ds);
    let p = layout.len();
    let mask = mask.unwrap_or_else(|| layout.slope_mask());
    if mask.len() != p {
        return Err(Error::invalid(format!(
            "mask has {} entries but the model has {} parameters",
            mask.len(),
            p
        )));
    }
    match kind {
        Weighting::Identity => PenaltyTemplate::identity(target, mask),
        Weighting::Hessian => {
            let info = -family.hessian_sum(ds, theta_ref)?;
            let block = linalg::masked_block(&info, &mask);
            let root = linalg::psd_sqrt(&block);
            let weight = linalg::embed_block(&root, &mask);
            PenaltyTemplate::new(weight, target, mask)
        }
        Weighting::Covariate => {
            let x = ds.covariates();
            let second_moment = x.transpose() * x / ds.n() as f64;
            let root = linalg::psd_sqrt(&second_moment);
            let mut weight = DMatrix::zeros(p, p);
            for block in slope_blocks(family, ds) {
                for (a, &ia) in block.iter().enumerate() {
                    for (b, &ib) in block.iter().enumerate() {
                        weight[(ia, ib)] = root[(a, b)];
                    }
                }
            }
            PenaltyTemplate::new(weight, target, mask)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn unmasked_rows_are_zeroed() {
        let w = DMatrix::from_row_slice(3, 3, &[5.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 3.0]);
        let t = PenaltyTemplate::new(w, DVector::zeros(3), vec![false, true, true]).unwrap();
        assert_eq!(t.weight()[(0, 0)], 0.0);
        assert_eq!(t.weight()[(0, 1)], 0.0);
        assert_eq!(t.weight()[(1, 0)], 0.0);
        assert_eq!(t.weight()[(1, 2)], 1.0);
    }

    #[test]
    fn singular_masked_block_is_rejected() {
        // Rank-one weight on a two-coordinate mask.
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = PenaltyTemplate::new(w, DVector::zeros(2), vec![true, true]);
        assert!(matches!(err, Err(Error::InvalidWeighting(_))));
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let t = PenaltyTemplate::identity(DVector::zeros(2), vec![true, true]).unwrap();
        assert!(t.with_lambda(-0.5).is_err());
        assert!(t.with_lambda(f64::NAN).is_err());
    }

    #[test]
    fn hessian_weighting_squares_to_masked_information() {
        use crate::dataset::Dataset;
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 2.0, 1.0, 3.0]);
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 2 + j + 1) as f64 * 0.37).sin());
        let ds = Dataset::categorical(y, x, 3).unwrap();
        let fam = Family::MultinomialLogit;
        let theta = DVector::zeros(6);
        let mask = fam.layout(&ds).slope_mask();
        let template = build_template(
            Weighting::Hessian,
            fam,
            &ds,
            &theta,
            DVector::zeros(6),
            None,
        )
        .unwrap();
        let info = -fam.hessian_sum(&ds, &theta).unwrap();
        let expected =
            crate::linalg::embed_block(&crate::linalg::masked_block(&info, &mask), &mask);
        assert_relative_eq!(template.gram(), expected, epsilon = 1e-10);
    }

    #[test]
    fn covariate_weighting_repeats_blocks_per_category() {
        use crate::dataset::Dataset;
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 1.0]);
        let x = DMatrix::from_row_slice(4, 2, &[0.4, 1.0, -0.3, 0.2, 1.1, -0.6, 0.0, 0.9]);
        let ds = Dataset::categorical(y, x.clone(), 3).unwrap();
        let fam = Family::MultinomialLogit;
        let template = build_template(
            Weighting::Covariate,
            fam,
            &ds,
            &DVector::zeros(6),
            DVector::zeros(6),
            None,
        )
        .unwrap();
        let root = crate::linalg::psd_sqrt(&(x.transpose() * &x / 4.0));
        // Same 2x2 root on both category slope blocks.
        assert_relative_eq!(template.weight()[(1, 2)], root[(0, 1)], epsilon = 1e-12);
        assert_relative_eq!(template.weight()[(4, 5)], root[(0, 1)], epsilon = 1e-12);
        assert_eq!(template.weight()[(0, 0)], 0.0);
        assert_eq!(template.weight()[(1, 4)], 0.0);
    }
}
