//! Parameter vectors with a named-block layout.
//!
//! The layout records which coordinates are intercepts and which are slopes
//! so penalty masks and slope-only metrics can address them by role rather
//! than by hard-coded index arithmetic.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordKind {
    Intercept,
    Slope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coord {
    pub kind: CoordKind,
    /// Human-readable label such as `cat1:intercept` or `cat2:x3`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    coords: Vec<Coord>,
}

impl ParamLayout {
    pub fn new(coords: Vec<Coord>) -> Self {
        ParamLayout { coords }
    }

    /// Layout for one block of `k` slope coefficients, no intercept.
    pub fn slopes_only(k: usize) -> Self {
        let coords = (0..k)
            .map(|j| Coord {
                kind: CoordKind::Slope,
                label: format!("x{}", j + 1),
            })
            .collect();
        ParamLayout { coords }
    }

    /// Layout for `categories - 1` blocks of (intercept, k slopes).
    pub fn per_category(categories: usize, k: usize) -> Self {
        let mut coords = Vec::with_capacity((categories - 1) * (k + 1));
        for c in 1..categories {
            coords.push(Coord {
                kind: CoordKind::Intercept,
                label: format!("cat{c}:intercept"),
            });
            for j in 0..k {
                coords.push(Coord {
                    kind: CoordKind::Slope,
                    label: format!("cat{c}:x{}", j + 1),
                });
            }
        }
        ParamLayout { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn labels(&self) -> Vec<&str> {
        self.coords.iter().map(|c| c.label.as_str()).collect()
    }

    /// Mask that is true exactly on slope coordinates. This is the default
    /// penalization mask: intercepts stay unpenalized.
    pub fn slope_mask(&self) -> Vec<bool> {
        self.coords
            .iter()
            .map(|c| c.kind == CoordKind::Slope)
            .collect()
    }

    pub fn slope_indices(&self) -> Vec<usize> {
        self.coords
            .iter()
            .enumerate()
            .filter_map(|(i, c)| (c.kind == CoordKind::Slope).then_some(i))
            .collect()
    }
}

/// A parameter value paired with its layout. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: DVector<f64>,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: DVector<f64>, layout: ParamLayout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries but the layout describes {}",
                values.len(),
                layout.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector has a non-finite entry"));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        let values = DVector::zeros(layout.len());
        ParamVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Largest absolute value over slope coordinates only.
    pub fn max_abs_slope(&self) -> f64 {
        self.layout
            .slope_indices()
            .iter()
            .fold(0.0f64, |a, &i| a.max(self.values[i].abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_category_layout_counts_and_mask() {
        let layout = ParamLayout::per_category(3, 8);
        assert_eq!(layout.len(), 18);
        let mask = layout.slope_mask();
        assert_eq!(mask.iter().filter(|&&b| b).count(), 16);
        assert!(!mask[0]);
        assert!(!mask[9]);
        assert_eq!(layout.coords()[0].label, "cat1:intercept");
        assert_eq!(layout.coords()[10].label, "cat2:x1");
    }

    #[test]
    fn rejects_non_finite_entries() {
        let layout = ParamLayout::slopes_only(2);
        let err = ParamVector::new(DVector::from_vec(vec![1.0, f64::NAN]), layout);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        let layout = ParamLayout::slopes_only(2);
        assert!(ParamVector::new(DVector::from_vec(vec![1.0]), layout).is_err());
    }
}
