//! Weighted mixtures of Gaussian states. Phase-diffused and post-selected
//! states are non-Gaussian but always representable as such mixtures here.

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;

#[derive(Debug, Clone)]
pub struct GaussianEnsemble {
    components: Vec<GaussianState>,
    weights: Vec<f64>,
}

impl GaussianEnsemble {
    /// Mixture with equal weights, the natural output of rejection sampling.
    pub fn equal_weight(components: Vec<GaussianState>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("ensemble needs at least one component"));
        }
        let w = 1.0 / components.len() as f64;
        let weights = vec![w; components.len()];
        Ok(GaussianEnsemble {
            components,
            weights,
        })
    }

    pub fn weighted(components: Vec<GaussianState>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::invalid("components/weights length mismatch"));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must not all vanish"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(GaussianEnsemble {
            components,
            weights,
        })
    }

    pub fn components(&self) -> &[GaussianState] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.components[0].n_modes()
    }

    /// Mean and variance of cᵀ·quadratures over the mixture, by the law of
    /// total variance: E[Var] + Var[E].
    pub fn quadrature_stats(&self, coeffs: &[f64]) -> Result<(f64, f64)> {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (state, &w) in self.components.iter().zip(&self.weights) {
            let (m, v) = state.quadrature_stats(coeffs)?;
            mean += w * m;
            second += w * (v + m * m);
        }
        Ok((mean, second - mean * mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn displaced_vacua_obey_total_variance_law() {
        let d = 0.8;
        let up = GaussianState::new(
            DVector::from_column_slice(&[d, 0.0]),
            DMatrix::identity(2, 2) * 0.25,
        )
        .unwrap();
        let down = GaussianState::new(
            DVector::from_column_slice(&[-d, 0.0]),
            DMatrix::identity(2, 2) * 0.25,
        )
        .unwrap();
        let mix = GaussianEnsemble::equal_weight(vec![up, down]).unwrap();
        let (m, v) = mix.quadrature_stats(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(m, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v, 0.25 + d * d, epsilon = 1e-14);
    }

    #[test]
    fn weights_normalize() {
        let v = GaussianState::vacuum(1).unwrap();
        let e = GaussianEnsemble::weighted(vec![v.clone(), v], vec![2.0, 6.0]).unwrap();
        assert_relative_eq!(e.weights()[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(e.weights()[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let v = GaussianState::vacuum(1).unwrap();
        assert!(GaussianEnsemble::equal_weight(vec![]).is_err());
        assert!(GaussianEnsemble::weighted(vec![v.clone()], vec![-1.0]).is_err());
        assert!(GaussianEnsemble::weighted(vec![v], vec![0.0]).is_err());
    }
}
