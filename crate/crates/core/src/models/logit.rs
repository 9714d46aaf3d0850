//! Binary logistic regression, used for propensity scores.

use nalgebra::{DMatrix, DVector};

use super::newton::{check_rank, design, log_sigmoid, logit, maximize, resolve_weights, sigmoid, Concave, FitInfo, FitOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    /// Intercept first, then one slope per covariate.
    coef: Vec<f64>,
    pub info: FitInfo,
}

impl LogitModel {
    pub fn new(coef: Vec<f64>) -> Self {
        LogitModel { coef, info: FitInfo::default() }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn intercept(&self) -> f64 {
        self.coef[0]
    }

    /// `pr(label = 1 | x)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() + 1 != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len() - 1, found: x.len() });
        }
        Ok(sigmoid(self.coef[0] + x.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>()))
    }
}

/// Mean Bernoulli log-likelihood in the coefficients (intercept first).
#[derive(Debug, Clone)]
pub struct LogitLikelihood {
    z: DMatrix<f64>,
    d: Vec<bool>,
    w: Vec<f64>,
    wsum: f64,
}

impl LogitLikelihood {
    pub fn new(d: &[bool], x: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let p = x.first().map_or(0, Vec::len);
        let z = if x.is_empty() {
            DMatrix::from_element(d.len(), 1, 1.0)
        } else {
            if x.len() != d.len() {
                return Err(Error::LengthMismatch { left: d.len(), right: x.len() });
            }
            design(x, p)?
        };
        let w = resolve_weights(d.len(), weights)?;
        let wsum = w.iter().sum();
        Ok(LogitLikelihood { z, d: d.to_vec(), w, wsum })
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn evaluate(&self, coef: &[f64]) -> (f64, Vec<f64>) {
        let (v, g, _) = self.derivatives(&DVector::from_column_slice(coef));
        (v, g.iter().cloned().collect())
    }

    fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.z * theta
    }
}

impl Concave for LogitLikelihood {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.eta(theta);
        let total: f64 = (0..self.d.len())
            .map(|i| self.w[i] * if self.d[i] { log_sigmoid(eta[i]) } else { log_sigmoid(-eta[i]) })
            .sum();
        total / self.wsum
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let eta = self.eta(theta);
        let k = self.dim();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        let mut total = 0.0;
        for i in 0..self.d.len() {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            let p = sigmoid(eta[i]);
            let yi = if self.d[i] { 1.0 } else { 0.0 };
            total += wi * if self.d[i] { log_sigmoid(eta[i]) } else { log_sigmoid(-eta[i]) };
            let row = self.z.row(i).transpose();
            grad.axpy(wi * (yi - p), &row, 1.0);
            hess.ger(-wi * p * (1.0 - p), &row, &row, 1.0);
        }
        (total / self.wsum, grad / self.wsum, hess / self.wsum)
    }

    fn magnitude(&self, theta: &DVector<f64>) -> f64 {
        theta.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn fit_logit(d: &[bool], x: &[Vec<f64>]) -> Result<LogitModel> {
    fit_logit_with(d, x, None, &FitOptions::default())
}

pub fn fit_logit_with(d: &[bool], x: &[Vec<f64>], weights: Option<&[f64]>, opts: &FitOptions) -> Result<LogitModel> {
    let lik = LogitLikelihood::new(d, x, weights)?;
    if lik.dim() > 1 {
        check_rank(&lik.z, &lik.w)?;
    }
    let ones: f64 = d.iter().zip(&lik.w).filter(|(v, _)| **v).map(|(_, w)| w).sum();
    let share = ones / lik.wsum;
    if share <= 0.0 || share >= 1.0 {
        return Err(Error::SeparationDetected { cap: opts.norm_cap });
    }
    let mut theta0 = DVector::zeros(lik.dim());
    theta0[0] = logit(share);
    let (theta, info) = maximize(&lik, theta0, opts)?;
    Ok(LogitModel { coef: theta.iter().cloned().collect(), info })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only() {
        let d: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let m = fit_logit(&d, &[]).unwrap();
        assert!((m.intercept() - logit(0.3)).abs() < 1e-12);
        assert!((m.predict(&[]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn separation_is_detected() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let d: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert!(matches!(fit_logit(&d, &x), Err(Error::SeparationDetected { .. })));
        assert!(matches!(fit_logit(&[true, true], &[]), Err(Error::SeparationDetected { .. })));
    }

    #[test]
    fn overlapping_data_fits() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let d: Vec<bool> = (0..20).map(|i| i % 3 == 0 || i > 12).collect();
        let m = fit_logit(&d, &x).unwrap();
        assert!(m.coefficients()[1] > 0.0);
        assert!(m.info.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
