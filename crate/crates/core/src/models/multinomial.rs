//! Multinomial logistic regression with a reference class.
//!
//! Targets may be soft (a probability vector per unit), which is what the
//! M-step of a latent-class EM needs. Classes with no target mass at all are
//! dropped and predicted with probability 0.

use nalgebra::{DMatrix, DVector};

use super::newton::{check_rank, design, maximize, resolve_weights, Concave, FitInfo, FitOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialLogitModel {
    reference: usize,
    /// Per class: intercept then slopes, or `None` for a dropped class.
    /// The reference class is all zeros.
    coefs: Vec<Option<Vec<f64>>>,
    pub info: FitInfo,
}

impl MultinomialLogitModel {
    /// `coefs[g]` holds intercept then slopes; `coefs[reference]` must be zeros.
    pub fn new(coefs: Vec<Vec<f64>>, reference: usize) -> Result<Self> {
        let width = coefs.first().map_or(0, Vec::len);
        if width == 0 || coefs.iter().any(|c| c.len() != width) || reference >= coefs.len() {
            return Err(Error::InvalidArgument("coefficient blocks must share one nonzero width".into()));
        }
        if coefs[reference].iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidArgument("reference class coefficients must be zero".into()));
        }
        Ok(MultinomialLogitModel { reference, coefs: coefs.into_iter().map(Some).collect(), info: FitInfo::default() })
    }

    pub fn classes(&self) -> usize {
        self.coefs.len()
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Coefficients of class `g`; `None` if the class was dropped.
    pub fn coefficients(&self, g: usize) -> Option<&[f64]> {
        self.coefs[g].as_deref()
    }

    /// Coefficients of the non-reference classes that were kept, stacked.
    pub(crate) fn free_parameters(&self) -> Vec<f64> {
        self.coefs.iter().enumerate().filter(|(g, _)| *g != self.reference).filter_map(|(_, c)| c.clone()).flatten().collect()
    }

    /// Same classes with stacked coefficients from `v`.
    pub(crate) fn with_free_parameters(&self, v: &[f64]) -> Self {
        let q = self.width();
        let mut at = 0;
        let coefs = self
            .coefs
            .iter()
            .enumerate()
            .map(|(g, c)| match c {
                Some(_) if g != self.reference => {
                    at += q;
                    Some(v[at - q..at].to_vec())
                }
                other => other.clone(),
            })
            .collect();
        MultinomialLogitModel { reference: self.reference, coefs, info: FitInfo::default() }
    }

    fn width(&self) -> usize {
        self.coefs[self.reference].as_ref().map_or(1, Vec::len)
    }

    /// Writes class probabilities at `x` into `out` without checks.
    pub(crate) fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for (o, c) in out.iter_mut().zip(&self.coefs) {
            *o = c.as_ref().map_or(f64::NEG_INFINITY, |c| c[0] + x.iter().zip(&c[1..]).map(|(a, b)| a * b).sum::<f64>());
            max = max.max(*o);
        }
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            s += *o;
        }
        for o in out.iter_mut() {
            *o /= s;
        }
    }

    /// Class probabilities at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() + 1 != self.width() {
            return Err(Error::DimensionMismatch { expected: self.width() - 1, found: x.len() });
        }
        let eta: Vec<Option<f64>> = self
            .coefs
            .iter()
            .map(|c| c.as_ref().map(|c| c[0] + x.iter().zip(&c[1..]).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        Ok(softmax(&eta))
    }
}

fn softmax(eta: &[Option<f64>]) -> Vec<f64> {
    let max = eta.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = eta.iter().map(|e| e.map_or(0.0, |v| (v - max).exp())).collect();
    let s: f64 = ex.iter().sum();
    ex.into_iter().map(|v| v / s).collect()
}

/// Mean multinomial log-likelihood with soft targets.
///
/// Parameters are stacked per non-reference active class, each block being
/// intercept then slopes.
#[derive(Debug, Clone)]
pub struct MultinomialLikelihood {
    z: DMatrix<f64>,
    targets: Vec<Vec<f64>>,
    w: Vec<f64>,
    wsum: f64,
    reference: usize,
    /// Non-reference active classes in parameter order.
    free: Vec<usize>,
    active: Vec<bool>,
}

impl MultinomialLikelihood {
    pub fn new(targets: &[Vec<f64>], x: &[Vec<f64>], weights: Option<&[f64]>, reference: usize) -> Result<Self> {
        let n = targets.len();
        let k = targets.first().map_or(0, Vec::len);
        if k < 2 || reference >= k {
            return Err(Error::InvalidArgument("need at least two classes and a valid reference".into()));
        }
        for (i, t) in targets.iter().enumerate() {
            if t.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: t.len() });
            }
            let s: f64 = t.iter().sum();
            if t.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("targets of unit {i} are not a probability vector")));
            }
        }
        let p = x.first().map_or(0, Vec::len);
        let z = if x.is_empty() {
            DMatrix::from_element(n, 1, 1.0)
        } else {
            if x.len() != n {
                return Err(Error::LengthMismatch { left: n, right: x.len() });
            }
            design(x, p)?
        };
        let w = resolve_weights(n, weights)?;
        let wsum = w.iter().sum();
        let active: Vec<bool> =
            (0..k).map(|c| targets.iter().zip(&w).any(|(t, wi)| t[c] > 0.0 && *wi > 0.0)).collect();
        if !active[reference] {
            return Err(Error::InvalidArgument("reference class has no mass".into()));
        }
        let free = (0..k).filter(|&c| c != reference && active[c]).collect();
        Ok(MultinomialLikelihood { z, targets: targets.to_vec(), w, wsum, reference, free, active })
    }

    pub fn dim(&self) -> usize {
        self.free.len() * self.z.ncols()
    }

    pub fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (v, g, _) = self.derivatives(&DVector::from_column_slice(theta));
        (v, g.iter().cloned().collect())
    }

    /// Class probabilities of unit `i` written into `out`; returns the unit's
    /// log-likelihood contribution.
    fn probs_into(&self, theta: &DVector<f64>, i: usize, out: &mut [f64]) -> f64 {
        let q = self.z.ncols();
        out.fill(0.0);
        let mut max = 0.0f64;
        for (b, &c) in self.free.iter().enumerate() {
            let eta: f64 = (0..q).map(|j| self.z[(i, j)] * theta[b * q + j]).sum();
            out[c] = eta;
            max = max.max(eta);
        }
        let mut s = 0.0;
        let mut fit = 0.0;
        for (c, v) in out.iter_mut().enumerate() {
            if c == self.reference || self.free.contains(&c) {
                fit += self.targets[i][c] * (*v - max);
                *v = (*v - max).exp();
                s += *v;
            }
        }
        for v in out.iter_mut() {
            *v /= s;
        }
        // Targets sum to one, so the log normalizer enters once.
        fit - s.ln()
    }

    fn into_model(&self, theta: &DVector<f64>, info: FitInfo) -> MultinomialLogitModel {
        let q = self.z.ncols();
        let mut coefs: Vec<Option<Vec<f64>>> = vec![None; self.active.len()];
        coefs[self.reference] = Some(vec![0.0; q]);
        for (b, &c) in self.free.iter().enumerate() {
            coefs[c] = Some(theta.rows(b * q, q).iter().cloned().collect());
        }
        MultinomialLogitModel { reference: self.reference, coefs, info }
    }
}

impl Concave for MultinomialLikelihood {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let mut pr = vec![0.0; self.active.len()];
        let mut total = 0.0;
        for i in (0..self.targets.len()).filter(|&i| self.w[i] > 0.0) {
            total += self.w[i] * self.probs_into(theta, i, &mut pr);
        }
        total / self.wsum
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let q = self.z.ncols();
        let d = self.dim();
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut total = 0.0;
        let mut pr = vec![0.0; self.active.len()];
        let mut row = vec![0.0; q];
        for i in 0..self.targets.len() {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            total += wi * self.probs_into(theta, i, &mut pr);
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.z[(i, j)];
            }
            for (a, &c) in self.free.iter().enumerate() {
                let ga = wi * (self.targets[i][c] - pr[c]);
                for j in 0..q {
                    grad[a * q + j] += ga * row[j];
                }
                for (b, &c2) in self.free.iter().enumerate() {
                    let kron = if a == b { 1.0 } else { 0.0 };
                    let coef = -wi * pr[c] * (kron - pr[c2]);
                    for j in 0..q {
                        let base = (a * q + j) * d + b * q;
                        for k in 0..q {
                            hess[base + k] += coef * row[j] * row[k];
                        }
                    }
                }
            }
        }
        let s = self.wsum;
        (
            total / s,
            DVector::from_iterator(d, grad.into_iter().map(|v| v / s)),
            DMatrix::from_row_iterator(d, d, hess.into_iter().map(|v| v / s)),
        )
    }

    fn magnitude(&self, theta: &DVector<f64>) -> f64 {
        theta.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Optional controls for the multinomial fitters.
#[derive(Debug, Clone, Default)]
pub struct MultinomialSpec<'a> {
    /// Class count for hard labels; defaults to `max(g) + 1`.
    pub classes: Option<usize>,
    pub reference: usize,
    pub options: FitOptions,
    pub init: Option<&'a MultinomialLogitModel>,
}

/// Fits hard class labels `g` with class `reference` as the baseline.
pub fn fit_multinomial_logit(
    g: &[usize],
    x: &[Vec<f64>],
    weights: Option<&[f64]>,
    reference: usize,
) -> Result<MultinomialLogitModel> {
    let k = g.iter().max().map_or(0, |m| m + 1).max(reference + 1);
    let targets: Vec<Vec<f64>> = g
        .iter()
        .map(|&c| {
            let mut t = vec![0.0; k];
            t[c] = 1.0;
            t
        })
        .collect();
    fit_multinomial_logit_soft(&targets, x, weights, &MultinomialSpec { reference, ..Default::default() })
}

/// Fits soft class targets, one probability vector per unit.
pub fn fit_multinomial_logit_soft(
    targets: &[Vec<f64>],
    x: &[Vec<f64>],
    weights: Option<&[f64]>,
    spec: &MultinomialSpec,
) -> Result<MultinomialLogitModel> {
    let lik = MultinomialLikelihood::new(targets, x, weights, spec.reference)?;
    let q = lik.z.ncols();
    if q > 1 {
        check_rank(&lik.z, &lik.w)?;
    }
    let mut share = vec![0.0; lik.active.len()];
    for (t, wi) in targets.iter().zip(&lik.w) {
        for (s, v) in share.iter_mut().zip(t) {
            *s += wi * v;
        }
    }
    let mut theta0 = DVector::zeros(lik.dim());
    let warm = spec.init.filter(|m| {
        m.reference == spec.reference
            && m.width() == q
            && (0..lik.active.len()).all(|c| m.coefs.get(c).is_some_and(|v| v.is_some() == lik.active[c]))
    });
    for (b, &c) in lik.free.iter().enumerate() {
        match warm {
            Some(m) => theta0.rows_mut(b * q, q).copy_from_slice(m.coefs[c].as_ref().expect("checked active")),
            None => theta0[b * q] = (share[c] / share[spec.reference]).ln(),
        }
    }
    let (theta, info) = maximize(&lik, theta0, &spec.options)?;
    Ok(lik.into_model(&theta, info))
}
