//! Proportional-odds (cumulative logit) regression.
//!
//! `pr(Y <= j | x) = σ(α_j + x·β)` for `j = 0..J-2`. Cutpoints are kept
//! ordered during fitting by optimizing over `α_0` and the logs of the gaps
//! `α_j - α_{j-1}`.

use nalgebra::{DMatrix, DVector};

use super::newton::{check_rank, design, log_sigmoid, logit, maximize, resolve_weights, sigmoid, Concave, FitInfo, FitOptions};
use crate::distributions::MarginalDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLogitModel {
    categories: usize,
    /// Outcome categories the cutpoints refer to; others get probability 0.
    levels: Vec<usize>,
    cutpoints: Vec<f64>,
    slope: Vec<f64>,
    pub info: FitInfo,
}

impl CumulativeLogitModel {
    /// A model over all `cutpoints.len() + 1` categories.
    pub fn new(cutpoints: Vec<f64>, slope: Vec<f64>) -> Result<Self> {
        if cutpoints.is_empty() {
            return Err(Error::TooFewCategories { observed: 1 });
        }
        if cutpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("cutpoints must be strictly increasing".into()));
        }
        let categories = cutpoints.len() + 1;
        Ok(CumulativeLogitModel { categories, levels: (0..categories).collect(), cutpoints, slope, info: FitInfo::default() })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    /// Unconstrained parameters `(α_0, log gaps, β)`.
    pub(crate) fn unconstrained(&self) -> Vec<f64> {
        Ordered::encode(&self.cutpoints, &self.slope).iter().cloned().collect()
    }

    /// Same levels with parameters taken from an unconstrained vector.
    pub(crate) fn from_unconstrained(&self, v: &[f64]) -> Self {
        let na = self.cutpoints.len();
        let mut a = v[0];
        let mut cutpoints = vec![a];
        for g in &v[1..na] {
            a += g.exp();
            cutpoints.push(a);
        }
        CumulativeLogitModel { cutpoints, slope: v[na..].to_vec(), info: FitInfo::default(), ..self.clone() }
    }

    /// Category probabilities at covariate row `x`.
    pub fn predict_marginal(&self, x: &[f64]) -> Result<MarginalDistribution<f64>> {
        MarginalDistribution::new(self.predict_probs(x)?)
    }

    /// Same as [`Self::predict_marginal`] without validation.
    pub fn predict_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.slope.len() {
            return Err(Error::DimensionMismatch { expected: self.slope.len(), found: x.len() });
        }
        let lin: f64 = x.iter().zip(&self.slope).map(|(a, b)| a * b).sum();
        let mut out = vec![0.0; self.categories];
        let mut prev = 0.0;
        for (i, &level) in self.levels.iter().enumerate() {
            let cum = self.cutpoints.get(i).map_or(1.0, |a| sigmoid(a + lin));
            out[level] = cum - prev;
            prev = cum;
        }
        Ok(out)
    }

    /// Probability of category `y` at `x`; no length check.
    pub(crate) fn prob_at(&self, x: &[f64], y: usize) -> f64 {
        let Some(i) = self.levels.iter().position(|&l| l == y) else { return 0.0 };
        let lin: f64 = x.iter().zip(&self.slope).map(|(a, b)| a * b).sum();
        let upper = self.cutpoints.get(i).map_or(1.0, |a| sigmoid(a + lin));
        let lower = if i == 0 { 0.0 } else { sigmoid(self.cutpoints[i - 1] + lin) };
        upper - lower
    }
}

pub fn predict_marginal(model: &CumulativeLogitModel, x: &[f64]) -> Result<MarginalDistribution<f64>> {
    model.predict_marginal(x)
}

/// Mean log-likelihood over outcome categories `0..m` with no empty-level
/// handling; exposed so derivatives can be checked numerically.
#[derive(Debug, Clone)]
pub struct CumulativeLogitLikelihood {
    x: DMatrix<f64>,
    y: Vec<usize>,
    w: Vec<f64>,
    wsum: f64,
    levels: usize,
}

impl CumulativeLogitLikelihood {
    pub fn new(y: &[usize], x: &[Vec<f64>], weights: Option<&[f64]>, levels: usize) -> Result<Self> {
        let p = x.first().map_or(0, Vec::len);
        if !x.is_empty() && x.len() != y.len() {
            return Err(Error::LengthMismatch { left: y.len(), right: x.len() });
        }
        let z = design(if x.is_empty() { &[] } else { x }, p)?;
        let x = if x.is_empty() { DMatrix::zeros(y.len(), 0) } else { z.columns(1, p).into_owned() };
        if let Some(&bad) = y.iter().find(|&&v| v >= levels) {
            return Err(Error::OutOfRangeOutcome { unit: 0, y: bad, categories: levels });
        }
        let w = resolve_weights(y.len(), weights)?;
        let wsum = w.iter().sum();
        Ok(CumulativeLogitLikelihood { x, y: y.to_vec(), w, wsum, levels })
    }

    fn covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Mean log-likelihood and its gradient in `(α, β)`.
    pub fn evaluate(&self, alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
        let (v, g, _) = self.natural(alpha, beta, false);
        (v, g.iter().cloned().collect())
    }

    /// Hessian in `(α, β)`.
    pub fn hessian(&self, alpha: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
        let (_, _, h) = self.natural(alpha, beta, true);
        h.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }

    fn value(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.y.len() {
            if self.w[i] == 0.0 {
                continue;
            }
            let lin: f64 = (0..beta.len()).map(|k| self.x[(i, k)] * beta[k]).sum();
            total += self.w[i] * self.cell(self.y[i], alpha, lin).0;
        }
        total / self.wsum
    }

    fn log_prob(&self, j: usize, alpha: &[f64], lin: f64) -> f64 {
        let upper = (j + 1 < self.levels).then(|| alpha[j] + lin);
        let lower = (j > 0).then(|| alpha[j - 1] + lin);
        match (upper, lower) {
            (Some(a), None) => log_sigmoid(a),
            (None, Some(b)) => log_sigmoid(-b),
            (Some(a), Some(b)) => {
                if a <= b {
                    return f64::NEG_INFINITY;
                }
                log_sigmoid(a) + log_sigmoid(-b) + (-(b - a).exp_m1()).ln()
            }
            (None, None) => 0.0,
        }
    }

    /// Log-probability and probability of level `j`, plus the two boundary
    /// sigmoids. Small cells fall back to the log-space formula.
    fn cell(&self, j: usize, alpha: &[f64], lin: f64) -> (f64, f64, f64, f64) {
        let su = if j + 1 < self.levels { sigmoid(alpha[j] + lin) } else { 1.0 };
        let sl = if j > 0 { sigmoid(alpha[j - 1] + lin) } else { 0.0 };
        let prob = su - sl;
        if prob > 1e-8 {
            (prob.ln(), prob, su, sl)
        } else {
            let lp = self.log_prob(j, alpha, lin);
            (lp, lp.exp().max(1e-300), su, sl)
        }
    }

    fn natural(&self, alpha: &[f64], beta: &[f64], hessian: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let na = self.levels - 1;
        let p = beta.len();
        let d = na + p;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(if hessian { d } else { 0 }, if hessian { d } else { 0 });
        let mut total = 0.0;
        let mut u = DVector::zeros(d);
        for i in 0..self.y.len() {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            let j = self.y[i];
            let lin: f64 = (0..p).map(|k| self.x[(i, k)] * beta[k]).sum();
            let (lp, prob, su, sl) = self.cell(j, alpha, lin);
            total += wi * lp;
            // Density and its derivative at the two cumulative boundaries.
            let edge = |s: f64| {
                let f = s * (1.0 - s);
                (f, f * (1.0 - 2.0 * s))
            };
            let ui = (j + 1 < self.levels).then_some(j);
            let li = (j > 0).then(|| j - 1);
            let (fu, dfu) = if ui.is_some() { edge(su) } else { (0.0, 0.0) };
            let (fl, dfl) = if li.is_some() { edge(sl) } else { (0.0, 0.0) };
            u.fill(0.0);
            if let Some(t) = ui {
                u[t] += fu;
            }
            if let Some(t) = li {
                u[t] -= fl;
            }
            for k in 0..p {
                u[na + k] = (fu - fl) * self.x[(i, k)];
            }
            grad.axpy(wi / prob, &u, 1.0);
            if hessian {
                // Second derivatives of the cell probability.
                let c = wi / prob;
                if let Some(t) = ui {
                    hess[(t, t)] += c * dfu;
                    for k in 0..p {
                        let v = c * dfu * self.x[(i, k)];
                        hess[(t, na + k)] += v;
                        hess[(na + k, t)] += v;
                    }
                }
                if let Some(t) = li {
                    hess[(t, t)] -= c * dfl;
                    for k in 0..p {
                        let v = c * dfl * self.x[(i, k)];
                        hess[(t, na + k)] -= v;
                        hess[(na + k, t)] -= v;
                    }
                }
                for k in 0..p {
                    for k2 in 0..p {
                        hess[(na + k, na + k2)] += c * (dfu - dfl) * self.x[(i, k)] * self.x[(i, k2)];
                    }
                }
                hess.ger(-wi / (prob * prob), &u, &u, 1.0);
            }
        }
        let s = self.wsum;
        (total / s, grad / s, hess / s)
    }
}

/// The likelihood in the ordered parameterization `(α_0, log gaps, β)`.
struct Ordered<'a> {
    lik: &'a CumulativeLogitLikelihood,
}

impl Ordered<'_> {
    fn split(&self, theta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let na = self.lik.levels - 1;
        let mut alpha = Vec::with_capacity(na);
        let mut a = theta[0];
        alpha.push(a);
        for t in 1..na {
            a += theta[t].exp();
            alpha.push(a);
        }
        (alpha, theta.iter().skip(na).cloned().collect())
    }

    fn encode(alpha: &[f64], beta: &[f64]) -> DVector<f64> {
        let mut v = vec![alpha[0]];
        v.extend(alpha.windows(2).map(|w| (w[1] - w[0]).ln()));
        v.extend_from_slice(beta);
        DVector::from_vec(v)
    }
}

impl Concave for Ordered<'_> {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let (alpha, beta) = self.split(theta);
        self.lik.value(&alpha, &beta)
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (alpha, beta) = self.split(theta);
        let (v, g, h) = self.lik.natural(&alpha, &beta, true);
        let na = alpha.len();
        let d = theta.len();
        let mut jac = DMatrix::<f64>::identity(d, d);
        for i in 0..na {
            jac[(i, 0)] = 1.0;
            for t in 1..=i {
                jac[(i, t)] = theta[t].exp();
            }
            for t in i + 1..na {
                jac[(i, t)] = 0.0;
            }
        }
        let grad = jac.transpose() * &g;
        let mut hess = jac.transpose() * h * &jac;
        for t in 1..na {
            let tail: f64 = (t..na).map(|i| g[i]).sum();
            hess[(t, t)] += tail * theta[t].exp();
        }
        (v, grad, hess)
    }

    fn magnitude(&self, theta: &DVector<f64>) -> f64 {
        let (alpha, beta) = self.split(theta);
        alpha.iter().chain(&beta).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Optional controls for [`fit_cumulative_logit_with`].
#[derive(Debug, Clone, Default)]
pub struct CumulativeLogitSpec<'a> {
    /// Category count; defaults to `max(y) + 1`.
    pub categories: Option<usize>,
    pub options: FitOptions,
    /// Warm start, used when it covers the same observed levels.
    pub init: Option<&'a CumulativeLogitModel>,
}

pub fn fit_cumulative_logit(y: &[usize], x: &[Vec<f64>], weights: Option<&[f64]>) -> Result<CumulativeLogitModel> {
    fit_cumulative_logit_with(y, x, weights, &CumulativeLogitSpec::default())
}

pub fn fit_cumulative_logit_with(
    y: &[usize],
    x: &[Vec<f64>],
    weights: Option<&[f64]>,
    spec: &CumulativeLogitSpec,
) -> Result<CumulativeLogitModel> {
    let w = resolve_weights(y.len(), weights)?;
    let categories = match spec.categories {
        Some(j) => j,
        None => y.iter().max().map_or(0, |m| m + 1),
    };
    if let Some((unit, &bad)) = y.iter().enumerate().find(|(_, &v)| v >= categories) {
        return Err(Error::OutOfRangeOutcome { unit, y: bad, categories });
    }
    let mut mass = vec![0.0; categories];
    for (&yi, &wi) in y.iter().zip(&w) {
        mass[yi] += wi;
    }
    let levels: Vec<usize> = (0..categories).filter(|&j| mass[j] > 0.0).collect();
    if levels.len() < 2 {
        return Err(Error::TooFewCategories { observed: levels.len() });
    }
    let p = x.first().map_or(0, Vec::len);
    if !x.is_empty() {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: y.len(), right: x.len() });
        }
        if p > 0 {
            check_rank(&design(x, p)?, &w)?;
        }
    }
    let mut index = vec![usize::MAX; categories];
    for (i, &l) in levels.iter().enumerate() {
        index[l] = i;
    }
    let yc: Vec<usize> = y.iter().map(|&v| index[v]).collect();
    let lik = CumulativeLogitLikelihood::new(&yc, x, Some(&w), levels.len())?;
    let ordered = Ordered { lik: &lik };

    let theta0 = match spec.init {
        Some(m) if m.levels == levels && m.slope.len() == p => Ordered::encode(&m.cutpoints, &m.slope),
        _ => {
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            let alpha: Vec<f64> = levels[..levels.len() - 1]
                .iter()
                .map(|&l| {
                    acc += mass[l];
                    logit(acc / total)
                })
                .collect();
            Ordered::encode(&alpha, &vec![0.0; p])
        }
    };
    let (theta, info) = maximize(&ordered, theta0, &spec.options)?;
    let (cutpoints, slope) = ordered.split(&theta);
    debug_assert_eq!(lik.covariates(), p);
    Ok(CumulativeLogitModel { categories, levels, cutpoints, slope, info })
}
