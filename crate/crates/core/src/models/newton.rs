//! Damped Newton ascent shared by the three likelihoods.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stopping rules and safeguards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Sup-norm of the gradient of the mean log-likelihood.
    pub grad_tol: f64,
    /// Any coefficient beyond this magnitude is treated as divergence.
    pub norm_cap: f64,
    /// Return the current iterate when `max_iter` runs out instead of
    /// failing. Used for partial M-steps in EM.
    pub partial: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 200, grad_tol: 1e-8, norm_cap: 30.0, partial: false }
    }
}

/// Convergence record attached to every fitted model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitInfo {
    /// Mean (weight-normalized) log-likelihood at the solution.
    pub loglik: f64,
    pub iterations: usize,
    /// Mean log-likelihood after each accepted step, starting point first.
    pub trace: Vec<f64>,
}

pub(crate) trait Concave {
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn derivatives(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);
    /// Largest coefficient magnitude on the model's natural scale.
    fn magnitude(&self, theta: &DVector<f64>) -> f64;
}

/// Solves `(-H) d = g`, adding a ridge if `-H` is not positive definite.
fn ascent_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let neg = -h;
    if let Some(ch) = neg.clone().cholesky() {
        return ch.solve(g);
    }
    let scale = neg.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let mut ridge = 1e-10 * scale;
    loop {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(g);
        }
        ridge *= 10.0;
        if ridge > 1e12 * scale {
            // Gradient ascent as a last resort.
            return g / scale;
        }
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub(crate) fn maximize<F: Concave>(f: &F, theta0: DVector<f64>, opts: &FitOptions) -> Result<(DVector<f64>, FitInfo)> {
    let mut theta = theta0;
    let (mut value, mut grad, mut hess) = f.derivatives(&theta);
    if !value.is_finite() {
        return Err(Error::NonConvergence { iterations: 0 });
    }
    let mut trace = vec![value];
    for iter in 0..opts.max_iter {
        let dir = ascent_direction(&grad, &hess);
        let small_grad = sup(&grad) < opts.grad_tol;
        // A small gradient with a large Newton step is a flat ridge, as in
        // separated data, so both must be small.
        if small_grad && sup(&dir) < 1e-6 * (1.0 + sup(&theta)) {
            return Ok((theta, FitInfo { loglik: value, iterations: iter, trace }));
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let cand = &theta + &dir * t;
            let v = f.value(&cand);
            if v.is_finite() && v >= value {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, v)) = accepted else {
            if small_grad {
                return Ok((theta, FitInfo { loglik: value, iterations: iter, trace }));
            }
            return Err(Error::NonConvergence { iterations: iter });
        };
        if f.magnitude(&cand) > opts.norm_cap {
            return Err(Error::SeparationDetected { cap: opts.norm_cap });
        }
        let no_progress = v == value && small_grad;
        if opts.partial && iter + 1 == opts.max_iter {
            trace.push(v);
            return Ok((cand, FitInfo { loglik: v, iterations: iter + 1, trace }));
        }
        theta = cand;
        (value, grad, hess) = f.derivatives(&theta);
        trace.push(value);
        if no_progress {
            return Ok((theta, FitInfo { loglik: value, iterations: iter + 1, trace }));
        }
    }
    if opts.partial || sup(&grad) < opts.grad_tol {
        return Ok((theta, FitInfo { loglik: value, iterations: opts.max_iter, trace }));
    }
    Err(Error::NonConvergence { iterations: opts.max_iter })
}

/// Stable `log σ(t)`.
pub(crate) fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rows of `x` with an intercept column in front.
pub(crate) fn design(x: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = x.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, found: bad.len() });
    }
    Ok(DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] }))
}

/// Errors unless the weighted design (intercept included) has full column rank.
pub(crate) fn check_rank(z: &DMatrix<f64>, w: &[f64]) -> Result<()> {
    let p = z.ncols();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v: f64 = w.iter().enumerate().filter(|(_, wi)| **wi > 0.0).map(|(i, wi)| wi * z[(i, a)] * z[(i, b)]).sum();
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    // Scale columns to unit diagonal so the test is unit-free.
    let d: Vec<f64> = (0..p).map(|i| gram[(i, i)].sqrt()).collect();
    if d.iter().any(|v| *v == 0.0) {
        return Err(Error::RankDeficient);
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (d[i] * d[j]));
    let eig = scaled.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

/// Validates optional weights; `None` means all ones.
pub(crate) fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::LengthMismatch { left: n, right: w.len() });
            }
            if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("weight {v} at unit {i} is not a finite nonnegative number")));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument("weights sum to zero".into()));
            }
            Ok(w.to_vec())
        }
    }
}
