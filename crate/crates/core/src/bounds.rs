//! Closed-form sharp bounds on `τ = pr{Y(1) >= Y(0)}` and
//! `η = pr{Y(1) > Y(0)}` from the two marginals alone.

use crate::distributions::{delta_effects, first_extreme, DeltaVector, MarginalPair};
use crate::scalar::Scalar;

/// Which of the two estimands a predicate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    Tau,
    Eta,
}

/// Everything the marginals say about `τ` and `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport<T> {
    pub deltas: DeltaVector<T>,
    pub tau_lower: T,
    pub tau_independent: T,
    pub tau_upper: T,
    pub eta_lower: T,
    pub eta_independent: T,
    pub eta_upper: T,
    pub dominance: bool,
    pub tau_point_identified: bool,
    pub eta_point_identified: bool,
    /// Smallest `j` minimizing `Δ_j`.
    pub argmin_delta_index: usize,
    /// Smallest `j` maximizing `p0_j + Δ_j`.
    pub argmax_lower_index: usize,
    /// Sharp bounds on `α = τ + η - 1`, filled in on request.
    pub alpha: Option<(T, T)>,
}

impl<T: Scalar> BoundsReport<T> {
    pub fn tau(&self) -> (T, T) {
        (self.tau_lower.clone(), self.tau_upper.clone())
    }

    pub fn eta(&self) -> (T, T) {
        (self.eta_lower.clone(), self.eta_upper.clone())
    }

    pub fn categories(&self) -> usize {
        self.deltas.0.len()
    }

    pub fn to_f64(&self) -> BoundsReport<f64> {
        BoundsReport {
            deltas: DeltaVector(self.deltas.0.iter().map(Scalar::to_f64).collect()),
            tau_lower: self.tau_lower.to_f64(),
            tau_independent: self.tau_independent.to_f64(),
            tau_upper: self.tau_upper.to_f64(),
            eta_lower: self.eta_lower.to_f64(),
            eta_independent: self.eta_independent.to_f64(),
            eta_upper: self.eta_upper.to_f64(),
            dominance: self.dominance,
            tau_point_identified: self.tau_point_identified,
            eta_point_identified: self.eta_point_identified,
            argmin_delta_index: self.argmin_delta_index,
            argmax_lower_index: self.argmax_lower_index,
            alpha: self.alpha.as_ref().map(|(a, b)| (a.to_f64(), b.to_f64())),
        }
    }
}

fn lower_candidates<T: Scalar>(m: &MarginalPair<T>, d: &DeltaVector<T>) -> Vec<T> {
    m.control.probs().iter().zip(d.values()).map(|(p, dj)| p.clone() + dj.clone()).collect()
}

/// `(τ_L, τ_U)`.
pub fn tau_bounds<T: Scalar>(m: &MarginalPair<T>) -> (T, T) {
    let d = delta_effects(m);
    let cand = lower_candidates(m, &d);
    let lower = cand[first_extreme(&cand, |a, b| a > b)].clone();
    (lower, T::one() + d.min())
}

/// `(η_L, η_U)`.
pub fn eta_bounds<T: Scalar>(m: &MarginalPair<T>) -> (T, T) {
    let d = delta_effects(m);
    let shifted: Vec<T> = d.values().iter().zip(m.treated.probs()).map(|(dj, p)| dj.clone() - p.clone()).collect();
    let upper = T::one() + shifted[first_extreme(&shifted, |a, b| a < b)].clone();
    (d.max(), upper)
}

/// `(τ_I, η_I)` under independent potential outcomes.
pub fn independent_estimands<T: Scalar>(m: &MarginalPair<T>) -> (T, T) {
    let (p1, p0) = (m.treated.probs(), m.control.probs());
    // Running sum of p0 below k gives the strict part; adding p0_k the weak part.
    let mut below = T::zero();
    let mut tau = T::zero();
    let mut eta = T::zero();
    for k in 0..p1.len() {
        eta = eta + p1[k].clone() * below.clone();
        below = below + p0[k].clone();
        tau = tau + p1[k].clone() * below.clone();
    }
    (tau, eta)
}

/// Support-set test for equal lower and upper bounds.
///
/// `τ` fails to be point identified exactly when some `k1, k2` in the
/// treated support and `l1, l2` in the control support satisfy
/// `k2 >= l2 > k1 >= l1` or `l2 > k2 >= l1 > k1`. For `η` the patterns are
/// `l2 >= k2 > l1 >= k1` or `k2 > l2 >= k1 > l1`.
pub fn point_identified<T: Scalar>(m: &MarginalPair<T>, estimand: Estimand) -> bool {
    let ks = m.treated.support();
    let ls = m.control.support();
    for &k1 in &ks {
        for &k2 in &ks {
            for &l1 in &ls {
                for &l2 in &ls {
                    let hit = match estimand {
                        Estimand::Tau => (k2 >= l2 && l2 > k1 && k1 >= l1) || (l2 > k2 && k2 >= l1 && l1 > k1),
                        Estimand::Eta => (l2 >= k2 && k2 > l1 && l1 >= k1) || (k2 > l2 && l2 >= k1 && k1 > l1),
                    };
                    if hit {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn full_report<T: Scalar>(m: &MarginalPair<T>) -> BoundsReport<T> {
    let deltas = delta_effects(m);
    let cand = lower_candidates(m, &deltas);
    let argmax_lower_index = first_extreme(&cand, |a, b| a > b);
    let argmin_delta_index = deltas.argmin();
    let (tau_lower, tau_upper) = tau_bounds(m);
    let (eta_lower, eta_upper) = eta_bounds(m);
    let (tau_independent, eta_independent) = independent_estimands(m);
    let floor = -T::neg_tolerance();
    let dominance = deltas.values().iter().all(|d| *d >= floor);
    BoundsReport {
        dominance,
        tau_point_identified: point_identified(m, Estimand::Tau),
        eta_point_identified: point_identified(m, Estimand::Eta),
        deltas,
        tau_lower,
        tau_independent,
        tau_upper,
        eta_lower,
        eta_independent,
        eta_upper,
        argmin_delta_index,
        argmax_lower_index,
        alpha: None,
    }
}
