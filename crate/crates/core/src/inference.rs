//! Bootstrap intervals for pairs of bounds.
//!
//! One bootstrap run produces a replicate set of [`BoundSet`]s; intervals at
//! any level and for any pair are read off that set. The interval for a pair
//! `(L, U)` runs from the lower `(1 - level) / 2` quantile of the replicated
//! `L` to the upper `(1 + level) / 2` quantile of the replicated `U`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{full_report, Estimand};
use crate::data::{infer_categories, UnitRecord};
use crate::error::{Error, Result};
use crate::estimation::{estimate_adjusted, estimate_ipw, estimate_randomized, Adjustment, BoundSet, IpwOptions, Propensity};
use crate::noncompliance::{
    complier_bounds, em_fit, em_fit_with_covariates, em_fit_with_covariates_from, CovariateEmFit, EmOptions, Monotonicity,
};

/// Replicates may fail; more than this share failing is an error.
pub const MAX_DROPPED_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Randomized,
    Ipw { propensity: Propensity, epsilon: f64 },
    Adjusted(Adjustment),
    /// Complier bounds from EM without covariates.
    Complier(Monotonicity),
    /// Complier bounds averaged over covariates from the covariate EM.
    ComplierAdjusted(Monotonicity),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Randomized => "randomized",
            Estimator::Ipw { .. } => "ipw",
            Estimator::Adjusted(_) => "adjusted",
            Estimator::Complier(_) => "complier",
            Estimator::ComplierAdjusted(_) => "complier_adjusted",
        }
    }

    /// Observational designs resample the whole sample; experiments resample
    /// within each assigned arm.
    fn stratified(&self) -> bool {
        !matches!(self, Estimator::Ipw { .. })
    }
}

/// Which quantity is the lower end of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLower {
    /// The sharp lower bound.
    Bound,
    /// The value under independent potential outcomes.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub categories: Option<usize>,
    pub em: EmOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { n_boot: 1000, seed: 0, categories: None, em: EmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub estimand: Estimand,
    pub lower_object: PairLower,
    pub point_lower: f64,
    pub point_upper: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_boot: usize,
    pub seed: u64,
}

/// Point estimate plus the surviving bootstrap replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub point: BoundSet<f64>,
    pub replicates: Vec<BoundSet<f64>>,
    pub dropped: usize,
    pub n_boot: usize,
    pub seed: u64,
}

/// Type-7 sample quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn pair(b: &BoundSet<f64>, estimand: Estimand, lower: PairLower) -> (f64, f64) {
    match (estimand, lower) {
        (Estimand::Tau, PairLower::Bound) => (b.tau_lower, b.tau_upper),
        (Estimand::Tau, PairLower::Independent) => (b.tau_independent, b.tau_upper),
        (Estimand::Eta, PairLower::Bound) => (b.eta_lower, b.eta_upper),
        (Estimand::Eta, PairLower::Independent) => (b.eta_independent, b.eta_upper),
    }
}

impl BootstrapDraws {
    pub fn interval(&self, estimand: Estimand, lower: PairLower, level: f64) -> Result<IntervalReport> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
        }
        let (point_lower, point_upper) = pair(&self.point, estimand, lower);
        let (lows, highs): (Vec<f64>, Vec<f64>) = self.replicates.iter().map(|b| pair(b, estimand, lower)).unzip();
        let ci_low = quantile(&lows, (1.0 - level) / 2.0).clamp(0.0, 1.0);
        let ci_high = quantile(&highs, (1.0 + level) / 2.0).clamp(0.0, 1.0);
        Ok(IntervalReport {
            estimand,
            lower_object: lower,
            point_lower,
            point_upper,
            ci_low,
            ci_high,
            level,
            n_boot: self.n_boot,
            seed: self.seed,
        })
    }
}

/// Bound set reported by `estimator` on `records`.
pub fn point_estimate(records: &[UnitRecord], estimator: &Estimator, categories: Option<usize>, em: &EmOptions) -> Result<BoundSet<f64>> {
    match estimator {
        Estimator::Randomized => Ok(estimate_randomized(records, categories)?.bounds),
        Estimator::Ipw { propensity, epsilon } => {
            Ok(estimate_ipw(records, propensity, &IpwOptions { epsilon: *epsilon, categories })?.bounds)
        }
        Estimator::Adjusted(a) => Ok(estimate_adjusted(records, *a, categories)?.bounds),
        Estimator::Complier(mode) => {
            let fit = em_fit(records, *mode, None, em, categories)?;
            Ok(BoundSet::from(&complier_bounds(&fit.model)?.complier))
        }
        Estimator::ComplierAdjusted(mode) => Ok(covariate_bound_set(&em_fit_with_covariates(records, *mode, em, categories)?)),
    }
}

/// Adjusted complier bounds; independence values come from the averaged
/// complier marginals.
fn covariate_bound_set(fit: &CovariateEmFit) -> BoundSet<f64> {
    let plain = full_report(&fit.complier_marginals);
    BoundSet {
        tau_lower: fit.adjusted.tau_lower,
        tau_independent: plain.tau_independent,
        tau_upper: fit.adjusted.tau_upper,
        eta_lower: fit.adjusted.eta_lower,
        eta_independent: plain.eta_independent,
        eta_upper: fit.adjusted.eta_upper,
    }
}

/// Indices of one bootstrap resample.
fn resample(rng: &mut ChaCha8Rng, groups: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::with_capacity(groups.iter().map(Vec::len).sum());
    for g in groups {
        for _ in 0..g.len() {
            out.push(g[rng.random_range(0..g.len())]);
        }
    }
    out
}

/// Runs the bootstrap. Replicate `r` draws from stream `r` of a ChaCha8
/// generator seeded with `opts.seed`, so results do not depend on threading.
pub fn bootstrap(records: &[UnitRecord], estimator: &Estimator, opts: &BootstrapOptions) -> Result<BootstrapDraws> {
    if opts.n_boot == 0 {
        return Err(Error::InvalidArgument("n_boot must be positive".into()));
    }
    let j = infer_categories(records, opts.categories)?;
    // The covariate EM on each resample starts from the full-sample fit.
    let (point, warm) = match estimator {
        Estimator::ComplierAdjusted(mode) => {
            let fit = em_fit_with_covariates(records, *mode, &opts.em, Some(j))?;
            (covariate_bound_set(&fit), Some(fit))
        }
        _ => (point_estimate(records, estimator, Some(j), &opts.em)?, None),
    };
    let groups: Vec<Vec<usize>> = if estimator.stratified() {
        vec![
            (0..records.len()).filter(|&i| records[i].z).collect(),
            (0..records.len()).filter(|&i| !records[i].z).collect(),
        ]
    } else {
        vec![(0..records.len()).collect()]
    };
    let outcomes: Vec<Option<BoundSet<f64>>> = (0..opts.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let idx = resample(&mut rng, &groups);
            let sample: Vec<UnitRecord> = idx.iter().map(|&i| records[i].clone()).collect();
            let est = match estimator {
                Estimator::Ipw { propensity: Propensity::Known(e), epsilon } => Estimator::Ipw {
                    propensity: Propensity::Known(idx.iter().map(|&i| e[i]).collect()),
                    epsilon: *epsilon,
                },
                other => other.clone(),
            };
            match (&est, &warm) {
                (Estimator::ComplierAdjusted(mode), Some(fit)) => {
                    em_fit_with_covariates_from(&sample, *mode, &opts.em, Some(j), Some(fit)).ok().map(|f| covariate_bound_set(&f))
                }
                _ => point_estimate(&sample, &est, Some(j), &opts.em).ok(),
            }
        })
        .collect();
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    if dropped as f64 > MAX_DROPPED_SHARE * opts.n_boot as f64 {
        return Err(Error::ReplicateFailure { dropped, total: opts.n_boot });
    }
    Ok(BootstrapDraws { point, replicates: outcomes.into_iter().flatten().collect(), dropped, n_boot: opts.n_boot, seed: opts.seed })
}

/// Interval intended to cover both sharp bounds of `estimand`.
pub fn bootstrap_bounds_ci(
    records: &[UnitRecord],
    estimator: &Estimator,
    estimand: Estimand,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<IntervalReport> {
    let draws = bootstrap(records, estimator, &BootstrapOptions { n_boot, seed, ..Default::default() })?;
    draws.interval(estimand, PairLower::Bound, level)
}

/// Interval intended to cover the independence value and the upper bound.
pub fn bootstrap_pair_ci_with_independent(
    records: &[UnitRecord],
    estimator: &Estimator,
    estimand: Estimand,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<IntervalReport> {
    let draws = bootstrap(records, estimator, &BootstrapOptions { n_boot, seed, ..Default::default() })?;
    draws.interval(estimand, PairLower::Independent, level)
}
