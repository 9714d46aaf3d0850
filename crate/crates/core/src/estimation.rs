//! Point estimates of the bounds from unit-level data.

use std::collections::BTreeMap;

use crate::bounds::{full_report, BoundsReport};
use crate::data::{infer_categories, UnitRecord};
use crate::distributions::{empirical_marginals, MarginalDistribution, MarginalPair};
use crate::error::{Error, Result};
use crate::models::{fit_cumulative_logit_with, fit_logit, CumulativeLogitSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Randomized,
    Ipw,
    Adjusted,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Randomized => "randomized",
            Design::Ipw => "ipw",
            Design::Adjusted => "adjusted",
        }
    }
}

/// Lower bound, independence value and upper bound for both estimands.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet<T> {
    pub tau_lower: T,
    pub tau_independent: T,
    pub tau_upper: T,
    pub eta_lower: T,
    pub eta_independent: T,
    pub eta_upper: T,
}

impl<T: Scalar> From<&BoundsReport<T>> for BoundSet<T> {
    fn from(r: &BoundsReport<T>) -> Self {
        BoundSet {
            tau_lower: r.tau_lower.clone(),
            tau_independent: r.tau_independent.clone(),
            tau_upper: r.tau_upper.clone(),
            eta_lower: r.eta_lower.clone(),
            eta_independent: r.eta_independent.clone(),
            eta_upper: r.eta_upper.clone(),
        }
    }
}

impl<T: Scalar> BoundSet<T> {
    fn zero() -> Self {
        BoundSet {
            tau_lower: T::zero(),
            tau_independent: T::zero(),
            tau_upper: T::zero(),
            eta_lower: T::zero(),
            eta_independent: T::zero(),
            eta_upper: T::zero(),
        }
    }

    /// `self + w * other`, field by field.
    fn add_scaled(self, w: &T, other: &BoundSet<T>) -> Self {
        BoundSet {
            tau_lower: self.tau_lower + w.clone() * other.tau_lower.clone(),
            tau_independent: self.tau_independent + w.clone() * other.tau_independent.clone(),
            tau_upper: self.tau_upper + w.clone() * other.tau_upper.clone(),
            eta_lower: self.eta_lower + w.clone() * other.eta_lower.clone(),
            eta_independent: self.eta_independent + w.clone() * other.eta_independent.clone(),
            eta_upper: self.eta_upper + w.clone() * other.eta_upper.clone(),
        }
    }

    pub fn tau(&self) -> (T, T) {
        (self.tau_lower.clone(), self.tau_upper.clone())
    }

    pub fn eta(&self) -> (T, T) {
        (self.eta_lower.clone(), self.eta_upper.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedBounds {
    /// Bounds computed from the estimated marginals.
    pub report: BoundsReport<f64>,
    /// What the design reports: equal to `report` except for adjusted
    /// designs, where conditional bounds are averaged over units.
    pub bounds: BoundSet<f64>,
    pub marginals: MarginalPair<f64>,
    pub design: Design,
    pub n_treated: usize,
    pub n_control: usize,
}

fn arm_sizes(records: &[UnitRecord]) -> Result<(usize, usize)> {
    let n1 = records.iter().filter(|r| r.z).count();
    let n0 = records.len() - n1;
    if n1 == 0 {
        return Err(Error::EmptyArm { arm: "treated" });
    }
    if n0 == 0 {
        return Err(Error::EmptyArm { arm: "control" });
    }
    Ok((n1, n0))
}

fn finish(marginals: MarginalPair<f64>, bounds: Option<BoundSet<f64>>, design: Design, n: (usize, usize)) -> EstimatedBounds {
    let report = full_report(&marginals);
    let bounds = bounds.unwrap_or_else(|| BoundSet::from(&report));
    EstimatedBounds { report, bounds, marginals, design, n_treated: n.0, n_control: n.1 }
}

/// Sample analogues of the marginals fed to the closed forms.
pub fn estimate_randomized(records: &[UnitRecord], categories: Option<usize>) -> Result<EstimatedBounds> {
    let n = arm_sizes(records)?;
    let m = empirical_marginals(records, categories)?;
    Ok(finish(m, None, Design::Randomized, n))
}

/// Source of propensity scores `pr(z = 1 | x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// Logistic regression of `z` on the covariates.
    Fitted,
    /// The same known value for every unit.
    Constant(f64),
    /// Known per-unit values.
    Known(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpwOptions {
    /// Scores must lie in `(epsilon, 1 - epsilon)`.
    pub epsilon: f64,
    pub categories: Option<usize>,
}

impl Default for IpwOptions {
    fn default() -> Self {
        IpwOptions { epsilon: 0.01, categories: None }
    }
}

/// Indices of covariate columns that vary across `records`.
pub fn varying_columns(records: &[UnitRecord]) -> Vec<usize> {
    let p = records.first().map_or(0, |r| r.x.len());
    (0..p).filter(|&c| records.iter().any(|r| r.x[c] != records[0].x[c])).collect()
}

fn project(records: &[UnitRecord], cols: &[usize]) -> Vec<Vec<f64>> {
    records.iter().map(|r| cols.iter().map(|&c| r.x[c]).collect()).collect()
}

/// Propensity scores for each unit.
pub fn propensity_scores(records: &[UnitRecord], propensity: &Propensity) -> Result<Vec<f64>> {
    match propensity {
        Propensity::Constant(e) => Ok(vec![*e; records.len()]),
        Propensity::Known(e) => {
            if e.len() != records.len() {
                return Err(Error::LengthMismatch { left: records.len(), right: e.len() });
            }
            Ok(e.clone())
        }
        Propensity::Fitted => {
            let cols = varying_columns(records);
            let z: Vec<bool> = records.iter().map(|r| r.z).collect();
            let x = project(records, &cols);
            let model = fit_logit(&z, if cols.is_empty() { &[] } else { &x })?;
            if cols.is_empty() {
                let e = model.predict(&[])?;
                return Ok(vec![e; records.len()]);
            }
            x.iter().map(|row| model.predict(row)).collect()
        }
    }
}

/// Propensity-weighted marginals, normalized within each arm.
pub fn estimate_ipw(records: &[UnitRecord], propensity: &Propensity, opts: &IpwOptions) -> Result<EstimatedBounds> {
    let n = arm_sizes(records)?;
    let j = infer_categories(records, opts.categories)?;
    let e = propensity_scores(records, propensity)?;
    let bad: Vec<usize> =
        e.iter().enumerate().filter(|(_, v)| !(**v > opts.epsilon && **v < 1.0 - opts.epsilon)).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(Error::ExtremePropensity { units: bad, epsilon: opts.epsilon });
    }
    let mut w1 = vec![0.0; j];
    let mut w0 = vec![0.0; j];
    for (r, ei) in records.iter().zip(&e) {
        if r.z {
            w1[r.y] += 1.0 / ei;
        } else {
            w0[r.y] += 1.0 / (1.0 - ei);
        }
    }
    let normalize = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        MarginalDistribution::new(v.into_iter().map(|a| a / s).collect())
    };
    let m = MarginalPair::new(normalize(w1)?, normalize(w0)?)?;
    Ok(finish(m, None, Design::Ipw, n))
}

/// How conditional marginals given covariates are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustment {
    /// Within-stratum frequencies, strata being distinct covariate vectors.
    Discrete,
    /// A proportional-odds model per arm.
    Model,
}

/// Bounds averaged over weighted strata, next to the bounds of the pooled
/// (mixture) marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedPopulation<T> {
    pub adjusted: BoundSet<T>,
    pub unadjusted: BoundsReport<T>,
}

/// Exact population version: `strata` holds `(weight, conditional marginals)`.
/// Weights are normalized to sum to one.
pub fn population_adjusted<T: Scalar>(strata: &[(T, MarginalPair<T>)]) -> Result<AdjustedPopulation<T>> {
    let first = strata.first().ok_or_else(|| Error::InvalidArgument("no strata".into()))?;
    let j = first.1.categories();
    let total = strata.iter().fold(T::zero(), |a, (w, _)| a + w.clone());
    if !(total > T::zero()) {
        return Err(Error::InvalidArgument("stratum weights sum to zero".into()));
    }
    let mut adjusted = BoundSet::zero();
    let mut p1 = vec![T::zero(); j];
    let mut p0 = vec![T::zero(); j];
    for (w, m) in strata {
        if m.categories() != j {
            return Err(Error::CategoryMismatch { left: j, right: m.categories() });
        }
        let share = w.clone() / total.clone();
        adjusted = adjusted.add_scaled(&share, &BoundSet::from(&full_report(m)));
        for k in 0..j {
            p1[k] = p1[k].clone() + share.clone() * m.treated.probs()[k].clone();
            p0[k] = p0[k].clone() + share.clone() * m.control.probs()[k].clone();
        }
    }
    let unadjusted = full_report(&MarginalPair::from_vecs(p1, p0)?);
    Ok(AdjustedPopulation { adjusted, unadjusted })
}

/// Key for grouping exact covariate vectors.
fn stratum_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

/// Conditional bounds averaged over the covariates of all units.
pub fn estimate_adjusted(records: &[UnitRecord], adjustment: Adjustment, categories: Option<usize>) -> Result<EstimatedBounds> {
    let n = arm_sizes(records)?;
    let j = infer_categories(records, categories)?;
    let pooled = empirical_marginals(records, Some(j))?;
    let total = records.len() as f64;
    let adjusted = match adjustment {
        Adjustment::Discrete => {
            let mut groups: BTreeMap<Vec<u64>, (Vec<f64>, Vec<usize>, Vec<usize>)> = BTreeMap::new();
            for r in records {
                let g = groups.entry(stratum_key(&r.x)).or_insert_with(|| (r.x.clone(), vec![0; j], vec![0; j]));
                if r.z {
                    g.1[r.y] += 1;
                } else {
                    g.2[r.y] += 1;
                }
            }
            let mut strata = Vec::with_capacity(groups.len());
            for (x, c1, c0) in groups.into_values() {
                let label = format!("{x:?}");
                if c1.iter().sum::<usize>() == 0 {
                    return Err(Error::StratumMissingArm { stratum: label, arm: "treated" });
                }
                if c0.iter().sum::<usize>() == 0 {
                    return Err(Error::StratumMissingArm { stratum: label, arm: "control" });
                }
                let size = (c1.iter().sum::<usize>() + c0.iter().sum::<usize>()) as f64;
                let m = MarginalPair::new(MarginalDistribution::from_counts(&c1)?, MarginalDistribution::from_counts(&c0)?)?;
                strata.push((size / total, m));
            }
            population_adjusted(&strata)?.adjusted
        }
        Adjustment::Model => {
            let cols = varying_columns(records);
            let x = project(records, &cols);
            let spec = CumulativeLogitSpec { categories: Some(j), ..Default::default() };
            let fit_arm = |arm: bool| {
                let (y, xs): (Vec<usize>, Vec<Vec<f64>>) =
                    records.iter().zip(&x).filter(|(r, _)| r.z == arm).map(|(r, row)| (r.y, row.clone())).unzip();
                fit_cumulative_logit_with(&y, if cols.is_empty() { &[] } else { &xs }, None, &spec)
            };
            let m1 = fit_arm(true)?;
            let m0 = fit_arm(false)?;
            let mut acc = BoundSet::zero();
            let share = 1.0 / total;
            for row in &x {
                let m = MarginalPair::new(m1.predict_marginal(row)?, m0.predict_marginal(row)?)?;
                acc = acc.add_scaled(&share, &BoundSet::from(&full_report(&m)));
            }
            acc
        }
    };
    Ok(finish(pooled, Some(adjusted), Design::Adjusted, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::records_from_counts;
    use crate::scalar::{ratio, Rational};

    fn pair(p1: [(i64, i64); 3], p0: [(i64, i64); 3]) -> MarginalPair<Rational> {
        MarginalPair::from_vecs(p1.iter().map(|&(a, b)| ratio(a, b)).collect(), p0.iter().map(|&(a, b)| ratio(a, b)).collect())
            .unwrap()
    }

    #[test]
    fn two_stratum_population() {
        let s1 = pair([(1, 5), (3, 5), (1, 5)], [(2, 5), (1, 5), (2, 5)]);
        let s0 = pair([(1, 5), (1, 5), (3, 5)], [(3, 5), (1, 5), (1, 5)]);
        let out = population_adjusted(&[(ratio(1, 2), s1), (ratio(1, 2), s0)]).unwrap();
        assert_eq!(out.adjusted.tau(), (ratio(1, 2), ratio(9, 10)));
        assert_eq!(out.unadjusted.tau(), (ratio(1, 2), ratio(1, 1)));
    }

    #[test]
    fn single_stratum_equals_unadjusted() {
        let recs = records_from_counts(&[1, 3, 4], &[4, 2, 2]);
        let a = estimate_adjusted(&recs, Adjustment::Discrete, None).unwrap();
        let r = estimate_randomized(&recs, None).unwrap();
        assert!((a.bounds.tau_lower - r.bounds.tau_lower).abs() < 1e-15);
        assert!((a.bounds.eta_upper - r.bounds.eta_upper).abs() < 1e-15);
    }

    #[test]
    fn constant_covariate_model_mode() {
        let recs: Vec<UnitRecord> =
            records_from_counts(&[1, 3, 4], &[4, 2, 2]).into_iter().map(|r| r.with_x(vec![3.0])).collect();
        let a = estimate_adjusted(&recs, Adjustment::Model, None).unwrap();
        let r = estimate_randomized(&recs, None).unwrap();
        assert!((a.bounds.tau_lower - r.bounds.tau_lower).abs() < 1e-6);
        assert!((a.bounds.tau_upper - r.bounds.tau_upper).abs() < 1e-6);
        assert!((a.bounds.eta_lower - r.bounds.eta_lower).abs() < 1e-6);
    }

    #[test]
    fn missing_arm_in_stratum() {
        let mut recs = records_from_counts(&[1, 1], &[1, 1]);
        recs.push(UnitRecord::new(true, 0));
        for (i, r) in recs.iter_mut().enumerate() {
            r.x = vec![if i == 4 { 1.0 } else { 0.0 }];
        }
        assert!(matches!(
            estimate_adjusted(&recs, Adjustment::Discrete, None),
            Err(Error::StratumMissingArm { arm: "control", .. })
        ));
    }

    #[test]
    fn degenerate_randomized() {
        let recs = vec![UnitRecord::new(true, 1), UnitRecord::new(false, 1)];
        let e = estimate_randomized(&recs, None).unwrap();
        assert_eq!(e.bounds.tau(), (1.0, 1.0));
    }

    #[test]
    fn constant_half_propensity_matches_randomized() {
        let recs = records_from_counts(&[0, 2, 10, 30, 2], &[14, 13, 6, 7, 0]);
        let a = estimate_ipw(&recs, &Propensity::Constant(0.5), &IpwOptions::default()).unwrap();
        let b = estimate_randomized(&recs, None).unwrap();
        for (u, v) in a.marginals.treated.probs().iter().zip(b.marginals.treated.probs()) {
            assert!((u - v).abs() < 1e-15);
        }
        assert!((a.bounds.tau_lower - b.bounds.tau_lower).abs() < 1e-15);
    }

    #[test]
    fn extreme_propensity_is_reported() {
        let recs = records_from_counts(&[1, 1], &[1, 1]);
        let e = vec![0.5, 0.002, 0.5, 0.5];
        match estimate_ipw(&recs, &Propensity::Known(e), &IpwOptions::default()) {
            Err(Error::ExtremePropensity { units, .. }) => assert_eq!(units, vec![1]),
            other => panic!("expected ExtremePropensity, got {other:?}"),
        }
    }
}
