//! Marginal and joint distributions over `J` ordered categories.
//!
//! Category `0` is the worst outcome and `J - 1` the best. In a joint
//! distribution the row index is the outcome under treatment and the column
//! index the outcome under control.

use crate::data::{infer_categories, UnitRecord};
use crate::error::{Error, Result};
use crate::scalar::{sum, tail_sums, Scalar};

/// A validated probability vector over `J >= 2` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistribution<T> {
    probs: Vec<T>,
}

/// Validates a raw probability vector. Never renormalizes.
pub fn validate_marginal<T: Scalar>(probs: Vec<T>) -> Result<MarginalDistribution<T>> {
    if probs.len() < 2 {
        return Err(Error::LengthTooShort { len: probs.len() });
    }
    let neg = -T::neg_tolerance();
    if let Some((index, v)) = probs.iter().enumerate().find(|(_, v)| **v < neg) {
        return Err(Error::NegativeEntry { index, value: v.to_f64() });
    }
    let total = sum(&probs);
    let deviation = total - T::one();
    if deviation.abs_val() > T::sum_tolerance() {
        return Err(Error::SumNotOne { deviation: deviation.to_f64() });
    }
    Ok(MarginalDistribution { probs })
}

impl<T: Scalar> MarginalDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        validate_marginal(probs)
    }

    /// Point mass at `category`.
    pub fn point_mass(categories: usize, category: usize) -> Result<Self> {
        let mut probs = vec![T::zero(); categories];
        if category >= categories {
            return Err(Error::OutOfRangeOutcome { unit: 0, y: category, categories });
        }
        probs[category] = T::one();
        Self::new(probs)
    }

    /// Relative frequencies of `counts`; exact in rational mode.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyArm { arm: "counted" });
        }
        Self::new(counts.iter().map(|&c| T::from_ratio(c as i64, total as i64)).collect())
    }

    pub fn uniform(categories: usize) -> Result<Self> {
        Self::new(vec![T::from_ratio(1, categories as i64); categories])
    }

    pub fn categories(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<T> {
        self.probs
    }

    /// `pr(Y >= j)` for every `j`.
    pub fn upper_tails(&self) -> Vec<T> {
        tail_sums(&self.probs)
    }

    /// Categories with positive probability.
    pub fn support(&self) -> Vec<usize> {
        self.probs.iter().enumerate().filter(|(_, p)| **p > T::zero()).map(|(i, _)| i).collect()
    }

    pub fn to_f64(&self) -> MarginalDistribution<f64> {
        MarginalDistribution { probs: self.probs.iter().map(Scalar::to_f64).collect() }
    }
}

/// Marginals of the treatment and control potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPair<T> {
    pub treated: MarginalDistribution<T>,
    pub control: MarginalDistribution<T>,
}

impl<T: Scalar> MarginalPair<T> {
    pub fn new(treated: MarginalDistribution<T>, control: MarginalDistribution<T>) -> Result<Self> {
        if treated.categories() != control.categories() {
            return Err(Error::CategoryMismatch { left: treated.categories(), right: control.categories() });
        }
        Ok(MarginalPair { treated, control })
    }

    /// Validates both vectors and pairs them.
    pub fn from_vecs(treated: Vec<T>, control: Vec<T>) -> Result<Self> {
        Self::new(MarginalDistribution::new(treated)?, MarginalDistribution::new(control)?)
    }

    pub fn categories(&self) -> usize {
        self.treated.categories()
    }

    /// The pair with treatment and control labels exchanged.
    pub fn swapped(&self) -> Self {
        MarginalPair { treated: self.control.clone(), control: self.treated.clone() }
    }

    pub fn to_f64(&self) -> MarginalPair<f64> {
        MarginalPair { treated: self.treated.to_f64(), control: self.control.to_f64() }
    }
}

/// A `J x J` probability matrix of joint potential outcomes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution<T> {
    categories: usize,
    cells: Vec<T>,
}

impl<T: Scalar> JointDistribution<T> {
    /// Validates nonnegativity and total mass.
    pub fn new(categories: usize, cells: Vec<T>) -> Result<Self> {
        if categories < 2 {
            return Err(Error::LengthTooShort { len: categories });
        }
        if cells.len() != categories * categories {
            return Err(Error::DimensionMismatch { expected: categories * categories, found: cells.len() });
        }
        let neg = -T::neg_tolerance();
        if let Some((i, v)) = cells.iter().enumerate().find(|(_, v)| **v < neg) {
            return Err(Error::InvalidJoint(format!(
                "negative entry {} at ({}, {})",
                v.to_f64(),
                i / categories,
                i % categories
            )));
        }
        let deviation = sum(&cells) - T::one();
        if deviation.abs_val() > T::sum_tolerance() {
            return Err(Error::SumNotOne { deviation: deviation.to_f64() });
        }
        Ok(JointDistribution { categories, cells })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let j = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != j) {
            return Err(Error::DimensionMismatch { expected: j, found: bad.len() });
        }
        Self::new(j, rows.into_iter().flatten().collect())
    }

    /// Product coupling of the two marginals.
    pub fn independent(m: &MarginalPair<T>) -> Self {
        let (p1, p0) = (m.treated.probs(), m.control.probs());
        let cells = p1.iter().flat_map(|a| p0.iter().map(move |b| a.clone() * b.clone())).collect();
        JointDistribution { categories: p1.len(), cells }
    }

    pub(crate) fn from_cells_unchecked(categories: usize, cells: Vec<T>) -> Self {
        JointDistribution { categories, cells }
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn get(&self, k: usize, l: usize) -> &T {
        &self.cells[k * self.categories + l]
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.cells.chunks(self.categories).map(<[T]>::to_vec).collect()
    }

    /// `p_{k+}`.
    pub fn row_margins(&self) -> Vec<T> {
        self.cells.chunks(self.categories).map(sum).collect()
    }

    /// `p_{+l}`.
    pub fn col_margins(&self) -> Vec<T> {
        (0..self.categories)
            .map(|l| (0..self.categories).fold(T::zero(), |acc, k| acc + self.get(k, l).clone()))
            .collect()
    }

    pub fn margins(&self) -> Result<MarginalPair<T>> {
        MarginalPair::from_vecs(self.row_margins(), self.col_margins())
    }

    pub fn transpose(&self) -> Self {
        let j = self.categories;
        let cells = (0..j * j).map(|i| self.get(i % j, i / j).clone()).collect();
        JointDistribution { categories: j, cells }
    }

    /// Largest absolute deviation of the margins from `m`.
    pub fn margin_error(&self, m: &MarginalPair<T>) -> T {
        let rows = self.row_margins().into_iter().zip(m.treated.probs());
        let cols = self.col_margins().into_iter().zip(m.control.probs());
        rows.chain(cols).fold(T::zero(), |acc, (a, b)| {
            let d = (a - b.clone()).abs_val();
            if d > acc {
                d
            } else {
                acc
            }
        })
    }

    /// Entries strictly above the diagonal are all zero.
    pub fn is_lower_triangular(&self) -> bool {
        (0..self.categories).all(|k| (k + 1..self.categories).all(|l| self.get(k, l).is_zero()))
    }

    pub fn to_f64(&self) -> JointDistribution<f64> {
        JointDistribution { categories: self.categories, cells: self.cells.iter().map(Scalar::to_f64).collect() }
    }
}

/// Distributional causal effects `Δ_j = pr{Y(1) >= j} - pr{Y(0) >= j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVector<T>(pub Vec<T>);

impl<T: Scalar> DeltaVector<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }

    /// Smallest index attaining the minimum.
    pub fn argmin(&self) -> usize {
        first_extreme(&self.0, |a, b| a < b)
    }

    pub fn min(&self) -> T {
        self.0[self.argmin()].clone()
    }

    pub fn argmax(&self) -> usize {
        first_extreme(&self.0, |a, b| a > b)
    }

    pub fn max(&self) -> T {
        self.0[self.argmax()].clone()
    }
}

/// Index of the first element that no later element beats under `better`.
pub(crate) fn first_extreme<T: Scalar>(values: &[T], better: impl Fn(&T, &T) -> bool) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if better(v, &values[best]) {
            best = i;
        }
    }
    best
}

pub fn delta_effects<T: Scalar>(m: &MarginalPair<T>) -> DeltaVector<T> {
    delta_from_probs(m.treated.probs(), m.control.probs())
}

/// Same as [`delta_effects`] on unvalidated slices.
pub(crate) fn delta_from_probs<T: Scalar>(p1: &[T], p0: &[T]) -> DeltaVector<T> {
    let t1 = tail_sums(p1);
    let t0 = tail_sums(p0);
    let mut d: Vec<T> = t1.into_iter().zip(t0).map(|(a, b)| a - b).collect();
    // Both tails at 0 are the total mass.
    d[0] = T::zero();
    DeltaVector(d)
}

/// `Δ_j >= 0` for all `j` (float slack 1e-12).
pub fn stochastically_dominates<T: Scalar>(m: &MarginalPair<T>) -> bool {
    let floor = -T::neg_tolerance();
    delta_effects(m).0.iter().all(|d| *d >= floor)
}

/// `τ`, `η` and `α = τ + η - 1` of a joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimands<T> {
    pub tau: T,
    pub eta: T,
    pub alpha: T,
}

pub fn estimands_of_joint<T: Scalar>(p: &JointDistribution<T>) -> JointEstimands<T> {
    let j = p.categories();
    let mut diag = T::zero();
    let mut below = T::zero();
    for k in 0..j {
        for l in 0..=k {
            if k == l {
                diag = diag + p.get(k, l).clone();
            } else {
                below = below + p.get(k, l).clone();
            }
        }
    }
    let tau = diag + below.clone();
    let eta = below;
    let alpha = tau.clone() + eta.clone() - T::one();
    JointEstimands { tau, eta, alpha }
}

/// Within-arm relative frequencies. `categories` overrides `max(y) + 1`.
pub fn empirical_marginals(records: &[UnitRecord], categories: Option<usize>) -> Result<MarginalPair<f64>> {
    let j = infer_categories(records, categories)?;
    let (c1, c0) = arm_counts(records, j);
    if c1.iter().sum::<usize>() == 0 {
        return Err(Error::EmptyArm { arm: "treated" });
    }
    if c0.iter().sum::<usize>() == 0 {
        return Err(Error::EmptyArm { arm: "control" });
    }
    MarginalPair::new(MarginalDistribution::from_counts(&c1)?, MarginalDistribution::from_counts(&c0)?)
}

/// Per-category outcome counts for the treated and control arms.
pub fn arm_counts(records: &[UnitRecord], categories: usize) -> (Vec<usize>, Vec<usize>) {
    let mut c1 = vec![0; categories];
    let mut c0 = vec![0; categories];
    for r in records {
        if r.z {
            c1[r.y] += 1;
        } else {
            c0[r.y] += 1;
        }
    }
    (c1, c0)
}
