//! Complier bounds under one-sided or two-sided noncompliance.
//!
//! Units fall into always-takers, compliers and never-takers (no defiers).
//! Always-takers and never-takers have one outcome distribution each, shared
//! by both arms; compliers have separate treated and control marginals. With
//! strong monotonicity nobody in the control arm can take the treatment, so
//! there are no always-takers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{full_report, BoundsReport};
use crate::data::{has_treatment_received, infer_categories, UnitRecord};
use crate::distributions::{MarginalDistribution, MarginalPair};
use crate::error::{Error, Result};
use crate::estimation::varying_columns;
use crate::models::{
    fit_cumulative_logit_with, fit_multinomial_logit_soft, CumulativeLogitModel, CumulativeLogitSpec, FitOptions,
    MultinomialLogitModel, MultinomialSpec,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// `D(1) >= D(0)`.
    Standard,
    /// `D(0) = 0` for everyone.
    Strong,
}

impl std::str::FromStr for Monotonicity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Monotonicity::Standard),
            "strong" => Ok(Monotonicity::Strong),
            other => Err(Error::InvalidArgument(format!("monotonicity must be standard or strong, got `{other}`"))),
        }
    }
}

/// Index of each stratum in class-probability vectors.
pub const ALWAYS: usize = 0;
pub const COMPLIER: usize = 1;
pub const NEVER: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct StrataModel<T> {
    pub pi_a: T,
    pub pi_c: T,
    pub pi_n: T,
    pub always: MarginalDistribution<T>,
    pub never: MarginalDistribution<T>,
    pub complier_treated: MarginalDistribution<T>,
    pub complier_control: MarginalDistribution<T>,
}

impl<T: Scalar> StrataModel<T> {
    pub fn new(
        pi: [T; 3],
        always: MarginalDistribution<T>,
        never: MarginalDistribution<T>,
        complier_treated: MarginalDistribution<T>,
        complier_control: MarginalDistribution<T>,
    ) -> Result<Self> {
        let [pi_a, pi_c, pi_n] = pi;
        let floor = -T::neg_tolerance();
        for v in [&pi_a, &pi_c, &pi_n] {
            if *v < floor {
                return Err(Error::NegativeEntry { index: 0, value: v.to_f64() });
            }
        }
        let dev = pi_a.clone() + pi_c.clone() + pi_n.clone() - T::one();
        if dev.abs_val() > T::sum_tolerance() {
            return Err(Error::SumNotOne { deviation: dev.to_f64() });
        }
        let j = always.categories();
        for m in [&never, &complier_treated, &complier_control] {
            if m.categories() != j {
                return Err(Error::CategoryMismatch { left: j, right: m.categories() });
            }
        }
        Ok(StrataModel { pi_a, pi_c, pi_n, always, never, complier_treated, complier_control })
    }

    pub fn categories(&self) -> usize {
        self.always.categories()
    }

    pub fn complier_marginals(&self) -> MarginalPair<T> {
        MarginalPair { treated: self.complier_treated.clone(), control: self.complier_control.clone() }
    }

    /// Population marginals of `Y(1)` and `Y(0)` implied by the strata.
    pub fn mixture_marginals(&self) -> Result<MarginalPair<T>> {
        let mix = |c: &MarginalDistribution<T>| -> Vec<T> {
            (0..self.categories())
                .map(|k| {
                    self.pi_a.clone() * self.always.probs()[k].clone()
                        + self.pi_c.clone() * c.probs()[k].clone()
                        + self.pi_n.clone() * self.never.probs()[k].clone()
                })
                .collect()
        };
        MarginalPair::from_vecs(mix(&self.complier_treated), mix(&self.complier_control))
    }

    pub fn to_f64(&self) -> StrataModel<f64> {
        StrataModel {
            pi_a: self.pi_a.to_f64(),
            pi_c: self.pi_c.to_f64(),
            pi_n: self.pi_n.to_f64(),
            always: self.always.to_f64(),
            never: self.never.to_f64(),
            complier_treated: self.complier_treated.to_f64(),
            complier_control: self.complier_control.to_f64(),
        }
    }
}

/// Population bounds tightened by the strata structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpenedBounds<T> {
    pub tau_lower: T,
    pub tau_upper: T,
    pub eta_lower: T,
    pub eta_upper: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplierBoundsReport<T> {
    /// Bounds for compliers, from the two complier marginals.
    pub complier: BoundsReport<T>,
    pub population_sharpened: SharpenedBounds<T>,
    pub pi_c: T,
}

pub fn complier_bounds<T: Scalar>(s: &StrataModel<T>) -> Result<ComplierBoundsReport<T>> {
    if !(s.pi_c > T::zero()) {
        return Err(Error::NoCompliers);
    }
    let complier = full_report(&s.complier_marginals());
    let pc = s.pi_c.clone();
    let rest = T::one() - pc.clone();
    let population_sharpened = SharpenedBounds {
        tau_lower: pc.clone() * complier.tau_lower.clone() + rest.clone(),
        tau_upper: pc.clone() * complier.tau_upper.clone() + rest,
        eta_lower: pc.clone() * complier.eta_lower.clone(),
        eta_upper: pc.clone() * complier.eta_upper.clone(),
    };
    Ok(ComplierBoundsReport { complier, population_sharpened, pi_c: pc })
}

/// Converts a population `τ` or `η` to its complier counterpart.
pub fn estimands_relation<T: Scalar>(value: T, pi_c: T, estimand: crate::bounds::Estimand) -> Result<T> {
    if !(pi_c > T::zero()) {
        return Err(Error::NoCompliers);
    }
    let out = match estimand {
        crate::bounds::Estimand::Tau => T::one() - (T::one() - value) / pi_c,
        crate::bounds::Estimand::Eta => value / pi_c,
    };
    let slack = if T::EXACT { T::zero() } else { T::from_ratio(1, 1_000_000_000) };
    if out < -slack.clone() || out > T::one() + slack {
        return Err(Error::InconsistentInputs { value: out.to_f64() });
    }
    Ok(out)
}

/// Weighted outcome counts in the four `(z, d)` cells, indexed `[z][d][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub counts: [[Vec<f64>; 2]; 2],
}

impl CellCounts {
    pub fn from_records(records: &[UnitRecord], categories: Option<usize>) -> Result<Self> {
        if !has_treatment_received(records)? || records.is_empty() {
            return Err(Error::MissingTreatmentReceived);
        }
        let j = infer_categories(records, categories)?;
        let mut counts = [[vec![0.0; j], vec![0.0; j]], [vec![0.0; j], vec![0.0; j]]];
        for r in records {
            let d = r.d.expect("checked above");
            counts[r.z as usize][d as usize][r.y] += 1.0;
        }
        Ok(CellCounts { counts })
    }

    pub fn categories(&self) -> usize {
        self.counts[0][0].len()
    }

    pub fn cell_total(&self, z: usize, d: usize) -> f64 {
        self.counts[z][d].iter().sum()
    }

    pub fn arm_total(&self, z: usize) -> f64 {
        self.cell_total(z, 0) + self.cell_total(z, 1)
    }

    fn check_arms(&self) -> Result<()> {
        if self.arm_total(1) <= 0.0 {
            return Err(Error::EmptyArm { arm: "treated" });
        }
        if self.arm_total(0) <= 0.0 {
            return Err(Error::EmptyArm { arm: "control" });
        }
        Ok(())
    }

    fn check_mode(&self, mode: Monotonicity) -> Result<()> {
        if mode == Monotonicity::Strong && self.cell_total(0, 1) > 0.0 {
            return Err(Error::DefiersObserved { count: self.cell_total(0, 1).round() as usize });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub model: StrataModel<f64>,
    /// Mixture subtraction produced negative complier probabilities, which
    /// were clipped to zero and renormalized.
    pub negative_complier_cells: bool,
}

fn frequencies(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|a| a / s).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// Clips negatives, renormalizes, and reports whether clipping happened.
fn clip_renormalize(v: Vec<f64>) -> (Vec<f64>, bool) {
    let negative = v.iter().any(|a| *a < -1e-12);
    let clipped: Vec<f64> = v.into_iter().map(|a| a.max(0.0)).collect();
    (frequencies(&clipped), negative)
}

/// Closed-form identification from cell frequencies. Empty always-taker or
/// never-taker cells leave that stratum's outcome distribution uniform.
pub fn moment_identify(records: &[UnitRecord], mode: Monotonicity, categories: Option<usize>) -> Result<MomentEstimate> {
    moment_identify_cells(&CellCounts::from_records(records, categories)?, mode)
}

pub fn moment_identify_cells(cells: &CellCounts, mode: Monotonicity) -> Result<MomentEstimate> {
    cells.check_arms()?;
    cells.check_mode(mode)?;
    let j = cells.categories();
    let pi_a = cells.cell_total(0, 1) / cells.arm_total(0);
    let pi_n = cells.cell_total(1, 0) / cells.arm_total(1);
    let pi_c = 1.0 - pi_a - pi_n;
    if pi_c <= 0.0 {
        return Err(Error::NoCompliers);
    }
    let a = frequencies(&cells.counts[0][1]);
    let n = frequencies(&cells.counts[1][0]);
    let f11 = frequencies(&cells.counts[1][1]);
    let f00 = frequencies(&cells.counts[0][0]);
    let c1: Vec<f64> = (0..j).map(|k| ((pi_a + pi_c) * f11[k] - pi_a * a[k]) / pi_c).collect();
    let c0: Vec<f64> = (0..j).map(|k| ((pi_n + pi_c) * f00[k] - pi_n * n[k]) / pi_c).collect();
    let (c1, neg1) = clip_renormalize(c1);
    let (c0, neg0) = clip_renormalize(c0);
    let model = StrataModel::new(
        [pi_a, pi_c, pi_n],
        MarginalDistribution::new(a)?,
        MarginalDistribution::new(n)?,
        MarginalDistribution::new(c1)?,
        MarginalDistribution::new(c0)?,
    )?;
    Ok(MomentEstimate { model, negative_complier_cells: neg1 || neg0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when the mean log-likelihood changes by less than this.
    pub tol: f64,
    /// Also run from 5 random starts and keep the best fit.
    pub multistart: bool,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { max_iter: 1000, tol: 1e-8, multistart: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: StrataModel<f64>,
    /// Mean observed-data log-likelihood at the solution.
    pub loglik: f64,
    pub iterations: usize,
    /// Mean log-likelihood at the start and after every iteration.
    pub trace: Vec<f64>,
}

/// Raw EM parameters; all vectors have length `J`.
#[derive(Debug, Clone)]
struct Params {
    pi: [f64; 3],
    a: Vec<f64>,
    n: Vec<f64>,
    c1: Vec<f64>,
    c0: Vec<f64>,
}

impl Params {
    fn from_model(m: &StrataModel<f64>) -> Self {
        Params {
            pi: [m.pi_a, m.pi_c, m.pi_n],
            a: m.always.probs().to_vec(),
            n: m.never.probs().to_vec(),
            c1: m.complier_treated.probs().to_vec(),
            c0: m.complier_control.probs().to_vec(),
        }
    }

    fn into_model(self) -> Result<StrataModel<f64>> {
        StrataModel::new(
            self.pi,
            MarginalDistribution::new(self.a)?,
            MarginalDistribution::new(self.n)?,
            MarginalDistribution::new(self.c1)?,
            MarginalDistribution::new(self.c0)?,
        )
    }

    /// Probability of outcome `y` in cell `(z, d)` given `z`.
    fn cell_prob(&self, z: usize, d: usize, y: usize) -> f64 {
        let [pa, pc, pn] = self.pi;
        match (z, d) {
            (1, 0) => pn * self.n[y],
            (0, 1) => pa * self.a[y],
            (1, 1) => pa * self.a[y] + pc * self.c1[y],
            _ => pn * self.n[y] + pc * self.c0[y],
        }
    }
}

fn cell_loglik(cells: &CellCounts, p: &Params) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for z in 0..2 {
        for d in 0..2 {
            for (y, &c) in cells.counts[z][d].iter().enumerate() {
                if c > 0.0 {
                    total += c * p.cell_prob(z, d, y).max(1e-300).ln();
                    count += c;
                }
            }
        }
    }
    total / count
}

/// Posterior probability of the non-complier stratum in a mixed cell.
fn mixed_share(part: f64, complier: f64) -> f64 {
    let s = part + complier;
    if s > 0.0 {
        part / s
    } else {
        0.0
    }
}

fn em_step(cells: &CellCounts, p: &Params, mode: Monotonicity) -> Params {
    let j = cells.categories();
    let [pa, pc, pn] = p.pi;
    let mut a = vec![0.0; j];
    let mut n = vec![0.0; j];
    let mut c1 = vec![0.0; j];
    let mut c0 = vec![0.0; j];
    for y in 0..j {
        let r11 = if mode == Monotonicity::Strong { 0.0 } else { mixed_share(pa * p.a[y], pc * p.c1[y]) };
        let r00 = mixed_share(pn * p.n[y], pc * p.c0[y]);
        let n11 = cells.counts[1][1][y];
        let n00 = cells.counts[0][0][y];
        a[y] = cells.counts[0][1][y] + n11 * r11;
        c1[y] = n11 * (1.0 - r11);
        n[y] = cells.counts[1][0][y] + n00 * r00;
        c0[y] = n00 * (1.0 - r00);
    }
    let (sa, sn, s1, s0): (f64, f64, f64, f64) =
        (a.iter().sum(), n.iter().sum(), c1.iter().sum(), c0.iter().sum());
    let total = sa + sn + s1 + s0;
    // A stratum with no expected members keeps its previous distribution.
    let update = |v: Vec<f64>, s: f64, old: &[f64]| if s > 0.0 { v.iter().map(|x| x / s).collect() } else { old.to_vec() };
    Params {
        pi: [sa / total, (s1 + s0) / total, sn / total],
        a: update(a, sa, &p.a),
        n: update(n, sn, &p.n),
        c1: update(c1, s1, &p.c1),
        c0: update(c0, s0, &p.c0),
    }
}

/// Starting strata shares from the cell frequencies: zero for a stratum
/// whose identifying cell is empty, otherwise at least 0.01, renormalized.
fn initial_shares(cells: &CellCounts, mode: Monotonicity) -> Result<[f64; 3]> {
    if cells.cell_total(1, 1) <= 0.0 && cells.cell_total(0, 0) <= 0.0 {
        return Err(Error::DegenerateInit("no unit can be a complier".into()));
    }
    let share = |z: usize, d: usize| {
        if cells.cell_total(z, d) > 0.0 {
            (cells.cell_total(z, d) / cells.arm_total(z)).max(0.01)
        } else {
            0.0
        }
    };
    let pa = if mode == Monotonicity::Strong { 0.0 } else { share(0, 1) };
    let pn = share(1, 0);
    let pc = (1.0 - pa - pn).max(0.01);
    let s = pa + pc + pn;
    Ok([pa / s, pc / s, pn / s])
}

fn run_em(cells: &CellCounts, mode: Monotonicity, mut p: Params, opts: &EmOptions) -> Result<EmFit> {
    let mut ll = cell_loglik(cells, &p);
    let mut trace = vec![ll];
    for iter in 1..=opts.max_iter {
        p = em_step(cells, &p, mode);
        let next = cell_loglik(cells, &p);
        trace.push(next);
        let change = (next - ll).abs();
        ll = next;
        if change < opts.tol {
            return Ok(EmFit { model: p.into_model()?, loglik: ll, iterations: iter, trace });
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter })
}

/// Maximum-likelihood strata model by EM on the `(z, d, y)` cell counts.
pub fn em_fit(
    records: &[UnitRecord],
    mode: Monotonicity,
    init: Option<&StrataModel<f64>>,
    opts: &EmOptions,
    categories: Option<usize>,
) -> Result<EmFit> {
    em_fit_cells(&CellCounts::from_records(records, categories)?, mode, init, opts)
}

pub fn em_fit_cells(cells: &CellCounts, mode: Monotonicity, init: Option<&StrataModel<f64>>, opts: &EmOptions) -> Result<EmFit> {
    cells.check_arms()?;
    cells.check_mode(mode)?;
    let j = cells.categories();
    let start = match init {
        Some(m) => {
            if m.categories() != j {
                return Err(Error::CategoryMismatch { left: j, right: m.categories() });
            }
            if m.pi_c <= 0.0 {
                return Err(Error::DegenerateInit("initial complier share is zero".into()));
            }
            Params::from_model(m)
        }
        None => {
            let uniform = vec![1.0 / j as f64; j];
            Params { pi: initial_shares(cells, mode)?, a: uniform.clone(), n: uniform.clone(), c1: uniform.clone(), c0: uniform }
        }
    };
    let mut best = run_em(cells, mode, start.clone(), opts)?;
    if opts.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..5 {
            let mut draw = || -> Vec<f64> {
                let raw: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..1.0)).collect();
                frequencies(&raw)
            };
            let p = Params { pi: start.pi, a: draw(), n: draw(), c1: draw(), c0: draw() };
            if let Ok(fit) = run_em(cells, mode, p, opts) {
                if fit.loglik > best.loglik {
                    best = fit;
                }
            }
        }
    }
    Ok(best)
}

/// Mean observed-data log-likelihood of `model` on `records`.
pub fn observed_loglik(records: &[UnitRecord], model: &StrataModel<f64>) -> Result<f64> {
    let cells = CellCounts::from_records(records, Some(model.categories()))?;
    Ok(cell_loglik(&cells, &Params::from_model(model)))
}

/// Draws units from a strata model under randomization with `pr(z=1) = 1/2`.
pub fn simulate_records(model: &StrataModel<f64>, n: usize, seed: u64) -> Vec<UnitRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, p: &[f64]| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, v) in p.iter().enumerate() {
            acc += v;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    };
    let pi = [model.pi_a, model.pi_c, model.pi_n];
    (0..n)
        .map(|_| {
            let z = rng.random_bool(0.5);
            let g = pick(&mut rng, &pi);
            let (d, dist) = match g {
                ALWAYS => (true, model.always.probs()),
                NEVER => (false, model.never.probs()),
                _ if z => (true, model.complier_treated.probs()),
                _ => (false, model.complier_control.probs()),
            };
            UnitRecord::new(z, pick(&mut rng, dist)).with_d(d)
        })
        .collect()
}

/// Result of EM with covariate-dependent strata and outcome models.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateEmFit {
    pub strata: MultinomialLogitModel,
    /// `None` under strong monotonicity.
    pub always: Option<CumulativeLogitModel>,
    pub never: CumulativeLogitModel,
    pub complier_treated: CumulativeLogitModel,
    pub complier_control: CumulativeLogitModel,
    /// Covariate columns the models use.
    pub columns: Vec<usize>,
    /// `π_c(x_i)` for every unit.
    pub complier_share: Vec<f64>,
    /// Complier bounds averaged with weights `π_c(x_i)`.
    pub adjusted: SharpenedBounds<f64>,
    /// Complier marginals averaged with weights `π_c(x_i)`.
    pub complier_marginals: MarginalPair<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl CovariateEmFit {
    /// Bounds of the averaged complier marginals.
    pub fn unadjusted(&self) -> BoundsReport<f64> {
        full_report(&self.complier_marginals)
    }
}

/// Per-unit stratum shares and outcome probabilities at the observed `y`.
struct UnitTerms {
    pi: Vec<[f64; 3]>,
    /// `[always, never, complier treated, complier control]` at `y_i`.
    f: Vec<[f64; 4]>,
}

fn unit_loglik(records: &[UnitRecord], t: &UnitTerms) -> f64 {
    let total: f64 = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let [pa, pc, pn] = t.pi[i];
            let [fa, fnv, f1, f0] = t.f[i];
            let p = match (r.z, r.d.expect("checked")) {
                (true, false) => pn * fnv,
                (false, true) => pa * fa,
                (true, true) => pa * fa + pc * f1,
                (false, false) => pn * fnv + pc * f0,
            };
            p.max(1e-300).ln()
        })
        .sum();
    total / records.len() as f64
}

/// Posterior stratum probabilities `[always, complier, never]` per unit.
fn posteriors(records: &[UnitRecord], t: &UnitTerms) -> Vec<[f64; 3]> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let [pa, pc, pn] = t.pi[i];
            let [fa, fnv, f1, f0] = t.f[i];
            match (r.z, r.d.expect("checked")) {
                (true, false) => [0.0, 0.0, 1.0],
                (false, true) => [1.0, 0.0, 0.0],
                (true, true) => {
                    let s = mixed_share(pa * fa, pc * f1);
                    [s, 1.0 - s, 0.0]
                }
                (false, false) => {
                    let s = mixed_share(pn * fnv, pc * f0);
                    [0.0, 1.0 - s, s]
                }
            }
        })
        .collect()
}

/// EM where strata follow a multinomial logit and each outcome distribution
/// a proportional-odds model in the covariates. Starts from [`em_fit`].
pub fn em_fit_with_covariates(
    records: &[UnitRecord],
    mode: Monotonicity,
    opts: &EmOptions,
    categories: Option<usize>,
) -> Result<CovariateEmFit> {
    em_fit_with_covariates_from(records, mode, opts, categories, None)
}

/// As [`em_fit_with_covariates`], optionally starting from an earlier fit
/// on data with the same covariate layout, such as a bootstrap resample.
pub fn em_fit_with_covariates_from(
    records: &[UnitRecord],
    mode: Monotonicity,
    opts: &EmOptions,
    categories: Option<usize>,
    init: Option<&CovariateEmFit>,
) -> Result<CovariateEmFit> {
    let cells = CellCounts::from_records(records, categories)?;
    cells.check_arms()?;
    cells.check_mode(mode)?;
    let j = cells.categories();
    let columns = varying_columns(records);
    let x: Vec<Vec<f64>> = records.iter().map(|r| columns.iter().map(|&c| r.x[c]).collect()).collect();
    let xs: &[Vec<f64>] = if columns.is_empty() { &[] } else { &x };
    let y: Vec<usize> = records.iter().map(|r| r.y).collect();

    let init = init.filter(|f| f.columns == columns && f.complier_marginals.categories() == j && f.always.is_some() == (mode == Monotonicity::Standard));
    let mut models: Option<CovariateParts> = None;
    let mut terms = match init {
        Some(f) => {
            let parts = CovariateParts {
                strata: f.strata.clone(),
                always: f.always.clone(),
                never: f.never.clone(),
                complier_treated: f.complier_treated.clone(),
                complier_control: f.complier_control.clone(),
            };
            let t = parts.terms(&x, &y)?;
            models = Some(parts);
            t
        }
        None => {
            let base = em_fit_cells(&cells, mode, None, opts)?.model;
            UnitTerms {
                pi: vec![[base.pi_a, base.pi_c, base.pi_n]; records.len()],
                f: y.iter()
                    .map(|&v| {
                        [
                            base.always.probs()[v],
                            base.never.probs()[v],
                            base.complier_treated.probs()[v],
                            base.complier_control.probs()[v],
                        ]
                    })
                    .collect(),
            }
        }
    };
    let em = CovariateEm { records, x: &x, xs, y: &y, j, mode };
    let mut ll = unit_loglik(records, &terms);
    let mut trace = vec![ll];
    let mut steps = 0;
    let mut current = match models {
        Some(m) => m,
        None => {
            let first = em.step(None, &terms)?;
            steps += 1;
            terms = first.terms(&x, &y)?;
            let next = unit_loglik(records, &terms);
            trace.push(next);
            ll = next;
            first
        }
    };
    // Squared extrapolation (SQUAREM) on two EM steps, kept only when the
    // step after it does not lower the likelihood.
    while steps < opts.max_iter {
        let v0 = current.vector();
        let p1 = em.step(Some(&current), &terms)?;
        let t1 = p1.terms(&x, &y)?;
        let l1 = unit_loglik(records, &t1);
        steps += 1;
        trace.push(l1);
        if (l1 - ll).abs() < opts.tol {
            return summarize_covariate_fit(&x, j, p1, columns, l1, steps, trace);
        }
        let p2 = em.step(Some(&p1), &t1)?;
        let t2 = p2.terms(&x, &y)?;
        let l2 = unit_loglik(records, &t2);
        steps += 1;
        trace.push(l2);
        if (l2 - l1).abs() < opts.tol {
            return summarize_covariate_fit(&x, j, p2, columns, l2, steps, trace);
        }
        let (v1, v2) = (p1.vector(), p2.vector());
        let r: Vec<f64> = v1.iter().zip(&v0).map(|(a, b)| a - b).collect();
        let d: Vec<f64> = (0..v0.len()).map(|i| v2[i] - 2.0 * v1[i] + v0[i]).collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let alpha = if norm(&d) > 0.0 { (-norm(&r) / norm(&d)).min(-1.0) } else { -1.0 };
        let jump: Vec<f64> = (0..v0.len()).map(|i| v0[i] - 2.0 * alpha * r[i] + alpha * alpha * d[i]).collect();
        let accepted = (alpha < -1.0)
            .then(|| -> Result<(CovariateParts, UnitTerms, f64)> {
                let cand = current.from_vector(&jump);
                let tc = cand.terms(&x, &y)?;
                let p3 = em.step(Some(&cand), &tc)?;
                let t3 = p3.terms(&x, &y)?;
                let l3 = unit_loglik(records, &t3);
                Ok((p3, t3, l3))
            })
            .and_then(|res| res.ok())
            .filter(|(_, _, l3)| l3.is_finite() && *l3 >= l2);
        match accepted {
            Some((p3, t3, l3)) => {
                steps += 1;
                trace.push(l3);
                current = p3;
                terms = t3;
                ll = l3;
            }
            None => {
                current = p2;
                terms = t2;
                ll = l2;
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter })
}

struct CovariateEm<'a> {
    records: &'a [UnitRecord],
    x: &'a [Vec<f64>],
    xs: &'a [Vec<f64>],
    y: &'a [usize],
    j: usize,
    mode: Monotonicity,
}

impl CovariateEm<'_> {
    /// One EM step: posteriors from `terms`, then the M-step. Without a
    /// previous model the M-step fits to convergence; otherwise one damped
    /// Newton step per model, which is enough to raise the expected
    /// log-likelihood.
    fn step(&self, prev: Option<&CovariateParts>, terms: &UnitTerms) -> Result<CovariateParts> {
        debug_assert_eq!(self.x.len(), self.records.len());
        let post = posteriors(self.records, terms);
        let options = if prev.is_some() { FitOptions { max_iter: 1, partial: true, ..FitOptions::default() } } else { FitOptions::default() };
        let strata = fit_multinomial_logit_soft(
            &post.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
            self.xs,
            None,
            &MultinomialSpec { classes: Some(3), reference: COMPLIER, options, init: prev.map(|m| &m.strata) },
        )?;
        let fit = |weights: Vec<f64>, init: Option<&CumulativeLogitModel>| {
            fit_cumulative_logit_with(self.y, self.xs, Some(&weights), &CumulativeLogitSpec { categories: Some(self.j), options, init })
        };
        let weights = |col: usize, arm: Option<bool>| -> Vec<f64> {
            self.records
                .iter()
                .zip(&post)
                .map(|(r, p)| if arm.is_some_and(|a| r.z != a) { 0.0 } else { p[col] })
                .collect()
        };
        let always = match self.mode {
            Monotonicity::Strong => None,
            Monotonicity::Standard => Some(fit(weights(ALWAYS, None), prev.and_then(|m| m.always.as_ref()))?),
        };
        Ok(CovariateParts {
            strata,
            always,
            never: fit(weights(NEVER, None), prev.map(|m| &m.never))?,
            complier_treated: fit(weights(COMPLIER, Some(true)), prev.map(|m| &m.complier_treated))?,
            complier_control: fit(weights(COMPLIER, Some(false)), prev.map(|m| &m.complier_control))?,
        })
    }
}

struct CovariateParts {
    strata: MultinomialLogitModel,
    always: Option<CumulativeLogitModel>,
    never: CumulativeLogitModel,
    complier_treated: CumulativeLogitModel,
    complier_control: CumulativeLogitModel,
}

impl CovariateParts {
    fn outcome_models(&self) -> impl Iterator<Item = &CumulativeLogitModel> {
        self.always.iter().chain([&self.never, &self.complier_treated, &self.complier_control])
    }

    fn vector(&self) -> Vec<f64> {
        let mut v = self.strata.free_parameters();
        for m in self.outcome_models() {
            v.extend(m.unconstrained());
        }
        v
    }

    fn from_vector(&self, v: &[f64]) -> Self {
        let k = self.strata.free_parameters().len();
        let strata = self.strata.with_free_parameters(&v[..k]);
        let mut at = k;
        let mut next = |m: &CumulativeLogitModel| {
            let len = m.unconstrained().len();
            at += len;
            m.from_unconstrained(&v[at - len..at])
        };
        let always = self.always.as_ref().map(&mut next);
        let never = next(&self.never);
        let complier_treated = next(&self.complier_treated);
        let complier_control = next(&self.complier_control);
        CovariateParts { strata, always, never, complier_treated, complier_control }
    }

    fn terms(&self, x: &[Vec<f64>], y: &[usize]) -> Result<UnitTerms> {
        if self.strata.classes() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, found: self.strata.classes() });
        }
        let mut pi = Vec::with_capacity(x.len());
        let mut f = Vec::with_capacity(x.len());
        let mut pr = [0.0; 3];
        for (row, &yi) in x.iter().zip(y) {
            self.strata.predict_into(row, &mut pr);
            pi.push([pr[ALWAYS], pr[COMPLIER], pr[NEVER]]);
            let fa = self.always.as_ref().map_or(0.0, |m| m.prob_at(row, yi));
            f.push([
                fa,
                self.never.prob_at(row, yi),
                self.complier_treated.prob_at(row, yi),
                self.complier_control.prob_at(row, yi),
            ]);
        }
        Ok(UnitTerms { pi, f })
    }
}

fn summarize_covariate_fit(
    x: &[Vec<f64>],
    j: usize,
    parts: CovariateParts,
    columns: Vec<usize>,
    loglik: f64,
    iterations: usize,
    trace: Vec<f64>,
) -> Result<CovariateEmFit> {
    let mut shares = Vec::with_capacity(x.len());
    let mut acc = [0.0f64; 4];
    let mut m1 = vec![0.0; j];
    let mut m0 = vec![0.0; j];
    let mut total = 0.0;
    for row in x {
        let pc = parts.strata.predict(row)?[COMPLIER];
        let c1 = parts.complier_treated.predict_marginal(row)?;
        let c0 = parts.complier_control.predict_marginal(row)?;
        let r = full_report(&MarginalPair::new(c1.clone(), c0.clone())?);
        for (a, v) in acc.iter_mut().zip([r.tau_lower, r.tau_upper, r.eta_lower, r.eta_upper]) {
            *a += pc * v;
        }
        for k in 0..j {
            m1[k] += pc * c1.probs()[k];
            m0[k] += pc * c0.probs()[k];
        }
        total += pc;
        shares.push(pc);
    }
    if total <= 0.0 {
        return Err(Error::NoCompliers);
    }
    let adjusted = SharpenedBounds {
        tau_lower: acc[0] / total,
        tau_upper: acc[1] / total,
        eta_lower: acc[2] / total,
        eta_upper: acc[3] / total,
    };
    let norm = |v: Vec<f64>| -> Result<MarginalDistribution<f64>> {
        let s: f64 = v.iter().sum();
        MarginalDistribution::new(v.into_iter().map(|a| a / s).collect())
    };
    let complier_marginals = MarginalPair::new(norm(m1)?, norm(m0)?)?;
    Ok(CovariateEmFit {
        strata: parts.strata,
        always: parts.always,
        never: parts.never,
        complier_treated: parts.complier_treated,
        complier_control: parts.complier_control,
        columns,
        complier_share: shares,
        adjusted,
        complier_marginals,
        loglik,
        iterations,
        trace,
    })
}
