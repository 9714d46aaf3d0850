//! Data generators and Monte Carlo study runners.
//!
//! Study 1 has no noncompliance: four joint distributions over three
//! categories, analysed with the randomized estimator. Study 2 has two-sided
//! noncompliance with covariates `x1 ~ N(0, 1)` and `x2 ~ Bernoulli(1/2)`;
//! strata follow a multinomial logit and outcomes proportional-odds models.
//! Estimation in study 2 uses `x1` only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{full_report, Estimand};
use crate::data::UnitRecord;
use crate::distributions::{estimands_of_joint, JointDistribution, MarginalDistribution, MarginalPair};
use crate::error::{Error, Result};
use crate::inference::{bootstrap, BootstrapOptions, Estimator, PairLower, MAX_DROPPED_SHARE};
use crate::models::sigmoid;
use crate::noncompliance::{EmOptions, Monotonicity};
use crate::scalar::{ratio, Rational};

/// How a replicate's units are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// One finite population is drawn (study 1: apportioned exactly from the
    /// joint distribution) and only the assignment is re-randomized.
    Fixed,
    /// Every replicate draws new units from the superpopulation.
    Sampled,
}

fn check_case(study: u8, case: usize) -> Result<()> {
    let max = match study {
        1 => 4,
        2 => 6,
        _ => return Err(Error::InvalidArgument(format!("study must be 1 or 2, got {study}"))),
    };
    if !(1..=max).contains(&case) {
        return Err(Error::InvalidArgument(format!("study {study} has cases 1 to {max}, got {case}")));
    }
    Ok(())
}

/// Joint distribution of `(Y(1), Y(0))` for a study-1 case.
pub fn study1_joint(case: usize) -> Result<JointDistribution<Rational>> {
    check_case(1, case)?;
    let (den, cells): (i64, [i64; 9]) = match case {
        1 => (25, [2, 1, 2, 6, 3, 6, 2, 1, 2]),
        2 => (5, [1, 0, 0, 1, 1, 1, 0, 0, 1]),
        3 => (25, [3, 1, 1, 3, 1, 1, 9, 3, 3]),
        _ => (5, [1, 0, 0, 0, 1, 0, 2, 0, 1]),
    };
    JointDistribution::new(3, cells.iter().map(|&c| ratio(c, den)).collect())
}

/// True `τ` and its sharp bounds for a study-1 case.
pub fn study1_truth(case: usize) -> Result<(f64, f64, f64)> {
    let p = study1_joint(case)?.to_f64();
    let r = full_report(&p.margins()?);
    Ok((estimands_of_joint(&p).tau, r.tau_lower, r.tau_upper))
}

fn require_even(n: usize) -> Result<()> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddN { n });
    }
    Ok(())
}

/// Reveals one potential outcome per unit under a balanced assignment.
fn assign_balanced<'a, T>(units: &'a [(T, usize, usize)], rng: &mut ChaCha8Rng) -> Vec<(bool, usize, usize, &'a T)> {
    let mut z: Vec<bool> = (0..units.len()).map(|i| i < units.len() / 2).collect();
    z.shuffle(rng);
    units.iter().zip(z).map(|((t, y1, y0), z)| (z, *y1, *y0, t)).collect()
}

fn draw_pairs(p: &JointDistribution<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<((), usize, usize)> {
    let j = p.categories();
    (0..n)
        .map(|_| {
            let cell = pick(rng, p.cells());
            ((), cell / j, cell % j)
        })
        .collect()
}

/// Potential-outcome pairs whose counts are `n * P` rounded by largest
/// remainders.
pub fn study1_population(case: usize, n: usize) -> Result<Vec<(usize, usize)>> {
    let p = study1_joint(case)?.to_f64();
    let j = p.categories();
    let raw: Vec<f64> = p.cells().iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    Ok(counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n((c / j, c % j), k)).collect())
}

/// Draws `n` pairs from the case's joint distribution and assigns exactly
/// `n / 2` units to treatment.
pub fn generate_study1(case: usize, n: usize, seed: u64) -> Result<Vec<UnitRecord>> {
    require_even(n)?;
    let p = study1_joint(case)?.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = draw_pairs(&p, n, &mut rng);
    Ok(reveal(&units, &mut rng))
}

fn reveal(units: &[((), usize, usize)], rng: &mut ChaCha8Rng) -> Vec<UnitRecord> {
    assign_balanced(units, rng).into_iter().map(|(z, y1, y0, _)| UnitRecord::new(z, if z { y1 } else { y0 })).collect()
}

fn pick(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Slopes of the complier outcome models in a study-2 case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Study2Case {
    /// Coefficient scale on `x1`.
    pub beta: f64,
    /// Coefficient on `x2`.
    pub xi: f64,
}

pub fn study2_case(case: usize) -> Result<Study2Case> {
    check_case(2, case)?;
    let grid = [1.0, 0.5, 0.0];
    Ok(if case <= 3 { Study2Case { beta: grid[case - 1], xi: 0.0 } } else { Study2Case { beta: 1.0, xi: grid[case - 4] } })
}

/// Stratum shares and outcome distributions at one covariate value.
#[derive(Debug, Clone, PartialEq)]
pub struct Study2Unit {
    /// `[always, complier, never]`.
    pub pi: [f64; 3],
    pub always: [f64; 3],
    pub never: [f64; 3],
    pub complier_treated: [f64; 3],
    pub complier_control: [f64; 3],
}

fn ordinal3(c0: f64, c1: f64, lin: f64) -> [f64; 3] {
    let a = sigmoid(c0 + lin);
    let b = sigmoid(c1 + lin);
    [a, b - a, 1.0 - b]
}

impl Study2Case {
    fn complier(&self, x1: f64, x2: f64) -> Study2Unit {
        Study2Unit {
            pi: [0.0; 3],
            always: [0.0; 3],
            never: [0.0; 3],
            complier_treated: ordinal3(-1.0, 0.5, -2.0 * self.beta * x1 - self.xi * x2),
            complier_control: ordinal3(0.5, 2.0, self.beta * x1 + self.xi * x2),
        }
    }

    pub fn unit(&self, x1: f64, x2: f64) -> Study2Unit {
        let ea = (0.5 + x1).exp();
        let en = (-0.5 + x1).exp();
        let s = 1.0 + ea + en;
        let shift = self.beta * x1 + self.xi * x2;
        Study2Unit {
            pi: [ea / s, 1.0 / s, en / s],
            always: ordinal3(-0.5, 1.0, -2.0 * x1),
            never: ordinal3(-1.5, 0.0, 0.0),
            complier_treated: ordinal3(-1.0, 0.5, -2.0 * self.beta * x1 - self.xi * x2),
            complier_control: ordinal3(0.5, 2.0, shift),
        }
    }
}

/// Draws `n` units with covariates `[x1, x2]` and a balanced assignment.
pub fn generate_study2(case: usize, n: usize, seed: u64) -> Result<Vec<UnitRecord>> {
    require_even(n)?;
    let spec = study2_case(case)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = draw_study2_units(&spec, n, &mut rng);
    Ok(reveal_study2(&units, &mut rng))
}

/// `(stratum, x)` per unit, with both potential outcomes.
type Study2Draw = ((usize, [f64; 2]), usize, usize);

fn draw_study2_units(spec: &Study2Case, n: usize, rng: &mut ChaCha8Rng) -> Vec<Study2Draw> {
    (0..n)
        .map(|_| {
            let x1: f64 = rng.sample(StandardNormal);
            let x2 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let u = spec.unit(x1, x2);
            let g = pick(rng, &u.pi);
            let (y1, y0) = match g {
                0 => {
                    let y = pick(rng, &u.always);
                    (y, y)
                }
                2 => {
                    let y = pick(rng, &u.never);
                    (y, y)
                }
                _ => (pick(rng, &u.complier_treated), pick(rng, &u.complier_control)),
            };
            ((g, [x1, x2]), y1, y0)
        })
        .collect()
}

fn reveal_study2(units: &[Study2Draw], rng: &mut ChaCha8Rng) -> Vec<UnitRecord> {
    assign_balanced(units, rng)
        .into_iter()
        .map(|(z, y1, y0, (g, x))| {
            let d = match g {
                0 => true,
                2 => false,
                _ => z,
            };
            UnitRecord::new(z, if z { y1 } else { y0 }).with_d(d).with_x(x.to_vec())
        })
        .collect()
}

/// Population values of a study-2 case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study2Truth {
    pub pi_c: f64,
    /// `τ_c` of the covariate-averaged complier marginals, taken as
    /// independent.
    pub tau_c: f64,
    /// `τ_c` when complier outcomes are independent given the covariates.
    pub tau_c_conditional: f64,
    pub unadjusted: (f64, f64),
    /// Conditional bounds given `(x1, x2)`, averaged over compliers.
    pub adjusted: (f64, f64),
    /// Conditional bounds given `x1` alone, the target of an estimator that
    /// omits `x2`.
    pub adjusted_x1: (f64, f64),
}

/// Monte Carlo over `draws` values of `x1`; `x2` is averaged exactly.
pub fn study2_truth(case: usize, draws: usize, seed: u64) -> Result<Study2Truth> {
    let spec = study2_case(case)?;
    let chunks = 64usize;
    let per = draws.div_ceil(chunks);
    let parts: Vec<[f64; 13]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut acc = [0.0f64; 13];
            for _ in 0..per.min(draws.saturating_sub(c * per)) {
                let x1: f64 = rng.sample(StandardNormal);
                let pc = 1.0 / (1.0 + (0.5 + x1).exp() + (-0.5 + x1).exp());
                let u0 = spec.complier(x1, 0.0);
                let u1 = spec.complier(x1, 1.0);
                let mut c1 = [0.0; 3];
                let mut c0 = [0.0; 3];
                for k in 0..3 {
                    c1[k] = 0.5 * (u0.complier_treated[k] + u1.complier_treated[k]);
                    c0[k] = 0.5 * (u0.complier_control[k] + u1.complier_control[k]);
                }
                let given_x1 = bounds3(&c1, &c0);
                let full0 = bounds3(&u0.complier_treated, &u0.complier_control);
                let full1 = bounds3(&u1.complier_treated, &u1.complier_control);
                acc[0] += pc;
                for k in 0..3 {
                    acc[1 + k] += pc * c1[k];
                    acc[4 + k] += pc * c0[k];
                }
                acc[7] += pc * given_x1.0;
                acc[8] += pc * given_x1.1;
                acc[9] += pc * 0.5 * (full0.0 + full1.0);
                acc[10] += pc * 0.5 * (full0.1 + full1.1);
                acc[11] += pc * 0.5 * (full0.2 + full1.2);
                acc[12] += 1.0;
            }
            acc
        })
        .collect();
    let mut t = [0.0f64; 13];
    for p in &parts {
        for (a, b) in t.iter_mut().zip(p) {
            *a += b;
        }
    }
    let w = t[0];
    let c1: Vec<f64> = t[1..4].iter().map(|v| v / w).collect();
    let c0: Vec<f64> = t[4..7].iter().map(|v| v / w).collect();
    let marg = full_report(&MarginalPair::new(MarginalDistribution::new(c1)?, MarginalDistribution::new(c0)?)?);
    Ok(Study2Truth {
        pi_c: w / t[12],
        tau_c: marg.tau_independent,
        tau_c_conditional: t[11] / w,
        unadjusted: (marg.tau_lower, marg.tau_upper),
        adjusted: (t[9] / w, t[10] / w),
        adjusted_x1: (t[7] / w, t[8] / w),
    })
}

/// `(τ_L, τ_U, τ_I)` for three categories.
fn bounds3(p1: &[f64; 3], p0: &[f64; 3]) -> (f64, f64, f64) {
    let d1 = p1[1] + p1[2] - p0[1] - p0[2];
    let d2 = p1[2] - p0[2];
    let lower = p0[0].max(p0[1] + d1).max(p0[2] + d2);
    let upper = 1.0 + d1.min(d2).min(0.0);
    let independent = p1[0] * p0[0] + (p1[1]) * (p0[0] + p0[1]) + p1[2];
    (lower, upper, independent)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySpec {
    pub study: u8,
    pub case_id: usize,
    pub n_units: usize,
    pub n_reps: usize,
    pub n_boot: usize,
    /// Bootstrap draws for the covariate-adjusted estimator, which refits
    /// a mixture of regressions per draw; `None` uses `n_boot`.
    pub n_boot_adjusted: Option<usize>,
    pub seed: u64,
    pub level: f64,
    pub population: Population,
    /// Study 2 only: also run the covariate-adjusted estimator.
    pub adjusted: bool,
    /// Draws for the study-2 truth.
    pub truth_draws: usize,
}

impl StudySpec {
    /// Desk-scale defaults: 1000 replicates of 200 units for study 1, 200
    /// replicates of 1000 units for study 2, 500 bootstrap draws.
    pub fn new(study: u8, case_id: usize) -> Self {
        let (n_units, n_reps, population) =
            if study == 1 { (200, 1000, Population::Fixed) } else { (1000, 200, Population::Sampled) };
        StudySpec {
            study,
            case_id,
            n_units,
            n_reps,
            n_boot: 500,
            n_boot_adjusted: None,
            seed: 2024,
            level: 0.95,
            population,
            adjusted: true,
            truth_draws: 10_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        check_case(self.study, self.case_id)?;
        require_even(self.n_units)?;
        if self.n_reps == 0 || self.n_boot == 0 || self.n_boot_adjusted == Some(0) {
            return Err(Error::InvalidArgument("n_reps and n_boot must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

/// One line of a study summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub study: u8,
    pub case_id: usize,
    /// `bounds` in study 1; `unadjusted` or `adjusted` in study 2.
    pub estimator: &'static str,
    pub truth_estimand: f64,
    pub truth_lower: f64,
    pub truth_upper: f64,
    pub bias_lower: f64,
    pub bias_upper: f64,
    pub se_lower: f64,
    pub se_upper: f64,
    pub mean_length: f64,
    /// Share of intervals containing both bounds.
    pub coverage_bounds: f64,
    /// Share of intervals containing the estimand.
    pub coverage_estimand: f64,
    pub n_reps: usize,
    pub dropped: usize,
}

/// Replicate results: estimates and interval of one estimator.
#[derive(Debug, Clone, Copy)]
struct RepResult {
    lower: f64,
    upper: f64,
    ci: (f64, f64),
}

fn summarize(
    spec: &StudySpec,
    estimator: &'static str,
    truth: (f64, f64, f64),
    results: &[Option<RepResult>],
) -> Result<StudyRow> {
    let ok: Vec<RepResult> = results.iter().flatten().copied().collect();
    let dropped = results.len() - ok.len();
    if ok.is_empty() || dropped as f64 > MAX_DROPPED_SHARE * results.len() as f64 {
        return Err(Error::ReplicateFailure { dropped, total: results.len() });
    }
    let m = ok.len() as f64;
    let mean = |f: &dyn Fn(&RepResult) -> f64| ok.iter().map(f).sum::<f64>() / m;
    let sd = |f: &dyn Fn(&RepResult) -> f64| {
        let mu = mean(f);
        (ok.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt()
    };
    let (te, tl, tu) = truth;
    let eps = 1e-12;
    Ok(StudyRow {
        study: spec.study,
        case_id: spec.case_id,
        estimator,
        truth_estimand: te,
        truth_lower: tl,
        truth_upper: tu,
        bias_lower: mean(&|r| r.lower) - tl,
        bias_upper: mean(&|r| r.upper) - tu,
        se_lower: sd(&|r| r.lower),
        se_upper: sd(&|r| r.upper),
        mean_length: mean(&|r| r.ci.1 - r.ci.0),
        coverage_bounds: mean(&|r| (r.ci.0 <= tl + eps && tu <= r.ci.1 + eps) as u8 as f64),
        coverage_estimand: mean(&|r| (r.ci.0 <= te + eps && te <= r.ci.1 + eps) as u8 as f64),
        n_reps: spec.n_reps,
        dropped,
    })
}

fn replicate(
    records: &[UnitRecord],
    estimator: &Estimator,
    spec: &StudySpec,
    n_boot: usize,
    rep: usize,
    j: usize,
) -> Option<RepResult> {
    let opts = BootstrapOptions {
        n_boot,
        seed: spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(rep as u64 + 1)),
        categories: Some(j),
        em: EmOptions::default(),
    };
    let draws = bootstrap(records, estimator, &opts).ok()?;
    let ci = draws.interval(Estimand::Tau, PairLower::Bound, spec.level).ok()?;
    Some(RepResult { lower: draws.point.tau_lower, upper: draws.point.tau_upper, ci: (ci.ci_low, ci.ci_high) })
}

fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

/// Runs a study and returns one row per estimator.
pub fn run_study(spec: &StudySpec) -> Result<Vec<StudyRow>> {
    spec.validate()?;
    match spec.study {
        1 => run_study1(spec).map(|r| vec![r]),
        _ => run_study2(spec),
    }
}

fn run_study1(spec: &StudySpec) -> Result<StudyRow> {
    let truth = study1_truth(spec.case_id)?;
    let joint = study1_joint(spec.case_id)?.to_f64();
    let fixed: Vec<((), usize, usize)> =
        study1_population(spec.case_id, spec.n_units)?.into_iter().map(|(a, b)| ((), a, b)).collect();
    let results: Vec<Option<RepResult>> = (0..spec.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(spec.seed, rep);
            let records = match spec.population {
                Population::Fixed => reveal(&fixed, &mut rng),
                Population::Sampled => {
                    let units = draw_pairs(&joint, spec.n_units, &mut rng);
                    reveal(&units, &mut rng)
                }
            };
            replicate(&records, &Estimator::Randomized, spec, spec.n_boot, rep, 3)
        })
        .collect();
    summarize(spec, "bounds", truth, &results)
}

fn run_study2(spec: &StudySpec) -> Result<Vec<StudyRow>> {
    let case = study2_case(spec.case_id)?;
    let truth = study2_truth(spec.case_id, spec.truth_draws, spec.seed)?;
    let fixed = draw_study2_units(&case, spec.n_units, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let results: Vec<(Option<RepResult>, Option<RepResult>)> = (0..spec.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(spec.seed, rep);
            let records = match spec.population {
                Population::Fixed => reveal_study2(&fixed, &mut rng),
                Population::Sampled => {
                    let units = draw_study2_units(&case, spec.n_units, &mut rng);
                    reveal_study2(&units, &mut rng)
                }
            };
            let plain: Vec<UnitRecord> = records.iter().map(|r| UnitRecord { x: Vec::new(), ..r.clone() }).collect();
            let unadjusted = replicate(&plain, &Estimator::Complier(Monotonicity::Standard), spec, spec.n_boot, rep, 3);
            let adjusted = if spec.adjusted {
                let x1_only: Vec<UnitRecord> = records.iter().map(|r| UnitRecord { x: vec![r.x[0]], ..r.clone() }).collect();
                let n_boot = spec.n_boot_adjusted.unwrap_or(spec.n_boot);
                replicate(&x1_only, &Estimator::ComplierAdjusted(Monotonicity::Standard), spec, n_boot, rep, 3)
            } else {
                None
            };
            (unadjusted, adjusted)
        })
        .collect();
    let (plain, adj): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut rows = vec![summarize(spec, "unadjusted", (truth.tau_c, truth.unadjusted.0, truth.unadjusted.1), &plain)?];
    if spec.adjusted {
        rows.push(summarize(spec, "adjusted", (truth.tau_c, truth.adjusted.0, truth.adjusted.1), &adj)?);
    }
    Ok(rows)
}
