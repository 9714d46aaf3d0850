//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line, with
//! indented detail lines underneath, and the binary exits non-zero if any
//! criterion fails.
//!
//! Free arguments act as substring filters on criterion names, so
//! `cargo test --test acceptance -- oracle` runs only the oracle check.
//! Criteria 7 and 8 run full Monte Carlo studies and take a while.

use std::time::Instant;

use ordbounds::bounds::{full_report, point_identified, Estimand};
use ordbounds::coupling::{extremal_coupling, CouplingTarget};
use ordbounds::data::records_from_counts;
use ordbounds::distributions::{estimands_of_joint, JointDistribution, MarginalDistribution, MarginalPair};
use ordbounds::estimation::{estimate_randomized, population_adjusted};
use ordbounds::inference::{bootstrap, BootstrapOptions, Estimator, PairLower};
use ordbounds::lp_oracle::{optimize, LinearObjective, Sense};
use ordbounds::models::{
    fit_cumulative_logit, fit_logit, fit_multinomial_logit, CumulativeLogitLikelihood, LogitLikelihood,
    MultinomialLikelihood,
};
use ordbounds::noncompliance::{
    complier_bounds, em_fit, em_fit_with_covariates, simulate_records, EmOptions, Monotonicity, StrataModel,
};
use ordbounds::scalar::{ratio, Rational};
use ordbounds::simulation::{generate_study2, run_study, study2_truth, StudySpec};
use ordbounds::data::UnitRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Collects failed expectations and detail lines for one criterion.
#[derive(Default)]
struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }
}

fn r(v: &[(i64, i64)]) -> Vec<Rational> {
    v.iter().map(|&(a, b)| ratio(a, b)).collect()
}

fn exact_pair(p1: &[(i64, i64)], p0: &[(i64, i64)]) -> MarginalPair<Rational> {
    MarginalPair::from_vecs(r(p1), r(p0)).unwrap()
}

// 1 ------------------------------------------------------------------------

fn golden_examples(c: &mut Check) {
    let three = full_report(&exact_pair(&[(1, 5), (3, 5), (1, 5)], &[(2, 5), (1, 5), (2, 5)]));
    c.expect(
        (three.tau_lower.clone(), three.tau_independent.clone(), three.tau_upper.clone())
            == (ratio(2, 5), ratio(16, 25), ratio(4, 5)),
        "three-category example: tau",
    );
    c.expect(
        (three.eta_lower.clone(), three.eta_independent.clone(), three.eta_upper.clone())
            == (ratio(1, 5), ratio(9, 25), ratio(3, 5)),
        "three-category example: eta",
    );
    let four = full_report(&exact_pair(&[(1, 5), (1, 5), (3, 5)], &[(3, 5), (1, 5), (1, 5)]));
    c.expect(
        (four.tau_lower.clone(), four.tau_independent.clone(), four.tau_upper.clone())
            == (ratio(3, 5), ratio(22, 25), ratio(1, 1)),
        "dominance example: tau",
    );
    c.expect(
        (four.eta_lower.clone(), four.eta_independent.clone(), four.eta_upper.clone())
            == (ratio(2, 5), ratio(3, 5), ratio(4, 5)),
        "dominance example: eta",
    );
    let joint = JointDistribution::from_rows(vec![
        r(&[(0, 1), (1, 6), (1, 6)]),
        r(&[(0, 1), (1, 6), (0, 1)]),
        r(&[(0, 1), (1, 3), (1, 6)]),
    ])
    .unwrap();
    let e = estimands_of_joint(&joint);
    c.expect((e.tau.clone(), e.eta.clone()) == (ratio(2, 3), ratio(1, 3)), "joint example: tau and eta");
    let strata = [
        (ratio(1, 2), exact_pair(&[(1, 5), (3, 5), (1, 5)], &[(2, 5), (1, 5), (2, 5)])),
        (ratio(1, 2), exact_pair(&[(1, 5), (1, 5), (3, 5)], &[(3, 5), (1, 5), (1, 5)])),
    ];
    let adj = population_adjusted(&strata).unwrap();
    c.expect(adj.adjusted.tau() == (ratio(1, 2), ratio(9, 10)), "covariate example: adjusted tau");
    c.expect(adj.unadjusted.tau() == (ratio(1, 2), ratio(1, 1)), "covariate example: unadjusted tau");
    c.note(format!(
        "tau bounds {}..{} and {}..{}; adjusted {}..{} vs pooled {}..{}",
        three.tau_lower, three.tau_upper, four.tau_lower, four.tau_upper, adj.adjusted.tau_lower,
        adj.adjusted.tau_upper, adj.unadjusted.tau_lower, adj.unadjusted.tau_upper
    ));
}

// 2 ------------------------------------------------------------------------

struct Published {
    name: &'static str,
    other: [usize; 5],
    /// tau lower, independent, upper; then the same for eta.
    point: [f64; 6],
    /// Intervals for (tau_L, tau_U), (tau_I, tau_U), (eta_L, eta_U), (eta_I, eta_U).
    intervals: [(f64, f64); 4],
}

fn taste_test(c: &mut Check) {
    let treated = [0, 2, 10, 30, 2];
    let rows = [
        Published {
            name: "E vs C",
            other: [14, 13, 6, 7, 0],
            point: [0.779, 0.945, 1.000, 0.630, 0.777, 0.870],
            intervals: [(0.673, 1.000), (0.913, 1.000), (0.480, 1.000), (0.651, 1.000)],
        },
        Published {
            name: "E vs D",
            other: [11, 15, 3, 5, 8],
            point: [0.645, 0.782, 0.855, 0.574, 0.660, 0.736],
            intervals: [(0.495, 1.000), (0.656, 0.982), (0.423, 0.886), (0.519, 0.886)],
        },
    ];
    for row in rows {
        let records = records_from_counts(&treated, &row.other);
        let b = estimate_randomized(&records, Some(5)).unwrap().bounds;
        let got = [b.tau_lower, b.tau_independent, b.tau_upper, b.eta_lower, b.eta_independent, b.eta_upper];
        // Reference values agree with ours to within one unit of the third
        // decimal; one of them is truncated rather than rounded.
        for (i, (g, p)) in got.iter().zip(row.point).enumerate() {
            c.expect((g - p).abs() < 1e-3, format!("{} point {i}: {g:.4} vs {p:.3}", row.name));
        }
        c.note(format!("{} points {:.4?}", row.name, got));
        let opts = BootstrapOptions { n_boot: 2000, seed: 0, categories: Some(5), ..Default::default() };
        let d = bootstrap(&records, &Estimator::Randomized, &opts).unwrap();
        let pairs = [
            (Estimand::Tau, PairLower::Bound),
            (Estimand::Tau, PairLower::Independent),
            (Estimand::Eta, PairLower::Bound),
            (Estimand::Eta, PairLower::Independent),
        ];
        for ((e, l), (lo, hi)) in pairs.into_iter().zip(row.intervals) {
            let ci = d.interval(e, l, 0.95).unwrap();
            let ok = (ci.ci_low - lo).abs() <= 0.02 && (ci.ci_high - hi).abs() <= 0.02;
            let line = format!(
                "{} {:?}/{:?}: ({:.3}, {:.3}) vs reference ({lo:.3}, {hi:.3}){}",
                row.name,
                e,
                l,
                ci.ci_low,
                ci.ci_high,
                if ok { "" } else { "  <- outside 0.02" }
            );
            c.expect(ok, line.clone());
            c.note(line);
        }
    }
}

// 3 and 4 --------------------------------------------------------------------

fn dirichlet(rng: &mut ChaCha8Rng, j: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..j).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Zeroes a random subset of entries, keeping at least one.
fn sparsify(rng: &mut ChaCha8Rng, p: Vec<f64>) -> Vec<f64> {
    let keep = rng.random_range(0..p.len());
    let q: Vec<f64> = p.iter().enumerate().map(|(i, v)| if i == keep || rng.random_bool(0.5) { *v } else { 0.0 }).collect();
    let s: f64 = q.iter().sum();
    q.into_iter().map(|v| v / s).collect()
}

/// A pair where the treated arm stochastically dominates: upper tails are
/// the pointwise max and min of two random tail sequences.
fn dominating(rng: &mut ChaCha8Rng, j: usize) -> MarginalPair<f64> {
    let tails = |p: &[f64]| -> Vec<f64> { (0..j).map(|k| p[k..].iter().sum()).collect() };
    let (a, b) = (tails(&dirichlet(rng, j)), tails(&dirichlet(rng, j)));
    let from_tails = |t: Vec<f64>| -> Vec<f64> { (0..j).map(|k| (t[k] - t.get(k + 1).copied().unwrap_or(0.0)).max(0.0)).collect() };
    let hi: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
    let lo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect();
    let norm = |p: Vec<f64>| {
        let s: f64 = p.iter().sum();
        p.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    MarginalPair::from_vecs(norm(from_tails(hi)), norm(from_tails(lo))).unwrap()
}

fn oracle_equivalence(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let j = rng.random_range(2..=8);
        let (mut p1, mut p0) = (dirichlet(&mut rng, j), dirichlet(&mut rng, j));
        if i < 200 {
            p1 = sparsify(&mut rng, p1);
            p0 = sparsify(&mut rng, p0);
        }
        let m = MarginalPair::from_vecs(p1, p0).unwrap();
        let rep = full_report(&m);
        let want = [
            (LinearObjective::tau(j), Sense::Min, rep.tau_lower),
            (LinearObjective::tau(j), Sense::Max, rep.tau_upper),
            (LinearObjective::eta(j), Sense::Min, rep.eta_lower),
            (LinearObjective::eta(j), Sense::Max, rep.eta_upper),
        ];
        for (obj, sense, v) in want {
            match optimize(&m, &obj, sense) {
                Ok(sol) => worst = worst.max((sol.value - v).abs()),
                Err(e) => c.expect(false, format!("instance {i}: {e}")),
            }
        }
    }
    c.expect(worst <= 1e-9, format!("largest gap {worst:e}"));
    c.note(format!("1000 pairs, 4000 programs, largest gap {worst:.2e}"));
}

fn coupling_attainment(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_margin, mut worst_value, mut dominated, mut bad_triangle) = (0.0f64, 0.0f64, 0usize, 0usize);
    for i in 0..10_000 {
        let j = rng.random_range(2..=8);
        let m = if i % 5 == 0 {
            dominating(&mut rng, j)
        } else {
            let (p1, p0) = (dirichlet(&mut rng, j), dirichlet(&mut rng, j));
            if i % 5 == 1 {
                MarginalPair::from_vecs(sparsify(&mut rng, p1), sparsify(&mut rng, p0)).unwrap()
            } else {
                MarginalPair::from_vecs(p1, p0).unwrap()
            }
        };
        let rep = full_report(&m);
        for t in CouplingTarget::ALL {
            let p = extremal_coupling(&m, t);
            let negative = p.cells().iter().any(|v| *v < 0.0);
            c.expect(!negative, format!("instance {i} {}: negative cell", t.name()));
            worst_margin = worst_margin.max(p.margin_error(&m));
            let e = estimands_of_joint(&p);
            let gap = match t {
                CouplingTarget::TauMin => (e.tau - rep.tau_lower).abs(),
                CouplingTarget::TauMax => (e.tau - rep.tau_upper).abs(),
                CouplingTarget::EtaMin => (e.eta - rep.eta_lower).abs(),
                CouplingTarget::EtaMax => (e.eta - rep.eta_upper).abs(),
                CouplingTarget::Independent => {
                    (e.tau - rep.tau_independent).abs().max((e.eta - rep.eta_independent).abs())
                }
            };
            worst_value = worst_value.max(gap);
            if t == CouplingTarget::TauMax && rep.dominance {
                dominated += 1;
                bad_triangle += !p.is_lower_triangular() as usize;
            }
        }
    }
    c.expect(worst_margin <= 1e-12, format!("margin error {worst_margin:e}"));
    c.expect(worst_value <= 1e-12, format!("bound gap {worst_value:e}"));
    c.expect(bad_triangle == 0, format!("{bad_triangle} of {dominated} dominance couplings not lower triangular"));
    c.note(format!(
        "10000 pairs x 5 targets: margin error {worst_margin:.2e}, bound gap {worst_value:.2e}, {dominated} dominance cases"
    ));
}

// 5 ------------------------------------------------------------------------

fn sparse_exact(rng: &mut ChaCha8Rng, j: usize) -> Vec<Rational> {
    loop {
        let w: Vec<i64> = (0..j).map(|_| if rng.random_bool(0.5) { 0 } else { rng.random_range(1..4) }).collect();
        let s: i64 = w.iter().sum();
        if s > 0 {
            return w.into_iter().map(|v| ratio(v, s)).collect();
        }
    }
}

fn point_identification(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut tau_hits, mut eta_hits) = (0, 0, 0);
    for _ in 0..10_000 {
        let j = rng.random_range(2..=6);
        let m = MarginalPair::from_vecs(sparse_exact(&mut rng, j), sparse_exact(&mut rng, j)).unwrap();
        let rep = full_report(&m);
        let tau = point_identified(&m, Estimand::Tau);
        let eta = point_identified(&m, Estimand::Eta);
        mismatches += (tau != (rep.tau_lower == rep.tau_upper)) as usize;
        mismatches += (eta != (rep.eta_lower == rep.eta_upper)) as usize;
        tau_hits += tau as usize;
        eta_hits += eta as usize;
    }
    c.expect(mismatches == 0, format!("{mismatches} mismatches"));
    c.note(format!("10000 instances: {tau_hits} tau and {eta_hits} eta point identified, {mismatches} mismatches"));
}

// 6 ------------------------------------------------------------------------

fn exact_marginal(rng: &mut ChaCha8Rng, j: usize) -> MarginalDistribution<Rational> {
    MarginalDistribution::new(sparse_exact(rng, j)).unwrap()
}

fn nesting_and_sharpening(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    for _ in 0..1000 {
        let j = rng.random_range(2..=5);
        let k = rng.random_range(1..=4);
        let strata: Vec<(Rational, MarginalPair<Rational>)> = (0..k)
            .map(|_| {
                let w = ratio(rng.random_range(1..6), 1);
                (w, MarginalPair::new(exact_marginal(&mut rng, j), exact_marginal(&mut rng, j)).unwrap())
            })
            .collect();
        let out = population_adjusted(&strata).unwrap();
        let (a, u) = (&out.adjusted, &out.unadjusted);
        let nested = u.tau_lower <= a.tau_lower
            && a.tau_lower <= a.tau_upper
            && a.tau_upper <= u.tau_upper
            && u.eta_lower <= a.eta_lower
            && a.eta_lower <= a.eta_upper
            && a.eta_upper <= u.eta_upper;
        failures += !nested as usize;
    }
    c.expect(failures == 0, format!("{failures} adjusted inputs not nested"));
    let mut broken = [0usize; 4];
    for _ in 0..1000 {
        let j = rng.random_range(2..=5);
        let pi = loop {
            let w: Vec<i64> = (0..3).map(|_| rng.random_range(0..5)).collect();
            if w[1] > 0 {
                let s: i64 = w.iter().sum();
                break [ratio(w[0], s), ratio(w[1], s), ratio(w[2], s)];
            }
        };
        let model = StrataModel::new(
            pi,
            exact_marginal(&mut rng, j),
            exact_marginal(&mut rng, j),
            exact_marginal(&mut rng, j),
            exact_marginal(&mut rng, j),
        )
        .unwrap();
        let s = complier_bounds(&model).unwrap().population_sharpened;
        let pop = full_report(&model.mixture_marginals().unwrap());
        broken[0] += (s.tau_upper != pop.tau_upper) as usize;
        broken[1] += (s.eta_lower != pop.eta_lower) as usize;
        broken[2] += !(pop.tau_lower <= s.tau_lower) as usize;
        broken[3] += !(s.eta_upper <= pop.eta_upper) as usize;
    }
    c.expect(broken == [0; 4], format!("relations broken {broken:?}"));
    c.note(format!("1000 stratified inputs nested; 1000 strata models, broken relations {broken:?}"));
}

// 7 ------------------------------------------------------------------------

fn study_one(c: &mut Check) {
    // bias_L, bias_U, coverage of the pair, reference values.
    let reference = [(0.016, 0.000, 0.987), (0.013, -0.001, 0.957), (0.026, 0.000, 0.967), (0.025, 0.000, 0.960)];
    for (i, (bl, bu, cov)) in reference.into_iter().enumerate() {
        let case = i + 1;
        let spec = StudySpec::new(1, case);
        let start = Instant::now();
        let row = run_study(&spec).unwrap().remove(0);
        let ok_l = (row.bias_lower - bl).abs() <= 0.01;
        let ok_u = (row.bias_upper - bu).abs() <= 0.01;
        let ok_c = (row.coverage_bounds - cov).abs() <= 0.025;
        c.expect(ok_l && ok_u, format!("case {case}: biases ({:.4}, {:.4}) vs ({bl}, {bu})", row.bias_lower, row.bias_upper));
        c.expect(ok_c, format!("case {case}: coverage {:.3} vs {cov}", row.coverage_bounds));
        c.note(format!(
            "case {case}: bias ({:+.4}, {:+.4}) se ({:.3}, {:.3}) coverage {:.3} [reference {bl:+.3}, {bu:+.3}, {cov:.3}] {:.0?}",
            row.bias_lower,
            row.bias_upper,
            row.se_lower,
            row.se_upper,
            row.coverage_bounds,
            start.elapsed()
        ));
    }
}

// 8 ------------------------------------------------------------------------

/// tau_c, unadjusted (L, U, bias_L, bias_U), adjusted (L, U, bias_L, bias_U).
const STUDY_TWO: [(f64, [f64; 4], [f64; 4]); 6] = [
    (0.686, [0.488, 0.970, 0.002, -0.028], [0.503, 0.772, 0.008, -0.006]),
    (0.770, [0.553, 1.000, 0.005, -0.005], [0.563, 0.935, 0.004, -0.007]),
    (0.856, [0.622, 1.000, 0.034, -0.000], [0.622, 1.000, 0.021, -0.001]),
    (0.782, [0.590, 1.000, 0.000, -0.002], [0.602, 0.846, 0.005, 0.012]),
    (0.738, [0.542, 1.000, 0.002, -0.016], [0.556, 0.817, 0.007, -0.003]),
    (0.686, [0.488, 0.970, 0.002, -0.028], [0.503, 0.772, 0.008, -0.006]),
];

const SEED: u64 = 2024;

fn study_two(c: &mut Check) {
    for (i, (tau_c, plain, adj)) in STUDY_TWO.iter().enumerate() {
        let case = i + 1;
        let t = study2_truth(case, 10_000_000, SEED).unwrap();
        let got = [t.tau_c, t.unadjusted.0, t.unadjusted.1, t.adjusted.0, t.adjusted.1];
        let want = [*tau_c, plain[0], plain[1], adj[0], adj[1]];
        let ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.005);
        c.expect(ok, format!("case {case} truth {got:.4?} vs {want:?}"));
        c.note(format!("case {case} truth: {got:.4?} [reference {want:?}]"));
    }
    // Case 6 is case 1's model; confirm the generators agree and reuse it.
    let same = generate_study2(6, 500, 1).unwrap() == generate_study2(1, 500, 1).unwrap();
    c.expect(same, "case 6 data differ from case 1");
    for (i, (_, plain, adj)) in STUDY_TWO.iter().take(5).enumerate() {
        let case = i + 1;
        let mut spec = StudySpec::new(2, case);
        spec.seed = SEED;
        spec.n_boot_adjusted = Some(100);
        let start = Instant::now();
        let rows = run_study(&spec).unwrap();
        for (row, reference) in rows.iter().zip([plain, adj]) {
            let ok_bias =
                (row.bias_lower - reference[2]).abs() <= 0.015 && (row.bias_upper - reference[3]).abs() <= 0.015;
            let ok_cov = (0.93..=0.99).contains(&row.coverage_bounds);
            let line = format!(
                "case {case} {}: bias ({:+.4}, {:+.4}) [reference {:+.3}, {:+.3}] length {:.3} coverage {:.3} dropped {}",
                row.estimator, row.bias_lower, row.bias_upper, reference[2], reference[3], row.mean_length,
                row.coverage_bounds, row.dropped
            );
            c.expect(ok_bias && ok_cov, line.clone());
            c.note(line);
        }
        c.note(format!("case {case} took {:.0?}", start.elapsed()));
    }
}

// 9 ------------------------------------------------------------------------

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

fn em_correctness(c: &mut Check) {
    let m = |p: &[f64]| MarginalDistribution::new(p.to_vec()).unwrap();
    let truth = StrataModel::new([0.2, 0.5, 0.3], m(&[0.1, 0.3, 0.6]), m(&[0.5, 0.3, 0.2]), m(&[0.1, 0.3, 0.6]), m(&[0.4, 0.4, 0.2]))
        .unwrap();
    let records = simulate_records(&truth, 100_000, 1);
    let fit = em_fit(&records, Monotonicity::Standard, None, &EmOptions::default(), Some(3)).unwrap();
    let f = &fit.model;
    let gap = |a: &MarginalDistribution<f64>, b: &MarginalDistribution<f64>| {
        a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let worst = [
        (f.pi_a - truth.pi_a).abs(),
        (f.pi_c - truth.pi_c).abs(),
        (f.pi_n - truth.pi_n).abs(),
        gap(&f.always, &truth.always),
        gap(&f.never, &truth.never),
        gap(&f.complier_treated, &truth.complier_treated),
        gap(&f.complier_control, &truth.complier_control),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    c.expect(worst < 0.01, format!("recovery error {worst:.4}"));
    let mut traces = vec![fit.trace.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..30u64 {
        let mode = if k % 3 == 2 { Monotonicity::Strong } else { Monotonicity::Standard };
        let j = rng.random_range(2..=5);
        let pi = if mode == Monotonicity::Strong { [0.0, 0.6, 0.4] } else { [0.25, 0.45, 0.3] };
        let model = StrataModel::new(
            pi,
            m(&dirichlet(&mut rng, j)),
            m(&dirichlet(&mut rng, j)),
            m(&dirichlet(&mut rng, j)),
            m(&dirichlet(&mut rng, j)),
        )
        .unwrap();
        let data = simulate_records(&model, 500 + 100 * k as usize, k);
        let opts = EmOptions { multistart: k % 2 == 0, seed: k, ..EmOptions::default() };
        match em_fit(&data, mode, None, &opts, Some(j)) {
            Ok(f) => traces.push(f.trace),
            Err(e) => c.expect(false, format!("fit {k}: {e}")),
        }
    }
    for (case, seed) in [(1, 1u64), (4, 2), (2, 3)] {
        let data: Vec<UnitRecord> = generate_study2(case, 2000, seed)
            .unwrap()
            .into_iter()
            .map(|r| UnitRecord { x: vec![r.x[0]], ..r })
            .collect();
        match em_fit_with_covariates(&data, Monotonicity::Standard, &EmOptions::default(), Some(3)) {
            Ok(f) => traces.push(f.trace),
            Err(e) => c.expect(false, format!("covariate fit case {case}: {e}")),
        }
    }
    let falling = traces.iter().filter(|t| !monotone(t)).count();
    c.expect(falling == 0, format!("{falling} of {} traces decrease", traces.len()));
    c.note(format!(
        "n = 100000: largest error {worst:.4}; {} traces, {} iterations in all, {falling} decreasing",
        traces.len(),
        traces.iter().map(|t| t.len() - 1).sum::<usize>()
    ));
}

// 10 -----------------------------------------------------------------------

fn fd_error(f: impl Fn(&[f64]) -> f64, at: &[f64], grad: &[f64]) -> f64 {
    let h = 1e-5;
    let num: Vec<f64> = (0..at.len())
        .map(|i| {
            let mut up = at.to_vec();
            let mut dn = at.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect();
    let scale = num.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    num.iter().zip(grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn model_fitters(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 200;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let targets: Vec<Vec<f64>> = (0..n).map(|_| dirichlet(&mut rng, 3)).collect();
    let cum = CumulativeLogitLikelihood::new(&y, &x, Some(&w), 4).unwrap();
    let logit = LogitLikelihood::new(&d, &x, Some(&w)).unwrap();
    let multi = MultinomialLikelihood::new(&targets, &x, Some(&w), 1).unwrap();
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let mut alpha = vec![rng.random_range(-2.0..0.0)];
        for _ in 0..2 {
            let last = *alpha.last().unwrap();
            alpha.push(last + rng.random_range(0.2..1.5));
        }
        let beta: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, g) = cum.evaluate(&alpha, &beta);
        let at: Vec<f64> = alpha.iter().chain(&beta).copied().collect();
        worst[0] = worst[0].max(fd_error(|t| cum.evaluate(&t[..3], &t[3..]).0, &at, &g));
        let at: Vec<f64> = (0..logit.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst[1] = worst[1].max(fd_error(|t| logit.evaluate(t).0, &at, &logit.evaluate(&at).1));
        let at: Vec<f64> = (0..multi.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst[2] = worst[2].max(fd_error(|t| multi.evaluate(t).0, &at, &multi.evaluate(&at).1));
    }
    c.expect(worst.iter().all(|e| *e < 1e-4), format!("gradient errors {worst:?}"));

    let logit_of = |p: f64| (p / (1.0 - p)).ln();
    let labels = |counts: &[usize]| -> Vec<usize> { counts.iter().enumerate().flat_map(|(k, &n)| vec![k; n]).collect() };
    let d: Vec<bool> = (0..10).map(|i| i < 3).collect();
    let lm = fit_logit(&d, &[]).unwrap();
    let cm = fit_cumulative_logit(&labels(&[40, 35, 25]), &[], None).unwrap();
    let mm = fit_multinomial_logit(&labels(&[20, 50, 30]), &[], None, 1).unwrap();
    let errors = [
        (lm.intercept() - logit_of(0.3)).abs(),
        (cm.cutpoints()[0] - logit_of(0.4)).abs(),
        (cm.cutpoints()[1] - logit_of(0.75)).abs(),
        (mm.coefficients(0).unwrap()[0] - (0.2f64 / 0.5).ln()).abs(),
        (mm.coefficients(2).unwrap()[0] - (0.3f64 / 0.5).ln()).abs(),
    ];
    let closed = errors.iter().fold(0.0f64, |m, e| m.max(*e));
    c.expect(closed < 1e-12, format!("intercept-only error {closed:e}"));
    c.note(format!(
        "gradient errors {:.1e}, {:.1e}, {:.1e} at 100 points each; intercept-only error {closed:.1e}",
        worst[0], worst[1], worst[2]
    ));
}

// --------------------------------------------------------------------------

type Criterion = (&'static str, fn(&mut Check));

const CRITERIA: [Criterion; 10] = [
    ("golden_examples", golden_examples),
    ("taste_test_reproduction", taste_test),
    ("oracle_equivalence", oracle_equivalence),
    ("coupling_attainment", coupling_attainment),
    ("point_identification", point_identification),
    ("nesting_and_sharpening", nesting_and_sharpening),
    ("study_one_replication", study_one),
    ("study_two_replication", study_two),
    ("em_correctness", em_correctness),
    ("model_fitters", model_fitters),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut check = Check::default();
        run(&mut check);
        let pass = check.failures.is_empty();
        failed += !pass as usize;
        println!("criterion {:>2} {name}: {} ({:.1?})", i + 1, if pass { "PASS" } else { "FAIL" }, start.elapsed());
        for line in &check.notes {
            println!("    {line}");
        }
        for line in &check.failures {
            println!("    failed: {line}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
