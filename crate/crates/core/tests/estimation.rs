use ordbounds::bounds::full_report;
use ordbounds::data::{records_from_counts, UnitRecord};
use ordbounds::distributions::{MarginalDistribution, MarginalPair};
use ordbounds::estimation::*;
use ordbounds::scalar::{ratio, Rational};
use ordbounds::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn with_x(records: Vec<UnitRecord>, x: f64) -> Vec<UnitRecord> {
    records.into_iter().map(|r| r.with_x(vec![x])).collect()
}

#[test]
fn randomized_uses_arm_frequencies() {
    let records = records_from_counts(&[0, 2, 10, 30, 2], &[14, 13, 6, 7, 0]);
    let est = estimate_randomized(&records, None).unwrap();
    assert_eq!((est.n_treated, est.n_control), (44, 40));
    let direct = full_report(
        &MarginalPair::from_vecs(
            [0.0, 2.0, 10.0, 30.0, 2.0].iter().map(|c| c / 44.0).collect(),
            [14.0, 13.0, 6.0, 7.0, 0.0].iter().map(|c| c / 40.0).collect(),
        )
        .unwrap(),
    );
    assert!(close(est.bounds.tau_lower, direct.tau_lower, 1e-15));
    assert!(close(est.bounds.eta_upper, direct.eta_upper, 1e-15));
    assert!(est.report.dominance);
}

#[test]
fn constant_propensity_matches_randomized() {
    let records = records_from_counts(&[3, 5, 9, 2], &[6, 4, 4, 5]);
    let plain = estimate_randomized(&records, None).unwrap();
    let ipw = estimate_ipw(&records, &Propensity::Constant(0.3), &IpwOptions::default()).unwrap();
    assert!(close(ipw.bounds.tau_lower, plain.bounds.tau_lower, 1e-14));
    assert!(close(ipw.bounds.tau_upper, plain.bounds.tau_upper, 1e-14));
    let fitted = estimate_ipw(&records, &Propensity::Fitted, &IpwOptions::default()).unwrap();
    assert!(close(fitted.bounds.eta_upper, plain.bounds.eta_upper, 1e-12));
}

/// Treatment is more likely when `x = 1`, and `x = 1` raises outcomes, so
/// arm frequencies are confounded while weighted frequencies are not.
fn confounded(n: usize, seed: u64) -> (Vec<UnitRecord>, MarginalPair<f64>) {
    let p1 = [[0.3, 0.4, 0.3], [0.1, 0.3, 0.6]];
    let p0 = [[0.5, 0.3, 0.2], [0.2, 0.4, 0.4]];
    let e = [0.3, 0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, p: &[f64; 3]| {
        let u: f64 = rng.random();
        if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else {
            2
        }
    };
    let records = (0..n)
        .map(|_| {
            let x = rng.random_bool(0.5) as usize;
            let z = rng.random_bool(e[x]);
            let y = draw(&mut rng, if z { &p1[x] } else { &p0[x] });
            UnitRecord::new(z, y).with_x(vec![x as f64])
        })
        .collect();
    let avg = |p: &[[f64; 3]; 2]| (0..3).map(|k| (p[0][k] + p[1][k]) / 2.0).collect::<Vec<_>>();
    (records, MarginalPair::from_vecs(avg(&p1), avg(&p0)).unwrap())
}

#[test]
fn ipw_removes_confounding() {
    let (records, truth) = confounded(200_000, 4);
    let want = full_report(&truth);
    let naive = estimate_randomized(&records, None).unwrap();
    let fitted = estimate_ipw(&records, &Propensity::Fitted, &IpwOptions::default()).unwrap();
    let e: Vec<f64> = records.iter().map(|r| if r.x[0] == 1.0 { 0.7 } else { 0.3 }).collect();
    let known = estimate_ipw(&records, &Propensity::Known(e), &IpwOptions::default()).unwrap();
    for est in [&fitted, &known] {
        assert!(close(est.bounds.tau_lower, want.tau_lower, 0.01));
        assert!(close(est.bounds.tau_upper, want.tau_upper, 0.01));
        assert!(close(est.bounds.eta_lower, want.eta_lower, 0.01));
    }
    assert!(close(fitted.marginals.treated.probs()[2], 0.45, 0.01));
    assert!(!close(naive.marginals.treated.probs()[2], 0.45, 0.03));
}

#[test]
fn ipw_rejects_extreme_scores() {
    let records = records_from_counts(&[2, 2], &[2, 2]);
    let mut e = vec![0.5; 8];
    e[3] = 0.999;
    match estimate_ipw(&records, &Propensity::Known(e), &IpwOptions::default()) {
        Err(Error::ExtremePropensity { units, .. }) => assert_eq!(units, vec![3]),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        estimate_ipw(&records, &Propensity::Known(vec![0.5; 3]), &IpwOptions::default()),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn discrete_adjustment_on_two_strata() {
    // Counts proportional to the stratum marginals, 5 units per arm and stratum.
    let mut records = with_x(records_from_counts(&[1, 3, 1], &[2, 1, 2]), 1.0);
    records.extend(with_x(records_from_counts(&[1, 1, 3], &[3, 1, 1]), 0.0));
    let est = estimate_adjusted(&records, Adjustment::Discrete, None).unwrap();
    assert!(close(est.bounds.tau_lower, 0.5, 1e-14));
    assert!(close(est.bounds.tau_upper, 0.9, 1e-14));
    assert!(close(est.report.tau_upper, 1.0, 1e-14));
    assert_eq!(est.design, Design::Adjusted);
}

#[test]
fn discrete_adjustment_needs_both_arms_per_stratum() {
    let mut records = with_x(records_from_counts(&[1, 3], &[2, 1]), 1.0);
    records.extend(with_x(records_from_counts(&[1, 1], &[0, 0]), 0.0));
    assert!(matches!(
        estimate_adjusted(&records, Adjustment::Discrete, None),
        Err(Error::StratumMissingArm { arm: "control", .. })
    ));
}

#[test]
fn model_adjustment_with_irrelevant_covariate_is_close_to_unadjusted() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let records: Vec<UnitRecord> = records_from_counts(&[300, 500, 700], &[600, 500, 400])
        .into_iter()
        .map(|r| r.with_x(vec![rng.random::<f64>()]))
        .collect();
    let adj = estimate_adjusted(&records, Adjustment::Model, None).unwrap();
    let plain = estimate_randomized(&records, None).unwrap();
    assert!(close(adj.bounds.tau_lower, plain.bounds.tau_lower, 0.02));
    assert!(close(adj.bounds.tau_upper, plain.bounds.tau_upper, 0.02));
    assert!(adj.bounds.tau_lower >= plain.bounds.tau_lower - 0.02);
}

#[test]
fn empty_arm_is_an_error() {
    let records = records_from_counts(&[2, 3], &[0, 0]);
    assert!(matches!(estimate_randomized(&records, None), Err(Error::EmptyArm { arm: "control" })));
}

fn exact_marginal(w: &[u32]) -> MarginalDistribution<Rational> {
    let s: u32 = w.iter().sum();
    MarginalDistribution::new(w.iter().map(|&v| ratio(v as i64, s as i64)).collect()).unwrap()
}

fn weights(j: usize) -> impl Strategy<Value = Vec<u32>> {
    proptest::collection::vec(0u32..6, j).prop_filter("positive total", |w| w.iter().sum::<u32>() > 0)
}

fn strata() -> impl Strategy<Value = Vec<(u32, Vec<u32>, Vec<u32>)>> {
    (2usize..=5).prop_flat_map(|j| proptest::collection::vec((1u32..5, weights(j), weights(j)), 1..5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adjusted_bounds_nest_inside_pooled(s in strata()) {
        let input: Vec<(Rational, MarginalPair<Rational>)> = s
            .iter()
            .map(|(w, a, b)| (ratio(*w as i64, 1), MarginalPair::new(exact_marginal(a), exact_marginal(b)).unwrap()))
            .collect();
        let out = population_adjusted(&input).unwrap();
        let a = &out.adjusted;
        let u = &out.unadjusted;
        prop_assert!(u.tau_lower <= a.tau_lower && a.tau_lower <= a.tau_upper && a.tau_upper <= u.tau_upper);
        prop_assert!(u.eta_lower <= a.eta_lower && a.eta_lower <= a.eta_upper && a.eta_upper <= u.eta_upper);
    }
}
