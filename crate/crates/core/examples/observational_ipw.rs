//! Confounded assignment: arm frequencies are biased, propensity weighting
//! recovers the population bounds.

use ordbounds::bounds::full_report;
use ordbounds::data::UnitRecord;
use ordbounds::distributions::MarginalPair;
use ordbounds::estimation::{estimate_ipw, estimate_randomized, IpwOptions, Propensity};
use ordbounds::inference::{bootstrap, BootstrapOptions, Estimator, PairLower};
use ordbounds::bounds::Estimand;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ordbounds::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // Outcome probabilities by arm and covariate; x = 1 raises both the
    // chance of treatment and the outcome.
    let p1 = [[0.3, 0.4, 0.3], [0.1, 0.3, 0.6]];
    let p0 = [[0.5, 0.3, 0.2], [0.2, 0.4, 0.4]];
    let records: Vec<UnitRecord> = (0..4000)
        .map(|_| {
            let x = rng.random_bool(0.5) as usize;
            let z = rng.random_bool(if x == 1 { 0.75 } else { 0.25 });
            let p = if z { p1[x] } else { p0[x] };
            let u: f64 = rng.random();
            let y = if u < p[0] { 0 } else if u < p[0] + p[1] { 1 } else { 2 };
            UnitRecord::new(z, y).with_x(vec![x as f64])
        })
        .collect();
    let avg = |p: [[f64; 3]; 2]| (0..3).map(|k| (p[0][k] + p[1][k]) / 2.0).collect::<Vec<_>>();
    let truth = full_report(&MarginalPair::from_vecs(avg(p1), avg(p0))?);

    let naive = estimate_randomized(&records, None)?;
    let ipw = estimate_ipw(&records, &Propensity::Fitted, &IpwOptions::default())?;
    println!("truth     tau [{:.3}, {:.3}]", truth.tau_lower, truth.tau_upper);
    println!("naive     tau [{:.3}, {:.3}]", naive.bounds.tau_lower, naive.bounds.tau_upper);
    println!("weighted  tau [{:.3}, {:.3}]", ipw.bounds.tau_lower, ipw.bounds.tau_upper);

    // The bootstrap refits the propensity model on every resample.
    let est = Estimator::Ipw { propensity: Propensity::Fitted, epsilon: 0.01 };
    let draws = bootstrap(&records, &est, &BootstrapOptions { n_boot: 300, seed: 2, ..Default::default() })?;
    let ci = draws.interval(Estimand::Tau, PairLower::Bound, 0.95)?;
    println!("95% interval for the tau bounds ({:.3}, {:.3})", ci.ci_low, ci.ci_high);
    Ok(())
}
