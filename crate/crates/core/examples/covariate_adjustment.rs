//! Conditioning on a covariate tightens the bounds. Exact population version
//! first, then estimates from data by strata and by a proportional-odds fit.

use ordbounds::distributions::MarginalPair;
use ordbounds::estimation::{estimate_adjusted, estimate_randomized, population_adjusted, Adjustment};
use ordbounds::data::UnitRecord;
use ordbounds::scalar::ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ordbounds::Result<()> {
    let r = |v: [(i64, i64); 3]| v.iter().map(|&(a, b)| ratio(a, b)).collect::<Vec<_>>();
    let strata = [
        (ratio(1, 2), MarginalPair::from_vecs(r([(1, 5), (3, 5), (1, 5)]), r([(2, 5), (1, 5), (2, 5)]))?),
        (ratio(1, 2), MarginalPair::from_vecs(r([(1, 5), (1, 5), (3, 5)]), r([(3, 5), (1, 5), (1, 5)]))?),
    ];
    let pop = population_adjusted(&strata)?;
    println!("population: adjusted tau [{}, {}], pooled [{}, {}]", pop.adjusted.tau_lower, pop.adjusted.tau_upper, pop.unadjusted.tau_lower, pop.unadjusted.tau_upper);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<UnitRecord> = (0..3000)
        .map(|_| {
            let x: f64 = rng.random_range(-2.0..2.0);
            let z = rng.random_bool(0.5);
            // Latent logistic outcome with a strong covariate effect.
            let u: f64 = rng.random();
            let latent = (u / (1.0 - u)).ln() + 2.0 * x + if z { 0.8 } else { 0.0 };
            let y = if latent < -1.0 { 0 } else if latent < 1.0 { 1 } else { 2 };
            UnitRecord::new(z, y).with_x(vec![x.round()])
        })
        .collect();
    let plain = estimate_randomized(&records, None)?;
    let discrete = estimate_adjusted(&records, Adjustment::Discrete, None)?;
    let model = estimate_adjusted(&records, Adjustment::Model, None)?;
    println!("unadjusted       tau [{:.3}, {:.3}]", plain.bounds.tau_lower, plain.bounds.tau_upper);
    println!("by strata        tau [{:.3}, {:.3}]", discrete.bounds.tau_lower, discrete.bounds.tau_upper);
    println!("proportional odds tau [{:.3}, {:.3}]", model.bounds.tau_lower, model.bounds.tau_upper);
    Ok(())
}
