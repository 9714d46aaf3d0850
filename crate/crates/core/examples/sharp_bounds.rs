//! Sharp bounds on tau and eta from two outcome distributions, in exact
//! rational arithmetic and in floating point.

use ordbounds::bounds::{full_report, point_identified, Estimand};
use ordbounds::distributions::{delta_effects, MarginalPair};
use ordbounds::scalar::ratio;

fn main() -> ordbounds::Result<()> {
    let exact = MarginalPair::from_vecs(
        vec![ratio(1, 5), ratio(3, 5), ratio(1, 5)],
        vec![ratio(2, 5), ratio(1, 5), ratio(2, 5)],
    )?;
    let r = full_report(&exact);
    println!("delta          {:?}", delta_effects(&exact).values().iter().map(|v| v.to_string()).collect::<Vec<_>>());
    println!("tau            [{}, {}], independent {}", r.tau_lower, r.tau_upper, r.tau_independent);
    println!("eta            [{}, {}], independent {}", r.eta_lower, r.eta_upper, r.eta_independent);
    println!("dominance      {}", r.dominance);

    // Same computation with floats; here the treated arm dominates.
    let m = MarginalPair::from_vecs(vec![0.1, 0.2, 0.7], vec![0.5, 0.3, 0.2])?;
    let r = full_report(&m);
    println!("\ntau            [{:.3}, {:.3}]", r.tau_lower, r.tau_upper);
    println!("eta            [{:.3}, {:.3}]", r.eta_lower, r.eta_upper);

    // Disjoint supports pin both estimands down.
    let point = MarginalPair::from_vecs(vec![0.0, 0.0, 1.0], vec![0.6, 0.4, 0.0])?;
    println!(
        "\npoint identified: tau {}, eta {}",
        point_identified(&point, Estimand::Tau),
        point_identified(&point, Estimand::Eta)
    );
    Ok(())
}
