//! Optimizing a linear functional of the joint distribution over all
//! couplings of two margins. Indicator objectives reproduce the closed-form
//! bounds; other objectives need the solver.

use ordbounds::bounds::full_report;
use ordbounds::distributions::MarginalPair;
use ordbounds::lp_oracle::{alpha_bounds, optimize, LinearObjective, Sense};

fn main() -> ordbounds::Result<()> {
    let m = MarginalPair::from_vecs(vec![0.2, 0.6, 0.2], vec![0.4, 0.2, 0.4])?;
    let j = m.categories();
    let r = full_report(&m);
    for (name, obj) in [("tau", LinearObjective::tau(j)), ("eta", LinearObjective::eta(j))] {
        let lo = optimize(&m, &obj, Sense::Min)?.value;
        let hi = optimize(&m, &obj, Sense::Max)?.value;
        println!("{name}: solver [{lo:.4}, {hi:.4}]");
    }
    println!("closed form tau [{:.4}, {:.4}], eta [{:.4}, {:.4}]", r.tau_lower, r.tau_upper, r.eta_lower, r.eta_upper);

    let (lo, hi) = alpha_bounds(&m);
    println!("alpha = P(Y1 > Y0) - P(Y1 < Y0) in [{lo:.4}, {hi:.4}]");

    // Expected absolute change in category, |k - l|.
    let dist = LinearObjective::from_fn(j, |k, l| (k as f64 - l as f64).abs());
    let best = optimize(&m, &dist, Sense::Min)?;
    println!("smallest E|Y1 - Y0| = {:.4}, attained by", best.value);
    for row in best.argmatrix.rows() {
        println!("    {row:.3?}");
    }
    Ok(())
}
