//! Joint distributions with given margins that attain each bound.

use ordbounds::coupling::{extremal_coupling, CouplingTarget};
use ordbounds::distributions::{estimands_of_joint, MarginalPair};
use ordbounds::scalar::ratio;

fn main() -> ordbounds::Result<()> {
    let m = MarginalPair::from_vecs(
        vec![ratio(1, 5), ratio(1, 5), ratio(3, 5)],
        vec![ratio(3, 5), ratio(1, 5), ratio(1, 5)],
    )?;
    for target in CouplingTarget::ALL {
        let p = extremal_coupling(&m, target);
        let e = estimands_of_joint(&p);
        println!("{:<12} tau = {:<6} eta = {:<6} lower triangular: {}", target.name(), e.tau.to_string(), e.eta.to_string(), p.is_lower_triangular());
        for row in p.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:>5}", v.to_string())).collect();
            println!("    {}", cells.join(" "));
        }
    }
    Ok(())
}
