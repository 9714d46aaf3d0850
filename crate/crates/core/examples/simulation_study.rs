//! A small Monte Carlo study: bias, spread and interval coverage of the
//! estimated bounds. Pass `--full` for the desk-scale replicate counts.

use ordbounds::simulation::{run_study, StudySpec};

fn main() -> ordbounds::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    println!("study case estimator   bias_L  bias_U   se_L   se_U  length coverage");
    for case in 1..=4 {
        let mut spec = StudySpec::new(1, case);
        if !full {
            spec.n_reps = 200;
            spec.n_boot = 200;
        }
        print_rows(&spec)?;
    }
    let mut spec = StudySpec::new(2, 1);
    spec.n_boot_adjusted = Some(50);
    if !full {
        spec.n_reps = 10;
        spec.n_boot = 100;
        spec.truth_draws = 200_000;
    }
    print_rows(&spec)
}

fn print_rows(spec: &StudySpec) -> ordbounds::Result<()> {
    for row in run_study(spec)? {
        println!(
            "{:>5} {:>4} {:<10} {:+.3}  {:+.3}  {:.3}  {:.3}  {:.3}  {:.3}",
            row.study, row.case_id, row.estimator, row.bias_lower, row.bias_upper, row.se_lower, row.se_upper,
            row.mean_length, row.coverage_bounds
        );
    }
    Ok(())
}
