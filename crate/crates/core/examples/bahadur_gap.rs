//! Distance between the scaled estimation error and its linear
//! approximation, for growing sample sizes.
//!
//! cargo run --example bahadur_gap

use hqreg::harness::run_bahadur_gap_experiment;
use hqreg::simgen::MMProcessSpec;

fn main() -> hqreg::Result<()> {
    let model = MMProcessSpec::frechet(vec![1.0, 0.5], 2.0, 0.05)?;
    for g in run_bahadur_gap_experiment(&[500, 2000, 8000, 32000], &model, 100, 9)? {
        println!("n = {:>6}  tau_n = {:>7.2}  median gap {:.4}", g.n, g.tau, g.median_gap);
    }
    Ok(())
}
