//! A small coverage experiment over the null trend model. Pass a grid file
//! (TOML or JSON) to run something larger.
//!
//! cargo run --example coverage_smoke [-- grid.toml]

use hqreg::harness::{run_coverage_experiment, summarize, write_csv, ExperimentGrid};
use hqreg::homtest::{Method, SurrogateChoice};

fn main() -> hqreg::Result<()> {
    let grid = match std::env::args().nth(1) {
        Some(path) => ExperimentGrid::from_path(std::path::Path::new(&path))?,
        None => ExperimentGrid {
            n_values: vec![1000],
            p_values: vec![2, 4],
            a_values: vec![1.0],
            level_pairs: vec![(0.95, 0.99)],
            methods: Method::ALL.to_vec(),
            nominal_levels: vec![0.90, 0.95, 0.99],
            reps: 100,
            b: 100,
            master_seed: 1,
            surrogate: SurrogateChoice::FrechetHill,
            taper: None,
        },
    };
    let cells = run_coverage_experiment(&grid, None)?;
    for c in &cells {
        let cov: Vec<String> = c.coverage.iter().map(|v| format!("{:.3}", v.coverage)).collect();
        println!(
            "n={} p={} a={} {:<16} coverage [{}]{}",
            c.n,
            c.p,
            c.a,
            c.method.as_str(),
            cov.join(", "),
            if c.flagged { "  (flagged)" } else { "" }
        );
    }
    write_csv(&summarize(&cells), std::io::stdout())
}
