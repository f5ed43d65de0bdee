//! Slope homogeneity of the loss tail of daily NASDAQ Composite returns.
//!
//! cargo run --example nasdaq_analysis [-- prices.csv]

use std::path::PathBuf;

use hqreg::cli::analyze::{analyze_financial, AnalyzeConfig};
use hqreg::cli::data::{parse_timeseries_csv, Schema};

fn main() -> hqreg::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/NASDAQCOM_2013_2018.csv"));
    let data = parse_timeseries_csv(&path, &Schema::Fred)?;
    let config = AnalyzeConfig {
        replicates: 500,
        seed: 1,
        ..AnalyzeConfig::default()
    };
    let (report, _) = analyze_financial(&data, &[(0.05, 0.01), (0.5, 0.05)], &config)?;
    print!("{}", report.summary());
    for p in &report.pairs {
        println!(
            "  ({}, {}): slopes {:.5} / {:.5}, tau-hat {:.2} / {:.2}",
            p.alpha1, p.alpha2, p.slope_1, p.slope_2, p.tau_hat_1, p.tau_hat_2
        );
    }
    Ok(())
}
