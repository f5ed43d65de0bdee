//! Tests whether two tail quantile lines share the same slopes, on data where
//! they do and on data where the upper tail is steeper.
//!
//! cargo run --example homogeneity_test

use hqreg::homtest::{run_prepared, HomogeneityConfig, Method, PreparedDesign};
use hqreg::quantreg::DesignContext;
use hqreg::rng;
use hqreg::simgen::{trend_dataset, TrendModelSpec};

fn report(label: &str, prepared: &PreparedDesign, y: &[f64], config: &HomogeneityConfig) -> hqreg::Result<()> {
    println!("{label}");
    for r in run_prepared(prepared, y, 0.05, 0.01, &Method::ALL, config)? {
        println!(
            "  {:<16} statistic {:>8.3}  p-value {:.4}  reject at 5%: {}",
            r.method.as_str(),
            r.statistic,
            r.p_value,
            r.decision(0.05).is_some_and(|d| d.reject)
        );
    }
    Ok(())
}

fn main() -> hqreg::Result<()> {
    let n = 2000;
    let config = HomogeneityConfig {
        replicates: 300,
        seed: 11,
        ..HomogeneityConfig::default()
    };
    let prepared = PreparedDesign::new(DesignContext::polynomial(n, 2)?, &config)?;

    let null = TrendModelSpec::exponential_null(n, 2, 0.0, &[0.05, 0.01])?;
    let data = trend_dataset(&null, 0, &mut rng::stream(3, 0))?;
    report("homogeneous slopes", &prepared, &data.y, &config)?;

    // Noise that widens over time tilts the extreme quantile line.
    let tilted = null.with_hetero_scale(|t| 0.25 + 1.5 * t);
    let data = trend_dataset(&tilted, 0, &mut rng::stream(3, 1))?;
    report("heteroskedastic noise (slopes differ)", &prepared, &data.y, &config)?;
    Ok(())
}
