//! Trend-homogeneity analysis of a daily price series.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use super::data::{log_returns, Provenance, SeriesDataset};
use crate::error::Result;
use crate::homtest::{
    analyze_pair, calibrate_analysis, HomogeneityConfig, Method, PreparedDesign, SurrogateChoice, TestResult,
};
use crate::linalg::jacobi_eigen;
use crate::quantreg::DesignContext;
use crate::tailstats::TaperSpec;

#[derive(Debug, Clone)]
pub struct AnalyzeConfig {
    /// Analyze the upper tail of negated returns (losses).
    pub negate: bool,
    pub replicates: usize,
    pub seed: u64,
    pub surrogate: SurrogateChoice,
    pub taper: Option<TaperSpec>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            negate: true,
            replicates: 500,
            seed: 0,
            surrogate: SurrogateChoice::FrechetHill,
            taper: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub alpha1: f64,
    pub alpha2: f64,
    pub result: TestResult,
    pub tau_hat_1: f64,
    pub tau_hat_2: f64,
    /// Condition numbers of `Γ̂₁₁` and `Γ̂₂₂`.
    pub gamma_condition: (f64, f64),
    pub slope_1: f64,
    pub slope_2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub negate: bool,
    pub replicates: usize,
    pub seed: u64,
    pub surrogate: SurrogateChoice,
    pub taper: TaperSpec,
    pub design: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub software: String,
    pub provenance: Provenance,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub n_prices: usize,
    pub n_returns: usize,
    pub config: ConfigEcho,
    pub pairs: Vec<PairReport>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A short human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} returns from {} ({} .. {})\n",
            self.n_returns,
            self.provenance.source,
            self.first_date.as_deref().unwrap_or("?"),
            self.last_date.as_deref().unwrap_or("?"),
        );
        for p in &self.pairs {
            s += &format!(
                "  ({:.3}, {:.3}): statistic {:.4}, p-value {:.4}, reject at 5%: {}\n",
                p.alpha1,
                p.alpha2,
                p.result.statistic,
                p.result.p_value,
                p.result.decision(0.05).is_some_and(|d| d.reject),
            );
        }
        s
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let e = jacobi_eigen(m);
    let (lo, hi) = (e.min_value(), e.max_value());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Log returns of the price series together with the generative test of
/// slope homogeneity for each `(α₁, α₂)` pair, on the design `[1, i/n]`.
pub fn analyze_financial(
    dataset: &SeriesDataset,
    pairs: &[(f64, f64)],
    config: &AnalyzeConfig,
) -> Result<(AnalysisReport, Vec<f64>)> {
    let returns = log_returns(&dataset.y, config.negate)?;
    let n = returns.len();
    let mut provenance = dataset.provenance.clone();
    provenance.transforms.push(
        if config.negate {
            "negated daily log returns"
        } else {
            "daily log returns"
        }
        .to_string(),
    );
    let hconf = HomogeneityConfig {
        replicates: config.replicates,
        seed: config.seed,
        surrogate: config.surrogate,
        taper: config.taper,
        ..HomogeneityConfig::default()
    };
    let mut reports = Vec::with_capacity(pairs.len());
    let mut taper = config.taper.unwrap_or_else(|| TaperSpec::default_for(n.max(1)));
    if !pairs.is_empty() {
        let prepared = PreparedDesign::new(DesignContext::polynomial(n, 2)?, &hconf)?;
        taper = prepared.settings.taper;
        for &(alpha1, alpha2) in pairs {
            let analysis = analyze_pair(&prepared.ctx, &prepared.table, &returns, (alpha1, alpha2), &prepared.settings)?;
            let result = calibrate_analysis(&prepared, &analysis, &returns, &[Method::Generative], &hconf)?.remove(0);
            reports.push(PairReport {
                alpha1,
                alpha2,
                tau_hat_1: analysis.tau1,
                tau_hat_2: analysis.tau2,
                gamma_condition: (condition(&analysis.cov.gamma_11), condition(&analysis.cov.gamma_22)),
                slope_1: analysis.fit1.beta_hat[1],
                slope_2: analysis.fit2.beta_hat[1],
                result,
            });
        }
    }
    let stamps = dataset.timestamps.as_ref();
    let report = AnalysisReport {
        software: format!("hqreg {}", env!("CARGO_PKG_VERSION")),
        provenance,
        first_date: stamps.and_then(|s| s.first().cloned()),
        last_date: stamps.and_then(|s| s.last().cloned()),
        n_prices: dataset.len(),
        n_returns: n,
        config: ConfigEcho {
            negate: config.negate,
            replicates: config.replicates,
            seed: config.seed,
            surrogate: config.surrogate,
            taper,
            design: "intercept + t, t = i/n",
        },
        pairs: reports,
    };
    Ok((report, returns))
}

/// Writes `index,return` rows.
pub fn write_plot_csv<W: Write>(returns: &[f64], out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "index,return")?;
    for (i, r) in returns.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::data::{parse_timeseries_str, Schema};

    fn synthetic(m: usize) -> SeriesDataset {
        let mut text = String::from("DATE,VALUE\n");
        let mut s = crate::rng::stream(21, 0);
        let mut price = 100.0;
        for i in 0..m {
            price *= (0.01 * (crate::rng::open_unit(&mut s) - 0.5)).exp();
            text += &format!("d{i},{price}\n");
        }
        parse_timeseries_str(&text, &Schema::Fred, "synthetic", 50).unwrap()
    }

    #[test]
    fn empty_pairs_give_an_empty_report() {
        let (report, returns) = analyze_financial(&synthetic(80), &[], &AnalyzeConfig::default()).unwrap();
        assert!(report.pairs.is_empty());
        assert_eq!(returns.len(), 79);
        let mut buf = Vec::new();
        write_plot_csv(&returns, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 80);
    }

    #[test]
    fn report_is_deterministic() {
        let d = synthetic(400);
        let cfg = AnalyzeConfig {
            replicates: 50,
            seed: 4,
            ..AnalyzeConfig::default()
        };
        let a = analyze_financial(&d, &[(0.1, 0.05)], &cfg).unwrap().0.to_json().unwrap();
        let b = analyze_financial(&d, &[(0.1, 0.05)], &cfg).unwrap().0.to_json().unwrap();
        assert_eq!(a, b);
    }
}
