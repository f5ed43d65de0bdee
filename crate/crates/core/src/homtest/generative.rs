//! Monte Carlo critical values from surrogate responses on the fixed design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surrogate::{generate_surrogate, SurrogateSpec};
use super::{analyze_pair, check_significance, Decision, Diagnostics, Method, PipelineSettings, QuadForm, TestResult};
use crate::error::{Error, Result};
use crate::quantreg::DesignContext;
use crate::rng;
use crate::tailstats::UpsilonTable;

const STREAM_TAG: u64 = 0x6765_6e65_7261_7465;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Fresh draws allowed after a failed replicate before it is skipped.
    pub max_redraws: usize,
    /// Largest tolerated fraction of skipped replicates.
    pub max_skip_fraction: f64,
}

impl Default for GenerativeOptions {
    fn default() -> Self {
        Self {
            replicates: 500,
            seed: 0,
            max_redraws: 3,
            max_skip_fraction: 0.1,
        }
    }
}

/// Surrogate statistics and the critical values derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub spec: SurrogateSpec,
    /// Statistics of the retained replicates, in replicate order.
    pub statistics: Vec<f64>,
    /// `(a, Q°₁₋ₐ)` pairs.
    pub thresholds: Vec<(f64, f64)>,
    pub replicates: usize,
    pub skipped: usize,
    pub redraws: usize,
}

impl Calibration {
    /// `(1 + #{T° ≥ t}) / (B + 1)` over the retained replicates.
    pub fn p_value(&self, t: f64) -> f64 {
        let ge = self.statistics.iter().filter(|&&s| s >= t).count();
        (1 + ge) as f64 / (self.statistics.len() + 1) as f64
    }

    pub fn threshold(&self, a: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .find(|(s, _)| (s - a).abs() < 1e-12)
            .map(|&(_, q)| q)
    }

    pub(crate) fn result_for(&self, q: QuadForm) -> TestResult {
        TestResult {
            statistic: q.value,
            method: Method::Generative,
            df: None,
            p_value: self.p_value(q.value),
            reject_at: self
                .thresholds
                .iter()
                .map(|&(a, crit)| Decision {
                    significance: a,
                    critical_value: crit,
                    reject: q.value > crit,
                })
                .collect(),
            diagnostics: Diagnostics {
                tau_hat_1: None,
                tau_hat_2: None,
                condition: q.condition,
                clipped: q.clipped,
                replicates: Some(self.replicates),
                skipped: Some(self.skipped),
                surrogate: Some(self.spec),
            },
        }
    }
}

/// Inverse empirical CDF of a sorted sample.
fn type1_quantile(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    let k = ((u * m as f64).ceil() as usize).clamp(1, m);
    sorted[k - 1]
}

/// Runs the full pipeline on `B` surrogate responses `y° ~ spec` sharing the
/// design in `ctx`, and returns the `(1 − a)` quantiles of the statistics.
pub fn generative_calibrate(
    ctx: &DesignContext,
    levels: (f64, f64),
    spec: &SurrogateSpec,
    settings: &PipelineSettings,
    opts: &GenerativeOptions,
    significance: &[f64],
) -> Result<Calibration> {
    let table = UpsilonTable::new(ctx, settings.taper.bandwidth)?;
    calibrate_prepared(ctx, &table, settings, levels, spec, opts, significance)
}

pub(crate) fn calibrate_prepared(
    ctx: &DesignContext,
    table: &UpsilonTable,
    settings: &PipelineSettings,
    levels: (f64, f64),
    spec: &SurrogateSpec,
    opts: &GenerativeOptions,
    significance: &[f64],
) -> Result<Calibration> {
    spec.validate()?;
    check_significance(significance)?;
    if opts.replicates < 50 {
        return Err(Error::InvalidParameter(format!(
            "generative calibration needs at least 50 replicates, got {}",
            opts.replicates
        )));
    }
    let n = ctx.n();
    let outcomes: Vec<(Option<f64>, usize, Option<String>)> = (0..opts.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut last_err = None;
            for attempt in 0..=opts.max_redraws {
                let id = rng::derive_id(&[STREAM_TAG, rep as u64, attempt as u64]);
                let mut stream = rng::stream(opts.seed, id);
                let attempt_result = generate_surrogate(n, spec, &mut stream)
                    .and_then(|y| analyze_pair(ctx, table, &y, levels, settings));
                match attempt_result {
                    Ok(a) if a.statistic().is_finite() => return (Some(a.statistic()), attempt, None),
                    Ok(_) => last_err = Some("non-finite statistic".to_string()),
                    Err(e) => last_err = Some(e.to_string()),
                }
            }
            (None, opts.max_redraws, last_err)
        })
        .collect();

    let skipped = outcomes.iter().filter(|o| o.0.is_none()).count();
    let redraws = outcomes.iter().map(|o| o.1).sum();
    if skipped as f64 > opts.max_skip_fraction * opts.replicates as f64 {
        let detail = outcomes
            .iter()
            .find_map(|o| o.2.clone())
            .unwrap_or_else(|| "unknown failure".into());
        return Err(Error::CalibrationFailed {
            skipped,
            total: opts.replicates,
            detail,
        });
    }
    let statistics: Vec<f64> = outcomes.iter().filter_map(|o| o.0).collect();
    let mut sorted = statistics.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let thresholds = significance
        .iter()
        .map(|&a| (a, type1_quantile(&sorted, 1.0 - a)))
        .collect();
    Ok(Calibration {
        spec: *spec,
        statistics,
        thresholds,
        replicates: opts.replicates,
        skipped,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homtest::DEFAULT_SIGNIFICANCE;

    fn small_calibration(seed: u64) -> Calibration {
        let ctx = DesignContext::polynomial(400, 2).unwrap();
        let settings = PipelineSettings::for_design(&ctx);
        let opts = GenerativeOptions {
            replicates: 60,
            seed,
            ..GenerativeOptions::default()
        };
        generative_calibrate(
            &ctx,
            (0.1, 0.05),
            &SurrogateSpec::Exponential,
            &settings,
            &opts,
            &DEFAULT_SIGNIFICANCE,
        )
        .unwrap()
    }

    #[test]
    fn surrogate_statistics_are_finite_and_reproducible() {
        let c = small_calibration(7);
        assert_eq!(c.statistics.len() + c.skipped, 60);
        assert!(c.statistics.iter().all(|s| s.is_finite() && *s >= 0.0));
        assert_eq!(c, small_calibration(7));
        let q = |a| c.threshold(a).unwrap();
        assert!(q(0.10) <= q(0.05) && q(0.05) <= q(0.01));
    }

    #[test]
    fn p_value_convention() {
        let c = small_calibration(8);
        let m = c.statistics.len() as f64;
        assert_eq!(c.p_value(0.0), 1.0);
        assert_eq!(c.p_value(f64::NEG_INFINITY), 1.0);
        assert_eq!(c.p_value(f64::INFINITY), 1.0 / (m + 1.0));
        let mut prev = 1.0;
        for t in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let p = c.p_value(t);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn too_few_replicates_is_an_error() {
        let ctx = DesignContext::polynomial(200, 2).unwrap();
        let settings = PipelineSettings::for_design(&ctx);
        let opts = GenerativeOptions {
            replicates: 10,
            ..GenerativeOptions::default()
        };
        assert!(generative_calibrate(&ctx, (0.1, 0.05), &SurrogateSpec::Exponential, &settings, &opts, &[0.05]).is_err());
    }

    #[test]
    fn type1_quantile_examples() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(type1_quantile(&s, 0.5), 2.0);
        assert_eq!(type1_quantile(&s, 0.51), 3.0);
        assert_eq!(type1_quantile(&s, 1.0), 4.0);
        assert_eq!(type1_quantile(&s, 0.0), 1.0);
    }
}
