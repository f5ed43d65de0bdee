//! Coefficient homogeneity across two high quantile levels.
//!
//! The statistic compares the slope coefficients of two quantile fits,
//! normalized by a tapered long-run covariance. It can be calibrated against
//! a χ² limit (same-rate or different-rate regime) or generatively, by
//! re-running the whole pipeline on iid surrogate responses that share the
//! observed design.

mod generative;
mod surrogate;

pub use generative::{generative_calibrate, Calibration, GenerativeOptions};
pub use surrogate::{fit_gpd_pwm, generate_surrogate, hill_tail_index, SurrogateSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::RepairedInverse;
use crate::quantreg::{fit_quantile_regression, psi_unchecked, DesignContext, QuantileFit, SolverConfig};
use crate::tailstats::{
    annotate_tail_scale, contrast_matrix, phi_matrix_weighted, weighted_gram, IndicatorSeries, LongRunCovPair,
    TaperSpec, UpsilonTable,
};

/// Nominal significance levels reported by default (90%, 95%, 99% coverage).
pub const DEFAULT_SIGNIFICANCE: [f64; 3] = [0.10, 0.05, 0.01];

/// `ζᵢ = {α(1 − α)}^{-1/2} ψ_{1−α}(γᵢ eᵢ)`.
pub fn zeta(e: &[f64], gamma: Option<&[f64]>, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("tail mass {alpha} outside (0, 1)")));
    }
    if let Some(g) = gamma {
        if g.len() != e.len() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: e.len(),
                found: g.len(),
            });
        }
    }
    let scale = (alpha * (1.0 - alpha)).sqrt();
    Ok(e.iter()
        .enumerate()
        .map(|(i, &v)| psi_unchecked(gamma.map_or(1.0, |g| g[i]) * v, 1.0 - alpha) / scale)
        .collect())
}

/// `Tₙ = n^{-1/2} Σ ζᵢ ⊗ zᵢ` for a pair of levels.
#[derive(Debug, Clone)]
pub struct LinearForm {
    pub values: DVector<f64>,
    pub levels: (f64, f64),
}

impl LinearForm {
    /// Builds `Tₙ` from the auxiliary values `e⁽¹⁾`, `e⁽²⁾` of the two levels.
    pub fn new(
        ctx: &DesignContext,
        e1: &[f64],
        e2: &[f64],
        gamma: Option<&[f64]>,
        levels: (f64, f64),
    ) -> Result<Self> {
        let n = ctx.n();
        for e in [e1, e2] {
            if e.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "auxiliary values",
                    expected: n,
                    found: e.len(),
                });
            }
        }
        let z1 = zeta(e1, gamma, levels.0)?;
        let z2 = zeta(e2, gamma, levels.1)?;
        let p = ctx.p();
        let mut values = DVector::zeros(2 * p);
        for i in 0..n {
            for (j, zij) in ctx.z_row(i).iter().enumerate() {
                values[j] += z1[i] * zij;
                values[p + j] += z2[i] * zij;
            }
        }
        Ok(Self {
            values: values / (n as f64).sqrt(),
            levels,
        })
    }
}

/// `ϑ = A(β̂₁ − β̂₂) − c_A`.
pub fn theta(beta1: &[f64], beta2: &[f64], a: &DMatrix<f64>, c_a: &[f64]) -> Result<DVector<f64>> {
    let p = a.ncols();
    for (what, len) in [("beta1", beta1.len()), ("beta2", beta2.len())] {
        if len != p {
            return Err(Error::DimensionMismatch {
                what,
                expected: p,
                found: len,
            });
        }
    }
    if c_a.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what: "c_A",
            expected: a.nrows(),
            found: c_a.len(),
        });
    }
    let diff = DVector::from_iterator(p, beta1.iter().zip(beta2).map(|(u, v)| u - v));
    Ok(a * diff - DVector::from_column_slice(c_a))
}

/// The quadratic form together with the repair diagnostics of its inverse.
#[derive(Debug, Clone, Copy)]
pub struct QuadForm {
    pub value: f64,
    pub condition: f64,
    pub clipped: usize,
}

fn check_square(m: &DMatrix<f64>, dim: usize, what: &'static str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what,
            expected: dim,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// `2 ϑᵀ(Φ + Φᵀ)⁻¹ϑ` with diagnostics.
pub fn homogeneity_quad_form(theta: &DVector<f64>, phi: &DMatrix<f64>) -> Result<QuadForm> {
    check_square(phi, theta.len(), "Phi")?;
    let inv = RepairedInverse::new(&(phi + phi.transpose()))?;
    Ok(QuadForm {
        value: 2.0 * inv.quad_form(theta),
        condition: inv.condition,
        clipped: inv.clipped,
    })
}

pub fn homogeneity_statistic(theta: &DVector<f64>, phi: &DMatrix<f64>) -> Result<f64> {
    Ok(homogeneity_quad_form(theta, phi)?.value)
}

/// How the statistic is turned into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Generative,
    ChisqSameRate,
    ChisqDiffRate,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Generative, Method::ChisqSameRate, Method::ChisqDiffRate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Generative => "generative",
            Method::ChisqSameRate => "chisq_same_rate",
            Method::ChisqDiffRate => "chisq_diff_rate",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generative" => Ok(Method::Generative),
            "chisq_same_rate" | "chisq1" => Ok(Method::ChisqSameRate),
            "chisq_diff_rate" | "chisq2" => Ok(Method::ChisqDiffRate),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Decision at one nominal significance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub significance: f64,
    /// χ² quantile, or the surrogate quantile `Q°₁₋ₐ` for the generative method.
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tau_hat_1: Option<f64>,
    pub tau_hat_2: Option<f64>,
    /// Condition number of the matrix inverted in the quadratic form.
    pub condition: f64,
    /// Eigenvalues lifted by the covariance repair.
    pub clipped: usize,
    pub replicates: Option<usize>,
    pub skipped: Option<usize>,
    pub surrogate: Option<SurrogateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub method: Method,
    /// Degrees of freedom of the χ² reference.
    pub df: Option<usize>,
    pub p_value: f64,
    pub reject_at: Vec<Decision>,
    pub diagnostics: Diagnostics,
}

impl TestResult {
    /// Decision at significance `a`, if it was evaluated.
    pub fn decision(&self, a: f64) -> Option<&Decision> {
        self.reject_at.iter().find(|d| (d.significance - a).abs() < 1e-12)
    }

    /// `Q°₁₋ₐ` for generative results.
    pub fn q_threshold(&self, a: f64) -> Option<f64> {
        match self.method {
            Method::Generative => self.decision(a).map(|d| d.critical_value),
            _ => None,
        }
    }
}

fn check_significance(levels: &[f64]) -> Result<()> {
    match levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        Some(a) => Err(Error::InvalidParameter(format!("significance level {a} outside (0, 1)"))),
        None => Ok(()),
    }
}

fn chisq_result(q: QuadForm, df: usize, method: Method, significance: &[f64]) -> Result<TestResult> {
    check_significance(significance)?;
    if df == 0 {
        return Err(Error::NothingToTest);
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p_value = dist.sf(q.value).clamp(f64::MIN_POSITIVE, 1.0);
    let reject_at = significance
        .iter()
        .map(|&a| {
            let crit = dist.inverse_cdf(1.0 - a);
            Decision {
                significance: a,
                critical_value: crit,
                reject: q.value > crit,
            }
        })
        .collect();
    Ok(TestResult {
        statistic: q.value,
        method,
        df: Some(df),
        p_value,
        reject_at,
        diagnostics: Diagnostics {
            tau_hat_1: None,
            tau_hat_2: None,
            condition: q.condition,
            clipped: q.clipped,
            replicates: None,
            skipped: None,
            surrogate: None,
        },
    })
}

/// Same-rate calibration: the statistic against `χ²_{p₀}`.
pub fn chisq_same_rate_test(theta: &DVector<f64>, phi: &DMatrix<f64>, p0: usize) -> Result<TestResult> {
    chisq_same_rate_test_at(theta, phi, p0, &DEFAULT_SIGNIFICANCE)
}

pub fn chisq_same_rate_test_at(
    theta: &DVector<f64>,
    phi: &DMatrix<f64>,
    p0: usize,
    significance: &[f64],
) -> Result<TestResult> {
    if theta.len() != p0 {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: p0,
            found: theta.len(),
        });
    }
    chisq_result(homogeneity_quad_form(theta, phi)?, p0, Method::ChisqSameRate, significance)
}

/// Different-rate calibration: only the slower level's block enters,
/// `τ̂² ϑᵀ(A Σₙ^{-1/2} Σ̃⁻¹ Γ̂ Σ̃⁻¹ Σₙ^{-1/2} Aᵀ)⁻¹ϑ` against `χ²_{p₀}`.
pub fn chisq_diff_rate_test(
    theta: &DVector<f64>,
    ctx: &DesignContext,
    tau: f64,
    gamma_block: &DMatrix<f64>,
    a: &DMatrix<f64>,
    p0: usize,
) -> Result<TestResult> {
    chisq_diff_rate_test_at(theta, ctx, tau, gamma_block, a, None, p0, &DEFAULT_SIGNIFICANCE)
}

#[allow(clippy::too_many_arguments)]
pub fn chisq_diff_rate_test_at(
    theta: &DVector<f64>,
    ctx: &DesignContext,
    tau: f64,
    gamma_block: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma_tilde_inv: Option<&DMatrix<f64>>,
    p0: usize,
    significance: &[f64],
) -> Result<TestResult> {
    let p = ctx.p();
    check_square(gamma_block, p, "Gamma block")?;
    if a.ncols() != p || a.nrows() != p0 || theta.len() != p0 {
        return Err(Error::DimensionMismatch {
            what: "contrast",
            expected: p0,
            found: theta.len(),
        });
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tail scale {tau} must be positive")));
    }
    let s = ctx.sigma_inv_sqrt();
    let block = match sigma_tilde_inv {
        Some(st) => st * gamma_block * st,
        None => gamma_block.clone(),
    };
    let inner = a * s * block * s * a.transpose();
    let inv = RepairedInverse::new(&inner)?;
    let q = QuadForm {
        value: tau * tau * inv.quad_form(theta),
        condition: inv.condition,
        clipped: inv.clipped,
    };
    chisq_result(q, p0, Method::ChisqDiffRate, significance)
}

/// Settings shared by the observed analysis and every surrogate replicate.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub taper: TaperSpec,
    pub sparsity_bandwidth: Option<f64>,
    pub solver: SolverConfig,
    /// `Σ̃⁻¹` from user-supplied heteroskedasticity weights.
    pub sigma_tilde_inv: Option<DMatrix<f64>>,
}

impl PipelineSettings {
    pub fn for_design(ctx: &DesignContext) -> Self {
        Self {
            taper: TaperSpec::default_for(ctx.n()),
            sparsity_bandwidth: None,
            solver: SolverConfig::default(),
            sigma_tilde_inv: None,
        }
    }
}

/// Everything computed from one response vector at a pair of levels.
#[derive(Debug, Clone)]
pub struct HomogeneityAnalysis {
    pub fit1: QuantileFit,
    pub fit2: QuantileFit,
    pub tau1: f64,
    pub tau2: f64,
    pub cov: LongRunCovPair,
    pub contrast: DMatrix<f64>,
    pub theta: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub quad: QuadForm,
}

impl HomogeneityAnalysis {
    pub fn statistic(&self) -> f64 {
        self.quad.value
    }

    /// Index (0 or 1) of the level with the slower rate, i.e. smaller `τ̂`.
    pub fn slower_level(&self) -> usize {
        if self.tau2 < self.tau1 {
            1
        } else {
            0
        }
    }
}

/// Fits both levels, estimates `τ̂ₖ`, `Γ̂` and `Φ`, and evaluates the statistic
/// for `A = [0 | I]`, `c_A = 0`.
pub fn analyze_pair(
    ctx: &DesignContext,
    table: &UpsilonTable,
    y: &[f64],
    alphas: (f64, f64),
    settings: &PipelineSettings,
) -> Result<HomogeneityAnalysis> {
    let a = contrast_matrix(ctx.p())?;
    let mut fit1 = fit_quantile_regression(ctx, y, 1.0 - alphas.0, &settings.solver)?;
    let mut fit2 = fit_quantile_regression(ctx, y, 1.0 - alphas.1, &settings.solver)?;
    annotate_tail_scale(&mut fit1, settings.sparsity_bandwidth)?;
    annotate_tail_scale(&mut fit2, settings.sparsity_bandwidth)?;
    let tau1 = fit1.tau_hat.expect("tail scale annotated");
    let tau2 = fit2.tau_hat.expect("tail scale annotated");
    let cov = LongRunCovPair::estimate(
        &IndicatorSeries::new(&fit1.indicators),
        &IndicatorSeries::new(&fit2.indicators),
        table,
        &settings.taper,
        alphas,
    )?;
    let phi = phi_matrix_weighted(&a, ctx, tau1, tau2, &cov, settings.sigma_tilde_inv.as_ref())?;
    let th = theta(&fit1.beta_hat, &fit2.beta_hat, &a, &vec![0.0; a.nrows()])?;
    let quad = homogeneity_quad_form(&th, &phi)?;
    Ok(HomogeneityAnalysis {
        fit1,
        fit2,
        tau1,
        tau2,
        cov,
        contrast: a,
        theta: th,
        phi,
        quad,
    })
}

/// How the surrogate distribution is chosen for generative calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateChoice {
    /// Fréchet with a Hill estimate of the tail index.
    FrechetHill,
    /// Generalized Pareto fitted by probability-weighted moments above the
    /// 90% empirical quantile.
    GpdPwm,
    /// Unit exponential.
    Exponential,
    Fixed(SurrogateSpec),
}

impl std::str::FromStr for SurrogateChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frechet" | "frechet_hill" => Ok(Self::FrechetHill),
            "gpd" | "gpd_pwm" => Ok(Self::GpdPwm),
            "exponential" => Ok(Self::Exponential),
            other => Err(Error::InvalidParameter(format!("unknown surrogate family '{other}'"))),
        }
    }
}

/// Hill `k` for surrogate fitting: `⌈n min(α, 0.1)⌉`, kept inside the number
/// of available positive values.
pub fn surrogate_hill_k(n: usize, alpha: f64, positives: usize) -> Result<usize> {
    let k = (n as f64 * alpha.min(0.1)).ceil() as usize;
    if positives < 6 {
        return Err(Error::InsufficientData {
            what: "Hill estimator (positive order statistics)",
            needed: 6,
            found: positives,
        });
    }
    Ok(k.clamp(5, positives - 1))
}

/// Resolves a surrogate choice against the observed response; `alpha` is the
/// tail mass of the less extreme level.
pub fn resolve_surrogate(choice: SurrogateChoice, y: &[f64], alpha: f64) -> Result<SurrogateSpec> {
    match choice {
        SurrogateChoice::Fixed(spec) => {
            spec.validate()?;
            Ok(spec)
        }
        SurrogateChoice::Exponential => Ok(SurrogateSpec::Exponential),
        SurrogateChoice::FrechetHill => {
            let positives = y.iter().filter(|v| **v > 0.0).count();
            let k = surrogate_hill_k(y.len(), alpha, positives)?;
            Ok(SurrogateSpec::Frechet {
                kappa: hill_tail_index(y, k)?,
            })
        }
        SurrogateChoice::GpdPwm => {
            let mut sorted = y.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let idx = ((0.9 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
            let u = sorted[idx];
            let exc: Vec<f64> = sorted.iter().filter(|r| **r > u).map(|r| r - u).collect();
            let (xi, sigma) = fit_gpd_pwm(&exc)?;
            let spec = SurrogateSpec::Gpd {
                xi,
                sigma,
                threshold: u,
            };
            spec.validate()?;
            Ok(spec)
        }
    }
}

/// Configuration of [`run_homogeneity_test`].
#[derive(Debug, Clone)]
pub struct HomogeneityConfig {
    pub significance: Vec<f64>,
    /// Defaults to the flat-top taper with bandwidth `⌈n^{1/3}⌉`.
    pub taper: Option<TaperSpec>,
    pub sparsity_bandwidth: Option<f64>,
    pub solver: SolverConfig,
    pub replicates: usize,
    pub seed: u64,
    pub surrogate: SurrogateChoice,
    /// Optional heteroskedasticity weights `γᵢ` (normalized to mean one).
    pub weights: Option<Vec<f64>>,
}

impl Default for HomogeneityConfig {
    fn default() -> Self {
        Self {
            significance: DEFAULT_SIGNIFICANCE.to_vec(),
            taper: None,
            sparsity_bandwidth: None,
            solver: SolverConfig::default(),
            replicates: 500,
            seed: 0,
            surrogate: SurrogateChoice::FrechetHill,
            weights: None,
        }
    }
}

/// A design prepared for repeated tests: rescaling, `Υ` table and settings.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    pub ctx: DesignContext,
    pub table: UpsilonTable,
    pub settings: PipelineSettings,
}

impl PreparedDesign {
    pub fn new(ctx: DesignContext, config: &HomogeneityConfig) -> Result<Self> {
        let mut settings = PipelineSettings::for_design(&ctx);
        if let Some(t) = config.taper {
            settings.taper = t;
        }
        settings.sparsity_bandwidth = config.sparsity_bandwidth;
        settings.solver = config.solver;
        if let Some(g) = &config.weights {
            let st = weighted_gram(&ctx, g)?;
            let inv = st
                .try_inverse()
                .ok_or(Error::SingularCovariance { condition: f64::INFINITY })?;
            settings.sigma_tilde_inv = Some(inv);
        }
        let table = UpsilonTable::new(&ctx, settings.taper.bandwidth)?;
        Ok(Self { ctx, table, settings })
    }
}

fn check_pair(alpha1: f64, alpha2: f64) -> Result<()> {
    for a in [alpha1, alpha2] {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("tail mass {a} outside (0, 1)")));
        }
    }
    if alpha1 < alpha2 {
        return Err(Error::Precondition(format!(
            "alpha1 = {alpha1} must be at least alpha2 = {alpha2} (level 1 is the less extreme one)"
        )));
    }
    Ok(())
}

/// End-to-end test on `(X, y)` at tail masses `α₁ ≥ α₂`.
pub fn run_homogeneity_test(
    x: DMatrix<f64>,
    y: &[f64],
    alpha1: f64,
    alpha2: f64,
    method: Method,
    config: &HomogeneityConfig,
) -> Result<TestResult> {
    check_pair(alpha1, alpha2)?;
    let prepared = PreparedDesign::new(DesignContext::new(x)?, config)?;
    run_prepared(&prepared, y, alpha1, alpha2, &[method], config).map(|mut v| v.remove(0))
}

/// Runs several calibration methods on one analysis of `y`.
pub fn run_prepared(
    prepared: &PreparedDesign,
    y: &[f64],
    alpha1: f64,
    alpha2: f64,
    methods: &[Method],
    config: &HomogeneityConfig,
) -> Result<Vec<TestResult>> {
    check_pair(alpha1, alpha2)?;
    check_significance(&config.significance)?;
    let analysis = analyze_pair(&prepared.ctx, &prepared.table, y, (alpha1, alpha2), &prepared.settings)?;
    calibrate_analysis(prepared, &analysis, y, methods, config)
}

/// Calibrates an existing analysis of `y` by each requested method.
pub fn calibrate_analysis(
    prepared: &PreparedDesign,
    analysis: &HomogeneityAnalysis,
    y: &[f64],
    methods: &[Method],
    config: &HomogeneityConfig,
) -> Result<Vec<TestResult>> {
    check_significance(&config.significance)?;
    let ctx = &prepared.ctx;
    let settings = &prepared.settings;
    let (alpha1, alpha2) = analysis.cov.levels;
    let p0 = analysis.contrast.nrows();
    methods
        .iter()
        .map(|&method| {
            let mut result = match method {
                Method::ChisqSameRate => chisq_result(analysis.quad, p0, method, &config.significance)?,
                Method::ChisqDiffRate => {
                    let (tau, block) = if analysis.slower_level() == 0 {
                        (analysis.tau1, &analysis.cov.gamma_11)
                    } else {
                        (analysis.tau2, &analysis.cov.gamma_22)
                    };
                    chisq_diff_rate_test_at(
                        &analysis.theta,
                        ctx,
                        tau,
                        block,
                        &analysis.contrast,
                        settings.sigma_tilde_inv.as_ref(),
                        p0,
                        &config.significance,
                    )?
                }
                Method::Generative => {
                    let spec = resolve_surrogate(config.surrogate, y, alpha1)?;
                    let opts = GenerativeOptions {
                        replicates: config.replicates,
                        seed: config.seed,
                        ..GenerativeOptions::default()
                    };
                    let cal = generative::calibrate_prepared(
                        ctx,
                        &prepared.table,
                        settings,
                        (alpha1, alpha2),
                        &spec,
                        &opts,
                        &config.significance,
                    )?;
                    cal.result_for(analysis.quad)
                }
            };
            result.diagnostics.tau_hat_1 = Some(analysis.tau1);
            result.diagnostics.tau_hat_2 = Some(analysis.tau2);
            Ok(result)
        })
        .collect()
}
