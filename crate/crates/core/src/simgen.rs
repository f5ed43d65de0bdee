//! Moving-maximum auxiliary processes, polynomial trend datasets and the
//! closed-form quantities used as test oracles.
//!
//! Two families are provided:
//!
//! - the two-term exponential process `eᵢ = max(εᵢ, a εᵢ₋₁) − b` with unit-rate
//!   exponential innovations, centered so that `pr(eᵢ > 0) = α`;
//! - the finite Fréchet moving maximum `eᵢ = max_l a_l εᵢ₋ₗ − Q` with
//!   `F_ε(z) = exp(−z^{−κ})`, centered at its `(1 − α)` quantile `Q`.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantreg::{polynomial_design, psi_unchecked, DesignContext};
use crate::rng::{self, RngStream};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tail mass {alpha} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MMFamily {
    /// `max(εᵢ, a εᵢ₋₁)` with unit exponential innovations.
    ExponentialMm { a: f64 },
    /// `max_l a_l εᵢ₋ₗ` with Fréchet(κ) innovations.
    FrechetMm { a: Vec<f64>, kappa: f64 },
}

/// A moving-maximum process centered at its `(1 − α)` quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMProcessSpec {
    pub family: MMFamily,
    pub alpha: f64,
    /// Centering constant `b` (exponential) or `Q` (Fréchet).
    pub shift: f64,
}

impl MMProcessSpec {
    pub fn exponential(a: f64, alpha: f64) -> Result<Self> {
        Ok(Self {
            family: MMFamily::ExponentialMm { a },
            alpha,
            shift: mm_exponential_shift(a, alpha)?,
        })
    }

    pub fn frechet(a: Vec<f64>, kappa: f64, alpha: f64) -> Result<Self> {
        let shift = frechet_mm_quantile(&a, kappa, alpha)?;
        Ok(Self {
            family: MMFamily::FrechetMm { a, kappa },
            alpha,
            shift,
        })
    }

    /// Number of past innovations each value depends on.
    pub fn memory(&self) -> usize {
        match &self.family {
            MMFamily::ExponentialMm { .. } => 1,
            MMFamily::FrechetMm { a, .. } => a.len() - 1,
        }
    }

    /// The uncentered moving maximum computed from `n + memory` innovations.
    pub fn simulate_raw(&self, n: usize, stream: &mut RngStream) -> Vec<f64> {
        match &self.family {
            MMFamily::ExponentialMm { a } => {
                let eps: Vec<f64> = (0..=n).map(|_| rng::exponential(stream)).collect();
                (1..=n).map(|i| eps[i].max(a * eps[i - 1])).collect()
            }
            MMFamily::FrechetMm { a, kappa } => {
                let lags = a.len() - 1;
                let eps: Vec<f64> = (0..n + lags).map(|_| rng::frechet(stream, *kappa)).collect();
                (lags..n + lags)
                    .map(|i| {
                        a.iter()
                            .enumerate()
                            .map(|(l, al)| al * eps[i - l])
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect()
            }
        }
    }

    /// `n` centered values; the first one is already stationary.
    pub fn simulate(&self, n: usize, stream: &mut RngStream) -> Vec<f64> {
        self.simulate_raw(n, stream).into_iter().map(|v| v - self.shift).collect()
    }

    /// Same innovations, re-centered for another tail mass.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        match &self.family {
            MMFamily::ExponentialMm { a } => Self::exponential(*a, alpha),
            MMFamily::FrechetMm { a, kappa } => Self::frechet(a.clone(), *kappa, alpha),
        }
    }
}

/// Solves `(1 − e^{−b})(1 − e^{−b/a}) = 1 − α` (or `1 − e^{−b} = 1 − α` when
/// `a = 0`) by bisection.
pub fn mm_exponential_shift(a: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("coefficient a = {a} must be nonnegative")));
    }
    if a == 0.0 {
        return Ok(-alpha.ln());
    }
    let cdf = |b: f64| (1.0 - (-b).exp()) * (1.0 - (-b / a).exp());
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0, 1.0);
    while cdf(hi) < target {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn simulate_mm_exponential(n: usize, a: f64, alpha: f64, stream: &mut RngStream) -> Result<Vec<f64>> {
    Ok(MMProcessSpec::exponential(a, alpha)?.simulate(n, stream))
}

/// `Q = (Σ a_l^κ / (−log(1 − α)))^{1/κ}`.
pub fn frechet_mm_quantile(a: &[f64], kappa: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sum = coefficient_mass(a, kappa)?;
    Ok((sum / -(1.0 - alpha).ln()).powf(1.0 / kappa))
}

fn coefficient_mass(a: &[f64], kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("tail index {kappa} must be positive")));
    }
    if a.is_empty() || a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("coefficients must be nonnegative and finite".into()));
    }
    let sum: f64 = a.iter().map(|v| v.powf(kappa)).sum();
    if sum <= 0.0 {
        return Err(Error::InvalidParameter("all moving-maximum coefficients are zero".into()));
    }
    Ok(sum)
}

pub fn simulate_mm_frechet(
    n: usize,
    a: &[f64],
    kappa: f64,
    alpha: f64,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    Ok(MMProcessSpec::frechet(a.to_vec(), kappa, alpha)?.simulate(n, stream))
}

/// Truncates a geometric coefficient sequence `a_l = r^l` at `len` terms and
/// reports whether the dropped mass is non-negligible (`a_L^κ / Σ > 1e-8`).
pub fn truncated_geometric(ratio: f64, len: usize, kappa: f64) -> (Vec<f64>, bool) {
    let a: Vec<f64> = (0..len).map(|l| ratio.powi(l as i32)).collect();
    let sum: f64 = a.iter().map(|v| v.powf(kappa)).sum();
    let last = a.last().copied().unwrap_or(0.0).powf(kappa);
    (a, last / sum > 1e-8)
}

/// Null-model polynomial trend `y = β₁ + Σ_{j≥2} βⱼ t^{j−1} + noise`.
///
/// The noise is the raw moving maximum, so the `(1 − α_k)` quantile intercept
/// is `intercept + shift_k`; see [`TrendModelSpec::level_intercept`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModelSpec {
    pub n: usize,
    pub p: usize,
    /// Baseline intercept before centering.
    pub intercept: f64,
    /// `β₂..β_p`.
    pub slopes: Vec<f64>,
    /// One centered noise spec per quantile level, sharing the same family.
    pub noise: Vec<MMProcessSpec>,
    /// Optional multiplicative noise profile, normalized to mean one.
    pub hetero_scale: Option<Vec<f64>>,
}

impl TrendModelSpec {
    /// Slopes `βⱼ = j`, baseline intercept 1, two-term exponential noise.
    pub fn exponential_null(n: usize, p: usize, a: f64, alphas: &[f64]) -> Result<Self> {
        let noise = alphas
            .iter()
            .map(|&al| MMProcessSpec::exponential(a, al))
            .collect::<Result<_>>()?;
        Ok(Self {
            n,
            p,
            intercept: 1.0,
            slopes: (2..=p).map(|j| j as f64).collect(),
            noise,
            hetero_scale: None,
        })
    }

    /// Adds the profile `γᵢ ∝ shape(tᵢ)`, normalized to mean one.
    pub fn with_hetero_scale(mut self, shape: impl Fn(f64) -> f64) -> Self {
        let raw: Vec<f64> = (1..=self.n).map(|i| shape(i as f64 / self.n as f64)).collect();
        let mean = raw.iter().sum::<f64>() / self.n as f64;
        self.hetero_scale = Some(raw.into_iter().map(|g| g / mean).collect());
        self
    }

    /// `β_{1−α_k,1}`.
    pub fn level_intercept(&self, k: usize) -> f64 {
        self.intercept + self.noise[k].shift
    }

    /// True coefficient vector at level `k` (without heteroskedasticity).
    pub fn level_coefficients(&self, k: usize) -> Vec<f64> {
        std::iter::once(self.level_intercept(k)).chain(self.slopes.iter().copied()).collect()
    }
}

/// Simulated design, response and the auxiliary noise at level `k`.
#[derive(Debug, Clone)]
pub struct TrendData {
    pub x: nalgebra::DMatrix<f64>,
    pub y: Vec<f64>,
    /// Centered noise `eᵢ` at the requested level (before γ scaling).
    pub e: Vec<f64>,
}

pub fn trend_dataset(spec: &TrendModelSpec, k: usize, stream: &mut RngStream) -> Result<TrendData> {
    let TrendModelSpec { n, p, .. } = *spec;
    if p == 0 || n < p {
        return Err(Error::InvalidParameter(format!("need n >= p >= 1, got n = {n}, p = {p}")));
    }
    if spec.slopes.len() != p - 1 {
        return Err(Error::DimensionMismatch {
            what: "slopes",
            expected: p - 1,
            found: spec.slopes.len(),
        });
    }
    let noise = spec
        .noise
        .get(k)
        .ok_or_else(|| Error::InvalidParameter(format!("no noise spec for level {k}")))?;
    if let Some(g) = &spec.hetero_scale {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                what: "hetero_scale",
                expected: n,
                found: g.len(),
            });
        }
    }
    let x = polynomial_design(n, p);
    let e = noise.simulate(n, stream);
    let b1 = spec.level_intercept(k);
    let y = (0..n)
        .map(|i| {
            let trend: f64 = spec
                .slopes
                .iter()
                .enumerate()
                .map(|(j, b)| b * x[(i, j + 1)])
                .sum();
            let g = spec.hetero_scale.as_ref().map_or(1.0, |g| g[i]);
            b1 + trend + g * e[i]
        })
        .collect();
    Ok(TrendData { x, y, e })
}

/// `cor(1{e₀ > 0}, 1{e_lag > 0})` for the `a = 1` exponential process centered
/// at tail masses `α₁` and `α₂`.
pub fn analytic_rho_mm_exp(alpha1: f64, alpha2: f64, lag: i64) -> Result<f64> {
    check_alpha(alpha1)?;
    check_alpha(alpha2)?;
    let lag = lag.unsigned_abs();
    if lag >= 2 {
        return Ok(0.0);
    }
    let f = |b: f64| 1.0 - (-b).exp();
    let b1 = mm_exponential_shift(1.0, alpha1)?;
    let b2 = mm_exponential_shift(1.0, alpha2)?;
    let joint = if lag == 0 {
        alpha1.min(alpha2)
    } else {
        let (f1, f2) = (f(b1), f(b2));
        1.0 - f1 * f1 - f2 * f2 + f1 * f2 * f(b1.min(b2))
    };
    Ok((joint - alpha1 * alpha2) / (alpha1 * (1.0 - alpha1) * alpha2 * (1.0 - alpha2)).sqrt())
}

/// `τₙ = (nα)^{1/2} κ(1 − α) / (α (Σ a_l^κ)^{1/κ}) · {−log(1 − α)}^{1 + 1/κ}`
/// for the intercept-only Fréchet moving maximum.
pub fn analytic_tau_mm_frechet(n: usize, alpha: f64, kappa: f64, a: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    let scale = coefficient_mass(a, kappa)?.powf(1.0 / kappa);
    let l = -(1.0 - alpha).ln();
    Ok((n as f64 * alpha).sqrt() * kappa * (1.0 - alpha) / (alpha * scale) * l.powf(1.0 + 1.0 / kappa))
}

/// Tail-adversarial coupling bound `2 a_k^κ / Σ a_l^κ`.
pub fn tas_bound_mm_frechet(a: &[f64], kappa: f64, k: usize) -> Result<f64> {
    let sum = coefficient_mass(a, kappa)?;
    Ok(a.get(k).map_or(0.0, |ak| 2.0 * ak.powf(kappa) / sum))
}

/// `(nα)^{-1/2} Σ ψ_{1−α}(γᵢ eᵢ) zᵢ` from the true auxiliary values.
pub fn bahadur_linear_form(e: &[f64], gamma: &[f64], ctx: &DesignContext, alpha: f64) -> Result<DVector<f64>> {
    check_alpha(alpha)?;
    let n = ctx.n();
    for (what, len) in [("auxiliary values", e.len()), ("gamma", gamma.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let p = ctx.p();
    let mut out = DVector::zeros(p);
    for i in 0..n {
        let s = psi_unchecked(gamma[i] * e[i], 1.0 - alpha);
        for (j, zij) in ctx.z_row(i).iter().enumerate() {
            out[j] += s * zij;
        }
    }
    Ok(out / (n as f64 * alpha).sqrt())
}

/// Writes `index,t,y` rows with `t = i/n`.
pub fn write_series_csv(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,t,y")?;
    let n = y.len();
    for (i, v) in y.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, (i + 1) as f64 / n as f64, v)?;
    }
    w.flush()?;
    Ok(())
}
