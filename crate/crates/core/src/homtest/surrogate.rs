//! Tail-parameter estimates and iid surrogate responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

/// Hill estimate of the tail index from the `k` largest positive values.
pub fn hill_tail_index(y: &[f64], k: usize) -> Result<f64> {
    if k < 5 {
        return Err(Error::InvalidParameter(format!("Hill needs k >= 5, got {k}")));
    }
    let mut pos: Vec<f64> = y.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.len() < k + 1 {
        return Err(Error::InsufficientData {
            what: "Hill estimator (positive order statistics)",
            needed: k + 1,
            found: pos.len(),
        });
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let base = pos[k].ln();
    let mean = pos[..k].iter().map(|v| v.ln() - base).sum::<f64>() / k as f64;
    if !(mean > 0.0) {
        return Err(Error::ZeroSpacing);
    }
    Ok(1.0 / mean)
}

/// Probability-weighted-moment estimates `(ξ̂, σ̂)` of a generalized Pareto
/// distribution fitted to positive exceedances.
pub fn fit_gpd_pwm(exceedances: &[f64]) -> Result<(f64, f64)> {
    let m = exceedances.len();
    if m < 10 {
        return Err(Error::InsufficientData {
            what: "GPD fit (exceedances)",
            needed: 10,
            found: m,
        });
    }
    if exceedances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("exceedances must be positive and finite".into()));
    }
    let mut x = exceedances.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let mf = m as f64;
    let b0 = x.iter().sum::<f64>() / mf;
    let b1 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 - (i as f64 + 1.0 - 0.35) / mf) * v)
        .sum::<f64>()
        / mf;
    let d = b0 - 2.0 * b1;
    if d.abs() <= 1e-14 * b0.abs() {
        return Err(Error::Domain("degenerate probability-weighted moments (b0 = 2 b1)".into()));
    }
    Ok((2.0 - b0 / d, 2.0 * b0 * b1 / d))
}

/// Distribution of the iid surrogate responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SurrogateSpec {
    /// `F(y) = exp(−y^{−κ})`.
    Frechet { kappa: f64 },
    /// `u + σ((U^{−ξ} − 1)/ξ)`, the GPD above threshold `u`.
    Gpd { xi: f64, sigma: f64, threshold: f64 },
    /// Unit exponential.
    Exponential,
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SurrogateSpec::Frechet { kappa } if !(kappa > 0.0) || !kappa.is_finite() => {
                Err(Error::InvalidParameter(format!("Fréchet tail index {kappa} must be positive")))
            }
            SurrogateSpec::Gpd { xi, sigma, threshold }
                if !(sigma > 0.0) || !xi.is_finite() || !sigma.is_finite() || !threshold.is_finite() =>
            {
                Err(Error::InvalidParameter(format!("invalid GPD parameters xi = {xi}, sigma = {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurrogateSpec::Frechet { .. } => "frechet",
            SurrogateSpec::Gpd { .. } => "gpd",
            SurrogateSpec::Exponential => "exponential",
        }
    }

    fn draw(&self, s: &mut RngStream) -> f64 {
        match *self {
            SurrogateSpec::Frechet { kappa } => rng::frechet(s, kappa),
            SurrogateSpec::Exponential => rng::exponential(s),
            SurrogateSpec::Gpd { xi, sigma, threshold } => {
                let u = rng::open_unit(s);
                let z = if xi.abs() < 1e-12 { -u.ln() } else { (u.powf(-xi) - 1.0) / xi };
                threshold + sigma * z
            }
        }
    }
}

/// `n` iid surrogate draws.
pub fn generate_surrogate(n: usize, spec: &SurrogateSpec, stream: &mut RngStream) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..n).map(|_| spec.draw(stream)).collect())
}
