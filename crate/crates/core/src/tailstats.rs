//! Tail scale, exceedance-indicator correlations and tapered long-run
//! covariance blocks.
//!
//! For two quantile levels `k₁, k₂` the long-run covariance block is
//!
//! ```text
//! Γ̂_{k₁k₂} = Σ_{|l| ≤ b} w(l/b) · ρ̂_{k₁k₂}(l) · Υ(l),
//! Υ(l)     = n⁻¹ Σ_{i=1+l₋}^{n−l₊} zᵢ z_{i+l}ᵀ,
//! ```
//!
//! where `ρ̂` is the lagged Pearson correlation of the two exceedance-indicator
//! series and `w` a lag window. The covariance of the coefficient contrast is
//! then assembled by [`phi_matrix`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantreg::{DesignContext, QuantileFit};

/// Minimum sample size for the sparsity estimate.
pub const MIN_SPARSITY_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperKind {
    Bartlett,
    FlatTop,
    Truncated,
}

impl std::str::FromStr for TaperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bartlett" => Ok(Self::Bartlett),
            "flat_top" | "flattop" => Ok(Self::FlatTop),
            "truncated" => Ok(Self::Truncated),
            other => Err(Error::InvalidParameter(format!("unknown taper '{other}'"))),
        }
    }
}

/// Lag window and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperSpec {
    pub kind: TaperKind,
    pub bandwidth: usize,
}

impl TaperSpec {
    /// Flat-top window with bandwidth `⌈n^{1/3}⌉`.
    pub fn default_for(n: usize) -> Self {
        Self {
            kind: TaperKind::FlatTop,
            bandwidth: default_bandwidth(n),
        }
    }

    /// Weight `w(x)`; zero outside `[-1, 1]`.
    pub fn weight(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return 0.0;
        }
        match self.kind {
            TaperKind::Bartlett => 1.0 - ax,
            TaperKind::FlatTop => {
                if ax <= 0.5 {
                    1.0
                } else {
                    2.0 * (1.0 - ax)
                }
            }
            TaperKind::Truncated => 1.0,
        }
    }

    /// Weight attached to lag `l`.
    pub fn lag_weight(&self, l: i64) -> f64 {
        if l == 0 {
            return 1.0;
        }
        if self.bandwidth == 0 {
            return 0.0;
        }
        self.weight(l as f64 / self.bandwidth as f64)
    }
}

pub fn default_bandwidth(n: usize) -> usize {
    let b = (n as f64).cbrt().ceil() as usize;
    // Guard against cbrt rounding up exact cubes.
    if b > 0 && (b - 1).pow(3) >= n {
        b - 1
    } else {
        b
    }
}

/// Default sparsity bandwidth `h = 0.5 n^{-1/3}`.
pub fn default_sparsity_bandwidth(n: usize) -> f64 {
    0.5 * (n as f64).powf(-1.0 / 3.0)
}

/// Inverse empirical distribution function on a sorted sample.
fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let k = ((u * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Difference-quotient estimate of the residual density at zero,
/// `f̂(0) = 2h / (q̂_{τ+h} − q̂_{τ−h})` with `τ = level`.
///
/// The bandwidth defaults to `0.5 n^{-1/3}` and is clipped to
/// `min(τ, 1 − τ)/2` so both evaluation points stay inside the tail.
pub fn sparsity_at_level(residuals: &[f64], level: f64, bandwidth: Option<f64>) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let n = residuals.len();
    if n < MIN_SPARSITY_N {
        return Err(Error::InsufficientData {
            what: "sparsity estimate",
            needed: MIN_SPARSITY_N,
            found: n,
        });
    }
    let h = bandwidth.unwrap_or_else(|| default_sparsity_bandwidth(n));
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("sparsity bandwidth {h} must be positive")));
    }
    let h = h.min(level.min(1.0 - level) / 2.0);
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let spread = empirical_quantile(&sorted, level + h) - empirical_quantile(&sorted, level - h);
    if !(spread > 0.0) {
        return Err(Error::DegenerateSparsity);
    }
    Ok(2.0 * h / spread)
}

/// `τ̂ = (nα)^{1/2} f̂(0) / α`.
pub fn tau_hat(n: usize, alpha: f64, sparsity: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("tail mass {alpha} outside (0, 1)")));
    }
    if !(sparsity > 0.0) || !sparsity.is_finite() {
        return Err(Error::InvalidParameter(format!("sparsity {sparsity} must be positive")));
    }
    Ok((n as f64 * alpha).sqrt() * sparsity / alpha)
}

/// Fills `sparsity` and `tau_hat` of a fit from its residuals.
pub fn annotate_tail_scale(fit: &mut QuantileFit, bandwidth: Option<f64>) -> Result<()> {
    let f0 = sparsity_at_level(&fit.residuals, fit.level, bandwidth)?;
    fit.sparsity = Some(f0);
    fit.tau_hat = Some(tau_hat(fit.residuals.len(), fit.alpha, f0)?);
    Ok(())
}

/// A binary series stored with prefix counts and the positions of its ones,
/// so lagged correlations cost `O(#ones)`.
#[derive(Debug, Clone)]
pub struct IndicatorSeries {
    n: usize,
    ones: Vec<usize>,
    prefix: Vec<u32>,
    bits: Vec<bool>,
}

impl IndicatorSeries {
    pub fn new(bits: &[bool]) -> Self {
        let mut prefix = Vec::with_capacity(bits.len() + 1);
        prefix.push(0u32);
        let mut ones = Vec::new();
        for (i, &b) in bits.iter().enumerate() {
            prefix.push(prefix[i] + b as u32);
            if b {
                ones.push(i);
            }
        }
        Self {
            n: bits.len(),
            ones,
            prefix,
            bits: bits.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn count(&self, lo: usize, hi: usize) -> f64 {
        (self.prefix[hi] - self.prefix[lo]) as f64
    }
}

/// Lagged Pearson correlation of `(I1ᵢ, I2ᵢ₊ₗ)` over the overlapping range.
pub fn cross_correlation(i1: &[bool], i2: &[bool], lag: i64) -> Result<f64> {
    series_cross_correlation(&IndicatorSeries::new(i1), &IndicatorSeries::new(i2), lag)
}

pub fn series_cross_correlation(s1: &IndicatorSeries, s2: &IndicatorSeries, lag: i64) -> Result<f64> {
    let n = s1.len();
    if s2.len() != n {
        return Err(Error::DimensionMismatch {
            what: "indicator series",
            expected: n,
            found: s2.len(),
        });
    }
    let l = lag.unsigned_abs() as usize;
    if l >= n {
        return Err(Error::InvalidParameter(format!("lag {lag} out of range for n = {n}")));
    }
    // Pairs (i, i + lag) for i in [lo1, hi1), i + lag in [lo2, hi2).
    let (lo1, hi1, lo2, hi2) = if lag >= 0 { (0, n - l, l, n) } else { (l, n, 0, n - l) };
    let m = (n - l) as f64;
    let c1 = s1.count(lo1, hi1);
    let c2 = s2.count(lo2, hi2);
    let joint = s1
        .ones
        .iter()
        .filter(|&&i| i >= lo1 && i < hi1)
        .filter(|&&i| s2.bits[(i as i64 + lag) as usize])
        .count() as f64;
    let v1 = m * c1 - c1 * c1;
    let v2 = m * c2 - c2 * c2;
    if v1 <= 0.0 || v2 <= 0.0 {
        return Err(Error::DegenerateIndicator);
    }
    Ok((m * joint - c1 * c2) / (v1 * v2).sqrt())
}

/// `Υ(l) = n⁻¹ Σ_{i=1+l₋}^{n−l₊} zᵢ z_{i+l}ᵀ`.
pub fn upsilon(ctx: &DesignContext, lag: i64) -> Result<DMatrix<f64>> {
    let (n, p) = (ctx.n(), ctx.p());
    let l = lag.unsigned_abs() as usize;
    if l >= n {
        return Err(Error::InvalidParameter(format!("lag {lag} out of range for n = {n}")));
    }
    let z = ctx.z_rows();
    let mut out = DMatrix::zeros(p, p);
    let (start, end) = if lag >= 0 { (0, n - l) } else { (l, n) };
    for i in start..end {
        let zi = &z[i * p..(i + 1) * p];
        let j = (i as i64 + lag) as usize;
        let zj = &z[j * p..(j + 1) * p];
        for a in 0..p {
            for b in 0..p {
                out[(a, b)] += zi[a] * zj[b];
            }
        }
    }
    Ok(out / n as f64)
}

/// `Υ(l)` for every lag in `-b..=b`, computed once per design.
#[derive(Debug, Clone)]
pub struct UpsilonTable {
    bandwidth: usize,
    mats: Vec<DMatrix<f64>>,
}

impl UpsilonTable {
    pub fn new(ctx: &DesignContext, bandwidth: usize) -> Result<Self> {
        if bandwidth >= ctx.n() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth {bandwidth} must be below n = {}",
                ctx.n()
            )));
        }
        let b = bandwidth as i64;
        let mats = (-b..=b).map(|l| upsilon(ctx, l)).collect::<Result<_>>()?;
        Ok(Self { bandwidth, mats })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, lag: i64) -> &DMatrix<f64> {
        &self.mats[(lag + self.bandwidth as i64) as usize]
    }
}

/// `Σ_{|l| ≤ b} w(l/b) ρ̂_{k₁k₂}(l) Υ(l)`.
pub fn tapered_gamma(i1: &[bool], i2: &[bool], ctx: &DesignContext, taper: &TaperSpec) -> Result<DMatrix<f64>> {
    let table = UpsilonTable::new(ctx, taper.bandwidth)?;
    tapered_gamma_with(&IndicatorSeries::new(i1), &IndicatorSeries::new(i2), &table, taper)
}

pub fn tapered_gamma_with(
    s1: &IndicatorSeries,
    s2: &IndicatorSeries,
    table: &UpsilonTable,
    taper: &TaperSpec,
) -> Result<DMatrix<f64>> {
    if table.bandwidth() != taper.bandwidth {
        return Err(Error::InvalidParameter("upsilon table built for another bandwidth".into()));
    }
    let b = taper.bandwidth as i64;
    let p = table.get(0).nrows();
    let mut out = DMatrix::zeros(p, p);
    for l in -b..=b {
        let w = taper.lag_weight(l);
        if w == 0.0 {
            continue;
        }
        let rho = series_cross_correlation(s1, s2, l)?;
        out += table.get(l) * (w * rho);
    }
    Ok(out)
}

/// The four long-run covariance blocks for a pair of levels.
#[derive(Debug, Clone)]
pub struct LongRunCovPair {
    pub gamma_11: DMatrix<f64>,
    pub gamma_12: DMatrix<f64>,
    pub gamma_21: DMatrix<f64>,
    pub gamma_22: DMatrix<f64>,
    pub taper: TaperSpec,
    /// `(α₁, α₂)`.
    pub levels: (f64, f64),
}

impl LongRunCovPair {
    pub fn estimate(
        i1: &IndicatorSeries,
        i2: &IndicatorSeries,
        table: &UpsilonTable,
        taper: &TaperSpec,
        levels: (f64, f64),
    ) -> Result<Self> {
        let gamma_11 = tapered_gamma_with(i1, i1, table, taper)?;
        let gamma_12 = tapered_gamma_with(i1, i2, table, taper)?;
        let gamma_22 = tapered_gamma_with(i2, i2, table, taper)?;
        let gamma_21 = gamma_12.transpose();
        Ok(Self {
            gamma_11: (&gamma_11 + gamma_11.transpose()) * 0.5,
            gamma_12,
            gamma_21,
            gamma_22: (&gamma_22 + gamma_22.transpose()) * 0.5,
            taper: *taper,
            levels,
        })
    }

    pub fn from_fits(fit1: &QuantileFit, fit2: &QuantileFit, ctx: &DesignContext, taper: &TaperSpec) -> Result<Self> {
        let table = UpsilonTable::new(ctx, taper.bandwidth)?;
        Self::estimate(
            &IndicatorSeries::new(&fit1.indicators),
            &IndicatorSeries::new(&fit2.indicators),
            &table,
            taper,
            (fit1.alpha, fit2.alpha),
        )
    }
}

/// `(p − 1) × p` contrast `[0 | I]` that drops the intercept.
pub fn contrast_matrix(p: usize) -> Result<DMatrix<f64>> {
    if p < 2 {
        return Err(Error::NothingToTest);
    }
    Ok(DMatrix::from_fn(p - 1, p, |i, j| if j == i + 1 { 1.0 } else { 0.0 }))
}

/// `Φ = A Σₙ^{-1/2} {τ̂₁⁻² Γ̂₁₁ − τ̂₁⁻¹τ̂₂⁻¹(Γ̂₁₂ + Γ̂₂₁) + τ̂₂⁻² Γ̂₂₂} Σₙ^{-1/2} Aᵀ`.
///
/// No symmetrization is applied; consumers work with `Φ + Φᵀ`.
pub fn phi_matrix(
    a: &DMatrix<f64>,
    ctx: &DesignContext,
    tau1: f64,
    tau2: f64,
    cov: &LongRunCovPair,
) -> Result<DMatrix<f64>> {
    phi_matrix_weighted(a, ctx, tau1, tau2, cov, None)
}

/// [`phi_matrix`] with each block replaced by `Σ̃⁻¹ Γ̂ Σ̃⁻¹` when a
/// heteroskedasticity-weighted Gram matrix inverse is supplied.
pub fn phi_matrix_weighted(
    a: &DMatrix<f64>,
    ctx: &DesignContext,
    tau1: f64,
    tau2: f64,
    cov: &LongRunCovPair,
    sigma_tilde_inv: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let p = ctx.p();
    if a.ncols() != p {
        return Err(Error::DimensionMismatch {
            what: "contrast columns",
            expected: p,
            found: a.ncols(),
        });
    }
    if !(tau1 > 0.0 && tau2 > 0.0) {
        return Err(Error::InvalidParameter("tail scales must be positive".into()));
    }
    let cross = &cov.gamma_12 + &cov.gamma_21;
    let mut inner = &cov.gamma_11 / (tau1 * tau1) - cross / (tau1 * tau2) + &cov.gamma_22 / (tau2 * tau2);
    if let Some(st) = sigma_tilde_inv {
        inner = st * inner * st;
    }
    let s = ctx.sigma_inv_sqrt();
    Ok(a * s * inner * s * a.transpose())
}

/// `n⁻¹ Σ γᵢ⁻¹ zᵢ zᵢᵀ` with weights normalized to mean one.
pub fn weighted_gram(ctx: &DesignContext, gamma: &[f64]) -> Result<DMatrix<f64>> {
    let gamma = normalize_weights(gamma, ctx.n())?;
    let p = ctx.p();
    let mut out = DMatrix::zeros(p, p);
    for (i, g) in gamma.iter().enumerate() {
        let zi = ctx.z_row(i);
        for a in 0..p {
            for b in 0..p {
                out[(a, b)] += zi[a] * zi[b] / g;
            }
        }
    }
    Ok(out / ctx.n() as f64)
}

/// Rescales positive weights to mean one.
pub fn normalize_weights(gamma: &[f64], n: usize) -> Result<Vec<f64>> {
    if gamma.len() != n {
        return Err(Error::DimensionMismatch {
            what: "heteroskedasticity weights",
            expected: n,
            found: gamma.len(),
        });
    }
    if gamma.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter("weights must be positive and finite".into()));
    }
    let mean = gamma.iter().sum::<f64>() / n as f64;
    Ok(gamma.iter().map(|g| g / mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::rng;

    #[test]
    fn taper_shapes() {
        for kind in [TaperKind::Bartlett, TaperKind::FlatTop, TaperKind::Truncated] {
            let t = TaperSpec { kind, bandwidth: 10 };
            assert_eq!(t.weight(0.0), 1.0);
            assert_eq!(t.weight(1.5), 0.0);
            assert_eq!(t.weight(-0.3), t.weight(0.3));
            if kind != TaperKind::Truncated {
                let mut prev = 1.0;
                for k in 0..=100 {
                    let w = t.weight(k as f64 / 100.0);
                    assert!(w <= prev + 1e-15);
                    prev = w;
                }
            }
        }
        let ft = TaperSpec::default_for(1000);
        assert_eq!(ft.bandwidth, 10);
        assert_eq!(ft.weight(0.75), 0.5);
        assert_eq!(default_bandwidth(100_000), 47);
    }

    #[test]
    fn tau_hat_examples() {
        assert!((tau_hat(100, 0.25, 0.25).unwrap() - 5.0).abs() < 1e-12);
        assert!(tau_hat(100, 0.25, 0.0).is_err());
        assert!(tau_hat(100, 0.0, 1.0).is_err());
    }

    #[test]
    fn sparsity_on_uniform_and_exponential() {
        let mut r = rng::stream(11, 0);
        let n = 100_000;
        let u: Vec<f64> = (0..n).map(|_| rng::open_unit(&mut r) - 0.9).collect();
        let f = sparsity_at_level(&u, 0.9, None).unwrap();
        assert!((f - 1.0).abs() < 0.05, "{f}");

        let q = -(0.05f64).ln();
        let e: Vec<f64> = (0..n).map(|_| rng::exponential(&mut r) - q).collect();
        let f = sparsity_at_level(&e, 0.95, None).unwrap();
        assert!((f - 0.05).abs() < 0.005, "{f}");
    }

    #[test]
    fn sparsity_errors() {
        assert!(matches!(sparsity_at_level(&[1.0; 50], 0.9, None), Err(Error::DegenerateSparsity)));
        assert!(matches!(
            sparsity_at_level(&[1.0; 10], 0.9, None),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn correlation_basics() {
        let bits: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        assert!((cross_correlation(&bits, &bits, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            cross_correlation(&[false; 20], &bits[..20], 0),
            Err(Error::DegenerateIndicator)
        ));
        let mut r = rng::stream(5, 0);
        let a: Vec<bool> = (0..100_000).map(|_| rng::open_unit(&mut r) < 0.05).collect();
        let b: Vec<bool> = (0..100_000).map(|_| rng::open_unit(&mut r) < 0.05).collect();
        assert!(cross_correlation(&a, &b, 1).unwrap().abs() < 0.02);
    }

    #[test]
    fn correlation_lag_symmetry_and_brute_force() {
        let mut r = rng::stream(9, 3);
        let a: Vec<bool> = (0..300).map(|_| rng::open_unit(&mut r) < 0.2).collect();
        let b: Vec<bool> = (0..300).map(|_| rng::open_unit(&mut r) < 0.1).collect();
        for l in -4i64..=4 {
            let fwd = cross_correlation(&a, &b, l).unwrap();
            let rev = cross_correlation(&b, &a, -l).unwrap();
            assert!((fwd - rev).abs() < 1e-14);
            // Textbook Pearson on the explicit pairs.
            let pairs: Vec<(f64, f64)> = (0..300i64)
                .filter(|i| i + l >= 0 && i + l < 300)
                .map(|i| (a[i as usize] as u8 as f64, b[(i + l) as usize] as u8 as f64))
                .collect();
            let m = pairs.len() as f64;
            let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
            let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
            let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
            assert!((fwd - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn upsilon_examples() {
        let ctx = DesignContext::polynomial(40, 3).unwrap();
        assert!(max_abs_diff(&upsilon(&ctx, 0).unwrap(), &DMatrix::identity(3, 3)) < 1e-10);
        for l in 1..4 {
            let fwd = upsilon(&ctx, l).unwrap();
            let back = upsilon(&ctx, -l).unwrap();
            assert!(max_abs_diff(&fwd.transpose(), &back) < 1e-14);
        }
        let ones = DesignContext::new(DMatrix::from_element(10, 1, 1.0)).unwrap();
        assert!((upsilon(&ones, 1).unwrap()[(0, 0)] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn tapered_gamma_examples() {
        let ctx = DesignContext::polynomial(60, 2).unwrap();
        let a: Vec<bool> = (0..60).map(|i| i % 7 == 0 || i % 5 == 1).collect();
        let b: Vec<bool> = (0..60).map(|i| i % 4 == 0).collect();
        let t0 = TaperSpec {
            kind: TaperKind::FlatTop,
            bandwidth: 0,
        };
        let g = tapered_gamma(&a, &b, &ctx, &t0).unwrap();
        let rho0 = cross_correlation(&a, &b, 0).unwrap();
        assert!(max_abs_diff(&g, &(DMatrix::identity(2, 2) * rho0)) < 1e-10);

        let t = TaperSpec {
            kind: TaperKind::Bartlett,
            bandwidth: 4,
        };
        let gab = tapered_gamma(&a, &b, &ctx, &t).unwrap();
        let gba = tapered_gamma(&b, &a, &ctx, &t).unwrap();
        assert!(max_abs_diff(&gab.transpose(), &gba) < 1e-12);
    }

    #[test]
    fn tapered_gamma_iid_is_near_identity() {
        let n = 100_000;
        let ctx = DesignContext::polynomial(n, 2).unwrap();
        let mut r = rng::stream(21, 0);
        let a: Vec<bool> = (0..n).map(|_| rng::open_unit(&mut r) < 0.05).collect();
        let t = TaperSpec::default_for(n);
        let g = tapered_gamma(&a, &a, &ctx, &t).unwrap();
        assert!(max_abs_diff(&g, &DMatrix::identity(2, 2)) < 0.05, "{g}");
    }

    fn pair(g11: DMatrix<f64>, g12: DMatrix<f64>, g22: DMatrix<f64>) -> LongRunCovPair {
        LongRunCovPair {
            gamma_21: g12.transpose(),
            gamma_11: g11,
            gamma_12: g12,
            gamma_22: g22,
            taper: TaperSpec::default_for(10),
            levels: (0.05, 0.01),
        }
    }

    #[test]
    fn phi_examples() {
        let ctx = DesignContext::polynomial(30, 3).unwrap();
        let a = contrast_matrix(3).unwrap();
        let id = DMatrix::identity(3, 3);
        let phi = phi_matrix(&a, &ctx, 1.0, 1.0, &pair(id.clone(), id.clone(), id.clone())).unwrap();
        assert!(phi.amax() < 1e-10);

        let phi = phi_matrix(&a, &ctx, 1.0, 1.0, &pair(id.clone(), DMatrix::zeros(3, 3), id.clone())).unwrap();
        let sigma_inv = ctx.sigma().clone().try_inverse().unwrap();
        let expect = &a * sigma_inv * a.transpose() * 2.0;
        assert!(max_abs_diff(&phi, &expect) < 1e-8 * expect.amax());

        // Identity design: diagonal blocks give a diagonal Φ.
        let ctx = DesignContext::new(DMatrix::identity(2, 2) * 2f64.sqrt()).unwrap();
        let g11 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let g12 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, 0.4]));
        let g22 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.5, 0.5]));
        let (t1, t2) = (2.0, 0.5);
        let phi = phi_matrix(&DMatrix::identity(2, 2), &ctx, t1, t2, &pair(g11, g12, g22)).unwrap();
        let e0 = 1.0 / 4.0 - 2.0 * 0.3 + 1.5 * 4.0;
        let e1 = 2.0 / 4.0 - 2.0 * 0.4 + 0.5 * 4.0;
        assert!((phi[(0, 0)] - e0).abs() < 1e-12);
        assert!((phi[(1, 1)] - e1).abs() < 1e-12);
        assert!(phi[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn phi_is_invariant_under_level_relabeling() {
        let ctx = DesignContext::polynomial(30, 3).unwrap();
        let a = contrast_matrix(3).unwrap();
        let g11 = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.1 });
        let g22 = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -0.2 });
        let g12 = DMatrix::from_fn(3, 3, |i, j| 0.05 * (i as f64 + 2.0 * j as f64));
        let fwd = phi_matrix(&a, &ctx, 3.0, 1.5, &pair(g11.clone(), g12.clone(), g22.clone())).unwrap();
        let swapped = phi_matrix(&a, &ctx, 1.5, 3.0, &pair(g22, g12.transpose(), g11)).unwrap();
        assert!(max_abs_diff(&fwd, &swapped.transpose()) < 1e-12);
    }

    #[test]
    fn contrast_examples() {
        let a = contrast_matrix(3).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        assert_eq!(contrast_matrix(2).unwrap(), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert!(matches!(contrast_matrix(1), Err(Error::NothingToTest)));
    }
}
