//! Check-loss quantile regression and design rescaling.
//!
//! The estimator minimizes `Σ ρ_τ(yᵢ − xᵢᵀβ)` exactly. The solver walks
//! between vertices of the equivalent linear program: a basis is a set of `p`
//! observations fitted with zero residual, a move releases one basis point in
//! the direction that lowers the loss, and an exact weighted-median line search
//! picks the observation that enters. Every move strictly decreases the loss,
//! so the walk terminates at an exact vertex minimizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

fn check_level(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(tau))
    }
}

/// `ρ_τ(u) = τ u⁺ + (1 − τ)(−u)⁺`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(rho(u, tau))
}

#[inline]
fn rho(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Left derivative of the check loss, `ψ_τ(u) = τ − 1{u ≤ 0}`.
pub fn psi(u: f64, tau: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(psi_unchecked(u, tau))
}

#[inline]
pub(crate) fn psi_unchecked(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// Total check loss of a residual vector.
pub fn total_check_loss(residuals: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    Ok(residuals.iter().map(|&r| rho(r, tau)).sum())
}

/// The design matrix together with its Gram matrix `Σₙ = n⁻¹ Σ xᵢxᵢᵀ` and the
/// rescaled rows `zᵢ = Σₙ^{-1/2} xᵢ`.
#[derive(Debug, Clone)]
pub struct DesignContext {
    x: DMatrix<f64>,
    sigma: DMatrix<f64>,
    sigma_inv_sqrt: DMatrix<f64>,
    z: DMatrix<f64>,
    r_n: f64,
    x_rows: Vec<f64>,
    z_rows: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = m.shape();
    let mut out = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl DesignContext {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidParameter("design has no columns".into()));
        }
        if n < p {
            return Err(Error::InsufficientData {
                what: "design rows",
                needed: p,
                found: n,
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("design contains non-finite entries".into()));
        }
        let sigma = x.transpose() * &x / n as f64;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let sigma_inv_sqrt = match linalg::sym_inv_sqrt(&sigma) {
            Ok(s) => s,
            Err(Error::NotPositiveDefinite { min_eig, max_eig }) => {
                return Err(Error::SingularDesign { min_eig, max_eig })
            }
            Err(e) => return Err(e),
        };
        let z = &x * &sigma_inv_sqrt;
        let r_n = z
            .row_iter()
            .map(|row| row.norm())
            .fold(0.0, f64::max);
        let x_rows = row_major(&x);
        let z_rows = row_major(&z);
        Ok(Self {
            x,
            sigma,
            sigma_inv_sqrt,
            z,
            r_n,
            x_rows,
            z_rows,
        })
    }

    /// Polynomial trend design with columns `tᵢ^{j−1}`, `tᵢ = i/n`.
    pub fn polynomial(n: usize, p: usize) -> Result<Self> {
        Self::new(polynomial_design(n, p))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.sigma_inv_sqrt
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn r_n(&self) -> f64 {
        self.r_n
    }

    /// Row `i` of `X` as a slice.
    pub fn x_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x_rows[i * p..(i + 1) * p]
    }

    /// Row `i` of `Z` as a slice.
    pub fn z_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.z_rows[i * p..(i + 1) * p]
    }

    pub(crate) fn z_rows(&self) -> &[f64] {
        &self.z_rows
    }
}

pub fn design_context(x: DMatrix<f64>) -> Result<DesignContext> {
    DesignContext::new(x)
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::sym_inv_sqrt(m)
}

/// `n × p` matrix with entries `(i/n)^{j}` for `j = 0..p`.
pub fn polynomial_design(n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |i, j| ((i + 1) as f64 / n as f64).powi(j as i32))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative tolerance on directional derivatives at termination.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

/// A fitted quantile regression at level `1 − α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileFit {
    pub level: f64,
    pub alpha: f64,
    pub beta_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `1{residual > 0}`.
    pub indicators: Vec<bool>,
    /// `f̂(0)`, filled by [`crate::tailstats::annotate_tail_scale`].
    pub sparsity: Option<f64>,
    /// `τ̂`, filled by [`crate::tailstats::annotate_tail_scale`].
    pub tau_hat: Option<f64>,
    pub loss: f64,
    pub iterations: usize,
    /// Indices of the observations interpolated by the vertex solution.
    pub basis: Vec<usize>,
}

impl QuantileFit {
    pub fn exceedance_rate(&self) -> f64 {
        self.indicators.iter().filter(|&&b| b).count() as f64 / self.indicators.len() as f64
    }
}

pub fn fit_quantile_regression(
    ctx: &DesignContext,
    y: &[f64],
    level: f64,
    cfg: &SolverConfig,
) -> Result<QuantileFit> {
    check_level(level)?;
    let (n, p) = (ctx.n(), ctx.p());
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response",
            expected: n,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("response contains non-finite values".into()));
    }
    let sol = solve_vertex(&ctx.x_rows, n, p, y, level, cfg)?;
    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            if sol.basis.contains(&i) {
                0.0
            } else {
                y[i] - dot(ctx.x_row(i), &sol.beta)
            }
        })
        .collect();
    let loss = residuals.iter().map(|&r| rho(r, level)).sum();
    let indicators = residuals.iter().map(|&r| r > 0.0).collect();
    Ok(QuantileFit {
        level,
        alpha: 1.0 - level,
        beta_hat: sol.beta,
        residuals,
        indicators,
        sparsity: None,
        tau_hat: None,
        loss,
        iterations: sol.iterations,
        basis: sol.basis,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct VertexSolution {
    beta: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

/// Picks `p` linearly independent rows in the order given by `order`.
fn greedy_basis(x: &[f64], p: usize, order: impl Iterator<Item = usize>) -> Option<Vec<usize>> {
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let row = &x[i * p..(i + 1) * p];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for q in &ortho {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let rem = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if rem > 1e-8 * norm {
            v.iter_mut().for_each(|a| *a /= rem);
            ortho.push(v);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

/// Starting vertex near the least-squares fit shifted to the τ-quantile.
fn initial_basis(x: &[f64], n: usize, p: usize, y: &[f64], tau: f64) -> Option<Vec<usize>> {
    let xm = DMatrix::from_row_slice(n, p, x);
    let xtx = xm.transpose() * &xm;
    let xty = xm.transpose() * DVector::from_column_slice(y);
    let ls = xtx.lu().solve(&xty);
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(beta) = ls {
        let r: Vec<f64> = (0..n).map(|i| y[i] - dot(&x[i * p..(i + 1) * p], beta.as_slice())).collect();
        let mut sorted = r.clone();
        let k = ((tau * n as f64).ceil() as usize).clamp(1, n) - 1;
        let (_, q, _) = sorted.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
        let q = *q;
        order.sort_by(|&a, &b| (r[a] - q).abs().total_cmp(&(r[b] - q).abs()).then(a.cmp(&b)));
    }
    greedy_basis(x, p, order.into_iter())
}

/// Smallest kink `t` at which the cumulative weight reaches `target`.
fn weighted_select(items: &mut [(f64, f64, usize)], mut target: f64) -> Option<(f64, usize)> {
    let mut lo = 0;
    let mut hi = items.len();
    let mut fallback = None;
    while lo < hi {
        let slice = &mut items[lo..hi];
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let left: f64 = slice[..mid].iter().map(|it| it.1).sum();
        let (t_mid, w_mid, i_mid) = slice[mid];
        if left >= target && mid > 0 {
            hi = lo + mid;
        } else if left + w_mid >= target {
            return Some((t_mid, i_mid));
        } else {
            target -= left + w_mid;
            fallback = Some((t_mid, i_mid));
            lo += mid + 1;
        }
    }
    fallback
}

fn solve_vertex(
    x: &[f64],
    n: usize,
    p: usize,
    y: &[f64],
    tau: f64,
    cfg: &SolverConfig,
) -> Result<VertexSolution> {
    let mut basis = initial_basis(x, n, p, y, tau).ok_or(Error::SingularDesign {
        min_eig: 0.0,
        max_eig: 0.0,
    })?;
    let y_scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ztol = 1e-10 * y_scale;

    let mut in_basis = vec![false; n];
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n * p];
    let mut items: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    let mut beta = vec![0.0; p];
    let mut last_loss = f64::INFINITY;

    for iteration in 0..=cfg.max_iterations {
        let xb = DMatrix::from_fn(p, p, |a, b| x[basis[a] * p + b]);
        let binv = xb.try_inverse().ok_or(Error::SingularDesign {
            min_eig: 0.0,
            max_eig: 0.0,
        })?;
        for (k, b) in beta.iter_mut().enumerate() {
            *b = (0..p).map(|j| binv[(k, j)] * y[basis[j]]).sum();
        }
        in_basis.iter_mut().for_each(|v| *v = false);
        for &b in &basis {
            in_basis[b] = true;
        }
        let mut loss = 0.0;
        for i in 0..n {
            let xi = &x[i * p..(i + 1) * p];
            r[i] = if in_basis[i] { 0.0 } else { y[i] - dot(xi, &beta) };
            loss += rho(r[i], tau);
            let wi = &mut w[i * p..(i + 1) * p];
            for (j, wij) in wi.iter_mut().enumerate() {
                *wij = (0..p).map(|k| xi[k] * binv[(k, j)]).sum();
            }
        }
        if iteration == cfg.max_iterations {
            return Err(Error::Convergence {
                iterations: iteration,
                loss,
                best: beta,
            });
        }
        // Guard against numerical stalls: a genuine move always lowers the loss.
        if loss > last_loss + 1e-12 * (1.0 + last_loss.abs()) {
            return Err(Error::Convergence {
                iterations: iteration,
                loss,
                best: beta,
            });
        }
        last_loss = loss;

        let mut g = vec![0.0; p];
        let mut zpos = vec![0.0; p];
        let mut zneg = vec![0.0; p];
        let mut wabs = vec![0.0; p];
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            let wi = &w[i * p..(i + 1) * p];
            if r[i].abs() <= ztol {
                for j in 0..p {
                    zpos[j] += wi[j].max(0.0);
                    zneg[j] += (-wi[j]).max(0.0);
                    wabs[j] += wi[j].abs();
                }
            } else {
                let s = if r[i] > 0.0 { tau } else { tau - 1.0 };
                for j in 0..p {
                    g[j] += s * wi[j];
                    wabs[j] += wi[j].abs();
                }
            }
        }

        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..p {
            let col_norm = (0..p).map(|k| binv[(k, j)].powi(2)).sum::<f64>().sqrt();
            let tol = cfg.tolerance * (1.0 + wabs[j]);
            let d_plus = -g[j] + (1.0 - tau) * (1.0 + zpos[j]) + tau * zneg[j];
            let d_minus = g[j] + tau * (1.0 + zpos[j]) + (1.0 - tau) * zneg[j];
            for (sigma, d) in [(1.0, d_plus), (-1.0, d_minus)] {
                if d < -tol {
                    let score = d / col_norm;
                    if best.map_or(true, |(_, _, s)| score < s) {
                        best = Some((j, sigma, score));
                    }
                }
            }
        }
        let Some((j, sigma, _)) = best else {
            return Ok(VertexSolution {
                beta,
                basis,
                iterations: iteration,
            });
        };
        let slope0 = if sigma > 0.0 {
            -g[j] + (1.0 - tau) * (1.0 + zpos[j]) + tau * zneg[j]
        } else {
            g[j] + tau * (1.0 + zpos[j]) + (1.0 - tau) * zneg[j]
        };

        items.clear();
        for i in 0..n {
            if in_basis[i] || r[i].abs() <= ztol {
                continue;
            }
            let c = sigma * w[i * p + j];
            if c == 0.0 {
                continue;
            }
            let t = r[i] / c;
            if t > 0.0 {
                items.push((t, c.abs(), i));
            }
        }
        let Some((_, entering)) = weighted_select(&mut items, -slope0) else {
            return Err(Error::Convergence {
                iterations: iteration,
                loss,
                best: beta,
            });
        };
        basis[j] = entering;
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> DesignContext {
        DesignContext::new(DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    #[test]
    fn check_loss_examples() {
        assert!((check_loss(1.0, 0.95).unwrap() - 0.95).abs() < 1e-15);
        assert!((check_loss(-1.0, 0.95).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(check_loss(0.0, 0.5).unwrap(), 0.0);
        assert!(matches!(check_loss(1.0, 1.0), Err(Error::InvalidLevel(_))));
        assert!(check_loss(1.0, 0.0).is_err());
    }

    #[test]
    fn psi_examples() {
        assert!((psi(1.0, 0.95).unwrap() - 0.95).abs() < 1e-15);
        assert!((psi(0.0, 0.95).unwrap() + 0.05).abs() < 1e-15);
        assert!((psi(-3.0, 0.5).unwrap() + 0.5).abs() < 1e-15);
        assert!(psi(0.0, -0.1).is_err());
    }

    #[test]
    fn design_context_intercept_only() {
        let ctx = intercept(7);
        assert_eq!(ctx.sigma()[(0, 0)], 1.0);
        assert!(ctx.z().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((ctx.r_n() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn design_context_two_by_two_identity() {
        let ctx = DesignContext::new(DMatrix::identity(2, 2)).unwrap();
        assert!(linalg::max_abs_diff(ctx.sigma(), &(DMatrix::identity(2, 2) * 0.5)) < 1e-15);
        let expect = DMatrix::identity(2, 2) * 2f64.sqrt();
        assert!(linalg::max_abs_diff(ctx.sigma_inv_sqrt(), &expect) < 1e-12);
    }

    #[test]
    fn design_context_rejects_duplicate_columns() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64 + 1.0);
        assert!(matches!(DesignContext::new(x), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn rescaled_rows_are_orthonormal() {
        let ctx = DesignContext::polynomial(200, 4).unwrap();
        let gram = ctx.z().transpose() * ctx.z() / 200.0;
        assert!(linalg::max_abs_diff(&gram, &DMatrix::identity(4, 4)) < 1e-8);
        let s = ctx.sigma_inv_sqrt();
        assert!(linalg::max_asymmetry(s) < 1e-12);
        assert!(linalg::max_abs_diff(&(s * ctx.sigma() * s), &DMatrix::identity(4, 4)) < 1e-8);
    }

    #[test]
    fn median_of_three() {
        let fit = fit_quantile_regression(&intercept(3), &[1.0, 2.0, 3.0], 0.5, &SolverConfig::default())
            .unwrap();
        assert!((fit.beta_hat[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ninetieth_percentile_of_one_to_ten() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let fit = fit_quantile_regression(&intercept(10), &y, 0.9, &SolverConfig::default()).unwrap();
        assert!(fit.beta_hat[0] >= 9.0 - 1e-12 && fit.beta_hat[0] <= 10.0 + 1e-12);
        // Brute-force grid minimization of the check loss.
        let grid_best = (0..=10_000)
            .map(|k| k as f64 * 0.001)
            .map(|b| (b, y.iter().map(|v| rho(v - b, 0.9)).sum::<f64>()))
            .fold((0.0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        assert!((fit.loss - grid_best.1).abs() < 1e-9);
        assert_eq!(fit.beta_hat[0], 9.0);
    }

    #[test]
    fn interpolating_line_is_recovered() {
        let n = 25;
        let ctx = DesignContext::polynomial(n, 2).unwrap();
        let y: Vec<f64> = (1..=n).map(|i| 1.0 + 2.0 * i as f64 / n as f64).collect();
        for tau in [0.1, 0.5, 0.95] {
            let fit = fit_quantile_regression(&ctx, &y, tau, &SolverConfig::default()).unwrap();
            assert!((fit.beta_hat[0] - 1.0).abs() < 1e-9);
            assert!((fit.beta_hat[1] - 2.0).abs() < 1e-9);
            assert!(fit.loss < 1e-9);
        }
    }

    #[test]
    fn constant_response_gives_zero_loss() {
        let fit = fit_quantile_regression(&intercept(9), &[4.0; 9], 0.95, &SolverConfig::default()).unwrap();
        assert_eq!(fit.beta_hat[0], 4.0);
        assert_eq!(fit.loss, 0.0);
    }

    #[test]
    fn response_length_is_checked() {
        let err = fit_quantile_regression(&intercept(4), &[1.0, 2.0], 0.5, &SolverConfig::default());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let ctx = DesignContext::polynomial(50, 3).unwrap();
        let y: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let cfg = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        match fit_quantile_regression(&ctx, &y, 0.9, &cfg) {
            Err(Error::Convergence { best, .. }) => assert_eq!(best.len(), 3),
            Ok(fit) => assert_eq!(fit.iterations, 0),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn weighted_select_finds_the_weighted_quantile() {
        let mut items = vec![(3.0, 1.0, 3), (1.0, 1.0, 1), (2.0, 1.0, 2), (4.0, 1.0, 4)];
        assert_eq!(weighted_select(&mut items, 2.5).unwrap().1, 3);
        let mut items = vec![(3.0, 1.0, 3), (1.0, 5.0, 1), (2.0, 1.0, 2)];
        assert_eq!(weighted_select(&mut items, 2.0).unwrap().1, 1);
        let mut items = vec![(3.0, 1.0, 3), (1.0, 0.5, 1), (2.0, 1.0, 2)];
        assert_eq!(weighted_select(&mut items, 1.5).unwrap().1, 2);
    }
}
