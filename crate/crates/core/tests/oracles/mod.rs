//! Independent reference implementations used only by the test suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub fn check_loss(r: f64, tau: f64) -> f64 {
    if r > 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

pub fn loss_at(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, tau: f64) -> f64 {
    (0..x.nrows())
        .map(|i| check_loss(y[i] - (x.row(i) * beta)[0], tau))
        .sum()
}

fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum check loss over every vertex of the LP: all `p`-subsets of rows
/// with a nonsingular square system, solved by LU.
pub fn brute_force_min_loss(x: &DMatrix<f64>, y: &[f64], tau: f64) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    let mut idx: Vec<usize> = (0..p).collect();
    let mut best = f64::INFINITY;
    loop {
        let xh = DMatrix::from_fn(p, p, |a, b| x[(idx[a], b)]);
        let yh = DVector::from_iterator(p, idx.iter().map(|&i| y[i]));
        let lu = xh.clone().lu();
        if lu.determinant().abs() > 1e-10 {
            if let Some(beta) = lu.solve(&yh) {
                best = best.min(loss_at(x, y, &beta, tau));
            }
        }
        if !next_subset(&mut idx, n) {
            break;
        }
    }
    best
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half(k: u32) -> f64 {
    if k % 2 == 0 {
        (1..k / 2).map(f64::from).product()
    } else {
        // Γ(m + 1/2) = (2m)! √π / (4^m m!)
        let m = (k - 1) / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for j in 1..=m {
            v *= (2 * j - 1) as f64 / 2.0;
        }
        v
    }
}

/// χ²_k CDF by composite Simpson quadrature after the substitution `x = u²`,
/// which removes the singularity at zero for `k = 1`.
pub fn chisq_cdf_quadrature(x: f64, k: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let c = 2f64.powf(k as f64 / 2.0) * gamma_half(k);
    let g = |u: f64| 2.0 * u.powi(k as i32 - 1) * (-u * u / 2.0).exp() / c;
    let upper = x.sqrt();
    let m = 20_000;
    let h = upper / m as f64;
    let mut s = g(0.0) + g(upper);
    for i in 1..m {
        s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Sample Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}
