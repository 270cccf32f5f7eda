//! Regularization levels: W, N̂, d̂, the easy level d_easy and the
//! Poisson-Gauss λ. Logarithms are natural throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

/// How the LASSO regularization level is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningRule {
    /// γ·d̂, built from N̂ and W; meant for the Poisson-only model.
    DHat,
    /// γ·d_easy with the hold-out estimate μ̂.
    DEasy,
    /// γ·(d_easy + Gaussian terms).
    LambdaPg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub n_hat: f64,
    pub w: f64,
    pub d_hat: f64,
    pub d_easy: f64,
    pub lambda_pg: f64,
    pub c_q: f64,
    /// Σy was negative and clamped to zero before computing N̂.
    pub n_hat_clamped: bool,
}

/// 1 + √(1/(q(1−q))).
pub fn c_q(q: f64) -> f64 {
    1.0 + (1.0 / (q * (1.0 - q))).sqrt()
}

/// W = max over (u, k) of Σᵢ a_{i,u}·V_{k,i}, where
/// V_{k,l} = ((n·a_{l,k} − Σᵢ a_{i,k}) / (n(n−1)q(1−q)))².
///
/// V_{k,·} takes one value on the ones of column k and another on its zeros,
/// so each (u, k) term only needs |u ∩ k|. Columns u are scanned in order of
/// decreasing count and the scan stops once a count-based upper bound can no
/// longer beat the running maximum.
pub fn compute_w(a: &BinaryMatrix, q: f64) -> Result<f64> {
    let n = a.nrows();
    if n < 2 {
        return Err(Error::invalid("W needs n >= 2"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q={q} must lie in (0, 1)")));
    }
    let p = a.ncols();
    let nf = n as f64;
    let denom = nf * (nf - 1.0) * q * (1.0 - q);
    let counts: Vec<usize> = (0..p).map(|j| a.col_count(j)).collect();
    let mut by_count: Vec<usize> = (0..p).collect();
    by_count.sort_by(|&i, &j| counts[j].cmp(&counts[i]).then(i.cmp(&j)));

    let mut best = 0.0f64;
    for k in 0..p {
        let ck = counts[k] as f64;
        let v1 = ((nf - ck) / denom).powi(2);
        let v0 = (ck / denom).powi(2);
        let gain = v1 - v0;
        for &u in &by_count {
            let cu = counts[u] as f64;
            let bound = cu * v0 + cu.min(ck) * gain.max(0.0);
            if bound <= best {
                break;
            }
            let inter = a.intersection_count(u, k) as f64;
            best = best.max(cu * v0 + inter * gain);
        }
    }
    Ok(best)
}

/// N̂ = (√(1.5 log p) + √(2.5 log p + Σy))² / (nq − √(6nq(1−q) log p) − (1−q) log p).
///
/// Returns the value and whether a negative Σy was clamped to zero.
pub fn compute_n_hat(y_sum: f64, n: usize, p: usize, q: f64) -> Result<(f64, bool)> {
    if !y_sum.is_finite() {
        return Err(Error::invalid("response sum is not finite"));
    }
    let lp = (p as f64).ln();
    let nf = n as f64;
    let den = nf * q - (6.0 * nf * q * (1.0 - q) * lp).sqrt() - (1.0 - q) * lp;
    if !(den > 0.0) {
        return Err(Error::invalid(format!(
            "n too small for N-hat at this (q, p): denominator {den:.4}"
        )));
    }
    let clamped = y_sum < 0.0;
    if clamped {
        log::warn!("negative response sum {y_sum:.4} clamped to 0 for N-hat");
    }
    let s = y_sum.max(0.0);
    let num = ((1.5 * lp).sqrt() + (2.5 * lp + s).sqrt()).powi(2);
    Ok((num / den, clamped))
}

/// d̂ = √(6 N̂ W log p) + log p/((n−1)q(1−q)) + (378 log p/n)(1 + ((1−q)/q)(3 log p/n)) N̂.
pub fn compute_d_hat(n_hat: f64, w: f64, n: usize, p: usize, q: f64) -> Result<f64> {
    if !(n_hat.is_finite() && n_hat >= 0.0 && w.is_finite() && w >= 0.0) {
        return Err(Error::invalid("N-hat and W must be finite and >= 0"));
    }
    let lp = (p as f64).ln();
    let nf = n as f64;
    let first = (6.0 * n_hat * w * lp).sqrt();
    let second = lp / ((nf - 1.0) * q * (1.0 - q));
    let third = (378.0 * lp / nf) * (1.0 + ((1.0 - q) / q) * (3.0 * lp / nf)) * n_hat;
    Ok(first + second + third)
}

/// √(μ̂ log p / (n q (1−q))).
pub fn compute_d_easy(mu_hat: f64, n: usize, p: usize, q: f64) -> Result<f64> {
    if !(mu_hat.is_finite() && mu_hat >= 0.0) {
        return Err(Error::invalid(format!(
            "mu_hat={mu_hat} must be finite and >= 0"
        )));
    }
    let lp = (p as f64).ln();
    Ok((mu_hat * lp / (n as f64 * q * (1.0 - q))).sqrt())
}

/// γ·(d_old + σ√(8 log p/n) + σ√(c_q log p/(q(1−q)n))).
pub fn compute_lambda_pg(
    d_old: f64,
    sigma: f64,
    n: usize,
    p: usize,
    q: f64,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 2.0) {
        return Err(Error::invalid(format!("gamma={gamma} must exceed 2")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma={sigma} must be finite and >= 0"
        )));
    }
    if !(d_old.is_finite() && d_old >= 0.0) {
        return Err(Error::invalid(format!(
            "d_old={d_old} must be finite and >= 0"
        )));
    }
    let lp = (p as f64).ln();
    let nf = n as f64;
    let gauss =
        sigma * (8.0 * lp / nf).sqrt() + sigma * (c_q(q) * lp / (q * (1.0 - q) * nf)).sqrt();
    Ok(gamma * (d_old + gauss))
}

/// Every tuning quantity for one data set.
///
/// `y_sum` feeds N̂ and `mu_hat` feeds d_easy. W is skipped (reported as 0)
/// unless `with_w` is set, since it costs O(p²·n/64).
#[allow(clippy::too_many_arguments)]
pub fn tuning_report(
    a: &BinaryMatrix,
    y_sum: f64,
    mu_hat: f64,
    sigma: f64,
    q: f64,
    gamma: f64,
    with_w: bool,
) -> Result<TuningReport> {
    let (n, p) = (a.nrows(), a.ncols());
    let (n_hat, n_hat_clamped) = compute_n_hat(y_sum, n, p, q)?;
    let w = if with_w { compute_w(a, q)? } else { 0.0 };
    let d_hat = compute_d_hat(n_hat, w, n, p, q)?;
    let d_easy = compute_d_easy(mu_hat, n, p, q)?;
    let lambda_pg = compute_lambda_pg(d_easy, sigma, n, p, q, gamma)?;
    Ok(TuningReport {
        n_hat,
        w,
        d_hat,
        d_easy,
        lambda_pg,
        c_q: c_q(q),
        n_hat_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::synth::sample_design;

    /// Direct evaluation of W over every (u, k, i).
    fn w_oracle(a: &BinaryMatrix, q: f64) -> f64 {
        let (n, p) = (a.nrows(), a.ncols());
        let nf = n as f64;
        let bit = |i, j| if a.get(i, j) { 1.0 } else { 0.0 };
        let v = |k: usize, l: usize| {
            let colsum: f64 = (0..n).map(|i| bit(i, k)).sum();
            ((nf * bit(l, k) - colsum) / (nf * (nf - 1.0) * q * (1.0 - q))).powi(2)
        };
        let mut best = f64::NEG_INFINITY;
        for u in 0..p {
            for k in 0..p {
                let s: f64 = (0..n).map(|i| bit(i, u) * v(k, i)).sum();
                best = best.max(s);
            }
        }
        best
    }

    #[test]
    fn w_zero_design() {
        let a = BinaryMatrix::zeros(5, 3);
        assert_eq!(compute_w(&a, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn w_hand_matrix() {
        let a = BinaryMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]]);
        let w = compute_w(&a, 0.5).unwrap();
        assert!((w - w_oracle(&a, 0.5)).abs() < 1e-15);
        // Column 0 has count 2: V = ((3−2)/1.5)² on its ones, (2/1.5)² on its zero.
        // Best pair (u=1, k=0): rows 1, 2 → (2/1.5)² + (1/1.5)² = 20/9.
        assert!((w - 20.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn w_single_column() {
        let a = BinaryMatrix::from_rows(&[vec![1], vec![0], vec![1], vec![1]]);
        assert!((compute_w(&a, 0.25).unwrap() - w_oracle(&a, 0.25)).abs() < 1e-15);
    }

    #[test]
    fn w_matches_oracle_on_random_designs() {
        for seed in 0..20 {
            let d = sample_design(9 + seed as usize, 7, 0.3, &mut rng_from_seed(seed)).unwrap();
            let fast = compute_w(&d.a_raw, 0.3).unwrap();
            let slow = w_oracle(&d.a_raw, 0.3);
            assert!((fast - slow).abs() <= 1e-14 * slow.max(1.0), "seed {seed}");
        }
        assert!(compute_w(&BinaryMatrix::zeros(1, 2), 0.3).is_err());
    }

    #[test]
    fn n_hat_formula() {
        let (n, p, q, s) = (10_000usize, 100usize, 0.25, 5000.0);
        let lp = (100f64).ln();
        let num = ((1.5 * lp).sqrt() + (2.5 * lp + s).sqrt()).powi(2);
        let den = 2500.0 - (6.0 * 10_000.0 * 0.25 * 0.75 * lp).sqrt() - 0.75 * lp;
        let (v, clamped) = compute_n_hat(s, n, p, q).unwrap();
        assert!(!clamped);
        assert!((v - num / den).abs() <= 1e-14 * v);
        // Reference value evaluated independently in double precision.
        assert!((v - 2.375805204498704).abs() < 1e-12, "{v}");
    }

    #[test]
    fn n_hat_zero_sum_and_clamp() {
        let (n, p, q) = (1000usize, 50usize, 0.25);
        let lp = (50f64).ln();
        let den = 250.0 - (6.0 * 1000.0 * 0.25 * 0.75 * lp).sqrt() - 0.75 * lp;
        let expected = ((1.5 * lp).sqrt() + (2.5 * lp).sqrt()).powi(2) / den;
        let (v, clamped) = compute_n_hat(0.0, n, p, q).unwrap();
        assert!((v - expected).abs() < 1e-14 * expected && !clamped);
        let (v, clamped) = compute_n_hat(-3.0, n, p, q).unwrap();
        assert!((v - expected).abs() < 1e-14 * expected && clamped);
        assert!(compute_n_hat(1.0, 10, 1000, 0.1).is_err());
    }

    #[test]
    fn d_hat_terms() {
        let (n, p, q) = (500usize, 80usize, 0.3);
        let lp = (80f64).ln();
        let base = lp / (499.0 * 0.3 * 0.7);
        assert!((compute_d_hat(0.0, 0.0, n, p, q).unwrap() - base).abs() < 1e-15);
        let (nh, w) = (12.5, 3e-4);
        let third = (378.0 * lp / 500.0) * (1.0 + (0.7 / 0.3) * (3.0 * lp / 500.0)) * nh;
        let expected = (6.0 * nh * w * lp).sqrt() + base + third;
        let got = compute_d_hat(nh, w, n, p, q).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn d_easy_values() {
        assert_eq!(compute_d_easy(0.0, 100, 10, 0.25).unwrap(), 0.0);
        let (n, p, q) = (400usize, 30usize, 0.2);
        let mu = n as f64 * q * (1.0 - q) / (p as f64).ln();
        assert!((compute_d_easy(mu, n, p, q).unwrap() - 1.0).abs() < 1e-14);
        let v = compute_d_easy(100.0, 9808, 20_000, 0.25).unwrap();
        let expected = (100.0 * (20_000f64).ln() / (9808.0 * 0.1875)).sqrt();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.7338431005115189).abs() < 1e-12);
    }

    #[test]
    fn d_easy_monotone() {
        let grid = [1.0, 10.0, 100.0];
        for w in grid.windows(2) {
            assert!(
                compute_d_easy(w[0], 500, 100, 0.25).unwrap()
                    < compute_d_easy(w[1], 500, 100, 0.25).unwrap()
            );
        }
        assert!(
            compute_d_easy(10.0, 500, 100, 0.25).unwrap()
                < compute_d_easy(10.0, 500, 1000, 0.25).unwrap()
        );
        assert!(
            compute_d_easy(10.0, 500, 100, 0.25).unwrap()
                > compute_d_easy(10.0, 1000, 100, 0.25).unwrap()
        );
    }

    #[test]
    fn lambda_pg_values() {
        let (n, p, q) = (1156usize, 2000usize, 0.25);
        assert_eq!(
            compute_lambda_pg(0.7, 0.0, n, p, q, 50.0).unwrap(),
            50.0 * 0.7
        );
        assert_eq!(c_q(0.5), 3.0);
        let lp = (2000f64).ln();
        let half = compute_lambda_pg(0.0, 1.0, n, p, 0.5, 3.0).unwrap();
        let expected = 3.0 * ((8.0 * lp / 1156.0).sqrt() + (12.0 * lp / 1156.0).sqrt());
        assert!((half - expected).abs() < 1e-14);
        assert!(compute_lambda_pg(0.7, 1.0, n, p, q, 2.0).is_err());
    }
}
