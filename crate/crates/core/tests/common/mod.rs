#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use pgdebias::debias::SimData;
use pgdebias::synth::{build_augmented_design, sample_response, GroundTruth, SimConfig};

/// Solves the square system m·x = b by Gaussian elimination with partial
/// pivoting; None when a pivot is negligible.
pub fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1.0);
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..k {
            let f = m[row][col] / m[col][col];
            for c in col..k {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

pub fn lasso_objective(a: &Array2<f64>, y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let (n, p) = a.dim();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|j| a[[i, j]] * x[j]).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    0.5 * rss + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Global LASSO minimizer by enumerating every sign pattern in {−1, 0, +1}^p
/// (or {0, +1}^p for the nonnegative problem). Each pattern fixes the
/// stationarity equations on its support; sign-consistent solutions are
/// candidates and the best one is returned.
pub fn lasso_oracle(a: &Array2<f64>, y: &[f64], lambda: f64, nonneg: bool) -> (Vec<f64>, f64) {
    let (n, p) = a.dim();
    let base: usize = if nonneg { 2 } else { 3 };
    let mut best = (vec![0.0; p], lasso_objective(a, y, &vec![0.0; p], lambda));
    for code in 0..base.pow(p as u32) {
        let mut signs = vec![0i32; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = match c % base {
                0 => 0,
                1 => 1,
                _ => -1,
            };
            c /= base;
        }
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        if support.is_empty() {
            continue;
        }
        let k = support.len();
        let m: Vec<Vec<f64>> = (0..k)
            .map(|u| {
                (0..k)
                    .map(|v| {
                        (0..n)
                            .map(|i| a[[i, support[u]]] * a[[i, support[v]]])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = support
            .iter()
            .map(|&j| (0..n).map(|i| a[[i, j]] * y[i]).sum::<f64>() - lambda * signs[j] as f64)
            .collect();
        let Some(xs) = solve_linear(m, b) else {
            continue;
        };
        if support
            .iter()
            .zip(&xs)
            .any(|(&j, &v)| v * signs[j] as f64 <= 0.0)
        {
            continue;
        }
        let mut x = vec![0.0; p];
        for (&j, &v) in support.iter().zip(&xs) {
            x[j] = v;
        }
        let f = lasso_objective(a, y, &x, lambda);
        if f < best.1 {
            best = (x, f);
        }
    }
    best
}

/// A small random LASSO problem: Gaussian design scaled by 1/√n, a sparse
/// signal plus noise, and λ spread across the regularization path.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_n: usize,
    max_p: usize,
) -> (Array2<f64>, Vec<f64>, f64) {
    let n = rng.random_range(2..=max_n);
    let p = rng.random_range(1..=max_p);
    let sn = (n as f64).sqrt();
    let a = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal) / sn);
    let x: Vec<f64> = (0..p)
        .map(|_| {
            if rng.random_bool(0.4) {
                rng.random_range(-3.0..3.0)
            } else {
                0.0
            }
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            (0..p).map(|j| a[[i, j]] * x[j]).sum::<f64>()
                + 0.3 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let lmax = (0..p)
        .map(|j| (0..n).map(|i| a[[i, j]] * y[i]).sum::<f64>().abs())
        .fold(0.0f64, f64::max);
    let lambda = (lmax * rng.random_range(0.02..1.1)).max(1e-3);
    (a, y, lambda)
}

/// One data set with a fixed truth: fresh augmented design and response.
pub fn data_with_truth<R: Rng>(config: &SimConfig, truth: &GroundTruth, rng: &mut R) -> SimData {
    let design = build_augmented_design(config.n, config.p, config.q, config.theta, rng).unwrap();
    let obs = sample_response(&design, truth, config.sigma, rng).unwrap();
    SimData {
        truth: Some(truth.clone()),
        design,
        obs,
        second: None,
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
