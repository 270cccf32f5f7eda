//! Estimates of ‖x*‖₁, of the response variance ‖x*‖₁ + σ², and of their
//! ratio ν = σ²/‖x*‖₁, from the responses on all-ones rows.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MedianOfMeans,
    EmpiricalMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimates {
    pub mu_hat: f64,
    pub v_hat: f64,
    /// v_hat/mu_hat − 1, unclamped; NaN when mu_hat = 0.
    pub nu_hat: f64,
    pub holdout_count: usize,
    pub method: Method,
    /// The raw μ estimate was negative and set to zero.
    pub mu_clamped: bool,
}

impl ScalarEstimates {
    /// ν̂ clamped at zero, for use in interval widths.
    pub fn nu_for_intervals(&self) -> f64 {
        if self.nu_hat.is_finite() {
            self.nu_hat.max(0.0)
        } else {
            0.0
        }
    }
}

/// Means of `k` contiguous blocks whose sizes differ by at most one; the
/// first `len mod k` blocks get the extra sample.
pub fn block_means(samples: &[f64], k: usize) -> Vec<f64> {
    let len = samples.len();
    let (base, extra) = (len / k, len % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let size = base + usize::from(b < extra);
        let block = &samples[start..start + size];
        out.push(block.iter().sum::<f64>() / size as f64);
        start += size;
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Number of blocks used for confidence parameter `t`: max(1, min(⌊8t⌋, len)).
pub fn block_count(len: usize, t: f64) -> usize {
    ((8.0 * t).floor() as usize).min(len).max(1)
}

/// Median of the block means over max(1, min(⌊8t⌋, len)) contiguous blocks.
pub fn median_of_means(samples: &[f64], t: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("median of means needs at least one sample"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t={t} must be positive")));
    }
    check_finite("samples", samples)?;
    let mut means = block_means(samples, block_count(samples.len(), t));
    Ok(median(&mut means))
}

pub fn empirical_mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("mean of an empty sample"));
    }
    check_finite("samples", samples)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// The default confidence parameter 2·log n.
pub fn default_t(n: usize) -> f64 {
    2.0 * (n as f64).ln()
}

fn location(samples: &[f64], method: Method, t: f64) -> Result<f64> {
    match method {
        Method::MedianOfMeans => median_of_means(samples, t),
        Method::EmpiricalMean => empirical_mean(samples),
    }
}

/// Estimate of ‖x*‖₁; a negative value is clamped to 0 and flagged.
pub fn estimate_mu(holdout_y: &[f64], method: Method, t: f64) -> Result<(f64, bool)> {
    if holdout_y.is_empty() {
        return Err(Error::invalid("augmented rows required"));
    }
    let raw = location(holdout_y, method, t)?;
    Ok(if raw < 0.0 { (0.0, true) } else { (raw, false) })
}

/// Estimate of Var(y) = ‖x*‖₁ + σ² from squared differences of
/// consecutive pairs, ((y_{2j−1} − y_{2j})/√2)².
pub fn estimate_v(holdout_y: &[f64], method: Method, t: f64) -> Result<f64> {
    if holdout_y.len() < 2 {
        return Err(Error::invalid(
            "variance estimate needs at least two samples",
        ));
    }
    let sq: Vec<f64> = holdout_y
        .chunks_exact(2)
        .map(|c| 0.5 * (c[0] - c[1]).powi(2))
        .collect();
    location(&sq, method, t)
}

/// ν̂ = v/μ − 1, clamped at zero. Returns the clamped value and whether
/// clamping occurred.
pub fn estimate_nu(mu_hat: f64, v_hat: f64) -> Result<(f64, bool)> {
    if !(mu_hat > 0.0) {
        return Err(Error::Degenerate("mu estimate degenerate".into()));
    }
    let raw = v_hat / mu_hat - 1.0;
    Ok(if raw < 0.0 { (0.0, true) } else { (raw, false) })
}

/// All scalar estimates from one hold-out sample.
pub fn estimate_scalars(holdout_y: &[f64], method: Method, t: f64) -> Result<ScalarEstimates> {
    let (mu_hat, mu_clamped) = estimate_mu(holdout_y, method, t)?;
    let v_hat = if holdout_y.len() >= 2 {
        estimate_v(holdout_y, method, t)?
    } else {
        f64::NAN
    };
    let nu_hat = if mu_hat > 0.0 {
        v_hat / mu_hat - 1.0
    } else {
        f64::NAN
    };
    Ok(ScalarEstimates {
        mu_hat,
        v_hat,
        nu_hat,
        holdout_count: holdout_y.len(),
        method,
        mu_clamped,
    })
}

/// max(|truth/est − 1|, |est/truth − 1|).
pub fn relative_error_sym(estimate: f64, truth: f64) -> f64 {
    ((truth / estimate - 1.0).abs()).max((estimate / truth - 1.0).abs())
}
