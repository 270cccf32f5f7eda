//! Per-coordinate variances, confidence intervals, coverage bookkeeping and
//! normality diagnostics for the debiased estimator.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_finite, check_len, Error, Result};

/// Standard deviation of the pivot √(n/‖x*‖₁)(x̂ᵈᵢ − x*ᵢ):
/// √((q + ν·(ÃᵀÃ)ᵢᵢ) / (q(1−q))).
///
/// The Poisson part of the pivot has variance Σₗ Ãₗᵢ²(Ax*)ₗ/(q(1−q)‖x*‖₁),
/// and E(Ax*)ₗ = q‖x*‖₁, which is where the leading q comes from.
pub fn sigma_q_from_diag(gram_diag: f64, nu: f64, q: f64) -> Result<f64> {
    check_nu(nu)?;
    Ok(((q + nu * gram_diag) / (q * (1.0 - q))).sqrt())
}

/// The literal reading √((1 + ν·(ÃᵀÃ)ᵢᵢ) / (q(1−q))), kept for comparison.
pub fn sigma_q_as_written(gram_diag: f64, nu: f64, q: f64) -> Result<f64> {
    check_nu(nu)?;
    Ok(((1.0 + nu * gram_diag) / (q * (1.0 - q))).sqrt())
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("nu={nu} must be finite and >= 0")))
    }
}

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Wichura's AS 241 (PPND16) coefficients, accurate to about 1e-16.
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_608_0e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083_0e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061_0e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561_0e3,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_90e0,
    5.769_497_221_460_691_405_50e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_70e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_40e-4,
];
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_40e0,
    6.897_673_349_851_000_045_50e-1,
    1.481_039_764_274_800_745_90e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946_00e-4,
    1.050_750_071_644_416_843_24e-9,
];
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.657_904_643_501_103_777_20e0,
    5.463_784_911_164_114_369_90e0,
    1.784_826_539_917_291_335_80e0,
    2.965_605_718_285_048_912_30e-1,
    2.653_218_952_657_612_309_30e-2,
    1.242_660_947_388_078_438_60e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_90e-1,
    1.369_298_809_227_358_053_10e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591_00e-4,
    1.846_318_317_510_054_681_80e-5,
    1.421_511_758_316_445_888_70e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Φ⁻¹(u) for u ∈ (0, 1).
pub fn inv_norm_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!(
            "probability {u} must lie in (0, 1)"
        )));
    }
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let mut r = (-(u.min(1.0 - u)).ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// The debiased estimate the intervals are centered on.
    pub estimate: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// σ(q)ᵢ·√(μ/n).
    pub std_devs: Vec<f64>,
    pub alpha: f64,
    /// Φ⁻¹(1 − α/2).
    pub z_crit: f64,
    pub mu_used: f64,
    pub nu_used: f64,
}

impl UncertaintyReport {
    /// Zero-width intervals at the estimate, used when μ̂ = 0.
    pub fn degenerate(estimate: &[f64], alpha: f64) -> Result<Self> {
        let z_crit = inv_norm_cdf(1.0 - alpha / 2.0)?;
        Ok(UncertaintyReport {
            estimate: estimate.to_vec(),
            intervals: estimate.iter().map(|&v| (v, v)).collect(),
            std_devs: vec![0.0; estimate.len()],
            alpha,
            z_crit,
            mu_used: 0.0,
            nu_used: 0.0,
        })
    }
}

/// Iᵢ = x̂ᵈᵢ ± Φ⁻¹(1−α/2)·√(μ̂/n)·σ(q)ᵢ, with `gram_diag` the diagonal of ÃᵀÃ
/// for the n-row design the estimate was debiased on.
pub fn build_intervals(
    x_debiased: &[f64],
    gram_diag: &[f64],
    n: usize,
    mu_hat: f64,
    nu_hat: f64,
    q: f64,
    alpha: f64,
) -> Result<UncertaintyReport> {
    check_len("gram diagonal length", x_debiased.len(), gram_diag.len())?;
    check_finite("debiased estimate", x_debiased)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha={alpha} must lie in (0, 1)")));
    }
    if !(mu_hat > 0.0 && mu_hat.is_finite()) {
        return Err(Error::Degenerate(format!(
            "mu_hat={mu_hat} must be positive"
        )));
    }
    let z_crit = inv_norm_cdf(1.0 - alpha / 2.0)?;
    let scale = (mu_hat / n as f64).sqrt();
    let std_devs = gram_diag
        .iter()
        .map(|&g| sigma_q_from_diag(g, nu_hat, q).map(|s| s * scale))
        .collect::<Result<Vec<_>>>()?;
    let intervals = x_debiased
        .iter()
        .zip(&std_devs)
        .map(|(&c, &sd)| (c - z_crit * sd, c + z_crit * sd))
        .collect();
    Ok(UncertaintyReport {
        estimate: x_debiased.to_vec(),
        intervals,
        std_devs,
        alpha,
        z_crit,
        mu_used: mu_hat,
        nu_used: nu_hat,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub covered: Vec<bool>,
    pub support_size: usize,
    pub mistakes_on_support: usize,
    pub mistakes_off_support: usize,
    pub mistakes_total: usize,
}

impl CoverageSummary {
    /// Fraction of support coordinates whose interval misses; 0 for an empty support.
    pub fn miscoverage_on_support(&self) -> f64 {
        if self.support_size == 0 {
            0.0
        } else {
            self.mistakes_on_support as f64 / self.support_size as f64
        }
    }
}

pub fn evaluate_coverage(report: &UncertaintyReport, x_star: &[f64]) -> Result<CoverageSummary> {
    check_len("truth length", report.intervals.len(), x_star.len())?;
    let covered: Vec<bool> = report
        .intervals
        .iter()
        .zip(x_star)
        .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
        .collect();
    let mut summary = CoverageSummary {
        covered,
        support_size: 0,
        mistakes_on_support: 0,
        mistakes_off_support: 0,
        mistakes_total: 0,
    };
    for (&hit, &t) in summary.covered.iter().zip(x_star) {
        let on = t != 0.0;
        summary.support_size += usize::from(on);
        if !hit {
            summary.mistakes_total += 1;
            if on {
                summary.mistakes_on_support += 1;
            } else {
                summary.mistakes_off_support += 1;
            }
        }
    }
    Ok(summary)
}

/// Kolmogorov–Smirnov distance between the empirical law of `pivots` and
/// N(0, 1). The pivots are used as given, not re-standardized.
pub fn ks_normality(pivots: &[f64]) -> Result<f64> {
    if pivots.len() < 50 {
        return Err(Error::invalid(format!(
            "KS statistic needs at least 50 samples, got {}",
            pivots.len()
        )));
    }
    check_finite("pivots", pivots)?;
    let mut xs = pivots.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal_cdf(x);
        d = d.max((i + 1) as f64 / m - cdf).max(cdf - i as f64 / m);
    }
    Ok(d)
}
