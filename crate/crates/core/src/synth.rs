//! Synthetic ground truths, Bernoulli designs and Poisson-Gauss responses.

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::matrix::{BinaryMatrix, NormalizedDesign};
use crate::poisson::sample_poisson;

/// A nonnegative s-sparse signal.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub x_star: Vec<f64>,
    /// Sorted indices of the nonzero entries.
    pub support: Vec<usize>,
    pub l1_norm: f64,
}

impl GroundTruth {
    pub fn from_vec(x_star: Vec<f64>) -> Result<Self> {
        check_finite("ground truth", &x_star)?;
        if x_star.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("ground truth must be nonnegative"));
        }
        let support = (0..x_star.len()).filter(|&i| x_star[i] != 0.0).collect();
        let l1_norm = x_star.iter().sum();
        Ok(GroundTruth {
            x_star,
            support,
            l1_norm,
        })
    }

    pub fn p(&self) -> usize {
        self.x_star.len()
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn is_on_support(&self, i: usize) -> bool {
        self.support.binary_search(&i).is_ok()
    }
}

/// Uniformly random support of size `s`, nonzeros drawn from U[lo, hi].
pub fn sample_ground_truth<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    magnitude_range: (f64, f64),
    rng: &mut R,
) -> Result<GroundTruth> {
    let (lo, hi) = magnitude_range;
    if s > p {
        return Err(Error::invalid(format!(
            "sparsity s={s} exceeds dimension p={p}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
        return Err(Error::invalid(format!(
            "magnitude range [{lo}, {hi}] must satisfy 0 < lo <= hi < inf"
        )));
    }
    let mut support = rand::seq::index::sample(rng, p, s).into_vec();
    support.sort_unstable();
    let mut x_star = vec![0.0; p];
    for &i in &support {
        let u: f64 = rng.random();
        x_star[i] = lo + (hi - lo) * u;
    }
    let l1_norm = support.iter().map(|&i| x_star[i]).sum();
    Ok(GroundTruth {
        x_star,
        support,
        l1_norm,
    })
}

/// Parameters of one simulated Poisson-Gauss experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    /// Bernoulli parameter of the design. Guarantees hold for q in (0, 1/2).
    pub q: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    /// Fraction of rows replaced by all-ones hold-out rows.
    pub theta: f64,
    /// Multiplier on the data-dependent regularization.
    pub gamma: f64,
    /// Miscoverage level of the intervals.
    pub alpha: f64,
    pub seed: u64,
    /// Range the nonzero entries of x* are drawn from.
    pub magnitude_range: (f64, f64),
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("n and p must be positive"));
        }
        if self.s > self.p {
            return Err(Error::invalid(format!(
                "sparsity s={} exceeds p={}",
                self.s, self.p
            )));
        }
        if !(self.q > 0.0 && self.q < 0.5) {
            return Err(Error::invalid(format!("q={} must lie in (0, 1/2)", self.q)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma={} must be >= 0", self.sigma)));
        }
        if !(self.theta >= 0.0 && self.theta < 1.0) {
            return Err(Error::invalid(format!(
                "theta={} must lie in [0, 1)",
                self.theta
            )));
        }
        if !(self.gamma > 2.0) {
            return Err(Error::invalid(format!(
                "gamma={} must exceed 2",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha={} must lie in (0, 1)",
                self.alpha
            )));
        }
        let (lo, hi) = self.magnitude_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("magnitude range must satisfy 0 < lo <= hi"));
        }
        holdout_count(self.n, self.theta)?;
        Ok(())
    }

    /// ⌈s · log² p⌉, the sample size used throughout the experiments.
    pub fn canonical_n(p: usize, s: usize) -> usize {
        let lp = (p as f64).ln();
        (s as f64 * lp * lp).ceil() as usize
    }

    pub fn holdout_rows(&self) -> usize {
        holdout_count(self.n, self.theta).unwrap_or(0)
    }
}

/// Number of all-ones rows for hold-out fraction `theta`: round(θn), half up,
/// clamped so that a positive θ leaves at least one row of each kind.
pub fn holdout_count(n: usize, theta: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta={theta} must lie in [0, 1)")));
    }
    if theta == 0.0 {
        return Ok(0);
    }
    if n < 2 {
        return Err(Error::invalid("a positive theta needs n >= 2"));
    }
    let r = (theta * n as f64 + 0.5).floor() as usize;
    Ok(r.clamp(1, n - 1))
}

/// A binary design together with its Bernoulli parameter.
///
/// The normalized matrix Ã is exposed as an implicit view. It uses the same
/// (q, n) constants for every row, hold-out rows included.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignBundle {
    pub a_raw: BinaryMatrix,
    pub q: f64,
    /// Number of trailing all-ones rows.
    pub augmented_rows: usize,
}

impl DesignBundle {
    pub fn new(a_raw: BinaryMatrix, q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(DesignBundle {
            a_raw,
            q,
            augmented_rows: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.a_raw.nrows()
    }

    pub fn p(&self) -> usize {
        self.a_raw.ncols()
    }

    pub fn bernoulli_rows(&self) -> usize {
        self.n() - self.augmented_rows
    }

    pub fn a_tilde(&self) -> NormalizedDesign<'_> {
        NormalizedDesign::new(&self.a_raw, self.q)
    }

    pub fn a_tilde_dense(&self) -> Array2<f64> {
        self.a_tilde().to_dense()
    }

    /// The Bernoulli rows as a plain design, normalized with their own count.
    pub fn bernoulli_block(&self) -> DesignBundle {
        DesignBundle {
            a_raw: self.a_raw.row_block(0, self.bernoulli_rows()),
            q: self.q,
            augmented_rows: 0,
        }
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("q={q} must lie in (0, 1)")))
    }
}

fn bernoulli_threshold(q: f64) -> u64 {
    // P(u < t) = t / 2^64 for u uniform on u64.
    (q * 18_446_744_073_709_551_616.0) as u64
}

fn fill_bernoulli<R: RngCore + ?Sized>(rows: usize, p: usize, q: f64, rng: &mut R) -> BinaryMatrix {
    let threshold = bernoulli_threshold(q);
    BinaryMatrix::from_fn(rows, p, |_, _| rng.next_u64() < threshold)
}

/// n×p design with i.i.d. Bernoulli(q) entries, drawn column by column.
pub fn sample_design<R: RngCore + ?Sized>(
    n: usize,
    p: usize,
    q: f64,
    rng: &mut R,
) -> Result<DesignBundle> {
    check_q(q)?;
    if n == 0 || p == 0 {
        return Err(Error::invalid("design needs n, p >= 1"));
    }
    Ok(DesignBundle {
        a_raw: fill_bernoulli(n, p, q, rng),
        q,
        augmented_rows: 0,
    })
}

/// Bernoulli rows followed by round(θn) all-ones hold-out rows.
pub fn build_augmented_design<R: RngCore + ?Sized>(
    n: usize,
    p: usize,
    q: f64,
    theta: f64,
    rng: &mut R,
) -> Result<DesignBundle> {
    check_q(q)?;
    if n == 0 || p == 0 {
        return Err(Error::invalid("design needs n, p >= 1"));
    }
    let r = holdout_count(n, theta)?;
    let bern = fill_bernoulli(n - r, p, q, rng);
    let mut a_raw = BinaryMatrix::zeros(n, p);
    for j in 0..p {
        for i in bern.col_ones(j) {
            a_raw.set(i, j, true);
        }
        for i in n - r..n {
            a_raw.set(i, j, true);
        }
    }
    Ok(DesignBundle {
        a_raw,
        q,
        augmented_rows: r,
    })
}

/// The two noise sources of a simulated response, kept for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseParts {
    /// A x*
    pub mean: Vec<f64>,
    /// Poisson draws with means A x*.
    pub counts: Vec<f64>,
    /// σ·g
    pub gaussian: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub y: Vec<f64>,
    pub y_tilde: Vec<f64>,
    pub noise: Option<NoiseParts>,
}

impl ObservationSet {
    pub fn from_response(y: Vec<f64>, q: f64) -> Result<Self> {
        let y_tilde = normalize_response(&y, q)?;
        Ok(ObservationSet {
            y,
            y_tilde,
            noise: None,
        })
    }
}

/// ỹ = (n·y − 1·Σy) / ((n−1)·√(n q (1−q))).
pub fn normalize_response(y: &[f64], q: f64) -> Result<Vec<f64>> {
    check_q(q)?;
    check_finite("response", y)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::invalid("normalizing a response needs n >= 2"));
    }
    let nf = n as f64;
    let total: f64 = y.iter().sum();
    let denom = (nf - 1.0) * (nf * q * (1.0 - q)).sqrt();
    Ok(y.iter().map(|&v| (nf * v - total) / denom).collect())
}

/// yᵢ = Poisson((A x*)ᵢ) + σ gᵢ.
///
/// All Poisson counts are drawn first, then all Gaussians, so two calls that
/// differ only in σ share their count noise.
pub fn sample_response<R: Rng + ?Sized>(
    design: &DesignBundle,
    truth: &GroundTruth,
    sigma: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    check_len("ground truth length", design.p(), truth.p())?;
    check_finite("ground truth", &truth.x_star)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma={sigma} must be finite and >= 0"
        )));
    }
    if truth.x_star.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("ground truth must be nonnegative"));
    }
    let mean = design.a_raw.matvec(&truth.x_star);
    let counts: Vec<f64> = mean
        .iter()
        .map(|&m| sample_poisson(rng, m) as f64)
        .collect();
    let gaussian: Vec<f64> = (0..mean.len())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = counts.iter().zip(&gaussian).map(|(c, g)| c + g).collect();
    let y_tilde = normalize_response(&y, design.q)?;
    Ok(ObservationSet {
        y,
        y_tilde,
        noise: Some(NoiseParts {
            mean,
            counts,
            gaussian,
        }),
    })
}
