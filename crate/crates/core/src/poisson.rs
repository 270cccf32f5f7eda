//! Poisson variate generation.
//!
//! Small means use inversion by sequential search. From λ = 30 upward the
//! PTRS transformed-rejection sampler (Hörmann, 1993) is used, whose cost is
//! flat in λ and which never forms e^{-λ}.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

const INVERSION_LIMIT: f64 = 30.0;

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    debug_assert!(lambda >= 0.0 && lambda.is_finite());
    if lambda <= 0.0 {
        0
    } else if lambda < INVERSION_LIMIT {
        inversion(rng, lambda)
    } else {
        ptrs(rng, lambda)
    }
}

fn inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    // The tail beyond k = 1000 has mass far below f64 resolution for λ < 30.
    while u > cdf && k < 1000 {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

fn ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);

    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
