//! LASSO, nonnegative LASSO and scaled LASSO by cyclic coordinate descent.
//!
//! The objective is (1/2)‖y − Dx‖₂² + λ‖x‖₁, so the KKT threshold on the
//! correlations Dᵀ(y − Dx) is exactly λ.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::matrix::Design;

/// Which σ-normalization the scaled LASSO uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaledObjective {
    /// (1/(nσ))‖y−Dx‖² + σ/2 + λ‖x‖₁, stationary at σ² = 2‖y−Dx‖²/n.
    AsWritten,
    /// (1/(2nσ))‖y−Dx‖² + σ/2 + λ‖x‖₁, stationary at σ² = ‖y−Dx‖²/n.
    Classical,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Duality-gap tolerance, relative to max(1, primal objective).
    pub tol: f64,
    /// Stop when no coordinate moves by more than this in a sweep.
    pub coord_tol: f64,
    pub max_sweeps: usize,
    /// Slack allowed in the KKT certificate, relative to max(1, λ).
    pub kkt_tol: f64,
    pub sigma_floor: f64,
    /// Relative change in σ that ends the scaled-LASSO alternation.
    pub scaled_tol: f64,
    pub max_outer: usize,
    pub scaled_objective: ScaledObjective,
    /// Record the primal objective after every sweep.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            coord_tol: 1e-10,
            max_sweeps: 100_000,
            kkt_tol: 1e-6,
            sigma_floor: 1e-10,
            scaled_tol: 1e-8,
            max_outer: 200,
            scaled_objective: ScaledObjective::AsWritten,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    pub x_hat: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub duality_gap: f64,
    /// Full sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the subgradient conditions.
    pub kkt_violation: f64,
    /// Primal objective after each sweep, when tracing is on.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    /// Whether the stationarity conditions hold within `opts.kkt_tol`.
    pub fn kkt_ok(&self, opts: &SolverOptions) -> bool {
        self.kkt_violation <= opts.kkt_tol * self.lambda.max(1.0)
    }
}

#[derive(Clone, Debug)]
pub struct ScaledLassoFit {
    pub x_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub lambda: f64,
    /// Alternation rounds.
    pub iterations: usize,
    pub converged: bool,
    /// The residual vanished and σ̂ sits at the floor.
    pub degenerate: bool,
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn solve_lasso<D: Design>(
    design: &D,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    coordinate_descent(design, y, lambda, false, None, opts)
}

/// The LASSO restricted to x ≥ 0.
pub fn solve_nonneg_lasso<D: Design>(
    design: &D,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    coordinate_descent(design, y, lambda, true, None, opts)
}

/// ‖Dᵀ(y − D x_ref)‖_∞.
pub fn coherence<D: Design>(design: &D, y: &[f64], x_ref: &[f64]) -> Result<f64> {
    check_len("response length", design.nrows(), y.len())?;
    check_len("reference length", design.ncols(), x_ref.len())?;
    let r = design.residual(y, x_ref);
    let g = design.tr_matvec(&design.residual_values(&r));
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Largest violation of the LASSO subgradient conditions at `x`.
pub fn kkt_violation<D: Design>(
    design: &D,
    y: &[f64],
    x: &[f64],
    lambda: f64,
    nonneg: bool,
) -> f64 {
    let r = design.residual(y, x);
    let g = design.tr_matvec(&design.residual_values(&r));
    kkt_from_gradient(&g, x, lambda, nonneg)
}

fn kkt_from_gradient(g: &[f64], x: &[f64], lambda: f64, nonneg: bool) -> f64 {
    g.iter()
        .zip(x)
        .map(|(&gj, &xj)| {
            if xj > 0.0 {
                (gj - lambda).abs()
            } else if xj < 0.0 {
                (gj + lambda).abs()
            } else if nonneg {
                (gj - lambda).max(0.0)
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

struct Certificate {
    primal: f64,
    gap: f64,
    kkt: f64,
}

fn certificate(
    g: &[f64],
    r: &[f64],
    y: &[f64],
    x: &[f64],
    lambda: f64,
    nonneg: bool,
) -> Certificate {
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let primal = 0.5 * rr + lambda * l1;
    // Scale the residual into the dual feasible set {θ : |Dᵀθ| ≤ λ}.
    let corr = if nonneg {
        g.iter().fold(0.0f64, |m, &v| m.max(v))
    } else {
        g.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    };
    let s = if corr > lambda { lambda / corr } else { 1.0 };
    let ty: f64 = r.iter().zip(y).map(|(a, b)| a * b).sum();
    let dual = s * ty - 0.5 * s * s * rr;
    Certificate {
        primal,
        gap: (primal - dual).max(0.0),
        kkt: kkt_from_gradient(g, x, lambda, nonneg),
    }
}

fn validate<D: Design>(design: &D, y: &[f64], lambda: f64) -> Result<()> {
    check_len("response length", design.nrows(), y.len())?;
    check_finite("response", y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda={lambda} must be finite and >= 0"
        )));
    }
    if !design.all_finite() {
        return Err(Error::invalid("design has non-finite entries"));
    }
    Ok(())
}

pub(crate) fn coordinate_descent<D: Design>(
    design: &D,
    y: &[f64],
    lambda: f64,
    nonneg: bool,
    warm: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    validate(design, y, lambda)?;
    let p = design.ncols();
    let norms = design.gram_diag();
    let mut x = match warm {
        Some(w) => {
            check_len("warm start length", p, w.len())?;
            w.to_vec()
        }
        None => vec![0.0; p],
    };
    let mut r = design.residual(y, &x);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    let mut cert;

    loop {
        let rv = design.residual_values(&r);
        let g = design.tr_matvec(&rv);
        cert = certificate(&g, &rv, y, &x, lambda, nonneg);
        if cert.gap <= opts.tol * cert.primal.max(1.0) && cert.kkt <= opts.kkt_tol * lambda.max(1.0)
        {
            converged = true;
            break;
        }
        if sweeps >= opts.max_sweeps {
            break;
        }

        let mut max_change = 0.0f64;
        for j in 0..p {
            let nj = norms[j];
            if nj <= 0.0 {
                continue;
            }
            let z = design.residual_dot(j, &r) + nj * x[j];
            let new = if nonneg {
                (z - lambda).max(0.0) / nj
            } else {
                soft_threshold(z, lambda) / nj
            };
            let delta = new - x[j];
            if delta != 0.0 {
                design.residual_update(j, delta, &mut r);
                x[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        design.residual_refresh(&mut r);
        sweeps += 1;
        if opts.trace {
            let rv = design.residual_values(&r);
            let rr: f64 = rv.iter().map(|v| v * v).sum();
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            trace.push(0.5 * rr + lambda * l1);
        }
        if max_change <= opts.coord_tol {
            let rv = design.residual_values(&r);
            let g = design.tr_matvec(&rv);
            cert = certificate(&g, &rv, y, &x, lambda, nonneg);
            converged = cert.gap <= opts.tol * cert.primal.max(1.0);
            break;
        }
    }

    if !converged {
        log::warn!(
            "coordinate descent stopped after {sweeps} sweeps with duality gap {:.3e}",
            cert.gap
        );
    }
    Ok(LassoFit {
        x_hat: x,
        lambda,
        objective: cert.primal,
        duality_gap: cert.gap,
        iterations: sweeps,
        converged,
        kkt_violation: cert.kkt,
        objective_trace: trace,
    })
}

/// Joint minimization over (x, σ) by alternating a LASSO step and a
/// closed-form σ step, warm-starting each LASSO at the previous solution.
pub fn solve_scaled_lasso<D: Design>(
    design: &D,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<ScaledLassoFit> {
    validate(design, y, lambda)?;
    if lambda <= 0.0 {
        return Err(Error::invalid("scaled LASSO needs lambda > 0"));
    }
    let n = design.nrows() as f64;
    // σ = c·‖r‖/√n at stationarity; the x-step penalty is n·σ·λ·k.
    let (c, k) = match opts.scaled_objective {
        ScaledObjective::AsWritten => (2f64.sqrt(), 0.5),
        ScaledObjective::Classical => (1.0, 1.0),
    };
    let sigma_of = |r: &[f64]| c * r.iter().map(|v| v * v).sum::<f64>().sqrt() / n.sqrt();

    let mut x = vec![0.0; design.ncols()];
    let mut sigma = sigma_of(y).max(opts.sigma_floor);
    let mut converged = false;
    let mut degenerate = false;
    let mut rounds = 0;
    // A residual this small relative to y is zero up to rounding.
    let zero_level = 1e-9 * sigma_of(y);
    while rounds < opts.max_outer {
        rounds += 1;
        // Tighten the inner tolerances as σ shrinks so the residual, and
        // hence the next σ, is resolved at its own scale.
        let inner = SolverOptions {
            tol: opts.tol * sigma.powi(2).min(1.0),
            kkt_tol: opts.kkt_tol * sigma.min(1.0),
            trace: false,
            ..opts.clone()
        };
        let fit = coordinate_descent(design, y, n * sigma * lambda * k, false, Some(&x), &inner)?;
        x = fit.x_hat;
        let r = design.residual_values(&design.residual(y, &x));
        let raw = sigma_of(&r);
        let next = if raw <= opts.sigma_floor.max(zero_level) {
            degenerate = true;
            opts.sigma_floor
        } else {
            raw
        };
        let done = (next - sigma).abs() <= opts.scaled_tol * sigma;
        sigma = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(ScaledLassoFit {
        x_hat: x,
        sigma_hat: sigma,
        lambda,
        iterations: rounds,
        converged,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
    }

    fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn soft_threshold_ties_stay_at_zero() {
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let a = gaussian_matrix(20, 10, 1);
        let y = gaussian_vec(20, 2);
        let lmax = coherence(&a, &y, &[0.0; 10]).unwrap();
        let fit = solve_lasso(&a, &y, lmax, &SolverOptions::default()).unwrap();
        assert!(fit.x_hat.iter().all(|&v| v == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn identity_design_is_soft_threshold() {
        let n = 12;
        let a = Array2::eye(n);
        let y = gaussian_vec(n, 3);
        let fit = solve_lasso(&a, &y, 0.7, &SolverOptions::default()).unwrap();
        for (xj, yj) in fit.x_hat.iter().zip(&y) {
            assert_eq!(*xj, soft_threshold(*yj, 0.7));
        }
    }

    #[test]
    fn objective_is_monotone() {
        let a = gaussian_matrix(40, 60, 4);
        let y = gaussian_vec(40, 5);
        let opts = SolverOptions {
            trace: true,
            ..Default::default()
        };
        let fit = solve_lasso(&a, &y, 0.5, &opts).unwrap();
        assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        assert!(fit.kkt_ok(&opts));
    }

    #[test]
    fn anticorrelated_response_gives_zero_nonneg() {
        let a = gaussian_matrix(15, 4, 6);
        let y: Vec<f64> = Design::matvec(&a, &[1.0; 4]).iter().map(|v| -v).collect();
        // The columns are nearly orthogonal, so each correlation is negative.
        let g = a.tr_matvec(&y);
        assert!(g.iter().all(|&v| v < 0.0));
        let fit = solve_nonneg_lasso(&a, &y, 0.1, &SolverOptions::default()).unwrap();
        assert!(fit.x_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let a = gaussian_matrix(5, 3, 1);
        let opts = SolverOptions::default();
        assert!(solve_lasso(&a, &[0.0; 4], 1.0, &opts).is_err());
        assert!(solve_lasso(&a, &[f64::NAN, 0.0, 0.0, 0.0, 0.0], 1.0, &opts).is_err());
        assert!(solve_lasso(&a, &[0.0; 5], -1.0, &opts).is_err());
        let mut bad = a.clone();
        bad[[0, 0]] = f64::INFINITY;
        assert!(solve_lasso(&bad, &[0.0; 5], 1.0, &opts).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let a = gaussian_matrix(30, 50, 7);
        let y = gaussian_vec(30, 8);
        let opts = SolverOptions {
            max_sweeps: 1,
            ..Default::default()
        };
        let fit = solve_lasso(&a, &y, 0.01, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn coherence_definitions() {
        let a = gaussian_matrix(10, 4, 9);
        let x = [0.5, 0.0, -1.0, 2.0];
        let y = Design::matvec(&a, &x);
        assert!(coherence(&a, &y, &x).unwrap() < 1e-12);
        let g = a.tr_matvec(&y);
        let expected = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(coherence(&a, &y, &[0.0; 4]).unwrap(), expected);
    }

    #[test]
    fn scaled_lasso_zero_residual() {
        let a = gaussian_matrix(10, 4, 10);
        let y = Design::matvec(&a, &[1.0, -2.0, 0.5, 3.0]);
        let opts = SolverOptions::default();
        let fit = solve_scaled_lasso(&a, &y, 1e-12, &opts).unwrap();
        assert!(fit.sigma_hat <= opts.sigma_floor * (1.0 + 1e-6));
        assert!(fit.degenerate);
    }

    #[test]
    fn scaled_lasso_stationarity() {
        let a = gaussian_matrix(60, 30, 11);
        let y = gaussian_vec(60, 12);
        for objective in [ScaledObjective::AsWritten, ScaledObjective::Classical] {
            let opts = SolverOptions {
                scaled_objective: objective,
                ..Default::default()
            };
            let fit = solve_scaled_lasso(&a, &y, 0.05, &opts).unwrap();
            assert!(fit.converged);
            let r = a.residual(&y, &fit.x_hat);
            let rr: f64 = r.iter().map(|v| v * v).sum();
            let factor = if objective == ScaledObjective::AsWritten {
                2.0
            } else {
                1.0
            };
            let target = factor * rr / 60.0;
            assert!((fit.sigma_hat.powi(2) / target - 1.0).abs() < 1e-6);
        }
    }
}
