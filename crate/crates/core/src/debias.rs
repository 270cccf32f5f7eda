//! The bias term, the debiased estimator, its error decomposition, and the
//! end-to-end pipeline from simulated data to confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::inference::{build_intervals, evaluate_coverage, CoverageSummary, UncertaintyReport};
use crate::lasso::{
    solve_lasso, solve_nonneg_lasso, solve_scaled_lasso, LassoFit, ScaledObjective, SolverOptions,
};
use crate::matrix::Design;
use crate::scalar_est::{default_t, estimate_scalars, Method, ScalarEstimates};
use crate::synth::{
    build_augmented_design, normalize_response, sample_design, sample_ground_truth,
    sample_response, DesignBundle, GroundTruth, NoiseParts, ObservationSet, SimConfig,
};
use crate::tuning::{
    compute_d_easy, compute_d_hat, compute_lambda_pg, compute_n_hat, compute_w, TuningRule,
};

/// B = (l1_reference − 1ᵀx̂)·(q/√(nq(1−q)))·Ãᵀ1, with `col_sums` = Ãᵀ1.
///
/// For the nonnegative fits used here 1ᵀx̂ = ‖x̂‖₁; the signed sum is what
/// the algebra of the decomposition actually needs.
pub fn compute_bias(
    l1_reference: f64,
    x_hat: &[f64],
    col_sums: &[f64],
    n: usize,
    q: f64,
) -> Result<Vec<f64>> {
    check_len("column sums length", x_hat.len(), col_sums.len())?;
    if !(l1_reference.is_finite() && l1_reference >= 0.0) {
        return Err(Error::invalid(format!(
            "l1 reference {l1_reference} must be >= 0"
        )));
    }
    let c = (n as f64 * q * (1.0 - q)).sqrt();
    let factor = (l1_reference - x_hat.iter().sum::<f64>()) * q / c;
    Ok(col_sums.iter().map(|&s| factor * s).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Split,
    NoSplit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DebiasResult {
    pub x_debiased: Vec<f64>,
    /// The B subtracted from the corrected estimate.
    pub bias: Vec<f64>,
    pub mu_used: f64,
    pub split_mode: SplitMode,
    pub diagnostics: Option<DecompositionDiag>,
}

/// x̂ᵈ = x̂ + Ãᵀ(y − A x̂)/√(nq(1−q)) − B, where A is the raw 0/1 design.
///
/// B enters without a 1/√n factor: √n(x̂ᵈ − x*) then splits exactly into the
/// noise terms, the remainder, and a term proportional to ‖x*‖₁ − l1_reference.
pub fn debias_poisson(
    x_hat: &[f64],
    design: &DesignBundle,
    y: &[f64],
    l1_reference: f64,
) -> Result<DebiasResult> {
    check_len("estimate length", design.p(), x_hat.len())?;
    check_len("response length", design.n(), y.len())?;
    check_finite("estimate", x_hat)?;
    let at = design.a_tilde();
    let fitted = design.a_raw.matvec(x_hat);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let corr = at.tr_matvec(&resid);
    let bias = compute_bias(l1_reference, x_hat, &at.col_sums(), design.n(), design.q)?;
    let c = at.scale();
    let x_debiased = x_hat
        .iter()
        .zip(&corr)
        .zip(&bias)
        .map(|((&x, &g), &b)| x + g / c - b)
        .collect();
    Ok(DebiasResult {
        x_debiased,
        bias,
        mu_used: l1_reference,
        split_mode: SplitMode::NoSplit,
        diagnostics: None,
    })
}

/// The pieces of √n(x̂ᵈ − x*).
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionDiag {
    /// Ãᵀ(P − Ax*)/√(q(1−q)), the Poisson noise term.
    pub eta: Vec<f64>,
    /// Ãᵀ(σg)/√(q(1−q)), the Gaussian noise term.
    pub eta_prime: Vec<f64>,
    /// √n(ÃᵀÃ − I)(x* − x̂).
    pub delta: Vec<f64>,
    /// √n(‖x*‖₁ − l1_reference)(q/√(nq(1−q)))Ãᵀ1; zero with the oracle reference.
    pub bias_residual: Vec<f64>,
    /// ‖Δ‖_∞/√‖x*‖₁ (0 when x* = 0).
    pub delta_inf_normalized: f64,
}

impl DecompositionDiag {
    /// η + η′ + Δ + bias residual, which equals √n(x̂ᵈ − x*).
    pub fn total(&self) -> Vec<f64> {
        (0..self.eta.len())
            .map(|i| self.eta[i] + self.eta_prime[i] + self.delta[i] + self.bias_residual[i])
            .collect()
    }
}

/// Splits √n(x̂ᵈ − x*) into noise terms and remainder. Needs the truth and
/// the separately stored noise parts, so it only applies to simulated data.
pub fn decompose(
    x_hat: &[f64],
    design: &DesignBundle,
    noise: &NoiseParts,
    truth: &GroundTruth,
    l1_reference: f64,
) -> Result<DecompositionDiag> {
    let (n, p) = (design.n(), design.p());
    check_len("estimate length", p, x_hat.len())?;
    check_len("truth length", p, truth.p())?;
    check_len("noise length", n, noise.counts.len())?;
    check_len("noise length", n, noise.gaussian.len())?;
    let q = design.q;
    let at = design.a_tilde();
    let nf = n as f64;
    let root = (q * (1.0 - q)).sqrt();
    let mean = design.a_raw.matvec(&truth.x_star);
    let poisson: Vec<f64> = noise.counts.iter().zip(&mean).map(|(c, m)| c - m).collect();
    let eta = at
        .tr_matvec(&poisson)
        .into_iter()
        .map(|v| v / root)
        .collect();
    let eta_prime = at
        .tr_matvec(&noise.gaussian)
        .into_iter()
        .map(|v| v / root)
        .collect();
    let diff: Vec<f64> = truth.x_star.iter().zip(x_hat).map(|(a, b)| a - b).collect();
    let gram_diff = at.tr_matvec(&Design::matvec(&at, &diff));
    let delta: Vec<f64> = gram_diff
        .iter()
        .zip(&diff)
        .map(|(g, d)| nf.sqrt() * (g - d))
        .collect();
    let factor = nf.sqrt() * (truth.l1_norm - l1_reference) * q / at.scale();
    let bias_residual = at.col_sums().into_iter().map(|s| factor * s).collect();
    let dmax = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let delta_inf_normalized = if truth.l1_norm > 0.0 {
        dmax / truth.l1_norm.sqrt()
    } else {
        0.0
    };
    Ok(DecompositionDiag {
        eta,
        eta_prime,
        delta,
        bias_residual,
        delta_inf_normalized,
    })
}

/// Where ‖x*‖₁ comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSource {
    /// μ̂ from the all-ones hold-out rows.
    Holdout,
    /// The true ‖x*‖₁ (simulation only).
    Oracle,
}

/// Where the Gaussian noise level comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSource {
    Known,
    /// Scaled LASSO on the debiasing batch, minus the Poisson share q·μ.
    ScaledLasso,
    /// σ² = ν̂·μ̂ from the hold-out rows.
    NuHat,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub tuning_rule: TuningRule,
    pub sigma_source: SigmaSource,
    pub mu_source: MuSource,
    pub method: Method,
    /// Median-of-means confidence parameter; 2·log n when unset.
    pub mom_t: Option<f64>,
    pub split: bool,
    /// Constrain the LASSO to x ≥ 0.
    pub nonneg: bool,
    pub solver: SolverOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            tuning_rule: TuningRule::LambdaPg,
            sigma_source: SigmaSource::Known,
            mu_source: MuSource::Holdout,
            method: Method::EmpiricalMean,
            mom_t: None,
            split: false,
            nonneg: false,
            solver: SolverOptions::default(),
        }
    }
}

/// One simulated data set. In split mode `second` holds the batch the LASSO
/// and μ̂ use, and `design` is a plain Bernoulli batch used for debiasing.
#[derive(Clone, Debug)]
pub struct SimData {
    pub truth: Option<GroundTruth>,
    pub design: DesignBundle,
    pub obs: ObservationSet,
    pub second: Option<(DesignBundle, ObservationSet)>,
}

/// Draws the truth, then the design(s), then the response(s), in that order.
pub fn simulate<R: rand::Rng + ?Sized>(
    config: &SimConfig,
    split: bool,
    rng: &mut R,
) -> Result<SimData> {
    config.validate()?;
    let truth = sample_ground_truth(config.p, config.s, config.magnitude_range, rng)?;
    if split {
        let design = sample_design(config.n, config.p, config.q, rng)?;
        let obs = sample_response(&design, &truth, config.sigma, rng)?;
        let d2 = build_augmented_design(config.n, config.p, config.q, config.theta, rng)?;
        let o2 = sample_response(&d2, &truth, config.sigma, rng)?;
        Ok(SimData {
            truth: Some(truth),
            design,
            obs,
            second: Some((d2, o2)),
        })
    } else {
        let design = build_augmented_design(config.n, config.p, config.q, config.theta, rng)?;
        let obs = sample_response(&design, &truth, config.sigma, rng)?;
        Ok(SimData {
            truth: Some(truth),
            design,
            obs,
            second: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub fit: LassoFit,
    pub scalars: Option<ScalarEstimates>,
    pub debias: DebiasResult,
    pub report: UncertaintyReport,
    pub coverage: Option<CoverageSummary>,
    pub lambda: f64,
    /// The σ the λ and the interval widths were built from, and its source.
    pub sigma_used: f64,
    pub sigma_source: SigmaSource,
    pub nu_used: f64,
    /// Rows of the LASSO and debiasing designs.
    pub n_lasso: usize,
    pub n_debias: usize,
}

pub fn run_pipeline<R: rand::Rng + ?Sized>(
    config: &SimConfig,
    opts: &PipelineOptions,
    rng: &mut R,
) -> Result<(SimData, PipelineOutput)> {
    let data = simulate(config, opts.split, rng)?;
    let out = run_pipeline_on(config, opts, &data)?;
    Ok((data, out))
}

fn slice_noise(noise: &NoiseParts, rows: usize) -> NoiseParts {
    NoiseParts {
        mean: noise.mean[..rows].to_vec(),
        counts: noise.counts[..rows].to_vec(),
        gaussian: noise.gaussian[..rows].to_vec(),
    }
}

/// Runs the debiasing pipeline on given data: μ̂ from the hold-out rows,
/// σ by the configured route, LASSO on the Bernoulli rows, then the
/// debiased estimate and its intervals.
pub fn run_pipeline_on(
    config: &SimConfig,
    opts: &PipelineOptions,
    data: &SimData,
) -> Result<PipelineOutput> {
    let (q, p) = (config.q, config.p);
    let (lasso_src, lasso_obs) = match (&data.second, opts.split) {
        (Some((d, o)), true) => (d, o),
        (None, true) => return Err(Error::invalid("split mode needs a second batch")),
        _ => (&data.design, &data.obs),
    };
    let n_bern = lasso_src.bernoulli_rows();
    if n_bern < 2 {
        return Err(Error::invalid("too few Bernoulli rows for the LASSO stage"));
    }
    let holdout = &lasso_obs.y[n_bern..];
    let lasso_design = lasso_src.bernoulli_block();
    let lasso_y = normalize_response(&lasso_obs.y[..n_bern], q)?;

    // In split mode the debiasing batch is the whole first design; otherwise
    // it is the same Bernoulli block the LASSO sees.
    let (debias_design, debias_rows) = if opts.split {
        if data.design.augmented_rows != 0 {
            return Err(Error::invalid(
                "the debiasing batch must not contain hold-out rows",
            ));
        }
        (data.design.clone(), data.design.n())
    } else {
        (lasso_design.clone(), n_bern)
    };
    let debias_y = &data.obs.y[..debias_rows];

    let t = opts.mom_t.unwrap_or_else(|| default_t(lasso_src.n()));
    let scalars = if holdout.is_empty() {
        None
    } else {
        Some(estimate_scalars(holdout, opts.method, t)?)
    };
    let mu_used = match opts.mu_source {
        MuSource::Oracle => {
            data.truth
                .as_ref()
                .ok_or_else(|| Error::Unsupported("oracle mu needs the ground truth".into()))?
                .l1_norm
        }
        MuSource::Holdout => {
            scalars
                .as_ref()
                .ok_or_else(|| Error::invalid("augmented rows required"))?
                .mu_hat
        }
    };

    let (sigma_used, nu_used) = match opts.sigma_source {
        SigmaSource::Known => (config.sigma, ratio(config.sigma.powi(2), mu_used)),
        SigmaSource::NuHat => {
            let est = scalars
                .as_ref()
                .ok_or_else(|| Error::invalid("the nu-hat route needs hold-out rows"))?;
            let nu = est.nu_for_intervals();
            ((nu * mu_used).sqrt(), nu)
        }
        SigmaSource::ScaledLasso => {
            let s = scaled_lasso_sigma(&debias_design, debias_y, mu_used, &opts.solver)?;
            (s, ratio(s * s, mu_used))
        }
    };

    let n_lasso = lasso_design.n();
    let d_easy = compute_d_easy(mu_used, n_lasso, p, q)?;
    let lambda = match opts.tuning_rule {
        TuningRule::DEasy => config.gamma * d_easy,
        TuningRule::LambdaPg => compute_lambda_pg(d_easy, sigma_used, n_lasso, p, q, config.gamma)?,
        TuningRule::DHat => {
            let y_sum: f64 = lasso_obs.y[..n_bern].iter().sum();
            let (n_hat, _) = compute_n_hat(y_sum, n_lasso, p, q)?;
            let w = compute_w(&lasso_design.a_raw, q)?;
            config.gamma * compute_d_hat(n_hat, w, n_lasso, p, q)?
        }
    };

    let at = lasso_design.a_tilde();
    let fit = if opts.nonneg {
        solve_nonneg_lasso(&at, &lasso_y, lambda, &opts.solver)?
    } else {
        solve_lasso(&at, &lasso_y, lambda, &opts.solver)?
    };

    let mut debias = debias_poisson(&fit.x_hat, &debias_design, debias_y, mu_used)?;
    debias.split_mode = if opts.split {
        SplitMode::Split
    } else {
        SplitMode::NoSplit
    };
    if let (Some(truth), Some(noise)) = (&data.truth, &data.obs.noise) {
        let noise = slice_noise(noise, debias_rows);
        debias.diagnostics = Some(decompose(
            &fit.x_hat,
            &debias_design,
            &noise,
            truth,
            mu_used,
        )?);
    }

    let report = if mu_used > 0.0 {
        let diag = debias_design.a_tilde().gram_diag();
        build_intervals(
            &debias.x_debiased,
            &diag,
            debias_rows,
            mu_used,
            nu_used,
            q,
            config.alpha,
        )?
    } else {
        UncertaintyReport::degenerate(&debias.x_debiased, config.alpha)?
    };
    let coverage = match &data.truth {
        Some(t) => Some(evaluate_coverage(&report, &t.x_star)?),
        None => None,
    };

    Ok(PipelineOutput {
        fit,
        scalars,
        debias,
        report,
        coverage,
        lambda,
        sigma_used,
        sigma_source: opts.sigma_source,
        nu_used,
        n_lasso,
        n_debias: debias_rows,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// σ from the scaled LASSO on (Ã, ỹ) of `design`.
///
/// The scaled-LASSO residual level, mapped back to raw response units, mixes
/// both noise sources: its square is about σ² + q·‖x*‖₁. The Poisson share
/// is removed with `mu`.
pub fn scaled_lasso_sigma(
    design: &DesignBundle,
    y: &[f64],
    mu: f64,
    solver: &SolverOptions,
) -> Result<f64> {
    let n = design.n();
    let yt = normalize_response(y, design.q)?;
    let opts = SolverOptions {
        scaled_objective: ScaledObjective::Classical,
        ..solver.clone()
    };
    // Columns of Ã have unit norm, so the universal threshold is σ√(2 log p)
    // on the x-step, i.e. λ = √(2 log p)/n in the scaled objective.
    let lambda = (2.0 * (design.p() as f64).ln()).sqrt() / n as f64;
    let fit = solve_scaled_lasso(&design.a_tilde(), &yt, lambda, &opts)?;
    let nf = n as f64;
    let raw = fit.sigma_hat * design.a_tilde().scale() * (nf - 1.0) / nf;
    Ok((raw * raw - design.q * mu).max(0.0).sqrt())
}
