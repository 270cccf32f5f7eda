//! Seeded Monte-Carlo experiments: configuration, parallel trial execution
//! and the CSV/JSON outputs.

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::debias::{run_pipeline, MuSource, PipelineOptions, SigmaSource};
use crate::error::{Error, Result};
use crate::inference::UncertaintyReport;
use crate::lasso::SolverOptions;
use crate::rng::{rng_from_seed, trial_seed};
use crate::scalar_est::{relative_error_sym, Method};
use crate::synth::SimConfig;
use crate::tuning::TuningRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PoissonOnly,
    PoissonGauss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// p = 2000, s = 20: runs in seconds.
    Desk,
    /// p = 20000, s = 100, n = 9808.
    Paper,
    /// Desk scale with γ = 2.01.
    Theory,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub trials: usize,
    pub mode: Mode,
    pub tuning_rule: TuningRule,
    pub sigma_source: SigmaSource,
    pub mu_source: MuSource,
    pub method: Method,
    pub mom_t: Option<f64>,
    pub split: bool,
    pub nonneg: bool,
    /// Worker threads; all available cores when unset.
    pub jobs: Option<usize>,
    /// Rows per interval plot file.
    pub top_k: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (p, s, gamma, trials) = match preset {
            Preset::Desk => (2000, 20, 50.0, 20),
            Preset::Paper => (20_000, 100, 50.0, 10),
            Preset::Theory => (2000, 20, 2.01, 20),
        };
        let n = SimConfig::canonical_n(p, s);
        ExperimentConfig {
            sim: SimConfig {
                n,
                p,
                s,
                q: 0.25,
                sigma: 1.0,
                // 100 all-ones rows.
                theta: 100.0 / n as f64,
                gamma,
                alpha: 0.1,
                seed: 20_240_601,
                magnitude_range: (1.0, 10.0),
            },
            trials,
            mode: Mode::PoissonGauss,
            tuning_rule: TuningRule::LambdaPg,
            sigma_source: SigmaSource::Known,
            mu_source: MuSource::Holdout,
            method: Method::EmpiricalMean,
            mom_t: None,
            split: false,
            nonneg: false,
            jobs: None,
            top_k: s,
            output_dir: PathBuf::from("results"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.mode == Mode::PoissonOnly && self.sim.sigma != 0.0 {
            return Err(Error::Config("poisson-only mode needs sigma = 0".into()));
        }
        if self.tuning_rule == TuningRule::DHat && self.sim.sigma != 0.0 {
            log::warn!("d-hat is derived for sigma = 0; a negative response sum will be clamped");
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            tuning_rule: self.tuning_rule,
            sigma_source: self.sigma_source,
            mu_source: self.mu_source,
            method: self.method,
            mom_t: self.mom_t,
            split: self.split,
            nonneg: self.nonneg,
            solver: SolverOptions::default(),
        }
    }

    /// Overlays the keys present in a flat TOML file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply(file);
        Ok(())
    }

    pub fn apply(&mut self, f: FileConfig) {
        let sim = &mut self.sim;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(sim.n, f.n);
        set!(sim.p, f.p);
        set!(sim.s, f.s);
        set!(sim.q, f.q);
        set!(sim.sigma, f.sigma);
        set!(sim.theta, f.theta);
        set!(sim.gamma, f.gamma);
        set!(sim.alpha, f.alpha);
        set!(sim.seed, f.seed);
        set!(sim.magnitude_range.0, f.magnitude_lo);
        set!(sim.magnitude_range.1, f.magnitude_hi);
        if let Some(r) = f.holdout_rows {
            sim.theta = r as f64 / sim.n as f64;
        }
        set!(self.trials, f.trials);
        set!(self.mode, f.mode);
        set!(self.tuning_rule, f.tuning_rule);
        set!(self.sigma_source, f.sigma_source);
        set!(self.mu_source, f.mu_source);
        set!(self.method, f.method);
        set!(self.split, f.split);
        set!(self.nonneg, f.nonneg);
        set!(self.top_k, f.top_k);
        set!(self.output_dir, f.output_dir);
        if f.mom_t.is_some() {
            self.mom_t = f.mom_t;
        }
        if f.jobs.is_some() {
            self.jobs = f.jobs;
        }
    }
}

/// Flat key-value experiment file. Every key is optional and overrides the preset.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub q: Option<f64>,
    pub sigma: Option<f64>,
    pub theta: Option<f64>,
    /// Number of all-ones rows; sets theta = holdout_rows / n.
    pub holdout_rows: Option<usize>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub magnitude_lo: Option<f64>,
    pub magnitude_hi: Option<f64>,
    pub trials: Option<usize>,
    pub mode: Option<Mode>,
    pub tuning_rule: Option<TuningRule>,
    pub sigma_source: Option<SigmaSource>,
    pub mu_source: Option<MuSource>,
    pub method: Option<Method>,
    pub mom_t: Option<f64>,
    pub split: Option<bool>,
    pub nonneg: Option<bool>,
    pub jobs: Option<usize>,
    pub top_k: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// The per-trial metrics written to trials.csv.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub mistakes_on_support: usize,
    pub mistakes_total: usize,
    pub support_size: usize,
    /// ‖x̂ − x*‖₂ of the LASSO fit.
    pub l2_error: f64,
    /// ‖x̂ᵈ − x*‖₂.
    pub l2_error_debiased: f64,
    pub eps_mean: f64,
    pub eps_var: f64,
    pub lambda_used: f64,
    pub solver_iterations: usize,
    pub converged: bool,
    pub mu_used: f64,
    pub nu_used: f64,
    pub wall_time: f64,
    /// Empty for a successful trial.
    pub error: String,
}

impl TrialRecord {
    fn failed(trial: usize, seed: u64, error: String) -> Self {
        TrialRecord {
            trial,
            seed,
            mistakes_on_support: 0,
            mistakes_total: 0,
            support_size: 0,
            l2_error: f64::NAN,
            l2_error_debiased: f64::NAN,
            eps_mean: f64::NAN,
            eps_var: f64::NAN,
            lambda_used: f64::NAN,
            solver_iterations: 0,
            converged: false,
            mu_used: f64::NAN,
            nu_used: f64::NAN,
            wall_time: 0.0,
            error,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

/// Everything one trial produces.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub report: Option<UncertaintyReport>,
    pub x_star: Option<Vec<f64>>,
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn run_trial(config: &ExperimentConfig, trial: usize) -> TrialOutcome {
    let seed = trial_seed(config.sim.seed, trial as u64);
    let start = Instant::now();
    let opts = config.pipeline_options();
    let result = catch_unwind(AssertUnwindSafe(|| {
        run_pipeline(&config.sim, &opts, &mut rng_from_seed(seed))
    }));
    let elapsed = start.elapsed().as_secs_f64();
    let (data, out) = match result {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => {
            let mut record = TrialRecord::failed(trial, seed, e.to_string());
            record.wall_time = elapsed;
            return TrialOutcome {
                record,
                report: None,
                x_star: None,
            };
        }
        Err(_) => {
            let mut record = TrialRecord::failed(trial, seed, "trial panicked".into());
            record.wall_time = elapsed;
            return TrialOutcome {
                record,
                report: None,
                x_star: None,
            };
        }
    };
    let truth = data.truth.expect("simulated data carries the truth");
    let cov = out
        .coverage
        .expect("coverage is computed when the truth is known");
    let (eps_mean, eps_var) = match &out.scalars {
        Some(s) => {
            let nu_true = config.sim.sigma.powi(2) / truth.l1_norm;
            (
                relative_error_sym(s.mu_hat, truth.l1_norm),
                relative_error_sym(s.nu_hat, nu_true),
            )
        }
        None => (f64::NAN, f64::NAN),
    };
    let record = TrialRecord {
        trial,
        seed,
        mistakes_on_support: cov.mistakes_on_support,
        mistakes_total: cov.mistakes_total,
        support_size: cov.support_size,
        l2_error: l2_dist(&out.fit.x_hat, &truth.x_star),
        l2_error_debiased: l2_dist(&out.debias.x_debiased, &truth.x_star),
        eps_mean,
        eps_var,
        lambda_used: out.lambda,
        solver_iterations: out.fit.iterations,
        converged: out.fit.converged,
        mu_used: out.report.mu_used,
        nu_used: out.nu_used,
        wall_time: elapsed,
        error: String::new(),
    };
    TrialOutcome {
        record,
        report: Some(out.report),
        x_star: Some(truth.x_star),
    }
}

/// Runs every trial, in parallel over `jobs` threads, and returns the
/// outcomes ordered by trial index.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let jobs = config
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut outcomes: Vec<TrialOutcome> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect()
    });
    outcomes.sort_by_key(|o| o.record.trial);
    Ok(outcomes)
}

/// Aggregates over the successful trials.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub failed_trials: usize,
    pub mean_mistakes_on_support: f64,
    pub max_mistakes_on_support: usize,
    /// Trial with the most on-support mistakes.
    pub worst_trial: Option<usize>,
    /// Pooled on-support miscoverage: total mistakes over total support size.
    pub miscoverage_on_support: f64,
    pub mean_mistakes_total: f64,
    pub mean_l2_error: f64,
    pub mean_eps_mean: f64,
    pub max_eps_mean: f64,
    pub mean_eps_var: f64,
    pub max_eps_var: f64,
    pub total_wall_time: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NAN, f64::max)
}

pub fn summarize(records: &[TrialRecord]) -> Summary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.ok()).collect();
    let col = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let on = col(|r| r.mistakes_on_support as f64);
    let support: usize = ok.iter().map(|r| r.support_size).sum();
    let missed: usize = ok.iter().map(|r| r.mistakes_on_support).sum();
    let worst = ok
        .iter()
        .max_by(|a, b| {
            a.mistakes_on_support
                .cmp(&b.mistakes_on_support)
                .then(b.trial.cmp(&a.trial))
        })
        .map(|r| r.trial);
    Summary {
        trials: records.len(),
        failed_trials: records.len() - ok.len(),
        mean_mistakes_on_support: mean(&on),
        max_mistakes_on_support: ok.iter().map(|r| r.mistakes_on_support).max().unwrap_or(0),
        worst_trial: worst,
        miscoverage_on_support: if support == 0 {
            0.0
        } else {
            missed as f64 / support as f64
        },
        mean_mistakes_total: mean(&col(|r| r.mistakes_total as f64)),
        mean_l2_error: mean(&col(|r| r.l2_error)),
        mean_eps_mean: mean(&col(|r| r.eps_mean)),
        max_eps_mean: max(&col(|r| r.eps_mean)),
        mean_eps_var: mean(&col(|r| r.eps_var)),
        max_eps_var: max(&col(|r| r.eps_var)),
        total_wall_time: records.iter().map(|r| r.wall_time).sum(),
    }
}

/// Float formatting shared by every output file: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

const TRIAL_HEADER: [&str; 15] = [
    "trial",
    "seed",
    "mistakes_on_support",
    "mistakes_total",
    "support_size",
    "l2_error",
    "l2_error_debiased",
    "eps_mean",
    "eps_var",
    "lambda_used",
    "solver_iterations",
    "converged",
    "mu_used",
    "nu_used",
    "error",
];

/// trials.csv: one row per trial, without timings so reruns compare byte for byte.
pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.mistakes_on_support.to_string(),
            r.mistakes_total.to_string(),
            r.support_size.to_string(),
            fmt_f64(r.l2_error),
            fmt_f64(r.l2_error_debiased),
            fmt_f64(r.eps_mean),
            fmt_f64(r.eps_var),
            fmt_f64(r.lambda_used),
            r.solver_iterations.to_string(),
            r.converged.to_string(),
            fmt_f64(r.mu_used),
            fmt_f64(r.nu_used),
            r.error.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_timings_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "seed", "wall_time_s"])?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.wall_time),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A float that serializes to JSON with 17 significant digits, or null.
struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    n: usize,
    p: usize,
    s: usize,
    q: Num,
    sigma: Num,
    theta: Num,
    holdout_rows: usize,
    gamma: Num,
    alpha: Num,
    seed: u64,
    magnitude_distribution: String,
    trials: usize,
    mode: Mode,
    tuning_rule: TuningRule,
    sigma_source: SigmaSource,
    mu_source: MuSource,
    method: Method,
    mom_t: Option<Num>,
    split: bool,
    nonneg: bool,
    output_dir: &'a Path,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    version: &'static str,
    config: ConfigEcho<'a>,
    trials: usize,
    failed_trials: usize,
    mean_mistakes_on_support: Num,
    max_mistakes_on_support: usize,
    worst_trial: Option<usize>,
    miscoverage_on_support: Num,
    mean_mistakes_total: Num,
    mean_l2_error: Num,
    mean_eps_mean: Num,
    max_eps_mean: Num,
    mean_eps_var: Num,
    max_eps_var: Num,
    total_wall_time_s: Num,
}

pub fn write_summary_json(config: &ExperimentConfig, summary: &Summary, path: &Path) -> Result<()> {
    let sim = &config.sim;
    let (lo, hi) = sim.magnitude_range;
    let doc = SummaryJson {
        version: env!("CARGO_PKG_VERSION"),
        config: ConfigEcho {
            n: sim.n,
            p: sim.p,
            s: sim.s,
            q: Num(sim.q),
            sigma: Num(sim.sigma),
            theta: Num(sim.theta),
            holdout_rows: sim.holdout_rows(),
            gamma: Num(sim.gamma),
            alpha: Num(sim.alpha),
            seed: sim.seed,
            magnitude_distribution: format!("uniform[{lo}, {hi}]"),
            trials: config.trials,
            mode: config.mode,
            tuning_rule: config.tuning_rule,
            sigma_source: config.sigma_source,
            mu_source: config.mu_source,
            method: config.method,
            mom_t: config.mom_t.map(Num),
            split: config.split,
            nonneg: config.nonneg,
            output_dir: &config.output_dir,
        },
        trials: summary.trials,
        failed_trials: summary.failed_trials,
        mean_mistakes_on_support: Num(summary.mean_mistakes_on_support),
        max_mistakes_on_support: summary.max_mistakes_on_support,
        worst_trial: summary.worst_trial,
        miscoverage_on_support: Num(summary.miscoverage_on_support),
        mean_mistakes_total: Num(summary.mean_mistakes_total),
        mean_l2_error: Num(summary.mean_l2_error),
        mean_eps_mean: Num(summary.mean_eps_mean),
        max_eps_mean: Num(summary.max_eps_mean),
        mean_eps_var: Num(summary.mean_eps_var),
        max_eps_var: Num(summary.max_eps_var),
        total_wall_time_s: Num(summary.total_wall_time),
    };
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// One row of an interval plot file.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub index: usize,
    pub truth: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

/// Writes the `top_k` coordinates with the largest true values, sorted by
/// truth descending (ties by index), as `index,truth,estimate,lower,upper,covered`.
pub fn emit_plot_data(
    report: &UncertaintyReport,
    x_star: &[f64],
    path: &Path,
    top_k: usize,
) -> Result<()> {
    crate::error::check_len("truth length", report.intervals.len(), x_star.len())?;
    let mut order: Vec<usize> = (0..x_star.len()).collect();
    order.sort_by(|&a, &b| x_star[b].total_cmp(&x_star[a]).then(a.cmp(&b)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "truth", "estimate", "lower", "upper", "covered"])?;
    for &i in order.iter().take(top_k) {
        let (lo, hi) = report.intervals[i];
        let covered = lo <= x_star[i] && x_star[i] <= hi;
        w.write_record([
            i.to_string(),
            fmt_f64(x_star[i]),
            fmt_f64(report.estimate[i]),
            fmt_f64(lo),
            fmt_f64(hi),
            covered.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_plot_data(path: &Path) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i).parse::<f64>().map_err(|e| {
                Error::Config(format!(
                    "{}: bad number {:?}: {e}",
                    path.display(),
                    field(i)
                ))
            })
        };
        rows.push(PlotRow {
            index: field(0)
                .parse()
                .map_err(|e| Error::Config(format!("{}: bad index: {e}", path.display())))?,
            truth: num(1)?,
            estimate: num(2)?,
            lower: num(3)?,
            upper: num(4)?,
            covered: field(5) == "true",
        });
    }
    Ok(rows)
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write_probe");
    fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b""))
        .map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Runs the experiment and writes trials.csv, timings.csv, summary.json and
/// one intervals_trial<k>.csv per successful trial into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    config.validate()?;
    ensure_writable(&config.output_dir)?;
    let outcomes = run_trials(config)?;
    let dir = &config.output_dir;
    for o in &outcomes {
        if let (Some(report), Some(x_star)) = (&o.report, &o.x_star) {
            let path = dir.join(format!("intervals_trial{}.csv", o.record.trial));
            emit_plot_data(report, x_star, &path, config.top_k)?;
        }
        if !o.record.ok() {
            log::warn!("trial {} failed: {}", o.record.trial, o.record.error);
        }
    }
    let records: Vec<TrialRecord> = outcomes.into_iter().map(|o| o.record).collect();
    let summary = summarize(&records);
    write_trials_csv(&records, &dir.join("trials.csv"))?;
    write_timings_csv(&records, &dir.join("timings.csv"))?;
    write_summary_json(config, &summary, &dir.join("summary.json"))?;
    Ok((records, summary))
}
