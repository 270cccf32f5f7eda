use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgdebias::experiment::{fmt_f64, run_experiment, ExperimentConfig, Preset};
use pgdebias::matrix::BinaryMatrix;
use pgdebias::rng::{rng_from_seed, trial_seed};
use pgdebias::scalar_est::{default_t, estimate_scalars};
use pgdebias::tuning::tuning_report;
use pgdebias::{debias, Error, Result};

#[derive(Parser)]
#[command(
    name = "pgdebias",
    about = "Debiased sparse regression under Poisson-Gauss noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte-Carlo experiment and write results to the output directory.
    Run(Common),
    /// Print the tuning quantities for one data set as JSON.
    Tune {
        #[command(flatten)]
        common: Common,
        /// 0/1 design matrix as headerless CSV; simulated from the config when absent.
        #[arg(long, requires = "response")]
        design: Option<PathBuf>,
        /// Raw responses, one per line, matching the design rows.
        #[arg(long, requires = "design")]
        response: Option<PathBuf>,
        /// μ estimate for d_easy; taken from the hold-out rows when absent.
        #[arg(long)]
        mu: Option<f64>,
        /// Also compute W, which costs O(p²·n/64).
        #[arg(long)]
        with_w: bool,
    },
    /// Print μ̂, v̂ and ν̂ from hold-out responses as JSON.
    EstimateScalars {
        #[command(flatten)]
        common: Common,
        /// Hold-out responses, one per line; simulated from the config when absent.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

#[derive(Args)]
struct Common {
    /// Flat TOML file; overrides the preset, and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::preset(self.preset);
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            c.sim.seed = v;
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        let v = field
            .parse()
            .map_err(|e| Error::Config(format!("{}: bad number {field:?}: {e}", path.display())))?;
        out.push(v);
    }
    Ok(out)
}

fn read_design(path: &Path) -> Result<BinaryMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| match f.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Config(format!(
                    "{}: design entry {other:?} is not 0/1",
                    path.display()
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    Ok(BinaryMatrix::from_rows(&rows))
}

/// Raw Bernoulli-block responses and hold-out responses for trial 0 of the config.
fn simulated(c: &ExperimentConfig) -> Result<(BinaryMatrix, Vec<f64>, Vec<f64>)> {
    let mut rng = rng_from_seed(trial_seed(c.sim.seed, 0));
    let data = debias::simulate(&c.sim, false, &mut rng)?;
    let nb = data.design.bernoulli_rows();
    let block = data.design.bernoulli_block();
    Ok((
        block.a_raw,
        data.obs.y[..nb].to_vec(),
        data.obs.y[nb..].to_vec(),
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let c = common.resolve()?;
            let (_, s) = run_experiment(&c)?;
            println!(
                "trials={} failed={} miscoverage_on_support={} max_mistakes_on_support={} out={}",
                s.trials,
                s.failed_trials,
                fmt_f64(s.miscoverage_on_support),
                s.max_mistakes_on_support,
                c.output_dir.display()
            );
        }
        Command::Tune {
            common,
            design,
            response,
            mu,
            with_w,
        } => {
            let c = common.resolve()?;
            let (a, y, holdout) = match (design, response) {
                (Some(d), Some(r)) => {
                    let a = read_design(&d)?;
                    let y = read_column(&r)?;
                    if a.nrows() != y.len() {
                        return Err(Error::DimensionMismatch {
                            what: "response length",
                            expected: a.nrows(),
                            got: y.len(),
                        });
                    }
                    (a, y, Vec::new())
                }
                _ => simulated(&c)?,
            };
            let mu_hat = match mu {
                Some(m) => m,
                None => {
                    estimate_scalars(
                        &holdout,
                        c.method,
                        c.mom_t.unwrap_or_else(|| default_t(a.nrows())),
                    )
                    .map_err(|_| Error::InvalidArgument("no hold-out rows: pass --mu".into()))?
                    .mu_hat
                }
            };
            let report = tuning_report(
                &a,
                y.iter().sum(),
                mu_hat,
                c.sim.sigma,
                c.sim.q,
                c.sim.gamma,
                with_w,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::EstimateScalars { common, holdout } => {
            let c = common.resolve()?;
            let (y, n) = match holdout {
                Some(path) => {
                    let y = read_column(&path)?;
                    let n = y.len();
                    (y, n)
                }
                None => (simulated(&c)?.2, c.sim.n),
            };
            let t = c.mom_t.unwrap_or_else(|| default_t(n));
            let est = estimate_scalars(&y, c.method, t)?;
            println!("{}", serde_json::to_string_pretty(&est)?);
        }
        Command::Version => println!("pgdebias {}", env!("CARGO_PKG_VERSION")),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
