//! `lmed` — longitudinal mediation estimation, simulation studies, and exact
//! oracle queries for discrete structural models.
//!
//! Three subcommands share one flag vocabulary: `estimate` fits a dataset,
//! `simulate` runs a Monte Carlo scenario grid against a model file, and
//! `oracle` enumerates exact functionals and identity residuals. Every value
//! can come from a `--config` JSON file; explicit flags override the file,
//! which overrides built-in defaults. Identical inputs produce byte-identical
//! outputs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use lmed::config::{RunConfig, DEFAULT_PERTURBATION_EPS};
use lmed::data::{LongitudinalDataset, NodeSchema};
use lmed::error::{Error, Result};
use lmed::estimator::{estimate_mediation, EstimatorOptions};
use lmed::nuisance::DEFAULT_G_FLOOR;
use lmed::oracle::{
    check_assumptions, efficiency_bound, sequential_regression_truth, true_theta_counterfactual,
    true_theta_identification, von_mises_check, DiscreteLaw, InterventionPair, NpsemSpec,
};
use lmed::report::{to_json_pretty, EstimateReport, OracleReport};
use lmed::simulate::{replications_to_csv, run_mc_grid, Scenario};

#[derive(Parser)]
#[command(
    name = "lmed",
    version,
    about = "Longitudinal mediation effects: estimation, simulation, and exact oracles",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate interventional direct/indirect effects from a dataset.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo scenario grid against a discrete model file.
    Simulate(SimulateArgs),
    /// Enumerate exact functionals and identity residuals for a model file.
    Oracle(OracleArgs),
}

/// Flags shared by every subcommand. All optional: a missing flag falls back
/// to the `--config` file, then to the built-in default named in its help
/// line.
#[derive(Args)]
struct SharedArgs {
    /// Run config file (JSON); explicit flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Longitudinal dataset CSV [no default; required by `estimate`].
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,

    /// Dataset schema JSON [no default; required by `estimate`].
    #[arg(long, value_name = "FILE")]
    schema: Option<PathBuf>,

    /// Discrete structural model JSON [no default; required by `simulate`
    /// and `oracle`].
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,

    /// Primary-regime treatment values, comma-separated, one per time point
    /// [no default].
    #[arg(long, value_name = "VALUES", value_delimiter = ',', allow_hyphen_values = true)]
    a_prime: Option<Vec<i64>>,

    /// Reference-regime treatment values, comma-separated, one per time
    /// point [no default].
    #[arg(long, value_name = "VALUES", value_delimiter = ',', allow_hyphen_values = true)]
    a_star: Option<Vec<i64>>,

    /// Cross-fitting fold count [default: 5].
    #[arg(long, value_name = "V")]
    folds: Option<usize>,

    /// Seed for fold assignment and simulation draws [default: 0].
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Two-sided confidence level complement [default: 0.05].
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,

    /// Propensity truncation floor [default: 0.01].
    #[arg(long, value_name = "FLOOR")]
    g_floor: Option<f64>,

    /// Report output path [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Worker thread bound; the current engine always uses one thread
    /// [default: 1].
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    shared: SharedArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    shared: SharedArgs,

    /// Replications per (scenario, n) cell [default: 100].
    #[arg(long, value_name = "R")]
    reps: Option<usize>,

    /// Sample sizes, comma-separated [default: 500].
    #[arg(long, value_name = "NS", value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,

    /// Scenario to run; repeatable [default: all four]. One of all-correct,
    /// q-misspecified, g-misspecified, both-misspecified.
    #[arg(long = "scenario", value_name = "NAME", value_parser = parse_scenario)]
    scenarios: Option<Vec<Scenario>>,

    /// Shrinkage for the saturated learner families [default: 0].
    #[arg(long, value_name = "S")]
    shrinkage: Option<f64>,

    /// Flat per-replication CSV output path [default: none].
    #[arg(long, value_name = "FILE")]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    shared: SharedArgs,

    /// Perturbation scale for the expansion-identity residuals
    /// [default: 0.001].
    #[arg(long, value_name = "EPS")]
    eps: Option<f64>,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    match s {
        "all-correct" => Ok(Scenario::AllCorrect),
        "q-misspecified" => Ok(Scenario::QMisspecified),
        "g-misspecified" => Ok(Scenario::GMisspecified),
        "both-misspecified" => Ok(Scenario::BothMisspecified),
        other => Err(format!(
            "unknown scenario '{other}' (expected all-correct, q-misspecified, \
             g-misspecified, or both-misspecified)"
        )),
    }
}

/// Flags merged over the config file. Accessors implement the precedence
/// rule: flag, then file, then default.
struct Resolved {
    flags: SharedArgs,
    file: RunConfig,
}

impl Resolved {
    fn new(flags: SharedArgs) -> Result<Resolved> {
        let file = match &flags.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(threads) = flags.threads.or(file.threads) {
            if threads == 0 {
                return Err(Error::validation("threads must be at least 1"));
            }
        }
        Ok(Resolved { flags, file })
    }

    fn required_path(
        flag: &Option<PathBuf>,
        file: &Option<PathBuf>,
        what: &str,
        flag_name: &str,
    ) -> Result<PathBuf> {
        flag.clone().or_else(|| file.clone()).ok_or_else(|| {
            Error::validation(format!("{what} missing: pass {flag_name} or set it in the config"))
        })
    }

    fn data_path(&self) -> Result<PathBuf> {
        Resolved::required_path(&self.flags.data, &self.file.data, "dataset CSV", "--data")
    }

    fn schema_path(&self) -> Result<PathBuf> {
        Resolved::required_path(&self.flags.schema, &self.file.schema, "dataset schema", "--schema")
    }

    fn spec_path(&self) -> Result<PathBuf> {
        Resolved::required_path(&self.flags.spec, &self.file.spec, "model file", "--spec")
    }

    fn pair(&self) -> Result<InterventionPair> {
        let primary = self.flags.a_prime.clone().or_else(|| self.file.a_prime.clone());
        let reference = self.flags.a_star.clone().or_else(|| self.file.a_star.clone());
        match (primary, reference) {
            (Some(p), Some(r)) => Ok(InterventionPair::new(p, r)),
            _ => Err(Error::validation(
                "intervention regimes missing: pass --a-prime and --a-star \
                 (comma-separated, one value per time point) or set them in the config",
            )),
        }
    }

    fn seed(&self) -> u64 {
        self.flags.seed.or(self.file.seed).unwrap_or(0)
    }

    fn out(&self) -> Option<PathBuf> {
        self.flags.out.clone().or_else(|| self.file.out.clone())
    }

    fn estimator_options(&self) -> Result<EstimatorOptions> {
        let mut opts = self.file.estimator_options();
        if let Some(v) = self.flags.folds {
            opts.folds = v;
        }
        if let Some(v) = self.flags.seed {
            opts.seed = v;
        }
        if let Some(v) = self.flags.alpha {
            opts.alpha = v;
        }
        if let Some(v) = self.flags.g_floor {
            opts.g_floor = v;
        }
        if opts.folds == 0 {
            return Err(Error::validation("folds must be at least 1"));
        }
        if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
            return Err(Error::validation(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                opts.alpha
            )));
        }
        if !(opts.g_floor > 0.0 && opts.g_floor < 0.5) {
            return Err(Error::validation(format!(
                "the propensity floor must lie in (0, 0.5), got {}",
                opts.g_floor
            )));
        }
        Ok(opts)
    }

    fn read_text(path: &Path) -> Result<String> {
        fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("reading {}: {e}", path.display())))
    }
}

/// Write `text` to `out`, or to stdout when no path is set.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut handle = stdout.lock();
            handle.write_all(text.as_bytes())?;
            handle.flush()?;
            Ok(())
        }
    }
}

fn load_spec(resolved: &Resolved) -> Result<(NpsemSpec, InterventionPair)> {
    let text = Resolved::read_text(&resolved.spec_path()?)?;
    let spec = NpsemSpec::from_json_str(&text)?;
    let pair = resolved.pair()?;
    pair.validate_for(&spec)?;
    Ok((spec, pair))
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let resolved = Resolved::new(args.shared)?;
    let schema_text = Resolved::read_text(&resolved.schema_path()?)?;
    let schema = NodeSchema::from_json_str(&schema_text)?;
    let data_path = resolved.data_path()?;
    let file = fs::File::open(&data_path)
        .map_err(|e| Error::validation(format!("reading {}: {e}", data_path.display())))?;
    let data = LongitudinalDataset::from_csv_reader(&schema, file)?;
    let pair = resolved.pair()?;
    let opts = resolved.estimator_options()?;
    let report = EstimateReport::from_mediation(&estimate_mediation(&data, &pair, &opts)?);
    emit(&resolved.out(), &to_json_pretty(&report)?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let resolved = Resolved::new(args.shared)?;
    let (spec, pair) = load_spec(&resolved)?;
    let law = DiscreteLaw::new(&spec)?;

    let mut grid = resolved.file.grid_options();
    grid.estimator = resolved.estimator_options()?;
    grid.base_seed = resolved.seed();
    if let Some(reps) = args.reps {
        grid.reps = reps;
    }
    if let Some(ns) = args.sample_sizes {
        grid.ns = ns;
    }
    if let Some(scenarios) = args.scenarios {
        grid.scenarios = scenarios;
    }
    if let Some(s) = args.shrinkage {
        grid.shrinkage = s;
    }
    if grid.reps == 0 {
        return Err(Error::validation("replications must be at least 1"));
    }
    if grid.ns.is_empty() {
        return Err(Error::validation("sample_sizes must not be empty"));
    }

    let report = run_mc_grid(&law, &pair, &grid)?;
    if let Some(csv_path) = args.csv_out.or_else(|| resolved.file.csv_out.clone()) {
        fs::write(&csv_path, replications_to_csv(&report.replications))?;
    }
    emit(&resolved.out(), &to_json_pretty(&report)?)
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let resolved = Resolved::new(args.shared)?;
    let (spec, pair) = load_spec(&resolved)?;
    let eps = args
        .eps
        .or(resolved.file.perturbation_eps)
        .unwrap_or(DEFAULT_PERTURBATION_EPS);
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::validation(format!(
            "perturbation_eps must be positive and finite, got {eps}"
        )));
    }

    let identification = true_theta_identification(&spec, &pair)?;
    let counterfactual = true_theta_counterfactual(&spec, &pair)?;
    let sequential = sequential_regression_truth(&spec, &pair)?;
    let bound = efficiency_bound(&spec, &pair)?;
    let assumptions = check_assumptions(&spec, &pair)?;
    let von_mises = von_mises_check(&spec, &pair, eps, resolved.seed())?;

    let report = OracleReport::assemble(
        &sequential,
        (identification.theta - counterfactual.theta).abs(),
        bound.mean_score,
        bound.variance,
        assumptions,
        &von_mises,
        |codes| codes.iter().map(|c| c.to_string()).collect(),
    );
    emit(&resolved.out(), &to_json_pretty(&report)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

// Unused-default guard: the help text above hard-codes the library defaults;
// this keeps them honest at compile time.
const _: () = {
    assert!(DEFAULT_G_FLOOR == 0.01);
    assert!(DEFAULT_PERTURBATION_EPS == 1e-3);
};
