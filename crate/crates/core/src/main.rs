//! Command line entry points: `simulate`, `estimate`, `dgp` and `cv`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use iaei::error::{Error, Result};
use iaei::estimators::{fit_grid, Method};
use iaei::imputation::{build_strategy, impute_dataset, Family, Strategy, TrainingSet};
use iaei::io::{
    center, monthly_cv, write_dataset_csv, ConfigFile, CvReport, EnvSplit, EnvSummary,
    EstimateReport, Format, Report, Table,
};
use iaei::objectives::PenaltyVariant;
use iaei::optimizer::SearchConfig;
use iaei::rng::{self, tag};
use iaei::simulation::dgp::{self, SemModel};
use iaei::simulation::{apply_mcar, run_study_range, SimulationReport};
use iaei::MultiEnvDataset;

#[derive(Debug, Parser)]
#[command(
    name = "iaei",
    version,
    about = "Invariance-based variable selection with imputed outcomes"
)]
struct Cli {
    /// Master seed of the command's random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation grid from the `[simulation]` and `[imputer]` sections.
    Simulate(SimulateArgs),
    /// Fit methods on a CSV dataset.
    Estimate(EstimateArgs),
    /// Emit a synthetic dataset as CSV.
    Dgp(DgpArgs),
    /// Leave-one-month-out cross-validation with per-day gamma selection.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of replications, overriding the configuration.
    #[arg(long)]
    replications: Option<usize>,
    /// First replication index to run.
    #[arg(long)]
    start: Option<usize>,
    /// One past the last replication index to run.
    #[arg(long)]
    end: Option<usize>,
}

#[derive(Debug, Args)]
struct ImputerArgs {
    /// Imputer family: ols, random_forest or boosted_trees.
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    /// Imputer strategy: precise, bias or hbias.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Dataset to fit.
    #[arg(long)]
    input: PathBuf,
    /// Labeled rows for training the imputer, matched to the input by `env`;
    /// the input's own labeled rows are used when absent.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Comma-separated gamma grid.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Comma-separated penalty variants: basic, enhanced.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Option<Vec<PenaltyVariant>>,
    /// Remove pooled means before fitting.
    #[arg(long)]
    center: bool,
    #[command(flatten)]
    imputer: ImputerArgs,
}

#[derive(Debug, Args)]
struct DgpArgs {
    /// Structural model: model0, model1, model2 or model3.
    #[arg(long, value_parser = parse_model)]
    model: SemModel,
    /// Rows per environment.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Fraction of outcomes removed completely at random in each environment.
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct CvArgs {
    /// Evaluation table with `date` (and optionally `hour`) columns.
    #[arg(long)]
    input: PathBuf,
    /// Table the imputer is trained on.
    #[arg(long)]
    history: PathBuf,
    /// Text column defining environments within each training fold.
    #[arg(long, conflicts_with = "env_by_month")]
    env_column: Option<String>,
    /// Use calendar months as environments.
    #[arg(long)]
    env_by_month: bool,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Comma-separated gamma grid.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Penalty variant: basic or enhanced.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<PenaltyVariant>,
    /// Fraction of evaluation outcomes hidden per month and environment.
    #[arg(long)]
    mask_ratio: Option<f64>,
    /// Remove pooled means within each fold before fitting.
    #[arg(long)]
    center: bool,
    #[command(flatten)]
    imputer: ImputerArgs,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    Format::parse(s).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    Family::parse(s).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<PenaltyVariant, String> {
    PenaltyVariant::parse(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<SemModel, String> {
    SemModel::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let format = cli.format.unwrap_or_default();
    match &cli.command {
        Command::Simulate(args) => {
            let report = simulate(&config, args, cli.seed)?;
            emit(
                &Report::Simulation(report).render(format)?,
                cli.out.as_deref(),
            )
        }
        Command::Estimate(args) => {
            let report = estimate(&config, args, cli.seed)?;
            emit(
                &Report::Estimate(report).render(format)?,
                cli.out.as_deref(),
            )
        }
        Command::Dgp(args) => {
            if format != Format::Csv && cli.format.is_some() {
                return Err(Error::Config("dgp writes CSV only".into()));
            }
            let data = synthetic(args, cli.seed.unwrap_or(0))?;
            let mut buf = Vec::new();
            write_dataset_csv(&data, &mut buf)?;
            emit(&buf, cli.out.as_deref())
        }
        Command::Cv(args) => {
            let report = cross_validate(&config, args, cli.seed)?;
            emit(&Report::Cv(report).render(format)?, cli.out.as_deref())
        }
    }
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn simulate(
    config: &ConfigFile,
    args: &SimulateArgs,
    seed: Option<u64>,
) -> Result<SimulationReport> {
    let mut spec = config.simulation_spec()?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    spec.validate()?;
    let start = args.start.unwrap_or(0);
    let end = args.end.unwrap_or(spec.replications);
    run_study_range(&spec, start, end)
}

fn estimate(config: &ConfigFile, args: &EstimateArgs, seed: Option<u64>) -> Result<EstimateReport> {
    let mut options = config.estimate_options()?;
    if let Some(m) = &args.methods {
        options.methods = m.clone();
    }
    if let Some(g) = &args.gammas {
        options.gammas = g.clone();
    }
    if let Some(v) = &args.variants {
        options.variants = v.clone();
    }
    let mut imputer = config.imputer_spec(
        args.imputer.family.unwrap_or(options.imputer.family),
        args.imputer.strategy.unwrap_or(options.imputer.strategy),
    );
    if let Some(seed) = seed {
        imputer.seed = seed;
    }
    options.center |= args.center;

    let table = Table::read_path(&args.input)?;
    let data = table.group_by(|r| r.env.clone())?;
    let environments = data
        .environments()
        .iter()
        .zip(data.weights())
        .map(|(e, &w)| EnvSummary {
            env_id: e.env_id().to_owned(),
            n_rows: e.n_rows(),
            n_labeled: e.n_labeled(),
            weight: w,
        })
        .collect();

    let methods_defaulted = args.methods.is_none() && config.estimate.methods.is_none();
    if methods_defaulted && !data.is_fully_labeled() {
        options.methods.retain(|&m| m != Method::Oracle);
        eprintln!("skipping oracle: input has missing outcomes");
    }

    let mut report =
        EstimateReport::new(args.input.display().to_string(), environments, Vec::new());
    let mut imputations = None;
    if options.methods.iter().any(|m| m.needs_imputations()) {
        let sources = match &args.history {
            Some(path) => {
                report.imputer_training = Some(path.display().to_string());
                history_sets(&Table::read_path(path)?, &data)?
            }
            None => {
                report.imputer_training = Some("labeled input rows".into());
                data.environments()
                    .iter()
                    .map(TrainingSet::from_labeled)
                    .collect()
            }
        };
        let models = build_strategy(&imputer, &sources)?;
        let (imps, diagnostics) = impute_dataset(&models, &data)?;
        imputations = Some(imps);
        report.imputer = Some(imputer);
        report.diagnostics = Some(diagnostics);
    }

    let (data, imputations) = if options.center {
        let (d, i, c) = center(&data, imputations.as_ref())?;
        report.centering = Some(c);
        (d, i)
    } else {
        (data, imputations)
    };

    for &method in &options.methods {
        for &variant in &options.variants {
            let search = SearchConfig {
                variant,
                ..options.search.clone()
            };
            report.fits.extend(fit_grid(
                method,
                &data,
                imputations.as_ref(),
                &options.gammas,
                &search,
            )?);
        }
    }
    Ok(report)
}

/// Labeled history rows of each input environment, matched by `env`.
fn history_sets(history: &Table, data: &MultiEnvDataset) -> Result<Vec<TrainingSet>> {
    if history.p != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "history has p = {}, input has p = {}",
            history.p,
            data.p()
        )));
    }
    data.environments()
        .iter()
        .map(|env| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for r in history.records.iter().filter(|r| r.env == env.env_id()) {
                if let Some(v) = r.y {
                    x.extend_from_slice(&r.x);
                    y.push(v);
                }
            }
            if y.is_empty() {
                return Err(Error::Config(format!(
                    "history has no labeled rows for environment `{}`",
                    env.env_id()
                )));
            }
            TrainingSet::new(history.p, x, y)
        })
        .collect()
}

fn synthetic(args: &DgpArgs, seed: u64) -> Result<MultiEnvDataset> {
    let data = dgp::generate_dataset(args.model, args.n, seed)?;
    match args.ratio {
        None => Ok(data),
        Some(ratio) => {
            let envs = data
                .environments()
                .iter()
                .enumerate()
                .map(|(e, env)| {
                    apply_mcar(env, ratio, &mut rng::stream(seed, &[tag("mask"), e as u64]))
                })
                .collect::<Result<Vec<_>>>()?;
            MultiEnvDataset::new(envs)
        }
    }
}

fn cross_validate(config: &ConfigFile, args: &CvArgs, seed: Option<u64>) -> Result<CvReport> {
    let mut cv = config.cv_config()?;
    let env_configured = config.cv.env_split.is_some() || config.cv.env_column.is_some();
    if args.env_by_month {
        cv.env_split = EnvSplit::Month;
    } else if let Some(c) = &args.env_column {
        cv.env_split = EnvSplit::Column(c.clone());
    } else if !env_configured {
        return Err(Error::Config(
            "cv needs an environment definition: pass --env-column <name> or --env-by-month, \
             or set `env_split` in the [cv] section"
                .into(),
        ));
    }
    if let Some(m) = &args.methods {
        cv.methods = m.clone();
    }
    if let Some(g) = &args.gammas {
        cv.gammas = g.clone();
    }
    if let Some(v) = args.variant {
        cv.variant = v;
    }
    if let Some(r) = args.mask_ratio {
        cv.mask_ratio = r;
    }
    cv.center |= args.center;
    if args.imputer.family.is_some() || args.imputer.strategy.is_some() {
        cv.imputer = config.imputer_spec(
            args.imputer.family.unwrap_or(cv.imputer.family),
            args.imputer.strategy.unwrap_or(cv.imputer.strategy),
        );
    }
    if let Some(seed) = seed {
        cv.seed = seed;
        cv.imputer.seed = seed;
    }
    eprintln!("cv environments: {}", cv.env_split.describe());
    let eval = Table::read_path(&args.input)?;
    let history = Table::read_path(&args.history)?;
    let result = monthly_cv(&eval, &history, &cv)?;
    Ok(CvReport::new(
        args.input.display().to_string(),
        args.history.display().to_string(),
        result,
    ))
}
