//! Command-line front end.
//!
//! Exit status: 0 on success (whatever the test decision), 1 on usage
//! errors, 2 on data or validation errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::global_tests::{dm_test, fluctuation_test, simulate_fluctuation_cv, DmOutcome, FluctuationOutcome};
use crate::local_tests::{
    max_procedure, max_procedure_split, s_test_block_with, BlockForm, BlockOptions, CovarianceEstimator,
    MaxOutcome, SOutcome, WeightingScheme,
};
use crate::montecarlo::{run_experiment_1, run_experiment_2, McExperimentSpec};
use crate::series::{load_series_csv, Loss, LossDifferentialSeries};
use crate::spf::{evaluate, load_nowcast_csv, nowcast_errors, write_plot_csv, EvalConfig, EvaluationPair};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Pretty,
}

#[derive(Debug, Parser)]
#[command(name = "epa-breaks", version, about = "Equal predictive ability tests under brief instability")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, env = "EPA_BREAKS_FORMAT", default_value = "json")]
    pub format: OutputFormat,

    /// Worker threads for simulations; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// Require an explicit --seed on every stochastic subcommand.
    #[arg(long, global = true)]
    pub strict_repro: bool,

    /// Print progress notes on standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diebold-Mariano test on the full sample.
    Dm(DmArgs),
    /// Fluctuation test over centred rolling windows.
    Fluctuation(FluctuationArgs),
    /// Simulate a fluctuation-test critical value.
    FluctCv(FluctCvArgs),
    /// End-of-sample S test.
    STest(STestArgs),
    /// MAX procedure.
    Max(MaxArgs),
    /// Monte Carlo size/power tables.
    Mc {
        #[command(subcommand)]
        table: McTable,
    },
    /// Nowcast evaluation of the survey median against the no-growth benchmark.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// CSV with `period,actual,forecast_a,forecast_b` or `period,d`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct DmArgs {
    #[command(flatten)]
    pub input: DataArg,
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Two-sided critical value; defaults to 2.032 at 5%.
    #[arg(long)]
    pub cv: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub size: f64,
}

#[derive(Debug, Args)]
pub struct FluctuationArgs {
    #[command(flatten)]
    pub input: DataArg,
    #[arg(long, default_value_t = 0.3)]
    pub kappa: f64,
    #[arg(long)]
    pub bandwidth: Option<usize>,
    #[arg(long)]
    pub cv: Option<f64>,
    /// Also write the rolling statistic path as CSV.
    #[arg(long)]
    pub path_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FluctCvArgs {
    #[arg(long, default_value_t = 0.3)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.05)]
    pub size: f64,
    #[arg(long, default_value_t = 2000)]
    pub grid: usize,
    #[arg(long, default_value_t = 50_000)]
    pub replications: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Identity,
    Restricted,
    Prechange,
}

impl From<SchemeArg> for WeightingScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Identity => WeightingScheme::Identity,
            SchemeArg::Restricted => WeightingScheme::RestrictedSigma,
            SchemeArg::Prechange => WeightingScheme::PrechangeSigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    WeightedSum,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Block,
    Toeplitz,
}

#[derive(Debug, Args)]
pub struct BlockArgs {
    /// Reduction of a residual block to a scalar.
    #[arg(long, value_enum, default_value = "weighted-sum")]
    pub form: FormArg,
    /// Estimator of the weighting matrix.
    #[arg(long, value_enum, default_value = "block")]
    pub estimator: EstimatorArg,
}

impl From<&BlockArgs> for BlockOptions {
    fn from(a: &BlockArgs) -> Self {
        BlockOptions {
            form: match a.form {
                FormArg::WeightedSum => BlockForm::WeightedSum,
                FormArg::Quadratic => BlockForm::Quadratic,
            },
            estimator: match a.estimator {
                EstimatorArg::Block => CovarianceEstimator::BlockSample,
                EstimatorArg::Toeplitz => CovarianceEstimator::Toeplitz,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct STestArgs {
    #[command(flatten)]
    pub input: DataArg,
    /// Number of final observations under suspicion.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "identity")]
    pub scheme: SchemeArg,
    #[command(flatten)]
    pub block: BlockArgs,
    /// Include the reference statistics in the output.
    #[arg(long)]
    pub dump_refs: bool,
}

#[derive(Debug, Args)]
pub struct MaxArgs {
    #[command(flatten)]
    pub input: DataArg,
    #[arg(long, requires = "lambda2", conflicts_with_all = ["train_end", "monitor_end"])]
    pub lambda1: Option<f64>,
    #[arg(long, requires = "lambda1")]
    pub lambda2: Option<f64>,
    /// Last period of the training window.
    #[arg(long, requires = "monitor_end")]
    pub train_end: Option<String>,
    /// Last period of the monitoring window.
    #[arg(long, requires = "train_end")]
    pub monitor_end: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum McTable {
    /// DM, fluctuation, S and MAX under global, local and point deviations.
    Table1(McArgs),
    /// Block S test under three weighting schemes.
    Table2(McArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McOut {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub replications: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides --format for the table.
    #[arg(long, value_enum)]
    pub out: Option<McOut>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with `quarter,gdp_level,spf_median_level`.
    #[arg(long)]
    pub data: PathBuf,
    /// Last quarter of the stable period.
    #[arg(long, default_value = "2019Q4")]
    pub split: String,
    /// Length of the instability block (default: quarters after the split).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub covid_k: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write growth rates and errors as plot-ready CSV.
    #[arg(long)]
    pub emit_plots: Option<PathBuf>,
    #[command(flatten)]
    pub block: BlockArgs,
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cli, err) {
        Ok(text) => {
            if out.write_all(text.as_bytes()).is_err() {
                return EXIT_DATA;
            }
            EXIT_OK
        }
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command and returns the text for standard output.
/// Progress notes are buffered and copied to `err` once the command ends.
pub fn dispatch(cli: &Cli, err: &mut dyn Write) -> CliResult<String> {
    let mut notes = Vec::new();
    let result = match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| execute(cli, &mut notes))
        }
        None => execute(cli, &mut notes),
    };
    let _ = err.write_all(&notes);
    result
}

fn seed_of(cli: &Cli, seed: Option<u64>) -> CliResult<u64> {
    match (seed, cli.strict_repro) {
        (Some(s), _) => Ok(s),
        (None, true) => Err(CliError::Usage("--strict-repro requires --seed".into())),
        (None, false) => Ok(DEFAULT_SEED),
    }
}

fn load(input: &DataArg) -> Result<LossDifferentialSeries> {
    load_series_csv(&input.data, Loss::SquaredError)
}

fn execute(cli: &Cli, err: &mut Vec<u8>) -> CliResult<String> {
    let fmt = cli.format;
    match &cli.command {
        Command::Dm(a) => {
            let d = load(&a.input)?;
            let o = dm_test(&d, a.bandwidth, a.cv, a.size)?;
            Ok(render(fmt, &o, dm_rows(&o))?)
        }
        Command::Fluctuation(a) => {
            let d = load(&a.input)?;
            let o = fluctuation_test(&d, a.kappa, a.bandwidth, a.cv)?;
            if let Some(path) = &a.path_csv {
                let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
                w.write_record(["s", "period", "fl"]).map_err(Error::from)?;
                for p in &o.fl_path {
                    let label = d.labels().map(|l| l[p.s - 1].clone()).unwrap_or_default();
                    w.write_record([p.s.to_string(), label, p.fl.to_string()])
                        .map_err(Error::from)?;
                }
                w.flush().map_err(Error::from)?;
            }
            Ok(render(fmt, &o, fluctuation_rows(&o))?)
        }
        Command::FluctCv(a) => {
            let seed = seed_of(cli, a.seed)?;
            if cli.verbose > 0 {
                let _ = writeln!(err, "simulating {} paths on a grid of {}", a.replications, a.grid);
            }
            let cv = simulate_fluctuation_cv(a.kappa, a.size, a.grid, a.replications, seed)?;
            #[derive(Serialize)]
            struct CvOut {
                kappa: f64,
                nominal_size: f64,
                grid: usize,
                replications: usize,
                seed: u64,
                critical_value: f64,
            }
            let o = CvOut {
                kappa: a.kappa,
                nominal_size: a.size,
                grid: a.grid,
                replications: a.replications,
                seed,
                critical_value: cv,
            };
            let rows = vec![
                ("kappa", o.kappa.to_string()),
                ("nominal_size", o.nominal_size.to_string()),
                ("grid", o.grid.to_string()),
                ("replications", o.replications.to_string()),
                ("seed", o.seed.to_string()),
                ("critical_value", format!("{:.6}", o.critical_value)),
            ];
            Ok(render(fmt, &o, rows)?)
        }
        Command::STest(a) => {
            let d = load(&a.input)?;
            let o = s_test_block_with(&d, a.k as usize, a.alpha, a.scheme.into(), (&a.block).into())?;
            let rows = s_rows(&o);
            if a.dump_refs {
                Ok(render(fmt, &o, rows)?)
            } else {
                let mut v = serde_json::to_value(&o).map_err(json_err)?;
                if let Some(m) = v.as_object_mut() {
                    m.remove("empirical_distribution");
                }
                Ok(render(fmt, &v, rows)?)
            }
        }
        Command::Max(a) => {
            let d = load(&a.input)?;
            let o = match (a.lambda1, a.lambda2, &a.train_end, &a.monitor_end) {
                (Some(l1), Some(l2), None, None) => max_procedure(&d, l1, l2)?,
                (None, None, Some(te), Some(me)) => {
                    let find = |p: &str| {
                        d.position_of(p).map(|i| i + 1).ok_or_else(|| {
                            CliError::Data(Error::InvalidParameter(format!("period {p} not in data")))
                        })
                    };
                    max_procedure_split(&d, find(te)?, find(me)?)?
                }
                (None, None, None, None) => max_procedure(&d, 0.95, 1.0)?,
                _ => {
                    return Err(CliError::Usage(
                        "use either --lambda1/--lambda2 or --train-end/--monitor-end".into(),
                    ))
                }
            };
            Ok(render(fmt, &o, max_rows(&o))?)
        }
        Command::Mc { table } => {
            let (a, spec, run): (_, _, fn(&McExperimentSpec) -> Result<_>) = match table {
                McTable::Table1(a) => (a, McExperimentSpec::table1(a.replications as usize, seed_of(cli, a.seed)?), run_experiment_1),
                McTable::Table2(a) => (a, McExperimentSpec::table2(a.replications as usize, seed_of(cli, a.seed)?), run_experiment_2),
            };
            if cli.verbose > 0 {
                let _ = writeln!(err, "running {} cells x {} replications", spec.cells.len(), spec.replications);
            }
            let t = run(&spec)?;
            Ok(match (a.out, fmt) {
                (Some(McOut::Csv), _) | (None, OutputFormat::Csv) => t.to_csv(),
                (Some(McOut::Json), _) | (None, OutputFormat::Json) => to_json(&t)?,
                (None, OutputFormat::Pretty) => t.to_pretty(),
            })
        }
        Command::Evaluate(a) => {
            let data = load_nowcast_csv(&a.data)?;
            let split = a.split.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            let config = EvalConfig {
                block_length: a.covid_k.map(|k| k as usize),
                block_options: (&a.block).into(),
                ..EvalConfig::default()
            };
            let report = evaluate(&data, split, &config)?;
            if let Some(path) = &a.emit_plots {
                let e = nowcast_errors(&data)?;
                write_plot_csv(&e, std::fs::File::create(path).map_err(Error::from)?)?;
            }
            let text = match fmt {
                OutputFormat::Json => to_json(&report)?,
                OutputFormat::Csv => evaluation_csv(&report),
                OutputFormat::Pretty => evaluation_pretty(&report),
            };
            match &a.out {
                Some(path) => {
                    std::fs::write(path, &text).map_err(Error::from)?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
    }
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Data(Error::Parse(e.to_string()))
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(json_err)?;
    s.push('\n');
    Ok(s)
}

fn render<T: Serialize>(fmt: OutputFormat, value: &T, rows: Vec<(&str, String)>) -> CliResult<String> {
    Ok(match fmt {
        OutputFormat::Json => to_json(value)?,
        OutputFormat::Csv => {
            let header: Vec<&str> = rows.iter().map(|(k, _)| *k).collect();
            let vals: Vec<&str> = rows.iter().map(|(_, v)| v.as_str()).collect();
            format!("{}\n{}\n", header.join(","), vals.join(","))
        }
        OutputFormat::Pretty => {
            let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            rows.iter().fold(String::new(), |mut s, (k, v)| {
                let _ = writeln!(s, "{k:<w$}  {v}");
                s
            })
        }
    })
}

fn decision(reject: bool) -> String {
    if reject { "reject" } else { "fail to reject" }.to_string()
}

fn dm_rows(o: &DmOutcome) -> Vec<(&'static str, String)> {
    vec![
        ("t_dm", format!("{:.6}", o.t_dm)),
        ("mean_d", format!("{:.6}", o.mean_d)),
        ("sigma2", format!("{:.6}", o.sigma2)),
        ("bandwidth", o.bandwidth.to_string()),
        ("T", o.len.to_string()),
        ("critical_value", o.critical_value.to_string()),
        ("nominal_size", o.nominal_size.to_string()),
        ("decision", decision(o.reject)),
    ]
}

fn fluctuation_rows(o: &FluctuationOutcome) -> Vec<(&'static str, String)> {
    vec![
        ("window", o.window.to_string()),
        ("kappa", o.kappa.to_string()),
        ("sigma2", format!("{:.6}", o.sigma2)),
        ("bandwidth", o.bandwidth.to_string()),
        ("fl_min", format!("{:.6}", o.fl_min)),
        ("fl_max", format!("{:.6}", o.fl_max)),
        ("statistic", format!("{:.6}", o.statistic)),
        ("critical_value", o.critical_value.to_string()),
        ("decision", decision(o.reject)),
    ]
}

fn s_rows(o: &SOutcome) -> Vec<(&'static str, String)> {
    vec![
        ("statistic", format!("{:.6}", o.statistic)),
        ("critical_value", format!("{:.6}", o.critical_value)),
        ("block_length", o.block_length.to_string()),
        ("scheme", o.scheme.to_string()),
        ("references", o.empirical_distribution.len().to_string()),
        ("alpha", o.alpha.to_string()),
        ("decision", decision(o.reject)),
    ]
}

fn max_rows(o: &MaxOutcome) -> Vec<(&'static str, String)> {
    vec![
        ("train_max", format!("{:.6}", o.train_max)),
        ("monitor_max", format!("{:.6}", o.monitor_max)),
        ("train_end", o.train_end.to_string()),
        ("monitor_end", o.monitor_end.to_string()),
        ("lambda1", o.lambda1.to_string()),
        ("lambda2", o.lambda2.to_string()),
        ("size", format!("{:.6}", o.size)),
        ("flag", o.flag.to_string()),
    ]
}

fn evaluation_csv(r: &EvaluationPair) -> String {
    let mut s = String::from("period,rmse_spf,rmse_naive,ratio,dm,fl_min,fl_max\n");
    for rep in [&r.stable, &r.full] {
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            rep.subperiod, rep.rmse_spf, rep.rmse_naive, rep.ratio, rep.dm.t_dm, rep.fl.fl_min, rep.fl.fl_max
        );
    }
    s.push_str("test,statistic,critical_value,decision\n");
    for o in &r.full.s_outcomes {
        let _ = writeln!(s, "S({}),{:.6},{:.6},{}", o.scheme, o.statistic, o.critical_value, decision(o.reject));
    }
    if let Some(m) = &r.full.max {
        let _ = writeln!(s, "MAX,{:.6},{:.6},{}", m.monitor_max, m.train_max, decision(m.flag));
    }
    s
}

fn evaluation_pretty(r: &EvaluationPair) -> String {
    let mut s = format!(
        "{:<16}{:>10}{:>12}{:>8}{:>8}{:>8}{:>8}\n",
        "Period", "RMSE_SPF", "RMSE_Naive", "Ratio", "DM", "Fl_l", "Fl_u"
    );
    for rep in [&r.stable, &r.full] {
        let _ = writeln!(
            s,
            "{:<16}{:>10.2}{:>12.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}",
            rep.subperiod, rep.rmse_spf, rep.rmse_naive, rep.ratio, rep.dm.t_dm, rep.fl.fl_min, rep.fl.fl_max
        );
    }
    s.push('\n');
    let mut head = String::new();
    let mut vals = String::new();
    for o in &r.full.s_outcomes {
        let _ = write!(head, "{:>16}{:>10}", format!("S({})", o.scheme), "q");
        let _ = write!(vals, "{:>16.4}{:>10.4}", o.statistic, o.critical_value);
    }
    if let Some(m) = &r.full.max {
        let _ = write!(head, "{:>12}{:>10}", "MAX", "q_MAX");
        let _ = write!(
            vals,
            "{:>12}{:>10}",
            format!("{:.2}^2", m.monitor_max.sqrt()),
            format!("{:.2}^2", m.train_max.sqrt())
        );
    }
    let _ = writeln!(s, "{head}\n{vals}");
    s
}
