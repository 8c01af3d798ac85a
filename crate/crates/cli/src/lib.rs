//! Command-line front end for gwlab experiments.
//!
//! Every command builds a [`Report`], writes it as CSV and JSON when `--out`
//! is given, prints it to stdout in `--format`, and maps the outcome to an
//! exit code: 0 when every asserted row passes, 1 on usage errors, 2 when a
//! statistical or pathwise assertion fails, 3 when a run outgrows its memory
//! budget.

mod commands;
mod error;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwlab_core::report::Report;
use gwlab_core::{OffspringDistribution, RegenMode};

pub use error::CliError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_STATISTICAL: u8 = 2;
pub const EXIT_CAPACITY: u8 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GWLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "gwlab",
    version,
    about = "Coupled biased walks on Galton-Watson trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form bounds and the threshold bias.
    Bounds(BoundsArgs),
    /// Speeds from one coupled run per replica.
    Simulate(RunArgs),
    /// Sign of the mean depth gap per segment.
    Monotonicity(RunArgs),
    /// Audit of the per-segment inequalities.
    Lemmas(LemmaArgs),
    /// Large-bias rate of the speed gap.
    Rate(RunArgs),
    /// Exhaustive enumeration of short paths.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strict,
    Nonstrict,
}

impl From<ModeArg> for RegenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => RegenMode::Strict,
            ModeArg::Nonstrict => RegenMode::Nonstrict,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write `<OUT>.csv`, `<OUT>.json` and `<OUT>.timing.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Format printed to stdout.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// One or more comma-separated bias values.
    #[arg(long, value_delimiter = ',', required_unless_present = "beta_range")]
    pub beta: Vec<f64>,
    /// Log-spaced grid `LO,HI,N`.
    #[arg(long, value_delimiter = ',', num_args = 1, conflicts_with = "beta")]
    pub beta_range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Offspring law: `const:k`, `uniform:k1,k2,...` or `k1:w1,k2:w2,...`.
    #[arg(long, default_value = "const:1")]
    pub dist: OffspringDistribution,
    /// Minimal degree; defaults to the smallest atom of `--dist`.
    #[arg(long)]
    pub d: Option<u32>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Offspring law: `const:k`, `uniform:k1,k2,...` or `k1:w1,k2:w2,...`.
    #[arg(long, default_value = "const:1")]
    pub dist: OffspringDistribution,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Steps per replica.
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    /// Segments in total across replicas; overrides `--steps` where a
    /// command counts segments.
    #[arg(long)]
    pub segments: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "strict")]
    pub regen_mode: ModeArg,
    /// Confirmation margin; defaults to the smallest `M` with `beta^-M <= 1e-9`.
    #[arg(long)]
    pub margin: Option<u32>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LemmaArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Independent walks from the root, in total across replicas.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EnumerateArgs {
    #[arg(long, default_value_t = 16)]
    pub max_len: u32,
    #[arg(long, value_enum, default_value = "strict")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Command {
    fn output(&self) -> &OutputArgs {
        match self {
            Command::Bounds(a) => &a.output,
            Command::Simulate(a) | Command::Monotonicity(a) | Command::Rate(a) => &a.output,
            Command::Lemmas(a) => &a.run.output,
            Command::Enumerate(a) => &a.output,
        }
    }
}

fn thread_pool(cap: Option<&str>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(v) = cap {
        let n: usize =
            v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                CliError::Usage(format!("{THREADS_ENV} must be a positive integer"))
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

/// Runs a parsed command and returns its report.
pub fn execute(command: &Command) -> Result<Report, CliError> {
    execute_with_threads(command, std::env::var(THREADS_ENV).ok().as_deref())
}

/// Runs a parsed command on a pool capped by `threads` (a positive integer,
/// as in the environment variable) or on all cores.
pub fn execute_with_threads(command: &Command, threads: Option<&str>) -> Result<Report, CliError> {
    let pool = thread_pool(threads)?;
    pool.install(|| match command {
        Command::Bounds(a) => commands::bounds(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Monotonicity(a) => commands::monotonicity(a),
        Command::Lemmas(a) => commands::lemmas(a),
        Command::Rate(a) => commands::rate(a),
        Command::Enumerate(a) => commands::enumerate(a),
    })
}

fn write_file(path: PathBuf, body: &str) -> Result<(), CliError> {
    std::fs::write(&path, body).map_err(|source| CliError::Io { path, source })
}

fn with_suffix(base: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code. Parse errors map to the usage code, help and version
/// requests to 0.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

/// Threshold summary and divergence warnings for `bounds`, on stderr.
fn bounds_notes(report: &Report) {
    for section in &report.sections {
        for row in &section.rows {
            match (row.name.as_str(), row.value) {
                ("tail_valid", Some(0.0)) => {
                    eprintln!("warning: {}: tail base >= 1, series diverge", section.name)
                }
                (name, Some(v))
                    if name.starts_with("threshold_") && !name.ends_with("_times_d") =>
                {
                    eprintln!("{name}: beta = {v:.6}")
                }
                _ => {}
            }
        }
    }
}

/// Runs a parsed command line; returns the process exit code.
pub fn run_cli(cli: &Cli) -> u8 {
    let started = Instant::now();
    let report = match execute(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    if matches!(cli.command, Command::Bounds(_)) {
        bounds_notes(&report);
    }
    match emit(&report, cli.command.output(), elapsed) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    let failures = report.failures();
    if failures.is_empty() {
        EXIT_OK
    } else {
        for (section, row) in failures {
            eprintln!("failed: {section}/{}", row.name);
        }
        EXIT_STATISTICAL
    }
}

fn emit(report: &Report, output: &OutputArgs, elapsed: f64) -> Result<(), CliError> {
    let csv = report.to_csv()?;
    let json = report.to_json()?;
    let timing = serde_json::json!({
        "command": report.command,
        "wall_seconds": elapsed,
        "threads": std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or_else(rayon::current_num_threads),
    });
    if let Some(base) = &output.out {
        write_file(with_suffix(base, ".csv"), &csv)?;
        write_file(with_suffix(base, ".json"), &json)?;
        write_file(with_suffix(base, ".timing.json"), &format!("{timing:#}\n"))?;
    } else {
        eprintln!("wall time {elapsed:.3} s");
    }
    match output.format {
        Format::Csv => print!("{csv}"),
        Format::Json => print!("{json}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(args: &[&str]) -> Result<Report, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("gwlab").chain(args.iter().copied()))
            .expect("arguments parse");
        execute(&cli.command)
    }

    fn value(r: &Report, section: &str, name: &str) -> f64 {
        r.find(section, name)
            .and_then(|row| row.value)
            .unwrap_or_else(|| panic!("{section}/{name} missing"))
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(
            main_with_args(["gwlab", "simulate", "--beta", "2", "--bogus"]),
            EXIT_USAGE
        );
        assert_eq!(
            main_with_args(["gwlab", "bounds", "--beta", "1.0"]),
            EXIT_USAGE
        );
        assert_eq!(
            main_with_args(["gwlab", "enumerate", "--max-len", "21"]),
            EXIT_USAGE
        );
        assert_eq!(
            main_with_args(["gwlab", "simulate", "--beta", "0.5"]),
            EXIT_USAGE
        );
        assert_eq!(
            main_with_args(["gwlab", "simulate", "--beta", "2", "--steps", "999"]),
            EXIT_USAGE
        );
        assert_eq!(
            main_with_args(["gwlab", "simulate", "--dist", "0:1", "--beta", "2"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn capacity_errors_exit_with_three() {
        let e = CliError::Core(gwlab_core::Error::Capacity("full".into()));
        assert_eq!(e.exit_code(), EXIT_CAPACITY);
        let e = CliError::Core(gwlab_core::Error::InvalidBias("x".into()));
        assert_eq!(e.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn bounds_at_the_threshold() {
        let r = report(&["bounds", "--beta", "717"]).unwrap();
        assert!(value(&r, "beta=717", "c_paper") < 1.0);
        assert!(value(&r, "thresholds", "threshold_paper") <= 717.0);
        assert!(
            value(&r, "thresholds", "threshold_direct")
                < value(&r, "thresholds", "threshold_paper")
        );
    }

    #[test]
    fn bounds_substitute_the_minimal_degree() {
        let r = report(&["bounds", "--beta", "2", "--d", "2"]).unwrap();
        assert!((value(&r, "beta=2", "p_inf") - 12.0 / 25.0).abs() < 1e-15);
        let r = report(&["bounds", "--beta", "1", "--d", "2"]).unwrap();
        assert!((value(&r, "beta=1", "p_inf") - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.find("beta=1", "tail_valid").unwrap().value, Some(0.0));
    }

    #[test]
    fn bounds_grid() {
        let r = report(&["bounds", "--beta-range", "10,1000,3"]).unwrap();
        let names: Vec<&str> = r.sections.iter().map(|x| x.name.as_str()).collect();
        assert_eq!(names[0], "beta=10");
        assert_eq!(names[3], "thresholds");
        assert_eq!(r.sections.len(), 4);
    }

    #[test]
    fn simulate_on_the_ray() {
        let r = report(&[
            "simulate", "--beta", "3", "--steps", "200000", "--seed", "7",
        ])
        .unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert!((value(&r, "speed", "regen_beta") - 0.5).abs() < 0.01);
        assert_eq!(r.seeds.len(), 1);
        assert_eq!(r.config["regen_mode"], "strict");
    }

    #[test]
    fn zero_eps_is_all_coupled() {
        let r = report(&["simulate", "--beta", "4", "--eps", "0", "--steps", "50000"]).unwrap();
        assert_eq!(value(&r, "table", "P[C]"), 1.0);
        assert_eq!(value(&r, "speed", "speed_gap"), 0.0);
    }

    #[test]
    fn enumerate_finds_the_long_single_return() {
        let r = report(&["enumerate", "--max-len", "16", "--mode", "strict"]).unwrap();
        assert!(value(&r, "max_tau1", "b=1") >= 5.0);
        assert!(r.find("counts", "b=1,tau1=5").is_some());
        assert_eq!(value(&r, "summary", "validated_window"), 4.0);
        let r = report(&["enumerate", "--max-len", "16", "--mode", "nonstrict"]).unwrap();
        assert_eq!(value(&r, "summary", "window_3_exceptions"), 0.0);
    }

    #[test]
    fn thread_cap_must_be_positive() {
        let cli = Cli::try_parse_from(["gwlab", "bounds", "--beta", "10"]).unwrap();
        for bad in ["0", "-1", "many"] {
            let e = execute_with_threads(&cli.command, Some(bad)).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_USAGE);
            assert!(e.to_string().contains(THREADS_ENV));
        }
        assert!(execute_with_threads(&cli.command, Some("2")).is_ok());
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let cli = Cli::try_parse_from([
            "gwlab",
            "lemmas",
            "--dist",
            "uniform:1,2",
            "--beta",
            "4",
            "--segments",
            "40000",
            "--trials",
            "4000",
            "--replicas",
            "4",
            "--seed",
            "11",
        ])
        .unwrap();
        let one = execute_with_threads(&cli.command, Some("1")).unwrap();
        let three = execute_with_threads(&cli.command, Some("3")).unwrap();
        assert_eq!(one.to_csv().unwrap(), three.to_csv().unwrap());
        assert_eq!(one.to_json().unwrap(), three.to_json().unwrap());
    }

    #[test]
    fn writes_csv_json_and_timing() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("run");
        let code = main_with_args([
            "gwlab",
            "simulate",
            "--beta",
            "3",
            "--steps",
            "100000",
            "--seed",
            "5",
            "--format",
            "json",
            "--out",
            base.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let read = |suffix: &str| std::fs::read_to_string(with_suffix(&base, suffix)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&read(".json")).unwrap();
        assert_eq!(parsed["schema_version"], 1);
        assert_eq!(parsed["command"], "simulate");
        assert!(read(".csv")
            .starts_with("schema_version,section,name,value,stderr,bound,margin_sigma,verdict\n"));
        let timing: serde_json::Value = serde_json::from_str(&read(".timing.json")).unwrap();
        assert!(timing["wall_seconds"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn unwritable_output_is_a_usage_error() {
        let code = main_with_args([
            "gwlab",
            "bounds",
            "--beta",
            "10",
            "--out",
            "/nonexistent-dir/gwlab/run",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn help_and_version_exit_cleanly() {
        assert_eq!(main_with_args(["gwlab", "--help"]), EXIT_OK);
        assert_eq!(main_with_args(["gwlab", "--version"]), EXIT_OK);
        assert_eq!(main_with_args(["gwlab"]), EXIT_USAGE);
    }

    #[test]
    fn monotonicity_reports_a_one_sided_test() {
        let r = report(&[
            "monotonicity",
            "--beta",
            "50",
            "--eps",
            "50",
            "--segments",
            "200000",
            "--seed",
            "2",
        ])
        .unwrap();
        assert!(value(&r, "gap", "mean_gap") > 0.0);
        assert!(value(&r, "gap", "p_value") < 0.01);
    }
}
