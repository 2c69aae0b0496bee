use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfsmc_bench::data::{generate_data, write_dataset, GenOptions};
use pfsmc_bench::experiment::{run_experiment, BackendKind, BenchReport, ExperimentConfig, REPORT_FILE};
use pfsmc_bench::problem::{Problem, DEFAULT_GRID};
use pfsmc_bench::report::{emit_report, speedup_table, table_text};
use pfsmc_bench::sweep::run_sweep;
use pfsmc_bench::BenchError;

#[derive(Parser)]
#[command(name = "pfsmc-bench", version, about = "Particle-filter parameter estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic observations and their JSON sidecar.
    Gen(GenArgs),
    /// Run one experiment and write its trace and report.
    Run(RunArgs),
    /// Sweep integrators and backends, then write the speedup table.
    Bench(BenchArgs),
    /// Build tables and plots from existing reports.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Problem::Metabolic)]
    problem: Problem,
    /// Grid parameter for advdiff (the field has (n-1)² cells).
    #[arg(long, default_value_t = DEFAULT_GRID)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Data-generating parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    truth: Option<Vec<f64>>,
    /// Observation noise for every component instead of the problem's rule.
    #[arg(long)]
    sigma: Option<f64>,
    /// Observation CSV to write; the sidecar gets a .json extension.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = Problem::Metabolic)]
    problem: Problem,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    n: usize,
    #[arg(long, value_enum, default_value_t = BackendKind::Seq)]
    backend: BackendKind,
    #[arg(long, env = "PFSMC_WORKERS")]
    workers: Option<usize>,
    /// Dynamic scheduling for the parallel backend.
    #[arg(long)]
    work_stealing: bool,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 0.98)]
    shrink_a: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Tolerance of the adaptive integrator.
    #[arg(long, default_value_t = 1e-3)]
    rtol: f64,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run one untimed filter step first.
    #[arg(long)]
    warmup: bool,
    /// Prior means in unconstrained coordinates, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    prior_mean: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    prior_std: Option<Vec<f64>>,
}

impl ExperimentArgs {
    fn config(&self, integrator: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(self.problem, self.data.clone(), self.out.clone());
        c.n = self.n;
        c.integrator = integrator.to_string();
        c.backend = self.backend;
        c.workers = self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        c.work_stealing = self.work_stealing;
        c.particles = self.particles;
        c.step = self.step;
        c.shrink_a = self.shrink_a;
        c.seed = self.seed;
        c.rtol = self.rtol;
        c.warmup = self.warmup;
        c.prior_mean = self.prior_mean.clone();
        c.prior_std = self.prior_std.clone();
        c
    }
}

#[derive(Args)]
struct RunArgs {
    /// ab1..ab3, am1..am3, bdf1..bdf3 or adaptive-bdf2.
    #[arg(long, default_value = "bdf2")]
    integrator: String,
    #[command(flatten)]
    common: ExperimentArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long = "integrator", value_delimiter = ',', default_value = "ab1,am1,bdf2")]
    integrators: Vec<String>,
    #[arg(long = "backends", value_enum, value_delimiter = ',', default_value = "seq,par,batch")]
    backends: Vec<BackendKind>,
    #[command(flatten)]
    common: ExperimentArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory searched (one level deep) for report.json files.
    #[arg(long, default_value = "out")]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn find_reports(dir: &Path) -> Result<Vec<BenchReport>, BenchError> {
    let mut paths = Vec::new();
    let top = dir.join(REPORT_FILE);
    if top.is_file() {
        paths.push(top);
    }
    let entries = std::fs::read_dir(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    let mut subdirs: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    paths.extend(subdirs.into_iter().map(|d| d.join(REPORT_FILE)).filter(|p| p.is_file()));
    paths.iter().map(|p| BenchReport::read(p)).collect()
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Gen(a) => {
            let data = generate_data(&GenOptions {
                problem: a.problem,
                n: a.n,
                seed: a.seed,
                truth: a.truth,
                sigma: a.sigma,
            })?;
            let path = a.data.unwrap_or_else(|| PathBuf::from(format!("data/{}.csv", a.problem)));
            write_dataset(&data, &path)?;
            println!(
                "wrote {} ({} observations of {} components)",
                path.display(),
                data.times.len(),
                data.meta.indices.len()
            );
        }
        Command::Run(a) => {
            let report = run_experiment(&a.common.config(&a.integrator))?;
            println!("{} on {}: {:.3} s", report.integrator, report.backend, report.wall_time_s);
            for ((name, m), s) in report.param_names.iter().zip(&report.final_mean).zip(&report.final_std) {
                println!("  {name:>3} = {m:.5} ± {s:.5}");
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("trace: {}", report.trace.display());
        }
        Command::Bench(a) => {
            let base = a.common.config("bdf2");
            let reports = run_sweep(&base, &a.integrators, &a.backends)?;
            emit_report(&reports, &base.out)?;
            print!("{}", table_text(&speedup_table(&reports)));
        }
        Command::Report(a) => {
            let reports = find_reports(&a.input)?;
            let files = emit_report(&reports, &a.out)?;
            print!("{}", table_text(&speedup_table(&reports)));
            println!("{} plots, summary in {}", files.plots.len(), files.summary.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
