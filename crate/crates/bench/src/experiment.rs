//! Running one configured experiment and recording its trace and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pfsmc::exec::{Backend, Executor, PhaseTimes};
use pfsmc::lmm::{Integrator, LmmScheme};
use pfsmc::models::OdeModel;
use pfsmc::sampler::{self, initialize, pf_step, ParamPrior, PfConfig, PosteriorTrace, RunOutput};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{read_dataset, Dataset};
use crate::format::{float, to_json};
use crate::problem::Problem;
use crate::BenchError;

pub const ADAPTIVE_LABEL: &str = "adaptive-bdf2";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Seq,
    Par,
    Batch,
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Seq => "seq",
            BackendKind::Par => "par",
            BackendKind::Batch => "batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    /// `ab1` to `bdf3`, or `adaptive-bdf2`.
    pub integrator: String,
    pub backend: BackendKind,
    pub workers: usize,
    pub work_stealing: bool,
    pub particles: usize,
    pub step: f64,
    pub shrink_a: f64,
    pub seed: u64,
    pub rtol: f64,
    pub data: PathBuf,
    pub out: PathBuf,
    pub warmup: bool,
    /// Overrides of the prior in unconstrained coordinates.
    pub prior_mean: Option<Vec<f64>>,
    pub prior_std: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, data: PathBuf, out: PathBuf) -> Self {
        Self {
            problem,
            n: crate::problem::DEFAULT_GRID,
            integrator: "bdf2".into(),
            backend: BackendKind::Seq,
            workers: 1,
            work_stealing: false,
            particles: 1000,
            step: 0.05,
            shrink_a: 0.98,
            seed: 42,
            rtol: 1e-3,
            data,
            out,
            warmup: false,
            prior_mean: None,
            prior_std: None,
        }
    }

    pub fn integrator(&self) -> Result<Integrator, BenchError> {
        if self.integrator == ADAPTIVE_LABEL {
            if self.rtol.is_nan() || self.rtol <= 0.0 {
                return Err(BenchError::Config(format!("rtol must be positive, got {}", self.rtol)));
            }
            return Ok(Integrator::adaptive(self.rtol));
        }
        let scheme: LmmScheme = self.integrator.parse().map_err(|e| BenchError::Config(format!("{e}")))?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(BenchError::Config(format!("step must be positive, got {}", self.step)));
        }
        Ok(Integrator::fixed(scheme, self.step))
    }

    pub fn backend(&self) -> Result<Backend, BenchError> {
        match self.backend {
            BackendKind::Seq => Ok(Backend::Sequential),
            BackendKind::Par if self.workers == 0 => Err(BenchError::Config("workers must be at least 1".into())),
            BackendKind::Par => Ok(Backend::Parallel(self.workers)),
            BackendKind::Batch => Ok(Backend::Batched),
        }
    }

    pub fn executor(&self) -> Result<Executor, BenchError> {
        let exec = Executor::new(self.backend()?).map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(exec.with_work_stealing(self.work_stealing))
    }

    pub fn prior(&self) -> Result<Vec<ParamPrior>, BenchError> {
        let mut prior = self.problem.default_prior();
        let p = prior.len();
        let check = |v: &Option<Vec<f64>>, what: &str| match v {
            Some(v) if v.len() != p => Err(BenchError::Config(format!("{what} needs {p} values, got {}", v.len()))),
            _ => Ok(()),
        };
        check(&self.prior_mean, "prior mean")?;
        check(&self.prior_std, "prior std")?;
        for (k, entry) in prior.iter_mut().enumerate() {
            if let Some(m) = &self.prior_mean {
                entry.mean = m[k];
            }
            if let Some(s) = &self.prior_std {
                entry.std = s[k];
            }
        }
        Ok(prior)
    }

    pub fn pf_config(&self, data: &Dataset) -> Result<PfConfig, BenchError> {
        Ok(PfConfig {
            particles: self.particles,
            shrink_a: self.shrink_a,
            integrator: self.integrator()?,
            seed: self.seed,
            prior: self.prior()?,
            x0_prior: self.problem.default_state_prior(data.meta.x0.clone()),
        })
    }

    /// SHA-256 of the full configuration.
    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("config serialises"))
    }

    /// SHA-256 of the configuration with execution settings and output
    /// location blanked: equal for runs that must produce the same trace.
    pub fn experiment_hash(&self) -> String {
        let mut c = self.clone();
        c.backend = BackendKind::Seq;
        c.workers = 0;
        c.work_stealing = false;
        c.warmup = false;
        c.out = PathBuf::new();
        hex_digest(&serde_json::to_vec(&c).expect("config serialises"))
    }

    /// Workers used for efficiency: 1 sequential, `workers` in parallel,
    /// none for the batched backend.
    pub fn processors(&self) -> Option<usize> {
        match self.backend {
            BackendKind::Seq => Some(1),
            BackendKind::Par => Some(self.workers),
            BackendKind::Batch => None,
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub propagate: f64,
    pub resample: f64,
    pub proliferate: f64,
    pub repropagate: f64,
    pub weights: f64,
}

impl From<PhaseTimes> for Phases {
    fn from(p: PhaseTimes) -> Self {
        Self {
            propagate: p.propagate,
            resample: p.resample,
            proliferate: p.proliferate,
            repropagate: p.repropagate,
            weights: p.weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub experiment_hash: String,
    pub integrator: String,
    pub backend: String,
    pub workers: usize,
    pub wall_time_s: f64,
    pub phases: Phases,
    pub busy_s: Vec<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    pub param_names: Vec<String>,
    pub truth: Vec<f64>,
    pub final_mean: Vec<f64>,
    pub final_std: Vec<f64>,
    pub failed_particles: usize,
    pub warnings: Vec<String>,
    pub trace: PathBuf,
}

impl BenchReport {
    pub fn read(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
        serde_json::from_str(&text).map_err(|e| BenchError::format(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchError> {
        let json = to_json(self).map_err(|e| BenchError::format(path, e))?;
        fs::write(path, json).map_err(BenchError::io(path))
    }
}

/// The trace as CSV: `j,t,theta_mean_*,theta_var_*,ess`.
pub fn trace_csv(trace: &PosteriorTrace) -> String {
    let mut out = String::from("j,t");
    for prefix in ["theta_mean", "theta_var"] {
        for name in &trace.param_names {
            out.push_str(&format!(",{prefix}_{name}"));
        }
    }
    out.push_str(",ess\n");
    for row in &trace.rows {
        out.push_str(&row.j.to_string());
        for v in std::iter::once(row.t).chain(row.theta_mean.iter().copied()).chain(row.theta_var.iter().copied()) {
            out.push(',');
            out.push_str(&float(v));
        }
        out.push(',');
        out.push_str(&float(row.ess));
        out.push('\n');
    }
    out
}

/// A parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub param_names: Vec<String>,
    pub j: Vec<usize>,
    pub t: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
}

pub fn read_trace(path: &Path) -> Result<TraceTable, BenchError> {
    let bad = |m: String| BenchError::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if headers.len() < 3 || headers[0] != "j" || headers[1] != "t" || headers.last().map(String::as_str) != Some("ess")
    {
        return Err(bad("expected header j,t,theta_mean_*,theta_var_*,ess".into()));
    }
    let p = (headers.len() - 3) / 2;
    if headers.len() != 2 * p + 3 {
        return Err(bad("unbalanced theta columns".into()));
    }
    let mut names = Vec::with_capacity(p);
    for k in 0..p {
        let name =
            headers[2 + k].strip_prefix("theta_mean_").ok_or_else(|| bad(format!("bad column {}", headers[2 + k])))?;
        if headers[2 + p + k] != format!("theta_var_{name}") {
            return Err(bad(format!("bad column {}", headers[2 + p + k])));
        }
        names.push(name.to_string());
    }
    let mut table = TraceTable { param_names: names, j: vec![], t: vec![], mean: vec![], var: vec![], ess: vec![] };
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        table.j.push(rec[0].parse().map_err(|e| bad(format!("{e}")))?);
        let nums: Vec<f64> =
            rec.iter().skip(1).map(str::parse).collect::<Result<_, _>>().map_err(|e| bad(format!("{e}")))?;
        if nums.len() != 2 * p + 2 {
            return Err(bad(format!("row with {} fields", nums.len() + 1)));
        }
        table.t.push(nums[0]);
        table.mean.push(nums[1..1 + p].to_vec());
        table.var.push(nums[1 + p..1 + 2 * p].to_vec());
        table.ess.push(nums[1 + 2 * p]);
    }
    Ok(table)
}

/// Checks that a dataset belongs to the configured problem.
pub fn check_data(cfg: &ExperimentConfig, data: &Dataset) -> Result<(), BenchError> {
    if data.meta.problem != cfg.problem {
        return Err(BenchError::Config(format!("data is for problem {}, not {}", data.meta.problem, cfg.problem)));
    }
    if data.meta.n != cfg.problem.grid(cfg.n) {
        return Err(BenchError::Config(format!("data grid {:?} does not match n = {}", data.meta.n, cfg.n)));
    }
    Ok(())
}

/// One untimed filter step so thread pools and caches are warm.
fn warm_up(
    data: &Dataset,
    pf: &PfConfig,
    exec: &Executor,
    model: &dyn OdeModel,
    obs: &sampler::ObservationModel,
) -> Result<(), BenchError> {
    if data.times.is_empty() {
        return Ok(());
    }
    let ens = initialize(pf, model)?;
    let interval = data.observations().interval(1);
    pf_step(&ens, &data.values[0], 1, interval, pf, exec, model, obs, &mut PhaseTimes::default())?;
    exec.take_busy();
    Ok(())
}

/// Runs the filter on already loaded data and returns the output with the
/// wall time of the run.
pub fn execute(cfg: &ExperimentConfig, data: &Dataset) -> Result<(RunOutput, f64), BenchError> {
    check_data(cfg, data)?;
    let model = cfg.problem.model(cfg.n)?;
    let obs = data.observation_model(model.dim())?;
    let pf = cfg.pf_config(data)?;
    let exec = cfg.executor()?;
    if cfg.warmup {
        warm_up(data, &pf, &exec, model.as_ref(), &obs)?;
    }
    let observations = data.observations();
    let clock = Instant::now();
    let out = sampler::run(&observations, &pf, &exec, model.as_ref(), &obs)?;
    Ok((out, clock.elapsed().as_secs_f64()))
}

/// Loads the data, runs the filter and writes `trace.csv` and
/// `report.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchReport, BenchError> {
    let data = read_dataset(&cfg.data)?;
    let (out, wall) = execute(cfg, &data)?;
    fs::create_dir_all(&cfg.out).map_err(BenchError::io(&cfg.out))?;
    let trace_path = cfg.out.join(TRACE_FILE);
    fs::write(&trace_path, trace_csv(&out.trace)).map_err(BenchError::io(&trace_path))?;
    let last = out.trace.last();
    let workers = match cfg.backend {
        BackendKind::Seq => 1,
        BackendKind::Par => cfg.workers,
        BackendKind::Batch => out.report.busy.len(),
    };
    let report = BenchReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        experiment_hash: cfg.experiment_hash(),
        integrator: cfg.integrator.clone(),
        backend: cfg.backend.label().into(),
        workers,
        wall_time_s: wall,
        phases: out.report.phases.into(),
        busy_s: out.report.busy.clone(),
        speedup: None,
        efficiency: None,
        param_names: out.trace.param_names.clone(),
        truth: data.meta.truth.clone(),
        final_mean: last.theta_mean.clone(),
        final_std: last.theta_var.iter().map(|v| v.max(0.0).sqrt()).collect(),
        failed_particles: out.trace.rows.iter().map(|r| r.failed).sum(),
        warnings: out.trace.warnings.clone(),
        trace: trace_path,
    };
    report.write(&cfg.out.join(REPORT_FILE))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_data, write_dataset, GenOptions};

    fn small(dir: &Path) -> ExperimentConfig {
        let data = dir.join("metabolic.csv");
        let d = generate_data(&GenOptions { problem: Problem::Metabolic, n: 0, seed: 1, truth: None, sigma: None })
            .unwrap();
        write_dataset(&d, &data).unwrap();
        let mut cfg = ExperimentConfig::new(Problem::Metabolic, data, dir.join("out"));
        cfg.particles = 30;
        cfg
    }

    #[test]
    fn trace_has_initial_row_plus_one_per_observation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let report = run_experiment(&cfg).unwrap();
        let table = read_trace(&report.trace).unwrap();
        assert_eq!(table.j.len(), 51);
        assert_eq!(table.param_names, vec!["V1", "k1", "V2", "k2"]);
        assert!(table.mean.iter().flatten().chain(table.var.iter().flatten()).all(|v| v.is_finite()));
        assert_eq!(report.config_hash, cfg.hash());
        let back = BenchReport::read(&cfg.out.join(REPORT_FILE)).unwrap();
        assert_eq!(back.config_hash, report.config_hash);
        assert_eq!(back.final_mean, report.final_mean);
    }

    #[test]
    fn repeat_runs_write_identical_traces() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        let a = run_experiment(&cfg).unwrap();
        let first = fs::read(&a.trace).unwrap();
        cfg.out = dir.path().join("again");
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(first, fs::read(&b.trace).unwrap());
        assert_eq!(a.experiment_hash, b.experiment_hash);
        assert_ne!(a.config_hash, b.config_hash);
    }

    #[test]
    fn data_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.problem = Problem::Advdiff;
        assert!(matches!(run_experiment(&cfg), Err(BenchError::Config(_))));
    }

    #[test]
    fn integrator_labels() {
        let mut cfg = ExperimentConfig::new(Problem::Metabolic, PathBuf::new(), PathBuf::new());
        assert!(!cfg.integrator().unwrap().is_adaptive());
        cfg.integrator = ADAPTIVE_LABEL.into();
        assert!(cfg.integrator().unwrap().is_adaptive());
        cfg.integrator = "rk4".into();
        assert!(matches!(cfg.integrator(), Err(BenchError::Config(_))));
    }

    #[test]
    fn prior_overrides_are_checked() {
        let mut cfg = ExperimentConfig::new(Problem::Metabolic, PathBuf::new(), PathBuf::new());
        cfg.prior_mean = Some(vec![0.0; 3]);
        assert!(cfg.prior().is_err());
        cfg.prior_mean = Some(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(cfg.prior().unwrap()[2].mean, 0.3);
    }
}
