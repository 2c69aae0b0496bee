//! Synthetic observation data: a CSV of noisy observations plus a JSON
//! sidecar describing how it was made.

use std::fs;
use std::path::{Path, PathBuf};

use pfsmc::lmm::Integrator;
use pfsmc::rng::{Purpose, RngStream};
use pfsmc::sampler::{ObservationModel, Observations};
use serde::{Deserialize, Serialize};

use crate::format::{float, to_json};
use crate::problem::{check_sigma, check_truth, Problem, ADVDIFF_NOISE_DIVISOR, METABOLIC_NOISE};
use crate::BenchError;

/// Relative tolerance of the reference trajectory.
pub const REFERENCE_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub problem: Problem,
    /// Grid parameter; `None` for the metabolic problem.
    pub n: Option<usize>,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub sigma: Vec<f64>,
    pub indices: Vec<usize>,
    pub t0: f64,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DataMeta,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub problem: Problem,
    pub n: usize,
    pub seed: u64,
    pub truth: Option<Vec<f64>>,
    /// Replaces the problem's noise rule with one level for every component.
    pub sigma: Option<f64>,
}

impl Dataset {
    pub fn observations(&self) -> Observations {
        Observations { t0: self.meta.t0, times: self.times.clone(), values: self.values.clone() }
    }

    pub fn observation_model(&self, dim: usize) -> Result<ObservationModel, BenchError> {
        Ok(ObservationModel::new(self.meta.indices.clone(), self.meta.sigma.clone(), dim)?)
    }
}

/// Integrates the true trajectory, then adds Gaussian noise. The noise for
/// observation `j` comes from stream `(j, 0, innovate)` of the seed.
pub fn generate_data(opts: &GenOptions) -> Result<Dataset, BenchError> {
    let problem = opts.problem;
    let model = problem.model(opts.n)?;
    let truth = opts.truth.clone().unwrap_or_else(|| problem.truth());
    check_truth(model.as_ref(), &truth)?;
    if let Some(s) = opts.sigma {
        check_sigma(s)?;
    }
    let x0 = problem.initial_state(opts.n)?;
    let t0 = problem.start_time();
    let times = problem.observation_times();
    let indices = problem.observed_indices(model.dim(), opts.seed);

    let integ = Integrator::adaptive(REFERENCE_RTOL);
    let mut clean = Vec::with_capacity(times.len());
    let (mut x, mut t) = (x0.clone(), t0);
    for &t1 in &times {
        x = integ.propagate(model.as_ref(), &truth, &x, t, t1)?.state;
        t = t1;
        clean.push(indices.iter().map(|&i| x[i]).collect::<Vec<f64>>());
    }

    let sigma = match (opts.sigma, problem) {
        (Some(s), _) => vec![s; indices.len()],
        (None, Problem::Metabolic) => (0..indices.len())
            .map(|c| METABOLIC_NOISE * clean.iter().map(|row| row[c].abs()).fold(0.0, f64::max))
            .collect(),
        (None, Problem::Advdiff) => {
            let peak = indices.iter().map(|&i| x0[i].abs()).fold(0.0, f64::max);
            vec![peak / ADVDIFF_NOISE_DIVISOR; indices.len()]
        }
    };
    for s in &sigma {
        check_sigma(*s)?;
    }

    let values = clean
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let mut rng = RngStream::new(opts.seed, k as u64 + 1, 0, Purpose::Innovate);
            row.iter().zip(&sigma).map(|(v, s)| v + s * rng.standard_normal()).collect()
        })
        .collect();
    let meta = DataMeta { problem, n: problem.grid(opts.n), seed: opts.seed, truth, sigma, indices, t0, x0 };
    Ok(Dataset { meta, times, values })
}

/// The sidecar sits next to the CSV with a `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_dataset(data: &Dataset, csv: &Path) -> Result<(), BenchError> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
    }
    let mut w = csv::Writer::from_path(csv).map_err(|e| BenchError::format(csv, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=data.meta.indices.len()).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(|e| BenchError::format(csv, e))?;
    for (t, row) in data.times.iter().zip(&data.values) {
        let rec: Vec<String> = std::iter::once(*t).chain(row.iter().copied()).map(float).collect();
        w.write_record(&rec).map_err(|e| BenchError::format(csv, e))?;
    }
    w.flush().map_err(BenchError::io(csv))?;
    let side = sidecar_path(csv);
    let json = to_json(&data.meta).map_err(|e| BenchError::format(&side, e))?;
    fs::write(&side, json).map_err(BenchError::io(&side))
}

pub fn read_dataset(csv: &Path) -> Result<Dataset, BenchError> {
    let side = sidecar_path(csv);
    let text = fs::read_to_string(&side).map_err(BenchError::io(&side))?;
    let meta: DataMeta = serde_json::from_str(&text).map_err(|e| BenchError::format(&side, e))?;
    let mut r = csv::Reader::from_path(csv).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::Io { path: csv.to_path_buf(), source: io },
        other => BenchError::format(csv, format!("{other:?}")),
    })?;
    let m = meta.indices.len();
    let headers = r.headers().map_err(|e| BenchError::format(csv, e))?;
    if headers.len() != m + 1 || &headers[0] != "t" {
        return Err(BenchError::format(csv, format!("expected header t,y1..y{m}")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| BenchError::format(csv, e))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| BenchError::format(csv, e))?;
        if nums.len() != m + 1 {
            return Err(BenchError::format(csv, format!("row with {} fields, expected {}", nums.len(), m + 1)));
        }
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok(Dataset { meta, times, values })
}
