use crate::experiment::BenchReport;
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speedup {
    /// `T_baseline / T_candidate`.
    pub s: f64,
    /// `S / P`; absent for the batched backend.
    pub e: Option<f64>,
}

pub fn speedup_from_times(baseline_s: f64, candidate_s: f64, processors: Option<usize>) -> Speedup {
    let s = baseline_s / candidate_s;
    Speedup { s, e: processors.filter(|p| *p > 0).map(|p| s / p as f64) }
}

/// Speedup of `candidate` over `baseline`. The two runs must share every
/// setting except how they were executed.
pub fn compute_speedup(baseline: &BenchReport, candidate: &BenchReport) -> Result<Speedup, BenchError> {
    if baseline.experiment_hash != candidate.experiment_hash {
        return Err(BenchError::Config(format!(
            "reports differ in more than the backend ({} vs {})",
            baseline.config.integrator, candidate.config.integrator
        )));
    }
    if !(baseline.wall_time_s > 0.0 && candidate.wall_time_s > 0.0) {
        return Err(BenchError::Config("wall times must be positive".into()));
    }
    Ok(speedup_from_times(baseline.wall_time_s, candidate.wall_time_s, candidate.config.processors()))
}
