use crate::experiment::{run_experiment, BackendKind, BenchReport, ExperimentConfig, REPORT_FILE};
use crate::speedup::compute_speedup;
use crate::BenchError;

/// Runs every integrator on every backend, one experiment at a time so the
/// timings do not interfere. The sequential baseline always runs first and
/// the other backends' reports record their speedup over it. Each run
/// writes into `<out>/<integrator>-<backend>/`.
pub fn run_sweep(
    base: &ExperimentConfig,
    integrators: &[String],
    backends: &[BackendKind],
) -> Result<Vec<BenchReport>, BenchError> {
    if integrators.is_empty() {
        return Err(BenchError::Config("no integrators to run".into()));
    }
    let mut order = vec![BackendKind::Seq];
    order.extend(backends.iter().copied().filter(|b| *b != BackendKind::Seq));
    let mut reports = Vec::new();
    for integrator in integrators {
        let mut baseline: Option<BenchReport> = None;
        for &backend in &order {
            let mut cfg = base.clone();
            cfg.integrator = integrator.clone();
            cfg.backend = backend;
            cfg.out = base.out.join(format!("{integrator}-{}", backend.label()));
            let mut report = run_experiment(&cfg)?;
            match &baseline {
                None => {
                    report.speedup = Some(1.0);
                    report.efficiency = Some(1.0);
                    report.write(&cfg.out.join(REPORT_FILE))?;
                    baseline = Some(report.clone());
                }
                Some(b) => {
                    let s = compute_speedup(b, &report)?;
                    report.speedup = Some(s.s);
                    report.efficiency = s.e;
                    report.write(&cfg.out.join(REPORT_FILE))?;
                }
            }
            reports.push(report);
        }
    }
    Ok(reports)
}
