//! Parameter sweeps over the process-noise scale, the standardization exponent and the
//! initial covariance scale.

use std::fmt::Write as _;

use crate::error::{CliError, CliResult};
use crate::evaluate::evaluate;
use crate::experiment::Experiment;
use crate::grid::{run_grid, RunPlan};
use crate::method::Method;

/// The calibration grid for φ: half-decade steps from 1e-4 to 1e3.
pub fn default_phi_grid() -> Vec<f64> {
    (-8..=6).map(|k| 10f64.powf(k as f64 / 2.0)).collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub phi: Vec<f64>,
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub diag_floor: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: Method,
    pub phi: f64,
    pub p: f64,
    pub theta: f64,
    pub snr_db: f64,
    /// Mean xcorr error over the successful runs; `None` when none succeeded.
    pub mean_error: Option<f64>,
    pub q10: Option<f64>,
    pub q90: Option<f64>,
    pub failed: usize,
}

pub fn run_sweep(exp: &Experiment, spec: &SweepSpec) -> CliResult<Vec<SweepPoint>> {
    if spec.phi.is_empty() || spec.p.is_empty() || spec.theta.is_empty() {
        return Err(CliError::Usage("sweep grids must not be empty".into()));
    }
    let mut points = Vec::new();
    for &method in &spec.methods {
        for &p in &spec.p {
            for &theta in &spec.theta {
                for &phi in &spec.phi {
                    let plan = RunPlan {
                        methods: vec![method],
                        p,
                        theta,
                        diag_floor: spec.diag_floor,
                        phi: [(method, phi)].into(),
                        jobs: spec.jobs,
                        keep_full_states: false,
                    };
                    let container = run_grid(exp, &plan)?;
                    let eval = match evaluate(&container) {
                        Ok(e) => Some(e),
                        Err(CliError::NoRuns) => None,
                        Err(e) => return Err(e),
                    };
                    for &snr in &exp.scenario.snr_db {
                        let summary = eval
                            .as_ref()
                            .and_then(|e| e.group(method.name(), snr))
                            .and_then(|g| g.xcorr_error.clone());
                        let failed = container
                            .cells
                            .iter()
                            .filter(|c| c.snr_db == snr && c.status != dskf_core::io::CellStatus::Ok)
                            .count();
                        log::info!("{method} p={p} theta={theta} phi={phi} snr={snr}: {:?}", summary.as_ref().map(|s| s.mean));
                        points.push(SweepPoint {
                            method,
                            phi,
                            p,
                            theta,
                            snr_db: snr,
                            mean_error: summary.as_ref().map(|s| s.mean),
                            q10: summary.as_ref().map(|s| s.q10),
                            q90: summary.as_ref().map(|s| s.q90),
                            failed,
                        });
                    }
                }
            }
        }
    }
    Ok(points)
}

/// Lowest mean error per method at `snr_db`; earlier grid points win ties.
pub fn best_per_method(points: &[SweepPoint], snr_db: f64) -> Vec<&SweepPoint> {
    let mut best: Vec<&SweepPoint> = Vec::new();
    for pt in points.iter().filter(|p| p.snr_db == snr_db) {
        let Some(err) = pt.mean_error else { continue };
        match best.iter_mut().find(|b| b.method == pt.method) {
            Some(b) => {
                if err < b.mean_error.unwrap() {
                    *b = pt;
                }
            }
            None => best.push(pt),
        }
    }
    best
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("method,phi,p,theta,snr_db,mean_xcorr_error,q10,q90,failed\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for pt in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            pt.method,
            pt.phi,
            pt.p,
            pt.theta,
            pt.snr_db,
            opt(pt.mean_error),
            opt(pt.q10),
            opt(pt.q90),
            pt.failed
        );
    }
    out
}
