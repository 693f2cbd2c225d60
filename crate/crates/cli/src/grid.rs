//! Method × SNR × realization grid.
//!
//! Gains, covariances and standardization weights do not depend on the data, and the
//! noise level is shared by every realization of one SNR, so each (method, SNR) group
//! computes its schedule once and then runs the cheap mean recursion per recording.

use std::collections::BTreeMap;
use std::time::Instant;

use dskf_core::filter::{argmax_abs, rts_smooth, FilterConfig, GainSchedule};
use dskf_core::io::{sha256_hex, encode_leadfield, CellRecord, CellStatus, MethodSettings, ResultsContainer};
use dskf_core::statespace::{assemble_model, KinematicModel};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::experiment::{Experiment, RecordingEntry};
use crate::method::Method;

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub methods: Vec<Method>,
    /// Standardization exponent.
    pub p: f64,
    /// Initial covariance scale in nAm².
    pub theta: f64,
    pub diag_floor: f64,
    /// Per-method process-noise scale; missing methods use their default.
    pub phi: BTreeMap<Method, f64>,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
    /// Keep full `(s+1)n` standardized states instead of the activity block only.
    pub keep_full_states: bool,
}

impl Default for RunPlan {
    fn default() -> Self {
        let cfg = FilterConfig::default();
        Self {
            methods: Method::ALL.to_vec(),
            p: cfg.p,
            theta: cfg.theta,
            diag_floor: cfg.diag_floor,
            phi: BTreeMap::new(),
            jobs: 0,
            keep_full_states: false,
        }
    }
}

impl RunPlan {
    pub fn phi_for(&self, method: Method) -> f64 {
        self.phi.get(&method).copied().unwrap_or_else(|| method.default_phi())
    }

    pub fn settings(&self) -> Vec<MethodSettings> {
        self.methods
            .iter()
            .map(|&m| m.settings(self.phi_for(m), self.p, self.theta, self.diag_floor))
            .collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Usage("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(CliError::Usage("methods must not repeat".into()));
        }
        for (m, phi) in &self.phi {
            if !(phi.is_finite() && *phi > 0.0) {
                return Err(CliError::Usage(format!("phi for {m} must be positive, got {phi}")));
            }
        }
        FilterConfig {
            p: self.p,
            theta: self.theta,
            diag_floor: self.diag_floor,
        }
        .validate()?;
        Ok(())
    }
}

fn method_model(exp: &Experiment, settings: &MethodSettings, sigma: f64) -> dskf_core::Result<KinematicModel> {
    let m = exp.leadfield.electrode_count();
    let variance = sigma * sigma * exp.scenario.options.noise_mismatch;
    assemble_model(
        &exp.leadfield,
        settings.order,
        settings.model_dt,
        settings.phi,
        DMatrix::identity(m, m) * variance,
    )
}

struct Group<'a> {
    settings: &'a MethodSettings,
    snr_db: f64,
    recordings: Vec<&'a RecordingEntry>,
}

fn failed(settings: &MethodSettings, rec: &RecordingEntry, error: String) -> CellRecord {
    CellRecord {
        method: settings.name.clone(),
        snr_db: rec.snr_db,
        realization: rec.realization,
        seed: rec.seed,
        noise_sigma: rec.noise_sigma,
        status: CellStatus::Failed { error },
        z_activity: Vec::new(),
        z_full: None,
        argmax: Vec::new(),
    }
}

fn run_cell(
    settings: &MethodSettings,
    model: &KinematicModel,
    schedule: &GainSchedule,
    rec: &RecordingEntry,
    keep_full: bool,
) -> CellRecord {
    let started = Instant::now();
    let n = model.source_count;
    let states: dskf_core::Result<Vec<DVector<f64>>> = schedule.apply(model, &rec.y).and_then(|frames| {
        if settings.smoothed {
            Ok(rts_smooth(&frames, model)?.into_iter().map(|s| s.z).collect())
        } else {
            Ok(frames.into_iter().map(|f| f.z).collect())
        }
    });
    let cell = match states {
        Ok(states) => CellRecord {
            method: settings.name.clone(),
            snr_db: rec.snr_db,
            realization: rec.realization,
            seed: rec.seed,
            noise_sigma: rec.noise_sigma,
            status: CellStatus::Ok,
            z_activity: states.iter().map(|z| z.as_slice()[..n].to_vec()).collect(),
            z_full: keep_full.then(|| states.iter().map(|z| z.as_slice().to_vec()).collect()),
            argmax: states.iter().map(|z| argmax_abs(&z.as_slice()[..n])).collect(),
        },
        Err(e) => failed(settings, rec, e.to_string()),
    };
    match &cell.status {
        CellStatus::Ok => info!(
            "{} snr={} r={} done in {:.3}s",
            settings.name,
            rec.snr_db,
            rec.realization,
            started.elapsed().as_secs_f64()
        ),
        CellStatus::Failed { error } => warn!("{} snr={} r={} failed: {error}", settings.name, rec.snr_db, rec.realization),
    }
    cell
}

fn run_group(exp: &Experiment, group: &Group<'_>, keep_full: bool) -> Vec<CellRecord> {
    let started = Instant::now();
    let sigma = group.recordings[0].noise_sigma;
    let config = FilterConfig {
        p: group.settings.p,
        theta: group.settings.theta,
        diag_floor: group.settings.diag_floor,
    };
    let prepared = method_model(exp, group.settings, sigma).and_then(|model| {
        let schedule = GainSchedule::compute(&model, &config, exp.scenario.n_steps)?;
        Ok((model, schedule))
    });
    let (model, schedule) = match prepared {
        Ok(v) => v,
        Err(e) => {
            warn!("{} snr={}: {e}", group.settings.name, group.snr_db);
            return group
                .recordings
                .iter()
                .map(|rec| failed(group.settings, rec, e.to_string()))
                .collect();
        }
    };
    info!(
        "{} snr={} schedule ready in {:.3}s",
        group.settings.name,
        group.snr_db,
        started.elapsed().as_secs_f64()
    );
    group
        .recordings
        .par_iter()
        .map(|rec| run_cell(group.settings, &model, &schedule, rec, keep_full))
        .collect()
}

/// Run every (method, SNR, realization) cell. Failures are recorded in their cells and
/// never abort the grid; use [`failure_count`] to decide the exit status.
pub fn run_grid(exp: &Experiment, plan: &RunPlan) -> CliResult<ResultsContainer> {
    plan.validate()?;
    let settings = plan.settings();
    let mut groups = Vec::new();
    for s in &settings {
        for &snr in &exp.scenario.snr_db {
            let recordings: Vec<&RecordingEntry> =
                exp.recordings.iter().filter(|r| r.snr_db.to_bits() == snr.to_bits()).collect();
            // Realizations of one SNR share the noise level by construction.
            debug_assert!(recordings.windows(2).all(|w| w[0].noise_sigma == w[1].noise_sigma));
            if !recordings.is_empty() {
                groups.push(Group {
                    settings: s,
                    snr_db: snr,
                    recordings,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let cells: Vec<CellRecord> = pool.install(|| {
        groups
            .par_iter()
            .map(|g| run_group(exp, g, plan.keep_full_states))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let mut container = ResultsContainer::new(
        exp.scenario.clone(),
        sha256_hex(&encode_leadfield(&exp.leadfield)),
        settings,
    );
    container.cells = cells;
    Ok(container)
}

pub fn failure_count(container: &ResultsContainer) -> usize {
    container
        .cells
        .iter()
        .filter(|c| matches!(c.status, CellStatus::Failed { .. }))
        .count()
}
