//! Scenario construction and the on-disk layout of a simulated experiment.
//!
//! ```text
//! <dir>/scenario.toml
//! <dir>/leadfield.bin              (synthetic lead fields only)
//! <dir>/recordings/snr<dB>_r<NN>.csv
//! <dir>/manifest.txt               sha256 and path of every file above
//! ```

use std::path::{Path, PathBuf};

use dskf_core::io::{self, sha256_hex};
use dskf_core::simulate::{
    build_benchmark_scenario, noise_sigma, synth_leadfield, LeadFieldRef, Scenario, SourcePicks,
    SyntheticLeadField, Variant,
};
use dskf_core::statespace::LeadField;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const LEADFIELD_FILE: &str = "leadfield.bin";
pub const RECORDINGS_DIR: &str = "recordings";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Default synthetic head: 32 electrodes, 200 sources, linear depth attenuation.
pub const DEFAULT_LEADFIELD: SyntheticLeadField = SyntheticLeadField {
    electrodes: 32,
    sources: 200,
    seed: 0,
    depth_bias: 1.0,
};

pub const DEFAULT_BASE_SEED: u64 = 7;

#[derive(Debug, Clone)]
pub enum LeadFieldSource {
    Synthetic(SyntheticLeadField),
    File(PathBuf),
}

/// Everything `simulate` needs to produce a scenario.
#[derive(Debug, Clone)]
pub struct SimulateRequest {
    pub variant: Variant,
    pub base_seed: u64,
    pub leadfield: LeadFieldSource,
    pub picks: SourcePicks,
    pub snr_db: Option<Vec<f64>>,
    pub n_realizations: Option<usize>,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        Self {
            variant: Variant::Default,
            base_seed: DEFAULT_BASE_SEED,
            leadfield: LeadFieldSource::Synthetic(DEFAULT_LEADFIELD),
            picks: SourcePicks::default(),
            snr_db: None,
            n_realizations: None,
        }
    }
}

pub fn build_scenario(req: &SimulateRequest) -> CliResult<(Scenario, LeadField)> {
    let (lf, lf_ref) = match &req.leadfield {
        LeadFieldSource::Synthetic(spec) => (
            synth_leadfield(spec.electrodes, spec.sources, spec.seed, spec.depth_bias)?,
            LeadFieldRef::Synthetic(spec.clone()),
        ),
        LeadFieldSource::File(path) => (
            io::load_leadfield(path)?,
            LeadFieldRef::File {
                path: path.to_string_lossy().into_owned(),
            },
        ),
    };
    let mut scenario = build_benchmark_scenario(req.variant, &lf, lf_ref, req.picks, req.base_seed)?;
    if let Some(snr) = &req.snr_db {
        scenario.snr_db = snr.clone();
    }
    if let Some(r) = req.n_realizations {
        scenario.n_realizations = r;
    }
    scenario.validate(lf.source_count())?;
    Ok((scenario, lf))
}

/// Lead field a scenario refers to; relative file paths resolve against `base`.
pub fn resolve_leadfield(scenario: &Scenario, base: &Path) -> CliResult<LeadField> {
    Ok(match &scenario.leadfield {
        LeadFieldRef::Synthetic(s) => synth_leadfield(s.electrodes, s.sources, s.seed, s.depth_bias)?,
        LeadFieldRef::File { path } => io::load_leadfield(&base.join(path))?,
    })
}

pub fn snr_key(snr_db: f64) -> String {
    format!("{snr_db}")
}

pub fn recording_name(snr_db: f64, realization: usize) -> String {
    format!("snr{}_r{realization:02}.csv", snr_key(snr_db))
}

/// One noisy recording and the noise level the filter is told about.
#[derive(Debug, Clone)]
pub struct RecordingEntry {
    pub snr_db: f64,
    pub realization: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub y: DMatrix<f64>,
}

/// A scenario with its lead field and all recordings, in (SNR, realization) order.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub leadfield: LeadField,
    pub recordings: Vec<RecordingEntry>,
}

impl Experiment {
    /// Generate every recording in memory.
    pub fn generate(scenario: Scenario, leadfield: LeadField) -> CliResult<Self> {
        let clean = scenario.clean_signal(&leadfield)?;
        let mut recordings = Vec::new();
        for &snr in &scenario.snr_db {
            for r in 0..scenario.n_realizations {
                let rec = scenario.record(&leadfield, &clean, snr, r)?;
                recordings.push(RecordingEntry {
                    snr_db: snr,
                    realization: r,
                    seed: rec.seed,
                    noise_sigma: rec.noise_sigma,
                    y: rec.y,
                });
            }
        }
        Ok(Self {
            scenario,
            leadfield,
            recordings,
        })
    }

    /// Read a directory written by [`write_experiment`].
    pub fn load(dir: &Path) -> CliResult<Self> {
        let scenario = io::load_scenario(&dir.join(SCENARIO_FILE))?;
        let leadfield = resolve_leadfield(&scenario, dir)?;
        let clean = scenario.clean_signal(&leadfield)?;
        let mut recordings = Vec::new();
        for &snr in &scenario.snr_db {
            let sigma = noise_sigma(&clean, snr)?;
            for r in 0..scenario.n_realizations {
                let path = dir.join(RECORDINGS_DIR).join(recording_name(snr, r));
                let y = io::load_recording_csv(&path)?;
                if y.shape() != (scenario.n_steps, leadfield.electrode_count()) {
                    return Err(dskf_core::Error::Dimension(format!(
                        "{}: {}x{} recording, scenario expects {}x{}",
                        path.display(),
                        y.nrows(),
                        y.ncols(),
                        scenario.n_steps,
                        leadfield.electrode_count()
                    ))
                    .into());
                }
                recordings.push(RecordingEntry {
                    snr_db: snr,
                    realization: r,
                    seed: scenario.realization_seed(r),
                    noise_sigma: sigma,
                    y,
                });
            }
        }
        Ok(Self {
            scenario,
            leadfield,
            recordings,
        })
    }
}

/// Sorted `(relative path, sha256)` pairs of the files an experiment directory holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        self.entries.iter().map(|(path, hash)| format!("{hash}  {path}\n")).collect()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

/// Write scenario, lead field (when synthesized) and recordings under `dir`.
pub fn write_experiment(dir: &Path, exp: &Experiment) -> CliResult<Manifest> {
    let mut entries = Vec::new();
    let mut emit = |rel: String, bytes: Vec<u8>| -> CliResult<()> {
        io::write_file(&dir.join(&rel), &bytes)?;
        entries.push((rel, sha256_hex(&bytes)));
        Ok(())
    };
    emit(SCENARIO_FILE.into(), io::scenario_to_toml(&exp.scenario)?.into_bytes())?;
    if matches!(exp.scenario.leadfield, LeadFieldRef::Synthetic(_)) {
        emit(LEADFIELD_FILE.into(), io::encode_leadfield(&exp.leadfield))?;
    }
    for rec in &exp.recordings {
        let rel = format!("{RECORDINGS_DIR}/{}", recording_name(rec.snr_db, rec.realization));
        emit(rel, io::recording_to_csv(&rec.y, exp.scenario.duration_ms).into_bytes())?;
    }
    entries.sort();
    let manifest = Manifest { entries };
    io::write_file(&dir.join(MANIFEST_FILE), manifest.render().as_bytes())?;
    Ok(manifest)
}

pub fn parse_snr_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Usage(format!("invalid SNR level '{v}'")))
        })
        .collect()
}
