//! Synthetic experiments: lead fields with adjustable depth bias, Gaussian-pulse
//! sources, and noisy recordings at a prescribed SNR.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{norm3, KinematicModel, LeadField};

/// Sources are drawn inside this radius of the unit-sphere head.
pub const MAX_SOURCE_RADIUS: f64 = 0.9;
/// Neighbours added around each true source when building default ROIs.
pub const DEFAULT_ROI_NEIGHBOURS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRole {
    Deep,
    Superficial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub index: usize,
    pub amplitude_nam: f64,
    pub t_peak_ms: f64,
    pub pulse_length_ms: f64,
    pub label: String,
    pub role: SourceRole,
}

impl SourceSpec {
    fn validate(&self, duration_ms: f64, n_sources: usize) -> Result<()> {
        if self.index >= n_sources {
            return Err(Error::Config(format!(
                "source '{}' index {} outside lead field with {n_sources} sources",
                self.label, self.index
            )));
        }
        if !(self.amplitude_nam > 0.0) {
            return Err(Error::Config(format!("source '{}' needs a positive amplitude", self.label)));
        }
        if !(self.pulse_length_ms > 0.0) {
            return Err(Error::Config(format!("source '{}' needs a positive pulse length", self.label)));
        }
        if !(0.0..=duration_ms).contains(&self.t_peak_ms) {
            return Err(Error::Config(format!(
                "source '{}' peaks at {} ms, outside [0, {duration_ms}] ms",
                self.label, self.t_peak_ms
            )));
        }
        Ok(())
    }
}

/// Source strength in nAm at time `t` (seconds).
///
/// The pulse length spans ±3σ, so `σ = length / 6`.
pub fn gaussian_pulse(t: f64, spec: &SourceSpec) -> f64 {
    let sigma = spec.pulse_length_ms * 1e-3 / 6.0;
    let dt = t - spec.t_peak_ms * 1e-3;
    spec.amplitude_nam * (-(dt * dt) / (2.0 * sigma * sigma)).exp()
}

/// Parameters of a synthetic spherical-head lead field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLeadField {
    pub electrodes: usize,
    pub sources: usize,
    pub seed: u64,
    pub depth_bias: f64,
}

/// Where a scenario's lead field comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadFieldRef {
    Synthetic(SyntheticLeadField),
    File { path: String },
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let r = norm3(&v);
        if r > 1e-3 && r <= 1.0 {
            return [v[0] / r, v[1] / r, v[2] / r];
        }
    }
}

/// Spherical-head lead field: electrodes on the upper unit hemisphere, fixed-orientation
/// dipoles uniform in a ball of radius [`MAX_SOURCE_RADIUS`].
///
/// Entry `(i, j)` is `o_j·(e_i − s_j) / ‖e_i − s_j‖³`, i.e. inverse-square falloff
/// times the orientation cosine, and column `j` is then scaled by `(1 − depth_j)^β`
/// with `depth_j = 1 − ‖s_j‖`.
pub fn synth_leadfield(m: usize, n: usize, seed: u64, depth_bias: f64) -> Result<LeadField> {
    if m < 2 || n == 0 {
        return Err(Error::Parameter(format!(
            "synthetic lead field needs m >= 2 and n >= 1, got m={m}, n={n}"
        )));
    }
    if !(depth_bias >= 0.0 && depth_bias.is_finite()) {
        return Err(Error::Parameter(format!("depth bias exponent must be >= 0, got {depth_bias}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let electrodes: Vec<[f64; 3]> = (0..m)
        .map(|_| {
            let v = unit_vector(&mut rng);
            [v[0], v[1], v[2].abs()]
        })
        .collect();
    let mut positions = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    while positions.len() < n {
        let p: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if norm3(&p) <= 1.0 {
            positions.push(p.map(|c| c * MAX_SOURCE_RADIUS));
            orientations.push(unit_vector(&mut rng));
        }
    }
    let mut l = DMatrix::zeros(m, n);
    for (j, (s, o)) in positions.iter().zip(&orientations).enumerate() {
        let weight = norm3(s).powf(depth_bias);
        for (i, e) in electrodes.iter().enumerate() {
            let d = [e[0] - s[0], e[1] - s[1], e[2] - s[2]];
            let r = norm3(&d);
            let cos = (o[0] * d[0] + o[1] * d[1] + o[2] * d[2]) / r;
            l[(i, j)] = weight * cos / (r * r);
        }
    }
    LeadField::new(l, positions)
}

pub fn step_times(duration_s: f64, n_steps: usize) -> Vec<f64> {
    let dt = duration_s / n_steps as f64;
    (0..n_steps).map(|i| (i as f64 + 0.5) * dt).collect()
}

/// Pulse strength of every source at each step centre, `T × sources.len()`.
pub fn source_time_courses(sources: &[SourceSpec], duration_s: f64, n_steps: usize) -> DMatrix<f64> {
    let times = step_times(duration_s, n_steps);
    DMatrix::from_fn(n_steps, sources.len(), |t, k| gaussian_pulse(times[t], &sources[k]))
}

fn check_sources(leadfield: &LeadField, sources: &[SourceSpec]) -> Result<()> {
    let n = leadfield.source_count();
    match sources.iter().find(|s| s.index >= n) {
        Some(s) => Err(Error::Config(format!(
            "source '{}' index {} outside lead field with {n} sources",
            s.label, s.index
        ))),
        None => Ok(()),
    }
}

/// Noiseless recording on the filter grid: row `t` is `Σ_k L[:, idx_k] · pulse_k(t)`
/// sampled at step centres `(t + 0.5)·Δt`.
pub fn simulate_clean(
    leadfield: &LeadField,
    sources: &[SourceSpec],
    duration_s: f64,
    n_steps: usize,
) -> Result<DMatrix<f64>> {
    check_sources(leadfield, sources)?;
    let courses = source_time_courses(sources, duration_s, n_steps);
    Ok(mix(leadfield, sources, &courses))
}

fn mix(leadfield: &LeadField, sources: &[SourceSpec], courses: &DMatrix<f64>) -> DMatrix<f64> {
    let l = leadfield.matrix();
    let mut clean = DMatrix::zeros(courses.nrows(), l.nrows());
    for (k, spec) in sources.iter().enumerate() {
        let column = l.column(spec.index);
        for t in 0..courses.nrows() {
            let a = courses[(t, k)];
            for c in 0..l.nrows() {
                clean[(t, c)] += column[c] * a;
            }
        }
    }
    clean
}

/// Like [`simulate_clean`], but each step averages the pulses sampled at `sample_rate_hz`
/// within that step's interval. Steps containing no sample fall back to the step centre.
pub fn simulate_clean_oversampled(
    leadfield: &LeadField,
    sources: &[SourceSpec],
    duration_s: f64,
    n_steps: usize,
    sample_rate_hz: f64,
) -> Result<DMatrix<f64>> {
    check_sources(leadfield, sources)?;
    if !(sample_rate_hz > 0.0) {
        return Err(Error::Parameter(format!("sample rate must be positive, got {sample_rate_hz}")));
    }
    let dt = duration_s / n_steps as f64;
    let n_samples = (duration_s * sample_rate_hz).round() as usize;
    let mut sums = DMatrix::<f64>::zeros(n_steps, sources.len());
    let mut counts = vec![0usize; n_steps];
    for k in 0..n_samples {
        let t = k as f64 / sample_rate_hz;
        let step = ((t / dt) as usize).min(n_steps - 1);
        counts[step] += 1;
        for (j, spec) in sources.iter().enumerate() {
            sums[(step, j)] += gaussian_pulse(t, spec);
        }
    }
    let centres = step_times(duration_s, n_steps);
    let courses = DMatrix::from_fn(n_steps, sources.len(), |t, j| {
        if counts[t] == 0 {
            gaussian_pulse(centres[t], &sources[j])
        } else {
            sums[(t, j)] / counts[t] as f64
        }
    });
    Ok(mix(leadfield, sources, &courses))
}

/// Mean of squared entries.
pub fn signal_power(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

/// Noise standard deviation realizing `snr_db` against the pooled power of `clean`.
pub fn noise_sigma(clean: &DMatrix<f64>, snr_db: f64) -> Result<f64> {
    let power = signal_power(clean);
    if power == 0.0 || !power.is_finite() {
        return Err(Error::UndefinedSnr);
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Seed for realization `index` of an experiment seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A noisy recording with the clean signal it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub y: DMatrix<f64>,
    pub clean: DMatrix<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub snr_db: f64,
}

/// Add i.i.d. Gaussian noise at `snr_db` (pooled over channels and steps).
pub fn add_noise(clean: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<Recording> {
    let sigma = noise_sigma(clean, snr_db)?;
    Ok(add_noise_with_sigma(clean, sigma, snr_db, seed))
}

pub(crate) fn add_noise_with_sigma(clean: &DMatrix<f64>, sigma: f64, snr_db: f64, seed: u64) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Row-major draw order so the noise of step t does not depend on the channel count
    // of later steps.
    let mut y = clean.clone();
    for t in 0..y.nrows() {
        for c in 0..y.ncols() {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[(t, c)] += sigma * e;
        }
    }
    Recording {
        y,
        clean: clean.clone(),
        noise_sigma: sigma,
        seed,
        snr_db,
    }
}

/// Sample a trajectory of the model's own dynamics, `x_t = A x_{t−1} + q_t`, from
/// `x₀ = 0`. Returns the states (one column per step).
pub fn simulate_kinematic_truth(model: &KinematicModel, n_steps: usize, seed: u64) -> DMatrix<f64> {
    let dim = model.state_dim();
    let eig = SymmetricEigen::new(model.q.clone());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = DMatrix::zeros(dim, n_steps);
    let mut x = DVector::zeros(dim);
    for t in 0..n_steps {
        let e = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        x = &model.a * x + &root * e;
        states.set_column(t, &x);
    }
    states
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Default,
    Inverted,
    SingleSource,
    Visual,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Variant::Default),
            "inverted" => Ok(Variant::Inverted),
            "single_source" => Ok(Variant::SingleSource),
            "visual" => Ok(Variant::Visual),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected default, inverted, single_source or visual)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Default => "default",
            Variant::Inverted => "inverted",
            Variant::SingleSource => "single_source",
            Variant::Visual => "visual",
        })
    }
}

/// Optional generation features beyond the deterministic pulse protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Average pulses sampled at this rate into each filter step instead of sampling
    /// at step centres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversample_hz: Option<f64>,
    /// Drive the truth with the order-`s` kinematic process noise on top of the pulses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<ProcessNoiseSpec>,
    /// Multiplier on the noise variance handed to the filter (1 = matched).
    #[serde(default = "one")]
    pub noise_mismatch: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            oversample_hz: None,
            process_noise: None,
            noise_mismatch: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoiseSpec {
    pub order: usize,
    pub phi: f64,
}

/// One reproducible experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub variant: Variant,
    pub duration_ms: f64,
    pub n_steps: usize,
    pub snr_db: Vec<f64>,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub leadfield: LeadFieldRef,
    pub sources: Vec<SourceSpec>,
    /// ROI label → source indices; labels match [`SourceSpec::label`].
    pub rois: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub options: SimulationOptions,
}

impl Scenario {
    pub fn duration_s(&self) -> f64 {
        self.duration_ms * 1e-3
    }

    pub fn dt_s(&self) -> f64 {
        self.duration_s() / self.n_steps as f64
    }

    pub fn validate(&self, n_sources: usize) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::Config(format!("n_steps must be >= 2, got {}", self.n_steps)));
        }
        if self.n_realizations < 1 {
            return Err(Error::Config("n_realizations must be >= 1".into()));
        }
        if !(self.duration_ms > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("snr_db must list at least one finite level".into()));
        }
        if self.base_seed > i64::MAX as u64 {
            return Err(Error::Config("base_seed must fit in 63 bits".into()));
        }
        for s in &self.sources {
            s.validate(self.duration_ms, n_sources)?;
            if !self.rois.contains_key(&s.label) {
                return Err(Error::Config(format!("no ROI defined for source '{}'", s.label)));
            }
        }
        for (label, roi) in &self.rois {
            if roi.is_empty() {
                return Err(Error::Config(format!("ROI '{label}' is empty")));
            }
            if let Some(j) = roi.iter().find(|&&j| j >= n_sources) {
                return Err(Error::Config(format!("ROI '{label}' index {j} out of range")));
            }
        }
        if !(self.options.noise_mismatch > 0.0) {
            return Err(Error::Config("noise_mismatch must be positive".into()));
        }
        Ok(())
    }

    pub fn source_with_role(&self, role: SourceRole) -> Option<&SourceSpec> {
        self.sources.iter().find(|s| s.role == role)
    }

    pub fn roi(&self, label: &str) -> Option<&[usize]> {
        self.rois.get(label).map(Vec::as_slice)
    }

    /// Noiseless signal following the scenario's sampling options.
    pub fn clean_signal(&self, leadfield: &LeadField) -> Result<DMatrix<f64>> {
        self.validate(leadfield.source_count())?;
        match self.options.oversample_hz {
            Some(rate) => simulate_clean_oversampled(leadfield, &self.sources, self.duration_s(), self.n_steps, rate),
            None => simulate_clean(leadfield, &self.sources, self.duration_s(), self.n_steps),
        }
    }

    pub fn realization_seed(&self, realization: usize) -> u64 {
        derive_seed(self.base_seed, realization as u64)
    }

    /// Recording for one (SNR, realization) cell. The noise level is calibrated against
    /// the pulse-only clean signal.
    pub fn record(&self, leadfield: &LeadField, clean: &DMatrix<f64>, snr_db: f64, realization: usize) -> Result<Recording> {
        let seed = self.realization_seed(realization);
        let sigma = noise_sigma(clean, snr_db)?;
        let truth = match &self.options.process_noise {
            Some(spec) => {
                let lf_model = crate::statespace::assemble_model(
                    leadfield,
                    spec.order,
                    self.dt_s(),
                    spec.phi,
                    DMatrix::identity(leadfield.electrode_count(), leadfield.electrode_count()),
                )?;
                let states = simulate_kinematic_truth(&lf_model, self.n_steps, splitmix64(seed));
                let activity = states.rows(0, leadfield.source_count());
                clean + (leadfield.matrix() * activity).transpose()
            }
            None => clean.clone(),
        };
        Ok(add_noise_with_sigma(&truth, sigma, snr_db, seed))
    }

    /// True strength series of the source labelled `label`.
    pub fn true_track(&self, label: &str) -> Option<Vec<f64>> {
        let spec = self.sources.iter().find(|s| s.label == label)?;
        Some(step_times(self.duration_s(), self.n_steps).iter().map(|&t| gaussian_pulse(t, spec)).collect())
    }
}

/// Explicit choice of the scenario's source indices; `None` falls back to heuristics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourcePicks {
    pub deep: Option<usize>,
    pub superficial: Option<usize>,
    pub alternate_superficial: Option<usize>,
}

fn argmax_by(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Eccentricity of a thalamus-like source as a fraction of the head radius.
///
/// Not the sphere centre: the depth-bias factor `‖s‖^β` vanishes there, which would
/// make the deep source invisible to every estimator.
pub const DEEP_SOURCE_RADIUS: f64 = 0.3;

/// Source whose distance from the centre is closest to [`DEEP_SOURCE_RADIUS`]
/// (lowest index on ties).
pub fn deep_source(leadfield: &LeadField) -> usize {
    argmax_by(
        leadfield
            .positions()
            .iter()
            .map(|p| -(norm3(p) - DEEP_SOURCE_RADIUS).abs()),
    )
    .unwrap_or(0)
}

/// Source with the strongest lead-field column.
pub fn strongest_source(leadfield: &LeadField) -> usize {
    argmax_by(leadfield.column_norms().into_iter()).unwrap_or(0)
}

/// Superficial source farthest from `reference`, among the shallower half of sources.
pub fn alternate_superficial_source(leadfield: &LeadField, reference: usize) -> usize {
    let depths = leadfield.depths();
    let mut sorted = depths.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let pos = leadfield.positions();
    let r = pos[reference];
    argmax_by(pos.iter().enumerate().map(|(j, p)| {
        if j == reference || depths[j] > median {
            f64::NEG_INFINITY
        } else {
            let d = [p[0] - r[0], p[1] - r[1], p[2] - r[2]];
            norm3(&d)
        }
    }))
    .unwrap_or(reference)
}

/// `center` plus its `k` nearest sources by position (ties by index), sorted.
pub fn neighbourhood(leadfield: &LeadField, center: usize, k: usize) -> Vec<usize> {
    let pos = leadfield.positions();
    let c = pos[center];
    let mut others: Vec<(f64, usize)> = pos
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != center)
        .map(|(j, p)| {
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            (norm3(&d), j)
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut roi: Vec<usize> = std::iter::once(center).chain(others.into_iter().take(k).map(|(_, j)| j)).collect();
    roi.sort_unstable();
    roi
}

pub const PEAK_AMPLITUDE_NAM: f64 = 10.0;
pub const PULSE_LENGTH_MS: f64 = 2.0;
pub const DEEP_PEAK_MS: f64 = 1.1;
pub const SUPERFICIAL_PEAK_MS: f64 = 1.9;
pub const DURATION_MS: f64 = 3.0;
pub const N_STEPS: usize = 40;
pub const SNR_LEVELS_DB: [f64; 3] = [30.0, 20.0, 10.0];
pub const N_REALIZATIONS: usize = 20;

/// Two-source tracking protocol and its three alternates.
///
/// - `Default`: deep source peaking at 1.1 ms, superficial at 1.9 ms.
/// - `Inverted`: peak times swapped.
/// - `SingleSource`: superficial source only.
/// - `Visual`: superficial source moved to an alternate superficial location.
pub fn build_benchmark_scenario(
    variant: Variant,
    leadfield: &LeadField,
    leadfield_ref: LeadFieldRef,
    picks: SourcePicks,
    base_seed: u64,
) -> Result<Scenario> {
    let n = leadfield.source_count();
    for idx in [picks.deep, picks.superficial, picks.alternate_superficial].into_iter().flatten() {
        if idx >= n {
            return Err(Error::Config(format!("designated source index {idx} outside lead field of {n} sources")));
        }
    }
    if n < 2 {
        return Err(Error::Config("the benchmark scenarios need at least two sources in the lead field".into()));
    }
    let deep = picks.deep.unwrap_or_else(|| deep_source(leadfield));
    let superficial = picks.superficial.unwrap_or_else(|| strongest_source(leadfield));
    if deep == superficial {
        return Err(Error::Config(format!(
            "deep and superficial designations coincide at index {deep}; override one of them"
        )));
    }
    let (deep_peak, superficial_peak) = match variant {
        Variant::Inverted => (SUPERFICIAL_PEAK_MS, DEEP_PEAK_MS),
        _ => (DEEP_PEAK_MS, SUPERFICIAL_PEAK_MS),
    };
    let (superficial_idx, superficial_label) = match variant {
        Variant::Visual => {
            let alt = picks
                .alternate_superficial
                .unwrap_or_else(|| alternate_superficial_source(leadfield, superficial));
            (alt, "visual")
        }
        _ => (superficial, "somatosensory"),
    };
    if superficial_idx == deep {
        return Err(Error::Config("alternate superficial source coincides with the deep source".into()));
    }
    let mut sources = Vec::new();
    if variant != Variant::SingleSource {
        sources.push(SourceSpec {
            index: deep,
            amplitude_nam: PEAK_AMPLITUDE_NAM,
            t_peak_ms: deep_peak,
            pulse_length_ms: PULSE_LENGTH_MS,
            label: "thalamic".into(),
            role: SourceRole::Deep,
        });
    }
    sources.push(SourceSpec {
        index: superficial_idx,
        amplitude_nam: PEAK_AMPLITUDE_NAM,
        t_peak_ms: superficial_peak,
        pulse_length_ms: PULSE_LENGTH_MS,
        label: superficial_label.into(),
        role: SourceRole::Superficial,
    });
    // The deep ROI is kept in single-source runs to measure false deep activations.
    let mut rois = BTreeMap::new();
    rois.insert("thalamic".to_string(), neighbourhood(leadfield, deep, DEFAULT_ROI_NEIGHBOURS));
    rois.insert(
        superficial_label.to_string(),
        neighbourhood(leadfield, superficial_idx, DEFAULT_ROI_NEIGHBOURS),
    );
    let scenario = Scenario {
        variant,
        duration_ms: DURATION_MS,
        n_steps: N_STEPS,
        snr_db: SNR_LEVELS_DB.to_vec(),
        n_realizations: N_REALIZATIONS,
        base_seed,
        leadfield: leadfield_ref,
        sources,
        rois,
        options: SimulationOptions::default(),
    };
    scenario.validate(n)?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(t_peak_ms: f64) -> SourceSpec {
        SourceSpec {
            index: 0,
            amplitude_nam: 10.0,
            t_peak_ms,
            pulse_length_ms: 2.0,
            label: "a".into(),
            role: SourceRole::Deep,
        }
    }

    #[test]
    fn pulse_peak_and_tails() {
        let s = spec(1.1);
        assert_eq!(gaussian_pulse(1.1e-3, &s), 10.0);
        let sigma = 2e-3 / 6.0;
        assert_relative_eq!(gaussian_pulse(1.1e-3 + 3.0 * sigma, &s), 10.0 * (-4.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(gaussian_pulse(1.1e-3 - 3.0 * sigma, &s) / 10.0, 0.011108996538242306, max_relative = 1e-12);
        for delta in [1e-5, 2.5e-4, 7e-4] {
            assert_relative_eq!(gaussian_pulse(1.1e-3 + delta, &s), gaussian_pulse(1.1e-3 - delta, &s), max_relative = 1e-12);
        }
    }

    #[test]
    fn leadfield_is_deterministic() {
        let a = synth_leadfield(8, 20, 3, 1.0).unwrap();
        let b = synth_leadfield(8, 20, 3, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_leadfield(8, 20, 4, 1.0).unwrap());
    }

    #[test]
    fn zero_bias_is_pure_geometry() {
        let neutral = synth_leadfield(6, 10, 9, 0.0).unwrap();
        let biased = synth_leadfield(6, 10, 9, 2.0).unwrap();
        for j in 0..10 {
            let r = norm3(&neutral.positions()[j]);
            let ratio = biased.matrix().column(j) / r.powi(2);
            assert_relative_eq!(ratio, neutral.matrix().column(j).into_owned(), max_relative = 1e-12);
        }
    }

    #[test]
    fn leadfield_rejects_bad_parameters() {
        assert!(synth_leadfield(1, 5, 0, 1.0).is_err());
        assert!(synth_leadfield(4, 0, 0, 1.0).is_err());
        assert!(synth_leadfield(4, 5, 0, -1.0).is_err());
    }

    #[test]
    fn clean_without_sources_is_zero() {
        let lf = synth_leadfield(4, 6, 1, 1.0).unwrap();
        let clean = simulate_clean(&lf, &[], 3e-3, 40).unwrap();
        assert_eq!(clean.shape(), (40, 4));
        assert_eq!(clean.amax(), 0.0);
    }

    #[test]
    fn single_step_at_peak_is_scaled_column() {
        let lf = synth_leadfield(4, 6, 1, 1.0).unwrap();
        let mut s = spec(0.5);
        s.index = 3;
        // one step of 1 ms: centre at 0.5 ms
        let clean = simulate_clean(&lf, &[s], 1e-3, 1).unwrap();
        assert_relative_eq!(clean.row(0).transpose(), lf.matrix().column(3) * 10.0, max_relative = 1e-15);
    }

    #[test]
    fn clean_rejects_bad_index() {
        let lf = synth_leadfield(4, 6, 1, 1.0).unwrap();
        let mut s = spec(1.0);
        s.index = 6;
        assert!(matches!(simulate_clean(&lf, &[s], 3e-3, 40), Err(Error::Config(_))));
    }

    #[test]
    fn noise_requires_signal() {
        assert!(matches!(add_noise(&DMatrix::zeros(3, 3), 10.0, 1), Err(Error::UndefinedSnr)));
    }

    #[test]
    fn vanishing_noise_at_huge_snr() {
        let clean = DMatrix::from_fn(10, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let rec = add_noise(&clean, 300.0, 5).unwrap();
        assert!((&rec.y - &clean).norm() <= 1e-10 * clean.norm());
    }

    #[test]
    fn realizations_differ_only_in_noise() {
        let clean = DMatrix::from_fn(10, 4, |i, j| (i * j) as f64 + 1.0);
        let a = add_noise(&clean, 10.0, derive_seed(7, 0)).unwrap();
        let b = add_noise(&clean, 10.0, derive_seed(7, 1)).unwrap();
        assert_ne!(a.y, b.y);
        assert_eq!(a.clean, b.clean);
        assert_eq!(a.y, add_noise(&clean, 10.0, derive_seed(7, 0)).unwrap().y);
    }

    #[test]
    fn oversampling_averages_within_steps() {
        let lf = synth_leadfield(4, 3, 2, 0.0).unwrap();
        let s = spec(1.5);
        let coarse = simulate_clean(&lf, std::slice::from_ref(&s), 3e-3, 40).unwrap();
        let fine = simulate_clean_oversampled(&lf, std::slice::from_ref(&s), 3e-3, 40, 20_000.0).unwrap();
        assert_eq!(fine.shape(), coarse.shape());
        // both peak in the middle of the window
        let peak = |m: &DMatrix<f64>| (0..40).max_by(|&a, &b| m.row(a).norm().total_cmp(&m.row(b).norm())).unwrap();
        assert!((peak(&coarse) as i64 - peak(&fine) as i64).abs() <= 1);
    }

    #[test]
    fn variants_parse() {
        assert_eq!("single_source".parse::<Variant>().unwrap(), Variant::SingleSource);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn neighbourhood_contains_center() {
        let lf = synth_leadfield(4, 30, 2, 1.0).unwrap();
        let roi = neighbourhood(&lf, 7, 5);
        assert_eq!(roi.len(), 6);
        assert!(roi.contains(&7));
    }
}
