//! Standardized Kalman filtering over kinematic state-space models.
//!
//! Each step runs the usual predict / gain / update recursion and then maps the
//! posterior mean through a standardization weight
//!
//! ```text
//! W = Diag(P⁻^{-1/2} K S Kᵀ P⁻^{-1/2})^{-p} · P⁻^{-1/2}
//! ```
//!
//! where `P⁻` is the predictive covariance. The exponent `p = 0.5` standardizes
//! amplitude (sLORETA-like), `p = 1` standardizes power.
//!
//! Covariances, gains and weights do not depend on the observations, so they are
//! computed once per model as a [`GainSchedule`] and then applied to any number of
//! recordings. [`run_filter`] does both in one call.

mod smoother;

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, enforce_psd, inv_sqrt_spd, symmetrize, symmetrized};
use crate::statespace::{assemble_model, KinematicModel, LeadField};

pub use smoother::{rts_smooth, SmoothedState};

/// Default standardization exponent (power standardization).
pub const DEFAULT_EXPONENT: f64 = 1.0;
/// Default initial covariance scale: squared expected peak amplitude, 10 nAm.
pub const DEFAULT_THETA: f64 = 100.0;
/// Default relative floor on the normalizer diagonal.
pub const DEFAULT_DIAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Standardization exponent `p`.
    pub p: f64,
    /// Initial covariance `P₀ = θ I`.
    pub theta: f64,
    /// Normalizer entries below `diag_floor · max` are clamped before raising to `−p`.
    pub diag_floor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            p: DEFAULT_EXPONENT,
            theta: DEFAULT_THETA,
            diag_floor: DEFAULT_DIAG_FLOOR,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Parameter(format!("exponent p must be positive, got {}", self.p)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Parameter(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.diag_floor >= 0.0 && self.diag_floor < 1.0) {
            return Err(Error::Parameter(format!(
                "diag_floor must lie in [0, 1), got {}",
                self.diag_floor
            )));
        }
        Ok(())
    }
}

/// Mean and covariance of the state, predicted or posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl FilterState {
    /// `x₀ = 0`, `P₀ = θ I`.
    pub fn initial(state_dim: usize, theta: f64) -> Self {
        Self {
            x: DVector::zeros(state_dim),
            p: DMatrix::identity(state_dim, state_dim) * theta,
        }
    }
}

/// The observation-independent part of one filter step.
#[derive(Debug, Clone)]
pub struct StepGain {
    pub p_pred: DMatrix<f64>,
    pub p_post: DMatrix<f64>,
    /// Kalman gain, `state_dim × m`.
    pub k: DMatrix<f64>,
    /// Innovation covariance, `m × m`.
    pub s: DMatrix<f64>,
    /// Standardization weight.
    pub w: DMatrix<f64>,
    /// Floored normalizer diagonal `D`.
    pub normalizer: DVector<f64>,
}

/// Outputs of one filter step.
#[derive(Debug, Clone)]
pub struct FilterFrame {
    pub t: usize,
    pub x_pred: DVector<f64>,
    pub x_post: DVector<f64>,
    /// Standardized state `W x_post`.
    pub z: DVector<f64>,
    pub gain: Arc<StepGain>,
}

impl FilterFrame {
    pub fn p_pred(&self) -> &DMatrix<f64> {
        &self.gain.p_pred
    }
    pub fn p_post(&self) -> &DMatrix<f64> {
        &self.gain.p_post
    }
    pub fn k(&self) -> &DMatrix<f64> {
        &self.gain.k
    }
    pub fn s(&self) -> &DMatrix<f64> {
        &self.gain.s
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.gain.w
    }
}

fn predict_mean(x: &DVector<f64>, model: &KinematicModel) -> DVector<f64> {
    &model.a * x
}

fn predict_cov(p: &DMatrix<f64>, model: &KinematicModel) -> DMatrix<f64> {
    symmetrized(&model.a * p * model.a.transpose() + &model.q)
}

/// `x⁻ = A x`, `P⁻ = A P Aᵀ + Q`.
pub fn predict(prev: &FilterState, model: &KinematicModel) -> FilterState {
    FilterState {
        x: predict_mean(&prev.x, model),
        p: predict_cov(&prev.p, model),
    }
}

/// Innovation covariance `S = H P⁻ Hᵀ + R` and gain `K = P⁻ Hᵀ S⁻¹`.
///
/// `K` comes from a Cholesky solve against `S`; `S⁻¹` is never formed.
pub fn gain(p_pred: &DMatrix<f64>, model: &KinematicModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pht = p_pred * model.h.transpose();
    let mut s = &model.h * &pht + &model.r;
    symmetrize(&mut s);
    let chol = cholesky(&s, "innovation covariance")?;
    let k = chol.solve(&pht.transpose()).transpose();
    Ok((k, s))
}

fn update_mean(
    x_pred: &DVector<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &KinematicModel,
) -> DVector<f64> {
    let innovation = y - &model.h * x_pred;
    x_pred + k * innovation
}

fn update_cov(p_pred: &DMatrix<f64>, k: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = p_pred - k * s * k.transpose();
    symmetrize(&mut p);
    if enforce_psd(&mut p) {
        warn!("posterior covariance lost positive semidefiniteness; negative eigenvalues clipped");
    }
    p
}

/// `x⁺ = x⁻ + K (y − H x⁻)`, `P⁺ = P⁻ − K S Kᵀ`.
pub fn update(
    pred: &FilterState,
    k: &DMatrix<f64>,
    s: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &KinematicModel,
) -> Result<FilterState> {
    let n = model.state_dim();
    let m = model.obs_dim();
    if pred.x.len() != n || pred.p.shape() != (n, n) {
        return Err(Error::Shape(format!("predicted state does not have dimension {n}")));
    }
    if k.shape() != (n, m) || s.shape() != (m, m) {
        return Err(Error::Shape(format!("gain must be {n}x{m} and S {m}x{m}")));
    }
    if y.len() != m {
        return Err(Error::Shape(format!("observation has {} channels, expected {m}", y.len())));
    }
    Ok(FilterState {
        x: update_mean(&pred.x, k, y, model),
        p: update_cov(&pred.p, k, s),
    })
}

/// Standardization weight `W` and the floored normalizer diagonal `D`.
///
/// `D = diag(P⁻^{-1/2} K S Kᵀ P⁻^{-1/2})`, computed row by row without forming the
/// full product. Accepts `p = 0` (pure whitening) even though filter configs require
/// `p > 0`.
pub fn standardization_weight(
    p_pred: &DMatrix<f64>,
    k: &DMatrix<f64>,
    s: &DMatrix<f64>,
    p: f64,
    diag_floor: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let root = inv_sqrt_spd(p_pred)?;
    let b = &root * k;
    let bs = &b * s;
    let mut d = DVector::from_iterator(
        b.nrows(),
        (0..b.nrows()).map(|i| b.row(i).dot(&bs.row(i))),
    );
    let max = d.max();
    if !(max > 0.0) {
        return Err(Error::DegenerateStep { step: 0 });
    }
    let floor = diag_floor * max;
    d.apply(|v| *v = v.max(floor));
    let scale = d.map(|v| v.powf(-p));
    let mut w = root;
    for (i, mut row) in w.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    Ok((w, d))
}

/// `(W, z = W x⁺)`.
pub fn standardize(
    p_pred: &DMatrix<f64>,
    k: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x_post: &DVector<f64>,
    p: f64,
    diag_floor: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (w, _) = standardization_weight(p_pred, k, s, p, diag_floor)?;
    let z = &w * x_post;
    Ok((w, z))
}

/// Per-step covariances, gains and weights for a model over a fixed horizon.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    steps: Vec<Arc<StepGain>>,
    state_dim: usize,
}

impl GainSchedule {
    pub fn compute(model: &KinematicModel, config: &FilterConfig, horizon: usize) -> Result<Self> {
        config.validate()?;
        if horizon == 0 {
            return Err(Error::Parameter("filter horizon must be at least one step".into()));
        }
        let dim = model.state_dim();
        let mut p = FilterState::initial(dim, config.theta).p;
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let p_pred = predict_cov(&p, model);
            let (k, s) = gain(&p_pred, model).map_err(|e| e.at_step(t))?;
            let p_post = update_cov(&p_pred, &k, &s);
            let (w, normalizer) =
                standardization_weight(&p_pred, &k, &s, config.p, config.diag_floor)
                    .map_err(|e| e.at_step(t))?;
            p = p_post.clone();
            steps.push(Arc::new(StepGain {
                p_pred,
                p_post,
                k,
                s,
                w,
                normalizer,
            }));
        }
        Ok(Self {
            steps,
            state_dim: dim,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[Arc<StepGain>] {
        &self.steps
    }

    /// Run the mean recursion over `observations` (one row per step, `T × m`).
    pub fn apply(&self, model: &KinematicModel, observations: &DMatrix<f64>) -> Result<Vec<FilterFrame>> {
        let (t_len, m) = observations.shape();
        if t_len != self.horizon() {
            return Err(Error::Shape(format!(
                "{t_len} observation rows for a schedule of {} steps",
                self.horizon()
            )));
        }
        if m != model.obs_dim() || model.state_dim() != self.state_dim {
            return Err(Error::Shape(format!(
                "observations have {m} channels, model expects {}",
                model.obs_dim()
            )));
        }
        let mut x = DVector::zeros(self.state_dim);
        let mut frames = Vec::with_capacity(t_len);
        for (t, step) in self.steps.iter().enumerate() {
            let y = observations.row(t).transpose();
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    step: t,
                    reason: "non-finite observation".into(),
                });
            }
            let x_pred = predict_mean(&x, model);
            let x_post = update_mean(&x_pred, &step.k, &y, model);
            let z = &step.w * &x_post;
            x = x_post.clone();
            frames.push(FilterFrame {
                t,
                x_pred,
                x_post,
                z,
                gain: Arc::clone(step),
            });
        }
        Ok(frames)
    }
}

/// Full forward pass from `x₀ = 0`, `P₀ = θ I`.
pub fn run_filter(
    model: &KinematicModel,
    observations: &DMatrix<f64>,
    config: &FilterConfig,
) -> Result<Vec<FilterFrame>> {
    let schedule = GainSchedule::compute(model, config, observations.nrows())?;
    schedule.apply(model, observations)
}

/// Zero-order baseline: identity dynamics, `H = L`, random-walk noise `φ I`.
pub fn run_skf(
    leadfield: &LeadField,
    observations: &DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    phi: f64,
    config: &FilterConfig,
) -> Result<Vec<FilterFrame>> {
    // dt has no effect on order-0 dynamics.
    let model = assemble_model(leadfield, 0, 1.0, phi, noise_cov)?;
    run_filter(&model, observations, config)
}

/// Index of the largest `|v_i|`; ties resolve to the lowest index.
pub fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}
