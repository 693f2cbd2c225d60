//! Kinematic state-space systems built on top of a lead field.
//!
//! The state of an order-`s` model stacks source activity with its first `s` time
//! derivatives, `x = [d; v; a]`, each block of length `n` (the source count). Only the
//! highest derivative is driven by process noise; the observation reads the activity
//! block through the lead field.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Highest supported kinematic order (activity, velocity, acceleration).
pub const MAX_ORDER: usize = 2;

/// Linear map from scalar (fixed-orientation) source strengths to electrode potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    matrix: DMatrix<f64>,
    positions: Vec<[f64; 3]>,
}

impl LeadField {
    pub fn new(matrix: DMatrix<f64>, positions: Vec<[f64; 3]>) -> Result<Self> {
        let (m, n) = matrix.shape();
        if m < 2 {
            return Err(Error::Parameter(format!("lead field needs at least 2 electrodes, got {m}")));
        }
        if n == 0 {
            return Err(Error::Parameter("lead field needs at least one source".into()));
        }
        if positions.len() != n {
            return Err(Error::Dimension(format!(
                "{} source positions for {n} lead-field columns",
                positions.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("lead field contains non-finite entries".into()));
        }
        if let Some(j) = (0..n).find(|&j| matrix.column(j).iter().all(|&v| v == 0.0)) {
            return Err(Error::Parameter(format!("lead-field column {j} is identically zero")));
        }
        Ok(Self { matrix, positions })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn electrode_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn source_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }

    /// Depth of each source below the unit sphere, `1 − ‖position‖`.
    pub fn depths(&self) -> Vec<f64> {
        self.positions.iter().map(|p| 1.0 - norm3(p)).collect()
    }
}

pub(crate) fn norm3(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// One linear-Gaussian system `x_t = A x_{t−1} + q_t`, `y_t = H x_t + r_t`.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    pub order: usize,
    pub dt: f64,
    pub phi: f64,
    pub source_count: usize,
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl KinematicModel {
    pub fn state_dim(&self) -> usize {
        (self.order + 1) * self.source_count
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }
}

fn check_order(s: usize) -> Result<()> {
    if s > MAX_ORDER {
        return Err(Error::Parameter(format!("kinematic order must be 0, 1 or 2, got {s}")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("time step must be positive and finite, got {dt}")));
    }
    Ok(())
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Block upper-triangular transition: block `(i, j)` for `j ≥ i` is `dt^{j−i}/(j−i)! · I_n`.
pub fn build_transition(s: usize, dt: f64, n: usize) -> Result<DMatrix<f64>> {
    check_order(s)?;
    check_dt(dt)?;
    if n == 0 {
        return Err(Error::Parameter("source count must be at least 1".into()));
    }
    let dim = (s + 1) * n;
    let mut a = DMatrix::zeros(dim, dim);
    for bi in 0..=s {
        for bj in bi..=s {
            let k = bj - bi;
            let coeff = dt.powi(k as i32) / factorial(k);
            for i in 0..n {
                a[(bi * n + i, bj * n + i)] = coeff;
            }
        }
    }
    Ok(a)
}

/// Process noise acting on the highest derivative only: `(s/dtˢ)·φ·I_n` in the
/// bottom-right block, zero elsewhere. Order 0 has no kinematic form; see
/// [`random_walk_noise`].
pub fn build_process_noise(s: usize, dt: f64, phi: f64, n: usize) -> Result<DMatrix<f64>> {
    check_order(s)?;
    if s == 0 {
        return Err(Error::Parameter(
            "order-0 models take a random-walk process noise, not the kinematic form".into(),
        ));
    }
    check_dt(dt)?;
    check_phi(phi)?;
    let dim = (s + 1) * n;
    let mut q = DMatrix::zeros(dim, dim);
    let var = s as f64 / dt.powi(s as i32) * phi;
    for i in (s * n)..dim {
        q[(i, i)] = var;
    }
    Ok(q)
}

/// `φ·I_n`, the full-rank random walk used by the order-0 baseline.
pub fn random_walk_noise(phi: f64, n: usize) -> Result<DMatrix<f64>> {
    check_phi(phi)?;
    Ok(DMatrix::identity(n, n) * phi)
}

fn check_phi(phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Parameter(format!("process-noise variance must be positive, got {phi}")));
    }
    Ok(())
}

/// `H = [L 0_{m×sn}]`.
pub fn build_observation(leadfield: &LeadField, s: usize) -> Result<DMatrix<f64>> {
    check_order(s)?;
    let l = leadfield.matrix();
    let (m, n) = l.shape();
    let mut h = DMatrix::zeros(m, (s + 1) * n);
    h.view_mut((0, 0), (m, n)).copy_from(l);
    Ok(h)
}

pub fn assemble_model(
    leadfield: &LeadField,
    s: usize,
    dt: f64,
    phi: f64,
    noise_cov: DMatrix<f64>,
) -> Result<KinematicModel> {
    let n = leadfield.source_count();
    let m = leadfield.electrode_count();
    let a = build_transition(s, dt, n)?;
    let q = if s == 0 {
        random_walk_noise(phi, n)?
    } else {
        build_process_noise(s, dt, phi, n)?
    };
    let h = build_observation(leadfield, s)?;
    if noise_cov.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "noise covariance is {}x{}, expected {m}x{m}",
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    let asym = (&noise_cov - noise_cov.transpose()).amax();
    if asym > 1e-12 * noise_cov.amax() {
        return Err(Error::Parameter("noise covariance is not symmetric".into()));
    }
    if noise_cov.clone().cholesky().is_none() {
        return Err(Error::Parameter("noise covariance is not positive definite".into()));
    }
    Ok(KinematicModel {
        order: s,
        dt,
        phi,
        source_count: n,
        a,
        q,
        h,
        r: noise_cov,
    })
}

/// Activity block (first `n` entries) of a stacked kinematic state.
pub fn activity_block(x: &DVector<f64>, n: usize) -> DVector<f64> {
    x.rows(0, n).into_owned()
}
