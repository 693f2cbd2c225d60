//! Backward Rauch-Tung-Striebel pass over a completed forward run.
//!
//! The recursion acts on the standardized sequence `z_t = W_t x_{t|t}` together with
//! the filter's posterior covariances:
//!
//! ```text
//! z⁻     = A z_t
//! P⁻     = A P_t Aᵀ + Q
//! C_t    = P_t Aᵀ (P⁻)⁻¹
//! z̄_t   = z_t + C_t (z̄_{t+1} − z⁻)
//! P̄_t   = P_t + C_t (P̄_{t+1} − P⁻) C_tᵀ
//! ```

use nalgebra::{DMatrix, DVector};

use super::FilterFrame;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize, symmetrized};
use crate::statespace::KinematicModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedState {
    pub z: DVector<f64>,
    pub p: DMatrix<f64>,
}

pub fn rts_smooth(frames: &[FilterFrame], model: &KinematicModel) -> Result<Vec<SmoothedState>> {
    let Some(last) = frames.last() else {
        return Err(Error::Parameter("smoother needs at least one filter frame".into()));
    };
    let mut out = vec![
        SmoothedState {
            z: DVector::zeros(0),
            p: DMatrix::zeros(0, 0),
        };
        frames.len()
    ];
    out[frames.len() - 1] = SmoothedState {
        z: last.z.clone(),
        p: last.p_post().clone(),
    };
    for t in (0..frames.len() - 1).rev() {
        let frame = &frames[t];
        let p_t = frame.p_post();
        let z_prior = &model.a * &frame.z;
        let p_prior = symmetrized(&model.a * p_t * model.a.transpose() + &model.q);
        let chol = cholesky(&p_prior, "smoother predictive covariance").map_err(|e| e.at_step(t))?;
        // C = P_t Aᵀ P⁻⁻¹, so Cᵀ = P⁻⁻¹ A P_t with both covariances symmetric.
        let c = chol.solve(&(&model.a * p_t)).transpose();
        let next = &out[t + 1];
        let z = &frame.z + &c * (&next.z - z_prior);
        let mut p = p_t + &c * (&next.p - &p_prior) * c.transpose();
        symmetrize(&mut p);
        out[t] = SmoothedState { z, p };
    }
    Ok(out)
}
