//! Brute-force reference computations used only by tests.
//!
//! Nothing here calls into the filter implementation: the joint-Gaussian oracle
//! builds the full prior over every state and observation and conditions it directly,
//! and the smoother oracle uses explicit matrix inverses.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small linear-Gaussian system with raw matrices.
#[derive(Debug, Clone)]
pub struct SmallSystem {
    pub order: usize,
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub phi: f64,
    pub theta: f64,
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub ys: DMatrix<f64>,
}

/// Transition matrix written out independently of the library builder.
pub fn transition(order: usize, dt: f64, n: usize) -> DMatrix<f64> {
    let dim = (order + 1) * n;
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for bi in 0..=order {
            a[(bi * n + i, bi * n + i)] = 1.0;
        }
        if order >= 1 {
            for bi in 0..order {
                a[(bi * n + i, (bi + 1) * n + i)] = dt;
            }
        }
        if order == 2 {
            a[(i, 2 * n + i)] = 0.5 * dt * dt;
        }
    }
    a
}

pub fn process_noise(order: usize, dt: f64, phi: f64, n: usize) -> DMatrix<f64> {
    let dim = (order + 1) * n;
    let mut q = DMatrix::zeros(dim, dim);
    let var = if order == 0 {
        phi
    } else {
        order as f64 / dt.powi(order as i32) * phi
    };
    for i in (order * n)..dim {
        q[(i, i)] = var;
    }
    q
}

pub fn observation(l: &DMatrix<f64>, order: usize) -> DMatrix<f64> {
    let (m, n) = l.shape();
    let mut h = DMatrix::zeros(m, (order + 1) * n);
    for i in 0..m {
        for j in 0..n {
            h[(i, j)] = l[(i, j)];
        }
    }
    h
}

pub fn random_system(rng: &mut ChaCha8Rng) -> SmallSystem {
    let order = rng.random_range(0..=2usize);
    let n = rng.random_range(1..=4usize);
    let m = rng.random_range(2..=3usize);
    let t = rng.random_range(1..=6usize);
    let dt = rng.random_range(0.2..1.0);
    let phi = rng.random_range(0.1..2.0);
    let theta = rng.random_range(0.5..5.0);
    let l = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let g = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.3..0.3));
    let r = &g * g.transpose() + DMatrix::identity(m, m) * rng.random_range(0.2..1.0);
    let ys = DMatrix::from_fn(t, m, |_, _| rng.random_range(-3.0..3.0));
    SmallSystem {
        order,
        n,
        m,
        dt,
        phi,
        theta,
        l,
        r,
        ys,
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Posterior `(mean, cov)` of `x_t` given `y_1..y_t`, for every `t`, by conditioning the
/// joint Gaussian prior of all states and observations.
pub fn joint_gaussian_posteriors(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    ys: &DMatrix<f64>,
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let t_len = ys.nrows();
    let dim = a.nrows();
    let m = h.nrows();

    let mut powers = vec![DMatrix::identity(dim, dim)];
    for k in 1..=t_len {
        powers.push(a * &powers[k - 1]);
    }
    // Cov(x_t, x_u) for 1-based t, u.
    let cov_x = |t: usize, u: usize| -> DMatrix<f64> {
        let mut c = &powers[t] * p0 * powers[u].transpose();
        for k in 1..=t.min(u) {
            c += &powers[t - k] * q * powers[u - k].transpose();
        }
        c
    };

    let mut out = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let mut syy = DMatrix::zeros(t * m, t * m);
        let mut sxy = DMatrix::zeros(dim, t * m);
        for i in 1..=t {
            for j in 1..=t {
                let mut block = h * cov_x(i, j) * h.transpose();
                if i == j {
                    block += r;
                }
                syy.view_mut(((i - 1) * m, (j - 1) * m), (m, m)).copy_from(&block);
            }
            let cxy = cov_x(t, i) * h.transpose();
            sxy.view_mut((0, (i - 1) * m), (dim, m)).copy_from(&cxy);
        }
        let mut yvec = DVector::zeros(t * m);
        for i in 0..t {
            for c in 0..m {
                yvec[i * m + c] = ys[(i, c)];
            }
        }
        let syy_inv = syy.try_inverse().expect("joint observation covariance is singular");
        let mean = &sxy * &syy_inv * yvec;
        let cov = cov_x(t, t) - &sxy * &syy_inv * sxy.transpose();
        out.push((mean, cov));
    }
    out
}

/// Smoother recursion with explicit inverses. Inputs are the filtered standardized
/// states and posterior covariances, in time order.
pub fn naive_rts(
    zs: &[DVector<f64>],
    p_posts: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let t_len = zs.len();
    let mut zbar = zs.to_vec();
    let mut pbar = p_posts.to_vec();
    for t in (0..t_len.saturating_sub(1)).rev() {
        let z_minus = a * &zs[t];
        let p_minus = a * &p_posts[t] * a.transpose() + q;
        let c = &p_posts[t] * a.transpose() * p_minus.clone().try_inverse().unwrap();
        zbar[t] = &zs[t] + &c * (&zbar[t + 1] - z_minus);
        pbar[t] = &p_posts[t] + &c * (&pbar[t + 1] - p_minus) * c.transpose();
    }
    zbar.into_iter().zip(pbar).collect()
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let qr = g.qr();
    let basis = qr.q();
    let eig = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
    let m = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        (a - b).norm()
    } else {
        (a - b).norm() / denom
    }
}
