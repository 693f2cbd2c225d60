//! Strength tracks, ensemble statistics and cross-correlation errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile definition used for every ensemble statistic: linear interpolation between
/// order statistics at position `q·(N−1)`.
pub const QUANTILE_METHOD: &str = "linear";

/// ROI-averaged standardized strength over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub values: Vec<f64>,
    pub roi_label: String,
    pub method_label: String,
    pub snr_db: f64,
    pub realization: usize,
}

/// `value[t] = mean_{j∈roi} |z_t[j]|`, reading only the activity block (first `n`
/// entries) of each state.
pub fn roi_track<'a>(
    states: impl IntoIterator<Item = &'a [f64]>,
    n: usize,
    roi: &[usize],
) -> Result<Vec<f64>> {
    if roi.is_empty() {
        return Err(Error::Config("ROI must contain at least one source".into()));
    }
    if let Some(j) = roi.iter().find(|&&j| j >= n) {
        return Err(Error::Config(format!("ROI index {j} outside {n} sources")));
    }
    let count = roi.len() as f64;
    states
        .into_iter()
        .map(|z| {
            if z.len() < n {
                return Err(Error::Shape(format!("state of length {} shorter than {n}", z.len())));
            }
            Ok(roi.iter().map(|&j| z[j].abs()).sum::<f64>() / count)
        })
        .collect()
}

/// Quantile of already-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrack {
    pub median: Vec<f64>,
    pub q10: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub q90: Vec<f64>,
    pub mean: Vec<f64>,
    pub count: usize,
    pub quantile_method: String,
}

/// Pointwise statistics across equally long tracks.
pub fn ensemble<T: AsRef<[f64]>>(tracks: &[T]) -> Result<EnsembleTrack> {
    let Some(first) = tracks.first() else {
        return Err(Error::DegenerateInput("ensemble of zero tracks".into()));
    };
    let len = first.as_ref().len();
    if tracks.iter().any(|t| t.as_ref().len() != len) {
        return Err(Error::Shape("ensemble tracks differ in length".into()));
    }
    let mut out = EnsembleTrack {
        median: Vec::with_capacity(len),
        q10: Vec::with_capacity(len),
        q25: Vec::with_capacity(len),
        q75: Vec::with_capacity(len),
        q90: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        count: tracks.len(),
        quantile_method: QUANTILE_METHOD.to_string(),
    };
    let mut column = Vec::with_capacity(tracks.len());
    for t in 0..len {
        column.clear();
        column.extend(tracks.iter().map(|tr| tr.as_ref()[t]));
        column.sort_by(f64::total_cmp);
        out.median.push(quantile_sorted(&column, 0.5));
        out.q10.push(quantile_sorted(&column, 0.1));
        out.q25.push(quantile_sorted(&column, 0.25));
        out.q75.push(quantile_sorted(&column, 0.75));
        out.q90.push(quantile_sorted(&column, 0.9));
        out.mean.push(column.iter().sum::<f64>() / column.len() as f64);
    }
    Ok(out)
}

/// Normalized cross-correlation `(f⋆g)[s] = Σ_n f[n] g[n+s] / (‖f‖‖g‖)` for
/// `s = −(T−1) ..= T−1`; entry `k` of the result is shift `s = k − (T−1)`.
pub fn xcorr_normalized(f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if f.len() != g.len() {
        return Err(Error::Shape(format!("series lengths {} and {} differ", f.len(), g.len())));
    }
    let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(nf > 0.0 && ng > 0.0) {
        return Err(Error::DegenerateInput("cross-correlation of a zero-norm series".into()));
    }
    let t = f.len() as isize;
    let norm = nf * ng;
    Ok((-(t - 1)..t)
        .map(|s| {
            let mut acc = 0.0;
            for n in 0..t {
                let m = n + s;
                if (0..t).contains(&m) {
                    acc += f[n as usize] * g[m as usize];
                }
            }
            acc / norm
        })
        .collect())
}

/// Lag of entry `k` in a curve from [`xcorr_normalized`] over series of length `t`.
pub fn lag_of(k: usize, t: usize) -> isize {
    k as isize - (t as isize - 1)
}

/// `sqrt(Σ_n Σ_curves (curve[n] − ideal[n])²)`.
pub fn xcorr_error_many(curves: &[&[f64]], ideal: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for curve in curves {
        if curve.len() != ideal.len() {
            return Err(Error::Shape(format!(
                "cross-correlation curve of length {} against ideal of length {}",
                curve.len(),
                ideal.len()
            )));
        }
        acc += curve.iter().zip(ideal).map(|(c, i)| (c - i).powi(2)).sum::<f64>();
    }
    Ok(acc.sqrt())
}

/// Track error combining the deep and superficial estimated-vs-true curves.
pub fn xcorr_error(thal_curve: &[f64], somato_curve: &[f64], ideal_curve: &[f64]) -> Result<f64> {
    xcorr_error_many(&[thal_curve, somato_curve], ideal_curve)
}

/// `(a[t] − b[t]) / max(a ∪ b)`; zero when both tracks vanish.
pub fn peak_height_difference(track_a: &[f64], track_b: &[f64], t_peak: usize) -> Result<f64> {
    if t_peak >= track_a.len() || t_peak >= track_b.len() {
        return Err(Error::Shape(format!("peak index {t_peak} outside the tracks")));
    }
    let max = track_a.iter().chain(track_b).fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(0.0);
    }
    Ok((track_a[t_peak] - track_b[t_peak]) / max)
}

/// Mean, spread and quantiles of a scalar sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("summary of an empty sample".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: values.len(),
        mean,
        std: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        q10: quantile_sorted(&sorted, 0.1),
        q90: quantile_sorted(&sorted, 0.9),
    })
}

/// Lowest index of the maximum value.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn roi_track_examples() {
        let zero = [0.0; 4];
        assert_eq!(roi_track([&zero[..]; 3], 4, &[1, 2]).unwrap(), vec![0.0; 3]);
        let z = [0.5, -2.0, 3.0, 7.0];
        assert_eq!(roi_track([&z[..]], 4, &[1]).unwrap(), vec![2.0]);
        let z = [3.0, -1.0];
        assert_eq!(roi_track([&z[..]], 2, &[0, 1]).unwrap(), vec![2.0]);
    }

    #[test]
    fn roi_track_ignores_derivative_blocks() {
        let z = [1.0, 2.0, 100.0, 100.0];
        assert_eq!(roi_track([&z[..]], 2, &[0, 1]).unwrap(), vec![1.5]);
        assert!(roi_track([&z[..]], 2, &[2]).is_err());
        assert!(roi_track([&z[..]], 2, &[]).is_err());
    }

    #[test]
    fn autocorrelation_peaks_at_one() {
        let f = [0.1, 0.5, 2.0, 0.7, 0.0, -0.3];
        let c = xcorr_normalized(&f, &f).unwrap();
        assert_eq!(c.len(), 11);
        assert_relative_eq!(c[5], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn impulse_shift() {
        let mut f = vec![0.0; 6];
        let mut g = vec![0.0; 6];
        f[0] = 1.0;
        g[3] = 1.0;
        let c = xcorr_normalized(&f, &g).unwrap();
        for (k, v) in c.iter().enumerate() {
            let expected = if lag_of(k, 6) == 3 { 1.0 } else { 0.0 };
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn xcorr_rejects_degenerate() {
        assert!(xcorr_normalized(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(xcorr_normalized(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_autocorrelation_is_bell() {
        let f: Vec<f64> = (0..40).map(|i| (-((i as f64 - 20.0) / 4.0).powi(2) / 2.0).exp()).collect();
        let c = xcorr_normalized(&f, &f).unwrap();
        assert_eq!(argmax(&c), Some(39));
        for k in 0..39 {
            assert!(c[k] <= c[k + 1] + 1e-15);
            assert_relative_eq!(c[k], c[78 - k], epsilon = 1e-15);
        }
    }

    #[test]
    fn xcorr_error_examples() {
        let ideal = [0.2, 0.5, 1.0, 0.5, 0.2];
        assert_eq!(xcorr_error(&ideal, &ideal, &ideal).unwrap(), 0.0);
        let shifted: Vec<f64> = ideal.iter().map(|v| v + 0.3).collect();
        assert_relative_eq!(xcorr_error(&shifted, &ideal, &ideal).unwrap(), 0.3 * 5f64.sqrt(), epsilon = 1e-15);
        assert!(xcorr_error(&ideal[..4], &ideal, &ideal).is_err());
    }

    #[test]
    fn peak_difference_examples() {
        let a = [0.2, 1.0, 0.4];
        assert_eq!(peak_height_difference(&a, &a, 1).unwrap(), 0.0);
        let b = [0.1, 0.82, 0.3];
        assert_relative_eq!(peak_height_difference(&a, &b, 1).unwrap(), 0.18, epsilon = 1e-15);
        assert_eq!(peak_height_difference(&a, &b, 1).unwrap(), -peak_height_difference(&b, &a, 1).unwrap());
        // normalization by the joint maximum
        let c = [0.0, 2.0, 0.0];
        let d = [0.0, 1.0, 4.0];
        assert_eq!(peak_height_difference(&c, &d, 1).unwrap(), 0.25);
        assert!(peak_height_difference(&c, &d, 3).is_err());
    }

    #[test]
    fn ensemble_single_track() {
        let t = vec![1.0, 3.0, 2.0];
        let e = ensemble(&[t.clone()]).unwrap();
        for series in [&e.median, &e.q10, &e.q25, &e.q75, &e.q90, &e.mean] {
            assert_eq!(series, &t);
        }
        assert_eq!(e.count, 1);
    }

    #[test]
    fn ensemble_linear_quantiles() {
        let tracks = vec![vec![0.0; 2], vec![1.0; 2], vec![2.0; 2]];
        let e = ensemble(&tracks).unwrap();
        assert_eq!(e.median, vec![1.0, 1.0]);
        assert_relative_eq!(e.q10[0], 0.2, epsilon = 1e-15);
        assert_relative_eq!(e.q90[0], 1.8, epsilon = 1e-15);
        assert_eq!(e.quantile_method, "linear");
    }

    #[test]
    fn ensemble_errors() {
        assert!(ensemble::<Vec<f64>>(&[]).is_err());
        assert!(matches!(ensemble(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.std, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(s.q10, 1.3, epsilon = 1e-15);
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn xcorr_bounded(f in proptest::collection::vec(-10.0f64..10.0, 1..30), seed in 0u64..1000) {
            let g: Vec<f64> = f.iter().enumerate().map(|(i, v)| v * ((i as u64 + seed) as f64).cos() + 0.1).collect();
            prop_assume!(f.iter().any(|v| *v != 0.0));
            let c = xcorr_normalized(&f, &g).unwrap();
            prop_assert!(c.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }

        #[test]
        fn impulse_argmax_follows_shift(len in 2usize..30, a in 0usize..30, b in 0usize..30) {
            let (a, b) = (a % len, b % len);
            let mut f = vec![0.0; len];
            let mut g = vec![0.0; len];
            f[a] = 1.0;
            g[b] = 2.0;
            let c = xcorr_normalized(&f, &g).unwrap();
            prop_assert_eq!(lag_of(argmax(&c).unwrap(), len), b as isize - a as isize);
        }

        #[test]
        fn ensemble_ordered_and_permutation_invariant(
            tracks in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 6), 1..12),
            rot in 0usize..12,
        ) {
            let e = ensemble(&tracks).unwrap();
            for t in 0..6 {
                prop_assert!(e.q10[t] <= e.q25[t] && e.q25[t] <= e.median[t]);
                prop_assert!(e.median[t] <= e.q75[t] && e.q75[t] <= e.q90[t]);
            }
            let mut rotated = tracks.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            let r = ensemble(&rotated).unwrap();
            prop_assert_eq!(&e.median, &r.median);
            prop_assert_eq!(&e.q10, &r.q10);
            prop_assert_eq!(&e.q90, &r.q90);
        }

        #[test]
        fn error_zero_iff_curves_ideal(ideal in proptest::collection::vec(-1.0f64..1.0, 3..10), bump in 0usize..10, eps in 1e-6f64..1.0) {
            prop_assert_eq!(xcorr_error(&ideal, &ideal, &ideal).unwrap(), 0.0);
            let mut off = ideal.clone();
            let i = bump % off.len();
            off[i] += eps;
            prop_assert!(xcorr_error(&ideal, &off, &ideal).unwrap() > 1e-12);
        }
    }
}
