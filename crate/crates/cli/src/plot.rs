//! Static SVG figures. Coordinates are printed with fixed precision so output is
//! byte-stable.

use std::fmt::Write as _;

use dskf_core::metrics::{lag_of, Summary};
use dskf_core::simulate::step_times;

use crate::evaluate::{Evaluation, GroupEvaluation};
use crate::experiment::snr_key;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#2a9d4b", "#1f8fb4", "#c0392b", "#8e44ad", "#d68910", "#566573"];

struct Series<'a> {
    label: String,
    x: Vec<f64>,
    y: &'a [f64],
    band: Option<(&'a [f64], &'a [f64])>,
    dashed: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn axes(s: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{l:.2},{t:.2}V{b:.2}H{r:.2}" fill="none" stroke="black"/>"#);
    for v in ticks(f.x0, f.x1) {
        let x = f.px(v);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, b + 16.0, fmt_tick(v));
    }
    for v in ticks(f.y0, f.y1) {
        let y = f.py(v);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, fmt_tick(v));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn polyline(f: &Frame, x: &[f64], y: &[f64]) -> String {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&a, &b))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, f.px(a), f.py(b)))
        .collect()
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let ys = series.iter().flat_map(|s| {
        s.y.iter()
            .chain(s.band.map_or(&[][..], |b| b.0))
            .chain(s.band.map_or(&[][..], |b| b.1))
            .copied()
    });
    let (ymin, ymax) = ys
        .filter(|v| v.is_finite())
        .fold((0.0f64, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let ymax = if ymax > ymin { ymax } else { ymin + 1.0 };
    let f = Frame {
        x0,
        x1: if x1 > x0 { x1 } else { x0 + 1.0 },
        y0: ymin,
        y1: ymax * 1.05,
    };
    let mut s = header(title);
    axes(&mut s, &f, x_label, y_label);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some((lo, hi)) = ser.band {
            let mut d = polyline(&f, &ser.x, hi);
            for (a, b) in ser.x.iter().zip(lo).rev() {
                let _ = write!(d, "L{:.2},{:.2}", f.px(*a), f.py(*b));
            }
            let _ = writeln!(s, r#"<path d="{d}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#);
        }
        let dash = if ser.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
            polyline(&f, &ser.x, ser.y)
        );
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<path d="M{lx:.2},{ly:.2}h18" stroke="{color}" stroke-width="1.8"{dash}/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Median ROI strength with the interquartile band, and the true pulses dashed.
pub fn track_plot(eval: &Evaluation, g: &GroupEvaluation, method: &str) -> String {
    let times = step_times(eval.duration_ms, eval.n_steps);
    let mut series = Vec::new();
    for (label, e) in &g.tracks {
        series.push(Series {
            label: format!("{label} median"),
            x: times.clone(),
            y: &e.median,
            band: Some((&e.q25, &e.q75)),
            dashed: false,
        });
    }
    // Truth is in nAm and the estimate is dimensionless; only the shape is comparable.
    let scale = g
        .tracks
        .values()
        .flat_map(|e| e.median.iter().copied())
        .fold(0.0f64, f64::max);
    let truth: Vec<(String, Vec<f64>)> = eval
        .truth
        .iter()
        .map(|(label, t)| {
            let peak = t.iter().copied().fold(0.0f64, f64::max);
            let k = if peak > 0.0 { scale / peak } else { 0.0 };
            (label.clone(), t.iter().map(|v| v * k).collect())
        })
        .collect();
    for (label, t) in &truth {
        series.push(Series {
            label: format!("{label} true (scaled)"),
            x: times.clone(),
            y: t,
            band: None,
            dashed: true,
        });
    }
    line_chart(
        &format!("{method}, {} dB: ROI strength", snr_key(g.snr_db)),
        "time (ms)",
        "standardized strength",
        &series,
    )
}

/// Estimated-vs-true cross-correlation medians with 10-90 % bands, the cross-ROI curve
/// and the ideal curve.
pub fn xcorr_plot(eval: &Evaluation, g: &GroupEvaluation, method: &str) -> String {
    let lags: Vec<f64> = (0..2 * eval.n_steps - 1).map(|k| lag_of(k, eval.n_steps) as f64).collect();
    let mut series = Vec::new();
    for (label, e) in &g.curves {
        series.push(Series {
            label: format!("{label} vs true"),
            x: lags.clone(),
            y: &e.median,
            band: Some((&e.q10, &e.q90)),
            dashed: false,
        });
    }
    if let Some(e) = &g.cross {
        series.push(Series {
            label: "deep vs superficial".into(),
            x: lags.clone(),
            y: &e.median,
            band: Some((&e.q10, &e.q90)),
            dashed: false,
        });
    }
    if let Some((label, ideal)) = eval.ideal.iter().next() {
        series.push(Series {
            label: format!("ideal ({label})"),
            x: lags.clone(),
            y: ideal,
            band: None,
            dashed: true,
        });
    }
    line_chart(
        &format!("{method}, {} dB: cross-correlation", snr_key(g.snr_db)),
        "shift (steps)",
        "normalized cross-correlation",
        &series,
    )
}

pub fn ideal_plot(eval: &Evaluation) -> String {
    let lags: Vec<f64> = (0..2 * eval.n_steps - 1).map(|k| lag_of(k, eval.n_steps) as f64).collect();
    let series: Vec<Series<'_>> = eval
        .ideal
        .iter()
        .map(|(label, c)| Series {
            label: label.clone(),
            x: lags.clone(),
            y: c,
            band: None,
            dashed: false,
        })
        .collect();
    line_chart("Ideal cross-correlation (pulse autocorrelation)", "shift (steps)", "normalized cross-correlation", &series)
}

/// Grouped bars (one group per SNR, one bar per method) of the mean with 10-90 %
/// whiskers. Missing groups leave an empty slot.
pub fn table_plot(
    eval: &Evaluation,
    title: &str,
    pick: fn(&GroupEvaluation) -> Option<&Summary>,
    label: fn(&str) -> String,
) -> String {
    let stats: Vec<Vec<Option<&Summary>>> = eval
        .snr_levels
        .iter()
        .map(|&snr| eval.methods.iter().map(|m| eval.group(m, snr).and_then(pick)).collect())
        .collect();
    let values = stats.iter().flatten().flatten().flat_map(|s| [s.mean, s.q10, s.q90]);
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let f = Frame {
        x0: 0.0,
        x1: eval.snr_levels.len().max(1) as f64,
        y0: lo * 1.05,
        y1: if hi > lo { hi * 1.05 } else { lo + 1.0 },
    };
    let mut s = header(title);
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{l:.2},{t:.2}V{b:.2}H{r:.2}" fill="none" stroke="black"/>"#);
    for v in ticks(f.y0, f.y1) {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, f.py(v) + 4.0, fmt_tick(v));
    }
    let zero = f.py(0.0);
    let n_methods = eval.methods.len().max(1) as f64;
    let slot = (f.px(1.0) - f.px(0.0)) * 0.8 / n_methods;
    for (gi, snr) in eval.snr_levels.iter().enumerate() {
        let g0 = f.px(gi as f64) + (f.px(1.0) - f.px(0.0)) * 0.1;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} dB</text>"#,
            f.px(gi as f64 + 0.5),
            b + 16.0,
            snr_key(*snr)
        );
        for (mi, st) in stats[gi].iter().enumerate() {
            let Some(st) = st else { continue };
            let color = PALETTE[mi % PALETTE.len()];
            let x = g0 + slot * mi as f64;
            let y = f.py(st.mean);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                x + 2.0,
                y.min(zero),
                slot - 4.0,
                (zero - y).abs()
            );
            let cx = x + slot / 2.0;
            let _ = writeln!(
                s,
                r#"<path d="M{cx:.2},{:.2}V{:.2}" stroke="black"/>"#,
                f.py(st.q10),
                f.py(st.q90)
            );
        }
    }
    for (mi, m) in eval.methods.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        let ly = TOP + 12.0 + 18.0 * mi as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="10" fill="{color}"/>"#, ly - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 20.0, ly + 4.0, escape(&label(m)));
    }
    s.push_str("</svg>\n");
    s
}
