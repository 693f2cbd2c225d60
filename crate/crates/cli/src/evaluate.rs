//! Metrics over a results container: ROI track ensembles, cross-correlation curves,
//! the xcorr-error table and the peak-height-difference table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dskf_core::io::{self, CellStatus, MetricRow, ResultsContainer};
use dskf_core::metrics::{
    argmax, ensemble, lag_of, peak_height_difference, roi_track, summarize, xcorr_error_many,
    xcorr_normalized, EnsembleTrack, Summary, QUANTILE_METHOD,
};
use dskf_core::simulate::{step_times, SourceRole};
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};
use crate::experiment::snr_key;
use crate::method::Method;
use crate::plot;

pub const TABLE_XCORR: &str = "xcorr_error";
pub const TABLE_DEEP_PEAK: &str = "deep_peak_difference";
pub const TABLE_CORTICAL_PEAK: &str = "cortical_peak_difference";

/// Metrics of one successful cell.
#[derive(Debug, Clone)]
pub struct CellMetrics {
    pub realization: usize,
    pub tracks: BTreeMap<String, Vec<f64>>,
    /// Estimated-vs-true curve per ROI with a true source.
    pub curves: BTreeMap<String, Vec<f64>>,
    /// Deep ROI track against superficial ROI track.
    pub cross: Option<Vec<f64>>,
    pub xcorr_error: Option<f64>,
    pub deep_peak: Option<f64>,
    pub cortical_peak: Option<f64>,
    /// Why a metric of this cell is missing.
    pub gaps: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GroupEvaluation {
    pub method: String,
    pub snr_db: f64,
    pub cells: Vec<CellMetrics>,
    /// Realizations whose run failed, with the recorded error.
    pub failed: Vec<(usize, String)>,
    /// Realizations the scenario calls for that the container lacks entirely.
    pub missing: Vec<usize>,
    pub tracks: BTreeMap<String, EnsembleTrack>,
    pub curves: BTreeMap<String, EnsembleTrack>,
    pub cross: Option<EnsembleTrack>,
    pub xcorr_error: Option<Summary>,
    pub deep_peak: Option<Summary>,
    pub cortical_peak: Option<Summary>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub n_steps: usize,
    pub duration_ms: f64,
    pub snr_levels: Vec<f64>,
    pub methods: Vec<String>,
    /// ROI label → true strength series (ROIs without a source have none).
    pub truth: BTreeMap<String, Vec<f64>>,
    /// ROI label → autocorrelation of its true series.
    pub ideal: BTreeMap<String, Vec<f64>>,
    pub deep_label: Option<String>,
    pub superficial_label: Option<String>,
    pub groups: Vec<GroupEvaluation>,
}

fn summary_opt(values: &[f64]) -> Option<Summary> {
    summarize(values).ok()
}

pub fn evaluate(container: &ResultsContainer) -> CliResult<Evaluation> {
    if !container.cells.iter().any(|c| c.status == CellStatus::Ok) {
        return Err(CliError::NoRuns);
    }
    let sc = &container.scenario;
    let deep_label = sc.source_with_role(SourceRole::Deep).map(|s| s.label.clone());
    let superficial_label = sc.source_with_role(SourceRole::Superficial).map(|s| s.label.clone());
    let mut truth = BTreeMap::new();
    let mut ideal = BTreeMap::new();
    for s in &sc.sources {
        let t = sc.true_track(&s.label).expect("source label");
        ideal.insert(s.label.clone(), xcorr_normalized(&t, &t)?);
        truth.insert(s.label.clone(), t);
    }
    // Deep ROI in the single-source variant has no source; keep its track for false
    // activations and borrow the superficial pulse timing for the peak table.
    let deep_roi = deep_label.clone().or_else(|| {
        sc.rois
            .keys()
            .find(|k| Some(*k) != superficial_label.as_ref())
            .cloned()
    });

    let methods: Vec<String> = container.methods.iter().map(|m| m.name.clone()).collect();
    let mut groups = Vec::new();
    for method in &methods {
        for &snr in &sc.snr_db {
            let mut cells = Vec::new();
            let mut failed = Vec::new();
            let mut in_group: Vec<_> = container
                .cells
                .iter()
                .filter(|c| &c.method == method && c.snr_db.to_bits() == snr.to_bits())
                .collect();
            in_group.sort_by_key(|c| c.realization);
            for cell in in_group {
                if let CellStatus::Failed { error } = &cell.status {
                    failed.push((cell.realization, error.clone()));
                    continue;
                }
                cells.push(cell_metrics(
                    cell.realization,
                    &cell.z_activity,
                    cell.z_activity.first().map_or(0, Vec::len),
                    &container.scenario.rois,
                    &truth,
                    &ideal,
                    deep_roi.as_deref(),
                    superficial_label.as_deref(),
                    deep_label.is_some(),
                )?);
            }
            let mut g = group_evaluation(method, snr, cells, failed);
            g.missing = (0..sc.n_realizations)
                .filter(|r| !g.cells.iter().any(|c| c.realization == *r) && !g.failed.iter().any(|(f, _)| f == r))
                .collect();
            groups.push(g);
        }
    }
    Ok(Evaluation {
        n_steps: sc.n_steps,
        duration_ms: sc.duration_ms,
        snr_levels: sc.snr_db.clone(),
        methods,
        truth,
        ideal,
        deep_label: deep_roi,
        superficial_label,
        groups,
    })
}

#[allow(clippy::too_many_arguments)]
fn cell_metrics(
    realization: usize,
    z_activity: &[Vec<f64>],
    n: usize,
    rois: &BTreeMap<String, Vec<usize>>,
    truth: &BTreeMap<String, Vec<f64>>,
    ideal: &BTreeMap<String, Vec<f64>>,
    deep: Option<&str>,
    superficial: Option<&str>,
    has_deep_source: bool,
) -> CliResult<CellMetrics> {
    let mut tracks = BTreeMap::new();
    for (label, roi) in rois {
        tracks.insert(label.clone(), roi_track(z_activity.iter().map(Vec::as_slice), n, roi)?);
    }
    let mut gaps = Vec::new();
    let mut curves = BTreeMap::new();
    let mut sq = 0.0;
    let mut error_ok = true;
    for (label, t) in truth {
        match xcorr_normalized(&tracks[label], t) {
            Ok(curve) => {
                sq += xcorr_error_many(&[&curve], &ideal[label])?.powi(2);
                curves.insert(label.clone(), curve);
            }
            Err(e) => {
                error_ok = false;
                gaps.push(format!("{label}: {e}"));
            }
        }
    }
    let cross = match (deep, superficial) {
        (Some(d), Some(s)) if has_deep_source => xcorr_normalized(&tracks[d], &tracks[s]).ok(),
        _ => None,
    };
    let (mut deep_peak, mut cortical_peak) = (None, None);
    if let (Some(d), Some(s)) = (deep, superficial) {
        let (td, ts) = (&tracks[d], &tracks[s]);
        if let Some(t) = truth.get(d).and_then(|v| argmax(v)) {
            deep_peak = Some(peak_height_difference(td, ts, t)?);
        }
        if let Some(t) = truth.get(s).and_then(|v| argmax(v)) {
            cortical_peak = Some(peak_height_difference(ts, td, t)?);
        }
    }
    Ok(CellMetrics {
        realization,
        tracks,
        curves,
        cross,
        xcorr_error: error_ok.then(|| sq.sqrt()),
        deep_peak,
        cortical_peak,
        gaps,
    })
}

fn group_evaluation(method: &str, snr_db: f64, cells: Vec<CellMetrics>, failed: Vec<(usize, String)>) -> GroupEvaluation {
    let mut tracks = BTreeMap::new();
    let mut curves = BTreeMap::new();
    if let Some(first) = cells.first() {
        for label in first.tracks.keys() {
            let members: Vec<&Vec<f64>> = cells.iter().map(|c| &c.tracks[label]).collect();
            tracks.insert(label.clone(), ensemble(&members).expect("non-empty ensemble"));
        }
        for label in first.curves.keys() {
            let members: Vec<&Vec<f64>> = cells.iter().filter_map(|c| c.curves.get(label)).collect();
            if let Ok(e) = ensemble(&members) {
                curves.insert(label.clone(), e);
            }
        }
    }
    let cross_members: Vec<&Vec<f64>> = cells.iter().filter_map(|c| c.cross.as_ref()).collect();
    let errors: Vec<f64> = cells.iter().filter_map(|c| c.xcorr_error).collect();
    let deep: Vec<f64> = cells.iter().filter_map(|c| c.deep_peak).collect();
    let cortical: Vec<f64> = cells.iter().filter_map(|c| c.cortical_peak).collect();
    GroupEvaluation {
        method: method.to_string(),
        snr_db,
        tracks,
        curves,
        cross: ensemble(&cross_members).ok(),
        xcorr_error: summary_opt(&errors),
        deep_peak: summary_opt(&deep),
        cortical_peak: summary_opt(&cortical),
        cells,
        failed,
        missing: Vec::new(),
    }
}

impl Evaluation {
    pub fn group(&self, method: &str, snr_db: f64) -> Option<&GroupEvaluation> {
        self.groups
            .iter()
            .find(|g| g.method == method && g.snr_db.to_bits() == snr_db.to_bits())
    }

    /// Long-format rows, one per (table, method, SNR, statistic). Statistics of empty
    /// groups are NaN.
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for (table, pick) in [
            (TABLE_XCORR, (|g: &GroupEvaluation| g.xcorr_error.clone()) as fn(&GroupEvaluation) -> Option<Summary>),
            (TABLE_DEEP_PEAK, |g: &GroupEvaluation| g.deep_peak.clone()),
            (TABLE_CORTICAL_PEAK, |g: &GroupEvaluation| g.cortical_peak.clone()),
        ] {
            for g in &self.groups {
                let s = pick(g);
                for (stat, value) in summary_fields(s.as_ref()) {
                    rows.push(MetricRow {
                        table: table.to_string(),
                        method: g.method.clone(),
                        snr_db: g.snr_db,
                        statistic: stat.to_string(),
                        value: value.is_finite().then_some(value),
                    });
                }
            }
        }
        rows
    }
}

fn summary_fields(s: Option<&Summary>) -> [(&'static str, f64); 6] {
    match s {
        Some(s) => [
            ("mean", s.mean),
            ("std", s.std),
            ("median", s.median),
            ("q10", s.q10),
            ("q90", s.q90),
            ("count", s.count as f64),
        ],
        None => [
            ("mean", f64::NAN),
            ("std", f64::NAN),
            ("median", f64::NAN),
            ("q10", f64::NAN),
            ("q90", f64::NAN),
            ("count", 0.0),
        ],
    }
}

/// Empty cell for missing values so gaps stay explicit in CSV.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn display_name(method: &str) -> String {
    method
        .parse::<Method>()
        .map(|m| m.display_name().to_string())
        .unwrap_or_else(|_| method.to_string())
}

fn long_table_csv(rows: &[MetricRow], table: &str) -> String {
    let mut out = String::from("method,snr_db,statistic,value\n");
    for r in rows.iter().filter(|r| r.table == table) {
        let _ = writeln!(out, "{},{},{},{}", r.method, r.snr_db, r.statistic, r.value.map(num).unwrap_or_default());
    }
    out
}

/// One row per method, one column group per SNR.
fn wide_table_csv(eval: &Evaluation, pick: fn(&GroupEvaluation) -> Option<&Summary>) -> String {
    let mut out = String::from("method");
    for snr in &eval.snr_levels {
        for stat in ["mean", "q10", "q90", "std", "count"] {
            let _ = write!(out, ",{}dB_{stat}", snr_key(*snr));
        }
    }
    out.push('\n');
    for method in &eval.methods {
        out.push_str(method);
        for &snr in &eval.snr_levels {
            let s = eval.group(method, snr).and_then(pick);
            match s {
                Some(s) => {
                    let _ = write!(out, ",{},{},{},{},{}", num(s.mean), num(s.q10), num(s.q90), num(s.std), s.count);
                }
                None => out.push_str(",,,,,0"),
            }
        }
        out.push('\n');
    }
    out
}

fn track_csv(eval: &Evaluation, g: &GroupEvaluation) -> String {
    let times = step_times(eval.duration_ms, eval.n_steps);
    let mut out = String::from("step,time_ms");
    for label in g.tracks.keys() {
        if eval.truth.contains_key(label) {
            let _ = write!(out, ",{label}_true");
        }
        for stat in ["median", "q10", "q25", "q75", "q90", "mean"] {
            let _ = write!(out, ",{label}_{stat}");
        }
    }
    out.push('\n');
    for (t, time) in times.iter().enumerate() {
        let _ = write!(out, "{t},{time}");
        for (label, e) in &g.tracks {
            if let Some(truth) = eval.truth.get(label) {
                let _ = write!(out, ",{}", truth[t]);
            }
            let _ = write!(out, ",{},{},{},{},{},{}", e.median[t], e.q10[t], e.q25[t], e.q75[t], e.q90[t], e.mean[t]);
        }
        out.push('\n');
    }
    out
}

fn xcorr_csv(eval: &Evaluation, g: &GroupEvaluation) -> String {
    let len = 2 * eval.n_steps - 1;
    let mut out = String::from("lag");
    for label in eval.ideal.keys() {
        let _ = write!(out, ",{label}_ideal");
        if g.curves.contains_key(label) {
            let _ = write!(out, ",{label}_median,{label}_q10,{label}_q90");
        }
    }
    if g.cross.is_some() {
        out.push_str(",cross_median,cross_q10,cross_q90");
    }
    out.push('\n');
    for k in 0..len {
        let _ = write!(out, "{}", lag_of(k, eval.n_steps));
        for (label, ideal) in &eval.ideal {
            let _ = write!(out, ",{}", ideal[k]);
            if let Some(e) = g.curves.get(label) {
                let _ = write!(out, ",{},{},{}", e.median[k], e.q10[k], e.q90[k]);
            }
        }
        if let Some(e) = &g.cross {
            let _ = write!(out, ",{},{},{}", e.median[k], e.q10[k], e.q90[k]);
        }
        out.push('\n');
    }
    out
}

fn cells_csv(eval: &Evaluation) -> String {
    let mut out = String::from("method,snr_db,realization,status,xcorr_error,deep_peak_difference,cortical_peak_difference,note\n");
    for g in &eval.groups {
        let mut rows: Vec<(usize, String)> = g
            .cells
            .iter()
            .map(|c| {
                let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
                (
                    c.realization,
                    format!(
                        "ok,{},{},{},{}",
                        opt(c.xcorr_error),
                        opt(c.deep_peak),
                        opt(c.cortical_peak),
                        csv_text(&c.gaps.join("; "))
                    ),
                )
            })
            .chain(g.failed.iter().map(|(r, e)| (*r, format!("failed,,,,{}", csv_text(e)))))
            .collect();
        rows.sort_by_key(|(r, _)| *r);
        for (r, rest) in rows {
            let _ = writeln!(out, "{},{},{r},{rest}", g.method, g.snr_db);
        }
    }
    out
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn summary_value(s: Option<&Summary>) -> Value {
    match s {
        Some(s) => json!({
            "count": s.count,
            "mean": s.mean,
            "std": s.std,
            "median": s.median,
            "q10": s.q10,
            "q90": s.q90,
        }),
        None => Value::Null,
    }
}

pub fn summary_json(eval: &Evaluation) -> Value {
    let mut methods = Map::new();
    for method in &eval.methods {
        let mut by_snr = Map::new();
        for &snr in &eval.snr_levels {
            let Some(g) = eval.group(method, snr) else { continue };
            let peaks: Map<String, Value> = g
                .tracks
                .iter()
                .map(|(label, e)| (label.clone(), json!(argmax(&e.median))))
                .collect();
            by_snr.insert(
                snr_key(snr),
                json!({
                    "runs_ok": g.cells.len(),
                    "runs_failed": g.failed.iter().map(|(r, _)| r).collect::<Vec<_>>(),
                    "runs_missing": g.missing,
                    TABLE_XCORR: summary_value(g.xcorr_error.as_ref()),
                    TABLE_DEEP_PEAK: summary_value(g.deep_peak.as_ref()),
                    TABLE_CORTICAL_PEAK: summary_value(g.cortical_peak.as_ref()),
                    "median_track_peak_step": peaks,
                }),
            );
        }
        methods.insert(method.clone(), Value::Object(by_snr));
    }
    let true_peaks: Map<String, Value> = eval
        .truth
        .iter()
        .map(|(label, t)| (label.clone(), json!(argmax(t))))
        .collect();
    json!({
        "quantile_method": QUANTILE_METHOD,
        "n_steps": eval.n_steps,
        "duration_ms": eval.duration_ms,
        "true_peak_step": true_peaks,
        "methods": methods,
    })
}

/// Write every table, curve file, summary and plot under `dir`. Returns the relative
/// paths written, in order.
pub fn write_outputs(eval: &Evaluation, dir: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let mut emit = |rel: String, text: String| -> CliResult<()> {
        io::write_file(&dir.join(&rel), text.as_bytes())?;
        written.push(rel);
        Ok(())
    };
    let rows = eval.metric_rows();
    emit("table1_xcorr_error.csv".into(), long_table_csv(&rows, TABLE_XCORR))?;
    emit("table1_xcorr_error_wide.csv".into(), wide_table_csv(eval, |g| g.xcorr_error.as_ref()))?;
    let mut t2 = String::from("peak,method,snr_db,statistic,value\n");
    for table in [TABLE_DEEP_PEAK, TABLE_CORTICAL_PEAK] {
        for line in long_table_csv(&rows, table).lines().skip(1) {
            let _ = writeln!(t2, "{},{line}", table.trim_end_matches("_peak_difference"));
        }
    }
    emit("table2_peak_difference.csv".into(), t2)?;
    emit("table2_deep_peak_wide.csv".into(), wide_table_csv(eval, |g| g.deep_peak.as_ref()))?;
    emit("table2_cortical_peak_wide.csv".into(), wide_table_csv(eval, |g| g.cortical_peak.as_ref()))?;
    emit("cells.csv".into(), cells_csv(eval))?;
    let mut ideal = String::from("lag");
    for label in eval.ideal.keys() {
        let _ = write!(ideal, ",{label}");
    }
    ideal.push('\n');
    for k in 0..2 * eval.n_steps - 1 {
        let _ = write!(ideal, "{}", lag_of(k, eval.n_steps));
        for curve in eval.ideal.values() {
            let _ = write!(ideal, ",{}", curve[k]);
        }
        ideal.push('\n');
    }
    emit("xcorr/ideal.csv".into(), ideal)?;
    for g in &eval.groups {
        if g.cells.is_empty() {
            continue;
        }
        let stem = format!("{}_snr{}", g.method, snr_key(g.snr_db));
        emit(format!("tracks/{stem}.csv"), track_csv(eval, g))?;
        emit(format!("xcorr/{stem}.csv"), xcorr_csv(eval, g))?;
        emit(format!("plots/tracks_{stem}.svg"), plot::track_plot(eval, g, &display_name(&g.method)))?;
        emit(format!("plots/xcorr_{stem}.svg"), plot::xcorr_plot(eval, g, &display_name(&g.method)))?;
    }
    emit("plots/ideal_xcorr.svg".into(), plot::ideal_plot(eval))?;
    emit(
        "plots/table1_xcorr_error.svg".into(),
        plot::table_plot(eval, "Cross-correlation error against the ideal", |g| g.xcorr_error.as_ref(), display_name),
    )?;
    emit(
        "plots/table2_deep_peak.svg".into(),
        plot::table_plot(eval, "Track height difference at the deep peak", |g| g.deep_peak.as_ref(), display_name),
    )?;
    emit(
        "plots/table2_cortical_peak.svg".into(),
        plot::table_plot(eval, "Track height difference at the cortical peak", |g| g.cortical_peak.as_ref(), display_name),
    )?;
    let mut summary = serde_json::to_string_pretty(&summary_json(eval)).map_err(|e| dskf_core::Error::Serde(e.to_string()))?;
    summary.push('\n');
    emit("summary.json".into(), summary)?;
    Ok(written)
}
