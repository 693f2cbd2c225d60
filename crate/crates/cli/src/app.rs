//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dskf_core::io;
use dskf_core::simulate::{SourcePicks, SyntheticLeadField, Variant};

use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::evaluate::{evaluate, write_outputs};
use crate::experiment::{
    build_scenario, parse_snr_list, write_experiment, Experiment, LeadFieldSource, SimulateRequest,
    DEFAULT_BASE_SEED, DEFAULT_LEADFIELD,
};
use crate::grid::{failure_count, run_grid, RunPlan};
use crate::method::Method;
use crate::sweep::{best_per_method, default_phi_grid, run_sweep, sweep_csv, SweepSpec};

/// Environment variable naming the directory that default paths live under.
pub const OUTPUT_ROOT_ENV: &str = "DSKF_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "dskf-output";

#[derive(Debug, Parser)]
#[command(name = "dskf", version, about = "Dynamical standardized Kalman filter experiments")]
struct Cli {
    /// Directory that default input and output paths are resolved under.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario, its lead field and every noisy recording.
    Simulate(SimulateArgs),
    /// Run the method x SNR x realization grid over simulated recordings.
    Run(RunArgs),
    /// Compute tables, curves and plots from a results file.
    Evaluate(EvaluateArgs),
    /// Sweep phi, p and theta and report the error at each point.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// default, inverted, single_source or visual.
    #[arg(long, default_value = "default")]
    variant: Variant,
    /// Base seed for the noise realizations (< 2^63).
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    /// Output directory [default: <output-root>/simulation].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load the lead field from a binary or CSV file instead of synthesizing one.
    #[arg(long, conflicts_with_all = ["electrodes", "sources", "leadfield_seed", "depth_bias"])]
    leadfield: Option<PathBuf>,
    /// Synthetic lead field: number of electrodes.
    #[arg(long)]
    electrodes: Option<usize>,
    /// Synthetic lead field: number of sources.
    #[arg(long)]
    sources: Option<usize>,
    /// Synthetic lead field: geometry seed.
    #[arg(long)]
    leadfield_seed: Option<u64>,
    /// Synthetic lead field: depth-bias exponent (0 = pure geometry).
    #[arg(long)]
    depth_bias: Option<f64>,
    /// Source index of the deep source [default: deepest source].
    #[arg(long)]
    deep_index: Option<usize>,
    /// Source index of the superficial source [default: strongest column].
    #[arg(long)]
    superficial_index: Option<usize>,
    /// Source index used by the visual variant [default: far shallow source].
    #[arg(long)]
    alternate_index: Option<usize>,
    /// Comma-separated SNR levels in dB [default: 30,20,10].
    #[arg(long)]
    snr: Option<String>,
    /// Noise realizations per SNR level [default: 20].
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Comma-separated subset of skf, sskf, dskf2, dskf3.
    #[arg(long, value_delimiter = ',', default_value = "skf,sskf,dskf2,dskf3")]
    methods: Vec<Method>,
    /// Standardization exponent p (1 = full standardization, 0.5 = sLORETA-like).
    #[arg(long, default_value_t = dskf_core::filter::DEFAULT_EXPONENT)]
    p: f64,
    /// Initial covariance scale theta in nAm^2.
    #[arg(long, default_value_t = dskf_core::filter::DEFAULT_THETA)]
    theta: f64,
    /// Relative floor on the standardization normalizer diagonal.
    #[arg(long, default_value_t = dskf_core::filter::DEFAULT_DIAG_FLOOR)]
    diag_floor: f64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Simulation directory [default: <output-root>/simulation].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Results file [default: <output-root>/results.dskf].
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
    /// Process-noise scale in nAm^2 per step; `VALUE` for all methods or
    /// `METHOD=VALUE`, repeatable [default: calibrated per method].
    #[arg(long)]
    phi: Vec<String>,
    /// Keep full standardized states, derivatives included.
    #[arg(long)]
    verbose_states: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Results file [default: <output-root>/results.dskf].
    #[arg(long)]
    results: Option<PathBuf>,
    /// Output directory [default: <output-root>/evaluation].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Simulation directory [default: <output-root>/simulation].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sweep table [default: <output-root>/sweep.csv].
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
    /// Comma-separated phi values [default: 1e-4 to 1e3 in half decades].
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
    /// Comma-separated exponents p [default: the --p value].
    #[arg(long = "p-grid", value_delimiter = ',')]
    p_grid: Vec<f64>,
    /// Comma-separated theta values in nAm^2 [default: the --theta value].
    #[arg(long = "theta-grid", value_delimiter = ',')]
    theta_grid: Vec<f64>,
    /// Comma-separated SNR levels in dB to evaluate; the first one picks the best phi.
    #[arg(long, default_value = "30")]
    snr: String,
}

fn parse_phi_overrides(values: &[String], methods: &[Method]) -> CliResult<BTreeMap<Method, f64>> {
    let mut out = BTreeMap::new();
    for v in values {
        let (targets, number) = match v.split_once('=') {
            Some((m, x)) => (vec![m.parse::<Method>().map_err(CliError::Usage)?], x),
            None => (methods.to_vec(), v.as_str()),
        };
        let phi: f64 = number
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid phi '{v}'")))?;
        for m in targets {
            out.insert(m, phi);
        }
    }
    Ok(out)
}

fn cmd_simulate(root: &Path, a: SimulateArgs) -> CliResult<()> {
    let leadfield = match a.leadfield {
        Some(path) => LeadFieldSource::File(path),
        None => LeadFieldSource::Synthetic(SyntheticLeadField {
            electrodes: a.electrodes.unwrap_or(DEFAULT_LEADFIELD.electrodes),
            sources: a.sources.unwrap_or(DEFAULT_LEADFIELD.sources),
            seed: a.leadfield_seed.unwrap_or(DEFAULT_LEADFIELD.seed),
            depth_bias: a.depth_bias.unwrap_or(DEFAULT_LEADFIELD.depth_bias),
        }),
    };
    let req = SimulateRequest {
        variant: a.variant,
        base_seed: a.seed,
        leadfield,
        picks: SourcePicks {
            deep: a.deep_index,
            superficial: a.superficial_index,
            alternate_superficial: a.alternate_index,
        },
        snr_db: a.snr.as_deref().map(parse_snr_list).transpose()?,
        n_realizations: a.realizations,
    };
    let out = a.out.unwrap_or_else(|| root.join("simulation"));
    let (scenario, lf) = build_scenario(&req)?;
    let exp = Experiment::generate(scenario, lf)?;
    let manifest = write_experiment(&out, &exp)?;
    print!("{}", manifest.render());
    println!("manifest-sha256 {}", manifest.hash());
    eprintln!("{} recordings written to {}", exp.recordings.len(), out.display());
    Ok(())
}

fn plan_from(filter: &FilterArgs, phi: BTreeMap<Method, f64>, verbose: bool) -> RunPlan {
    RunPlan {
        methods: filter.methods.clone(),
        p: filter.p,
        theta: filter.theta,
        diag_floor: filter.diag_floor,
        phi,
        jobs: filter.jobs,
        keep_full_states: verbose,
    }
}

fn cmd_run(root: &Path, a: RunArgs) -> CliResult<()> {
    let input = a.input.unwrap_or_else(|| root.join("simulation"));
    let output = a.output.unwrap_or_else(|| root.join("results.dskf"));
    let phi = parse_phi_overrides(&a.phi, &a.filter.methods)?;
    let plan = plan_from(&a.filter, phi, a.verbose_states);
    plan.validate()?;
    let exp = Experiment::load(&input)?;
    let started = Instant::now();
    let mut container = run_grid(&exp, &plan)?;
    if let Ok(eval) = evaluate(&container) {
        container.tables = eval.metric_rows();
    }
    io::save_results(&output, &container)?;
    let failed = failure_count(&container);
    eprintln!(
        "{} cells in {:.1}s, {failed} failed; results in {}",
        container.cells.len(),
        started.elapsed().as_secs_f64(),
        output.display()
    );
    if failed > 0 {
        return Err(CliError::PartialFailure {
            failed,
            total: container.cells.len(),
        });
    }
    Ok(())
}

fn cmd_evaluate(root: &Path, a: EvaluateArgs) -> CliResult<()> {
    let results = a.results.unwrap_or_else(|| root.join("results.dskf"));
    let out = a.out.unwrap_or_else(|| root.join("evaluation"));
    let container = io::load_results(&results)?;
    let eval = evaluate(&container)?;
    let written = write_outputs(&eval, &out)?;
    for g in &eval.groups {
        if !g.failed.is_empty() || !g.missing.is_empty() {
            eprintln!(
                "warning: {} at {} dB: failed realizations {:?}, missing {:?}",
                g.method,
                g.snr_db,
                g.failed.iter().map(|(r, _)| r).collect::<Vec<_>>(),
                g.missing
            );
        }
    }
    println!("method,snr_db,mean_xcorr_error,q10,q90");
    for g in &eval.groups {
        match &g.xcorr_error {
            Some(s) => println!("{},{},{:.4},{:.4},{:.4}", g.method, g.snr_db, s.mean, s.q10, s.q90),
            None => println!("{},{},,,", g.method, g.snr_db),
        }
    }
    eprintln!("{} files written to {}", written.len(), out.display());
    Ok(())
}

fn cmd_sweep(root: &Path, a: SweepArgs) -> CliResult<()> {
    let input = a.input.unwrap_or_else(|| root.join("simulation"));
    let output = a.output.unwrap_or_else(|| root.join("sweep.csv"));
    let snr = parse_snr_list(&a.snr)?;
    let mut exp = Experiment::load(&input)?;
    if let Some(bad) = snr.iter().find(|s| !exp.scenario.snr_db.contains(s)) {
        return Err(CliError::Usage(format!("SNR {bad} dB is not part of the simulation")));
    }
    exp.recordings.retain(|r| snr.contains(&r.snr_db));
    exp.scenario.snr_db = snr.clone();
    let spec = SweepSpec {
        methods: a.filter.methods.clone(),
        phi: if a.phi.is_empty() { default_phi_grid() } else { a.phi },
        p: if a.p_grid.is_empty() { vec![a.filter.p] } else { a.p_grid },
        theta: if a.theta_grid.is_empty() { vec![a.filter.theta] } else { a.theta_grid },
        diag_floor: a.filter.diag_floor,
        jobs: a.filter.jobs,
    };
    let points = run_sweep(&exp, &spec)?;
    io::write_file(&output, sweep_csv(&points).as_bytes())?;
    for b in best_per_method(&points, snr[0]) {
        println!(
            "best {} at {} dB: phi={} p={} theta={} mean_xcorr_error={:.4}",
            b.method,
            b.snr_db,
            b.phi,
            b.p,
            b.theta,
            b.mean_error.unwrap_or(f64::NAN)
        );
    }
    eprintln!("{} sweep points written to {}", points.len(), output.display());
    Ok(())
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let root = cli.output_root;
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&root, a),
        Command::Run(a) => cmd_run(&root, a),
        Command::Evaluate(a) => cmd_evaluate(&root, a),
        Command::Sweep(a) => cmd_sweep(&root, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
