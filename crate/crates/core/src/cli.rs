//! `etpa` command line: simulate, extract, sweep, validate-config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.
//! Verbosity comes from `ETPA_LOG` (e.g. `ETPA_LOG=info`).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{binomial, educated_guess, extract_energies, GuessOptions, PeakSet};
use crate::config::ExperimentConfig;
use crate::output::{self, meta, write_atomic, Metadata, Series};
use crate::physics::{detunings, predicted_frequencies, LevelSystem, PumpConfig, SpectralLine};
use crate::pipeline::{
    monte_carlo, random_system, recover, run_scans, AnalysisParams, MonteCarloSummary, RandomSystemSpec, ScanResult,
    ScanSetup,
};
use crate::scan::{frequency_resolution, mirror_step, resolution_check, NoiseSpec};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "etpa",
    version,
    about = "Virtual-state spectroscopy with entangled photon pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate delay scans and their spectra for every pump setting.
    Simulate(RunArgs),
    /// Simulate, then recover the intermediate-state energies.
    Extract(RunArgs),
    /// Recovery statistics over a grid of parameters.
    Sweep(SweepArgs),
    /// Check a config file and print its hash.
    ValidateConfig(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long)]
    pub override_resolution_check: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Replaces `noise.seed` in the config.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// JSON sweep grid; without it the config itself is the single cell.
    #[arg(long, value_name = "PATH")]
    pub sweep: Option<PathBuf>,
}

/// Parameter grid for `sweep`. Empty lists fall back to the config value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub schema_version: u32,
    pub delta_omega_ev: Vec<f64>,
    pub delta_tau_fs: Vec<f64>,
    /// `null` entries mean noiseless.
    pub counts_budget: Vec<Option<f64>>,
    /// Random systems of these sizes; empty uses the configured system.
    pub n_states: Vec<usize>,
    /// Pump settings ω_0 − k·pump_step_ev, k < n; empty uses the config.
    pub n_pumps: Vec<usize>,
    pub pump_step_ev: f64,
    pub trials: usize,
    pub max_cells: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            schema_version: 1,
            delta_omega_ev: Vec::new(),
            delta_tau_fs: Vec::new(),
            counts_budget: Vec::new(),
            n_states: Vec::new(),
            n_pumps: Vec::new(),
            pump_step_ev: 0.085,
            trials: 20,
            max_cells: 500,
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("ETPA_LOG", "warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => run_simulate(&load(&args.config, args.seed)?, &args.out),
        Command::Extract(args) => run_extract(&load(&args.config, args.seed)?, &args.out).map(|_| ()),
        Command::Sweep(args) => {
            let cfg = load(&args.run.config, args.run.seed)?;
            let spec = match &args.sweep {
                Some(path) => read_sweep(path)?,
                None => SweepSpec::default(),
            };
            run_sweep(&cfg, &spec, &args.run.out)
        }
        Command::ValidateConfig(args) => {
            let cfg = load(args, None)?;
            let grid = cfg.setup().grid()?;
            let check = resolution_check(&grid, cfg.source.delta_omega_ev);
            println!("ok config_hash={}", cfg.hash());
            println!(
                "samples={} tau_max_fs={} omega_res_ev={} delta_omega_ev={} mirror_step_nm={}",
                grid.len(),
                grid.tau_max(),
                check.omega_res,
                check.delta_omega,
                mirror_step(cfg.scan.delta_tau_fs)?
            );
            Ok(())
        }
    }
}

/// Reads the config, applies command-line overrides, then validates.
pub fn load(args: &ConfigArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::read(&args.config)?;
    if let Some(seed) = seed {
        cfg.noise.seed = seed;
    }
    if args.override_resolution_check {
        cfg.override_resolution_check = true;
    }
    cfg.validate()?;
    log::info!("config {} hash {}", args.config.display(), cfg.hash());
    Ok(cfg)
}

pub fn read_sweep(path: &Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("--sweep", format!("cannot read {}: {e}", path.display())))?;
    let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if spec.schema_version != 1 {
        return Err(Error::config("sweep.schema_version", "expected 1"));
    }
    if spec.trials == 0 {
        return Err(Error::config("sweep.trials", "must be positive"));
    }
    if spec.n_pumps.iter().any(|&n| n < 2) {
        return Err(Error::config(
            "sweep.n_pumps",
            "recovery needs at least two pump settings",
        ));
    }
    if spec.n_states.contains(&0) {
        return Err(Error::config("sweep.n_states", "must be positive"));
    }
    Ok(spec)
}

fn predicted_lines(system: &LevelSystem, pump: PumpConfig, setup: &ScanSetup) -> Result<Vec<SpectralLine>> {
    let d = detunings(system, pump, setup.min_detuning, f64::INFINITY)?;
    Ok(predicted_frequencies(&d))
}

fn scan_metadata(cfg_hash: &str, kind: &str, k: usize, scan: &ScanResult, setup: &ScanSetup) -> Result<Metadata> {
    let src = setup.source(scan.pump)?;
    Ok(meta(&[
        ("config_hash", cfg_hash.to_string()),
        ("kind", kind.to_string()),
        ("pump_index", k.to_string()),
        ("omega0_ev", scan.pump.omega0().to_string()),
        ("entanglement_time_fs", src.entanglement_time().to_string()),
        ("delta_tau_fs", scan.trace.grid.delta_tau().to_string()),
        ("samples", scan.trace.grid.len().to_string()),
        ("omega_res_ev", scan.spectrum.omega_res.to_string()),
        (
            "counts_budget",
            scan.trace.counts_budget.map_or("none".into(), |b| b.to_string()),
        ),
        (
            "noise_seed",
            scan.trace.noise_seed.map_or("none".into(), |s| s.to_string()),
        ),
    ]))
}

/// Writes trace, spectrum, peaks and a plot for each scan; returns the
/// predicted lines per scan.
fn write_scans(
    cfg_hash: &str,
    prefix: &str,
    scans: &[ScanResult],
    setup: &ScanSetup,
    out: &Path,
) -> Result<Vec<Vec<SpectralLine>>> {
    let mut all = Vec::with_capacity(scans.len());
    for (k, scan) in scans.iter().enumerate() {
        let dir = out.join(format!("{prefix}_{k}"));
        let lines = predicted_lines(&scan.system, scan.pump, setup)?;
        write_atomic(
            &dir.join("trace.csv"),
            output::trace_csv(&scan.trace, &scan_metadata(cfg_hash, "trace", k, scan, setup)?).as_bytes(),
        )?;
        write_atomic(
            &dir.join("spectrum.csv"),
            output::spectrum_csv(&scan.spectrum, &scan_metadata(cfg_hash, "spectrum", k, scan, setup)?).as_bytes(),
        )?;
        write_atomic(
            &dir.join("peaks.csv"),
            output::peaks_csv(&scan.peaks, &scan_metadata(cfg_hash, "peaks", k, scan, setup)?).as_bytes(),
        )?;
        let series = [Series {
            label: format!("ω0 = {:.4} eV", scan.pump.omega0()),
            spectrum: &scan.spectrum,
            predicted: &lines,
            peaks: Some(&scan.peaks),
        }];
        write_atomic(
            &dir.join("spectrum.svg"),
            output::spectrum_svg(&format!("{prefix} {k}"), &series, cfg_hash).as_bytes(),
        )?;
        all.push(lines);
    }
    Ok(all)
}

fn write_overview(
    cfg_hash: &str,
    title: &str,
    scans: &[ScanResult],
    lines: &[Vec<SpectralLine>],
    out: &Path,
) -> Result<()> {
    let series: Vec<Series> = scans
        .iter()
        .zip(lines)
        .map(|(s, l)| Series {
            label: format!("ω0 = {:.4} eV", s.pump.omega0()),
            spectrum: &s.spectrum,
            predicted: l,
            peaks: Some(&s.peaks),
        })
        .collect();
    write_atomic(
        &out.join("spectra.svg"),
        output::spectrum_svg(title, &series, cfg_hash).as_bytes(),
    )
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_resolved_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_json(
        &out.join("resolved_config.json"),
        &json!({ "config_hash": cfg.hash(), "config": cfg }),
    )
}

pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    let setup = cfg.setup();
    let params = cfg.analysis.params();
    let pumps = cfg.pumps()?;
    write_resolved_config(cfg, out)?;

    if let Some(r) = cfg.random_systems {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(r.seed);
        let spec = RandomSystemSpec::new(r.n_states, 3.0 * setup.omega_res()?);
        let mut scans = Vec::with_capacity(r.count);
        for i in 0..r.count {
            let system = random_system(&mut rng, &spec, &pumps[..1]).ok_or_else(|| {
                Error::config("random_systems", format!("no collision-free system found for draw {i}"))
            })?;
            scans.extend(run_scans(&system, &pumps[..1], &setup, &cfg.noise, &params)?);
        }
        let lines = write_scans(&hash, "random", &scans, &setup, out)?;
        write_overview(&hash, "random level systems", &scans, &lines, out)?;
        println!("wrote {} random-system spectra to {}", scans.len(), out.display());
        return Ok(());
    }

    let system = cfg.level_system()?;
    let scans = run_scans(&system, &pumps, &setup, &cfg.noise, &params)?;
    let lines = write_scans(&hash, "pump", &scans, &setup, out)?;
    write_overview(&hash, "eTPA spectra", &scans, &lines, out)?;
    println!("wrote {} scans to {} (config_hash={hash})", scans.len(), out.display());
    Ok(())
}

/// Runs the scans, recovers the energies and writes `match_report.json`
/// and `summary.txt`. Returns the report.
pub fn run_extract(cfg: &ExperimentConfig, out: &Path) -> Result<serde_json::Value> {
    let pumps = cfg.pumps()?;
    if pumps.len() < 2 {
        return Err(Error::config("pumps", "extraction needs at least two pump settings"));
    }
    if cfg.random_systems.is_some() {
        return Err(Error::config(
            "random_systems",
            "extract works on the configured level system",
        ));
    }
    let hash = cfg.hash();
    let setup = cfg.setup();
    let params = cfg.analysis.params();
    let system = cfg.level_system()?;
    write_resolved_config(cfg, out)?;

    let scans = run_scans(&system, &pumps, &setup, &cfg.noise, &params)?;
    let lines = write_scans(&hash, "pump", &scans, &setup, out)?;
    write_overview(&hash, "eTPA spectra", &scans, &lines, out)?;

    let omega_res = scans[0].spectrum.omega_res;
    let tol = params.tol(omega_res);
    let peak_sets: Vec<PeakSet> = scans.iter().map(|s| s.peaks.clone()).collect();
    let extraction = extract_energies(&peak_sets, tol)?;
    let guess = guess_report(
        &peak_sets[0],
        extraction.energies.len(),
        tol,
        cfg.analysis.educated_guess_cap as u128,
    );

    let truth = system.energies();
    let report = json!({
        "schema_version": 1,
        "config_hash": hash,
        "tolerance_ev": tol,
        "omega_res_ev": omega_res,
        "true_energies": truth,
        "energies": extraction.energies,
        "matched_pairs": extraction.report.matched_pairs,
        "family_labels": extraction.report.family_labels,
        "unmatched": extraction.report.unmatched,
        "trajectories": extraction.trajectories,
        "diagnostics": extraction.diagnostics,
        "omega0": extraction.report.omega0,
        "educated_guess": guess,
    });
    write_json(&out.join("match_report.json"), &report)?;
    let summary = format!(
        "# config_hash={hash}\n{}",
        output::summary_table(&extraction, Some(&truth))
    );
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(report)
}

/// Size of the educated-guess search for `n` states and, when it fits in
/// the cap, its best candidate.
fn guess_report(peaks: &PeakSet, n: usize, tol: f64, cap: u128) -> serde_json::Value {
    let p = peaks.positive().len();
    let subsets = binomial(p, n);
    let within = subsets <= cap;
    let best = if within {
        let opts = GuessOptions { tol, cap, top: 1 };
        educated_guess(peaks, n, &opts).ok().and_then(|c| c.into_iter().next())
    } else {
        None
    };
    json!({
        "positive_peaks": p,
        "n": n,
        "subsets": subsets.to_string(),
        "cap": cap.to_string(),
        "within_cap": within,
        "best": best,
    })
}

/// One evaluated point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub delta_omega: f64,
    pub delta_tau: f64,
    pub counts_budget: Option<f64>,
    pub n_states: Option<usize>,
    pub n_pumps: usize,
    pub omega_res: f64,
    pub resolves_bandwidth: bool,
    pub summary: MonteCarloSummary,
    pub guess_subsets: u128,
    pub guess_within_cap: bool,
}

fn list_or<T: Clone>(list: &[T], fallback: T) -> Vec<T> {
    if list.is_empty() {
        vec![fallback]
    } else {
        list.to_vec()
    }
}

/// Evaluates every cell of `spec` against `cfg`.
pub fn sweep_cells(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<(SweepCell, f64)>> {
    let base_pumps = cfg.pumps()?;
    let n_pumps_list: Vec<Option<usize>> = if spec.n_pumps.is_empty() {
        vec![None]
    } else {
        spec.n_pumps.iter().copied().map(Some).collect()
    };
    let n_states_list: Vec<Option<usize>> = if spec.n_states.is_empty() {
        vec![None]
    } else {
        spec.n_states.iter().copied().map(Some).collect()
    };
    let dws = list_or(&spec.delta_omega_ev, cfg.source.delta_omega_ev);
    let dts = list_or(&spec.delta_tau_fs, cfg.scan.delta_tau_fs);
    let budgets = list_or(&spec.counts_budget, cfg.noise.counts_budget);
    let cells = dws.len() * dts.len() * budgets.len() * n_states_list.len() * n_pumps_list.len();
    if cells > spec.max_cells {
        return Err(Error::config(
            "sweep.max_cells",
            format!("{cells} cells exceed the cap of {}", spec.max_cells),
        ));
    }
    if n_states_list.contains(&None) && n_pumps_list.iter().any(Option::is_some) && cfg.level_system.epsilon_f.is_some()
    {
        return Err(Error::config(
            "level_system.epsilon_f",
            "omit epsilon_f when sweeping pump settings",
        ));
    }
    if n_pumps_list.contains(&None) && base_pumps.len() < 2 {
        return Err(Error::config("pumps", "recovery needs at least two pump settings"));
    }
    let params = cfg.analysis.params();
    let cap = cfg.analysis.educated_guess_cap as u128;

    let mut results = Vec::with_capacity(cells);
    for &dw in &dws {
        for &dt in &dts {
            for &budget in &budgets {
                for &n_states in &n_states_list {
                    for &n_pumps in &n_pumps_list {
                        let start = Instant::now();
                        let mut setup = cfg.setup();
                        setup.delta_omega = dw;
                        setup.delta_tau = dt;
                        let pumps = match n_pumps {
                            Some(n) => (0..n)
                                .map(|k| PumpConfig::new(base_pumps[0].omega0() - k as f64 * spec.pump_step_ev))
                                .collect::<Result<Vec<_>>>()?,
                            None => base_pumps.clone(),
                        };
                        let cell = sweep_cell(cfg, spec, &setup, &pumps, budget, n_states, &params, cap)?;
                        results.push((cell, start.elapsed().as_secs_f64()));
                    }
                }
            }
        }
    }
    Ok(results)
}

#[allow(clippy::too_many_arguments)]
fn sweep_cell(
    cfg: &ExperimentConfig,
    spec: &SweepSpec,
    setup: &ScanSetup,
    pumps: &[PumpConfig],
    budget: Option<f64>,
    n_states: Option<usize>,
    params: &AnalysisParams,
    cap: u128,
) -> Result<SweepCell> {
    let grid = setup.grid()?;
    let check = resolution_check(&grid, setup.delta_omega);
    let omega_res = frequency_resolution(&grid);
    let seed = cfg.noise.seed;
    // Noiseless trials of a fixed system are identical.
    let trials = if n_states.is_none() && budget.is_none() {
        1
    } else {
        spec.trials
    };

    let (summary, first_system) = match n_states {
        Some(n) => {
            use rand::SeedableRng;
            let rs = RandomSystemSpec::new(n, 3.0 * setup.omega_res()?);
            let summary = monte_carlo(&rs, pumps, setup, budget, params, trials, seed)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (summary, random_system(&mut rng, &rs, pumps))
        }
        None => {
            let system = cfg.level_system_for(pumps[0])?;
            let mut successes = 0;
            let mut false_energies = 0;
            let mut errors = Vec::new();
            for k in 0..trials {
                let noise = NoiseSpec {
                    counts_budget: budget,
                    seed: seed.wrapping_add(k as u64),
                };
                let (_, r) = recover(&system, pumps, setup, &noise, params)?;
                successes += r.success() as usize;
                false_energies += r.false_energies;
                if r.complete {
                    errors.push(r.max_error);
                }
            }
            let summary = MonteCarloSummary {
                trials,
                successes,
                recovery_rate: successes as f64 / trials as f64,
                mean_abs_error: if errors.is_empty() {
                    f64::NAN
                } else {
                    errors.iter().sum::<f64>() / errors.len() as f64
                },
                false_energies,
            };
            (summary, Some(system))
        }
    };

    let (guess_subsets, guess_within_cap) = match first_system {
        Some(system) => {
            let noise = NoiseSpec {
                counts_budget: budget,
                seed,
            };
            let scans = run_scans(&system, &pumps[..1], setup, &noise, params)?;
            let subsets = binomial(scans[0].peaks.positive().len(), system.intermediates().len());
            (subsets, subsets <= cap)
        }
        None => (0, true),
    };

    Ok(SweepCell {
        delta_omega: setup.delta_omega,
        delta_tau: setup.delta_tau,
        counts_budget: budget,
        n_states,
        n_pumps: pumps.len(),
        omega_res,
        resolves_bandwidth: check.resolves_bandwidth,
        summary,
        guess_subsets,
        guess_within_cap,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, spec: &SweepSpec, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    let cells = sweep_cells(cfg, spec)?;
    let spec_json = serde_json::to_string(spec)?;
    let mut csv = format!("# config_hash={hash}\n# sweep={spec_json}\n");
    csv.push_str(
        "cell,delta_omega_ev,delta_tau_fs,counts_budget,n_states,n_pumps,omega_res_ev,resolves_bandwidth,\
         trials,successes,recovery_rate,mean_abs_error_ev,false_energies,guess_subsets,guess_within_cap\n",
    );
    let mut timing = format!("# config_hash={hash}\ncell,seconds\n");
    for (i, (c, secs)) in cells.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.delta_omega,
            c.delta_tau,
            c.counts_budget.map_or("none".into(), |b| b.to_string()),
            c.n_states.map_or("config".into(), |n| n.to_string()),
            c.n_pumps,
            c.omega_res,
            c.resolves_bandwidth,
            c.summary.trials,
            c.summary.successes,
            c.summary.recovery_rate,
            c.summary.mean_abs_error,
            c.summary.false_energies,
            c.guess_subsets,
            c.guess_within_cap,
        ));
        timing.push_str(&format!("{i},{secs:.3}\n"));
    }
    write_resolved_config(cfg, out)?;
    write_atomic(&out.join("sweep.csv"), csv.as_bytes())?;
    write_atomic(&out.join("sweep_timing.csv"), timing.as_bytes())?;
    println!("wrote {} sweep cells to {}", cells.len(), out.display());
    Ok(())
}
