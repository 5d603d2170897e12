//! Simulate → transform → analyze, for one sample at several pump settings,
//! plus the seeded random systems used by Monte Carlo studies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{detect_peaks, extract_energies, Extraction, PeakSet};
use crate::physics::{
    detunings, distinct_nonzero, predicted_frequencies, LevelSystem, PumpConfig, TimeConvention, DEFAULT_MIN_DETUNING,
    DEFAULT_RESONANCE_TOL,
};
use crate::scan::{
    frequency_resolution, make_grid, simulate_trace, spectrum, DelayGrid, DelayTrace, NoiseSpec, Spectrum,
    SpectrumOptions,
};
use crate::signal::SourceConfig;
use crate::Result;

/// Source and delay-stage settings shared by every pump setting of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSetup {
    pub delta_omega: f64,
    pub convention: TimeConvention,
    /// Overrides the bandwidth-derived entanglement time, fs.
    pub entanglement_time: Option<f64>,
    pub delta_tau: f64,
    pub margin: f64,
    pub spectrum: SpectrumOptions,
    pub min_detuning: f64,
    pub resonance_tol: f64,
}

impl ScanSetup {
    /// 7.4 meV source, 0.3 fs steps, τ_max = 0.99·T_e.
    pub fn reference() -> Self {
        Self {
            delta_omega: 0.0074,
            convention: TimeConvention::Planck,
            entanglement_time: None,
            delta_tau: 0.3,
            margin: 0.99,
            spectrum: SpectrumOptions::default(),
            min_detuning: DEFAULT_MIN_DETUNING,
            resonance_tol: DEFAULT_RESONANCE_TOL,
        }
    }

    pub fn source(&self, pump: PumpConfig) -> Result<SourceConfig> {
        match self.entanglement_time {
            Some(te) => SourceConfig::new(pump, self.delta_omega, te),
            None => SourceConfig::from_bandwidth(pump, self.delta_omega, self.convention),
        }
    }

    pub fn grid(&self) -> Result<DelayGrid> {
        // The grid only depends on T_e, which does not depend on the pump.
        let te = self.source(PumpConfig::new(1.0)?)?.entanglement_time();
        make_grid(self.delta_tau, te, self.margin)
    }

    pub fn omega_res(&self) -> Result<f64> {
        Ok(frequency_resolution(&self.grid()?))
    }
}

/// Peak-detection and matching settings, with widths in frequency bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub min_prominence: f64,
    pub tol_bins: f64,
    pub dc_exclusion_bins: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            min_prominence: 0.01,
            tol_bins: 2.0,
            dc_exclusion_bins: 3.0,
        }
    }
}

impl AnalysisParams {
    pub fn tol(&self, omega_res: f64) -> f64 {
        self.tol_bins * omega_res
    }

    pub fn dc_exclusion(&self, omega_res: f64) -> f64 {
        self.dc_exclusion_bins * omega_res
    }
}

/// Everything produced for one pump setting.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub pump: PumpConfig,
    pub system: LevelSystem,
    pub trace: DelayTrace,
    pub spectrum: Spectrum,
    pub peaks: PeakSet,
}

/// Noise seed of the `index`-th pump setting of a run seeded with `seed`.
pub fn pump_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Simulates one delay scan per pump. The final state of `system` is
/// re-tuned onto each pump's two-photon resonance.
pub fn run_scans(
    system: &LevelSystem,
    pumps: &[PumpConfig],
    setup: &ScanSetup,
    noise: &NoiseSpec,
    params: &AnalysisParams,
) -> Result<Vec<ScanResult>> {
    let grid = setup.grid()?;
    pumps
        .iter()
        .enumerate()
        .map(|(k, &pump)| {
            let system = system.retuned_to(pump)?;
            let src = setup.source(pump)?;
            let noise = NoiseSpec {
                counts_budget: noise.counts_budget,
                seed: pump_seed(noise.seed, k),
            };
            let trace = simulate_trace(&system, &src, &grid, &noise, setup.min_detuning, setup.resonance_tol)?;
            let spectrum = spectrum(&trace, &setup.spectrum)?;
            let peaks = detect_peaks(
                &spectrum,
                params.min_prominence,
                params.dc_exclusion(spectrum.omega_res),
            );
            Ok(ScanResult {
                pump,
                system,
                trace,
                spectrum,
                peaks,
            })
        })
        .collect()
}

/// Outcome of recovering one system's energies.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub truth: Vec<f64>,
    pub extraction: Extraction,
    /// Every true energy has a recovered energy within tolerance.
    pub complete: bool,
    /// Recovered energies with no true energy within tolerance.
    pub false_energies: usize,
    /// Largest |ε_recovered − ε_true| over matched energies, eV.
    pub max_error: f64,
    pub tol: f64,
}

impl Recovery {
    pub fn success(&self) -> bool {
        self.complete && self.false_energies == 0
    }
}

pub fn score_recovery(truth: &[f64], extraction: Extraction, tol: f64) -> Recovery {
    let recovered: Vec<f64> = extraction.energies.iter().map(|e| e.epsilon).collect();
    let mut complete = true;
    let mut max_error: f64 = 0.0;
    for t in truth {
        match recovered.iter().map(|r| (r - t).abs()).min_by(f64::total_cmp) {
            Some(err) if err <= tol => max_error = max_error.max(err),
            _ => complete = false,
        }
    }
    let false_energies = recovered
        .iter()
        .filter(|r| !truth.iter().any(|t| (*r - t).abs() <= tol))
        .count();
    Recovery {
        truth: truth.to_vec(),
        extraction,
        complete,
        false_energies,
        max_error,
        tol,
    }
}

/// Full pipeline for one system, scored against its true energies.
pub fn recover(
    system: &LevelSystem,
    pumps: &[PumpConfig],
    setup: &ScanSetup,
    noise: &NoiseSpec,
    params: &AnalysisParams,
) -> Result<(Vec<ScanResult>, Recovery)> {
    let scans = run_scans(system, pumps, setup, noise, params)?;
    let omega_res = scans[0].spectrum.omega_res;
    let tol = params.tol(omega_res);
    let peak_sets: Vec<PeakSet> = scans.iter().map(|s| s.peaks.clone()).collect();
    let extraction = extract_energies(&peak_sets, tol)?;
    let recovery = score_recovery(&system.energies(), extraction, tol);
    Ok((scans, recovery))
}

/// Constraints on randomly drawn level systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemSpec {
    pub n_states: usize,
    pub energy_min: f64,
    pub energy_max: f64,
    /// Smallest |Δ_j| at every pump, eV.
    pub min_detuning: f64,
    /// Smallest spacing between distinct predicted lines (and between a
    /// line and DC) at every pump, eV.
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl RandomSystemSpec {
    pub fn new(n_states: usize, min_separation: f64) -> Self {
        Self {
            n_states,
            energy_min: 0.4,
            energy_max: 2.6,
            min_detuning: 0.05,
            min_separation,
            max_attempts: 100_000,
        }
    }
}

/// Draws intermediate energies uniformly, rejecting draws whose predicted
/// lines collide at any of the pumps. The final state is resonant with the
/// first pump.
pub fn random_system<R: Rng>(rng: &mut R, spec: &RandomSystemSpec, pumps: &[PumpConfig]) -> Option<LevelSystem> {
    'draw: for _ in 0..spec.max_attempts {
        let mut energies: Vec<f64> = (0..spec.n_states)
            .map(|_| rng.random_range(spec.energy_min..spec.energy_max))
            .collect();
        energies.sort_by(f64::total_cmp);
        for pump in pumps {
            if energies.iter().any(|e| (e - pump.omega0()).abs() < spec.min_detuning) {
                continue 'draw;
            }
            let Ok(system) = LevelSystem::with_energies(&energies, *pump) else {
                continue 'draw;
            };
            let Ok(d) = detunings(&system, *pump, spec.min_detuning, f64::INFINITY) else {
                continue 'draw;
            };
            let positive: Vec<f64> = distinct_nonzero(&predicted_frequencies(&d), 1e-12)
                .into_iter()
                .filter(|f| *f > 0.0)
                .collect();
            if positive.first().is_some_and(|f| *f < spec.min_separation) {
                continue 'draw;
            }
            if positive.windows(2).any(|w| w[1] - w[0] < spec.min_separation) {
                continue 'draw;
            }
        }
        return LevelSystem::with_energies(&energies, pumps[0]).ok();
    }
    None
}

/// Recovery over many seeded random systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub successes: usize,
    pub recovery_rate: f64,
    pub mean_abs_error: f64,
    pub false_energies: usize,
}

/// Seeded Monte Carlo: trial `k` draws its system and noise from
/// `seed + k`, so results do not depend on thread scheduling.
pub fn monte_carlo(
    spec: &RandomSystemSpec,
    pumps: &[PumpConfig],
    setup: &ScanSetup,
    counts_budget: Option<f64>,
    params: &AnalysisParams,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    use rand::SeedableRng;
    let outcomes: Vec<Result<Option<Recovery>>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let trial_seed = seed.wrapping_add(k as u64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(trial_seed);
            let Some(system) = random_system(&mut rng, spec, pumps) else {
                return Ok(None);
            };
            let noise = NoiseSpec {
                counts_budget,
                seed: trial_seed,
            };
            recover(&system, pumps, setup, &noise, params).map(|(_, r)| Some(r))
        })
        .collect();
    let mut successes = 0;
    let mut false_energies = 0;
    let mut errors = Vec::new();
    let mut completed = 0;
    for outcome in outcomes {
        if let Some(r) = outcome? {
            completed += 1;
            if r.success() {
                successes += 1;
            }
            false_energies += r.false_energies;
            if r.complete {
                errors.push(r.max_error);
            }
        }
    }
    let mean_abs_error = if errors.is_empty() {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    Ok(MonteCarloSummary {
        trials: completed,
        successes,
        recovery_rate: if completed == 0 {
            0.0
        } else {
            successes as f64 / completed as f64
        },
        mean_abs_error,
        false_energies,
    })
}
