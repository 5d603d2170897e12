//! Discrete delay scans: delay grids, simulated traces and their spectra.
//!
//! All spectral axes are angular frequencies expressed as energies (eV).
//! The conversion from a delay span to a frequency step happens in
//! [`angular_step`] only.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::physics::{detunings, LevelSystem, C_NM_PER_FS, HBAR_EV_FS};
use crate::signal::{cross_section, SourceConfig};
use crate::{Error, Result};

/// Minimum number of delay samples in a scan.
pub const MIN_SAMPLES: usize = 16;

/// Angular-frequency spacing (eV) conjugate to a delay span (fs).
fn angular_step(span_fs: f64) -> f64 {
    2.0 * PI * HBAR_EV_FS / span_fs
}

/// Symmetric, uniformly spaced delay grid τ_k = k·Δ_τ, k = −m..=m.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    delta_tau: f64,
    half_count: usize,
    samples: Vec<f64>,
}

impl DelayGrid {
    fn symmetric(delta_tau: f64, half_count: usize) -> Self {
        let m = half_count as i64;
        let samples = (-m..=m).map(|k| k as f64 * delta_tau).collect();
        Self {
            delta_tau,
            half_count,
            samples,
        }
    }

    /// Rebuilds a grid from explicit delays, checking symmetry and uniform
    /// spacing to `rel_tol` of the step.
    pub fn from_samples(samples: &[f64], rel_tol: f64) -> Result<Self> {
        if samples.len() < MIN_SAMPLES {
            return Err(Error::InsufficientScanRange { samples: samples.len() });
        }
        let step = (samples[samples.len() - 1] - samples[0]) / (samples.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::NonUniformGrid("delays must increase".into()));
        }
        for (k, w) in samples.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > rel_tol * step {
                return Err(Error::NonUniformGrid(format!(
                    "step {} between samples {} and {} differs from mean step {step}",
                    w[1] - w[0],
                    k,
                    k + 1
                )));
            }
        }
        if samples.len().is_multiple_of(2) || (samples[0] + samples[samples.len() - 1]).abs() > rel_tol * step {
            return Err(Error::NonUniformGrid("grid is not symmetric about τ = 0".into()));
        }
        Ok(Self::symmetric(step, samples.len() / 2))
    }

    pub fn delta_tau(&self) -> f64 {
        self.delta_tau
    }

    pub fn tau_max(&self) -> f64 {
        self.half_count as f64 * self.delta_tau
    }

    pub fn tau_min(&self) -> f64 {
        -self.tau_max()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.tau_max() - self.tau_min()
    }
}

/// Symmetric grid with τ_max = margin·T_e rounded down to a multiple of
/// Δ_τ, kept strictly below T_e.
pub fn make_grid(delta_tau: f64, te: f64, margin: f64) -> Result<DelayGrid> {
    if !(delta_tau > 0.0) {
        return Err(Error::Domain(format!("delay step must be positive, got {delta_tau}")));
    }
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(Error::Domain(format!("grid margin must lie in (0, 1], got {margin}")));
    }
    if !(te > 0.0) {
        return Err(Error::Domain(format!("entanglement time must be positive, got {te}")));
    }
    let mut half = (margin * te / delta_tau + 1e-9).floor() as usize;
    if half > 0 && half as f64 * delta_tau >= te {
        half -= 1;
    }
    let count = 2 * half + 1;
    if count < MIN_SAMPLES {
        return Err(Error::InsufficientScanRange { samples: count });
    }
    Ok(DelayGrid::symmetric(delta_tau, half))
}

/// Mirror translation Δ_L = cΔ_τ/2 (nm) producing a delay step Δ_τ (fs).
pub fn mirror_step(delta_tau: f64) -> Result<f64> {
    if !(delta_tau > 0.0) {
        return Err(Error::Domain(format!("delay step must be positive, got {delta_tau}")));
    }
    Ok(C_NM_PER_FS * delta_tau / 2.0)
}

/// Delay step (fs) produced by a mirror translation Δ_L (nm).
pub fn delay_step_for_mirror(delta_l: f64) -> Result<f64> {
    if !(delta_l > 0.0) {
        return Err(Error::Domain(format!("mirror step must be positive, got {delta_l}")));
    }
    Ok(2.0 * delta_l / C_NM_PER_FS)
}

/// Frequency resolution 2πħ/(τ_max − τ_min), eV.
pub fn frequency_resolution(grid: &DelayGrid) -> f64 {
    angular_step(grid.span())
}

/// Nyquist limit πħ/Δ_τ, eV.
pub fn nyquist(delta_tau: f64) -> f64 {
    PI * HBAR_EV_FS / delta_tau
}

/// Comparison of a grid's resolution against the source bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionCheck {
    pub omega_res: f64,
    pub delta_omega: f64,
    /// Δ_ω/2π: the resolution can never be finer than this for τ_max < T_e.
    pub lower_bound: f64,
    /// ω_res > Δ_ω/2π.
    pub bound_holds: bool,
    /// ω_res ≤ Δ_ω, i.e. lines inside the bandwidth can be resolved.
    pub resolves_bandwidth: bool,
}

pub fn resolution_check(grid: &DelayGrid, delta_omega: f64) -> ResolutionCheck {
    let omega_res = frequency_resolution(grid);
    let lower_bound = delta_omega / (2.0 * PI);
    ResolutionCheck {
        omega_res,
        delta_omega,
        lower_bound,
        bound_holds: omega_res > lower_bound,
        resolves_bandwidth: omega_res <= delta_omega,
    }
}

/// Photon-counting noise applied to a simulated trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Expected detections at the maximum of the trace; `None` is noiseless.
    #[serde(default)]
    pub counts_budget: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn poisson(counts_budget: f64, seed: u64) -> Self {
        Self {
            counts_budget: Some(counts_budget),
            seed,
        }
    }
}

/// Sampled s(T_e, τ) on a delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTrace {
    pub grid: DelayGrid,
    pub values: Vec<f64>,
    pub omega0: f64,
    pub noise_seed: Option<u64>,
    pub counts_budget: Option<f64>,
}

impl DelayTrace {
    pub fn new(grid: DelayGrid, values: Vec<f64>, omega0: f64) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} delays but {} trace values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            omega0,
            noise_seed: None,
            counts_budget: None,
        })
    }
}

/// Samples the cross section of `sys` over `grid`, optionally with Poisson
/// counting noise.
///
/// With noise, counts ~ Poisson(s·budget/max s) are drawn per delay and
/// rescaled by max s/budget. The draw is fully determined by the seed.
pub fn simulate_trace(
    sys: &LevelSystem,
    src: &SourceConfig,
    grid: &DelayGrid,
    noise: &NoiseSpec,
    min_detuning: f64,
    resonance_tol: f64,
) -> Result<DelayTrace> {
    let te = src.entanglement_time();
    if grid.tau_max() >= te {
        return Err(Error::Domain(format!(
            "tau_max = {} fs must stay below T_e = {te} fs",
            grid.tau_max()
        )));
    }
    let d = detunings(sys, src.pump(), min_detuning, resonance_tol)?;
    let clean: Vec<f64> = grid
        .samples()
        .par_iter()
        .map(|&tau| cross_section(&d, te, tau))
        .collect();
    let values = match noise.counts_budget {
        None => clean,
        Some(budget) => add_poisson_noise(&clean, budget, noise.seed)?,
    };
    let mut trace = DelayTrace::new(grid.clone(), values, src.omega0())?;
    if noise.counts_budget.is_some() {
        trace.noise_seed = Some(noise.seed);
        trace.counts_budget = noise.counts_budget;
    }
    Ok(trace)
}

fn add_poisson_noise(clean: &[f64], budget: f64, seed: u64) -> Result<Vec<f64>> {
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::Domain(format!("counts budget must be positive, got {budget}")));
    }
    let peak = clean.iter().copied().fold(0.0_f64, f64::max);
    if peak == 0.0 {
        return Ok(clean.to_vec());
    }
    let scale = budget / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clean
        .iter()
        .map(|&v| {
            let mean = v * scale;
            let counts = if mean > 0.0 {
                Poisson::new(mean).expect("positive finite mean").sample(&mut rng)
            } else {
                0.0
            };
            counts / scale
        })
        .collect())
}

/// Window applied to the trace before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Remove the trace mean so the DC bin does not dominate.
    pub subtract_mean: bool,
    pub window: Window,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            subtract_mean: true,
            window: Window::None,
        }
    }
}

/// DFT magnitude of a delay trace on symmetric angular-frequency bins.
///
/// Magnitudes are |X_k|/√N, so Σ|x_n|² = Σ magnitude² for the transformed
/// (mean-subtracted, windowed) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Bin spacing, eV.
    pub omega_res: f64,
    /// Nyquist limit πħ/Δ_τ, eV.
    pub omega_max: f64,
    /// Index of the ω = 0 bin.
    pub dc_index: usize,
    /// False when the mean was subtracted before the transform.
    pub dc_retained: bool,
    pub omega0: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Magnitude of the bin closest to `frequency`.
    pub fn magnitude_at(&self, frequency: f64) -> f64 {
        let k = ((frequency / self.omega_res).round() as i64 + self.dc_index as i64).clamp(0, self.len() as i64 - 1)
            as usize;
        self.magnitudes[k]
    }
}

pub fn spectrum(trace: &DelayTrace, opts: &SpectrumOptions) -> Result<Spectrum> {
    spectrum_from_samples(trace.grid.samples(), &trace.values, trace.omega0, opts)
}

/// Spectrum of samples on an explicit delay axis; the axis must be uniform
/// and symmetric about zero.
pub fn spectrum_from_samples(taus: &[f64], values: &[f64], omega0: f64, opts: &SpectrumOptions) -> Result<Spectrum> {
    if taus.len() != values.len() {
        return Err(Error::Domain(format!(
            "{} delays but {} values",
            taus.len(),
            values.len()
        )));
    }
    let grid = DelayGrid::from_samples(taus, 1e-6)?;
    let n = values.len();
    let mean = if opts.subtract_mean {
        values.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let mut buf: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = match opts.window {
                Window::None => 1.0,
                Window::Hann => 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos(),
            };
            Complex64::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // n is odd, so bins −h..=h are symmetric with h = (n − 1)/2.
    let half = n / 2;
    let step = angular_step(n as f64 * grid.delta_tau());
    let norm = 1.0 / (n as f64).sqrt();
    let mut frequencies = Vec::with_capacity(n);
    let mut magnitudes = Vec::with_capacity(n);
    for signed in -(half as i64)..=(half as i64) {
        let idx = signed.rem_euclid(n as i64) as usize;
        frequencies.push(signed as f64 * step);
        magnitudes.push(buf[idx].norm() * norm);
    }
    Ok(Spectrum {
        frequencies,
        magnitudes,
        omega_res: step,
        omega_max: nyquist(grid.delta_tau()),
        dc_index: half,
        dc_retained: !opts.subtract_mean,
        omega0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::PumpConfig;

    #[test]
    fn grid_reference_values() {
        let g = make_grid(0.3, 1745.0, 0.99).unwrap();
        assert!((g.tau_max() - 1727.4).abs() < 1e-9);
        assert_eq!(g.len(), 11517);
        let reversed: Vec<f64> = g.samples().iter().rev().map(|t| -t).collect();
        assert_eq!(reversed, g.samples());
        assert!(g.tau_max() < 1745.0);
    }

    #[test]
    fn grid_stays_below_entanglement_time() {
        let g = make_grid(0.5, 10.0, 1.0).unwrap();
        assert!(g.tau_max() < 10.0);
        assert_eq!(g.len(), 39);
    }

    #[test]
    fn grid_too_short() {
        // τ_max = 7·Δ_τ gives 15 samples.
        assert!(matches!(
            make_grid(0.3, 100.0, 7.0 * 0.3 / 100.0 + 1e-6),
            Err(Error::InsufficientScanRange { samples: 15 })
        ));
        assert!(make_grid(0.3, 100.0, 0.0).is_err());
        assert!(make_grid(0.0, 100.0, 0.5).is_err());
    }

    #[test]
    fn mirror_steps() {
        assert!((mirror_step(0.3).unwrap() - 44.9688687).abs() < 1e-6);
        assert!((mirror_step(0.6).unwrap() - 89.9377374).abs() < 1e-6);
        assert!(mirror_step(0.0).is_err());
        assert!((delay_step_for_mirror(mirror_step(0.3).unwrap()).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn resolution_values() {
        let g = make_grid(0.3, 1745.0, 0.99).unwrap();
        assert!((g.span() - 3454.8).abs() < 1e-9);
        assert!((frequency_resolution(&g) - 0.0011970787590031267).abs() < 1e-12);
        let wide = make_grid(0.3, 2.0 * 1745.0, 0.99).unwrap();
        let ratio = frequency_resolution(&g) / frequency_resolution(&wide);
        assert!((ratio - 2.0).abs() < 1e-3);
    }

    #[test]
    fn resolution_bound_flags() {
        let g = make_grid(0.3, 1745.0, 0.99).unwrap();
        let ok = resolution_check(&g, 0.0074);
        assert!(ok.bound_holds);
        assert!(ok.resolves_bandwidth);
        let coarse = resolution_check(&g, 0.0005);
        assert!(!coarse.resolves_bandwidth);
        let violated = resolution_check(&g, 0.1);
        assert!(!violated.bound_holds);
    }

    #[test]
    fn cosine_spectrum_peaks() {
        let g = make_grid(0.3, 1745.0, 0.99).unwrap();
        let delta = 0.14;
        let values: Vec<f64> = g
            .samples()
            .iter()
            .map(|&t| (crate::physics::phase(delta, t)).cos())
            .collect();
        let trace = DelayTrace::new(g, values, 1.53).unwrap();
        let sp = spectrum(&trace, &SpectrumOptions::default()).unwrap();
        let (imax, _) = sp
            .magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((sp.frequencies[imax].abs() - delta).abs() <= sp.omega_res);
        let mirror = 2 * sp.dc_index - imax;
        assert!((sp.magnitudes[mirror] - sp.magnitudes[imax]).abs() < 1e-9 * sp.magnitudes[imax]);
    }

    #[test]
    fn constant_trace_is_pure_dc() {
        let g = make_grid(0.3, 30.0, 0.9).unwrap();
        let trace = DelayTrace::new(g.clone(), vec![2.5; g.len()], 1.0).unwrap();
        let raw = SpectrumOptions {
            subtract_mean: false,
            window: Window::None,
        };
        let sp = spectrum(&trace, &raw).unwrap();
        for (k, m) in sp.magnitudes.iter().enumerate() {
            if k == sp.dc_index {
                assert!((m - 2.5 * (g.len() as f64).sqrt()).abs() < 1e-12);
            } else {
                assert!(m.abs() < 1e-12, "bin {k}: {m}");
            }
        }
        let sub = spectrum(&trace, &SpectrumOptions::default()).unwrap();
        assert!(sub.magnitudes.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn non_uniform_grid_rejected() {
        let mut taus: Vec<f64> = (-10..=10).map(|k| k as f64).collect();
        taus[5] += 0.3;
        let values = vec![1.0; taus.len()];
        assert!(matches!(
            spectrum_from_samples(&taus, &values, 1.0, &SpectrumOptions::default()),
            Err(Error::NonUniformGrid(_))
        ));
    }

    #[test]
    fn parseval() {
        let g = make_grid(0.3, 60.0, 0.9).unwrap();
        let values: Vec<f64> = g.samples().iter().map(|t| (0.3 * t).sin() + 0.1 * t).collect();
        let trace = DelayTrace::new(g, values.clone(), 1.0).unwrap();
        let raw = SpectrumOptions {
            subtract_mean: false,
            window: Window::None,
        };
        let sp = spectrum(&trace, &raw).unwrap();
        let time: f64 = values.iter().map(|v| v * v).sum();
        let freq: f64 = sp.magnitudes.iter().map(|m| m * m).sum();
        assert!((time - freq).abs() < 1e-9 * time);
        assert!(sp.frequencies.iter().all(|f| f.abs() <= sp.omega_max));
    }

    #[test]
    fn noise_is_seeded() {
        let pump = PumpConfig::new(1.53).unwrap();
        let sys = LevelSystem::with_energies(&[0.86, 1.67], pump).unwrap();
        let src = SourceConfig::new(pump, 0.0074, 200.0).unwrap();
        let g = make_grid(0.3, 200.0, 0.99).unwrap();
        let run = |seed| simulate_trace(&sys, &src, &g, &NoiseSpec::poisson(1e4, seed), 0.01, 1e-3).unwrap();
        assert_eq!(run(7).values, run(7).values);
        assert_ne!(run(7).values, run(8).values);
    }

    #[test]
    fn trace_rejects_grid_beyond_entanglement_time() {
        let pump = PumpConfig::new(1.53).unwrap();
        let sys = LevelSystem::with_energies(&[0.86, 1.67], pump).unwrap();
        let src = SourceConfig::new(pump, 0.0074, 100.0).unwrap();
        let g = make_grid(0.3, 200.0, 0.99).unwrap();
        assert!(simulate_trace(&sys, &src, &g, &NoiseSpec::noiseless(), 0.01, 1e-3).is_err());
    }
}
