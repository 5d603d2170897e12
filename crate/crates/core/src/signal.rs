//! Closed-form eTPA forward model.
//!
//! The central quantity is the cross section
//!
//! ```text
//! s(T_e, τ) = | Σ_j A_j (2 − e^{−iΔ_j(T_e+τ)} − e^{−iΔ_j(T_e−τ)}) |²
//! ```
//!
//! evaluated directly by [`cross_section`] and through its expanded double
//! sum by [`cross_section_expanded`]. The two are algebraically identical;
//! the second one exists to check the first.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::physics::{
    entanglement_time_from_bandwidth, entanglement_time_from_crystal, phase, DetuningSet, LevelSystem,
    PhysicalConstants, PumpConfig, TimeConvention,
};
use crate::{Error, Result};

/// Crystal parameters of a type-II SPDC source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crystal {
    pub length: f64,
    pub n_s: f64,
    pub n_i: f64,
}

/// Twin-photon source: centre frequency, bandwidth and entanglement time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pump: PumpConfig,
    delta_omega: f64,
    entanglement_time: f64,
    photon_flux: f64,
    crystal: Option<Crystal>,
}

impl SourceConfig {
    /// Entanglement time derived from the bandwidth.
    pub fn from_bandwidth(pump: PumpConfig, delta_omega: f64, convention: TimeConvention) -> Result<Self> {
        let te = entanglement_time_from_bandwidth(delta_omega, convention)?;
        Self::new(pump, delta_omega, te)
    }

    pub fn new(pump: PumpConfig, delta_omega: f64, entanglement_time: f64) -> Result<Self> {
        if !(delta_omega > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {delta_omega}")));
        }
        if !(entanglement_time > 0.0) || !entanglement_time.is_finite() {
            return Err(Error::Domain(format!(
                "entanglement time must be positive, got {entanglement_time}"
            )));
        }
        Ok(Self {
            pump,
            delta_omega,
            entanglement_time,
            photon_flux: 0.0,
            crystal: None,
        })
    }

    /// Attaches crystal parameters, which must reproduce the entanglement
    /// time to 1e-9 relative.
    pub fn with_crystal(mut self, crystal: Crystal) -> Result<Self> {
        let te = entanglement_time_from_crystal(crystal.length, crystal.n_s, crystal.n_i)?.magnitude;
        if ((te - self.entanglement_time) / self.entanglement_time).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "crystal gives T_e = {te} fs, source has {} fs",
                self.entanglement_time
            )));
        }
        self.crystal = Some(crystal);
        Ok(self)
    }

    pub fn with_photon_flux(mut self, flux: f64) -> Result<Self> {
        if !(flux >= 0.0) {
            return Err(Error::Domain(format!("photon flux must be non-negative, got {flux}")));
        }
        self.photon_flux = flux;
        Ok(self)
    }

    /// Same source pumped at a different wavelength.
    pub fn with_pump(mut self, pump: PumpConfig) -> Self {
        self.pump = pump;
        self
    }

    pub fn pump(&self) -> PumpConfig {
        self.pump
    }

    pub fn omega0(&self) -> f64 {
        self.pump.omega0()
    }

    pub fn delta_omega(&self) -> f64 {
        self.delta_omega
    }

    pub fn entanglement_time(&self) -> f64 {
        self.entanglement_time
    }

    pub fn photon_flux(&self) -> f64 {
        self.photon_flux
    }

    pub fn crystal(&self) -> Option<Crystal> {
        self.crystal
    }
}

/// Elapsed interaction time t (fs) of the finite-time delta function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionWindow(f64);

impl InteractionWindow {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("interaction time must be positive, got {t}")));
        }
        Ok(Self(t))
    }

    pub fn t(&self) -> f64 {
        self.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Twin-state joint spectral amplitude Φ(ω_s, ω_i) for delay `tau`.
///
/// The pump is monochromatic, so Φ lives on the shell ω_s + ω_i = ω_p;
/// frequencies off that shell by more than `shell_tol` are rejected.
pub fn joint_spectral_amplitude(
    src: &SourceConfig,
    omega_s: f64,
    omega_i: f64,
    tau: f64,
    shell_tol: f64,
) -> Result<Complex64> {
    let omega_p = src.pump.omega_p();
    let sum = omega_s + omega_i;
    if (sum - omega_p).abs() > shell_tol {
        return Err(Error::OffShell { sum, omega_p });
    }
    let te = src.entanglement_time;
    let norm = (te / PI.sqrt()).sqrt();
    let envelope = sinc(phase(omega_s - omega_i, te) / 2.0);
    Ok(Complex64::from_polar(norm * envelope, phase(omega_s, tau)))
}

/// eTPA cross section s(T_e, τ), evaluated as a modulus squared.
pub fn cross_section(d: &DetuningSet, te: f64, tau: f64) -> f64 {
    let total: Complex64 = d
        .deltas()
        .iter()
        .zip(d.amplitudes())
        .map(|(&delta, &a)| {
            let bracket = Complex64::new(2.0, 0.0)
                - Complex64::from_polar(1.0, -phase(delta, te + tau))
                - Complex64::from_polar(1.0, -phase(delta, te - tau));
            a * bracket
        })
        .sum();
    total.norm_sqr()
}

/// eTPA cross section from its expanded double sum over (j, k):
///
/// ```text
/// Σ_jk A_j A_k* ( 4 − 2e^{−iΔ_jT_e}[e^{iΔ_jτ} + c.c.] − 2e^{iΔ_kT_e}[e^{iΔ_kτ} + c.c.]
///                 + e^{−i(Δ_j−Δ_k)T_e}([e^{i(Δ_j−Δ_k)τ} + c.c.] + [e^{i(Δ_j+Δ_k)τ} + c.c.]) )
/// ```
///
/// Each bracket oscillates in τ at one of the predicted line frequencies.
pub fn cross_section_expanded(d: &DetuningSet, te: f64, tau: f64) -> f64 {
    let cc = |x: f64| Complex64::from_polar(1.0, x) + Complex64::from_polar(1.0, -x);
    let deltas = d.deltas();
    let amps = d.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for (&dj, &aj) in deltas.iter().zip(amps) {
        for (&dk, &ak) in deltas.iter().zip(amps) {
            let term = Complex64::new(4.0, 0.0)
                - 2.0 * Complex64::from_polar(1.0, -phase(dj, te)) * cc(phase(dj, tau))
                - 2.0 * Complex64::from_polar(1.0, phase(dk, te)) * cc(phase(dk, tau))
                + Complex64::from_polar(1.0, -phase(dj - dk, te)) * (cc(phase(dj - dk, tau)) + cc(phase(dj + dk, tau)));
            acc += aj * ak * term;
        }
    }
    acc.re
}

/// Finite-time delta function δ^(t)(x) in 1/eV for an energy mismatch `x`
/// (eV). Its width is ~4πħ/t and it integrates to one over x.
pub fn sinc_delta(x: f64, w: InteractionWindow) -> f64 {
    let t = w.t();
    let hbar = crate::physics::HBAR_EV_FS;
    let half = phase(x, t) / 2.0;
    if half.abs() < 1e-6 {
        // 2 sin²(u)/u² → 2 as u → 0
        return t / (2.0 * PI * hbar) * (1.0 - half * half / 3.0);
    }
    2.0 * half.sin().powi(2) * hbar / (PI * t * x * x)
}

/// Absolute two-photon transition probability P_fi after interaction time
/// `w` at delay `tau`.
///
/// The prefactor ω_p²/(4ħ²√π ε_0² A² T_e) is evaluated with ω_p in eV, ħ in
/// eV·fs, T_e in fs and ε_0, A in SI, so P_fi is meaningful up to a fixed
/// overall scale; ratios between evaluations are exact.
pub fn transition_probability(
    sys: &LevelSystem,
    src: &SourceConfig,
    consts: &PhysicalConstants,
    w: InteractionWindow,
    tau: f64,
    min_detuning: f64,
) -> Result<f64> {
    let pump = src.pump();
    let mismatch = sys.epsilon_f() - sys.epsilon_i() - pump.omega_p();
    let d = crate::physics::detunings(sys, pump, min_detuning, f64::INFINITY)?;
    let te = src.entanglement_time();
    let omega_p = pump.omega_p();
    let prefactor = omega_p * omega_p
        / (4.0 * consts.hbar().powi(2) * PI.sqrt() * consts.eps0().powi(2) * consts.beam_area().powi(2) * te);
    Ok(prefactor * 2.0 * PI * w.t() * sinc_delta(mismatch, w) * cross_section(&d, te, tau))
}

/// Linear (entangled) and quadratic (random-pair) absorption rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionRate {
    pub total: f64,
    pub quantum: f64,
    pub classical: f64,
    /// Flux σ_e/δ_r at which both contributions are equal.
    pub crossover_flux: Option<f64>,
}

/// R = σ_e Φ + δ_r Φ².
pub fn absorption_rate(phi: f64, sigma_e: f64, delta_r: f64) -> Result<AbsorptionRate> {
    if !(phi >= 0.0 && sigma_e >= 0.0 && delta_r >= 0.0) {
        return Err(Error::Domain(format!(
            "flux and cross sections must be non-negative (phi={phi}, sigma_e={sigma_e}, delta_r={delta_r})"
        )));
    }
    let quantum = sigma_e * phi;
    let classical = delta_r * phi * phi;
    Ok(AbsorptionRate {
        total: quantum + classical,
        quantum,
        classical,
        crossover_flux: (delta_r > 0.0).then(|| sigma_e / delta_r),
    })
}
