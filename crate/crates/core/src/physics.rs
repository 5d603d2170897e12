//! Level systems, pump settings, detunings and the predicted eTPA line set.
//!
//! Energies are in eV, times in fs, lengths in nm.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Reduced Planck constant, eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;
/// Planck constant, eV·fs.
pub const PLANCK_EV_FS: f64 = 2.0 * PI * HBAR_EV_FS;
/// Speed of light, nm/fs.
pub const C_NM_PER_FS: f64 = 299.792458;
/// Vacuum permittivity, F/m.
pub const EPSILON_0_SI: f64 = 8.8541878128e-12;

/// Smallest |Δ_j| accepted by [`detunings`] by default, eV.
pub const DEFAULT_MIN_DETUNING: f64 = 0.010;
/// Default tolerance on the two-photon resonance ε_f − ε_i = 2ω_0, eV.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-3;

/// Radians accumulated by an energy `energy` (eV) over `time` (fs).
///
/// Every phase `Δ·t/ħ` in the crate goes through here.
#[inline]
pub fn phase(energy: f64, time: f64) -> f64 {
    energy * time / HBAR_EV_FS
}

/// Constants entering the absolute transition-probability prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    hbar: f64,
    c: f64,
    eps0: f64,
    beam_area: f64,
}

impl PhysicalConstants {
    pub fn new(beam_area: f64) -> Result<Self> {
        if !(beam_area > 0.0) {
            return Err(Error::Domain(format!("beam area must be positive, got {beam_area}")));
        }
        Ok(Self {
            hbar: HBAR_EV_FS,
            c: C_NM_PER_FS,
            eps0: EPSILON_0_SI,
            beam_area,
        })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn beam_area(&self) -> f64 {
        self.beam_area
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::new(1e-10).expect("positive default beam area")
    }
}

/// One intermediate eigenstate |j⟩ with its transition dipole moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermediateState {
    pub energy: f64,
    #[serde(default = "unit_dipole")]
    pub mu_fj: f64,
    #[serde(default = "unit_dipole")]
    pub mu_ji: f64,
}

fn unit_dipole() -> f64 {
    1.0
}

impl IntermediateState {
    pub fn new(energy: f64) -> Self {
        Self {
            energy,
            mu_fj: 1.0,
            mu_ji: 1.0,
        }
    }
}

/// Initial, intermediate and final levels of the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevelSystemRepr", into = "LevelSystemRepr")]
pub struct LevelSystem {
    epsilon_i: f64,
    intermediates: Vec<IntermediateState>,
    epsilon_f: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelSystemRepr {
    #[serde(default)]
    epsilon_i: f64,
    intermediates: Vec<IntermediateState>,
    epsilon_f: f64,
}

impl TryFrom<LevelSystemRepr> for LevelSystem {
    type Error = Error;

    fn try_from(r: LevelSystemRepr) -> Result<Self> {
        LevelSystem::new(r.epsilon_i, r.intermediates, r.epsilon_f)
    }
}

impl From<LevelSystem> for LevelSystemRepr {
    fn from(s: LevelSystem) -> Self {
        Self {
            epsilon_i: s.epsilon_i,
            intermediates: s.intermediates,
            epsilon_f: s.epsilon_f,
        }
    }
}

impl LevelSystem {
    pub fn new(epsilon_i: f64, intermediates: Vec<IntermediateState>, epsilon_f: f64) -> Result<Self> {
        if intermediates.is_empty() {
            return Err(Error::InvalidLevelSystem(
                "at least one intermediate state is required".into(),
            ));
        }
        let finite = epsilon_i.is_finite()
            && epsilon_f.is_finite()
            && intermediates
                .iter()
                .all(|s| s.energy.is_finite() && s.mu_fj.is_finite() && s.mu_ji.is_finite());
        if !finite {
            return Err(Error::InvalidLevelSystem("non-finite energy or dipole moment".into()));
        }
        if !(epsilon_f > epsilon_i) {
            return Err(Error::InvalidLevelSystem(format!(
                "epsilon_f ({epsilon_f}) must exceed epsilon_i ({epsilon_i})"
            )));
        }
        for (k, w) in intermediates.windows(2).enumerate() {
            if !(w[1].energy > w[0].energy) {
                return Err(Error::InvalidLevelSystem(format!(
                    "intermediate energies must be strictly ascending and distinct \
                     (state {} at {} eV, state {} at {} eV)",
                    k,
                    w[0].energy,
                    k + 1,
                    w[1].energy
                )));
            }
        }
        Ok(Self {
            epsilon_i,
            intermediates,
            epsilon_f,
        })
    }

    /// Ground state at 0 eV, unit dipole moments, and a final state resonant
    /// with `pump`.
    pub fn with_energies(energies: &[f64], pump: PumpConfig) -> Result<Self> {
        let states = energies.iter().copied().map(IntermediateState::new).collect();
        Self::new(0.0, states, pump.omega_p())
    }

    pub fn epsilon_i(&self) -> f64 {
        self.epsilon_i
    }

    pub fn epsilon_f(&self) -> f64 {
        self.epsilon_f
    }

    pub fn intermediates(&self) -> &[IntermediateState] {
        &self.intermediates
    }

    pub fn energies(&self) -> Vec<f64> {
        self.intermediates.iter().map(|s| s.energy).collect()
    }

    /// Same sample with the final state placed on the two-photon resonance
    /// of `pump`.
    pub fn retuned_to(&self, pump: PumpConfig) -> Result<Self> {
        Self::new(
            self.epsilon_i,
            self.intermediates.clone(),
            self.epsilon_i + pump.omega_p(),
        )
    }

    pub fn check_resonance(&self, pump: PumpConfig, tol: f64) -> Result<()> {
        let gap = self.epsilon_f - self.epsilon_i;
        if (gap - pump.omega_p()).abs() > tol {
            return Err(Error::OffResonance {
                gap,
                omega_p: pump.omega_p(),
            });
        }
        Ok(())
    }
}

/// Central angular frequency ω_0 of the down-converted photons, in eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PumpConfig {
    omega0: f64,
}

impl TryFrom<f64> for PumpConfig {
    type Error = Error;

    fn try_from(omega0: f64) -> Result<Self> {
        PumpConfig::new(omega0)
    }
}

impl From<PumpConfig> for f64 {
    fn from(p: PumpConfig) -> f64 {
        p.omega0
    }
}

impl PumpConfig {
    pub fn new(omega0: f64) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::Domain(format!("omega0 must be positive, got {omega0}")));
        }
        Ok(Self { omega0 })
    }

    pub fn from_wavelength(lambda_p: f64) -> Result<Self> {
        Self::new(center_frequency(lambda_p)?)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Pump photon energy ω_p = 2ω_0.
    pub fn omega_p(&self) -> f64 {
        2.0 * self.omega0
    }
}

/// Central frequency ω_0 = πħc/λ_p (eV) of the twin photons for a pump of
/// wavelength `lambda_p` (nm).
pub fn center_frequency(lambda_p: f64) -> Result<f64> {
    if !(lambda_p > 0.0) {
        return Err(Error::Domain(format!(
            "pump wavelength must be positive, got {lambda_p} nm"
        )));
    }
    Ok(PI * HBAR_EV_FS * C_NM_PER_FS / lambda_p)
}

/// Detunings Δ_j = ε_j − ε_i − ω_0 and amplitudes A_j = μ_fj μ_ji / Δ_j.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningSet {
    deltas: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl DetuningSet {
    /// Builds a set from detunings and the dipole products μ_fj·μ_ji.
    pub fn from_deltas(deltas: Vec<f64>, dipole_products: &[f64]) -> Result<Self> {
        if deltas.len() != dipole_products.len() {
            return Err(Error::Domain(format!(
                "{} detunings but {} dipole products",
                deltas.len(),
                dipole_products.len()
            )));
        }
        if let Some((index, &delta)) = deltas.iter().enumerate().find(|(_, d)| **d == 0.0) {
            return Err(Error::VirtualStateViolation { index, delta, min: 0.0 });
        }
        let amplitudes = deltas.iter().zip(dipole_products).map(|(d, m)| m / d).collect();
        Ok(Self { deltas, amplitudes })
    }

    /// Unit dipole moments.
    pub fn with_unit_dipoles(deltas: Vec<f64>) -> Result<Self> {
        let ones = vec![1.0; deltas.len()];
        Self::from_deltas(deltas, &ones)
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Detunings of every intermediate state for the given pump.
///
/// `min_detuning` guards the virtual-state condition; `resonance_tol` the
/// two-photon resonance of the final state.
pub fn detunings(system: &LevelSystem, pump: PumpConfig, min_detuning: f64, resonance_tol: f64) -> Result<DetuningSet> {
    system.check_resonance(pump, resonance_tol)?;
    let mut deltas = Vec::with_capacity(system.intermediates.len());
    let mut products = Vec::with_capacity(system.intermediates.len());
    for (index, state) in system.intermediates.iter().enumerate() {
        let delta = state.energy - system.epsilon_i - pump.omega0();
        if delta.abs() < min_detuning || delta == 0.0 {
            return Err(Error::VirtualStateViolation {
                index,
                delta,
                min: min_detuning,
            });
        }
        deltas.push(delta);
        products.push(state.mu_fj * state.mu_ji);
    }
    DetuningSet::from_deltas(deltas, &products)
}

/// Which term of the cosine expansion a spectral line comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineFamily {
    Dc,
    /// ±Δ_j, moves with slope ∓1 against ω_0.
    Single,
    /// ±(Δ_j − Δ_k), independent of ω_0.
    Difference,
    /// ±(Δ_j + Δ_k), moves with slope ∓2 against ω_0.
    Sum,
}

impl LineFamily {
    /// d(frequency)/d(ω_0) of the line with a positive sign.
    pub fn slope(self) -> i32 {
        match self {
            LineFamily::Dc | LineFamily::Difference => 0,
            LineFamily::Single => -1,
            LineFamily::Sum => -2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralLine {
    pub frequency: f64,
    pub family: LineFamily,
    pub j: usize,
    pub k: usize,
}

/// Every angular frequency at which the eTPA spectrum of `d` has a line:
/// 0, ±Δ_j, ±(Δ_j − Δ_k) for j < k and ±(Δ_j + Δ_k) for j ≤ k.
///
/// The result is a multiset sorted by frequency; coincident lines are kept
/// separately. With collision-free detunings there are 2(N+1)N distinct
/// nonzero entries.
pub fn predicted_frequencies(d: &DetuningSet) -> Vec<SpectralLine> {
    let n = d.len();
    let mut lines = Vec::with_capacity(1 + 2 * n * (n + 1));
    lines.push(SpectralLine {
        frequency: 0.0,
        family: LineFamily::Dc,
        j: 0,
        k: 0,
    });
    let mut push_pair = |value: f64, family, j, k| {
        for frequency in [value, -value] {
            lines.push(SpectralLine {
                frequency,
                family,
                j,
                k,
            });
        }
    };
    let deltas = d.deltas();
    for (j, &dj) in deltas.iter().enumerate() {
        push_pair(dj, LineFamily::Single, j, j);
        for (k, &dk) in deltas.iter().enumerate().skip(j) {
            if k > j {
                push_pair(dj - dk, LineFamily::Difference, j, k);
            }
            push_pair(dj + dk, LineFamily::Sum, j, k);
        }
    }
    lines.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    lines
}

/// Distinct nonzero frequencies of a line set, merging entries closer than
/// `tol`.
pub fn distinct_nonzero(lines: &[SpectralLine], tol: f64) -> Vec<f64> {
    let mut freqs: Vec<f64> = lines.iter().map(|l| l.frequency).filter(|f| f.abs() > tol).collect();
    freqs.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(freqs.len());
    for f in freqs {
        match out.last() {
            Some(&last) if f - last <= tol => {}
            _ => out.push(f),
        }
    }
    out
}

/// Signed entanglement time from crystal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalEntanglementTime {
    /// |l(N_s − N_i)/2|.
    pub magnitude: f64,
    /// True when N_i > N_s.
    pub negative: bool,
}

/// T_e = l(N_s − N_i)/2 in the units implied by the inputs (fs for l in
/// length units and N in fs per length unit).
pub fn entanglement_time_from_crystal(length: f64, n_s: f64, n_i: f64) -> Result<CrystalEntanglementTime> {
    if !(length > 0.0) {
        return Err(Error::Domain(format!("crystal length must be positive, got {length}")));
    }
    let signed = length * (n_s - n_i) / 2.0;
    if signed == 0.0 {
        log::warn!("N_s == N_i: zero entanglement time, degenerate source");
    }
    Ok(CrystalEntanglementTime {
        magnitude: signed.abs(),
        negative: signed < 0.0,
    })
}

/// Planck-constant choice for converting π/Δ_ω into a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeConvention {
    /// T_e = π·h/Δ_ω. Gives ≈1755 fs for a 7.4 meV source.
    #[default]
    Planck,
    /// T_e = π·ħ/Δ_ω.
    ReducedPlanck,
}

/// T_e = π/Δ_ω for a bandwidth `delta_omega` in eV, in fs.
pub fn entanglement_time_from_bandwidth(delta_omega: f64, convention: TimeConvention) -> Result<f64> {
    if !(delta_omega > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be positive, got {delta_omega} eV"
        )));
    }
    let action = match convention {
        TimeConvention::Planck => PLANCK_EV_FS,
        TimeConvention::ReducedPlanck => HBAR_EV_FS,
    };
    Ok(PI * action / delta_omega)
}
