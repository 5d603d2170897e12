//! Experiment configuration (JSON, `schema_version` 1).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "level_system": { "epsilon_i": 0.0, "intermediates": [{ "energy": 0.86 }, { "energy": 1.67 }] },
//!   "pumps": [{ "wavelength_nm": 405.0 }, { "omega0_ev": 1.36 }],
//!   "source": { "delta_omega_ev": 0.0074 },
//!   "scan": { "delta_tau_fs": 0.3, "margin": 0.99 },
//!   "noise": { "counts_budget": null, "seed": 0 },
//!   "analysis": { "min_prominence": 0.01, "tol_bins": 2.0, "dc_exclusion_bins": 3.0 }
//! }
//! ```
//!
//! Energies are in eV and wavelengths in nm; no other units are accepted.
//! When `level_system.epsilon_f` is omitted the final state is placed on
//! the two-photon resonance of every pump setting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::physics::{
    detunings, IntermediateState, LevelSystem, PumpConfig, TimeConvention, DEFAULT_MIN_DETUNING, DEFAULT_RESONANCE_TOL,
};
use crate::pipeline::{AnalysisParams, ScanSetup};
use crate::scan::{resolution_check, NoiseSpec, SpectrumOptions, Window};
use crate::signal::Crystal;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Default C(peaks, n) cap for the educated-guess baseline in reports.
pub const DEFAULT_REPORT_GUESS_CAP: u128 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub level_system: LevelSystemSpec,
    pub pumps: Vec<PumpSetting>,
    pub source: SourceSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    /// Accept grids whose resolution is coarser than the bandwidth.
    #[serde(default)]
    pub override_resolution_check: bool,
    /// Replace the level system by seeded random systems (simulate only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_systems: Option<RandomSystems>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSystemSpec {
    #[serde(default)]
    pub epsilon_i: f64,
    pub intermediates: Vec<IntermediateState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PumpSetting {
    Wavelength { wavelength_nm: f64 },
    CenterFrequency { omega0_ev: f64 },
}

impl PumpSetting {
    pub fn pump(&self) -> Result<PumpConfig> {
        match *self {
            PumpSetting::Wavelength { wavelength_nm } => PumpConfig::from_wavelength(wavelength_nm),
            PumpSetting::CenterFrequency { omega0_ev } => PumpConfig::new(omega0_ev),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub delta_omega_ev: f64,
    #[serde(default)]
    pub convention: TimeConvention,
    /// Overrides the bandwidth-derived entanglement time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entanglement_time_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crystal: Option<Crystal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub delta_tau_fs: f64,
    pub margin: f64,
    pub subtract_mean: bool,
    pub window: Window,
    pub min_detuning_ev: f64,
    pub resonance_tol_ev: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            delta_tau_fs: 0.3,
            margin: 0.99,
            subtract_mean: true,
            window: Window::None,
            min_detuning_ev: DEFAULT_MIN_DETUNING,
            resonance_tol_ev: DEFAULT_RESONANCE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub min_prominence: f64,
    pub tol_bins: f64,
    pub dc_exclusion_bins: f64,
    pub educated_guess_cap: u64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        let p = AnalysisParams::default();
        Self {
            min_prominence: p.min_prominence,
            tol_bins: p.tol_bins,
            dc_exclusion_bins: p.dc_exclusion_bins,
            educated_guess_cap: DEFAULT_REPORT_GUESS_CAP as u64,
        }
    }
}

impl AnalysisSpec {
    pub fn params(&self) -> AnalysisParams {
        AnalysisParams {
            min_prominence: self.min_prominence,
            tol_bins: self.tol_bins,
            dc_exclusion_bins: self.dc_exclusion_bins,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSystems {
    pub count: usize,
    pub n_states: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses a config document without checking its values.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config = Self::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn pumps(&self) -> Result<Vec<PumpConfig>> {
        self.pumps
            .iter()
            .enumerate()
            .map(|(k, p)| {
                p.pump()
                    .map_err(|e| Error::config(format!("pumps[{k}]"), e.to_string()))
            })
            .collect()
    }

    /// Level system at the first pump setting.
    pub fn level_system(&self) -> Result<LevelSystem> {
        let pump = self.pumps()?[0];
        self.level_system_for(pump)
    }

    /// Level system for one pump: the configured final state, or a final
    /// state on the pump's two-photon resonance.
    pub fn level_system_for(&self, pump: PumpConfig) -> Result<LevelSystem> {
        let spec = &self.level_system;
        let epsilon_f = spec.epsilon_f.unwrap_or(spec.epsilon_i + pump.omega_p());
        LevelSystem::new(spec.epsilon_i, spec.intermediates.clone(), epsilon_f)
            .map_err(|e| Error::config("level_system", e.to_string()))
    }

    pub fn setup(&self) -> ScanSetup {
        ScanSetup {
            delta_omega: self.source.delta_omega_ev,
            convention: self.source.convention,
            entanglement_time: self.source.entanglement_time_fs,
            delta_tau: self.scan.delta_tau_fs,
            margin: self.scan.margin,
            spectrum: SpectrumOptions {
                subtract_mean: self.scan.subtract_mean,
                window: self.scan.window,
            },
            min_detuning: self.scan.min_detuning_ev,
            resonance_tol: self.scan.resonance_tol_ev,
        }
    }

    /// Checks every invariant of the inner types; errors name the field.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.pumps.is_empty() {
            return Err(Error::config("pumps", "at least one pump setting is required"));
        }
        let pumps = self.pumps()?;
        let pos = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        pos("source.delta_omega_ev", self.source.delta_omega_ev)?;
        if let Some(te) = self.source.entanglement_time_fs {
            pos("source.entanglement_time_fs", te)?;
        }
        pos("scan.delta_tau_fs", self.scan.delta_tau_fs)?;
        if !(self.scan.margin > 0.0 && self.scan.margin <= 1.0) {
            return Err(Error::config(
                "scan.margin",
                format!("must lie in (0, 1], got {}", self.scan.margin),
            ));
        }
        if !(self.scan.min_detuning_ev >= 0.0) {
            return Err(Error::config("scan.min_detuning_ev", "must be non-negative"));
        }
        pos("scan.resonance_tol_ev", self.scan.resonance_tol_ev)?;
        if let Some(b) = self.noise.counts_budget {
            pos("noise.counts_budget", b)?;
        }
        if !(self.analysis.min_prominence >= 0.0) {
            return Err(Error::config("analysis.min_prominence", "must be non-negative"));
        }
        pos("analysis.tol_bins", self.analysis.tol_bins)?;
        if !(self.analysis.dc_exclusion_bins >= 0.0) {
            return Err(Error::config("analysis.dc_exclusion_bins", "must be non-negative"));
        }

        let setup = self.setup();
        let src = setup
            .source(pumps[0])
            .map_err(|e| Error::config("source", e.to_string()))?;
        if let Some(crystal) = self.source.crystal {
            src.with_crystal(crystal)
                .map_err(|e| Error::config("source.crystal", e.to_string()))?;
        }
        let grid = setup.grid().map_err(|e| Error::config("scan", e.to_string()))?;
        let check = resolution_check(&grid, self.source.delta_omega_ev);
        if !check.resolves_bandwidth && !self.override_resolution_check {
            return Err(Error::config(
                "scan",
                format!(
                    "frequency resolution {:.6} eV is coarser than the bandwidth {:.6} eV; \
                     set override_resolution_check to run anyway",
                    check.omega_res, check.delta_omega
                ),
            ));
        }

        if self.random_systems.is_none() {
            for (k, &pump) in pumps.iter().enumerate() {
                let system = self.level_system_for(pump)?;
                detunings(&system, pump, self.scan.min_detuning_ev, self.scan.resonance_tol_ev).map_err(
                    |e| match e {
                        Error::VirtualStateViolation { index, .. } => Error::config(
                            format!("level_system.intermediates[{index}]"),
                            format!("{e} at pumps[{k}]"),
                        ),
                        other => Error::config(format!("pumps[{k}]"), other.to_string()),
                    },
                )?;
            }
        } else if let Some(r) = self.random_systems {
            if r.count == 0 || r.n_states == 0 {
                return Err(Error::config("random_systems", "count and n_states must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_PUMPS: &str = r#"{
        "schema_version": 1,
        "level_system": { "intermediates": [{ "energy": 0.86 }, { "energy": 1.67 }] },
        "pumps": [{ "wavelength_nm": 405.0 }, { "omega0_ev": 1.36 }],
        "source": { "delta_omega_ev": 0.0074 }
    }"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_json(TWO_PUMPS).unwrap();
        assert_eq!(c.scan, ScanSpec::default());
        assert_eq!(c.pumps().unwrap().len(), 2);
        assert!((c.pumps().unwrap()[1].omega0() - 1.36).abs() < 1e-15);
        assert_eq!(c.level_system().unwrap().epsilon_f(), c.pumps().unwrap()[0].omega_p());
    }

    #[test]
    fn round_trip_is_identity() {
        let c = ExperimentConfig::from_json(TWO_PUMPS).unwrap();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let c = ExperimentConfig::from_json(TWO_PUMPS).unwrap();
        let mut d = c.clone();
        d.noise.seed = 9;
        assert_ne!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::from_json("{\n  \"schema_version\": 1,\n  \"pumps\": [}").unwrap_err();
        match err {
            Error::ConfigParse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::from_json(
            &TWO_PUMPS
                .replace("\"margin\"", "\"marg\"")
                .replace("\"source\"", "\"bogus\": 1, \"source\""),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConfigParse { .. }));
    }

    #[test]
    fn rejections_name_fields() {
        let field_of = |text: &str| match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { field, .. } => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field_of(&TWO_PUMPS.replace("\"schema_version\": 1", "\"schema_version\": 2")),
            "schema_version"
        );
        assert_eq!(
            field_of(&TWO_PUMPS.replace("[{ \"energy\": 0.86 }, { \"energy\": 1.67 }]", "[]")),
            "level_system"
        );
        assert_eq!(
            field_of(&TWO_PUMPS.replace("[{ \"wavelength_nm\": 405.0 }, { \"omega0_ev\": 1.36 }]", "[]")),
            "pumps"
        );
        assert_eq!(field_of(&TWO_PUMPS.replace("405.0", "-405.0")), "pumps[0]");
        assert_eq!(
            field_of(&TWO_PUMPS.replace("{ \"energy\": 1.67 }", "{ \"energy\": 1.531 }")),
            "level_system.intermediates[1]"
        );
    }

    #[test]
    fn resolution_check_and_override() {
        let coarse = TWO_PUMPS.replace(
            "\"delta_omega_ev\": 0.0074 }",
            "\"delta_omega_ev\": 0.0074, \"convention\": \"reduced_planck\" }",
        );
        let err = ExperimentConfig::from_json(&coarse).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "scan"));
        let allowed = coarse.replace(
            "\"schema_version\": 1",
            "\"schema_version\": 1, \"override_resolution_check\": true",
        );
        assert!(ExperimentConfig::from_json(&allowed).is_ok());
    }
}
