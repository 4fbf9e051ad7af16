//! Run configuration: TOML schema, tier presets and dotted-path overrides.
//!
//! Resolution order is preset, then file, then `--set` overrides; the merged
//! table is deserialized with unknown keys rejected.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{derive_field_params, intensity_to_field, wavelength_to_omega, AtomModel, FieldParams, FockBand, PulseEnvelope, SpaceGrid};
use crate::photon::{PhotonAmplitudes, PhotonState};
use crate::propagate::{Mask, PropagationOptions, Schedule};
use crate::quadrature::{auto_alpha_quadrature, build_alpha_quadrature, AlphaQuadrature, IDENTITY_TOLERANCE};
use crate::spectra::EnergyGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    CiSmall,
    Desk,
    Paper,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::CiSmall => "ci-small",
            Tier::Desk => "desk",
            Tier::Paper => "paper",
        }
    }

    pub fn preset(self) -> Table {
        let src = match self {
            Tier::CiSmall => CI_SMALL,
            Tier::Desk => DESK,
            Tier::Paper => PAPER,
        };
        src.parse().expect("built-in preset is valid TOML")
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ci-small" => Ok(Tier::CiSmall),
            "desk" => Ok(Tier::Desk),
            "paper" => Ok(Tier::Paper),
            _ => Err(Error::Config(format!("unknown tier {s:?} (expected ci-small, desk or paper)"))),
        }
    }
}

const CI_SMALL: &str = r#"
tier = "ci-small"

[grid]
x_max = 80.0
nx = 513

[atom]
softcore_a = 2.0

[pulse]
omega_au = 0.8
intensity_wcm2 = 8.7736250e13
ramp_up_cycles = 1.0
flat_cycles = 2.0
ramp_down_cycles = 1.0

[photon]
kind = "squeezed_vacuum"
r = 2.5
phi = 0.0
alpha_re = 0.0
alpha_im = 0.0
n_fock = 0
truncation_threshold = 1e-6
band = { n_min = 0, n_max = 1000 }

[solver]
dt = 0.1
edge_threshold = 1e-6
mask = "off"
record_every = 10

[spectrum]
e_min = 0.0
e_max = 2.0
n_bins = 201
window_order = 2
n_bound_project = 8

[ensemble]
mode = "quadrature"
n_radial = 0
n_angular = 2002
adaptive_rings = true
parity_saver = true
prune_tol = 1e-12
seed = 0
n_samples = 4096
"#;

const DESK: &str = r#"
tier = "desk"

[grid]
x_max = 200.0
nx = 1001

[atom]
softcore_a = 2.0

[pulse]
wavelength_nm = 400.0
intensity_wcm2 = 5e13
ramp_up_cycles = 1.0
flat_cycles = 2.0
ramp_down_cycles = 1.0

[photon]
kind = "squeezed_vacuum"
r = 2.0
phi = 0.0
alpha_re = 0.0
alpha_im = 0.0
n_fock = 0
truncation_threshold = 1e-4
band = { n_min = 0, n_max = 210 }

[solver]
dt = 0.1
edge_threshold = 1e-3
mask = "off"
record_every = 50

[spectrum]
e_min = 0.0
e_max = 0.8
n_bins = 321
window_order = 2
n_bound_project = 8

[ensemble]
mode = "quadrature"
n_radial = 60
n_angular = 422
adaptive_rings = true
parity_saver = true
prune_tol = 1e-12
seed = 0
n_samples = 4096
"#;

const PAPER: &str = r#"
tier = "paper"

[grid]
x_max = 400.0
nx = 4001

[atom]
softcore_a = 2.0

[pulse]
wavelength_nm = 400.0
intensity_wcm2 = 1e14
ramp_up_cycles = 1.0
flat_cycles = 2.0
ramp_down_cycles = 1.0

[photon]
kind = "squeezed_vacuum"
r = 5.3
phi = 0.0
alpha_re = 0.0
alpha_im = 0.0
n_fock = 0
truncation_threshold = 1e-6
band = { n_min = 0, n_max = 120000 }

[solver]
dt = 0.05
edge_threshold = 1e-6
mask = "off"
record_every = 100

[spectrum]
e_min = 0.0
e_max = 1.5
n_bins = 601
window_order = 2
n_bound_project = 8

[ensemble]
mode = "quadrature"
n_radial = 0
n_angular = 240002
adaptive_rings = true
parity_saver = true
prune_tol = 1e-12
seed = 0
n_samples = 100000
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tier: Tier,
    pub grid: GridConfig,
    pub atom: AtomConfig,
    pub pulse: PulseConfig,
    pub photon: PhotonConfig,
    pub solver: SolverConfig,
    pub spectrum: SpectrumConfig,
    pub ensemble: EnsembleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_max: f64,
    pub nx: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub softcore_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Exactly one of `wavelength_nm` and `omega_au` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_au: Option<f64>,
    pub intensity_wcm2: f64,
    pub ramp_up_cycles: f64,
    pub flat_cycles: f64,
    pub ramp_down_cycles: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonKind {
    SqueezedVacuum,
    Coherent,
    Fock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub n_min: u64,
    pub n_max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonConfig {
    pub kind: PhotonKind,
    pub r: f64,
    pub phi: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub n_fock: u64,
    /// Largest Fock mass allowed outside the band.
    pub truncation_threshold: f64,
    pub band: BandConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Off,
    Cos8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub edge_threshold: f64,
    pub mask: MaskKind,
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub n_bins: usize,
    pub window_order: u32,
    pub n_bound_project: usize,
    /// Window half-width; twice the bin spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Quadrature,
    Mc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
    /// Radial node count; 0 grows it until the identity check passes.
    pub n_radial: usize,
    pub n_angular: usize,
    pub adaptive_rings: bool,
    pub parity_saver: bool,
    pub prune_tol: f64,
    pub seed: u64,
    pub n_samples: usize,
}

/// Merge `overlay` into `base`, recursing into tables.
pub fn deep_merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Apply one `key.path=value` override. The value is parsed as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() || path.split('.').any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override {path:?}: {key:?} is not a table"))),
        };
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Sources of one resolved configuration.
#[derive(Clone, Debug, Default)]
pub struct ConfigSources {
    pub tier: Option<Tier>,
    pub file: Option<Table>,
    pub overrides: Vec<String>,
}

impl ConfigSources {
    pub fn with_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.file = Some(
            text.parse::<Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        );
        Ok(self)
    }

    /// Tier from the flag, else from the file, else `ci-small`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file_tier = match self.file.as_ref().and_then(|f| f.get("tier")) {
            Some(Value::String(s)) => Some(s.parse::<Tier>()?),
            Some(v) => return Err(Error::Config(format!("tier must be a string, got {v}"))),
            None => None,
        };
        let tier = self.tier.or(file_tier).unwrap_or(Tier::CiSmall);
        let mut table = tier.preset();
        if let Some(f) = &self.file {
            deep_merge(&mut table, f.clone());
        }
        table.insert("tier".into(), Value::String(tier.name().into()));
        for o in &self.overrides {
            apply_override(&mut table, o)?;
        }
        RunConfig::from_table(table)
    }
}

impl RunConfig {
    pub fn from_table(table: Table) -> Result<Self> {
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tier(tier: Tier) -> Self {
        Self::from_table(tier.preset()).expect("built-in preset is valid")
    }

    /// Re-resolve with extra overrides on top of this configuration.
    pub fn with_overrides(&self, overrides: &[&str]) -> Result<Self> {
        let mut table = self.to_table();
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_table(&self) -> Table {
        match Value::try_from(self).expect("config serializes") {
            Value::Table(t) => t,
            _ => unreachable!(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pulse;
        if p.wavelength_nm.is_some() == p.omega_au.is_some() {
            return Err(Error::Config("set exactly one of pulse.wavelength_nm and pulse.omega_au".into()));
        }
        if self.photon.band.n_min > self.photon.band.n_max {
            return Err(Error::Config("photon.band.n_min exceeds n_max".into()));
        }
        if !(self.solver.dt > 0.0) {
            return Err(Error::Config("solver.dt must be > 0".into()));
        }
        if self.solver.record_every == 0 {
            return Err(Error::Config("solver.record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> Result<f64> {
        match (self.pulse.wavelength_nm, self.pulse.omega_au) {
            (Some(l), None) => wavelength_to_omega(l),
            (None, Some(w)) if w > 0.0 && w.is_finite() => Ok(w),
            (None, Some(w)) => Err(Error::Config(format!("pulse.omega_au must be > 0, got {w}"))),
            _ => Err(Error::Config("set exactly one of pulse.wavelength_nm and pulse.omega_au".into())),
        }
    }

    pub fn e0(&self) -> Result<f64> {
        intensity_to_field(self.pulse.intensity_wcm2)
    }

    pub fn atom(&self) -> Result<AtomModel> {
        AtomModel::new(self.atom.softcore_a, SpaceGrid::new(self.grid.x_max, self.grid.nx)?)
    }

    pub fn envelope(&self) -> Result<PulseEnvelope> {
        let p = &self.pulse;
        PulseEnvelope::new(p.ramp_up_cycles, p.flat_cycles, p.ramp_down_cycles, self.omega()?)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::for_pulse(&self.envelope()?, self.solver.dt, self.solver.record_every)
    }

    pub fn band(&self) -> Result<FockBand> {
        FockBand::new(self.photon.band.n_min, self.photon.band.n_max)
    }

    pub fn photon_state(&self) -> PhotonState {
        let p = &self.photon;
        match p.kind {
            PhotonKind::SqueezedVacuum => PhotonState::SqueezedVacuum { r: p.r, phi: p.phi },
            PhotonKind::Coherent => PhotonState::Coherent {
                alpha_re: p.alpha_re,
                alpha_im: p.alpha_im,
            },
            PhotonKind::Fock => PhotonState::Fock { n: p.n_fock },
        }
    }

    pub fn photon_amplitudes(&self) -> Result<PhotonAmplitudes> {
        self.photon_state().fock_amplitudes(self.band()?, self.photon.truncation_threshold)
    }

    /// Coupling fixed by matching the mean field amplitude `2 eps_V sqrt(n̄)`
    /// to the pulse peak field.
    pub fn field_params(&self) -> Result<FieldParams> {
        let (e0, omega) = (self.e0()?, self.omega()?);
        match self.photon.kind {
            PhotonKind::SqueezedVacuum => derive_field_params(e0, self.photon.r, omega),
            PhotonKind::Coherent | PhotonKind::Fock => {
                let nbar = self.photon_state().mean_photons();
                if !(nbar > 0.0) {
                    return Err(Error::Config(
                        "coupling is undefined for an empty photon state; set alpha or n_fock".into(),
                    ));
                }
                FieldParams::new(omega, e0 / (2.0 * nbar.sqrt()))
            }
        }
    }

    /// Coherent amplitude of the equivalent classical drive.
    pub fn classical_alpha(&self) -> Result<C64> {
        let p = &self.photon;
        Ok(match p.kind {
            PhotonKind::Coherent => C64::new(p.alpha_re, p.alpha_im),
            PhotonKind::SqueezedVacuum | PhotonKind::Fock => C64::new(self.photon_state().mean_photons().sqrt(), 0.0),
        })
    }

    pub fn mask(&self) -> Mask {
        match self.solver.mask {
            MaskKind::Off => Mask::Off,
            MaskKind::Cos8 => Mask::Cos8,
        }
    }

    pub fn propagation_options(&self) -> PropagationOptions {
        PropagationOptions {
            edge_threshold: self.solver.edge_threshold,
            mask: self.mask(),
        }
    }

    pub fn energy_grid(&self) -> Result<EnergyGrid> {
        let s = &self.spectrum;
        let de = (s.e_max - s.e_min) / (s.n_bins.max(2) - 1) as f64;
        EnergyGrid::with_gamma(s.e_min, s.e_max, s.n_bins, s.gamma.unwrap_or(2.0 * de), s.window_order)
    }

    /// Alpha-plane rule for the ensembles; deterministic rules are checked
    /// against the resolution of identity on the band.
    pub fn quadrature(&self) -> Result<AlphaQuadrature> {
        let e = &self.ensemble;
        let state = self.photon_state();
        match e.mode {
            EnsembleMode::Mc => AlphaQuadrature::monte_carlo(&state, e.n_samples, e.seed),
            EnsembleMode::Quadrature => {
                let band = self.band()?;
                if e.n_radial == 0 {
                    auto_alpha_quadrature(&state, band, e.n_angular, e.adaptive_rings, 100, IDENTITY_TOLERANCE)
                } else {
                    build_alpha_quadrature(&state, band, e.n_radial, e.n_angular, e.adaptive_rings)
                }
            }
        }
    }
}
