//! Convergence sweeps along one numerical axis.
//!
//! * `dt`, `nx`: classical-drive PES; deltas are normalized L1 distances
//!   between successive levels.
//! * `band`: full-quantum run on widening Fock bands; the observable is the
//!   largest edge occupation during the pulse.
//! * `quadrature`: resolution-of-identity error of the polar rule as the
//!   radial and angular node counts double together.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{convergence_order, normalized_l1};
use crate::model::{FockBand, SpaceGrid, AtomModel};
use crate::photon::PhotonState;
use crate::propagate::{ground_state, init_joint_state, propagate_classical, propagate_fullq, PropagationOptions, Schedule};
use crate::quadrature::{AlphaQuadrature, QuadratureLayout, RadialRule};
use crate::spectra::SpectrumEngine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Dt,
    Nx,
    Band,
    Quadrature,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(Axis::Dt),
            "nx" => Ok(Axis::Nx),
            "band" => Ok(Axis::Band),
            "quadrature" => Ok(Axis::Quadrature),
            _ => Err(Error::Config(format!(
                "unknown convergence axis {s:?} (expected dt, nx, band or quadrature)"
            ))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Dt => "dt",
            Axis::Nx => "nx",
            Axis::Band => "band",
            Axis::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub axis: Axis,
    /// Axis value at each level (dt, nx, n_max or n_angular).
    pub parameters: Vec<f64>,
    /// Scalar observable per level: ionization yield, edge occupation or identity error.
    pub observables: Vec<f64>,
    /// Change entering each level; `NaN` at level 0 for the difference axes.
    pub deltas: Vec<f64>,
    /// Fitted order for the halving axes.
    pub order: Option<f64>,
    pub monotone: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    /// Rows of `[parameter, observable, delta]`.
    pub fn table(&self) -> Vec<f64> {
        (0..self.parameters.len())
            .flat_map(|k| [self.parameters[k], self.observables[k], self.deltas[k]])
            .collect()
    }
}

pub const MIN_LEVELS: usize = 3;

/// Run `levels` refinements of `cfg` along `axis`; the configuration is the coarsest level.
pub fn converge(cfg: &RunConfig, axis: Axis, levels: usize) -> Result<ConvergenceReport> {
    if levels < MIN_LEVELS {
        return Err(Error::Config(format!("convergence needs at least {MIN_LEVELS} levels, got {levels}")));
    }
    let mut rep = match axis {
        Axis::Dt | Axis::Nx => classical_sweep(cfg, axis, levels)?,
        Axis::Band => band_sweep(cfg, levels)?,
        Axis::Quadrature => quadrature_sweep(cfg, levels)?,
    };
    let d: Vec<f64> = rep.deltas.iter().copied().filter(|d| !d.is_nan()).collect();
    rep.monotone = d.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
    if !rep.monotone {
        let msg = format!("{} deltas are not monotonically decreasing: {d:?}", axis.name());
        log::warn!("{msg}");
        rep.warnings.push(msg);
    }
    Ok(rep)
}

fn classical_sweep(cfg: &RunConfig, axis: Axis, levels: usize) -> Result<ConvergenceReport> {
    let env = cfg.envelope()?;
    let fp = cfg.field_params()?;
    let alpha = cfg.classical_alpha()?;
    let base = cfg.schedule()?;
    let grid = cfg.energy_grid()?;
    let mut parameters = Vec::new();
    let mut spectra: Vec<Vec<f64>> = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..levels {
        let scale = 1usize << k;
        let (atom, sched) = match axis {
            Axis::Dt => (
                cfg.atom()?,
                Schedule {
                    dt: base.dt / scale as f64,
                    n_steps: base.n_steps * scale,
                    record_every: base.record_every * scale,
                },
            ),
            _ => {
                let nx = (cfg.grid.nx - 1) * scale + 1;
                (AtomModel::new(cfg.atom.softcore_a, SpaceGrid::new(cfg.grid.x_max, nx)?)?, base)
            }
        };
        let (g, _) = ground_state(&atom)?;
        let (psi, diag) = propagate_classical(&g, alpha, &fp, &env, &sched, &atom, cfg.mask())?;
        warnings.extend(diag.warnings);
        let engine = SpectrumEngine::new(&atom, grid.clone(), cfg.spectrum.n_bound_project)?;
        spectra.push(engine.pes(&psi.psi));
        parameters.push(match axis {
            Axis::Dt => sched.dt,
            _ => atom.grid.nx() as f64,
        });
    }
    let observables = spectra.iter().map(|p| p.iter().sum()).collect();
    let mut deltas = vec![f64::NAN];
    for w in spectra.windows(2) {
        deltas.push(normalized_l1(&w[0], &w[1])?);
    }
    let order = convergence_order(&deltas[1..], 2.0);
    Ok(ConvergenceReport {
        axis,
        parameters,
        observables,
        deltas,
        order,
        monotone: true,
        warnings,
    })
}

fn band_sweep(cfg: &RunConfig, levels: usize) -> Result<ConvergenceReport> {
    let atom = cfg.atom()?;
    let (g, _) = ground_state(&atom)?;
    let (env, fp, sched) = (cfg.envelope()?, cfg.field_params()?, cfg.schedule()?);
    let state = cfg.photon_state();
    let top = cfg.band()?;
    let width = top.n_max - top.n_min;
    let opts = PropagationOptions {
        edge_threshold: f64::INFINITY,
        mask: cfg.mask(),
    };
    let mut parameters = Vec::new();
    let mut observables = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..levels {
        let n_max = top.n_min + (width * (k as u64 + 1)).div_ceil(levels as u64);
        let band = FockBand::new(top.n_min, n_max)?;
        // narrow levels truncate the state on purpose
        let amps = state.fock_amplitudes(band, 1.0)?;
        let (_, diag) = propagate_fullq(&init_joint_state(&g, &amps)?, &atom, &fp, &env, &sched, &opts)?;
        warnings.extend(diag.warnings.iter().map(|w| format!("n_max {n_max}: {w}")));
        parameters.push(n_max as f64);
        observables.push(diag.max_edge());
    }
    Ok(ConvergenceReport {
        axis: Axis::Band,
        parameters,
        deltas: observables.clone(),
        observables,
        order: None,
        monotone: true,
        warnings,
    })
}

fn quadrature_sweep(cfg: &RunConfig, levels: usize) -> Result<ConvergenceReport> {
    let band = cfg.band()?;
    let state = cfg.photon_state();
    let e = &cfg.ensemble;
    let n_radial0 = if e.n_radial == 0 { 16 } else { e.n_radial };
    let rho_max = QuadratureLayout::default_rho_max(band).max(match state {
        PhotonState::Coherent { .. } => state.support_radius(),
        _ => 0.0,
    });
    let mut parameters = Vec::new();
    let mut observables = Vec::new();
    let mut warnings = Vec::new();
    let need = 2 * band.n_max as usize + 2;
    for k in 0..levels {
        let n_angular = e.n_angular << k;
        if n_angular < need {
            warnings.push(format!("n_angular {n_angular} is below 2 n_max + 2 = {need}; angular aliasing dominates"));
        }
        let quad = AlphaQuadrature::polar(QuadratureLayout {
            n_radial: n_radial0 << k,
            n_angular,
            rho_max,
            radial_rule: RadialRule::GaussLegendre,
            adaptive_rings: e.adaptive_rings,
        })?;
        parameters.push(n_angular as f64);
        observables.push(quad.identity_report(band)?.max_error);
    }
    Ok(ConvergenceReport {
        axis: Axis::Quadrature,
        parameters,
        deltas: observables.clone(),
        observables,
        order: None,
        monotone: true,
        warnings,
    })
}
