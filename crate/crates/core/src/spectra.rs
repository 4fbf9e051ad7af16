//! Energy-resolved observables: window-operator photoelectron spectra,
//! joint electron–photon spectra, photon-number distributions and the
//! Fock-resolved ponderomotive energy.
//!
//! The order-`m` window `W(E) = g^{2m} / ((H - E)^{2m} + g^{2m})` is applied
//! through linear solves. For `m = 2`,
//! `(H - E)^4 + g^4 = |(H - E - z)(H - E + z)|²` with `z = g e^{i pi/4}`,
//! so `<psi|W|psi> = g^4 ||(H - E + z)^{-1} (H - E - z)^{-1} psi||²`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::model::{AtomModel, FieldParams, FockBand};
use crate::propagate::{bound_states, ElectronState, JointState};
use crate::tridiag::TridiagLu;

/// Default number of bound states removed before windowing.
pub const DEFAULT_BOUND_PROJECT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub e_min: f64,
    pub e_max: f64,
    pub n_bins: usize,
    /// Window half-width.
    pub gamma: f64,
    pub order: u32,
}

impl EnergyGrid {
    /// Grid with the default half-width `2 dE`, at which the normalized
    /// order-2 windows tile the axis to ~1e-4.
    pub fn new(e_min: f64, e_max: f64, n_bins: usize) -> Result<Self> {
        let de = if n_bins > 1 { (e_max - e_min) / (n_bins - 1) as f64 } else { 1.0 };
        Self::with_gamma(e_min, e_max, n_bins, 2.0 * de, 2)
    }

    pub fn with_gamma(e_min: f64, e_max: f64, n_bins: usize, gamma: f64, order: u32) -> Result<Self> {
        if n_bins < 2 || !(e_max > e_min) {
            return Err(invalid(format!(
                "energy grid needs e_max > e_min and >= 2 bins, got [{e_min}, {e_max}] x {n_bins}"
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("window half-width gamma must be > 0"));
        }
        if !(order == 1 || order == 2) {
            return Err(invalid(format!("window order must be 1 or 2, got {order}")));
        }
        Ok(Self {
            e_min,
            e_max,
            n_bins,
            gamma,
            order,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.e_max - self.e_min) / (self.n_bins - 1) as f64
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.e_min + k as f64 * self.spacing()
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.energy(k)).collect()
    }

    /// Factor turning raw window values into per-bin probabilities:
    /// `dE / ∫W dE` with `∫W dE = g pi / (m sin(pi / 2m))`.
    pub fn tiling_factor(&self) -> f64 {
        let m = self.order as f64;
        let area = self.gamma * PI / (m * (PI / (2.0 * m)).sin());
        self.spacing() / area
    }

    pub fn index_of(&self, e: f64) -> Option<usize> {
        let k = ((e - self.e_min) / self.spacing()).round();
        (k >= 0.0 && (k as usize) < self.n_bins).then_some(k as usize)
    }
}

/// Pre-factored resolvents for every bin of an energy grid.
pub struct WindowBank {
    grid: EnergyGrid,
    /// `(H - E_k - z)` and, for order 2, `(H - E_k + z)` per bin.
    factors: Vec<(TridiagLu, Option<TridiagLu>)>,
    scale: f64,
    dx: f64,
}

impl WindowBank {
    pub fn new(atom: &AtomModel, grid: EnergyGrid) -> Result<Self> {
        let (diag, off) = atom.hamiltonian();
        let off = C64::new(off, 0.0);
        let z = match grid.order {
            1 => C64::new(0.0, grid.gamma),
            _ => C64::from_polar(grid.gamma, 0.25 * PI),
        };
        let factors = (0..grid.n_bins)
            .into_par_iter()
            .map(|k| {
                let e = grid.energy(k);
                let shifted = |w: C64| -> Option<TridiagLu> {
                    let d: Vec<C64> = diag.iter().map(|h| C64::new(h - e, 0.0) + w).collect();
                    TridiagLu::with_constant_offdiag(off, &d)
                };
                let first = shifted(-z)?;
                let second = if grid.order == 2 { Some(shifted(z)?) } else { None };
                Some((first, second))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("singular window resolvent"))?;
        Ok(Self {
            grid,
            factors,
            scale: grid.gamma.powi(2 * grid.order as i32),
            dx: atom.grid.dx(),
        })
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    /// Raw `<psi|W_k|psi>` (peak value 1 on an eigenstate at `E_k`).
    pub fn raw(&self, psi: &[C64], k: usize, work: &mut Vec<C64>) -> f64 {
        work.clear();
        work.extend_from_slice(psi);
        let (a, b) = &self.factors[k];
        a.solve_in_place(work);
        if let Some(b) = b {
            b.solve_in_place(work);
        }
        self.scale * work.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dx
    }

    /// Tiling-normalized spectrum of an (unnormalized) amplitude vector.
    pub fn spectrum(&self, psi: &[C64]) -> Vec<f64> {
        let c = self.grid.tiling_factor();
        let mut work = Vec::with_capacity(psi.len());
        if psi.iter().all(|v| v.norm_sqr() == 0.0) {
            return vec![0.0; self.grid.n_bins];
        }
        (0..self.grid.n_bins).map(|k| c * self.raw(psi, k, &mut work)).collect()
    }
}

/// `<psi|W|psi>` for a single energy, without a prepared bank.
pub fn window_probability(psi: &ElectronState, atom: &AtomModel, e_k: f64, gamma: f64, m: u32) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid("window half-width gamma must be > 0"));
    }
    let g = EnergyGrid::with_gamma(e_k, e_k + 1.0, 2, gamma, m)?;
    let bank = WindowBank::new(atom, g)?;
    Ok(bank.raw(&psi.psi, 0, &mut Vec::new()))
}

/// Orthogonal projector onto the complement of the lowest bound states.
#[derive(Clone, Debug)]
pub struct BoundProjector {
    states: Vec<Vec<f64>>,
    dx: f64,
}

impl BoundProjector {
    pub fn new(atom: &AtomModel, count: usize) -> Result<Self> {
        let states = bound_states(atom, count)?
            .into_iter()
            .map(|(_, s)| s.psi.iter().map(|c| c.re).collect())
            .collect();
        Ok(Self {
            states,
            dx: atom.grid.dx(),
        })
    }

    pub fn none(atom: &AtomModel) -> Self {
        Self {
            states: Vec::new(),
            dx: atom.grid.dx(),
        }
    }

    pub fn count(&self) -> usize {
        self.states.len()
    }

    pub fn apply(&self, psi: &mut [C64]) {
        for b in &self.states {
            let ov: C64 = b.iter().zip(psi.iter()).map(|(b, p)| p * b).sum::<C64>() * self.dx;
            psi.iter_mut().zip(b).for_each(|(p, b)| *p -= ov * b);
        }
    }

    /// Total probability in the projected-out bound states.
    pub fn bound_population(&self, psi: &[C64]) -> f64 {
        self.states
            .iter()
            .map(|b| (b.iter().zip(psi).map(|(b, p)| p * b).sum::<C64>() * self.dx).norm_sqr())
            .sum()
    }
}

/// Spectrum machinery shared by every column or node of one run.
pub struct SpectrumEngine {
    pub bank: WindowBank,
    pub projector: BoundProjector,
}

impl SpectrumEngine {
    pub fn new(atom: &AtomModel, grid: EnergyGrid, project_bound: usize) -> Result<Self> {
        if project_bound > 0 && grid.e_min < 0.0 {
            return Err(invalid(format!(
                "bound-state projection needs e_min >= 0, got {}",
                grid.e_min
            )));
        }
        let projector = if project_bound > 0 {
            BoundProjector::new(atom, project_bound)?
        } else {
            BoundProjector::none(atom)
        };
        Ok(Self {
            bank: WindowBank::new(atom, grid)?,
            projector,
        })
    }

    pub fn grid(&self) -> &EnergyGrid {
        self.bank.grid()
    }

    pub fn pes(&self, psi: &[C64]) -> Vec<f64> {
        if self.projector.count() == 0 {
            return self.bank.spectrum(psi);
        }
        let mut v = psi.to_vec();
        self.projector.apply(&mut v);
        self.bank.spectrum(&v)
    }

    /// `P(E, n)` as a row-major `[n_bins][band.count()]` matrix.
    pub fn joint(&self, state: &JointState) -> Vec<f64> {
        let nx = state.grid.nx();
        let columns: Vec<Vec<f64>> = state.c.par_chunks(nx).map(|col| self.pes(col)).collect();
        to_row_major(&columns, self.grid().n_bins)
    }
}

/// `[n][E]` columns into a row-major `[E][n]` matrix.
pub fn to_row_major(columns: &[Vec<f64>], n_bins: usize) -> Vec<f64> {
    let nb = columns.len();
    let mut out = vec![0.0; n_bins * nb];
    for (j, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            out[k * nb + j] = *v;
        }
    }
    out
}

/// Photoelectron spectrum with the lowest `project_bound` bound states removed.
pub fn pes(psi: &ElectronState, atom: &AtomModel, grid: EnergyGrid, project_bound: usize) -> Result<Vec<f64>> {
    Ok(SpectrumEngine::new(atom, grid, project_bound)?.pes(&psi.psi))
}

pub fn joint_spectrum(state: &JointState, atom: &AtomModel, grid: EnergyGrid, project_bound: usize) -> Result<Vec<f64>> {
    Ok(SpectrumEngine::new(atom, grid, project_bound)?.joint(state))
}

/// Sum over `n` of a row-major `[E][n]` matrix.
pub fn marginal_over_n(joint: &[f64], n_cols: usize) -> Vec<f64> {
    joint.chunks(n_cols).map(|row| row.iter().sum()).collect()
}

/// Column `j` (fixed photon number) of a row-major `[E][n]` matrix.
pub fn fock_column(joint: &[f64], n_cols: usize, j: usize) -> Vec<f64> {
    joint.chunks(n_cols).map(|row| row[j]).collect()
}

pub fn photon_distribution(state: &JointState) -> Vec<f64> {
    state.column_norms()
}

/// `U_p^(n) = eps_V² (2n + 1) / (2 w²)`.
pub fn up_shift(n: f64, fp: &FieldParams) -> f64 {
    fp.eps_v * fp.eps_v * (2.0 * n + 1.0) / (2.0 * fp.omega * fp.omega)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffLines {
    pub n: Vec<f64>,
    pub two_up: Vec<f64>,
    pub ten_up: Vec<f64>,
}

pub fn cutoff_lines(fp: &FieldParams, band: FockBand) -> CutoffLines {
    let n: Vec<f64> = band.iter().map(|n| n as f64).collect();
    CutoffLines {
        two_up: n.iter().map(|&n| 2.0 * up_shift(n, fp)).collect(),
        ten_up: n.iter().map(|&n| 10.0 * up_shift(n, fp)).collect(),
        n,
    }
}

/// Peak energy of each Fock column inside `[e_lo, e_hi]`, refined by a
/// parabola through the three highest bins. Columns with no weight in the
/// window give `None`.
pub fn ridge_peaks(joint: &[f64], grid: &EnergyGrid, n_cols: usize, e_lo: f64, e_hi: f64) -> Vec<Option<f64>> {
    let lo = grid.index_of(e_lo.max(grid.e_min)).unwrap_or(0);
    let hi = grid.index_of(e_hi.min(grid.e_max)).unwrap_or(grid.n_bins - 1);
    (0..n_cols)
        .map(|j| {
            let col = fock_column(joint, n_cols, j);
            let (k, v) = (lo..=hi).map(|k| (k, col[k])).max_by(|a, b| a.1.total_cmp(&b.1))?;
            if !(v > 0.0) {
                return None;
            }
            let e = grid.energy(k);
            if k == 0 || k + 1 >= grid.n_bins {
                return Some(e);
            }
            let (a, b, c) = (col[k - 1], col[k], col[k + 1]);
            let den = a - 2.0 * b + c;
            let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            Some(e + shift.clamp(-0.5, 0.5) * grid.spacing())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    /// Columns lighter than this fraction of the heaviest column of the same
    /// parity end the tracking.
    pub min_mass_fraction: f64,
    /// Ridges anchored below this energy are dropped (threshold-distorted).
    pub min_energy: f64,
    /// Half-width of the peak search around the previous column's peak.
    pub search_half_width: f64,
    /// Anchor peaks below this fraction of the reference column maximum are ignored.
    pub min_peak_fraction: f64,
    pub min_points: usize,
}

impl RidgeOptions {
    /// Defaults scaled to the photon energy `omega`.
    pub fn for_omega(omega: f64) -> Self {
        Self {
            min_mass_fraction: 0.3,
            min_energy: 0.5 * omega,
            search_half_width: 0.2 * omega,
            min_peak_fraction: 0.05,
            min_points: 4,
        }
    }
}

/// One ATI ridge followed across Fock columns of a single parity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub parity: u64,
    pub n: Vec<f64>,
    pub energy: Vec<f64>,
    pub slope: f64,
}

/// Follow the peaks of `P(E, n)` from the heaviest column of each photon
/// parity outward in steps of two, and fit `E_peak(n)` per ridge.
/// Even and odd columns carry interleaved combs and are tracked separately.
pub fn track_ridges(joint: &[f64], grid: &EnergyGrid, band: FockBand, opts: &RidgeOptions) -> Vec<RidgeFit> {
    let nb = band.count();
    let columns: Vec<Vec<f64>> = (0..nb).map(|j| fock_column(joint, nb, j)).collect();
    let mass: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let half = (opts.search_half_width / grid.spacing()).round().max(1.0) as usize;
    let mut fits = Vec::new();
    for parity in 0..2u64 {
        let js: Vec<usize> = (0..nb).filter(|&j| band.n(j) % 2 == parity).collect();
        let Some(&j_ref) = js.iter().max_by(|a, b| mass[**a].total_cmp(&mass[**b])) else {
            continue;
        };
        if !(mass[j_ref] > 0.0) {
            continue;
        }
        let cut = opts.min_mass_fraction * mass[j_ref];
        let reference = &columns[j_ref];
        let top = reference.iter().cloned().fold(0.0, f64::max);
        let mut anchors: Vec<f64> = Vec::new();
        for k in 1..grid.n_bins - 1 {
            let v = reference[k];
            if v > reference[k - 1] && v >= reference[k + 1] && v >= opts.min_peak_fraction * top {
                let Some(e) = refine_peak(reference, grid, k) else { continue };
                if e >= opts.min_energy && !anchors.iter().any(|a| (a - e).abs() < grid.spacing()) {
                    anchors.push(e);
                }
            }
        }
        for e0 in anchors {
            let mut pts = vec![(band.n(j_ref) as f64, e0)];
            for dir in [1isize, -1] {
                let mut cur = e0;
                let mut j = j_ref as isize + 2 * dir;
                while j >= 0 && (j as usize) < nb && mass[j as usize] >= cut {
                    let Some(e) = windowed_peak(&columns[j as usize], grid, cur, half) else { break };
                    pts.push((band.n(j as usize) as f64, e));
                    cur = e;
                    j += 2 * dir;
                }
            }
            if pts.len() < opts.min_points {
                continue;
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (n, energy): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let slope = crate::metrics::fit_slope(&n, &energy);
            fits.push(RidgeFit { parity, n, energy, slope });
        }
    }
    fits
}

/// Median slope over tracked ridges.
pub fn ridge_slope(fits: &[RidgeFit]) -> Option<f64> {
    if fits.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// Parabolic refinement of a local maximum at bin `k`.
fn refine_peak(col: &[f64], grid: &EnergyGrid, k: usize) -> Option<f64> {
    if k == 0 || k + 1 >= col.len() {
        return None;
    }
    let (a, b, c) = (col[k - 1], col[k], col[k + 1]);
    let den = a - 2.0 * b + c;
    let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Some(grid.energy(k) + shift.clamp(-0.5, 0.5) * grid.spacing())
}

/// Interior maximum within `half` bins of `center`; `None` when the
/// maximum sits on the window edge (no peak inside).
fn windowed_peak(col: &[f64], grid: &EnergyGrid, center: f64, half: usize) -> Option<f64> {
    let k0 = ((center - grid.e_min) / grid.spacing()).round() as isize;
    let lo = (k0 - half as isize).max(1) as usize;
    let hi = ((k0 + half as isize) as usize).min(col.len() - 2);
    if lo >= hi {
        return None;
    }
    let k = (lo..=hi).max_by(|a, b| col[*a].total_cmp(&col[*b]))?;
    if k == lo || k == hi || !(col[k] > 0.0) {
        return None;
    }
    refine_peak(col, grid, k)
}

/// Assembled spectra of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub method: String,
    pub grid: EnergyGrid,
    pub pes: Vec<f64>,
    /// Row-major `[n_bins][band.count()]`.
    pub joint: Option<Vec<f64>>,
    pub photon_dist: Option<Vec<f64>>,
    pub band: Option<FockBand>,
}
