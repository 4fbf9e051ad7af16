//! Crank–Nicolson propagation: field-free eigenstates, the electron in a
//! classical field, and the joint electron–photon state.
//!
//! The joint state lives in the interaction picture of the field mode, with
//! `H = H_A + i f(t) eps_V x (a e^{-i w t} - a† e^{i w t})`. One step is
//! Strang-split: half a step of `H_A` per Fock column, a full step of the
//! coupling per grid row at the midpoint time, half a step of `H_A`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::{AtomModel, FieldParams, FockBand, PulseEnvelope, SpaceGrid};
use crate::photon::PhotonAmplitudes;
use crate::tridiag::{matvec_constant_offdiag, solve_constant_offdiag, solve_real_unit_diag, SymTridiag, TridiagLu};

/// Default ceiling on the occupation of the outermost Fock levels.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-8;
/// Probability within the outer tenth of the box that triggers an escape warning.
pub const BOUNDARY_WARN_THRESHOLD: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectronState {
    pub grid: SpaceGrid,
    pub psi: Vec<C64>,
}

impl ElectronState {
    pub fn new(grid: SpaceGrid, psi: Vec<C64>) -> Result<Self> {
        if psi.len() != grid.nx() {
            return Err(invalid(format!(
                "wavefunction length {} does not match grid nx {}",
                psi.len(),
                grid.nx()
            )));
        }
        Ok(Self { grid, psi })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `psi(-x)`.
    pub fn mirrored(&self) -> Self {
        let mut psi = self.psi.clone();
        psi.reverse();
        Self { grid: self.grid.clone(), psi }
    }

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &Self) -> C64 {
        self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum::<C64>() * self.grid.dx()
    }
}

/// Joint amplitudes `c(x_i, n_j)`, stored column-major by Fock level:
/// `c[j * nx + i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub grid: SpaceGrid,
    pub band: FockBand,
    pub c: Vec<C64>,
    pub time: f64,
}

impl JointState {
    pub fn zeros(grid: SpaceGrid, band: FockBand) -> Self {
        let c = vec![ZERO; grid.nx() * band.count()];
        Self { grid, band, c, time: 0.0 }
    }

    pub fn column(&self, j: usize) -> &[C64] {
        let nx = self.grid.nx();
        &self.c[j * nx..(j + 1) * nx]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [C64] {
        let nx = self.grid.nx();
        &mut self.c[j * nx..(j + 1) * nx]
    }

    /// `∫dx |c(x, n)|²` for every level of the band.
    pub fn column_norms(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.c
            .chunks(self.grid.nx())
            .map(|col| col.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx)
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.column_norms().iter().sum()
    }

    /// Occupation of the outermost band levels. The lower edge only counts
    /// when `n_min > 0`; `n = 0` is a physical boundary.
    pub fn edge_occupation(&self) -> f64 {
        let norms = self.column_norms();
        let mut edge = *norms.last().unwrap();
        if self.band.n_min > 0 && norms.len() > 1 {
            edge += norms[0];
        }
        edge
    }

    /// Populations `(Pi = +1, Pi = -1)` of the combined parity
    /// `(x parity) * (-1)^n`.
    pub fn combined_parity_populations(&self) -> (f64, f64) {
        let nx = self.grid.nx();
        let dx = self.grid.dx();
        let (mut plus, mut minus) = (0.0, 0.0);
        for (j, col) in self.c.chunks(nx).enumerate() {
            let photon_even = self.band.n(j) % 2 == 0;
            let (mut even, mut odd) = (0.0, 0.0);
            for i in 0..nx {
                let a = col[i];
                let b = col[nx - 1 - i];
                even += (0.5 * (a + b)).norm_sqr();
                odd += (0.5 * (a - b)).norm_sqr();
            }
            if photon_even {
                plus += even * dx;
                minus += odd * dx;
            } else {
                plus += odd * dx;
                minus += even * dx;
            }
        }
        (plus, minus)
    }
}

/// Integration schedule covering `[0, n_steps * dt]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dt: f64,
    pub n_steps: usize,
    /// Diagnostics are recorded every this many steps (and at the last step).
    pub record_every: usize,
}

impl Schedule {
    /// Schedule whose step is the largest value `<= dt_max` that divides the
    /// pulse duration exactly.
    pub fn for_pulse(env: &PulseEnvelope, dt_max: f64, record_every: usize) -> Result<Self> {
        if !(dt_max > 0.0) || !dt_max.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt_max}")));
        }
        let duration = env.duration();
        let n_steps = (duration / dt_max).ceil().max(1.0) as usize;
        Ok(Self {
            dt: duration / n_steps as f64,
            n_steps,
            record_every: record_every.max(1),
        })
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    fn records(&self, step: usize) -> bool {
        step % self.record_every == 0 || step == self.n_steps
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mask {
    #[default]
    Off,
    /// `cos^{1/8}` absorber over the outer 15% of the box.
    Cos8,
}

impl Mask {
    pub fn profile(&self, grid: &SpaceGrid) -> Option<Vec<f64>> {
        match self {
            Mask::Off => None,
            Mask::Cos8 => {
                let x_max = grid.x_max();
                let x0 = 0.85 * x_max;
                Some(
                    grid.points()
                        .iter()
                        .map(|x| {
                            let d = x.abs() - x0;
                            if d <= 0.0 {
                                1.0
                            } else {
                                (0.5 * PI * d / (x_max - x0)).cos().max(0.0).powf(0.125)
                            }
                        })
                        .collect(),
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub edge_threshold: f64,
    pub mask: Mask,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            mask: Mask::Off,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    /// Probability in the outer tenth of the box.
    pub boundary: f64,
    /// Fock-edge occupation (joint runs only).
    pub edge: f64,
    /// Population of the combined-parity sector `Pi = -1` (joint runs only).
    pub parity_minus: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: Vec<StepRecord>,
    pub warnings: Vec<String>,
    /// True when an absorbing mask removed probability; spectra are then lossy.
    pub lossy: bool,
}

impl Diagnostics {
    pub fn max_norm_drift(&self, reference: f64) -> f64 {
        self.records.iter().map(|r| (r.norm - reference).abs()).fold(0.0, f64::max)
    }

    pub fn max_parity_minus(&self) -> f64 {
        self.records.iter().map(|r| r.parity_minus).fold(0.0, f64::max)
    }

    pub fn max_edge(&self) -> f64 {
        self.records.iter().map(|r| r.edge).fold(0.0, f64::max)
    }
}

fn boundary_mass(psi: &[C64], dx: f64) -> f64 {
    let nx = psi.len();
    let w = (nx / 10).max(1);
    (psi[..w].iter().chain(&psi[nx - w..]).map(|c| c.norm_sqr()).sum::<f64>()) * dx
}

/// Lowest eigenpair of the discretized `H_A`, normalized on the grid,
/// real and positive at the origin.
pub fn ground_state(atom: &AtomModel) -> Result<(ElectronState, f64)> {
    let mut states = bound_states(atom, 1)?;
    if states.is_empty() {
        return Err(Error::EigenSolver("no bound state below zero".into()));
    }
    let (e, psi) = states.remove(0);
    let last = psi.psi[psi.psi.len() - 1].norm();
    if last > 1e-10 {
        return Err(invalid(format!(
            "grid too small: ground state amplitude {last:.2e} at the box edge"
        )));
    }
    Ok((psi, e))
}

/// Up to `count` lowest eigenstates of `H_A` with negative energy.
pub fn bound_states(atom: &AtomModel, count: usize) -> Result<Vec<(f64, ElectronState)>> {
    let (diag, off) = atom.hamiltonian();
    let h = SymTridiag::with_constant_offdiag(diag, off);
    let n_neg = h.count_below(0.0).min(count);
    let scale = 1.0 / atom.grid.dx().sqrt();
    let mut out = Vec::with_capacity(n_neg);
    for k in 0..n_neg {
        let (e, v) = h.eigenpair(k, 1e-12, 500)?;
        let c = atom.grid.center();
        // sign fixed by the first sizable amplitude from the left of centre for odd states
        let sign = if v[c].abs() > 1e-8 {
            v[c].signum()
        } else {
            let i = (0..c).rev().find(|&i| v[i].abs() > 1e-8).unwrap_or(0);
            -v[i].signum()
        };
        let psi = v.iter().map(|x| C64::new(sign * x * scale, 0.0)).collect();
        out.push((e, ElectronState::new(atom.grid.clone(), psi)?));
    }
    Ok(out)
}

/// `E(t) = 2|alpha| eps_V sin(w t - arg alpha) f(t)`.
pub fn classical_field(t: f64, alpha: C64, fp: &FieldParams, env: &PulseEnvelope) -> f64 {
    2.0 * alpha.norm() * fp.eps_v * (fp.omega * t - alpha.arg()).sin() * env.envelope(t)
}

/// Crank–Nicolson stepper for `H_A + x E(t)`, reusable across runs on one grid.
#[derive(Clone, Debug)]
pub struct ClassicalPropagator {
    h_diag: Vec<f64>,
    h_off: f64,
    x: Vec<f64>,
    dx: f64,
    mask: Option<Vec<f64>>,
    lhs: Vec<C64>,
    rhs_diag: Vec<C64>,
    work: Vec<C64>,
    scratch: Vec<C64>,
}

impl ClassicalPropagator {
    pub fn new(atom: &AtomModel, mask: Mask) -> Self {
        let (h_diag, h_off) = atom.hamiltonian();
        let nx = h_diag.len();
        Self {
            h_diag,
            h_off,
            x: atom.grid.points(),
            dx: atom.grid.dx(),
            mask: mask.profile(&atom.grid),
            lhs: vec![ZERO; nx],
            rhs_diag: vec![ZERO; nx],
            work: vec![ZERO; nx],
            scratch: vec![ZERO; nx],
        }
    }

    /// Advance `psi` by `dt` (either sign) under a field held at `field`.
    pub fn step(&mut self, psi: &mut [C64], dt: f64, field: f64) {
        let h = 0.5 * dt;
        for i in 0..psi.len() {
            let d = self.h_diag[i] + self.x[i] * field;
            self.lhs[i] = C64::new(1.0, h * d);
            self.rhs_diag[i] = C64::new(1.0, -h * d);
        }
        matvec_constant_offdiag(C64::new(0.0, -h * self.h_off), &self.rhs_diag, psi, &mut self.work);
        // 1 + i h H has non-zero imaginary pivots for real H, so the solve cannot fail
        solve_constant_offdiag(C64::new(0.0, h * self.h_off), &self.lhs, &mut self.work, &mut self.scratch);
        psi.copy_from_slice(&self.work);
        if let Some(m) = &self.mask {
            psi.iter_mut().zip(m).for_each(|(c, m)| *c *= m);
        }
    }
}

/// Electron driven by the classical field of the coherent amplitude `alpha`.
pub fn propagate_classical(
    psi0: &ElectronState,
    alpha: C64,
    fp: &FieldParams,
    env: &PulseEnvelope,
    sched: &Schedule,
    atom: &AtomModel,
    mask: Mask,
) -> Result<(ElectronState, Diagnostics)> {
    let mut prop = ClassicalPropagator::new(atom, mask);
    let mut psi = psi0.psi.clone();
    let mut diag = Diagnostics {
        lossy: mask != Mask::Off,
        ..Default::default()
    };
    let dx = atom.grid.dx();
    let mut warned = false;
    for step in 1..=sched.n_steps {
        let t = (step - 1) as f64 * sched.dt;
        let field = classical_field(t + 0.5 * sched.dt, alpha, fp, env);
        prop.step(&mut psi, sched.dt, field);
        if sched.records(step) {
            let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx;
            if !norm.is_finite() {
                return Err(Error::NumericalBlowup { step });
            }
            let boundary = boundary_mass(&psi, prop.dx);
            if boundary > BOUNDARY_WARN_THRESHOLD && !warned && mask == Mask::Off {
                warned = true;
                diag.warnings.push(format!(
                    "wavepacket reaching the box edge at step {step}: outer probability {boundary:.2e}"
                ));
            }
            diag.records.push(StepRecord {
                step,
                time: step as f64 * sched.dt,
                norm,
                boundary,
                edge: 0.0,
                parity_minus: 0.0,
            });
        }
    }
    Ok((ElectronState::new(atom.grid.clone(), psi)?, diag))
}

/// `c(x, n) = psi_g(x) s_n`.
pub fn init_joint_state(psi_g: &ElectronState, photon: &PhotonAmplitudes) -> Result<JointState> {
    if photon.coeffs.len() != photon.band.count() {
        return Err(Error::Construction("photon amplitudes do not match their band".into()));
    }
    let mut st = JointState::zeros(psi_g.grid.clone(), photon.band);
    let nx = psi_g.grid.nx();
    for (j, s) in photon.coeffs.iter().enumerate() {
        if *s == ZERO {
            continue;
        }
        let col = &mut st.c[j * nx..(j + 1) * nx];
        col.iter_mut().zip(&psi_g.psi).for_each(|(c, p)| *c = p * s);
    }
    Ok(st)
}

/// Strang-split Crank–Nicolson stepper for the joint state.
pub struct FullQuantumPropagator {
    grid: SpaceGrid,
    band: FockBand,
    fp: FieldParams,
    env: PulseEnvelope,
    h_diag: Vec<f64>,
    h_off: f64,
    x: Vec<f64>,
    /// `sqrt(n_j + 1)` for `j < count - 1`.
    ladder: Vec<f64>,
    mask: Option<Vec<f64>>,
    lu_cache: Option<(f64, TridiagLu)>,
    rows: Vec<C64>,
}

impl FullQuantumPropagator {
    pub fn new(atom: &AtomModel, band: FockBand, fp: FieldParams, env: PulseEnvelope, mask: Mask) -> Self {
        let (h_diag, h_off) = atom.hamiltonian();
        let ladder = (0..band.count().saturating_sub(1))
            .map(|j| ((band.n(j) + 1) as f64).sqrt())
            .collect();
        Self {
            grid: atom.grid.clone(),
            band,
            fp,
            env,
            h_diag,
            h_off,
            x: atom.grid.points(),
            ladder,
            mask: mask.profile(&atom.grid),
            lu_cache: None,
            rows: Vec::new(),
        }
    }

    fn atom_lu(&mut self, tau: f64) -> &TridiagLu {
        let stale = !matches!(&self.lu_cache, Some((t, _)) if *t == tau);
        if stale {
            let diag: Vec<C64> = self.h_diag.iter().map(|d| C64::new(1.0, 0.5 * tau * d)).collect();
            let lu = TridiagLu::with_constant_offdiag(C64::new(0.0, 0.5 * tau * self.h_off), &diag)
                .expect("1 + i tau H_A/2 is never singular for real H_A");
            self.lu_cache = Some((tau, lu));
        }
        &self.lu_cache.as_ref().unwrap().1
    }

    /// Crank–Nicolson step of `H_A` by `tau` on every Fock column.
    fn atom_half(&mut self, c: &mut [C64], tau: f64) {
        let nx = self.grid.nx();
        let rhs_diag: Vec<C64> = self.h_diag.iter().map(|d| C64::new(1.0, -0.5 * tau * d)).collect();
        let rhs_off = C64::new(0.0, -0.5 * tau * self.h_off);
        let lu = self.atom_lu(tau).clone();
        c.par_chunks_mut(nx).for_each_init(
            || vec![ZERO; nx],
            |work, col| {
                if col.iter().all(|v| *v == ZERO) {
                    return;
                }
                matvec_constant_offdiag(rhs_off, &rhs_diag, col, work);
                lu.solve_in_place(work);
                col.copy_from_slice(work);
            },
        );
    }

    /// Crank–Nicolson step of the coupling at time `t_mid`, row by row in `x`.
    /// In the gauge `U = diag(e^{-i w t n})` the coupling is the real
    /// antisymmetric `s (a - a†)`, so each row is a real tridiagonal solve.
    fn interaction(&mut self, c: &mut [C64], t_mid: f64, dt: f64) {
        let f = self.env.envelope(t_mid);
        if f == 0.0 || self.fp.eps_v == 0.0 {
            return;
        }
        let nx = self.grid.nx();
        let nb = self.band.count();
        if nb < 2 {
            return;
        }
        let wt = (self.fp.omega * t_mid).rem_euclid(2.0 * PI);
        let phases: Vec<C64> = (0..nb)
            .map(|j| C64::from_polar(1.0, -(wt * self.band.n(j) as f64).rem_euclid(2.0 * PI)))
            .collect();
        let coupling = 0.5 * dt * f * self.fp.eps_v;
        let ladder = &self.ladder;
        let x = &self.x;

        self.rows.resize(nx * nb, ZERO);
        transpose(c, &mut self.rows, nb, nx);
        self.rows.par_chunks_mut(nb).enumerate().for_each_init(
            || (vec![ZERO; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]),
            |(v, sub, sup, scratch), (i, row)| {
                let s = coupling * x[i];
                if s == 0.0 {
                    return;
                }
                for j in 0..nb {
                    v[j] = row[j] * phases[j];
                }
                // B = 1 + s (a - a†)
                for j in 0..nb {
                    let mut acc = v[j];
                    if j + 1 < nb {
                        acc += v[j + 1] * (s * ladder[j]);
                    }
                    if j > 0 {
                        acc -= v[j - 1] * (s * ladder[j - 1]);
                    }
                    row[j] = acc;
                }
                // A = 1 - s (a - a†)
                for j in 0..nb - 1 {
                    sup[j] = -s * ladder[j];
                    sub[j] = s * ladder[j];
                }
                solve_real_unit_diag(&sub[..nb - 1], &sup[..nb - 1], row, scratch);
                for j in 0..nb {
                    row[j] *= phases[j].conj();
                }
            },
        );
        transpose(&self.rows, c, nx, nb);
    }

    /// One Strang step from `t` to `t + dt`; `dt` may be negative.
    pub fn step(&mut self, c: &mut [C64], t: f64, dt: f64) {
        self.atom_half(c, 0.5 * dt);
        self.interaction(c, t + 0.5 * dt, dt);
        self.atom_half(c, 0.5 * dt);
        if let Some(m) = &self.mask {
            let nx = self.grid.nx();
            c.par_chunks_mut(nx)
                .for_each(|col| col.iter_mut().zip(m).for_each(|(v, m)| *v *= m));
        }
    }
}

/// `dst[j * rows + i] = src[i * cols + j]` for a `rows x cols` source.
fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    dst.par_chunks_mut(rows).enumerate().for_each(|(j, out)| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = src[i * cols + j];
        }
    });
}

fn record_joint(state: &JointState, step: usize) -> Result<StepRecord> {
    let norms = state.column_norms();
    let norm: f64 = norms.iter().sum();
    if !norm.is_finite() {
        return Err(Error::NumericalBlowup { step });
    }
    let nx = state.grid.nx();
    let dx = state.grid.dx();
    let boundary = state.c.chunks(nx).map(|col| boundary_mass(col, dx)).sum();
    let (_, parity_minus) = state.combined_parity_populations();
    Ok(StepRecord {
        step,
        time: state.time,
        norm,
        boundary,
        edge: state.edge_occupation(),
        parity_minus,
    })
}

fn suggest_band(band: FockBand) -> (u64, u64) {
    let grow = (band.count() as u64 / 4).max(10);
    let n_min = if band.n_min > 0 { band.n_min.saturating_sub(grow) } else { 0 };
    (n_min, band.n_max + grow)
}

/// Propagate the joint state over `sched`, starting at `state.time`.
pub fn propagate_fullq(
    state: &JointState,
    atom: &AtomModel,
    fp: &FieldParams,
    env: &PulseEnvelope,
    sched: &Schedule,
    opts: &PropagationOptions,
) -> Result<(JointState, Diagnostics)> {
    let mut st = state.clone();
    let mut prop = FullQuantumPropagator::new(atom, st.band, *fp, *env, opts.mask);
    let mut diag = Diagnostics {
        lossy: opts.mask != Mask::Off,
        ..Default::default()
    };
    diag.records.push(record_joint(&st, 0)?);
    let t0 = st.time;
    let mut warned = false;
    for step in 1..=sched.n_steps {
        let t = t0 + (step - 1) as f64 * sched.dt;
        prop.step(&mut st.c, t, sched.dt);
        st.time = t0 + step as f64 * sched.dt;
        if sched.records(step) {
            let rec = record_joint(&st, step)?;
            if rec.edge > opts.edge_threshold {
                let (suggested_n_min, suggested_n_max) = suggest_band(st.band);
                return Err(Error::BandOverflow {
                    step,
                    occupation: rec.edge,
                    threshold: opts.edge_threshold,
                    suggested_n_min,
                    suggested_n_max,
                });
            }
            if rec.boundary > BOUNDARY_WARN_THRESHOLD && !warned && opts.mask == Mask::Off {
                warned = true;
                diag.warnings.push(format!(
                    "wavepacket reaching the box edge at step {step}: outer probability {:.2e}",
                    rec.boundary
                ));
            }
            diag.records.push(rec);
        }
    }
    Ok((st, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AtomModel;
    use crate::photon::{coherent_overlap_fock, PhotonState};
    use nalgebra::DMatrix;

    type M = DMatrix<C64>;

    fn atom(x_max: f64, nx: usize) -> AtomModel {
        AtomModel::new(2.0, SpaceGrid::new(x_max, nx).unwrap()).unwrap()
    }

    fn l2(a: &[C64], b: &[C64], dx: f64) -> f64 {
        (a.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * dx).sqrt()
    }

    #[test]
    fn ground_state_properties() {
        let a = atom(100.0, 1001);
        let (g, e) = ground_state(&a).unwrap();
        // dense oracle on the same grid
        let (d, off) = a.hamiltonian();
        let n = d.len();
        let h = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                d[i]
            } else if i.abs_diff(j) == 1 {
                off
            } else {
                0.0
            }
        });
        let ev = nalgebra::SymmetricEigen::new(h).eigenvalues;
        let emin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((e - emin).abs() < 1e-10, "{e} {emin}");
        assert!((e + 0.5).abs() < 0.01, "{e}");
        assert!((g.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(g.psi[a.grid.center()].re > 0.0);
        let m = g.mirrored();
        assert!(g.psi.iter().zip(&m.psi).all(|(a, b)| (a - b).norm() < 1e-10));

        let (_, e2) = ground_state(&atom(200.0, 2001)).unwrap();
        assert!((e - e2).abs() < 1e-8);
    }

    #[test]
    fn small_box_rejected() {
        assert!(ground_state(&atom(8.0, 81)).is_err());
    }

    #[test]
    fn classical_field_values() {
        let fp = FieldParams::new(0.8, 0.01).unwrap();
        let env = PulseEnvelope::new(0.0, 4.0, 0.0, 0.8).unwrap();
        assert_eq!(classical_field(0.0, C64::new(3.0, 0.0), &fp, &env), 0.0);
        let t = 0.5 * PI / 0.8;
        let v = classical_field(t, C64::from_polar(2.0, 0.5 * PI), &fp, &env);
        assert!(v.abs() < 1e-15);
    }

    /// `<alpha|H_int|alpha>/x` against the classical field, through Fock sums.
    #[test]
    fn classical_field_is_coherent_expectation() {
        use rand::{Rng, SeedableRng};
        let fp = FieldParams::new(0.3, 0.02).unwrap();
        let env = PulseEnvelope::new(1.0, 1.0, 1.0, 0.3).unwrap();
        let band = FockBand::new(0, 160).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let alpha = C64::from_polar(rng.gen_range(0.0..5.0), rng.gen_range(-PI..PI));
            let t = rng.gen_range(0.0..env.duration());
            let k: Vec<C64> = band.iter().map(|n| coherent_overlap_fock(n, alpha)).collect();
            let ph = C64::from_polar(1.0, -fp.omega * t);
            // <alpha| a |alpha> and <alpha| a† |alpha> from the Fock expansion
            let mut a_exp = ZERO;
            for n in 0..band.count() - 1 {
                a_exp += k[n].conj() * k[n + 1] * ((n + 1) as f64).sqrt();
            }
            let h = C64::new(0.0, env.envelope(t) * fp.eps_v) * (a_exp * ph - a_exp.conj() * ph.conj());
            let e = classical_field(t, alpha, &fp, &env);
            assert!(h.im.abs() < 1e-12 && (h.re - e).abs() < 1e-12, "{h} {e}");
        }
    }

    #[test]
    fn field_free_ground_state_only_picks_up_phase() {
        let a = atom(40.0, 401);
        let (g, e) = ground_state(&a).unwrap();
        let fp = FieldParams::new(0.8, 0.01).unwrap();
        let env = PulseEnvelope::new(1.0, 2.0, 1.0, 0.8).unwrap();
        let sched = Schedule::for_pulse(&env, 0.05, 50).unwrap();
        let (out, diag) = propagate_classical(&g, C64::new(0.0, 0.0), &fp, &env, &sched, &a, Mask::Off).unwrap();
        // CN propagates the discrete eigenvector with the Cayley phase
        let h = 0.5 * sched.dt * e;
        let cay = (C64::new(1.0, -h) / C64::new(1.0, h)).powu(sched.n_steps as u32);
        let want: Vec<C64> = g.psi.iter().map(|p| p * cay).collect();
        assert!(l2(&out.psi, &want, a.grid.dx()) < 1e-8);
        let ov = g.inner(&out);
        let phase = ov / ov.norm();
        let adjusted: Vec<C64> = g.psi.iter().map(|p| p * phase).collect();
        assert!(l2(&out.psi, &adjusted, a.grid.dx()) < 1e-6);
        assert!(diag.max_norm_drift(1.0) < 1e-10);
    }

    #[test]
    fn classical_alpha_mirror_symmetry() {
        let a = atom(60.0, 601);
        let (g, _) = ground_state(&a).unwrap();
        let fp = FieldParams::new(0.8, 0.02).unwrap();
        let env = PulseEnvelope::new(1.0, 1.0, 1.0, 0.8).unwrap();
        let sched = Schedule::for_pulse(&env, 0.05, 1000).unwrap();
        let alpha = C64::from_polar(3.0, 0.7);
        let (p, _) = propagate_classical(&g, alpha, &fp, &env, &sched, &a, Mask::Off).unwrap();
        let (m, _) = propagate_classical(&g, -alpha, &fp, &env, &sched, &a, Mask::Off).unwrap();
        assert!(l2(&p.mirrored().psi, &m.psi, a.grid.dx()) < 1e-10);
    }

    fn dense_tridiag(n: usize, f: impl Fn(usize, usize) -> C64) -> M {
        M::from_fn(n, n, |i, j| if i.abs_diff(j) <= 1 { f(i, j) } else { ZERO })
    }

    /// Dense assembly of the Strang step on a tiny joint grid.
    #[test]
    fn step_matches_dense_operator() {
        let a = atom(6.0, 21);
        let band = FockBand::new(3, 6).unwrap();
        let fp = FieldParams::new(0.7, 0.3).unwrap();
        let env = PulseEnvelope::new(1.0, 1.0, 1.0, 0.7).unwrap();
        let (nx, nb) = (21, 4);
        let (t, dt) = (1.3, 0.07);
        let (d, off) = a.hamiltonian();
        let x = a.grid.points();
        let i1 = C64::new(0.0, 1.0);
        let id = M::identity(nx * nb, nx * nb);

        let mut ha = M::zeros(nx * nb, nx * nb);
        for j in 0..nb {
            let blk = dense_tridiag(nx, |p, q| C64::new(if p == q { d[p] } else { off }, 0.0));
            ha.view_mut((j * nx, j * nx), (nx, nx)).copy_from(&blk);
        }
        let tm = t + 0.5 * dt;
        let g = env.envelope(tm) * fp.eps_v;
        let mut hi = M::zeros(nx * nb, nx * nb);
        for i in 0..nx {
            for j in 0..nb - 1 {
                let n = band.n(j) as f64;
                let v = i1 * g * x[i] * (n + 1.0).sqrt() * C64::from_polar(1.0, -fp.omega * tm);
                hi[(j * nx + i, (j + 1) * nx + i)] = v;
                hi[((j + 1) * nx + i, j * nx + i)] = v.conj();
            }
        }
        let cn = |h: &M, tau: f64| -> M {
            let p = &id + h * (i1 * 0.5 * tau);
            let m = &id - h * (i1 * 0.5 * tau);
            p.try_inverse().unwrap() * m
        };
        let op = cn(&ha, 0.5 * dt) * cn(&hi, dt) * cn(&ha, 0.5 * dt);

        let c0: Vec<C64> = (0..nx * nb)
            .map(|k| C64::new(((k * 37) % 11) as f64 - 5.0, ((k * 13) % 7) as f64 - 3.0))
            .collect();
        let want = &op * nalgebra::DVector::from_vec(c0.clone());
        let mut prop = FullQuantumPropagator::new(&a, band, fp, env, Mask::Off);
        let mut c = c0;
        prop.step(&mut c, t, dt);
        let err = c.iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    fn small_joint() -> (AtomModel, JointState, FieldParams, PulseEnvelope) {
        let a = atom(40.0, 201);
        let (g, _) = ground_state(&a).unwrap();
        let band = FockBand::new(0, 60).unwrap();
        let amps = PhotonState::SqueezedVacuum { r: 0.8, phi: 0.0 }
            .fock_amplitudes(band, 1e-10)
            .unwrap();
        let st = init_joint_state(&g, &amps).unwrap();
        let fp = FieldParams::new(0.8, 0.05).unwrap();
        let env = PulseEnvelope::new(1.0, 1.0, 1.0, 0.8).unwrap();
        (a, st, fp, env)
    }

    #[test]
    fn joint_norm_and_parity_conserved() {
        let (a, st, fp, env) = small_joint();
        let n0 = st.norm_sqr();
        let sched = Schedule::for_pulse(&env, 0.05, 10).unwrap();
        let (out, diag) = propagate_fullq(&st, &a, &fp, &env, &sched, &PropagationOptions::default()).unwrap();
        assert!(diag.max_norm_drift(n0) < 1e-10);
        assert!(diag.max_parity_minus() < 1e-12);
        let p = out.column_norms();
        assert!(p.iter().skip(1).step_by(2).sum::<f64>() > 1e-8, "odd photon numbers populated");
    }

    #[test]
    fn product_state_init() {
        let (_, st, _, _) = small_joint();
        for j in (1..st.band.count()).step_by(2) {
            assert!(st.column(j).iter().all(|c| *c == ZERO));
        }
        let a = atom(40.0, 201);
        let (g, _) = ground_state(&a).unwrap();
        let v = init_joint_state(&g, &PhotonState::vacuum().fock_amplitudes(FockBand::new(0, 5).unwrap(), 1e-10).unwrap()).unwrap();
        assert!((1..6).all(|j| v.column(j).iter().all(|c| *c == ZERO)));
        assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_photon_distribution_is_static() {
        let (a, st, _, env) = small_joint();
        let fp = FieldParams::new(0.8, 0.0).unwrap();
        let sched = Schedule::for_pulse(&env, 0.1, 1000).unwrap();
        let (out, _) = propagate_fullq(&st, &a, &fp, &env, &sched, &PropagationOptions::default()).unwrap();
        for (p, q) in st.column_norms().iter().zip(out.column_norms()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal() {
        let (a, st, fp, env) = small_joint();
        let mut prop = FullQuantumPropagator::new(&a, st.band, fp, env, Mask::Off);
        let sched = Schedule::for_pulse(&env, 0.05, 1000).unwrap();
        let mut c = st.c.clone();
        for k in 0..sched.n_steps {
            prop.step(&mut c, k as f64 * sched.dt, sched.dt);
        }
        for k in (1..=sched.n_steps).rev() {
            prop.step(&mut c, k as f64 * sched.dt, -sched.dt);
        }
        assert!(l2(&c, &st.c, a.grid.dx()) < 1e-6);
    }

    #[test]
    fn strang_is_second_order() {
        let (a, st, _, env) = small_joint();
        let fp = FieldParams::new(0.8, 0.04).unwrap();
        let run = |dt: f64| {
            let sched = Schedule::for_pulse(&env, dt, 100000).unwrap();
            propagate_fullq(&st, &a, &fp, &env, &sched, &PropagationOptions::default()).unwrap().0.c
        };
        let dts = [0.1, 0.05, 0.025];
        let reference = run(0.00625);
        let errs: Vec<f64> = dts.iter().map(|&dt| l2(&run(dt), &reference, a.grid.dx())).collect();
        let slope = crate::metrics::fit_slope(
            &dts.iter().map(|d| d.ln()).collect::<Vec<_>>(),
            &errs.iter().map(|e| e.ln()).collect::<Vec<_>>(),
        );
        assert!((1.8..=2.2).contains(&slope), "{slope} {errs:?}");
    }

    #[test]
    fn band_overflow_names_widening() {
        let (a, _, _, env) = small_joint();
        let (g, _) = ground_state(&a).unwrap();
        let band = FockBand::new(0, 4).unwrap();
        let amps = PhotonState::Coherent { alpha_re: 0.5, alpha_im: 0.0 }
            .fock_amplitudes(band, 1e-3)
            .unwrap();
        let st = init_joint_state(&g, &amps).unwrap();
        let fp = FieldParams::new(0.8, 0.3).unwrap();
        let sched = Schedule::for_pulse(&env, 0.1, 1).unwrap();
        match propagate_fullq(&st, &a, &fp, &env, &sched, &PropagationOptions::default()) {
            Err(Error::BandOverflow { suggested_n_max, .. }) => assert!(suggested_n_max > 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_covers_pulse() {
        let env = PulseEnvelope::one_two_one(0.8).unwrap();
        let s = Schedule::for_pulse(&env, 0.05, 10).unwrap();
        assert!(s.dt <= 0.05 && (s.duration() - env.duration()).abs() < 1e-9);
        assert!(Schedule::for_pulse(&env, 0.0, 1).is_err());
    }
}
