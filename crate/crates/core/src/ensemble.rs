//! Ensembles of classical-field propagations over a coherent-state
//! quadrature, and the two ways of recombining them:
//!
//! * incoherent (`qrep_*`): every node weighted by its Husimi density;
//! * coherent (`rrep_*`): `c(x, n) = Σ_j (w_j/pi) <n|alpha_j><alpha_j|phi> psi_j(x)`,
//!   which keeps the electron–photon correlations.
//!
//! All reductions run over nodes in index order, so results do not depend
//! on scheduling or on the worker count.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::{AtomModel, FieldParams, FockBand, PulseEnvelope};
use crate::photon::{coherent_fock_column, CoherentOverlap, PhotonState};
use crate::propagate::{propagate_classical, ElectronState, JointState, Mask, Schedule};
use crate::quadrature::AlphaQuadrature;
use crate::spectra::{to_row_major, SpectrumEngine};

/// Nodes whose overlap with the photon state is below this are skipped.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Keep every final wavefunction (needed for the coherent sums).
    #[default]
    Wavefunctions,
    /// Keep per-node spectra only.
    PesOnly,
}

pub struct EnsembleSetup<'a> {
    pub atom: &'a AtomModel,
    pub psi0: &'a ElectronState,
    pub photon: PhotonState,
    pub fp: FieldParams,
    pub env: PulseEnvelope,
    pub sched: Schedule,
    pub mask: Mask,
    pub prune_tol: f64,
    /// Obtain the node at `-alpha` by reflecting the one at `alpha`.
    pub parity_saver: bool,
    pub storage: Storage,
    /// Record per-node spectra with this engine.
    pub spectrum: Option<&'a SpectrumEngine>,
    /// Keep going after node failures and mark the run partial.
    pub allow_partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeFinal {
    /// Negligible weight; contributes nothing to any sum.
    Skipped,
    Failed(String),
    Own(Vec<C64>),
    /// Mirror image `psi(-x)` of the referenced node.
    MirrorOf(usize),
    /// Propagated, wavefunction discarded.
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub quadrature: AlphaQuadrature,
    /// `<alpha_j|phi>`.
    pub overlaps: Vec<C64>,
    pub finals: Vec<NodeFinal>,
    /// Per-node spectra when a spectrum engine was supplied.
    pub pes: Option<Vec<Option<Vec<f64>>>>,
    pub propagations: usize,
    pub warnings: Vec<String>,
}

impl EnsembleRun {
    pub fn len(&self) -> usize {
        self.finals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.finals.is_empty()
    }

    pub fn failed_nodes(&self) -> Vec<usize> {
        self.finals
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f, NodeFinal::Failed(_)))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failed_nodes().is_empty()
    }

    /// Weight `(w_j/pi) |<alpha_j|phi>|²` of node `j` in incoherent sums.
    pub fn q_weight(&self, j: usize) -> f64 {
        self.quadrature.nodes[j].weight / PI * self.overlaps[j].norm_sqr()
    }

    pub fn psi(&self, j: usize) -> Option<Cow<'_, [C64]>> {
        match &self.finals[j] {
            NodeFinal::Own(v) => Some(Cow::Borrowed(v)),
            NodeFinal::MirrorOf(k) => match &self.finals[*k] {
                NodeFinal::Own(v) => Some(Cow::Owned(v.iter().rev().copied().collect())),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn node_pes(&self, j: usize) -> Option<&[f64]> {
        self.pes.as_ref()?.get(j)?.as_deref()
    }

    fn contributing(&self) -> impl Iterator<Item = usize> + '_ {
        self.finals
            .iter()
            .enumerate()
            .filter(|(_, f)| !matches!(f, NodeFinal::Skipped | NodeFinal::Failed(_)))
            .map(|(j, _)| j)
    }

    fn require_complete(&self) -> Result<()> {
        let missing = self.failed_nodes().len()
            + (0..self.len())
                .filter(|&j| !matches!(self.finals[j], NodeFinal::Skipped) && self.psi(j).is_none())
                .filter(|&j| !matches!(self.finals[j], NodeFinal::Failed(_)))
                .count();
        if missing > 0 {
            return Err(Error::CoherentSumIncomplete { missing });
        }
        Ok(())
    }
}

pub fn run_ensemble(setup: &EnsembleSetup, quadrature: &AlphaQuadrature) -> Result<EnsembleRun> {
    let order: Vec<usize> = (0..quadrature.len()).collect();
    run_ensemble_ordered(setup, quadrature, &order)
}

/// As [`run_ensemble`], dispatching propagations in the given node order.
pub fn run_ensemble_ordered(setup: &EnsembleSetup, quadrature: &AlphaQuadrature, order: &[usize]) -> Result<EnsembleRun> {
    let n = quadrature.len();
    if order.len() != n {
        return Err(invalid("node order must be a permutation of the quadrature"));
    }
    if !(setup.prune_tol >= 0.0) {
        return Err(invalid("prune tolerance must be non-negative"));
    }
    let overlaps: Vec<C64> = quadrature
        .nodes
        .iter()
        .map(|nd| setup.photon.coherent_overlap(nd.alpha))
        .collect();
    let active: Vec<bool> = overlaps.iter().map(|o| o.norm() >= setup.prune_tol).collect();

    // representative of each mirror pair: the lower index
    let mirror: Vec<Option<usize>> = (0..n)
        .map(|j| {
            if !setup.parity_saver || !active[j] {
                return None;
            }
            let k = quadrature.mirror_of(j)?;
            (k < j && active[k]).then_some(k)
        })
        .collect();

    let todo: Vec<usize> = order.iter().copied().filter(|&j| active[j] && mirror[j].is_none()).collect();
    let keep_psi = setup.storage == Storage::Wavefunctions;
    let results: Vec<(usize, std::result::Result<(Option<Vec<C64>>, Option<Vec<f64>>, Vec<String>), String>)> = todo
        .par_iter()
        .map(|&j| {
            let alpha = quadrature.nodes[j].alpha;
            let out = propagate_classical(setup.psi0, alpha, &setup.fp, &setup.env, &setup.sched, setup.atom, setup.mask)
                .map(|(st, diag)| {
                    let pes = setup.spectrum.map(|e| e.pes(&st.psi));
                    let warnings = diag.warnings.into_iter().map(|w| format!("node {j}: {w}")).collect();
                    (keep_psi.then_some(st.psi), pes, warnings)
                })
                .map_err(|e| e.to_string());
            (j, out)
        })
        .collect();

    let mut finals = vec![NodeFinal::Skipped; n];
    let mut pes: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut node_warnings: Vec<Vec<String>> = vec![Vec::new(); n];
    for (j, r) in results {
        match r {
            Ok((psi, p, w)) => {
                finals[j] = psi.map(NodeFinal::Own).unwrap_or(NodeFinal::Dropped);
                pes[j] = p;
                node_warnings[j] = w;
            }
            Err(e) => finals[j] = NodeFinal::Failed(e),
        }
    }
    let propagations = todo.len();
    for j in 0..n {
        if let Some(k) = mirror[j] {
            finals[j] = match &finals[k] {
                NodeFinal::Failed(e) => NodeFinal::Failed(e.clone()),
                NodeFinal::Own(_) => NodeFinal::MirrorOf(k),
                other => other.clone(),
            };
            // a symmetric atom gives the same spectrum for psi(-x)
            pes[j] = pes[k].clone();
        }
    }

    let failed: Vec<usize> = (0..n).filter(|&j| matches!(finals[j], NodeFinal::Failed(_))).collect();
    if !failed.is_empty() && !setup.allow_partial {
        let first = match &finals[failed[0]] {
            NodeFinal::Failed(e) => e.clone(),
            _ => unreachable!(),
        };
        return Err(Error::EnsembleFailed { failed, first });
    }
    let mut warnings: Vec<String> = node_warnings.into_iter().flatten().collect();
    if !failed.is_empty() {
        warnings.push(format!("partial run: {} node(s) failed", failed.len()));
    }
    Ok(EnsembleRun {
        quadrature: quadrature.clone(),
        overlaps,
        finals,
        pes: setup.spectrum.map(|_| pes),
        propagations,
        warnings,
    })
}

/// Photon-number window where `|<n|alpha>|` is non-negligible, clipped to the band.
fn fock_support(alpha: C64, band: FockBand) -> (usize, usize) {
    let rho = alpha.norm();
    let width = 10.0 * rho + 40.0;
    let lo = (rho * rho - width).max(band.n_min as f64).min(band.n_max as f64) as u64;
    let hi = (rho * rho + width).min(band.n_max as f64).max(band.n_min as f64) as u64;
    (band.index(lo).unwrap(), band.index(hi).unwrap())
}

fn node_pes_checked(run: &EnsembleRun, j: usize) -> Result<&[f64]> {
    run.node_pes(j)
        .ok_or_else(|| invalid("ensemble was run without per-node spectra"))
}

/// Incoherent photoelectron spectrum `Σ_j (w_j/pi)|<alpha_j|phi>|² P(E; alpha_j)`.
/// Failed nodes are left out and the result is renormalized by the
/// captured weight.
pub fn qrep_total_pes(run: &EnsembleRun) -> Result<Vec<f64>> {
    let nodes: Vec<usize> = run.contributing().collect();
    let n_bins = match nodes.first() {
        Some(&j) => node_pes_checked(run, j)?.len(),
        None => return Err(invalid("ensemble has no contributing nodes")),
    };
    let mut out = vec![0.0; n_bins];
    for &j in &nodes {
        let q = run.q_weight(j);
        for (o, p) in out.iter_mut().zip(node_pes_checked(run, j)?) {
            *o += q * p;
        }
    }
    if !run.is_complete() {
        let all: f64 = (0..run.len())
            .filter(|&j| !matches!(run.finals[j], NodeFinal::Skipped))
            .map(|j| run.q_weight(j))
            .sum();
        let kept: f64 = nodes.iter().map(|&j| run.q_weight(j)).sum();
        out.iter_mut().for_each(|v| *v *= all / kept);
    }
    Ok(out)
}

/// `P_Q(E, n) = Σ_j (w_j/pi)|<alpha_j|phi>|² |<n|alpha_j>|² P(E; alpha_j)`,
/// row-major `[E][n]`.
pub fn qrep_joint(run: &EnsembleRun, band: FockBand) -> Result<Vec<f64>> {
    diagonal_joint(run, band, |_| 1.0)
}

fn diagonal_joint(run: &EnsembleRun, band: FockBand, node_norm: impl Fn(usize) -> f64 + Sync) -> Result<Vec<f64>> {
    if !run.is_complete() {
        return Err(Error::CoherentSumIncomplete {
            missing: run.failed_nodes().len(),
        });
    }
    let nodes: Vec<usize> = run.contributing().collect();
    let n_bins = match nodes.first() {
        Some(&j) => node_pes_checked(run, j)?.len(),
        None => return Err(invalid("ensemble has no contributing nodes")),
    };
    for &j in &nodes {
        node_pes_checked(run, j)?;
    }
    let nb = band.count();
    let per_node: Vec<(usize, usize, f64, Vec<f64>)> = nodes
        .par_iter()
        .map(|&j| {
            let alpha = run.quadrature.nodes[j].alpha;
            let (lo, hi) = fock_support(alpha, band);
            let col = coherent_fock_column(alpha, band);
            let probs = col[lo..=hi].iter().map(|c| c.norm_sqr()).collect();
            (lo, hi, run.q_weight(j) * node_norm(j), probs)
        })
        .collect();
    let columns: Vec<Vec<f64>> = (0..nb)
        .into_par_iter()
        .map(|n| {
            let mut col = vec![0.0; n_bins];
            for (idx, &j) in nodes.iter().enumerate() {
                let (lo, hi, q, ref probs) = per_node[idx];
                if n < lo || n > hi {
                    continue;
                }
                let wgt = q * probs[n - lo];
                if wgt == 0.0 {
                    continue;
                }
                for (c, p) in col.iter_mut().zip(run.node_pes(j).unwrap()) {
                    *c += wgt * p;
                }
            }
            col
        })
        .collect();
    Ok(to_row_major(&columns, n_bins))
}

/// `P_Q(n) = Σ_j (w_j/pi)|<alpha_j|phi>|² |<n|alpha_j>|²`; touches no electron state.
pub fn qrep_photon_dist(state: &PhotonState, quadrature: &AlphaQuadrature, band: FockBand) -> Vec<f64> {
    let mut out = vec![0.0; band.count()];
    for nd in &quadrature.nodes {
        let q = nd.weight / PI * state.coherent_overlap(nd.alpha).norm_sqr();
        if q == 0.0 {
            continue;
        }
        for (o, c) in out.iter_mut().zip(coherent_fock_column(nd.alpha, band)) {
            *o += q * c.norm_sqr();
        }
    }
    out
}

/// Coefficients `(w_j/pi) <n|alpha_j><alpha_j|phi>` over each node's Fock support.
struct CoherentWeights {
    nodes: Vec<usize>,
    ranges: Vec<(usize, usize)>,
    coeffs: Vec<Vec<C64>>,
}

impl CoherentWeights {
    fn new(run: &EnsembleRun, band: FockBand) -> Result<Self> {
        run.require_complete()?;
        let nodes: Vec<usize> = run.contributing().collect();
        let (ranges, coeffs) = nodes
            .par_iter()
            .map(|&j| {
                let nd = run.quadrature.nodes[j];
                let (lo, hi) = fock_support(nd.alpha, band);
                let pref = nd.weight / PI * run.overlaps[j];
                let col = coherent_fock_column(nd.alpha, band);
                ((lo, hi), col[lo..=hi].iter().map(|k| k * pref).collect::<Vec<C64>>())
            })
            .unzip();
        Ok(Self { nodes, ranges, coeffs })
    }

    /// `c_R(., n_j)` for band index `n`.
    fn column(&self, run: &EnsembleRun, n: usize, nx: usize) -> Vec<C64> {
        let mut col = vec![C64::new(0.0, 0.0); nx];
        for (idx, &j) in self.nodes.iter().enumerate() {
            let (lo, hi) = self.ranges[idx];
            if n < lo || n > hi {
                continue;
            }
            let w = self.coeffs[idx][n - lo];
            if w.norm_sqr() == 0.0 {
                continue;
            }
            let psi = run.psi(j).expect("complete run");
            col.iter_mut().zip(psi.iter()).for_each(|(c, p)| *c += w * p);
        }
        col
    }
}

fn grid_of(run: &EnsembleRun, atom: &AtomModel) -> Result<usize> {
    let nx = atom.grid.nx();
    if let Some(j) = run.contributing().next() {
        if run.psi(j).map(|p| p.len()) != Some(nx) {
            return Err(invalid("ensemble wavefunctions do not match the atom grid"));
        }
    }
    Ok(nx)
}

/// Coherent reconstruction of the joint state on `grid x band`.
pub fn rrep_joint_state(run: &EnsembleRun, atom: &AtomModel, band: FockBand, time: f64) -> Result<JointState> {
    let nx = grid_of(run, atom)?;
    let cw = CoherentWeights::new(run, band)?;
    let cols: Vec<Vec<C64>> = (0..band.count()).into_par_iter().map(|n| cw.column(run, n, nx)).collect();
    let mut st = JointState::zeros(atom.grid.clone(), band);
    st.time = time;
    for (n, col) in cols.into_iter().enumerate() {
        st.column_mut(n).copy_from_slice(&col);
    }
    Ok(st)
}

/// `P_R(n) = ∫dx |c_R(x, n)|²`, one column at a time.
pub fn rrep_photon_dist(run: &EnsembleRun, atom: &AtomModel, band: FockBand) -> Result<Vec<f64>> {
    let nx = grid_of(run, atom)?;
    let dx = atom.grid.dx();
    let cw = CoherentWeights::new(run, band)?;
    Ok((0..band.count())
        .into_par_iter()
        .map(|n| cw.column(run, n, nx).iter().map(|c| c.norm_sqr()).sum::<f64>() * dx)
        .collect())
}

/// Joint spectrum of the coherent reconstruction, row-major `[E][n]`.
pub fn rrep_joint_spectrum(run: &EnsembleRun, atom: &AtomModel, engine: &SpectrumEngine, band: FockBand) -> Result<Vec<f64>> {
    let nx = grid_of(run, atom)?;
    let cw = CoherentWeights::new(run, band)?;
    let cols: Vec<Vec<f64>> = (0..band.count())
        .into_par_iter()
        .map(|n| engine.pes(&cw.column(run, n, nx)))
        .collect();
    Ok(to_row_major(&cols, engine.grid().n_bins))
}

/// The coherent sums with every cross term between distinct nodes dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTruncation {
    pub photon_dist: Vec<f64>,
    pub joint: Option<Vec<f64>>,
}

/// `Σ_j (w_j/pi)|<alpha_j|phi>|² |<n|alpha_j>|² ||psi_j||²` (and the joint
/// analogue with `P(E; alpha_j)`).
pub fn diagonal_truncation(run: &EnsembleRun, atom: &AtomModel, band: FockBand) -> Result<DiagonalTruncation> {
    run.require_complete()?;
    let dx = atom.grid.dx();
    let norms: Vec<f64> = (0..run.len())
        .map(|j| {
            run.psi(j)
                .map(|p| p.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx)
                .unwrap_or(0.0)
        })
        .collect();
    let mut photon_dist = vec![0.0; band.count()];
    for j in run.contributing() {
        let alpha = run.quadrature.nodes[j].alpha;
        let q = run.q_weight(j) * norms[j];
        for (o, c) in photon_dist.iter_mut().zip(coherent_fock_column(alpha, band)) {
            *o += q * c.norm_sqr();
        }
    }
    let joint = if run.pes.is_some() {
        Some(diagonal_joint(run, band, |j| norms[j])?)
    } else {
        None
    };
    Ok(DiagonalTruncation { photon_dist, joint })
}

/// Enforce the angular resolution needed by coherent sums on `band`.
pub fn check_angular_resolution(quadrature: &AlphaQuadrature, band: FockBand) -> Result<()> {
    if let Some(layout) = quadrature.layout() {
        let need = 2 * band.n_max as usize + 2;
        if layout.n_angular < need {
            return Err(invalid(format!(
                "n_angular = {} is below 2 n_max + 2 = {need}",
                layout.n_angular
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpaceGrid;
    use crate::propagate::{ground_state, init_joint_state};
    use crate::quadrature::auto_alpha_quadrature;

    fn quad(photon: &PhotonState, band: FockBand, n_angular: usize, adaptive: bool) -> AlphaQuadrature {
        auto_alpha_quadrature(photon, band, n_angular, adaptive, 8, 1e-8).unwrap()
    }
    use crate::spectra::EnergyGrid;

    struct Fixture {
        atom: AtomModel,
        psi0: ElectronState,
        fp: FieldParams,
        env: PulseEnvelope,
        sched: Schedule,
    }

    fn fixture(eps_v: f64) -> Fixture {
        let atom = AtomModel::new(2.0, SpaceGrid::new(40.0, 201).unwrap()).unwrap();
        let (psi0, _) = ground_state(&atom).unwrap();
        let fp = FieldParams::new(0.8, eps_v).unwrap();
        let env = PulseEnvelope::new(1.0, 1.0, 1.0, 0.8).unwrap();
        let sched = Schedule::for_pulse(&env, 0.1, 1000).unwrap();
        Fixture { atom, psi0, fp, env, sched }
    }

    fn setup<'a>(f: &'a Fixture, photon: PhotonState, engine: Option<&'a SpectrumEngine>) -> EnsembleSetup<'a> {
        EnsembleSetup {
            atom: &f.atom,
            psi0: &f.psi0,
            photon,
            fp: f.fp,
            env: f.env,
            sched: f.sched,
            mask: Mask::Off,
            prune_tol: DEFAULT_PRUNE_TOL,
            parity_saver: true,
            storage: Storage::Wavefunctions,
            spectrum: engine,
            allow_partial: false,
        }
    }

    #[test]
    fn single_node_is_one_classical_run() {
        let f = fixture(0.05);
        let engine = SpectrumEngine::new(&f.atom, EnergyGrid::new(0.0, 2.0, 41).unwrap(), 4).unwrap();
        let alpha = C64::new(1.2, 0.4);
        let q = AlphaQuadrature {
            kind: crate::quadrature::QuadratureKind::MonteCarlo { seed: 0, samples: 1 },
            nodes: vec![crate::quadrature::AlphaNode { alpha, weight: 1.0 }],
        };
        let photon = PhotonState::Coherent { alpha_re: 1.2, alpha_im: 0.4 };
        let run = run_ensemble(&setup(&f, photon, Some(&engine)), &q).unwrap();
        let (direct, _) = propagate_classical(&f.psi0, alpha, &f.fp, &f.env, &f.sched, &f.atom, Mask::Off).unwrap();
        assert_eq!(run.psi(0).unwrap().as_ref(), direct.psi.as_slice());
        assert_eq!(run.node_pes(0).unwrap(), engine.pes(&direct.psi).as_slice());
    }

    #[test]
    fn mirror_nodes_reflect_and_share_spectra() {
        let f = fixture(0.05);
        let band = FockBand::new(0, 16).unwrap();
        let photon = PhotonState::SqueezedVacuum { r: 0.5, phi: 0.0 };
        let q = quad(&photon, band, 34, true);
        let engine = SpectrumEngine::new(&f.atom, EnergyGrid::new(0.0, 2.0, 41).unwrap(), 4).unwrap();
        let saver = run_ensemble(&setup(&f, photon, Some(&engine)), &q).unwrap();
        let mut s = setup(&f, photon, Some(&engine));
        s.parity_saver = false;
        let full = run_ensemble(&s, &q).unwrap();
        assert!(saver.propagations * 2 <= full.propagations + 2);
        for j in 0..q.len() {
            if let (Some(a), Some(b)) = (saver.psi(j), full.psi(j)) {
                let d = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                assert!(d < 1e-10);
                let pa = saver.node_pes(j).unwrap();
                let pb = full.node_pes(j).unwrap();
                assert!(pa.iter().zip(pb).all(|(x, y)| (x - y).abs() < 1e-8));
            }
        }
    }

    #[test]
    fn node_order_does_not_change_results() {
        let f = fixture(0.05);
        let band = FockBand::new(0, 10).unwrap();
        let photon = PhotonState::SqueezedVacuum { r: 0.4, phi: 0.0 };
        let q = quad(&photon, band, 22, true);
        let engine = SpectrumEngine::new(&f.atom, EnergyGrid::new(0.0, 2.0, 21).unwrap(), 4).unwrap();
        let s = setup(&f, photon, Some(&engine));
        let a = run_ensemble(&s, &q).unwrap();
        let rev: Vec<usize> = (0..q.len()).rev().collect();
        let b = run_ensemble_ordered(&s, &q, &rev).unwrap();
        assert_eq!(a, b);
        let pa = qrep_total_pes(&a).unwrap();
        let pb = qrep_total_pes(&b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn zero_coupling_rrep_returns_product_state() {
        let f = fixture(0.0);
        let band = FockBand::new(0, 16).unwrap();
        let photon = PhotonState::SqueezedVacuum { r: 0.5, phi: 0.3 };
        let q = quad(&photon, band, 34, false);
        let run = run_ensemble(&setup(&f, photon, None), &q).unwrap();
        let rec = rrep_joint_state(&run, &f.atom, band, f.sched.duration()).unwrap();
        // field-free evolution only multiplies psi_g by a phase common to all nodes
        let phase = {
            let psi = run.psi(0).unwrap();
            let c = f.atom.grid.center();
            psi[c] / f.psi0.psi[c]
        };
        let amps = photon.fock_amplitudes(band, 1e-6).unwrap();
        let mut want = init_joint_state(&f.psi0, &amps).unwrap();
        want.c.iter_mut().for_each(|c| *c *= phase);
        let err = rec.c.iter().zip(&want.c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let pr = rrep_photon_dist(&run, &f.atom, band).unwrap();
        for (p, s) in pr.iter().zip(amps.probabilities()) {
            assert!((p - s).abs() < 1e-8);
        }
    }

    #[test]
    fn vacuum_joint_profile_is_geometric() {
        let f = fixture(0.05);
        let band = FockBand::new(0, 40).unwrap();
        let photon = PhotonState::vacuum();
        let q = quad(&photon, band, 82, true);
        let engine = SpectrumEngine::new(&f.atom, EnergyGrid::new(0.0, 2.0, 41).unwrap(), 4).unwrap();
        let run = run_ensemble(&setup(&f, photon, Some(&engine)), &q).unwrap();
        let joint = qrep_joint(&run, band).unwrap();
        let total = qrep_total_pes(&run).unwrap();
        let nb = band.count();
        for k in 0..41 {
            let row = &joint[k * nb..(k + 1) * nb];
            let s: f64 = row.iter().sum();
            assert!((s - total[k]).abs() <= 1e-10 * total[k].max(1e-300) + 1e-18);
        }
        let pq = qrep_photon_dist(&photon, &q, band);
        for (n, p) in pq.iter().take(10).enumerate() {
            assert!((p - 0.5f64.powi(n as i32 + 1)).abs() < 1e-8);
        }
        let d = diagonal_truncation(&run, &f.atom, band).unwrap();
        for (a, b) in d.photon_dist.iter().zip(&pq) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in d.joint.unwrap().iter().zip(&joint) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1e-6));
        }
    }

    #[test]
    fn bsv_rrep_keeps_parity_and_mixes_photon_numbers() {
        let f = fixture(0.03);
        let band = FockBand::new(0, 30).unwrap();
        let photon = PhotonState::SqueezedVacuum { r: 0.6, phi: 0.0 };
        let q = quad(&photon, band, 62, true);
        let run = run_ensemble(&setup(&f, photon, None), &q).unwrap();
        let st = rrep_joint_state(&run, &f.atom, band, 0.0).unwrap();
        let (plus, minus) = st.combined_parity_populations();
        assert!(minus < 1e-6 * plus, "{minus} {plus}");
        assert!((plus - 1.0).abs() < 0.02, "{plus}");
        let p = rrep_photon_dist(&run, &f.atom, band).unwrap();
        let direct = st.column_norms();
        assert!(p.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(p.iter().skip(1).step_by(2).sum::<f64>() > 0.0);
        let pq = qrep_photon_dist(&photon, &q, band);
        assert!(pq[1] > 0.01);
    }

    #[test]
    fn partial_runs_block_coherent_sums() {
        let f = fixture(0.05);
        let band = FockBand::new(0, 6).unwrap();
        let photon = PhotonState::vacuum();
        let q = quad(&photon, band, 14, false);
        let mut run = run_ensemble(&setup(&f, photon, None), &q).unwrap();
        run.finals[3] = NodeFinal::Failed("injected".into());
        match rrep_photon_dist(&run, &f.atom, band) {
            Err(Error::CoherentSumIncomplete { missing }) => assert!(missing >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn angular_rule_enforced() {
        let band = FockBand::new(0, 20).unwrap();
        let q = quad(&PhotonState::vacuum(), band, 40, false);
        assert!(check_angular_resolution(&q, band).is_err());
        let q = quad(&PhotonState::vacuum(), band, 42, false);
        assert!(check_angular_resolution(&q, band).is_ok());
    }
}
