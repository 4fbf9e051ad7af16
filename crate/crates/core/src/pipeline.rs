//! One entry point per command-line operation. Each returns a self-describing
//! container holding the resolved configuration and run diagnostics.

use num_complex::Complex64 as C64;

use crate::config::RunConfig;
use crate::container::Container;
use crate::converge::{converge, Axis};
use crate::ensemble::{
    check_angular_resolution, qrep_joint, qrep_photon_dist, qrep_total_pes, rrep_joint_spectrum, rrep_photon_dist,
    run_ensemble, EnsembleRun, EnsembleSetup, Storage,
};
use crate::error::{Error, Result};
use crate::metrics::{distance, Metric};
use crate::model::FockBand;
use crate::propagate::{bound_states, ground_state, init_joint_state, propagate_classical, propagate_fullq, Diagnostics};
use crate::spectra::{marginal_over_n, photon_distribution, SpectrumEngine};

fn container(kind: &str, cfg: &RunConfig) -> Container {
    Container::new(kind).with_config(cfg.to_json())
}

fn photon_numbers(band: FockBand) -> Vec<f64> {
    band.iter().map(|n| n as f64).collect()
}

fn push_records(c: &mut Container, diag: &Diagnostics) -> Result<()> {
    let r = &diag.records;
    c.push_f64("time", r.iter().map(|r| r.time).collect())?;
    c.push_f64("norm", r.iter().map(|r| r.norm).collect())?;
    c.push_f64("boundary", r.iter().map(|r| r.boundary).collect())?;
    c.diagnostic("warnings", &diag.warnings);
    c.diagnostic("lossy", diag.lossy);
    Ok(())
}

fn engine(cfg: &RunConfig, atom: &crate::model::AtomModel) -> Result<SpectrumEngine> {
    SpectrumEngine::new(atom, cfg.energy_grid()?, cfg.spectrum.n_bound_project)
}

/// Ground state and the lowest bound levels.
pub fn ground_state_op(cfg: &RunConfig) -> Result<Container> {
    let atom = cfg.atom()?;
    let (g, e_g) = ground_state(&atom)?;
    let levels = bound_states(&atom, cfg.spectrum.n_bound_project.max(1))?;
    let mut c = container("ground-state", cfg);
    c.push_f64("x", atom.grid.points())?;
    c.push_c128("psi", &[g.psi.len()], g.psi)?;
    c.push_f64("bound_energies", levels.iter().map(|(e, _)| *e).collect())?;
    c.diagnostic("ground_energy", e_g);
    Ok(c)
}

/// Full-quantum joint propagation.
pub fn run_full(cfg: &RunConfig) -> Result<Container> {
    let atom = cfg.atom()?;
    let (g, e_g) = ground_state(&atom)?;
    let amps = cfg.photon_amplitudes()?;
    let band = amps.band;
    let start = init_joint_state(&g, &amps)?;
    let n0 = start.norm_sqr();
    let (out, diag) = propagate_fullq(
        &start,
        &atom,
        &cfg.field_params()?,
        &cfg.envelope()?,
        &cfg.schedule()?,
        &cfg.propagation_options(),
    )?;
    let eng = engine(cfg, &atom)?;
    let joint = eng.joint(&out);
    let grid = eng.grid();
    let mut c = container("run-full", cfg);
    c.push_f64("energy", grid.energies())?;
    c.push_f64("n", photon_numbers(band))?;
    c.push_f64("pes", marginal_over_n(&joint, band.count()))?;
    c.push_f64_2d("joint", grid.n_bins, band.count(), joint)?;
    c.push_f64("photon_dist", photon_distribution(&out))?;
    c.push_f64("photon_dist_initial", amps.probabilities())?;
    c.push_f64("parity_minus", diag.records.iter().map(|r| r.parity_minus).collect())?;
    c.push_f64("edge", diag.records.iter().map(|r| r.edge).collect())?;
    push_records(&mut c, &diag)?;
    c.diagnostic("ground_energy", e_g);
    c.diagnostic("initial_norm", n0);
    c.diagnostic("truncation_mass", amps.truncation_mass);
    c.diagnostic("max_norm_drift", diag.max_norm_drift(n0));
    c.diagnostic("max_parity_minus", diag.max_parity_minus());
    c.diagnostic("max_edge", diag.max_edge());
    Ok(c)
}

fn ensemble(cfg: &RunConfig, storage: Storage, with_pes: bool) -> Result<(EnsembleRun, SpectrumEngine, FockBand)> {
    let atom = cfg.atom()?;
    let (g, _) = ground_state(&atom)?;
    let band = cfg.band()?;
    let quad = cfg.quadrature()?;
    let eng = engine(cfg, &atom)?;
    let e = &cfg.ensemble;
    let setup = EnsembleSetup {
        atom: &atom,
        psi0: &g,
        photon: cfg.photon_state(),
        fp: cfg.field_params()?,
        env: cfg.envelope()?,
        sched: cfg.schedule()?,
        mask: cfg.mask(),
        prune_tol: e.prune_tol,
        parity_saver: e.parity_saver,
        storage,
        spectrum: with_pes.then_some(&eng),
        allow_partial: false,
    };
    let run = run_ensemble(&setup, &quad)?;
    Ok((run, eng, band))
}

fn ensemble_diagnostics(c: &mut Container, run: &EnsembleRun) {
    c.diagnostic("nodes", run.len());
    c.diagnostic("propagations", run.propagations);
    c.diagnostic("warnings", &run.warnings);
}

/// Incoherent (Husimi-weighted) ensemble.
pub fn run_qrep(cfg: &RunConfig) -> Result<Container> {
    let (run, eng, band) = ensemble(cfg, Storage::PesOnly, true)?;
    let grid = eng.grid();
    let mut c = container("run-qrep", cfg);
    c.push_f64("energy", grid.energies())?;
    c.push_f64("n", photon_numbers(band))?;
    c.push_f64("pes", qrep_total_pes(&run)?)?;
    c.push_f64_2d("joint", grid.n_bins, band.count(), qrep_joint(&run, band)?)?;
    c.push_f64("photon_dist", qrep_photon_dist(&cfg.photon_state(), &run.quadrature, band))?;
    ensemble_diagnostics(&mut c, &run);
    Ok(c)
}

/// Coherent ensemble reconstruction of the joint state.
pub fn run_rrep(cfg: &RunConfig) -> Result<Container> {
    let quad = cfg.quadrature()?;
    let band = cfg.band()?;
    check_angular_resolution(&quad, band)?;
    let (run, eng, band) = ensemble(cfg, Storage::Wavefunctions, false)?;
    let atom = cfg.atom()?;
    let joint = rrep_joint_spectrum(&run, &atom, &eng, band)?;
    let dist = rrep_photon_dist(&run, &atom, band)?;
    let grid = eng.grid();
    let mut c = container("run-rrep", cfg);
    c.push_f64("energy", grid.energies())?;
    c.push_f64("n", photon_numbers(band))?;
    c.push_f64("pes", marginal_over_n(&joint, band.count()))?;
    c.push_f64_2d("joint", grid.n_bins, band.count(), joint)?;
    c.diagnostic("norm", dist.iter().sum::<f64>());
    c.push_f64("photon_dist", dist)?;
    ensemble_diagnostics(&mut c, &run);
    Ok(c)
}

/// Photoelectron spectrum under the equivalent classical drive.
pub fn spectrum(cfg: &RunConfig) -> Result<Container> {
    let atom = cfg.atom()?;
    let (g, _) = ground_state(&atom)?;
    let alpha = cfg.classical_alpha()?;
    let fp = cfg.field_params()?;
    let (psi, diag) = propagate_classical(&g, alpha, &fp, &cfg.envelope()?, &cfg.schedule()?, &atom, cfg.mask())?;
    let eng = engine(cfg, &atom)?;
    let mut c = container("spectrum", cfg);
    c.push_f64("energy", eng.grid().energies())?;
    c.push_f64("pes", eng.pes(&psi.psi))?;
    push_records(&mut c, &diag)?;
    c.diagnostic("alpha", [alpha.re, alpha.im]);
    c.diagnostic("eps_v", fp.eps_v);
    Ok(c)
}

/// Exact photon statistics of the input state and their Husimi-smeared counterpart.
pub fn photon_dist(cfg: &RunConfig) -> Result<Container> {
    let amps = cfg.photon_amplitudes()?;
    let band = amps.band;
    let quad = cfg.quadrature()?;
    let mut c = container("photon-dist", cfg);
    c.push_f64("n", photon_numbers(band))?;
    c.push_f64("p_exact", amps.probabilities())?;
    c.push_f64("p_q", qrep_photon_dist(&cfg.photon_state(), &quad, band))?;
    c.diagnostic("mean_photons", cfg.photon_state().mean_photons());
    c.diagnostic("truncation_mass", amps.truncation_mass);
    Ok(c)
}

/// Distance between the arrays called `name` in two containers.
pub fn compare(a: &Container, b: &Container, name: &str, metric: Metric) -> Result<f64> {
    let (ea, eb) = (a.get(name), b.get(name));
    let (ea, eb) = match (ea, eb) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Comparison(format!("array {name:?} missing from one of the containers"))),
    };
    if ea.shape != eb.shape {
        return Err(Error::Comparison(format!(
            "shape mismatch for {name:?}: {:?} vs {:?}",
            ea.shape, eb.shape
        )));
    }
    let flat = |c: &Container| -> Result<Vec<f64>> {
        match c.f64_array(name) {
            Ok(v) => Ok(v.to_vec()),
            Err(_) => Ok(c.c128_array(name)?.iter().flat_map(|z| [z.re, z.im]).collect()),
        }
    };
    distance(metric, &flat(a)?, &flat(b)?)
}

/// Build the configured alpha-plane rule and certify it on the band.
pub fn quadrature_check(cfg: &RunConfig) -> Result<Container> {
    let band = cfg.band()?;
    let quad = cfg.quadrature()?;
    let mut c = container("quadrature-check", cfg);
    let nodes = &quad.nodes;
    c.push_c128("alpha", &[nodes.len()], nodes.iter().map(|n| n.alpha).collect::<Vec<C64>>())?;
    c.push_f64("weight", nodes.iter().map(|n| n.weight).collect())?;
    if quad.is_deterministic() {
        let rep = quad.identity_report(band)?;
        c.diagnostic("identity_error", rep.max_error);
        c.diagnostic("worst_mn", [rep.worst_m, rep.worst_n]);
        c.diagnostic("rings", quad.rings().len());
    }
    c.diagnostic("nodes", quad.len());
    Ok(c)
}

pub fn converge_op(cfg: &RunConfig, axis: Axis, levels: usize) -> Result<Container> {
    let rep = converge(cfg, axis, levels)?;
    let mut c = container("converge", cfg);
    c.push_f64_2d("report", levels, 3, rep.table())?;
    c.diagnostic("axis", axis);
    c.diagnostic("order", rep.order);
    c.diagnostic("monotone", rep.monotone);
    c.diagnostic("warnings", &rep.warnings);
    Ok(c)
}
