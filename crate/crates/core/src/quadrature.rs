//! Discretization of `∫ d²alpha` over the coherent-state plane.
//!
//! The deterministic rule is a polar product: Gauss–Legendre radii on
//! `[0, rho_max]` times uniform (periodic trapezoid) angles on each ring.
//! Node weights carry the area element, so `Σ_j w_j g(alpha_j) ≈ ∫ d²alpha g`;
//! callers divide by `pi` for the `d²alpha/pi` measure.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::FockBand;
use crate::photon::{coherent_fock_column, CoherentOverlap, PhotonState};

/// Tolerance of the resolution-of-identity gate.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialRule {
    GaussLegendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureLayout {
    pub n_radial: usize,
    /// Angular node count on the outermost rings (even).
    pub n_angular: usize,
    pub rho_max: f64,
    pub radial_rule: RadialRule,
    /// Shrink inner rings to `2⌈(rho + 6)²⌉ + 2` angles: inside radius `rho`
    /// only Fock components up to about `(rho + 6)²` carry weight.
    pub adaptive_rings: bool,
}

impl QuadratureLayout {
    pub fn default_rho_max(band: FockBand) -> f64 {
        (band.n_max as f64).sqrt() + 6.0
    }

    pub fn ring_size(&self, rho: f64) -> usize {
        if !self.adaptive_rings {
            return self.n_angular;
        }
        let need = 2 * ((rho + 6.0) * (rho + 6.0)).ceil() as usize + 2;
        need.min(self.n_angular)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub rho: f64,
    /// Radial Gauss–Legendre weight times `rho`.
    pub radial_weight: f64,
    pub n_angular: usize,
    /// Index of this ring's first node in `AlphaQuadrature::nodes`.
    pub first_node: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaNode {
    pub alpha: C64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureKind {
    Polar { layout: QuadratureLayout, rings: Vec<Ring> },
    MonteCarlo { seed: u64, samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaQuadrature {
    pub kind: QuadratureKind,
    pub nodes: Vec<AlphaNode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub max_error: f64,
    pub worst_m: u64,
    pub worst_n: u64,
}

impl AlphaQuadrature {
    pub fn polar(layout: QuadratureLayout) -> Result<Self> {
        if layout.n_radial < 2 {
            return Err(invalid(format!("n_radial must be >= 2, got {}", layout.n_radial)));
        }
        if layout.n_angular < 2 || layout.n_angular % 2 != 0 {
            return Err(invalid(format!(
                "n_angular must be even and >= 2, got {}",
                layout.n_angular
            )));
        }
        if !(layout.rho_max > 0.0) {
            return Err(invalid("rho_max must be positive"));
        }
        let (gx, gw) = gauss_legendre(layout.n_radial);
        let half = 0.5 * layout.rho_max;
        let mut rings = Vec::with_capacity(layout.n_radial);
        let mut nodes = Vec::new();
        for (x, w) in gx.iter().zip(&gw) {
            let rho = half * (x + 1.0);
            let radial_weight = half * w * rho;
            let n_ang = layout.ring_size(rho);
            let first_node = nodes.len();
            let dtheta = 2.0 * PI / n_ang as f64;
            for k in 0..n_ang {
                nodes.push(AlphaNode {
                    alpha: C64::from_polar(rho, k as f64 * dtheta),
                    weight: radial_weight * dtheta,
                });
            }
            rings.push(Ring {
                rho,
                radial_weight,
                n_angular: n_ang,
                first_node,
            });
        }
        Ok(Self {
            kind: QuadratureKind::Polar { layout, rings },
            nodes,
        })
    }

    /// Seeded Monte Carlo sample of the Husimi density of `state`; weights
    /// are set so that `Σ_j w_j |<alpha_j|phi>|²/pi g(alpha_j)` is the sample mean of `g`.
    pub fn monte_carlo(state: &PhotonState, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(invalid("Monte Carlo sample count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut nodes = Vec::with_capacity(samples);
        for _ in 0..samples {
            let alpha = match *state {
                PhotonState::SqueezedVacuum { r, phi } => {
                    let t = r.tanh();
                    let su = (0.5 / (1.0 - t)).sqrt();
                    let sv = (0.5 / (1.0 + t)).sqrt();
                    let beta = C64::new(su * unit.sample(&mut rng), sv * unit.sample(&mut rng));
                    C64::from_polar(1.0, 0.5 * phi) * beta
                }
                PhotonState::Coherent { alpha_re, alpha_im } => C64::new(
                    alpha_re + unit.sample(&mut rng) * 0.5f64.sqrt(),
                    alpha_im + unit.sample(&mut rng) * 0.5f64.sqrt(),
                ),
                PhotonState::Fock { n } => {
                    let rho2 = Gamma::new(n as f64 + 1.0, 1.0).unwrap().sample(&mut rng);
                    let theta = Uniform::new(0.0, 2.0 * PI).sample(&mut rng);
                    C64::from_polar(rho2.sqrt(), theta)
                }
            };
            let q = state.coherent_overlap(alpha).norm_sqr();
            nodes.push(AlphaNode {
                alpha,
                weight: PI / (samples as f64 * q),
            });
        }
        Ok(Self {
            kind: QuadratureKind::MonteCarlo { seed, samples },
            nodes,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, QuadratureKind::Polar { .. })
    }

    pub fn layout(&self) -> Option<&QuadratureLayout> {
        match &self.kind {
            QuadratureKind::Polar { layout, .. } => Some(layout),
            QuadratureKind::MonteCarlo { .. } => None,
        }
    }

    pub fn rings(&self) -> &[Ring] {
        match &self.kind {
            QuadratureKind::Polar { rings, .. } => rings,
            QuadratureKind::MonteCarlo { .. } => &[],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node at `-alpha` when it exists (polar rules with even rings).
    pub fn mirror_of(&self, j: usize) -> Option<usize> {
        let ring = self.rings().iter().rev().find(|r| r.first_node <= j)?;
        let k = j - ring.first_node;
        if k >= ring.n_angular {
            return None;
        }
        Some(ring.first_node + (k + ring.n_angular / 2) % ring.n_angular)
    }

    /// Worst deviation of `Σ_j w_j <m|alpha_j><alpha_j|n>/pi` from `delta_mn`
    /// over the band. Uses the ring structure: the angular trapezoid sum of
    /// `e^{i(m-n) theta}` equals the ring size when it divides `m - n` and
    /// vanishes otherwise.
    pub fn identity_report(&self, band: FockBand) -> Result<IdentityReport> {
        let rings = match &self.kind {
            QuadratureKind::Polar { rings, .. } => rings,
            QuadratureKind::MonteCarlo { .. } => {
                return Err(invalid("identity check applies to deterministic quadratures only"))
            }
        };
        let count = band.count();
        let mut diag = vec![0.0; count];
        let mut off: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for ring in rings {
            let col = coherent_fock_column(C64::new(ring.rho, 0.0), band);
            let r: Vec<f64> = col.iter().map(|c| c.re).collect();
            let scale = 2.0 * ring.radial_weight;
            for j in 0..count {
                diag[j] += scale * r[j] * r[j];
            }
            let mut d = ring.n_angular;
            while d < count {
                let acc = off.entry(d).or_insert_with(|| vec![0.0; count - d]);
                for j in 0..count - d {
                    acc[j] += scale * r[j] * r[j + d];
                }
                d += ring.n_angular;
            }
        }
        let mut rep = IdentityReport {
            max_error: 0.0,
            worst_m: band.n_min,
            worst_n: band.n_min,
        };
        for (j, s) in diag.iter().enumerate() {
            let e = (s - 1.0).abs();
            if e > rep.max_error || e.is_nan() {
                rep = IdentityReport {
                    max_error: e,
                    worst_m: band.n(j),
                    worst_n: band.n(j),
                };
            }
        }
        for (d, acc) in &off {
            for (j, s) in acc.iter().enumerate() {
                if s.abs() > rep.max_error {
                    rep = IdentityReport {
                        max_error: s.abs(),
                        worst_m: band.n(j),
                        worst_n: band.n(j + d),
                    };
                }
            }
        }
        Ok(rep)
    }

    pub fn check_identity(&self, band: FockBand, tolerance: f64) -> Result<IdentityReport> {
        let rep = self.identity_report(band)?;
        if !(rep.max_error <= tolerance) {
            return Err(Error::QuadratureInsufficient {
                m: rep.worst_m,
                n: rep.worst_n,
                error: rep.max_error,
                tolerance,
            });
        }
        Ok(rep)
    }
}

/// Polar rule for `state` on `band`, certified by the resolution-of-identity gate.
pub fn build_alpha_quadrature(
    state: &PhotonState,
    band: FockBand,
    n_radial: usize,
    n_angular: usize,
    adaptive_rings: bool,
) -> Result<AlphaQuadrature> {
    let rho_max = QuadratureLayout::default_rho_max(band).max(match state {
        PhotonState::Coherent { .. } => state.support_radius(),
        _ => 0.0,
    });
    let quad = AlphaQuadrature::polar(QuadratureLayout {
        n_radial,
        n_angular,
        rho_max,
        radial_rule: RadialRule::GaussLegendre,
        adaptive_rings,
    })?;
    quad.check_identity(band, IDENTITY_TOLERANCE)?;
    Ok(quad)
}

/// Smallest radial node count (stepping by 4 from `start`) whose rule passes
/// the identity gate at `tolerance`.
pub fn auto_alpha_quadrature(
    state: &PhotonState,
    band: FockBand,
    n_angular: usize,
    adaptive_rings: bool,
    start: usize,
    tolerance: f64,
) -> Result<AlphaQuadrature> {
    let rho_max = QuadratureLayout::default_rho_max(band).max(match state {
        PhotonState::Coherent { .. } => state.support_radius(),
        _ => 0.0,
    });
    let mut n_radial = start.max(2);
    let mut last = None;
    while n_radial <= 4096 {
        let quad = AlphaQuadrature::polar(QuadratureLayout {
            n_radial,
            n_angular,
            rho_max,
            radial_rule: RadialRule::GaussLegendre,
            adaptive_rings,
        })?;
        match quad.check_identity(band, tolerance) {
            Ok(_) => return Ok(quad),
            // angular aliasing cannot be fixed radially
            Err(e @ Error::QuadratureInsufficient { m, n, .. }) if m != n => return Err(e),
            Err(e) => last = Some(e),
        }
        n_radial += 4;
    }
    Err(last.unwrap())
}
