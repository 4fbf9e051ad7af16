//! Single-mode photon states in the Fock basis and their coherent-state
//! overlaps.
//!
//! Squeezing convention: `|r, phi> = exp[(r/2)(e^{i phi} a†² - e^{-i phi} a²)]|0>`,
//! so that at `phi = 0` the anti-squeezed quadrature lies along real `alpha`,
//! i.e. along the `sin(omega t)` carrier of the classical drive.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::FockBand;

/// Default ceiling on `1 - sum |s_n|²` for a band.
pub const DEFAULT_TRUNCATION_THRESHOLD: f64 = 1e-10;

#[inline]
fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `<n|alpha> = e^{-|alpha|²/2} alpha^n / sqrt(n!)`, evaluated through
/// its logarithm so that it stays finite for `n` up to ~10⁶.
pub fn coherent_overlap_fock(n: u64, alpha: C64) -> C64 {
    let rho = alpha.norm();
    if rho == 0.0 {
        return if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
    }
    let log_mag = -0.5 * rho * rho + n as f64 * rho.ln() - 0.5 * ln_factorial(n);
    let phase = (n as f64 * alpha.arg()).rem_euclid(2.0 * PI);
    C64::from_polar(log_mag.exp(), phase)
}

/// `<n|alpha>` for every `n` in `band`, by recurrence outward from the
/// Poisson peak (values decay away from it, so the recurrence is stable).
pub fn coherent_fock_column(alpha: C64, band: FockBand) -> Vec<C64> {
    let count = band.count();
    let mut out = vec![C64::new(0.0, 0.0); count];
    let rho = alpha.norm();
    if rho == 0.0 {
        if band.n_min == 0 {
            out[0] = C64::new(1.0, 0.0);
        }
        return out;
    }
    let peak = (rho * rho).round() as u64;
    let peak = peak.clamp(band.n_min, band.n_max);
    let jp = (peak - band.n_min) as usize;
    out[jp] = coherent_overlap_fock(peak, alpha);
    for j in jp + 1..count {
        let n = band.n(j) as f64;
        out[j] = out[j - 1] * alpha / n.sqrt();
    }
    for j in (0..jp).rev() {
        let n1 = band.n(j + 1) as f64;
        out[j] = out[j + 1] * n1.sqrt() / alpha;
    }
    out
}

/// Anything that can report `<alpha|phi>`.
pub trait CoherentOverlap {
    fn coherent_overlap(&self, alpha: C64) -> C64;
}

/// Closed-form `<alpha|phi>` of squeezed vacuum.
pub fn coherent_squeezed_overlap(alpha: C64, r: f64, phi: f64) -> C64 {
    let t = r.tanh();
    let ac = alpha.conj();
    let expo = -0.5 * alpha.norm_sqr() + 0.5 * t * C64::from_polar(1.0, phi) * ac * ac;
    expo.exp() / r.cosh().sqrt()
}

/// Husimi density `|<alpha|phi>|²/pi`.
pub fn q_function<S: CoherentOverlap + ?Sized>(alpha: C64, state: &S) -> f64 {
    state.coherent_overlap(alpha).norm_sqr() / PI
}

/// Initial photon state, described analytically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhotonState {
    SqueezedVacuum { r: f64, phi: f64 },
    Coherent { alpha_re: f64, alpha_im: f64 },
    Fock { n: u64 },
}

impl PhotonState {
    pub fn vacuum() -> Self {
        PhotonState::Fock { n: 0 }
    }

    /// `Some(true)` for states supported on even photon numbers only.
    pub fn even_parity(&self) -> Option<bool> {
        match *self {
            PhotonState::SqueezedVacuum { .. } => Some(true),
            PhotonState::Fock { n } => Some(n % 2 == 0),
            PhotonState::Coherent { alpha_re, alpha_im } => {
                (alpha_re == 0.0 && alpha_im == 0.0).then_some(true)
            }
        }
    }

    pub fn mean_photons(&self) -> f64 {
        match *self {
            PhotonState::SqueezedVacuum { r, .. } => r.sinh().powi(2),
            PhotonState::Coherent { alpha_re, alpha_im } => alpha_re * alpha_re + alpha_im * alpha_im,
            PhotonState::Fock { n } => n as f64,
        }
    }

    /// Radius in the alpha plane beyond which the state's Husimi density is negligible.
    pub fn support_radius(&self) -> f64 {
        match *self {
            PhotonState::SqueezedVacuum { r, .. } => 0.5 * r.exp() * 12.0 + 6.0,
            PhotonState::Coherent { alpha_re, alpha_im } => alpha_re.hypot(alpha_im) + 6.0,
            PhotonState::Fock { n } => (n as f64).sqrt() + 6.0,
        }
    }

    pub fn fock_amplitudes(&self, band: FockBand, threshold: f64) -> Result<PhotonAmplitudes> {
        match *self {
            PhotonState::SqueezedVacuum { r, phi } => squeezed_fock_coeffs(r, phi, band, threshold),
            PhotonState::Coherent { alpha_re, alpha_im } => {
                coherent_fock_coeffs(C64::new(alpha_re, alpha_im), band, threshold)
            }
            PhotonState::Fock { n } => {
                let j = band.index(n).ok_or_else(|| {
                    Error::Construction(format!(
                        "Fock state |{n}> outside band {}..={}",
                        band.n_min, band.n_max
                    ))
                })?;
                let mut coeffs = vec![C64::new(0.0, 0.0); band.count()];
                coeffs[j] = C64::new(1.0, 0.0);
                Ok(PhotonAmplitudes {
                    band,
                    coeffs,
                    truncation_mass: 0.0,
                })
            }
        }
    }
}

impl CoherentOverlap for PhotonState {
    fn coherent_overlap(&self, alpha: C64) -> C64 {
        match *self {
            PhotonState::SqueezedVacuum { r, phi } => coherent_squeezed_overlap(alpha, r, phi),
            PhotonState::Coherent { alpha_re, alpha_im } => {
                let beta = C64::new(alpha_re, alpha_im);
                (-0.5 * alpha.norm_sqr() - 0.5 * beta.norm_sqr() + alpha.conj() * beta).exp()
            }
            PhotonState::Fock { n } => coherent_overlap_fock(n, alpha).conj(),
        }
    }
}

/// Fock coefficients `s_n` of a photon state restricted to a band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonAmplitudes {
    pub band: FockBand,
    pub coeffs: Vec<C64>,
    /// `1 - sum |s_n|²` over the band.
    pub truncation_mass: f64,
}

impl PhotonAmplitudes {
    pub fn probabilities(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn coeff(&self, n: u64) -> C64 {
        self.band
            .index(n)
            .map(|j| self.coeffs[j])
            .unwrap_or(C64::new(0.0, 0.0))
    }
}

impl CoherentOverlap for PhotonAmplitudes {
    fn coherent_overlap(&self, alpha: C64) -> C64 {
        coherent_fock_column(alpha, self.band)
            .iter()
            .zip(&self.coeffs)
            .map(|(k, s)| k.conj() * s)
            .sum()
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0) {
        return Err(invalid(format!("truncation threshold must be positive, got {threshold}")));
    }
    Ok(())
}

/// Squeezed-vacuum coefficients
/// `s_2m = (e^{i phi} tanh r)^m sqrt((2m)!)/(2^m m!)/sqrt(cosh r)`, `s_odd = 0`.
pub fn squeezed_fock_coeffs(r: f64, phi: f64, band: FockBand, threshold: f64) -> Result<PhotonAmplitudes> {
    if !(r >= 0.0) {
        return Err(invalid(format!("squeezing must be non-negative, got {r}")));
    }
    check_threshold(threshold)?;
    if band.n_min % 2 != 0 {
        return Err(Error::Construction(format!(
            "squeezed vacuum needs an even n_min, got {}",
            band.n_min
        )));
    }
    let t = C64::from_polar(r.tanh(), phi);
    let mut coeffs = vec![C64::new(0.0, 0.0); band.count()];
    let mut s = C64::new(1.0 / r.cosh().sqrt(), 0.0);
    let mut below = 0.0;
    let mut n: u64 = 0;
    while n <= band.n_max {
        if n >= band.n_min {
            coeffs[(n - band.n_min) as usize] = s;
        } else {
            below += s.norm_sqr();
        }
        let m = (n / 2) as f64;
        s = s * t * ((2.0 * m + 1.0) / (2.0 * m + 2.0)).sqrt();
        n += 2;
    }
    if below > threshold {
        return Err(Error::Construction(format!(
            "n_min = {} discards probability {below:.3e} below the band",
            band.n_min
        )));
    }
    // direct tail sum avoids cancellation in 1 - sum
    let first_beyond = n;
    let mut tail = 0.0;
    let mut tail_terms = Vec::new();
    loop {
        let p = s.norm_sqr();
        tail += p;
        tail_terms.push(p);
        if p == 0.0 || p < 1e-22 * tail || tail_terms.len() > 50_000_000 {
            break;
        }
        let m = (n / 2) as f64;
        s = s * t * ((2.0 * m + 1.0) / (2.0 * m + 2.0)).sqrt();
        n += 2;
    }
    let truncation_mass = below + tail;
    if truncation_mass > threshold {
        let mut remaining = tail;
        let mut required = first_beyond;
        for (k, p) in tail_terms.iter().enumerate() {
            remaining -= p;
            required = first_beyond + 2 * k as u64;
            if below + remaining <= threshold {
                break;
            }
        }
        return Err(Error::BandTooSmall {
            mass: truncation_mass,
            threshold,
            required_n_max: required,
        });
    }
    Ok(PhotonAmplitudes {
        band,
        coeffs,
        truncation_mass,
    })
}

pub fn coherent_fock_coeffs(alpha: C64, band: FockBand, threshold: f64) -> Result<PhotonAmplitudes> {
    check_threshold(threshold)?;
    let coeffs = coherent_fock_column(alpha, band);
    let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let truncation_mass = (1.0 - kept).max(0.0);
    if truncation_mass > threshold {
        let mut n = band.n_max;
        let mut mass = truncation_mass;
        while mass > threshold && n < band.n_max + 100_000 {
            n += 1;
            mass -= coherent_overlap_fock(n, alpha).norm_sqr();
        }
        return Err(Error::BandTooSmall {
            mass: truncation_mass,
            threshold,
            required_n_max: n,
        });
    }
    Ok(PhotonAmplitudes {
        band,
        coeffs,
        truncation_mass,
    })
}
