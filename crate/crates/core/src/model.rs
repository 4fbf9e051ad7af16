//! Physical parameters shared by every solver: unit conversions, the
//! spatial grid, the Fock band, the soft-core atom and the trapezoidal
//! pulse envelope. Everything here is in atomic units.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Speed of light in atomic units.
pub const SPEED_OF_LIGHT_AU: f64 = 137.035999;
/// Bohr radii per nanometre.
pub const BOHR_PER_NM: f64 = 18.897261;
/// Atomic unit of intensity in W/cm².
pub const ATOMIC_INTENSITY_WCM2: f64 = 3.50945e16;

pub fn wavelength_to_omega(lambda_nm: f64) -> Result<f64> {
    if !(lambda_nm > 0.0) || !lambda_nm.is_finite() {
        return Err(invalid(format!("wavelength must be positive, got {lambda_nm}")));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT_AU / (lambda_nm * BOHR_PER_NM))
}

pub fn intensity_to_field(intensity_wcm2: f64) -> Result<f64> {
    if !(intensity_wcm2 >= 0.0) || !intensity_wcm2.is_finite() {
        return Err(invalid(format!(
            "intensity must be non-negative, got {intensity_wcm2}"
        )));
    }
    Ok((intensity_wcm2 / ATOMIC_INTENSITY_WCM2).sqrt())
}

/// Soft-core Coulomb potential `-1/sqrt(x² + a)`.
#[inline]
pub fn atom_potential(x: f64, a: f64) -> f64 {
    -1.0 / (x * x + a).sqrt()
}

/// Uniform grid symmetric about the origin with an odd number of points,
/// so that `x = 0` is a node and the reflection `i -> nx - 1 - i` is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    x_max: f64,
    nx: usize,
    dx: f64,
}

impl SpaceGrid {
    pub fn new(x_max: f64, nx: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(invalid(format!("grid x_max must be positive, got {x_max}")));
        }
        if nx < 3 || nx % 2 == 0 {
            return Err(invalid(format!("grid nx must be odd and >= 3, got {nx}")));
        }
        let dx = 2.0 * x_max / (nx - 1) as f64;
        Ok(Self { x_max, nx, dx })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn center(&self) -> usize {
        (self.nx - 1) / 2
    }

    /// Position of node `i`, computed from the centre so that `x(i) == -x(nx-1-i)` bitwise.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        let c = self.center() as isize;
        (i as isize - c) as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomModel {
    pub softcore_a: f64,
    pub grid: SpaceGrid,
}

impl AtomModel {
    pub const DEFAULT_SOFTCORE_A: f64 = 2.0;

    pub fn new(softcore_a: f64, grid: SpaceGrid) -> Result<Self> {
        if !(softcore_a > 0.0) {
            return Err(invalid(format!(
                "soft-core parameter must be positive, got {softcore_a}"
            )));
        }
        Ok(Self { softcore_a, grid })
    }

    pub fn potential(&self) -> Vec<f64> {
        let a = self.softcore_a;
        (0..self.grid.nx())
            .map(|i| atom_potential(self.grid.x(i), a))
            .collect()
    }

    /// Main diagonal and (constant) off-diagonal of the three-point
    /// discretization of `-1/2 d²/dx² + V(x)` with Dirichlet walls.
    pub fn hamiltonian(&self) -> (Vec<f64>, f64) {
        let dx2 = self.grid.dx() * self.grid.dx();
        let diag = self.potential().into_iter().map(|v| 1.0 / dx2 + v).collect();
        (diag, -0.5 / dx2)
    }
}

/// Contiguous window of photon numbers `n_min..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockBand {
    pub n_min: u64,
    pub n_max: u64,
}

impl FockBand {
    pub fn new(n_min: u64, n_max: u64) -> Result<Self> {
        if n_min > n_max {
            return Err(invalid(format!("Fock band n_min {n_min} > n_max {n_max}")));
        }
        Ok(Self { n_min, n_max })
    }

    pub fn count(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    pub fn n(&self, j: usize) -> u64 {
        self.n_min + j as u64
    }

    pub fn index(&self, n: u64) -> Option<usize> {
        self.contains(n).then(|| (n - self.n_min) as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.n_min..=self.n_max
    }
}

/// Mode frequency and single-photon field amplitude `eps_v = sqrt(2 pi omega / V)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub omega: f64,
    pub eps_v: f64,
}

impl FieldParams {
    pub fn new(omega: f64, eps_v: f64) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(invalid(format!("omega must be positive, got {omega}")));
        }
        if !(eps_v >= 0.0) || !eps_v.is_finite() {
            return Err(invalid(format!("eps_v must be non-negative, got {eps_v}")));
        }
        Ok(Self { omega, eps_v })
    }

    pub fn quantization_volume(&self) -> f64 {
        2.0 * PI * self.omega / (self.eps_v * self.eps_v)
    }

    pub fn from_volume(omega: f64, volume: f64) -> Result<Self> {
        if !(volume > 0.0) {
            return Err(invalid("quantization volume must be positive"));
        }
        Self::new(omega, (2.0 * PI * omega / volume).sqrt())
    }
}

/// Single-photon amplitude for a squeezed-vacuum drive of peak field `e0`:
/// `E0 = 2 eps_v sinh r`.
pub fn derive_field_params(e0: f64, r: f64, omega: f64) -> Result<FieldParams> {
    if r == 0.0 {
        return Err(Error::DegenerateSqueezing);
    }
    if !(r > 0.0) {
        return Err(invalid(format!("squeezing must be positive, got {r}")));
    }
    if !(e0 > 0.0) {
        return Err(invalid(format!("peak field must be positive, got {e0}")));
    }
    FieldParams::new(omega, e0 / (2.0 * r.sinh()))
}

/// Mean photon number `sinh² r` of squeezed vacuum.
pub fn squeezed_mean_photons(r: f64) -> f64 {
    let s = r.sinh();
    s * s
}

/// Trapezoid with linear ramps, measured in optical cycles of the carrier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub ramp_up_cycles: f64,
    pub flat_cycles: f64,
    pub ramp_down_cycles: f64,
    pub omega: f64,
}

impl PulseEnvelope {
    pub fn new(ramp_up_cycles: f64, flat_cycles: f64, ramp_down_cycles: f64, omega: f64) -> Result<Self> {
        for (name, v) in [
            ("ramp_up_cycles", ramp_up_cycles),
            ("flat_cycles", flat_cycles),
            ("ramp_down_cycles", ramp_down_cycles),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(omega > 0.0) {
            return Err(invalid(format!("omega must be positive, got {omega}")));
        }
        if ramp_up_cycles + flat_cycles == 0.0 {
            return Err(Error::ZeroDuration(
                "ramp-up and flat-top both have zero length, the envelope never rises".into(),
            ));
        }
        Ok(Self {
            ramp_up_cycles,
            flat_cycles,
            ramp_down_cycles,
            omega,
        })
    }

    /// One-cycle ramps around a two-cycle flat top.
    pub fn one_two_one(omega: f64) -> Result<Self> {
        Self::new(1.0, 2.0, 1.0, omega)
    }

    pub fn cycle_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn duration(&self) -> f64 {
        (self.ramp_up_cycles + self.flat_cycles + self.ramp_down_cycles) * self.cycle_period()
    }

    /// Analytic `∫ f dt` over the pulse.
    pub fn area(&self) -> f64 {
        (self.flat_cycles + 0.5 * (self.ramp_up_cycles + self.ramp_down_cycles)) * self.cycle_period()
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let tc = self.cycle_period();
        let t_up = self.ramp_up_cycles * tc;
        let t_flat = t_up + self.flat_cycles * tc;
        let t_end = t_flat + self.ramp_down_cycles * tc;
        if !(t > 0.0) || t >= t_end {
            0.0
        } else if t < t_up {
            t / t_up
        } else if t <= t_flat {
            1.0
        } else {
            (t_end - t) / (t_end - t_flat)
        }
    }
}

/// Laboratory description of a squeezed-vacuum drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub intensity_wcm2: f64,
    pub wavelength_nm: f64,
    pub squeezing_r: f64,
    pub squeezing_phase: f64,
}

impl DriveSpec {
    pub fn e0(&self) -> Result<f64> {
        intensity_to_field(self.intensity_wcm2)
    }

    pub fn omega(&self) -> Result<f64> {
        wavelength_to_omega(self.wavelength_nm)
    }

    pub fn n_bar(&self) -> f64 {
        squeezed_mean_photons(self.squeezing_r)
    }

    pub fn field_params(&self) -> Result<FieldParams> {
        derive_field_params(self.e0()?, self.squeezing_r, self.omega()?)
    }
}
