//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point starts from the `ci-small` preset and applies
//! newline-separated `key=value` overrides, the same syntax as `--set`.

use num_complex::Complex64 as C64;
use wasm_bindgen::prelude::*;

use qlsfi_core::config::{RunConfig, Tier};
use qlsfi_core::container::Container;
use qlsfi_core::photon::q_function;
use qlsfi_core::{pipeline, Error};

/// Two aligned series, e.g. energy and yield.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    /// Third column; empty when the operation has none.
    #[wasm_bindgen(getter)]
    pub fn z(&self) -> Vec<f64> {
        self.z.clone()
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.kind()))
}

fn config(overrides: &str) -> Result<RunConfig, Error> {
    let lines: Vec<&str> = overrides.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    RunConfig::tier(Tier::CiSmall).with_overrides(&lines)
}

fn column(c: &Container, name: &str) -> Result<Vec<f64>, Error> {
    Ok(c.f64_array(name)?.to_vec())
}

/// Husimi density of the configured photon state on a `size × size` grid
/// covering `[-extent, extent]²`, row-major with Im(alpha) along rows.
pub fn husimi_map_native(overrides: &str, extent: f64, size: usize) -> Result<Vec<f64>, Error> {
    if size < 2 || !(extent > 0.0) {
        return Err(Error::Config("husimi map needs size >= 2 and extent > 0".into()));
    }
    let state = config(overrides)?.photon_state();
    let h = 2.0 * extent / (size - 1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let im = extent - i as f64 * h;
        for k in 0..size {
            let a = C64::new(-extent + k as f64 * h, im);
            out.push(q_function(a, &state));
        }
    }
    Ok(out)
}

/// Photon numbers, exact probabilities and Husimi-smeared probabilities.
pub fn photon_stats_native(overrides: &str) -> Result<Series, Error> {
    let c = pipeline::photon_dist(&config(overrides)?)?;
    Ok(Series { x: column(&c, "n")?, y: column(&c, "p_exact")?, z: column(&c, "p_q")? })
}

/// Energies and photoelectron yield under the equivalent classical drive.
pub fn classical_spectrum_native(overrides: &str) -> Result<Series, Error> {
    let c = pipeline::spectrum(&config(overrides)?)?;
    Ok(Series { x: column(&c, "energy")?, y: column(&c, "pes")?, z: Vec::new() })
}

#[wasm_bindgen(js_name = husimiMap)]
pub fn husimi_map(overrides: &str, extent: f64, size: usize) -> Result<Vec<f64>, JsError> {
    husimi_map_native(overrides, extent, size).map_err(js)
}

#[wasm_bindgen(js_name = photonStats)]
pub fn photon_stats(overrides: &str) -> Result<Series, JsError> {
    photon_stats_native(overrides).map_err(js)
}

#[wasm_bindgen(js_name = classicalSpectrum)]
pub fn classical_spectrum(overrides: &str) -> Result<Series, JsError> {
    classical_spectrum_native(overrides).map_err(js)
}
