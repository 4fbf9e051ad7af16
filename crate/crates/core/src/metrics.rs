//! Distances between spectra and small fitting helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    Linf,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Metric::L1),
            "linf" => Ok(Metric::Linf),
            _ => Err(Error::Comparison(format!("unknown metric {s:?} (expected l1 or linf)"))),
        }
    }
}

/// `Σ|a - b| / max(Σ|a|, Σ|b|)`; zero when both are identically zero.
pub fn normalized_l1(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den = a.iter().map(|x| x.abs()).sum::<f64>().max(b.iter().map(|x| x.abs()).sum());
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

pub fn linf(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    match metric {
        Metric::L1 => normalized_l1(a, b),
        Metric::Linf => linf(a, b),
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Comparison(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    fit_line(x, y).0
}

/// Least-squares `(slope, intercept)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Average of adjacent Fock columns `(n, n+1)` of a row-major `[E][n]`
/// matrix; the result has one column fewer.
pub fn boxcar_pairs(joint: &[f64], n_cols: usize) -> Vec<f64> {
    let out_cols = n_cols.saturating_sub(1);
    joint
        .chunks(n_cols)
        .flat_map(|row| (0..out_cols).map(move |j| 0.5 * (row[j] + row[j + 1])))
        .collect()
}

/// `|P(n+1) - P(n)| / (P(n+1) + P(n))`, zero where both vanish.
pub fn modulation_depth(p: &[f64], j: usize) -> f64 {
    let (a, b) = (p[j], p[j + 1]);
    if a + b == 0.0 {
        0.0
    } else {
        (b - a).abs() / (a + b)
    }
}

/// Mean adjacent-level modulation depth over `lo..hi` of a profile.
pub fn mean_modulation_depth(p: &[f64], lo: usize, hi: usize) -> f64 {
    let hi = hi.min(p.len() - 1);
    if hi <= lo {
        return 0.0;
    }
    (lo..hi).map(|j| modulation_depth(p, j)).sum::<f64>() / (hi - lo) as f64
}

/// Fitted order of convergence from successive differences of a sequence
/// refined by a constant `ratio`.
pub fn convergence_order(deltas: &[f64], ratio: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(k, d)| (k as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(-fit_slope(&x, &y) / ratio.ln())
}
