//! Speedups, Amdahl's law in both directions, and knee detection on
//! runtime-vs-batch-size sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ratio below which a batch-size doubling counts as sub-linear.
pub const DEFAULT_KNEE_THRESHOLD: f64 = 0.85;

/// Parallel fraction `p`, enhancement factor `s`, and the overall speedup
/// `overall = 1 / ((1 - p) + p / s)` they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmdahlFit {
    pub p: f64,
    pub s: f64,
    pub overall: f64,
}

impl AmdahlFit {
    /// Fits `p` from an observed overall speedup at enhancement factor `s`.
    pub fn from_observed(observed: f64, s: f64) -> Result<Self> {
        let p = estimate_parallel_fraction(observed, s)?;
        Ok(AmdahlFit {
            p,
            s,
            overall: observed,
        })
    }
}

pub fn speedup(baseline_ns: f64, variant_ns: f64) -> Result<f64> {
    if !(baseline_ns > 0.0 && variant_ns > 0.0) {
        return Err(Error::Domain(format!(
            "speedup needs positive durations, got baseline {baseline_ns} and variant {variant_ns}"
        )));
    }
    Ok(baseline_ns / variant_ns)
}

pub fn amdahl_speedup(p: f64, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("parallel fraction {p} outside [0, 1]")));
    }
    if !s.is_finite() || s < 1.0 {
        return Err(Error::Domain(format!("speedup factor {s} must be finite and >= 1")));
    }
    Ok(1.0 / ((1.0 - p) + p / s))
}

/// Inverse of [`amdahl_speedup`] in `p`: `p = (1 - 1/S) / (1 - 1/s)`.
pub fn estimate_parallel_fraction(observed: f64, s: f64) -> Result<f64> {
    if !s.is_finite() || s <= 1.0 {
        return Err(Error::Domain(format!("speedup factor {s} must be finite and > 1")));
    }
    if observed.is_nan() || observed < 1.0 {
        return Err(Error::Domain(format!(
            "observed speedup {observed} is a slowdown; no parallel fraction fits"
        )));
    }
    if observed > s {
        return Err(Error::Domain(format!(
            "observed speedup {observed} exceeds factor {s} (superlinear); no parallel fraction fits"
        )));
    }
    Ok((1.0 - 1.0 / observed) / (1.0 - 1.0 / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub batch_size: usize,
    pub runtime_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneeReport {
    pub points: Vec<SweepPoint>,
    /// `(t[i+1] / t[i]) / (b[i+1] / b[i])` per adjacent pair; 1 means
    /// runtime grows in proportion to batch size.
    pub ratios: Vec<f64>,
    pub flagged_interval: Option<(usize, usize)>,
    /// Geometric mean of the flagged interval's endpoints.
    pub boundary_estimate: Option<f64>,
    pub threshold: f64,
}

/// Flags the longest contiguous run of adjacent pairs whose scaling ratio
/// falls below `threshold` (the first such run on ties).
pub fn detect_knee(points: &[(usize, f64)], threshold: f64) -> Result<KneeReport> {
    if points.len() < 3 {
        return Err(Error::Usage(format!(
            "knee detection needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
        return Err(Error::Usage(format!(
            "batch sizes must be strictly increasing, got {} then {}",
            w[0].0, w[1].0
        )));
    }
    if let Some(&(b, t)) = points.iter().find(|(b, t)| *b == 0 || !t.is_finite() || *t <= 0.0) {
        return Err(Error::Usage(format!(
            "batch sizes and runtimes must be positive, got ({b}, {t})"
        )));
    }

    let ratios: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].1 / w[0].1) / (w[1].0 as f64 / w[0].0 as f64))
        .collect();

    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for (i, &r) in ratios.iter().chain(std::iter::once(&f64::INFINITY)).enumerate() {
        match (r < threshold, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                let len = i - start;
                if best.is_none_or(|(s, e)| len > e - s) {
                    best = Some((start, i));
                }
                run_start = None;
            }
            _ => {}
        }
    }

    let flagged_interval = best.map(|(start, end)| (points[start].0, points[end].0));
    let boundary_estimate = flagged_interval.map(|(lo, hi)| ((lo as f64) * (hi as f64)).sqrt());
    Ok(KneeReport {
        points: points
            .iter()
            .map(|&(batch_size, runtime_ns)| SweepPoint { batch_size, runtime_ns })
            .collect(),
        ratios,
        flagged_interval,
        boundary_estimate,
        threshold,
    })
}
