//! Gradient-variance scaling of random circuits with register size.
//!
//! For each qubit count n the sweep builds `random_layers(n, layers, n, seed + n)`,
//! draws uniform parameter vectors, and records the population variance of
//! ∂⟨Z₀⟩/∂θ₀ at the all-zero input. Depth is held fixed across n.

use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::{random_layers, ParameterVector};
use crate::error::{Error, Result};
use crate::gradients::expectation_gradient;
use crate::monitor::variance;
use crate::rng::{stream_rng, Stream};

pub const MIN_SAMPLES: usize = 30;
pub const MAX_SWEEP_WIRES: usize = 14;

/// Variances at or below this are rounding residue of a gradient that is
/// identically zero (|g| ≲ 1e-12), e.g. an RZ acting first on |0⟩.
pub const VARIANCE_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_wires: usize,
    pub n_layers: usize,
    pub n_param_samples: usize,
    /// Population variance of the target gradient.
    pub variance: f64,
    pub log10_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Least-squares fit of log10(variance) against n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rows_used: usize,
}

pub fn sweep_variance(
    n_range: &[usize],
    n_layers: usize,
    samples: usize,
    seed: u64,
) -> Result<SweepResult> {
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "at least {MIN_SAMPLES} parameter samples are needed, got {samples}"
        )));
    }
    if n_layers == 0 {
        return Err(Error::Config("layers must be positive".into()));
    }
    let mut sizes = n_range.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::Config("no qubit counts to sweep".into()));
    }
    if let Some(&n) = sizes.iter().find(|&&n| !(2..=MAX_SWEEP_WIRES).contains(&n)) {
        return Err(Error::Config(format!(
            "sweep qubit counts must be in 2..={MAX_SWEEP_WIRES}, got {n}"
        )));
    }

    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let circuit_seed = seed.wrapping_add(n as u64);
        let spec = random_layers(n, n_layers, n, circuit_seed)?;
        let mut rng = stream_rng(circuit_seed, Stream::Params);
        let draws: Vec<ParameterVector> = (0..samples)
            .map(|_| {
                ParameterVector::new(
                    (0..spec.n_params()).map(|_| rng.random_range(0.0..TAU)).collect(),
                )
            })
            .collect();
        let zeros = vec![0.0; n];
        let grads = draws
            .par_iter()
            .map(|params| expectation_gradient(&spec, params, &zeros, 0, 0))
            .collect::<Result<Vec<f64>>>()?;
        let v = variance(&grads)?;
        rows.push(SweepRow {
            n_wires: n,
            n_layers,
            n_param_samples: samples,
            variance: v,
            log10_variance: v.log10(),
        });
    }
    Ok(SweepResult { rows })
}

/// Ordinary least squares of log10(variance) on n_wires. Rows whose variance
/// is zero (at or below [`VARIANCE_FLOOR`]) are skipped with a warning.
pub fn fit_decay(result: &SweepResult) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| {
            let usable = r.variance > VARIANCE_FLOOR && r.variance.is_finite();
            if !usable {
                log::warn!("excluding n_wires={} from the fit: variance {}", r.n_wires, r.variance);
            }
            usable
        })
        .map(|r| (r.n_wires as f64, r.variance.log10()))
        .collect();
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 rows with positive variance, have {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let syy = points.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::Fit("all rows share one qubit count".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum::<f64>();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        rows_used: points.len(),
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// CSV with header `n_wires,n_layers,samples,variance,log10_variance`.
pub fn write_csv(result: &SweepResult, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "n_wires,n_layers,samples,variance,log10_variance")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{:e},{}",
            r.n_wires, r.n_layers, r.n_param_samples, r.variance, r.log10_variance
        )?;
    }
    Ok(())
}
