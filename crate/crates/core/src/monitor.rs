//! Gradient-variance analysis and plateau feedback.
//!
//! The plateau statistic of a parameter is the population variance of its
//! per-sample loss gradients over one epoch. A plateau event fires only when
//! every parameter sits strictly below the operator threshold.

use std::collections::BTreeMap;

use crate::circuit::{CircuitSpec, RotationKind};
use crate::error::{Error, Result};
use crate::gradients::GradientSample;

pub const DEFAULT_THRESHOLD: f64 = 1e-5;

/// Population variance (mean squared deviation from the mean).
pub fn variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("variance of an empty sequence".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok((ss / n).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVariance {
    pub param_index: usize,
    pub gate_kind: RotationKind,
    pub variance: f64,
}

impl ParamVariance {
    pub fn below(&self, threshold: f64) -> bool {
        self.variance < threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub epoch: usize,
    pub per_param: Vec<ParamVariance>,
    /// Mean variance of each gate kind present in the circuit.
    pub per_kind: BTreeMap<RotationKind, f64>,
    pub threshold: f64,
    pub all_below: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauEvent {
    pub epoch: usize,
    pub entries: Vec<ParamVariance>,
    pub message: String,
}

/// Accepts only positive finite thresholds.
pub fn validate_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "threshold must be a positive finite number, got {threshold}"
        )))
    }
}

/// Builds the per-parameter variance report for one epoch.
///
/// A threshold of `0.0` is accepted and never flags anything, since the test
/// is strict and variances are nonnegative.
pub fn build_report(
    epoch: usize,
    samples: &[GradientSample],
    spec: &CircuitSpec,
    threshold: f64,
) -> Result<VarianceReport> {
    if samples.is_empty() {
        return Err(Error::Input("no gradient samples".into()));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::Input(format!("invalid threshold {threshold}")));
    }
    let p = spec.n_params();
    if let Some(bad) = samples.iter().find(|s| s.grads.len() != p) {
        return Err(Error::Input(format!(
            "sample {} has {} gradients, circuit has {p} parameters",
            bad.sample_id,
            bad.grads.len()
        )));
    }

    let mut column = Vec::with_capacity(samples.len());
    let mut per_param = Vec::with_capacity(p);
    for (k, &kind) in spec.param_kinds().iter().enumerate() {
        column.clear();
        column.extend(samples.iter().map(|s| s.grads[k]));
        per_param.push(ParamVariance {
            param_index: k,
            gate_kind: kind,
            variance: variance(&column)?,
        });
    }

    let mut sums: BTreeMap<RotationKind, (f64, usize)> = BTreeMap::new();
    for pv in &per_param {
        let e = sums.entry(pv.gate_kind).or_insert((0.0, 0));
        e.0 += pv.variance;
        e.1 += 1;
    }
    let per_kind = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    let all_below = per_param.iter().all(|pv| pv.below(threshold));

    Ok(VarianceReport {
        epoch,
        per_param,
        per_kind,
        threshold,
        all_below,
    })
}

/// Formats like C's `%.1e`: one decimal and a signed two-digit exponent.
pub fn format_sci(value: f64) -> String {
    let s = format!("{value:.1e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().unwrap_or(0);
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", exp.abs())
        }
        None => s,
    }
}

/// One feedback line for a flagged parameter.
pub fn feedback_line(epoch: usize, entry: &ParamVariance) -> String {
    format!(
        "epoch={epoch} param_index={} param_type={} barren_plateau_value={}",
        entry.param_index,
        entry.gate_kind,
        format_sci(entry.variance)
    )
}

/// Returns a plateau event iff every parameter is below the threshold.
pub fn detect(report: &VarianceReport) -> Option<PlateauEvent> {
    if !report.all_below || report.per_param.is_empty() {
        return None;
    }
    let message = report
        .per_param
        .iter()
        .map(|e| feedback_line(report.epoch, e))
        .collect::<Vec<_>>()
        .join("\n");
    Some(PlateauEvent {
        epoch: report.epoch,
        entries: report.per_param.clone(),
        message,
    })
}

/// Threshold owned by the training loop.
///
/// Updates are staged and only take effect at the next epoch boundary.
#[derive(Debug, Clone)]
pub struct Monitor {
    active: f64,
    pending: Option<f64>,
}

impl Default for Monitor {
    fn default() -> Self {
        Self {
            active: DEFAULT_THRESHOLD,
            pending: None,
        }
    }
}

impl Monitor {
    /// Starts with `threshold`; zero disables detection.
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::Config(format!(
                "threshold must be nonnegative and finite, got {threshold}"
            )));
        }
        Ok(Self {
            active: threshold,
            pending: None,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.active
    }

    pub fn pending(&self) -> Option<f64> {
        self.pending
    }

    /// Stages a new threshold; returns the acknowledged value.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<f64> {
        validate_threshold(threshold)?;
        self.pending = Some(threshold);
        Ok(threshold)
    }

    /// Applies any staged threshold and returns the one in force for the epoch.
    pub fn begin_epoch(&mut self) -> f64 {
        if let Some(t) = self.pending.take() {
            self.active = t;
        }
        self.active
    }

    pub fn report(
        &self,
        epoch: usize,
        samples: &[GradientSample],
        spec: &CircuitSpec,
    ) -> Result<VarianceReport> {
        build_report(epoch, samples, spec, self.active)
    }
}
