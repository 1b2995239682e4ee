//! Parameter-shift gradients of Pauli-Z readouts and of the squared-error loss.
//!
//! For a rotation `exp(-iθP/2)` the readout is a sinusoid in θ with unit
//! frequency, so `(f(θ + π/2) - f(θ - π/2)) / 2` is its exact derivative.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::circuit::{forward_wire, CircuitSpec, ParameterVector};
use crate::error::{Error, Result};

/// One labelled input. Labels are -1.0 or +1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }
}

/// ∂L/∂θ for one sample at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub epoch: usize,
    pub sample_id: usize,
    pub grads: Vec<f64>,
}

/// Batch loss with mean and per-sample gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub mean_grads: Vec<f64>,
    pub per_sample: Vec<GradientSample>,
}

/// ∂⟨Z_wire⟩/∂θ_k by the parameter-shift rule.
pub fn expectation_gradient(
    spec: &CircuitSpec,
    params: &ParameterVector,
    features: &[f64],
    measured_wire: usize,
    param_index: usize,
) -> Result<f64> {
    if param_index >= spec.n_params() {
        return Err(Error::Input(format!(
            "parameter index {param_index} out of range for {} parameters",
            spec.n_params()
        )));
    }
    let plus = forward_wire(spec, &params.shifted(param_index, FRAC_PI_2), features, measured_wire)?;
    let minus = forward_wire(spec, &params.shifted(param_index, -FRAC_PI_2), features, measured_wire)?;
    Ok((plus - minus) / 2.0)
}

/// Gradient of ⟨Z_wire⟩ with respect to every parameter.
pub fn expectation_gradients(
    spec: &CircuitSpec,
    params: &ParameterVector,
    features: &[f64],
    measured_wire: usize,
) -> Result<Vec<f64>> {
    (0..spec.n_params())
        .map(|k| expectation_gradient(spec, params, features, measured_wire, k))
        .collect()
}

/// Wire whose ⟨Z⟩ is the classifier output.
pub fn decision_wire(spec: &CircuitSpec) -> usize {
    spec.measured_wires()[0]
}

fn check_label(label: f64) -> Result<()> {
    if label == 1.0 || label == -1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("labels must be -1 or +1, got {label}")))
    }
}

/// Mean squared error between the decision readout and the labels, with
/// per-sample parameter-shift gradients.
///
/// Samples are evaluated in parallel; `per_sample` is ordered by sample id and
/// every reduction runs in sample order, so results are bitwise reproducible.
pub fn loss_gradient(
    spec: &CircuitSpec,
    params: &ParameterVector,
    batch: &[Sample],
    epoch: usize,
) -> Result<LossGradient> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let wire = decision_wire(spec);
    let evaluated: Vec<(f64, GradientSample)> = batch
        .par_iter()
        .enumerate()
        .map(|(sample_id, sample)| {
            check_label(sample.label)?;
            let z = forward_wire(spec, params, &sample.features, wire)?;
            let residual = z - sample.label;
            let grads = expectation_gradients(spec, params, &sample.features, wire)?
                .into_iter()
                .map(|g| 2.0 * residual * g)
                .collect();
            Ok((
                residual * residual,
                GradientSample {
                    epoch,
                    sample_id,
                    grads,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut mean_grads = vec![0.0; spec.n_params()];
    for (sq, sample) in &evaluated {
        loss += sq;
        for (acc, g) in mean_grads.iter_mut().zip(&sample.grads) {
            *acc += g;
        }
    }
    mean_grads.iter_mut().for_each(|g| *g /= n);

    Ok(LossGradient {
        loss: loss / n,
        mean_grads,
        per_sample: evaluated.into_iter().map(|(_, s)| s).collect(),
    })
}

/// Mean squared error only.
pub fn loss(spec: &CircuitSpec, params: &ParameterVector, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let wire = decision_wire(spec);
    let mut total = 0.0;
    for sample in batch {
        check_label(sample.label)?;
        let r = forward_wire(spec, params, &sample.features, wire)? - sample.label;
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::circuit::{random_layers, EncoderSpec, PqcGateSlot, RotationKind};

    fn single_ry() -> CircuitSpec {
        CircuitSpec::new(
            1,
            EncoderSpec::default(),
            vec![PqcGateSlot::Rotation {
                kind: RotationKind::Ry,
                target: 0,
                param_index: 0,
            }],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn ry_gradient_is_minus_sine() {
        let spec = single_ry();
        let g0 = expectation_gradient(&spec, &vec![0.0].into(), &[0.0], 0, 0).unwrap();
        assert_abs_diff_eq!(g0, 0.0, epsilon = 1e-12);
        let g1 = expectation_gradient(&spec, &vec![FRAC_PI_2].into(), &[0.0], 0, 0).unwrap();
        assert_abs_diff_eq!(g1, -1.0, epsilon = 1e-12);
        assert!(matches!(
            expectation_gradient(&spec, &vec![0.0].into(), &[0.0], 0, 1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_residual_gives_zero_loss_and_grads() {
        let spec = single_ry();
        // RY(π) on |0⟩ reads -1.
        let out = loss_gradient(&spec, &vec![PI].into(), &[Sample::new(vec![0.0], -1.0)], 0).unwrap();
        assert_abs_diff_eq!(out.loss, 0.0, epsilon = 1e-24);
        assert_abs_diff_eq!(out.mean_grads[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_batch_matches_singleton() {
        let spec = random_layers(3, 2, 3, 11).unwrap();
        let params: ParameterVector = (0..6).map(|i| 0.4 * i as f64 + 0.1).collect::<Vec<_>>().into();
        let s = Sample::new(vec![0.3, 1.2, 2.0], 1.0);
        let one = loss_gradient(&spec, &params, std::slice::from_ref(&s), 0).unwrap();
        let two = loss_gradient(&spec, &params, &[s.clone(), s], 0).unwrap();
        assert_eq!(one.loss, two.loss);
        assert_eq!(one.mean_grads, two.mean_grads);
        assert_eq!(two.per_sample.len(), 2);
        assert_eq!(two.per_sample[1].sample_id, 1);
    }

    #[test]
    fn empty_batch_and_bad_label_rejected() {
        let spec = single_ry();
        assert!(matches!(loss_gradient(&spec, &vec![0.0].into(), &[], 0), Err(Error::Input(_))));
        assert!(matches!(
            loss_gradient(&spec, &vec![0.0].into(), &[Sample::new(vec![0.0], 0.5)], 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn disconnected_parameter_has_zero_gradient() {
        // Wire 1 never talks to wire 0.
        let spec = CircuitSpec::new(
            2,
            EncoderSpec::default(),
            vec![
                PqcGateSlot::Rotation { kind: RotationKind::Rx, target: 0, param_index: 0 },
                PqcGateSlot::Rotation { kind: RotationKind::Ry, target: 1, param_index: 1 },
                PqcGateSlot::Cnot { control: 0, target: 1 },
                PqcGateSlot::Rotation { kind: RotationKind::Rz, target: 1, param_index: 2 },
            ],
            vec![0, 1],
        )
        .unwrap();
        let params: ParameterVector = vec![0.7, 1.1, 2.3].into();
        for k in [1, 2] {
            let g = expectation_gradient(&spec, &params, &[0.4, 0.9], 0, k).unwrap();
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
        }
    }
}
