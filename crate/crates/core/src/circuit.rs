//! Variational circuit description: angle encoder, parameterized gate slots
//! and Pauli-Z readout, plus the random-layer generator and the plain-text
//! circuit file format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::statevector::{Gate, StateVector};

/// Axis of a trainable rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RotationKind {
    Rx,
    Ry,
    Rz,
}

impl RotationKind {
    pub const ALL: [RotationKind; 3] = [RotationKind::Rx, RotationKind::Ry, RotationKind::Rz];

    pub fn as_str(&self) -> &'static str {
        match self {
            RotationKind::Rx => "RX",
            RotationKind::Ry => "RY",
            RotationKind::Rz => "RZ",
        }
    }

    pub fn gate(&self, target: usize, angle: f64) -> Gate {
        match self {
            RotationKind::Rx => Gate::Rx { target, angle },
            RotationKind::Ry => Gate::Ry { target, angle },
            RotationKind::Rz => Gate::Rz { target, angle },
        }
    }
}

impl fmt::Display for RotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RotationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RX" => Ok(RotationKind::Rx),
            "RY" => Ok(RotationKind::Ry),
            "RZ" => Ok(RotationKind::Rz),
            _ => Err(Error::Input(format!("unknown rotation kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderScheme {
    AngleRy,
}

/// Maps feature `i` to `RY(feature_scale * x_i)` on wire `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSpec {
    pub scheme: EncoderScheme,
    pub feature_scale: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            scheme: EncoderScheme::AngleRy,
            feature_scale: 1.0,
        }
    }
}

/// One gate position in the parameterized circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqcGateSlot {
    Rotation {
        kind: RotationKind,
        target: usize,
        param_index: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

/// Trainable rotation angles, indexed by parameter index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with parameter `index` moved by `delta`.
    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut values = self.0.clone();
        values[index] += delta;
        Self(values)
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// A validated circuit. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    n_wires: usize,
    encoder: EncoderSpec,
    pqc: Vec<PqcGateSlot>,
    measured_wires: Vec<usize>,
    param_kinds: Vec<RotationKind>,
}

impl CircuitSpec {
    pub fn new(
        n_wires: usize,
        encoder: EncoderSpec,
        pqc: Vec<PqcGateSlot>,
        measured_wires: Vec<usize>,
    ) -> Result<Self> {
        if !(1..=crate::statevector::MAX_WIRES).contains(&n_wires) {
            return Err(Error::Config(format!(
                "n_wires must be in 1..={}, got {n_wires}",
                crate::statevector::MAX_WIRES
            )));
        }
        if !(encoder.feature_scale > 0.0 && encoder.feature_scale.is_finite()) {
            return Err(Error::Config(format!(
                "feature_scale must be positive, got {}",
                encoder.feature_scale
            )));
        }
        let wire_ok = |w: usize| -> Result<()> {
            if w >= n_wires {
                Err(Error::Circuit(format!(
                    "wire {w} out of range for {n_wires} wires"
                )))
            } else {
                Ok(())
            }
        };

        let mut kinds: BTreeMap<usize, RotationKind> = BTreeMap::new();
        for slot in &pqc {
            match *slot {
                PqcGateSlot::Rotation {
                    kind,
                    target,
                    param_index,
                } => {
                    wire_ok(target)?;
                    if kinds.insert(param_index, kind).is_some() {
                        return Err(Error::Circuit(format!(
                            "parameter index {param_index} used by more than one slot"
                        )));
                    }
                }
                PqcGateSlot::Cnot { control, target } => {
                    wire_ok(control)?;
                    wire_ok(target)?;
                    if control == target {
                        return Err(Error::Circuit(format!(
                            "CNOT control and target are both wire {target}"
                        )));
                    }
                }
            }
        }
        if let Some(pos) = kinds.keys().enumerate().position(|(pos, k)| pos != *k) {
            return Err(Error::Circuit(format!(
                "parameter indices must be contiguous from 0; p{pos} is missing"
            )));
        }

        if measured_wires.is_empty() {
            return Err(Error::Circuit("no measured wires".into()));
        }
        for (i, &w) in measured_wires.iter().enumerate() {
            wire_ok(w)?;
            if measured_wires[..i].contains(&w) {
                return Err(Error::Circuit(format!("wire {w} measured twice")));
            }
        }

        Ok(Self {
            n_wires,
            encoder,
            pqc,
            measured_wires,
            param_kinds: kinds.into_values().collect(),
        })
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn encoder(&self) -> &EncoderSpec {
        &self.encoder
    }

    pub fn pqc(&self) -> &[PqcGateSlot] {
        &self.pqc
    }

    pub fn measured_wires(&self) -> &[usize] {
        &self.measured_wires
    }

    /// Number of trainable parameters P.
    pub fn n_params(&self) -> usize {
        self.param_kinds.len()
    }

    /// Rotation kind of each parameter, indexed by parameter index.
    pub fn param_kinds(&self) -> &[RotationKind] {
        &self.param_kinds
    }

    pub fn n_cnots(&self) -> usize {
        self.pqc
            .iter()
            .filter(|s| matches!(s, PqcGateSlot::Cnot { .. }))
            .count()
    }

    /// Rotation kinds present in the circuit, with slot counts.
    pub fn census(&self) -> BTreeMap<RotationKind, usize> {
        let mut out = BTreeMap::new();
        for kind in &self.param_kinds {
            *out.entry(*kind).or_insert(0) += 1;
        }
        out
    }

    fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Input(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Encoded input followed by the parameterized circuit.
    pub fn prepare(&self, params: &ParameterVector, features: &[f64]) -> Result<StateVector> {
        self.check_params(params)?;
        let mut state = encode(features, self)?;
        for slot in &self.pqc {
            let gate = match *slot {
                PqcGateSlot::Rotation {
                    kind,
                    target,
                    param_index,
                } => kind.gate(target, params.values()[param_index]),
                PqcGateSlot::Cnot { control, target } => Gate::Cnot { control, target },
            };
            state.apply(&gate)?;
        }
        Ok(state)
    }
}

/// Random hardware-efficient layers.
///
/// Each layer holds `rotations_per_layer` rotations with kind and wire drawn
/// uniformly, followed by a CNOT ring `i -> (i + 1) mod n`. Single-wire
/// circuits get no ring. All wires are measured.
pub fn random_layers(
    n_wires: usize,
    n_layers: usize,
    rotations_per_layer: usize,
    seed: u64,
) -> Result<CircuitSpec> {
    if n_wires < 1 || n_layers < 1 || rotations_per_layer < 1 {
        return Err(Error::Config(format!(
            "random_layers needs positive sizes, got wires={n_wires} layers={n_layers} rotations={rotations_per_layer}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Circuit);
    let mut pqc = Vec::with_capacity(n_layers * (rotations_per_layer + n_wires));
    let mut next_param = 0;
    for _ in 0..n_layers {
        for _ in 0..rotations_per_layer {
            let kind = RotationKind::ALL[rng.random_range(0..3)];
            let target = rng.random_range(0..n_wires);
            pqc.push(PqcGateSlot::Rotation {
                kind,
                target,
                param_index: next_param,
            });
            next_param += 1;
        }
        if n_wires >= 2 {
            for control in 0..n_wires {
                pqc.push(PqcGateSlot::Cnot {
                    control,
                    target: (control + 1) % n_wires,
                });
            }
        }
    }
    CircuitSpec::new(
        n_wires,
        EncoderSpec::default(),
        pqc,
        (0..n_wires).collect(),
    )
}

/// Angle-encodes `features` into a fresh register.
pub fn encode(features: &[f64], spec: &CircuitSpec) -> Result<StateVector> {
    if features.len() != spec.n_wires {
        return Err(Error::Input(format!(
            "expected {} features, got {}",
            spec.n_wires,
            features.len()
        )));
    }
    let mut state = StateVector::zero(spec.n_wires)?;
    match spec.encoder.scheme {
        EncoderScheme::AngleRy => {
            for (wire, &x) in features.iter().enumerate() {
                state.apply(&Gate::Ry {
                    target: wire,
                    angle: spec.encoder.feature_scale * x,
                })?;
            }
        }
    }
    Ok(state)
}

/// ⟨Z⟩ on every measured wire after encoding and the parameterized circuit.
pub fn forward(
    spec: &CircuitSpec,
    params: &ParameterVector,
    features: &[f64],
) -> Result<Vec<f64>> {
    let state = spec.prepare(params, features)?;
    spec.measured_wires
        .iter()
        .map(|&w| state.expectation_z(w))
        .collect()
}

/// ⟨Z⟩ on a single wire; cheaper than [`forward`] when only one output is needed.
pub fn forward_wire(
    spec: &CircuitSpec,
    params: &ParameterVector,
    features: &[f64],
    wire: usize,
) -> Result<f64> {
    spec.prepare(params, features)?.expectation_z(wire)
}

/// Writes the canonical text form of `spec`.
pub fn serialize_circuit(spec: &CircuitSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("wires {}\n", spec.n_wires));
    match spec.encoder.scheme {
        EncoderScheme::AngleRy => {
            out.push_str(&format!(
                "encoder angle_ry scale {:?}\n",
                spec.encoder.feature_scale
            ));
        }
    }
    for slot in &spec.pqc {
        match *slot {
            PqcGateSlot::Rotation {
                kind,
                target,
                param_index,
            } => out.push_str(&format!(
                "{} {target} p{param_index}\n",
                kind.as_str().to_ascii_lowercase()
            )),
            PqcGateSlot::Cnot { control, target } => {
                out.push_str(&format!("cnot {control} {target}\n"))
            }
        }
    }
    out.push_str("measure");
    for w in &spec.measured_wires {
        out.push_str(&format!(" {w}"));
    }
    out.push('\n');
    out
}

/// Parses the line-oriented circuit format.
///
/// ```text
/// wires 2
/// encoder angle_ry scale 1.0
/// ry 0 p0
/// cnot 0 1
/// measure 0
/// ```
pub fn parse_circuit_file(text: &str) -> Result<CircuitSpec> {
    let mut n_wires: Option<usize> = None;
    let mut encoder: Option<EncoderSpec> = None;
    let mut pqc = Vec::new();
    let mut measured: Option<Vec<usize>> = None;
    let mut param_lines: BTreeMap<usize, usize> = BTreeMap::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        last_line = line_no;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let keyword = tokens[0];
        let args = &tokens[1..];

        let wire = |tok: &str| -> Result<usize> {
            let n = n_wires.ok_or_else(|| err("`wires` must come before gates".into()))?;
            let w: usize = tok
                .parse()
                .map_err(|_| err(format!("invalid wire index {tok:?}")))?;
            if w >= n {
                return Err(err(format!("wire {w} out of range for {n} wires")));
            }
            Ok(w)
        };

        match keyword {
            "wires" => {
                if n_wires.is_some() {
                    return Err(err("duplicate `wires` statement".into()));
                }
                let [n] = args else {
                    return Err(err("expected `wires <n>`".into()));
                };
                let n: usize = n
                    .parse()
                    .map_err(|_| err(format!("invalid wire count {n:?}")))?;
                if !(1..=crate::statevector::MAX_WIRES).contains(&n) {
                    return Err(err(format!(
                        "wire count must be in 1..={}",
                        crate::statevector::MAX_WIRES
                    )));
                }
                n_wires = Some(n);
            }
            "encoder" => {
                if encoder.is_some() {
                    return Err(err("duplicate `encoder` statement".into()));
                }
                let ["angle_ry", "scale", scale] = args else {
                    return Err(err("expected `encoder angle_ry scale <float>`".into()));
                };
                let scale: f64 = scale
                    .parse()
                    .map_err(|_| err(format!("invalid scale {scale:?}")))?;
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(err(format!("scale must be positive, got {scale}")));
                }
                encoder = Some(EncoderSpec {
                    scheme: EncoderScheme::AngleRy,
                    feature_scale: scale,
                });
            }
            "rx" | "ry" | "rz" => {
                let kind: RotationKind = keyword.parse().expect("matched keyword");
                let [w, p] = args else {
                    return Err(err(format!("expected `{keyword} <wire> p<k>`")));
                };
                let target = wire(w)?;
                let param_index: usize = p
                    .strip_prefix('p')
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| err(format!("invalid parameter reference {p:?}")))?;
                if let Some(prev) = param_lines.insert(param_index, line_no) {
                    return Err(err(format!(
                        "duplicate parameter index p{param_index} (first used on line {prev})"
                    )));
                }
                pqc.push(PqcGateSlot::Rotation {
                    kind,
                    target,
                    param_index,
                });
            }
            "cnot" => {
                let [c, t] = args else {
                    return Err(err("expected `cnot <control> <target>`".into()));
                };
                let control = wire(c)?;
                let target = wire(t)?;
                if control == target {
                    return Err(err(format!("CNOT control and target are both wire {target}")));
                }
                pqc.push(PqcGateSlot::Cnot { control, target });
            }
            "measure" => {
                if measured.is_some() {
                    return Err(err("duplicate `measure` statement".into()));
                }
                if args.is_empty() {
                    return Err(err("`measure` needs at least one wire".into()));
                }
                let mut wires = Vec::with_capacity(args.len());
                for tok in args {
                    let w = wire(tok)?;
                    if wires.contains(&w) {
                        return Err(err(format!("wire {w} measured twice")));
                    }
                    wires.push(w);
                }
                measured = Some(wires);
            }
            other => return Err(err(format!("unknown statement {other:?}"))),
        }
    }

    let end_err = |message: &str| Error::Parse {
        line: last_line.max(1),
        message: message.into(),
    };
    let n_wires = n_wires.ok_or_else(|| end_err("missing `wires` statement"))?;
    let measured = measured.ok_or_else(|| end_err("missing `measure` statement"))?;
    if let Some(pos) = param_lines.keys().enumerate().position(|(pos, k)| pos != *k) {
        let line = param_lines.range(pos..).next().map(|(_, l)| *l).unwrap_or(last_line);
        return Err(Error::Parse {
            line,
            message: format!("parameter indices must be contiguous from 0; p{pos} is missing"),
        });
    }
    CircuitSpec::new(n_wires, encoder.unwrap_or_default(), pqc, measured).map_err(|e| {
        Error::Parse {
            line: last_line.max(1),
            message: e.to_string(),
        }
    })
}
