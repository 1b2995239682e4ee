//! Dense statevector simulation.
//!
//! Wire 0 is the most significant bit of the basis index, so for two wires
//! the basis order is |00⟩, |01⟩, |10⟩, |11⟩ with the left bit on wire 0.
//! Rotations use the `exp(-iθP/2)` convention.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported register (2^20 amplitudes, 16 MiB).
pub const MAX_WIRES: usize = 20;

/// Pure state of an n-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_wires: usize,
    amplitudes: Vec<Complex64>,
}

/// Gates understood by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
    Hadamard { target: usize },
}

impl Gate {
    pub fn target(&self) -> usize {
        match *self {
            Gate::Rx { target, .. }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. }
            | Gate::Cnot { target, .. }
            | Gate::Hadamard { target } => target,
        }
    }

    pub fn control(&self) -> Option<usize> {
        match *self {
            Gate::Cnot { control, .. } => Some(control),
            _ => None,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => {
                Some(angle)
            }
            _ => None,
        }
    }

    fn matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        let half = |angle: f64| ((angle / 2.0).cos(), (angle / 2.0).sin());
        let m = match *self {
            Gate::Rx { angle, .. } => {
                let (c, s) = half(angle);
                [
                    [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                    [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
                ]
            }
            Gate::Ry { angle, .. } => {
                let (c, s) = half(angle);
                [
                    [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                    [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                ]
            }
            Gate::Rz { angle, .. } => {
                let (c, s) = half(angle);
                [
                    [Complex64::new(c, -s), Complex64::new(0.0, 0.0)],
                    [Complex64::new(0.0, 0.0), Complex64::new(c, s)],
                ]
            }
            Gate::Hadamard { .. } => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::Cnot { .. } => return None,
        };
        Some(m)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Rx { target, angle } => write!(f, "RX({angle}) q{target}"),
            Gate::Ry { target, angle } => write!(f, "RY({angle}) q{target}"),
            Gate::Rz { target, angle } => write!(f, "RZ({angle}) q{target}"),
            Gate::Cnot { control, target } => write!(f, "CNOT q{control} -> q{target}"),
            Gate::Hadamard { target } => write!(f, "H q{target}"),
        }
    }
}

impl StateVector {
    /// |0…0⟩ on `n_wires` qubits.
    pub fn zero(n_wires: usize) -> Result<Self> {
        if !(1..=MAX_WIRES).contains(&n_wires) {
            return Err(Error::Config(format!(
                "n_wires must be in 1..={MAX_WIRES}, got {n_wires}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_wires];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_wires,
            amplitudes,
        })
    }

    /// Computational basis state `index` (wire 0 = most significant bit).
    pub fn basis(n_wires: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero(n_wires)?;
        if index >= state.amplitudes.len() {
            return Err(Error::Input(format!(
                "basis index {index} out of range for {n_wires} wires"
            )));
        }
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    pub fn n_wires(&self) -> usize {
        self.n_wires
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_wire(&self, wire: usize) -> Result<()> {
        if wire >= self.n_wires {
            return Err(Error::Circuit(format!(
                "wire {wire} out of range for {} wires",
                self.n_wires
            )));
        }
        Ok(())
    }

    /// Bit mask of `wire` inside a basis index.
    fn mask(&self, wire: usize) -> usize {
        1 << (self.n_wires - 1 - wire)
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        let target = gate.target();
        self.check_wire(target)?;
        let tmask = self.mask(target);

        if let Gate::Cnot { control, .. } = *gate {
            self.check_wire(control)?;
            if control == target {
                return Err(Error::Circuit(format!(
                    "CNOT control and target are both wire {target}"
                )));
            }
            let cmask = self.mask(control);
            for i in 0..self.amplitudes.len() {
                if i & cmask != 0 && i & tmask == 0 {
                    self.amplitudes.swap(i, i | tmask);
                }
            }
            return Ok(());
        }

        let m = gate.matrix().expect("single-qubit gate has a matrix");
        for i in 0..self.amplitudes.len() {
            if i & tmask != 0 {
                continue;
            }
            let j = i | tmask;
            let a0 = self.amplitudes[i];
            let a1 = self.amplitudes[j];
            self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    /// ⟨Z⟩ on `wire`.
    pub fn expectation_z(&self, wire: usize) -> Result<f64> {
        self.check_wire(wire)?;
        let mask = self.mask(wire);
        let value = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if i & mask == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum::<f64>();
        Ok(value.clamp(-1.0, 1.0))
    }
}

/// Returns |0…0⟩ on `n_wires` qubits.
pub fn zero_state(n_wires: usize) -> Result<StateVector> {
    StateVector::zero(n_wires)
}

/// Returns the state after applying `gate`.
pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

/// Pauli-Z expectation value on `wire`.
pub fn expectation_pauli_z(state: &StateVector, wire: usize) -> Result<f64> {
    state.expectation_z(wire)
}
