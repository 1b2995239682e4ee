//! Test-only oracles, independent of the crate's simulation path.
//!
//! Every gate is expanded to a full 2^n x 2^n matrix by Kronecker products
//! (wire 0 leftmost) and applied by dense matrix-vector multiplication.
#![allow(dead_code)]

use num_complex::Complex64;
use plateau_core::{CircuitSpec, ParameterVector, PqcGateSlot, RotationKind};

pub type Mat = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity2() -> Mat {
    vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]
}

fn pauli(kind: RotationKind) -> Mat {
    match kind {
        RotationKind::Rx => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        RotationKind::Ry => vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]],
        RotationKind::Rz => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
    }
}

/// exp(-iθP/2) = cos(θ/2) I - i sin(θ/2) P
pub fn rotation(kind: RotationKind, theta: f64) -> Mat {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let p = pauli(kind);
    let id = identity2();
    (0..2)
        .map(|r| (0..2).map(|k| id[r][k] * co - c(0.0, 1.0) * si * p[r][k]).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![c(0.0, 0.0); ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

/// `ops[w]` placed on wire w, identity elsewhere.
pub fn on_wires(n: usize, ops: &[(usize, Mat)]) -> Mat {
    let mut acc: Mat = vec![vec![c(1.0, 0.0)]];
    for w in 0..n {
        let op = ops
            .iter()
            .find(|(wire, _)| *wire == w)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(identity2);
        acc = kron(&acc, &op);
    }
    acc
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// |0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t
pub fn cnot(n: usize, control: usize, target: usize) -> Mat {
    let p0 = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]];
    let p1 = vec![vec![c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]];
    let x = pauli(RotationKind::Rx);
    add(
        &on_wires(n, &[(control, p0)]),
        &on_wires(n, &[(control, p1), (target, x)]),
    )
}

pub fn matvec(m: &Mat, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// ⟨ψ|Z_w|ψ⟩ with Z_w expanded densely.
pub fn expect_z(n: usize, psi: &[Complex64], wire: usize) -> f64 {
    let z = on_wires(n, &[(wire, pauli(RotationKind::Rz))]);
    let zpsi = matvec(&z, psi);
    psi.iter().zip(&zpsi).map(|(a, b)| a.conj() * b).sum::<Complex64>().re
}

/// Final state of encoder + PQC by dense products.
pub fn oracle_state(spec: &CircuitSpec, params: &ParameterVector, features: &[f64]) -> Vec<Complex64> {
    let n = spec.n_wires();
    let mut psi = vec![c(0.0, 0.0); 1 << n];
    psi[0] = c(1.0, 0.0);
    let scale = spec.encoder().feature_scale;
    for (w, x) in features.iter().enumerate() {
        psi = matvec(&on_wires(n, &[(w, rotation(RotationKind::Ry, scale * x))]), &psi);
    }
    for slot in spec.pqc() {
        let m = match *slot {
            PqcGateSlot::Rotation { kind, target, param_index } => {
                on_wires(n, &[(target, rotation(kind, params.values()[param_index]))])
            }
            PqcGateSlot::Cnot { control, target } => cnot(n, control, target),
        };
        psi = matvec(&m, &psi);
    }
    psi
}

pub fn oracle_forward(spec: &CircuitSpec, params: &ParameterVector, features: &[f64]) -> Vec<f64> {
    let psi = oracle_state(spec, params, features);
    spec.measured_wires()
        .iter()
        .map(|&w| expect_z(spec.n_wires(), &psi, w))
        .collect()
}

/// Central difference of `f` at coordinate k.
pub fn central_difference(f: impl Fn(&ParameterVector) -> f64, params: &ParameterVector, k: usize, h: f64) -> f64 {
    (f(&params.shifted(k, h)) - f(&params.shifted(k, -h))) / (2.0 * h)
}

/// Two-pass population variance.
pub fn two_pass_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub mod http;
