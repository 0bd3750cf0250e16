//! The depth-`L` brick ansatz.
//!
//! Layer 0 is one arbitrary single-qubit gate per qubit. Each following layer
//! places two-qubit gates on neighbouring pairs: odd layers on (1,2),(3,4),...
//! and even layers on (2,3),(4,5),... (1-based qubits, open boundary). Every
//! two-qubit gate is an iSWAP followed by two arbitrary single-qubit gates,
//! `(A ⊗ B) · iSWAP`.
//!
//! Parameters are laid out as the layer-0 triples `(theta, phi, lambda)` qubit
//! by qubit, then for each brick layer and each gate in it six angles: the
//! triple for the first qubit followed by the triple for the second.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, StateVector};

pub type Gate1 = [[C64; 2]; 2];
pub type Gate2 = [[C64; 4]; 4];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Euler-angle single-qubit gate
/// `[[cos(t/2), -e^{i l} sin(t/2)], [e^{i p} sin(t/2), e^{i(p+l)} cos(t/2)]]`.
pub fn single_qubit_gate(theta: f64, phi: f64, lam: f64) -> Gate1 {
    let (s, c) = (theta / 2.0).sin_cos();
    [[C64::new(c, 0.0), -C64::from_polar(s, lam)], [C64::from_polar(s, phi), C64::from_polar(c, phi + lam)]]
}

pub fn iswap() -> Gate2 {
    [[ONE, ZERO, ZERO, ZERO], [ZERO, ZERO, I, ZERO], [ZERO, I, ZERO, ZERO], [ZERO, ZERO, ZERO, ONE]]
}

/// `(A ⊗ B) · iSWAP` with `A` from `angles[0..3]` on the first qubit and `B`
/// from `angles[3..6]` on the second.
pub fn two_qubit_gate(angles: &[f64]) -> Gate2 {
    assert_eq!(angles.len(), 6, "two-qubit gate takes six angles");
    let a = single_qubit_gate(angles[0], angles[1], angles[2]);
    let b = single_qubit_gate(angles[3], angles[4], angles[5]);
    // iSWAP permutes |01> <-> |10> with phase i, so column j of the product is
    // a scaled column of A ⊗ B.
    let ab = |r: usize, c: usize| a[r >> 1][c >> 1] * b[r & 1][c & 1];
    let mut g = [[ZERO; 4]; 4];
    for r in 0..4 {
        g[r][0] = ab(r, 0);
        g[r][1] = ab(r, 2) * I;
        g[r][2] = ab(r, 1) * I;
        g[r][3] = ab(r, 3);
    }
    g
}

fn adjoint1(g: &Gate1) -> Gate1 {
    [[g[0][0].conj(), g[1][0].conj()], [g[0][1].conj(), g[1][1].conj()]]
}

fn adjoint2(g: &Gate2) -> Gate2 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = g[c][r].conj();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
}

/// Where a gate sits in the circuit and which parameters drive it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateSlot {
    Single { qubit: usize, offset: usize },
    Pair { first: usize, offset: usize },
}

impl GateSlot {
    pub fn param_range(&self) -> std::ops::Range<usize> {
        match *self {
            GateSlot::Single { offset, .. } => offset..offset + 3,
            GateSlot::Pair { offset, .. } => offset..offset + 6,
        }
    }
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, depth: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("ansatz needs at least one qubit".into()));
        }
        Ok(Self { n_qubits, depth })
    }

    /// Number of two-qubit gates in brick layer `layer` (1-based).
    pub fn gates_in_layer(&self, layer: usize) -> usize {
        if layer % 2 == 1 {
            self.n_qubits / 2
        } else {
            (self.n_qubits - 1) / 2
        }
    }

    pub fn param_count(&self) -> usize {
        3 * self.n_qubits + 6 * (1..=self.depth).map(|l| self.gates_in_layer(l)).sum::<usize>()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Gates in application order, layer 0 first.
    pub fn slots(&self) -> Vec<GateSlot> {
        let mut slots = Vec::new();
        let mut offset = 0;
        for qubit in 0..self.n_qubits {
            slots.push(GateSlot::Single { qubit, offset });
            offset += 3;
        }
        for layer in 1..=self.depth {
            let start = if layer % 2 == 1 { 0 } else { 1 };
            for first in (start..self.n_qubits.saturating_sub(1)).step_by(2) {
                slots.push(GateSlot::Pair { first, offset });
                offset += 6;
            }
        }
        slots
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector(vec![0.0; self.param_count()])
    }

    pub fn check(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::ParamLength { expected: self.param_count(), found: theta.len() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum PlacedGate {
    Single { qubit: usize, m: Gate1 },
    Pair { first: usize, m: Gate2 },
}

impl PlacedGate {
    pub(crate) fn from_slot(slot: GateSlot, params: &[f64]) -> Self {
        match slot {
            GateSlot::Single { qubit, offset } => PlacedGate::Single {
                qubit,
                m: single_qubit_gate(params[offset], params[offset + 1], params[offset + 2]),
            },
            GateSlot::Pair { first, offset } => {
                PlacedGate::Pair { first, m: two_qubit_gate(&params[offset..offset + 6]) }
            }
        }
    }

    fn adjoint(&self) -> Self {
        match self {
            PlacedGate::Single { qubit, m } => PlacedGate::Single { qubit: *qubit, m: adjoint1(m) },
            PlacedGate::Pair { first, m } => PlacedGate::Pair { first: *first, m: adjoint2(m) },
        }
    }

    /// `data <- G data`, treating `data` as `dim` rows of `cols` entries.
    pub(crate) fn left(&self, n: usize, data: &mut [C64], cols: usize) {
        match self {
            PlacedGate::Single { qubit, m } => left_1q(n, *qubit, m, data, cols),
            PlacedGate::Pair { first, m } => left_2q(n, *first, m, data, cols),
        }
    }

    /// `data <- data G^H` for a square `dim x dim` matrix.
    pub(crate) fn right_adjoint(&self, n: usize, data: &mut [C64]) {
        match self {
            PlacedGate::Single { qubit, m } => right_adj_1q(n, *qubit, m, data),
            PlacedGate::Pair { first, m } => right_adj_2q(n, *first, m, data),
        }
    }

    /// `data <- G data G^H`.
    pub(crate) fn conjugate(&self, n: usize, data: &mut [C64]) {
        self.left(n, data, 1 << n);
        self.right_adjoint(n, data);
    }
}

#[inline]
fn bit_stride(n: usize, qubit: usize) -> usize {
    1 << (n - 1 - qubit)
}

fn left_1q(n: usize, qubit: usize, g: &Gate1, data: &mut [C64], cols: usize) {
    let s = bit_stride(n, qubit);
    let dim = 1 << n;
    for r0 in (0..dim).filter(|r| r & s == 0) {
        let r1 = r0 | s;
        let (lo, hi) = data.split_at_mut(r1 * cols);
        let row0 = &mut lo[r0 * cols..(r0 + 1) * cols];
        let row1 = &mut hi[..cols];
        for (a0, a1) in row0.iter_mut().zip(row1.iter_mut()) {
            let (x0, x1) = (*a0, *a1);
            *a0 = g[0][0] * x0 + g[0][1] * x1;
            *a1 = g[1][0] * x0 + g[1][1] * x1;
        }
    }
}

fn left_2q(n: usize, first: usize, g: &Gate2, data: &mut [C64], cols: usize) {
    let s_hi = bit_stride(n, first);
    let s_lo = bit_stride(n, first + 1);
    let dim = 1 << n;
    for base in (0..dim).filter(|r| r & (s_hi | s_lo) == 0) {
        let rows = [base, base | s_lo, base | s_hi, base | s_hi | s_lo];
        for c in 0..cols {
            let x = [
                data[rows[0] * cols + c],
                data[rows[1] * cols + c],
                data[rows[2] * cols + c],
                data[rows[3] * cols + c],
            ];
            for (k, &r) in rows.iter().enumerate() {
                data[r * cols + c] = g[k][0] * x[0] + g[k][1] * x[1] + g[k][2] * x[2] + g[k][3] * x[3];
            }
        }
    }
}

fn right_adj_1q(n: usize, qubit: usize, g: &Gate1, data: &mut [C64]) {
    let s = bit_stride(n, qubit);
    let dim = 1 << n;
    let h = adjoint1(g);
    for row in data.chunks_exact_mut(dim) {
        for c0 in (0..dim).filter(|c| c & s == 0) {
            let c1 = c0 | s;
            let (x0, x1) = (row[c0], row[c1]);
            row[c0] = x0 * h[0][0] + x1 * h[1][0];
            row[c1] = x0 * h[0][1] + x1 * h[1][1];
        }
    }
}

fn right_adj_2q(n: usize, first: usize, g: &Gate2, data: &mut [C64]) {
    let s_hi = bit_stride(n, first);
    let s_lo = bit_stride(n, first + 1);
    let dim = 1 << n;
    let h = adjoint2(g);
    for row in data.chunks_exact_mut(dim) {
        for base in (0..dim).filter(|c| c & (s_hi | s_lo) == 0) {
            let cols = [base, base | s_lo, base | s_hi, base | s_hi | s_lo];
            let x = [row[cols[0]], row[cols[1]], row[cols[2]], row[cols[3]]];
            for (k, &c) in cols.iter().enumerate() {
                row[c] = x[0] * h[0][k] + x[1] * h[1][k] + x[2] * h[2][k] + x[3] * h[3][k];
            }
        }
    }
}

/// A concrete circuit `U_L(theta)` as a list of placed gates.
#[derive(Clone, Debug)]
pub struct Circuit {
    spec: AnsatzSpec,
    gates: Vec<PlacedGate>,
}

impl Circuit {
    pub fn new(spec: AnsatzSpec, theta: &ParamVector) -> Result<Self> {
        spec.check(theta)?;
        let gates = spec.slots().into_iter().map(|s| PlacedGate::from_slot(s, &theta.0)).collect();
        Ok(Self { spec, gates })
    }

    pub fn spec(&self) -> AnsatzSpec {
        self.spec
    }

    fn check_qubits(&self, n: usize) -> Result<()> {
        if n != self.spec.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.spec.dim(), found: 1 << n });
        }
        Ok(())
    }

    /// `U A U^H`, streaming gates over rows then columns.
    pub fn conjugate(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.check_qubits(a.n_qubits())?;
        let mut out = a.clone();
        for g in &self.gates {
            g.conjugate(self.spec.n_qubits, out.as_mut_slice());
        }
        Ok(out)
    }

    /// `U^H A U`.
    pub fn conjugate_adjoint(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.check_qubits(a.n_qubits())?;
        let mut out = a.clone();
        for g in self.gates.iter().rev() {
            g.adjoint().conjugate(self.spec.n_qubits, out.as_mut_slice());
        }
        Ok(out)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_qubits(psi.n_qubits())?;
        let mut out = psi.clone();
        for g in &self.gates {
            g.left(self.spec.n_qubits, out.amplitudes_mut(), 1);
        }
        Ok(out)
    }

    pub fn apply_adjoint(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_qubits(psi.n_qubits())?;
        let mut out = psi.clone();
        for g in self.gates.iter().rev() {
            g.adjoint().left(self.spec.n_qubits, out.amplitudes_mut(), 1);
        }
        Ok(out)
    }

    pub fn unitary(&self) -> DenseOperator {
        let n = self.spec.n_qubits;
        let mut u = DenseOperator::identity(n);
        for g in &self.gates {
            g.left(n, u.as_mut_slice(), 1 << n);
        }
        u
    }
}

pub fn build_unitary(spec: AnsatzSpec, theta: &ParamVector) -> Result<DenseOperator> {
    Ok(Circuit::new(spec, theta)?.unitary())
}

pub fn apply_circuit_to_matrix(spec: AnsatzSpec, theta: &ParamVector, a: &DenseOperator) -> Result<DenseOperator> {
    Circuit::new(spec, theta)?.conjugate(a)
}

pub fn apply_circuit_to_state(spec: AnsatzSpec, theta: &ParamVector, psi: &StateVector) -> Result<StateVector> {
    Circuit::new(spec, theta)?.apply(psi)
}
