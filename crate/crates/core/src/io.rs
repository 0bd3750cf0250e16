//! File formats for operators and states, and content digests.
//!
//! Operator files are JSON:
//! `{"n": 2, "format": "dense" | "coo", "entries": [[row, col, re, im], ...], "hermitian": true}`.
//! Entries not listed are zero; `dense` only promises that every entry is
//! listed. A `hermitian` flag, when present, is checked against the data.
//!
//! State files are `{"n": 2, "amplitudes": [[re, im], ...]}` with all `2^n`
//! amplitudes in basis order.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, StateVector, HERMITIAN_TOL};

/// Hex SHA-256 over the qubit count and the little-endian bytes of every entry.
pub fn operator_digest(a: &DenseOperator) -> String {
    let mut h = Sha256::new();
    h.update((a.n_qubits() as u64).to_le_bytes());
    for z in a.as_slice() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryFormat {
    Dense,
    Coo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub n: usize,
    pub format: EntryFormat,
    pub entries: Vec<(usize, usize, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hermitian: Option<bool>,
}

impl OperatorFile {
    pub fn from_operator(a: &DenseOperator, format: EntryFormat) -> Self {
        let dim = a.dim();
        let entries = (0..dim * dim)
            .map(|i| (i / dim, i % dim, a.as_slice()[i]))
            .filter(|(_, _, z)| format == EntryFormat::Dense || *z != C64::new(0.0, 0.0))
            .map(|(r, c, z)| (r, c, z.re, z.im))
            .collect();
        Self { n: a.n_qubits(), format, entries, hermitian: Some(a.is_hermitian(HERMITIAN_TOL)) }
    }

    pub fn to_operator(&self) -> Result<DenseOperator> {
        if self.n > 16 {
            return Err(Error::Data(format!("n = {} is too large for a dense operator", self.n)));
        }
        let dim = 1usize << self.n;
        if self.format == EntryFormat::Dense && self.entries.len() != dim * dim {
            return Err(Error::Data(format!("dense format needs {} entries, found {}", dim * dim, self.entries.len())));
        }
        let mut a = DenseOperator::zeros(self.n);
        let mut seen = vec![false; dim * dim];
        for (i, &(r, c, re, im)) in self.entries.iter().enumerate() {
            if r >= dim || c >= dim {
                return Err(Error::Data(format!("entry {i}: index ({r}, {c}) out of range for dimension {dim}")));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Data(format!("entry {i}: non-finite value")));
            }
            if std::mem::replace(&mut seen[r * dim + c], true) {
                return Err(Error::Data(format!("entry {i}: duplicate index ({r}, {c})")));
            }
            a.set(r, c, C64::new(re, im));
        }
        if self.hermitian == Some(true) && !a.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian(a.max_hermitian_deviation()));
        }
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub n: usize,
    pub amplitudes: Vec<(f64, f64)>,
}

impl StateFile {
    pub fn from_state(psi: &StateVector) -> Self {
        Self { n: psi.n_qubits(), amplitudes: psi.amplitudes().iter().map(|z| (z.re, z.im)).collect() }
    }

    pub fn to_state(&self) -> Result<StateVector> {
        let dim = 1usize << self.n;
        if self.amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: self.amplitudes.len() });
        }
        StateVector::new(self.n, self.amplitudes.iter().map(|&(re, im)| C64::new(re, im)).collect())
    }
}

pub fn read_operator(path: &Path) -> Result<DenseOperator> {
    let file: OperatorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.to_operator()
}

pub fn write_operator(path: &Path, a: &DenseOperator, format: EntryFormat) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&OperatorFile::from_operator(a, format))?)?;
    Ok(())
}

pub fn read_state(path: &Path) -> Result<StateVector> {
    let file: StateFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.to_state()
}

pub fn write_state(path: &Path, psi: &StateVector) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&StateFile::from_state(psi))?)?;
    Ok(())
}
