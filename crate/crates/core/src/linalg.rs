//! Dense complex kernels for operators on up to ~10 qubits.
//!
//! Operators are stored row-major as `2^n x 2^n` arrays of [`C64`]. Qubit 1
//! (index 0) is the leftmost tensor factor, i.e. the most significant bit of a
//! basis-state index.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::rng;

/// Elementwise tolerance for treating an operator as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance on `||UU^H - I||_F` for accepting a unitary.
pub const UNITARY_TOL: f64 = 1e-8;
/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-8;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_CAP: usize = 10_000;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn dim_of(n_qubits: usize) -> usize {
    1usize << n_qubits
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    n_qubits: usize,
    dim: usize,
    data: Vec<C64>,
}

impl DenseOperator {
    pub fn zeros(n_qubits: usize) -> Self {
        let dim = dim_of(n_qubits);
        Self { n_qubits, dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(n_qubits: usize) -> Self {
        let mut out = Self::zeros(n_qubits);
        for i in 0..out.dim {
            out.data[i * out.dim + i] = ONE;
        }
        out
    }

    /// Wraps a row-major array; its length must be exactly `4^n`.
    pub fn from_row_major(n_qubits: usize, data: Vec<C64>) -> Result<Self> {
        let dim = dim_of(n_qubits);
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { n_qubits, dim, data })
    }

    pub fn from_fn(n_qubits: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let dim = dim_of(n_qubits);
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { n_qubits, dim, data }
    }

    pub fn from_diag(diag: &DiagObservable) -> Self {
        let mut out = Self::zeros(diag.n_qubits);
        for (i, v) in diag.values.iter().enumerate() {
            out.data[i * out.dim + i] = *v;
        }
        out
    }

    /// Rank-one operator `|a><b|`.
    pub fn outer(a: &StateVector, b: &StateVector) -> Result<Self> {
        check_dim(a.n_qubits, b.n_qubits)?;
        Ok(Self::from_fn(a.n_qubits, |i, j| a.amps[i] * b.amps[j].conj()))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn row(&self, row: usize) -> &[C64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n_qubits, |i, j| self.get(j, i).conj())
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_hermitian_deviation() <= tol
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { data: self.data.iter().map(|z| z * factor).collect(), ..self.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.n_qubits, other.n_qubits)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..self.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.n_qubits, other.n_qubits)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..self.clone() })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.n_qubits, other.n_qubits)?;
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            let out_row = &mut out[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * d..(k + 1) * d];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { n_qubits: self.n_qubits, dim: d, data: out })
    }

    pub fn apply(&self, psi: &StateVector) -> Result<Vec<C64>> {
        check_dim(self.n_qubits, psi.n_qubits)?;
        Ok((0..self.dim).map(|i| self.row(i).iter().zip(&psi.amps).map(|(a, x)| a * x).sum()).collect())
    }

    /// Tensor product `self ⊗ other`; `self` acts on the leading qubits.
    pub fn kron(&self, other: &Self) -> Self {
        let n = self.n_qubits + other.n_qubits;
        let od = other.dim;
        Self::from_fn(n, |i, j| self.get(i / od, j / od) * other.get(i % od, j % od))
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `||UU^H - I||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let z: C64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b.conj()).sum();
                let target = if i == j { ONE } else { ZERO };
                acc += (z - target).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

fn check_dim(expected_qubits: usize, found_qubits: usize) -> Result<()> {
    if expected_qubits != found_qubits {
        return Err(Error::DimensionMismatch { expected: dim_of(expected_qubits), found: dim_of(found_qubits) });
    }
    Ok(())
}

/// Normalized pure state over `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// Accepts amplitudes whose norm is 1 within `1e-10`.
    pub fn new(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dim_of(n_qubits) {
            return Err(Error::DimensionMismatch { expected: dim_of(n_qubits), found: amps.len() });
        }
        let norm = l2(&amps);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(n_qubits: usize, mut amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dim_of(n_qubits) {
            return Err(Error::DimensionMismatch { expected: dim_of(n_qubits), found: amps.len() });
        }
        let norm = l2(&amps);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amps })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim_of(n_qubits)];
        amps[index] = ONE;
        Self { n_qubits, amps }
    }

    /// Haar-random state from complex Gaussian amplitudes.
    pub fn random<R: rand::Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let amps =
            (0..dim_of(n_qubits)).map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).collect();
        Self::normalized(n_qubits, amps).expect("gaussian vector is nonzero")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        l2(&self.amps)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        check_dim(self.n_qubits, other.n_qubits)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `<psi|A|psi>`, which equals `tr(|psi><psi| A)`.
    pub fn expectation(&self, op: &DenseOperator) -> Result<C64> {
        let a_psi = op.apply(self)?;
        Ok(self.amps.iter().zip(&a_psi).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Diagonal operator stored as its `2^n` diagonal entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagObservable {
    n_qubits: usize,
    values: Vec<C64>,
}

impl DiagObservable {
    pub fn new(n_qubits: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != dim_of(n_qubits) {
            return Err(Error::DimensionMismatch { expected: dim_of(n_qubits), found: values.len() });
        }
        Ok(Self { n_qubits, values })
    }

    pub fn from_real(n_qubits: usize, values: &[f64]) -> Result<Self> {
        Self::new(n_qubits, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, b: usize) -> C64 {
        self.values[b]
    }

    /// Spectral norm of a diagonal matrix: the largest entry modulus.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        l2(&self.values)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Drops imaginary parts (used when the source operator is Hermitian).
    pub fn into_real(mut self) -> Self {
        self.values.iter_mut().for_each(|v| v.im = 0.0);
        self
    }
}

pub fn frobenius_norm(a: &DenseOperator) -> f64 {
    l2(&a.data)
}

/// Largest singular value via power iteration on `A^H A`.
///
/// The start vector comes from a fixed seed, so the result is deterministic.
/// Iteration stops when successive Rayleigh quotients agree to a fraction of
/// `tol`; the singular value is then accurate to about `tol` relative.
pub fn spectral_norm(a: &DenseOperator, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("spectral_norm tol must be > 0, got {tol}")));
    }
    if a.is_zero() {
        return Ok(0.0);
    }
    let d = a.dim;
    let mut rng = rng::stream(0x5EED_5EC7, &[a.n_qubits as u64]);
    let mut v: Vec<C64> =
        (0..d).map(|_| C64::new(rng::unit_f64(&mut rng) - 0.5, rng::unit_f64(&mut rng) - 0.5)).collect();
    let nv = l2(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    let mut w = vec![ZERO; d];
    let mut x = vec![ZERO; d];
    let mut prev = f64::NAN;
    for iter in 0..POWER_ITERATION_CAP {
        // w = A v
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = a.row(i).iter().zip(&v).map(|(p, q)| p * q).sum();
        }
        // Rayleigh quotient of A^H A at unit v is ||A v||^2.
        let rq = w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        // x = A^H w
        x.iter_mut().for_each(|z| *z = ZERO);
        for (i, wi) in w.iter().enumerate() {
            for (xj, aij) in x.iter_mut().zip(a.row(i)) {
                *xj += aij.conj() * wi;
            }
        }
        let nx = l2(&x);
        if nx == 0.0 {
            return Ok(rq.sqrt());
        }
        for (vj, xj) in v.iter_mut().zip(&x) {
            *vj = xj / nx;
        }
        if iter > 0 && (rq - prev).abs() <= 0.1 * tol * rq {
            return Ok(rq.sqrt());
        }
        prev = rq;
    }
    Err(Error::NoConvergence(POWER_ITERATION_CAP))
}

/// Spectral norm that falls back to a full decomposition when power
/// iteration stalls on a nearly degenerate spectrum.
pub fn spectral_norm_robust(a: &DenseOperator) -> f64 {
    match spectral_norm(a, SPECTRAL_TOL) {
        Ok(s) => s,
        Err(_) => {
            let svd = a.to_nalgebra().svd(false, false);
            svd.singular_values.iter().cloned().fold(0.0, f64::max)
        }
    }
}

pub fn diag_of(a: &DenseOperator) -> DiagObservable {
    DiagObservable { n_qubits: a.n_qubits, values: (0..a.dim).map(|i| a.get(i, i)).collect() }
}

/// `U A U^H`.
pub fn conjugate(a: &DenseOperator, u: &DenseOperator) -> Result<DenseOperator> {
    check_dim(a.n_qubits, u.n_qubits)?;
    let defect = u.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    u.matmul(a)?.matmul(&u.adjoint())
}

/// Eigen-decomposition of a Hermitian operator.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second value.
pub fn hermitian_eig(a: &DenseOperator) -> Result<(Vec<f64>, DenseOperator)> {
    let dev = a.max_hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let eig = a.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..a.dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseOperator::from_fn(a.n_qubits, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok((values, vectors))
}

/// Computational-basis outcome distribution `p(b) = |<b|U|psi>|^2`.
pub fn born_distribution(psi: &StateVector, u: &DenseOperator) -> Result<Vec<f64>> {
    check_dim(u.n_qubits, psi.n_qubits)?;
    let defect = u.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    Ok(u.apply(psi)?.iter().map(|z| z.norm_sqr()).collect())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    pub fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub fn pauli_x() -> DenseOperator {
        DenseOperator::from_row_major(1, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    pub fn pauli_y() -> DenseOperator {
        DenseOperator::from_row_major(1, vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap()
    }

    pub fn pauli_z() -> DenseOperator {
        DenseOperator::from_row_major(1, vec![ONE, ZERO, ZERO, -ONE]).unwrap()
    }

    pub fn hadamard() -> DenseOperator {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DenseOperator::from_row_major(1, vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]).unwrap()
    }

    pub fn random_matrix<R: Rng>(n: usize, rng: &mut R) -> DenseOperator {
        DenseOperator::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> DenseOperator {
        let m = random_matrix(n, rng);
        m.add(&m.adjoint()).unwrap().scale(c(0.5, 0.0))
    }

    /// Unitary from Gram-Schmidt on a random complex matrix.
    pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> DenseOperator {
        let m = random_matrix(n, rng);
        let d = m.dim();
        let mut rows: Vec<Vec<C64>> = (0..d).map(|i| m.row(i).to_vec()).collect();
        for i in 0..d {
            for j in 0..i {
                let proj: C64 = rows[j].iter().zip(&rows[i]).map(|(a, b)| a.conj() * b).sum();
                let rj = rows[j].clone();
                for (x, y) in rows[i].iter_mut().zip(&rj) {
                    *x -= proj * y;
                }
            }
            let nrm = l2(&rows[i]);
            rows[i].iter_mut().for_each(|x| *x /= nrm);
        }
        DenseOperator::from_row_major(n, rows.concat()).unwrap()
    }

    /// Naive triple loop, independent of `matmul`.
    pub fn naive_product(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
        let d = a.dim();
        DenseOperator::from_fn(a.n_qubits(), |i, j| (0..d).map(|k| a.get(i, k) * b.get(k, j)).sum())
    }
}
