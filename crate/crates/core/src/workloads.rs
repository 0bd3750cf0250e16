//! Benchmark instances and their exact references.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, hermitian_eig, DenseOperator, StateVector, HERMITIAN_TOL};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseHamiltonianSpec {
    pub n_qubits: usize,
    /// Stored nonzero entries; an off-diagonal pair counts twice.
    pub nnz: usize,
    pub magnitude_scale: f64,
    pub rng_seed: u64,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random Hermitian matrix with exactly `nnz` nonzero entries, scaled to
/// Frobenius norm `magnitude_scale`.
///
/// Candidate positions (each diagonal entry, each upper-triangle pair) are
/// visited in shuffled order; a position is taken only when the budget left
/// afterwards can still be met exactly by the positions not yet visited.
pub fn gen_sparse_hamiltonian(spec: &SparseHamiltonianSpec) -> Result<DenseOperator> {
    let n = spec.n_qubits;
    let dim = 1usize << n;
    if spec.nnz == 0 || spec.nnz > dim * dim {
        return Err(Error::InvalidArgument(format!("nnz must lie in 1..={} for n = {n}, got {}", dim * dim, spec.nnz)));
    }
    if !(spec.magnitude_scale > 0.0) {
        return Err(Error::InvalidArgument("magnitude_scale must be positive".into()));
    }
    let mut rng = rng::stream(spec.rng_seed, &[]);
    let mut positions: Vec<(usize, usize)> = (0..dim).flat_map(|r| (r..dim).map(move |c| (r, c))).collect();
    positions.shuffle(&mut rng);

    let mut diag_left = dim;
    let mut pairs_left = dim * (dim - 1) / 2;
    let feasible = |rem: usize, d: usize, p: usize| rem <= d + 2 * p && (rem.is_multiple_of(2) || d >= 1);
    let mut rem = spec.nnz;
    let mut h = DenseOperator::zeros(n);
    for (r, c) in positions {
        if rem == 0 {
            break;
        }
        let cost = if r == c { 1 } else { 2 };
        if r == c {
            diag_left -= 1;
        } else {
            pairs_left -= 1;
        }
        if cost <= rem && feasible(rem - cost, diag_left, pairs_left) {
            rem -= cost;
            if r == c {
                h.set(r, r, C64::new(gaussian(&mut rng), 0.0));
            } else {
                let z = C64::new(gaussian(&mut rng), gaussian(&mut rng)) / std::f64::consts::SQRT_2;
                h.set(r, c, z);
                h.set(c, r, z.conj());
            }
        }
    }
    debug_assert_eq!(rem, 0);
    let norm = frobenius_norm(&h);
    Ok(h.scale(C64::new(spec.magnitude_scale / norm, 0.0)))
}

/// Lowest eigenpair.
pub fn ground_state(h: &DenseOperator) -> Result<(f64, StateVector)> {
    if !h.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::NotHermitian(h.max_hermitian_deviation()));
    }
    let (values, vectors) = hermitian_eig(h)?;
    let dim = h.dim();
    let column = (0..dim).map(|r| vectors.get(r, 0)).collect();
    Ok((values[0], StateVector::normalized(h.n_qubits(), column)?))
}

/// Occupied orbitals of a Slater determinant: the first `tau` rows of the
/// `n_modes x n_modes` unitary `unitary` (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaterSpec {
    pub n_modes: usize,
    pub tau: usize,
    pub unitary: Vec<C64>,
    pub rng_seed: u64,
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let d = r[(j, j)];
            out.push(q[(i, j)] * (d / d.norm()));
        }
    }
    out
}

impl SlaterSpec {
    pub fn random(n_modes: usize, tau: usize, rng_seed: u64) -> Self {
        let mut rng = rng::stream(rng_seed, &[]);
        Self { n_modes, tau, unitary: random_unitary(n_modes, &mut rng), rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_modes;
        if n == 0 {
            return Err(Error::InvalidArgument("n_modes must be at least 1".into()));
        }
        if self.tau > n {
            return Err(Error::InvalidArgument(format!("tau = {} exceeds n_modes = {n}", self.tau)));
        }
        if self.unitary.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: self.unitary.len() });
        }
        let mut defect = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: C64 = (0..n).map(|k| self.unitary[i * n + k] * self.unitary[j * n + k].conj()).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                defect += (dot - target).norm_sqr();
            }
        }
        if defect.sqrt() > 1e-10 {
            return Err(Error::NotUnitary(defect.sqrt()));
        }
        Ok(())
    }
}

/// Applies `sum_j coeffs[j] b_j^dagger` with the Jordan-Wigner convention: mode
/// `j` is qubit `j` (leftmost factor first) and the sign counts occupied
/// modes before `j`.
fn create(n: usize, coeffs: &[C64], amps: &[C64]) -> Vec<C64> {
    let dim = amps.len();
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for (x, &a) in amps.iter().enumerate() {
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        for (j, &cj) in coeffs.iter().enumerate() {
            let bit = 1usize << (n - 1 - j);
            if x & bit != 0 {
                continue;
            }
            let before = x >> (n - j);
            let sign = if before.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            out[x | bit] += cj * a * sign;
        }
    }
    out
}

/// `b~_1^dagger ... b~_tau^dagger |0^n>` with `b~_k^dagger = sum_j conj(U_kj) b_j^dagger`.
pub fn slater_state(spec: &SlaterSpec) -> Result<StateVector> {
    spec.validate()?;
    let n = spec.n_modes;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    amps[0] = C64::new(1.0, 0.0);
    for k in (0..spec.tau).rev() {
        let coeffs: Vec<C64> = spec.unitary[k * n..(k + 1) * n].iter().map(|z| z.conj()).collect();
        amps = create(n, &coeffs, &amps);
    }
    StateVector::normalized(n, amps)
}

/// `(|0^{n+1}> + |1>|psi>) / sqrt(2)` with the ancilla as the leftmost qubit.
pub fn ancilla_superposition(psi: &StateVector) -> StateVector {
    let dim = psi.amplitudes().len();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![C64::new(0.0, 0.0); 2 * dim];
    amps[0] = C64::new(s, 0.0);
    for (b, a) in psi.amplitudes().iter().enumerate() {
        amps[dim + b] = a * s;
    }
    StateVector::new(psi.n_qubits() + 1, amps).expect("unit norm by construction")
}

/// `|1>|phi><0^{n+1}|`, so that `2 tr(|psi'><psi'| O) = <psi|phi>`.
pub fn inner_product_operator(phi: &StateVector) -> DenseOperator {
    let dim = phi.amplitudes().len();
    let mut o = DenseOperator::zeros(phi.n_qubits() + 1);
    for (b, a) in phi.amplitudes().iter().enumerate() {
        o.set(dim + b, 0, *a);
    }
    o
}

/// `((O + O^H)/2, -i(O - O^H)/2)`, so that `O = H1 + i H2`.
pub fn hermitian_split(o: &DenseOperator) -> (DenseOperator, DenseOperator) {
    let adj = o.adjoint();
    let h1 = o.add(&adj).expect("same shape").scale(C64::new(0.5, 0.0));
    let h2 = o.sub(&adj).expect("same shape").scale(C64::new(0.0, -0.5));
    (h1, h2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::{c, pauli_x, pauli_z, random_matrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count_nonzero(h: &DenseOperator) -> usize {
        h.as_slice().iter().filter(|z| **z != c(0.0, 0.0)).count()
    }

    #[test]
    fn sparse_examples() {
        let one =
            gen_sparse_hamiltonian(&SparseHamiltonianSpec { n_qubits: 2, nnz: 1, magnitude_scale: 2.0, rng_seed: 3 })
                .unwrap();
        assert_eq!(count_nonzero(&one), 1);
        let (b, z) = one.as_slice().iter().enumerate().find(|(_, z)| **z != c(0.0, 0.0)).unwrap();
        assert_eq!(b % 4, b / 4);
        assert!((z.re.abs() - 2.0).abs() < 1e-15 && z.im == 0.0);

        let spec = SparseHamiltonianSpec { n_qubits: 8, nnz: 64, magnitude_scale: 1.0, rng_seed: 11 };
        let a = gen_sparse_hamiltonian(&spec).unwrap();
        assert_eq!(a, gen_sparse_hamiltonian(&spec).unwrap());
        assert_eq!(count_nonzero(&a), 64);

        for nnz in [0, 17] {
            assert!(gen_sparse_hamiltonian(&SparseHamiltonianSpec {
                n_qubits: 2,
                nnz,
                magnitude_scale: 1.0,
                rng_seed: 0
            })
            .is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sparse_structure(n in 1usize..=3, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let dim = 1usize << n;
            let nnz = 1 + ((dim * dim - 1) as f64 * frac) as usize;
            let h = gen_sparse_hamiltonian(&SparseHamiltonianSpec { n_qubits: n, nnz, magnitude_scale: 1.5, rng_seed: seed }).unwrap();
            prop_assert!(h.max_hermitian_deviation() <= 1e-12);
            prop_assert_eq!(count_nonzero(&h), nnz);
            prop_assert!((frobenius_norm(&h) - 1.5).abs() < 1e-12);
            for i in 0..dim {
                prop_assert_eq!(h.get(i, i).im, 0.0);
            }
        }
    }

    #[test]
    fn ground_state_examples() {
        let (e, psi) = ground_state(&pauli_z()).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
        assert!((psi.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
        let (e, psi) = ground_state(&pauli_x()).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
        let minus = StateVector::new(1, vec![c(1.0, 0.0) / 2f64.sqrt(), c(-1.0, 0.0) / 2f64.sqrt()]).unwrap();
        assert!((minus.inner(&psi).unwrap().norm() - 1.0).abs() < 1e-12);

        let spec = SparseHamiltonianSpec { n_qubits: 4, nnz: 40, magnitude_scale: 1.0, rng_seed: 5 };
        let h = gen_sparse_hamiltonian(&spec).unwrap();
        let (e, psi) = ground_state(&h).unwrap();
        let hpsi = h.apply(&psi).unwrap();
        let res: f64 = hpsi.iter().zip(psi.amplitudes()).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-7 * frobenius_norm(&h));
        assert!(ground_state(&random_matrix(2, &mut ChaCha8Rng::seed_from_u64(1))).is_err());
    }

    fn identity_rows(n: usize) -> Vec<C64> {
        (0..n * n).map(|i| if i / n == i % n { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect()
    }

    #[test]
    fn slater_examples() {
        let spec = SlaterSpec { n_modes: 3, tau: 1, unitary: identity_rows(3), rng_seed: 0 };
        assert_eq!(slater_state(&spec).unwrap(), StateVector::basis(3, 0b100));
        let spec = SlaterSpec { tau: 2, ..spec };
        assert_eq!(slater_state(&spec).unwrap(), StateVector::basis(3, 0b110));

        let full = SlaterSpec::random(4, 4, 9);
        let psi = slater_state(&full).unwrap();
        assert!((psi.amplitudes()[15].norm() - 1.0).abs() < 1e-10);
        assert!(psi.amplitudes()[..15].iter().all(|z| z.norm() < 1e-10));

        assert!(slater_state(&SlaterSpec { tau: 5, ..full.clone() }).is_err());
        let mut skew = full;
        skew.unitary[0] += c(0.1, 0.0);
        assert!(matches!(slater_state(&skew), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn slater_anticommutation_sign() {
        // b_2^dagger b_1^dagger |00> = -b_1^dagger b_2^dagger |00> = -|11>
        let swapped = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let psi = slater_state(&SlaterSpec { n_modes: 2, tau: 2, unitary: swapped, rng_seed: 0 }).unwrap();
        assert!((psi.amplitudes()[3] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn slater_conserves_particle_number(n in 1usize..=5, seed in any::<u64>(), t in 0usize..=5) {
            let tau = t.min(n);
            let psi = slater_state(&SlaterSpec::random(n, tau, seed)).unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
            for (x, a) in psi.amplitudes().iter().enumerate() {
                if x.count_ones() as usize != tau {
                    prop_assert!(a.norm() < 1e-12);
                }
            }
        }

        #[test]
        fn slater_depends_only_on_occupied_span(n in 2usize..=5, seed in any::<u64>()) {
            let tau = 2.min(n);
            let spec = SlaterSpec::random(n, tau, seed);
            let mut rng = rng::stream(seed, &[1]);
            let mix = random_unitary(tau, &mut rng);
            let mut mixed = spec.clone();
            for i in 0..tau {
                for j in 0..n {
                    mixed.unitary[i * n + j] = (0..tau).map(|k| mix[i * tau + k] * spec.unitary[k * n + j]).sum();
                }
            }
            let a = slater_state(&spec).unwrap();
            let b = slater_state(&mixed).unwrap();
            prop_assert!((a.inner(&b).unwrap().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn inner_product_identity(n in 1usize..=4, tau in 1usize..=2, seed in any::<u64>()) {
            let tau = tau.min(n);
            let mut rng = rng::stream(seed, &[0]);
            let psi = StateVector::random(n, &mut rng);
            let phi = slater_state(&SlaterSpec::random(n, tau, seed)).unwrap();
            let lifted = ancilla_superposition(&psi);
            let o = inner_product_operator(&phi);
            let via_trace = lifted.expectation(&o).unwrap() * 2.0;
            prop_assert!((via_trace - psi.inner(&phi).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn ancilla_examples() {
        let lifted = ancilla_superposition(&StateVector::basis(1, 0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(lifted.amplitudes(), &[c(s, 0.0), c(0.0, 0.0), c(s, 0.0), c(0.0, 0.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lifted = ancilla_superposition(&StateVector::random(3, &mut rng));
        assert_eq!(lifted.amplitudes()[0], c(s, 0.0));
        assert!((lifted.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inner_product_operator_examples() {
        let o = inner_product_operator(&StateVector::basis(1, 0));
        assert_eq!(o.get(0b10, 0b00), c(1.0, 0.0));
        assert_eq!(o.as_slice().iter().filter(|z| **z != c(0.0, 0.0)).count(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = inner_product_operator(&StateVector::random(3, &mut rng));
        assert!((frobenius_norm(&o) - 1.0).abs() < 1e-12);
        assert!((o.adjoint().matmul(&o).unwrap().trace() - c(1.0, 0.0)).norm() < 1e-12);
        for col in 1..16 {
            assert!((0..16).all(|r| o.get(r, col) == c(0.0, 0.0)));
        }
    }

    #[test]
    fn hermitian_split_examples() {
        let (h1, h2) = hermitian_split(&pauli_z());
        assert_eq!(h1, pauli_z());
        assert!(h2.is_zero());
        let (h1, h2) = hermitian_split(&DenseOperator::identity(2).scale(c(0.0, 1.0)));
        assert!(h1.is_zero());
        assert!(h2.max_abs_diff(&DenseOperator::identity(2)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = random_matrix(3, &mut rng);
        let (h1, h2) = hermitian_split(&o);
        assert!(h1.max_hermitian_deviation() <= 1e-12 && h2.max_hermitian_deviation() <= 1e-12);
        assert!(h1.add(&h2.scale(c(0.0, 1.0))).unwrap().max_abs_diff(&o) <= 1e-12);
    }
}
