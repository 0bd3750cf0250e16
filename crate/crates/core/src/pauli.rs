//! Pauli strings, Pauli-basis expansion, and the qubit-commuting cover
//! grouping used as the baseline decomposer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, DiagObservable, HERMITIAN_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn phases(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self { letters: vec![Pauli::I; n_qubits] }
    }

    /// The Pauli string with index `code` in base 4 (I=0, X=1, Y=2, Z=3),
    /// qubit 1 most significant.
    pub fn from_index(n_qubits: usize, mut code: usize) -> Self {
        let mut letters = vec![Pauli::I; n_qubits];
        for slot in letters.iter_mut().rev() {
            *slot = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][code & 3];
            code >>= 2;
        }
        Self { letters }
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|p| **p != Pauli::I).count()
    }

    fn masks(&self) -> (usize, usize, usize) {
        let n = self.letters.len();
        let (mut flip, mut phase, mut ys) = (0, 0, 0);
        for (q, p) in self.letters.iter().enumerate() {
            let bit = 1 << (n - 1 - q);
            if p.flips() {
                flip |= bit;
            }
            if p.phases() {
                phase |= bit;
            }
            if *p == Pauli::Y {
                ys += 1;
            }
        }
        (flip, phase, ys)
    }

    /// Action on a basis state: `P|j> = coeff |j ^ flip>`.
    fn action(&self, j: usize, flip: usize, phase: usize, ys: usize) -> (usize, C64) {
        // Y = i X Z, so P|j> = i^{#Y} (-1)^{popcount(j & zmask)} |j ^ flip>
        let sign = if (j & phase).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        let ipow = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][ys % 4];
        (j ^ flip, ipow * sign)
    }

    pub fn to_dense(&self) -> DenseOperator {
        let n = self.letters.len();
        let (flip, phase, ys) = self.masks();
        let mut out = DenseOperator::zeros(n);
        for j in 0..(1 << n) {
            let (i, coeff) = self.action(j, flip, phase, ys);
            out.set(i, j, coeff);
        }
        out
    }

    /// `tr(A P)`, in `O(2^n)`.
    pub fn trace_product(&self, a: &DenseOperator) -> C64 {
        let (flip, phase, ys) = self.masks();
        // column j of P is coeff(j) at row j ^ flip, so (A P)_{jj} = A_{j, j^flip} coeff(j)
        (0..a.dim())
            .map(|j| {
                let (i, coeff) = self.action(j, flip, phase, ys);
                a.get(j, i) * coeff
            })
            .sum()
    }

    /// `±1` diagonal of this string after rotating every non-identity letter
    /// to `Z`: `(-1)^{popcount(b & support)}`.
    pub fn rotated_signs(&self) -> Vec<f64> {
        let n = self.letters.len();
        let support: usize =
            self.letters.iter().enumerate().filter(|(_, p)| **p != Pauli::I).map(|(q, _)| 1 << (n - 1 - q)).sum();
        (0..(1usize << n)).map(|b| if (b & support).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 }).collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::InvalidArgument(format!("invalid Pauli letter '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::InvalidArgument("empty Pauli string".into()));
        }
        Ok(Self { letters })
    }
}

/// Real linear combination of distinct Pauli strings on a common register.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    /// Merges duplicate strings and drops zero coefficients. First-appearance
    /// order is kept.
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        let mut order: Vec<PauliString> = Vec::new();
        let mut acc: BTreeMap<PauliString, f64> = BTreeMap::new();
        for (coeff, s) in terms {
            if s.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch { expected: n_qubits, found: s.n_qubits() });
            }
            if !coeff.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient for {s}")));
            }
            match acc.get_mut(&s) {
                Some(c) => *c += coeff,
                None => {
                    acc.insert(s.clone(), coeff);
                    order.push(s);
                }
            }
        }
        let terms = order
            .into_iter()
            .filter_map(|s| {
                let c = acc[&s];
                (c != 0.0).then_some((c, s))
            })
            .collect();
        Ok(Self { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_dense(&self) -> DenseOperator {
        let mut out = DenseOperator::zeros(self.n_qubits);
        for (coeff, s) in &self.terms {
            let (flip, phase, ys) = s.masks();
            for j in 0..out.dim() {
                let (i, c) = s.action(j, flip, phase, ys);
                let cur = out.get(i, j);
                out.set(i, j, cur + c * *coeff);
            }
        }
        out
    }

    /// Parses one `coeff LETTERS` term per line. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n_qubits = None;
        let mut terms = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let mut parts = line.split_whitespace();
            let (Some(coeff), Some(letters), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected 'coeff LETTERS', got '{line}'")));
            };
            let coeff: f64 = coeff.parse().map_err(|_| err(format!("bad coefficient '{coeff}'")))?;
            let s: PauliString = letters.parse().map_err(|e: Error| err(e.to_string()))?;
            match n_qubits {
                None => n_qubits = Some(s.n_qubits()),
                Some(n) if n != s.n_qubits() => {
                    return Err(err(format!("term has {} qubits, expected {n}", s.n_qubits())));
                }
                _ => {}
            }
            terms.push((coeff, s));
        }
        let n = n_qubits.ok_or(Error::Empty)?;
        Self::new(n, terms).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, s) in &self.terms {
            writeln!(f, "{c:?} {s}")?;
        }
        Ok(())
    }
}

/// Expands a Hermitian operator in the Pauli basis, `alpha_Q = tr(H Q) / 2^n`.
pub fn pauli_expand(h: &DenseOperator) -> Result<PauliSum> {
    let dev = h.max_hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let n = h.n_qubits();
    let norm = (1usize << n) as f64;
    let terms = (0..(1usize << (2 * n)))
        .filter_map(|code| {
            let s = PauliString::from_index(n, code);
            let alpha = s.trace_product(h).re / norm;
            (alpha.abs() > 1e-14).then_some((alpha, s))
        })
        .collect();
    PauliSum::new(n, terms)
}

/// `Q ▷ P`: every letter of `q` is `I` or equals the letter of `p`.
pub fn covers(q: &PauliString, p: &PauliString) -> Result<bool> {
    if q.n_qubits() != p.n_qubits() {
        return Err(Error::DimensionMismatch { expected: p.n_qubits(), found: q.n_qubits() });
    }
    Ok(q.letters.iter().zip(&p.letters).all(|(a, b)| *a == Pauli::I || a == b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverGroup {
    pub members: Vec<usize>,
    pub cover: PauliString,
}

/// Largest-coefficient-first greedy grouping into qubit-commuting sets.
///
/// Terms are visited by `|alpha|` descending (index order on ties). Each
/// group is seeded by the largest ungrouped term and absorbs every later term
/// that agrees letterwise with the partial cover. Qubits no member touches get
/// cover letter `Z`.
pub fn greedy_cover_grouping(sum: &PauliSum) -> Result<Vec<CoverGroup>> {
    if sum.is_empty() {
        return Err(Error::Empty);
    }
    let n = sum.n_qubits();
    let mut order: Vec<usize> = (0..sum.len()).collect();
    order.sort_by(|&a, &b| sum.terms[b].0.abs().total_cmp(&sum.terms[a].0.abs()).then(a.cmp(&b)));

    let mut grouped = vec![false; sum.len()];
    let mut groups = Vec::new();
    for (pos, &seed) in order.iter().enumerate() {
        if grouped[seed] {
            continue;
        }
        let mut partial = sum.terms[seed].1.letters.clone();
        let mut members = vec![seed];
        grouped[seed] = true;
        for &cand in &order[pos + 1..] {
            if grouped[cand] {
                continue;
            }
            let letters = &sum.terms[cand].1.letters;
            let compatible = letters.iter().zip(&partial).all(|(a, b)| *a == Pauli::I || *b == Pauli::I || a == b);
            if compatible {
                for (slot, a) in partial.iter_mut().zip(letters) {
                    if *slot == Pauli::I {
                        *slot = *a;
                    }
                }
                members.push(cand);
                grouped[cand] = true;
            }
        }
        for slot in partial.iter_mut() {
            if *slot == Pauli::I {
                *slot = Pauli::Z;
            }
        }
        debug_assert_eq!(partial.len(), n);
        groups.push(CoverGroup { members, cover: PauliString::new(partial) });
    }
    Ok(groups)
}

fn letter_rotation(p: Pauli) -> [[C64; 2]; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| C64::new(x, 0.0);
    match p {
        Pauli::I | Pauli::Z => [[r(1.0), r(0.0)], [r(0.0), r(1.0)]],
        Pauli::X => [[r(h), r(h)], [r(h), r(-h)]],
        Pauli::Y => [[r(h), C64::new(0.0, -h)], [r(h), C64::new(0.0, h)]],
    }
}

/// Local Clifford rotation diagonalizing the cover and the group's diagonal
/// `Lambda = sum_j alpha_j D_j`, so that `U (sum_j alpha_j Q_j) U^H = Lambda`.
pub fn cover_to_term(group: &CoverGroup, sum: &PauliSum) -> Result<(DenseOperator, DiagObservable)> {
    let n = sum.n_qubits();
    if group.cover.n_qubits() != n {
        return Err(Error::InconsistentGroup(format!("cover {} has wrong length", group.cover)));
    }
    let mut u = DenseOperator::identity(0);
    for p in group.cover.letters() {
        let m = letter_rotation(*p);
        u = u.kron(&DenseOperator::from_fn(1, |i, j| m[i][j]));
    }
    let mut values = vec![0.0; 1 << n];
    for &idx in &group.members {
        let (alpha, q) =
            sum.terms.get(idx).ok_or_else(|| Error::InconsistentGroup(format!("member index {idx} out of range")))?;
        if !covers(q, &group.cover)? {
            return Err(Error::InconsistentGroup(format!("{q} is not covered by {}", group.cover)));
        }
        for (v, s) in values.iter_mut().zip(q.rotated_signs()) {
            *v += alpha * s;
        }
    }
    Ok((u, DiagObservable::from_real(n, &values)?))
}

/// `sum_i U_i^H Lambda_i U_i` over the groups; each term is counted once, in
/// the first group listing it.
pub fn grouped_reconstruction(groups: &[CoverGroup], sum: &PauliSum) -> Result<DenseOperator> {
    let mut seen = vec![false; sum.len()];
    let mut out = DenseOperator::zeros(sum.n_qubits());
    for g in groups {
        let members: Vec<usize> =
            g.members.iter().copied().filter(|&m| !std::mem::replace(&mut seen[m], true)).collect();
        if members.is_empty() {
            continue;
        }
        let (u, lam) = cover_to_term(&CoverGroup { members, cover: g.cover.clone() }, sum)?;
        let term = u.adjoint().matmul(&DenseOperator::from_diag(&lam))?.matmul(&u)?;
        out = out.add(&term)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::conjugate;
    use crate::linalg::testing::{pauli_x, pauli_y, pauli_z, random_hermitian};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn dense_letters_match_reference_matrices() {
        assert_eq!(ps("X").to_dense(), pauli_x());
        assert_eq!(ps("Y").to_dense(), pauli_y());
        assert_eq!(ps("Z").to_dense(), pauli_z());
        let xy = ps("XY").to_dense();
        assert!(xy.max_abs_diff(&pauli_x().kron(&pauli_y())) < 1e-15);
        let zyx = ps("ZYX").to_dense();
        assert!(zyx.max_abs_diff(&pauli_z().kron(&pauli_y()).kron(&pauli_x())) < 1e-15);
    }

    #[test]
    fn expand_examples() {
        let s = pauli_expand(&pauli_z()).unwrap();
        assert_eq!(s.terms(), &[(1.0, ps("Z"))]);
        let s = pauli_expand(&pauli_x()).unwrap();
        assert_eq!(s.terms(), &[(1.0, ps("X"))]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            pauli_expand(&crate::linalg::testing::random_matrix(2, &mut rng)),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn expand_then_rebuild_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            let h = random_hermitian(n, &mut rng);
            let s = pauli_expand(&h).unwrap();
            assert!(s.to_dense().max_abs_diff(&h) < 1e-10);
        }
    }

    #[test]
    fn covers_examples() {
        assert!(covers(&ps("ZXI"), &ps("ZXY")).unwrap());
        assert!(covers(&ps("ZIY"), &ps("ZXY")).unwrap());
        assert!(!covers(&ps("XXI"), &ps("ZXY")).unwrap());
        assert!(covers(&ps("XX"), &ps("XXX")).is_err());
    }

    #[test]
    fn grouping_examples() {
        let sum = PauliSum::new(3, vec![(1.0, ps("ZXI")), (1.0, ps("ZIY"))]).unwrap();
        let groups = greedy_cover_grouping(&sum).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].cover, ps("ZXY"));

        let sum = PauliSum::new(1, vec![(1.0, ps("X")), (0.5, ps("Z"))]).unwrap();
        let groups = greedy_cover_grouping(&sum).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].members, vec![0]);

        assert!(matches!(greedy_cover_grouping(&PauliSum::new(2, vec![]).unwrap()), Err(Error::Empty)));
    }

    fn random_sum<R: Rng>(n: usize, terms: usize, rng: &mut R) -> PauliSum {
        let raw = (0..terms)
            .map(|_| (rng.random_range(-1.0..1.0), PauliString::from_index(n, rng.random_range(0..(1 << (2 * n))))))
            .collect();
        PauliSum::new(n, raw).unwrap()
    }

    #[test]
    fn random_grouping_members_are_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sum = random_sum(4, 10, &mut rng);
        let groups = greedy_cover_grouping(&sum).unwrap();
        let mut seen = vec![0; sum.len()];
        for g in &groups {
            assert!(g.cover.letters().iter().all(|p| *p != Pauli::I));
            for &m in &g.members {
                seen[m] += 1;
                assert!(covers(&sum.terms()[m].1, &g.cover).unwrap());
            }
        }
        assert!(seen.iter().all(|c| *c >= 1));
    }

    #[test]
    fn cover_term_examples() {
        let sum = PauliSum::new(1, vec![(1.0, ps("Z"))]).unwrap();
        let g = CoverGroup { members: vec![0], cover: ps("Z") };
        let (u, lam) = cover_to_term(&g, &sum).unwrap();
        assert_eq!(u, DenseOperator::identity(1));
        assert_eq!(lam, DiagObservable::from_real(1, &[1.0, -1.0]).unwrap());

        let sum = PauliSum::new(1, vec![(0.5, ps("X"))]).unwrap();
        let g = CoverGroup { members: vec![0], cover: ps("X") };
        let (u, lam) = cover_to_term(&g, &sum).unwrap();
        assert!(u.max_abs_diff(&crate::linalg::testing::hadamard()) < 1e-15);
        assert_eq!(lam, DiagObservable::from_real(1, &[0.5, -0.5]).unwrap());

        let sum = PauliSum::new(3, vec![(0.3, ps("ZXI")), (0.7, ps("ZIY"))]).unwrap();
        let g = greedy_cover_grouping(&sum).unwrap().remove(0);
        let (u, lam) = cover_to_term(&g, &sum).unwrap();
        let rotated = conjugate(&sum.to_dense(), &u).unwrap();
        assert!(rotated.max_abs_diff(&DenseOperator::from_diag(&lam)) < 1e-10);

        let bad = CoverGroup { members: vec![0], cover: ps("XXX") };
        assert!(matches!(cover_to_term(&bad, &sum), Err(Error::InconsistentGroup(_))));
    }

    #[test]
    fn grouped_reconstruction_recovers_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let sum = random_sum(4, 12, &mut rng);
            let groups = greedy_cover_grouping(&sum).unwrap();
            let rebuilt = grouped_reconstruction(&groups, &sum).unwrap();
            assert!(rebuilt.max_abs_diff(&sum.to_dense()) < 1e-9);
        }
    }

    #[test]
    fn text_format() {
        let sum = PauliSum::parse("# comment\n0.5 XZI\n\n-1.25 IIY\n0.5 XZI\n").unwrap();
        assert_eq!(sum.n_qubits(), 3);
        assert_eq!(sum.terms(), &[(1.0, ps("XZI")), (-1.25, ps("IIY"))]);
        assert!(matches!(PauliSum::parse("0.5 XQ"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(PauliSum::parse("0.5 XZ\n1 XZZ"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(PauliSum::parse("abc XZ"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(PauliSum::parse("1.0"), Err(Error::Parse { line: 1, .. })));
        let reparsed = PauliSum::parse(&sum.to_string()).unwrap();
        assert_eq!(reparsed, sum);
    }

    fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
        proptest::collection::vec(0usize..4, n).prop_map(|v| {
            PauliString::new(v.into_iter().map(|i| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][i]).collect())
        })
    }

    proptest! {
        #[test]
        fn covers_is_reflexive_on_identity_free_strings(s in arb_string(5)) {
            let s = PauliString::new(s.letters().iter().map(|p| if *p == Pauli::I { Pauli::X } else { *p }).collect());
            prop_assert!(covers(&s, &s).unwrap());
        }

        #[test]
        fn covers_is_monotone_under_erasure(q in arb_string(4), p in arb_string(4), at in 0usize..4) {
            if covers(&q, &p).unwrap() {
                let mut letters = q.letters().to_vec();
                letters[at] = Pauli::I;
                prop_assert!(covers(&PauliString::new(letters), &p).unwrap());
            }
        }
    }
}
