//! Dense statevector engine.
//!
//! Basis ordering: qubit 0 is the most-significant bit of the basis index,
//! so `|b0 b1 ... b_{n-1}>` maps to the integer with `b0` in the highest
//! position. Every multi-qubit matrix in this crate follows the same rule
//! for its own target list (first target = most significant local bit).

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;

/// Largest register the dense engine will allocate.
pub const MAX_QUBITS: usize = 14;

const NORM_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub(crate) fn bit_mask(n_qubits: usize, qubit: usize) -> usize {
    1usize << (n_qubits - 1 - qubit)
}

/// Normalized complex amplitude vector over `2^n` basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::OutOfRange(format!(
                "basis index {index} for dimension {dim}"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes that must already have unit norm.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amps.len())?;
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self { n_qubits, amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amps.len())?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized {
                norm_sqr: norm * norm,
            });
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(Self { n_qubits, amps })
    }

    pub(crate) fn from_raw(n_qubits: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.amps.len() != other.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amps.len(),
                got: other.amps.len(),
            });
        }
        Ok(inner(&self.amps, &other.amps))
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.n_qubits + other.n_qubits;
        check_register(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Self { n_qubits: n, amps })
    }

    pub fn with_global_phase(&self, phase: f64) -> StateVector {
        let p = C64::from_polar(1.0, phase);
        Self {
            n_qubits: self.n_qubits,
            amps: self.amps.iter().map(|a| a * p).collect(),
        }
    }

    /// Applies `u` to `targets` and returns the new state.
    pub fn apply_local_unitary(&self, u: &CMatrix, targets: &[usize]) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_local_unitary_mut(u, targets)?;
        Ok(out)
    }

    pub fn apply_local_unitary_mut(&mut self, u: &CMatrix, targets: &[usize]) -> Result<()> {
        check_targets(self.n_qubits, targets)?;
        let dim = 1usize << targets.len();
        if u.nrows() != dim || u.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: u.nrows(),
            });
        }
        let deviation = unitary_deviation(u);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        apply_matrix(&mut self.amps, self.n_qubits, targets, u);
        Ok(())
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        expectation(self, obs)
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::OutOfRange(format!(
            "amplitude vector length {len} is not a power of two >= 2"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_register(n)?;
    Ok(n)
}

pub(crate) fn check_register(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(Error::OutOfRange(
            "register needs at least one qubit".into(),
        ));
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::TooManyQubits(n_qubits, MAX_QUBITS));
    }
    Ok(())
}

pub(crate) fn check_targets(n_qubits: usize, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Empty("target list"));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= n_qubits {
            return Err(Error::QubitOutOfRange { index: t, n_qubits });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateQubit(t));
        }
    }
    Ok(())
}

/// Frobenius norm of `U^†U - I`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let mut acc = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            acc += (prod[(i, j)] - target).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Frobenius norm of `M - M^†`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

#[inline]
pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Inserts a zero bit at every position in `sorted_masks` (ascending).
#[inline]
fn deposit(mut r: usize, sorted_masks: &[usize]) -> usize {
    for &m in sorted_masks {
        let low = r & (m - 1);
        r = ((r ^ low) << 1) | low;
    }
    r
}

// Kernels below assume validated targets; they are shared by the circuit runner.

#[inline]
pub(crate) fn apply_1q(amps: &mut [C64], n_qubits: usize, q: usize, m: &[[C64; 2]; 2]) {
    let mask = bit_mask(n_qubits, q);
    let len = amps.len();
    let mut start = 0;
    while start < len {
        for i in start..start + mask {
            let a0 = amps[i];
            let a1 = amps[i | mask];
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i | mask] = m[1][0] * a0 + m[1][1] * a1;
        }
        start += mask << 1;
    }
}

#[inline]
pub(crate) fn apply_diag_1q(amps: &mut [C64], n_qubits: usize, q: usize, d0: C64, d1: C64) {
    let mask = bit_mask(n_qubits, q);
    for (i, a) in amps.iter_mut().enumerate() {
        *a *= if i & mask == 0 { d0 } else { d1 };
    }
}

/// 2x2 `m` on `target` wherever every qubit in `controls` is 1.
pub(crate) fn apply_controlled_1q(
    amps: &mut [C64],
    n_qubits: usize,
    controls: &[usize],
    target: usize,
    m: &[[C64; 2]; 2],
) {
    let tmask = bit_mask(n_qubits, target);
    let cmask = controls
        .iter()
        .fold(0usize, |acc, &c| acc | bit_mask(n_qubits, c));
    for i in 0..amps.len() {
        if i & tmask != 0 || i & cmask != cmask {
            continue;
        }
        let j = i | tmask;
        let a0 = amps[i];
        let a1 = amps[j];
        amps[i] = m[0][0] * a0 + m[0][1] * a1;
        amps[j] = m[1][0] * a0 + m[1][1] * a1;
    }
}

pub(crate) fn apply_2q(amps: &mut [C64], n_qubits: usize, q0: usize, q1: usize, m: &[[C64; 4]; 4]) {
    let m0 = bit_mask(n_qubits, q0);
    let m1 = bit_mask(n_qubits, q1);
    let sorted = if m0 < m1 { [m0, m1] } else { [m1, m0] };
    for r in 0..amps.len() >> 2 {
        let base = deposit(r, &sorted);
        let idx = [base, base | m1, base | m0, base | m0 | m1];
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (row, &i) in idx.iter().enumerate() {
            let mr = &m[row];
            amps[i] = mr[0] * v[0] + mr[1] * v[1] + mr[2] * v[2] + mr[3] * v[3];
        }
    }
}

pub(crate) fn apply_cz(amps: &mut [C64], n_qubits: usize, a: usize, b: usize) {
    let mask = bit_mask(n_qubits, a) | bit_mask(n_qubits, b);
    for (i, amp) in amps.iter_mut().enumerate() {
        if i & mask == mask {
            *amp = -*amp;
        }
    }
}

pub(crate) fn apply_cnot(amps: &mut [C64], n_qubits: usize, control: usize, target: usize) {
    let cm = bit_mask(n_qubits, control);
    let tm = bit_mask(n_qubits, target);
    for i in 0..amps.len() {
        if i & cm != 0 && i & tm == 0 {
            amps.swap(i, i | tm);
        }
    }
}

/// Generic dense `2^k x 2^k` matrix on `targets`.
pub(crate) fn apply_matrix(amps: &mut [C64], n_qubits: usize, targets: &[usize], u: &CMatrix) {
    let k = targets.len();
    let dim = 1usize << k;
    let masks: Vec<usize> = targets.iter().map(|&t| bit_mask(n_qubits, t)).collect();
    let mut sorted = masks.clone();
    sorted.sort_unstable();
    let offsets: Vec<usize> = (0..dim)
        .map(|l| {
            (0..k)
                .filter(|&j| l & (1 << (k - 1 - j)) != 0)
                .fold(0, |acc, j| acc | masks[j])
        })
        .collect();
    let mut buf = vec![ZERO; dim];
    for r in 0..amps.len() >> k {
        let base = deposit(r, &sorted);
        for (l, off) in offsets.iter().enumerate() {
            buf[l] = amps[base | off];
        }
        for (row, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (col, b) in buf.iter().enumerate() {
                acc += u[(row, col)] * b;
            }
            amps[base | off] = acc;
        }
    }
}

/// Environment matrix `M[a][b] = sum_rest psi[a,rest] * conj(lambda[b,rest])`
/// over the local indices of `targets`, so that `<lambda|G|psi> = Tr(G M)`
/// for any `G` acting on `targets`.
pub(crate) fn environment_1q(
    psi: &[C64],
    lambda: &[C64],
    n_qubits: usize,
    q: usize,
) -> [[C64; 2]; 2] {
    let mask = bit_mask(n_qubits, q);
    let mut m = [[ZERO; 2]; 2];
    let len = psi.len();
    let mut start = 0;
    while start < len {
        for i in start..start + mask {
            let j = i | mask;
            let (p0, p1) = (psi[i], psi[j]);
            let (l0, l1) = (lambda[i].conj(), lambda[j].conj());
            m[0][0] += p0 * l0;
            m[0][1] += p0 * l1;
            m[1][0] += p1 * l0;
            m[1][1] += p1 * l1;
        }
        start += mask << 1;
    }
    m
}

pub(crate) fn environment_2q(
    psi: &[C64],
    lambda: &[C64],
    n_qubits: usize,
    q0: usize,
    q1: usize,
) -> [[C64; 4]; 4] {
    let m0 = bit_mask(n_qubits, q0);
    let m1 = bit_mask(n_qubits, q1);
    let sorted = if m0 < m1 { [m0, m1] } else { [m1, m0] };
    let mut m = [[ZERO; 4]; 4];
    for r in 0..psi.len() >> 2 {
        let base = deposit(r, &sorted);
        let idx = [base, base | m1, base | m0, base | m0 | m1];
        let p = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
        let l = [
            lambda[idx[0]].conj(),
            lambda[idx[1]].conj(),
            lambda[idx[2]].conj(),
            lambda[idx[3]].conj(),
        ];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += p[a] * l[b];
            }
        }
    }
    m
}

/// Single-qubit Pauli label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -i], [i, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// `coeff * P_0 ⊗ P_1 ⊗ ... ⊗ P_{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub paulis: Vec<Pauli>,
}

impl PauliTerm {
    pub fn new(coeff: f64, paulis: Vec<Pauli>) -> Self {
        Self { coeff, paulis }
    }

    /// Identity everywhere except the listed `(qubit, pauli)` sites.
    pub fn sparse(n_qubits: usize, coeff: f64, sites: &[(usize, Pauli)]) -> Self {
        let mut paulis = vec![Pauli::I; n_qubits];
        for &(q, p) in sites {
            paulis[q] = p;
        }
        Self { coeff, paulis }
    }

    fn masks(&self) -> (usize, usize, u32) {
        let n = self.paulis.len();
        let (mut flip, mut phase_mask, mut n_y) = (0usize, 0usize, 0u32);
        for (q, p) in self.paulis.iter().enumerate() {
            let m = bit_mask(n, q);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= m,
                Pauli::Y => {
                    flip |= m;
                    phase_mask |= m;
                    n_y += 1;
                }
                Pauli::Z => phase_mask |= m,
            }
        }
        (flip, phase_mask, n_y)
    }

    /// `out += coeff * P |psi>`.
    fn apply_add(&self, psi: &[C64], out: &mut [C64]) {
        let (flip, phase_mask, n_y) = self.masks();
        let global = C64::new(0.0, 1.0).powu(n_y) * self.coeff;
        for (k, a) in psi.iter().enumerate() {
            let sign = if (k & phase_mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            out[k ^ flip] += global * sign * a;
        }
    }

    fn expectation(&self, psi: &[C64]) -> C64 {
        let (flip, phase_mask, n_y) = self.masks();
        let global = C64::new(0.0, 1.0).powu(n_y) * self.coeff;
        let mut acc = ZERO;
        for (k, a) in psi.iter().enumerate() {
            let sign = if (k & phase_mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += psi[k ^ flip].conj() * a * sign;
        }
        acc * global
    }
}

/// Hermitian operator used for readout.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Dense {
        n_qubits: usize,
        mat: CMatrix,
    },
    PauliSum {
        n_qubits: usize,
        terms: Vec<PauliTerm>,
    },
    /// Sum of Hermitian operators on small qubit subsets.
    LocalSum {
        n_qubits: usize,
        terms: Vec<(Vec<usize>, CMatrix)>,
    },
}

impl Observable {
    pub fn dense(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        let n_qubits = qubits_for_len(mat.nrows())?;
        let deviation = hermitian_deviation(&mat);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Observable::Dense { n_qubits, mat })
    }

    pub fn pauli_sum(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        check_register(n_qubits)?;
        for t in &terms {
            if t.paulis.len() != n_qubits {
                return Err(Error::DimensionMismatch {
                    expected: n_qubits,
                    got: t.paulis.len(),
                });
            }
        }
        Ok(Observable::PauliSum { n_qubits, terms })
    }

    /// A single Pauli on one qubit.
    pub fn pauli(n_qubits: usize, qubit: usize, p: Pauli) -> Result<Self> {
        check_targets(n_qubits, &[qubit])?;
        Self::pauli_sum(
            n_qubits,
            vec![PauliTerm::sparse(n_qubits, 1.0, &[(qubit, p)])],
        )
    }

    pub fn local_sum(n_qubits: usize, terms: Vec<(Vec<usize>, CMatrix)>) -> Result<Self> {
        check_register(n_qubits)?;
        for (targets, m) in &terms {
            check_targets(n_qubits, targets)?;
            let dim = 1usize << targets.len();
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            let deviation = hermitian_deviation(m);
            if deviation > HERMITIAN_TOL {
                return Err(Error::NotHermitian { deviation });
            }
        }
        Ok(Observable::LocalSum { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            Observable::Dense { n_qubits, .. }
            | Observable::PauliSum { n_qubits, .. }
            | Observable::LocalSum { n_qubits, .. } => *n_qubits,
        }
    }

    /// Operator norm: exact for dense matrices, `sum |coeff|` (an upper
    /// bound) for Pauli sums, and the sum of local norms for local sums.
    pub fn opnorm(&self) -> f64 {
        match self {
            Observable::Dense { mat, .. } => spectral_radius(mat),
            Observable::PauliSum { terms, .. } => terms.iter().map(|t| t.coeff.abs()).sum(),
            Observable::LocalSum { terms, .. } => {
                terms.iter().map(|(_, m)| spectral_radius(m)).sum()
            }
        }
    }

    /// `O |psi>` for an arbitrary (not necessarily normalized) vector.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        match self {
            Observable::Dense { mat, .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..psi.len()).map(|j| mat[(i, j)] * psi[j]).sum();
                }
            }
            Observable::PauliSum { terms, .. } => {
                for t in terms {
                    t.apply_add(psi, &mut out);
                }
            }
            Observable::LocalSum { n_qubits, terms } => {
                for (targets, m) in terms {
                    let mut tmp = psi.to_vec();
                    apply_matrix(&mut tmp, *n_qubits, targets, m);
                    for (o, t) in out.iter_mut().zip(tmp) {
                        *o += t;
                    }
                }
            }
        }
        out
    }

    /// Dense `2^n x 2^n` form; refuses registers above 10 qubits.
    pub fn to_dense(&self) -> Result<CMatrix> {
        let n = self.n_qubits();
        if n > 10 {
            return Err(Error::TooManyQubits(n, 10));
        }
        if let Observable::Dense { mat, .. } = self {
            return Ok(mat.clone());
        }
        let dim = 1usize << n;
        let mut mat = CMatrix::zeros(dim, dim);
        let mut e = vec![ZERO; dim];
        for j in 0..dim {
            e[j] = ONE;
            let col = self.apply(&e);
            for (i, v) in col.into_iter().enumerate() {
                mat[(i, j)] = v;
            }
            e[j] = ZERO;
        }
        Ok(mat)
    }

    /// Complex `<psi|O|psi>` for unnormalized input; the imaginary part is
    /// rounding noise for Hermitian `O`.
    pub(crate) fn quadratic_form(&self, psi: &[C64]) -> C64 {
        match self {
            Observable::PauliSum { terms, .. } => terms.iter().map(|t| t.expectation(psi)).sum(),
            _ => inner(psi, &self.apply(psi)),
        }
    }
}

fn spectral_radius(m: &CMatrix) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// `<psi|O|psi>`.
pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    if state.n_qubits() != obs.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: obs.n_qubits(),
            got: state.n_qubits(),
        });
    }
    Ok(obs.quadratic_form(state.amps()).re)
}

/// Mixed state on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    n_qubits: usize,
    mat: CMatrix,
}

impl DensityOperator {
    pub fn from_pure(state: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amps());
        Self {
            n_qubits: state.n_qubits(),
            mat: &v * v.adjoint(),
        }
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        let n_qubits = qubits_for_len(mat.nrows())?;
        let deviation = hermitian_deviation(&mat);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > NORM_TOL || trace.im.abs() > NORM_TOL {
            return Err(Error::OutOfRange(format!("trace {trace} != 1")));
        }
        let rho = Self { n_qubits, mat };
        if let Some(min) = rho.eigenvalues().first() {
            if *min < -NORM_TOL {
                return Err(Error::OutOfRange(format!("negative eigenvalue {min}")));
            }
        }
        Ok(rho)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(self.mat.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    /// Reduced operator on `keep`, in the order listed.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        check_targets(self.n_qubits, keep)?;
        let n = self.n_qubits;
        let k = keep.len();
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let keep_off = local_offsets(n, keep);
        let trace_off = local_offsets(n, &traced);
        let dim = 1usize << k;
        let mut out = CMatrix::zeros(dim, dim);
        for (a, oa) in keep_off.iter().enumerate() {
            for (b, ob) in keep_off.iter().enumerate() {
                let mut acc = ZERO;
                for t in &trace_off {
                    acc += self.mat[(oa | t, ob | t)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(DensityOperator {
            n_qubits: k,
            mat: out,
        })
    }

    /// `Re Tr(rho O)`.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        if obs.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: obs.n_qubits(),
                got: self.n_qubits,
            });
        }
        let o = obs.to_dense()?;
        Ok((&self.mat * o).trace().re)
    }

    /// `U rho U^†`, where `apply_u` applies `U` in place to a vector of
    /// length `2^n`.
    pub fn conjugate_with(&self, apply_u: impl Fn(&mut [C64])) -> DensityOperator {
        let dim = self.mat.nrows();
        let mut left = self.mat.clone();
        let mut col = vec![ZERO; dim];
        for j in 0..dim {
            col.copy_from_slice(left.column(j).as_slice());
            apply_u(&mut col);
            left.column_mut(j).copy_from_slice(&col);
        }
        // (U rho)^† = rho U^†, so one more pass on its columns gives (U rho U^†)^†.
        let mut right = left.adjoint();
        for j in 0..dim {
            col.copy_from_slice(right.column(j).as_slice());
            apply_u(&mut col);
            right.column_mut(j).copy_from_slice(&col);
        }
        DensityOperator {
            n_qubits: self.n_qubits,
            mat: right.adjoint(),
        }
    }
}

/// Basis-index contributions of every local configuration of `qubits`,
/// first qubit most significant.
fn local_offsets(n_qubits: usize, qubits: &[usize]) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|l| {
            (0..k)
                .filter(|&j| l & (1 << (k - 1 - j)) != 0)
                .fold(0, |acc, j| acc | bit_mask(n_qubits, qubits[j]))
        })
        .collect()
}

/// Reduced density operator of a pure state on `keep`, without forming the
/// full `2^n x 2^n` matrix.
pub fn reduced_density(state: &StateVector, keep: &[usize]) -> Result<DensityOperator> {
    let n = state.n_qubits();
    check_targets(n, keep)?;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let keep_off = local_offsets(n, keep);
    let trace_off = local_offsets(n, &traced);
    let dim = keep_off.len();
    let amps = state.amps();
    let mut mat = CMatrix::zeros(dim, dim);
    for t in &trace_off {
        for (a, oa) in keep_off.iter().enumerate() {
            let va = amps[oa | t];
            if va == ZERO {
                continue;
            }
            for (b, ob) in keep_off.iter().enumerate() {
                mat[(a, b)] += va * amps[ob | t].conj();
            }
        }
    }
    Ok(DensityOperator {
        n_qubits: keep.len(),
        mat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn zero_state_layout() {
        let s = StateVector::zero(3).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.amps()[0], ONE);
        assert!(StateVector::zero(0).is_err());
        assert!(StateVector::zero(MAX_QUBITS + 1).is_err());
    }

    #[test]
    fn msb_convention() {
        // X on qubit 0 of |00> gives |10> = index 2.
        let x = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let s = StateVector::zero(2)
            .unwrap()
            .apply_local_unitary(&x, &[0])
            .unwrap();
        assert_eq!(s.amps()[2], ONE);
    }

    #[test]
    fn rejects_bad_gates() {
        let s = StateVector::zero(2).unwrap();
        let bad = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(
            s.apply_local_unitary(&bad, &[0]),
            Err(Error::NotUnitary { .. })
        ));
        let id4 = CMatrix::identity(4, 4);
        assert!(matches!(
            s.apply_local_unitary(&id4, &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.apply_local_unitary(&id4, &[0, 0]),
            Err(Error::DuplicateQubit(0))
        ));
        assert!(matches!(
            s.apply_local_unitary(&CMatrix::identity(2, 2), &[5]),
            Err(Error::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_unnormalized_amplitudes() {
        assert!(StateVector::from_amplitudes(vec![ONE, ONE]).is_err());
        assert!(StateVector::from_amplitudes(vec![ONE, ZERO, ZERO]).is_err());
        let s = StateVector::normalized(vec![ONE, ONE]).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basic_expectations() {
        let z = Observable::pauli(1, 0, Pauli::Z).unwrap();
        let x = Observable::pauli(1, 0, Pauli::X).unwrap();
        let zero = StateVector::zero(1).unwrap();
        assert_eq!(expectation(&zero, &z).unwrap(), 1.0);
        let plus = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap();
        assert!((expectation(&plus, &x).unwrap() - 1.0).abs() < 1e-15);
        let two = StateVector::zero(2).unwrap();
        assert!(matches!(
            expectation(&two, &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pauli_y_dense_agrees() {
        let obs = Observable::pauli_sum(
            2,
            vec![
                PauliTerm::new(0.7, vec![Pauli::Y, Pauli::X]),
                PauliTerm::new(-0.2, vec![Pauli::Z, Pauli::Y]),
            ],
        )
        .unwrap();
        let dense = obs.to_dense().unwrap();
        assert!(hermitian_deviation(&dense) < 1e-15);
        let s = StateVector::normalized(vec![
            C64::new(0.3, 0.1),
            C64::new(-0.2, 0.5),
            C64::new(0.4, -0.3),
            C64::new(0.1, 0.2),
        ])
        .unwrap();
        let d = Observable::dense(dense).unwrap();
        let a = expectation(&s, &obs).unwrap();
        let b = expectation(&s, &d).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!((obs.opnorm() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn product_state_trace() {
        // |0> ⊗ |+>, keep qubit 1 -> |+><+|
        let s = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), ZERO, ZERO])
            .unwrap();
        let rho = DensityOperator::from_pure(&s).partial_trace(&[1]).unwrap();
        for v in rho.matrix().iter() {
            assert!((v - c(0.5)).norm() < 1e-15);
        }
    }

    #[test]
    fn bell_state_trace_is_maximally_mixed() {
        let s = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2), ZERO, ZERO, c(FRAC_1_SQRT_2)])
            .unwrap();
        let rho = DensityOperator::from_pure(&s).partial_trace(&[0]).unwrap();
        let expected = CMatrix::identity(2, 2) * c(0.5);
        assert!((rho.matrix() - expected).norm() < 1e-15);
        let direct = reduced_density(&s, &[0]).unwrap();
        assert!((direct.matrix() - rho.matrix()).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_errors() {
        let rho = DensityOperator::from_pure(&StateVector::zero(2).unwrap());
        assert!(matches!(rho.partial_trace(&[]), Err(Error::Empty(_))));
        assert!(matches!(
            rho.partial_trace(&[2]),
            Err(Error::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn density_validation() {
        let bad = CMatrix::identity(2, 2);
        assert!(DensityOperator::from_matrix(bad).is_err());
        let neg = CMatrix::from_row_slice(2, 2, &[c(1.5), ZERO, ZERO, c(-0.5)]);
        assert!(DensityOperator::from_matrix(neg).is_err());
        let ok = CMatrix::identity(2, 2) * c(0.5);
        assert!(DensityOperator::from_matrix(ok).is_ok());
    }
}
