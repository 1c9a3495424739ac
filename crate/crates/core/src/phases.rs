//! Cluster-Ising chain, exact ground states and phase labels.
//!
//! `H = -sum Z_i X_{i+1} Z_{i+2} - h1 sum X_i - h2 sum X_i X_{i+1}` on an open
//! chain. Every term commutes with the X-parities of the even and odd
//! sublattices, so after a Hadamard on every qubit the Hamiltonian splits
//! into four real blocks of size `2^{n-2}` that are diagonalized densely.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::uniform_draws;
use crate::statevec::{expectation, Observable, Pauli, PauliTerm, StateVector, C64};

pub const QPR_QUBITS: usize = 9;
pub const H1_RANGE: (f64, f64) = (0.0, 1.6);
pub const H2_RANGE: (f64, f64) = (-1.5, 1.5);
pub const GRID_SIDE: usize = 64;
/// Sector ground energies closer than this count as degenerate.
const DEGENERACY_TOL: f64 = 1e-10;
/// Fixed string-order threshold, selectable instead of the calibrated one.
pub const FIXED_STRING_ORDER_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct ClusterHamiltonian {
    pub n: usize,
    pub h1: f64,
    pub h2: f64,
    op: Observable,
}

impl ClusterHamiltonian {
    pub fn observable(&self) -> &Observable {
        &self.op
    }

    pub fn n_terms(&self) -> usize {
        match &self.op {
            Observable::PauliSum { terms, .. } => terms.len(),
            _ => unreachable!("cluster Hamiltonian is a Pauli sum"),
        }
    }
}

/// Builds `H(h1, h2)` on `n` qubits; zero-coefficient terms are kept.
pub fn build_hamiltonian(n: usize, h1: f64, h2: f64) -> Result<ClusterHamiltonian> {
    if !(2..=12).contains(&n) {
        return Err(Error::OutOfRange(format!("n = {n} outside 2..=12")));
    }
    if !h1.is_finite() || !h2.is_finite() {
        return Err(Error::Domain(format!(
            "couplings ({h1}, {h2}) must be finite"
        )));
    }
    let mut terms = Vec::with_capacity(3 * n - 3);
    for i in 0..n - 2 {
        terms.push(PauliTerm::sparse(
            n,
            -1.0,
            &[(i, Pauli::Z), (i + 1, Pauli::X), (i + 2, Pauli::Z)],
        ));
    }
    for i in 0..n {
        terms.push(PauliTerm::sparse(n, -h1, &[(i, Pauli::X)]));
    }
    for i in 0..n - 1 {
        terms.push(PauliTerm::sparse(
            n,
            -h2,
            &[(i, Pauli::X), (i + 1, Pauli::X)],
        ));
    }
    Ok(ClusterHamiltonian {
        n,
        h1,
        h2,
        op: Observable::pauli_sum(n, terms)?,
    })
}

#[derive(Clone, Debug)]
pub struct GroundStateRecord {
    pub h1: f64,
    pub h2: f64,
    pub energy: f64,
    pub state: StateVector,
    /// +1 for the SPT phase, -1 otherwise.
    pub label: f64,
}

/// Lowest eigenpair of `H`, labelled by the string-order oracle (odd `n`)
/// or by [`training_label`] (even `n`, where the string is undefined).
///
/// Ground states that are degenerate across symmetry sectors are resolved
/// towards the largest `<sum X_i>` (the state selected by an infinitesimal
/// extra transverse field); the first nonzero amplitude is made real and
/// positive.
pub fn ground_state(h: &ClusterHamiltonian) -> Result<GroundStateRecord> {
    let (energy, state) = solve(h)?;
    let label = record_label(h, &state)?;
    Ok(GroundStateRecord {
        h1: h.h1,
        h2: h.h2,
        energy,
        state,
        label,
    })
}

fn bit(b: usize, n: usize, q: usize) -> usize {
    (b >> (n - 1 - q)) & 1
}

fn sublattice_parities(b: usize, n: usize) -> usize {
    let (mut even, mut odd) = (0, 0);
    for q in 0..n {
        if q % 2 == 0 {
            even ^= bit(b, n, q);
        } else {
            odd ^= bit(b, n, q);
        }
    }
    2 * even + odd
}

/// Diagonal of `H` and its bit-flip terms in the Hadamard-rotated basis,
/// where `X_i` is diagonal and `Z_i` flips bit `i`.
fn rotated_block(h: &ClusterHamiltonian, basis: &[usize], index_of: &[usize]) -> DMatrix<f64> {
    let n = h.n;
    let m = basis.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let sign = |b: usize, q: usize| 1.0 - 2.0 * bit(b, n, q) as f64;
    let mask = |q: usize| 1usize << (n - 1 - q);
    for (col, &b) in basis.iter().enumerate() {
        let mut diag = 0.0;
        for q in 0..n {
            diag -= h.h1 * sign(b, q);
        }
        for q in 0..n - 1 {
            diag -= h.h2 * sign(b, q) * sign(b, q + 1);
        }
        a[(col, col)] += diag;
        for q in 0..n - 2 {
            let flipped = b ^ mask(q) ^ mask(q + 2);
            a[(index_of[flipped], col)] -= sign(b, q + 1);
        }
    }
    a
}

/// Normalized Walsh-Hadamard transform, i.e. a Hadamard on every qubit.
fn hadamard_all(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for start in (0..v.len()).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = (v.len() as f64).sqrt().recip();
    v.iter_mut().for_each(|x| *x *= scale);
}

fn solve(h: &ClusterHamiltonian) -> Result<(f64, StateVector)> {
    let n = h.n;
    let dim = 1usize << n;
    let mut sectors: Vec<Vec<usize>> = vec![Vec::new(); 4];
    let mut index_of = vec![0usize; dim];
    for b in 0..dim {
        let s = sublattice_parities(b, n);
        index_of[b] = sectors[s].len();
        sectors[s].push(b);
    }
    // (energy, <sum X>, sector, eigenvector in the rotated basis)
    let mut best: Vec<(f64, f64, usize, Vec<f64>)> = Vec::with_capacity(4);
    for (s, basis) in sectors.iter().enumerate() {
        let block = rotated_block(h, basis, &index_of);
        let eig = SymmetricEigen::try_new(block, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Eigensolver(format!("sector {s} did not converge")))?;
        let k = (0..eig.eigenvalues.len())
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .ok_or(Error::Empty("symmetry sector"))?;
        let vec: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let sum_x: f64 = basis
            .iter()
            .zip(&vec)
            .map(|(&b, c)| c * c * (0..n).map(|q| 1.0 - 2.0 * bit(b, n, q) as f64).sum::<f64>())
            .sum();
        best.push((eig.eigenvalues[k], sum_x, s, vec));
    }
    // Degenerate sectors: prefer the one an infinitesimal extra field
    // -delta * sum X_i lowers most, then the lowest sector index (both parities +1, the h1 -> 0+ limit
    // at the cluster point where <sum X> vanishes in every sector).
    let e_min = best.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    best.retain(|b| b.0 <= e_min + DEGENERACY_TOL);
    let x_max = best.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    best.retain(|b| x_max - b.1 <= 1e-12);
    let (_, _, sector, vec) = best.swap_remove(0);

    let mut full = vec![0.0; dim];
    for (&b, c) in sectors[sector].iter().zip(&vec) {
        full[b] = *c;
    }
    hadamard_all(&mut full);
    if let Some(first) = full.iter().find(|x| x.abs() > 1e-10) {
        if *first < 0.0 {
            full.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let state = StateVector::normalized(full.into_iter().map(|x| C64::new(x, 0.0)).collect())?;
    let energy = expectation(&state, h.observable())?;
    Ok((energy, state))
}

/// `|| H v - E v ||`.
pub fn residual(h: &ClusterHamiltonian, state: &StateVector, energy: f64) -> f64 {
    let hv = h.observable().apply(state.amps());
    hv.iter()
        .zip(state.amps())
        .map(|(a, b)| (a - b * energy).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `<Z_0 X_1 X_3 ... X_{n-2} Z_{n-1}>` for an odd number of qubits.
pub fn string_order(state: &StateVector) -> Result<f64> {
    let n = state.n_qubits();
    if n < 3 || n % 2 == 0 {
        return Err(Error::Unsupported(format!(
            "string order needs an odd chain, got n = {n}"
        )));
    }
    let mut sites = vec![(0, Pauli::Z), (n - 1, Pauli::Z)];
    sites.extend((1..n - 1).step_by(2).map(|q| (q, Pauli::X)));
    let obs = Observable::pauli_sum(n, vec![PauliTerm::sparse(n, 1.0, &sites)])?;
    expectation(state, &obs)
}

fn record_label(h: &ClusterHamiltonian, state: &StateVector) -> Result<f64> {
    if h.n % 2 == 1 {
        oracle_label(state, calibrated_threshold(h.n)?)
    } else {
        Ok(training_label(h.h1))
    }
}

/// String order of the `n`-qubit ground state at the `h2 = 0` critical
/// point `h1 = 1`. The string order decreases monotonically along
/// `h2 = 0`, so thresholding at this value reproduces [`training_label`]
/// on the training line.
pub fn calibrated_threshold(n: usize) -> Result<f64> {
    static NINE: OnceLock<f64> = OnceLock::new();
    let compute = || -> Result<f64> {
        let (_, state) = solve(&build_hamiltonian(n, 1.0, 0.0)?)?;
        string_order(&state)
    };
    if n == QPR_QUBITS {
        if let Some(v) = NINE.get() {
            return Ok(*v);
        }
        let v = compute()?;
        return Ok(*NINE.get_or_init(|| v));
    }
    compute()
}

/// +1 when the string order exceeds `threshold`.
pub fn oracle_label(state: &StateVector, threshold: f64) -> Result<f64> {
    Ok(if string_order(state)? > threshold {
        1.0
    } else {
        -1.0
    })
}

/// Label on the training line `h2 = 0`: +1 (SPT) for `h1 < 1`.
pub fn training_label(h1: f64) -> f64 {
    if h1 < 1.0 {
        1.0
    } else {
        -1.0
    }
}

/// Ground-state cache keyed by a hash of `(n, h1, h2)`. Each record is the
/// energy followed by interleaved real/imaginary amplitudes, little-endian.
#[derive(Clone, Debug)]
pub struct GroundStateCache {
    dir: PathBuf,
}

impl GroundStateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, n: usize, h1: f64, h2: f64) -> PathBuf {
        let mut hasher = Sha256::new();
        hasher.update(b"cluster-ground-state/1");
        hasher.update((n as u64).to_le_bytes());
        hasher.update(h1.to_le_bytes());
        hasher.update(h2.to_le_bytes());
        self.dir
            .join(format!("{}.bin", hex::encode(hasher.finalize())))
    }

    fn load(&self, n: usize, h1: f64, h2: f64) -> Option<(f64, StateVector)> {
        let bytes = fs::read(self.path(n, h1, h2)).ok()?;
        let dim = 1usize << n;
        if bytes.len() != 8 * (1 + 2 * dim) {
            return None;
        }
        let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let amps: Vec<C64> = (0..dim)
            .map(|k| C64::new(f(1 + 2 * k), f(2 + 2 * k)))
            .collect();
        Some((f(0), StateVector::from_amplitudes(amps).ok()?))
    }

    fn store(&self, n: usize, h1: f64, h2: f64, energy: f64, state: &StateVector) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * (1 + 2 * state.dim()));
        bytes.extend_from_slice(&energy.to_le_bytes());
        for a in state.amps() {
            bytes.extend_from_slice(&a.re.to_le_bytes());
            bytes.extend_from_slice(&a.im.to_le_bytes());
        }
        let path = self.path(n, h1, h2);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Cached ground state, computing and storing it on a miss.
    pub fn ground_state(&self, h: &ClusterHamiltonian) -> Result<GroundStateRecord> {
        if let Some((energy, state)) = self.load(h.n, h.h1, h.h2) {
            let label = record_label(h, &state)?;
            return Ok(GroundStateRecord {
                h1: h.h1,
                h2: h.h2,
                energy,
                state,
                label,
            });
        }
        let rec = ground_state(h)?;
        self.store(h.n, h.h1, h.h2, rec.energy, &rec.state)?;
        Ok(rec)
    }
}

fn solve_maybe_cached(
    n: usize,
    h1: f64,
    h2: f64,
    cache: Option<&GroundStateCache>,
) -> Result<GroundStateRecord> {
    let h = build_hamiltonian(n, h1, h2)?;
    match cache {
        Some(c) => c.ground_state(&h),
        None => ground_state(&h),
    }
}

/// `N` training ground states on `h2 = 0` with `h1` uniform on `[0, 1.6]`.
/// Draws come from one seeded stream, so a smaller `N` is a prefix of a
/// larger one.
pub fn generate_qpr_dataset(
    n_samples: usize,
    seed: u64,
    cache: Option<&GroundStateCache>,
) -> Result<Vec<GroundStateRecord>> {
    if n_samples == 0 {
        return Err(Error::Empty("QPR dataset"));
    }
    uniform_draws(H1_RANGE.0, H1_RANGE.1, n_samples, seed)
        .into_iter()
        .map(|h1| {
            let mut rec = solve_maybe_cached(QPR_QUBITS, h1, 0.0, cache)?;
            rec.label = training_label(h1);
            Ok(rec)
        })
        .collect()
}

/// Evaluation grid: `GRID_SIDE` left-endpoint points per axis, so that the
/// line `h2 = 0` is a grid row. Row-major in `h2`, then `h1`.
pub fn eval_grid() -> Vec<(f64, f64)> {
    let side = GRID_SIDE as f64;
    let mut pts = Vec::with_capacity(GRID_SIDE * GRID_SIDE);
    for j in 0..GRID_SIDE {
        let h2 = H2_RANGE.0 + (H2_RANGE.1 - H2_RANGE.0) * j as f64 / side;
        for i in 0..GRID_SIDE {
            let h1 = H1_RANGE.0 + (H1_RANGE.1 - H1_RANGE.0) * i as f64 / side;
            pts.push((h1, h2));
        }
    }
    pts
}

/// Ground states on [`eval_grid`], labelled by the string-order oracle
/// with the given threshold.
pub fn eval_dataset(
    cache: Option<&GroundStateCache>,
    threshold: f64,
) -> Result<Vec<GroundStateRecord>> {
    eval_grid()
        .into_iter()
        .map(|(h1, h2)| {
            let mut rec = solve_maybe_cached(QPR_QUBITS, h1, h2, cache)?;
            rec.label = oracle_label(&rec.state, threshold)?;
            Ok(rec)
        })
        .collect()
}
