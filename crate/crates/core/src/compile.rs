//! Compilation of an `RZ`-encoded re-uploading model into a linear model on
//! `n(q+1)` qubits.
//!
//! Each feature is quantized to `q` bits held on its own ancilla group;
//! every data-encoding `RZ(x_i)` becomes a fixed cascade of controlled
//! `RZ(2^{-j})` gates from the ancilla bits onto work qubit `i`. The
//! ancillas stay in a computational basis state, so the trainable layers
//! see exactly the same rotations as in the source model when `x` lies on
//! the `q`-bit grid.

use crate::circuits::{crz_cascade, Angle, Axis, Circuit, Gate};
use crate::error::{Error, Result};
use crate::models::{Encoded, ModelDescriptor, QmlModel, ReuploadModel};
use crate::statevec::{
    reduced_density, CMatrix, Observable, Pauli, PauliTerm, StateVector, C64, MAX_QUBITS,
};

pub const MAX_BITS: usize = 16;

/// `q`-bit binary expansions `x = sum_j b_j 2^{-j}` of a feature vector,
/// most significant bit first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitEncoding {
    pub q: usize,
    pub bits: Vec<Vec<bool>>,
}

impl BitEncoding {
    pub fn values(&self) -> Vec<f64> {
        self.bits.iter().map(|b| bits_value(b)).collect()
    }
}

fn bits_value(bits: &[bool]) -> f64 {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(j, _)| 0.5f64.powi(j as i32 + 1))
        .sum()
}

fn quantize_one(x: f64, q: usize) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let scale = (1u64 << q) as f64;
    let v = x * scale;
    let mut k = v.floor();
    if v - k > 0.5 {
        k += 1.0;
    }
    let k = (k as u64).min((1u64 << q) - 1);
    Ok((0..q).map(|j| (k >> (q - 1 - j)) & 1 == 1).collect())
}

fn check_bits(q: usize) -> Result<()> {
    if !(1..=MAX_BITS).contains(&q) {
        return Err(Error::OutOfRange(format!("q = {q} outside 1..={MAX_BITS}")));
    }
    Ok(())
}

/// Nearest `q`-bit grid point to `x` in `[0, 1]` (ties round down; `x`
/// near 1 saturates at `1 - 2^{-q}`).
pub fn quantize(x: f64, q: usize) -> Result<BitEncoding> {
    quantize_all(&[x], q)
}

pub fn quantize_all(xs: &[f64], q: usize) -> Result<BitEncoding> {
    check_bits(q)?;
    let bits = xs
        .iter()
        .map(|&x| quantize_one(x, q))
        .collect::<Result<_>>()?;
    Ok(BitEncoding { q, bits })
}

/// Linear model equivalent to a re-uploading model on the `q`-bit grid.
#[derive(Clone, Debug)]
pub struct CompiledLinearModel {
    n_work: usize,
    q: usize,
    n_layers: usize,
    /// One circuit per layer: controlled-RZ cascades then the trainable block.
    layers: Vec<Circuit>,
    full: Circuit,
    base_obs: Observable,
    obs: Observable,
}

/// Ancilla qubit holding bit `j` (0 = most significant) of feature `i`.
pub fn ancilla_qubit(n_work: usize, q: usize, feature: usize, bit: usize) -> usize {
    n_work + feature * q + bit
}

/// Compiles `model`, whose encoder must be exactly `RZ(x_i)` on qubit `i`.
pub fn compile(model: &ReuploadModel, q: usize) -> Result<CompiledLinearModel> {
    check_bits(q)?;
    let n = model.n_qubits();
    let enc = model.encoder().gates();
    let restricted = enc.len() == n
        && enc.iter().enumerate().all(|(i, g)| {
            matches!(g, Gate::Rotation { axis: Axis::Z, target, angle: Angle::Data(d) } if *target == i && *d == i)
        });
    if !restricted {
        return Err(Error::Unsupported(
            "encoder must be RZ(x_i) on qubit i for every work qubit".into(),
        ));
    }
    let total = n * (q + 1);
    if total > MAX_QUBITS {
        return Err(Error::TooManyQubits(total, MAX_QUBITS));
    }
    let work: Vec<usize> = (0..n).collect();
    let t = model.n_params();
    let mut layers = Vec::with_capacity(model.n_layers());
    for layer in model.layers() {
        let mut c = Circuit::new(total)?;
        for i in 0..n {
            let controls: Vec<usize> = (0..q).map(|j| ancilla_qubit(n, q, i, j)).collect();
            let cascade = crz_cascade(total, &controls, i)?;
            let id: Vec<usize> = (0..total).collect();
            c.append(&cascade, &id, 0)?;
        }
        c.append(layer, &work, 0)?;
        c.set_n_params(t)?;
        layers.push(c);
    }
    let mut full = Circuit::new(total)?;
    let id: Vec<usize> = (0..total).collect();
    for l in &layers {
        full.append(l, &id, 0)?;
    }
    full.set_n_params(t)?;
    let base_obs = model.observable().clone();
    let obs = lift_observable(&base_obs, total)?;
    Ok(CompiledLinearModel {
        n_work: n,
        q,
        n_layers: layers.len(),
        layers,
        full,
        base_obs,
        obs,
    })
}

/// `O ⊗ I` with the identity on the trailing `n_total - n` qubits.
pub fn lift_observable(obs: &Observable, n_total: usize) -> Result<Observable> {
    let n = obs.n_qubits();
    match obs {
        Observable::PauliSum { terms, .. } => Observable::pauli_sum(
            n_total,
            terms
                .iter()
                .map(|t| {
                    let mut paulis = t.paulis.clone();
                    paulis.resize(n_total, Pauli::I);
                    PauliTerm::new(t.coeff, paulis)
                })
                .collect(),
        ),
        Observable::LocalSum { terms, .. } => Observable::local_sum(n_total, terms.clone()),
        Observable::Dense { mat, .. } => {
            let targets: Vec<usize> = (0..n).collect();
            Observable::local_sum(n_total, vec![(targets, mat.clone())])
        }
    }
}

impl CompiledLinearModel {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_work(&self) -> usize {
        self.n_work
    }

    pub fn n_total(&self) -> usize {
        self.full.n_qubits()
    }

    /// `|0^n> ⊗ |bits(x)>`.
    pub fn input_state(&self, x: &[f64]) -> Result<StateVector> {
        if x.len() != self.n_work {
            return Err(Error::DataLength {
                expected: self.n_work,
                got: x.len(),
            });
        }
        let enc = quantize_all(x, self.q)?;
        let total = self.n_total();
        let mut index = 0usize;
        for (i, bits) in enc.bits.iter().enumerate() {
            for (j, &b) in bits.iter().enumerate() {
                if b {
                    index |= 1 << (total - 1 - ancilla_qubit(self.n_work, self.q, i, j));
                }
            }
        }
        StateVector::basis(total, index)
    }

    /// `Tr[O Tr_anc(U rho(x) U^†)]`, evaluated by explicitly tracing out the
    /// ancilla register.
    pub fn eval_via_partial_trace(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        let out = self.full.run(params, &self.input_state(x)?)?;
        let work: Vec<usize> = (0..self.n_work).collect();
        reduced_density(&out, &work)?.expectation(&self.base_obs)
    }

    /// Largest deviation of the ancilla register from a single
    /// computational basis state, checked after every layer.
    pub fn ancilla_purity_deviation(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        let ancillas: Vec<usize> = (self.n_work..self.n_total()).collect();
        let mut state = self.input_state(x)?;
        let mut worst = 0.0f64;
        for layer in &self.layers {
            state = layer.run(params, &state)?;
            let rho = reduced_density(&state, &ancillas)?;
            let m: &CMatrix = rho.matrix();
            let (mut peak, mut peak_idx) = (0.0, 0);
            for i in 0..m.nrows() {
                if m[(i, i)].re > peak {
                    peak = m[(i, i)].re;
                    peak_idx = i;
                }
            }
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let target = if r == c && r == peak_idx {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    worst = worst.max((m[(r, c)] - target).norm());
                }
            }
        }
        Ok(worst)
    }
}

impl QmlModel for CompiledLinearModel {
    type Input = Vec<f64>;

    fn circuit(&self) -> &Circuit {
        &self.full
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &Vec<f64>) -> Result<Encoded> {
        Ok(Encoded {
            input: self.input_state(x)?,
            data: vec![],
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "compiled-linear",
            n_qubits: self.n_total(),
            n_params: self.full.n_params(),
            observable: "O ⊗ I_ancilla".into(),
            extra: vec![
                ("q".into(), self.q.to_string()),
                ("layers".into(), self.n_layers.to_string()),
                ("work_qubits".into(), self.n_work.to_string()),
            ],
        }
    }
}

/// Explicit covering-entropy bound for `q`-bit re-uploading models:
/// `16 T log2(7 T |O| 2^{n(q+1)} / eps)`.
pub fn reupload_covering_bound(t: usize, n: usize, q: usize, opnorm: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::OutOfRange(format!("eps = {eps} outside (0, 0.1)")));
    }
    let t = t as f64;
    Ok(16.0 * t * ((7.0 * t * opnorm / eps).log2() + (n * (q + 1)) as f64))
}
