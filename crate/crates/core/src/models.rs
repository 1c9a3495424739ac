//! Model zoo. Every model is an encoder producing a start state and data
//! angles, a trainable circuit and a readout observable; `f(x)` is the
//! expectation of the observable on the circuit output.

use std::f64::consts::PI;
use std::fmt;

use crate::circuits::{build_u4, build_v4_encoder, Angle, Axis, Circuit, Gate, U4_PARAMS};
use crate::error::{Error, Result};
use crate::statevec::{expectation, reduced_density, CMatrix, Observable, Pauli, StateVector, C64};

/// Start state and data angles for one datum.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub input: StateVector,
    pub data: Vec<f64>,
}

/// A parameterized quantum model `f_theta(x) = <psi(x)| U^† O U |psi(x)>`.
pub trait QmlModel: Sync {
    type Input: Sync;

    fn circuit(&self) -> &Circuit;
    fn observable(&self) -> &Observable;
    fn encode(&self, x: &Self::Input) -> Result<Encoded>;
    fn descriptor(&self) -> ModelDescriptor;

    /// Number of trainable parameters `T`.
    fn n_params(&self) -> usize {
        self.circuit().n_params()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::ParamLength {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn eval(&self, params: &[f64], x: &Self::Input) -> Result<f64> {
        self.check_params(params)?;
        let enc = self.encode(x)?;
        let out = self
            .circuit()
            .run_with_data(params, &enc.data, &enc.input)?;
        expectation(&out, self.observable())
    }

    /// `f_theta(x)` and its exact parameter gradient.
    fn eval_with_grad(&self, params: &[f64], x: &Self::Input) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        let enc = self.encode(x)?;
        self.circuit()
            .expectation_and_gradient(params, &enc.data, &enc.input, self.observable())
    }
}

/// Reproducibility record for a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDescriptor {
    pub kind: &'static str,
    pub n_qubits: usize,
    pub n_params: usize,
    pub observable: String,
    pub extra: Vec<(String, String)>,
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model.kind={}", self.kind)?;
        writeln!(f, "model.n_qubits={}", self.n_qubits)?;
        writeln!(f, "model.n_params={}", self.n_params)?;
        writeln!(f, "model.observable={}", self.observable)?;
        for (k, v) in &self.extra {
            writeln!(f, "model.{k}={v}")?;
        }
        Ok(())
    }
}

fn describe_observable(obs: &Observable) -> String {
    match obs {
        Observable::PauliSum { terms, .. } => terms
            .iter()
            .map(|t| {
                let s: String = t.paulis.iter().map(|p| p.label()).collect();
                format!("{:+}*{}", t.coeff, s)
            })
            .collect::<Vec<_>>()
            .join(" "),
        Observable::Dense { n_qubits, .. } => format!("dense({n_qubits} qubits)"),
        Observable::LocalSum { terms, .. } => format!("local_sum({} terms)", terms.len()),
    }
}

/// Per-qubit `RZ(x_i)` encoder on `n` qubits.
pub fn rz_encoder(n_qubits: usize) -> Result<Circuit> {
    let mut c = Circuit::new(n_qubits)?;
    for q in 0..n_qubits {
        c.push(Gate::rz(q, Angle::Data(q)))?;
    }
    Ok(c)
}

/// One encoding layer `V(x)` followed by one trainable block `U(theta)`.
#[derive(Clone, Debug)]
pub struct LinearQmlModel {
    encoder: Circuit,
    trainable: Circuit,
    obs: Observable,
    full: Circuit,
}

impl LinearQmlModel {
    /// `encoder` reads data slots only; `trainable` reads parameter slots only.
    pub fn new(encoder: Circuit, trainable: Circuit, obs: Observable) -> Result<Self> {
        let n = encoder.n_qubits();
        if trainable.n_qubits() != n || obs.n_qubits() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: trainable.n_qubits().max(obs.n_qubits()),
            });
        }
        if encoder.n_params() != 0 {
            return Err(Error::Unsupported(
                "encoder must not carry trainable slots".into(),
            ));
        }
        let map: Vec<usize> = (0..n).collect();
        let mut full = Circuit::new(n)?;
        full.append(&encoder, &map, 0)?;
        full.append(&trainable, &map, 0)?;
        Ok(Self {
            encoder,
            trainable,
            obs,
            full,
        })
    }

    pub fn encoder(&self) -> &Circuit {
        &self.encoder
    }

    pub fn trainable(&self) -> &Circuit {
        &self.trainable
    }
}

impl QmlModel for LinearQmlModel {
    type Input = Vec<f64>;

    fn circuit(&self) -> &Circuit {
        &self.full
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &Vec<f64>) -> Result<Encoded> {
        if x.len() < self.encoder.n_data() {
            return Err(Error::DataLength {
                expected: self.encoder.n_data(),
                got: x.len(),
            });
        }
        Ok(Encoded {
            input: StateVector::zero(self.full.n_qubits())?,
            data: x.clone(),
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "linear",
            n_qubits: self.full.n_qubits(),
            n_params: self.full.n_params(),
            observable: describe_observable(&self.obs),
            extra: vec![],
        }
    }
}

/// Data re-uploading model `U_L V(x) ... U_1 V(x)` applied to `|0^n>`.
#[derive(Clone, Debug)]
pub struct ReuploadModel {
    encoder: Circuit,
    layers: Vec<Circuit>,
    obs: Observable,
    full: Circuit,
}

impl ReuploadModel {
    /// `layers[l]` is `U_{l+1}`; the layers' slot ranges must be disjoint.
    pub fn new(encoder: Circuit, layers: Vec<Circuit>, obs: Observable) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("re-uploading layers"));
        }
        let n = encoder.n_qubits();
        if obs.n_qubits() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: obs.n_qubits(),
            });
        }
        if encoder.n_params() != 0 {
            return Err(Error::Unsupported(
                "encoder must not carry trainable slots".into(),
            ));
        }
        let mut owner: Vec<Option<usize>> = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            if layer.n_qubits() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: layer.n_qubits(),
                });
            }
            for slot in layer.gates().iter().filter_map(Gate::param_slot) {
                if owner.len() <= slot {
                    owner.resize(slot + 1, None);
                }
                match owner[slot] {
                    Some(o) if o != l => {
                        return Err(Error::Unsupported(format!(
                            "parameter slot {slot} shared by layers {o} and {l}"
                        )))
                    }
                    _ => owner[slot] = Some(l),
                }
            }
        }
        let map: Vec<usize> = (0..n).collect();
        let mut full = Circuit::new(n)?;
        for layer in &layers {
            full.append(&encoder, &map, 0)?;
            full.append(layer, &map, 0)?;
        }
        Ok(Self {
            encoder,
            layers,
            obs,
            full,
        })
    }

    /// `RZ(x_i)` encoder with `n_layers` trainable layers, each an RY-RZ-RY
    /// rotation on every qubit followed by a CZ ladder.
    pub fn rz_encoded_layers(n_qubits: usize, n_layers: usize, obs: Observable) -> Result<Self> {
        let mut layers = Vec::with_capacity(n_layers);
        let mut slot = 0;
        for _ in 0..n_layers {
            let mut c = Circuit::new(n_qubits)?;
            for q in 0..n_qubits {
                c.push(Gate::ry(q, Angle::Param(slot)))?;
                c.push(Gate::rz(q, Angle::Param(slot + 1)))?;
                c.push(Gate::ry(q, Angle::Param(slot + 2)))?;
                slot += 3;
            }
            for q in 0..n_qubits.saturating_sub(1) {
                c.push(Gate::Cz(q, q + 1))?;
            }
            layers.push(c);
        }
        for l in &mut layers {
            l.set_n_params(slot)?;
        }
        Self::new(rz_encoder(n_qubits)?, layers, obs)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.full.n_qubits()
    }

    pub fn encoder(&self) -> &Circuit {
        &self.encoder
    }

    pub fn layers(&self) -> &[Circuit] {
        &self.layers
    }
}

impl QmlModel for ReuploadModel {
    type Input = Vec<f64>;

    fn circuit(&self) -> &Circuit {
        &self.full
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &Vec<f64>) -> Result<Encoded> {
        if x.len() < self.encoder.n_data() {
            return Err(Error::DataLength {
                expected: self.encoder.n_data(),
                got: x.len(),
            });
        }
        Ok(Encoded {
            input: StateVector::zero(self.full.n_qubits())?,
            data: x.clone(),
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "reupload",
            n_qubits: self.full.n_qubits(),
            n_params: self.full.n_params(),
            observable: describe_observable(&self.obs),
            extra: vec![("layers".into(), self.layers.len().to_string())],
        }
    }
}

/// Single-qubit re-uploading regressor: `n_blocks` copies of
/// `RZ(theta) RY(theta) RZ(theta) RY(x)` on `|0>`, read out with Pauli Z.
#[derive(Clone, Debug)]
pub struct SingleQubitFitModel {
    n_blocks: usize,
    circuit: Circuit,
    obs: Observable,
}

impl SingleQubitFitModel {
    pub fn new(n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::OutOfRange("at least one block".into()));
        }
        let mut circuit = Circuit::new(1)?;
        for b in 0..n_blocks {
            circuit.push(Gate::rz(0, Angle::Param(3 * b)))?;
            circuit.push(Gate::ry(0, Angle::Param(3 * b + 1)))?;
            circuit.push(Gate::rz(0, Angle::Param(3 * b + 2)))?;
            circuit.push(Gate::ry(0, Angle::Data(0)))?;
        }
        Ok(Self {
            n_blocks,
            circuit,
            obs: Observable::pauli(1, 0, Pauli::Z)?,
        })
    }

    /// Model with `t` trainable parameters; `t` must be a multiple of 3.
    pub fn with_params(t: usize) -> Result<Self> {
        if t == 0 || t % 3 != 0 {
            return Err(Error::OutOfRange(format!(
                "parameter count {t} is not a positive multiple of 3"
            )));
        }
        Self::new(t / 3)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }
}

impl QmlModel for SingleQubitFitModel {
    type Input = f64;

    fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &f64) -> Result<Encoded> {
        if !(0.0..=PI).contains(x) {
            return Err(Error::Domain(format!("x = {x} outside [0, pi]")));
        }
        Ok(Encoded {
            input: StateVector::zero(1)?,
            data: vec![*x],
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "single-qubit-fit",
            n_qubits: 1,
            n_params: self.circuit.n_params(),
            observable: describe_observable(&self.obs),
            extra: vec![
                ("blocks".into(), self.n_blocks.to_string()),
                ("block".into(), "RZ(theta) RY(theta) RZ(theta) RY(x)".into()),
            ],
        }
    }
}

/// Tensor-product 2-local model: pair `i` (qubits `2i, 2i+1`) encodes the
/// unit vector `x_i` with the V4 amplitude encoder, applies its own U4
/// block, and is read out by `alpha_i |o_i><o_i|`.
#[derive(Clone, Debug)]
pub struct TwoLocalModel {
    alphas: Vec<f64>,
    o_states: Vec<[C64; 4]>,
    circuit: Circuit,
    obs: Observable,
}

impl TwoLocalModel {
    pub fn new(alphas: Vec<f64>, o_states: Vec<[C64; 4]>) -> Result<Self> {
        let n_pairs = alphas.len();
        if n_pairs == 0 {
            return Err(Error::Empty("pairs"));
        }
        if o_states.len() != n_pairs {
            return Err(Error::DimensionMismatch {
                expected: n_pairs,
                got: o_states.len(),
            });
        }
        let n_qubits = 2 * n_pairs;
        let mut circuit = Circuit::new(n_qubits)?;
        let mut terms = Vec::with_capacity(n_pairs);
        for (i, (o, alpha)) in o_states.iter().zip(&alphas).enumerate() {
            let norm_sqr: f64 = o.iter().map(|v| v.norm_sqr()).sum();
            if (norm_sqr - 1.0).abs() > 1e-10 {
                return Err(Error::NotNormalized { norm_sqr });
            }
            circuit.append(&build_u4(0), &[2 * i, 2 * i + 1], U4_PARAMS * i)?;
            let mut proj = CMatrix::zeros(4, 4);
            for r in 0..4 {
                for c in 0..4 {
                    proj[(r, c)] = o[r] * o[c].conj() * *alpha;
                }
            }
            terms.push((vec![2 * i, 2 * i + 1], proj));
        }
        let obs = Observable::local_sum(n_qubits, terms)?;
        Ok(Self {
            alphas,
            o_states,
            circuit,
            obs,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn o_states(&self) -> &[[C64; 4]] {
        &self.o_states
    }
}

impl QmlModel for TwoLocalModel {
    type Input = Vec<[C64; 4]>;

    fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &Vec<[C64; 4]>) -> Result<Encoded> {
        if x.len() != self.n_pairs() {
            return Err(Error::Domain(format!(
                "expected {} unit 4-vectors, got {}",
                self.n_pairs(),
                x.len()
            )));
        }
        let mut state: Option<StateVector> = None;
        for xi in x {
            let pair = build_v4_encoder(xi)?.encoded_state();
            state = Some(match state {
                None => pair,
                Some(s) => s.tensor(&pair)?,
            });
        }
        Ok(Encoded {
            input: state.expect("at least one pair"),
            data: vec![],
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "two-local",
            n_qubits: self.circuit.n_qubits(),
            n_params: self.circuit.n_params(),
            observable: describe_observable(&self.obs),
            extra: vec![(
                "alphas".into(),
                self.alphas
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            )],
        }
    }
}

/// Qubits kept by the pooling layer (middle of each group of three).
pub const QCNN_SURVIVORS: [usize; 3] = [1, 4, 7];
/// Readout qubit: the middle survivor.
pub const QCNN_READOUT: usize = 4;
const QCNN_QUBITS: usize = 9;

/// 9-qubit convolutional classifier: a 4-qubit convolution (two U4 brick
/// rows), three 3-qubit convolutions, 3-to-1 pooling, and a fully
/// connected pair of U4 blocks on the survivors; readout is Pauli X.
#[derive(Clone, Debug)]
pub struct QcnnModel {
    /// Convolutions and pooling on all nine qubits.
    front: Circuit,
    /// Fully connected block on the three survivors (local indices).
    fc: Circuit,
    /// `front` followed by `fc` on the full register.
    full: Circuit,
    obs: Observable,
    fc_offset: usize,
}

impl QcnnModel {
    pub fn new() -> Result<Self> {
        let mut front = Circuit::new(QCNN_QUBITS)?;
        let mut slot = 0;
        // 4-qubit convolution: brick rows on even then odd pairs, one U4 per row.
        for row_start in [0usize, 1] {
            let mut a = row_start;
            while a + 1 < QCNN_QUBITS {
                front.append(&build_u4(0), &[a, a + 1], slot)?;
                a += 2;
            }
            slot += U4_PARAMS;
        }
        // Three 3-qubit convolutions, one shared U4 per layer.
        for _ in 0..3 {
            for g in 0..3 {
                let base = 3 * g;
                front.append(&build_u4(0), &[base, base + 1], slot)?;
                front.append(&build_u4(0), &[base + 1, base + 2], slot)?;
            }
            slot += U4_PARAMS;
        }
        // Pooling: controlled ZYZ rotations from each discarded qubit onto
        // the kept middle qubit, shared across groups.
        for g in 0..3 {
            let kept = 3 * g + 1;
            for (k, discarded) in [3 * g, 3 * g + 2].into_iter().enumerate() {
                let s = slot + 3 * k;
                for (axis, off) in [(Axis::Z, 0), (Axis::Y, 1), (Axis::Z, 2)] {
                    front.push(Gate::ControlledRotation {
                        axis,
                        controls: vec![discarded],
                        target: kept,
                        angle: Angle::Param(s + off),
                    })?;
                }
            }
        }
        slot += 6;
        let fc_offset = slot;
        let mut fc = Circuit::new(3)?;
        fc.append(&build_u4(0), &[0, 1], fc_offset)?;
        fc.append(&build_u4(0), &[1, 2], fc_offset + U4_PARAMS)?;
        slot += 2 * U4_PARAMS;
        front.set_n_params(slot)?;
        fc.set_n_params(slot)?;

        let mut full = front.clone();
        full.append(&fc, &QCNN_SURVIVORS, 0)?;
        Ok(Self {
            front,
            fc,
            full,
            obs: Observable::pauli(QCNN_QUBITS, QCNN_READOUT, Pauli::X)?,
            fc_offset,
        })
    }

    /// First parameter slot of the fully connected block.
    pub fn fc_offset(&self) -> usize {
        self.fc_offset
    }

    /// Slots belonging to the pooling layer (no two-term shift rule).
    pub fn pooling_slots(&self) -> std::ops::Range<usize> {
        self.fc_offset - 6..self.fc_offset
    }

    /// Evaluates by explicit pooling: conv+pool on the input, partial trace
    /// onto the survivors, fully connected block on the reduced state, then
    /// Pauli X on the middle survivor.
    pub fn eval_on_ground_state(&self, params: &[f64], ground_state: &StateVector) -> Result<f64> {
        self.check_params(params)?;
        if ground_state.n_qubits() != QCNN_QUBITS {
            return Err(Error::DimensionMismatch {
                expected: QCNN_QUBITS,
                got: ground_state.n_qubits(),
            });
        }
        let pooled = self.front.run(params, ground_state)?;
        let rho = reduced_density(&pooled, &QCNN_SURVIVORS)?;
        let fc = &self.fc;
        let rho = rho.conjugate_with(|v| {
            let s = StateVector::from_raw(3, v.to_vec());
            let out = fc.run(params, &s).expect("validated fc circuit");
            v.copy_from_slice(out.amps());
        });
        rho.expectation(&Observable::pauli(3, 1, Pauli::X)?)
    }
}

impl QmlModel for QcnnModel {
    type Input = StateVector;

    fn circuit(&self) -> &Circuit {
        &self.full
    }

    fn observable(&self) -> &Observable {
        &self.obs
    }

    fn encode(&self, x: &StateVector) -> Result<Encoded> {
        if x.n_qubits() != QCNN_QUBITS {
            return Err(Error::DimensionMismatch {
                expected: QCNN_QUBITS,
                got: x.n_qubits(),
            });
        }
        Ok(Encoded {
            input: x.clone(),
            data: vec![],
        })
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "qcnn",
            n_qubits: QCNN_QUBITS,
            n_params: self.full.n_params(),
            observable: describe_observable(&self.obs),
            extra: vec![
                (
                    "layers".into(),
                    "conv4(2 rows) conv3 x3 pool3to1 fc(2xU4)".into(),
                ),
                ("survivors".into(), "1;4;7".into()),
            ],
        }
    }
}
