//! Gate/circuit IR, the fused statevector runner with adjoint gradients,
//! and the explicit circuit builders (U4, V4 amplitude encoder, controlled
//! RZ cascades).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::statevec::{
    self, apply_1q, apply_2q, apply_cnot, apply_controlled_1q, apply_cz, apply_diag_1q,
    apply_matrix, check_targets, environment_1q, environment_2q, unitary_deviation, CMatrix,
    Observable, StateVector, C64, ONE, ZERO,
};

const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        }
    }
}

/// Where a rotation angle comes from at run time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    /// Index into the trainable parameter vector.
    Param(usize),
    /// Fixed angle in radians.
    Bound(f64),
    /// Index into the per-datum feature vector.
    Data(usize),
}

impl Angle {
    #[inline]
    fn resolve(self, params: &[f64], data: &[f64]) -> f64 {
        match self {
            Angle::Param(k) => params[k],
            Angle::Bound(v) => v,
            Angle::Data(k) => data[k],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    /// `exp(-i angle P / 2)` on one qubit.
    Rotation {
        axis: Axis,
        target: usize,
        angle: Angle,
    },
    /// Rotation applied only where every control qubit is `|1>`.
    ControlledRotation {
        axis: Axis,
        controls: Vec<usize>,
        target: usize,
        angle: Angle,
    },
    Cz(usize, usize),
    Cnot {
        control: usize,
        target: usize,
    },
    Fixed {
        targets: Vec<usize>,
        matrix: CMatrix,
    },
}

impl Gate {
    pub fn rx(target: usize, angle: Angle) -> Gate {
        Gate::Rotation {
            axis: Axis::X,
            target,
            angle,
        }
    }

    pub fn ry(target: usize, angle: Angle) -> Gate {
        Gate::Rotation {
            axis: Axis::Y,
            target,
            angle,
        }
    }

    pub fn rz(target: usize, angle: Angle) -> Gate {
        Gate::Rotation {
            axis: Axis::Z,
            target,
            angle,
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Rotation { target, .. } => vec![*target],
            Gate::ControlledRotation {
                controls, target, ..
            } => {
                let mut q = controls.clone();
                q.push(*target);
                q
            }
            Gate::Cz(a, b) => vec![*a, *b],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Fixed { targets, .. } => targets.clone(),
        }
    }

    pub fn angle(&self) -> Option<Angle> {
        match self {
            Gate::Rotation { angle, .. } | Gate::ControlledRotation { angle, .. } => Some(*angle),
            _ => None,
        }
    }

    pub fn param_slot(&self) -> Option<usize> {
        match self.angle() {
            Some(Angle::Param(k)) => Some(k),
            _ => None,
        }
    }

    /// True when the gate is `exp(-i theta P / 2)` with a single Pauli `P`,
    /// i.e. the two-term parameter-shift rule is exact.
    pub fn has_shift_rule(&self) -> bool {
        matches!(self, Gate::Rotation { .. })
    }

    fn remapped(&self, map: &[usize], param_offset: usize) -> Gate {
        let angle_map = |a: Angle| match a {
            Angle::Param(k) => Angle::Param(k + param_offset),
            other => other,
        };
        match self {
            Gate::Rotation {
                axis,
                target,
                angle,
            } => Gate::Rotation {
                axis: *axis,
                target: map[*target],
                angle: angle_map(*angle),
            },
            Gate::ControlledRotation {
                axis,
                controls,
                target,
                angle,
            } => Gate::ControlledRotation {
                axis: *axis,
                controls: controls.iter().map(|c| map[*c]).collect(),
                target: map[*target],
                angle: angle_map(*angle),
            },
            Gate::Cz(a, b) => Gate::Cz(map[*a], map[*b]),
            Gate::Cnot { control, target } => Gate::Cnot {
                control: map[*control],
                target: map[*target],
            },
            Gate::Fixed { targets, matrix } => Gate::Fixed {
                targets: targets.iter().map(|t| map[*t]).collect(),
                matrix: matrix.clone(),
            },
        }
    }
}

/// `exp(-i angle P / 2)` as a 2x2 matrix.
pub fn rotation_matrix(axis: Axis, angle: f64) -> [[C64; 2]; 2] {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        Axis::X => [
            [C64::new(c, 0.0), C64::new(0.0, -s)],
            [C64::new(0.0, -s), C64::new(c, 0.0)],
        ],
        Axis::Y => [
            [C64::new(c, 0.0), C64::new(-s, 0.0)],
            [C64::new(s, 0.0), C64::new(c, 0.0)],
        ],
        Axis::Z => [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]],
    }
}

fn pauli_matrix(axis: Axis) -> [[C64; 2]; 2] {
    let i = C64::new(0.0, 1.0);
    match axis {
        Axis::X => [[ZERO, ONE], [ONE, ZERO]],
        Axis::Y => [[ZERO, -i], [i, ZERO]],
        Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

fn to_array2(m: &CMatrix) -> [[C64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Applies `gate` to `amps`, an `n_qubits` register whose qubit `q` is the
/// gate's qubit `map(q)`. `shift` is added to the gate's angle.
fn apply_gate(
    gate: &Gate,
    amps: &mut [C64],
    n_qubits: usize,
    map: &dyn Fn(usize) -> usize,
    params: &[f64],
    data: &[f64],
    shift: f64,
    inverse: bool,
) {
    let sign = if inverse { -1.0 } else { 1.0 };
    match gate {
        Gate::Rotation {
            axis,
            target,
            angle,
        } => {
            let theta = sign * (angle.resolve(params, data) + shift);
            let t = map(*target);
            if *axis == Axis::Z {
                let (s, c) = (theta / 2.0).sin_cos();
                apply_diag_1q(amps, n_qubits, t, C64::new(c, -s), C64::new(c, s));
            } else {
                apply_1q(amps, n_qubits, t, &rotation_matrix(*axis, theta));
            }
        }
        Gate::ControlledRotation {
            axis,
            controls,
            target,
            angle,
        } => {
            let theta = sign * (angle.resolve(params, data) + shift);
            let cs: Vec<usize> = controls.iter().map(|c| map(*c)).collect();
            apply_controlled_1q(
                amps,
                n_qubits,
                &cs,
                map(*target),
                &rotation_matrix(*axis, theta),
            );
        }
        Gate::Cz(a, b) => apply_cz(amps, n_qubits, map(*a), map(*b)),
        Gate::Cnot { control, target } => apply_cnot(amps, n_qubits, map(*control), map(*target)),
        Gate::Fixed { targets, matrix } => {
            let ts: Vec<usize> = targets.iter().map(|t| map(*t)).collect();
            if inverse {
                let adj = matrix.adjoint();
                apply_fixed(amps, n_qubits, &ts, &adj);
            } else {
                apply_fixed(amps, n_qubits, &ts, matrix);
            }
        }
    }
}

fn apply_fixed(amps: &mut [C64], n_qubits: usize, targets: &[usize], m: &CMatrix) {
    if targets.len() == 1 {
        apply_1q(amps, n_qubits, targets[0], &to_array2(m));
    } else {
        apply_matrix(amps, n_qubits, targets, m);
    }
}

/// Applies `dG/dtheta * G^{-1} = (-i/2) (Pi_controls ⊗ P)` for a
/// parametric rotation.
fn apply_generator(gate: &Gate, amps: &mut [C64], n_qubits: usize, map: &dyn Fn(usize) -> usize) {
    let half = C64::new(0.0, -0.5);
    match gate {
        Gate::Rotation { axis, target, .. } => {
            let p = pauli_matrix(*axis);
            let m = [
                [p[0][0] * half, p[0][1] * half],
                [p[1][0] * half, p[1][1] * half],
            ];
            apply_1q(amps, n_qubits, map(*target), &m);
        }
        Gate::ControlledRotation {
            axis,
            controls,
            target,
            ..
        } => {
            let cmask = controls
                .iter()
                .fold(0usize, |acc, &c| acc | statevec::bit_mask(n_qubits, map(c)));
            for (i, a) in amps.iter_mut().enumerate() {
                if i & cmask != cmask {
                    *a = ZERO;
                }
            }
            let p = pauli_matrix(*axis);
            let m = [
                [p[0][0] * half, p[0][1] * half],
                [p[1][0] * half, p[1][1] * half],
            ];
            apply_1q(amps, n_qubits, map(*target), &m);
        }
        _ => unreachable!("generator requested for a non-parametric gate"),
    }
}

/// Maximal run of consecutive gates confined to at most two qubits; these
/// are fused into one local matrix at run time.
#[derive(Clone, Debug, PartialEq)]
struct Segment {
    qubits: Vec<usize>,
    start: usize,
    end: usize,
}

impl Segment {
    fn fused(&self) -> bool {
        self.end - self.start > 1 && self.qubits.len() <= 2
    }
}

/// Local `D x D` matrix stored column-major so each column is a contiguous
/// local statevector the gate kernels can act on.
#[derive(Clone, Copy, Debug)]
struct LocalMat<const D: usize> {
    cols: [[C64; D]; D],
}

impl<const D: usize> LocalMat<D> {
    fn identity() -> Self {
        let mut cols = [[ZERO; D]; D];
        for (i, c) in cols.iter_mut().enumerate() {
            c[i] = ONE;
        }
        Self { cols }
    }

    fn mul(&self, other: &Self) -> Self {
        let mut cols = [[ZERO; D]; D];
        for (c, col) in cols.iter_mut().enumerate() {
            for (r, out) in col.iter_mut().enumerate() {
                let mut acc = ZERO;
                for k in 0..D {
                    acc += self.cols[k][r] * other.cols[c][k];
                }
                *out = acc;
            }
        }
        Self { cols }
    }

    fn adjoint(&self) -> Self {
        let mut cols = [[ZERO; D]; D];
        for (c, col) in cols.iter_mut().enumerate() {
            for (r, out) in col.iter_mut().enumerate() {
                *out = self.cols[r][c].conj();
            }
        }
        Self { cols }
    }

    fn trace(&self) -> C64 {
        (0..D).map(|i| self.cols[i][i]).sum()
    }

    fn rows(&self) -> [[C64; D]; D] {
        let mut m = [[ZERO; D]; D];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.cols[c][r];
            }
        }
        m
    }

    fn from_rows(m: &[[C64; D]; D]) -> Self {
        let mut cols = [[ZERO; D]; D];
        for (c, col) in cols.iter_mut().enumerate() {
            for (r, v) in col.iter_mut().enumerate() {
                *v = m[r][c];
            }
        }
        Self { cols }
    }

    /// `G * self` where `G` is the gate acting on the local register.
    fn left_apply(&mut self, f: impl Fn(&mut [C64])) {
        for col in self.cols.iter_mut() {
            f(col);
        }
    }
}

/// Ordered gate list with trainable parameter slots and data slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    n_params: usize,
    n_data: usize,
    gates: Vec<Gate>,
    segments: Vec<Segment>,
}

/// Which gate occurrence (if any) gets an angle offset during a run.
#[derive(Clone, Copy)]
struct Shift {
    gate: usize,
    delta: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        statevec::check_register(n_qubits)?;
        Ok(Self {
            n_qubits,
            n_params: 0,
            n_data: 0,
            gates: Vec::new(),
            segments: Vec::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Length of the data vector the circuit reads.
    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Reserves parameter slots up to `n`, which must cover every slot used.
    pub fn set_n_params(&mut self, n: usize) -> Result<()> {
        let used = self
            .gates
            .iter()
            .filter_map(Gate::param_slot)
            .max()
            .map_or(0, |k| k + 1);
        if n < used {
            return Err(Error::ParamLength {
                expected: used,
                got: n,
            });
        }
        self.n_params = n;
        Ok(())
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let qubits = gate.qubits();
        check_targets(self.n_qubits, &qubits)?;
        if let Gate::Fixed { matrix, targets } = &gate {
            let dim = 1usize << targets.len();
            if matrix.nrows() != dim || matrix.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: matrix.nrows(),
                });
            }
            let deviation = unitary_deviation(matrix);
            if deviation > UNITARY_TOL {
                return Err(Error::NotUnitary { deviation });
            }
        }
        match gate.angle() {
            Some(Angle::Param(k)) => self.n_params = self.n_params.max(k + 1),
            Some(Angle::Data(k)) => self.n_data = self.n_data.max(k + 1),
            _ => {}
        }
        let idx = self.gates.len();
        self.gates.push(gate);
        self.extend_segments(idx, qubits);
        Ok(self)
    }

    fn extend_segments(&mut self, idx: usize, qubits: Vec<usize>) {
        if qubits.len() <= 2 {
            if let Some(last) = self.segments.last_mut() {
                if last.qubits.len() <= 2 {
                    let mut union = last.qubits.clone();
                    for q in &qubits {
                        if !union.contains(q) {
                            union.push(*q);
                        }
                    }
                    if union.len() <= 2 {
                        last.qubits = union;
                        last.end = idx + 1;
                        return;
                    }
                }
            }
        }
        self.segments.push(Segment {
            qubits,
            start: idx,
            end: idx + 1,
        });
    }

    /// Appends `other` with its qubit `i` placed on `qubit_map[i]` and its
    /// parameter slots shifted by `param_offset`.
    pub fn append(
        &mut self,
        other: &Circuit,
        qubit_map: &[usize],
        param_offset: usize,
    ) -> Result<&mut Self> {
        if qubit_map.len() != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: other.n_qubits,
                got: qubit_map.len(),
            });
        }
        check_targets(self.n_qubits, qubit_map)?;
        for g in &other.gates {
            self.push(g.remapped(qubit_map, param_offset))?;
        }
        self.n_params = self.n_params.max(other.n_params + param_offset);
        Ok(self)
    }

    fn check_inputs(&self, params: &[f64], data: &[f64], n_amps: usize) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::ParamLength {
                expected: self.n_params,
                got: params.len(),
            });
        }
        if data.len() < self.n_data {
            return Err(Error::DataLength {
                expected: self.n_data,
                got: data.len(),
            });
        }
        if n_amps != 1 << self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: n_amps.trailing_zeros() as usize,
            });
        }
        Ok(())
    }

    /// Runs a circuit without data slots.
    pub fn run(&self, params: &[f64], input: &StateVector) -> Result<StateVector> {
        self.run_with_data(params, &[], input)
    }

    pub fn run_with_data(
        &self,
        params: &[f64],
        data: &[f64],
        input: &StateVector,
    ) -> Result<StateVector> {
        self.check_inputs(params, data, input.dim())?;
        let mut out = input.clone();
        self.forward(out.amps_mut(), params, data, None);
        Ok(out)
    }

    /// Runs `U^†` (gates reversed and inverted).
    pub fn run_inverse(
        &self,
        params: &[f64],
        data: &[f64],
        input: &StateVector,
    ) -> Result<StateVector> {
        self.check_inputs(params, data, input.dim())?;
        let mut out = input.clone();
        let id = |q: usize| q;
        for g in self.gates.iter().rev() {
            apply_gate(
                g,
                out.amps_mut(),
                self.n_qubits,
                &id,
                params,
                data,
                0.0,
                true,
            );
        }
        Ok(out)
    }

    /// Same as [`Circuit::run_with_data`] with `delta` added to the angle of
    /// gate number `gate`.
    pub fn run_shifted(
        &self,
        params: &[f64],
        data: &[f64],
        input: &StateVector,
        gate: usize,
        delta: f64,
    ) -> Result<StateVector> {
        self.check_inputs(params, data, input.dim())?;
        if gate >= self.gates.len() {
            return Err(Error::OutOfRange(format!("gate index {gate}")));
        }
        let mut out = input.clone();
        self.forward(out.amps_mut(), params, data, Some(Shift { gate, delta }));
        Ok(out)
    }

    /// Dense unitary, built column by column.
    pub fn unitary(&self, params: &[f64], data: &[f64]) -> Result<CMatrix> {
        if self.n_qubits > 10 {
            return Err(Error::TooManyQubits(self.n_qubits, 10));
        }
        let dim = 1usize << self.n_qubits;
        let mut u = CMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col = self.run_with_data(params, data, &StateVector::basis(self.n_qubits, j)?)?;
            u.column_mut(j).copy_from_slice(col.amps());
        }
        Ok(u)
    }

    fn forward(&self, amps: &mut [C64], params: &[f64], data: &[f64], shift: Option<Shift>) {
        for seg in &self.segments {
            self.apply_segment(seg, amps, params, data, shift, false);
        }
    }

    fn apply_segment(
        &self,
        seg: &Segment,
        amps: &mut [C64],
        params: &[f64],
        data: &[f64],
        shift: Option<Shift>,
        inverse: bool,
    ) {
        let n = self.n_qubits;
        if !seg.fused() {
            let id = |q: usize| q;
            let range: Box<dyn Iterator<Item = usize>> = if inverse {
                Box::new((seg.start..seg.end).rev())
            } else {
                Box::new(seg.start..seg.end)
            };
            for gi in range {
                let delta = shift.filter(|s| s.gate == gi).map_or(0.0, |s| s.delta);
                apply_gate(&self.gates[gi], amps, n, &id, params, data, delta, inverse);
            }
            return;
        }
        match seg.qubits.len() {
            1 => {
                let m = self.local_matrix::<2>(seg, params, data, shift);
                let m = if inverse { m.adjoint() } else { m };
                apply_1q(amps, n, seg.qubits[0], &m.rows());
            }
            _ => {
                let m = self.local_matrix::<4>(seg, params, data, shift);
                let m = if inverse { m.adjoint() } else { m };
                apply_2q(amps, n, seg.qubits[0], seg.qubits[1], &m.rows());
            }
        }
    }

    fn local_map(seg: &Segment) -> impl Fn(usize) -> usize + '_ {
        move |q: usize| {
            seg.qubits
                .iter()
                .position(|&s| s == q)
                .expect("qubit in segment")
        }
    }

    fn local_matrix<const D: usize>(
        &self,
        seg: &Segment,
        params: &[f64],
        data: &[f64],
        shift: Option<Shift>,
    ) -> LocalMat<D> {
        let local_n = D.trailing_zeros() as usize;
        let map = Self::local_map(seg);
        let mut m = LocalMat::<D>::identity();
        for gi in seg.start..seg.end {
            let delta = shift.filter(|s| s.gate == gi).map_or(0.0, |s| s.delta);
            let g = &self.gates[gi];
            m.left_apply(|col| apply_gate(g, col, local_n, &map, params, data, delta, false));
        }
        m
    }

    /// `<psi|O|psi>` for `psi = U(params, data) |input>` together with its
    /// exact gradient in the trainable parameters (adjoint method).
    pub fn expectation_and_gradient(
        &self,
        params: &[f64],
        data: &[f64],
        input: &StateVector,
        obs: &Observable,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(params, data, input.dim())?;
        if obs.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: obs.n_qubits(),
            });
        }
        let n = self.n_qubits;
        let mut psi = input.amps().to_vec();
        // Cache fused matrices; they are needed again on the way back.
        let mut fused2: Vec<Option<LocalMat<2>>> = vec![None; self.segments.len()];
        let mut fused4: Vec<Option<LocalMat<4>>> = vec![None; self.segments.len()];
        for (si, seg) in self.segments.iter().enumerate() {
            if seg.fused() {
                if seg.qubits.len() == 1 {
                    let m = self.local_matrix::<2>(seg, params, data, None);
                    apply_1q(&mut psi, n, seg.qubits[0], &m.rows());
                    fused2[si] = Some(m);
                } else {
                    let m = self.local_matrix::<4>(seg, params, data, None);
                    apply_2q(&mut psi, n, seg.qubits[0], seg.qubits[1], &m.rows());
                    fused4[si] = Some(m);
                }
            } else {
                self.apply_segment(seg, &mut psi, params, data, None, false);
            }
        }
        let mut lambda = obs.apply(&psi);
        let value = statevec::inner(&psi, &lambda).re;
        let mut grad = vec![0.0; self.n_params];

        for (si, seg) in self.segments.iter().enumerate().rev() {
            if let Some(m) = fused2[si] {
                let q = seg.qubits[0];
                let adj = m.adjoint().rows();
                apply_1q(&mut psi, n, q, &adj);
                let env = LocalMat::<2>::from_rows(&environment_1q(&psi, &lambda, n, q));
                self.accumulate_local(seg, &env, &m, params, data, &mut grad);
                apply_1q(&mut lambda, n, q, &adj);
            } else if let Some(m) = fused4[si] {
                let (q0, q1) = (seg.qubits[0], seg.qubits[1]);
                let adj = m.adjoint().rows();
                apply_2q(&mut psi, n, q0, q1, &adj);
                let env = LocalMat::<4>::from_rows(&environment_2q(&psi, &lambda, n, q0, q1));
                self.accumulate_local(seg, &env, &m, params, data, &mut grad);
                apply_2q(&mut lambda, n, q0, q1, &adj);
            } else {
                let id = |q: usize| q;
                for gi in (seg.start..seg.end).rev() {
                    let g = &self.gates[gi];
                    apply_gate(g, &mut psi, n, &id, params, data, 0.0, true);
                    if let Some(k) = g.param_slot() {
                        // d<lambda|G|psi> = <lambda| H G |psi>
                        let mut tmp = psi.clone();
                        apply_gate(g, &mut tmp, n, &id, params, data, 0.0, false);
                        apply_generator(g, &mut tmp, n, &id);
                        grad[k] += 2.0 * statevec::inner(&lambda, &tmp).re;
                    }
                    apply_gate(g, &mut lambda, n, &id, params, data, 0.0, true);
                }
            }
        }
        Ok((value, grad))
    }

    /// Adds `2 Re Tr(dU_seg/dtheta * env)` for every parametric gate of a
    /// fused segment, with `env` taken at the segment input.
    fn accumulate_local<const D: usize>(
        &self,
        seg: &Segment,
        env: &LocalMat<D>,
        seg_matrix: &LocalMat<D>,
        params: &[f64],
        data: &[f64],
        grad: &mut [f64],
    ) {
        let local_n = D.trailing_zeros() as usize;
        let map = Self::local_map(seg);
        // dU = S_j H_j P_j with S_j = U P_j^†, so
        // Tr(dU env) = Tr(H_j P_j (env U) P_j^†).
        let e = env.mul(seg_matrix);
        let mut prefix = LocalMat::<D>::identity();
        for gi in seg.start..seg.end {
            let g = &self.gates[gi];
            prefix.left_apply(|col| apply_gate(g, col, local_n, &map, params, data, 0.0, false));
            if let Some(k) = g.param_slot() {
                let mut x = prefix.mul(&e).mul(&prefix.adjoint());
                x.left_apply(|col| apply_generator(g, col, local_n, &map));
                grad[k] += 2.0 * x.trace().re;
            }
        }
    }

    /// One gate per line; see [`Circuit::from_text`] for the grammar.
    pub fn to_text(&self) -> String {
        let mut out = format!("# n_qubits={} n_params={}\n", self.n_qubits, self.n_params);
        for g in &self.gates {
            let line = match g {
                Gate::Rotation {
                    axis,
                    target,
                    angle,
                } => {
                    format!("R{} {} {}", axis.name(), target, angle_text(*angle))
                }
                Gate::ControlledRotation {
                    axis,
                    controls,
                    target,
                    angle,
                } => {
                    let cs: Vec<String> = controls.iter().map(|c| c.to_string()).collect();
                    format!(
                        "CR{} {} {} {}",
                        axis.name(),
                        cs.join(" "),
                        target,
                        angle_text(*angle)
                    )
                }
                Gate::Cz(a, b) => format!("CZ {a} {b}"),
                Gate::Cnot { control, target } => format!("CNOT {control} {target}"),
                Gate::Fixed { targets, matrix } => {
                    let ts: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
                    let mut entries = String::new();
                    for r in 0..matrix.nrows() {
                        for c in 0..matrix.ncols() {
                            if !entries.is_empty() {
                                entries.push(',');
                            }
                            let v = matrix[(r, c)];
                            let _ = write!(entries, "{:.17e}:{:.17e}", v.re, v.im);
                        }
                    }
                    format!("UNITARY {} matrix={}", ts.join(" "), entries)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parses the text produced by [`Circuit::to_text`]. Lines are
    /// `KIND qubits... (slot=k | angle=x | data=k | matrix=re:im,...)`;
    /// controlled rotations list controls first and the target last.
    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut header: Option<(usize, usize)> = None;
        let mut gates = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut nq = None;
                let mut np = None;
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("n_qubits=") {
                        nq = v.parse().ok();
                    } else if let Some(v) = tok.strip_prefix("n_params=") {
                        np = v.parse().ok();
                    }
                }
                if let (Some(a), Some(b)) = (nq, np) {
                    header = Some((a, b));
                }
                continue;
            }
            gates.push(
                parse_gate(line).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?,
            );
        }
        let (n_qubits, n_params) = header
            .ok_or_else(|| Error::Config("missing '# n_qubits=.. n_params=..' header".into()))?;
        let mut c = Circuit::new(n_qubits)?;
        for g in gates {
            c.push(g)?;
        }
        c.set_n_params(n_params)?;
        Ok(c)
    }
}

fn angle_text(a: Angle) -> String {
    match a {
        Angle::Param(k) => format!("slot={k}"),
        Angle::Bound(v) => format!("angle={v:.12}"),
        Angle::Data(k) => format!("data={k}"),
    }
}

fn parse_gate(line: &str) -> std::result::Result<Gate, String> {
    let mut toks = line.split_whitespace();
    let kind = toks.next().ok_or("empty line")?;
    let rest: Vec<&str> = toks.collect();
    let (qubit_toks, tail): (Vec<&str>, Vec<&str>) = rest.iter().partition(|t| !t.contains('='));
    let qubits: Vec<usize> = qubit_toks
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| format!("bad qubit '{t}': {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    let parse_angle = || -> std::result::Result<Angle, String> {
        let t = tail.first().ok_or("missing angle")?;
        let (key, val) = t.split_once('=').ok_or("bad angle token")?;
        match key {
            "slot" => val.parse().map(Angle::Param).map_err(|e| format!("{e}")),
            "angle" => val.parse().map(Angle::Bound).map_err(|e| format!("{e}")),
            "data" => val.parse().map(Angle::Data).map_err(|e| format!("{e}")),
            other => Err(format!("unknown angle key '{other}'")),
        }
    };
    let axis_of = |c: &str| match c {
        "X" => Ok(Axis::X),
        "Y" => Ok(Axis::Y),
        "Z" => Ok(Axis::Z),
        other => Err(format!("unknown axis '{other}'")),
    };
    match kind {
        "RX" | "RY" | "RZ" => {
            if qubits.len() != 1 {
                return Err("rotation takes one qubit".into());
            }
            Ok(Gate::Rotation {
                axis: axis_of(&kind[1..])?,
                target: qubits[0],
                angle: parse_angle()?,
            })
        }
        "CRX" | "CRY" | "CRZ" => {
            if qubits.len() < 2 {
                return Err("controlled rotation needs controls and a target".into());
            }
            Ok(Gate::ControlledRotation {
                axis: axis_of(&kind[2..])?,
                controls: qubits[..qubits.len() - 1].to_vec(),
                target: qubits[qubits.len() - 1],
                angle: parse_angle()?,
            })
        }
        "CZ" if qubits.len() == 2 => Ok(Gate::Cz(qubits[0], qubits[1])),
        "CNOT" if qubits.len() == 2 => Ok(Gate::Cnot {
            control: qubits[0],
            target: qubits[1],
        }),
        "UNITARY" => {
            let t = tail.first().ok_or("missing matrix")?;
            let body = t.strip_prefix("matrix=").ok_or("expected matrix=")?;
            let entries: Vec<C64> = body
                .split(',')
                .map(|e| {
                    let (re, im) = e.split_once(':').ok_or("entry must be re:im")?;
                    Ok(C64::new(
                        re.parse().map_err(|x| format!("{x}"))?,
                        im.parse().map_err(|x| format!("{x}"))?,
                    ))
                })
                .collect::<std::result::Result<_, String>>()?;
            let dim = 1usize << qubits.len();
            if entries.len() != dim * dim {
                return Err(format!("expected {} matrix entries", dim * dim));
            }
            Ok(Gate::Fixed {
                targets: qubits,
                matrix: CMatrix::from_row_slice(dim, dim, &entries),
            })
        }
        other => Err(format!("unknown gate '{other}'")),
    }
}

/// Number of trainable angles in [`build_u4`].
pub const U4_PARAMS: usize = 15;

fn push_zyz(c: &mut Circuit, q: usize, slot: usize) -> Result<()> {
    c.push(Gate::rz(q, Angle::Param(slot)))?;
    c.push(Gate::ry(q, Angle::Param(slot + 1)))?;
    c.push(Gate::rz(q, Angle::Param(slot + 2)))?;
    Ok(())
}

/// Universal two-qubit block with 15 slots `offset..offset + 15`: a general
/// ZYZ rotation on each qubit, a three-CNOT core carrying RZ, RY, RY
/// rotations, then another ZYZ rotation on each qubit.
pub fn build_u4(param_offset: usize) -> Circuit {
    let mut c = Circuit::new(2).expect("two qubits");
    let s = param_offset;
    let build = |c: &mut Circuit| -> Result<()> {
        push_zyz(c, 0, s)?;
        push_zyz(c, 1, s + 3)?;
        c.push(Gate::Cnot {
            control: 1,
            target: 0,
        })?;
        c.push(Gate::rz(0, Angle::Param(s + 6)))?;
        c.push(Gate::ry(1, Angle::Param(s + 7)))?;
        c.push(Gate::Cnot {
            control: 0,
            target: 1,
        })?;
        c.push(Gate::ry(1, Angle::Param(s + 8)))?;
        c.push(Gate::Cnot {
            control: 1,
            target: 0,
        })?;
        push_zyz(c, 0, s + 9)?;
        push_zyz(c, 1, s + 12)?;
        c.set_n_params(s + U4_PARAMS)
    };
    build(&mut c).expect("static U4 layout");
    c
}

/// Fully bound two-qubit encoder `V4(gamma)` with `V4(gamma)^† |00> = |gamma>`.
#[derive(Clone, Debug)]
pub struct V4Encoder {
    pub circuit: Circuit,
    /// True when the closed-form recipe was undefined and the
    /// Schmidt-style preparation was used instead.
    pub fallback: bool,
}

impl V4Encoder {
    /// `V4(gamma)^† |00>`, i.e. the encoded state.
    pub fn encoded_state(&self) -> StateVector {
        self.circuit
            .run_inverse(&[], &[], &StateVector::zero(2).expect("two qubits"))
            .expect("bound two-qubit circuit")
    }
}

/// Below this scale the closed-form recipe divides by (near) zero.
const V4_DEGENERATE_TOL: f64 = 1e-9;

/// `Unitary(a, b) = [[a, b], [-b*, a*]] / sqrt(|a|^2 + |b|^2)`.
fn param_unitary(a: C64, b: C64) -> Option<CMatrix> {
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if norm < V4_DEGENERATE_TOL {
        return None;
    }
    Some(CMatrix::from_row_slice(
        2,
        2,
        &[a / norm, b / norm, -b.conj() / norm, a.conj() / norm],
    ))
}

/// Builds the amplitude encoder for a unit vector `gamma` in C^4.
///
/// The closed-form path applies `W1` on qubit 1, a CZ, `W2` on qubit 0 and
/// `W3` on qubit 1, which takes `|gamma>` to `|00>`.
pub fn build_v4_encoder(gamma: &[C64; 4]) -> Result<V4Encoder> {
    let norm_sqr: f64 = gamma.iter().map(|g| g.norm_sqr()).sum();
    if (norm_sqr - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm_sqr });
    }
    match v4_closed_form(gamma) {
        Some(circuit) => Ok(V4Encoder {
            circuit,
            fallback: false,
        }),
        None => Ok(V4Encoder {
            circuit: v4_fallback(gamma),
            fallback: true,
        }),
    }
}

fn v4_closed_form(g: &[C64; 4]) -> Option<Circuit> {
    let a1_norm = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
    let a2_norm = (g[2].norm_sqr() + g[3].norm_sqr()).sqrt();
    if a1_norm < V4_DEGENERATE_TOL {
        return None;
    }
    let overlap = g[0].conj() * g[2] + g[1].conj() * g[3];
    let ratio = a2_norm / a1_norm;
    let k = if overlap == ZERO {
        C64::new(ratio, 0.0)
    } else {
        -overlap / overlap.norm() * ratio
    };
    let w1 = param_unitary(g[3] - k * g[1], (g[2] - k * g[0]).conj())?.transpose();

    let mut state = StateVector::from_raw(2, g.to_vec());
    apply_1q(state.amps_mut(), 2, 1, &to_array2(&w1));
    apply_cz(state.amps_mut(), 2, 0, 1);
    let e = state.amps();
    let w2 = param_unitary(e[1].conj(), e[3].conj())?;
    apply_1q(state.amps_mut(), 2, 0, &to_array2(&w2));
    let r = state.amps();
    let w3 = param_unitary(r[0].conj(), r[1].conj())?;

    let mut c = Circuit::new(2).ok()?;
    c.push(Gate::Fixed {
        targets: vec![1],
        matrix: w1,
    })
    .ok()?;
    c.push(Gate::Cz(0, 1)).ok()?;
    c.push(Gate::Fixed {
        targets: vec![0],
        matrix: w2,
    })
    .ok()?;
    c.push(Gate::Fixed {
        targets: vec![1],
        matrix: w3,
    })
    .ok()?;
    Some(c)
}

/// Unitary with first column `v / |v|` (identity for a null vector).
fn completing_unitary(v0: C64, v1: C64) -> CMatrix {
    let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    if norm < 1e-300 {
        return CMatrix::identity(2, 2);
    }
    let (a, b) = (v0 / norm, v1 / norm);
    CMatrix::from_row_slice(2, 2, &[a, -b.conj(), b, a.conj()])
}

/// Schmidt-style preparation: a real rotation on qubit 0 fixing the branch
/// weights, then a qubit-0-controlled pair of unitaries preparing each
/// branch on qubit 1. Returned as the inverse, i.e. an encoder.
fn v4_fallback(g: &[C64; 4]) -> Circuit {
    let r0 = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
    let r1 = (g[2].norm_sqr() + g[3].norm_sqr()).sqrt();
    let theta = r1.atan2(r0);
    let (s, c) = theta.sin_cos();
    let branch_weights = CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ],
    );
    let u0 = completing_unitary(g[0], g[1]);
    let u1 = completing_unitary(g[2], g[3]);
    let mut block = CMatrix::zeros(4, 4);
    block.view_mut((0, 0), (2, 2)).copy_from(&u0);
    block.view_mut((2, 2), (2, 2)).copy_from(&u1);

    let mut circuit = Circuit::new(2).expect("two qubits");
    circuit
        .push(Gate::Fixed {
            targets: vec![0, 1],
            matrix: block.adjoint(),
        })
        .expect("unitary block");
    circuit
        .push(Gate::Fixed {
            targets: vec![0],
            matrix: branch_weights.adjoint(),
        })
        .expect("unitary rotation");
    circuit
}

/// Parameter-free cascade `prod_i C_i-RZ(2^{-i})` from `controls[i-1]` onto
/// `target`: on control basis state `|b1..bq>` it applies `RZ(sum b_i 2^{-i})`.
pub fn crz_cascade(n_qubits: usize, controls: &[usize], target: usize) -> Result<Circuit> {
    let mut all = controls.to_vec();
    all.push(target);
    check_targets(n_qubits, &all)?;
    let mut c = Circuit::new(n_qubits)?;
    for (i, &ctrl) in controls.iter().enumerate() {
        c.push(Gate::ControlledRotation {
            axis: Axis::Z,
            controls: vec![ctrl],
            target,
            angle: Angle::Bound(0.5f64.powi(i as i32 + 1)),
        })?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &StateVector, b: &StateVector, tol: f64) -> bool {
        a.amps()
            .iter()
            .zip(b.amps())
            .all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn rz_zero_is_identity() {
        let mut c = Circuit::new(1).unwrap();
        c.push(Gate::rz(0, Angle::Bound(0.0))).unwrap();
        let out = c.run(&[], &StateVector::zero(1).unwrap()).unwrap();
        assert_eq!(out.amps()[0], ONE);
    }

    #[test]
    fn ry_pi_flips() {
        let mut c = Circuit::new(1).unwrap();
        c.push(Gate::ry(0, Angle::Bound(PI))).unwrap();
        let out = c.run(&[], &StateVector::zero(1).unwrap()).unwrap();
        assert!((out.amps()[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn empty_and_zero_param_circuits() {
        let input = StateVector::normalized(vec![C64::new(0.3, 0.2), C64::new(-0.1, 0.9)]).unwrap();
        let empty = Circuit::new(1).unwrap();
        assert_eq!(empty.run(&[], &input).unwrap(), input);

        let mut c = Circuit::new(1).unwrap();
        c.push(Gate::rz(0, Angle::Param(0))).unwrap();
        c.push(Gate::ry(0, Angle::Param(1))).unwrap();
        let zero = StateVector::zero(1).unwrap();
        assert_eq!(c.run(&[0.0, 0.0], &zero).unwrap(), zero);
        assert!(matches!(
            c.run(&[0.0], &zero),
            Err(Error::ParamLength { .. })
        ));
    }

    #[test]
    fn segments_fuse_two_qubit_runs() {
        let c = build_u4(0);
        assert_eq!(c.segments.len(), 1);
        assert_eq!(c.n_params(), U4_PARAMS);
        let shifted = build_u4(7);
        assert_eq!(shifted.n_params(), 22);
    }

    #[test]
    fn u4_slot_count_and_unitarity() {
        let c = build_u4(0);
        let params: Vec<f64> = (0..15).map(|i| 0.37 * i as f64 - 1.1).collect();
        let u = c.unitary(&params, &[]).unwrap();
        assert!(unitary_deviation(&u) < 1e-12);
    }

    #[test]
    fn rz_additivity() {
        let mut ab = Circuit::new(1).unwrap();
        ab.push(Gate::rz(0, Angle::Bound(0.4))).unwrap();
        ab.push(Gate::rz(0, Angle::Bound(1.3))).unwrap();
        let mut sum = Circuit::new(1).unwrap();
        sum.push(Gate::rz(0, Angle::Bound(1.7))).unwrap();
        let psi = StateVector::normalized(vec![C64::new(0.6, 0.1), C64::new(0.2, -0.7)]).unwrap();
        assert!(close(
            &ab.run(&[], &psi).unwrap(),
            &sum.run(&[], &psi).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn v4_basis_vectors() {
        let e = |i: usize| {
            let mut g = [ZERO; 4];
            g[i] = ONE;
            g
        };
        let enc = build_v4_encoder(&e(0)).unwrap();
        let out = enc
            .circuit
            .run(&[], &StateVector::zero(2).unwrap())
            .unwrap();
        assert!((out.amps()[0].norm() - 1.0).abs() < 1e-12);
        let enc = build_v4_encoder(&e(2)).unwrap();
        let s = enc.encoded_state();
        assert!((s.amps()[2] - ONE).norm() < 1e-9);
        assert!(build_v4_encoder(&[ONE, ONE, ZERO, ZERO]).is_err());
    }

    #[test]
    fn v4_fallback_fires_when_first_half_vanishes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let g = [ZERO, ZERO, C64::new(0.0, h), C64::new(h, 0.0)];
        let enc = build_v4_encoder(&g).unwrap();
        assert!(enc.fallback);
        let s = enc.encoded_state();
        for (a, b) in s.amps().iter().zip(&g) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn crz_cascade_on_basis_controls() {
        // controls |11>, target |+>: target picks up RZ(0.75).
        let c = crz_cascade(3, &[0, 1], 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![ZERO; 8];
        amps[6] = C64::new(h, 0.0);
        amps[7] = C64::new(h, 0.0);
        let out = c
            .run(&[], &StateVector::from_amplitudes(amps).unwrap())
            .unwrap();
        let rz = rotation_matrix(Axis::Z, 0.75);
        assert!((out.amps()[6] - rz[0][0] * h).norm() < 1e-14);
        assert!((out.amps()[7] - rz[1][1] * h).norm() < 1e-14);
        assert!(crz_cascade(3, &[0, 2], 2).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = build_u4(0);
        c.push(Gate::ControlledRotation {
            axis: Axis::Z,
            controls: vec![0],
            target: 1,
            angle: Angle::Bound(0.25),
        })
        .unwrap();
        c.push(Gate::rx(1, Angle::Data(0))).unwrap();
        let text = c.to_text();
        assert!(text.contains("CRZ 0 1 angle=0.250000000000"));
        let back = Circuit::from_text(&text).unwrap();
        assert_eq!(back, c);
        let enc = build_v4_encoder(&[
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(0.5, 0.0),
        ])
        .unwrap();
        let back = Circuit::from_text(&enc.circuit.to_text()).unwrap();
        let u1 = enc.circuit.unitary(&[], &[]).unwrap();
        let u2 = back.unitary(&[], &[]).unwrap();
        assert!((u1 - u2).norm() < 1e-15);
    }

    #[test]
    fn shifted_run_matches_bound_offset() {
        let c = build_u4(0);
        let mut params = vec![0.3; 15];
        let input = StateVector::zero(2).unwrap();
        let a = c.run_shifted(&params, &[], &input, 1, 0.5).unwrap();
        params[1] += 0.5;
        let b = c.run(&params, &input).unwrap();
        assert!(close(&a, &b, 1e-14));
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let mut c = Circuit::new(3).unwrap();
        c.append(&build_u4(0), &[0, 1], 0).unwrap();
        c.push(Gate::ControlledRotation {
            axis: Axis::Y,
            controls: vec![1],
            target: 2,
            angle: Angle::Param(15),
        })
        .unwrap();
        c.push(Gate::rx(2, Angle::Param(16))).unwrap();
        c.push(Gate::ControlledRotation {
            axis: Axis::X,
            controls: vec![0, 1],
            target: 2,
            angle: Angle::Param(3),
        })
        .unwrap();
        c.append(&build_u4(0), &[2, 1], 0).unwrap();
        let obs = Observable::pauli(3, 1, crate::statevec::Pauli::X).unwrap();
        let params: Vec<f64> = (0..17).map(|i| (i as f64 * 0.71).sin()).collect();
        let input = StateVector::zero(3).unwrap();
        let (v, g) = c
            .expectation_and_gradient(&params, &[], &input, &obs)
            .unwrap();
        let f = |p: &[f64]| c.run(p, &input).unwrap().expectation(&obs).unwrap();
        assert!((v - f(&params)).abs() < 1e-13);
        let h = 1e-6;
        for k in 0..params.len() {
            let mut pp = params.clone();
            pp[k] += h;
            let mut pm = params.clone();
            pm[k] -= h;
            let fd = (f(&pp) - f(&pm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "slot {k}: {fd} vs {}", g[k]);
        }
    }
}
