//! Losses, gradients, optimizers and the training loop.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuits::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::models::QmlModel;
use crate::statevec::{expectation, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `(f - y)^2`
    L2,
    /// `log(1 + exp(-y f))`
    Logistic,
    /// `2 - 2 Re <psi_0| U^† |0>`; evaluated on a circuit, see [`state_prep_loss`].
    StatePrepL2,
}

impl LossKind {
    /// Per-sample loss and its derivative in `f`.
    pub fn value_and_slope(self, f: f64, y: f64) -> Result<(f64, f64)> {
        match self {
            LossKind::L2 => Ok(((f - y) * (f - y), 2.0 * (f - y))),
            LossKind::Logistic => {
                let z = -y * f;
                // log(1 + e^z) without overflow
                let v = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                let s = 1.0 / (1.0 + (-z).exp());
                Ok((v, -y * s))
            }
            LossKind::StatePrepL2 => Err(Error::Unsupported(
                "state-preparation loss is defined on a circuit, not on (f, y)".into(),
            )),
        }
    }

    pub fn value(self, f: f64, y: f64) -> Result<f64> {
        Ok(self.value_and_slope(f, y)?.0)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L2 => "l2",
            LossKind::Logistic => "logistic",
            LossKind::StatePrepL2 => "state-prep-l2",
        }
    }
}

/// `2 - 2 Re <psi_0| U^† |0...0>`.
pub fn state_prep_loss(circuit: &Circuit, params: &[f64], psi0: &StateVector) -> Result<f64> {
    let out = circuit.run(params, psi0)?;
    // <psi0|U^†|0> = conj(<0|U|psi0>), same real part
    Ok(2.0 - 2.0 * out.amps()[0].re)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradMethod {
    /// Two-term shift rule on every trainable gate; errors on gates without one.
    ParamShift,
    /// Shift rule where available, central difference of step `h` per gate otherwise.
    Hybrid(f64),
    /// Central differences of step `h` on the parameter vector.
    FiniteDiff(f64),
    /// Exact gradient by reverse-mode simulation.
    Adjoint,
}

fn check_dataset<T>(data: &[T]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(())
}

/// Mean per-sample loss.
pub fn empirical_risk<M: QmlModel>(
    model: &M,
    params: &[f64],
    data: &[(M::Input, f64)],
    loss: LossKind,
) -> Result<f64> {
    check_dataset(data)?;
    let mut acc = 0.0;
    for (x, y) in data {
        acc += loss.value(model.eval(params, x)?, *y)?;
    }
    Ok(acc / data.len() as f64)
}

/// `f` with gate `gate_idx` rotated by an extra `delta`.
fn eval_shifted<M: QmlModel>(
    model: &M,
    params: &[f64],
    x: &M::Input,
    gate_idx: usize,
    delta: f64,
) -> Result<f64> {
    let enc = model.encode(x)?;
    let out = model
        .circuit()
        .run_shifted(params, &enc.data, &enc.input, gate_idx, delta)?;
    expectation(&out, model.observable())
}

/// Gradient of `f` at one datum, summing per-gate contributions so that
/// shared slots are handled correctly.
fn gate_wise_grad<M: QmlModel>(
    model: &M,
    params: &[f64],
    x: &M::Input,
    fd_step: Option<f64>,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; model.n_params()];
    for (i, gate) in model.circuit().gates().iter().enumerate() {
        let Some(k) = gate.param_slot() else { continue };
        if gate.has_shift_rule() {
            let plus = eval_shifted(model, params, x, i, FRAC_PI_2)?;
            let minus = eval_shifted(model, params, x, i, -FRAC_PI_2)?;
            g[k] += (plus - minus) / 2.0;
        } else if let Some(h) = fd_step {
            let plus = eval_shifted(model, params, x, i, h)?;
            let minus = eval_shifted(model, params, x, i, -h)?;
            g[k] += (plus - minus) / (2.0 * h);
        } else {
            return Err(Error::NoShiftRule);
        }
    }
    Ok(g)
}

fn check_step(h: f64) -> Result<()> {
    if !(1e-8..=1e-2).contains(&h) {
        return Err(Error::OutOfRange(format!(
            "finite-difference step {h} outside [1e-8, 1e-2]"
        )));
    }
    Ok(())
}

/// Strict parameter-shift gradient of the empirical risk.
pub fn grad_param_shift<M: QmlModel>(
    model: &M,
    params: &[f64],
    data: &[(M::Input, f64)],
    loss: LossKind,
) -> Result<Vec<f64>> {
    Ok(risk_and_grad(model, params, data, loss, GradMethod::ParamShift)?.1)
}

/// Central-difference gradient of the empirical risk.
pub fn grad_finite_diff<M: QmlModel>(
    model: &M,
    params: &[f64],
    data: &[(M::Input, f64)],
    loss: LossKind,
    h: f64,
) -> Result<Vec<f64>> {
    check_step(h)?;
    model.check_params(params)?;
    finite_diff(|p| empirical_risk(model, p, data, loss), params, h)
}

/// Central differences of an arbitrary scalar function.
pub fn finite_diff(f: impl Fn(&[f64]) -> Result<f64>, params: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    let mut g = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        p[k] = params[k] + h;
        let plus = f(&p)?;
        p[k] = params[k] - h;
        let minus = f(&p)?;
        p[k] = params[k];
        g.push((plus - minus) / (2.0 * h));
    }
    Ok(g)
}

/// Empirical risk and its gradient. Samples are reduced in dataset order.
pub fn risk_and_grad<M: QmlModel>(
    model: &M,
    params: &[f64],
    data: &[(M::Input, f64)],
    loss: LossKind,
    method: GradMethod,
) -> Result<(f64, Vec<f64>)> {
    check_dataset(data)?;
    model.check_params(params)?;
    if let GradMethod::FiniteDiff(h) = method {
        let risk = empirical_risk(model, params, data, loss)?;
        return Ok((risk, grad_finite_diff(model, params, data, loss, h)?));
    }
    if let GradMethod::Hybrid(h) = method {
        check_step(h)?;
    }
    let mut risk = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for (x, y) in data {
        let (f, df) = match method {
            GradMethod::Adjoint => model.eval_with_grad(params, x)?,
            GradMethod::ParamShift => (
                model.eval(params, x)?,
                gate_wise_grad(model, params, x, None)?,
            ),
            GradMethod::Hybrid(h) => (
                model.eval(params, x)?,
                gate_wise_grad(model, params, x, Some(h))?,
            ),
            GradMethod::FiniteDiff(_) => unreachable!(),
        };
        let (l, slope) = loss.value_and_slope(f, *y)?;
        risk += l;
        for (g, d) in grad.iter_mut().zip(&df) {
            *g += slope * d;
        }
    }
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((risk / n, grad))
}

/// Whether every trainable gate of `circuit` admits the two-term shift rule.
pub fn shift_rule_applies(circuit: &Circuit) -> bool {
    circuit
        .gates()
        .iter()
        .filter(|g| g.param_slot().is_some())
        .all(Gate::has_shift_rule)
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self::with_lr(n_params, 0.001)
    }

    pub fn with_lr(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grad.len()
                },
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptiveMode {
    /// Loss went up: expand the step. Otherwise shrink it.
    Verbatim,
    /// Loss went up: shrink the step. Otherwise expand it.
    Conventional,
}

/// Gradient descent with a multiplicative learning-rate schedule driven by
/// the loss trend.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveGdState {
    pub lr: f64,
    pub expand_factor: f64,
    pub shrink_factor: f64,
    pub mode: AdaptiveMode,
    pub last_loss: Option<f64>,
}

impl AdaptiveGdState {
    pub fn new(lr: f64, mode: AdaptiveMode) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "learning rate {lr} must be positive"
            )));
        }
        Ok(AdaptiveGdState {
            lr,
            expand_factor: 1.05,
            shrink_factor: 0.5,
            mode,
            last_loss: None,
        })
    }

    /// Adjusts `lr` from the loss at the current parameters, then steps.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], loss: f64) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
            });
        }
        if let Some(last) = self.last_loss {
            let increased = loss > last;
            let expand = match self.mode {
                AdaptiveMode::Verbatim => increased,
                AdaptiveMode::Conventional => !increased,
            };
            self.lr *= if expand {
                self.expand_factor
            } else {
                self.shrink_factor
            };
            if self.lr < f64::MIN_POSITIVE {
                self.lr = f64::MIN_POSITIVE;
            }
        }
        self.last_loss = Some(loss);
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= self.lr * g;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam { lr: f64 },
    AdaptiveGd { lr: f64, mode: AdaptiveMode },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub grad_method: GradMethod,
    /// Stop once the empirical loss falls below this value.
    pub stop_empirical_loss: Option<f64>,
    /// Stop once `|l_t - l_{t-1}| / max(l_{t-1}, 1e-12)` falls below this value.
    pub stop_relative_loss: Option<f64>,
    pub max_iters: usize,
    /// Initial parameters are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam with `lr = 0.001`, stopping at empirical loss 0.001, init on `[-pi/3, pi/3]`.
    pub fn function_fitting(seed: u64) -> Self {
        TrainConfig {
            loss: LossKind::L2,
            optimizer: OptimizerKind::Adam { lr: 0.001 },
            grad_method: GradMethod::Adjoint,
            stop_empirical_loss: Some(0.001),
            stop_relative_loss: None,
            max_iters: 200_000,
            init_range: std::f64::consts::FRAC_PI_3,
            seed,
        }
    }

    /// Adaptive gradient descent from `lr = 1e-5`, relative-loss stop 1e-7,
    /// 5000 iterations, init on `[-pi/2, pi/2]`.
    pub fn phase_recognition(seed: u64) -> Self {
        TrainConfig {
            loss: LossKind::L2,
            optimizer: OptimizerKind::AdaptiveGd {
                lr: 1e-5,
                mode: AdaptiveMode::Verbatim,
            },
            grad_method: GradMethod::Adjoint,
            stop_empirical_loss: None,
            stop_relative_loss: Some(1e-7),
            max_iters: 5000,
            init_range: FRAC_PI_2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.stop_empirical_loss.is_none() && self.stop_relative_loss.is_none() {
            return Err(Error::Config(
                "at most one stopping rule may be disabled".into(),
            ));
        }
        if self.loss == LossKind::StatePrepL2 {
            return Err(Error::Config(
                "state-preparation loss is not trainable on a dataset".into(),
            ));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return Err(Error::Config(format!(
                "init_range {} must be finite and >= 0",
                self.init_range
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EmpiricalLoss,
    RelativeLoss,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::EmpiricalLoss => "empirical_loss",
            StopReason::RelativeLoss => "relative_loss",
            StopReason::MaxIters => "max_iters",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub params: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub stop_reason: StopReason,
}

impl TrainResult {
    /// Empirical loss at the returned parameters.
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.loss)
    }

    /// Number of optimizer steps taken.
    pub fn iters(&self) -> usize {
        self.history.last().map_or(0, |r| r.iter)
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,loss,lr\n");
        for r in &self.history {
            s.push_str(&format!("{},{:.12e},{:.12e}\n", r.iter, r.loss, r.lr));
        }
        s
    }
}

pub fn init_params(n: usize, range: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if range > 0.0 {
                rng.random_range(-range..=range)
            } else {
                0.0
            }
        })
        .collect()
}

/// Trains from seeded uniform initial parameters.
pub fn train<M: QmlModel>(
    model: &M,
    config: &TrainConfig,
    data: &[(M::Input, f64)],
) -> Result<TrainResult> {
    let init = init_params(model.n_params(), config.init_range, config.seed);
    train_from(model, config, data, init)
}

/// Trains from the given parameters. The returned parameters are the ones
/// whose loss is the last history entry.
pub fn train_from<M: QmlModel>(
    model: &M,
    config: &TrainConfig,
    data: &[(M::Input, f64)],
    init: Vec<f64>,
) -> Result<TrainResult> {
    config.validate()?;
    check_dataset(data)?;
    model.check_params(&init)?;
    let mut params = init;
    let n = params.len();
    let mut adam = None;
    let mut agd = None;
    match config.optimizer {
        OptimizerKind::Adam { lr } => adam = Some(AdamState::with_lr(n, lr)),
        OptimizerKind::AdaptiveGd { lr, mode } => agd = Some(AdaptiveGdState::new(lr, mode)?),
    }
    let mut history = Vec::new();
    let mut prev: Option<f64> = None;
    let mut iter = 0;
    let stop_reason = loop {
        let (loss, grad) = risk_and_grad(model, &params, data, config.loss, config.grad_method)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iter, loss });
        }
        debug_assert!(loss >= 0.0);
        let lr = adam.as_ref().map_or_else(
            || agd.as_ref().map_or(0.0, |s: &AdaptiveGdState| s.lr),
            |s| s.lr,
        );
        history.push(HistoryRow { iter, loss, lr });
        if config.stop_empirical_loss.is_some_and(|t| loss < t) {
            break StopReason::EmpiricalLoss;
        }
        if let (Some(t), Some(p)) = (config.stop_relative_loss, prev) {
            if (loss - p).abs() / p.max(1e-12) < t {
                break StopReason::RelativeLoss;
            }
        }
        if iter == config.max_iters {
            break StopReason::MaxIters;
        }
        if let Some(s) = adam.as_mut() {
            s.step(&mut params, &grad)?;
        } else if let Some(s) = agd.as_mut() {
            s.step(&mut params, &grad, loss)?;
        }
        prev = Some(loss);
        iter += 1;
    };
    Ok(TrainResult {
        params,
        history,
        stop_reason,
    })
}
