//! Shared test oracles. The dense evaluator here rebuilds every gate as a
//! full 2^n x 2^n matrix from first principles, independent of the
//! simulator's fused kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qml_errlab::circuits::{Angle, Axis, Circuit, Gate};
use qml_errlab::statevec::{CMatrix, StateVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli(axis: Axis) -> [[C64; 2]; 2] {
    match axis {
        Axis::X => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        Axis::Y => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        Axis::Z => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
    }
}

/// `cos(t/2) I - i sin(t/2) P`.
pub fn rot(axis: Axis, t: f64) -> DMatrix<C64> {
    let p = pauli(axis);
    let (s, co) = (t / 2.0).sin_cos();
    DMatrix::from_fn(2, 2, |r, k| {
        let id = if r == k { c(co, 0.) } else { c(0., 0.) };
        id - c(0., s) * p[r][k]
    })
}

fn bit(index: usize, n: usize, q: usize) -> usize {
    (index >> (n - 1 - q)) & 1
}

/// Embeds `m` acting on `targets` (first target = most significant local bit).
pub fn embed(m: &DMatrix<C64>, targets: &[usize], n: usize) -> DMatrix<C64> {
    let dim = 1 << n;
    let local = |i: usize| targets.iter().fold(0, |acc, &t| (acc << 1) | bit(i, n, t));
    let rest_mask: usize = (0..n)
        .filter(|q| !targets.contains(q))
        .map(|q| 1 << (n - 1 - q))
        .sum();
    DMatrix::from_fn(dim, dim, |i, j| {
        if i & rest_mask == j & rest_mask {
            m[(local(i), local(j))]
        } else {
            c(0., 0.)
        }
    })
}

fn resolve(a: Angle, params: &[f64], data: &[f64]) -> f64 {
    match a {
        Angle::Param(k) => params[k],
        Angle::Bound(v) => v,
        Angle::Data(k) => data[k],
    }
}

pub fn dense_gate(g: &Gate, n: usize, params: &[f64], data: &[f64]) -> DMatrix<C64> {
    let dim = 1 << n;
    match g {
        Gate::Rotation {
            axis,
            target,
            angle,
        } => embed(&rot(*axis, resolve(*angle, params, data)), &[*target], n),
        Gate::ControlledRotation {
            axis,
            controls,
            target,
            angle,
        } => {
            let r = embed(&rot(*axis, resolve(*angle, params, data)), &[*target], n);
            let active = |i: usize| controls.iter().all(|&q| bit(i, n, q) == 1);
            DMatrix::from_fn(dim, dim, |i, j| {
                if active(j) {
                    r[(i, j)]
                } else if i == j {
                    c(1., 0.)
                } else {
                    c(0., 0.)
                }
            })
        }
        Gate::Cz(a, b) => DMatrix::from_fn(dim, dim, |i, j| {
            if i != j {
                c(0., 0.)
            } else if bit(i, n, *a) == 1 && bit(i, n, *b) == 1 {
                c(-1., 0.)
            } else {
                c(1., 0.)
            }
        }),
        Gate::Cnot { control, target } => DMatrix::from_fn(dim, dim, |i, j| {
            let image = if bit(j, n, *control) == 1 {
                j ^ (1 << (n - 1 - target))
            } else {
                j
            };
            if i == image {
                c(1., 0.)
            } else {
                c(0., 0.)
            }
        }),
        Gate::Fixed { targets, matrix } => embed(matrix, targets, n),
    }
}

/// Product of the dense gate matrices, last gate leftmost.
pub fn dense_unitary(circ: &Circuit, params: &[f64], data: &[f64]) -> DMatrix<C64> {
    let n = circ.n_qubits();
    circ.gates()
        .iter()
        .fold(DMatrix::identity(1 << n, 1 << n), |acc, g| {
            dense_gate(g, n, params, data) * acc
        })
}

pub fn gaussian_c(rng: &mut ChaCha8Rng) -> C64 {
    c(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

pub fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
    StateVector::normalized((0..1 << n).map(|_| gaussian_c(rng)).collect()).unwrap()
}

pub fn random_unit4(rng: &mut ChaCha8Rng) -> [C64; 4] {
    let v: [C64; 4] = std::array::from_fn(|_| gaussian_c(rng));
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.map(|z| z / norm)
}

/// Haar unitary via QR of a complex Ginibre matrix with the phase fix.
pub fn haar_unitary(dim: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| gaussian_c(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() == 0.0 {
                c(1., 0.)
            } else {
                d / d.norm()
            }
        } else {
            c(0., 0.)
        }
    });
    q * phases
}

fn random_axis(rng: &mut ChaCha8Rng) -> Axis {
    [Axis::X, Axis::Y, Axis::Z][rng.random_range(0..3)]
}

fn distinct(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for _ in 0..k {
        out.push(pool.swap_remove(rng.random_range(0..pool.len())));
    }
    out
}

/// Random circuit over every gate kind with trainable, bound and data angles.
pub fn random_circuit(n: usize, n_gates: usize, rng: &mut ChaCha8Rng) -> Circuit {
    let mut circ = Circuit::new(n).unwrap();
    let mut next_param = 0;
    for _ in 0..n_gates {
        let angle = match rng.random_range(0..3) {
            0 => {
                next_param += 1;
                Angle::Param(next_param - 1)
            }
            1 => Angle::Bound(rng.random_range(-4.0..4.0)),
            _ => Angle::Data(rng.random_range(0..2)),
        };
        let kind = if n == 1 {
            rng.random_range(0..2) * 4
        } else {
            rng.random_range(0..6)
        };
        let gate = match kind {
            0 => Gate::Rotation {
                axis: random_axis(rng),
                target: rng.random_range(0..n),
                angle,
            },
            1 => {
                let k = rng.random_range(2..=n);
                let qs = distinct(n, k, rng);
                Gate::ControlledRotation {
                    axis: random_axis(rng),
                    controls: qs[1..].to_vec(),
                    target: qs[0],
                    angle,
                }
            }
            2 => {
                let qs = distinct(n, 2, rng);
                Gate::Cz(qs[0], qs[1])
            }
            3 => {
                let qs = distinct(n, 2, rng);
                Gate::Cnot {
                    control: qs[0],
                    target: qs[1],
                }
            }
            4 => {
                let k = rng.random_range(1..=n.min(2));
                let targets = distinct(n, k, rng);
                Gate::Fixed {
                    matrix: haar_unitary(1 << k, rng),
                    targets,
                }
            }
            _ => {
                let targets = distinct(n, n.min(3), rng);
                Gate::Fixed {
                    matrix: haar_unitary(1 << targets.len(), rng),
                    targets,
                }
            }
        };
        circ.push(gate).unwrap();
    }
    circ
}

pub fn max_amp_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
