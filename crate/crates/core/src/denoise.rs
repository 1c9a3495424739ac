//! Gaussian denoise problem `y = f_{theta*}(x) + noise`, its sample
//! density, the excess-risk identity and ERM sweeps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::experiments::{derive_seed, par_map};
use crate::models::{QmlModel, SingleQubitFitModel, TwoLocalModel};
use crate::statevec::C64;
use crate::train::{train, TrainConfig};

/// A model whose inputs can be drawn from the uniform distribution `mu`
/// on its domain.
pub trait UniformDomain: QmlModel {
    fn sample_input(&self, rng: &mut ChaCha8Rng) -> Self::Input;
    /// Density of `mu` at `x` with respect to the reference measure of the domain.
    fn input_density(&self, x: &Self::Input) -> f64;
}

impl UniformDomain for SingleQubitFitModel {
    fn sample_input(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(0.0..=PI)
    }

    /// Lebesgue density on `[0, pi]`.
    fn input_density(&self, x: &f64) -> f64 {
        if (0.0..=PI).contains(x) {
            1.0 / PI
        } else {
            0.0
        }
    }
}

impl UniformDomain for TwoLocalModel {
    fn sample_input(&self, rng: &mut ChaCha8Rng) -> Vec<[C64; 4]> {
        (0..self.n_pairs())
            .map(|_| {
                let v: [C64; 4] = std::array::from_fn(|_| {
                    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
                });
                let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                v.map(|c| c / n)
            })
            .collect()
    }

    /// Density relative to the normalized unitarily invariant measure on
    /// the product of unit spheres.
    fn input_density(&self, _x: &Vec<[C64; 4]>) -> f64 {
        1.0
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseProblem<M> {
    pub model: M,
    pub target_params: Vec<f64>,
    pub sigma2: f64,
}

impl<M: UniformDomain> DenoiseProblem<M> {
    /// Noise variance defaults to 1/2.
    pub fn new(model: M, target_params: Vec<f64>) -> Result<Self> {
        Self::with_variance(model, target_params, 0.5)
    }

    pub fn with_variance(model: M, target_params: Vec<f64>, sigma2: f64) -> Result<Self> {
        model.check_params(&target_params)?;
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "noise variance {sigma2} must be positive"
            )));
        }
        Ok(Self {
            model,
            target_params,
            sigma2,
        })
    }

    pub fn target(&self, x: &M::Input) -> Result<f64> {
        self.model.eval(&self.target_params, x)
    }

    /// `N` i.i.d. pairs `(x, f*(x) + noise)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(M::Input, f64)>> {
        if n == 0 {
            return Err(Error::Empty("denoise sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise =
            Normal::new(0.0, self.sigma2.sqrt()).map_err(|e| Error::OutOfRange(e.to_string()))?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.model.sample_input(&mut rng);
            let y = self.target(&x)? + noise.sample(&mut rng);
            out.push((x, y));
        }
        Ok(out)
    }

    /// Joint density of `(x, y)`: Gaussian in `y - f*(x)` times `mu(x)`.
    pub fn density(&self, x: &M::Input, y: f64) -> Result<f64> {
        let r = y - self.target(x)?;
        Ok(
            (-r * r / (2.0 * self.sigma2)).exp() / (2.0 * PI * self.sigma2).sqrt()
                * self.model.input_density(x),
        )
    }

    /// Monte-Carlo estimate of `||f_candidate - f*||^2` in `L^2(mu)` on
    /// noise-free draws, with its standard error.
    pub fn squared_distance(
        &self,
        candidate: &[f64],
        points: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = Vec::with_capacity(points);
        for _ in 0..points {
            let x = self.model.sample_input(&mut rng);
            let d = self.model.eval(candidate, &x)? - self.target(&x)?;
            vals.push(d * d);
        }
        Ok(mean_and_stderr(&vals))
    }
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    /// Risk difference `R(f_candidate) - R(f*)` on fresh noisy samples.
    pub lhs: f64,
    /// Squared `L^2(mu)` distance on noise-free draws.
    pub rhs: f64,
    pub gap: f64,
    /// Standard error of `lhs - rhs` (independent estimates).
    pub stderr: f64,
}

/// Compares the excess risk with the squared `L^2(mu)` distance.
pub fn excess_risk_identity_check<M: UniformDomain>(
    problem: &DenoiseProblem<M>,
    candidate: &[f64],
    mc_points: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    if mc_points < 10_000 {
        return Err(Error::OutOfRange(format!(
            "mc_points = {mc_points} below 10^4"
        )));
    }
    problem.model.check_params(candidate)?;
    let noisy = problem.sample(mc_points, derive_seed(seed, &[1]))?;
    let mut diffs = Vec::with_capacity(mc_points);
    for (x, y) in &noisy {
        let fc = problem.model.eval(candidate, x)?;
        let fs = problem.target(x)?;
        diffs.push((fc - y) * (fc - y) - (fs - y) * (fs - y));
    }
    let (lhs, se_l) = mean_and_stderr(&diffs);
    let (rhs, se_r) = problem.squared_distance(candidate, mc_points, derive_seed(seed, &[2]))?;
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        stderr: (se_l * se_l + se_r * se_r).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseRow {
    pub n: usize,
    pub seed: u64,
    pub excess_risk: f64,
    pub train_loss: f64,
    pub iters: usize,
    /// Training error, if the cell failed.
    pub error: Option<String>,
}

/// ERM on a fresh sample per `(N, seed)` cell, keeping the lowest training
/// loss over `restarts` random initializations. The excess risk is the
/// squared `L^2(mu)` distance on `eval_points` draws shared by all cells.
pub fn run_denoise_erm<M: UniformDomain>(
    problem: &DenoiseProblem<M>,
    n_grid: &[usize],
    seeds: &[u64],
    config: &TrainConfig,
    restarts: usize,
    eval_points: usize,
    master_seed: u64,
) -> Result<Vec<DenoiseRow>> {
    if restarts == 0 {
        return Err(Error::OutOfRange("restarts must be at least 1".into()));
    }
    let eval_seed = derive_seed(master_seed, &[0xe7a1]);
    let cells: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    par_map(&cells, |&(n, seed)| -> Result<DenoiseRow> {
        let cell_seed = derive_seed(master_seed, &[n as u64, seed]);
        let data = problem.sample(n, cell_seed)?;
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        let mut last_err = None;
        for r in 0..restarts {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(cell_seed, &[0x7a1, r as u64]);
            match train(&problem.model, &cfg, &data) {
                Ok(res) => {
                    let loss = res.final_loss();
                    if best.as_ref().is_none_or(|b| loss < b.0) {
                        best = Some((loss, res.params.clone(), res.iters()));
                    }
                }
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        Ok(match best {
            Some((loss, params, iters)) => DenoiseRow {
                n,
                seed,
                excess_risk: problem.squared_distance(&params, eval_points, eval_seed)?.0,
                train_loss: loss,
                iters,
                error: None,
            },
            None => DenoiseRow {
                n,
                seed,
                excess_risk: f64::NAN,
                train_loss: f64::NAN,
                iters: 0,
                error: last_err,
            },
        })
    })
    .into_iter()
    .collect()
}
