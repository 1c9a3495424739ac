//! Experiment harness: configuration, the function-fitting and phase
//! recognition sweeps, denoise/entropy/compile self-checks, scaling fits
//! and result files.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compile::compile;
use crate::denoise::{excess_risk_identity_check, run_denoise_erm, DenoiseProblem};
use crate::entropy::{
    covering_radius, grassmann_packing_bounds, greedy_covering, greedy_packing,
    min_pairwise_distance, sample_grassmann_cloud, sandwich_check, MetricCloud,
};
use crate::error::{Error, Result};
use crate::models::{QcnnModel, QmlModel, ReuploadModel, SingleQubitFitModel};
use crate::phases::{
    calibrated_threshold, eval_dataset, generate_qpr_dataset, GroundStateCache, GroundStateRecord,
    GRID_SIDE, QPR_QUBITS,
};
use crate::statevec::{Observable, Pauli};
use crate::train::{train, AdaptiveMode, GradMethod, OptimizerKind, TrainConfig};

pub const FIT_N_GRID: [usize; 11] = [6, 8, 10, 12, 14, 16, 20, 24, 28, 32, 400];
pub const FIT_T_GRID: [usize; 8] = [30, 45, 60, 75, 90, 105, 120, 150];
pub const QPR_N_GRID: [usize; 10] = [5, 6, 7, 8, 9, 10, 12, 15, 20, 40];
pub const DENOISE_N_GRID: [usize; 5] = [25, 50, 100, 200, 400];
/// Parameter counts below this are reported as upper bounds on the
/// prediction error (the best model's risk is not known to vanish).
pub const FIT_ZERO_RISK_T: usize = 45;

/// `sin(3x)/3x - sin(5x)/5x + sin(7x)/7x - sin(9x)/9x`, with the limit 0 at `x = 0`.
pub fn target_function(x: f64) -> f64 {
    let sinc = |k: f64| {
        let z = k * x;
        if z.abs() < 1e-4 {
            // series 1 - z^2/6 + z^4/120
            1.0 - z * z / 6.0 + z.powi(4) / 120.0
        } else {
            z.sin() / z
        }
    };
    sinc(3.0) - sinc(5.0) + sinc(7.0) - sinc(9.0)
}

/// `count` i.i.d. uniform draws on `[lo, hi]` from one seeded stream.
pub fn uniform_draws(lo: f64, hi: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Uniform samples for every size in `n_grid`, each a prefix of the next.
pub fn nested_uniform_samples(
    lo: f64,
    hi: f64,
    n_grid: &[usize],
    seed: u64,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    if n_grid.is_empty() {
        return Err(Error::Empty("sample-size grid"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sample-size grid must be strictly increasing".into(),
        ));
    }
    let all = uniform_draws(lo, hi, *n_grid.last().expect("nonempty"), seed);
    Ok(n_grid.iter().map(|&n| (n, all[..n].to_vec())).collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for a cell identified by `parts`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Maps `f` over `items` on all available cores; output order matches input.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= items.len() {
                            break local;
                        }
                        local.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regressor {
    InverseN,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub regressor: Regressor,
}

/// Ordinary least squares of `y` on `x`. A constant `y` gives `R^2 = 1`.
pub fn scaling_fit(points: &[(f64, f64)], regressor: Regressor) -> Result<ScalingFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::Domain(format!(
            "scaling fit needs at least 3 distinct regressor values, got {}",
            xs.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        regressor,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain(
            "spearman needs two equal-length series of length >= 2".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    FitFunction,
    PhaseRecognition,
    Denoise,
    Entropy,
    CompileCheck,
}

impl Verb {
    pub const ALL: [Verb; 5] = [
        Verb::FitFunction,
        Verb::PhaseRecognition,
        Verb::Denoise,
        Verb::Entropy,
        Verb::CompileCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::FitFunction => "fit-function",
            Verb::PhaseRecognition => "phase-recognition",
            Verb::Denoise => "denoise",
            Verb::Entropy => "entropy",
            Verb::CompileCheck => "compile-check",
        }
    }

    /// Verbs whose thresholds decide the exit status.
    pub fn is_self_check(self) -> bool {
        matches!(self, Verb::Entropy | Verb::CompileCheck)
    }

    fn extra_keys(self) -> &'static [&'static str] {
        match self {
            Verb::FitFunction => &["lr", "max_iters", "stop_loss", "init_range", "grad_method"],
            Verb::PhaseRecognition => &[
                "lr",
                "max_iters",
                "stop_relative",
                "init_range",
                "optimizer",
                "grad_method",
                "oracle_threshold",
                "cache_dir",
            ],
            Verb::Denoise => &[
                "blocks",
                "sigma2",
                "lr",
                "max_iters",
                "stop_relative",
                "init_range",
                "restarts",
                "identity_candidates",
                "identity_points",
            ],
            Verb::Entropy => &["m_grid", "eps_grid", "cloud_size", "sandwich_cloud_size"],
            Verb::CompileCheck => &["battery", "q", "tolerance", "offgrid_points"],
        }
    }
}

impl FromStr for Verb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Verb> {
        Verb::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Verb,
    pub n_grid: Vec<usize>,
    pub t_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eval_points: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Verb-specific settings, validated against [`Verb`]'s key list.
    pub extra: BTreeMap<String, String>,
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn defaults(verb: Verb) -> Self {
        let (n_grid, t_grid, eval_points) = match verb {
            Verb::FitFunction => (FIT_N_GRID.to_vec(), FIT_T_GRID.to_vec(), 2000),
            Verb::PhaseRecognition => (QPR_N_GRID.to_vec(), vec![], GRID_SIDE * GRID_SIDE),
            Verb::Denoise => (DENOISE_N_GRID.to_vec(), vec![6], 10_000),
            Verb::Entropy | Verb::CompileCheck => (vec![], vec![], 0),
        };
        ExperimentConfig {
            experiment: verb,
            n_grid,
            t_grid,
            seeds: if verb == Verb::Denoise {
                (0..20).collect()
            } else {
                (0..5).collect()
            },
            eval_points,
            output_dir: PathBuf::from(format!("out/{}", verb.name())),
            master_seed: 0,
            extra: BTreeMap::new(),
        }
    }

    /// Parses flat `key = value` lines; `#` starts a comment. Missing keys
    /// keep the defaults of `verb`.
    pub fn parse(text: &str, verb: Verb) -> Result<Self> {
        let mut cfg = Self::defaults(verb);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "experiment" => {
                    let e: Verb = v.parse()?;
                    if e != verb {
                        return Err(Error::Config(format!(
                            "config is for '{}', not '{}'",
                            e.name(),
                            verb.name()
                        )));
                    }
                }
                "N_grid" | "n_grid" => cfg.n_grid = parse_list(k, v)?,
                "T_grid" | "t_grid" => cfg.t_grid = parse_list(k, v)?,
                "seeds" => cfg.seeds = parse_list(k, v)?,
                "eval_points" => cfg.eval_points = parse_one(k, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "master_seed" => cfg.master_seed = parse_one(k, v)?,
                _ if verb.extra_keys().contains(&k) => {
                    cfg.extra.insert(k.to_string(), v.to_string());
                }
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{k}'",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let needs_n = matches!(
            self.experiment,
            Verb::FitFunction | Verb::PhaseRecognition | Verb::Denoise
        );
        if needs_n && self.n_grid.is_empty() {
            return Err(Error::Config("N_grid must not be empty".into()));
        }
        if self.experiment == Verb::FitFunction && self.t_grid.is_empty() {
            return Err(Error::Config("T_grid must not be empty".into()));
        }
        if needs_n && self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if needs_n && self.n_grid.iter().any(|&n| n == 0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` echo used in the manifest.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment={}", self.experiment.name());
        let _ = writeln!(s, "N_grid={}", join(&self.n_grid));
        let _ = writeln!(s, "T_grid={}", join(&self.t_grid));
        let _ = writeln!(s, "seeds={}", join(&self.seeds));
        let _ = writeln!(s, "eval_points={}", self.eval_points);
        let _ = writeln!(s, "output_dir={}", self.output_dir.display());
        let _ = writeln!(s, "master_seed={}", self.master_seed);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.extra.get(key) {
            Some(v) => parse_one(key, v),
            None => Ok(default),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.extra.get(key) {
            Some(v) => parse_list(key, v),
            None => Ok(default),
        }
    }

    fn grad_method(&self) -> Result<GradMethod> {
        match self.extra.get("grad_method").map(String::as_str) {
            None | Some("adjoint") => Ok(GradMethod::Adjoint),
            Some("param-shift") => Ok(GradMethod::ParamShift),
            Some("hybrid") => Ok(GradMethod::Hybrid(1e-5)),
            Some("finite-diff") => Ok(GradMethod::FiniteDiff(1e-5)),
            Some(other) => Err(Error::Config(format!("unknown grad_method '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub train_loss: f64,
    /// Mean squared error against the target on the evaluation points.
    pub pred_error: f64,
    pub iters: usize,
    pub stop_reason: String,
    /// True when `T` is too small for the best model's risk to be taken as
    /// zero, so `pred_error` only upper-bounds the prediction error.
    pub upper_bound: bool,
    pub error: Option<String>,
    pub wall_time: f64,
}

fn fit_train_config(cfg: &ExperimentConfig, seed: u64) -> Result<TrainConfig> {
    let mut tc = TrainConfig::function_fitting(seed);
    if let OptimizerKind::Adam { lr } = &mut tc.optimizer {
        *lr = cfg.get("lr", *lr)?;
    }
    tc.max_iters = cfg.get("max_iters", tc.max_iters)?;
    tc.stop_empirical_loss = Some(cfg.get("stop_loss", 0.001)?);
    tc.init_range = cfg.get("init_range", FRAC_PI_3)?;
    tc.grad_method = cfg.grad_method()?;
    Ok(tc)
}

/// Function fitting over every `(N, T, seed)` cell. Samples for one seed
/// are nested across `N`; the initial parameters depend on `(seed, T)` only.
pub fn run_fit_sweep(cfg: &ExperimentConfig) -> Result<Vec<FitRow>> {
    let mut n_sorted = cfg.n_grid.clone();
    n_sorted.sort_unstable();
    n_sorted.dedup();
    let eval_x = uniform_draws(
        0.0,
        PI,
        cfg.eval_points.max(1),
        derive_seed(cfg.master_seed, &[0xe7a1]),
    );
    let eval_y: Vec<f64> = eval_x.iter().map(|&x| target_function(x)).collect();
    let mut samples = BTreeMap::new();
    for &seed in &cfg.seeds {
        samples.insert(
            seed,
            nested_uniform_samples(0.0, PI, &n_sorted, derive_seed(cfg.master_seed, &[seed]))?,
        );
    }
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for &t in &cfg.t_grid {
            for &seed in &cfg.seeds {
                cells.push((n, t, seed));
            }
        }
    }
    let rows = par_map(&cells, |&(n, t, seed)| -> Result<FitRow> {
        let start = Instant::now();
        let model = SingleQubitFitModel::with_params(t)?;
        let xs = &samples[&seed][&n];
        let data: Vec<(f64, f64)> = xs.iter().map(|&x| (x, target_function(x))).collect();
        let tc = fit_train_config(cfg, derive_seed(cfg.master_seed, &[seed, t as u64, 0x1417]))?;
        let mut row = FitRow {
            n,
            t,
            seed,
            train_loss: f64::NAN,
            pred_error: f64::NAN,
            iters: 0,
            stop_reason: String::new(),
            upper_bound: t < FIT_ZERO_RISK_T,
            error: None,
            wall_time: 0.0,
        };
        match train(&model, &tc, &data) {
            Ok(res) => {
                let mut acc = 0.0;
                for (x, y) in eval_x.iter().zip(&eval_y) {
                    let f = model.eval(&res.params, x)?;
                    acc += (f - y) * (f - y);
                }
                row.train_loss = res.final_loss();
                row.pred_error = acc / eval_x.len() as f64;
                row.iters = res.iters();
                row.stop_reason = res.stop_reason.to_string();
            }
            Err(e) => {
                row.stop_reason = "error".into();
                row.error = Some(e.to_string());
            }
        }
        row.wall_time = start.elapsed().as_secs_f64();
        Ok(row)
    });
    rows.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QprRow {
    pub n: usize,
    pub seed: u64,
    pub train_loss: f64,
    /// Mean squared error against oracle labels on the evaluation grid.
    pub avg_loss: f64,
    /// Fraction of the `h2 = 0` grid row classified with the right sign.
    pub slice_accuracy: f64,
    pub iters: usize,
    pub stop_reason: String,
    pub error: Option<String>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub h1: f64,
    pub h2: f64,
    pub label: f64,
    pub output: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QprOutput {
    pub rows: Vec<QprRow>,
    /// Model outputs on the evaluation grid for the largest `N` and first seed.
    pub grid: Vec<GridRow>,
    pub oracle_threshold: f64,
}

fn qpr_train_config(cfg: &ExperimentConfig, seed: u64) -> Result<TrainConfig> {
    let mut tc = TrainConfig::phase_recognition(seed);
    let lr = cfg.get("lr", 1e-5)?;
    tc.optimizer = match cfg.extra.get("optimizer").map(String::as_str) {
        None | Some("adaptive-verbatim") => OptimizerKind::AdaptiveGd {
            lr,
            mode: AdaptiveMode::Verbatim,
        },
        Some("adaptive-conventional") => OptimizerKind::AdaptiveGd {
            lr,
            mode: AdaptiveMode::Conventional,
        },
        Some("adam") => OptimizerKind::Adam { lr },
        Some(other) => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
    };
    tc.max_iters = cfg.get("max_iters", tc.max_iters)?;
    tc.stop_relative_loss = Some(cfg.get("stop_relative", 1e-7)?);
    tc.init_range = cfg.get("init_range", std::f64::consts::FRAC_PI_2)?;
    tc.grad_method = cfg.grad_method()?;
    Ok(tc)
}

pub fn oracle_threshold(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.extra.get("oracle_threshold").map(String::as_str) {
        None | Some("calibrated") => calibrated_threshold(QPR_QUBITS),
        Some(v) => parse_one("oracle_threshold", v),
    }
}

/// QCNN phase recognition over every `(N, seed)` cell.
pub fn run_qpr_sweep(cfg: &ExperimentConfig) -> Result<QprOutput> {
    let cache = match cfg.extra.get("cache_dir") {
        Some(d) => Some(GroundStateCache::new(d)?),
        None => None,
    };
    let threshold = oracle_threshold(cfg)?;
    let eval = eval_dataset(cache.as_ref(), threshold)?;
    let max_n = *cfg.n_grid.iter().max().expect("validated");
    let mut train_sets: BTreeMap<u64, Vec<GroundStateRecord>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        train_sets.insert(
            seed,
            generate_qpr_dataset(max_n, derive_seed(cfg.master_seed, &[seed]), cache.as_ref())?,
        );
    }
    let model = QcnnModel::new()?;
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for &seed in &cfg.seeds {
            cells.push((n, seed));
        }
    }
    let grid_cell = (max_n, cfg.seeds[0]);
    let results = par_map(
        &cells,
        |&(n, seed)| -> Result<(QprRow, Option<Vec<GridRow>>)> {
            let start = Instant::now();
            let data: Vec<_> = train_sets[&seed][..n]
                .iter()
                .map(|r| (r.state.clone(), r.label))
                .collect();
            let tc = qpr_train_config(cfg, derive_seed(cfg.master_seed, &[seed, n as u64, 0x9c]))?;
            let mut row = QprRow {
                n,
                seed,
                train_loss: f64::NAN,
                avg_loss: f64::NAN,
                slice_accuracy: f64::NAN,
                iters: 0,
                stop_reason: String::new(),
                error: None,
                wall_time: 0.0,
            };
            let mut grid = None;
            match train(&model, &tc, &data) {
                Ok(res) => {
                    let outputs = eval
                        .iter()
                        .map(|r| model.eval(&res.params, &r.state))
                        .collect::<Result<Vec<f64>>>()?;
                    let (mut loss, mut hits, mut slice) = (0.0, 0usize, 0usize);
                    for (r, f) in eval.iter().zip(&outputs) {
                        loss += (f - r.label) * (f - r.label);
                        if r.h2 == 0.0 {
                            slice += 1;
                            if sign(*f) == r.label {
                                hits += 1;
                            }
                        }
                    }
                    row.train_loss = res.final_loss();
                    row.avg_loss = loss / eval.len() as f64;
                    row.slice_accuracy = hits as f64 / slice.max(1) as f64;
                    row.iters = res.iters();
                    row.stop_reason = res.stop_reason.to_string();
                    if (n, seed) == grid_cell {
                        grid = Some(
                            eval.iter()
                                .zip(&outputs)
                                .map(|(r, f)| GridRow {
                                    h1: r.h1,
                                    h2: r.h2,
                                    label: r.label,
                                    output: *f,
                                })
                                .collect(),
                        );
                    }
                }
                Err(e) => {
                    row.stop_reason = "error".into();
                    row.error = Some(e.to_string());
                }
            }
            row.wall_time = start.elapsed().as_secs_f64();
            Ok((row, grid))
        },
    );
    let mut rows = Vec::with_capacity(results.len());
    let mut grid = Vec::new();
    for r in results {
        let (row, g) = r?;
        if let Some(g) = g {
            grid = g;
        }
        rows.push(row);
    }
    Ok(QprOutput {
        rows,
        grid,
        oracle_threshold: threshold,
    })
}

/// Predicted label: +1 for a positive output.
pub fn sign(f: f64) -> f64 {
    if f > 0.0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Result files

/// 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.11e}")
    }
}

/// A finished run: CSV files to write, manifest notes and any threshold
/// violations.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    /// `(file name, contents)`; the first entry is `results.csv`.
    pub files: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub violations: Vec<String>,
    pub plots: Vec<(String, String)>,
}

pub fn manifest(cfg: &ExperimentConfig, report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "tool={} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    s.push_str(&cfg.to_text());
    for n in &report.notes {
        let _ = writeln!(s, "note.{n}");
    }
    let _ = writeln!(s, "violations={}", report.violations.len());
    for v in &report.violations {
        let _ = writeln!(s, "violation={v}");
    }
    s
}

/// Writes the report files plus `manifest.txt` into `dir`.
pub fn write_report(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &RunReport,
    plots: bool,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in &report.files {
        fs::write(dir.join(name), body)?;
    }
    if plots {
        for (name, body) in &report.plots {
            fs::write(dir.join(name), body)?;
        }
    }
    fs::write(dir.join("manifest.txt"), manifest(cfg, report))?;
    Ok(())
}

fn opt_err(e: &Option<String>) -> String {
    e.as_deref().unwrap_or("").replace([',', '\n'], ";")
}

/// Runs one verb end to end, returning the files to write.
pub fn run_verb(cfg: &ExperimentConfig) -> Result<RunReport> {
    match cfg.experiment {
        Verb::FitFunction => fit_report(cfg),
        Verb::PhaseRecognition => qpr_report(cfg),
        Verb::Denoise => denoise_report(cfg),
        Verb::Entropy => entropy_report(cfg),
        Verb::CompileCheck => compile_report(cfg),
    }
}

fn fit_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let rows = run_fit_sweep(cfg)?;
    let mut csv =
        String::from("N,T,seed,train_loss,pred_error,iters,stop_reason,upper_bound,error\n");
    let mut timing = String::from("N,T,seed,wall_time\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.t,
            r.seed,
            fmt12(r.train_loss),
            fmt12(r.pred_error),
            r.iters,
            r.stop_reason,
            r.upper_bound,
            opt_err(&r.error)
        );
        let _ = writeln!(timing, "{},{},{},{:.3}", r.n, r.t, r.seed, r.wall_time);
    }
    let mut notes = vec![
        "pred_error=mean squared error against the target on eval points (best-model risk taken as 0)".to_string(),
        format!("upper_bound=rows with T < {FIT_ZERO_RISK_T} only upper-bound the prediction error"),
    ];
    let mut series = Vec::new();
    for &t in &cfg.t_grid {
        let mut pts = Vec::new();
        for &n in &cfg.n_grid {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.t == t)
                .map(|r| r.pred_error)
                .collect();
            pts.push((1.0 / n as f64, median(&errs)));
        }
        if let Ok(fit) = scaling_fit(&pts, Regressor::InverseN) {
            notes.push(format!(
                "fit.T{t}.inverse_n slope={} intercept={} r_squared={}",
                fmt12(fit.slope),
                fmt12(fit.intercept),
                fmt12(fit.r_squared)
            ));
        }
        series.push((format!("T={t}"), pts));
    }
    Ok(RunReport {
        files: vec![("results.csv".into(), csv), ("timings.csv".into(), timing)],
        notes,
        violations: vec![],
        plots: vec![(
            "pred_error_vs_inverse_n.svg".into(),
            svg_plot(
                "median prediction error vs 1/N",
                "1/N",
                "prediction error",
                &series,
            ),
        )],
    })
}

fn qpr_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let out = run_qpr_sweep(cfg)?;
    let mut csv =
        String::from("N,seed,train_loss,avg_loss,slice_accuracy,iters,stop_reason,error\n");
    let mut timing = String::from("N,seed,wall_time\n");
    for r in &out.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.seed,
            fmt12(r.train_loss),
            fmt12(r.avg_loss),
            fmt12(r.slice_accuracy),
            r.iters,
            r.stop_reason,
            opt_err(&r.error)
        );
        let _ = writeln!(timing, "{},{},{:.3}", r.n, r.seed, r.wall_time);
    }
    let mut grid = String::from("h1,h2,label,output\n");
    for g in &out.grid {
        let _ = writeln!(
            grid,
            "{},{},{},{}",
            fmt12(g.h1),
            fmt12(g.h2),
            g.label,
            fmt12(g.output)
        );
    }
    let mut notes = vec![
        format!("oracle_threshold={}", fmt12(out.oracle_threshold)),
        "labels=training set h1<1 on h2=0; evaluation grid labelled by string order above the threshold".into(),
    ];
    let mut pts = Vec::new();
    for &n in &cfg.n_grid {
        let l: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.avg_loss)
            .collect();
        pts.push((1.0 / n as f64, median(&l)));
    }
    if let Ok(fit) = scaling_fit(&pts, Regressor::InverseN) {
        notes.push(format!(
            "fit.inverse_n slope={} intercept={} r_squared={}",
            fmt12(fit.slope),
            fmt12(fit.intercept),
            fmt12(fit.r_squared)
        ));
    }
    Ok(RunReport {
        files: vec![
            ("results.csv".into(), csv),
            ("grid.csv".into(), grid),
            ("timings.csv".into(), timing),
        ],
        notes,
        violations: vec![],
        plots: vec![(
            "avg_loss_vs_inverse_n.svg".into(),
            svg_plot(
                "median average loss vs 1/N",
                "1/N",
                "average loss",
                &[("QCNN".into(), pts)],
            ),
        )],
    })
}

fn denoise_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let blocks: usize = cfg.get("blocks", cfg.t_grid.first().map_or(2, |t| t / 3))?;
    let model = SingleQubitFitModel::new(blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[0x7a59]));
    let target: Vec<f64> = (0..model.n_params())
        .map(|_| rng.random_range(-PI..PI))
        .collect();
    let problem = DenoiseProblem::with_variance(model, target.clone(), cfg.get("sigma2", 0.5)?)?;
    let mut tc = TrainConfig::function_fitting(0);
    tc.optimizer = OptimizerKind::Adam {
        lr: cfg.get("lr", 0.02)?,
    };
    tc.stop_empirical_loss = None;
    tc.stop_relative_loss = Some(cfg.get("stop_relative", 1e-12)?);
    tc.max_iters = cfg.get("max_iters", 3000)?;
    tc.init_range = cfg.get("init_range", PI)?;
    let restarts: usize = cfg.get("restarts", 4)?;
    let rows = run_denoise_erm(
        &problem,
        &cfg.n_grid,
        &cfg.seeds,
        &tc,
        restarts,
        cfg.eval_points.max(1),
        cfg.master_seed,
    )?;
    let mut csv = String::from("N,seed,excess_risk,train_loss,iters,error\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.n,
            r.seed,
            fmt12(r.excess_risk),
            fmt12(r.train_loss),
            r.iters,
            opt_err(&r.error)
        );
    }
    let candidates: usize = cfg.get("identity_candidates", 10)?;
    let points: usize = cfg.get("identity_points", 100_000)?;
    let mut ident = String::from("candidate,lhs,rhs,gap,stderr,within_3se\n");
    for c in 0..candidates {
        let cand: Vec<f64> = (0..target.len())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let chk = excess_risk_identity_check(
            &problem,
            &cand,
            points,
            derive_seed(cfg.master_seed, &[0x1de, c as u64]),
        )?;
        let _ = writeln!(
            ident,
            "{c},{},{},{},{},{}",
            fmt12(chk.lhs),
            fmt12(chk.rhs),
            fmt12(chk.gap),
            fmt12(chk.stderr),
            chk.gap <= 3.0 * chk.stderr
        );
    }
    let mut pts = Vec::new();
    for &n in &cfg.n_grid {
        let e: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.excess_risk)
            .collect();
        pts.push((n as f64, median(&e)));
    }
    Ok(RunReport {
        files: vec![("results.csv".into(), csv), ("identity.csv".into(), ident)],
        notes: vec![
            format!(
                "target_model=single-qubit-fit blocks={blocks} T={}",
                3 * blocks
            ),
            format!("erm=best training loss over {restarts} random initializations"),
            format!(
                "target_params={}",
                target
                    .iter()
                    .map(|p| fmt12(*p))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
            "excess_risk=squared L2(mu) distance to the target on shared noise-free draws".into(),
        ],
        violations: vec![],
        plots: vec![(
            "excess_risk_vs_n.svg".into(),
            svg_plot(
                "median excess risk vs N",
                "N",
                "excess risk",
                &[("ERM".into(), pts)],
            ),
        )],
    })
}

fn entropy_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let m_grid: Vec<usize> = cfg.get_list("m_grid", vec![2])?;
    let eps_grid: Vec<f64> = cfg.get_list("eps_grid", vec![0.3, 0.5, 0.7])?;
    let cloud_size: usize = cfg.get("cloud_size", 20_000)?;
    let sandwich_size: usize = cfg.get("sandwich_cloud_size", 2_000)?;
    let mut csv = String::from(
        "m,eps,greedy_packing,greedy_covering,bound_lower,bound_upper,sandwich_holds,packing_cloud,sandwich_cloud\n",
    );
    let mut violations = Vec::new();
    for &m in &m_grid {
        let cloud =
            sample_grassmann_cloud(m, cloud_size, derive_seed(cfg.master_seed, &[m as u64]))?;
        let small = MetricCloud::new(
            cloud.points[..sandwich_size.min(cloud.len())].to_vec(),
            cloud.metric,
        );
        for &eps in &eps_grid {
            let (lower, upper) = grassmann_packing_bounds(m, eps)?;
            let pack = greedy_packing(&cloud, eps);
            let cover = greedy_covering(&small, eps);
            let sw = sandwich_check(&small, eps);
            if min_pairwise_distance(&cloud, &pack) <= eps {
                violations.push(format!(
                    "m={m} eps={eps}: packing net has a pair within eps"
                ));
            }
            if covering_radius(&small, &cover) > eps {
                violations.push(format!(
                    "m={m} eps={eps}: covering net leaves a point uncovered"
                ));
            }
            if !sw.holds {
                violations.push(format!("m={m} eps={eps}: sandwich inequality fails"));
            }
            if pack.len() as f64 > upper {
                violations.push(format!(
                    "m={m} eps={eps}: packing {} above upper bound {upper}",
                    pack.len()
                ));
            }
            if lower >= 1.0 && (pack.len() as f64) < lower.ceil() {
                violations.push(format!(
                    "m={m} eps={eps}: packing {} below lower bound {lower}",
                    pack.len()
                ));
            }
            let _ = writeln!(
                csv,
                "{m},{},{},{},{},{},{},{},{}",
                fmt12(eps),
                pack.len(),
                cover.len(),
                fmt12(lower),
                fmt12(upper),
                sw.holds,
                cloud.len(),
                small.len()
            );
        }
    }
    Ok(RunReport {
        files: vec![("results.csv".into(), csv)],
        notes: vec!["greedy_covering=greedy set cover on the first sandwich_cloud points".into()],
        violations,
        plots: vec![],
    })
}

fn compile_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let battery: usize = cfg.get("battery", 100)?;
    let q: usize = cfg.get("q", 4)?;
    let tol: f64 = cfg.get("tolerance", 1e-10)?;
    let offgrid: usize = cfg.get("offgrid_points", 50)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[0xc0]));
    let mut csv = String::from("case,L,n,q,deviation,ancilla_deviation\n");
    let mut worst = 0.0f64;
    let mut worst_anc = 0.0f64;
    let mut models = BTreeMap::new();
    for l in 1..=2usize {
        for n in 1..=2usize {
            let src = ReuploadModel::rz_encoded_layers(n, l, Observable::pauli(n, 0, Pauli::Z)?)?;
            let comp = compile(&src, q)?;
            models.insert((l, n), (src, comp));
        }
    }
    for case in 0..battery {
        let (l, n) = (1 + case % 2, 1 + (case / 2) % 2);
        let (src, comp) = &models[&(l, n)];
        let params: Vec<f64> = (0..src.n_params())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..(1u32 << q)) as f64 / (1u64 << q) as f64)
            .collect();
        let dev = (comp.eval(&params, &x)? - src.eval(&params, &x)?).abs();
        let anc = comp.ancilla_purity_deviation(&params, &x)?;
        worst = worst.max(dev);
        worst_anc = worst_anc.max(anc);
        let _ = writeln!(csv, "{case},{l},{n},{q},{},{}", fmt12(dev), fmt12(anc));
    }
    // Off-grid error against L n 2^{-q}.
    let mut off = String::from("q,max_deviation,fitted_c\n");
    let mut notes = Vec::new();
    for qq in 1..=q {
        let mut c_fit = 0.0f64;
        let mut max_dev = 0.0f64;
        for (&(l, n), (src, _)) in &models {
            let comp = compile(src, qq)?;
            for _ in 0..offgrid {
                let params: Vec<f64> = (0..src.n_params())
                    .map(|_| rng.random_range(-PI..PI))
                    .collect();
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let dev = (comp.eval(&params, &x)? - src.eval(&params, &x)?).abs();
                max_dev = max_dev.max(dev);
                c_fit = c_fit.max(dev / ((l * n) as f64 * 0.5f64.powi(qq as i32)));
            }
        }
        let _ = writeln!(off, "{qq},{},{}", fmt12(max_dev), fmt12(c_fit));
        notes.push(format!("offgrid.q{qq} fitted_c={}", fmt12(c_fit)));
    }
    notes.push(format!("max_deviation={}", fmt12(worst)));
    notes.push(format!("max_ancilla_deviation={}", fmt12(worst_anc)));
    let mut violations = Vec::new();
    if worst > tol {
        violations.push(format!("grid deviation {worst:e} above {tol:e}"));
    }
    if worst_anc > 1e-12 {
        violations.push(format!("ancilla deviation {worst_anc:e} above 1e-12"));
    }
    Ok(RunReport {
        files: vec![("results.csv".into(), csv), ("offgrid.csv".into(), off)],
        notes,
        violations,
        plots: vec![],
    })
}

/// Minimal line plot; one polyline per series.
pub fn svg_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    ];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        w / 2.0
    );
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>",
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{ylabel}</text>",
        h / 2.0,
        h / 2.0
    );
    for (v, x, y, anchor) in [
        (x0, sx(x0), h - pad + 16.0, "middle"),
        (x1, sx(x1), h - pad + 16.0, "middle"),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{v:.3}</text>"
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3e}</text>",
            pad - 4.0,
            sy(v) + 4.0
        );
    }
    for (i, (name, ser)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let mut sorted: Vec<(f64, f64)> = ser
            .iter()
            .copied()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{c}\" points=\"{}\"/>",
            path.join(" ")
        );
        for &(x, y) in &sorted {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{c}\"/>",
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">{name}</text>",
            w - pad + 4.0,
            pad + 14.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_function_examples() {
        assert_eq!(target_function(0.0), 0.0);
        assert!(target_function(PI).abs() < 1e-15);
        assert!((target_function(1e-6)).abs() < 1e-9);
        // mpmath at 30 digits
        assert!((target_function(1.0) - 0.286889143203008923769).abs() < 1e-14);
        assert!((target_function(0.5) - 0.542612935791250539027).abs() < 1e-14);
    }

    #[test]
    fn nested_prefixes() {
        let s = nested_uniform_samples(0.0, PI, &[6, 8, 400], 3).unwrap();
        assert_eq!(s[&6][..], s[&8][..6]);
        assert_eq!(s[&8][..], s[&400][..8]);
        assert!(s[&400].iter().all(|x| (0.0..=PI).contains(x)));
        assert!(nested_uniform_samples(0.0, 1.0, &[8, 6], 3).is_err());
    }

    #[test]
    fn scaling_fit_examples() {
        let pts: Vec<(f64, f64)> = [6.0, 8.0, 10.0, 20.0]
            .iter()
            .map(|n| (1.0 / n, 2.0 / n + 0.1))
            .collect();
        let f = scaling_fit(&pts, Regressor::InverseN).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 0.1).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let c = scaling_fit(&[(1.0, 3.0), (2.0, 3.0), (3.0, 3.0)], Regressor::T).unwrap();
        assert_eq!(c.slope, 0.0);
        assert!(scaling_fit(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)], Regressor::T).is_err());
    }

    #[test]
    fn spearman_and_median() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn config_parsing() {
        let text = "# sweep\nexperiment = fit-function\nN_grid = 6, 8\nT_grid=60\nseeds=1,2\nmaster_seed=9\nlr=0.01 # faster\n";
        let c = ExperimentConfig::parse(text, Verb::FitFunction).unwrap();
        assert_eq!(c.n_grid, vec![6, 8]);
        assert_eq!(c.t_grid, vec![60]);
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.get("lr", 0.0).unwrap(), 0.01);
        assert!(ExperimentConfig::parse("bogus=1", Verb::FitFunction).is_err());
        assert!(ExperimentConfig::parse("experiment=denoise", Verb::FitFunction).is_err());
        assert!(ExperimentConfig::parse("N_grid=", Verb::FitFunction).is_err());
        let again = ExperimentConfig::parse(&c.to_text(), Verb::FitFunction).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, &[1, 2]), derive_seed(0, &[2, 1]));
        assert_ne!(derive_seed(0, &[1]), derive_seed(1, &[1]));
        assert_eq!(par_map(&[1, 2, 3], |x| x * 2), vec![2, 4, 6]);
    }
}
