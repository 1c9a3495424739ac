//! Metric entropy: closed-form covering and Grassmannian packing bounds,
//! greedy nets over finite point clouds, and the packing/covering sandwich.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::circuits::build_v4_encoder;
use crate::error::{Error, Result};
use crate::models::{QmlModel, TwoLocalModel};
use crate::statevec::{CMatrix, C64};

/// `16 T log2(7 T |O| / eps)` for `eps` in `[0, 0.1)`.
pub fn covering_entropy_bound(t: usize, opnorm: f64, eps: f64) -> Result<f64> {
    if !(0.0..0.1).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps = {eps} outside [0, 0.1)")));
    }
    let t = t as f64;
    Ok(16.0 * t * (7.0 * t * opnorm / eps).log2())
}

/// Lower and upper bounds on the size of a maximal `eps`-packing of the
/// rank-one projectors on `C^m`:
/// `(9 / (5 eps))^{2(m-1)} / (19 m^2)` and `38 m^2 (3 / (2 eps))^{2(m-1)}`.
pub fn grassmann_packing_bounds(m: usize, eps: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::OutOfRange(format!("m = {m} must be at least 2")));
    }
    if !(eps > 0.0 && eps <= 0.9) {
        return Err(Error::OutOfRange(format!("eps = {eps} outside (0, 0.9]")));
    }
    let (m2, k) = ((m * m) as f64, 2.0 * (m as f64 - 1.0));
    Ok((
        (9.0 / (5.0 * eps)).powf(k) / (19.0 * m2),
        38.0 * m2 * (1.5 / eps).powf(k),
    ))
}

/// A finite point set with a distance function.
#[derive(Clone)]
pub struct MetricCloud<P> {
    pub points: Vec<P>,
    pub metric: fn(&P, &P) -> f64,
}

impl<P> MetricCloud<P> {
    pub fn new(points: Vec<P>, metric: fn(&P, &P) -> f64) -> Self {
        Self { points, metric }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        (self.metric)(&self.points[i], &self.points[j])
    }
}

pub fn euclidean(a: &Vec<f64>, b: &Vec<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Discrete `L^2` distance with uniform weights on a fixed quadrature grid.
pub fn discrete_l2(a: &Vec<f64>, b: &Vec<f64>) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// A unit vector and its projector `|v><v|`.
#[derive(Clone, Debug)]
pub struct RankOneProjector {
    pub vector: Vec<C64>,
    pub matrix: CMatrix,
}

impl RankOneProjector {
    pub fn new(v: &[C64]) -> Result<Self> {
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Domain("zero vector has no projector".into()));
        }
        let vector: Vec<C64> = v.iter().map(|c| c / norm).collect();
        let m = vector.len();
        let matrix = CMatrix::from_fn(m, m, |i, j| vector[i] * vector[j].conj());
        Ok(Self { vector, matrix })
    }
}

/// Operator norm of `P - Q`, from the spectrum of the Hermitian difference.
pub fn projector_distance(p: &RankOneProjector, q: &RankOneProjector) -> f64 {
    let d = &p.matrix - &q.matrix;
    d.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Projectors onto normalized complex Gaussian vectors in `C^m`.
pub fn sample_grassmann_cloud(
    m: usize,
    count: usize,
    seed: u64,
) -> Result<MetricCloud<RankOneProjector>> {
    if m != 2 && m != 4 {
        return Err(Error::Unsupported(format!(
            "Grassmann clouds are built for m in {{2, 4}}, got {m}"
        )));
    }
    if count > 100_000 {
        return Err(Error::OutOfRange(format!(
            "cloud size {count} above 100000"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let v: Vec<C64> = (0..m)
            .map(|_| {
                C64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        if let Ok(p) = RankOneProjector::new(&v) {
            pts.push(p);
        }
    }
    Ok(MetricCloud::new(pts, projector_distance))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    Packing,
    Covering,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub indices: Vec<usize>,
    pub epsilon: f64,
    pub kind: NetKind,
}

impl Net {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// First-fit maximal packing in the cloud's order: a point joins when it
/// is farther than `eps` from every net point. Every rejected point is
/// within `eps` of the net, so the result also covers the cloud.
pub fn greedy_packing<P>(cloud: &MetricCloud<P>, eps: f64) -> Net {
    let mut net: Vec<usize> = Vec::new();
    for i in 0..cloud.len() {
        if net.iter().all(|&j| cloud.dist(i, j) > eps) {
            net.push(i);
        }
    }
    Net {
        indices: net,
        epsilon: eps,
        kind: NetKind::Packing,
    }
}

/// Greedy set cover with centres from the cloud: repeatedly take the point
/// whose closed `eps`-ball holds the most uncovered points (lowest index on
/// ties). Set cover is only a log-factor approximation, so when the
/// first-fit maximal packing (itself an `eps`-cover) is smaller, that is
/// returned instead.
pub fn greedy_covering<P>(cloud: &MetricCloud<P>, eps: f64) -> Net {
    let n = cloud.len();
    let mut balls: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        balls[i].push(i as u32);
        for j in i + 1..n {
            if cloud.dist(i, j) <= eps {
                balls[i].push(j as u32);
                balls[j].push(i as u32);
            }
        }
    }
    let mut gain: Vec<usize> = balls.iter().map(Vec::len).collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut net = Vec::new();
    while remaining > 0 {
        let best = (0..n)
            .max_by(|&a, &b| gain[a].cmp(&gain[b]).then(b.cmp(&a)))
            .expect("nonempty");
        net.push(best);
        for &k in &balls[best] {
            let k = k as usize;
            if !covered[k] {
                covered[k] = true;
                remaining -= 1;
                for &c in &balls[k] {
                    gain[c as usize] -= 1;
                }
            }
        }
    }
    let mut in_packing = vec![false; n];
    let mut packing = Vec::new();
    for i in 0..n {
        if !balls[i].iter().any(|&j| in_packing[j as usize]) {
            in_packing[i] = true;
            packing.push(i);
        }
    }
    if packing.len() < net.len() {
        net = packing;
    }
    Net {
        indices: net,
        epsilon: eps,
        kind: NetKind::Covering,
    }
}

/// Smallest pairwise distance among net points (infinite below two points).
pub fn min_pairwise_distance<P>(cloud: &MetricCloud<P>, net: &Net) -> f64 {
    let mut m = f64::INFINITY;
    for (a, &i) in net.indices.iter().enumerate() {
        for &j in &net.indices[a + 1..] {
            m = m.min(cloud.dist(i, j));
        }
    }
    m
}

/// Largest distance from a cloud point to its nearest net point.
pub fn covering_radius<P>(cloud: &MetricCloud<P>, net: &Net) -> f64 {
    (0..cloud.len())
        .map(|i| {
            net.indices
                .iter()
                .map(|&j| cloud.dist(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sandwich {
    pub packing_2eps: usize,
    pub covering_eps: usize,
    pub packing_eps: usize,
    pub holds: bool,
}

/// `|M(2 eps)| <= |N(eps)| <= |M(eps)|` with greedy nets on one cloud.
pub fn sandwich_check<P>(cloud: &MetricCloud<P>, eps: f64) -> Sandwich {
    let packing_2eps = greedy_packing(cloud, 2.0 * eps).len();
    let covering_eps = greedy_covering(cloud, eps).len();
    let packing_eps = greedy_packing(cloud, eps).len();
    Sandwich {
        packing_2eps,
        covering_eps,
        packing_eps,
        holds: packing_2eps <= covering_eps && covering_eps <= packing_eps,
    }
}

/// Points on which the 2-local function cloud is evaluated: `grid_size`
/// pairs of Haar-random unit 4-vectors.
pub fn two_local_quadrature(n_pairs: usize, grid_size: usize, seed: u64) -> Vec<Vec<[C64; 4]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || {
        let v: [C64; 4] = std::array::from_fn(|_| {
            C64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        });
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.map(|c| c / n)
    };
    (0..grid_size)
        .map(|_| (0..n_pairs).map(|_| unit()).collect())
        .collect()
}

/// Functions `f_theta` of a 2-local model for `count` parameter draws
/// uniform on `[-pi, pi]^T`, each tabulated on the quadrature grid; the
/// metric is the uniform discrete `L^2` distance.
pub fn two_local_function_cloud(
    model: &TwoLocalModel,
    grid: &[Vec<[C64; 4]>],
    count: usize,
    seed: u64,
) -> Result<MetricCloud<Vec<f64>>> {
    use rand::Rng;
    for x in grid {
        for v in x {
            build_v4_encoder(v)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = model.n_params();
    let mut pts = Vec::with_capacity(count);
    for _ in 0..count {
        let theta: Vec<f64> = (0..t)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let f = grid
            .iter()
            .map(|x| model.eval(&theta, x))
            .collect::<Result<Vec<f64>>>()?;
        pts.push(f);
    }
    Ok(MetricCloud::new(pts, discrete_l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> MetricCloud<Vec<f64>> {
        MetricCloud::new(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            euclidean,
        )
    }

    #[test]
    fn bound_examples() {
        assert!((covering_entropy_bound(1, 1.0, 0.07).unwrap() - 106.30).abs() < 0.005);
        // 960 log2(42000), evaluated independently
        assert!((covering_entropy_bound(60, 1.0, 0.01).unwrap() - 14743.777639143213).abs() < 1e-8);
        assert!(covering_entropy_bound(1, 1.0, 0.1).is_err());
        let (lo, hi) = grassmann_packing_bounds(2, 0.5).unwrap();
        assert!((lo - 0.170526).abs() < 1e-6);
        assert!((hi - 1368.0).abs() < 1e-9);
        let (lo, hi) = grassmann_packing_bounds(4, 0.1).unwrap();
        assert!((lo / 111_882.0 - 1.0).abs() < 1e-5, "{lo}");
        assert!((hi / 6.9255e9 - 1.0).abs() < 1e-4, "{hi}");
    }

    #[test]
    fn square_packings() {
        let c = square();
        assert_eq!(greedy_packing(&c, 0.9).len(), 4);
        assert_eq!(greedy_packing(&c, 1.1).indices, vec![0, 3]);
        assert_eq!(greedy_packing(&c, 2.0).len(), 1);
    }

    #[test]
    fn projector_distance_examples() {
        let e0 = RankOneProjector::new(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let e1 = RankOneProjector::new(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert!(projector_distance(&e0, &e0).abs() < 1e-14);
        assert!((projector_distance(&e0, &e1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_point_sandwich() {
        let c = MetricCloud::new(vec![vec![0.5]], euclidean);
        let s = sandwich_check(&c, 0.1);
        assert_eq!(
            (s.packing_2eps, s.covering_eps, s.packing_eps, s.holds),
            (1, 1, 1, true)
        );
    }
}
