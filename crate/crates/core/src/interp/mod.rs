//! Piecewise-linear interpolation by ReLU networks.

mod discretize;
mod ladder;

pub use discretize::{discretizer, grid_size};

use crate::error::{require, BuildError};
use crate::netcore::{NetMeta, ReluNet};

/// Knots `x_0 < x_1 < ... < x_{n-1}` with vector values of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Knots {
    pub x: Vec<f64>,
    /// Row-major `n × dim` values.
    pub y: Vec<f64>,
    pub dim: usize,
}

impl Knots {
    pub fn scalar(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, dim: 1 }
    }

    pub fn path(x: Vec<f64>, points: &[Vec<f64>]) -> Self {
        let dim = points.first().map(|p| p.len()).unwrap_or(1);
        Self { x, y: points.iter().flatten().copied().collect(), dim }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn validate(&self) -> Result<(), BuildError> {
        require(!self.x.is_empty(), || "at least one knot is required".into())?;
        require(self.dim >= 1, || "value dimension must be positive".into())?;
        require(self.y.len() == self.x.len() * self.dim, || {
            format!("{} values for {} knots of dimension {}", self.y.len(), self.x.len(), self.dim)
        })?;
        require(self.x.iter().chain(&self.y).all(|v| v.is_finite()), || "knots must be finite".into())?;
        require(self.x.windows(2).all(|w| w[0] < w[1]), || "knot positions must be strictly increasing".into())
    }

    /// Largest segment slope, measured in the Euclidean norm of the values.
    pub fn max_slope(&self) -> f64 {
        (1..self.len())
            .map(|i| {
                let dy: f64 = (0..self.dim).map(|r| (self.value(i)[r] - self.value(i - 1)[r]).powi(2)).sum();
                dy.sqrt() / (self.x[i] - self.x[i - 1])
            })
            .fold(0.0, f64::max)
    }
}

/// Reference evaluation: linear between knots, constant outside.
pub fn eval_pwl(knots: &Knots, t: f64) -> Vec<f64> {
    let n = knots.len();
    if t <= knots.x[0] {
        return knots.value(0).to_vec();
    }
    if t >= knots.x[n - 1] {
        return knots.value(n - 1).to_vec();
    }
    let i = knots.x.partition_point(|&v| v <= t) - 1;
    let lam = (t - knots.x[i]) / (knots.x[i + 1] - knots.x[i]);
    let (a, b) = (knots.value(i), knots.value(i + 1));
    a.iter().zip(b).map(|(u, v)| u + lam * (v - u)).collect()
}

/// Largest number of interior knots the 1-D interpolator accepts for a budget.
pub fn interpolator_capacity(width: usize, depth_units: usize) -> usize {
    (width / 6) * width * depth_units
}

/// Largest number of interior knots a path network accepts for a budget.
pub fn path_capacity(width: usize, depth: usize, dim: usize) -> usize {
    if width < dim + 1 {
        return 0;
    }
    let w = width - dim - 1;
    w * (w / (6 * dim)) * (depth / 2)
}

/// Scalar interpolator with width at most `width + 2` and depth at most
/// `2 * depth_units`, accepting up to `⌊width/6⌋·width·depth_units` interior knots.
pub fn linear_interpolator(knots: &Knots, width: usize, depth_units: usize) -> Result<ReluNet, BuildError> {
    knots.validate()?;
    require(knots.dim == 1, || "linear_interpolator takes scalar values".into())?;
    require(width >= 6 && depth_units >= 1, || format!("need width ≥ 6 and depth ≥ 1, got ({width}, {depth_units})"))?;
    let interior = knots.len().saturating_sub(2);
    let cap = interpolator_capacity(width, depth_units);
    if interior > cap {
        return Err(BuildError::Capacity { needed: interior, available: cap });
    }
    let net = ladder::build(knots, width + 2, depth_units)?;
    Ok(net.with_meta(NetMeta::new("linear_interpolator", width + 2, 2 * depth_units, Some(knots.max_slope()))))
}

/// Continuous piecewise-linear path `R -> R^d` through the knots, with width
/// at most `width` and depth at most `depth`.
pub fn pwl_path_net(knots: &Knots, width: usize, depth: usize) -> Result<ReluNet, BuildError> {
    knots.validate()?;
    let d = knots.dim;
    require(width > 7 * d, || format!("width {width} below 7d+1 = {}", 7 * d + 1))?;
    require(depth >= 2, || format!("depth {depth} below 2"))?;
    let interior = knots.len().saturating_sub(2);
    let cap = path_capacity(width, depth, d);
    if interior > cap {
        return Err(BuildError::Capacity { needed: interior, available: cap });
    }
    let net = ladder::build(knots, width, depth / 2)?;
    Ok(net.with_meta(NetMeta::new("pwl_path_net", width, depth, Some(knots.max_slope()))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_knots(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Knots {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x.dedup();
        let y = (0..x.len() * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Knots { x, y, dim }
    }

    fn check_against_reference(net: &ReluNet, knots: &Knots, tol: f64) {
        let (lo, hi) = (knots.x[0], knots.x[knots.len() - 1]);
        let mut probes: Vec<f64> = knots.x.clone();
        for k in 0..=400 {
            probes.push(lo - 1.0 + (hi - lo + 2.0) * k as f64 / 400.0);
        }
        for t in probes {
            let want = eval_pwl(knots, t);
            let got = net.eval(&[t]);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= tol, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reference_is_constant_outside() {
        let k = Knots::scalar(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, -1.0]);
        assert_eq!(eval_pwl(&k, -5.0), vec![1.0]);
        assert_eq!(eval_pwl(&k, 9.0), vec![-1.0]);
        assert_eq!(eval_pwl(&k, 0.5), vec![2.0]);
        assert_eq!(eval_pwl(&k, 1.5), vec![1.0]);
    }

    #[test]
    fn interpolator_matches_reference_at_full_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (w, l) in [(6, 1), (6, 3), (7, 2), (12, 2), (13, 1)] {
            let n = interpolator_capacity(w, l) + 2;
            let knots = random_knots(&mut rng, n, 1);
            let net = linear_interpolator(&knots, w, l).unwrap();
            assert!(net.width() <= w + 2 && net.depth() <= 2 * l, "{w},{l}: {}x{}", net.width(), net.depth());
            check_against_reference(&net, &knots, 1e-9);
        }
    }

    #[test]
    fn interpolator_rejects_over_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let knots = random_knots(&mut rng, interpolator_capacity(6, 1) + 3, 1);
        assert!(matches!(linear_interpolator(&knots, 6, 1), Err(BuildError::Capacity { .. })));
    }

    #[test]
    fn small_cases() {
        let two = Knots::scalar(vec![0.0, 1.0], vec![2.0, -1.0]);
        let net = linear_interpolator(&two, 6, 1).unwrap();
        check_against_reference(&net, &two, 1e-12);
        let flat = Knots::scalar(vec![0.0, 1.0, 2.0], vec![4.0, 4.0, 4.0]);
        let net = linear_interpolator(&flat, 6, 1).unwrap();
        assert_eq!(net.depth(), 0);
        assert_eq!(net.eval(&[0.3]), vec![4.0]);
        let one = Knots::scalar(vec![0.5], vec![-1.5]);
        assert_eq!(linear_interpolator(&one, 6, 1).unwrap().eval(&[9.0]), vec![-1.5]);
    }

    #[test]
    fn collinear_knots_need_no_neurons() {
        let k = Knots::scalar((0..8).map(|i| i as f64).collect(), (0..8).map(|i| 2.0 * i as f64).collect());
        let net = linear_interpolator(&k, 6, 1).unwrap();
        assert_eq!(net.depth(), 1);
        check_against_reference(&net, &k, 1e-9);
    }

    #[test]
    fn path_net_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, w, l) in [(1, 8, 2), (2, 15, 2), (2, 22, 5), (3, 29, 4), (3, 22, 2)] {
            let n = path_capacity(w, l, d) + 2;
            let knots = random_knots(&mut rng, n, d);
            let net = pwl_path_net(&knots, w, l).unwrap();
            assert!(net.width() <= w && net.depth() <= l, "{d},{w},{l}: {}x{}", net.width(), net.depth());
            check_against_reference(&net, &knots, 1e-9);
        }
    }

    #[test]
    fn path_net_guards() {
        let k = Knots::path(vec![0.0, 1.0], &[vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(pwl_path_net(&k, 14, 2).is_err());
        assert!(pwl_path_net(&k, 15, 1).is_err());
        assert!(pwl_path_net(&k, 15, 2).is_ok());
    }
}
