//! Distances, complexity estimators and bound calculators.

mod transport;

pub use transport::{
    w1_discrete_exact, w1_line_bracket, w1_sparse_verified, LineBracket, TransportPlan, DENSE_PAIR_LIMIT,
};

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::genmap::{DiscreteDistribution, SampleSet};
use crate::netcore::ReluNet;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("instance has {pairs} pairs, above the solver limit {limit}")]
    TooLarge { pairs: usize, limit: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, MetricsError> {
    Err(MetricsError::Invalid(msg.into()))
}

/// Exact `W1` on the line as the integral of the absolute CDF difference.
pub fn w1_1d_exact(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<f64, MetricsError> {
    for d in [a, b] {
        if d.dim() != 1 {
            return Err(MetricsError::Dimension { expected: 1, found: d.dim() });
        }
    }
    // signed mass events sorted by position; ties between a and b cancel
    let mut events: Vec<(f64, f64)> = a.atoms().iter().copied().zip(a.weights().iter().copied()).collect();
    events.extend(b.atoms().iter().copied().zip(b.weights().iter().map(|w| -w)));
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut total, mut diff) = (0.0, 0.0);
    for w in events.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    Ok(total)
}

/// Largest observed `‖f(x) - f(y)‖ / ‖x - y‖` over random pairs in the box
/// and coordinate perturbations of relative size `1e-6`. A lower bound on the
/// Lipschitz constant.
pub fn lipschitz_lower_sampled(
    net: &ReluNet,
    lo: &[f64],
    hi: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    let d = net.input_dim();
    if lo.len() != d || hi.len() != d {
        return Err(MetricsError::Dimension { expected: d, found: lo.len().max(hi.len()) });
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l < h)) || pairs == 0 {
        return invalid("box must satisfy lo < hi with at least one pair");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut xs, mut ys) = (Vec::with_capacity(pairs * d), Vec::with_capacity(pairs * d));
    for p in 0..pairs {
        let x: Vec<f64> = (0..d).map(|k| rng.gen_range(lo[k]..hi[k])).collect();
        let y: Vec<f64> = if p % 2 == 0 {
            (0..d).map(|k| rng.gen_range(lo[k]..hi[k])).collect()
        } else {
            let k = rng.gen_range(0..d);
            let mut y = x.clone();
            y[k] += 1e-6 * (hi[k] - lo[k]);
            y
        };
        xs.extend(x);
        ys.extend(y);
    }
    let (fx, fy) = (net.eval_many(&xs), net.eval_many(&ys));
    let m = net.output_dim();
    let mut best: f64 = 0.0;
    for p in 0..pairs {
        let dx = crate::genmap::dist(&xs[p * d..(p + 1) * d], &ys[p * d..(p + 1) * d]);
        if dx > 0.0 {
            best = best.max(crate::genmap::dist(&fx[p * m..(p + 1) * m], &fy[p * m..(p + 1) * m]) / dx);
        }
    }
    Ok(best)
}

/// Mean of a scalar network over a sample set.
pub fn sample_mean(net: &ReluNet, samples: &SampleSet) -> Result<f64, MetricsError> {
    if net.input_dim() != samples.dim || net.output_dim() != 1 {
        return Err(MetricsError::Dimension { expected: samples.dim, found: net.input_dim() });
    }
    let v = net.eval_many(&samples.points);
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// `max_f (mean_μ f - mean_γ f)` over a finite family of scalar networks.
pub fn ipm_finite_family(mu: &SampleSet, gamma: &SampleSet, family: &[ReluNet]) -> Result<f64, MetricsError> {
    if family.is_empty() {
        return invalid("empty family");
    }
    let mut best = f64::NEG_INFINITY;
    for f in family {
        best = best.max(sample_mean(f, mu)? - sample_mean(f, gamma)?);
    }
    Ok(best)
}

/// Box-counting estimate with its per-scale occupied-box counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCounting {
    pub dimension: f64,
    pub counts: Vec<usize>,
    pub warning: Option<String>,
}

/// Counts occupied boxes of side `ε` anchored at the bounding-box corner and
/// regresses `log N(ε)` on `-log ε` over the middle scales.
pub fn box_counting_dim(samples: &SampleSet, eps_grid: &[f64]) -> Result<BoxCounting, MetricsError> {
    if eps_grid.len() < 2 || samples.is_empty() {
        return invalid("need at least two scales and one sample");
    }
    if !eps_grid.windows(2).all(|w| w[0] > w[1]) || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return invalid("scales must be positive and decreasing");
    }
    let d = samples.dim;
    let corner: Vec<f64> =
        (0..d).map(|k| (0..samples.len()).map(|i| samples.point(i)[k]).fold(f64::INFINITY, f64::min)).collect();
    let counts: Vec<usize> = eps_grid
        .iter()
        .map(|&eps| {
            let mut boxes = HashSet::new();
            for i in 0..samples.len() {
                let key: Vec<i64> =
                    samples.point(i).iter().zip(&corner).map(|(v, c)| ((v - c) / eps).floor() as i64).collect();
                boxes.insert(key);
            }
            boxes.len()
        })
        .collect();
    let m = eps_grid.len();
    let window = if m >= 4 { 1..m - 1 } else { 0..m };
    let xs: Vec<f64> = eps_grid[window.clone()].iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = counts[window].iter().map(|&c| (c as f64).ln()).collect();
    let (dimension, _, _) = linear_fit(&xs, &ys);
    let warning = counts
        .iter()
        .all(|&c| c == 1)
        .then(|| "every scale sees a single box; the points coincide or the scales are too coarse".to_string());
    Ok(BoxCounting { dimension: if warning.is_some() { 0.0 } else { dimension }, counts, warning })
}

/// Number of log-spaced trial values for the infimum in [`entropy_integral_bound`].
pub const ENTROPY_GRID: usize = 10_000;

/// `8·inf_{0<δ<B/2} (δ + (3/√n) ∫_δ^{B/2} √(C ε^{-2η}) dε)`, with the infimum
/// over a log grid of `δ ∈ [B/2 · 10^{-14}, B/2)`.
pub fn entropy_integral_bound(b: f64, n: usize, eta: f64, c: f64) -> f64 {
    assert!(b > 0.0 && c > 0.0 && n >= 1, "B, C > 0 and n ≥ 1");
    let half = b / 2.0;
    let sc = c.sqrt();
    let integral = |delta: f64| -> f64 {
        if (eta - 1.0).abs() < 1e-12 {
            sc * (half / delta).ln()
        } else {
            sc * (half.powf(1.0 - eta) - delta.powf(1.0 - eta)) / (1.0 - eta)
        }
    };
    let scale = 3.0 / (n as f64).sqrt();
    let (lo, hi) = ((half * 1e-14).ln(), half.ln());
    (0..ENTROPY_GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / ENTROPY_GRID as f64).exp())
        .map(|delta| 8.0 * (delta + scale * integral(delta)))
        .fold(f64::INFINITY, f64::min)
}

/// `U·L·ln U` with `U = W²L`; an order-of-magnitude proxy with unit constant.
pub fn pdim_bound(width: usize, depth: usize) -> f64 {
    let u = (width * width * depth) as f64;
    u * depth as f64 * u.ln()
}

/// Least-squares line in log-log coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Fits `log error = intercept + slope · log n`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit, MetricsError> {
    if points.len() < 3 {
        return invalid(format!("need at least 3 points, got {}", points.len()));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0)) {
        return invalid("sizes and errors must be positive");
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(RateFit { slope, intercept, r_squared, points: points.to_vec() })
}

/// Coefficients of `log error = a + b·log n + c·log log n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRateFit {
    pub intercept: f64,
    pub slope: f64,
    pub log_coefficient: f64,
}

pub fn rate_fit_with_log(points: &[(f64, f64)]) -> Result<LogRateFit, MetricsError> {
    if points.len() < 4 {
        return invalid(format!("need at least 4 points, got {}", points.len()));
    }
    if points.iter().any(|&(n, e)| !(n > 1.0) || !(e > 0.0)) {
        return invalid("sizes must exceed 1 and errors must be positive");
    }
    // normal equations for three regressors
    let rows: Vec<[f64; 3]> = points.iter().map(|&(n, _)| [1.0, n.ln(), n.ln().ln()]).collect();
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (r, &(_, e)) in rows.iter().zip(points) {
        for i in 0..3 {
            aty[i] += r[i] * e.ln();
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let x = solve3(ata, aty).ok_or_else(|| MetricsError::Invalid("singular design; use distinct sizes".into()))?;
    Ok(LogRateFit { intercept: x[0], slope: x[1], log_coefficient: x[2] })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for k in col..3 {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        x[r] = (b[r] - (r + 1..3).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
    }
    Some(x)
}
