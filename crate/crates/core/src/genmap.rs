//! Generators that push a one-dimensional source onto discrete targets.
//!
//! A memorization generator is a piecewise-linear path through the target
//! atoms. Source mass between consecutive quantile breakpoints lands on a
//! single atom, and the short transition intervals in between are the only
//! place where the push-forward differs from the target.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::error::{require, BuildError};
use crate::interp::{pwl_path_net, Knots};
use crate::netcore::{NetMeta, ReluNet};

/// Smallest transition mass per breakpoint pair; below it quantile gaps are
/// at the level of double-precision rounding.
pub const MIN_TRANSITION_MASS: f64 = 1e-13;
/// Gaussian quantiles are clamped to `[-GAUSSIAN_CLAMP, GAUSSIAN_CLAMP]`.
pub const GAUSSIAN_CLAMP: f64 = 8.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Weighted atoms in `R^dim`; atoms are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self, DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if dim == 0 || weights.is_empty() || atoms.len() != weights.len() * dim {
            return bad(format!("{} coordinates for {} atoms of dimension {dim}", atoms.len(), weights.len()));
        }
        if !atoms.iter().all(|v| v.is_finite()) {
            return bad("atoms must be finite".into());
        }
        if !weights.iter().all(|&w| w > 0.0 && w.is_finite()) {
            return bad("weights must be positive".into());
        }
        let total: f64 = weights.iter().sum();
        // summation error grows with the number of terms
        if (total - 1.0).abs() > 1e-12 * (weights.len() as f64).max(1.0) {
            return bad(format!("weights sum to {total}"));
        }
        Ok(Self { atoms, weights, dim })
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self, DataError> {
        let n = if dim == 0 { 0 } else { points.len() / dim };
        Self::new(points, vec![1.0 / n as f64; n], dim)
    }

    /// Empirical measure of a sample set.
    pub fn empirical(samples: &SampleSet) -> Result<Self, DataError> {
        Self::uniform(samples.points.clone(), samples.dim)
    }

    /// Merges atoms with bitwise-equal coordinates, keeping first-seen order.
    pub fn from_weighted_points(points: &[f64], weights: &[f64], dim: usize) -> Result<Self, DataError> {
        let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
        let (mut atoms, mut w) = (Vec::new(), Vec::<f64>::new());
        for (i, &wi) in weights.iter().enumerate() {
            let p = &points[i * dim..(i + 1) * dim];
            let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&j) => w[j] += wi,
                None => {
                    index.insert(key, w.len());
                    atoms.extend_from_slice(p);
                    w.push(wi);
                }
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Self::new(atoms, w, dim)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest pairwise Euclidean distance between atoms.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist(self.atom(i), self.atom(j)));
            }
        }
        best
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One-dimensional source distribution of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Uniform01,
    Gaussian,
}

impl Source {
    fn normal() -> Normal {
        Normal::new(0.0, 1.0).expect("standard normal")
    }

    /// Quantile function; Gaussian quantiles are clamped to `±8`.
    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Source::Uniform01 => p.clamp(0.0, 1.0),
            Source::Gaussian => {
                let lo = Self::normal().cdf(-GAUSSIAN_CLAMP);
                if p <= lo {
                    -GAUSSIAN_CLAMP
                } else if p >= 1.0 - lo {
                    GAUSSIAN_CLAMP
                } else {
                    Self::normal().inverse_cdf(p).clamp(-GAUSSIAN_CLAMP, GAUSSIAN_CLAMP)
                }
            }
        }
    }

    pub fn cdf(self, z: f64) -> f64 {
        match self {
            Source::Uniform01 => z.clamp(0.0, 1.0),
            Source::Gaussian => Self::normal().cdf(z),
        }
    }

    pub fn sample(self, rng: &mut impl Rng) -> f64 {
        match self {
            Source::Uniform01 => rng.gen::<f64>(),
            Source::Gaussian => {
                // Box-Muller
                let u1 = 1.0 - rng.gen::<f64>();
                let u2 = rng.gen::<f64>();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
        }
    }

    pub fn samples(self, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| self.sample(&mut rng)).collect()
    }
}

/// Points in `R^dim` with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    seed: u64,
    dim: usize,
    n: usize,
}

impl SampleSet {
    pub fn new(points: Vec<f64>, dim: usize, seed: u64) -> Result<Self, DataError> {
        if dim == 0 || !points.len().is_multiple_of(dim) || !points.iter().all(|v| v.is_finite()) {
            return Err(DataError::Invalid(format!("{} finite coordinates expected in rows of {dim}", points.len())));
        }
        Ok(Self { points, dim, seed })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Uniform draws from `[0,1]^dim`.
    pub fn uniform_cube(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { points: (0..n * dim).map(|_| rng.gen::<f64>()).collect(), dim, seed }
    }

    /// Path of the sidecar file holding the seed for a CSV at `path`.
    pub fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Writes headerless CSV plus a JSON sidecar with the seed.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for i in 0..self.len() {
            w.write_record(self.point(i).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        let meta = SampleMeta { seed: self.seed, dim: self.dim, n: self.len() };
        fs::write(Self::sidecar(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reads a CSV written by [`SampleSet::write_csv`]; the seed is 0 when no sidecar exists.
    pub fn read_csv(path: &Path) -> Result<Self, DataError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let (mut points, mut dim) = (Vec::new(), 0);
        for rec in r.records() {
            let rec = rec?;
            if dim == 0 {
                dim = rec.len();
            } else if rec.len() != dim {
                return Err(DataError::Invalid(format!("row with {} columns, expected {dim}", rec.len())));
            }
            for f in rec.iter() {
                points.push(f.trim().parse::<f64>().map_err(|e| DataError::Invalid(format!("{f:?}: {e}")))?);
            }
        }
        let seed = match fs::read_to_string(Self::sidecar(path)) {
            Ok(s) => serde_json::from_str::<SampleMeta>(&s)?.seed,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e.into()),
        };
        Self::new(points, dim.max(1), seed)
    }
}

/// Number of atoms a width-`W`, depth-`L` generator can memorize in `R^d`.
pub fn capacity(width: usize, depth: usize, dim: usize) -> Result<usize, BuildError> {
    require(dim >= 1 && width > 7 * dim, || format!("width {width} below 7d+1 = {}", 7 * dim + 1))?;
    require(depth >= 2, || format!("depth {depth} below 2"))?;
    let w = width - dim - 1;
    // ⌊(w/2)·k·m + 2⌋ = ⌊w·k·m/2⌋ + 2
    Ok(w * (w / (6 * dim)) * (depth / 2) / 2 + 2)
}

/// A memorization generator with its certificate.
#[derive(Debug, Clone)]
pub struct Memorizer {
    pub net: ReluNet,
    /// Upper bound on `W1(γ, g_#ν)`.
    pub certificate: f64,
    /// Target atoms in path order (indices into the input distribution).
    pub order: Vec<usize>,
    /// Source mass mapped exactly onto each atom, in path order.
    pub plateau_mass: Vec<f64>,
    /// Source breakpoints, two per transition.
    pub breakpoints: Vec<f64>,
}

/// Builds a generator `g` with `W1(γ, g_#ν) ≤ certificate < eps`.
pub fn memorize_discrete(
    gamma: &DiscreteDistribution,
    source: Source,
    eps: f64,
    width: usize,
    depth: usize,
) -> Result<Memorizer, BuildError> {
    require(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    let d = gamma.dim();
    let n = gamma.len();
    let cap = capacity(width, depth, d)?;
    if n > cap {
        return Err(BuildError::Capacity { needed: n, available: cap });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gamma.atom(a).partial_cmp(gamma.atom(b)).expect("finite atoms"));
    let meta = |lip: f64| NetMeta::new("memorize_discrete", width, depth, Some(lip));
    if n == 1 {
        let net = ReluNet::constant(1, gamma.atom(0)).with_meta(meta(0.0));
        return Ok(Memorizer { net, certificate: 0.0, order, plateau_mass: vec![1.0], breakpoints: vec![] });
    }
    let p: Vec<f64> = order.iter().map(|&i| gamma.weights()[i]).collect();
    let diam = gamma.diameter();
    let min_p = p.iter().copied().fold(f64::INFINITY, f64::min);
    let total = if diam > 0.0 { (eps / (2.0 * diam)).min(0.1 * min_p) } else { 0.1 * min_p };
    let tau = total / (n - 1) as f64;
    if tau < MIN_TRANSITION_MASS {
        let minimum = 2.0 * diam * (n - 1) as f64 * MIN_TRANSITION_MASS;
        return Err(BuildError::Resolution { requested: eps, minimum });
    }
    // breakpoints around each cumulative mass c_{i+1}
    let mut cum = 0.0;
    let mut breakpoints = Vec::with_capacity(2 * n - 2);
    for &pi in &p[..n - 1] {
        cum += pi;
        breakpoints.push(source.quantile(cum - tau / 2.0));
        breakpoints.push(source.quantile(cum + tau / 2.0));
    }
    if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
        let minimum = 2.0 * diam * (n - 1) as f64 * MIN_TRANSITION_MASS.max(tau * 10.0);
        return Err(BuildError::Resolution { requested: eps, minimum });
    }
    let mut values = Vec::with_capacity(2 * n - 2);
    for i in 0..n - 1 {
        values.push(gamma.atom(order[i]).to_vec());
        values.push(gamma.atom(order[i + 1]).to_vec());
    }
    let knots = Knots::path(breakpoints.clone(), &values);
    let net = pwl_path_net(&knots, width, depth)?;

    // realized masses under the source: plateaus plus half of each adjacent transition
    let cdf: Vec<f64> = breakpoints.iter().map(|&z| source.cdf(z)).collect();
    let mut coupled = vec![0.0; n];
    let mut plateau_mass = vec![0.0; n];
    let mut transition_cost = 0.0;
    for i in 0..n {
        let lo = if i == 0 { 0.0 } else { cdf[2 * i - 1] };
        let hi = if i == n - 1 { 1.0 } else { cdf[2 * i] };
        plateau_mass[i] = (hi - lo).max(0.0);
        coupled[i] += plateau_mass[i];
    }
    for i in 0..n - 1 {
        let (z0, z1) = (breakpoints[2 * i], breakpoints[2 * i + 1]);
        let mid = source.cdf(0.5 * (z0 + z1));
        let (first, second) = ((mid - cdf[2 * i]).max(0.0), (cdf[2 * i + 1] - mid).max(0.0));
        coupled[i] += first;
        coupled[i + 1] += second;
        let len = dist(gamma.atom(order[i]), gamma.atom(order[i + 1]));
        transition_cost += (first + second) * len / 2.0;
    }
    let mismatch: f64 = coupled.iter().zip(&p).map(|(q, w)| (q - w).abs()).sum();
    let certificate = transition_cost + diam * mismatch / 2.0;
    let net = net.with_meta(meta(knots.max_slope()));
    Ok(Memorizer { net, certificate, order, plateau_mass, breakpoints })
}

/// Quantizes points of `[0,1]^d` onto the grid `{1/k, ..., 1}^d`.
/// Cell `j` along an axis is `[j/k, (j+1)/k)`, with the last cell closed.
pub fn grid_quantize(samples: &SampleSet, k: usize) -> Result<DiscreteDistribution, BuildError> {
    require(k >= 1, || "k must be at least 1".into())?;
    require(!samples.is_empty(), || "no samples".into())?;
    require(samples.points.iter().all(|v| (0.0..=1.0).contains(v)), || "samples must lie in [0,1]^d".into())?;
    let d = samples.dim;
    let cells = k.checked_pow(d as u32).ok_or_else(|| BuildError::Precondition("k^d overflows".into()))?;
    let mut counts = vec![0usize; cells];
    for i in 0..samples.len() {
        let mut idx = 0;
        for &v in samples.point(i).iter().rev() {
            idx = idx * k + ((v * k as f64).floor() as usize).min(k - 1);
        }
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let (mut atoms, mut weights) = (Vec::new(), Vec::new());
    for (idx, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut rest = idx;
        for _ in 0..d {
            atoms.push(((rest % k) + 1) as f64 / k as f64);
            rest /= k;
        }
        weights.push(c as f64 / n);
    }
    DiscreteDistribution::new(atoms, weights, d).map_err(|e| BuildError::Precondition(e.to_string()))
}

/// Replaces points outside the sup-norm ball of radius `half_width` with the origin.
/// Returns the truncated set and the number of replaced points.
pub fn truncate_distribution(samples: &SampleSet, half_width: f64) -> Result<(SampleSet, usize), BuildError> {
    require(half_width > 0.0, || format!("half_width must be positive, got {half_width}"))?;
    let mut out = samples.clone();
    let mut replaced = 0;
    for chunk in out.points.chunks_exact_mut(samples.dim) {
        if chunk.iter().any(|v| v.abs() > half_width) {
            chunk.fill(0.0);
            replaced += 1;
        }
    }
    Ok((out, replaced))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_values() {
        assert_eq!(capacity(15, 2, 1).unwrap(), 15);
        assert_eq!(capacity(15, 2, 2).unwrap(), 8);
        assert!(capacity(14, 2, 2).is_err());
        assert!(capacity(15, 1, 1).is_err());
        for d in 1..=3 {
            for w in 7 * d + 1..7 * d + 30 {
                for l in 2..8 {
                    assert!(capacity(w + 1, l, d).unwrap() >= capacity(w, l, d).unwrap());
                    assert!(capacity(w, l + 1, d).unwrap() >= capacity(w, l, d).unwrap());
                }
            }
        }
    }

    #[test]
    fn single_atom_is_constant() {
        let g = DiscreteDistribution::new(vec![0.3, 0.7], vec![1.0], 2).unwrap();
        let m = memorize_discrete(&g, Source::Uniform01, 1e-3, 15, 2).unwrap();
        assert_eq!(m.certificate, 0.0);
        assert_eq!(m.net.eval(&[0.9]), vec![0.3, 0.7]);
    }

    #[test]
    fn over_capacity_is_rejected() {
        let n = capacity(15, 2, 1).unwrap() + 1;
        let g = DiscreteDistribution::uniform((0..n).map(|i| i as f64 / n as f64).collect(), 1).unwrap();
        assert!(matches!(memorize_discrete(&g, Source::Uniform01, 1e-2, 15, 2), Err(BuildError::Capacity { .. })));
    }

    #[test]
    fn too_small_eps_reports_minimum() {
        let g = DiscreteDistribution::uniform(vec![0.0, 1.0], 1).unwrap();
        match memorize_discrete(&g, Source::Uniform01, 1e-15, 15, 2) {
            Err(BuildError::Resolution { minimum, .. }) => assert!(minimum > 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plateaus_carry_target_atoms() {
        let g = DiscreteDistribution::new(vec![0.9, 0.1, 0.5], vec![0.2, 0.5, 0.3], 1).unwrap();
        for source in [Source::Uniform01, Source::Gaussian] {
            let m = memorize_discrete(&g, source, 1e-3, 15, 2).unwrap();
            assert_eq!(m.order, vec![1, 2, 0]);
            assert!(m.certificate < 1e-3);
            for (i, want) in [0.1, 0.5, 0.9].into_iter().enumerate() {
                let u = [0.25, 0.6, 0.9][i];
                assert!((m.net.eval_scalar(&[source.quantile(u)]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_quantile_round_trips() {
        for p in [1e-10, 0.01, 0.3, 0.5, 0.97] {
            let z = Source::Gaussian.quantile(p);
            assert!((Source::Gaussian.cdf(z) - p).abs() < 1e-9 * p.max(1e-6) + 1e-15);
        }
        assert_eq!(Source::Gaussian.quantile(0.0), -GAUSSIAN_CLAMP);
    }

    #[test]
    fn quantize_small_cases() {
        let s = SampleSet::new(vec![0.0, 0.5, 1.0, 0.2], 2, 0).unwrap();
        let one = grid_quantize(&s, 1).unwrap();
        assert_eq!(one.atoms(), &[1.0, 1.0]);
        assert_eq!(one.weights(), &[1.0]);
        let two = grid_quantize(&s, 2).unwrap();
        // (0, 0.5) -> cell (0, 1), (1, 0.2) -> cell (1, 0)
        assert_eq!(two.len(), 2);
        assert_eq!(two.atom(0), &[1.0, 0.5]);
        assert_eq!(two.atom(1), &[0.5, 1.0]);
        assert!(grid_quantize(&s, 0).is_err());
    }

    #[test]
    fn quantize_uniform_weights_concentrate() {
        let s = SampleSet::uniform_cube(100_000, 1, 3);
        let q = grid_quantize(&s, 4).unwrap();
        assert_eq!(q.len(), 4);
        assert!(q.weights().iter().all(|w| (w - 0.25).abs() < 0.01));
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation() {
        let s = SampleSet::new(vec![0.5, -0.5, 10.0, 0.0, 0.2, 1.0], 2, 0).unwrap();
        let (t, replaced) = truncate_distribution(&s, 1.0).unwrap();
        assert_eq!(replaced, 1);
        assert_eq!(t.points, vec![0.5, -0.5, 0.0, 0.0, 0.2, 1.0]);
        let (same, zero) = truncate_distribution(&s, 20.0).unwrap();
        assert_eq!((same, zero), (s, 0));
    }

    #[test]
    fn csv_round_trip_with_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = SampleSet::uniform_cube(20, 3, 77);
        s.write_csv(&path).unwrap();
        assert_eq!(SampleSet::read_csv(&path).unwrap(), s);
    }
}
