use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::{binary_fitter, bit_extractor, value_fitter, MAX_EXTRACT_BITS};
use crate::genmap::{capacity, dist, memorize_discrete, DiscreteDistribution, SampleSet, Source};
use crate::holder::{holder_approximator, Target};
use crate::interp::{
    discretizer, eval_pwl, grid_size, interpolator_capacity, linear_interpolator, path_capacity, pwl_path_net, Knots,
};
use crate::metrics::{box_counting_dim, lipschitz_lower_sampled, w1_discrete_exact};
use crate::poly::{levels_per_layer, monomial_net, product_net, square_net};

use super::{bad, structural_reports, BoundReport, Experiment, ExperimentConfig, HarnessError, RunOutput};

/// Tolerance for constructions that are exact in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-9;

fn values_or(config: &ExperimentConfig, key: &'static str, default: &[usize]) -> Result<Vec<usize>, HarnessError> {
    Ok(match config.get::<usize>(key)? {
        Some(v) => vec![v],
        None => default.to_vec(),
    })
}

fn tagged(mut reports: Vec<BoundReport>, params: &[(&str, String)]) -> Vec<BoundReport> {
    for r in &mut reports {
        for (k, v) in params {
            r.params.insert(k.to_string(), v.clone());
        }
    }
    reports
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Product, square and monomial error bounds plus the product modulus.
pub fn verify_poly(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    const E: Experiment = Experiment::VerifyPoly;
    let seed = config.seed()?;
    let mut reports = Vec::new();
    for w in values_or(config, "W", &[2, 4, 6, 8, 12])? {
        for l in values_or(config, "L", &[1, 2, 3])? {
            let wl = (w as f64).powi(-(l as i32));
            let mut rs = Vec::new();
            let prod = product_net(w, l)?;
            let mut xs = Vec::with_capacity(2 * 200 * 200);
            for i in 0..200 {
                for j in 0..200 {
                    xs.push(-1.0 + 2.0 * i as f64 / 199.0);
                    xs.push(-1.0 + 2.0 * j as f64 / 199.0);
                }
            }
            let v = prod.eval_many(&xs);
            let err = v.iter().enumerate().map(|(p, z)| (z - xs[2 * p] * xs[2 * p + 1]).abs()).fold(0.0, f64::max);
            rs.push(BoundReport::new(E, "product_net.error", 6.0 * wl, err));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = 100_000;
            let (mut a, mut b) = (Vec::with_capacity(2 * pairs), Vec::with_capacity(2 * pairs));
            for _ in 0..pairs {
                a.extend([rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]);
                b.extend([rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]);
            }
            let (fa, fb) = (prod.eval_many(&a), prod.eval_many(&b));
            let modulus = (0..pairs)
                .map(|p| {
                    let dl1 = (a[2 * p] - b[2 * p]).abs() + (a[2 * p + 1] - b[2 * p + 1]).abs();
                    if dl1 > 0.0 {
                        (fa[p] - fb[p]).abs() / dl1
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            rs.push(BoundReport::new(E, "product_net.modulus", 7.0, modulus));
            rs.extend(structural_reports(E, "product_net", &prod));

            let sq = square_net(w, l)?;
            let k = levels_per_layer(w) * l;
            let fine = if k <= 14 { 4usize << k } else { 1 << 16 };
            let xs: Vec<f64> = (0..=fine).map(|j| j as f64 / fine as f64).collect();
            let v = sq.eval_many(&xs);
            let err = xs.iter().zip(&v).map(|(x, y)| (y - x * x).abs()).fold(0.0, f64::max);
            rs.push(BoundReport::new(E, "square_net.error", wl / 4.0, err));
            if k <= 16 {
                let knots: Vec<f64> = (0..=(1usize << k)).map(|j| j as f64 / (1u64 << k) as f64).collect();
                let v = sq.eval_many(&knots);
                let err = knots.iter().zip(&v).map(|(x, y)| (y - x * x).abs()).fold(0.0, f64::max);
                rs.push(BoundReport::new(E, "square_net.knots", EXACT_TOL, err));
            }
            rs.extend(structural_reports(E, "square_net", &sq));

            let alpha = [2usize, 1];
            let mono = monomial_net(&alpha, w, l)?;
            let pts: Vec<f64> = (0..2 * 10_000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let v = mono.eval_many(&pts);
            let err =
                v.iter().enumerate().map(|(p, z)| (z - pts[2 * p].powi(2) * pts[2 * p + 1]).abs()).fold(0.0, f64::max);
            rs.push(BoundReport::new(E, "monomial_net.error", 6.0 * 2.0 * wl, err));
            rs.extend(structural_reports(E, "monomial_net", &mono));
            reports.extend(tagged(rs, &[("W", w.to_string()), ("L", l.to_string())]));
        }
    }
    Ok(RunOutput { reports, files: vec![] })
}

fn random_knots(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Knots {
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    x.sort_by(|a, b| a.total_cmp(b));
    x.dedup();
    let y = (0..x.len() * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Knots { x, y, dim }
}

fn pwl_deviation(net: &crate::netcore::ReluNet, knots: &Knots) -> f64 {
    let (lo, hi) = (knots.x[0], knots.x[knots.len() - 1]);
    let mut probes = knots.x.clone();
    probes.extend((0..=2000).map(|k| lo - 1.0 + (hi - lo + 2.0) * k as f64 / 2000.0));
    let got = net.eval_many(&probes);
    let d = knots.dim;
    probes
        .iter()
        .enumerate()
        .map(|(i, &t)| max_abs_diff(&got[i * d..(i + 1) * d], &eval_pwl(knots, t)))
        .fold(0.0, f64::max)
}

/// Interpolators at full capacity, path networks and discretizer plateaus.
pub fn verify_interp(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    const E: Experiment = Experiment::VerifyInterp;
    let seed = config.seed()?;
    let dim = config.get_or("d", 1usize)?;
    let mut reports = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in values_or(config, "W", &[6, 8, 12])? {
        for l in values_or(config, "L", &[2, 3])? {
            let mut rs = Vec::new();
            let knots = random_knots(&mut rng, interpolator_capacity(w, l) + 2, 1);
            let net = linear_interpolator(&knots, w, l)?;
            rs.push(BoundReport::new(E, "linear_interpolator.deviation", EXACT_TOL, pwl_deviation(&net, &knots)));
            rs.extend(structural_reports(E, "linear_interpolator", &net));
            if w > 7 * dim {
                let knots = random_knots(&mut rng, path_capacity(w, l, dim) + 2, dim);
                let net = pwl_path_net(&knots, w, l)?;
                rs.push(BoundReport::new(E, "pwl_path_net.deviation", EXACT_TOL, pwl_deviation(&net, &knots)));
                rs.extend(structural_reports(E, "pwl_path_net", &net));
            }
            let k = grid_size(w, l, dim);
            let delta = 1.0 / (3.0 * k as f64);
            let disc = discretizer(w, l, dim, delta)?;
            let mut xs = Vec::new();
            let mut want = Vec::new();
            for j in 0..k {
                let lo = j as f64 / k as f64;
                let hi = (j + 1) as f64 / k as f64 - if j + 1 < k { delta } else { 0.0 };
                for s in 0..=10 {
                    xs.push(lo + (hi - lo) * s as f64 / 10.0);
                    want.push(lo);
                }
            }
            let dev = max_abs_diff(&disc.eval_many(&xs), &want);
            rs.push(BoundReport::new(E, "discretizer.plateau", EXACT_TOL, dev));
            rs.extend(structural_reports(E, "discretizer", &disc));
            reports.extend(tagged(rs, &[("W", w.to_string()), ("L", l.to_string())]));
        }
    }
    Ok(RunOutput { reports, files: vec![] })
}

/// Exhaustive checks of bit extraction, binary fitting and value fitting.
pub fn verify_bits(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    const E: Experiment = Experiment::VerifyBits;
    let seed = config.seed()?;
    let s = config.get_or("s", 1usize)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for w in values_or(config, "W", &[6, 8])? {
        for l in values_or(config, "L", &[2])? {
            if l > MAX_EXTRACT_BITS {
                return Err(bad("L", format!("bit machinery supports L ≤ {MAX_EXTRACT_BITS}")));
            }
            let mut rs = Vec::new();
            let ext = bit_extractor(l)?;
            let mut xs = Vec::new();
            let mut want = Vec::new();
            for pattern in 0..(1u64 << l) {
                let x = pattern as f64 / (1u64 << l) as f64;
                for pos in 1..=l {
                    xs.extend([x, pos as f64]);
                    want.push(((pattern >> (l - pos)) & 1) as f64);
                }
            }
            rs.push(BoundReport::new(E, "bit_extractor.exact", EXACT_TOL, max_abs_diff(&ext.eval_many(&xs), &want)));
            rs.extend(structural_reports(E, "bit_extractor", &ext));

            let count = w * w * l * l;
            let bits: Vec<u8> = (0..count).map(|_| rng.gen_range(0..=1)).collect();
            let fit = binary_fitter(&bits, w, l)?;
            let idx: Vec<f64> = (0..count).map(|i| i as f64).collect();
            let want: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            rs.push(BoundReport::new(E, "binary_fitter.exact", EXACT_TOL, max_abs_diff(&fit.eval_many(&idx), &want)));
            rs.extend(structural_reports(E, "binary_fitter", &fit));

            let values: Vec<f64> = (0..count).map(|_| rng.gen::<f64>()).collect();
            let vf = value_fitter(&values, w, l, s)?;
            let claim = ((w * l) as f64).powi(-2 * s as i32);
            rs.push(BoundReport::new(E, "value_fitter.error", claim, max_abs_diff(&vf.eval_many(&idx), &values)));
            rs.extend(structural_reports(E, "value_fitter", &vf));
            reports.extend(tagged(rs, &[("W", w.to_string()), ("L", l.to_string()), ("s", s.to_string())]));
        }
    }
    Ok(RunOutput { reports, files: vec![] })
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Evaluation points for sup-error measurement: a `(20K)^d` grid for
/// `d ≤ 2`, `10^5` Halton points for `d = 3`.
pub fn holder_probe_points(dim: usize, grid: usize) -> Vec<f64> {
    match dim {
        1 => {
            let n = 20 * grid;
            (0..=n).map(|i| i as f64 / n as f64).collect()
        }
        2 => {
            let n = 20 * grid;
            (0..=n).flat_map(|i| (0..=n).flat_map(move |j| [i as f64 / n as f64, j as f64 / n as f64])).collect()
        }
        _ => (1..=100_000).flat_map(|i| (0..dim).map(move |k| halton(i, [2, 3, 5, 7][k % 4]))).collect(),
    }
}

/// Default target for a smoothness level in the shipped sweep.
pub fn default_target(beta: f64) -> Target {
    if beta <= 0.5 {
        Target::SqrtMean
    } else if beta <= 1.0 {
        Target::Mean
    } else {
        Target::Sine
    }
}

/// Error, range, budget and Lipschitz checks for the Hölder approximator.
pub fn verify_holder(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let seed = config.seed()?;
    let betas: Vec<f64> = match config.get::<f64>("beta")? {
        Some(b) => vec![b],
        None => vec![0.5, 1.0, 2.0],
    };
    let targets: Option<Vec<Target>> = match config.params.get("target") {
        None => None,
        Some(t) if t == "all" => Some(Target::ALL.to_vec()),
        Some(t) => Some(vec![Target::parse(t).ok_or_else(|| bad("target", format!("unknown target {t:?}")))?]),
    };
    let mut reports = Vec::new();
    for d in values_or(config, "d", &[1, 2])? {
        for &beta in &betas {
            let list = match &targets {
                Some(ts) => ts.iter().copied().filter(|t| beta <= t.max_smoothness()).collect(),
                None => vec![default_target(beta)],
            };
            for w in values_or(config, "W", &[6, 8])? {
                for l in values_or(config, "L", &[2])? {
                    for &t in &list {
                        let rs = holder_reports(t, d, beta, w, l, seed)?;
                        reports.extend(tagged(
                            rs,
                            &[
                                ("target", t.name().into()),
                                ("d", d.to_string()),
                                ("beta", beta.to_string()),
                                ("W", w.to_string()),
                                ("L", l.to_string()),
                            ],
                        ));
                    }
                }
            }
        }
    }
    Ok(RunOutput { reports, files: vec![] })
}

fn holder_reports(
    t: Target,
    d: usize,
    beta: f64,
    w: usize,
    l: usize,
    seed: u64,
) -> Result<Vec<BoundReport>, HarnessError> {
    const E: Experiment = Experiment::VerifyHolder;
    let a = holder_approximator(t, d, beta, w, l)?;
    let pts = holder_probe_points(d, a.grid);
    let v = a.net.eval_many(&pts);
    let err = v.iter().enumerate().map(|(p, y)| (y - t.value(&pts[p * d..(p + 1) * d])).abs()).fold(0.0, f64::max);
    let mut rs = vec![BoundReport::new(E, "holder.error", a.claims.error, err)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let far: Vec<f64> = (0..2000 * d).map(|_| rng.gen_range(-10.0..11.0)).collect();
    let sup = v.iter().chain(&a.net.eval_many(&far)).fold(0.0f64, |m, y| m.max(y.abs()));
    rs.push(BoundReport::new(E, "holder.sup_norm", 1.0, sup));
    rs.extend(structural_reports(E, "holder", &a.net));
    let lip = lipschitz_lower_sampled(&a.net, &vec![0.0; d], &vec![1.0; d], 2000, seed)?;
    rs.push(BoundReport::new(E, "holder.lipschitz", a.claims.lipschitz, lip));
    Ok(rs)
}

/// Random target with `n` atoms in `[0,1]^d` and weights bounded away from zero.
pub fn random_target(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteDistribution {
    let atoms = (0..n * d).map(|_| rng.gen::<f64>()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteDistribution::new(atoms, w.iter().map(|x| x / s).collect(), d).expect("valid random target")
}

/// Mass within this distance of an atom is credited to the atom before exact transport.
pub const SNAP_RADIUS: f64 = 1e-9;

/// Empirical push-forward measured against the target by exact transport.
#[derive(Debug, Clone)]
pub struct PushforwardCheck {
    /// `W1(γ, aggregated push-forward) + largest snap distance`, an upper bound on `W1(γ, g_#ν̂_m)`.
    pub w1: f64,
    pub mc_error: f64,
    /// Largest distance of any generated point outside `[0,1]^d`.
    pub range_excursion: f64,
    pub certificate: f64,
}

pub fn pushforward_check(
    gamma: &DiscreteDistribution,
    source: Source,
    eps: f64,
    width: usize,
    depth: usize,
    m: usize,
    seed: u64,
) -> Result<PushforwardCheck, HarnessError> {
    let d = gamma.dim();
    let mem = memorize_discrete(gamma, source, eps, width, depth)?;
    let z = source.samples(m, seed);
    let out = mem.net.eval_many(&z);
    let range_excursion = out.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    let mut snapped = Vec::with_capacity(out.len());
    let mut max_snap: f64 = 0.0;
    for p in out.chunks_exact(d) {
        let (best, dd) = (0..gamma.len())
            .map(|i| (i, dist(p, gamma.atom(i))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty target");
        if dd <= SNAP_RADIUS {
            max_snap = max_snap.max(dd);
            snapped.extend_from_slice(gamma.atom(best));
        } else {
            snapped.extend_from_slice(p);
        }
    }
    let agg = DiscreteDistribution::from_weighted_points(&snapped, &vec![1.0 / m as f64; m], d)?;
    let (w1, _) = w1_discrete_exact(gamma, &agg)?;
    let mc_error =
        0.5 * gamma.diameter() * gamma.weights().iter().map(|&q| (q * (1.0 - q) / m as f64).sqrt()).sum::<f64>();
    Ok(PushforwardCheck { w1: w1 + max_snap, mc_error, range_excursion, certificate: mem.certificate })
}

/// Memorization of random targets at full capacity, verified by exact transport.
pub fn verify_memorize(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    const E: Experiment = Experiment::VerifyMemorize;
    let seed = config.seed()?;
    let eps = config.get_or("eps", 1e-2)?;
    let instances = config.get_or("instances", 50usize)?;
    let m = config.get_or("m", 100_000usize)?;
    let source = match config.params.get("source").map(String::as_str) {
        None | Some("uniform01") => Source::Uniform01,
        Some("gaussian") => Source::Gaussian,
        Some(other) => return Err(bad("source", format!("unknown source {other:?}"))),
    };
    let mut reports = Vec::new();
    for d in values_or(config, "d", &[1, 2, 3])? {
        let w = config.get_or("W", 7 * d + 8)?;
        let l = config.get_or("L", 4usize)?;
        let n = capacity(w, l, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(d as u64));
        let (mut worst_gap, mut worst_range, mut worst_cert): (f64, f64, f64) = (f64::INFINITY, 0.0, 0.0);
        let mut structural = Vec::new();
        for inst in 0..instances {
            let gamma = random_target(&mut rng, n, d);
            let chk =
                pushforward_check(&gamma, source, eps, w, l, m, seed.wrapping_add(1000 * d as u64 + inst as u64))?;
            worst_gap = worst_gap.min(eps + 3.0 * chk.mc_error - chk.w1);
            worst_range = worst_range.max(chk.range_excursion);
            worst_cert = worst_cert.max(chk.certificate);
            if inst == 0 {
                structural =
                    structural_reports(E, "memorize_discrete", &memorize_discrete(&gamma, source, eps, w, l)?.net);
            }
        }
        // the binding instance: smallest slack between claim and measurement
        let mut rs = vec![BoundReport::new(E, "memorize.w1_slack", 0.0, -worst_gap)];
        rs.push(BoundReport::new(E, "memorize.range_excursion", 0.0, worst_range));
        rs.push(BoundReport::new(E, "memorize.certificate", eps, worst_cert));
        rs.extend(structural);
        reports.extend(tagged(
            rs,
            &[
                ("d", d.to_string()),
                ("W", w.to_string()),
                ("L", l.to_string()),
                ("n", n.to_string()),
                ("eps", eps.to_string()),
            ],
        ));
    }
    Ok(RunOutput { reports, files: vec![] })
}

/// Points on a fixed segment in `R^d` (uniform in arc length).
pub fn segment_points(n: usize, d: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = segment_ends(d);
    let points = (0..n)
        .flat_map(|_| {
            let t: f64 = rng.gen();
            (0..d).map(|k| a[k] + t * (b[k] - a[k])).collect::<Vec<_>>()
        })
        .collect();
    SampleSet { points, dim: d, seed }
}

/// Endpoints of the segment used for low-dimensional data.
pub fn segment_ends(d: usize) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..d).map(|k| 0.1 + 0.05 * k as f64).collect();
    let b: Vec<f64> = (0..d).map(|k| 0.9 - 0.1 * k as f64).collect();
    (a, b)
}

/// Box-counting dimension of generated or loaded point clouds.
pub fn dim_estimate(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    const E: Experiment = Experiment::DimEstimate;
    let seed = config.seed()?;
    let n = config.get_or("n", 10_000usize)?;
    let d = config.get_or("d", 3usize)?;
    let tol = config.get_or("tolerance", 0.2f64)?;
    let (samples, expected) = match config.params.get("data") {
        Some(path) => (SampleSet::read_csv(&PathBuf::from(path))?, config.get::<f64>("expected")?),
        None => match config.params.get("shape").map(String::as_str).unwrap_or("segment") {
            "segment" => (segment_points(n, d, seed), Some(1.0)),
            "square" => {
                if d < 2 {
                    return Err(bad("d", "a square needs d ≥ 2"));
                }
                let sq = SampleSet::uniform_cube(n, 2, seed);
                let points = sq
                    .points
                    .chunks_exact(2)
                    .flat_map(|p| (0..d).map(move |k| if k < 2 { p[k] } else { 0.5 }))
                    .collect();
                (SampleSet { points, dim: d, seed }, Some(2.0))
            }
            "cube" => (SampleSet::uniform_cube(n, d, seed), Some(d as f64)),
            other => return Err(bad("shape", format!("unknown shape {other:?}"))),
        },
    };
    let eps: Vec<f64> = (1..=7).map(|k| 0.5f64.powi(k)).collect();
    let est = box_counting_dim(&samples, &eps)?;
    let report = match expected {
        Some(e) => BoundReport::new(E, "box_counting.deviation", tol, (est.dimension - e).abs()).param("expected", e),
        None => BoundReport::new(E, "box_counting.dimension", est.dimension, est.dimension),
    };
    let mut rows = String::from("eps,count\n");
    for (e, c) in eps.iter().zip(&est.counts) {
        rows.push_str(&format!("{e:?},{c}\n"));
    }
    let mut report = report.param("estimate", est.dimension);
    if let Some(w) = est.warning {
        report = report.param("warning", w);
    }
    Ok(RunOutput {
        reports: vec![report],
        files: vec![super::DataFile { name: "box_counts.csv".into(), contents: rows }],
    })
}
