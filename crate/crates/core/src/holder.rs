//! ReLU approximation of Hölder-smooth functions on the unit cube.
//!
//! The base network `φ_0` reproduces a local Taylor expansion on each cell of
//! a `K^d` grid: each coordinate is discretized to the cell corner `θ/K`,
//! the cell index `Σ_j θ_j K^{j-1}` addresses fitted derivative values, and
//! products with monomials of `x - θ/K` assemble the polynomial. The base
//! network is accurate away from thin strips near the cell faces; the final
//! network repairs those strips by taking, one axis at a time, the median of
//! three shifted copies.

use crate::bits::value_fitter;
use crate::error::{require, BuildError};
use crate::interp::{discretizer, grid_size};
use crate::netcore::{
    clip_to_box, compose, compose_merged, extend_depth, map_input, map_output, parallel, parallel_with, Layer, NetMeta,
    Pad, ReluNet, Row,
};
use crate::poly::{monomial_net, product_net};

/// Built-in targets with analytic derivatives up to order two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `(x_1 + ... + x_d)/d`
    Mean,
    /// `(√x_1 + ... + √x_d)/d`, clamped at zero
    SqrtMean,
    /// `sin(x_1 + ... + x_d + 0.3)/2`
    Sine,
    /// `(x_1² + ... + x_d²)/(2d)`
    Quadratic,
    /// `exp(-‖x - c‖²)/10` with `c` the cube center
    Bump,
}

impl Target {
    pub const ALL: [Target; 5] = [Target::Mean, Target::SqrtMean, Target::Sine, Target::Quadratic, Target::Bump];

    pub fn name(self) -> &'static str {
        match self {
            Target::Mean => "mean",
            Target::SqrtMean => "sqrt_mean",
            Target::Sine => "sine",
            Target::Quadratic => "quadratic",
            Target::Bump => "bump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Largest smoothness for which the unit Hölder ball contains the target
    /// when `d ≤ 3`.
    pub fn max_smoothness(self) -> f64 {
        match self {
            Target::SqrtMean => 0.5,
            Target::Bump => 2.0,
            Target::Mean | Target::Sine | Target::Quadratic => 3.0,
        }
    }

    pub fn value(self, x: &[f64]) -> f64 {
        self.derivative(&vec![0; x.len()], x)
    }

    /// `∂^α h(x)` for `|α| ≤ 2`.
    pub fn derivative(self, alpha: &[usize], x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let order: usize = alpha.iter().sum();
        let nz: Vec<usize> = alpha.iter().enumerate().filter(|(_, &a)| a > 0).map(|(i, _)| i).collect();
        assert!(order <= 2, "derivatives are available up to order two");
        match self {
            Target::Mean => match order {
                0 => x.iter().sum::<f64>() / d,
                1 => 1.0 / d,
                _ => 0.0,
            },
            Target::SqrtMean => match order {
                0 => x.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() / d,
                _ => panic!("the square-root target has no bounded derivatives"),
            },
            Target::Sine => {
                let u = x.iter().sum::<f64>() + 0.3;
                match order {
                    0 => 0.5 * u.sin(),
                    1 => 0.5 * u.cos(),
                    _ => -0.5 * u.sin(),
                }
            }
            Target::Quadratic => match order {
                0 => x.iter().map(|v| v * v).sum::<f64>() / (2.0 * d),
                1 => x[nz[0]] / d,
                _ => {
                    if nz.len() == 1 {
                        1.0 / d
                    } else {
                        0.0
                    }
                }
            },
            Target::Bump => {
                let r: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
                let e = 0.1 * (-r.iter().map(|v| v * v).sum::<f64>()).exp();
                match order {
                    0 => e,
                    1 => -2.0 * r[nz[0]] * e,
                    _ => {
                        if nz.len() == 1 {
                            (4.0 * r[nz[0]] * r[nz[0]] - 2.0) * e
                        } else {
                            4.0 * r[nz[0]] * r[nz[1]] * e
                        }
                    }
                }
            }
        }
    }
}

/// Integer part `s` of a smoothness `β = s + r` with `r ∈ (0, 1]`.
pub fn smoothness_order(beta: f64) -> usize {
    (beta.ceil() as usize).saturating_sub(1)
}

/// Multi-indices `α ∈ N^d` with `|α| ≤ s`, by order and then lexicographically.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for order in 0..=max_order {
        let mut cur = vec![0; dim];
        fill(&mut out, &mut cur, 0, order);
    }
    out
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for a in (0..=left).rev() {
        cur[pos] = a;
        fill(out, cur, pos + 1, left - a);
    }
    cur[pos] = 0;
}

fn factorial(alpha: &[usize]) -> f64 {
    alpha.iter().map(|&a| (1..=a).product::<usize>() as f64).product()
}

/// Remainder of the order-`s` Taylor expansion of `target` at `x0`, evaluated at `x`.
pub fn taylor_local_error(target: Target, x: &[f64], x0: &[f64], order: usize) -> f64 {
    let poly: f64 = multi_indices(x.len(), order)
        .iter()
        .map(|a| {
            let mono: f64 = a.iter().zip(x.iter().zip(x0)).map(|(&k, (u, v))| (u - v).powi(k as i32)).product();
            target.derivative(a, x0) * mono / factorial(a)
        })
        .sum();
    (target.value(x) - poly).abs()
}

/// Claimed error, size and Lipschitz constant of a Hölder approximator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderClaims {
    pub error: f64,
    pub width: usize,
    pub depth: usize,
    pub lipschitz: f64,
}

pub fn holder_claims(width: usize, depth: usize, dim: usize, beta: f64) -> HolderClaims {
    let s = smoothness_order(beta);
    let k = grid_size(width, depth, dim) as f64;
    let (w, l, d, sf) = (width as f64, depth as f64, dim as f64, s as f64);
    let log_w = (width as f64).log2().ceil();
    let log_l = (depth as f64).log2().ceil();
    let error = 6.0 * (sf + 1.0).powi(2) * d.powf((sf + beta / 2.0).max(1.0)) * k.powf(-beta);
    let width_claim = 49.0 * (sf + 1.0).powi(2) * 3f64.powi(dim as i32) * d.powi(s as i32 + 1) * w * log_w;
    let depth_claim = 15.0 * (sf + 1.0).powi(2) * l * log_l + 2.0 * d;
    let lip = (sf + 1.0)
        * d.powf(sf + 0.5)
        * l
        * (w * l).powf((4.0 * beta - 4.0).max(0.0) / d)
        * (1260.0 * w * w * l * l * 2f64.powf(l * l) + 19.0 * sf * 7f64.powi(s as i32));
    HolderClaims { error, width: width_claim as usize, depth: depth_claim as usize, lipschitz: lip }
}

/// The approximator together with its intermediate stages.
#[derive(Debug, Clone)]
pub struct HolderApprox {
    /// Final network, accurate on the whole cube.
    pub net: ReluNet,
    /// `stages[0]` is the base network; `stages[i]` has the first `i` axes repaired.
    pub stages: Vec<ReluNet>,
    pub grid: usize,
    pub delta: f64,
    pub order: usize,
    pub claims: HolderClaims,
}

/// Median of three inputs as a width-10, depth-2 network.
pub fn mid_net() -> ReluNet {
    let r = |t: Vec<(usize, f64)>| Row::new(t, 0.0);
    let h1 = Layer::from_rows(
        3,
        vec![
            r(vec![(0, 1.0), (1, 1.0)]),
            r(vec![(0, -1.0), (1, -1.0)]),
            r(vec![(0, 1.0), (1, -1.0)]),
            r(vec![(0, -1.0), (1, 1.0)]),
            r(vec![(2, 1.0)]),
            r(vec![(2, -1.0)]),
            r(vec![(0, 1.0), (1, 1.0), (2, 1.0)]),
            r(vec![(0, -1.0), (1, -1.0), (2, -1.0)]),
        ],
    )
    .expect("median layer");
    // max(t1,t2) = (n0 - n1 + n2 + n3)/2, min(t1,t2) = (n0 - n1 - n2 - n3)/2, t3 = n4 - n5
    let mx = [(0, 0.5), (1, -0.5), (2, 0.5), (3, 0.5)];
    let mn = [(0, 0.5), (1, -0.5), (2, -0.5), (3, -0.5)];
    let combo = |pair: &[(usize, f64)], s_pair: f64, s_t3: f64| -> Row {
        let mut t: Vec<(usize, f64)> = pair.iter().map(|&(c, w)| (c, w * s_pair)).collect();
        t.push((4, s_t3));
        t.push((5, -s_t3));
        Row::new(t, 0.0)
    };
    let h2 = Layer::from_rows(
        8,
        vec![
            combo(&mx, 1.0, 1.0),
            combo(&mx, -1.0, -1.0),
            combo(&mx, 1.0, -1.0),
            combo(&mx, -1.0, 1.0),
            combo(&mn, 1.0, 1.0),
            combo(&mn, -1.0, -1.0),
            combo(&mn, 1.0, -1.0),
            combo(&mn, -1.0, 1.0),
            r(vec![(6, 1.0)]),
            r(vec![(7, 1.0)]),
        ],
    )
    .expect("median layer");
    // mid = s - max3 - min3
    let out = Layer::from_rows(
        10,
        vec![r(vec![
            (8, 1.0),
            (9, -1.0),
            (0, -0.5),
            (1, 0.5),
            (2, -0.5),
            (3, -0.5),
            (4, -0.5),
            (5, 0.5),
            (6, 0.5),
            (7, 0.5),
        ])],
    )
    .expect("median output");
    ReluNet::new(3, vec![h1, h2, out]).expect("median network").with_meta(NetMeta::new("mid_net", 14, 2, None))
}

fn select(dim: usize, rows: Vec<Row>) -> Result<Layer, BuildError> {
    Ok(Layer::from_rows(dim, rows)?)
}

/// Builds the approximator of `target ∈ H^β([0,1]^d)` with budget `(W, L)`.
pub fn holder_approximator(
    target: Target,
    dim: usize,
    beta: f64,
    width: usize,
    depth: usize,
) -> Result<HolderApprox, BuildError> {
    require(width >= 6 && depth >= 2, || format!("need W ≥ 6 and L ≥ 2, got ({width}, {depth})"))?;
    require((1..=3).contains(&dim), || format!("dimension {dim} outside 1..=3"))?;
    require(beta > 0.0 && beta <= target.max_smoothness(), || {
        format!("β = {beta} outside (0, {}] for target {}", target.max_smoothness(), target.name())
    })?;
    let s = smoothness_order(beta);
    require(s <= 2, || format!("smoothness order {s} exceeds 2"))?;
    let k = grid_size(width, depth, dim);
    require(k.pow(dim as u32) <= width * width * depth * depth, || "grid exceeds W²L² cells".into())?;
    let kf = k as f64;
    let delta = 1.0 / (3.0 * kf.powf(beta.max(1.0)));
    let prod_depth = 2 * (s + 1) * depth;

    // stage A: x -> (ψ(x_1..x_d), clamp(x_1..x_d))
    let disc = discretizer(width, depth, dim, delta)?;
    let mut items = Vec::new();
    for j in 0..dim {
        items.push((map_input(&disc, select(dim, vec![Row::single(j, 1.0, 0.0)])?)?, Pad::lower(0.0, 1)));
    }
    for j in 0..dim {
        let clamp = ReluNet::new(
            dim,
            vec![
                select(dim, vec![Row::single(j, 1.0, 0.0), Row::single(j, 1.0, -1.0)])?,
                Layer::from_rows(2, vec![Row::new(vec![(0, 1.0), (1, -1.0)], 0.0)])?,
            ],
        )?;
        items.push((clamp, Pad::lower(0.0, 1)));
    }
    let stage_a = parallel_with(&items)?;
    // append the cell index Σ K^{j+1} ψ_j as one extra channel; keeping it
    // separate stops the fitters' first layers from filling in
    let mut rows: Vec<Row> = (0..2 * dim).map(|j| Row::single(j, 1.0, 0.0)).collect();
    rows.push(Row::new((0..dim).map(|j| (j, kf.powi(j as i32 + 1))).collect(), 0.0));
    let stage_a = map_output(&stage_a, select(2 * dim, rows)?)?;

    // stage B: fitted derivatives at the cell corner and monomials of x - corner
    let alphas = multi_indices(dim, s);
    let cells = width * width * depth * depth;
    let index_row = Row::single(2 * dim, 1.0, 0.0);
    let mut items = Vec::new();
    for a in &alphas {
        let fact = factorial(a);
        let values: Vec<f64> = (0..cells)
            .map(|i| {
                if i >= k.pow(dim as u32) {
                    return 0.5;
                }
                let corner: Vec<f64> = (0..dim).map(|j| ((i / k.pow(j as u32)) % k) as f64 / kf).collect();
                ((target.derivative(a, &corner) + 1.0) / 2.0).clamp(0.0, 1.0)
            })
            .collect();
        let fit = value_fitter(&values, width, depth, s + 1)?;
        let fit = map_input(&fit, select(2 * dim + 1, vec![index_row.clone()])?)?;
        let fit = map_output(&fit, Layer::from_rows(1, vec![Row::single(0, 2.0 / fact, -1.0 / fact)])?)?;
        items.push((fit, Pad::lower(-1.0, 1)));
    }
    let offset_rows: Vec<Row> = (0..dim).map(|j| Row::new(vec![(dim + j, 1.0), (j, -1.0)], 0.0)).collect();
    for a in alphas.iter().skip(1) {
        let mono = monomial_net(a, width, prod_depth)?;
        items.push((map_input(&mono, select(2 * dim + 1, offset_rows.clone())?)?, Pad::lower(-1.0, 1)));
    }
    let stage_b = compose(&parallel_with(&items)?, &stage_a)?;

    // stage C: sum of products, then clip
    let n_alpha = alphas.len();
    let width_b = stage_b.output_dim();
    let base = if n_alpha == 1 {
        map_output(&stage_b, select(width_b, vec![Row::single(0, 1.0, 0.0)])?)?
    } else {
        let prod = product_net(width, prod_depth)?;
        let carry = ReluNet::new(
            width_b,
            vec![
                select(width_b, vec![Row::single(0, 1.0, 1.0)])?,
                Layer::from_rows(1, vec![Row::single(0, 1.0, -1.0)])?,
            ],
        )?;
        let mut items = vec![(extend_depth(&carry, prod.depth(), &Pad::lower(-1.0, 1))?, Pad::Split)];
        for i in 1..n_alpha {
            let pick = select(width_b, vec![Row::single(i, 1.0, 0.0), Row::single(n_alpha + i - 1, 1.0, 0.0)])?;
            items.push((map_input(&prod, pick)?, Pad::Split));
        }
        let stage_c = parallel_with(&items)?;
        let stage_c = map_output(
            &stage_c,
            Layer::from_rows(n_alpha, vec![Row::new((0..n_alpha).map(|i| (i, 1.0)).collect(), 0.0)])?,
        )?;
        compose_merged(&stage_c, &stage_b)?
    };
    let base = clip_to_box(&base, &[-1.0], &[1.0])?;

    // repair the strips near cell faces, one axis at a time
    let mid = mid_net();
    let mut stages = vec![base];
    for axis in 0..dim {
        let prev = stages.last().unwrap();
        let shifted = |sh: f64| -> Result<ReluNet, BuildError> {
            let rows = (0..dim).map(|j| Row::single(j, 1.0, if j == axis { sh } else { 0.0 })).collect();
            Ok(map_input(prev, select(dim, rows)?)?)
        };
        let three = parallel(&[shifted(-delta)?, prev.clone(), shifted(delta)?])?;
        stages.push(compose_merged(&mid, &three)?);
    }
    let claims = holder_claims(width, depth, dim, beta);
    let net = stages.last().unwrap().clone().with_meta(NetMeta::new(
        "holder_approximator",
        claims.width,
        claims.depth,
        Some(claims.lipschitz),
    ));
    Ok(HolderApprox { net, stages, grid: k, delta, order: s, claims })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(3, 2).len(), 10);
        assert_eq!(smoothness_order(0.5), 0);
        assert_eq!(smoothness_order(1.0), 0);
        assert_eq!(smoothness_order(2.0), 1);
        assert_eq!(smoothness_order(2.5), 2);
    }

    #[test]
    fn median_network() {
        let m = mid_net();
        assert!(m.width() <= 14 && m.depth() == 2);
        for t in [[1.0, 2.0, 3.0], [3.0, -1.0, 0.5], [0.2, 0.2, -4.0], [-1.0, -2.0, -3.0]] {
            let mut s = t;
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((m.eval(&t)[0] - s[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.3, 0.7];
        let h = 1e-5;
        for t in [Target::Mean, Target::Sine, Target::Quadratic, Target::Bump] {
            for i in 0..2 {
                let mut e = [0, 0];
                e[i] = 1;
                let mut xp = x;
                xp[i] += h;
                let mut xm = x;
                xm[i] -= h;
                let fd = (t.value(&xp) - t.value(&xm)) / (2.0 * h);
                assert!((fd - t.derivative(&e, &x)).abs() < 1e-8, "{t:?}");
                let mut ee = e;
                ee[1] += 1;
                let fd2 =
                    (t.derivative(&[e[0], e[1]], &[x[0], x[1] + h]) - t.derivative(&e, &[x[0], x[1] - h])) / (2.0 * h);
                assert!((fd2 - t.derivative(&ee, &x)).abs() < 1e-7, "{t:?}");
            }
        }
    }

    #[test]
    fn taylor_error_is_small_near_expansion_point() {
        let x0 = [0.4, 0.4];
        let x = [0.41, 0.39];
        assert!(taylor_local_error(Target::Sine, &x, &x0, 2) < 1e-5);
        assert!(taylor_local_error(Target::Quadratic, &x, &x0, 2) < 1e-14);
    }

    #[test]
    fn small_approximator_is_accurate_and_bounded() {
        let a = holder_approximator(Target::Mean, 1, 1.0, 6, 2).unwrap();
        assert_eq!(a.grid, 144);
        assert!(a.net.within_claims(), "{}x{}", a.net.width(), a.net.depth());
        let mut worst: f64 = 0.0;
        for i in 0..=2000 {
            let x = i as f64 / 2000.0;
            let v = a.net.eval_scalar(&[x]);
            assert!(v.abs() <= 1.0);
            worst = worst.max((v - x).abs());
        }
        assert!(worst <= a.claims.error, "{worst} vs {}", a.claims.error);
    }

    #[test]
    fn guards() {
        assert!(holder_approximator(Target::Mean, 4, 1.0, 6, 2).is_err());
        assert!(holder_approximator(Target::Mean, 1, 1.0, 5, 2).is_err());
        assert!(holder_approximator(Target::SqrtMean, 1, 1.0, 6, 2).is_err());
    }
}
