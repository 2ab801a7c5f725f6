//! Approximate squares, products and monomials.
//!
//! The square net realizes `f_k(x) = x - Σ_{i=1}^{k} T_i(x)/4^i`, where `T_i`
//! is the tent map iterated `i` times. Each hidden layer advances the tent
//! iteration by `n` levels using the `2^n` ReLUs `σ(y - j/2^n)`, and one more
//! channel carries `f` computed so far, which is nonnegative.

use crate::error::{require, BuildError};
use crate::netcore::{
    clip_to_box, compose_merged, extend_depth, map_input, map_output, parallel_with, Layer, NetMeta, Pad, ReluNet, Row,
};

/// Largest `n·L` the square net accepts; beyond it the dyadic knots are finer
/// than double precision.
pub const MAX_SQUARE_LEVELS: usize = 40;
/// Largest monomial degree accepted by [`monomial_net`].
pub const MAX_MONOMIAL_DEGREE: usize = 6;

/// The `n ≥ 1` with `(n-1)2^{n-1} + 1 ≤ W ≤ n 2^n`.
pub fn levels_per_layer(width: usize) -> usize {
    let mut n = 1;
    while n * (1usize << n) < width {
        n += 1;
    }
    n
}

fn tent(y: f64) -> f64 {
    if y <= 0.5 {
        2.0 * y
    } else {
        2.0 * (1.0 - y)
    }
}

/// Coefficients `c_j` with `h(y) = Σ_j c_j σ(y - j/G)` on `[0, 1]`, for `h`
/// linear between the grid values and `h(0) = 0`.
fn grid_coefficients(values: &[f64]) -> Vec<f64> {
    let g = (values.len() - 1) as f64;
    let slopes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) * g).collect();
    let mut c = vec![slopes[0]];
    c.extend(slopes.windows(2).map(|w| w[1] - w[0]));
    c
}

/// Approximation of `x²` on `[0, 1]` with error at most `W^{-L}/4`, exact at
/// the dyadic points `j/2^{nL}`. Width at most `3W`, depth `L`.
pub fn square_net(width: usize, depth: usize) -> Result<ReluNet, BuildError> {
    require(width >= 1 && depth >= 1, || format!("need W, L ≥ 1, got ({width}, {depth})"))?;
    let n = levels_per_layer(width);
    require(n * depth <= MAX_SQUARE_LEVELS, || format!("n·L = {} exceeds {MAX_SQUARE_LEVELS}", n * depth))?;
    let g = 1usize << n;
    let gf = g as f64;
    // per-layer grid functions: next tent value and this layer's correction
    let mut next_vals = Vec::with_capacity(g + 1);
    let mut corr_vals: Vec<Vec<f64>> = vec![Vec::with_capacity(g + 1); depth];
    for j in 0..=g {
        let mut y = j as f64 / gf;
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            y = tent(y);
            levels.push(y);
        }
        next_vals.push(y);
        for (layer, cv) in corr_vals.iter_mut().enumerate() {
            let base = (layer * n) as i32;
            cv.push(levels.iter().enumerate().map(|(k, t)| t * 0.25f64.powi(base + k as i32 + 1)).sum());
        }
    }
    let next_c = grid_coefficients(&next_vals);
    let corr_c: Vec<Vec<f64>> = corr_vals.iter().map(|v| grid_coefficients(v)).collect();

    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(Layer::from_rows(1, (0..g).map(|j| Row::single(0, 1.0, -(j as f64) / gf)).collect())?);
    // column of the carried value f in the previous layer: neuron 0 (= x) for layer 1, else index g
    let mut carry_col = 0;
    for layer in 1..=depth {
        let carry_terms = |out: &mut Vec<(usize, f64)>| {
            out.push((carry_col, 1.0));
            for (j, &c) in corr_c[layer - 1].iter().enumerate() {
                out.push((j, -c));
            }
        };
        let prev_cols = if layer == 1 { g } else { g + 1 };
        if layer == depth {
            let mut terms = Vec::new();
            carry_terms(&mut terms);
            layers.push(Layer::from_rows(prev_cols, vec![Row::new(terms, 0.0)])?);
        } else {
            let mut rows: Vec<Row> = (0..g)
                .map(|j| Row::new(next_c.iter().enumerate().map(|(i, &c)| (i, c)).collect(), -(j as f64) / gf))
                .collect();
            let mut terms = Vec::new();
            carry_terms(&mut terms);
            rows.push(Row::new(terms, 0.0));
            layers.push(Layer::from_rows(prev_cols, rows)?);
            carry_col = g;
        }
    }
    Ok(ReluNet::new(1, layers)?.with_meta(NetMeta::new("square_net", 3 * width, depth, Some(2.0))))
}

/// Approximation of `xy` on `[-1, 1]²` with error at most `6W^{-L}`.
/// Width at most `9W+1`, depth `L`.
pub fn product_net(width: usize, depth: usize) -> Result<ReluNet, BuildError> {
    let sq = square_net(width, depth)?;
    let feed = |wx: f64, wy: f64, b: f64| -> Result<ReluNet, BuildError> {
        Ok(map_input(&sq, Layer::from_rows(2, vec![Row::new(vec![(0, wx), (1, wy)], b)])?)?)
    };
    let shift =
        ReluNet::new(2, vec![Layer::from_rows(2, vec![Row::new(vec![(0, 1.0), (1, 1.0)], 2.0)])?, Layer::identity(1)])?;
    let body = parallel_with(&[
        (feed(0.25, 0.25, 0.5)?, Pad::lower(0.0, 1)),
        (feed(0.25, 0.0, 0.25)?, Pad::lower(0.0, 1)),
        (feed(0.0, 0.25, 0.25)?, Pad::lower(0.0, 1)),
        (extend_depth(&shift, depth, &Pad::lower(0.0, 1))?, Pad::lower(0.0, 1)),
    ])?;
    let out = Layer::from_rows(4, vec![Row::new(vec![(0, 8.0), (1, -8.0), (2, -8.0), (3, -1.0)], 1.0)])?;
    let net = map_output(&body, out)?;
    Ok(net.with_meta(NetMeta::new("product_net", 9 * width + 1, depth, Some(7.0 * 2f64.sqrt()))))
}

/// Approximation of `x^α` on `[-1, 1]^d` with error at most `6(k-1)W^{-L}`,
/// `k = |α|`, and range in `[-1, 1]`. Width at most `9W + k - 1`, depth at
/// most `(k-1)(L+1)`.
pub fn monomial_net(alpha: &[usize], width: usize, depth: usize) -> Result<ReluNet, BuildError> {
    let d = alpha.len();
    require(d >= 1, || "empty multi-index".into())?;
    let k: usize = alpha.iter().sum();
    require(k <= MAX_MONOMIAL_DEGREE, || format!("degree {k} exceeds {MAX_MONOMIAL_DEGREE}"))?;
    let amax = alpha.iter().copied().max().unwrap_or(0) as f64;
    let lip = 7f64.powi(k.saturating_sub(1) as i32) * amax * (d as f64).sqrt();
    let tag = |net: ReluNet, w: usize, l: usize| net.with_meta(NetMeta::new("monomial_net", w, l, Some(lip)));
    if k == 0 {
        return Ok(tag(ReluNet::constant(d, &[1.0]), 0, 0));
    }
    let coords: Vec<usize> = alpha.iter().enumerate().flat_map(|(j, &a)| std::iter::repeat_n(j, a)).collect();
    if k == 1 {
        return Ok(tag(ReluNet::affine(Layer::from_rows(d, vec![Row::single(coords[0], 1.0, 0.0)])?), 0, 0));
    }
    let clipped = clip_to_box(&product_net(width, depth)?, &[-1.0], &[1.0])?;
    let stage_depth = clipped.depth();
    // input selection x -> (z_1, ..., z_k)
    let mut net = ReluNet::affine(Layer::from_rows(d, coords.iter().map(|&c| Row::single(c, 1.0, 0.0)).collect())?);
    for i in 2..=k {
        // current outputs: (p, z_i, ..., z_k)
        let m = k - i + 2;
        let mut items = vec![(
            map_input(&clipped, Layer::from_rows(m, vec![Row::single(0, 1.0, 0.0), Row::single(1, 1.0, 0.0)])?)?,
            Pad::lower(-1.0, 1),
        )];
        for c in 2..m {
            let carry = ReluNet::new(
                m,
                vec![
                    Layer::from_rows(m, vec![Row::single(c, 1.0, 1.0)])?,
                    Layer::from_rows(1, vec![Row::single(0, 1.0, -1.0)])?,
                ],
            )?;
            items.push((extend_depth(&carry, stage_depth, &Pad::lower(-1.0, 1))?, Pad::lower(-1.0, 1)));
        }
        net = compose_merged(&parallel_with(&items)?, &net)?;
    }
    Ok(tag(net, 9 * width + k - 1, (k - 1) * (depth + 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_match_width_ranges() {
        assert_eq!(levels_per_layer(1), 1);
        assert_eq!(levels_per_layer(2), 1);
        assert_eq!(levels_per_layer(3), 2);
        assert_eq!(levels_per_layer(8), 2);
        assert_eq!(levels_per_layer(9), 3);
        assert_eq!(levels_per_layer(24), 3);
        assert_eq!(levels_per_layer(25), 4);
    }

    fn tent_sum(x: f64, k: usize) -> f64 {
        // independent oracle: direct iteration of the tent map
        let mut y = x;
        let mut s = x;
        for i in 1..=k {
            y = tent(y);
            s -= y / 4f64.powi(i as i32);
        }
        s
    }

    #[test]
    fn square_matches_tent_series() {
        for (w, l) in [(1, 3), (2, 2), (4, 2), (8, 3), (30, 1)] {
            let net = square_net(w, l).unwrap();
            assert!(net.within_claims());
            let k = levels_per_layer(w) * l;
            for i in 0..=500 {
                let x = i as f64 / 500.0;
                assert!((net.eval_scalar(&[x]) - tent_sum(x, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn square_is_exact_at_dyadic_knots() {
        let net = square_net(4, 2).unwrap();
        let k = 1 << 4;
        for j in 0..=k {
            let x = j as f64 / k as f64;
            assert!((net.eval_scalar(&[x]) - x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn product_error_and_symmetry() {
        let (w, l) = (3, 2);
        let net = product_net(w, l).unwrap();
        assert!(net.within_claims(), "{}x{}", net.width(), net.depth());
        let bound = 6.0 * (w as f64).powi(-(l as i32));
        for i in 0..=40 {
            for j in 0..=40 {
                let (x, y) = (-1.0 + i as f64 / 20.0, -1.0 + j as f64 / 20.0);
                let v = net.eval(&[x, y])[0];
                assert!((v - x * y).abs() <= bound);
                assert!((v - net.eval(&[y, x])[0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn monomial_small_cases() {
        let c = monomial_net(&[0, 0], 4, 2).unwrap();
        assert_eq!(c.eval(&[0.3, -0.2]), vec![1.0]);
        let p = monomial_net(&[0, 1], 4, 2).unwrap();
        assert_eq!(p.eval(&[0.3, -0.2]), vec![-0.2]);
        let alpha = [2, 1];
        let (w, l) = (4, 2);
        let m = monomial_net(&alpha, w, l).unwrap();
        assert!(m.within_claims(), "{}x{}", m.width(), m.depth());
        let bound = 6.0 * 2.0 * (w as f64).powi(-(l as i32));
        for (x, y) in [(1.0, 1.0), (-1.0, 1.0), (0.5, -0.7), (-1.0, -1.0), (0.0, 0.9)] {
            let v = m.eval(&[x, y])[0];
            assert!((v - x * x * y).abs() <= bound, "{x},{y}: {v}");
            assert!((-1.0..=1.0).contains(&v));
        }
        assert!(monomial_net(&[4, 3], 4, 2).is_err());
    }
}
