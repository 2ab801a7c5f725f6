use crate::error::{require, BuildError};
use crate::netcore::{
    compose_merged, extend_depth, map_input, map_output, parallel_with, Layer, NetMeta, Pad, ReluNet, Row,
};

use super::{linear_interpolator, Knots};

/// Grid resolution `K = ⌊(WL)^{2/d}⌋`, computed in integers as the largest
/// `K` with `K^d ≤ (WL)^2`.
pub fn grid_size(width: usize, depth: usize, dim: usize) -> usize {
    let target = ((width * depth) as u128).pow(2);
    let mut k: u128 = 1;
    while (k + 1).checked_pow(dim as u32).is_some_and(|v| v <= target) {
        k += 1;
    }
    k as usize
}

fn staircase(steps: usize, scale: f64, value_scale: f64, delta: f64) -> Knots {
    // plateaus value_scale*m on [m*scale, (m+1)*scale - delta], last plateau closed at steps*scale
    let mut x = Vec::with_capacity(2 * steps + 1);
    let mut y = Vec::with_capacity(2 * steps + 1);
    for m in 0..steps {
        x.push(m as f64 * scale);
        y.push(m as f64 * value_scale);
        if m + 1 < steps {
            x.push((m + 1) as f64 * scale - delta);
            y.push(m as f64 * value_scale);
        }
    }
    x.push(steps as f64 * scale);
    y.push((steps - 1) as f64 * value_scale);
    Knots::scalar(x, y)
}

/// Scalar network that is constant `k/K` on `[k/K, (k+1)/K - δ·1_{k<K-1}]`
/// for `k = 0, ..., K-1`, with width at most `4W+3` and depth at most `4L`.
pub fn discretizer(width: usize, depth: usize, dim: usize, delta: f64) -> Result<ReluNet, BuildError> {
    require(width >= 2 && depth >= 1 && dim >= 1, || {
        format!("need W ≥ 2, L ≥ 1, d ≥ 1, got ({width}, {depth}, {dim})")
    })?;
    let k = grid_size(width, depth, dim);
    let kf = k as f64;
    require(delta > 0.0 && delta <= 1.0 / (3.0 * kf), || {
        format!("delta {delta} must lie in (0, 1/(3K)] with K = {k}")
    })?;
    let net = if dim >= 2 {
        linear_interpolator(&staircase(k, 1.0 / kf, 1.0 / kf, delta), 4 * width, depth)?
    } else {
        let m = width * width * depth;
        let (mf, lf) = (m as f64, depth as f64);
        let coarse = linear_interpolator(&staircase(m, 1.0 / mf, 1.0, delta), 4 * width, depth)?;
        let fine = linear_interpolator(&staircase(depth, 1.0 / (mf * lf), 1.0, delta), 6, depth)?;
        // stage one: (coarse(x), σ(x))
        let relu_x = ReluNet::new(1, vec![Layer::identity(1), Layer::identity(1)])?;
        let d1 = coarse.depth().max(1);
        let stage1 = parallel_with(&[
            (extend_depth(&coarse, d1, &Pad::lower(0.0, 1))?, Pad::lower(0.0, 1)),
            (relu_x, Pad::lower(0.0, 1)),
        ])?;
        // stage two: (p, s) -> p/M + fine(s - p/M)/(ML)
        let fine_in = map_input(&fine, Layer::from_rows(2, vec![Row::new(vec![(0, -1.0 / mf), (1, 1.0)], 0.0)])?)?;
        let carry_p = ReluNet::new(2, vec![Layer::from_rows(2, vec![Row::single(0, 1.0, 0.0)])?, Layer::identity(1)])?;
        let d2 = fine_in.depth().max(1);
        let stage2 = parallel_with(&[
            (extend_depth(&fine_in, d2, &Pad::lower(0.0, 1))?, Pad::lower(0.0, 1)),
            (carry_p, Pad::lower(0.0, 1)),
        ])?;
        let stage2 =
            map_output(&stage2, Layer::from_rows(2, vec![Row::new(vec![(0, 1.0 / (mf * lf)), (1, 1.0 / mf)], 0.0)])?)?;
        compose_merged(&stage2, &stage1)?
    };
    let lip = 2.0 * depth as f64 / (kf * kf * delta * delta);
    Ok(net.with_meta(NetMeta::new("discretizer", 4 * width + 3, 4 * depth, Some(lip))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_values() {
        assert_eq!(grid_size(6, 2, 1), 144);
        assert_eq!(grid_size(6, 2, 2), 12);
        assert_eq!(grid_size(6, 2, 3), 5); // 5^3 = 125 ≤ 144 < 216
        assert_eq!(grid_size(8, 2, 3), 6); // 6^3 = 216 ≤ 256 < 343
    }

    fn check_plateaus(width: usize, depth: usize, dim: usize) {
        let k = grid_size(width, depth, dim);
        let delta = 1.0 / (3.0 * k as f64);
        let net = discretizer(width, depth, dim, delta).unwrap();
        assert!(net.within_claims(), "{}x{}", net.width(), net.depth());
        for j in 0..k {
            let lo = j as f64 / k as f64;
            let hi = (j + 1) as f64 / k as f64 - if j + 1 < k { delta } else { 0.0 };
            for s in 0..=10 {
                let x = lo + (hi - lo) * s as f64 / 10.0;
                let v = net.eval_scalar(&[x]);
                assert!((v - lo).abs() < 1e-9, "W={width} L={depth} d={dim} x={x}: {v} vs {lo}");
            }
        }
    }

    #[test]
    fn plateaus_one_dimensional() {
        check_plateaus(2, 1, 1);
        check_plateaus(3, 2, 1);
        check_plateaus(6, 2, 1);
    }

    #[test]
    fn plateaus_higher_dimensional() {
        check_plateaus(6, 2, 2);
        check_plateaus(8, 2, 2);
        check_plateaus(6, 3, 3);
    }

    #[test]
    fn rejects_large_delta() {
        assert!(discretizer(6, 2, 2, 0.1).is_err());
    }
}
