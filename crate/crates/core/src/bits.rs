//! Bit extraction and exact fitting of values at integer points.

use crate::error::{require, BuildError};
use crate::interp::{linear_interpolator, Knots};
use crate::netcore::{compose_merged, map_input, map_output, parallel_with, Layer, NetMeta, Pad, ReluNet, Row};

/// Largest bit count accepted by [`bit_extractor`]; the extractor's modulus
/// grows like `2^{L²}`.
pub const MAX_EXTRACT_BITS: usize = 10;

/// One step `(t1, t2, t3) -> (y1, y2, y3)` of the extraction recursion, as a
/// width-8, depth-2 network. With `t1 = 0.b_j...b_L`, `t2` the partial output
/// and `t3 = l - j + 1`, it yields `y1 = 0.b_{j+1}...b_L`,
/// `y2 = t2 + [l = j]·b_j` and `y3 = max(t3 - 1, -L)`.
fn extraction_step(bits: usize) -> Result<ReluNet, BuildError> {
    let two_l = (1u64 << bits) as f64;
    let half = two_l / 2.0;
    let lf = bits as f64;
    // hidden 1: σ(t1), a, b, σ(t2), σ(t3), σ(t3-2), σ(t3-1), σ(t3-1+L)
    let h1 = Layer::from_rows(
        3,
        vec![
            Row::single(0, 1.0, 0.0),
            Row::single(0, two_l, -half + 1.0),
            Row::single(0, two_l, -half),
            Row::single(1, 1.0, 0.0),
            Row::single(2, 1.0, 0.0),
            Row::single(2, 1.0, -2.0),
            Row::single(2, 1.0, -1.0),
            Row::single(2, 1.0, lf - 1.0),
        ],
    )?;
    // hidden 2: y1, σ(t2), σ(δ + T - 1), σ(t3-1+L); T = a - b
    let h2 = Layer::from_rows(
        8,
        vec![
            Row::new(vec![(0, 2.0), (1, -1.0), (2, 1.0)], 0.0),
            Row::single(3, 1.0, 0.0),
            Row::new(vec![(4, 1.0), (5, 1.0), (6, -2.0), (1, 1.0), (2, -1.0)], -1.0),
            Row::single(7, 1.0, 0.0),
        ],
    )?;
    let out = Layer::from_rows(
        4,
        vec![Row::single(0, 1.0, 0.0), Row::new(vec![(1, 1.0), (2, 1.0)], 0.0), Row::single(3, 1.0, -lf)],
    )?;
    Ok(ReluNet::new(3, vec![h1, h2, out])?)
}

/// Network `(x, l) -> b_l` for `x = 0.b_1...b_L` (binary) and `l ∈ {1, ..., L}`.
/// Width 8, depth `2L`.
pub fn bit_extractor(bits: usize) -> Result<ReluNet, BuildError> {
    require((1..=MAX_EXTRACT_BITS).contains(&bits), || format!("bit count {bits} outside 1..={MAX_EXTRACT_BITS}"))?;
    let step = extraction_step(bits)?;
    // (x, l) -> (x, 0, l)
    let lift = Layer::from_rows(2, vec![Row::single(0, 1.0, 0.0), Row::constant(0.0), Row::single(1, 1.0, 0.0)])?;
    let mut net = map_input(&step, lift)?;
    for _ in 1..bits {
        net = compose_merged(&step, &net)?;
    }
    let net = map_output(&net, Layer::from_rows(3, vec![Row::single(1, 1.0, 0.0)])?)?;
    let lip = 2.0 * 2f64.powi((bits * bits) as i32) + bits as f64;
    Ok(net.with_meta(NetMeta::new("bit_extractor", 8, 2 * bits, Some(lip))))
}

/// Network with `φ(mL + l) = bits[mL + l]` for every index below `W²L²`.
/// Width at most `8W+4`, depth at most `4L`. Missing trailing bits count as 0.
pub fn binary_fitter(bits: &[u8], width: usize, depth: usize) -> Result<ReluNet, BuildError> {
    require(width >= 2 && depth >= 2, || format!("need W ≥ 2 and L ≥ 2, got ({width}, {depth})"))?;
    require(depth <= MAX_EXTRACT_BITS, || format!("L = {depth} exceeds {MAX_EXTRACT_BITS}"))?;
    let m = width * width * depth;
    require(bits.len() <= m * depth, || format!("{} bits exceed W²L² = {}", bits.len(), m * depth))?;
    require(bits.iter().all(|&b| b <= 1), || "bits must be 0 or 1".into())?;
    let bit = |i: usize| bits.get(i).copied().unwrap_or(0) as f64;
    // y_m = 0.b_{m,0}...b_{m,L-1}; y_M = 1
    let y: Vec<f64> = (0..=m)
        .map(|mm| if mm == m { 1.0 } else { (0..depth).map(|l| bit(mm * depth + l) * 0.5f64.powi(l as i32 + 1)).sum() })
        .collect();
    let lf = depth as f64;
    let (mut x, mut v1, mut v2) = (Vec::new(), Vec::new(), Vec::new());
    for mm in 0..=m {
        if mm > 0 {
            x.push((mm * depth - 1) as f64);
            v1.push(y[mm - 1]);
            v2.push(lf - 1.0);
        }
        x.push((mm * depth) as f64);
        v1.push(y[mm]);
        v2.push(0.0);
    }
    let coarse = linear_interpolator(&Knots::scalar(x.clone(), v1), 4 * width, depth)?;
    let index = linear_interpolator(&Knots::scalar(x, v2), 4 * width, depth)?;
    let both = parallel_with(&[(coarse, Pad::lower(0.0, 1)), (index, Pad::lower(0.0, 1))])?;
    let both = map_output(&both, Layer::from_rows(2, vec![Row::single(0, 1.0, 0.0), Row::single(1, 1.0, 1.0)])?)?;
    let net = compose_merged(&bit_extractor(depth)?, &both)?;
    let lip = 2.0 * 2f64.powi((depth * depth) as i32) + lf * lf;
    Ok(net.with_meta(NetMeta::new("binary_fitter", 8 * width + 4, 4 * depth, Some(lip))))
}

/// Smallest `J` with `2^J ≥ (WL)^{2s}`.
pub fn fitter_bits(width: usize, depth: usize, precision: usize) -> usize {
    let target = ((width * depth) as f64).powi(2 * precision as i32);
    let mut j = 0usize;
    while 2f64.powi(j as i32) < target {
        j += 1;
    }
    j
}

fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n.max(1) - 1).leading_zeros()) as usize
}

/// Network with `|φ(i) - values[i]| ≤ (WL)^{-2s}` at every index `i < W²L²`
/// and range in `[0, 1]`. Width at most `8s(2W+1)⌈log₂ 2W⌉ + 2`, depth at most
/// `4L⌈log₂ 2L⌉ + 1`.
pub fn value_fitter(values: &[f64], width: usize, depth: usize, precision: usize) -> Result<ReluNet, BuildError> {
    require(precision >= 1, || "precision s must be at least 1".into())?;
    require(values.iter().all(|v| (0.0..=1.0).contains(v)), || "values must lie in [0, 1]".into())?;
    let j_bits = fitter_bits(width, depth, precision);
    let per_stage = 2 * precision * ceil_log2(2 * width);
    let stages = j_bits.div_ceil(per_stage);
    require(stages <= ceil_log2(2 * depth).max(1), || format!("{j_bits} bits do not fit {stages} stages"))?;
    let scale = 2f64.powi(j_bits as i32);
    let codes: Vec<u64> = values.iter().map(|&v| ((v * scale).floor() as u64).min((1u64 << j_bits) - 1)).collect();
    let mut fitters = Vec::with_capacity(j_bits);
    for j in 0..j_bits {
        let bits: Vec<u8> = codes.iter().map(|c| ((c >> (j_bits - 1 - j)) & 1) as u8).collect();
        fitters.push(binary_fitter(&bits, width, depth)?);
    }
    let mut net: Option<ReluNet> = None;
    let mut next = 0;
    for stage in 0..stages {
        let first = stage == 0;
        let in_dim = if first { 1 } else { 2 };
        let chunk = &fitters[next..(next + per_stage).min(j_bits)];
        let mut items = Vec::new();
        for f in chunk {
            let g = if first { f.clone() } else { map_input(f, Layer::from_rows(2, vec![Row::single(0, 1.0, 0.0)])?)? };
            items.push((g, Pad::lower(0.0, 1)));
        }
        // carry σ(t) and, after the first stage, the partial sum
        let carries = if first { 1 } else { 2 };
        for c in 0..carries {
            let carry = ReluNet::new(
                in_dim,
                vec![Layer::from_rows(in_dim, vec![Row::single(c, 1.0, 0.0)])?, Layer::identity(1)],
            )?;
            items.push((carry, Pad::lower(0.0, 1)));
        }
        let body = parallel_with(&items)?;
        let k = chunk.len();
        let mut sum = Row::new((0..k).map(|i| (i, 0.5f64.powi((next + i) as i32 + 1))).collect(), 0.0);
        if !first {
            sum.terms.push((k + 1, 1.0));
        }
        let body = map_output(&body, Layer::from_rows(k + carries, vec![Row::single(k, 1.0, 0.0), sum])?)?;
        net = Some(match net {
            None => body,
            Some(prev) => compose_merged(&body, &prev)?,
        });
        next += k;
    }
    let net = net.expect("at least one stage");
    let net = map_output(&net, Layer::from_rows(2, vec![Row::single(1, 1.0, 0.0)])?)?;
    let net = crate::netcore::clip_to_box(&net, &[0.0], &[1.0])?;
    let l = depth as f64;
    let claimed_width = 8 * precision * (2 * width + 1) * ceil_log2(2 * width) + 2;
    let claimed_depth = 4 * depth * ceil_log2(2 * depth) + 1;
    let lip = 4.0 * 2f64.powi((depth * depth) as i32) + 2.0 * l * l;
    Ok(net.with_meta(NetMeta::new("value_fitter", claimed_width, claimed_depth, Some(lip))))
}
