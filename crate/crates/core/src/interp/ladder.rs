//! Width-bounded realization of continuous piecewise-linear maps `R -> R^d`.
//!
//! The input is first clamped, `u = σ(x - x_0) - σ(x - x_last)`, so the
//! target becomes `y_0 + s_0 u + Σ_i c_i σ(u - t_i)` with one kink vector
//! `c_i` per interior knot. Kinks are packed into blocks of two hidden layers.
//!
//! Inside a block the kinks are split into consecutive groups separated by a
//! pair of connector points `p < q` placed in the gap between neighbouring
//! groups. The first layer of a block computes `σ(u - p)`, `σ(u - q)` for every
//! connector. A second-layer neuron `σ(z(u))` is built from a function `z` that
//! is affine on each group, crosses zero at most once per group (at an assigned
//! kink, with slope of magnitude `|c|`), keeps one sign across every connector
//! span, and bends only at connector points. Its crossings therefore
//! reproduce the assigned kinks exactly, and its remaining bends sit at
//! connector points, where a single correction term absorbs them.
//!
//! Each output coordinate keeps one running-sum channel. The channel is
//! shifted by a constant computed from the exact minimum of the partial sum
//! over the clamped range, so a single ReLU carries it.

use crate::error::{require, BuildError};
use crate::netcore::{Layer, ReluNet, Row};

use super::Knots;

struct Kink {
    t: f64,
    c: Vec<f64>,
}

/// A second-layer neuron `σ(α + β u + Σ_k γ_k σ(u - P_k))` feeding output `coord` with weight `w`.
struct Crossing {
    coord: usize,
    w: f64,
    alpha: f64,
    beta: f64,
    gamma: Vec<f64>,
    /// value of `z` at each connector point
    at_conn: Vec<f64>,
}

struct Block {
    conn: Vec<f64>,
    neurons: Vec<Crossing>,
    kinks: std::ops::Range<usize>,
    /// correction `e0 + e1 u + Σ_k eps_k σ(u - P_k)` per coordinate
    e0: Vec<f64>,
    e1: Vec<f64>,
    eps: Vec<Vec<f64>>,
}

/// `c0 + c1 u + Σ c σ(u - t)` restricted to `[0, span]`.
struct KinkSum {
    c0: f64,
    c1: f64,
    kinks: Vec<(f64, f64)>,
}

impl KinkSum {
    /// (minimum, maximum absolute value) over `[0, span]`.
    fn range(mut self, span: f64) -> (f64, f64) {
        self.kinks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (mut u, mut v, mut slope) = (0.0, self.c0, self.c1);
        let (mut lo, mut big) = (v, v.abs());
        for (t, c) in self.kinks {
            let t = t.clamp(0.0, span);
            v += slope * (t - u);
            u = t;
            slope += c;
            lo = lo.min(v);
            big = big.max(v.abs());
        }
        v += slope * (span - u);
        (lo.min(v), big.max(v.abs()))
    }
}

fn shift_for(sum: KinkSum, span: f64) -> f64 {
    let (lo, big) = sum.range(span);
    (-lo).max(0.0) + 1e-6 * (1.0 + big)
}

pub(super) fn build(knots: &Knots, width: usize, max_blocks: usize) -> Result<ReluNet, BuildError> {
    let n = knots.len();
    let d = knots.dim;
    if n == 1 || (1..n).all(|i| knots.value(i) == knots.value(0)) {
        return Ok(ReluNet::constant(1, knots.value(0)));
    }
    let x0 = knots.x[0];
    let xl = knots.x[n - 1];
    let span = xl - x0;
    let slope = |i: usize| -> Vec<f64> {
        let h = knots.x[i + 1] - knots.x[i];
        (0..d).map(|r| (knots.value(i + 1)[r] - knots.value(i)[r]) / h).collect()
    };
    let s0 = slope(0);
    let mut kinks = Vec::new();
    let mut prev = s0.clone();
    for i in 1..n - 1 {
        let s = slope(i);
        let c: Vec<f64> = (0..d).map(|r| s[r] - prev[r]).collect();
        if c.iter().any(|&v| v != 0.0) {
            kinks.push(Kink { t: knots.x[i] - x0, c });
        }
        prev = s;
    }

    let per_sign = (width.saturating_sub(d + 1)) / (2 * d);
    let max_groups = (width + 1).saturating_sub(d) / 2;
    require(per_sign >= 1 && max_groups >= 1, || format!("width {width} too small for dimension {d}"))?;

    // greedy grouping: a group closes when one (coordinate, sign) class is full
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    let mut count = vec![[0usize; 2]; d];
    for (i, k) in kinks.iter().enumerate() {
        let fits = k.c.iter().enumerate().all(|(r, &v)| v == 0.0 || count[r][(v < 0.0) as usize] < per_sign);
        if !fits {
            // split one kink earlier when that gap is wider: connector slopes scale with 1/gap
            let gap = |j: usize| kinks[j].t - kinks[j - 1].t;
            let cut = if i >= start + 2 && gap(i - 1) > gap(i) { i - 1 } else { i };
            groups.push(start..cut);
            start = cut;
            count.iter_mut().for_each(|c| *c = [0, 0]);
            for k in &kinks[cut..i] {
                for (r, &v) in k.c.iter().enumerate() {
                    if v != 0.0 {
                        count[r][(v < 0.0) as usize] += 1;
                    }
                }
            }
        }
        for (r, &v) in k.c.iter().enumerate() {
            if v != 0.0 {
                count[r][(v < 0.0) as usize] += 1;
            }
        }
    }
    if start < kinks.len() {
        groups.push(start..kinks.len());
    }
    let n_blocks = groups.len().div_ceil(max_groups);
    if n_blocks > max_blocks {
        return Err(BuildError::Capacity { needed: kinks.len(), available: max_blocks * max_groups * per_sign });
    }

    let blocks: Vec<Block> = groups.chunks(max_groups).map(|gs| make_block(&kinks, gs, d)).collect::<Result<_, _>>()?;

    // shifts that keep each running sum nonnegative on [0, span]
    let mut before = Vec::with_capacity(blocks.len()); // shift of S at the first layer of block b
    let mut after = Vec::with_capacity(blocks.len()); // shift of S + E_b at the second layer of block b
    for (b, blk) in blocks.iter().enumerate() {
        let earlier = &kinks[..blk.kinks.start];
        let mut sb = Vec::with_capacity(d);
        let mut sa = Vec::with_capacity(d);
        for r in 0..d {
            let prior: Vec<(f64, f64)> = earlier.iter().map(|k| (k.t, k.c[r])).collect();
            sb.push(if b == 0 { 0.0 } else { shift_for(KinkSum { c0: 0.0, c1: 0.0, kinks: prior.clone() }, span) });
            let mut all = prior;
            all.extend(blk.conn.iter().zip(&blk.eps[r]).map(|(&p, &e)| (p, e)));
            sa.push(shift_for(KinkSum { c0: blk.e0[r], c1: blk.e1[r], kinks: all }, span));
        }
        before.push(sb);
        after.push(sa);
    }

    let mut layers = Vec::new();
    if blocks.is_empty() {
        layers.push(Layer::from_rows(1, vec![Row::single(0, 1.0, -x0), Row::single(0, 1.0, -xl)])?);
        let out = (0..d).map(|r| Row::new(vec![(0, s0[r]), (1, -s0[r])], knots.value(0)[r])).collect();
        layers.push(Layer::from_rows(2, out)?);
        return Ok(ReluNet::new(1, layers)?);
    }

    // Linear expressions over the columns of the previous layer.
    // `u`, `σ(u - P_k)` and the running sums, as seen by the layer being built.
    for (b, blk) in blocks.iter().enumerate() {
        let nc = blk.conn.len();
        // ---- first layer of block b
        let (cols, rows) = if b == 0 {
            let mut rows = vec![Row::single(0, 1.0, -x0), Row::single(0, 1.0, -xl)];
            rows.extend(blk.conn.iter().map(|&p| Row::single(0, 1.0, -x0 - p)));
            (1, rows)
        } else {
            let prev = &blocks[b - 1];
            let np = prev.neurons.len();
            let mut rows = vec![Row::single(0, 1.0, 0.0)];
            rows.extend(blk.conn.iter().map(|&p| Row::single(0, 1.0, -p)));
            for r in 0..d {
                let mut terms = vec![(1 + np + r, 1.0)];
                for (j, nr) in prev.neurons.iter().enumerate() {
                    if nr.coord == r {
                        terms.push((1 + j, nr.w));
                    }
                }
                rows.push(Row::new(terms, before[b][r] - after[b - 1][r]));
            }
            (1 + np + d, rows)
        };
        layers.push(Layer::from_rows(cols, rows)?);

        // ---- second layer of block b
        // column layout of the first layer: b == 0 -> [a, bb, raw_k...]; else [u, conn_k..., S_r...]
        let u_terms = |scale: f64| -> Vec<(usize, f64)> {
            if b == 0 {
                vec![(0, scale), (1, -scale)]
            } else {
                vec![(0, scale)]
            }
        };
        let conn_terms = |k: usize, scale: f64| -> Vec<(usize, f64)> {
            if b == 0 {
                vec![(2 + k, scale), (1, -scale)]
            } else {
                vec![(1 + k, scale)]
            }
        };
        let cols = if b == 0 { 2 + nc } else { 1 + nc + d };
        let mut rows = vec![Row::new(u_terms(1.0), 0.0)];
        for nr in &blk.neurons {
            let mut terms = u_terms(nr.beta);
            for (k, &g) in nr.gamma.iter().enumerate() {
                if g != 0.0 {
                    terms.extend(conn_terms(k, g));
                }
            }
            rows.push(Row::new(terms, nr.alpha));
        }
        for r in 0..d {
            let mut terms = u_terms(blk.e1[r]);
            for (k, &e) in blk.eps[r].iter().enumerate() {
                if e != 0.0 {
                    terms.extend(conn_terms(k, e));
                }
            }
            let mut bias = blk.e0[r] + after[b][r];
            if b > 0 {
                terms.push((1 + nc + r, 1.0));
                bias -= before[b][r];
            }
            rows.push(Row::new(terms, bias));
        }
        layers.push(Layer::from_rows(cols, rows)?);
    }

    let last = blocks.last().unwrap();
    let nl = last.neurons.len();
    let shift = after.last().unwrap();
    let out = (0..d)
        .map(|r| {
            let mut terms = vec![(0, s0[r]), (1 + nl + r, 1.0)];
            for (j, nr) in last.neurons.iter().enumerate() {
                if nr.coord == r {
                    terms.push((1 + j, nr.w));
                }
            }
            Row::new(terms, knots.value(0)[r] - shift[r])
        })
        .collect();
    layers.push(Layer::from_rows(1 + nl + d, out)?);
    Ok(ReluNet::new(1, layers)?)
}

fn make_block(kinks: &[Kink], groups: &[std::ops::Range<usize>], d: usize) -> Result<Block, BuildError> {
    let mut conn = Vec::with_capacity(2 * groups.len());
    for w in groups.windows(2) {
        let (a, b) = (kinks[w[0].end - 1].t, kinks[w[1].start].t);
        let (p, q) = (a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0);
        require(a < p && p < q && q < b, || format!("knots at {a} and {b} are too close to separate"))?;
        conn.push(p);
        conn.push(q);
    }
    let mut neurons = Vec::new();
    for r in 0..d {
        for (sign_idx, w) in [(0usize, 1.0f64), (1, -1.0)] {
            // per group, the kinks of this (coordinate, sign) class in order
            let classes: Vec<Vec<(f64, f64)>> = groups
                .iter()
                .map(|g| {
                    kinks[g.clone()]
                        .iter()
                        .filter(|k| k.c[r] != 0.0 && ((k.c[r] < 0.0) as usize) == sign_idx)
                        .map(|k| (k.t, k.c[r].abs()))
                        .collect()
                })
                .collect();
            let count = classes.iter().map(|c| c.len()).max().unwrap_or(0);
            for j in 0..count {
                neurons.push(crossing(r, w, &classes.iter().map(|c| c.get(j).copied()).collect::<Vec<_>>(), &conn));
            }
        }
    }
    let nc = conn.len();
    let mut e0 = vec![0.0; d];
    let mut e1 = vec![0.0; d];
    let mut eps = vec![vec![0.0; nc]; d];
    for nr in &neurons {
        if nr.alpha > 0.0 {
            e0[nr.coord] -= nr.w * nr.alpha;
            e1[nr.coord] -= nr.w * nr.beta;
        }
        for k in 0..nc {
            if nr.at_conn[k] > 0.0 {
                eps[nr.coord][k] -= nr.w * nr.gamma[k];
            }
        }
    }
    let kinks_range = groups.first().unwrap().start..groups.last().unwrap().end;
    Ok(Block { conn, neurons, kinks: kinks_range, e0, e1, eps })
}

/// Builds `z` from per-group assignments `(t, |c|)` (or `None`) and the connector points.
fn crossing(coord: usize, w: f64, assigned: &[Option<(f64, f64)>], conn: &[f64]) -> Crossing {
    // lines a u + b per group with alternating orientation so connectors keep one sign
    let mut lines = Vec::with_capacity(assigned.len());
    let mut s = 1.0;
    for (g, a) in assigned.iter().enumerate() {
        if g > 0 && a.is_some() {
            s = -s;
        }
        lines.push(match a {
            Some((t, m)) => (s * m, -s * m * t),
            None => (0.0, s),
        });
    }
    let at = |g: usize, u: f64| lines[g].0 * u + lines[g].1;
    let mut gamma = Vec::with_capacity(conn.len());
    let mut at_conn = Vec::with_capacity(conn.len());
    for g in 0..assigned.len() - 1 {
        let (p, q) = (conn[2 * g], conn[2 * g + 1]);
        let (vp, vq) = (at(g, p), at(g + 1, q));
        let m = (vq - vp) / (q - p);
        gamma.push(m - lines[g].0);
        gamma.push(lines[g + 1].0 - m);
        at_conn.push(vp);
        at_conn.push(vq);
    }
    Crossing { coord, w, alpha: lines[0].1, beta: lines[0].0, gamma, at_conn }
}
