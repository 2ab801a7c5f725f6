//! Composition, parallel stacking, depth padding and clipping.

use super::{Layer, NetError, ReluNet, Row};

/// How an output channel is carried through extra hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Pad {
    /// `t = σ(t) - σ(-t)`: two channels, exact for any sign.
    Split,
    /// `t = σ(t - c) + c` with one channel per output; valid when `t ≥ c`.
    Lower(Vec<f64>),
}

impl Pad {
    pub fn lower(c: f64, dim: usize) -> Self {
        Pad::Lower(vec![c; dim])
    }
}

/// Rows `[t_0, -t_0, t_1, -t_1, ...]` for the rows of `l`.
fn split_rows(l: &Layer) -> Vec<Row> {
    let mut rows = Vec::with_capacity(2 * l.rows());
    for r in l.to_rows() {
        let neg = Row::new(r.terms.iter().map(|&(c, w)| (c, -w)).collect(), -r.bias);
        rows.push(r);
        rows.push(neg);
    }
    rows
}

/// `outer ∘ inner` with an interposed split junction. The junction adds one
/// hidden layer of width `2 * inner.output_dim()`, and the result evaluates
/// bit-for-bit as `outer(inner(x))`.
pub fn compose(outer: &ReluNet, inner: &ReluNet) -> Result<ReluNet, NetError> {
    let m = inner.output_dim();
    if outer.input_dim() != m {
        return Err(NetError::Shape { context: "compose junction".into(), expected: outer.input_dim(), found: m });
    }
    let mut layers: Vec<Layer> = inner.layers().to_vec();
    let last = layers.pop().unwrap();
    layers.push(Layer::from_rows(last.cols(), split_rows(&last))?);
    let first = &outer.layers()[0];
    let rows = first
        .to_rows()
        .into_iter()
        .map(|r| {
            let mut terms = Vec::with_capacity(2 * r.terms.len());
            for (c, w) in r.terms {
                terms.push((2 * c, w));
                terms.push((2 * c + 1, -w));
            }
            Row::new(terms, r.bias)
        })
        .collect();
    layers.push(Layer::from_rows(2 * m, rows)?);
    layers.extend(outer.layers()[1..].iter().cloned());
    ReluNet::new(inner.input_dim(), layers)
}

/// `outer ∘ inner` with the junction affine maps fused into one layer.
/// Depth is the sum of the two depths; values agree up to rounding.
pub fn compose_merged(outer: &ReluNet, inner: &ReluNet) -> Result<ReluNet, NetError> {
    if outer.input_dim() != inner.output_dim() {
        return Err(NetError::Shape {
            context: "merged compose junction".into(),
            expected: outer.input_dim(),
            found: inner.output_dim(),
        });
    }
    let mut layers: Vec<Layer> = inner.layers().to_vec();
    let last = layers.pop().unwrap();
    layers.push(outer.layers()[0].after(&last)?);
    layers.extend(outer.layers()[1..].iter().cloned());
    ReluNet::new(inner.input_dim(), layers)
}

/// Precomposes an affine map on the input side.
pub fn map_input(net: &ReluNet, pre: Layer) -> Result<ReluNet, NetError> {
    compose_merged(net, &ReluNet::affine(pre))
}

/// Postcomposes an affine map on the output side.
pub fn map_output(net: &ReluNet, post: Layer) -> Result<ReluNet, NetError> {
    compose_merged(&ReluNet::affine(post), net)
}

/// Pads `net` with pass-through layers until its depth equals `target`.
pub fn extend_depth(net: &ReluNet, target: usize, pad: &Pad) -> Result<ReluNet, NetError> {
    let depth = net.depth();
    if depth >= target {
        return Ok(net.clone());
    }
    let extra = target - depth;
    let m = net.output_dim();
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let last = layers.pop().unwrap();
    match pad {
        Pad::Split => {
            layers.push(Layer::from_rows(last.cols(), split_rows(&last))?);
            for _ in 1..extra {
                layers.push(Layer::identity(2 * m));
            }
            let rows = (0..m).map(|j| Row::new(vec![(2 * j, 1.0), (2 * j + 1, -1.0)], 0.0)).collect();
            layers.push(Layer::from_rows(2 * m, rows)?);
        }
        Pad::Lower(c) => {
            if c.len() != m {
                return Err(NetError::Shape { context: "lower-bound padding".into(), expected: m, found: c.len() });
            }
            let rows = last.to_rows().into_iter().zip(c).map(|(r, &cj)| Row::new(r.terms, r.bias - cj)).collect();
            layers.push(Layer::from_rows(last.cols(), rows)?);
            for _ in 1..extra {
                layers.push(Layer::identity(m));
            }
            let rows = (0..m).map(|j| Row::single(j, 1.0, c[j])).collect();
            layers.push(Layer::from_rows(m, rows)?);
        }
    }
    ReluNet::new(net.input_dim(), layers)
}

/// Runs networks side by side on a shared input and concatenates their outputs.
/// Shorter networks are padded with exact split channels.
pub fn parallel(nets: &[ReluNet]) -> Result<ReluNet, NetError> {
    let items: Vec<(ReluNet, Pad)> = nets.iter().map(|n| (n.clone(), Pad::Split)).collect();
    parallel_with(&items)
}

/// Like [`parallel`], with an explicit padding rule for each network.
pub fn parallel_with(items: &[(ReluNet, Pad)]) -> Result<ReluNet, NetError> {
    let first = items.first().ok_or(NetError::Empty)?;
    let d = first.0.input_dim();
    let depth = items.iter().map(|(n, _)| n.depth()).max().unwrap();
    let mut padded = Vec::with_capacity(items.len());
    for (n, p) in items {
        if n.input_dim() != d {
            return Err(NetError::Shape { context: "parallel inputs".into(), expected: d, found: n.input_dim() });
        }
        padded.push(extend_depth(n, depth, p)?);
    }
    let mut layers = Vec::with_capacity(depth + 1);
    let firsts: Vec<&Layer> = padded.iter().map(|n| &n.layers()[0]).collect();
    layers.push(Layer::stack(&firsts)?);
    for k in 1..=depth {
        let parts: Vec<&Layer> = padded.iter().map(|n| &n.layers()[k]).collect();
        layers.push(Layer::block_diag(&parts));
    }
    ReluNet::new(d, layers)
}

/// Appends one hidden layer that clamps every output into `[lo_j, hi_j]`
/// via `σ(t - lo) - σ(t - hi) + lo`.
pub fn clip_to_box(net: &ReluNet, lo: &[f64], hi: &[f64]) -> Result<ReluNet, NetError> {
    let m = net.output_dim();
    if lo.len() != m || hi.len() != m {
        return Err(NetError::Shape { context: "clip bounds".into(), expected: m, found: lo.len().min(hi.len()) });
    }
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let last = layers.pop().unwrap();
    let mut rows = Vec::with_capacity(2 * m);
    for (j, r) in last.to_rows().into_iter().enumerate() {
        rows.push(Row::new(r.terms.clone(), r.bias - lo[j]));
        rows.push(Row::new(r.terms, r.bias - hi[j]));
    }
    layers.push(Layer::from_rows(last.cols(), rows)?);
    let out = (0..m).map(|j| Row::new(vec![(2 * j, 1.0), (2 * j + 1, -1.0)], lo[j])).collect();
    layers.push(Layer::from_rows(2 * m, out)?);
    ReluNet::new(net.input_dim(), layers)
}

/// Product of layer spectral norms, each computed to `1e-8` relative tolerance.
pub fn lipschitz_upper(net: &ReluNet) -> f64 {
    net.layers().iter().map(|l| l.spectral_norm(1e-8)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(depth: usize, seed: u64) -> ReluNet {
        // deterministic small net R^2 -> R^2 with the requested depth
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let mut layers = Vec::new();
        let mut cols = 2;
        for k in 0..=depth {
            let rows = if k == depth { 2 } else { 3 };
            let w: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
            let b: Vec<f64> = (0..rows).map(|_| next()).collect();
            layers.push(Layer::from_dense(rows, cols, &w, b).unwrap());
            cols = rows;
        }
        ReluNet::new(2, layers).unwrap()
    }

    #[test]
    fn split_compose_is_bit_identical() {
        let inner = tiny(2, 1);
        let outer = tiny(3, 2);
        let c = compose(&outer, &inner).unwrap();
        assert_eq!(c.depth(), 6);
        for x in [[0.3, -0.2], [-1.0, 2.0], [0.0, 0.0]] {
            assert_eq!(c.eval(&x), outer.eval(&inner.eval(&x)));
        }
    }

    #[test]
    fn merged_compose_adds_depths() {
        let inner = tiny(2, 3);
        let outer = tiny(3, 4);
        let c = compose_merged(&outer, &inner).unwrap();
        assert_eq!(c.depth(), 5);
        let x = [0.4, 0.9];
        let (a, b) = (c.eval(&x), outer.eval(&inner.eval(&x)));
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_pads_to_common_depth() {
        let a = tiny(1, 5);
        let b = tiny(4, 6);
        let p = parallel(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.depth(), 4);
        assert_eq!(p.output_dim(), 4);
        let x = [0.1, -0.6];
        let y = p.eval(&x);
        assert_eq!(&y[..2], a.eval(&x).as_slice());
        assert_eq!(&y[2..], b.eval(&x).as_slice());
    }

    #[test]
    fn lower_padding_within_tolerance() {
        let a = tiny(0, 7);
        let e = extend_depth(&a, 3, &Pad::lower(-10.0, 2)).unwrap();
        assert_eq!(e.depth(), 3);
        assert_eq!(e.width(), 2);
        let x = [0.5, 0.5];
        for (u, v) in e.eval(&x).iter().zip(a.eval(&x)) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_adds_one_layer_and_clamps() {
        let a = tiny(1, 8);
        let c = clip_to_box(&a, &[-0.01, -0.01], &[0.01, 0.01]).unwrap();
        assert_eq!(c.depth(), 2);
        for x in [[3.0, -2.0], [0.1, 0.2]] {
            let (u, v) = (c.eval(&x), a.eval(&x));
            for j in 0..2 {
                assert!((u[j] - v[j].clamp(-0.01, 0.01)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lipschitz_upper_dominates_finite_differences() {
        let a = tiny(3, 9);
        let lip = lipschitz_upper(&a);
        let (x, y) = ([0.2, 0.1], [0.2 + 1e-4, 0.1 - 2e-4]);
        let (u, v) = (a.eval(&x), a.eval(&y));
        let num = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
        let den = (1e-8f64 + 4e-8).sqrt();
        assert!(num / den <= lip * (1.0 + 1e-6));
    }
}
