//! ReLU networks stored as explicit affine layers.
//!
//! A network with layers `T_0, ..., T_k` evaluates
//! `T_k(σ(T_{k-1}(... σ(T_0(x)))))`: the activation is applied between layers
//! and never after the last one. Depth counts the activated (hidden) layers and
//! width is the largest hidden layer; output rows do not count toward width.

mod combine;
mod format;
mod layer;

pub use combine::{
    clip_to_box, compose, compose_merged, extend_depth, lipschitz_upper, map_input, map_output, parallel,
    parallel_with, Pad,
};
pub use format::{from_json, to_json};
pub use layer::{Layer, Row};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("network has no layers")]
    Empty,
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape { context: String, expected: usize, found: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid network document: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Claims attached to a construction, carried through serialization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetMeta {
    pub construction_tag: String,
    pub claimed_width: Option<usize>,
    pub claimed_depth: Option<usize>,
    pub claimed_lipschitz: Option<f64>,
}

impl NetMeta {
    pub fn new(tag: impl Into<String>, width: usize, depth: usize, lipschitz: Option<f64>) -> Self {
        Self {
            construction_tag: tag.into(),
            claimed_width: Some(width),
            claimed_depth: Some(depth),
            claimed_lipschitz: lipschitz,
        }
    }
}

/// Points per block in batched evaluation.
const EVAL_BLOCK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    input_dim: usize,
    layers: Vec<Layer>,
    pub meta: NetMeta,
}

impl ReluNet {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        let mut cols = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.cols() != cols {
                return Err(NetError::Shape { context: format!("layer {i} input"), expected: cols, found: l.cols() });
            }
            cols = l.rows();
        }
        Ok(Self { input_dim, layers, meta: NetMeta::default() })
    }

    /// A depth-0 network computing a single affine map.
    pub fn affine(layer: Layer) -> Self {
        Self { input_dim: layer.cols(), layers: vec![layer], meta: NetMeta::default() }
    }

    /// The constant map `R^input_dim -> R^values.len()`.
    pub fn constant(input_dim: usize, values: &[f64]) -> Self {
        let rows = values.iter().map(|&v| Row::constant(v)).collect();
        Self::affine(Layer::from_rows(input_dim, rows).expect("constant rows"))
    }

    pub fn with_meta(mut self, meta: NetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.rows()).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn width(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows()).max().unwrap_or(0)
    }

    /// Number of scalar parameters in the dense representation.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.rows() * (l.cols() + 1)).sum()
    }

    pub fn nnz(&self) -> usize {
        self.layers.iter().map(|l| l.nnz() + l.rows()).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        self.eval_into(x, &mut a, &mut b);
        a
    }

    /// Evaluates into `out`, using `scratch` as a work buffer.
    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        assert_eq!(x.len(), self.input_dim, "input dimension");
        self.layers[0].apply(x, out);
        for l in &self.layers[1..] {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            std::mem::swap(out, scratch);
            l.apply(scratch, out);
        }
    }

    /// Evaluates a scalar-output network at a point.
    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        self.eval(x)[0]
    }

    /// Evaluates many points given as a flat row-major array; returns the flat outputs.
    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        self.eval_blocked::<EVAL_BLOCK>(xs)
    }

    fn eval_blocked<const N: usize>(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.input_dim;
        let n = if d == 0 { 0 } else { xs.len() / d };
        let m = self.output_dim();
        let mut res = vec![0.0; n * m];
        let (mut a, mut b): (Vec<[f64; N]>, Vec<[f64; N]>) = (Vec::new(), Vec::new());
        for start in (0..n).step_by(N) {
            let lanes = N.min(n - start);
            // unused lanes of a short final block evaluate the origin and are discarded
            a.clear();
            a.resize(d, [0.0; N]);
            for j in 0..lanes {
                for c in 0..d {
                    a[c][j] = xs[(start + j) * d + c];
                }
            }
            let last = self.layers.len() - 1;
            for (i, layer) in self.layers.iter().enumerate() {
                layer.apply_block(&a, &mut b);
                if i < last {
                    b.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
                }
                std::mem::swap(&mut a, &mut b);
            }
            for j in 0..lanes {
                for c in 0..m {
                    res[(start + j) * m + c] = a[c][j];
                }
            }
        }
        res
    }

    /// Negates the output (exactly).
    pub fn negated(&self) -> Self {
        let mut layers = self.layers.clone();
        let last = layers.pop().unwrap();
        let rows = last
            .to_rows()
            .into_iter()
            .map(|r| Row::new(r.terms.into_iter().map(|(c, w)| (c, -w)).collect(), -r.bias))
            .collect();
        layers.push(Layer::from_rows(last.cols(), rows).unwrap());
        Self { input_dim: self.input_dim, layers, meta: self.meta.clone() }
    }

    /// Structural width and depth are within the claimed values (when claimed).
    pub fn within_claims(&self) -> bool {
        self.meta.claimed_width.is_none_or(|w| self.width() <= w)
            && self.meta.claimed_depth.is_none_or(|d| self.depth() <= d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_abs() -> ReluNet {
        let l0 = Layer::from_dense(2, 1, &[1.0, -1.0], vec![0.0, 0.0]).unwrap();
        let l1 = Layer::from_dense(1, 2, &[1.0, 1.0], vec![0.0]).unwrap();
        ReluNet::new(1, vec![l0, l1]).unwrap()
    }

    #[test]
    fn batched_evaluation_is_bitwise_pointwise() {
        let l0 = Layer::from_dense(3, 2, &[0.3, -1.1, 2.0, 0.7, -0.4, 0.9], vec![0.1, -0.2, 0.05]).unwrap();
        let l1 = Layer::from_dense(2, 3, &[1.0, -2.0, 0.5, 0.25, 3.0, -1.0], vec![0.0, 1.0]).unwrap();
        let net = ReluNet::new(2, vec![l0, l1]).unwrap();
        let xs: Vec<f64> = (0..2 * 150).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let batch = net.eval_many(&xs);
        for i in 0..150 {
            assert_eq!(&batch[2 * i..2 * i + 2], net.eval(&xs[2 * i..2 * i + 2]).as_slice());
        }
    }

    #[test]
    fn absolute_value_net() {
        let n = relu_abs();
        assert_eq!(n.depth(), 1);
        assert_eq!(n.width(), 2);
        assert_eq!(n.param_count(), 2 * 2 + 3);
        for x in [-2.5, 0.0, 1.25] {
            assert_eq!(n.eval_scalar(&[x]), x.abs());
        }
    }

    #[test]
    fn empty_layer_list_is_rejected() {
        assert!(matches!(ReluNet::new(1, vec![]), Err(NetError::Empty)));
    }

    #[test]
    fn shape_errors_are_reported() {
        let l = Layer::from_dense(1, 2, &[1.0, 1.0], vec![0.0]).unwrap();
        assert!(matches!(ReluNet::new(3, vec![l]), Err(NetError::Shape { .. })));
    }

    #[test]
    fn negation_is_exact() {
        let n = relu_abs();
        let m = n.negated();
        assert_eq!(m.eval_scalar(&[-0.3]), -0.3f64.abs());
    }
}
