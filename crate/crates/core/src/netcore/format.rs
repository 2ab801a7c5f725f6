//! JSON document format for networks.
//!
//! ```json
//! {"version":1,"input_dim":2,
//!  "layers":[{"rows":1,"cols":2,"weights":[1.0,-1.0],"bias":[0.0]}],
//!  "metadata":{"construction_tag":"...","claimed_width":0,"claimed_depth":0,
//!              "claimed_lipschitz":"none"}}
//! ```
//!
//! Weights are row-major. Reals are written as shortest round-trip decimals,
//! so a write/read cycle reproduces every weight bit-for-bit.

use serde::{Deserialize, Serialize};

use super::{Layer, NetError, NetMeta, ReluNet};

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetDoc {
    version: u32,
    input_dim: usize,
    layers: Vec<LayerDoc>,
    metadata: MetaDoc,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MetaDoc {
    construction_tag: String,
    claimed_width: usize,
    claimed_depth: usize,
    claimed_lipschitz: Lipschitz,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Lipschitz {
    Value(f64),
    Label(String),
}

pub fn to_json(net: &ReluNet) -> String {
    let doc = NetDoc {
        version: VERSION,
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDoc { rows: l.rows(), cols: l.cols(), weights: l.to_dense(), bias: l.bias().to_vec() })
            .collect(),
        metadata: MetaDoc {
            construction_tag: net.meta.construction_tag.clone(),
            claimed_width: net.meta.claimed_width.unwrap_or(net.width()),
            claimed_depth: net.meta.claimed_depth.unwrap_or(net.depth()),
            claimed_lipschitz: match net.meta.claimed_lipschitz {
                Some(v) if v.is_finite() => Lipschitz::Value(v),
                _ => Lipschitz::Label("none".into()),
            },
        },
    };
    serde_json::to_string(&doc).expect("network documents always serialize")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

pub fn from_json(text: &str) -> Result<ReluNet, NetError> {
    let doc: NetDoc = serde_json::from_str(text)
        .map_err(|e| NetError::Parse { offset: byte_offset(text, e.line(), e.column()), message: e.to_string() })?;
    if doc.version != VERSION {
        return Err(NetError::Format(format!("unsupported version {}", doc.version)));
    }
    if doc.layers.is_empty() {
        return Err(NetError::Empty);
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for l in doc.layers {
        if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
            return Err(NetError::Format("non-finite weight".into()));
        }
        layers.push(Layer::from_dense(l.rows, l.cols, &l.weights, l.bias)?);
    }
    let claimed_lipschitz = match doc.metadata.claimed_lipschitz {
        Lipschitz::Value(v) => Some(v),
        Lipschitz::Label(s) if s == "none" => None,
        Lipschitz::Label(s) => {
            return Err(NetError::Format(format!("claimed_lipschitz must be a number or \"none\", got {s:?}")))
        }
    };
    let meta = NetMeta {
        construction_tag: doc.metadata.construction_tag,
        claimed_width: Some(doc.metadata.claimed_width),
        claimed_depth: Some(doc.metadata.claimed_depth),
        claimed_lipschitz,
    };
    Ok(ReluNet::new(doc.input_dim, layers)?.with_meta(meta))
}

impl ReluNet {
    pub fn save(&self, path: &std::path::Path) -> Result<(), NetError> {
        std::fs::write(path, to_json(self))?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NetError> {
        from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReluNet {
        let l0 = Layer::from_dense(2, 1, &[0.1, -1.0 / 3.0], vec![1e-300, 0.7]).unwrap();
        let l1 = Layer::from_dense(1, 2, &[std::f64::consts::PI, 1.0], vec![-2.5]).unwrap();
        ReluNet::new(1, vec![l0, l1]).unwrap().with_meta(NetMeta::new("sample", 2, 1, Some(3.5)))
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let n = sample();
        let back = from_json(&to_json(&n)).unwrap();
        assert_eq!(back.layers(), n.layers());
        assert_eq!(back.meta, n.meta);
        for x in [-1.0, 0.123456789, 4.0] {
            assert_eq!(back.eval(&[x])[0].to_bits(), n.eval(&[x])[0].to_bits());
        }
    }

    #[test]
    fn lipschitz_none_round_trips() {
        let mut n = sample();
        n.meta.claimed_lipschitz = None;
        let text = to_json(&n);
        assert!(text.contains("\"none\""));
        assert_eq!(from_json(&text).unwrap().meta.claimed_lipschitz, None);
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let text = "{\"version\":1,\n\"input_dim\": x}";
        match from_json(text) {
            Err(NetError::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_layer_list_is_an_error() {
        let text = r#"{"version":1,"input_dim":1,"layers":[],"metadata":{"construction_tag":"","claimed_width":0,"claimed_depth":0,"claimed_lipschitz":"none"}}"#;
        assert!(matches!(from_json(text), Err(NetError::Empty)));
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let text = r#"{"version":1,"input_dim":1,"layers":[{"rows":1,"cols":1,"weights":[1,2],"bias":[0]}],"metadata":{"construction_tag":"","claimed_width":0,"claimed_depth":0,"claimed_lipschitz":1}}"#;
        assert!(matches!(from_json(text), Err(NetError::Shape { .. })));
    }
}
