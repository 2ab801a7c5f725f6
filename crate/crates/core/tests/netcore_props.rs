use holdergan::netcore::{compose, extend_depth, from_json, parallel, to_json, Layer, NetMeta, Pad, ReluNet};
use proptest::prelude::*;

/// A dense network with the given layer sizes and weights drawn from `coeffs`.
fn dense_net(input: usize, sizes: &[usize], coeffs: &[f64]) -> ReluNet {
    let mut it = coeffs.iter().copied().cycle();
    let mut cols = input;
    let mut layers = Vec::new();
    for &rows in sizes {
        let w: Vec<f64> = (0..rows * cols).map(|_| it.next().unwrap()).collect();
        let b: Vec<f64> = (0..rows).map(|_| it.next().unwrap()).collect();
        layers.push(Layer::from_dense(rows, cols, &w, b).unwrap());
        cols = rows;
    }
    ReluNet::new(input, layers).unwrap()
}

fn net_strategy(input: usize, output: usize) -> impl Strategy<Value = ReluNet> {
    (prop::collection::vec(1usize..5, 0..3), prop::collection::vec(-2.0f64..2.0, 1..40)).prop_map(
        move |(mut hidden, c)| {
            hidden.push(output);
            dense_net(input, &hidden, &c)
        },
    )
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn composition_evaluates_in_sequence(
        inner in net_strategy(2, 3),
        outer in net_strategy(3, 2),
        x in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let c = compose(&outer, &inner).unwrap();
        prop_assert_eq!(c.depth(), outer.depth() + inner.depth() + 1);
        prop_assert!(close(&c.eval(&x), &outer.eval(&inner.eval(&x))));
    }

    #[test]
    fn parallel_concatenates_outputs(
        a in net_strategy(2, 1),
        b in net_strategy(2, 2),
        x in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let p = parallel(&[a.clone(), b.clone()]).unwrap();
        let mut want = a.eval(&x);
        want.extend(b.eval(&x));
        prop_assert!(close(&p.eval(&x), &want));
    }

    #[test]
    fn split_padding_preserves_values(a in net_strategy(2, 2), extra in 0usize..4, x in prop::array::uniform2(-3.0f64..3.0)) {
        let deeper = extend_depth(&a, a.depth() + extra, &Pad::Split).unwrap();
        prop_assert_eq!(deeper.depth(), a.depth() + extra);
        prop_assert!(close(&deeper.eval(&x), &a.eval(&x)));
    }

    #[test]
    fn json_round_trip_is_bitwise(a in net_strategy(2, 2), x in prop::array::uniform2(-3.0f64..3.0)) {
        let meta = NetMeta::new("random", a.width(), a.depth(), Some(1.5));
        let a = a.with_meta(meta);
        let back = from_json(&to_json(&a)).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(back.eval(&x), a.eval(&x));
    }
}
