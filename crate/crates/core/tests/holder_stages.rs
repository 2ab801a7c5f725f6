use holdergan::harness::holder_probe_points;
use holdergan::holder::{holder_approximator, Target};

fn sup_error(net: &holdergan::netcore::ReluNet, target: Target, dim: usize, points: &[f64]) -> f64 {
    let out = net.eval_many(points);
    out.iter().enumerate().map(|(i, v)| (v - target.value(&points[i * dim..(i + 1) * dim])).abs()).fold(0.0, f64::max)
}

/// Each face repair can only shrink the grid sup error, and the final network meets its claim.
#[test]
fn repair_stages_do_not_increase_error() {
    for (target, dim, beta) in [(Target::Sine, 1, 2.0), (Target::Mean, 1, 1.0), (Target::Quadratic, 2, 1.0)] {
        let approx = holder_approximator(target, dim, beta, 6, 2).unwrap();
        let points = holder_probe_points(dim, approx.grid);
        let errors: Vec<f64> = approx.stages.iter().map(|s| sup_error(s, target, dim, &points)).collect();
        assert_eq!(errors.len(), dim + 1);
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{target:?} d={dim}: stage errors {errors:?}");
        }
        assert!(errors[dim] <= approx.claims.error, "{target:?}: {} > {}", errors[dim], approx.claims.error);
    }
}
