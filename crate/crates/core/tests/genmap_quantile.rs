//! One-dimensional memorization checked against the quantile form of `W1`:
//! for a uniform source, `W1(γ, g_#ν) = ∫_0^1 |F_γ^{-1}(u) - g(u)| du`.

use approx::assert_relative_eq;
use holdergan::genmap::{capacity, memorize_discrete, DiscreteDistribution, Source};
use holdergan::harness::random_target;
use holdergan::metrics::w1_1d_exact;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 50;
const QUADRATURE_POINTS: usize = 200_000;

fn quantile(gamma: &DiscreteDistribution, u: f64) -> f64 {
    let mut order: Vec<usize> = (0..gamma.len()).collect();
    order.sort_by(|&i, &j| gamma.atom(i)[0].total_cmp(&gamma.atom(j)[0]));
    let mut acc = 0.0;
    for &i in &order {
        acc += gamma.weights()[i];
        if u <= acc {
            return gamma.atom(i)[0];
        }
    }
    gamma.atom(*order.last().unwrap())[0]
}

#[test]
fn memorized_pushforward_matches_quantile_integral() {
    let (width, depth, eps) = (15, 4, 1e-2);
    let n = capacity(width, depth, 1).unwrap();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = random_target(&mut rng, n, 1);
        let mem = memorize_discrete(&gamma, Source::Uniform01, eps, width, depth).unwrap();
        assert!(mem.certificate < eps);

        let us: Vec<f64> = (0..QUADRATURE_POINTS).map(|i| (i as f64 + 0.5) / QUADRATURE_POINTS as f64).collect();
        let gs = mem.net.eval_many(&us);
        let by_quantiles =
            us.iter().zip(&gs).map(|(&u, &g)| (quantile(&gamma, u) - g).abs()).sum::<f64>() / us.len() as f64;

        // the same quantity through the CDF form on the midpoint sample
        let pushed = DiscreteDistribution::uniform(gs, 1).unwrap();
        let by_cdf = w1_1d_exact(&gamma, &pushed).unwrap();
        assert_relative_eq!(by_quantiles, by_cdf, epsilon = 1e-6, max_relative = 1e-6);

        // midpoint quadrature of a monotone step map errs by at most one cell per jump
        let slack = 2.0 * n as f64 * gamma.diameter() / QUADRATURE_POINTS as f64;
        assert!(by_quantiles <= mem.certificate + slack, "seed {seed}: {by_quantiles} > {} + {slack}", mem.certificate);
    }
}
