//! Browser bindings for three interactive views: the squaring network against
//! `x²`, the discretizer staircase, and a memorizing generator in one dimension.
//!
//! Every view returns a [`Curve`]: sample abscissae, network values, reference
//! values and a one-line caption with the network's size.

use holdergan::genmap::{memorize_discrete, DiscreteDistribution, Source};
use holdergan::interp::{discretizer, grid_size};
use holdergan::netcore::ReluNet;
use holdergan::poly::square_net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Curve {
    xs: Vec<f64>,
    net: Vec<f64>,
    reference: Vec<f64>,
    caption: String,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn net(&self) -> Vec<f64> {
        self.net.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn caption(&self) -> String {
        self.caption.clone()
    }

    /// Largest gap between network and reference values.
    #[wasm_bindgen(getter)]
    pub fn max_error(&self) -> f64 {
        self.net.iter().zip(&self.reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn grid(samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn size_caption(net: &ReluNet) -> String {
    format!("width {}, depth {}, {} nonzero parameters", net.width(), net.depth(), net.nnz())
}

/// The squaring network with budget `(width, depth)` on `[0,1]`.
pub fn square_view(width: usize, depth: usize, samples: usize) -> Result<Curve, String> {
    let net = square_net(width, depth).map_err(|e| e.to_string())?;
    let xs = grid(samples);
    let reference = xs.iter().map(|x| x * x).collect();
    let caption = format!("{}; claimed error {:.2e}", size_caption(&net), (width as f64).powi(-(depth as i32)) / 4.0);
    Ok(Curve { net: net.eval_many(&xs), xs, reference, caption })
}

/// The one-dimensional discretizer; the reference is the ideal staircase `⌊Kx⌋/K`.
pub fn staircase_view(width: usize, depth: usize, samples: usize) -> Result<Curve, String> {
    let k = grid_size(width, depth, 1);
    let delta = 1.0 / (3.0 * k as f64);
    let net = discretizer(width, depth, 1, delta).map_err(|e| e.to_string())?;
    let xs = grid(samples);
    let kf = k as f64;
    let reference = xs.iter().map(|x| ((x * kf).floor().min(kf - 1.0)) / kf).collect();
    let caption = format!("{} steps, ramps of width {delta:.2e}; {}", k, size_caption(&net));
    Ok(Curve { net: net.eval_many(&xs), xs, reference, caption })
}

/// A generator memorizing `atoms` random points of `[0,1]` from uniform noise.
/// The reference is the target's quantile function, so the area between the
/// two curves is the Wasserstein-1 distance of the pushforward.
pub fn memorize_view(atoms: usize, seed: u64, samples: usize) -> Result<Curve, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = atoms.max(2);
    let mut points: Vec<f64> = (0..atoms).map(|_| rng.gen()).collect();
    points.sort_by(|a, b| a.total_cmp(b));
    let target = DiscreteDistribution::uniform(points.clone(), 1).map_err(|e| e.to_string())?;
    let depth = 2 * atoms.saturating_sub(2).div_ceil(12).max(1);
    let mem = memorize_discrete(&target, Source::Uniform01, 1e-3, 14, depth).map_err(|e| e.to_string())?;
    let xs = grid(samples);
    let reference = xs.iter().map(|u| points[((u * atoms as f64).ceil() as usize).clamp(1, atoms) - 1]).collect();
    let caption = format!("{atoms} atoms, certificate {:.2e}; {}", mem.certificate, size_caption(&mem.net));
    Ok(Curve { net: mem.net.eval_many(&xs), xs, reference, caption })
}

#[wasm_bindgen(js_name = squareCurve)]
pub fn square_curve(width: usize, depth: usize, samples: usize) -> Result<Curve, JsError> {
    square_view(width, depth, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = staircase)]
pub fn staircase(width: usize, depth: usize, samples: usize) -> Result<Curve, JsError> {
    staircase_view(width, depth, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = memorize)]
pub fn memorize(atoms: usize, seed: u32, samples: usize) -> Result<Curve, JsError> {
    memorize_view(atoms, seed as u64, samples).map_err(|e| JsError::new(&e))
}
