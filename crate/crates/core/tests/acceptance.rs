//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false` so the lines are printed as the run goes.
//! The process exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use holdergan::bits::bit_extractor;
use holdergan::genmap::{grid_quantize, DiscreteDistribution, SampleSet};
use holdergan::harness::{run, BoundReport, Experiment, ExperimentConfig, RunOutput};
use holdergan::metrics::{entropy_integral_bound, rate_fit, rate_fit_with_log, w1_discrete_exact};

const SEED: u64 = 0;

const PRODUCT_LIMIT: Duration = Duration::from_secs(10);
const BITS_LIMIT: Duration = Duration::from_secs(30);
const HOLDER_LIMIT: Duration = Duration::from_secs(300);
const MEMORIZE_LIMIT: Duration = Duration::from_secs(120);
const QUANTIZE_LIMIT: Duration = Duration::from_secs(60);
const RATE_LIMIT: Duration = Duration::from_secs(600);

const CUBE_SLOPE: f64 = -1.0 / 3.0;
const CUBE_SLOPE_TOL: f64 = 0.08;
const SEGMENT_SLOPE: f64 = -0.5;
const SEGMENT_SLOPE_TOL: f64 = 0.10;
const ENTROPY_EXPONENT_TOL: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn param(r: &BoundReport, key: &str) -> usize {
    r.params.get(key).and_then(|v| v.parse().ok()).unwrap_or(usize::MAX)
}

fn failures(reports: &[&BoundReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {} claimed={} measured={}", r.tag, r.param_json(), r.claimed, r.measured))
        .collect()
}

/// All reports in `selected` pass, there is at least one, and the run met its time limit.
fn judge(selected: &[&BoundReport], elapsed: Duration, limit: Option<Duration>) -> Outcome {
    let bad = failures(selected);
    let slow = limit.is_some_and(|l| elapsed > l);
    let mut detail = format!("{} checks, {} failed, {:.1}s", selected.len(), bad.len(), elapsed.as_secs_f64());
    if let Some(l) = limit {
        detail.push_str(&format!(" (limit {}s)", l.as_secs()));
    }
    for b in bad.iter().take(5) {
        detail.push_str(&format!("\n      {b}"));
    }
    Outcome { pass: !selected.is_empty() && bad.is_empty() && !slow, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn run_ok(config: ExperimentConfig) -> (RunOutput, Duration) {
    let (out, t) = timed(|| run(&config));
    (out.unwrap_or_else(|e| panic!("{:?} failed to run: {e}", config.experiment)), t)
}

fn is_structural(r: &BoundReport) -> bool {
    r.tag.ends_with(".width") || r.tag.ends_with(".depth")
}

fn product_bound(poly: &RunOutput, t: Duration) -> Outcome {
    let sel: Vec<_> = poly
        .reports
        .iter()
        .filter(|r| r.tag.starts_with("product_net.") && !is_structural(r))
        .filter(|r| [6, 8, 12].contains(&param(r, "W")) && (1..=3).contains(&param(r, "L")))
        .collect();
    let out = judge(&sel, t, Some(PRODUCT_LIMIT));
    let complete = sel.len() == 9 * 2;
    Outcome { pass: out.pass && complete, detail: out.detail }
}

fn square_knots(poly: &RunOutput, t: Duration) -> Outcome {
    let sel: Vec<_> = poly
        .reports
        .iter()
        .filter(|r| r.tag == "square_net.error" || r.tag == "square_net.knots")
        .filter(|r| [2, 4, 8].contains(&param(r, "W")) && (1..=3).contains(&param(r, "L")))
        .collect();
    let out = judge(&sel, t, None);
    Outcome { pass: out.pass && sel.len() == 9 * 2, detail: out.detail }
}

fn bit_machinery(bits: &RunOutput, t: Duration) -> Outcome {
    // the suite covers L = 2; the extractor is also swept up to 8 bits here
    let (sweep, t2) = timed(|| {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for l in 1..=8usize {
            let ext = bit_extractor(l).expect("extractor builds");
            ok &= ext.within_claims();
            for pattern in 0..(1u64 << l) {
                let x = pattern as f64 / (1u64 << l) as f64;
                for pos in 1..=l {
                    let want = ((pattern >> (l - pos)) & 1) as f64;
                    worst = worst.max((ext.eval_scalar(&[x, pos as f64]) - want).abs());
                }
            }
        }
        (worst, ok)
    });
    let sel: Vec<_> = bits.reports.iter().filter(|r| !is_structural(r)).collect();
    let mut out = judge(&sel, t + t2, Some(BITS_LIMIT));
    let (worst, ok) = sweep;
    out.detail.push_str(&format!("; extractor L=1..8 worst error {worst:e}"));
    Outcome { pass: out.pass && ok && worst <= 1e-9 && sel.len() == 2 * 3, detail: out.detail }
}

fn holder(outs: &[(RunOutput, Duration)]) -> Outcome {
    let t = outs.iter().map(|o| o.1).sum();
    let sel: Vec<_> = outs.iter().flat_map(|o| o.0.reports.iter()).collect();
    let errors = sel.iter().filter(|r| r.tag == "holder.error").count();
    let mut out = judge(&sel, t, Some(HOLDER_LIMIT));
    out.detail.push_str(&format!("; {errors} (target, d, beta, W) cases"));
    out
}

fn memorize(mem: &RunOutput, t: Duration) -> Outcome {
    let sel: Vec<_> = mem.reports.iter().filter(|r| !is_structural(r)).collect();
    judge(&sel, t, Some(MEMORIZE_LIMIT))
}

fn grid_quantization() -> Outcome {
    let (rows, t) = timed(|| {
        let d = 2;
        let samples = SampleSet::uniform_cube(200, d, SEED);
        let empirical = DiscreteDistribution::empirical(&samples).expect("empirical");
        [2usize, 4, 8]
            .map(|k| {
                let grid = grid_quantize(&samples, k).expect("quantizes");
                let (w1, _) = w1_discrete_exact(&empirical, &grid).expect("exact transport");
                (k, w1, (d as f64).sqrt() / k as f64)
            })
            .to_vec()
    });
    let pass = rows.iter().all(|&(_, w1, bound)| w1 <= bound) && t <= QUANTIZE_LIMIT;
    let parts: Vec<String> = rows.iter().map(|(k, w1, b)| format!("k={k}: {w1:.4} <= {b:.4}")).collect();
    Outcome { pass, detail: format!("{}, {:.1}s", parts.join(", "), t.as_secs_f64()) }
}

fn slope_report(out: &RunOutput, t: Duration) -> (f64, bool) {
    let r = out.reports.iter().find(|r| r.tag == "rate.slope_deviation").expect("slope report");
    let slope: f64 = r.params["slope"].parse().expect("slope value");
    (slope, out.all_pass() && t <= RATE_LIMIT)
}

fn rates() -> Outcome {
    let base = |e| ExperimentConfig::new(e, SEED).set("d", 3).set("n_min", 128).set("n_max", 8192).set("reps", 20);
    let (cube, t1) = run_ok(base(Experiment::RateEmpirical).set("tolerance", CUBE_SLOPE_TOL));
    let (segment, t2) = run_ok(
        base(Experiment::RateLowdim).set("d_star", 1).set("noise_variance", 0).set("tolerance", SEGMENT_SLOPE_TOL),
    );
    let (cs, cube_ok) = slope_report(&cube, t1);
    let (ss, seg_ok) = slope_report(&segment, t2);
    let cube_ok = cube_ok && (cs - CUBE_SLOPE).abs() <= CUBE_SLOPE_TOL;
    let seg_ok = seg_ok && (ss - SEGMENT_SLOPE).abs() <= SEGMENT_SLOPE_TOL && t1 + t2 <= RATE_LIMIT;
    Outcome {
        pass: cube_ok && seg_ok,
        detail: format!(
            "cube slope {cs:.4} (want {CUBE_SLOPE:.4} ± {CUBE_SLOPE_TOL}), segment slope {ss:.4} (want {SEGMENT_SLOPE} ± {SEGMENT_SLOPE_TOL}), {:.1}s (limit {}s)",
            (t1 + t2).as_secs_f64(),
            RATE_LIMIT.as_secs()
        ),
    }
}

fn entropy_regimes() -> Outcome {
    let sizes: Vec<f64> = (0..9).map(|i| 10f64.powf(2.0 + 0.5 * i as f64).round()).collect();
    let curve = |b: f64, eta: f64| -> Vec<(f64, f64)> {
        sizes.iter().map(|&n| (n, entropy_integral_bound(b, n as usize, eta, 1.0))).collect()
    };
    let half = rate_fit(&curve(100.0, 0.5)).expect("fit").slope;
    // with B = 6√C/e the critical curve is exactly proportional to n^{-1/2} log n
    let critical = rate_fit_with_log(&curve(6.0 / std::f64::consts::E, 1.0)).expect("fit");
    let two = rate_fit(&curve(100.0, 2.0)).expect("fit").slope;
    let pass = (half + 0.5).abs() <= ENTROPY_EXPONENT_TOL
        && (critical.slope + 0.5).abs() <= ENTROPY_EXPONENT_TOL
        && critical.log_coefficient > 0.0
        && (two + 0.25).abs() <= ENTROPY_EXPONENT_TOL;
    Outcome {
        pass,
        detail: format!(
            "eta=0.5 slope {half:.4}; eta=1 slope {:.4} log coefficient {:.4}; eta=2 slope {two:.4} (tolerance {ENTROPY_EXPONENT_TOL})",
            critical.slope, critical.log_coefficient
        ),
    }
}

fn oracle(out: &RunOutput, t: Duration) -> Outcome {
    let sel: Vec<_> = out.reports.iter().collect();
    judge(&sel, t, None)
}

fn structural(outs: &[&RunOutput]) -> Outcome {
    let sel: Vec<_> = outs.iter().flat_map(|o| o.reports.iter()).filter(|r| is_structural(r)).collect();
    judge(&sel, Duration::ZERO, None)
}

fn main() -> ExitCode {
    let mut all = true;
    let mut line = |n: usize, name: &str, o: Outcome| {
        println!("{} criterion {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    };

    let (poly, t_poly) = run_ok(ExperimentConfig::new(Experiment::VerifyPoly, SEED));
    line(1, "product bound", product_bound(&poly, t_poly));
    line(2, "square knots", square_knots(&poly, t_poly));

    let (bits, t_bits) = run_ok(ExperimentConfig::new(Experiment::VerifyBits, SEED));
    line(3, "bit machinery", bit_machinery(&bits, t_bits));

    let holder_runs: Vec<(RunOutput, Duration)> = [1, 2]
        .iter()
        .map(|&d| run_ok(ExperimentConfig::new(Experiment::VerifyHolder, SEED).set("d", d).set("target", "all")))
        .collect();
    line(4, "holder approximator", holder(&holder_runs));

    let (mem, t_mem) = run_ok(ExperimentConfig::new(Experiment::VerifyMemorize, SEED));
    line(5, "memorization", memorize(&mem, t_mem));

    line(6, "grid quantization", grid_quantization());
    line(7, "empirical rates", rates());
    line(8, "entropy regimes", entropy_regimes());

    let (orc, t_orc) = run_ok(ExperimentConfig::new(Experiment::OracleDecomposition, SEED).set("seeds", 20));
    line(9, "oracle inequality", oracle(&orc, t_orc));

    let mut exercised = vec![&poly, &bits, &mem];
    exercised.extend(holder_runs.iter().map(|o| &o.0));
    line(10, "structural budgets", structural(&exercised));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
