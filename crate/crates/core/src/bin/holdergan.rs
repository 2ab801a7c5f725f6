use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use holdergan::harness::{self, Experiment, ExperimentConfig, HarnessError, RunOutput};
use holdergan::holder::{holder_approximator, Target};
use holdergan::interp::discretizer;
use holdergan::netcore::ReluNet;
use holdergan::{bits, poly};

#[derive(Parser)]
#[command(name = "holdergan", version, about = "Build ReLU network constructions and check their claimed bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite; without --W/--L the default sweep is used.
    Verify(VerifyArgs),
    /// Empirical estimation-rate experiment with memorizing generators.
    Rate(RateArgs),
    /// Numeric check of the error decomposition on finite families.
    OracleCheck(OracleArgs),
    /// Box-counting dimension of a generated shape or a CSV point cloud.
    DimEstimate(DimArgs),
    /// Export or import networks in the JSON format.
    #[command(subcommand)]
    Net(NetCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Interp,
    Bits,
    Poly,
    Holder,
    Memorize,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report.csv, summary.json and data files; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times (reports are then no longer byte-identical across runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    construction: Suite,
    #[arg(long = "W")]
    width: Option<usize>,
    #[arg(long = "L")]
    depth: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Hölder target name, or `all` for every target certified at the given smoothness.
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateKind {
    Empirical,
    Lowdim,
}

#[derive(Args)]
struct RateArgs {
    kind: RateKind,
    #[arg(long)]
    d: usize,
    #[arg(long = "d-star")]
    d_star: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "noise-variance")]
    noise_variance: Option<f64>,
    #[arg(long = "n-min", default_value_t = 128)]
    n_min: usize,
    #[arg(long = "n-max", default_value_t = 8192)]
    n_max: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DimArgs {
    /// Generated shape: segment, square or cube.
    #[arg(long)]
    shape: Option<String>,
    /// Headerless CSV point cloud; overrides --shape.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Known dimension of the data file, to turn the estimate into a check.
    #[arg(long)]
    expected: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Construction {
    Square,
    Product,
    BitExtractor,
    Discretizer,
    Holder,
}

#[derive(Subcommand)]
enum NetCommand {
    Export {
        construction: Construction,
        path: PathBuf,
        #[arg(long = "W", default_value_t = 6)]
        width: usize,
        #[arg(long = "L", default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value = "mean")]
        target: String,
    },
    Import {
        path: PathBuf,
    },
}

fn config(experiment: Experiment, common: &Common, pairs: Vec<(&str, Option<String>)>) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(experiment, common.seed);
    c.timing = common.timing;
    for (k, v) in pairs {
        if let Some(v) = v {
            c = c.set(k, v);
        }
    }
    c
}

fn s<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn emit(out: &RunOutput, dir: Option<&Path>) -> Result<(), HarnessError> {
    match dir {
        Some(dir) => harness::write_outputs(dir, out)?,
        None => print!("{}", harness::reports_to_csv(&out.reports)?),
    }
    let failed = out.reports.iter().filter(|r| !r.pass).count();
    eprintln!("{} reports, {} failed", out.reports.len(), failed);
    Ok(())
}

fn export(
    construction: Construction,
    path: &Path,
    w: usize,
    l: usize,
    d: usize,
    beta: f64,
    target: &str,
) -> Result<(), String> {
    let net: ReluNet = match construction {
        Construction::Square => poly::square_net(w, l).map_err(|e| e.to_string())?,
        Construction::Product => poly::product_net(w, l).map_err(|e| e.to_string())?,
        Construction::BitExtractor => bits::bit_extractor(l).map_err(|e| e.to_string())?,
        Construction::Discretizer => {
            let k = holdergan::interp::grid_size(w, l, d);
            discretizer(w, l, d, 1.0 / (3.0 * k as f64)).map_err(|e| e.to_string())?
        }
        Construction::Holder => {
            let t = Target::parse(target).ok_or_else(|| format!("unknown target {target:?}"))?;
            holder_approximator(t, d, beta, w, l).map_err(|e| e.to_string())?.net
        }
    };
    net.save(path).map_err(|e| e.to_string())
}

fn describe(path: &Path) -> Result<(), String> {
    let net = ReluNet::load(path).map_err(|e| e.to_string())?;
    let m = &net.meta;
    let summary = serde_json::json!({
        "construction_tag": m.construction_tag,
        "input_dim": net.input_dim(),
        "output_dim": net.output_dim(),
        "width": net.width(),
        "depth": net.depth(),
        "nonzeros": net.nnz(),
        "claimed_width": m.claimed_width,
        "claimed_depth": m.claimed_depth,
        "claimed_lipschitz": m.claimed_lipschitz,
        "within_claims": net.within_claims(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, dir) = match &cli.command {
        Command::Verify(a) => {
            let exp = match a.construction {
                Suite::Interp => Experiment::VerifyInterp,
                Suite::Bits => Experiment::VerifyBits,
                Suite::Poly => Experiment::VerifyPoly,
                Suite::Holder => Experiment::VerifyHolder,
                Suite::Memorize => Experiment::VerifyMemorize,
            };
            let pairs = vec![
                ("W", s(a.width)),
                ("L", s(a.depth)),
                ("beta", s(a.beta)),
                ("d", s(a.d)),
                ("s", s(a.s)),
                ("target", a.target.clone()),
            ];
            (config(exp, &a.common, pairs), a.common.out.clone())
        }
        Command::Rate(a) => {
            let exp = match a.kind {
                RateKind::Empirical => Experiment::RateEmpirical,
                RateKind::Lowdim => Experiment::RateLowdim,
            };
            let pairs = vec![
                ("d", Some(a.d.to_string())),
                ("d_star", s(a.d_star)),
                ("beta", s(a.beta)),
                ("noise_variance", s(a.noise_variance)),
                ("n_min", Some(a.n_min.to_string())),
                ("n_max", Some(a.n_max.to_string())),
                ("reps", Some(a.reps.to_string())),
            ];
            (config(exp, &a.common, pairs), a.common.out.clone())
        }
        Command::OracleCheck(a) => (
            config(Experiment::OracleDecomposition, &a.common, vec![("seeds", Some(a.seeds.to_string()))]),
            a.common.out.clone(),
        ),
        Command::DimEstimate(a) => {
            let pairs = vec![
                ("shape", a.shape.clone()),
                ("data", a.data.as_ref().map(|p| p.display().to_string())),
                ("expected", s(a.expected)),
                ("n", s(a.n)),
                ("d", s(a.d)),
            ];
            (config(Experiment::DimEstimate, &a.common, pairs), a.common.out.clone())
        }
        Command::Net(cmd) => {
            let res = match cmd {
                NetCommand::Export { construction, path, width, depth, d, beta, target } => {
                    export(*construction, path, *width, *depth, *d, *beta, target)
                }
                NetCommand::Import { path } => describe(path),
            };
            return match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match harness::run(&cfg).and_then(|out| emit(&out, dir.as_deref()).map(|_| out)) {
        Ok(out) if out.all_pass() => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
