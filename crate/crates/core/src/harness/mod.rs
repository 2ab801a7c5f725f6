//! Experiment runner: verification suites, rate experiments and the
//! oracle-inequality check, all emitting [`BoundReport`] rows.

mod oracle;
mod rate;
mod verify;

pub use oracle::ORACLE_SLACK;
pub use oracle::{oracle_decomposition_check, OracleInstance, OracleSetup};
pub use rate::{bootstrap_slope_ci, rate_experiment, RateOutcome, RatePoint, RateSetup, RateTarget};
pub use verify::{
    default_target, dim_estimate, holder_probe_points, pushforward_check, random_target, segment_ends, segment_points,
    verify_bits, verify_holder, verify_interp, verify_memorize, verify_poly, PushforwardCheck, EXACT_TOL, SNAP_RADIUS,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::error::BuildError;
use crate::genmap::DataError;
use crate::metrics::MetricsError;
use crate::netcore::{NetError, ReluNet};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("missing parameter `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    BadParam { key: String, message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn bad(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::BadParam { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyInterp,
    VerifyBits,
    VerifyPoly,
    VerifyHolder,
    VerifyMemorize,
    RateEmpirical,
    RateLowdim,
    OracleDecomposition,
    DimEstimate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyInterp => "verify-interp",
            Experiment::VerifyBits => "verify-bits",
            Experiment::VerifyPoly => "verify-poly",
            Experiment::VerifyHolder => "verify-holder",
            Experiment::VerifyMemorize => "verify-memorize",
            Experiment::RateEmpirical => "rate-empirical",
            Experiment::RateLowdim => "rate-lowdim",
            Experiment::OracleDecomposition => "oracle-decomposition",
            Experiment::DimEstimate => "dim-estimate",
        }
    }
}

/// Experiment kind plus string parameters; `seed` is mandatory.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: BTreeMap<String, String>,
    /// Record wall-clock times; off by default so reruns are byte-identical.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("seed".into(), seed.to_string());
        Self { experiment, params, timing: false }
    }

    pub fn set(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.require("seed")
    }

    pub fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        self.params.get(key).map(|v| v.parse::<T>().map_err(|e| bad(key, format!("{v:?}: {e}")))).transpose()
    }

    pub fn require<T: FromStr>(&self, key: &'static str) -> Result<T, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or(HarnessError::Missing(key))
    }

    pub fn get_or<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

/// One checked inequality: `measured ≤ claimed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub experiment: String,
    pub tag: String,
    pub params: BTreeMap<String, String>,
    pub claimed: f64,
    pub measured: f64,
    pub margin: f64,
    pub pass: bool,
    pub runtime_ms: u64,
    pub seed: u64,
}

impl BoundReport {
    pub fn new(experiment: Experiment, tag: impl Into<String>, claimed: f64, measured: f64) -> Self {
        let margin = claimed - measured;
        Self {
            experiment: experiment.name().into(),
            tag: tag.into(),
            params: BTreeMap::new(),
            claimed,
            measured,
            margin,
            pass: margin >= 0.0,
            runtime_ms: 0,
            seed: 0,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn param_json(&self) -> String {
        serde_json::to_string(&self.params).expect("string map serializes")
    }
}

/// Width and depth reports for a constructed network.
pub fn structural_reports(experiment: Experiment, name: &str, net: &ReluNet) -> Vec<BoundReport> {
    let mut out = Vec::new();
    if let Some(w) = net.meta.claimed_width {
        out.push(BoundReport::new(experiment, format!("{name}.width"), w as f64, net.width() as f64));
    }
    if let Some(d) = net.meta.claimed_depth {
        out.push(BoundReport::new(experiment, format!("{name}.depth"), d as f64, net.depth() as f64));
    }
    out
}

/// Extra files produced by an experiment, written next to the report.
#[derive(Debug, Clone, Default)]
pub struct DataFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub reports: Vec<BoundReport>,
    pub files: Vec<DataFile>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Runs an experiment. Every report carries the config seed and, when
/// timing is on, the elapsed wall-clock time of the whole experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let seed = config.seed()?;
    let start = Instant::now();
    let mut out = match config.experiment {
        Experiment::VerifyInterp => verify_interp(config)?,
        Experiment::VerifyBits => verify_bits(config)?,
        Experiment::VerifyPoly => verify_poly(config)?,
        Experiment::VerifyHolder => verify_holder(config)?,
        Experiment::VerifyMemorize => verify_memorize(config)?,
        Experiment::RateEmpirical | Experiment::RateLowdim => rate::run_rate(config)?,
        Experiment::OracleDecomposition => oracle::run_oracle(config)?,
        Experiment::DimEstimate => dim_estimate(config)?,
    };
    let elapsed = if config.timing { start.elapsed().as_millis() as u64 } else { 0 };
    for r in &mut out.reports {
        r.seed = seed;
        r.runtime_ms = elapsed;
        for (k, v) in &config.params {
            r.params.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    Ok(out)
}

pub const CSV_COLUMNS: [&str; 9] =
    ["experiment", "tag", "param_json", "claimed", "measured", "margin", "pass", "runtime_ms", "seed"];

/// Report CSV with the fixed column schema.
pub fn reports_to_csv(reports: &[BoundReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.experiment.clone(),
            r.tag.clone(),
            r.param_json(),
            format!("{:?}", r.claimed),
            format!("{:?}", r.measured),
            format!("{:?}", r.margin),
            r.pass.to_string(),
            r.runtime_ms.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct Summary<'a> {
    total: usize,
    passed: usize,
    failed: usize,
    all_pass: bool,
    failures: Vec<&'a str>,
    reports: &'a [BoundReport],
}

pub fn summary_json(reports: &[BoundReport]) -> String {
    let passed = reports.iter().filter(|r| r.pass).count();
    let summary = Summary {
        total: reports.len(),
        passed,
        failed: reports.len() - passed,
        all_pass: passed == reports.len(),
        failures: reports.iter().filter(|r| !r.pass).map(|r| r.tag.as_str()).collect(),
        reports,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Writes via a temporary sibling and a rename, so readers never see partial files.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let tmp = {
        let mut s = path.as_os_str().to_owned();
        s.push(".tmp");
        PathBuf::from(s)
    };
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `report.csv`, `summary.json` and the data files into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("report.csv"), &reports_to_csv(&out.reports)?)?;
    write_atomic(&dir.join("summary.json"), &summary_json(&out.reports))?;
    for f in &out.files {
        write_atomic(&dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}
