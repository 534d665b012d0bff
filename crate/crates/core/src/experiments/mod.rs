//! Reproducible experiment drivers.
//!
//! Each [`Command`] reads a JSON parameter object, runs one experiment and
//! writes plot-ready CSV files plus a `manifest.json` into the output
//! directory. Every random draw is derived from the configured seed, so the
//! same configuration always produces byte-identical CSVs regardless of the
//! number of threads.
//!
//! ```no_run
//! use uqkit::experiments::{run, Command, ExperimentConfig};
//!
//! let mut cfg = ExperimentConfig::new(Command::ParamEstimate, "out/param");
//! cfg.set("r_values", "[0.5, 1, 2]")?;
//! let manifest = run(&cfg)?;
//! assert_eq!(manifest.schema, 1);
//! # Ok::<(), uqkit::Error>(())
//! ```

mod commands;
pub(crate) mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use commands::{
    BayesScanParams, CalibrateRegimesParams, EddyOwParams, EntropyGalleryParams, L63EnsembleParams,
    LadaScanParams, LinearEnsembleParams, ParamEstimateParams,
};
pub use output::{format_f64, OutputFile, Outputs, Table};

/// Version of the manifest layout.
pub const MANIFEST_SCHEMA: u32 = 1;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "UQKIT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EntropyGallery,
    LinearEnsemble,
    L63Ensemble,
    BayesScan,
    LadaScan,
    ParamEstimate,
    EddyOw,
    CalibrateRegimes,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::EntropyGallery,
        Command::LinearEnsemble,
        Command::L63Ensemble,
        Command::BayesScan,
        Command::LadaScan,
        Command::ParamEstimate,
        Command::EddyOw,
        Command::CalibrateRegimes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::EntropyGallery => "entropy-gallery",
            Command::LinearEnsemble => "linear-ensemble",
            Command::L63Ensemble => "l63-ensemble",
            Command::BayesScan => "bayes-scan",
            Command::LadaScan => "lada-scan",
            Command::ParamEstimate => "param-estimate",
            Command::EddyOw => "eddy-ow",
            Command::CalibrateRegimes => "calibrate-regimes",
        }
    }

    /// One-line description for help output.
    pub fn about(&self) -> &'static str {
        match self {
            Command::EntropyGallery => "Shannon entropy of Gaussian and Gamma densities, and the KDE clipping remedy",
            Command::LinearEnsemble => "uncertainty propagation in the damped linear model and the quadratic closure problem",
            Command::L63Ensemble => "ensemble spread and mean departure in Lorenz-63",
            Command::BayesScan => "posterior contraction with repeated scalar observations",
            Command::LadaScan => "uncertainty reduction of Lagrangian data assimilation versus tracer count",
            Command::ParamEstimate => "regression parameter estimates with uncertain regressors",
            Command::EddyOw => "Okubo-Weiss eddy maps from filter posterior samples",
            Command::CalibrateRegimes => "OU surrogate calibration for the four cubic-model regimes",
        }
    }

    /// Default parameter object.
    pub fn default_params(&self) -> Value {
        let v = match self {
            Command::EntropyGallery => serde_json::to_value(EntropyGalleryParams::default()),
            Command::LinearEnsemble => serde_json::to_value(LinearEnsembleParams::default()),
            Command::L63Ensemble => serde_json::to_value(L63EnsembleParams::default()),
            Command::BayesScan => serde_json::to_value(BayesScanParams::default()),
            Command::LadaScan => serde_json::to_value(LadaScanParams::default()),
            Command::ParamEstimate => serde_json::to_value(ParamEstimateParams::default()),
            Command::EddyOw => serde_json::to_value(EddyOwParams::default()),
            Command::CalibrateRegimes => serde_json::to_value(CalibrateRegimesParams::default()),
        };
        v.expect("parameter structs serialize")
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

/// One experiment run: command, seed, output directory and command
/// parameters. Parameters missing from `params` take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl ExperimentConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self { command, seed: 0, out: out.into(), params: Map::new() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Overrides one parameter. The value is parsed as JSON and kept as a
    /// string if that fails, so `--set regimes='["bimodal"]'` and
    /// `--set name=abc` both work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() {
            return Err(Error::Config("empty parameter name".into()));
        }
        let v = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        self.params.insert(key.to_string(), v);
        Ok(())
    }

    /// Parses `key=value` and applies it with [`set`](Self::set).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }
}

/// Record of one produced file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    /// Data rows (CSV) excluding the header; 0 for JSON files.
    pub rows: usize,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: Command,
    pub seed: u64,
    /// Fully resolved parameters, defaults included.
    pub params: Value,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<ManifestEntry>,
}

impl Manifest {
    /// A config that re-runs this manifest into `out`.
    pub fn rerun_config(&self, out: impl Into<PathBuf>) -> ExperimentConfig {
        let params = match &self.params {
            Value::Object(m) => m.clone(),
            _ => Map::new(),
        };
        ExperimentConfig { command: self.command, seed: self.seed, out: out.into(), params }
    }
}

/// Worker threads allowed by `UQKIT_THREADS`, or all cores when unset.
pub fn thread_limit() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(params: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| Error::Config(format!("invalid parameters: {e}")))
}

/// Runs the experiment on a thread pool capped by `UQKIT_THREADS` and
/// writes its manifest.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    let threads = thread_limit()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    std::fs::create_dir_all(&config.out)
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", config.out.display())))?;
    let start = Instant::now();
    let mut out = Outputs::new(&config.out);
    let seed = config.seed;
    let p = &config.params;
    let params = pool.install(|| -> Result<Value> {
        Ok(match config.command {
            Command::EntropyGallery => commands::entropy_gallery(&checked::<EntropyGalleryParams>(p)?, seed, &mut out)?,
            Command::LinearEnsemble => commands::linear_ensemble(&checked::<LinearEnsembleParams>(p)?, seed, &mut out)?,
            Command::L63Ensemble => commands::l63_ensemble(&checked::<L63EnsembleParams>(p)?, seed, &mut out)?,
            Command::BayesScan => commands::bayes_scan(&checked::<BayesScanParams>(p)?, seed, &mut out)?,
            Command::LadaScan => commands::lada_scan(&checked::<LadaScanParams>(p)?, seed, &mut out)?,
            Command::ParamEstimate => commands::param_estimate(&checked::<ParamEstimateParams>(p)?, seed, &mut out)?,
            Command::EddyOw => commands::eddy_ow(&checked::<EddyOwParams>(p)?, seed, &mut out)?,
            Command::CalibrateRegimes => {
                commands::calibrate_regimes(&checked::<CalibrateRegimesParams>(p)?, seed, &mut out)?
            }
        })
    })?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        command: config.command,
        seed,
        params,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.entries(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(config.out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

/// Parameters that know their own valid ranges.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

fn checked<T>(params: &Map<String, Value>) -> Result<T>
where
    T: serde::de::DeserializeOwned + Validate,
{
    let t: T = parse_params(params)?;
    t.validate()?;
    Ok(t)
}

/// Maps an error to the process exit code: 3 for numerical failures, 2 for
/// everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
            assert!(c.default_params().is_object());
        }
        assert!(matches!("nope".parse::<Command>(), Err(Error::Config(_))));
    }

    #[test]
    fn set_parses_json_or_string() {
        let mut c = ExperimentConfig::new(Command::BayesScan, "x");
        c.set("replicates", "5").unwrap();
        c.set_pair("l_grid = all").unwrap();
        assert_eq!(c.params["replicates"], Value::from(5));
        assert_eq!(c.params["l_grid"], Value::from("all"));
        assert!(c.set_pair("novalue").is_err());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let ok = ExperimentConfig::from_json(r#"{"command":"eddy-ow","out":"o","seed":3}"#).unwrap();
        assert_eq!(ok.seed, 3);
        assert!(ExperimentConfig::from_json(r#"{"command":"eddy-ow","out":"o","sede":3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"command":"nope","out":"o"}"#).is_err());
    }

    #[test]
    fn unknown_parameter_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::new(Command::ParamEstimate, dir.path());
        c.set("bogus", "1").unwrap();
        let e = run(&c).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert_eq!(exit_code(&e), 2);
    }
}
