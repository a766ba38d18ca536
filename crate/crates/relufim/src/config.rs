//! Run configuration: a flat key–value file format, with every field
//! overridable from the command line.
//!
//! Schema (one `key = value` per line, `#` comments allowed):
//!
//! ```text
//! d = 10            # input dimension
//! p = 10000         # hidden width
//! n = 100000        # samples for the empirical path
//! seed = 42
//! sigma2 = 1.0      # noise variance (metadata scaling only)
//! eta = 0.25        # exponent in (0, 1/2) for the xi machinery
//! delta = 0.05      # omit to self-calibrate at the observed deviation
//! c = 1.0           # constant in the probability floor
//! series_n = 64     # series truncation
//! dense_cap = 20000 # refuse dense p×p storage beyond this
//! topk = 66         # omit for a full dense spectrum
//! threads = 2       # omit to use all cores
//! output_dir = out
//! matrix_source = closed   # closed | series | empirical | approx
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::DENSE_CAP_DEFAULT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MatrixSource {
    #[default]
    Closed,
    Series,
    Empirical,
    Approx,
}

impl fmt::Display for MatrixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MatrixSource::Closed => "closed",
            MatrixSource::Series => "series",
            MatrixSource::Empirical => "empirical",
            MatrixSource::Approx => "approx",
        };
        f.write_str(s)
    }
}

impl FromStr for MatrixSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(MatrixSource::Closed),
            "series" => Ok(MatrixSource::Series),
            "empirical" => Ok(MatrixSource::Empirical),
            "approx" => Ok(MatrixSource::Approx),
            other => Err(Error::invalid(format!("unknown matrix source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub eta: f64,
    pub delta: Option<f64>,
    pub c: f64,
    pub series_n: usize,
    pub dense_cap: usize,
    pub topk: Option<usize>,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    pub matrix_source: MatrixSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 10,
            p: 10_000,
            n: 100_000,
            seed: 42,
            sigma2: 1.0,
            eta: 0.25,
            delta: None,
            c: 1.0,
            series_n: 64,
            dense_cap: DENSE_CAP_DEFAULT,
            topk: None,
            threads: None,
            output_dir: PathBuf::from("."),
            matrix_source: MatrixSource::Closed,
        }
    }
}

impl RunConfig {
    /// Basic domain checks shared by all commands.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        if self.p == 0 {
            return Err(Error::invalid("p must be positive"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::invalid("eta must lie in (0, 1/2)"));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0) {
                return Err(Error::invalid("delta must be positive when given"));
            }
        }
        if !(self.c > 0.0) {
            return Err(Error::invalid("c must be positive"));
        }
        Ok(())
    }

    pub fn weight_scale(&self) -> f64 {
        1.0 / self.p as f64
    }

    /// Flat key–value rendering; `parse` inverts it exactly.
    pub fn serialize_flat(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("d = {}\n", self.d));
        s.push_str(&format!("p = {}\n", self.p));
        s.push_str(&format!("n = {}\n", self.n));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("sigma2 = {}\n", self.sigma2));
        s.push_str(&format!("eta = {}\n", self.eta));
        if let Some(delta) = self.delta {
            s.push_str(&format!("delta = {delta}\n"));
        }
        s.push_str(&format!("c = {}\n", self.c));
        s.push_str(&format!("series_n = {}\n", self.series_n));
        s.push_str(&format!("dense_cap = {}\n", self.dense_cap));
        if let Some(topk) = self.topk {
            s.push_str(&format!("topk = {topk}\n"));
        }
        if let Some(threads) = self.threads {
            s.push_str(&format!("threads = {threads}\n"));
        }
        s.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        s.push_str(&format!("matrix_source = {}\n", self.matrix_source));
        s
    }

    pub fn parse_flat(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::invalid(format!("config line {}: bad {what}: {value:?}", lineno + 1));
            match key {
                "d" => cfg.d = value.parse().map_err(|_| bad("integer"))?,
                "p" => cfg.p = value.parse().map_err(|_| bad("integer"))?,
                "n" => cfg.n = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "sigma2" => cfg.sigma2 = value.parse().map_err(|_| bad("number"))?,
                "eta" => cfg.eta = value.parse().map_err(|_| bad("number"))?,
                "delta" => cfg.delta = Some(value.parse().map_err(|_| bad("number"))?),
                "c" => cfg.c = value.parse().map_err(|_| bad("number"))?,
                "series_n" => cfg.series_n = value.parse().map_err(|_| bad("integer"))?,
                "dense_cap" => cfg.dense_cap = value.parse().map_err(|_| bad("integer"))?,
                "topk" => cfg.topk = Some(value.parse().map_err(|_| bad("integer"))?),
                "threads" => cfg.threads = Some(value.parse().map_err(|_| bad("integer"))?),
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "matrix_source" => cfg.matrix_source = value.parse()?,
                other => {
                    return Err(Error::invalid(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse_flat(&std::fs::read_to_string(path)?)
    }
}
