//! Experiment specification files.
//!
//! A spec is a flat JSON object. Every key is optional; missing keys take the
//! defaults of [`SystemConfig::default`] and 100 trials. Unknown keys are
//! rejected.
//!
//! ```json
//! {
//!   "N": 200, "L": 96, "M": 8, "P": 2, "rho": 0.1,
//!   "distance_model": {"constant": 70},
//!   "trials": 50,
//!   "sweep": {"L": [64, 96, 128]},
//!   "algorithms": ["amp_a_ec", "amp_a_ac", "se_analysis"]
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{DistanceModel, StopPolicy, SystemConfig};
use crate::rng::fnv1a;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AmpAEc,
    AmpAAc,
    AmpAEcIter,
    AmpAAcIter,
    SeAnalysis,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::AmpAEc,
        Algorithm::AmpAAc,
        Algorithm::AmpAEcIter,
        Algorithm::AmpAAcIter,
        Algorithm::SeAnalysis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AmpAEc => "amp_a_ec",
            Algorithm::AmpAAc => "amp_a_ac",
            Algorithm::AmpAEcIter => "amp_a_ec_iter",
            Algorithm::AmpAAcIter => "amp_a_ac_iter",
            Algorithm::SeAnalysis => "se_analysis",
        }
    }

    /// The variant without best-iterate tracking.
    pub fn untracked(self) -> Self {
        match self {
            Algorithm::AmpAEc => Algorithm::AmpAEcIter,
            Algorithm::AmpAAc => Algorithm::AmpAAcIter,
            other => other,
        }
    }

    pub fn is_simulated(self) -> bool {
        self != Algorithm::SeAnalysis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    #[serde(alias = "json-lines")]
    #[value(alias = "json-lines")]
    Jsonl,
}

/// Values for each sweepable parameter; empty axes are not swept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(rename = "N", default)]
    pub devices: Vec<usize>,
    #[serde(rename = "L", default)]
    pub pilot_len: Vec<usize>,
    #[serde(rename = "M", default)]
    pub antennas: Vec<usize>,
    #[serde(rename = "P", default)]
    pub taps: Vec<usize>,
    #[serde(default)]
    pub pt_dbm: Vec<f64>,
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub distance_model: Vec<DistanceModel>,
}

impl Sweep {
    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
            && self.pilot_len.is_empty()
            && self.antennas.is_empty()
            && self.taps.is_empty()
            && self.pt_dbm.is_empty()
            && self.rho.is_empty()
            && self.distance_model.is_empty()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "Q")]
    q: Option<usize>,
    #[serde(rename = "L")]
    l: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "P")]
    p: Option<usize>,
    rho: Option<f64>,
    pt_dbm: Option<f64>,
    sigma2_mw: Option<f64>,
    eta_pl: Option<f64>,
    wavelength_m: Option<f64>,
    distance_model: Option<DistanceModel>,
    iterations: Option<usize>,
    stop_policy: Option<StopPolicy>,
    tracking_enabled: Option<bool>,
    master_seed: Option<u64>,
    sweep: Option<Sweep>,
    trials: Option<usize>,
    algorithms: Option<Vec<Algorithm>>,
    output: Option<PathBuf>,
    format: Option<Format>,
    timing: Option<bool>,
}

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    /// Whether `algorithms` was given explicitly.
    pub algorithms_explicit: bool,
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Record per-iteration wall time. Off by default so that outputs are
    /// byte-for-byte reproducible.
    pub timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::default(),
            sweep: Sweep::default(),
            trials: DEFAULT_TRIALS,
            algorithms: Algorithm::ALL.to_vec(),
            algorithms_explicit: false,
            output: None,
            format: Format::Csv,
            timing: false,
        }
    }
}

/// One operating point of an expanded sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub cfg: SystemConfig,
    /// Stable key derived from the point's parameter values; seeds depend on
    /// it rather than on the point's position in the grid.
    pub key: u64,
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let raw: RawSpec = serde_json::from_str(text)?;
    let mut cfg = SystemConfig::default();
    let mut spec = ExperimentSpec::default();

    if let Some(v) = raw.n {
        cfg.devices = v;
    }
    if let Some(v) = raw.k {
        cfg.subcarriers = v;
    }
    if let Some(v) = raw.m {
        cfg.antennas = v;
    }
    if let Some(v) = raw.p {
        cfg.taps = v;
    }
    match (raw.l, raw.q) {
        (Some(l), q) => {
            cfg.pilot_symbols = pilot_symbols_for(l, cfg.subcarriers)?;
            if q.is_some_and(|q| q != cfg.pilot_symbols) {
                return Err(Error::config("L", format!("L = {l} disagrees with Q = {} and K = {}", q.unwrap(), cfg.subcarriers)));
            }
        }
        (None, Some(q)) => cfg.pilot_symbols = q,
        (None, None) => {}
    }
    if let Some(v) = raw.rho {
        cfg.rho = v;
    }
    if let Some(v) = raw.pt_dbm {
        cfg.pt_dbm = v;
    }
    if let Some(v) = raw.sigma2_mw {
        cfg.sigma2_mw = v;
    }
    if let Some(v) = raw.eta_pl {
        cfg.pathloss_exponent = v;
    }
    if let Some(v) = raw.wavelength_m {
        cfg.wavelength_m = v;
    }
    if let Some(v) = raw.distance_model {
        cfg.distance_model = v;
    }
    if let Some(v) = raw.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = raw.stop_policy {
        cfg.stop_policy = v;
    }
    if let Some(v) = raw.tracking_enabled {
        cfg.tracking_enabled = v;
    }
    if let Some(v) = raw.master_seed {
        cfg.master_seed = v;
    }
    spec.base = cfg;
    if let Some(v) = raw.sweep {
        spec.sweep = v;
    }
    if let Some(v) = raw.trials {
        spec.trials = v;
    }
    if let Some(v) = raw.algorithms {
        spec.algorithms = v;
        spec.algorithms_explicit = true;
    }
    spec.output = raw.output;
    if let Some(v) = raw.format {
        spec.format = v;
    }
    if let Some(v) = raw.timing {
        spec.timing = v;
    }
    spec.validate()?;
    Ok(spec)
}

fn pilot_symbols_for(l: usize, k: usize) -> Result<usize> {
    if k == 0 || l == 0 || l % k != 0 {
        return Err(Error::config("L", format!("L = {l} must be a positive multiple of K = {k}")));
    }
    Ok(l / k)
}

impl ExperimentSpec {
    /// Checks every grid point before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        let points = self.points()?;
        if self.algorithms_explicit && self.algorithms.contains(&Algorithm::SeAnalysis) {
            if let Some(p) = points
                .iter()
                .find(|p| !matches!(p.cfg.distance_model, DistanceModel::Constant(_)))
            {
                return Err(Error::config(
                    "algorithms",
                    format!(
                        "se_analysis needs a constant distance, point {} uses {}",
                        p.index,
                        p.cfg.distance_model.label()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Algorithms to run at `cfg`, in output order. Without tracking the
    /// tracked variants collapse onto their iterate-only counterparts, and
    /// the analytical curves are dropped for random distances unless they
    /// were asked for explicitly.
    pub fn algorithms_for(&self, cfg: &SystemConfig) -> Vec<Algorithm> {
        let mut algs: Vec<Algorithm> = self
            .algorithms
            .iter()
            .map(|&a| if cfg.tracking_enabled { a } else { a.untracked() })
            .filter(|&a| a != Algorithm::SeAnalysis || matches!(cfg.distance_model, DistanceModel::Constant(_)))
            .collect();
        algs.sort();
        algs.dedup();
        algs
    }

    /// Expands the sweep. Axes are nested in the order N, L, M, P, pt_dbm,
    /// rho, distance_model with the last varying fastest.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let mut cfgs = vec![self.base.clone()];
        let s = &self.sweep;
        expand(&mut cfgs, &s.devices, |c, &v| {
            c.devices = v;
            Ok(())
        })?;
        expand(&mut cfgs, &s.pilot_len, |c, &v| {
            c.pilot_symbols = pilot_symbols_for(v, c.subcarriers)?;
            Ok(())
        })?;
        expand(&mut cfgs, &s.antennas, |c, &v| {
            c.antennas = v;
            Ok(())
        })?;
        expand(&mut cfgs, &s.taps, |c, &v| {
            c.taps = v;
            Ok(())
        })?;
        expand(&mut cfgs, &s.pt_dbm, |c, &v| {
            c.pt_dbm = v;
            Ok(())
        })?;
        expand(&mut cfgs, &s.rho, |c, &v| {
            c.rho = v;
            Ok(())
        })?;
        expand(&mut cfgs, &s.distance_model, |c, &v| {
            c.distance_model = v;
            Ok(())
        })?;
        cfgs.into_iter()
            .enumerate()
            .map(|(index, cfg)| {
                cfg.validate()?;
                Ok(GridPoint {
                    index,
                    key: point_key(&cfg),
                    cfg,
                })
            })
            .collect()
    }
}

fn expand<T>(
    cfgs: &mut Vec<SystemConfig>,
    values: &[T],
    set: impl Fn(&mut SystemConfig, &T) -> Result<()>,
) -> Result<()> {
    if values.is_empty() {
        return Ok(());
    }
    let mut out = Vec::with_capacity(cfgs.len() * values.len());
    for cfg in cfgs.iter() {
        for v in values {
            let mut c = cfg.clone();
            set(&mut c, v)?;
            out.push(c);
        }
    }
    *cfgs = out;
    Ok(())
}

/// Hash of every parameter that shapes a realization.
pub fn point_key(cfg: &SystemConfig) -> u64 {
    let text = format!(
        "N={};K={};Q={};M={};P={};rho={:?};pt_dbm={:?};sigma2={:?};eta={:?};lambda={:?};dist={}",
        cfg.devices,
        cfg.subcarriers,
        cfg.pilot_symbols,
        cfg.antennas,
        cfg.taps,
        cfg.rho,
        cfg.pt_dbm,
        cfg.sigma2_mw,
        cfg.pathloss_exponent,
        cfg.wavelength_m,
        cfg.distance_model.label()
    );
    fnv1a(text.as_bytes())
}
