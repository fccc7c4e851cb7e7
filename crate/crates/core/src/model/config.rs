use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Device-to-base-station distance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceModel {
    /// Every device at the same distance (meters).
    Constant(f64),
    /// Distances drawn independently and uniformly from `[lo, hi]` meters,
    /// once per trial.
    Uniform(f64, f64),
}

impl DistanceModel {
    pub fn label(&self) -> String {
        match self {
            DistanceModel::Constant(d) => format!("constant:{d}"),
            DistanceModel::Uniform(lo, hi) => format!("uniform:{lo}-{hi}"),
        }
    }
}

/// When an AMP run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopPolicy {
    /// Run exactly the configured number of iterations.
    Fixed,
    /// Stop early once the antenna-averaged residual variance changes by
    /// less than this relative amount between consecutive iterations.
    RelativeTauChange(f64),
}

/// All scenario parameters of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of devices `N`.
    pub devices: usize,
    /// Number of OFDM subcarriers `K`.
    pub subcarriers: usize,
    /// Number of OFDM pilot symbols `Q`; the pilot length is `K * Q`.
    pub pilot_symbols: usize,
    /// Base-station antennas `M`.
    pub antennas: usize,
    /// Channel taps `P`.
    pub taps: usize,
    /// Activity probability of every device.
    pub rho: f64,
    pub pt_dbm: f64,
    pub sigma2_mw: f64,
    pub pathloss_exponent: f64,
    pub wavelength_m: f64,
    pub distance_model: DistanceModel,
    pub iterations: usize,
    pub stop_policy: StopPolicy,
    pub tracking_enabled: bool,
    pub master_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            devices: 1000,
            subcarriers: 32,
            pilot_symbols: 4,
            antennas: 64,
            taps: 3,
            rho: 0.1,
            pt_dbm: 10.0,
            // -114.18 dBm: -174 dBm/Hz over 32 subcarriers at 30 kHz
            sigma2_mw: 10f64.powf(-11.418),
            pathloss_exponent: 2.85,
            wavelength_m: 0.086,
            distance_model: DistanceModel::Constant(70.0),
            iterations: 20,
            stop_policy: StopPolicy::Fixed,
            tracking_enabled: true,
            master_seed: 0,
        }
    }
}

impl SystemConfig {
    /// Pilot length `L = K * Q`.
    pub fn pilot_len(&self) -> usize {
        self.subcarriers * self.pilot_symbols
    }

    /// Number of rows of the effective-channel matrix, `N * P`.
    pub fn coefficient_rows(&self) -> usize {
        self.devices * self.taps
    }

    pub fn pt_mw(&self) -> f64 {
        dbm_to_mw(self.pt_dbm)
    }

    /// Effective large-scale gain `pt_mw * beta(d)` at distance `d`.
    pub fn beta_eff_at(&self, distance_m: f64) -> f64 {
        self.pt_mw() * pathloss(distance_m, self.pathloss_exponent, self.wavelength_m)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("N", self.devices),
            ("K", self.subcarriers),
            ("Q", self.pilot_symbols),
            ("M", self.antennas),
            ("P", self.taps),
        ];
        for (key, v) in dims {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.taps > self.subcarriers {
            return Err(Error::config(
                "P",
                format!("{} taps exceed {} subcarriers", self.taps, self.subcarriers),
            ));
        }
        // rho = 0 is the degenerate empty-support prior; accepted so that
        // analytical curves can be evaluated in that limit.
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho", format!("{} not in [0, 1)", self.rho)));
        }
        if !(self.sigma2_mw.is_finite() && self.sigma2_mw > 0.0) {
            return Err(Error::config("sigma2_mw", "must be positive and finite"));
        }
        if !self.pt_dbm.is_finite() {
            return Err(Error::config("pt_dbm", "must be finite"));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return Err(Error::config("eta_pl", "must be positive"));
        }
        if !(self.wavelength_m.is_finite() && self.wavelength_m > 0.0) {
            return Err(Error::config("wavelength_m", "must be positive"));
        }
        match self.distance_model {
            DistanceModel::Constant(d) if !(d.is_finite() && d > 0.0) => {
                return Err(Error::config("distance_model", "distance must be positive"));
            }
            DistanceModel::Uniform(lo, hi) if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) => {
                return Err(Error::config(
                    "distance_model",
                    "uniform bounds must satisfy 0 < lo <= hi",
                ));
            }
            _ => {}
        }
        if let StopPolicy::RelativeTauChange(eps) = self.stop_policy {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::config("stop_policy", "tolerance must be positive"));
            }
        }
        Ok(())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Large-scale fading `10^(-eta * log10(4 pi d / wavelength))`.
pub fn pathloss(distance_m: f64, exponent: f64, wavelength_m: f64) -> f64 {
    10f64.powf(-exponent * (4.0 * std::f64::consts::PI * distance_m / wavelength_m).log10())
}
