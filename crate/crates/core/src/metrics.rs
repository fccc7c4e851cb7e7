//! Detection and estimation metrics, and the GROUP-LASSO surrogate.

use ndarray::{ArrayView2, ArrayView3};

use crate::linalg::{fro_norm_sq, row_norm_sum};
use crate::{Error, Result, C64};

/// `½‖Y − A X‖_F² + Σ_i ‖X_{i,:}‖₂`.
pub fn group_lasso_obj(y: ArrayView2<'_, C64>, a: ArrayView2<'_, C64>, x: ArrayView2<'_, C64>) -> Result<f64> {
    if a.ncols() != x.nrows() || a.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "Y {:?}, A {:?}, X {:?}",
            y.dim(),
            a.dim(),
            x.dim()
        )));
    }
    let residual = &y - &a.dot(&x);
    Ok(0.5 * fro_norm_sq(residual.view()) + row_norm_sum(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRates {
    pub error_prob: f64,
    pub false_alarm: f64,
    pub missed_detection: f64,
    /// No inactive devices, so `false_alarm` was reported as 0.
    pub no_inactive: bool,
    /// No active devices, so `missed_detection` was reported as 0.
    pub no_active: bool,
}

pub fn detection_rates(detected: &[bool], truth: &[bool]) -> Result<DetectionRates> {
    if detected.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} decisions for {} devices",
            detected.len(),
            truth.len()
        )));
    }
    let (mut errors, mut alarms, mut misses, mut active) = (0usize, 0usize, 0usize, 0usize);
    for (&d, &a) in detected.iter().zip(truth) {
        active += a as usize;
        match (d, a) {
            (true, false) => {
                alarms += 1;
                errors += 1;
            }
            (false, true) => {
                misses += 1;
                errors += 1;
            }
            _ => {}
        }
    }
    let inactive = truth.len() - active;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(DetectionRates {
        error_prob: ratio(errors, truth.len()),
        false_alarm: ratio(alarms, inactive),
        missed_detection: ratio(misses, active),
        no_inactive: inactive == 0,
        no_active: active == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMse {
    /// Mean over truly active devices of `‖h_n − ĥ_n‖² / (P M)`; `None` when
    /// no device is active.
    pub active: Option<f64>,
    /// `‖X − X̂‖_F² / (N P M)`.
    pub effective: f64,
}

/// Channel errors of the estimate `x_hat` (rows `n P .. (n+1) P` belong to
/// device `n`) after masking it with the decisions `detected`.
///
/// A missed device contributes its full channel energy to the active MSE.
pub fn channel_mse(
    x_hat: ArrayView2<'_, C64>,
    detected: &[bool],
    h: ArrayView3<'_, C64>,
    truth: &[bool],
) -> Result<ChannelMse> {
    let (n, p, m) = h.dim();
    if x_hat.dim() != (n * p, m) || detected.len() != n || truth.len() != n {
        return Err(Error::Dimension(format!(
            "estimate {:?} against channels {:?}",
            x_hat.dim(),
            h.dim()
        )));
    }
    let mut active_sum = 0.0;
    let mut active_count = 0usize;
    let mut effective = 0.0;
    for dev in 0..n {
        let mut dev_err = 0.0;
        for tap in 0..p {
            for ant in 0..m {
                let est = if detected[dev] { x_hat[[dev * p + tap, ant]] } else { C64::new(0.0, 0.0) };
                let actual = if truth[dev] { h[[dev, tap, ant]] } else { C64::new(0.0, 0.0) };
                let sq = (actual - est).norm_sqr();
                effective += sq;
                dev_err += sq;
            }
        }
        if truth[dev] {
            active_sum += dev_err / (p * m) as f64;
            active_count += 1;
        }
    }
    Ok(ChannelMse {
        active: (active_count > 0).then(|| active_sum / active_count as f64),
        effective: effective / (n * p * m) as f64,
    })
}
