//! Inputs, options and bookkeeping shared by the two AMP detectors.

use std::time::Duration;

use ndarray::{s, Array2, ArrayView2};

use crate::linalg::conj_transpose;
use crate::model::StopPolicy;
use crate::{Error, Result, C64};

/// A recovery problem `Y = A X + N` with a per-device Bernoulli-Gaussian prior.
///
/// `Aᴴ` is formed once here; both detectors multiply by it every iteration.
#[derive(Debug, Clone)]
pub struct AmpProblem<'a> {
    pub a: ArrayView2<'a, C64>,
    pub a_h: Array2<C64>,
    pub y: ArrayView2<'a, C64>,
    /// Prior variance of each device's coefficients.
    pub beta: Vec<f64>,
    pub rho: f64,
    pub taps: usize,
}

impl<'a> AmpProblem<'a> {
    pub fn new(
        a: ArrayView2<'a, C64>,
        y: ArrayView2<'a, C64>,
        beta: Vec<f64>,
        rho: f64,
        taps: usize,
    ) -> Result<Self> {
        if taps == 0 || a.ncols() != beta.len() * taps {
            return Err(Error::Dimension(format!(
                "A has {} columns, expected {} devices x {} taps",
                a.ncols(),
                beta.len(),
                taps
            )));
        }
        if a.nrows() != y.nrows() || y.ncols() == 0 {
            return Err(Error::Dimension(format!("A is {:?} but Y is {:?}", a.dim(), y.dim())));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::Domain(format!("prior variance {b} must be positive")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain(format!("activity probability {rho} not in [0, 1)")));
        }
        Ok(Self {
            a_h: conj_transpose(a),
            a,
            y,
            beta,
            rho,
            taps,
        })
    }

    pub fn pilot_len(&self) -> usize {
        self.a.nrows()
    }

    pub fn devices(&self) -> usize {
        self.beta.len()
    }

    pub fn antennas(&self) -> usize {
        self.y.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.ncols()
    }
}

/// How the per-antenna residual variance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauRule {
    /// `(1/L) sum_l |z_{l,m}|^2`.
    #[default]
    Empirical,
    /// `sigma2 + (tau_prev / L) sum eta'`, for cross-checking; the first
    /// iteration falls back to the empirical rule.
    LongForm { sigma2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iterations: usize,
    pub stop_policy: StopPolicy,
    /// Report the best tracked iterate instead of the last one.
    pub tracking: bool,
    pub tau_rule: TauRule,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            iterations: 20,
            stop_policy: StopPolicy::Fixed,
            tracking: true,
            tau_rule: TauRule::Empirical,
        }
    }
}

impl RunOptions {
    pub(crate) fn should_stop(&self, prev_tau: Option<f64>, tau: f64) -> bool {
        match (self.stop_policy, prev_tau) {
            (StopPolicy::RelativeTauChange(eps), Some(prev)) => ((tau - prev) / prev).abs() < eps,
            _ => false,
        }
    }
}

/// One row of an iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Surrogate objective of this iteration's estimate.
    pub f: f64,
    pub f_best: f64,
    /// Residual variance used in this iteration, averaged over antennas.
    pub tau_mean: f64,
    pub improved: bool,
    pub elapsed: Duration,
}

/// Keeps the snapshot with the smallest objective seen so far; ties keep the
/// earlier one.
#[derive(Debug, Clone)]
pub struct BestTracker<T> {
    pub f_best: f64,
    pub best: T,
    pub iteration: usize,
}

impl<T> BestTracker<T> {
    pub fn new(f0: f64, initial: T) -> Self {
        Self {
            f_best: f0,
            best: initial,
            iteration: 0,
        }
    }

    /// Records `f` from `iteration`; `snapshot` runs only on strict improvement.
    pub fn offer(&mut self, iteration: usize, f: f64, snapshot: impl FnOnce() -> T) -> bool {
        if f < self.f_best {
            self.f_best = f;
            self.best = snapshot();
            self.iteration = iteration;
            true
        } else {
            false
        }
    }
}

/// `P x M` block of device `n`.
pub fn device_block(x: ArrayView2<'_, C64>, device: usize, taps: usize) -> ArrayView2<'_, C64> {
    x.slice_move(s![device * taps..(device + 1) * taps, ..])
}

/// Device blocks of `x` for the devices flagged in `detected`.
pub fn extract_channels(x: ArrayView2<'_, C64>, detected: &[bool], taps: usize) -> Vec<(usize, Array2<C64>)> {
    detected
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(n, _)| (n, device_block(x, n, taps).to_owned()))
        .collect()
}

/// Activity decisions: `theta >= 0` is active.
pub fn detect(theta: &[f64]) -> Vec<bool> {
    theta.iter().map(|&t| t >= 0.0).collect()
}

pub(crate) fn column_energy(z: ArrayView2<'_, C64>) -> Vec<f64> {
    z.columns()
        .into_iter()
        .map(|col| col.iter().map(|v| v.norm_sqr()).sum())
        .collect()
}

/// Empirical residual variance per antenna, floored to stay positive.
pub(crate) fn empirical_tau(z: ArrayView2<'_, C64>) -> Vec<f64> {
    let l = z.nrows() as f64;
    column_energy(z)
        .into_iter()
        .map(|e| (e / l).max(f64::MIN_POSITIVE))
        .collect()
}

pub(crate) fn check_finite_vec(v: &[f64], iteration: usize, quantity: &'static str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            iteration,
            quantity,
            index,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_finite_mat(v: ArrayView2<'_, C64>, iteration: usize, quantity: &'static str) -> Result<()> {
    match crate::linalg::first_non_finite(v) {
        Some(index) => Err(Error::NonFinite {
            iteration,
            quantity,
            index,
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_keeps_minimum() {
        let mut tr = BestTracker::new(f64::INFINITY, 0usize);
        let mut trace = Vec::new();
        for (i, f) in [5.0, 3.0, 4.0].into_iter().enumerate() {
            tr.offer(i + 1, f, || i + 1);
            trace.push(tr.f_best);
        }
        assert_eq!(trace, vec![5.0, 3.0, 3.0]);
        assert_eq!(tr.best, 2);
        assert_eq!(tr.iteration, 2);
        assert!(!tr.offer(4, 3.0, || 4));
    }

    #[test]
    fn detection_threshold() {
        assert_eq!(detect(&[-1.0, 0.0, 2.0]), vec![false, true, true]);
        let prior = (0.1f64 / 0.9).ln();
        assert!(detect(&[prior; 5]).iter().all(|&d| !d));
        let theta = [-0.3, 0.0, 4.0, -7.0];
        let scaled: Vec<f64> = theta.iter().map(|t| t * 13.5).collect();
        assert_eq!(detect(&theta), detect(&scaled));
    }

    #[test]
    fn channel_extraction() {
        let x = Array2::from_shape_fn((6, 2), |(r, c)| C64::new(r as f64, c as f64));
        assert!(extract_channels(x.view(), &[false; 3], 2).is_empty());
        let all = extract_channels(x.view(), &[true; 3], 2);
        assert_eq!(all.len(), 3);
        for (n, block) in &all {
            assert_eq!(block, &x.slice(s![n * 2..n * 2 + 2, ..]));
        }
        let one = extract_channels(x.view(), &[false, true, false], 2);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, 1);
        assert_eq!(one[0].1.len(), 4);
        assert_eq!(one[0].1, x.slice(s![2..4, ..]));
    }

    #[test]
    fn problem_rejects_bad_shapes() {
        let a = Array2::<C64>::zeros((4, 6));
        let y = Array2::<C64>::zeros((4, 2));
        assert!(AmpProblem::new(a.view(), y.view(), vec![1.0; 3], 0.1, 2).is_ok());
        assert!(AmpProblem::new(a.view(), y.view(), vec![1.0; 2], 0.1, 2).is_err());
        let y_bad = Array2::<C64>::zeros((5, 2));
        assert!(AmpProblem::new(a.view(), y_bad.view(), vec![1.0; 3], 0.1, 2).is_err());
        assert!(AmpProblem::new(a.view(), y.view(), vec![0.0; 3], 0.1, 2).is_err());
    }
}
