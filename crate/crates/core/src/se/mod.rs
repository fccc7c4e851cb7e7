//! Analytical performance of AMP-A-EC: the state-evolution recursion for the
//! pseudo-observation noise variance `tau`, the detector's error probability
//! and the channel MSE of an active device.
//!
//! The scalar model behind every expectation is `r = x + sqrt(tau) w` over
//! the `P M` coefficients of one device, with `w ~ CN(0, I)` and `x` either
//! zero or `CN(0, beta I)`. The activity gate is evaluated on the whole
//! vector: its log-odds are `logit(rho) + sum` of the per-coefficient
//! log-likelihood ratios, which depend on `r` only through `‖r‖²`.

mod gamma;

pub use gamma::reg_gamma;

use rand::Rng;
use rayon::prelude::*;

use crate::denoiser::{logistic, logit};
use crate::quad::integrate_adaptive;
use crate::rng::{complex_normal, mix64, stream};
use crate::{Error, Result};

/// Monte Carlo sample blocks are this long; each block has its own seed, so
/// results do not depend on how blocks are spread over threads.
const BLOCK: usize = 4096;
pub const MIN_SAMPLES: usize = 1000;

/// Parameters of a homogeneous scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeParams {
    pub devices: usize,
    pub taps: usize,
    pub pilot_len: usize,
    pub antennas: usize,
    pub rho: f64,
    pub beta: f64,
    pub sigma2: f64,
}

impl SeParams {
    pub fn coefficients(&self) -> usize {
        self.taps * self.antennas
    }

    fn load(&self) -> f64 {
        (self.devices * self.taps) as f64 / self.pilot_len as f64
    }

    fn validate(&self) -> Result<()> {
        if self.devices == 0 || self.taps == 0 || self.pilot_len == 0 || self.antennas == 0 {
            return Err(Error::Domain("dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho = {} not in [0, 1]", self.rho)));
        }
        if !(self.beta > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::Domain("beta and sigma2 must be positive".into()));
        }
        Ok(())
    }
}

/// How expectations over the scalar model are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    MonteCarlo { samples: usize, seed: u64 },
    /// One-dimensional quadrature over the Gamma-distributed `‖r‖²`.
    Quadrature,
}

impl Default for Expectation {
    fn default() -> Self {
        Expectation::MonteCarlo {
            samples: 100_000,
            seed: 0x5e5e_5e5e,
        }
    }
}

impl Expectation {
    fn check(&self) -> Result<()> {
        match *self {
            Expectation::MonteCarlo { samples, .. } if samples < MIN_SAMPLES => Err(Error::Domain(format!(
                "{samples} Monte Carlo samples is below the minimum of {MIN_SAMPLES}"
            ))),
            _ => Ok(()),
        }
    }
}

/// A Monte Carlo mean with its standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Log-odds of activity for a device whose pseudo-observation has energy `energy`.
#[inline]
pub fn vector_log_odds(energy: f64, coefficients: usize, tau: f64, beta: f64, rho: f64) -> f64 {
    logit(rho) - coefficients as f64 * (beta / tau).ln_1p() + energy * (beta / (tau * (tau + beta)))
}

/// `sigma2 + (N P / L) rho beta`.
pub fn initial_tau(params: &SeParams) -> f64 {
    params.sigma2 + params.load() * params.rho * params.beta
}

/// `tau' = sigma2 + (N P / L) (rho beta tau / (beta + tau) + phi(tau))`.
pub fn se_step(tau: f64, params: &SeParams, method: Expectation) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let (beta, rho) = (params.beta, params.rho);
    let wiener = rho * beta * tau / (beta + tau);
    Ok(params.sigma2 + params.load() * (wiener + phi(tau, params, method)?.mean))
}

/// `(1 / P M) E[g (1 - g) beta² / (beta + tau)² ‖r‖²]` with `r` drawn from the
/// Bernoulli-Gaussian prior plus noise of variance `tau`.
pub fn phi(tau: f64, params: &SeParams, method: Expectation) -> Result<Estimate> {
    params.validate()?;
    method.check()?;
    if params.rho == 0.0 {
        return Ok(Estimate { mean: 0.0, std_err: 0.0 });
    }
    let k = params.coefficients();
    let (beta, rho) = (params.beta, params.rho);
    let scale = (beta / (beta + tau)).powi(2) / k as f64;
    let integrand = move |energy: f64| {
        let t = vector_log_odds(energy, k, tau, beta, rho);
        logistic(t) * logistic(-t) * energy * scale
    };
    match method {
        Expectation::MonteCarlo { samples, seed } => Ok(monte_carlo(samples, seed, |rng| {
            let active = rng.random::<f64>() < rho;
            integrand(draw_energy(rng, k, if active { beta } else { 0.0 }, tau))
        })),
        Expectation::Quadrature => {
            let crossing = gate_crossing(k, tau, beta, rho);
            let active = gamma_expectation(k, crossing / (beta + tau), tau / beta, |g| {
                integrand((beta + tau) * g)
            });
            let idle = gamma_expectation(k, crossing / tau, (tau + beta) / beta, |g| integrand(tau * g));
            Ok(Estimate {
                mean: rho * active + (1.0 - rho) * idle,
                std_err: 0.0,
            })
        }
    }
}

/// Per-coefficient MSE of an active device's channel estimate,
/// `beta tau / (beta + tau) + (1 / P M) E[(1 - g)² beta² / (beta + tau)² ‖r‖²]`
/// with `r = h + sqrt(tau) w`, `h ~ CN(0, beta I)`.
pub fn mse_active(tau: f64, coefficients: usize, beta: f64, rho: f64, method: Expectation) -> Result<Estimate> {
    method.check()?;
    if !(tau > 0.0 && beta > 0.0 && coefficients > 0) {
        return Err(Error::Domain("tau, beta and PM must be positive".into()));
    }
    let k = coefficients;
    let wiener = beta * tau / (beta + tau);
    let scale = (beta / (beta + tau)).powi(2) / k as f64;
    let integrand = move |energy: f64| {
        let miss = logistic(-vector_log_odds(energy, k, tau, beta, rho));
        miss * miss * energy * scale
    };
    let extra = match method {
        Expectation::MonteCarlo { samples, seed } => {
            monte_carlo(samples, seed, |rng| integrand(draw_energy(rng, k, beta, tau)))
        }
        Expectation::Quadrature => {
            let crossing = gate_crossing(k, tau, beta, rho);
            Estimate {
                mean: gamma_expectation(k, crossing / (beta + tau), tau / beta, |g| integrand((beta + tau) * g)),
                std_err: 0.0,
            }
        }
    };
    Ok(Estimate {
        mean: wiener + extra.mean,
        std_err: extra.std_err,
    })
}

/// Probability that the `theta >= 0` rule misclassifies a device:
/// `rho P(PM, (tau/beta) ln((1-rho)/rho) + b PM)
///  + (1-rho) Q(PM, ((tau+beta)/beta) ln((1-rho)/rho) + c PM)`
/// with `b = (tau/beta) ln(1 + beta/tau)` and `c = ((tau+beta)/beta) ln(1 + beta/tau)`.
/// Negative Gamma arguments are clamped to zero.
pub fn error_prob(tau: f64, coefficients: usize, beta: f64, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        check_detector_args(tau, coefficients, beta, rho)?;
        return Ok(0.0);
    }
    let (missed, alarm) = error_components(tau, coefficients, beta, rho)?;
    Ok(rho * missed + (1.0 - rho) * alarm)
}

/// Missed-detection probability of an active device and false-alarm
/// probability of an inactive one. At `rho = 0` nothing is ever declared
/// active, so both are zero.
pub fn error_components(tau: f64, coefficients: usize, beta: f64, rho: f64) -> Result<(f64, f64)> {
    check_detector_args(tau, coefficients, beta, rho)?;
    if rho == 0.0 {
        return Ok((0.0, 0.0));
    }
    let pm = coefficients as f64;
    let prior = ((1.0 - rho) / rho).ln();
    let gain = (beta / tau).ln_1p();
    let b = tau / beta * gain;
    let c = (tau + beta) / beta * gain;
    let miss_arg = (tau / beta * prior + b * pm).max(0.0);
    let alarm_arg = ((tau + beta) / beta * prior + c * pm).max(0.0);
    let (missed, _) = reg_gamma(pm, miss_arg)?;
    let (_, alarm) = reg_gamma(pm, alarm_arg)?;
    Ok((missed, alarm))
}

fn check_detector_args(tau: f64, coefficients: usize, beta: f64, rho: f64) -> Result<()> {
    if !(tau > 0.0 && beta > 0.0 && coefficients > 0) {
        return Err(Error::Domain("tau, beta and PM must be positive".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} not in [0, 1)")));
    }
    Ok(())
}

/// State-evolution trajectory with the analytical metrics at each step.
/// Entry `t` describes iteration `t + 1` of the algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SePrediction {
    pub tau: Vec<f64>,
    pub p_err: Vec<f64>,
    pub mse: Vec<f64>,
    pub params: SeParams,
}

pub fn predict(params: &SeParams, steps: usize, method: Expectation) -> Result<SePrediction> {
    params.validate()?;
    method.check()?;
    let k = params.coefficients();
    let mut tau = Vec::with_capacity(steps + 1);
    tau.push(initial_tau(params));
    for t in 0..steps {
        tau.push(se_step(tau[t], params, method)?);
    }
    let p_err = tau
        .iter()
        .map(|&t| error_prob(t, k, params.beta, params.rho))
        .collect::<Result<Vec<_>>>()?;
    let mse = tau
        .iter()
        .map(|&t| mse_active(t, k, params.beta, params.rho, method).map(|e| e.mean))
        .collect::<Result<Vec<_>>>()?;
    Ok(SePrediction {
        tau,
        p_err,
        mse,
        params: *params,
    })
}

/// `‖x + sqrt(tau) w‖²` for `k` complex coefficients, `x ~ CN(0, beta I)`
/// (`beta = 0` for an inactive device).
fn draw_energy<R: Rng + ?Sized>(rng: &mut R, k: usize, beta: f64, tau: f64) -> f64 {
    (0..k)
        .map(|_| {
            let x = if beta > 0.0 { complex_normal(rng, beta) } else { Default::default() };
            (x + complex_normal(rng, tau)).norm_sqr()
        })
        .sum()
}

fn monte_carlo<F>(samples: usize, seed: u64, draw: F) -> Estimate
where
    F: Fn(&mut crate::rng::Stream) -> f64 + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(mix64(seed ^ mix64(b as u64)));
            let len = BLOCK.min(samples - b * BLOCK);
            (0..len).fold((0.0, 0.0), |(s, s2), _| {
                let v = draw(&mut rng);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Estimate {
        mean,
        std_err: (var / n).sqrt(),
    }
}

/// Energy at which the vector gate crosses one half.
fn gate_crossing(k: usize, tau: f64, beta: f64, rho: f64) -> f64 {
    let threshold = k as f64 * (beta / tau).ln_1p() - logit(rho);
    (threshold * tau * (tau + beta) / beta).max(0.0)
}

/// `E[f(G)]` for `G ~ Gamma(k, 1)`. The gate in `f` switches over a width
/// of about `width` around `knee`; panel edges are placed at geometrically
/// growing offsets from it so the switch is resolved however sharp it is.
fn gamma_expectation<F: Fn(f64) -> f64>(k: usize, knee: f64, width: f64, f: F) -> f64 {
    let shape = k as f64;
    let log_norm = statrs::function::gamma::ln_gamma(shape);
    let density = |g: f64| {
        if g <= 0.0 {
            if k == 1 { 1.0 } else { 0.0 }
        } else {
            ((shape - 1.0) * g.ln() - g - log_norm).exp()
        }
    };
    let upper = shape + 40.0 * shape.sqrt() + 60.0;
    let mut breaks = vec![(shape - 1.0).max(0.0), knee];
    let mut offset = width;
    while offset < upper {
        breaks.push(knee - offset);
        breaks.push(knee + offset);
        offset *= 4.0;
    }
    breaks.retain(|b| b.is_finite() && *b > 0.0 && *b < upper);
    breaks.sort_by(f64::total_cmp);
    integrate_adaptive(|g| density(g) * f(g), 0.0, upper, &breaks, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(pilot_len: usize) -> SeParams {
        SeParams {
            devices: 200,
            taps: 2,
            pilot_len,
            antennas: 8,
            rho: 0.1,
            beta: 3.73e-11,
            sigma2: 3.82e-12,
        }
    }

    #[test]
    fn initial_tau_at_desk_scale() {
        let t0 = initial_tau(&desk(64));
        assert!((t0 - 2.71e-11).abs() < 0.01e-11, "tau0 = {t0:e}");
    }

    #[test]
    fn empty_support_collapses_to_noise() {
        let mut p = desk(64);
        p.rho = 0.0;
        let t = se_step(5e-11, &p, Expectation::default()).unwrap();
        assert_eq!(t, p.sigma2);
        assert_eq!(phi(1e-11, &p, Expectation::Quadrature).unwrap().mean, 0.0);
        let pred = predict(&p, 5, Expectation::default()).unwrap();
        assert!(pred.p_err.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tau_never_drops_below_noise() {
        let pred = predict(&desk(64), 20, Expectation::default()).unwrap();
        assert!(pred.tau.iter().all(|&t| t >= 3.82e-12));
        assert_eq!(pred.tau.len(), 21);
    }

    #[test]
    fn zero_steps_give_single_entry() {
        let pred = predict(&desk(192), 0, Expectation::default()).unwrap();
        assert_eq!(pred.tau.len(), 1);
        assert_eq!(pred.p_err.len(), 1);
        assert_eq!(pred.mse.len(), 1);
        assert_eq!(pred.tau[0], initial_tau(&desk(192)));
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = Expectation::MonteCarlo { samples: 999, seed: 1 };
        assert!(phi(1e-11, &desk(64), m).is_err());
        assert!(mse_active(1e-11, 16, 1e-10, 0.1, m).is_err());
    }

    #[test]
    fn phi_bounded_when_everyone_is_active() {
        let mut p = desk(64);
        p.rho = 1.0;
        for tau in [1e-13, 1e-12, 1e-11, 1e-10] {
            let v = phi(tau, &p, Expectation::default()).unwrap().mean;
            assert!(v >= 0.0 && v <= p.rho * p.beta);
        }
    }

    #[test]
    fn phi_paths_agree() {
        let p = desk(96);
        for tau in [4e-12, 1e-11, 3e-11, 1e-10] {
            let mc = phi(tau, &p, Expectation::default()).unwrap();
            let q = phi(tau, &p, Expectation::Quadrature).unwrap();
            assert!((mc.mean - q.mean).abs() <= 3.0 * mc.std_err + 1e-30, "tau={tau:e}: {mc:?} vs {q:?}");
        }
    }

    #[test]
    fn mse_paths_agree_and_exceed_wiener() {
        for tau in [4e-12, 1e-11, 5e-11] {
            let beta = 3.73e-11;
            let mc = mse_active(tau, 16, beta, 0.1, Expectation::default()).unwrap();
            let q = mse_active(tau, 16, beta, 0.1, Expectation::Quadrature).unwrap();
            assert!((mc.mean - q.mean).abs() <= 3.0 * mc.std_err + 1e-30);
            assert!(mc.mean >= beta * tau / (beta + tau));
        }
    }

    #[test]
    fn mse_vanishes_without_noise() {
        let v = mse_active(1e-20, 4, 1.0, 0.1, Expectation::Quadrature).unwrap().mean;
        assert!(v < 1e-15);
    }

    #[test]
    fn error_prob_hand_value() {
        let p = error_prob(1.0, 1, 1.0, 0.5).unwrap();
        assert!((p - 0.375).abs() < 1e-14);
        assert_eq!(error_prob(1.0, 4, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn error_prob_decreases_with_coefficients() {
        let (tau, beta, rho) = (1.0, 3.0, 0.1);
        let mut prev = f64::INFINITY;
        for pm in [1, 2, 4, 8, 16, 32, 64, 128, 256] {
            let p = error_prob(tau, pm, beta, rho).unwrap();
            assert!(p < prev, "PM={pm}: {p} !< {prev}");
            prev = p;
        }
        assert!(error_prob(1.0, 512, 10.0, 0.1).unwrap() < 1e-6);
    }

    #[test]
    fn metrics_continuous_in_tau() {
        let (beta, rho) = (3.73e-11, 0.1);
        for tau in [2e-12, 1e-11, 4e-11, 2e-10] {
            let dt = tau * 1e-4;
            let a = error_prob(tau, 16, beta, rho).unwrap();
            let b = error_prob(tau + dt, 16, beta, rho).unwrap();
            assert!((a - b).abs() < 1e-3);
            let a = mse_active(tau, 16, beta, rho, Expectation::default()).unwrap().mean;
            let b = mse_active(tau + dt, 16, beta, rho, Expectation::default()).unwrap().mean;
            assert!((a - b).abs() < 1e-3 * a);
        }
    }

    #[test]
    fn converges_when_pilots_are_long() {
        let pred = predict(&desk(192), 50, Expectation::Quadrature).unwrap();
        for w in pred.tau[1..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
        let n = pred.tau.len();
        assert!((pred.tau[n - 1] - pred.tau[n - 2]).abs() / pred.tau[n - 1] < 1e-6);
        for w in pred.p_err[2..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn block_partition_is_deterministic() {
        let m = Expectation::MonteCarlo { samples: 10_000, seed: 9 };
        let a = phi(1e-11, &desk(64), m).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| phi(1e-11, &desk(64), m).unwrap());
        assert_eq!(a, b);
    }
}
