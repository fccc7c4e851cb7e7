//! Reduced oracle suites behind `gfamp check`.

use rand::Rng;

use crate::denoiser::{eta, eta_prime};
use crate::model::{
    build_measurement_matrix, effective_channels, gen_activities, gen_channels, gen_noise, gen_pilots,
    synthesize_received_circulant, synthesize_received_with_noise, SystemConfig,
};
use crate::oracle::{active_mse_mc, detector_error_mc, posterior_moments};
use crate::rng::{complex_normal, stream};
use crate::se::{error_prob, mse_active, phi, Expectation, SeParams};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// A random small scenario: `K <= 16`, `P <= 4`, `N <= 20`.
pub fn random_small_config<R: Rng + ?Sized>(rng: &mut R) -> SystemConfig {
    let subcarriers = [4, 8, 16][rng.random_range(0..3)];
    SystemConfig {
        devices: rng.random_range(1..=20),
        subcarriers,
        pilot_symbols: rng.random_range(1..=3),
        antennas: rng.random_range(1..=4),
        taps: rng.random_range(1..=4usize.min(subcarriers)),
        rho: 0.3,
        ..SystemConfig::default()
    }
}

/// Relative Frobenius gap between the circulant and linear signal paths for
/// one shared realization.
pub fn model_gap(seed: u64) -> f64 {
    let mut rng = stream(seed);
    let cfg = random_small_config(&mut rng);
    let pilots = gen_pilots(&cfg, &mut rng);
    let a = build_measurement_matrix(pilots.view(), cfg.taps).expect("taps within subcarriers");
    let active = gen_activities(&cfg, &mut rng);
    let (h, _) = gen_channels(&cfg, &vec![70.0; cfg.devices], &mut rng);
    let noise = gen_noise(cfg.pilot_len(), cfg.antennas, cfg.sigma2_mw, &mut rng);
    let x = effective_channels(h.view(), &active);
    let lin = synthesize_received_with_noise(a.view(), x.view(), noise.view()).expect("shapes agree");
    let circ = synthesize_received_circulant(pilots.view(), h.view(), &active, noise.view()).expect("shapes agree");
    let diff: f64 = lin.iter().zip(&circ).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = lin.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    diff / norm
}

pub fn model_equivalence(realizations: usize, seed: u64) -> SuiteReport {
    let worst = (0..realizations as u64)
        .map(|i| model_gap(seed.wrapping_add(i)))
        .fold(0.0, f64::max);
    SuiteReport {
        name: "model-equivalence",
        passed: worst < 1e-9,
        detail: format!("{realizations} realizations, worst relative gap {worst:.3e}"),
    }
}

/// A denoiser input with `y / beta` spanning six decades and `x` drawn from
/// the matching Bernoulli-Gaussian model.
pub fn random_denoiser_input<R: Rng + ?Sized>(rng: &mut R) -> (C64, f64, f64, f64) {
    let beta = 10f64.powf(rng.random_range(-12.0..0.0));
    let y = beta * 10f64.powf(rng.random_range(-3.0..3.0));
    let z = rng.random::<f64>();
    let signal = if rng.random::<f64>() < z { complex_normal(rng, beta) } else { C64::new(0.0, 0.0) };
    (signal + complex_normal(rng, y), y, z, beta)
}

/// Worst relative errors of `eta` and `y * eta_prime` against quadrature.
pub fn denoiser_errors(tuples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..tuples {
        let (x, y, z, beta) = random_denoiser_input(&mut rng);
        let (mean, var) = posterior_moments(x, y, z, beta);
        let e = eta(x, y, z, beta);
        let v = y * eta_prime(x, y, z, beta);
        worst.0 = worst.0.max((e - mean).norm() / (e.norm() + 1e-300));
        worst.1 = worst.1.max(if v > 0.0 { (v - var).abs() / v } else { var.abs() });
    }
    worst
}

pub fn denoiser_quadrature(tuples: usize, seed: u64) -> SuiteReport {
    let (mean_err, var_err) = denoiser_errors(tuples, seed);
    SuiteReport {
        name: "denoiser-quadrature",
        passed: mean_err <= 1e-7 && var_err <= 1e-6,
        detail: format!("{tuples} inputs, worst mean error {mean_err:.3e}, worst variance error {var_err:.3e}"),
    }
}

pub fn se_cross_validation(samples: usize, seed: u64) -> SuiteReport {
    let params = SeParams {
        devices: 200,
        taps: 2,
        pilot_len: 96,
        antennas: 2,
        rho: 0.1,
        beta: 3.73e-11,
        sigma2: 3.82e-12,
    };
    let mc = Expectation::MonteCarlo { samples, seed };
    let mut failures = Vec::new();
    let mut checks = 0;
    for (i, &tau) in [5e-12, 2e-11, 8e-11].iter().enumerate() {
        checks += 3;
        let a = phi(tau, &params, mc).expect("valid parameters");
        let b = phi(tau, &params, Expectation::Quadrature).expect("valid parameters");
        if (a.mean - b.mean).abs() > 3.0 * a.std_err + 1e-30 {
            failures.push(format!("phi at tau={tau:e}"));
        }
        let k = params.coefficients();
        let p = error_prob(tau, k, params.beta, params.rho).expect("valid parameters");
        let sim = detector_error_mc(tau, k, params.beta, params.rho, samples, seed ^ (i as u64 + 1));
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        if (sim.mean - p).abs() > 3.0 * se {
            failures.push(format!("error probability at tau={tau:e}"));
        }
        let m = mse_active(tau, k, params.beta, params.rho, Expectation::Quadrature).expect("valid parameters");
        let sim = active_mse_mc(tau, k, params.beta, params.rho, samples, seed ^ (i as u64 + 11));
        if (sim.mean - m.mean).abs() > 3.0 * sim.std_err {
            failures.push(format!("active MSE at tau={tau:e}"));
        }
    }
    SuiteReport {
        name: "se-cross-validation",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{checks} comparisons within 3 standard errors")
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    }
}

pub fn run_checks(seed: u64) -> Vec<SuiteReport> {
    vec![
        model_equivalence(25, seed),
        denoiser_quadrature(200, seed),
        se_cross_validation(100_000, seed),
    ]
}
