//! Slow, independent reference computations.
//!
//! None of these share code paths with the implementations they check: the
//! measurement matrix is assembled entry by entry from its definition, the
//! denoiser is compared against numerically integrated posterior moments, and
//! the analytical detector metrics against direct simulation.

use std::f64::consts::PI;

use ndarray::{s, Array2, ArrayView3};
use rand::Rng;
use rayon::prelude::*;

use crate::denoiser::{eta, lambda_local, llr_theta};
use crate::model::dft_matrix;
use crate::quad::GaussLegendre;
use crate::rng::{complex_normal, mix64, stream};
use crate::C64;

/// `A` built from `Ã_{q,n} = (Fᴴ diag(s_{q,n}) F)[:, 0..P]` by explicit sums.
pub fn naive_measurement_matrix(pilots: ArrayView3<'_, C64>, taps: usize) -> Array2<C64> {
    let (n, q, k) = pilots.dim();
    let f = dft_matrix(k);
    let mut a = Array2::zeros((q * k, n * taps));
    for dev in 0..n {
        for sym in 0..q {
            let pilot = pilots.slice(s![dev, sym, ..]);
            for row in 0..k {
                for tap in 0..taps {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..k {
                        acc += f[[j, row]].conj() * pilot[j] * f[[j, tap]];
                    }
                    a[[sym * k + row, dev * taps + tap]] = acc;
                }
            }
        }
    }
    a
}

fn log_cn(x: C64, mean: C64, v: f64) -> f64 {
    -(PI * v).ln() - (x - mean).norm_sqr() / v
}

/// Posterior mean and variance of `x` given `r = x + CN(0, y)` under the prior
/// `(1 - z) delta(x) + z CN(x; 0, beta)`, by numerical integration.
///
/// The continuous part is integrated on a polar grid centred on its
/// numerically located mode (Gauss-Legendre in the radius out to 14 local
/// standard deviations, trapezoid in the angle); the point mass at zero is
/// added exactly. All weights are handled relative to a common log offset.
pub fn posterior_moments(r: C64, y: f64, z: f64, beta: f64) -> (C64, f64) {
    if z <= 0.0 {
        return (C64::new(0.0, 0.0), 0.0);
    }
    let log_cont = |x: C64| z.ln() + log_cn(x, C64::new(0.0, 0.0), beta) + log_cn(r, x, y);

    let mode = if r.norm() == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        r * golden_max(|t| log_cont(r * t), 0.0, 1.0)
    };
    let h = beta.min(y).sqrt();
    let curvature = (log_cont(mode + h) - 2.0 * log_cont(mode) + log_cont(mode - h)) / (h * h);
    let sd = (-2.0 / curvature).sqrt();

    let radial = GaussLegendre::new(24);
    let angles = 64;
    let d_phi = 2.0 * PI / angles as f64;
    let mut nodes = Vec::with_capacity(7 * 24 * angles);
    for panel in 0..7 {
        let (lo, hi) = (2.0 * panel as f64 * sd, 2.0 * (panel + 1) as f64 * sd);
        for (rad, w) in radial.mapped(lo, hi) {
            for j in 0..angles {
                let x = mode + C64::from_polar(rad, j as f64 * d_phi);
                nodes.push((x, w * rad * d_phi, log_cont(x)));
            }
        }
    }
    let log_point = if z < 1.0 {
        (-z).ln_1p() + log_cn(r, C64::new(0.0, 0.0), y)
    } else {
        f64::NEG_INFINITY
    };
    let offset = nodes
        .iter()
        .map(|n| n.2)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(log_point);

    let point = (log_point - offset).exp();
    let mut mass = point;
    let mut first = C64::new(0.0, 0.0);
    for &(x, w, lf) in &nodes {
        let p = w * (lf - offset).exp();
        mass += p;
        first += x * p;
    }
    let mean = first / mass;
    let mut second = point * mean.norm_sqr();
    for &(x, w, lf) in &nodes {
        second += w * (lf - offset).exp() * (x - mean).norm_sqr();
    }
    (mean, second / mass)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMean {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

const BLOCK: usize = 8192;

fn blocked_mean<F>(samples: usize, seed: u64, draw: F) -> SampleMean
where
    F: Fn(&mut crate::rng::Stream) -> f64 + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    let parts: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(mix64(seed.wrapping_add(mix64(b as u64 + 1))));
            let len = BLOCK.min(samples - b * BLOCK);
            (0..len).fold((0.0, 0.0), |(s, s2), _| {
                let v = draw(&mut rng);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (sum, sum_sq) = parts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    SampleMean {
        mean,
        std_err: (var / n).sqrt(),
        samples,
    }
}

/// Error rate of the `theta >= 0` detector on `r = a h + sqrt(tau) w` with
/// `a ~ Bernoulli(rho)`, `h ~ CN(0, beta I)` over `coefficients` entries.
pub fn detector_error_mc(tau: f64, coefficients: usize, beta: f64, rho: f64, samples: usize, seed: u64) -> SampleMean {
    blocked_mean(samples, seed, |rng| {
        let active = rng.random::<f64>() < rho;
        let r: Vec<C64> = (0..coefficients)
            .map(|_| {
                let h = if active { complex_normal(rng, beta) } else { C64::new(0.0, 0.0) };
                h + complex_normal(rng, tau)
            })
            .collect();
        let decided = llr_theta(&r, tau, beta, rho) >= 0.0;
        (decided != active) as u8 as f64
    })
}

/// Per-coefficient squared error of an active device's estimate, where each
/// coefficient is denoised by [`eta`] with its leave-one-out activity belief.
pub fn active_mse_mc(tau: f64, coefficients: usize, beta: f64, rho: f64, samples: usize, seed: u64) -> SampleMean {
    blocked_mean(samples, seed, |rng| {
        let h: Vec<C64> = (0..coefficients).map(|_| complex_normal(rng, beta)).collect();
        let r: Vec<C64> = h.iter().map(|&v| v + complex_normal(rng, tau)).collect();
        let theta = llr_theta(&r, tau, beta, rho);
        let err: f64 = h
            .iter()
            .zip(&r)
            .map(|(&hv, &rv)| {
                let lam = lambda_local(theta, rv, tau, beta);
                (hv - eta(rv, tau, lam, beta)).norm_sqr()
            })
            .sum();
        err / coefficients as f64
    })
}
