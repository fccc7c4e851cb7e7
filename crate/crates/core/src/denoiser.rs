//! Scalar Bernoulli-Gaussian MMSE denoiser and log-domain likelihood ratios.
//!
//! The prior on a coefficient is `(1 - z) delta(x) + z CN(x; 0, beta)` and the
//! pseudo-observation is `r = x + CN(0, y)`. Every density ratio is handled as
//! a difference of log-densities and pushed through a stable logistic, since
//! milliwatt-scale variances make direct density evaluation overflow.

use std::f64::consts::PI;

use crate::{Error, Result, C64};

/// `log f_CN(0; r, v) = -ln(pi v) - |r|^2 / v`.
pub fn log_cn0(r: C64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {v}")));
    }
    Ok(-(PI * v).ln() - r.norm_sqr() / v)
}

/// `log f_CN(0; r, tau + beta) - log f_CN(0; r, tau)` as a function of
/// `|r|^2`: the log-likelihood ratio of "active" against "inactive" for one
/// coefficient.
#[inline]
pub fn log_density_ratio(r_sq: f64, tau: f64, beta: f64) -> f64 {
    -(beta / tau).ln_1p() + r_sq * (beta / (tau * (tau + beta)))
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(p / (1 - p))`, infinite at the endpoints.
#[inline]
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Posterior probability that the coefficient is nonzero.
pub fn activity_gate(x: C64, y: f64, z: f64, beta: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    logistic(logit(z) + log_density_ratio(x.norm_sqr(), y, beta))
}

/// Posterior mean `E[x | r = x_in]`.
pub fn eta(x: C64, y: f64, z: f64, beta: f64) -> C64 {
    x * (beta / (y + beta) * activity_gate(x, y, z, beta))
}

/// Derivative of [`eta`] in `x` with `conj(x)` held fixed. `y * eta_prime`
/// is the posterior variance.
pub fn eta_prime(x: C64, y: f64, z: f64, beta: f64) -> f64 {
    let g = activity_gate(x, y, z, beta);
    eta_prime_from_gate(x.norm_sqr(), y, beta, g, g * (1.0 - g))
}

/// [`eta`] and [`eta_prime`] for a gate given by its log-odds `t`, i.e.
/// `g = logistic(t)`. Used when the log-odds are already available and
/// converting them to a probability and back would lose precision.
#[inline]
pub fn eta_with_log_odds(x: C64, y: f64, beta: f64, t: f64) -> (C64, f64) {
    let g = logistic(t);
    let spread = g * logistic(-t);
    let x_sq = x.norm_sqr();
    (x * (beta / (y + beta) * g), eta_prime_from_gate(x_sq, y, beta, g, spread))
}

/// `(beta / (y + beta)) (g + |x|^2 g (1 - g) beta / (y (y + beta)))`, where
/// `spread = g (1 - g)` is passed in so callers can compute it without
/// cancellation.
#[inline]
pub(crate) fn eta_prime_from_gate(x_sq: f64, y: f64, beta: f64, g: f64, spread: f64) -> f64 {
    let shrink = beta / (y + beta);
    let curvature = beta / (y * (y + beta));
    let mut extra = 0.0;
    if spread > 0.0 {
        extra = spread * x_sq * curvature;
        if !extra.is_finite() {
            // |x|^2 * curvature overflowed while the gate is saturated
            extra = (spread.ln() + x_sq.ln() + curvature.ln()).exp();
        }
    }
    (shrink * (g + extra)).max(0.0)
}

/// Device log-odds of activity given a block of pseudo-observations with a
/// common noise variance `tau`.
pub fn llr_theta(r: &[C64], tau: f64, beta: f64, rho: f64) -> f64 {
    let energy: f64 = r.iter().map(|v| v.norm_sqr()).sum();
    logit(rho) + r.len() as f64 * -(beta / tau).ln_1p() + energy * (beta / (tau * (tau + beta)))
}

/// [`llr_theta`] for a `P x M` block whose column `m` has noise variance
/// `tau[m]`. `column_energy[m]` is `sum_p |r_{p,m}|^2`.
pub fn llr_theta_columns(column_energy: &[f64], taps: usize, tau: &[f64], beta: f64, rho: f64) -> f64 {
    debug_assert_eq!(column_energy.len(), tau.len());
    let p = taps as f64;
    column_energy
        .iter()
        .zip(tau)
        .fold(logit(rho), |acc, (&e, &t)| {
            acc - p * (beta / t).ln_1p() + e * (beta / (t * (t + beta)))
        })
}

/// Activity belief for one coefficient with its own contribution removed
/// from the device log-odds `theta`.
#[inline]
pub fn lambda_local(theta: f64, r_pm: C64, tau: f64, beta: f64) -> f64 {
    logistic(theta - log_density_ratio(r_pm.norm_sqr(), tau, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn log_cn0_closed_forms() {
        assert!(log_cn0(c(0.0, 0.0), 1.0 / PI).unwrap().abs() < 1e-15);
        let v = log_cn0(c(1.0, 0.0), 1.0).unwrap();
        assert!((v - (-PI.ln() - 1.0)).abs() < 1e-15);
        assert!(log_cn0(c(1.0, 0.0), 0.0).is_err());
        assert!(log_cn0(c(1.0, 0.0), -2.0).is_err());
    }

    #[test]
    fn log_cn0_matches_density() {
        for &(re, im, v) in &[(0.3, -0.2, 0.7), (2.0, 1.0, 3.0), (1e-6, 0.0, 1e-11)] {
            let r = c(re, im);
            let direct = (-(r.norm_sqr()) / v).exp() / (PI * v);
            let via_log = log_cn0(r, v).unwrap().exp();
            assert!((direct - via_log).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn gate_limits_and_hand_value() {
        let x = c(0.4, -1.0);
        assert_eq!(activity_gate(x, 0.5, 1.0, 2.0), 1.0);
        assert_eq!(activity_gate(x, 0.5, 0.0, 2.0), 0.0);
        let g = activity_gate(c(0.0, 0.0), 1.0, 0.5, 1.0);
        assert!((g - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn eta_limits() {
        assert_eq!(eta(c(0.0, 0.0), 1.0, 0.3, 2.0), c(0.0, 0.0));
        let x = c(1.5, -0.5);
        let wiener = x * (2.0 / 3.0);
        assert!((eta(x, 1.0, 1.0, 2.0) - wiener).norm() < 1e-15);
        assert!((eta_prime(x, 1.0, 1.0, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((eta_prime(c(7.0, 3.0), 1.0, 1.0, 2.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn eta_prime_at_origin() {
        let (y, z, beta) = (0.3, 0.2, 1.7);
        let g = activity_gate(c(0.0, 0.0), y, z, beta);
        let expected = beta / (y + beta) * g;
        assert!((eta_prime(c(0.0, 0.0), y, z, beta) - expected).abs() < 1e-16);
    }

    #[test]
    fn eta_prime_matches_wirtinger_finite_difference() {
        // d/dx with conj(x) fixed: (f(x+h) - f(x-h) - i(f(x+ih) - f(x-ih))) / 4h
        let (y, z, beta) = (0.8, 0.35, 1.3);
        let x = c(0.9, -0.6);
        let h = 1e-6;
        let f = |u: C64| eta(u, y, z, beta);
        let d = (f(x + h) - f(x - h) - C64::i() * (f(x + C64::i() * h) - f(x - C64::i() * h))) / (4.0 * h);
        assert!(d.im.abs() < 1e-8);
        assert!((d.re - eta_prime(x, y, z, beta)).abs() < 1e-8);
    }

    #[test]
    fn one_plus_zero_j_matches_quadrature() {
        let x = c(1.0, 0.0);
        let (mean, var) = crate::oracle::posterior_moments(x, 1.0, 0.5, 1.0);
        let e = eta(x, 1.0, 0.5, 1.0);
        assert!((e - mean).norm() < 1e-8);
        assert!((eta_prime(x, 1.0, 0.5, 1.0) - var).abs() < 1e-8);
    }

    #[test]
    fn llr_theta_examples() {
        let theta = llr_theta(&[c(0.0, 0.0)], 2.0, 2.0, 0.5);
        assert!((theta + 2f64.ln()).abs() < 1e-15);
        let r = [c(1.0, 2.0), c(-0.5, 0.1)];
        let prior = llr_theta(&r, 1.0, 1e-300, 0.2);
        assert!((prior - logit(0.2)).abs() < 1e-12);
        let energies = [r[0].norm_sqr(), r[1].norm_sqr()];
        let a = llr_theta(&r, 0.7, 1.1, 0.1);
        let b = llr_theta_columns(&[energies[0] + energies[1]], 2, &[0.7], 1.1, 0.1);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn lambda_local_limits() {
        let r = c(0.5, 0.5);
        assert_eq!(lambda_local(f64::INFINITY, r, 1.0, 2.0), 1.0);
        assert_eq!(lambda_local(f64::NEG_INFINITY, r, 1.0, 2.0), 0.0);
        let own = log_density_ratio(r.norm_sqr(), 1.0, 2.0);
        assert!((lambda_local(own, r, 1.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_odds_path_agrees_with_probability_path() {
        let x = c(0.3, 1.1);
        let (y, z, beta) = (0.4, 0.25, 2.0);
        let t = logit(z) + log_density_ratio(x.norm_sqr(), y, beta);
        let (e, d) = eta_with_log_odds(x, y, beta, t);
        assert!((e - eta(x, y, z, beta)).norm() < 1e-14);
        assert!((d - eta_prime(x, y, z, beta)).abs() < 1e-14);
    }

    #[test]
    fn huge_inputs_stay_finite() {
        for &z in &[0.0, 1e-300, 0.5, 1.0 - 1e-16, 1.0] {
            for &mag in &[0.0, 1e-100, 1.0, 1e50, 1e100] {
                for &(y, beta) in &[(1e-30, 1.0), (1.0, 1e-30), (3.8e-12, 3.7e-11)] {
                    let x = c(mag, -mag);
                    let g = activity_gate(x, y, z, beta);
                    let e = eta(x, y, z, beta);
                    let d = eta_prime(x, y, z, beta);
                    assert!(g.is_finite() && e.re.is_finite() && e.im.is_finite() && d.is_finite());
                    assert!((0.0..=1.0).contains(&g) && d >= 0.0);
                }
            }
        }
    }

    fn arb_input() -> impl Strategy<Value = (C64, f64, f64, f64)> {
        (-6.0..6.0f64, -6.0..6.0f64, -12.0..2.0f64, -3.0..3.0f64, 0.0..=1.0f64).prop_map(
            |(re, im, log_beta, log_ratio, z)| {
                let beta = 10f64.powf(log_beta);
                let y = beta * 10f64.powf(log_ratio);
                let s = (beta + y).sqrt();
                (C64::new(re * s, im * s), y, z, beta)
            },
        )
    }

    proptest! {
        #[test]
        fn gate_is_a_probability_and_derivative_nonnegative((x, y, z, beta) in arb_input()) {
            let g = activity_gate(x, y, z, beta);
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!(eta_prime(x, y, z, beta) >= 0.0);
        }

        #[test]
        fn phase_equivariance((x, y, z, beta) in arb_input(), phi in 0.0..(2.0 * PI)) {
            let rot = C64::from_polar(1.0, phi);
            let a = eta(rot * x, y, z, beta);
            let b = rot * eta(x, y, z, beta);
            prop_assert!((a - b).norm() <= 1e-12 * b.norm() + 1e-300);
            let d0 = eta_prime(x, y, z, beta);
            let d1 = eta_prime(rot * x, y, z, beta);
            prop_assert!((d0 - d1).abs() <= 1e-10 * d0.abs());
        }

        #[test]
        fn shrinkage_is_bounded((x, y, z, beta) in arb_input()) {
            let bound = beta / (y + beta) * x.norm();
            prop_assert!(eta(x, y, z, beta).norm() <= bound * (1.0 + 1e-15));
        }

        #[test]
        fn theta_grows_with_energy(scale in 1.0001..10.0f64, re in -3.0..3.0f64, im in -3.0..3.0f64) {
            let r = [C64::new(re, im), C64::new(0.5, -0.2)];
            let bigger = [r[0] * scale, r[1] * scale];
            prop_assert!(llr_theta(&bigger, 0.9, 1.4, 0.1) > llr_theta(&r, 0.9, 1.4, 0.1));
        }
    }
}
