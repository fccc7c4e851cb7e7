//! AMP with effective-channel estimation (AMP-A-EC).
//!
//! Each iteration forms pseudo-observations `R = X̂ + Aᴴ Z`, scores every
//! device by its log-odds of activity, denoises coefficient-wise with the
//! Bernoulli-Gaussian MMSE estimator and refreshes the residual with the
//! Onsager correction. The GROUP-LASSO surrogate
//! `½‖Y − A X̂‖² + Σ_i ‖X̂_{i,:}‖` picks the best iterate.

use std::time::Instant;

use ndarray::{Array2, Array3, Axis};

use crate::denoiser::{eta_prime_from_gate, llr_theta_columns, logistic, logit};
use crate::linalg::{fro_norm_sq, gemm_onto, row_norm_sum};
use crate::problem::{
    check_finite_mat, check_finite_vec, detect, empirical_tau, extract_channels, AmpProblem, RunOptions, TauRule,
    TraceRow,
};
use crate::{Result, C64};

#[derive(Debug, Clone)]
pub struct EcState {
    pub x_hat: Array2<C64>,
    pub z: Array2<C64>,
    /// Residual variance per antenna used by the latest iteration.
    pub tau_hat: Vec<f64>,
    /// Device log-odds of activity.
    pub theta: Vec<f64>,
    /// Leave-one-out activity beliefs, `N x P x M`.
    pub lambda: Array3<f64>,
    /// Surrogate objective of the current `x_hat`.
    pub f: f64,
    pub f_best: f64,
    pub x_best: Array2<C64>,
    pub theta_best: Vec<f64>,
    /// Iteration at which the best iterate was recorded (0 = initial state).
    pub best_iteration: usize,
    /// `(1/L) sum_{n,p} eta'` per antenna from the latest residual update.
    pub onsager: Vec<f64>,
    pub t: usize,
}

pub fn ec_init(prob: &AmpProblem<'_>) -> EcState {
    let (n, p, m) = (prob.devices(), prob.taps, prob.antennas());
    let f0 = 0.5 * fro_norm_sq(prob.y);
    let prior = vec![logit(prob.rho); n];
    EcState {
        x_hat: Array2::zeros((n * p, m)),
        z: prob.y.to_owned(),
        tau_hat: vec![0.0; m],
        theta: prior.clone(),
        lambda: Array3::from_elem((n, p, m), prob.rho),
        f: f0,
        f_best: f0,
        x_best: Array2::zeros((n * p, m)),
        theta_best: prior,
        best_iteration: 0,
        onsager: vec![0.0; m],
        t: 0,
    }
}

/// One AMP-A-EC iteration. On a non-finite intermediate the state is left
/// partially updated and the error names the iteration and quantity.
pub fn ec_iterate(state: &mut EcState, prob: &AmpProblem<'_>, tau_rule: TauRule) -> Result<()> {
    let iteration = state.t + 1;
    let taps = prob.taps;
    let l = prob.pilot_len() as f64;

    state.tau_hat = match tau_rule {
        TauRule::LongForm { sigma2 } if state.t > 0 => state
            .tau_hat
            .iter()
            .zip(&state.onsager)
            .map(|(tau, c)| (sigma2 + tau * c).max(f64::MIN_POSITIVE))
            .collect(),
        _ => empirical_tau(state.z.view()),
    };
    check_finite_vec(&state.tau_hat, iteration, "tau")?;
    let tau = &state.tau_hat;

    let r = gemm_onto(state.x_hat.clone(), 1.0, prob.a_h.view(), state.z.view());

    let m = prob.antennas();
    let mut x_new = Array2::zeros(r.raw_dim());
    let mut eta_prime_sum = vec![0.0; m];
    let mut energy = vec![0.0; m];
    let mut shrink = vec![0.0; m];
    let mut curvature = vec![0.0; m];
    let mut offset = vec![0.0; m];
    for (n, &beta) in prob.beta.iter().enumerate() {
        let rows = n * taps..(n + 1) * taps;
        let block = r.slice(ndarray::s![rows.clone(), ..]);
        energy.iter_mut().for_each(|e| *e = 0.0);
        for row in block.rows() {
            for (e, v) in energy.iter_mut().zip(row) {
                *e += v.norm_sqr();
            }
        }
        let theta = llr_theta_columns(&energy, taps, tau, beta, prob.rho);
        state.theta[n] = theta;

        for j in 0..m {
            shrink[j] = beta / (tau[j] + beta);
            curvature[j] = beta / (tau[j] * (tau[j] + beta));
            offset[j] = (beta / tau[j]).ln_1p();
        }
        // The coefficient's gate log-odds are logit(lambda) plus its own
        // likelihood ratio, which is exactly theta.
        let g = logistic(theta);
        let spread = g * logistic(-theta);
        let mut out = x_new.slice_mut(ndarray::s![rows, ..]);
        let mut lam = state.lambda.index_axis_mut(Axis(0), n);
        for (p, (r_row, mut out_row)) in block.rows().into_iter().zip(out.rows_mut()).enumerate() {
            for j in 0..m {
                let v = r_row[j];
                let v_sq = v.norm_sqr();
                lam[[p, j]] = logistic(theta + offset[j] - v_sq * curvature[j]);
                out_row[j] = v * (shrink[j] * g);
                eta_prime_sum[j] += eta_prime_from_gate(v_sq, tau[j], beta, g, spread);
            }
        }
    }
    if let Some(index) = state.theta.iter().position(|t| t.is_nan()) {
        return Err(crate::Error::NonFinite {
            iteration,
            quantity: "theta",
            index,
        });
    }
    check_finite_mat(x_new.view(), iteration, "x_hat")?;

    let onsager: Vec<f64> = eta_prime_sum.iter().map(|s| s / l).collect();
    let fit = gemm_onto(prob.y.to_owned(), -1.0, prob.a.view(), x_new.view());
    state.f = 0.5 * fro_norm_sq(fit.view()) + row_norm_sum(x_new.view());
    let mut z_new = fit;
    for (mut col, (z_old, c)) in z_new.columns_mut().into_iter().zip(state.z.columns().into_iter().zip(&onsager)) {
        col.zip_mut_with(&z_old, |zn, zo| *zn += zo * *c);
    }
    check_finite_mat(z_new.view(), iteration, "z")?;

    state.x_hat = x_new;
    state.z = z_new;
    state.onsager = onsager;
    state.t = iteration;
    Ok(())
}

/// Keeps `(X̂, θ)` of the iteration with the smallest surrogate objective.
/// Returns whether the current iterate became the best.
pub fn ec_track_best(state: &mut EcState) -> bool {
    if state.f < state.f_best {
        state.f_best = state.f;
        state.x_best.assign(&state.x_hat);
        state.theta_best.copy_from_slice(&state.theta);
        state.best_iteration = state.t;
        true
    } else {
        false
    }
}

/// Per-device channel estimates for the detected devices.
pub fn ec_extract_channels(x: &Array2<C64>, detected: &[bool], taps: usize) -> Vec<(usize, Array2<C64>)> {
    extract_channels(x.view(), detected, taps)
}

#[derive(Debug, Clone)]
pub struct EcOutput {
    pub detected: Vec<bool>,
    /// `(device, P x M block)` for each detected device.
    pub channels: Vec<(usize, Array2<C64>)>,
    pub trace: Vec<TraceRow>,
    pub state: EcState,
}

/// Runs AMP-A-EC. `observer` sees the state after every iteration, with both
/// the raw and the tracked estimates.
pub fn ec_run<F>(prob: &AmpProblem<'_>, opts: &RunOptions, mut observer: F) -> Result<EcOutput>
where
    F: FnMut(&EcState, &TraceRow),
{
    let mut state = ec_init(prob);
    let mut trace = Vec::with_capacity(opts.iterations);
    let mut prev_tau = None;
    for _ in 0..opts.iterations {
        let start = Instant::now();
        ec_iterate(&mut state, prob, opts.tau_rule)?;
        let improved = ec_track_best(&mut state);
        let elapsed = start.elapsed();
        let tau_mean = state.tau_hat.iter().sum::<f64>() / state.tau_hat.len() as f64;
        let row = TraceRow {
            iteration: state.t,
            f: state.f,
            f_best: state.f_best,
            tau_mean,
            improved,
            elapsed,
        };
        observer(&state, &row);
        trace.push(row);
        if opts.should_stop(prev_tau, tau_mean) {
            break;
        }
        prev_tau = Some(tau_mean);
    }
    let (x, theta) = if opts.tracking {
        (&state.x_best, &state.theta_best)
    } else {
        (&state.x_hat, &state.theta)
    };
    let detected = detect(theta);
    let channels = ec_extract_channels(x, &detected, prob.taps);
    Ok(EcOutput {
        detected,
        channels,
        trace,
        state,
    })
}
