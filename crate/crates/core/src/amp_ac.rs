//! AMP with actual-channel estimation (AMP-A-AC).
//!
//! Keeps a soft activity belief `λ̂_n` per device and a Wiener estimate of
//! every device's channel, whether or not it looks active. Pseudo-observations
//! are `R = λ̂ ⊙ Ĥ + Aᴴ Z̃`. Best-iterate tracking scores the hard-decision
//! surrogate `â ⊙ Ĥ`.

use std::time::Instant;

use ndarray::{s, Array2};

use crate::denoiser::{llr_theta_columns, logistic};
use crate::linalg::{fro_norm_sq, gemm_onto};
use crate::problem::{
    check_finite_mat, check_finite_vec, detect, empirical_tau, extract_channels, AmpProblem, RunOptions, TauRule,
    TraceRow,
};
use crate::{Result, C64};

#[derive(Debug, Clone)]
pub struct AcState {
    pub h_hat: Array2<C64>,
    pub lambda_hat: Vec<f64>,
    pub z_tilde: Array2<C64>,
    pub tau_hat: Vec<f64>,
    pub theta: Vec<f64>,
    /// Hard decisions of the current iterate.
    pub a_hat: Vec<bool>,
    /// Surrogate objective of the current `a_hat ⊙ h_hat`.
    pub f: f64,
    pub f_best: f64,
    pub a_best: Vec<bool>,
    pub h_best: Array2<C64>,
    pub best_iteration: usize,
    /// `(1/L) sum_{n,p} λ̂_n beta_n / (tau_m + beta_n)` per antenna.
    pub onsager: Vec<f64>,
    pub t: usize,
}

pub fn ac_init(prob: &AmpProblem<'_>) -> AcState {
    let (n, p, m) = (prob.devices(), prob.taps, prob.antennas());
    let f0 = 0.5 * fro_norm_sq(prob.y);
    AcState {
        h_hat: Array2::zeros((n * p, m)),
        lambda_hat: vec![prob.rho; n],
        z_tilde: prob.y.to_owned(),
        tau_hat: vec![0.0; m],
        theta: vec![crate::denoiser::logit(prob.rho); n],
        a_hat: vec![false; n],
        f: f0,
        f_best: f0,
        a_best: vec![false; n],
        h_best: Array2::zeros((n * p, m)),
        best_iteration: 0,
        onsager: vec![0.0; m],
        t: 0,
    }
}

pub fn ac_iterate(state: &mut AcState, prob: &AmpProblem<'_>, tau_rule: TauRule) -> Result<()> {
    let iteration = state.t + 1;
    let taps = prob.taps;
    let l = prob.pilot_len() as f64;
    let m = prob.antennas();

    state.tau_hat = match tau_rule {
        TauRule::LongForm { sigma2 } if state.t > 0 => state
            .tau_hat
            .iter()
            .zip(&state.onsager)
            .map(|(tau, c)| (sigma2 + tau * c).max(f64::MIN_POSITIVE))
            .collect(),
        _ => empirical_tau(state.z_tilde.view()),
    };
    check_finite_vec(&state.tau_hat, iteration, "tau")?;
    let tau = &state.tau_hat;

    let mut prior = state.h_hat.clone();
    for (n, &lam) in state.lambda_hat.iter().enumerate() {
        prior.slice_mut(s![n * taps..(n + 1) * taps, ..]).map_inplace(|v| *v *= lam);
    }
    let r = gemm_onto(prior, 1.0, prob.a_h.view(), state.z_tilde.view());

    let mut h_new = Array2::zeros(r.raw_dim());
    let mut weighted = Array2::zeros(r.raw_dim());
    let mut onsager_sum = vec![0.0; m];
    let mut energy = vec![0.0; m];
    let mut shrink = vec![0.0; m];
    for (n, &beta) in prob.beta.iter().enumerate() {
        let rows = s![n * taps..(n + 1) * taps, ..];
        let block = r.slice(rows);
        energy.iter_mut().for_each(|e| *e = 0.0);
        for row in block.rows() {
            for (e, v) in energy.iter_mut().zip(row) {
                *e += v.norm_sqr();
            }
        }
        let theta = llr_theta_columns(&energy, taps, tau, beta, prob.rho);
        let lam = logistic(theta);
        state.theta[n] = theta;
        state.lambda_hat[n] = lam;
        for j in 0..m {
            shrink[j] = beta / (tau[j] + beta);
            onsager_sum[j] += taps as f64 * lam * shrink[j];
        }
        let mut h_block = h_new.slice_mut(rows);
        let mut w_block = weighted.slice_mut(rows);
        for ((r_row, mut h_row), mut w_row) in block.rows().into_iter().zip(h_block.rows_mut()).zip(w_block.rows_mut()) {
            for j in 0..m {
                let h = r_row[j] * shrink[j];
                h_row[j] = h;
                w_row[j] = h * lam;
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
    check_finite_mat(h_new.view(), iteration, "h_hat")?;

    let onsager: Vec<f64> = onsager_sum.iter().map(|v| v / l).collect();
    let mut z_new = state.z_tilde.clone();
    for (mut col, c) in z_new.columns_mut().into_iter().zip(&onsager) {
        col.map_inplace(|v| *v *= *c);
    }
    z_new += &prob.y;
    let z_new = gemm_onto(z_new, -1.0, prob.a.view(), weighted.view());
    check_finite_mat(z_new.view(), iteration, "z")?;

    state.a_hat = detect(&state.theta);
    state.f = surrogate_objective(prob, &state.a_hat, &h_new);
    state.h_hat = h_new;
    state.z_tilde = z_new;
    state.onsager = onsager;
    state.t = iteration;
    Ok(())
}

/// `½‖Y − A (â ⊙ Ĥ)‖² + Σ_i ‖(â ⊙ Ĥ)_{i,:}‖`, touching only the columns of
/// detected devices.
fn surrogate_objective(prob: &AmpProblem<'_>, detected: &[bool], h: &Array2<C64>) -> f64 {
    let taps = prob.taps;
    let mut residual = prob.y.to_owned();
    let mut penalty = 0.0;
    let active: Vec<usize> = detected.iter().enumerate().filter(|(_, &d)| d).map(|(n, _)| n).collect();
    if !active.is_empty() {
        let cols: Vec<usize> = active.iter().flat_map(|&n| n * taps..(n + 1) * taps).collect();
        let a_s = prob.a.select(ndarray::Axis(1), &cols);
        let h_s = h.select(ndarray::Axis(0), &cols);
        residual = gemm_onto(residual, -1.0, a_s.view(), h_s.view());
        penalty = crate::linalg::row_norm_sum(h_s.view());
    }
    0.5 * fro_norm_sq(residual.view()) + penalty
}

/// Keeps `(â, Ĥ)` of the iteration with the smallest surrogate objective.
pub fn ac_track_best(state: &mut AcState) -> bool {
    if state.f < state.f_best {
        state.f_best = state.f;
        state.a_best.copy_from_slice(&state.a_hat);
        state.h_best.assign(&state.h_hat);
        state.best_iteration = state.t;
        true
    } else {
        false
    }
}

#[derive(Debug, Clone)]
pub struct AcOutput {
    pub detected: Vec<bool>,
    pub channels: Vec<(usize, Array2<C64>)>,
    pub trace: Vec<TraceRow>,
    pub state: AcState,
}

pub fn ac_run<F>(prob: &AmpProblem<'_>, opts: &RunOptions, mut observer: F) -> Result<AcOutput>
where
    F: FnMut(&AcState, &TraceRow),
{
    let mut state = ac_init(prob);
    let mut trace = Vec::with_capacity(opts.iterations);
    let mut prev_tau = None;
    for _ in 0..opts.iterations {
        let start = Instant::now();
        ac_iterate(&mut state, prob, opts.tau_rule)?;
        let improved = ac_track_best(&mut state);
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
    let (detected, h) = if opts.tracking {
        (state.a_best.clone(), &state.h_best)
    } else {
        (state.a_hat.clone(), &state.h_hat)
    };
    let channels = extract_channels(h.view(), &detected, prob.taps);
    Ok(AcOutput {
        detected,
        channels,
        trace,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::llr_theta;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn init_matches_definition() {
        let a = array![[c(1.0, 0.0), c(0.0, 1.0)]];
        let y = array![[c(3.0, 4.0)]];
        let prob = AmpProblem::new(a.view(), y.view(), vec![1.0, 2.0], 0.2, 1).unwrap();
        let s = ac_init(&prob);
        assert_eq!(s.f_best, 12.5);
        assert_eq!(s.z_tilde, y);
        assert!(s.h_hat.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(s.lambda_hat.iter().all(|&l| (l - 0.2).abs() < 1e-15));
        assert!(s
            .theta
            .iter()
            .all(|&t| (logistic(t) - 0.2).abs() < 1e-15));
    }

    #[test]
    fn scalar_hand_trace() {
        let yv = c(-0.4, 1.2);
        let a = array![[c(1.0, 0.0)]];
        let y = array![[yv]];
        let (beta, rho) = (3.0, 0.25);
        let prob = AmpProblem::new(a.view(), y.view(), vec![beta], rho, 1).unwrap();
        let mut s = ac_init(&prob);
        ac_iterate(&mut s, &prob, TauRule::Empirical).unwrap();

        let tau = yv.norm_sqr();
        let r = yv; // previous estimate is zero
        let theta = llr_theta(&[r], tau, beta, rho);
        let lam = 1.0 / (1.0 + (-theta).exp());
        let h = r * (beta / (tau + beta));
        let z = yv - h * lam + yv * (lam * beta / (tau + beta));
        assert!((s.theta[0] - theta).abs() < 1e-13);
        assert!((s.lambda_hat[0] - lam).abs() < 1e-14);
        assert!((s.h_hat[[0, 0]] - h).norm() < 1e-14);
        assert!((s.z_tilde[[0, 0]] - z).norm() < 1e-13);
        let surrogate = if theta >= 0.0 { h } else { c(0.0, 0.0) };
        let f = 0.5 * (yv - surrogate).norm_sqr() + surrogate.norm();
        assert!((s.f - f).abs() < 1e-13);

        // second step uses the previous belief inside R
        let prev_lam = s.lambda_hat[0];
        let prev_h = s.h_hat[[0, 0]];
        let prev_z = s.z_tilde[[0, 0]];
        ac_iterate(&mut s, &prob, TauRule::Empirical).unwrap();
        let tau2 = prev_z.norm_sqr();
        let r2 = prev_h * prev_lam + prev_z;
        let theta2 = llr_theta(&[r2], tau2, beta, rho);
        assert!((s.theta[0] - theta2).abs() < 1e-12);
        assert!((s.h_hat[[0, 0]] - r2 * (beta / (tau2 + beta))).norm() < 1e-13);
    }

    #[test]
    fn zero_signal_decays_belief() {
        let a = array![[c(0.6, 0.0), c(0.0, 0.8)], [c(0.8, 0.0), c(0.6, 0.0)]];
        let y = Array2::<C64>::zeros((2, 1));
        let prob = AmpProblem::new(a.view(), y.view(), vec![1.0, 1.0], 0.1, 1).unwrap();
        let out = ac_run(&prob, &RunOptions::default(), |s, _| {
            assert!(s.lambda_hat.iter().all(|&l| l < 0.1));
        })
        .unwrap();
        assert!(out.state.h_hat.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(out.detected.iter().all(|d| !d));
    }

    #[test]
    fn zero_iterations_detect_nothing() {
        let a = array![[c(1.0, 0.0)]];
        let y = array![[c(9.0, 0.0)]];
        let prob = AmpProblem::new(a.view(), y.view(), vec![1.0], 0.1, 1).unwrap();
        let opts = RunOptions {
            iterations: 0,
            ..Default::default()
        };
        let out = ac_run(&prob, &opts, |_, _| {}).unwrap();
        assert_eq!(out.detected, vec![false]);
        assert!(out.channels.is_empty() && out.trace.is_empty());
    }
}
