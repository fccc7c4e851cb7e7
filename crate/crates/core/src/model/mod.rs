//! Scenario generation and the time-domain measurement model.
//!
//! Device `n` sends `Q` OFDM pilot symbols over `K` subcarriers. After
//! cyclic-prefix removal the received block for symbol `q` is a circular
//! convolution of the time-domain pilot with the `P`-tap channel, which
//! stacks into the linear model `Y = A X + N` with
//! `A[(q, k), (n, p)] = (F^H diag(s_{q,n}) F)[k, p]`.
//!
//! Powers are in milliwatts. Transmit power is folded into the prior channel
//! variance (`beta_eff = pt_mw * beta`) so the columns of `A` stay unit-norm.

mod config;

pub use config::{dbm_to_mw, pathloss, DistanceModel, StopPolicy, SystemConfig};

use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rand::Rng;
use rustfft::FftPlanner;

use crate::rng::{complex_normal, derive_seed, stream, Purpose};
use crate::{Error, Result, C64};

/// Seeds of the independent random streams behind one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioSeeds {
    pub pilots: u64,
    pub distances: u64,
    pub activities: u64,
    pub channels: u64,
    pub noise: u64,
}

impl ScenarioSeeds {
    pub fn derive(master: u64, point_key: u64, trial: u64) -> Self {
        let d = |p| derive_seed(master, point_key, trial, p);
        Self {
            pilots: d(Purpose::Pilots),
            distances: d(Purpose::Distances),
            activities: d(Purpose::Activities),
            channels: d(Purpose::Channels),
            noise: d(Purpose::Noise),
        }
    }
}

/// One realization of the access scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance {
    /// Frequency-domain pilots, shape `(N, Q, K)`.
    pub pilots: Array3<C64>,
    /// Measurement matrix, `L x NP`.
    pub a: Array2<C64>,
    pub distances: Vec<f64>,
    /// Per-device prior channel variance in mW (`pt_mw * beta_n`).
    pub beta_eff: Vec<f64>,
    pub active: Vec<bool>,
    /// Tap-domain channels, shape `(N, P, M)`.
    pub h: Array3<C64>,
    /// Effective channels, `NP x M`; rows of inactive devices are zero.
    pub x: Array2<C64>,
    /// Received pilot signal, `L x M`.
    pub y: Array2<C64>,
}

impl ScenarioInstance {
    pub fn generate(cfg: &SystemConfig, seeds: &ScenarioSeeds) -> Result<Self> {
        cfg.validate()?;
        let pilots = gen_pilots(cfg, &mut stream(seeds.pilots));
        let a = build_measurement_matrix(pilots.view(), cfg.taps)?;
        let distances = gen_distances(cfg, &mut stream(seeds.distances));
        let active = gen_activities(cfg, &mut stream(seeds.activities));
        let (h, beta_eff) = gen_channels(cfg, &distances, &mut stream(seeds.channels));
        let x = effective_channels(h.view(), &active);
        let y = synthesize_received(a.view(), x.view(), cfg.sigma2_mw, &mut stream(seeds.noise))?;
        Ok(Self {
            pilots,
            a,
            distances,
            beta_eff,
            active,
            h,
            x,
            y,
        })
    }

    pub fn devices(&self) -> usize {
        self.active.len()
    }

    pub fn taps(&self) -> usize {
        self.h.dim().1
    }
}

/// i.i.d. CN(0, 1) pilots, each device's block rescaled so that
/// `sum_q ||s_{q,n}||^2 = K`. Shape `(N, Q, K)`.
pub fn gen_pilots<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Array3<C64> {
    let mut pilots = draw_unit_pilots(cfg.devices, cfg.pilot_symbols, cfg.subcarriers, rng);
    let k = cfg.subcarriers as f64;
    for mut block in pilots.outer_iter_mut() {
        let energy: f64 = block.iter().map(|v| v.norm_sqr()).sum();
        let scale = (k / energy).sqrt();
        block.mapv_inplace(|v| v * scale);
    }
    pilots
}

/// Raw CN(0, 1) draws before per-device normalization.
pub(crate) fn draw_unit_pilots<R: Rng + ?Sized>(n: usize, q: usize, k: usize, rng: &mut R) -> Array3<C64> {
    let mut out = Array3::zeros((n, q, k));
    out.iter_mut().for_each(|v| *v = complex_normal(rng, 1.0));
    out
}

/// Unitary DFT matrix, `F[k, k'] = exp(-j 2 pi k k' / K) / sqrt(K)`.
pub fn dft_matrix(k: usize) -> Array2<C64> {
    let scale = 1.0 / (k as f64).sqrt();
    Array2::from_shape_fn((k, k), |(r, c)| {
        let angle = -2.0 * PI * ((r * c) % k) as f64 / k as f64;
        C64::from_polar(scale, angle)
    })
}

/// Stacks `A[(q-1)K.., (n-1)P..] = (F^H diag(s_{q,n}) F)[:, 0..P]`.
///
/// `F^H diag(s) F` is circulant with first column `IDFT(s)` (scaled by
/// `1/K`), so each block is that column and its first `P - 1` cyclic shifts.
pub fn build_measurement_matrix(pilots: ArrayView3<'_, C64>, taps: usize) -> Result<Array2<C64>> {
    let (n, q, k) = pilots.dim();
    if taps == 0 || taps > k {
        return Err(Error::Dimension(format!("{taps} taps with {k} subcarriers")));
    }
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(k);
    let inv_k = 1.0 / k as f64;
    let mut a = Array2::zeros((k * q, n * taps));
    let mut column = vec![C64::new(0.0, 0.0); k];
    for dev in 0..n {
        for sym in 0..q {
            column
                .iter_mut()
                .zip(pilots.slice(s![dev, sym, ..]))
                .for_each(|(c, &p)| *c = p);
            ifft.process(&mut column);
            for tap in 0..taps {
                let col = dev * taps + tap;
                for row in 0..k {
                    a[[sym * k + row, col]] = column[(row + k - tap) % k] * inv_k;
                }
            }
        }
    }
    Ok(a)
}

pub fn gen_distances<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<f64> {
    match cfg.distance_model {
        DistanceModel::Constant(d) => vec![d; cfg.devices],
        DistanceModel::Uniform(lo, hi) => (0..cfg.devices)
            .map(|_| lo + (hi - lo) * rng.random::<f64>())
            .collect(),
    }
}

/// Tap channels `h = sqrt(beta_eff) g` with `g ~ CN(0, 1)`, shape `(N, P, M)`,
/// and the per-device effective gains.
pub fn gen_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    distances: &[f64],
    rng: &mut R,
) -> (Array3<C64>, Vec<f64>) {
    let beta_eff: Vec<f64> = distances.iter().map(|&d| cfg.beta_eff_at(d)).collect();
    let mut h = Array3::zeros((cfg.devices, cfg.taps, cfg.antennas));
    for (mut block, &b) in h.outer_iter_mut().zip(&beta_eff) {
        block.iter_mut().for_each(|v| *v = complex_normal(rng, b));
    }
    (h, beta_eff)
}

pub fn gen_activities<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<bool> {
    (0..cfg.devices).map(|_| rng.random::<f64>() < cfg.rho).collect()
}

/// `X[(n-1)P + p, m] = a_n h[n, p, m]`.
pub fn effective_channels(h: ArrayView3<'_, C64>, active: &[bool]) -> Array2<C64> {
    let (n, p, m) = h.dim();
    let mut x = Array2::zeros((n * p, m));
    for (dev, _) in active.iter().enumerate().filter(|(_, &a)| a) {
        x.slice_mut(s![dev * p..(dev + 1) * p, ..]).assign(&h.slice(s![dev, .., ..]));
    }
    x
}

pub fn gen_noise<R: Rng + ?Sized>(rows: usize, cols: usize, sigma2: f64, rng: &mut R) -> Array2<C64> {
    let mut noise = Array2::zeros((rows, cols));
    noise.iter_mut().for_each(|v| *v = complex_normal(rng, sigma2));
    noise
}

/// `Y = A X + N` with `N` i.i.d. CN(0, sigma2).
pub fn synthesize_received<R: Rng + ?Sized>(
    a: ArrayView2<'_, C64>,
    x: ArrayView2<'_, C64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<Array2<C64>> {
    let noise = gen_noise(a.nrows(), x.ncols(), sigma2, rng);
    synthesize_received_with_noise(a, x, noise.view())
}

pub fn synthesize_received_with_noise(
    a: ArrayView2<'_, C64>,
    x: ArrayView2<'_, C64>,
    noise: ArrayView2<'_, C64>,
) -> Result<Array2<C64>> {
    if a.ncols() != x.nrows() || noise.dim() != (a.nrows(), x.ncols()) {
        return Err(Error::Dimension(format!(
            "A is {:?}, X is {:?}, noise is {:?}",
            a.dim(),
            x.dim(),
            noise.dim()
        )));
    }
    Ok(a.dot(&x) + noise)
}

/// Received signal through the explicit circular-convolution path:
/// `y_{q,m} = sum_n a_n H_{n,m} F^H s_{q,n} + n_{q,m}` with `H_{n,m}` the dense
/// `K x K` circulant built from the zero-padded tap vector.
///
/// The circulant is scaled by `1/sqrt(K)` so that `F H Fᴴ = diag(F h)` holds
/// with the unitary `F`; this is the normalization under which the stacked
/// model has unit-norm columns. Without it the circulant's eigenvalues are
/// the unnormalized DFT of the taps and the path would differ from `A X` by
/// a factor `sqrt(K)`.
///
/// Cost is `O(N M Q K^2)`; meant for cross-checking the linear model at small `K`.
pub fn synthesize_received_circulant(
    pilots: ArrayView3<'_, C64>,
    h: ArrayView3<'_, C64>,
    active: &[bool],
    noise: ArrayView2<'_, C64>,
) -> Result<Array2<C64>> {
    let (n, q, k) = pilots.dim();
    let (hn, taps, m) = h.dim();
    if hn != n || active.len() != n || noise.dim() != (q * k, m) || taps > k {
        return Err(Error::Dimension("circulant model inputs disagree".into()));
    }
    let f_h = dft_matrix(k).t().mapv(|v| v.conj());
    let tap_scale = 1.0 / (k as f64).sqrt();
    let mut y = noise.to_owned();
    for dev in (0..n).filter(|&d| active[d]) {
        for sym in 0..q {
            let time_pilot = f_h.dot(&pilots.slice(s![dev, sym, ..]));
            for ant in 0..m {
                let mut first_col = vec![C64::new(0.0, 0.0); k];
                for tap in 0..taps {
                    first_col[tap] = h[[dev, tap, ant]] * tap_scale;
                }
                let circ = Array2::from_shape_fn((k, k), |(r, c)| first_col[(r + k - c) % k]);
                let conv = circ.dot(&time_pilot);
                let mut block = y.slice_mut(s![sym * k..(sym + 1) * k, ant]);
                block += &conv;
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_cfg(n: usize, k: usize, q: usize, p: usize, m: usize) -> SystemConfig {
        SystemConfig {
            devices: n,
            subcarriers: k,
            pilot_symbols: q,
            taps: p,
            antennas: m,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn dft_small_cases() {
        let f1 = dft_matrix(1);
        assert_eq!(f1.dim(), (1, 1));
        assert!((f1[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-15);

        let f2 = dft_matrix(2);
        let r = 1.0 / 2f64.sqrt();
        let expected = [[r, r], [r, -r]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f2[[i, j]] - C64::new(expected[i][j], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dft_is_unitary() {
        for k in [1, 2, 3, 7, 16, 32] {
            let f = dft_matrix(k);
            let prod = f.dot(&f.t().mapv(|v| v.conj()));
            for ((i, j), v) in prod.indexed_iter() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((v - C64::new(target, 0.0)).norm() < 1e-12, "K={k} ({i},{j})");
            }
        }
    }

    #[test]
    fn pilots_are_normalized_per_device() {
        let cfg = small_cfg(1, 4, 1, 1, 1);
        let p = gen_pilots(&cfg, &mut stream(1));
        let e: f64 = p.iter().map(|v| v.norm_sqr()).sum();
        assert!((e - 4.0).abs() < 1e-12);

        let cfg = small_cfg(50, 8, 3, 2, 1);
        let p = gen_pilots(&cfg, &mut stream(2));
        for block in p.outer_iter() {
            let e: f64 = block.iter().map(|v| v.norm_sqr()).sum();
            assert!((e - 8.0).abs() < 1e-10 * 8.0);
        }
    }

    #[test]
    fn pilots_are_deterministic() {
        let cfg = small_cfg(1000, 32, 4, 3, 1);
        let a = gen_pilots(&cfg, &mut stream(99));
        let b = gen_pilots(&cfg, &mut stream(99));
        assert_eq!(a, b);
    }

    #[test]
    fn raw_pilot_entries_have_unit_variance() {
        // K=32, Q=2: 10^5 entries need ~1563 devices
        let raw = draw_unit_pilots(1563, 2, 32, &mut stream(5));
        let count = raw.len() as f64;
        let mean_sq = raw.iter().map(|v| v.norm_sqr()).sum::<f64>() / count;
        // |s|^2 ~ Exp(1): sd 1
        assert!((mean_sq - 1.0).abs() < 4.0 / count.sqrt(), "mean |s|^2 = {mean_sq}");
        // after normalization the mean power is exactly 1/Q
        let cfg = small_cfg(1563, 32, 2, 1, 1);
        let p = gen_pilots(&cfg, &mut stream(5));
        let mean_sq = p.iter().map(|v| v.norm_sqr()).sum::<f64>() / count;
        assert!((mean_sq - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_ones_pilot_gives_identity_columns() {
        for k in [1, 4, 9] {
            let pilots = Array3::from_elem((1, 1, k), C64::new(1.0, 0.0));
            let a = build_measurement_matrix(pilots.view(), 1).unwrap();
            for row in 0..k {
                let target = if row == 0 { 1.0 } else { 0.0 };
                assert!((a[[row, 0]] - C64::new(target, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn too_many_taps_is_rejected() {
        let pilots = Array3::from_elem((2, 1, 4), C64::new(1.0, 0.0));
        assert!(matches!(
            build_measurement_matrix(pilots.view(), 5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn measurement_matrix_matches_brute_force() {
        let cfg = small_cfg(3, 4, 2, 2, 1);
        let pilots = gen_pilots(&cfg, &mut stream(11));
        let a = build_measurement_matrix(pilots.view(), 2).unwrap();
        let naive = crate::oracle::naive_measurement_matrix(pilots.view(), 2);
        assert_eq!(a.dim(), naive.dim());
        for (x, y) in a.iter().zip(naive.iter()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn columns_have_unit_norm() {
        let cfg = small_cfg(40, 16, 3, 4, 1);
        let pilots = gen_pilots(&cfg, &mut stream(3));
        let a = build_measurement_matrix(pilots.view(), 4).unwrap();
        for col in a.columns() {
            let e: f64 = col.iter().map(|v| v.norm_sqr()).sum();
            assert!((e - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn channel_variance_matches_beta_eff() {
        let mut cfg = small_cfg(1, 4, 1, 1, 100_000);
        cfg.pt_dbm = 10.0;
        let (h, beta) = gen_channels(&cfg, &[70.0], &mut stream(8));
        let n = h.len() as f64;
        let var = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        // |h|^2 ~ Exp(beta): standard error beta / sqrt(n)
        assert!((var - beta[0]).abs() < 3.0 * beta[0] / n.sqrt());
    }

    #[test]
    fn activities_follow_rho() {
        let mut cfg = small_cfg(100_000, 4, 1, 1, 1);
        cfg.rho = 0.1;
        let a = gen_activities(&cfg, &mut stream(4));
        let mean = a.iter().filter(|&&v| v).count() as f64 / a.len() as f64;
        assert!((mean - 0.1).abs() < 3.0 * (0.09f64 / 1e5).sqrt());
        assert_eq!(a, gen_activities(&cfg, &mut stream(4)));

        let mut cfg = small_cfg(100, 4, 1, 1, 1);
        cfg.rho = 1e-12;
        let mut rng = stream(6);
        let total: usize = (0..10_000)
            .map(|_| gen_activities(&cfg, &mut rng).iter().filter(|&&v| v).count())
            .sum();
        assert!((total as f64 / 1e6) < 0.01);
    }

    #[test]
    fn inactive_rows_are_zero() {
        let cfg = small_cfg(6, 4, 1, 2, 3);
        let (h, _) = gen_channels(&cfg, &[70.0; 6], &mut stream(2));
        let active = vec![true, false, true, false, false, true];
        let x = effective_channels(h.view(), &active);
        for dev in 0..6 {
            for p in 0..2 {
                for m in 0..3 {
                    let v = x[[dev * 2 + p, m]];
                    if active[dev] {
                        assert_eq!(v, h[[dev, p, m]]);
                    } else {
                        assert_eq!(v, C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_and_zero_signal_limits() {
        let cfg = small_cfg(4, 4, 2, 2, 3);
        let pilots = gen_pilots(&cfg, &mut stream(1));
        let a = build_measurement_matrix(pilots.view(), 2).unwrap();
        let zero = Array2::<C64>::zeros((8, 3));
        let y = synthesize_received(a.view(), zero.view(), 1e-300, &mut stream(2)).unwrap();
        assert!(y.iter().all(|v| v.norm() < 1e-140));

        let (h, _) = gen_channels(&cfg, &[70.0; 4], &mut stream(3));
        let x = effective_channels(h.view(), &[true; 4]);
        let y = synthesize_received(a.view(), x.view(), 1e-300, &mut stream(2)).unwrap();
        let ax = a.dot(&x);
        for (u, v) in y.iter().zip(ax.iter()) {
            assert!((u - v).norm() <= 1e-140 + 1e-15 * v.norm());
        }
    }

    #[test]
    fn noise_variance_matches_sigma2() {
        let cfg = small_cfg(2, 32, 4, 2, 400);
        let pilots = gen_pilots(&cfg, &mut stream(1));
        let a = build_measurement_matrix(pilots.view(), 2).unwrap();
        let x = Array2::<C64>::zeros((4, 400));
        let sigma2 = 3.82e-12;
        let y = synthesize_received(a.view(), x.view(), sigma2, &mut stream(9)).unwrap();
        let n = y.len() as f64;
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        assert!((var - sigma2).abs() < 3.0 * sigma2 / n.sqrt());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Array2::<C64>::zeros((4, 6));
        let x = Array2::<C64>::zeros((5, 2));
        assert!(synthesize_received(a.view(), x.view(), 1.0, &mut stream(0)).is_err());
    }

    #[test]
    fn circulant_path_matches_linear_model() {
        let cfg = small_cfg(5, 8, 2, 3, 2);
        let pilots = gen_pilots(&cfg, &mut stream(21));
        let a = build_measurement_matrix(pilots.view(), 3).unwrap();
        let (h, _) = gen_channels(&cfg, &[70.0; 5], &mut stream(22));
        let active = vec![true, false, true, true, false];
        let x = effective_channels(h.view(), &active);
        let noise = gen_noise(16, 2, 1e-12, &mut stream(23));
        let lin = synthesize_received_with_noise(a.view(), x.view(), noise.view()).unwrap();
        let circ = synthesize_received_circulant(pilots.view(), h.view(), &active, noise.view()).unwrap();
        let diff: f64 = (&lin - &circ).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = lin.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-9);
    }

    #[test]
    fn flat_fading_single_device_is_per_subcarrier_scaling() {
        // one tap: the frequency response is flat, F h = h / sqrt(K) on every subcarrier
        let k = 8;
        let pilots = gen_pilots(&small_cfg(1, k, 1, 1, 1), &mut stream(4));
        let mut h = Array3::zeros((1, 1, 1));
        h[[0, 0, 0]] = C64::new(0.3, -1.2);
        let noise = Array2::zeros((k, 1));
        let y = synthesize_received_circulant(pilots.view(), h.view(), &[true], noise.view()).unwrap();
        let freq = dft_matrix(k).dot(&y.column(0));
        for sub in 0..k {
            let expected = h[[0, 0, 0]] / (k as f64).sqrt() * pilots[[0, 0, sub]];
            assert!((freq[sub] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn inactive_devices_leave_only_noise() {
        let cfg = small_cfg(3, 4, 1, 2, 2);
        let pilots = gen_pilots(&cfg, &mut stream(1));
        let (h, _) = gen_channels(&cfg, &[70.0; 3], &mut stream(2));
        let noise = gen_noise(4, 2, 1.0, &mut stream(3));
        let y = synthesize_received_circulant(pilots.view(), h.view(), &[false; 3], noise.view()).unwrap();
        assert_eq!(y, noise);
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = SystemConfig {
            distance_model: DistanceModel::Uniform(50.0, 100.0),
            ..small_cfg(30, 8, 2, 2, 4)
        };
        let seeds = ScenarioSeeds::derive(5, 1, 2);
        let a = ScenarioInstance::generate(&cfg, &seeds).unwrap();
        let b = ScenarioInstance::generate(&cfg, &seeds).unwrap();
        assert_eq!(a, b);
        assert!(a.distances.iter().all(|&d| (50.0..=100.0).contains(&d)));
        let c = ScenarioInstance::generate(&cfg, &ScenarioSeeds::derive(5, 1, 3)).unwrap();
        assert_ne!(a.y, c.y);
    }
}
