//! Seeded Monte Carlo trials over the grid points of a spec.
//!
//! The detectors run on the noise-whitened problem `(Y / sigma, beta /
//! sigma²)`. AMP itself is scale-equivariant, but the GROUP-LASSO surrogate
//! used for tracking is not: in milliwatt units its row-norm penalty dwarfs
//! the residual term and tracking would never move off `X = 0`. Channel MSEs
//! and `tau` are converted back to milliwatts; the surrogate objective is
//! reported in whitened units.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::amp_ac::ac_run;
use crate::amp_ec::ec_run;
use crate::metrics::{channel_mse, detection_rates};
use crate::model::{DistanceModel, ScenarioInstance, ScenarioSeeds, SystemConfig};
use crate::problem::{detect, AmpProblem, RunOptions, TraceRow};
use crate::rng::{derive_seed, Purpose};
use crate::se::{error_components, predict, Expectation, SeParams};
use crate::{Result, C64};

use super::spec::{Algorithm, ExperimentSpec, GridPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
        }
    }
}

/// One output row: a (point, algorithm, trial, iteration) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub point: usize,
    pub cfg: SystemConfig,
    pub algorithm: Algorithm,
    /// `None` for analytical rows.
    pub trial: Option<usize>,
    /// `None` for failed-trial rows.
    pub iteration: Option<usize>,
    pub status: Status,
    pub error_prob: Option<f64>,
    pub false_alarm: Option<f64>,
    pub missed_detection: Option<f64>,
    pub mse_active: Option<f64>,
    pub mse_effective: Option<f64>,
    pub f_obj: Option<f64>,
    pub tau_mean: Option<f64>,
    pub wall_time_us: Option<f64>,
}

impl MetricRecord {
    fn empty(point: &GridPoint, algorithm: Algorithm, trial: Option<usize>, iteration: Option<usize>, status: Status) -> Self {
        Self {
            point: point.index,
            cfg: point.cfg.clone(),
            algorithm,
            trial,
            iteration,
            status,
            error_prob: None,
            false_alarm: None,
            missed_detection: None,
            mse_active: None,
            mse_effective: None,
            f_obj: None,
            tau_mean: None,
            wall_time_us: None,
        }
    }
}

/// Trial-averaged metrics for one (point, algorithm, iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub point: usize,
    pub cfg: SystemConfig,
    pub algorithm: Algorithm,
    pub iteration: usize,
    pub trials_ok: usize,
    pub failed_trials: usize,
    /// `(mean, standard error)` per metric, in the order of [`METRICS`].
    pub stats: Vec<Option<(f64, f64)>>,
    pub wall_time_us_median: Option<f64>,
}

/// Metric columns shared by the row and aggregate tables.
pub const METRICS: [&str; 7] = [
    "error_prob",
    "false_alarm",
    "missed_detection",
    "mse_active",
    "mse_effective",
    "f_obj",
    "tau_mean",
];

impl MetricRecord {
    pub fn metric_values(&self) -> [Option<f64>; 7] {
        [
            self.error_prob,
            self.false_alarm,
            self.missed_detection,
            self.mse_active,
            self.mse_effective,
            self.f_obj,
            self.tau_mean,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<MetricRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ResultTable {
    pub fn failed_trials(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Failed).count()
    }
}

/// Which parts of a spec to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Simulations and analytical curves as listed in the spec.
    All,
    /// Analytical curves only.
    AnalysisOnly,
}

/// Runs every trial of every grid point on the current rayon pool. Rows come
/// out ordered by (point, algorithm, trial, iteration) whatever the schedule.
pub fn run_experiment(spec: &ExperimentSpec, mode: Mode) -> Result<ResultTable> {
    spec.validate()?;
    let points = spec.points()?;
    let mut rows = Vec::new();
    for point in &points {
        let algorithms: Vec<Algorithm> = spec
            .algorithms_for(&point.cfg)
            .into_iter()
            .filter(|a| mode == Mode::All || !a.is_simulated())
            .collect();
        let simulated: Vec<Algorithm> = algorithms.iter().copied().filter(|a| a.is_simulated()).collect();
        let per_trial: Vec<Vec<MetricRecord>> = if simulated.is_empty() {
            Vec::new()
        } else {
            (0..spec.trials)
                .into_par_iter()
                .map(|trial| run_trial(point, trial, &simulated, spec.timing))
                .collect::<Result<_>>()?
        };
        for &alg in &algorithms {
            if alg == Algorithm::SeAnalysis {
                rows.extend(analysis_rows(point)?);
            } else {
                for trial_rows in &per_trial {
                    rows.extend(trial_rows.iter().filter(|r| r.algorithm == alg).cloned());
                }
            }
        }
    }
    let aggregates = aggregate(&rows);
    Ok(ResultTable { rows, aggregates })
}

/// Runs `spec` on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, mode: Mode, threads: usize) -> Result<ResultTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool construction");
    pool.install(|| run_experiment(spec, mode))
}

/// Truth of a trial in whitened units.
struct WhitenedTruth {
    h: Array3<C64>,
    active: Vec<bool>,
    sigma2: f64,
}

impl WhitenedTruth {
    fn record(
        &self,
        point: &GridPoint,
        alg: Algorithm,
        trial: usize,
        row: &TraceRow,
        f_obj: f64,
        detected: &[bool],
        estimate: &Array2<C64>,
        timing: bool,
    ) -> Result<MetricRecord> {
        let rates = detection_rates(detected, &self.active)?;
        let mse = channel_mse(estimate.view(), detected, self.h.view(), &self.active)?;
        let mut rec = MetricRecord::empty(point, alg, Some(trial), Some(row.iteration), Status::Ok);
        rec.error_prob = Some(rates.error_prob);
        rec.false_alarm = Some(rates.false_alarm);
        rec.missed_detection = Some(rates.missed_detection);
        rec.mse_active = mse.active.map(|v| v * self.sigma2);
        rec.mse_effective = Some(mse.effective * self.sigma2);
        rec.f_obj = Some(f_obj);
        rec.tau_mean = Some(row.tau_mean * self.sigma2);
        rec.wall_time_us = timing.then(|| row.elapsed.as_secs_f64() * 1e6);
        Ok(rec)
    }
}

fn run_trial(point: &GridPoint, trial: usize, algorithms: &[Algorithm], timing: bool) -> Result<Vec<MetricRecord>> {
    let cfg = &point.cfg;
    let seeds = ScenarioSeeds::derive(cfg.master_seed, point.key, trial as u64);
    let scenario = ScenarioInstance::generate(cfg, &seeds)?;
    let sigma = cfg.sigma2_mw.sqrt();
    let y_white = scenario.y.mapv(|v| v / sigma);
    let beta_white: Vec<f64> = scenario.beta_eff.iter().map(|b| b / cfg.sigma2_mw).collect();
    let prob = AmpProblem::new(scenario.a.view(), y_white.view(), beta_white, cfg.rho, cfg.taps)?;
    let truth = WhitenedTruth {
        h: scenario.h.mapv(|v| v / sigma),
        active: scenario.active.clone(),
        sigma2: cfg.sigma2_mw,
    };
    let opts = RunOptions {
        iterations: cfg.iterations,
        stop_policy: cfg.stop_policy,
        tracking: true,
        ..RunOptions::default()
    };
    let wants = |a: Algorithm| algorithms.contains(&a);
    let mut rows = Vec::new();

    let (ec_tracked, ec_raw) = (wants(Algorithm::AmpAEc), wants(Algorithm::AmpAEcIter));
    if ec_tracked || ec_raw {
        let mut tracked = Vec::new();
        let mut raw = Vec::new();
        let mut observe_err = None;
        let outcome = ec_run(&prob, &opts, |state, row| {
            let mut go = || -> Result<()> {
                if ec_tracked {
                    let det = detect(&state.theta_best);
                    tracked.push(truth.record(point, Algorithm::AmpAEc, trial, row, row.f_best, &det, &state.x_best, timing)?);
                }
                if ec_raw {
                    let det = detect(&state.theta);
                    raw.push(truth.record(point, Algorithm::AmpAEcIter, trial, row, row.f, &det, &state.x_hat, timing)?);
                }
                Ok(())
            };
            if let Err(e) = go() {
                observe_err.get_or_insert(e);
            }
        });
        if let Some(e) = observe_err {
            return Err(e);
        }
        push_outcome(&mut rows, outcome.map(|_| ()), point, trial, [(ec_tracked, Algorithm::AmpAEc, tracked), (ec_raw, Algorithm::AmpAEcIter, raw)])?;
    }

    let (ac_tracked, ac_raw) = (wants(Algorithm::AmpAAc), wants(Algorithm::AmpAAcIter));
    if ac_tracked || ac_raw {
        let mut tracked = Vec::new();
        let mut raw = Vec::new();
        let mut observe_err = None;
        let outcome = ac_run(&prob, &opts, |state, row| {
            let mut go = || -> Result<()> {
                if ac_tracked {
                    tracked.push(truth.record(point, Algorithm::AmpAAc, trial, row, row.f_best, &state.a_best, &state.h_best, timing)?);
                }
                if ac_raw {
                    raw.push(truth.record(point, Algorithm::AmpAAcIter, trial, row, row.f, &state.a_hat, &state.h_hat, timing)?);
                }
                Ok(())
            };
            if let Err(e) = go() {
                observe_err.get_or_insert(e);
            }
        });
        if let Some(e) = observe_err {
            return Err(e);
        }
        push_outcome(&mut rows, outcome.map(|_| ()), point, trial, [(ac_tracked, Algorithm::AmpAAc, tracked), (ac_raw, Algorithm::AmpAAcIter, raw)])?;
    }
    Ok(rows)
}

/// Appends the rows of a finished run, or one failed row per requested
/// variant if the run aborted numerically. Other errors propagate.
fn push_outcome(
    rows: &mut Vec<MetricRecord>,
    outcome: Result<()>,
    point: &GridPoint,
    trial: usize,
    variants: [(bool, Algorithm, Vec<MetricRecord>); 2],
) -> Result<()> {
    match outcome {
        Ok(()) => {
            for (wanted, _, recs) in variants {
                if wanted {
                    rows.extend(recs);
                }
            }
            Ok(())
        }
        Err(e) if e.is_numerical() => {
            for (wanted, alg, _) in variants {
                if wanted {
                    rows.push(MetricRecord::empty(point, alg, Some(trial), None, Status::Failed));
                }
            }
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// State-evolution parameters of a homogeneous grid point.
pub fn se_params(cfg: &SystemConfig) -> Option<SeParams> {
    match cfg.distance_model {
        DistanceModel::Constant(d) => Some(SeParams {
            devices: cfg.devices,
            taps: cfg.taps,
            pilot_len: cfg.pilot_len(),
            antennas: cfg.antennas,
            rho: cfg.rho,
            beta: cfg.beta_eff_at(d),
            sigma2: cfg.sigma2_mw,
        }),
        DistanceModel::Uniform(..) => None,
    }
}

fn analysis_rows(point: &GridPoint) -> Result<Vec<MetricRecord>> {
    let cfg = &point.cfg;
    let Some(params) = se_params(cfg) else {
        return Ok(Vec::new());
    };
    let method = Expectation::MonteCarlo {
        samples: 100_000,
        seed: derive_seed(cfg.master_seed, point.key, 0, Purpose::StateEvolution),
    };
    let pred = predict(&params, cfg.iterations, method)?;
    let k = params.coefficients();
    (0..cfg.iterations)
        .map(|t| {
            let (missed, alarm) = error_components(pred.tau[t], k, params.beta, params.rho)?;
            let mut rec = MetricRecord::empty(point, Algorithm::SeAnalysis, None, Some(t + 1), Status::Ok);
            rec.error_prob = Some(pred.p_err[t]);
            rec.false_alarm = Some(alarm);
            rec.missed_detection = Some(missed);
            rec.mse_active = Some(pred.mse[t]);
            rec.tau_mean = Some(pred.tau[t]);
            Ok(rec)
        })
        .collect()
}

fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Some((mean, se))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 0 {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    })
}

/// Groups rows by (point, algorithm, iteration) in order of first
/// appearance; failed rows count towards `failed_trials` only.
pub fn aggregate(rows: &[MetricRecord]) -> Vec<Aggregate> {
    use std::collections::BTreeMap;
    let mut failed: BTreeMap<(usize, Algorithm), usize> = BTreeMap::new();
    let mut groups: BTreeMap<(usize, Algorithm, usize), Vec<&MetricRecord>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        match (r.status, r.iteration) {
            (Status::Failed, _) => *failed.entry((r.point, r.algorithm)).or_default() += 1,
            (Status::Ok, Some(it)) => {
                let key = (r.point, r.algorithm, it);
                let group = groups.entry(key).or_default();
                if group.is_empty() {
                    order.push(key);
                }
                group.push(r);
            }
            (Status::Ok, None) => {}
        }
    }
    order.sort_by_key(|&(p, a, it)| (p, a, it));
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let first = group[0];
            let stats = (0..METRICS.len())
                .map(|i| {
                    let vals: Vec<f64> = group.iter().filter_map(|r| r.metric_values()[i]).collect();
                    mean_and_stderr(&vals)
                })
                .collect();
            let mut times: Vec<f64> = group.iter().filter_map(|r| r.wall_time_us).collect();
            Aggregate {
                point: key.0,
                cfg: first.cfg.clone(),
                algorithm: key.1,
                iteration: key.2,
                trials_ok: if key.1.is_simulated() { group.len() } else { 0 },
                failed_trials: failed.get(&(key.0, key.1)).copied().unwrap_or(0),
                stats,
                wall_time_us_median: median(&mut times),
            }
        })
        .collect()
}
