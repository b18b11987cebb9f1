//! Time-domain closed-loop simulation of adaptive phase estimation, plus two
//! independent checks of the Wiener solution: a finite-window MMSE solved on
//! exact covariances and a whiteness test for the whitened record.
//!
//! Each sample `r_i` is the average of the continuous photocurrent over
//! `[t_i, t_i + dt]`: its signal part uses the trapezoidal phase average and
//! its white noise has variance `N/dt`. Filters are realized with
//! interval-integrated taps, so the discrete estimators converge to the
//! continuous ones at `O((a·dt)²)`.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::interferometer::{
    build_photocurrent_model, mzi_output_mode_mean, nli_output_mode_mean, nli_output_mode_variance,
    InstrumentKind, InterferometerConfig,
};
use crate::mse::{offset_mse, prediction_formula, smoothing_formula, tracking_mse};
use crate::ou::{check_step, stream_rng, Discretization, OuStepper, ProcessParams};
use crate::wiener::{
    realize_impulse_response, synthesize, EstimationMode, InnovationsFilter, KernelFilter, ObservationSpectrum,
};

/// Largest admissible `dt·λ√(1+Λ)`.
pub const MAX_FILTER_STEP: f64 = 0.1;
pub const BATCHES: usize = 30;
pub const MIN_WHITENESS_SAMPLES: usize = 100_000;
pub const WHITENESS_MAX_LAG: usize = 100;
pub const MAX_DENSE_SAMPLES: usize = 5000;
const DIAGNOSTIC_SAMPLES: usize = 1 << 20;
const ORTHOGONALITY_LAGS: [usize; 8] = [0, 1, 2, 5, 10, 20, 50, 100];

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation setting {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("stream has {len} samples, need at least {min}")]
    StreamTooShort { len: usize, min: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFidelity {
    #[default]
    Linearized,
    ExactHomodyne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub process: ProcessParams,
    pub instrument: InterferometerConfig,
    pub dt: f64,
    pub duration: f64,
    pub burn_in: f64,
    pub epsilons: Vec<f64>,
    pub fidelity: ModelFidelity,
    pub seed: u64,
    /// Replica index; selects an independent RNG stream.
    pub stream: u64,
    /// σ_f² used for the NLI noise level instead of the analytic value.
    pub sigma_f_sq_override: Option<f64>,
}

impl SimConfig {
    pub fn new(process: ProcessParams, instrument: InterferometerConfig, dt: f64, duration: f64) -> Self {
        Self {
            process,
            instrument,
            dt,
            duration,
            burn_in: 10.0 / process.lambda(),
            epsilons: vec![0.0],
            fidelity: ModelFidelity::Linearized,
            seed: 0,
            stream: 0,
            sigma_f_sq_override: None,
        }
    }

    pub fn with_epsilons(mut self, epsilons: Vec<f64>) -> Self {
        self.epsilons = epsilons;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_fidelity(mut self, fidelity: ModelFidelity) -> Self {
        self.fidelity = fidelity;
        self
    }

    fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
        SimError::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// Observation spectrum the filters are designed for.
    pub fn design_spectrum(&self) -> Result<ObservationSpectrum, ModelError> {
        let sigma = match self.sigma_f_sq_override {
            Some(s) => s,
            None => tracking_mse(&self.instrument, &self.process)?,
        };
        let model = build_photocurrent_model(&self.instrument, sigma)?;
        ObservationSpectrum::from_model(&model, self.process)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_step(&self.process, self.dt)?;
        let l = self.process.lambda();
        if !(self.duration.is_finite() && self.duration >= 100.0 / l) {
            return Err(Self::invalid("duration", format!("must be >= 100/lambda = {:e} s", 100.0 / l)));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 10.0 / l) {
            return Err(Self::invalid("burn_in", format!("must be >= 10/lambda = {:e} s", 10.0 / l)));
        }
        if self.burn_in >= self.duration {
            return Err(Self::invalid("burn_in", "must be shorter than duration"));
        }
        let cutoff = self.design_spectrum()?.cutoff();
        if self.dt * cutoff > MAX_FILTER_STEP {
            return Err(Self::invalid(
                "dt",
                format!(
                    "dt*cutoff = {:.4} exceeds {MAX_FILTER_STEP}; use dt <= {:e} s",
                    self.dt * cutoff,
                    MAX_FILTER_STEP / cutoff
                ),
            ));
        }
        if self.epsilons.is_empty() {
            return Err(Self::invalid("epsilons", "at least one offset is required"));
        }
        for &eps in &self.epsilons {
            if !eps.is_finite() {
                return Err(Self::invalid("epsilons", "offsets must be finite"));
            }
            if eps.abs() >= self.duration - self.burn_in {
                return Err(Self::invalid(
                    "epsilons",
                    format!("offset {eps:e} s exceeds the usable record duration - burn_in"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimate {
    pub requested_epsilon: f64,
    /// Offset after rounding to a whole number of steps.
    pub epsilon: f64,
    pub mode: EstimationMode,
    pub analytic_mse: f64,
    pub empirical_mse: f64,
    pub standard_error: f64,
    pub n_samples: usize,
    pub n_effective: f64,
}

impl OffsetEstimate {
    /// `(empirical - analytic) / standard_error`.
    pub fn z_score(&self) -> f64 {
        (self.empirical_mse - self.analytic_mse) / self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenessReport {
    pub max_abs_acf: f64,
    pub lag_of_max: usize,
    pub threshold: f64,
    pub n: usize,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub lags: Vec<usize>,
    pub correlations: Vec<f64>,
    pub max_abs: f64,
    pub threshold: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub instrument: InstrumentKind,
    pub fidelity: ModelFidelity,
    pub seed: u64,
    pub stream: u64,
    pub dt: f64,
    pub steps: usize,
    pub offsets: Vec<OffsetEstimate>,
    pub analytic_snr: f64,
    pub empirical_snr: f64,
    pub raw_whiteness: Option<WhitenessReport>,
    pub whitened_whiteness: Option<WhitenessReport>,
    pub orthogonality: Option<OrthogonalityReport>,
    /// Fraction of post-burn-in steps with feedback phase error beyond π/2.
    pub slip_fraction: f64,
}

impl EstimationReport {
    pub fn offset(&self, epsilon: f64) -> Option<&OffsetEstimate> {
        self.offsets
            .iter()
            .find(|o| o.requested_epsilon == epsilon || o.epsilon == epsilon)
    }
}

/// Squared-error statistics split into equal consecutive batches.
#[derive(Debug, Clone)]
struct BatchMeans {
    expected: usize,
    seen: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
    sum_sq: f64,
}

impl BatchMeans {
    fn new(expected: usize) -> Self {
        Self {
            expected: expected.max(1),
            seen: 0,
            sums: vec![0.0; BATCHES],
            counts: vec![0; BATCHES],
            sum_sq: 0.0,
        }
    }

    fn push(&mut self, err_sq: f64) {
        let b = (self.seen * BATCHES / self.expected).min(BATCHES - 1);
        self.sums[b] += err_sq;
        self.counts[b] += 1;
        self.sum_sq += err_sq * err_sq;
        self.seen += 1;
    }

    /// (mean, standard error, n, n_effective)
    fn summarize(&self) -> (f64, f64, usize, f64) {
        let n = self.seen;
        let total: f64 = self.sums.iter().sum();
        let mean = total / n as f64;
        let batch_means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let k = batch_means.len() as f64;
        let bm = batch_means.iter().sum::<f64>() / k;
        let var_b = batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (k - 1.0);
        let se = (var_b / k).sqrt();
        let pointwise_var = (self.sum_sq / n as f64 - mean * mean).max(0.0);
        let n_eff = if se > 0.0 {
            (pointwise_var / (se * se)).min(n as f64)
        } else {
            n as f64
        };
        (mean, se, n, n_eff)
    }
}

struct OffsetTrack {
    requested: f64,
    epsilon: f64,
    steps: usize,
    mode: EstimationMode,
    filter: KernelFilter,
    pending: VecDeque<f64>,
    stats: BatchMeans,
}

fn analytic_offset(cfg: &SimConfig, obs: &ObservationSpectrum, epsilon: f64) -> Result<f64, ModelError> {
    if cfg.sigma_f_sq_override.is_none() {
        return Ok(offset_mse(&cfg.instrument, &cfg.process, epsilon)?.xi);
    }
    let info = obs.information();
    Ok(match EstimationMode::from_epsilon(epsilon) {
        EstimationMode::Tracking => synthesize(obs, 0.0).mse(),
        EstimationMode::Prediction => prediction_formula(&cfg.process, info, epsilon),
        EstimationMode::Smoothing => smoothing_formula(&cfg.process, info, epsilon),
    })
}

pub fn run_closed_loop(cfg: &SimConfig) -> Result<EstimationReport, SimError> {
    cfg.validate()?;
    let dt = cfg.dt;
    let steps = (cfg.duration / dt).round() as usize;
    let burn = (cfg.burn_in / dt).ceil() as usize;
    let obs = cfg.design_spectrum()?;
    let signal_gain = obs.signal_power().sqrt();
    let noise_sd = (obs.noise_level() / dt).sqrt();

    let tracking = synthesize(&obs, 0.0);
    let mut feedback = realize_impulse_response(&tracking, dt, tracking.default_horizon())?.filter();

    let mut tracks = Vec::with_capacity(cfg.epsilons.len());
    for &requested in &cfg.epsilons {
        let lag_steps = (requested.abs() / dt).round() as usize;
        let epsilon = requested.signum() * lag_steps as f64 * dt;
        let sol = synthesize(&obs, epsilon);
        let kernel = realize_impulse_response(&sol, dt, sol.default_horizon())?;
        let expected = match sol.mode {
            EstimationMode::Tracking => steps + 1 - burn,
            _ => (steps + 1).saturating_sub(burn + lag_steps),
        };
        tracks.push(OffsetTrack {
            requested,
            epsilon,
            steps: lag_steps,
            mode: sol.mode,
            filter: kernel.filter(),
            pending: VecDeque::with_capacity(lag_steps + 1),
            stats: BatchMeans::new(expected),
        });
    }
    let max_lag = tracks
        .iter()
        .filter(|t| t.mode == EstimationMode::Smoothing)
        .map(|t| t.steps)
        .max()
        .unwrap_or(0);

    let stepper = OuStepper::new(&cfg.process, dt, Discretization::Exact);
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let z0: f64 = StandardNormal.sample(&mut rng);
    let mut phi = cfg.process.stationary_variance().sqrt() * z0;
    // phase history, newest first: phi_j, phi_{j-1}, ...
    let mut history: VecDeque<f64> = VecDeque::with_capacity(max_lag + 2);
    history.push_front(phi);

    let mut slipped = 0usize;
    let mut whitener = InnovationsFilter::new(&tracking.spectrum, dt);
    let diag_len = DIAGNOSTIC_SAMPLES.min(steps.saturating_sub(burn));
    let mut raw_stream = Vec::with_capacity(diag_len);
    let mut white_stream = Vec::with_capacity(diag_len);

    let max_orth = *ORTHOGONALITY_LAGS.last().unwrap_or(&0);
    let mut r_history: VecDeque<f64> = VecDeque::with_capacity(max_orth + 2);
    let mut orth_cross = [0.0; ORTHOGONALITY_LAGS.len()];
    let mut orth_err_sq = 0.0;
    let mut orth_r_sq = [0.0; ORTHOGONALITY_LAGS.len()];

    let mut noise_acc = 0.0;
    let mut noise_count = 0usize;
    let mut estimate = 0.0;

    let instrument = cfg.instrument.kind();

    for i in 0..steps {
        let z_phase: f64 = StandardNormal.sample(&mut rng);
        let z_noise: f64 = StandardNormal.sample(&mut rng);
        let next = stepper.step(phi, z_phase);
        let phi_avg = 0.5 * (phi + next);
        let phi_f = estimate;

        let homodyne = match cfg.fidelity {
            ModelFidelity::Linearized => signal_gain * (phi_avg - phi_f) + noise_sd * z_noise,
            ModelFidelity::ExactHomodyne => match instrument {
                InstrumentKind::Nli => {
                    let mean = nli_output_mode_mean(&cfg.instrument, phi_avg, phi_f)?;
                    let var = nli_output_mode_variance(&cfg.instrument, phi_avg, phi_f)?;
                    mean + (var / dt).sqrt() * z_noise
                }
                InstrumentKind::Mzi => {
                    mzi_output_mode_mean(&cfg.instrument, phi_avg, phi_f)? + (1.0 / dt).sqrt() * z_noise
                }
            },
        };
        let r = homodyne + signal_gain * phi_f;
        estimate = feedback.push(r);
        if !(r.is_finite() && estimate.is_finite()) {
            return Err(SimError::NonFinite {
                step: i,
                detail: format!("r = {r}, estimate = {estimate}, phi = {phi_avg}"),
            });
        }
        let white = whitener.push(r);

        phi = next;
        let j = i + 1;
        history.push_front(phi);
        if history.len() > max_lag + 1 {
            history.pop_back();
        }
        r_history.push_front(r);
        if r_history.len() > max_orth + 1 {
            r_history.pop_back();
        }

        if j >= burn {
            noise_acc += (r - signal_gain * phi_avg).powi(2);
            noise_count += 1;
            if raw_stream.len() < diag_len {
                raw_stream.push(r);
                white_stream.push(white);
            }
            let err = phi - estimate;
            if err.abs() > FRAC_PI_2 {
                slipped += 1;
            }
            if r_history.len() > max_orth {
                orth_err_sq += err * err;
                for (k, &lag) in ORTHOGONALITY_LAGS.iter().enumerate() {
                    let past = r_history[lag];
                    orth_cross[k] += err * past;
                    orth_r_sq[k] += past * past;
                }
            }
        }

        for t in tracks.iter_mut() {
            let out = t.filter.push(r);
            match t.mode {
                EstimationMode::Tracking => {
                    if j >= burn {
                        t.stats.push((phi - out).powi(2));
                    }
                }
                EstimationMode::Smoothing => {
                    if j >= burn + t.steps {
                        t.stats.push((history[t.steps] - out).powi(2));
                    }
                }
                EstimationMode::Prediction => {
                    // estimate made at j targets j + m
                    if t.pending.len() == t.steps {
                        let made = t.pending.pop_back().unwrap_or(0.0);
                        if j >= burn + t.steps {
                            t.stats.push((phi - made).powi(2));
                        }
                    }
                    t.pending.push_front(out);
                }
            }
        }
    }

    let mut offsets = Vec::with_capacity(tracks.len());
    for t in &tracks {
        let (mean, se, n, n_eff) = t.stats.summarize();
        offsets.push(OffsetEstimate {
            requested_epsilon: t.requested,
            epsilon: t.epsilon,
            mode: t.mode,
            analytic_mse: analytic_offset(cfg, &obs, t.epsilon)?,
            empirical_mse: mean,
            standard_error: se,
            n_samples: n,
            n_effective: n_eff,
        });
    }

    let empirical_noise = noise_acc / noise_count.max(1) as f64 * dt;
    let raw_whiteness = whiteness_diagnostic(&raw_stream).ok();
    let whitened_whiteness = whiteness_diagnostic(&white_stream).ok();

    let tracking_neff = offsets
        .iter()
        .find(|o| o.mode == EstimationMode::Tracking)
        .map(|o| o.n_effective);
    let orthogonality = tracking_neff.filter(|_| orth_err_sq > 0.0).map(|n_eff| {
        let correlations: Vec<f64> = orth_cross
            .iter()
            .zip(&orth_r_sq)
            .map(|(c, rr)| c / (orth_err_sq * rr).sqrt())
            .collect();
        let max_abs = correlations.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let threshold = 3.0 / n_eff.sqrt();
        OrthogonalityReport {
            lags: ORTHOGONALITY_LAGS.to_vec(),
            correlations,
            max_abs,
            threshold,
            passes: max_abs <= threshold,
        }
    });

    Ok(EstimationReport {
        instrument: cfg.instrument.kind(),
        fidelity: cfg.fidelity,
        seed: cfg.seed,
        stream: cfg.stream,
        dt,
        steps,
        offsets,
        analytic_snr: obs.signal_power() / obs.noise_level(),
        empirical_snr: obs.signal_power() / empirical_noise,
        raw_whiteness,
        whitened_whiteness,
        orthogonality,
        slip_fraction: slipped as f64 / noise_count.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub replicas: Vec<EstimationReport>,
    pub pooled: Vec<OffsetEstimate>,
}

/// Runs `replicas` independent streams in parallel and pools the per-offset
/// estimates. Output order does not depend on scheduling.
pub fn run_replicas(cfg: &SimConfig, replicas: usize) -> Result<MergedReport, SimError> {
    if replicas == 0 {
        return Err(SimConfig::invalid("replicas", "must be >= 1"));
    }
    let reports = (0..replicas as u64)
        .into_par_iter()
        .map(|stream| {
            let mut c = cfg.clone();
            c.stream = cfg.stream + stream;
            run_closed_loop(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MergedReport {
        pooled: pool_offsets(&reports),
        replicas: reports,
    })
}

fn pool_offsets(reports: &[EstimationReport]) -> Vec<OffsetEstimate> {
    let Some(first) = reports.first() else {
        return vec![];
    };
    (0..first.offsets.len())
        .map(|k| {
            let parts: Vec<&OffsetEstimate> = reports.iter().map(|r| &r.offsets[k]).collect();
            let n: usize = parts.iter().map(|o| o.n_samples).sum();
            let nf = n as f64;
            let mean = parts
                .iter()
                .map(|o| o.empirical_mse * o.n_samples as f64)
                .sum::<f64>()
                / nf;
            let se = parts
                .iter()
                .map(|o| (o.standard_error * o.n_samples as f64).powi(2))
                .sum::<f64>()
                .sqrt()
                / nf;
            OffsetEstimate {
                empirical_mse: mean,
                standard_error: se,
                n_samples: n,
                n_effective: parts.iter().map(|o| o.n_effective).sum(),
                ..first.offsets[k].clone()
            }
        })
        .collect()
}

/// Re-runs with the NLI noise level set from the measured tracking MSE until
/// it changes by less than one standard error. Returns the final report and
/// the σ_f² sequence.
pub fn run_self_consistent(cfg: &SimConfig, max_iterations: usize) -> Result<(EstimationReport, Vec<f64>), SimError> {
    let mut cfg = cfg.clone();
    if !cfg.epsilons.contains(&0.0) {
        cfg.epsilons.push(0.0);
    }
    let mut sigmas = vec![];
    let mut report = run_closed_loop(&cfg)?;
    for _ in 0..max_iterations {
        let track = report
            .offsets
            .iter()
            .find(|o| o.mode == EstimationMode::Tracking)
            .cloned()
            .ok_or_else(|| SimConfig::invalid("epsilons", "tracking offset missing"))?;
        sigmas.push(track.empirical_mse);
        let previous = cfg.sigma_f_sq_override;
        cfg.sigma_f_sq_override = Some(track.empirical_mse);
        if cfg.instrument.kind() == InstrumentKind::Mzi {
            break;
        }
        if let Some(p) = previous {
            if (p - track.empirical_mse).abs() < track.standard_error {
                break;
            }
        }
        report = run_closed_loop(&cfg)?;
    }
    Ok((report, sigmas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceMmse {
    pub mse: f64,
    pub samples: usize,
    pub regularized: bool,
}

/// Linear MMSE of `φ(ε)` from the `window/dt` most recent interval-averaged
/// samples of `r`, solved exactly on the analytic covariances.
pub fn brute_force_mmse(
    obs: &ObservationSpectrum,
    epsilon: f64,
    window: f64,
    dt: f64,
) -> Result<BruteForceMmse, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimConfig::invalid("dt", "must be > 0"));
    }
    if !(window.is_finite() && window >= 0.0) {
        return Err(SimConfig::invalid("window", "must be >= 0"));
    }
    let process = obs.process();
    let n = (window / dt).round() as usize;
    if n > MAX_DENSE_SAMPLES {
        return Err(SimConfig::invalid(
            "window",
            format!("{n} samples exceeds the dense solve budget of {MAX_DENSE_SAMPLES}"),
        ));
    }
    let prior = process.stationary_variance();
    if n == 0 {
        return Ok(BruteForceMmse {
            mse: prior,
            samples: 0,
            regularized: false,
        });
    }
    let p = obs.signal_power();
    let column: Vec<f64> = (0..n).map(|lag| p * process.interval_covariance(lag, dt)).collect();
    let mut cov = DMatrix::from_fn(n, n, |i, j| column[i.abs_diff(j)]);
    for i in 0..n {
        cov[(i, i)] += obs.noise_level() / dt;
    }
    // sample j averages r over [-(j+1)dt, -j dt]
    let cross = DVector::from_fn(n, |j, _| {
        let j = j as f64;
        p.sqrt() * process.point_interval_covariance(epsilon, -(j + 1.0) * dt, -j * dt)
    });
    let (chol, regularized) = match cov.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let bump = 1e-12 * cov.trace() / n as f64;
            for i in 0..n {
                cov[(i, i)] += bump;
            }
            let c = cov.cholesky().ok_or_else(|| {
                SimError::Model(ModelError::Numerical("covariance not positive definite".into()))
            })?;
            (c, true)
        }
    };
    let weights = chol.solve(&cross);
    Ok(BruteForceMmse {
        mse: prior - cross.dot(&weights),
        samples: n,
        regularized,
    })
}

/// Largest absolute sample autocorrelation over lags 1..=100, against the
/// `3/√n` threshold.
pub fn whiteness_diagnostic(stream: &[f64]) -> Result<WhitenessReport, SimError> {
    let n = stream.len();
    if n < MIN_WHITENESS_SAMPLES {
        return Err(SimError::StreamTooShort {
            len: n,
            min: MIN_WHITENESS_SAMPLES,
        });
    }
    let mean = stream.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = stream.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    let (lag_of_max, max_abs_acf) = (1..=WHITENESS_MAX_LAG)
        .into_par_iter()
        .map(|lag| {
            let c: f64 = centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            (lag, (c / c0).abs())
        })
        .reduce(|| (0, 0.0), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let threshold = 3.0 / (n as f64).sqrt();
    Ok(WhitenessReport {
        max_abs_acf,
        lag_of_max,
        threshold,
        n,
        passes: max_abs_acf <= threshold,
    })
}
