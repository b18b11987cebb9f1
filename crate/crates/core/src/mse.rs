//! Closed-form minimum mean-square errors for tracking, prediction and
//! smoothing with either instrument.
//!
//! For the NLI the measurement noise level `N = 2G²g²σ_f² + 1` depends on the
//! tracking error itself; the explicit root of that self-consistency
//! condition is used everywhere, including inside `Λ` for `ε ≠ 0`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::interferometer::{build_photocurrent_model, InstrumentKind, InterferometerConfig, PhotocurrentModel};
use crate::ou::ProcessParams;
use crate::wiener::{synthesize, EstimationMode, ObservationSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBreakdown {
    /// ξ [rad²].
    pub xi: f64,
    /// K_d(0) = κ/2λ [rad²].
    pub prior_variance: f64,
    /// ∫₀^∞ K_dz² dτ [rad²].
    pub information_integral: f64,
    pub mode: EstimationMode,
    pub epsilon: f64,
    /// Λ used in the evaluation.
    pub information: f64,
}

/// Tracking MSE of the NLI (explicit root of the self-consistent equation).
pub fn tracking_mse_nli(config: &InterferometerConfig, process: &ProcessParams) -> Result<f64, ModelError> {
    let gain_sq = config
        .gain_sq()
        .ok_or(ModelError::WrongInstrument { expected: "NLI" })?;
    let g_sq = gain_sq - 1.0;
    let product = gain_sq * g_sq;
    let kappa = process.kappa();
    let lambda = process.lambda();
    let flux_term = config.photon_flux() / (gain_sq + g_sq) + lambda;
    let b = lambda - product * kappa;
    let disc = (b * b + 4.0 * product * flux_term * kappa).sqrt();
    // two algebraically equal forms; pick the one without cancellation
    Ok(if b > 0.0 {
        kappa / (b + disc)
    } else {
        (disc - b) / (4.0 * product * flux_term)
    })
}

/// Tracking MSE of the MZI, `(κ/2λ)[1 - Λ₁/(1+√(1+Λ₁))²]`, `Λ₁ = |β|²κ/λ²`.
pub fn tracking_mse_mzi(config: &InterferometerConfig, process: &ProcessParams) -> Result<f64, ModelError> {
    if config.kind() != InstrumentKind::Mzi {
        return Err(ModelError::WrongInstrument { expected: "MZI" });
    }
    Ok(tracking_from_information(process, mzi_information(config, process)))
}

pub fn tracking_mse(config: &InterferometerConfig, process: &ProcessParams) -> Result<f64, ModelError> {
    match config.kind() {
        InstrumentKind::Nli => tracking_mse_nli(config, process),
        InstrumentKind::Mzi => tracking_mse_mzi(config, process),
    }
}

fn mzi_information(config: &InterferometerConfig, process: &ProcessParams) -> f64 {
    config.photon_flux() * process.kappa() / process.lambda().powi(2)
}

/// `(κ/2λ)[1 - Λ/(1+√(1+Λ))²]`, written as `κ/(λ(1+√(1+Λ)))`.
fn tracking_from_information(process: &ProcessParams, information: f64) -> f64 {
    process.kappa() / (process.lambda() * (1.0 + (1.0 + information).sqrt()))
}

/// Right-hand side of the implicit tracking equation: the Wiener tracking MSE
/// when the photocurrent noise is built from `sigma_f_sq`.
pub fn tracking_fixed_point_rhs(
    config: &InterferometerConfig,
    process: &ProcessParams,
    sigma_f_sq: f64,
) -> Result<f64, ModelError> {
    let model = build_photocurrent_model(config, sigma_f_sq)?;
    let info = ObservationSpectrum::from_model(&model, *process)?.information();
    let root = (1.0 + info).sqrt();
    Ok(process.stationary_variance() * (1.0 - info / (1.0 + root).powi(2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub value: f64,
    pub iterations: usize,
}

/// Damped iteration `x ← (1-α)x + α·rhs(x)` with α = 0.5, started at κ/2λ.
pub fn solve_tracking_fixed_point(
    config: &InterferometerConfig,
    process: &ProcessParams,
) -> Result<FixedPoint, ModelError> {
    const DAMPING: f64 = 0.5;
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 10_000;
    let mut x = process.stationary_variance();
    for iterations in 1..=MAX_ITER {
        let next = (1.0 - DAMPING) * x + DAMPING * tracking_fixed_point_rhs(config, process, x)?;
        if (next - x).abs() <= TOL * next.abs() {
            return Ok(FixedPoint {
                value: next,
                iterations,
            });
        }
        x = next;
    }
    Err(ModelError::Numerical(format!(
        "tracking fixed point did not converge in {MAX_ITER} iterations"
    )))
}

/// Photocurrent model with the NLI noise term evaluated at the analytic
/// tracking MSE.
pub fn photocurrent(config: &InterferometerConfig, process: &ProcessParams) -> Result<PhotocurrentModel, ModelError> {
    build_photocurrent_model(config, tracking_mse(config, process)?)
}

pub fn observation_spectrum(
    config: &InterferometerConfig,
    process: &ProcessParams,
) -> Result<ObservationSpectrum, ModelError> {
    ObservationSpectrum::from_model(&photocurrent(config, process)?, *process)
}

/// Λ for the instrument: `Pκ/(Nλ²)` for the NLI with `N` at the tracking
/// MSE, `|β|²κ/λ²` for the MZI.
pub fn information_parameter(config: &InterferometerConfig, process: &ProcessParams) -> Result<f64, ModelError> {
    match config.kind() {
        InstrumentKind::Nli => Ok(observation_spectrum(config, process)?.information()),
        InstrumentKind::Mzi => Ok(mzi_information(config, process)),
    }
}

/// Prediction branch `(κ/2λ)[1 - Λ e^{-2λε}/(1+√(1+Λ))²]`.
pub fn prediction_formula(process: &ProcessParams, information: f64, epsilon: f64) -> f64 {
    let root = (1.0 + information).sqrt();
    process.stationary_variance()
        * (1.0 - information / (1.0 + root).powi(2) * (-2.0 * process.lambda() * epsilon).exp())
}

/// Smoothing branch `(κ/2λ)[1/√(1+Λ) + Λ e^{2λ√(1+Λ)ε}/((1+√(1+Λ))²√(1+Λ))]`.
pub fn smoothing_formula(process: &ProcessParams, information: f64, epsilon: f64) -> f64 {
    let root = (1.0 + information).sqrt();
    process.stationary_variance()
        * (1.0 / root
            + information * (2.0 * process.lambda() * root * epsilon).exp()
                / ((1.0 + root).powi(2) * root))
}

/// MSE at offset ε. At ε = 0 both instruments report the tracking value.
pub fn offset_mse(
    config: &InterferometerConfig,
    process: &ProcessParams,
    epsilon: f64,
) -> Result<MseBreakdown, ModelError> {
    let obs = observation_spectrum(config, process)?;
    let information = match config.kind() {
        InstrumentKind::Nli => obs.information(),
        InstrumentKind::Mzi => mzi_information(config, process),
    };
    let mode = EstimationMode::from_epsilon(epsilon);
    let xi = match mode {
        EstimationMode::Tracking => tracking_mse(config, process)?,
        EstimationMode::Prediction => prediction_formula(process, information, epsilon),
        EstimationMode::Smoothing => smoothing_formula(process, information, epsilon),
    };
    Ok(MseBreakdown {
        xi,
        prior_variance: process.stationary_variance(),
        information_integral: synthesize(&obs, epsilon).information_integral(),
        mode,
        epsilon,
        information,
    })
}

/// ξ(ε → -∞) = (κ/2λ)/√(1+Λ).
pub fn smoothing_floor(config: &InterferometerConfig, process: &ProcessParams) -> Result<f64, ModelError> {
    let info = information_parameter(config, process)?;
    Ok(process.stationary_variance() / (1.0 + info).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> (InterferometerConfig, InterferometerConfig, ProcessParams) {
        (
            InterferometerConfig::nli(7.4, 1e7).unwrap(),
            InterferometerConfig::mzi(1e7).unwrap(),
            ProcessParams::new(1e4, 1e5).unwrap(),
        )
    }

    #[test]
    fn nli_tracking_reference() {
        let (nli, _, p) = nominal();
        // 30-digit mpmath evaluation of the explicit root
        let v = tracking_mse_nli(&nli, &p).unwrap();
        assert!((v - 0.010742069786269380017).abs() < 1e-15);
        let fp = solve_tracking_fixed_point(&nli, &p).unwrap();
        assert!((fp.value - v).abs() < 1e-10 * v);
    }

    #[test]
    fn mzi_tracking_reference() {
        let (_, mzi, p) = nominal();
        let v = tracking_mse_mzi(&mzi, &p).unwrap();
        assert!((v - 0.023166247903553998491).abs() < 1e-15);
    }

    #[test]
    fn wrong_instrument_rejected() {
        let (nli, mzi, p) = nominal();
        assert!(tracking_mse_nli(&mzi, &p).is_err());
        assert!(tracking_mse_mzi(&nli, &p).is_err());
    }

    #[test]
    fn vanishing_diffusion_gives_perfect_tracking() {
        let (nli, _, _) = nominal();
        let p = ProcessParams::new(1e-12, 1e5).unwrap();
        assert!(tracking_mse_nli(&nli, &p).unwrap() < 1e-16);
    }

    #[test]
    fn vanishing_flux_hits_prior_ceiling() {
        let p = ProcessParams::new(1e4, 1e5).unwrap();
        let nli = InterferometerConfig::nli(7.4, 1e-9).unwrap();
        let v = tracking_mse_nli(&nli, &p).unwrap();
        assert!(v <= p.stationary_variance());
        let rhs = tracking_fixed_point_rhs(&nli, &p, v).unwrap();
        assert!((rhs - v).abs() < 1e-12 * v);
        assert!((v - p.stationary_variance()).abs() < 1e-6 * v);
    }

    #[test]
    fn mzi_zero_and_large_information() {
        let p = ProcessParams::new(1e4, 1e5).unwrap();
        let kappa_over_2l = p.stationary_variance();
        assert_eq!(tracking_from_information(&p, 0.0), kappa_over_2l);
        // Λ₁ = 1e6 ⇒ |β|² = 1e12
        let mzi = InterferometerConfig::mzi(1e12).unwrap();
        let v = tracking_mse_mzi(&mzi, &p).unwrap();
        let asymptote = kappa_over_2l * 2.0 / 1e6f64.sqrt();
        assert!((v / asymptote - 1.0).abs() < 0.01);
        let classical = 0.5 * (1e4f64 / 1e12).sqrt();
        let floor = smoothing_floor(&mzi, &p).unwrap();
        assert!((floor / classical - 1.0).abs() < 0.01);
    }

    #[test]
    fn branch_limits_at_zero_offset() {
        let (nli, mzi, p) = nominal();
        for cfg in [nli, mzi] {
            let info = information_parameter(&cfg, &p).unwrap();
            let track = tracking_mse(&cfg, &p).unwrap();
            let pred = prediction_formula(&p, info, 0.0);
            assert!((pred - track).abs() <= 1e-12 * track);
            let root = (1.0 + info).sqrt();
            let smooth = smoothing_formula(&p, info, 0.0);
            let expected = p.stationary_variance()
                * (1.0 / root + info / ((1.0 + root).powi(2) * root));
            assert!((smooth - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn extreme_offsets() {
        let (nli, _, p) = nominal();
        let far_future = offset_mse(&nli, &p, 1.0).unwrap();
        assert!((far_future.xi - 0.05).abs() < 1e-15);
        let far_past = offset_mse(&nli, &p, -1.0).unwrap();
        let floor = smoothing_floor(&nli, &p).unwrap();
        assert!((far_past.xi - floor).abs() < 1e-15);
    }

    #[test]
    fn breakdown_is_consistent() {
        let (nli, mzi, p) = nominal();
        for cfg in [nli, mzi] {
            for eps in [-1e-5, -2e-6, 0.0, 2e-6, 1e-5] {
                let b = offset_mse(&cfg, &p, eps).unwrap();
                let diff = b.prior_variance - b.information_integral;
                assert!((b.xi - diff).abs() <= 1e-12 * b.xi, "{cfg:?} eps {eps}");
                assert!(b.xi > 0.0 && b.xi <= b.prior_variance);
            }
        }
    }

    #[test]
    fn smoothing_floor_about_half_of_tracking() {
        let (nli, _, p) = nominal();
        let ratio = tracking_mse(&nli, &p).unwrap() / smoothing_floor(&nli, &p).unwrap();
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }
}
