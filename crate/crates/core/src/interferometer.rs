//! SU(1,1) (NLI) and Mach-Zehnder (MZI) input-output models under adaptive
//! homodyne feedback.
//!
//! The NLI feedback convention is `Φ = -φ_f - π`, `θ = φ_f + π/2`; the MZI
//! convention is `Φ = φ_f`, `θ = φ_f + π`. Both make the homodyne record most
//! sensitive to the residual `φ - φ_f`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InstrumentKind {
    Nli,
    Mzi,
}

impl fmt::Display for InstrumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstrumentKind::Nli => f.write_str("NLI"),
            InstrumentKind::Mzi => f.write_str("MZI"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    kind: InstrumentKind,
    /// G², only meaningful for the NLI.
    gain_sq: Option<f64>,
    /// |β|², photons per second inside the interferometer.
    photon_flux: f64,
}

impl InterferometerConfig {
    /// NLI with parametric gain `G² > 1`.
    pub fn nli(gain_sq: f64, photon_flux: f64) -> Result<Self, ModelError> {
        if !(gain_sq.is_finite() && gain_sq > 1.0) {
            return Err(ModelError::OutOfDomain {
                name: "gain_sq",
                requirement: "> 1 (G² - g² = 1 needs g² > 0)",
                value: gain_sq,
            });
        }
        Ok(Self {
            kind: InstrumentKind::Nli,
            gain_sq: Some(gain_sq),
            photon_flux: require_positive("photon_flux", photon_flux)?,
        })
    }

    pub fn mzi(photon_flux: f64) -> Result<Self, ModelError> {
        Ok(Self {
            kind: InstrumentKind::Mzi,
            gain_sq: None,
            photon_flux: require_positive("photon_flux", photon_flux)?,
        })
    }

    pub fn kind(&self) -> InstrumentKind {
        self.kind
    }

    pub fn photon_flux(&self) -> f64 {
        self.photon_flux
    }

    /// |β|.
    pub fn amplitude(&self) -> f64 {
        self.photon_flux.sqrt()
    }

    pub fn gain_sq(&self) -> Option<f64> {
        self.gain_sq
    }

    /// `g² = G² - 1`.
    pub fn g_sq(&self) -> Option<f64> {
        self.gain_sq.map(|g2| g2 - 1.0)
    }

    fn nli_gains(&self) -> Result<NliGains, ModelError> {
        match self.gain_sq {
            Some(gain_sq) => Ok(NliGains::new(gain_sq, self.photon_flux)),
            None => Err(ModelError::WrongInstrument { expected: "NLI" }),
        }
    }

    fn require_mzi(&self) -> Result<(), ModelError> {
        match self.kind {
            InstrumentKind::Mzi => Ok(()),
            InstrumentKind::Nli => Err(ModelError::WrongInstrument { expected: "MZI" }),
        }
    }
}

/// Derived NLI amplitudes: `G`, `g`, and the seed amplitude |α| with
/// `|β|² = (G² + g²)|α|²`.
#[derive(Debug, Clone, Copy)]
struct NliGains {
    big: f64,
    small: f64,
    alpha: f64,
}

impl NliGains {
    fn new(gain_sq: f64, photon_flux: f64) -> Self {
        let g_sq = gain_sq - 1.0;
        Self {
            big: gain_sq.sqrt(),
            small: g_sq.sqrt(),
            alpha: (photon_flux / (gain_sq + g_sq)).sqrt(),
        }
    }

    /// `G²g²`.
    fn product_sq(&self) -> f64 {
        (self.big * self.small).powi(2)
    }
}

/// Homodyne mean at the NLI `d_out` port for arbitrary feedback phase `Φ`
/// and local-oscillator phase `θ`: `4Gg|α| cos((Φ+φ)/2) cos((Φ-φ)/2 + θ)`.
pub fn nli_homodyne_mean(
    config: &InterferometerConfig,
    phi: f64,
    feedback_phase: f64,
    lo_phase: f64,
) -> Result<f64, ModelError> {
    let k = config.nli_gains()?;
    Ok(4.0
        * k.big
        * k.small
        * k.alpha
        * ((feedback_phase + phi) / 2.0).cos()
        * ((feedback_phase - phi) / 2.0 + lo_phase).cos())
}

/// Homodyne variance at the NLI `d_out` port: `4G²g²(1 + cos(Φ + φ)) + 1`.
pub fn nli_homodyne_variance(
    config: &InterferometerConfig,
    phi: f64,
    feedback_phase: f64,
) -> Result<f64, ModelError> {
    let k = config.nli_gains()?;
    Ok(4.0 * k.product_sq() * (1.0 + (feedback_phase + phi).cos()) + 1.0)
}

/// Exact homodyne mean under the NLI feedback convention. Equals
/// `2Gg|α| sin(φ - φ_f)`.
pub fn nli_output_mode_mean(
    config: &InterferometerConfig,
    phi: f64,
    phi_feedback: f64,
) -> Result<f64, ModelError> {
    nli_homodyne_mean(config, phi, -phi_feedback - PI, phi_feedback + FRAC_PI_2)
}

/// Small-angle form `2Gg|α|(φ - φ_f)`.
pub fn nli_output_mode_mean_linearized(
    config: &InterferometerConfig,
    phi: f64,
    phi_feedback: f64,
) -> Result<f64, ModelError> {
    let k = config.nli_gains()?;
    Ok(2.0 * k.big * k.small * k.alpha * (phi - phi_feedback))
}

/// Exact homodyne variance under the NLI feedback convention,
/// `8G²g² sin²((φ-φ_f)/2) + 1`.
pub fn nli_output_mode_variance(
    config: &InterferometerConfig,
    phi: f64,
    phi_feedback: f64,
) -> Result<f64, ModelError> {
    nli_homodyne_variance(config, phi, -phi_feedback - PI)
}

/// MZI homodyne mean, `2|β| cos((Φ-φ)/2) cos((Φ+φ)/2 - θ + π/2)`.
pub fn mzi_homodyne_mean(
    config: &InterferometerConfig,
    phi: f64,
    feedback_phase: f64,
    lo_phase: f64,
) -> Result<f64, ModelError> {
    config.require_mzi()?;
    Ok(2.0
        * config.amplitude()
        * ((feedback_phase - phi) / 2.0).cos()
        * ((feedback_phase + phi) / 2.0 - lo_phase + FRAC_PI_2).cos())
}

/// Exact MZI mean under its feedback convention, `|β| sin(φ - φ_f)`.
pub fn mzi_output_mode_mean(
    config: &InterferometerConfig,
    phi: f64,
    phi_feedback: f64,
) -> Result<f64, ModelError> {
    mzi_homodyne_mean(config, phi, phi_feedback, phi_feedback + PI)
}

/// Linear measurement model `r(t) = signal_gain·φ(t) + √noise_power · n(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotocurrentModel {
    pub kind: InstrumentKind,
    /// Coefficient of φ(t) in r(t), √P [s^-1/2].
    pub signal_gain: f64,
    /// White-noise level N, in units of the shot-noise PSD.
    pub noise_power: f64,
    /// Tracking MSE σ_f² entering the NLI noise term [rad²].
    pub sigma_f_sq: f64,
}

impl PhotocurrentModel {
    /// `P = signal_gain²`.
    pub fn signal_power(&self) -> f64 {
        self.signal_gain * self.signal_gain
    }

    pub fn snr(&self) -> f64 {
        self.signal_power() / self.noise_power
    }
}

pub fn build_photocurrent_model(
    config: &InterferometerConfig,
    sigma_f_sq: f64,
) -> Result<PhotocurrentModel, ModelError> {
    let sigma_f_sq = require_nonnegative("sigma_f_sq", sigma_f_sq)?;
    match config.kind {
        InstrumentKind::Nli => {
            let k = config.nli_gains()?;
            let gain_sq = k.big * k.big;
            let g_sq = k.small * k.small;
            Ok(PhotocurrentModel {
                kind: InstrumentKind::Nli,
                signal_gain: 2.0 * k.big * k.small * config.amplitude() / (gain_sq + g_sq).sqrt(),
                noise_power: 2.0 * k.product_sq() * sigma_f_sq + 1.0,
                sigma_f_sq,
            })
        }
        InstrumentKind::Mzi => Ok(PhotocurrentModel {
            kind: InstrumentKind::Mzi,
            signal_gain: config.amplitude(),
            noise_power: 1.0,
            sigma_f_sq,
        }),
    }
}

/// `SNR_NLI / SNR_MZI = 4G²(G²-1) / ((2G²-1)(2G²(G²-1)σ_f² + 1))` at equal
/// photon flux.
pub fn snr_ratio(gain_sq: f64, sigma_f_sq: f64) -> f64 {
    let g_sq = gain_sq - 1.0;
    4.0 * gain_sq * g_sq / ((2.0 * gain_sq - 1.0) * (2.0 * gain_sq * g_sq * sigma_f_sq + 1.0))
}
