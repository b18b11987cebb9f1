//! Parametric-gain optimization at fixed photon flux, the large-flux
//! asymptotes, and the reference scalings they are compared against.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, ModelError};
use crate::interferometer::InterferometerConfig;
use crate::mse::{smoothing_floor, tracking_mse, tracking_mse_nli};
use crate::ou::ProcessParams;

/// Upper end of the gain search.
pub const MAX_GAIN_SQ: f64 = 1e4;
const MIN_GAIN_SQ: f64 = 1.0 + 1e-6;
const GRID_POINTS: usize = 400;
const GAIN_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Minimize σ_f².
    Tracking,
    /// Minimize ξ(ε → -∞).
    SmoothingFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainOptimum {
    pub gain_sq: f64,
    pub mse: f64,
    pub objective: Objective,
}

pub fn objective_value(
    process: &ProcessParams,
    photon_flux: f64,
    gain_sq: f64,
    objective: Objective,
) -> Result<f64, ModelError> {
    let cfg = InterferometerConfig::nli(gain_sq, photon_flux)?;
    match objective {
        Objective::Tracking => tracking_mse(&cfg, process),
        Objective::SmoothingFloor => smoothing_floor(&cfg, process),
    }
}

/// Log-spaced scan over `G² ∈ (1, 10⁴]` followed by golden-section refinement
/// of the best bracket.
pub fn optimize_gain(
    process: &ProcessParams,
    photon_flux: f64,
    objective: Objective,
) -> Result<GainOptimum, ModelError> {
    require_positive("photon_flux", photon_flux)?;
    let f = |g: f64| objective_value(process, photon_flux, g, objective);

    let ratio = (MAX_GAIN_SQ / MIN_GAIN_SQ).ln() / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| MIN_GAIN_SQ * (ratio * i as f64).exp())
        .collect();
    let values = grid.iter().map(|&g| f(g)).collect::<Result<Vec<_>, _>>()?;

    // strict < keeps the first (smallest G²) among ties
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    let worst = values.iter().cloned().fold(f64::MIN, f64::max);
    if worst - values[best] <= 1e-14 * values[best].abs() {
        return Err(ModelError::Numerical(
            "gain objective is flat over the search range".into(),
        ));
    }

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > GAIN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let gain_sq = 0.5 * (lo + hi);
    let mut candidate = GainOptimum {
        gain_sq,
        mse: f(gain_sq)?,
        objective,
    };
    if values[best] < candidate.mse {
        candidate = GainOptimum {
            gain_sq: grid[best],
            mse: values[best],
            objective,
        };
    }
    Ok(candidate)
}

/// σ_f² at which `∂SNR_NLI/∂G² = 0` with σ_f² held fixed:
/// `4[2G²(G²-1)+1] / [4G²(G²-1)]²`.
pub fn snr_stationary_sigma(gain_sq: f64) -> f64 {
    let a = gain_sq * (gain_sq - 1.0);
    4.0 * (2.0 * a + 1.0) / (4.0 * a).powi(2)
}

/// Gain maximizing the photocurrent SNR: the `G²` where the explicit tracking
/// MSE meets the SNR stationarity condition. Returns the smallest root.
pub fn snr_optimal_gain(process: &ProcessParams, photon_flux: f64) -> Result<f64, ModelError> {
    require_positive("photon_flux", photon_flux)?;
    let f = |g: f64| -> Result<f64, ModelError> {
        let cfg = InterferometerConfig::nli(g, photon_flux)?;
        Ok(tracking_mse_nli(&cfg, process)? - snr_stationary_sigma(g))
    };
    let ratio = (MAX_GAIN_SQ / MIN_GAIN_SQ).ln() / 1999.0;
    let mut prev_g = MIN_GAIN_SQ;
    let mut prev = f(prev_g)?;
    for i in 1..2000 {
        let g = MIN_GAIN_SQ * (ratio * i as f64).exp();
        let v = f(g)?;
        if prev.signum() != v.signum() {
            let (mut lo, mut hi, mut flo) = (prev_g, g, prev);
            while hi - lo > 1e-12 * hi {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev_g = g;
        prev = v;
    }
    Err(ModelError::Numerical(
        "no SNR-stationary gain in the search range".into(),
    ))
}

/// `(1/2)√(κ/|β|²)`, coherent-state MZI smoothing scaling.
pub fn classical_limit(process: &ProcessParams, photon_flux: f64) -> f64 {
    0.5 * (process.kappa() / photon_flux).sqrt()
}

/// `(4/5)(κ/|β|²)^{2/3}`, canonical phase measurement minimum.
pub fn canonical_bound(process: &ProcessParams, photon_flux: f64) -> f64 {
    0.8 * (process.kappa() / photon_flux).powf(2.0 / 3.0)
}

/// `(κ/(2|β|²))^{2/3}`.
pub fn heisenberg_asymptote(process: &ProcessParams, photon_flux: f64) -> f64 {
    (process.kappa() / (2.0 * photon_flux)).powf(2.0 / 3.0)
}

/// `G_o² ≈ (|β|²κ²)^{1/3} / (2^{2/3} κ)`.
pub fn asymptotic_gain_sq(process: &ProcessParams, photon_flux: f64) -> f64 {
    let k = process.kappa();
    (photon_flux * k * k).cbrt() / (4f64.cbrt() * k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeWarning {
    pub condition: &'static str,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticEstimate {
    pub value: f64,
    /// Same quantity through `σ_f² ≈ 1/(2G_o⁴)` at the asymptotic gain.
    pub consistency: f64,
    pub gain_sq: f64,
    pub warnings: Vec<RegimeWarning>,
}

const REGIME_MARGIN: f64 = 10.0;

/// Checks `G_o² ≫ 1`, `|β|²/(2G_o²) ≫ λ`, `|β|² ≫ κ`, `G_o⁴κ ≫ λ` with a
/// factor-of-ten margin each.
pub fn regime_warnings(process: &ProcessParams, photon_flux: f64) -> Vec<RegimeWarning> {
    let g2 = asymptotic_gain_sq(process, photon_flux);
    let (k, l) = (process.kappa(), process.lambda());
    [
        ("G_o^2 >> 1", g2),
        ("|beta|^2/(2 G_o^2) >> lambda", photon_flux / (2.0 * g2) / l),
        ("|beta|^2 >> kappa", photon_flux / k),
        ("G_o^4 kappa >> lambda", g2 * g2 * k / l),
    ]
    .into_iter()
    .filter(|&(_, margin)| margin < REGIME_MARGIN)
    .map(|(condition, margin)| RegimeWarning { condition, margin })
    .collect()
}

/// `σ_f² ≈ 2^{1/3}(κ/|β|²)^{2/3}`.
pub fn asymptotic_tracking_mse(process: &ProcessParams, photon_flux: f64) -> AsymptoticEstimate {
    let g2 = asymptotic_gain_sq(process, photon_flux);
    AsymptoticEstimate {
        value: 2f64.cbrt() * (process.kappa() / photon_flux).powf(2.0 / 3.0),
        consistency: 1.0 / (2.0 * g2 * g2),
        gain_sq: g2,
        warnings: regime_warnings(process, photon_flux),
    }
}

/// `ξ ≈ (κ/(2|β|²))^{2/3}`.
pub fn asymptotic_smoothing_mse(process: &ProcessParams, photon_flux: f64) -> AsymptoticEstimate {
    let g2 = asymptotic_gain_sq(process, photon_flux);
    let tracking = 1.0 / (2.0 * g2 * g2);
    AsymptoticEstimate {
        value: heisenberg_asymptote(process, photon_flux),
        // smoothing floor ≈ tracking/2 in this regime
        consistency: tracking / 2.0,
        gain_sq: g2,
        warnings: regime_warnings(process, photon_flux),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScalings {
    pub classical: f64,
    pub canonical: f64,
    pub heisenberg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub photon_flux: f64,
    pub optimal_gain_sq: f64,
    pub tracking_mse: f64,
    pub smoothing_mse: f64,
    pub mzi_smoothing_mse: f64,
    pub references: ReferenceScalings,
}

/// One point of the flux scan with the gain re-optimized for the smoothing
/// floor.
pub fn scaling_point(process: &ProcessParams, photon_flux: f64) -> Result<ScalingPoint, ModelError> {
    let opt = optimize_gain(process, photon_flux, Objective::SmoothingFloor)?;
    let nli = InterferometerConfig::nli(opt.gain_sq, photon_flux)?;
    let mzi = InterferometerConfig::mzi(photon_flux)?;
    Ok(ScalingPoint {
        photon_flux,
        optimal_gain_sq: opt.gain_sq,
        tracking_mse: tracking_mse(&nli, process)?,
        smoothing_mse: opt.mse,
        mzi_smoothing_mse: smoothing_floor(&mzi, process)?,
        references: ReferenceScalings {
            classical: classical_limit(process, photon_flux),
            canonical: canonical_bound(process, photon_flux),
            heisenberg: heisenberg_asymptote(process, photon_flux),
        },
    })
}
