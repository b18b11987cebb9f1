//! Causal Wiener estimation of `d(t) = φ(t + ε)` from `r(s ≤ t)` where
//! `r = √P φ + √N n` and `φ` is Ornstein-Uhlenbeck.
//!
//! The observation spectrum `S_r(ω) = Pκ/(ω²+λ²) + N` factors as
//! `H⁺(ω) (H⁺(ω))*` with the minimum-phase factor
//! `H⁺(ω) = √N (iω + λ√(1+Λ)) / (iω + λ)`, `Λ = Pκ/(Nλ²)`.
//! Whitening by `1/H⁺` and projecting the cross-spectrum onto its causal part
//! gives the optimum processor for each offset. All three regimes are
//! realized in closed form, both as transfer functions and as impulse
//! responses.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, ModelError};
use crate::interferometer::PhotocurrentModel;
use crate::ou::ProcessParams;
use crate::quadrature::GaussLegendre;

/// Relative tail mass tolerated beyond a realized kernel's horizon.
pub const TAIL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpectrum {
    /// P, squared signal gain [1/s].
    signal_power: f64,
    /// N, white-noise level.
    noise_level: f64,
    process: ProcessParams,
}

impl ObservationSpectrum {
    pub fn new(
        signal_power: f64,
        noise_level: f64,
        process: ProcessParams,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            signal_power: require_nonnegative("signal_power", signal_power)?,
            noise_level: require_positive("noise_level", noise_level)?,
            process,
        })
    }

    pub fn from_model(model: &PhotocurrentModel, process: ProcessParams) -> Result<Self, ModelError> {
        Self::new(model.signal_power(), model.noise_power, process)
    }

    pub fn signal_power(&self) -> f64 {
        self.signal_power
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn process(&self) -> &ProcessParams {
        &self.process
    }

    /// Λ = Pκ/(Nλ²).
    pub fn information(&self) -> f64 {
        let l = self.process.lambda();
        self.signal_power * self.process.kappa() / (self.noise_level * l * l)
    }

    /// λ√(1+Λ), the tracking filter's corner frequency.
    pub fn cutoff(&self) -> f64 {
        self.process.lambda() * (1.0 + self.information()).sqrt()
    }

    /// `S_r(ω)`.
    pub fn density(&self, omega: f64) -> f64 {
        self.signal_power * self.process.spectral_density(omega) + self.noise_level
    }

    /// `S_dr(ω) = √P κ e^{iωε} / (ω² + λ²)`.
    pub fn cross_density(&self, omega: f64, epsilon: f64) -> Complex64 {
        Complex64::from_polar(
            self.signal_power.sqrt() * self.process.spectral_density(omega),
            omega * epsilon,
        )
    }

    /// `K_dr(τ) = ⟨φ(t+ε) r(t-τ)⟩ = √P K_φ(τ + ε)`.
    pub fn cross_correlation(&self, tau: f64, epsilon: f64) -> f64 {
        self.signal_power.sqrt() * self.process.autocorrelation(tau + epsilon)
    }

    /// MSE of an arbitrary linear processor `H(ω)` applied to `r` for the
    /// target `φ(t + ε)`, integrated over the whole real frequency line.
    pub fn mse_of_response<F: Fn(f64) -> Complex64>(&self, epsilon: f64, response: F) -> f64 {
        let scale = self.cutoff();
        let sqrt_p = self.signal_power.sqrt();
        let gl = GaussLegendre::new(16);
        let integrand = |theta: f64| {
            let omega = scale * theta.tan();
            let jac = scale / theta.cos().powi(2);
            let h = response(omega);
            let s_phi = self.process.spectral_density(omega);
            let cross = h * Complex64::from_polar(sqrt_p * s_phi, -omega * epsilon);
            (-2.0 * cross.re + h.norm_sqr() * self.density(omega)) * jac
        };
        let half = 0.5 * PI;
        let total = gl.integrate_composite(integrand, &[-half, 0.0, half], 4000);
        self.process.stationary_variance() + total / (2.0 * PI)
    }
}

/// Minimum-phase factor `H⁺(ω) = √N (iω + zero)/(iω + pole)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFactor {
    pub gain: f64,
    pub zero: f64,
    pub pole: f64,
}

impl SpectralFactor {
    pub fn response(&self, omega: f64) -> Complex64 {
        let iw = Complex64::new(0.0, omega);
        self.gain * (iw + self.zero) / (iw + self.pole)
    }

    /// `W(ω) = 1/H⁺(ω)`.
    pub fn whitening(&self, omega: f64) -> Complex64 {
        let iw = Complex64::new(0.0, omega);
        (iw + self.pole) / (self.gain * (iw + self.zero))
    }

    /// Both the factor and its inverse are causal and stable.
    pub fn is_minimum_phase(&self) -> bool {
        self.zero > 0.0 && self.pole > 0.0
    }
}

pub fn factorize(obs: &ObservationSpectrum) -> SpectralFactor {
    SpectralFactor {
        gain: obs.noise_level.sqrt(),
        zero: obs.cutoff(),
        pole: obs.process.lambda(),
    }
}

/// Unit-variance innovations of the interval-averaged record, which is
/// ARMA(1,1) with AR root `e^{-λdt}`.
#[derive(Debug, Clone)]
pub struct InnovationsFilter {
    rho: f64,
    theta: f64,
    scale: f64,
    last_r: f64,
    last_e: f64,
}

impl InnovationsFilter {
    pub fn new(obs: &ObservationSpectrum, dt: f64) -> Self {
        let process = &obs.process;
        let rho = (-process.lambda() * dt).exp();
        let c0 = obs.signal_power * process.interval_covariance(0, dt) + obs.noise_level / dt;
        let c1 = obs.signal_power * process.interval_covariance(1, dt);
        let g0 = c0 * (1.0 + rho * rho) - 2.0 * rho * c1;
        let g1 = c1 - rho * c0;
        // u = e + θ e₋₁ with θ/(1+θ²) = g1/g0, |θ| < 1
        let q = g1 / g0;
        let theta = if q.abs() < 1e-300 { 0.0 } else { (1.0 - (1.0 - 4.0 * q * q).sqrt()) / (2.0 * q) };
        let innovation_var = if theta == 0.0 { g0 } else { g1 / theta };
        InnovationsFilter { rho, theta, scale: innovation_var.sqrt().recip(), last_r: 0.0, last_e: 0.0 }
    }

    pub fn ma_coefficient(&self) -> f64 {
        self.theta
    }

    pub fn push(&mut self, r: f64) -> f64 {
        let u = r - self.rho * self.last_r;
        let e = u - self.theta * self.last_e;
        self.last_r = r;
        self.last_e = e;
        self.scale * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    Prediction,
    Tracking,
    Smoothing,
}

impl EstimationMode {
    pub fn from_epsilon(epsilon: f64) -> Self {
        if epsilon > 0.0 {
            EstimationMode::Prediction
        } else if epsilon < 0.0 {
            EstimationMode::Smoothing
        } else {
            EstimationMode::Tracking
        }
    }
}

/// `K_dz(τ)`, the cross-correlation between the target and the whitened record.
pub fn cross_correlation_kdz(obs: &ObservationSpectrum, epsilon: f64, tau: f64) -> f64 {
    let amplitude = kdz_amplitude(obs);
    let s = tau + epsilon;
    if s >= 0.0 {
        amplitude * (-obs.process.lambda() * s).exp()
    } else {
        amplitude * (obs.cutoff() * s).exp()
    }
}

/// `√P κ / (√N λ (1 + √(1+Λ)))`.
fn kdz_amplitude(obs: &ObservationSpectrum) -> f64 {
    let root = (1.0 + obs.information()).sqrt();
    obs.signal_power.sqrt() * obs.process.kappa()
        / (obs.noise_level.sqrt() * obs.process.lambda() * (1.0 + root))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerSolution {
    pub epsilon: f64,
    pub mode: EstimationMode,
    pub spectrum: ObservationSpectrum,
    pub factor: SpectralFactor,
    /// λ√(1+Λ) [rad/s].
    pub cutoff: f64,
    /// χ = κ√P / (Nλ(1+√(1+Λ))), the tracking filter's input gain.
    pub tracking_gain: f64,
}

pub fn synthesize(obs: &ObservationSpectrum, epsilon: f64) -> WienerSolution {
    let factor = factorize(obs);
    WienerSolution {
        epsilon,
        mode: EstimationMode::from_epsilon(epsilon),
        spectrum: *obs,
        factor,
        cutoff: factor.zero,
        tracking_gain: kdz_amplitude(obs) / obs.noise_level.sqrt(),
    }
}

impl WienerSolution {
    fn lambda(&self) -> f64 {
        self.spectrum.process.lambda()
    }

    fn root(&self) -> f64 {
        self.cutoff / self.lambda()
    }

    /// Buffered lag |ε| for smoothing, zero otherwise.
    pub fn lag(&self) -> f64 {
        (-self.epsilon).max(0.0)
    }

    /// `K_dz(τ)` for this solution's offset.
    pub fn kdz(&self, tau: f64) -> f64 {
        cross_correlation_kdz(&self.spectrum, self.epsilon, tau)
    }

    /// Optimum causal processor `H_o(ω)`.
    ///
    /// Prediction is the tracking filter scaled by `e^{-λε}`: the causal part
    /// of `e^{iωε}/(λ + iω)` for `ε > 0`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let iw = Complex64::new(0.0, omega);
        let a = self.cutoff;
        match self.mode {
            EstimationMode::Tracking => self.tracking_gain / (a + iw),
            EstimationMode::Prediction => {
                (-self.lambda() * self.epsilon).exp() * self.tracking_gain / (a + iw)
            }
            EstimationMode::Smoothing => {
                let eps = self.epsilon;
                let l = self.lambda();
                let lead = self.spectrum.process.kappa() * self.spectrum.signal_power.sqrt()
                    / (self.spectrum.noise_level * (a * a + omega * omega));
                let correction = ((a - iw) * eps).exp() * (l + iw) / (l * (1.0 + self.root()));
                lead * (iw * eps).exp() * (1.0 - correction)
            }
        }
    }

    /// The prediction branch written with a bare `e^{iωε}` factor on the
    /// tracking filter, as it is often quoted. It is an acausal time advance
    /// whose MSE equals the tracking MSE; kept for comparison only.
    pub fn advance_form_response(&self, omega: f64) -> Complex64 {
        match self.mode {
            EstimationMode::Prediction => {
                let iw = Complex64::new(0.0, omega);
                (iw * self.epsilon).exp() * self.tracking_gain / (self.cutoff + iw)
            }
            _ => self.response(omega),
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.response(0.0).re
    }

    /// `h_o(t)`, zero for `t < 0`.
    pub fn impulse_response(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let a = self.cutoff;
        let chi = self.tracking_gain;
        match self.mode {
            EstimationMode::Tracking => chi * (-a * t).exp(),
            EstimationMode::Prediction => {
                (-self.lambda() * self.epsilon).exp() * chi * (-a * t).exp()
            }
            EstimationMode::Smoothing => {
                let lag = self.lag();
                let k = (self.lambda() - a) / (2.0 * a);
                let near = if t < lag { a * (t - lag) } else { -a * (t - lag) };
                chi * (near.exp() + k * (near.exp() - (-a * (t + lag)).exp()))
            }
        }
    }

    /// `∫₀^∞ K_dz²(τ) dτ`.
    pub fn information_integral(&self) -> f64 {
        let amp = kdz_amplitude(&self.spectrum);
        let l = self.lambda();
        let a = self.cutoff;
        let eps = self.epsilon;
        if eps >= 0.0 {
            amp * amp * (-2.0 * l * eps).exp() / (2.0 * l)
        } else {
            amp * amp * (-(2.0 * a * eps).exp_m1() / (2.0 * a) + 1.0 / (2.0 * l))
        }
    }

    /// `K_d(0) - ∫₀^∞ K_dz²`.
    pub fn mse(&self) -> f64 {
        self.spectrum.process.stationary_variance() - self.information_integral()
    }

    /// Largest `|K_dr(τ) - ∫₀^∞ h(υ) K_r(τ-υ) dυ|` over `taus` (all `≥ 0`),
    /// relative to `K_dr(0)`. `K_r` has a white part `N δ`.
    pub fn wiener_hopf_residual(&self, taus: &[f64]) -> f64 {
        let gl = GaussLegendre::new(16);
        let p = self.spectrum.signal_power;
        let n = self.spectrum.noise_level;
        let lag = self.lag();
        let reference = self.spectrum.cross_correlation(0.0, self.epsilon).abs();
        taus.iter()
            .map(|&tau| {
                let end = tau.max(lag) + 60.0 / self.cutoff + 60.0 / self.lambda();
                let mut bps = vec![0.0, lag, tau, end];
                bps.sort_by(f64::total_cmp);
                bps.dedup();
                let smooth = gl.integrate_composite(
                    |u| self.impulse_response(u) * self.spectrum.process.autocorrelation(tau - u),
                    &bps,
                    64,
                );
                let rhs = n * self.impulse_response(tau) + p * smooth;
                (self.spectrum.cross_correlation(tau, self.epsilon) - rhs).abs() / reference
            })
            .fold(0.0, f64::max)
    }

    /// Default realization horizon: `|ε|` of buffered lag plus forty time
    /// constants of the slower pole.
    pub fn default_horizon(&self) -> f64 {
        self.lag() + (40.0 / self.lambda()).max(40.0 / self.cutoff)
    }
}

/// Sampled impulse response: `head` taps followed by a geometric tail
/// `tail_first · tail_ratio^k`. Taps are integrals of `h_o` over successive
/// `dt` intervals, so they apply directly to interval-averaged samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedKernel {
    pub dt: f64,
    pub head: Vec<f64>,
    pub tail_first: f64,
    pub tail_ratio: f64,
    /// Number of taps inside the requested horizon.
    pub horizon_taps: usize,
}

impl RealizedKernel {
    pub fn tap(&self, j: usize) -> f64 {
        if j < self.head.len() {
            self.head[j]
        } else {
            self.tail_first * self.tail_ratio.powi((j - self.head.len()) as i32)
        }
    }

    /// Taps up to the horizon.
    pub fn taps(&self) -> Vec<f64> {
        (0..self.horizon_taps).map(|j| self.tap(j)).collect()
    }

    /// Sum of all taps including the analytic tail, i.e. `H_o(0)`.
    pub fn dc_gain(&self) -> f64 {
        self.head.iter().sum::<f64>() + self.tail_first / (1.0 - self.tail_ratio)
    }

    pub fn filter(&self) -> KernelFilter {
        KernelFilter {
            head: self.head.clone(),
            window: VecDeque::with_capacity(self.head.len() + 1),
            tail_first: self.tail_first,
            tail_ratio: self.tail_ratio,
            tail_state: 0.0,
        }
    }
}

pub fn realize_impulse_response(
    sol: &WienerSolution,
    dt: f64,
    horizon: f64,
) -> Result<RealizedKernel, ModelError> {
    require_positive("dt", dt)?;
    require_positive("horizon", horizon)?;
    let a = sol.cutoff;
    let lag = sol.lag();
    let lag_steps = (lag / dt).round();
    if (lag_steps * dt - lag).abs() > 1e-6 * dt {
        return Err(ModelError::OutOfDomain {
            name: "epsilon",
            requirement: "an integer multiple of dt for smoothing",
            value: sol.epsilon,
        });
    }
    let lag_steps = lag_steps as usize;
    let ratio = (-a * dt).exp();
    let step_integral = -(-a * dt).exp_m1() / a;

    // total |h| mass and the part beyond the horizon, from the closed form
    let (tail_amplitude, head) = match sol.mode {
        EstimationMode::Tracking | EstimationMode::Prediction => (sol.impulse_response(0.0), vec![]),
        EstimationMode::Smoothing => {
            let chi = sol.tracking_gain;
            let k = (sol.lambda() - a) / (2.0 * a);
            let head = (0..lag_steps)
                .map(|j| {
                    let t0 = j as f64 * dt;
                    let t1 = t0 + dt;
                    let grow = ((a * (t1 - lag)).exp() - (a * (t0 - lag)).exp()) / a;
                    let fall = ((-a * (t0 + lag)).exp() - (-a * (t1 + lag)).exp()) / a;
                    chi * (grow + k * (grow - fall))
                })
                .collect();
            (sol.impulse_response(lag), head)
        }
    };
    if horizon <= lag {
        return Err(ModelError::HorizonTooShort {
            horizon,
            tail_fraction: 1.0,
            tolerance: TAIL_TOLERANCE,
        });
    }
    let head_mass: f64 = head.iter().map(|w: &f64| w.abs()).sum();
    let tail_mass = tail_amplitude.abs() / a;
    let beyond = tail_mass * (-a * (horizon - lag)).exp();
    let tail_fraction = beyond / (head_mass + tail_mass);
    if tail_fraction > TAIL_TOLERANCE {
        return Err(ModelError::HorizonTooShort {
            horizon,
            tail_fraction,
            tolerance: TAIL_TOLERANCE,
        });
    }
    Ok(RealizedKernel {
        dt,
        head,
        tail_first: tail_amplitude * step_integral,
        tail_ratio: ratio,
        horizon_taps: (horizon / dt).ceil() as usize,
    })
}

/// Streaming convolution with a [`RealizedKernel`]. The head is a direct FIR
/// over the buffered lag; the tail is a one-pole recursion fed by the input
/// delayed by the head length.
#[derive(Debug, Clone)]
pub struct KernelFilter {
    head: Vec<f64>,
    window: VecDeque<f64>,
    tail_first: f64,
    tail_ratio: f64,
    tail_state: f64,
}

impl KernelFilter {
    pub fn push(&mut self, r: f64) -> f64 {
        let m = self.head.len();
        self.window.push_front(r);
        if self.window.len() > m {
            let delayed = self.window.pop_back().unwrap_or(0.0);
            self.tail_state = self.tail_ratio * self.tail_state + delayed;
        } else {
            self.tail_state *= self.tail_ratio;
        }
        let head: f64 = self.head.iter().zip(&self.window).map(|(w, x)| w * x).sum();
        head + self.tail_first * self.tail_state
    }
}
