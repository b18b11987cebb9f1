//! Ornstein-Uhlenbeck phase process `dφ = -λφ dt + √κ dV`.
//!
//! Exact second-order statistics plus a seeded sample-path generator. Paths
//! start from the stationary distribution so that no burn-in is needed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, ModelError};

/// Largest admissible `λ·dt` for the path generator.
pub const MAX_STEP_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// Wiener-noise magnitude κ [rad²/s].
    kappa: f64,
    /// Inverse correlation time λ [rad/s].
    lambda: f64,
}

impl ProcessParams {
    pub fn new(kappa: f64, lambda: f64) -> Result<Self, ModelError> {
        Ok(Self {
            kappa: require_positive("kappa", kappa)?,
            lambda: require_positive("lambda", lambda)?,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn correlation_time(&self) -> f64 {
        1.0 / self.lambda
    }

    /// `K_φ(0) = κ/2λ`.
    pub fn stationary_variance(&self) -> f64 {
        self.kappa / (2.0 * self.lambda)
    }

    /// `K_φ(τ) = (κ/2λ) e^{-λ|τ|}`.
    pub fn autocorrelation(&self, tau: f64) -> f64 {
        self.stationary_variance() * (-self.lambda * tau.abs()).exp()
    }

    /// `S_φ(ω) = κ / (ω² + λ²)`, two-sided, so that `∫ S_φ dω/2π = κ/2λ`.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        self.kappa / (omega * omega + self.lambda * self.lambda)
    }

    /// Covariance between the phase at time `t` and its average over `[u0, u1]`.
    pub fn point_interval_covariance(&self, t: f64, u0: f64, u1: f64) -> f64 {
        debug_assert!(u1 > u0);
        let l = self.lambda;
        let integral = if t >= u1 {
            ((-l * (t - u1)).exp() - (-l * (t - u0)).exp()) / l
        } else if t <= u0 {
            ((-l * (u0 - t)).exp() - (-l * (u1 - t)).exp()) / l
        } else {
            (2.0 - (-l * (t - u0)).exp() - (-l * (u1 - t)).exp()) / l
        };
        self.stationary_variance() * integral / (u1 - u0)
    }

    /// Covariance between averages over two intervals of width `dt` whose
    /// starts differ by `lag` steps.
    pub fn interval_covariance(&self, lag: usize, dt: f64) -> f64 {
        let x = self.lambda * dt;
        if lag == 0 {
            // 2(x - 1 + e^{-x})/x², written to avoid cancellation for small x
            let ratio = if x < 1e-3 {
                1.0 - x / 3.0 + x * x / 12.0 - x * x * x / 60.0
            } else {
                2.0 * (x - 1.0 + (-x).exp()) / (x * x)
            };
            self.stationary_variance() * ratio
        } else {
            let shape = if x < 1e-3 {
                1.0 + x * x / 12.0
            } else {
                2.0 * (x.cosh() - 1.0) / (x * x)
            };
            self.stationary_variance() * (-x * lag as f64).exp() * shape
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// `φ' = φ e^{-λdt} + √((κ/2λ)(1-e^{-2λdt})) n`.
    #[default]
    Exact,
    /// `φ' = φ(1 - λdt) + √(κdt) n`.
    EulerMaruyama,
}

/// One-step transition of the OU process for a fixed step size.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper {
    decay: f64,
    innovation_sd: f64,
}

impl OuStepper {
    pub fn new(params: &ProcessParams, dt: f64, scheme: Discretization) -> Self {
        match scheme {
            Discretization::Exact => {
                let decay = (-params.lambda * dt).exp();
                let innovation_sd =
                    (params.stationary_variance() * -(-2.0 * params.lambda * dt).exp_m1()).sqrt();
                Self {
                    decay,
                    innovation_sd,
                }
            }
            Discretization::EulerMaruyama => Self {
                decay: 1.0 - params.lambda * dt,
                innovation_sd: (params.kappa * dt).sqrt(),
            },
        }
    }

    #[inline]
    pub fn step(&self, phi: f64, standard_normal: f64) -> f64 {
        phi * self.decay + self.innovation_sd * standard_normal
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }
}

/// Seeded generator for one independent stream of a replica family.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePath {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl PhasePath {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub(crate) fn check_step(params: &ProcessParams, dt: f64) -> Result<(), ModelError> {
    require_positive("dt", dt)?;
    let ratio = params.lambda * dt;
    if ratio > MAX_STEP_RATIO {
        return Err(ModelError::CoarseStep {
            ratio,
            limit: MAX_STEP_RATIO,
        });
    }
    Ok(())
}

/// Sample path using the exact discretization.
pub fn sample_path(
    params: &ProcessParams,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<PhasePath, ModelError> {
    sample_path_with(params, dt, n, seed, 0, Discretization::Exact)
}

pub fn sample_path_with(
    params: &ProcessParams,
    dt: f64,
    n: usize,
    seed: u64,
    stream: u64,
    scheme: Discretization,
) -> Result<PhasePath, ModelError> {
    check_step(params, dt)?;
    if n == 0 {
        return Err(ModelError::OutOfDomain {
            name: "n",
            requirement: ">= 1",
            value: 0.0,
        });
    }
    let stepper = OuStepper::new(params, dt, scheme);
    let mut rng = stream_rng(seed, stream);
    let mut samples = Vec::with_capacity(n);
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut phi = params.stationary_variance().sqrt() * z;
    samples.push(phi);
    for _ in 1..n {
        phi = stepper.step(phi, StandardNormal.sample(&mut rng));
        samples.push(phi);
    }
    Ok(PhasePath {
        dt,
        samples,
        seed,
        stream,
    })
}

/// `count` independent exact paths, stream `k` for path `k`.
pub fn sample_paths(
    params: &ProcessParams,
    dt: f64,
    n: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<PhasePath>, ModelError> {
    (0..count as u64)
        .into_par_iter()
        .map(|stream| sample_path_with(params, dt, n, seed, stream, Discretization::Exact))
        .collect()
}
