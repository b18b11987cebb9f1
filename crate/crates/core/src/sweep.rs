//! Named experiment presets, key/value configuration and plot-ready output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::error::ModelError;
use crate::gain::{optimize_gain, scaling_point, Objective};
use crate::interferometer::{snr_ratio, InstrumentKind, InterferometerConfig};
use crate::mse::{offset_mse, smoothing_floor, tracking_mse};
use crate::ou::ProcessParams;
use crate::simulate::{run_replicas, ModelFidelity, SimConfig, SimError};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Fig2SnrSurface,
    Fig3GainSweep,
    Fig4EpsilonSweep,
    Fig5Scaling,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Fig2SnrSurface,
        Preset::Fig3GainSweep,
        Preset::Fig4EpsilonSweep,
        Preset::Fig5Scaling,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2SnrSurface => "fig2-snr-surface",
            Preset::Fig3GainSweep => "fig3-gain-sweep",
            Preset::Fig4EpsilonSweep => "fig4-epsilon-sweep",
            Preset::Fig5Scaling => "fig5-scaling",
            Preset::Custom => "custom",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Preset::Fig2SnrSurface => "fig2",
            Preset::Fig3GainSweep => "fig3",
            Preset::Fig4EpsilonSweep => "fig4",
            Preset::Fig5Scaling => "fig5",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s || p.short() == s)
            .ok_or_else(|| {
                format!("unknown preset {s:?}; expected one of fig2, fig3, fig4, fig5, custom")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKey {
    GainSq,
    PhotonFlux,
    Epsilon,
}

impl SweepKey {
    fn name(self) -> &'static str {
        match self {
            SweepKey::GainSq => "gain_sq",
            SweepKey::PhotonFlux => "photon_flux",
            SweepKey::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// Every tunable physical and grid parameter. Presets fill in defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    pub kappa: f64,
    pub lambda: f64,
    pub photon_flux: f64,
    pub gain_sq: f64,
    pub kind: InstrumentKind,
    pub gain_min: f64,
    pub gain_max: f64,
    pub gain_points: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_points: usize,
    pub lambda_eps_min: f64,
    pub lambda_eps_max: f64,
    pub eps_points: usize,
    pub flux_min: f64,
    pub flux_max: f64,
    pub flux_points: usize,
    pub sweep_key: SweepKey,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_points: usize,
    pub sweep_scale: Scale,
    pub epsilon: f64,
    pub mc_dt: f64,
    pub mc_duration: f64,
}

impl Parameters {
    pub fn defaults(preset: Preset) -> Self {
        let mut p = Parameters {
            kappa: 1e4,
            lambda: 1e5,
            photon_flux: 1e7,
            gain_sq: 7.4,
            kind: InstrumentKind::Nli,
            gain_min: 1.1,
            gain_max: 50.0,
            gain_points: 400,
            sigma_min: 0.0,
            sigma_max: 0.2,
            sigma_points: 200,
            lambda_eps_min: -1.0,
            lambda_eps_max: 1.0,
            eps_points: 201,
            flux_min: 1e9,
            flux_max: 1e10,
            flux_points: 19,
            sweep_key: SweepKey::GainSq,
            sweep_start: 1.1,
            sweep_stop: 50.0,
            sweep_points: 50,
            sweep_scale: Scale::Log,
            epsilon: 0.0,
            mc_dt: 1e-7,
            mc_duration: 0.1,
        };
        if preset == Preset::Fig2SnrSurface {
            p.gain_min = 1.01;
            p.gain_points = 200;
        }
        p
    }

    pub fn process(&self) -> Result<ProcessParams, ModelError> {
        ProcessParams::new(self.kappa, self.lambda)
    }

    fn metadata(&self, out: &mut BTreeMap<String, String>) {
        let fields = [
            ("kappa", num(self.kappa)),
            ("lambda", num(self.lambda)),
            ("photon_flux", num(self.photon_flux)),
            ("gain_sq", num(self.gain_sq)),
            ("kind", self.kind.to_string()),
            ("gain_min", num(self.gain_min)),
            ("gain_max", num(self.gain_max)),
            ("gain_points", self.gain_points.to_string()),
            ("sigma_min", num(self.sigma_min)),
            ("sigma_max", num(self.sigma_max)),
            ("sigma_points", self.sigma_points.to_string()),
            ("lambda_eps_min", num(self.lambda_eps_min)),
            ("lambda_eps_max", num(self.lambda_eps_max)),
            ("eps_points", self.eps_points.to_string()),
            ("flux_min", num(self.flux_min)),
            ("flux_max", num(self.flux_max)),
            ("flux_points", self.flux_points.to_string()),
            ("sweep_key", self.sweep_key.name().to_string()),
            ("sweep_start", num(self.sweep_start)),
            ("sweep_stop", num(self.sweep_stop)),
            ("sweep_points", self.sweep_points.to_string()),
            (
                "sweep_scale",
                match self.sweep_scale {
                    Scale::Linear => "linear",
                    Scale::Log => "log",
                }
                .to_string(),
            ),
            ("epsilon", num(self.epsilon)),
            ("mc_dt", num(self.mc_dt)),
            ("mc_duration", num(self.mc_duration)),
        ];
        for (k, v) in fields {
            out.insert(k.to_string(), v);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub parameters: Parameters,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub seed: u64,
    pub replicas: usize,
    pub fidelity: ModelFidelity,
    /// Adds a wall-clock timestamp to file headers.
    pub timestamp: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<ConfigIssue>),
    #[error("sweep has no grid points")]
    EmptySweep,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("non-finite value in column {column} of {table}")]
    NonFinite { table: String, column: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl SweepError {
    /// 1 for invalid input, 2 for runtime or numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            SweepError::Validation(_) | SweepError::EmptySweep => 1,
            _ => 2,
        }
    }
}

/// Keys accepted in a configuration document besides the parameters.
pub const CONTROL_KEYS: [&str; 7] = ["preset", "out", "seed", "replicas", "format", "fidelity", "timestamp"];

pub const PARAMETER_KEYS: [&str; 25] = [
    "kappa",
    "lambda",
    "photon_flux",
    "gain_sq",
    "kind",
    "gain_min",
    "gain_max",
    "gain_points",
    "sigma_min",
    "sigma_max",
    "sigma_points",
    "lambda_eps_min",
    "lambda_eps_max",
    "eps_points",
    "flux_min",
    "flux_max",
    "flux_points",
    "sweep_key",
    "sweep_start",
    "sweep_stop",
    "sweep_points",
    "sweep_scale",
    "epsilon",
    "mc_dt",
    "mc_duration",
];

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn real(&mut self, doc: &BTreeMap<String, String>, key: &str, slot: &mut f64) {
        if let Some(raw) = doc.get(key) {
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => *slot = v,
                _ => self.fail(key, format!("expected a finite number, got {raw:?}")),
            }
        }
    }

    fn count(&mut self, doc: &BTreeMap<String, String>, key: &str, slot: &mut usize) {
        if let Some(raw) = doc.get(key) {
            match raw.trim().parse::<usize>() {
                Ok(v) => *slot = v,
                _ => self.fail(key, format!("expected a non-negative integer, got {raw:?}")),
            }
        }
    }

    fn positive(&mut self, key: &str, v: f64) {
        if v <= 0.0 {
            self.fail(key, format!("must be > 0, got {v}"));
        }
    }
}

/// Builds a spec from a flat key/value document. All problems are collected
/// before returning; each names its key and the admissible range.
pub fn validate_config(doc: &BTreeMap<String, String>) -> Result<ExperimentSpec, SweepError> {
    let mut c = Checker { issues: vec![] };
    for key in doc.keys() {
        if !CONTROL_KEYS.contains(&key.as_str()) && !PARAMETER_KEYS.contains(&key.as_str()) {
            c.fail(key, "unknown key");
        }
    }

    let preset = match doc.get("preset") {
        Some(raw) => raw.parse::<Preset>().unwrap_or_else(|e| {
            c.fail("preset", e);
            Preset::Custom
        }),
        None => {
            c.fail("preset", "required; one of fig2, fig3, fig4, fig5, custom");
            Preset::Custom
        }
    };
    let mut p = Parameters::defaults(preset);

    for (key, slot) in [
        ("kappa", &mut p.kappa),
        ("lambda", &mut p.lambda),
        ("photon_flux", &mut p.photon_flux),
        ("gain_sq", &mut p.gain_sq),
        ("gain_min", &mut p.gain_min),
        ("gain_max", &mut p.gain_max),
        ("sigma_min", &mut p.sigma_min),
        ("sigma_max", &mut p.sigma_max),
        ("lambda_eps_min", &mut p.lambda_eps_min),
        ("lambda_eps_max", &mut p.lambda_eps_max),
        ("flux_min", &mut p.flux_min),
        ("flux_max", &mut p.flux_max),
        ("sweep_start", &mut p.sweep_start),
        ("sweep_stop", &mut p.sweep_stop),
        ("epsilon", &mut p.epsilon),
        ("mc_dt", &mut p.mc_dt),
        ("mc_duration", &mut p.mc_duration),
    ] {
        c.real(doc, key, slot);
    }
    for (key, slot) in [
        ("gain_points", &mut p.gain_points),
        ("sigma_points", &mut p.sigma_points),
        ("eps_points", &mut p.eps_points),
        ("flux_points", &mut p.flux_points),
        ("sweep_points", &mut p.sweep_points),
    ] {
        c.count(doc, key, slot);
    }
    if let Some(raw) = doc.get("kind") {
        match raw.trim().to_ascii_lowercase().as_str() {
            "nli" => p.kind = InstrumentKind::Nli,
            "mzi" => p.kind = InstrumentKind::Mzi,
            _ => c.fail("kind", format!("must be NLI or MZI, got {raw:?}")),
        }
    }
    if let Some(raw) = doc.get("sweep_key") {
        match raw.trim() {
            "gain_sq" => p.sweep_key = SweepKey::GainSq,
            "photon_flux" => p.sweep_key = SweepKey::PhotonFlux,
            "epsilon" => p.sweep_key = SweepKey::Epsilon,
            _ => c.fail("sweep_key", format!("must be gain_sq, photon_flux or epsilon, got {raw:?}")),
        }
    }
    if let Some(raw) = doc.get("sweep_scale") {
        match raw.trim() {
            "linear" => p.sweep_scale = Scale::Linear,
            "log" => p.sweep_scale = Scale::Log,
            _ => c.fail("sweep_scale", format!("must be linear or log, got {raw:?}")),
        }
    }

    c.positive("kappa", p.kappa);
    c.positive("lambda", p.lambda);
    c.positive("photon_flux", p.photon_flux);
    if p.gain_sq <= 1.0 {
        c.fail("gain_sq", format!("NLI requires G² > 1, got {}", p.gain_sq));
    }
    if p.gain_min <= 1.0 {
        c.fail("gain_min", format!("must be > 1, got {}", p.gain_min));
    }
    if p.gain_max <= p.gain_min {
        c.fail("gain_max", format!("must be > gain_min = {}, got {}", p.gain_min, p.gain_max));
    }
    if p.sigma_min < 0.0 {
        c.fail("sigma_min", format!("must be >= 0, got {}", p.sigma_min));
    }
    if p.sigma_max <= p.sigma_min {
        c.fail("sigma_max", format!("must be > sigma_min = {}, got {}", p.sigma_min, p.sigma_max));
    }
    if p.lambda_eps_max <= p.lambda_eps_min {
        c.fail(
            "lambda_eps_max",
            format!("must be > lambda_eps_min = {}, got {}", p.lambda_eps_min, p.lambda_eps_max),
        );
    }
    c.positive("flux_min", p.flux_min);
    if p.flux_max <= p.flux_min {
        c.fail("flux_max", format!("must be > flux_min = {}, got {}", p.flux_min, p.flux_max));
    }
    for (key, n) in [
        ("gain_points", p.gain_points),
        ("sigma_points", p.sigma_points),
        ("eps_points", p.eps_points),
        ("flux_points", p.flux_points),
    ] {
        if n < 2 {
            c.fail(key, format!("must be >= 2, got {n}"));
        }
    }
    c.positive("mc_dt", p.mc_dt);
    c.positive("mc_duration", p.mc_duration);
    if preset == Preset::Custom {
        match p.sweep_key {
            SweepKey::GainSq if p.sweep_start.min(p.sweep_stop) <= 1.0 => {
                c.fail("sweep_start", "gain_sq sweep requires G² > 1 at both ends");
            }
            SweepKey::GainSq if p.kind == InstrumentKind::Mzi => {
                c.fail("sweep_key", "gain_sq sweep requires kind = NLI");
            }
            SweepKey::PhotonFlux if p.sweep_start.min(p.sweep_stop) <= 0.0 => {
                c.fail("sweep_start", "photon_flux sweep requires values > 0");
            }
            _ => {}
        }
        if p.sweep_scale == Scale::Log && p.sweep_start.min(p.sweep_stop) <= 0.0 {
            c.fail("sweep_scale", "log scale requires sweep_start and sweep_stop > 0");
        }
    }

    let output_dir = PathBuf::from(doc.get("out").map(String::as_str).unwrap_or("."));
    let mut seed = 0u64;
    if let Some(raw) = doc.get("seed") {
        match raw.trim().parse() {
            Ok(v) => seed = v,
            Err(_) => c.fail("seed", format!("expected a non-negative integer, got {raw:?}")),
        }
    }
    let mut replicas = 0usize;
    c.count(doc, "replicas", &mut replicas);
    if replicas > 0 && !matches!(preset, Preset::Fig3GainSweep | Preset::Fig4EpsilonSweep) {
        c.fail("replicas", "Monte Carlo overlays are available for fig3 and fig4 only; use 0");
    }
    let mut formats = vec![OutputFormat::Csv];
    if let Some(raw) = doc.get("format") {
        formats.clear();
        for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "csv" => formats.push(OutputFormat::Csv),
                "json" => formats.push(OutputFormat::Json),
                _ => c.fail("format", format!("must be a list of csv, json; got {part:?}")),
            }
        }
        formats.sort();
        formats.dedup();
        if formats.is_empty() {
            c.fail("format", "at least one of csv, json is required");
        }
    }
    let mut fidelity = ModelFidelity::Linearized;
    if let Some(raw) = doc.get("fidelity") {
        match raw.trim().to_ascii_lowercase().as_str() {
            "linearized" => fidelity = ModelFidelity::Linearized,
            "exact" | "exact-homodyne" => fidelity = ModelFidelity::ExactHomodyne,
            _ => c.fail("fidelity", format!("must be linearized or exact, got {raw:?}")),
        }
    }
    let mut timestamp = false;
    if let Some(raw) = doc.get("timestamp") {
        match raw.trim() {
            "true" => timestamp = true,
            "false" => timestamp = false,
            _ => c.fail("timestamp", format!("must be true or false, got {raw:?}")),
        }
    }

    if !c.issues.is_empty() {
        return Err(SweepError::Validation(c.issues));
    }
    Ok(ExperimentSpec {
        preset,
        parameters: p,
        output_dir,
        formats,
        seed,
        replicas,
        fidelity,
        timestamp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn numeric(name: &str, columns: Vec<&'static str>, rows: Vec<Vec<f64>>) -> Self {
        Table {
            name: name.to_string(),
            columns,
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(Cell::Num).collect())
                .collect(),
        }
    }

    fn check_finite(&self) -> Result<(), SweepError> {
        for row in &self.rows {
            for (cell, col) in row.iter().zip(&self.columns) {
                if let Cell::Num(v) = cell {
                    if !v.is_finite() {
                        return Err(SweepError::NonFinite {
                            table: self.name.clone(),
                            column: col.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Column values as numbers; text cells are skipped.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| *c == name)?;
        Some(
            self.rows
                .iter()
                .filter_map(|r| match r[idx] {
                    Cell::Num(v) => Some(v),
                    Cell::Text(_) => None,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub metadata: BTreeMap<String, String>,
    pub summary: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub result: ExperimentResult,
    pub files: Vec<PathBuf>,
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .enumerate()
        .map(|(i, x)| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => x.exp(),
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `σ_f²` at which the NLI and MZI SNRs are equal, for fixed G².
pub fn equal_snr_sigma(gain_sq: f64) -> f64 {
    let product = gain_sq * (gain_sq - 1.0);
    (4.0 * product / (2.0 * gain_sq - 1.0) - 1.0) / (2.0 * product)
}

fn fig2(p: &Parameters, summary: &mut BTreeMap<String, f64>) -> Vec<Table> {
    let gains = logspace(p.gain_min, p.gain_max, p.gain_points);
    let sigmas = linspace(p.sigma_min, p.sigma_max, p.sigma_points);
    let rows: Vec<Vec<f64>> = gains
        .par_iter()
        .flat_map_iter(|&g| sigmas.iter().map(move |&s| vec![g, s, snr_ratio(g, s)]))
        .collect();
    let contour: Vec<Vec<f64>> = gains
        .iter()
        .map(|&g| (g, equal_snr_sigma(g)))
        .filter(|&(_, s)| s >= p.sigma_min && s <= p.sigma_max)
        .map(|(g, s)| vec![g, s])
        .collect();
    summary.insert("contour_points".into(), contour.len() as f64);
    vec![
        Table::numeric("fig2-snr-surface", vec!["gain_sq", "sigma_f_sq", "snr_ratio"], rows),
        Table::numeric("fig2-snr-contour", vec!["gain_sq", "sigma_f_sq"], contour),
    ]
}

fn fig3(p: &Parameters, summary: &mut BTreeMap<String, f64>) -> Result<Vec<Table>, SweepError> {
    let process = p.process()?;
    let mzi = tracking_mse(&InterferometerConfig::mzi(p.photon_flux)?, &process)?;
    let gains = logspace(p.gain_min, p.gain_max, p.gain_points);
    let rows = gains
        .par_iter()
        .map(|&g| {
            let nli = tracking_mse(&InterferometerConfig::nli(g, p.photon_flux)?, &process)?;
            Ok(vec![g, nli, mzi])
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let opt = optimize_gain(&process, p.photon_flux, Objective::Tracking)?;
    summary.insert("nli_optimal_gain_sq".into(), opt.gain_sq);
    summary.insert("nli_min_tracking_mse".into(), opt.mse);
    summary.insert("mzi_tracking_mse".into(), mzi);
    Ok(vec![Table::numeric(
        "fig3-gain-sweep",
        vec!["gain_sq", "nli_tracking_mse", "mzi_tracking_mse"],
        rows,
    )])
}

fn fig4(p: &Parameters, summary: &mut BTreeMap<String, f64>) -> Result<Vec<Table>, SweepError> {
    let process = p.process()?;
    let nli = InterferometerConfig::nli(p.gain_sq, p.photon_flux)?;
    let mzi = InterferometerConfig::mzi(p.photon_flux)?;
    let grid = linspace(p.lambda_eps_min, p.lambda_eps_max, p.eps_points);
    let rows = grid
        .par_iter()
        .map(|&le| {
            let eps = le / p.lambda;
            Ok(vec![
                le,
                eps,
                offset_mse(&nli, &process, eps)?.xi,
                offset_mse(&mzi, &process, eps)?.xi,
            ])
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    summary.insert("nli_tracking_mse".into(), tracking_mse(&nli, &process)?);
    summary.insert("mzi_tracking_mse".into(), tracking_mse(&mzi, &process)?);
    summary.insert("nli_smoothing_floor".into(), smoothing_floor(&nli, &process)?);
    summary.insert("mzi_smoothing_floor".into(), smoothing_floor(&mzi, &process)?);
    summary.insert("prior_variance".into(), process.stationary_variance());
    Ok(vec![Table::numeric(
        "fig4-epsilon-sweep",
        vec!["lambda_epsilon", "epsilon", "nli_mse", "mzi_mse"],
        rows,
    )])
}

fn fig5(p: &Parameters, summary: &mut BTreeMap<String, f64>) -> Result<Vec<Table>, SweepError> {
    let process = p.process()?;
    let fluxes = logspace(p.flux_min, p.flux_max, p.flux_points);
    let points = fluxes
        .par_iter()
        .map(|&f| scaling_point(&process, f))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|s| {
            vec![
                s.photon_flux,
                s.optimal_gain_sq,
                s.smoothing_mse,
                s.tracking_mse,
                s.mzi_smoothing_mse,
                s.references.classical,
                s.references.canonical,
                s.references.heisenberg,
            ]
        })
        .collect();
    let nli: Vec<f64> = points.iter().map(|s| s.smoothing_mse).collect();
    let mzi: Vec<f64> = points.iter().map(|s| s.mzi_smoothing_mse).collect();
    summary.insert("nli_slope".into(), log_log_slope(&fluxes, &nli));
    summary.insert("mzi_slope".into(), log_log_slope(&fluxes, &mzi));
    if let Some(last) = points.last() {
        summary.insert("nli_over_heisenberg_at_max_flux".into(), last.smoothing_mse / last.references.heisenberg);
    }
    Ok(vec![Table::numeric(
        "fig5-scaling",
        vec![
            "photon_flux",
            "nli_gain_sq",
            "nli_smoothing_mse",
            "nli_tracking_mse",
            "mzi_smoothing_mse",
            "classical",
            "canonical",
            "heisenberg",
        ],
        rows,
    )])
}

fn custom(p: &Parameters, summary: &mut BTreeMap<String, f64>) -> Result<Vec<Table>, SweepError> {
    if p.sweep_points == 0 {
        return Err(SweepError::EmptySweep);
    }
    let process = p.process()?;
    let grid = match p.sweep_scale {
        Scale::Linear => linspace(p.sweep_start, p.sweep_stop, p.sweep_points),
        Scale::Log => logspace(p.sweep_start, p.sweep_stop, p.sweep_points),
    };
    let rows = grid
        .par_iter()
        .map(|&x| {
            let (mut g, mut f, mut e) = (p.gain_sq, p.photon_flux, p.epsilon);
            match p.sweep_key {
                SweepKey::GainSq => g = x,
                SweepKey::PhotonFlux => f = x,
                SweepKey::Epsilon => e = x,
            }
            let cfg = match p.kind {
                InstrumentKind::Nli => InterferometerConfig::nli(g, f)?,
                InstrumentKind::Mzi => InterferometerConfig::mzi(f)?,
            };
            let b = offset_mse(&cfg, &process, e)?;
            Ok(vec![x, g, f, e, b.xi, b.information])
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    summary.insert("points".into(), rows.len() as f64);
    Ok(vec![Table::numeric(
        "custom",
        vec!["x", "gain_sq", "photon_flux", "epsilon", "mse", "information"],
        rows,
    )])
}

fn monte_carlo(spec: &ExperimentSpec) -> Result<Table, SweepError> {
    let p = &spec.parameters;
    let process = p.process()?;
    let mut cases: Vec<(InterferometerConfig, f64)> = vec![];
    match spec.preset {
        Preset::Fig3GainSweep => {
            for g in [3.0, p.gain_sq, 12.0] {
                cases.push((InterferometerConfig::nli(g, p.photon_flux)?, 0.0));
            }
            cases.push((InterferometerConfig::mzi(p.photon_flux)?, 0.0));
        }
        _ => {
            for cfg in [
                InterferometerConfig::nli(p.gain_sq, p.photon_flux)?,
                InterferometerConfig::mzi(p.photon_flux)?,
            ] {
                for le in [-0.2, 0.0, 0.2] {
                    cases.push((cfg, le / p.lambda));
                }
            }
        }
    }
    let mut rows = vec![];
    for (k, (cfg, eps)) in cases.iter().enumerate() {
        let mut sim = SimConfig::new(process, *cfg, p.mc_dt, p.mc_duration)
            .with_epsilons(vec![*eps])
            .with_fidelity(spec.fidelity)
            .with_seed(spec.seed);
        sim.stream = (k * spec.replicas) as u64;
        let merged = run_replicas(&sim, spec.replicas)?;
        let o = &merged.pooled[0];
        rows.push(vec![
            Cell::Text(cfg.kind().to_string()),
            Cell::Text(cfg.gain_sq().map(num).unwrap_or_default()),
            Cell::Num(o.epsilon),
            Cell::Num(o.analytic_mse),
            Cell::Num(o.empirical_mse),
            Cell::Num(o.standard_error),
            Cell::Num(o.n_effective),
        ]);
    }
    Ok(Table {
        name: format!("{}-montecarlo", spec.preset.name()),
        columns: vec![
            "instrument",
            "gain_sq",
            "epsilon",
            "analytic_mse",
            "empirical_mse",
            "standard_error",
            "n_effective",
        ],
        rows,
    })
}

/// Computes all tables for a spec without touching the file system.
pub fn compute_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, SweepError> {
    let p = &spec.parameters;
    let mut summary = BTreeMap::new();
    let mut tables = match spec.preset {
        Preset::Fig2SnrSurface => fig2(p, &mut summary),
        Preset::Fig3GainSweep => fig3(p, &mut summary)?,
        Preset::Fig4EpsilonSweep => fig4(p, &mut summary)?,
        Preset::Fig5Scaling => fig5(p, &mut summary)?,
        Preset::Custom => custom(p, &mut summary)?,
    };
    if spec.replicas > 0 {
        tables.push(monte_carlo(spec)?);
    }
    for t in &tables {
        t.check_finite()?;
    }

    let mut metadata = BTreeMap::new();
    p.metadata(&mut metadata);
    metadata.insert("preset".into(), spec.preset.name().into());
    metadata.insert("seed".into(), spec.seed.to_string());
    metadata.insert("replicas".into(), spec.replicas.to_string());
    metadata.insert(
        "fidelity".into(),
        match spec.fidelity {
            ModelFidelity::Linearized => "linearized",
            ModelFidelity::ExactHomodyne => "exact-homodyne",
        }
        .into(),
    );
    metadata.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
    metadata.insert("format_version".into(), FORMAT_VERSION.into());
    match spec.preset {
        Preset::Fig2SnrSurface => {
            metadata.insert("grid".into(), "gain_sq log-spaced x sigma_f_sq linear".into());
        }
        Preset::Fig3GainSweep => {
            metadata.insert("grid".into(), "gain_sq log-spaced".into());
        }
        Preset::Fig4EpsilonSweep => {
            metadata.insert("grid".into(), "lambda*epsilon linear".into());
        }
        Preset::Fig5Scaling => {
            metadata.insert("grid".into(), "photon_flux log-spaced; NLI gain re-optimized per point".into());
        }
        Preset::Custom => {}
    }
    if spec.timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        metadata.insert("generated_unix".into(), secs.to_string());
    }
    Ok(ExperimentResult {
        metadata,
        summary,
        tables,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV text: `#`-prefixed metadata and summary lines, then the header row and
/// the body.
pub fn render_csv(result: &ExperimentResult, table: &Table) -> Result<String, SweepError> {
    let mut out = String::new();
    out.push_str(&format!("# table = {}\n", table.name));
    for (k, v) in &result.metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    for (k, v) in &result.summary {
        out.push_str(&format!("# summary.{k} = {}\n", num(*v)));
    }
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(&table.columns)
        .map_err(|e| SweepError::Serialize(e.to_string()))?;
    for row in &table.rows {
        let fields: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => num(*v),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        w.write_record(&fields)
            .map_err(|e| SweepError::Serialize(e.to_string()))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| SweepError::Serialize(e.to_string()))?;
    out.push_str(&String::from_utf8_lossy(&body));
    Ok(out)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    metadata: &'a BTreeMap<String, String>,
    summary: &'a BTreeMap<String, f64>,
    tables: Vec<SidecarTable<'a>>,
}

#[derive(Serialize)]
struct SidecarTable<'a> {
    name: &'a str,
    columns: &'a [&'static str],
    rows: usize,
}

pub fn render_json(result: &ExperimentResult) -> Result<String, SweepError> {
    let sidecar = Sidecar {
        metadata: &result.metadata,
        summary: &result.summary,
        tables: result
            .tables
            .iter()
            .map(|t| SidecarTable {
                name: &t.name,
                columns: &t.columns,
                rows: t.rows.len(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&sidecar).map_err(|e| SweepError::Serialize(e.to_string()))
}

/// Computes the experiment and writes one CSV per table plus an optional JSON
/// sidecar. Nothing is written if computation fails.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome, SweepError> {
    let result = compute_experiment(spec)?;
    let mut rendered = vec![];
    if spec.formats.contains(&OutputFormat::Csv) {
        for t in &result.tables {
            rendered.push((spec.output_dir.join(format!("{}.csv", t.name)), render_csv(&result, t)?));
        }
    }
    if spec.formats.contains(&OutputFormat::Json) {
        rendered.push((
            spec.output_dir.join(format!("{}.json", spec.preset.name())),
            render_json(&result)?,
        ));
    }
    fs::create_dir_all(&spec.output_dir).map_err(io_err(&spec.output_dir))?;
    let mut files = vec![];
    for (path, text) in rendered {
        fs::write(&path, text).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(RunOutcome { result, files })
}
