use rand_distr::{Distribution, StandardNormal};
use stochphase::mse::{observation_spectrum, tracking_mse};
use stochphase::ou::{stream_rng, Discretization, OuStepper};
use stochphase::wiener::InnovationsFilter;
use stochphase::simulate::{
    brute_force_mmse, run_closed_loop, run_replicas, run_self_consistent, whiteness_diagnostic, ModelFidelity,
    SimConfig, SimError,
};
use stochphase::{EstimationMode, InterferometerConfig, ProcessParams};

fn nominal() -> ProcessParams {
    ProcessParams::new(1e4, 1e5).unwrap()
}

fn nli() -> InterferometerConfig {
    InterferometerConfig::nli(7.4, 1e7).unwrap()
}

fn mzi() -> InterferometerConfig {
    InterferometerConfig::mzi(1e7).unwrap()
}

#[test]
fn brute_force_matches_wiener_tracking() {
    let p = nominal();
    let dt = 0.01 / p.lambda();
    for cfg in [nli(), mzi()] {
        let obs = observation_spectrum(&cfg, &p).unwrap();
        let closed = tracking_mse(&cfg, &p).unwrap();
        let bf = brute_force_mmse(&obs, 0.0, 20.0 / p.lambda(), dt).unwrap();
        assert_eq!(bf.samples, 2000);
        assert!(!bf.regularized);
        assert!((bf.mse / closed - 1.0).abs() < 5e-3, "{}: {} vs {closed}", cfg.kind(), bf.mse);
    }
}

#[test]
fn brute_force_window_limits() {
    let p = nominal();
    let obs = observation_spectrum(&nli(), &p).unwrap();
    let dt = 0.01 / p.lambda();
    let empty = brute_force_mmse(&obs, 0.0, 0.0, dt).unwrap();
    assert_eq!(empty.samples, 0);
    assert_eq!(empty.mse, p.stationary_variance());
    let mut prev = empty.mse;
    for w in [0.02, 0.1, 0.3, 1.0, 3.0] {
        let v = brute_force_mmse(&obs, 0.0, w / p.lambda(), dt).unwrap().mse;
        assert!(v <= prev + 1e-15, "window {w}: {v} > {prev}");
        prev = v;
    }
    assert!(brute_force_mmse(&obs, 0.0, 60.0 / p.lambda(), dt).is_err());
}

#[test]
fn brute_force_offsets_bracket_tracking() {
    let p = nominal();
    let obs = observation_spectrum(&nli(), &p).unwrap();
    let dt = 0.01 / p.lambda();
    let w = 5.0 / p.lambda();
    let track = brute_force_mmse(&obs, 0.0, w, dt).unwrap().mse;
    let pred = brute_force_mmse(&obs, 2e-6, w, dt).unwrap().mse;
    let smooth = brute_force_mmse(&obs, -2e-6, w, dt).unwrap().mse;
    assert!(smooth < track && track < pred);
}

#[test]
fn whiteness_of_seeded_noise_and_short_streams() {
    let mut rng = stream_rng(1, 0);
    let noise: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let report = whiteness_diagnostic(&noise).unwrap();
    assert!(report.passes, "{report:?}");
    assert_eq!(report.n, 200_000);
    assert!(matches!(
        whiteness_diagnostic(&noise[..1000]),
        Err(SimError::StreamTooShort { len: 1000, .. })
    ));
    // AR(1) with coefficient 0.1 is visibly colored
    let mut x = 0.0;
    let colored: Vec<f64> = noise
        .iter()
        .map(|z| {
            x = 0.1 * x + z;
            x
        })
        .collect();
    let r = whiteness_diagnostic(&colored).unwrap();
    assert!(!r.passes);
    assert_eq!(r.lag_of_max, 1);
}

#[test]
fn innovations_of_open_loop_record_are_white() {
    let p = nominal();
    let dt = 1e-7;
    for cfg in [nli(), mzi()] {
        let obs = observation_spectrum(&cfg, &p).unwrap();
        let s = obs.signal_power().sqrt();
        let sd = (obs.noise_level() / dt).sqrt();
        let stepper = OuStepper::new(&p, dt, Discretization::Exact);
        let mut rng = stream_rng(3, 0);
        let mut filter = InnovationsFilter::new(&obs, dt);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let mut phi = p.stationary_variance().sqrt() * z0;
        let n = 2_000_000;
        let z: Vec<f64> = (0..n)
            .map(|_| {
                let next = stepper.step(phi, StandardNormal.sample(&mut rng));
                let noise: f64 = StandardNormal.sample(&mut rng);
                let r = s * 0.5 * (phi + next) + sd * noise;
                phi = next;
                filter.push(r)
            })
            .skip(1000)
            .collect();
        let var = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "{}: {var}", cfg.kind());
        let report = whiteness_diagnostic(&z).unwrap();
        assert!(report.max_abs_acf < 4.0 / (z.len() as f64).sqrt(), "{report:?}");
    }
}

fn short_run(cfg: InterferometerConfig) -> SimConfig {
    SimConfig::new(nominal(), cfg, 1e-7, 0.05)
        .with_epsilons(vec![2e-6, 0.0, -2e-6])
        .with_seed(17)
}

#[test]
fn closed_loop_is_deterministic() {
    let cfg = short_run(nli());
    let a = run_closed_loop(&cfg).unwrap();
    let b = run_closed_loop(&cfg).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = 18;
    assert_ne!(run_closed_loop(&other).unwrap().offsets, a.offsets);
}

#[test]
fn closed_loop_report_invariants() {
    for inst in [nli(), mzi()] {
        let report = run_closed_loop(&short_run(inst)).unwrap();
        assert_eq!(report.offsets.len(), 3);
        let modes: Vec<EstimationMode> = report.offsets.iter().map(|o| o.mode).collect();
        assert_eq!(
            modes,
            vec![EstimationMode::Prediction, EstimationMode::Tracking, EstimationMode::Smoothing]
        );
        for o in &report.offsets {
            assert!(o.standard_error > 0.0);
            assert!(o.n_effective <= o.n_samples as f64);
            assert!(o.z_score().abs() < 4.0, "{o:?}");
        }
        assert!((report.empirical_snr / report.analytic_snr - 1.0).abs() < 0.02);
        assert!(!report.raw_whiteness.as_ref().unwrap().passes);
        let orth = report.orthogonality.as_ref().unwrap();
        assert!(orth.passes, "{orth:?}");
    }
}

#[test]
fn noiseless_phase_is_tracked_exactly() {
    let p = ProcessParams::new(1e-30, 1e5).unwrap();
    let cfg = SimConfig::new(p, nli(), 1e-7, 2e-3);
    let report = run_closed_loop(&cfg).unwrap();
    assert!(report.offsets[0].empirical_mse < 1e-25, "{:?}", report.offsets[0]);
}

#[test]
fn exact_homodyne_close_to_linearized() {
    let lin = run_closed_loop(&short_run(nli())).unwrap();
    let exact = run_closed_loop(&short_run(nli()).with_fidelity(ModelFidelity::ExactHomodyne)).unwrap();
    let a = lin.offset(0.0).unwrap().empirical_mse;
    let b = exact.offset(0.0).unwrap().empirical_mse;
    assert!((b / a - 1.0).abs() < 0.05, "{a} vs {b}");
}

#[test]
fn replicas_pool_consistently() {
    let cfg = SimConfig::new(nominal(), mzi(), 1e-7, 0.01).with_seed(4);
    let merged = run_replicas(&cfg, 3).unwrap();
    assert_eq!(merged.replicas.len(), 3);
    let n: usize = merged.replicas.iter().map(|r| r.offsets[0].n_samples).sum();
    assert_eq!(merged.pooled[0].n_samples, n);
    let mean = merged.replicas.iter().map(|r| r.offsets[0].empirical_mse).sum::<f64>() / 3.0;
    assert!((merged.pooled[0].empirical_mse - mean).abs() < 1e-12 * mean);
    assert!(merged.pooled[0].standard_error < merged.replicas[0].offsets[0].standard_error);
    assert_eq!(run_replicas(&cfg, 3).unwrap(), merged);
    assert!(run_replicas(&cfg, 0).is_err());
}

#[test]
fn self_consistent_mode_settles_near_analytic() {
    let cfg = SimConfig::new(nominal(), nli(), 1e-7, 0.05).with_seed(2);
    let (report, sigmas) = run_self_consistent(&cfg, 4).unwrap();
    assert!(!sigmas.is_empty());
    let track = report.offset(0.0).unwrap();
    let analytic = tracking_mse(&nli(), &nominal()).unwrap();
    assert!((track.empirical_mse / analytic - 1.0).abs() < 0.03);
}

#[test]
fn invalid_settings_are_rejected() {
    let base = SimConfig::new(nominal(), nli(), 1e-7, 0.05);
    let mut c = base.clone();
    c.dt = 5e-7;
    assert!(run_closed_loop(&c).is_err());
    let mut c = base.clone();
    c.duration = 1e-4;
    assert!(matches!(run_closed_loop(&c), Err(SimError::InvalidConfig { field: "duration", .. })));
    let mut c = base.clone();
    c.burn_in = 1e-6;
    assert!(matches!(run_closed_loop(&c), Err(SimError::InvalidConfig { field: "burn_in", .. })));
    let c = base.clone().with_epsilons(vec![-0.06]);
    assert!(matches!(run_closed_loop(&c), Err(SimError::InvalidConfig { field: "epsilons", .. })));
    let c = base.with_epsilons(vec![f64::NAN]);
    assert!(run_closed_loop(&c).is_err());
}
