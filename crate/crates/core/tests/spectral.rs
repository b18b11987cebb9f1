use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use stochphase::mse::{observation_spectrum, offset_mse};
use stochphase::ou::stream_rng;
use stochphase::sweep::logspace;
use stochphase::wiener::{factorize, realize_impulse_response, synthesize};
use stochphase::{EstimationMode, InterferometerConfig, ObservationSpectrum, ProcessParams};

fn nominal() -> ProcessParams {
    ProcessParams::new(1e4, 1e5).unwrap()
}

fn spectra() -> Vec<(&'static str, ObservationSpectrum)> {
    let p = nominal();
    vec![
        ("NLI", observation_spectrum(&InterferometerConfig::nli(7.4, 1e7).unwrap(), &p).unwrap()),
        ("MZI", observation_spectrum(&InterferometerConfig::mzi(1e7).unwrap(), &p).unwrap()),
    ]
}

#[test]
fn factorization_matches_density_on_log_grid() {
    for (name, obs) in spectra() {
        let f = factorize(&obs);
        assert!(f.is_minimum_phase());
        let l = obs.process().lambda();
        let grid = logspace(l / 100.0, 100.0 * obs.cutoff(), 2048);
        let worst = grid
            .iter()
            .map(|&w| (f.response(w).norm_sqr() / obs.density(w) - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{name}: {worst}");
        for &w in &grid[..16] {
            let z = f.response(w) * f.whitening(w);
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn wiener_hopf_holds_for_all_modes() {
    for (name, obs) in spectra() {
        let a = obs.cutoff();
        let taus: Vec<f64> = (0..40).map(|k| k as f64 * 0.25 / a).collect();
        for eps in [2e-6, 0.0, -2e-6, -1e-5] {
            let sol = synthesize(&obs, eps);
            let r = sol.wiener_hopf_residual(&taus);
            assert!(r <= 1e-8, "{name} eps={eps}: {r}");
        }
    }
}

#[test]
fn frequency_domain_mse_equals_closed_forms() {
    let p = nominal();
    for cfg in [InterferometerConfig::nli(7.4, 1e7).unwrap(), InterferometerConfig::mzi(1e7).unwrap()] {
        let obs = observation_spectrum(&cfg, &p).unwrap();
        for le in [0.5, 0.2, 0.0, -0.2, -1.0] {
            let eps = le / p.lambda();
            let sol = synthesize(&obs, eps);
            let numeric = obs.mse_of_response(eps, |w| sol.response(w));
            let closed = offset_mse(&cfg, &p, eps).unwrap().xi;
            assert!((numeric / closed - 1.0).abs() < 1e-6, "{} {le}: {numeric} vs {closed}", cfg.kind());
            assert!((sol.mse() / closed - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn advance_form_prediction_has_tracking_mse() {
    let (_, obs) = spectra().remove(0);
    let eps = 5e-6;
    let sol = synthesize(&obs, eps);
    assert_eq!(sol.mode, EstimationMode::Prediction);
    let advance = obs.mse_of_response(eps, |w| sol.advance_form_response(w));
    let tracking = synthesize(&obs, 0.0).mse();
    assert!((advance / tracking - 1.0).abs() < 1e-8);
    assert!(sol.mse() > tracking);
}

#[test]
fn realized_filters_are_causal_with_matching_dc_gain() {
    for (name, obs) in spectra() {
        for eps in [0.0, 2e-6, -2e-6] {
            let sol = synthesize(&obs, eps);
            let dt = 1e-8;
            let kernel = realize_impulse_response(&sol, dt, sol.default_horizon()).unwrap();
            assert!((kernel.dc_gain() / sol.dc_gain() - 1.0).abs() < 1e-6, "{name} {eps}");
            let mut filter = kernel.filter();
            for _ in 0..50 {
                assert_eq!(filter.push(0.0), 0.0);
            }
            let first = filter.push(1.0);
            assert_eq!(first, kernel.tap(0));
            for j in 1..400 {
                let y = filter.push(0.0);
                assert!((y - kernel.tap(j)).abs() <= 1e-12 * kernel.tap(0).abs().max(1e-300), "{name} {eps} tap {j}");
            }
        }
    }
}

#[test]
fn short_horizon_is_rejected() {
    let (_, obs) = spectra().remove(0);
    let sol = synthesize(&obs, -2e-6);
    assert!(realize_impulse_response(&sol, 1e-8, 3e-6).is_err());
    assert!(realize_impulse_response(&sol, 1e-8, 1e-6).is_err());
    assert!(realize_impulse_response(&sol, 3e-8, sol.default_horizon()).is_err());
}

/// Cross-spectral estimate `S_yx / S_xx` of the realized smoothing filter,
/// averaged over white-noise segments, against `H_o(ω)` up to `10a`. Each
/// segment is fed periodically until the filter is in steady state, so a
/// rectangular window has no leakage.
#[test]
fn smoothing_transfer_function_estimate() {
    let (_, obs) = spectra().remove(0);
    let eps = -2e-6;
    let sol = synthesize(&obs, eps);
    let dt = 5e-9;
    let a = obs.cutoff();
    let kernel = realize_impulse_response(&sol, dt, sol.default_horizon()).unwrap();

    let seg = 1usize << 15;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg);
    let mut sxx = vec![0.0; seg / 2];
    let mut syx = vec![Complex64::new(0.0, 0.0); seg / 2];
    let mut rng = stream_rng(21, 0);
    for _ in 0..8 {
        let x: Vec<f64> = (0..seg).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut filter = kernel.filter();
        for &v in &x {
            filter.push(v);
        }
        let y: Vec<f64> = x.iter().map(|&v| filter.push(v)).collect();
        let mut bx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut by: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut bx);
        fft.process(&mut by);
        for k in 0..seg / 2 {
            sxx[k] += bx[k].norm_sqr();
            syx[k] += by[k] * bx[k].conj();
        }
    }
    let dw = 2.0 * std::f64::consts::PI / (seg as f64 * dt);
    let mut checked = 0;
    for k in 1..seg / 2 {
        let w = k as f64 * dw;
        if w < a / 10.0 {
            continue;
        }
        if w > 10.0 * a {
            break;
        }
        // output sample n is the estimate at the end of input interval n
        let expect = sol.response(w) * Complex64::new(0.0, 0.5 * w * dt).exp();
        let est = syx[k] / sxx[k];
        let rel = (est - expect).norm() / expect.norm();
        assert!(rel < 0.01, "ω = {w:e}: {est} vs {expect} ({rel})");
        checked += 1;
    }
    assert!(checked > 100);
}
