use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use stochphase::ou::{sample_path_with, sample_paths, stream_rng, Discretization, OuStepper};
use stochphase::ProcessParams;

fn nominal() -> ProcessParams {
    ProcessParams::new(1e4, 1e5).unwrap()
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

#[test]
fn spectral_density_integrates_to_stationary_variance() {
    let p = nominal();
    // ω = λ tan θ maps the real line onto (-π/2, π/2)
    let l = p.lambda();
    let f = |theta: f64| {
        let c = theta.cos();
        p.spectral_density(l * theta.tan()) * l / (c * c)
    };
    let h = std::f64::consts::FRAC_PI_2;
    let total = adaptive_simpson(&f, -h, h, 1e-14, 40) / (2.0 * std::f64::consts::PI);
    assert!((total / p.stationary_variance() - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn pooled_variance_of_long_paths() {
    // 200 paths of 10⁶ exact steps; reduced per path to keep memory flat
    let p = nominal();
    let dt = 1e-6;
    let n = 1_000_000;
    let sums: Vec<(f64, usize)> = (0..200u64)
        .into_par_iter()
        .map(|stream| {
            let path = sample_path_with(&p, dt, n, 11, stream, Discretization::Exact).unwrap();
            (path.samples.iter().map(|x| x * x).sum::<f64>(), path.len())
        })
        .collect();
    let total: f64 = sums.iter().map(|s| s.0).sum();
    let count: usize = sums.iter().map(|s| s.1).sum();
    let var = total / count as f64;
    assert!((var / p.stationary_variance() - 1.0).abs() < 0.01, "{var}");
}

#[test]
fn ensemble_variance_and_autocorrelation() {
    let p = nominal();
    let dt = 1e-6;
    let paths = sample_paths(&p, dt, 64, 5, 20_000).unwrap();
    let m = paths.len() as f64;
    let k0 = p.stationary_variance();
    for lag in [0usize, 5, 10, 30] {
        for start in [0usize, 20] {
            let cov = paths
                .iter()
                .map(|path| path.samples[start] * path.samples[start + lag])
                .sum::<f64>()
                / m;
            let expect = p.autocorrelation(lag as f64 * dt);
            // standard error of a product of unit-correlated normals is ≤ √2·K(0)/√m
            let tol = 4.0 * 2f64.sqrt() * k0 / m.sqrt();
            assert!((cov - expect).abs() < tol, "lag {lag}: {cov} vs {expect}");
        }
    }
}

#[test]
fn euler_scheme_stationary_variance() {
    // Euler-Maruyama has stationary variance κ dt / (1 - (1 - λdt)²)
    let p = nominal();
    let dt = 5e-7;
    let stepper = OuStepper::new(&p, dt, Discretization::EulerMaruyama);
    let expect = p.kappa() * dt / (1.0 - (1.0 - p.lambda() * dt).powi(2));
    let mut rng = stream_rng(3, 0);
    let mut phi = 0.0;
    let mut acc = 0.0;
    let n = 4_000_000;
    for i in 0..n + 1000 {
        let z: f64 = StandardNormal.sample(&mut rng);
        phi = stepper.step(phi, z);
        if i >= 1000 {
            acc += phi * phi;
        }
    }
    let var = acc / n as f64;
    assert!((var / expect - 1.0).abs() < 0.03, "{var} vs {expect}");
    assert!(expect > p.stationary_variance());
}

#[test]
fn paths_are_reproducible_per_stream() {
    let p = nominal();
    let a = sample_path_with(&p, 1e-6, 1000, 9, 4, Discretization::Exact).unwrap();
    let b = sample_path_with(&p, 1e-6, 1000, 9, 4, Discretization::Exact).unwrap();
    let c = sample_path_with(&p, 1e-6, 1000, 9, 5, Discretization::Exact).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_ne!(a.samples, c.samples);
    let batch = sample_paths(&p, 1e-6, 1000, 9, 6).unwrap();
    assert_eq!(batch[4].samples, a.samples);
}
