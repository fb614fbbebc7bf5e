use driftlab_core::sensor::{BeerLambertParams, KELVIN_OFFSET};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[test]
fn forward_inverse_round_trip_grid() {
    for params in [
        BeerLambertParams::new(1.0, 1e-3, 293.15).unwrap(),
        BeerLambertParams::new(0.87, 2.3e-4, 298.15).unwrap(),
    ] {
        for i in 0..50 {
            let t = -20.0 + 80.0 * i as f64 / 49.0;
            for j in 0..50 {
                let y = 2000.0 * j as f64 / 49.0;
                let x = params.forward_ir(t, y).unwrap();
                let back = params.estimate_co2(t, x).unwrap();
                assert!(!back.flagged);
                let tol = 1e-9 * y.max(1.0);
                assert!((back.ppm - y).abs() <= tol, "T={t} y={y}: {}", back.ppm);
            }
        }
    }
}

/// Fits `ln x = a + b·u` with nalgebra and returns (a, b, se_b).
fn ols(u: &[f64], lnx: &[f64]) -> (f64, f64, f64) {
    let n = u.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { u[i] });
    let y = DVector::from_column_slice(lnx);
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().unwrap();
    let beta = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let resid = &y - &x * &beta;
    let s2 = resid.norm_squared() / (n - 2) as f64;
    (beta[0], beta[1], (s2 * inv[(1, 1)]).sqrt())
}

#[test]
fn noisy_fit_matches_independent_least_squares() {
    let truth = BeerLambertParams::new(0.95, 8e-4, 293.15).unwrap();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let temps = Uniform::new(-5.0_f64, 30.0).unwrap();
        let co2 = Uniform::new(380.0, 900.0).unwrap();
        let noise = Normal::new(0.0_f64, 0.003).unwrap();
        let window: Vec<(f64, f64, f64)> = (0..2000)
            .map(|_| {
                let t = temps.sample(&mut rng);
                let y = co2.sample(&mut rng);
                let x = truth.forward_ir(t, y).unwrap() * noise.sample(&mut rng).exp();
                (t, x, y)
            })
            .collect();
        let fit = BeerLambertParams::fit(&window).unwrap();
        assert_eq!(fit.t_ref, 293.15);

        let u: Vec<f64> = window.iter().map(|(t, _, y)| y * 293.15 / (t + KELVIN_OFFSET)).collect();
        let lnx: Vec<f64> = window.iter().map(|(_, x, _)| x.ln()).collect();
        let (a, b, se_b) = ols(&u, &lnx);
        assert!((fit.i0.ln() - a).abs() < 1e-9, "intercept {} vs {a}", fit.i0.ln());
        assert!((fit.alpha + b).abs() < 1e-9 * b.abs(), "slope {} vs {}", fit.alpha, -b);
        assert!((fit.alpha - truth.alpha).abs() < 3.0 * se_b, "seed {seed}");
    }
}

#[test]
fn noiseless_fit_recovers_parameters() {
    let truth = BeerLambertParams::new(1.1, 5e-4, 293.15).unwrap();
    let window: Vec<(f64, f64, f64)> = (0..40)
        .map(|i| {
            let t = -10.0 + i as f64;
            let y = 400.0 + 13.0 * i as f64;
            (t, truth.forward_ir(t, y).unwrap(), y)
        })
        .collect();
    let fit = BeerLambertParams::fit(&window).unwrap();
    assert!((fit.i0 - truth.i0).abs() < 1e-10);
    assert!((fit.alpha - truth.alpha).abs() < 1e-13);
}
