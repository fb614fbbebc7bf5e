use driftlab_core::metrics::{
    evaluate_fleet, fleet_aggregate, monthly_distribution_summary, monthly_drift_eval, rmse, SummaryChannel,
};
use driftlab_core::sensor::KELVIN_OFFSET;
use driftlab_core::stats::spearman;
use driftlab_core::synth::{
    default_fleet, generate_fleet, nominal_params, oracle_instrumental_rmse, EnvironmentSpec, GainDrift,
    InstrumentSpec,
};
use driftlab_core::{EvalConfig, Estimator, Exec, MonthKey, Observation, SensorSeries, UniformRectDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn desired() -> UniformRectDensity {
    UniformRectDensity::new([0.0, 20.0], [400.0, 500.0]).unwrap()
}

fn config(seed: u64) -> EvalConfig {
    EvalConfig {
        rng_seed: seed,
        ..EvalConfig::default()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// One month of passthrough observations at 10-minute cadence.
fn month_series(points: &[(f64, f64, f64)]) -> SensorSeries {
    let start = MonthKey::new(2018, 3).unwrap().start();
    let obs = points
        .iter()
        .enumerate()
        .map(|(i, &(t, y, est))| Observation {
            timestamp: start + 600 * i as i64,
            temperature: t,
            ir_signal: None,
            sensor_co2: Some(est),
            reference_co2: y,
        })
        .collect();
    SensorSeries::new("m", obs, 600).unwrap()
}

#[test]
fn rmse_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs: Vec<Observation> = (0..1000)
        .map(|i| {
            let y = rng.random_range(380.0..700.0);
            Observation {
                timestamp: i,
                temperature: rng.random_range(-10.0..35.0),
                ir_signal: None,
                sensor_co2: Some(y + rng.random_range(-40.0..40.0)),
                reference_co2: y,
            }
        })
        .collect();
    let errors: Vec<f64> = obs.iter().map(|o| o.sensor_co2.unwrap() - o.reference_co2).collect();
    let mut sq = 0.0;
    for e in &errors {
        sq += e * e;
    }
    let want = (sq / errors.len() as f64).sqrt();
    let got = rmse(&obs, &Estimator::Passthrough).unwrap();
    assert!((got - want).abs() <= 1e-12 * want);
}

#[test]
fn exact_noiseless_fleet_has_zero_error() {
    let env = EnvironmentSpec {
        duration_days: 70.0,
        ..EnvironmentSpec::default()
    };
    let inst: Vec<_> = default_fleet(2)
        .into_iter()
        .map(|mut n| {
            n.spec = InstrumentSpec::ideal(nominal_params());
            n
        })
        .collect();
    let fleet = generate_fleet(&env, &inst, 4, Exec::Sequential).unwrap();
    for s in fleet.dataset.iter() {
        let est = Estimator::BeerLambert { params: nominal_params() };
        for m in monthly_drift_eval(s, &config(4), &est, Exec::Sequential).unwrap() {
            assert!(m.rmse_original < 1e-9);
            assert!(m.rmse_resampled().unwrap() < 1e-9);
        }
    }
}

fn resampled_spread(series: &SensorSeries, seeds: std::ops::Range<u64>) -> Vec<f64> {
    seeds
        .map(|s| {
            monthly_drift_eval(series, &config(s), &Estimator::Passthrough, Exec::Sequential).unwrap()[0]
                .rmse_resampled()
                .unwrap()
        })
        .collect()
}

#[test]
fn environment_already_desired_leaves_rmse_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 6.0).unwrap();
    let points: Vec<(f64, f64, f64)> = (0..4400)
        .map(|_| {
            let t = rng.random_range(0.0..20.0);
            let y = rng.random_range(400.0..500.0);
            (t, y, y + noise.sample(&mut rng))
        })
        .collect();
    let series = month_series(&points);
    let spread = resampled_spread(&series, 0..50);
    let (_, sd) = mean_sd(&spread);
    let m = &monthly_drift_eval(&series, &config(42), &Estimator::Passthrough, Exec::Sequential).unwrap()[0];
    assert!(m.rmse_difference.unwrap().abs() < 3.0 * sd);
}

#[test]
fn environment_independent_errors_are_a_null_case() {
    // skewed, partly out-of-band environment but errors independent of it
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 6.0).unwrap();
    let points: Vec<(f64, f64, f64)> = (0..4400)
        .map(|_| {
            let t = -8.0 + 34.0 * rng.random::<f64>().powf(1.7);
            let y = 390.0 + 150.0 * rng.random::<f64>().sqrt();
            (t, y, y + noise.sample(&mut rng))
        })
        .collect();
    let series = month_series(&points);
    let (_, sd) = mean_sd(&resampled_spread(&series, 0..50));
    let m = &monthly_drift_eval(&series, &config(42), &Estimator::Passthrough, Exec::Sequential).unwrap()[0];
    assert!(m.rmse_difference.unwrap().abs() < 3.0 * sd);
}

#[test]
fn cold_month_errors_inflate_original_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 3.0).unwrap();
    let points: Vec<(f64, f64, f64)> = (0..4400)
        .map(|_| {
            let t = rng.random_range(-10.0..5.0);
            let y = rng.random_range(400.0..480.0);
            let scale = if t < 0.0 { 5.0 } else { 1.0 };
            (t, y, y + scale * noise.sample(&mut rng))
        })
        .collect();
    let series = month_series(&points);
    let m = &monthly_drift_eval(&series, &config(42), &Estimator::Passthrough, Exec::Sequential).unwrap()[0];
    // direct: only the T ≥ 0 points carry desired mass
    let warm: Vec<f64> = points.iter().filter(|p| p.0 >= 0.0).map(|p| (p.2 - p.1).powi(2)).collect();
    let direct = (warm.iter().sum::<f64>() / warm.len() as f64).sqrt();
    let res = m.rmse_resampled().unwrap();
    assert!(m.rmse_original > res);
    assert!(m.rmse_original > 2.0 * direct);
    assert!((res - direct).abs() < 0.2 * direct, "{res} vs {direct}");
}

#[test]
fn fleet_summary_matches_independent_pass() {
    let env = EnvironmentSpec {
        duration_days: 120.0,
        ..EnvironmentSpec::default()
    };
    let fleet = generate_fleet(&env, &default_fleet(12), 5, Exec::Parallel).unwrap();
    let sensors: Vec<_> = fleet
        .dataset
        .iter()
        .map(|s| (s.clone(), Estimator::BeerLambert { params: nominal_params() }))
        .collect();
    let evals = evaluate_fleet(&sensors, &config(5), Exec::Parallel).unwrap();
    let summary = fleet_aggregate(&evals);

    let mut maxima = Vec::new();
    for e in &evals {
        let mut best: f64 = 0.0;
        for m in &e.months {
            let d = m.rmse_original - m.rmse_resampled().unwrap();
            assert_eq!(m.rmse_difference, Some(d));
            best = best.max(d.abs());
        }
        maxima.push(best);
    }
    let want = maxima.iter().sum::<f64>() / maxima.len() as f64;
    assert!((summary.mean_max_abs_difference.unwrap() - want).abs() < 1e-12);

    for fm in &summary.months {
        let vals: Vec<f64> = evals
            .iter()
            .map(|e| e.months.iter().find(|m| m.month == fm.month).unwrap().rmse_resampled().unwrap())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert_eq!(fm.sensors, 12);
        assert!((fm.mean_rmse_resampled - mean).abs() < 1e-12);
        assert!((fm.std_rmse_resampled - sd).abs() < 1e-12);
        let b = &fm.difference_box;
        assert!(b.q1 <= b.median && b.median <= b.q3);
    }
}

#[test]
fn monthly_medians_trace_the_seasonal_cycle() {
    let env = EnvironmentSpec::default();
    let fleet = generate_fleet(&env, &default_fleet(1), 6, Exec::Sequential).unwrap();
    let series = fleet.dataset.iter().next().unwrap();
    let summaries = monthly_distribution_summary(series, SummaryChannel::Temperature).unwrap();
    assert_eq!(summaries.len(), 24);
    for s in summaries {
        let ts: Vec<i64> = env.timestamps().into_iter().filter(|t| MonthKey::from_timestamp(*t) == s.month).collect();
        let analytic = ts.iter().map(|t| env.mean_temperature_at(*t)).sum::<f64>() / ts.len() as f64;
        assert!((s.quantiles[3] - analytic).abs() < 2.0, "{}: {} vs {analytic}", s.month, s.quantiles[3]);
    }
}

#[test]
fn linear_gain_drift_without_noise() {
    let env = EnvironmentSpec::default();
    let mut spec = InstrumentSpec::ideal(nominal_params());
    spec.gain_drift = GainDrift::Linear { slope_per_year: -0.02 };
    let mut inst = default_fleet(1);
    inst[0].spec = spec;
    let fleet = generate_fleet(&env, &inst, 12, Exec::Sequential).unwrap();
    let series = fleet.dataset.iter().next().unwrap();
    let p = nominal_params();
    // closed form: ŷ − y = −ln g · (T_K / t_ref) / α
    for o in series.observations() {
        let g = 1.0 - 0.02 * (o.timestamp - env.start) as f64 / (365.25 * 86_400.0);
        let want = -g.ln() * (o.temperature + KELVIN_OFFSET) / p.t_ref / p.alpha;
        let got = o.sensor_co2.unwrap() - o.reference_co2;
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
    }
    let months = monthly_drift_eval(series, &config(12), &Estimator::BeerLambert { params: p }, Exec::Sequential).unwrap();
    let r: Vec<f64> = months.iter().map(|m| m.rmse_resampled().unwrap()).collect();
    assert_eq!(r.len(), 24);
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
}

#[test]
fn drift_trend_is_recovered_under_noise() {
    let env = EnvironmentSpec::default();
    let mut inst = default_fleet(1);
    inst[0].spec.gain_drift = GainDrift::Linear { slope_per_year: -0.02 };
    let fleet = generate_fleet(&env, &inst, 13, Exec::Sequential).unwrap();
    let series = fleet.dataset.iter().next().unwrap();
    let est = Estimator::BeerLambert { params: nominal_params() };
    let r: Vec<f64> = monthly_drift_eval(series, &config(13), &est, Exec::Sequential)
        .unwrap()
        .iter()
        .map(|m| m.rmse_resampled().unwrap())
        .collect();
    let idx: Vec<f64> = (0..r.len()).map(|i| i as f64).collect();
    assert!(spearman(&idx, &r).unwrap() > 0.9);
}

#[test]
fn oracle_constant_in_time_without_drift() {
    let mut spec = InstrumentSpec::ideal(nominal_params());
    spec.ir_noise_sigma = 0.004;
    let d = desired();
    let spread: Vec<f64> = (0..30)
        .map(|s| oracle_instrumental_rmse(&spec, 0.0, &d, 4000, s).unwrap())
        .collect();
    let (_, sd) = mean_sd(&spread);
    let year = 365.25 * 86_400.0;
    let a = oracle_instrumental_rmse(&spec, 0.0, &d, 4000, 100).unwrap();
    let b = oracle_instrumental_rmse(&spec, year, &d, 4000, 101).unwrap();
    assert!((a - b).abs() < 3.0 * sd * 2f64.sqrt());
}

#[test]
fn oracle_grows_with_gain_loss() {
    let mut spec = InstrumentSpec::ideal(nominal_params());
    spec.ir_noise_sigma = 0.004;
    spec.gain_drift = GainDrift::Linear { slope_per_year: -0.02 };
    let year = 365.25 * 86_400.0;
    let d = desired();
    let at_start = oracle_instrumental_rmse(&spec, 0.0, &d, 20_000, 1).unwrap();
    let at_098 = oracle_instrumental_rmse(&spec, year, &d, 20_000, 1).unwrap();
    assert!(at_098 > at_start);
    let ideal = oracle_instrumental_rmse(&InstrumentSpec::ideal(nominal_params()), year, &d, 1000, 1).unwrap();
    assert!(ideal < 1e-9);
}

#[test]
fn resampled_rmse_ignores_the_environment_regime() {
    let mut spec = InstrumentSpec::ideal(nominal_params());
    spec.ir_noise_sigma = 0.004;
    spec.source_temp_coeff = 6e-4;
    let p = nominal_params();
    let build = |seed: u64, lo: f64, hi: f64, skew: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.ir_noise_sigma).unwrap();
        let points: Vec<(f64, f64, f64)> = (0..4400)
            .map(|_| {
                let t = lo + (hi - lo) * rng.random::<f64>().powf(skew);
                let y = 390.0 + 130.0 * rng.random::<f64>().sqrt();
                let ir = spec.ir_reading(t, y, 1.0, noise.sample(&mut rng)).unwrap();
                (t, y, p.estimate_co2(t, ir).unwrap().ppm)
            })
            .collect();
        month_series(&points)
    };
    let winter = build(1, -10.0, 22.0, 1.8);
    let summer = build(2, -2.0, 30.0, 0.55);
    let eval = |s: &SensorSeries, seed: u64| {
        monthly_drift_eval(s, &config(seed), &Estimator::Passthrough, Exec::Sequential).unwrap()[0].clone()
    };
    let (_, sd_w) = mean_sd(&resampled_spread(&winter, 0..50));
    let (_, sd_s) = mean_sd(&resampled_spread(&summer, 0..50));
    let tol = 3.0 * (sd_w * sd_w + sd_s * sd_s).sqrt();
    let (w, s) = (eval(&winter, 42), eval(&summer, 42));
    let d_res = (w.rmse_resampled().unwrap() - s.rmse_resampled().unwrap()).abs();
    let d_orig = (w.rmse_original - s.rmse_original).abs();
    assert!(d_res < tol, "resampled differ by {d_res}, tolerance {tol}");
    assert!(d_orig > 3.0 * tol, "original differ by only {d_orig}");
}
