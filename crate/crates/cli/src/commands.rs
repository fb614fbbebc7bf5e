use std::path::{Path, PathBuf};

use anyhow::anyhow;
use driftlab_core::ingest::{self, Channel, ColumnMapping, ParsedCsv, PreprocessStats};
use driftlab_core::metrics::{self, SummaryChannel};
use driftlab_core::par;
use driftlab_core::report::{self, DriftReport};
use driftlab_core::synth::{self, NamedInstrument, OracleRow};
use driftlab_core::{BeerLambertParams, Estimator, Exec, SensorSeries, UniformRectDensity};
use serde::Serialize;

use crate::config::{
    self, EstimatorConfig, EstimatorMode, Format, InputConfig, Loaded, ReferenceInput, RunConfig,
    SensorInput,
};
use crate::{Cli, Command, Failure};

/// Writes a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

type Result<T> = std::result::Result<T, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn data_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

/// Settings after applying flag > environment > config file > default.
struct Resolved {
    loaded: Loaded,
    seed: u64,
    out: PathBuf,
    formats: Vec<Format>,
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let mut loaded = config::load(cli.config.as_deref()).map_err(config_err)?;
    let c = &mut loaded.config;
    let seed = cli.seed.or(c.seed).unwrap_or(c.eval.rng_seed);
    c.seed = Some(seed);
    c.eval.rng_seed = seed;
    let out = match (&cli.out, &loaded.config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => PathBuf::from("out"),
    };
    let mut formats = if cli.formats.is_empty() {
        loaded.config.formats.clone().unwrap_or_else(|| vec![Format::Json, Format::Csv])
    } else {
        cli.formats.clone()
    };
    formats.sort();
    formats.dedup();
    if formats.is_empty() {
        return Err(config_err(anyhow!("at least one output format is required")));
    }
    Ok(Resolved {
        loaded,
        seed,
        out,
        formats,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let r = resolve(&cli)?;
    let jobs = cli.jobs.map(|j| j as usize);
    par::with_jobs(jobs, || match &cli.command {
        Command::Simulate => simulate(&r),
        Command::IngestCheck => ingest_check(&r),
        Command::Evaluate => evaluate(&r),
        Command::Report { input } => report_cmd(&r, input.as_deref()),
    })
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| data_err(anyhow!("cannot create output directory {}: {e}", dir.display())))
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct OracleFile<'a> {
    seed: u64,
    mc_samples: usize,
    desired_temp_range: [f64; 2],
    desired_co2_range: [f64; 2],
    rows: &'a [OracleRow],
}

fn simulate(r: &Resolved) -> Result<()> {
    let c = &r.loaded.config;
    let sim = c.simulate.clone().unwrap_or_default();
    let instruments: Vec<NamedInstrument> = match &sim.instruments {
        Some(list) => list.clone(),
        None => synth::default_fleet(sim.sensors),
    };
    let desired = UniformRectDensity::new(c.eval.desired_temp_range, c.eval.desired_co2_range)
        .map_err(config_err)?;
    let fleet =
        synth::generate_fleet(&sim.environment, &instruments, r.seed, Exec::Parallel).map_err(config_err)?;
    let oracle = synth::monthly_oracle(
        &sim.environment,
        &instruments,
        &desired,
        sim.mc_samples,
        r.seed,
        Exec::Parallel,
    )
    .map_err(config_err)?;

    create_out(&r.out)?;
    synth::write_reference_csv(&r.out.join("reference.csv"), &fleet.environment).map_err(data_err)?;
    let mut sensors = Vec::with_capacity(instruments.len());
    for inst in &instruments {
        let series = fleet.dataset.get(&inst.id).expect("generated");
        let csv_name = format!("sensor_{}.csv", inst.id);
        let params_name = format!("params_{}.json", inst.id);
        synth::write_sensor_csv(&r.out.join(&csv_name), series).map_err(data_err)?;
        synth::write_json(&r.out.join(&params_name), &inst.spec.calibrated_params).map_err(data_err)?;
        sensors.push(SensorInput {
            id: inst.id.clone(),
            path: csv_name.into(),
            time: "time".into(),
            temperature: "temperature".into(),
            ir_signal: Some("ir_signal".into()),
            sensor_co2: Some("sensor_co2".into()),
            params: Some(params_name.into()),
        });
    }
    synth::write_json(&r.out.join("instruments.json"), &instruments).map_err(data_err)?;
    synth::write_json(
        &r.out.join("oracle.json"),
        &OracleFile {
            seed: r.seed,
            mc_samples: sim.mc_samples,
            desired_temp_range: desired.temp_range,
            desired_co2_range: desired.co2_range,
            rows: &oracle,
        },
    )
    .map_err(data_err)?;

    let eval_config = RunConfig {
        seed: Some(r.seed),
        out: None,
        formats: None,
        eval: c.eval.clone(),
        estimator: EstimatorConfig {
            mode: EstimatorMode::BeerLambert,
            params: None,
            fit_window_days: None,
        },
        input: Some(InputConfig {
            reference: ReferenceInput {
                path: "reference.csv".into(),
                time: "time".into(),
                reference_co2: "reference_co2".into(),
            },
            sensors,
        }),
        simulate: None,
    };
    let text = toml::to_string(&eval_config).map_err(|e| data_err(anyhow!("config serialization: {e}")))?;
    let path = r.out.join("config.toml");
    std::fs::write(&path, text).map_err(|e| data_err(anyhow!("cannot write {}: {e}", path.display())))?;
    say!(
        "simulated {} sensors, {} samples each, into {}",
        instruments.len(),
        fleet.environment.timestamps.len(),
        r.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- ingest

struct Prepared {
    series: SensorSeries,
    stats: PreprocessStats,
}

fn input_config(r: &Resolved) -> Result<&InputConfig> {
    r.loaded
        .config
        .input
        .as_ref()
        .ok_or_else(|| config_err(anyhow!("config has no [input] section")))
}

fn check_columns(mode: EstimatorMode, s: &SensorInput) -> Result<()> {
    let (needed, name) = match mode {
        EstimatorMode::BeerLambert => (&s.ir_signal, "ir_signal"),
        EstimatorMode::Passthrough => (&s.sensor_co2, "sensor_co2"),
    };
    if needed.is_none() {
        return Err(config_err(anyhow!(
            "sensor {}: estimator mode needs a `{name}` column mapping",
            s.id
        )));
    }
    Ok(())
}

fn parse(path: &Path, mapping: &ColumnMapping) -> Result<ParsedCsv> {
    ingest::parse_csv_path(path, mapping).map_err(|e| data_err(anyhow!("{}: {e}", path.display())))
}

fn prepare_all(r: &Resolved) -> Result<Vec<Prepared>> {
    let input = input_config(r)?;
    if input.sensors.is_empty() {
        return Err(config_err(anyhow!("config lists no sensors")));
    }
    let mut ids: Vec<&str> = input.sensors.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(config_err(anyhow!("duplicate sensor id `{}`", w[0])));
    }
    let mode = r.loaded.config.estimator.mode;
    for s in &input.sensors {
        check_columns(mode, s)?;
    }
    let reference = parse(
        &r.loaded.resolve(&input.reference.path),
        &ColumnMapping::new(&input.reference.time).with(&input.reference.reference_co2, Channel::ReferenceCo2),
    )?;
    let eval = &r.loaded.config.eval;
    Exec::Parallel
        .map(&input.sensors, |s| {
            let mut mapping = ColumnMapping::new(&s.time).with(&s.temperature, Channel::Temperature);
            if let Some(c) = &s.ir_signal {
                mapping = mapping.with(c, Channel::IrSignal);
            }
            if let Some(c) = &s.sensor_co2 {
                mapping = mapping.with(c, Channel::SensorCo2);
            }
            let parsed = parse(&r.loaded.resolve(&s.path), &mapping)?;
            let (series, stats) = ingest::preprocess(
                &s.id,
                &[reference.clone(), parsed],
                eval.averaging_window,
                eval.outlier_quantile,
            )
            .map_err(|e| data_err(anyhow!("sensor {}: {e}", s.id)))?;
            Ok(Prepared { series, stats })
        })
        .into_iter()
        .collect()
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    sensor_id: &'a str,
    observations: usize,
    first: String,
    last: String,
    months: usize,
    preprocessing: &'a PreprocessStats,
}

fn ingest_check(r: &Resolved) -> Result<()> {
    let prepared = prepare_all(r)?;
    let summaries: Vec<IngestSummary> = prepared
        .iter()
        .map(|p| {
            let obs = p.series.observations();
            IngestSummary {
                sensor_id: p.series.sensor_id(),
                observations: obs.len(),
                first: driftlab_core::model::format_timestamp(obs[0].timestamp),
                last: driftlab_core::model::format_timestamp(obs[obs.len() - 1].timestamp),
                months: p.series.partition_by_month().len(),
                preprocessing: &p.stats,
            }
        })
        .collect();
    for s in &summaries {
        if s.preprocessing.skipped_rows > 0 {
            warn(format!("sensor {}: {} unparseable rows skipped", s.sensor_id, s.preprocessing.skipped_rows));
        }
    }
    let text = serde_json::to_string_pretty(&summaries).expect("serializable");
    say!("{text}");
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn estimator_for(r: &Resolved, input: &SensorInput, series: &SensorSeries) -> Result<Estimator> {
    let est = &r.loaded.config.estimator;
    match est.mode {
        EstimatorMode::Passthrough => Ok(Estimator::Passthrough),
        EstimatorMode::BeerLambert => {
            if let Some(path) = &input.params {
                let path = r.loaded.resolve(path);
                let bytes = std::fs::read(&path)
                    .map_err(|e| config_err(anyhow!("cannot read params {}: {e}", path.display())))?;
                let params: BeerLambertParams = serde_json::from_slice(&bytes)
                    .map_err(|e| config_err(anyhow!("invalid params {}: {e}", path.display())))?;
                return Ok(Estimator::BeerLambert { params });
            }
            if let Some(params) = est.params {
                return Ok(Estimator::BeerLambert { params });
            }
            let Some(days) = est.fit_window_days else {
                return Err(config_err(anyhow!(
                    "sensor {}: beer-lambert mode needs a params file, [estimator] params or fit_window_days",
                    input.id
                )));
            };
            let obs = series.observations();
            let end = obs[0].timestamp as f64 + days * 86_400.0;
            let window: Vec<(f64, f64, f64)> = obs
                .iter()
                .take_while(|o| (o.timestamp as f64) < end)
                .map(|o| (o.temperature, o.ir_signal.expect("checked mapping"), o.reference_co2))
                .collect();
            let params = BeerLambertParams::fit(&window)
                .map_err(|e| data_err(anyhow!("sensor {}: calibration fit failed: {e}", input.id)))?;
            Ok(Estimator::BeerLambert { params })
        }
    }
}

/// Config as embedded in the report: run-location settings removed.
fn embedded_config(c: &RunConfig) -> serde_json::Value {
    let mut c = c.clone();
    c.out = None;
    c.formats = None;
    serde_json::to_value(&c).expect("serializable")
}

fn evaluate(r: &Resolved) -> Result<()> {
    let prepared = prepare_all(r)?;
    let input = input_config(r)?;
    let estimators: Vec<Estimator> = input
        .sensors
        .iter()
        .zip(&prepared)
        .map(|(s, p)| estimator_for(r, s, &p.series))
        .collect::<Result<_>>()?;
    let config = &r.loaded.config.eval;
    let pairs: Vec<(SensorSeries, Estimator)> = prepared
        .iter()
        .zip(&estimators)
        .map(|(p, e)| (p.series.clone(), *e))
        .collect();
    let evals = metrics::evaluate_fleet(&pairs, config, Exec::Parallel).map_err(data_err)?;

    create_out(&r.out)?;
    for (series, estimator) in &pairs {
        let id = series.sensor_id();
        let scatter =
            metrics::error_temperature_scatter(series.observations(), estimator).map_err(data_err)?;
        report::write_scatter_csv(&r.out.join(format!("scatter_{id}.csv")), &scatter).map_err(data_err)?;
        let temp = metrics::monthly_distribution_summary(series, SummaryChannel::Temperature).map_err(data_err)?;
        let co2 = metrics::monthly_distribution_summary(series, SummaryChannel::ReferenceCo2).map_err(data_err)?;
        report::write_distribution_csv(
            &r.out.join(format!("distribution_{id}.csv")),
            &[("temperature", &temp), ("reference_co2", &co2)],
        )
        .map_err(data_err)?;
    }

    let report = DriftReport::assemble(
        config,
        evals,
        &estimators,
        prepared.into_iter().map(|p| Some(p.stats)).collect(),
        embedded_config(&r.loaded.config),
    );
    write_report(r, &report)?;
    report_warnings(&report);
    print_summary(&report);
    Ok(())
}

fn write_report(r: &Resolved, report: &DriftReport) -> Result<()> {
    create_out(&r.out)?;
    for f in &r.formats {
        match f {
            Format::Json => report.write_json(&r.out.join("report.json")),
            Format::Csv => report.write_csv(&r.out.join("report.csv")),
        }
        .map_err(data_err)?;
    }
    report.write_fleet_csv(&r.out.join("fleet_monthly.csv")).map_err(data_err)?;
    report
        .write_difference_box_csv(&r.out.join("difference_box.csv"))
        .map_err(data_err)
}

fn report_warnings(report: &DriftReport) {
    let total: usize = report.sensors.iter().map(|s| s.months.len()).sum();
    let gaps = report.gap_count();
    if gaps == total {
        warn("no sensor-month has data inside the desired rectangle; the report contains only gaps");
    } else if gaps > 0 {
        warn(format!("{gaps} of {total} sensor-months have no data inside the desired rectangle"));
    }
    let low = report
        .sensors
        .iter()
        .flat_map(|s| &s.months)
        .filter(|m| m.resampled.as_ref().is_some_and(|x| x.low_confidence))
        .count();
    if low > 0 {
        warn(format!("{low} sensor-months flagged low-confidence (ESS < {})", report.metadata.low_confidence_ess));
    }
    for s in &report.sensors {
        let clamped: usize = s.months.iter().map(|m| m.clamped_estimates).sum();
        if clamped > 0 {
            warn(format!("sensor {}: {clamped} negative estimates clamped to 0", s.sensor_id));
        }
        if let Some(p) = &s.preprocessing {
            if p.skipped_rows > 0 {
                warn(format!("sensor {}: {} unparseable rows skipped", s.sensor_id, p.skipped_rows));
            }
        }
    }
}

fn print_summary(report: &DriftReport) {
    say!("month     sensors  mean_rmse_resampled  std  mean_rmse_original");
    for m in &report.fleet.months {
        say!(
            "{}  {:>7}  {:>19.3}  {:.3}  {:>18.3}",
            m.month, m.sensors, m.mean_rmse_resampled, m.std_rmse_resampled, m.mean_rmse_original
        );
    }
    match report.fleet.mean_max_abs_difference {
        Some(v) => say!("mean over sensors of max |rmse_original - rmse_resampled|: {v:.3} ppm"),
        None => say!("no resampled months"),
    }
}

// ---------------------------------------------------------------- report

fn report_cmd(r: &Resolved, input: Option<&Path>) -> Result<()> {
    let path = input.map(Path::to_path_buf).unwrap_or_else(|| r.out.join("report.json"));
    let report = DriftReport::read_json(&path).map_err(data_err)?;
    if report.schema_version != report::SCHEMA_VERSION {
        return Err(data_err(anyhow!(
            "{}: schema version {} not supported (expected {})",
            path.display(),
            report.schema_version,
            report::SCHEMA_VERSION
        )));
    }
    write_report(r, &report)?;
    report_warnings(&report);
    print_summary(&report);
    Ok(())
}
