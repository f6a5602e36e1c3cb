use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use claimstate_core::data::write_dataset;
use claimstate_core::evaluation::{
    double_lift_data, lift_plot_data, MetricReport, DOUBLE_LIFT_EDGES,
};
use claimstate_core::prediction::{
    predict_dataset, snapshot_bands, CoefficientBandSeries, ForecastMode,
};
use claimstate_core::simgen::{self, Curve, SimFamily, SimSpec};
use claimstate_core::{
    fit as fit_model, load_dataset, load_snapshot, refresh_smoothing, save_snapshot,
    select_smoothing, update as update_model, BatchDataset, Counts, DatasetSchema, Error,
    ModelSnapshot, Result, TimeScale,
};

use crate::run_config::RunConfig;
use crate::{EvaluateArgs, FitArgs, ModeArg, PredictArgs, SimFamilyArg, SimulateArgs, UpdateArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Argument(format!("cannot write '{}': {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Serialize)]
struct FitReport {
    family: String,
    tau: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nb_alpha: Option<f64>,
    smoothing_selected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    search_evaluations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    at_search_bound: Option<Vec<bool>>,
    predictive_loglik: f64,
    rows: usize,
    batches_processed: usize,
    newton_iterations: Vec<usize>,
    clamped_batches: Vec<usize>,
}

fn write_bands(path: &Path, series: &CoefficientBandSeries, scale: TimeScale) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "coefficient",
        "batch",
        "t",
        "mean",
        "lower",
        "upper",
        "kind",
    ])
    .map_err(csv_error)?;
    for band in &series.coefficients {
        for p in &band.points {
            w.write_record([
                band.name.clone(),
                p.batch.to_string(),
                scale.denormalize(p.t).to_string(),
                p.mean.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
                format!("{:?}", p.kind).to_lowercase(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<()> {
    let mut rc = RunConfig::load(&args.config)?;
    if args.tau.is_some() {
        rc.tau = args.tau.clone();
    }
    if args.fix_tau {
        rc.fix_tau = true;
    }
    if let Some(s) = args.batches {
        rc.batches = Some(s);
    }
    if let Some(c) = args.prior_scale {
        rc.prior_scale = Some(c);
    }
    if let Some(a) = args.nb_alpha {
        rc.nb_alpha = Some(a);
    }
    let snapshot_path = args
        .out_snapshot
        .clone()
        .or_else(|| rc.output.snapshot.clone())
        .ok_or_else(|| {
            Error::Config("no snapshot output: pass --out-snapshot or set output.snapshot".into())
        })?;
    let bands_path = args
        .bands
        .clone()
        .or_else(|| rc.output.bands.clone())
        .unwrap_or_else(|| sibling(&snapshot_path, ".bands.csv"));
    let report_path = args
        .report
        .clone()
        .or_else(|| rc.output.report.clone())
        .unwrap_or_else(|| sibling(&snapshot_path, ".report.toml"));

    let mut config = rc.model_config()?;
    let schema = rc.schema();
    let search = rc.search();
    let mut dataset = load_dataset(
        &args.data,
        &schema,
        &config,
        rc.time_scale()?,
        Counts::Required,
    )?;
    if let Some(k) = args.through_batch {
        let late: Vec<usize> = dataset
            .rows()
            .iter()
            .filter(|r| r.batch > k)
            .map(|r| r.index)
            .collect();
        if !late.is_empty() {
            return Err(Error::data(format!(
                "{} row(s) fall after batch {k} (first is data row {})",
                late.len(),
                late[0] + 1
            )));
        }
        dataset = dataset.split_at_batch(k).0;
    }
    let selection = if rc.fix_tau {
        None
    } else {
        let s = select_smoothing(&dataset, &config, &search)?;
        config = s.apply(&config)?;
        Some(s)
    };
    let mut out = fit_model(&dataset, &config)?;
    out.snapshot.schema = Some(schema);
    out.snapshot.search = Some(search);
    save_snapshot(&out.snapshot, &snapshot_path)?;

    let series = snapshot_bands(&out.snapshot, 0, args.level)?;
    write_bands(&bands_path, &series, out.snapshot.time_scale)?;

    let report = FitReport {
        family: config.family.name().to_string(),
        tau: config.tau.clone(),
        nb_alpha: config.nb_alpha,
        smoothing_selected: selection.is_some(),
        search_evaluations: selection.as_ref().map(|s| s.evaluations),
        at_search_bound: selection.as_ref().map(|s| s.at_bound.clone()),
        predictive_loglik: out.trace.predictive_loglik(),
        rows: dataset.len(),
        batches_processed: out.trace.len(),
        newton_iterations: out.trace.iterations(),
        clamped_batches: out
            .trace
            .steps
            .iter()
            .filter(|s| s.clamped)
            .map(|s| s.filtered.batch_index)
            .collect(),
    };
    let text = toml::to_string(&report).map_err(|e| Error::Parse(e.to_string()))?;
    let mut w = create(&report_path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn snapshot_schema(snapshot: &ModelSnapshot) -> DatasetSchema {
    snapshot.schema.clone().unwrap_or_default()
}

pub fn update(args: UpdateArgs) -> Result<()> {
    let snapshot = load_snapshot(&args.snapshot)?;
    let schema = snapshot_schema(&snapshot);
    let next = if args.refresh_smoothing {
        let path = args
            .all_data
            .as_ref()
            .ok_or_else(|| Error::Argument("--refresh-smoothing needs --all-data".into()))?;
        let all = load_dataset(
            path,
            &schema,
            &snapshot.config,
            Some(snapshot.time_scale),
            Counts::Required,
        )?;
        let search = snapshot.search.clone().unwrap_or_default();
        refresh_smoothing(&snapshot, &all, &search)?.0.snapshot
    } else {
        let data = load_dataset(
            &args.data,
            &schema,
            &snapshot.config,
            Some(snapshot.time_scale),
            Counts::Required,
        )?;
        update_model(&snapshot, &data)?.snapshot
    };
    save_snapshot(&next, &args.out_snapshot)
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let mode = match args.horizon {
        Some(k) if k <= 0 => {
            return Err(Error::Argument(format!(
                "--horizon must be at least 1, got {k}"
            )))
        }
        Some(k) => ForecastMode::Fixed(k as usize),
        None => match args.mode {
            ModeArg::Rolling => ForecastMode::Rolling,
            ModeArg::Multistep => ForecastMode::Multistep,
        },
    };
    let snapshot = load_snapshot(&args.snapshot)?;
    let schema = snapshot_schema(&snapshot);
    let data = load_dataset(
        &args.data,
        &schema,
        &snapshot.config,
        Some(snapshot.time_scale),
        Counts::Optional,
    )?;
    let result = predict_dataset(&snapshot, &data, mode, args.k_max)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by_key(|&i| data.rows()[i].index);
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    let mut header = vec!["row".to_string(), "t".into(), "batch".into(), "mean".into()];
    header.extend((0..=args.k_max).map(|k| format!("pmf_{k}")));
    w.write_record(&header).map_err(csv_error)?;
    for i in order {
        let row = &data.rows()[i];
        let mut rec = vec![
            row.index.to_string(),
            row.time.to_string(),
            row.batch.to_string(),
            result.means[i].to_string(),
        ];
        rec.extend(result.pmf[i].iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;

    if let Some(path) = &args.bands {
        let last = data.rows().iter().map(|r| r.batch).max().unwrap_or(0);
        let horizon = match mode {
            ForecastMode::Fixed(k) => k,
            _ => last.saturating_sub(snapshot.batch_index()),
        };
        let series = snapshot_bands(&snapshot, horizon, args.level)?;
        write_bands(path, &series, snapshot.time_scale)?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let family = match args.family {
        SimFamilyArg::Poisson => SimFamily::Poisson,
        SimFamilyArg::Zip => SimFamily::Zip {
            zero_logit: Curve::Constant {
                value: args.zero_logit,
            },
        },
        SimFamilyArg::Nb => SimFamily::NegBin { alpha: args.alpha },
    };
    let spec = SimSpec {
        n: args.n,
        seed: args.seed,
        family,
        covariate_range: [args.covariate_low, args.covariate_high],
        train_fraction: args.train_fraction,
        ..SimSpec::default()
    };
    let sim = simgen::generate(&spec).map_err(|e| match e {
        Error::Config(m) => Error::Argument(m),
        other => other,
    })?;
    let schema = DatasetSchema::default();
    let comment = spec.header_comment();
    let write = |path: &Path, ds: &BatchDataset| -> Result<()> {
        let mut w = create(path)?;
        write_dataset(&mut w, ds, &schema, Some(&comment))?;
        w.flush()?;
        Ok(())
    };
    write(&args.out, &sim.train.concat(&sim.test)?)?;
    if let Some(p) = &args.train_out {
        write(p, &sim.train)?;
    }
    if let Some(p) = &args.test_out {
        write(p, &sim.test)?;
    }
    Ok(())
}

struct PredictionFile {
    means: Vec<f64>,
    pmf: Vec<Vec<f64>>,
}

/// Reads a prediction CSV and orders it by its `row` key, which must cover
/// `0..n` exactly.
fn read_predictions(path: &Path, n: usize) -> Result<PredictionFile> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Argument(format!("cannot read '{}': {e}", path.display())))?;
    let header = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{}: missing column '{name}'", path.display())))
    };
    let row_col = col("row")?;
    let mean_col = col("mean")?;
    let pmf_cols: Vec<usize> = (0..)
        .map_while(|k| header.iter().position(|h| h == format!("pmf_{k}")))
        .collect();
    let mut by_row: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let bad = |what: &str| Error::Data {
            message: format!("{}: bad {what}", path.display()),
            lines: vec![i + 2],
        };
        let key: usize = rec
            .get(row_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("row key"))?;
        let mean: f64 = rec
            .get(mean_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("mean"))?;
        let pmf = pmf_cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("pmf value"))
            })
            .collect::<Result<Vec<f64>>>()?;
        if by_row.insert(key, (mean, pmf)).is_some() {
            return Err(bad("duplicate row key"));
        }
    }
    if by_row.len() != n || by_row.keys().next_back().is_some_and(|&k| k + 1 != n) {
        return Err(Error::data(format!(
            "{} has {} prediction rows; the data has {n}",
            path.display(),
            by_row.len()
        )));
    }
    let (means, pmf) = by_row.into_values().unzip();
    Ok(PredictionFile { means, pmf })
}

fn read_counts(path: &Path, column: &str) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Argument(format!("cannot read '{}': {e}", path.display())))?;
    let idx = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::data(format!("missing column(s): {column}")))?;
    let mut counts = Vec::new();
    let mut bad = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        match rec.get(idx).and_then(|v| v.parse::<u64>().ok()) {
            Some(y) => counts.push(y),
            None => bad.push(line),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Data {
            message: format!("column '{column}': not a non-negative integer"),
            lines: bad,
        });
    }
    Ok(counts)
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let y = read_counts(&args.data, &args.count_column)?;
    let model = read_predictions(&args.predictions, y.len())?;
    let k_max = model.pmf.first().map_or(0, Vec::len);
    if k_max == 0 {
        return Err(Error::data("prediction file has no pmf columns"));
    }
    let report = MetricReport::compute(&y, &model.means, &model.pmf, k_max - 1)?;
    let mut w = create(&args.out)?;
    w.write_all(report.to_text().as_bytes())?;
    w.flush()?;

    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    if let Some(path) = &args.lift_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["decile", "mean_prediction", "mean_response"])
            .map_err(csv_error)?;
        for r in lift_plot_data(&yf, &model.means)? {
            w.write_record([
                r.decile.to_string(),
                r.mean_prediction.to_string(),
                r.mean_response.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
    }
    if let (Some(baseline), Some(path)) = (&args.baseline, &args.double_lift_out) {
        let base = read_predictions(baseline, y.len())?;
        let dl = double_lift_data(&yf, &model.means, &base.means, &DOUBLE_LIFT_EDGES)?;
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["bucket_low", "bucket_high", "actual_ratio", "model_ratio"])
            .map_err(csv_error)?;
        for r in &dl.rows {
            w.write_record([
                r.bucket_low.to_string(),
                r.bucket_high.to_string(),
                r.actual_ratio.to_string(),
                r.model_ratio.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        for (lo, hi) in &dl.empty_buckets {
            eprintln!("note: double-lift bucket ({lo}, {hi}] is empty and omitted");
        }
    }
    Ok(())
}
