//! `split`, `train`, `evaluate`, `explain` and `generate`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fairpm_core::debias::{self, grid_search};
use fairpm_core::encoding::{build_dataset, build_schema, Dataset};
use fairpm_core::eventlog::{self, temporal_split};
use fairpm_core::explain::{
    aggregate_over_support, buffered, influence_ratio, sample_rows, AttributionConfig, RatioBasis,
    ShapleyReport,
};
use fairpm_core::fairness::{self, group_key, EvaluatedRow, FairnessReport};
use fairpm_core::outcomes::OutcomeKind;
use fairpm_core::synthlog;
use fairpm_core::{AdversarialModel, EventLog};
use log::info;

use crate::config::{LogFormat, MetricChoice, Settings};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::CliError;

pub const MODEL_FILE: &str = "model.json";
const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// What a command produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn display(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

pub fn read_log(settings: &Settings, configured: &Path) -> Result<EventLog, CliError> {
    let path = settings.resolve(configured);
    let config = &settings.config;
    let options = config.parse_options();
    let parsed = match config.data.format.resolve(&path) {
        LogFormat::Xes => eventlog::parse_xes_with(&path, &options),
        _ => eventlog::parse_csv_with(&path, &config.data.columns, &options),
    };
    parsed.map_err(CliError::in_file(&path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> fairpm_core::Result<()>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out).map_err(CliError::in_file(path))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_log(settings: &Settings, log: &EventLog, path: &Path) -> Result<(), CliError> {
    match settings.config.data.format.resolve(path) {
        LogFormat::Xes => write_with(path, |w| eventlog::write_xes(log, w)),
        _ => write_with(path, |w| eventlog::write_csv(log, w)),
    }
}

/// Writes the manifest into the output directory and finishes the run.
fn finish(
    settings: &Settings,
    builder: ManifestBuilder,
    files: Vec<PathBuf>,
    summary: String,
) -> Result<RunOutput, CliError> {
    let manifest = builder.finish();
    let path = settings.output_path(&format!("{}.manifest.toml", manifest.command));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    manifest.write(&path)?;
    let mut files = files;
    files.push(path);
    Ok(RunOutput {
        manifest,
        files,
        summary,
    })
}

fn builder(settings: &Settings, command: &str) -> ManifestBuilder {
    ManifestBuilder::new(command, settings.config.seed, settings.config.to_toml())
}

/// Splits `data.input` temporally into `data.train` and `data.test`.
pub fn split(settings: &Settings) -> Result<RunOutput, CliError> {
    let config = &settings.config;
    let input = config
        .data
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("split needs data.input".into()))?;
    let mut manifest = builder(settings, "split");
    manifest.input(&display(input), &settings.resolve(input))?;
    let log = read_log(settings, input)?;
    let (train, test) = temporal_split(&log, config.data.train_fraction)?;
    let mut files = Vec::new();
    for (configured, part) in [(&config.data.train, &train), (&config.data.test, &test)] {
        let path = settings.resolve(configured);
        write_log(settings, part, &path)?;
        manifest.output(&display(configured));
        files.push(path);
    }
    let summary = format!(
        "{} traces: {} for training, {} for testing",
        log.len(),
        train.len(),
        test.len()
    );
    finish(settings, manifest, files, summary)
}

/// Trains on `data.train`; runs the grid search first when one is
/// configured.
pub fn train(settings: &Settings, model_path: Option<&Path>) -> Result<RunOutput, CliError> {
    let config = &settings.config;
    let mut manifest = builder(settings, "train");
    manifest.input(&display(&config.data.train), &settings.resolve(&config.data.train))?;
    let log = read_log(settings, &config.data.train)?;
    let outcome = config.task.outcome_spec()?;
    outcome.validate(log.schema())?;
    let schema = build_schema(&log, &config.task.protected)?;
    let data = build_dataset(&schema, &log, &outcome)?;
    info!("{} prefixes, {} features", data.len(), schema.len());

    let mut files = Vec::new();
    let mut training = config.training.clone();
    let mut summary = String::new();
    if config.grid.is_enabled() {
        let fraction = config
            .grid
            .validation_fraction
            .unwrap_or(DEFAULT_VALIDATION_FRACTION);
        let (selected, report) = grid_search(&data, &schema, &outcome, &training, &config.grid.spec(), fraction)?;
        let path = settings.output_path("grid_report.csv");
        write_with(&path, |w| report.write_csv(w))?;
        manifest.output("grid_report.csv");
        files.push(path);
        summary.push_str(&format!(
            "grid search: {} combinations, selected #{}\n",
            report.rows.len(),
            report.selected
        ));
        training = selected;
    }
    let model = debias::train(&data, &schema, &outcome, &training)?;

    let model_path = model_path.map_or_else(|| settings.output_path(MODEL_FILE), Path::to_path_buf);
    manifest.output(&display(
        model_path.file_name().map(Path::new).unwrap_or(Path::new(MODEL_FILE)),
    ));
    let hash = manifest.hash();
    write_with(&model_path, |w| model.save(w, Some(hash)))?;
    files.push(model_path);
    let loss = model.evaluate_loss(&data, training.adversary_weight);
    summary.push_str(&format!(
        "trained on {} prefixes: prediction {:.5}, adversary {:.5}",
        data.len(),
        loss.prediction_term,
        loss.adversary_term
    ));
    finish(settings, manifest, files, summary)
}

pub fn load_model(path: &Path) -> Result<AdversarialModel, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let (model, _) = AdversarialModel::load(BufReader::new(file), None).map_err(CliError::in_file(path))?;
    Ok(model)
}

fn model_or_default(settings: &Settings, model: Option<&Path>) -> PathBuf {
    model.map_or_else(|| settings.output_path(MODEL_FILE), Path::to_path_buf)
}

/// Encodes `log` with the model's schema, using the model's outcome.
fn dataset_for(model: &AdversarialModel, log: &EventLog) -> Result<Dataset, CliError> {
    Ok(build_dataset(&model.schema, log, &model.outcome)?)
}

pub fn evaluated_rows(model: &AdversarialModel, data: &Dataset) -> Vec<EvaluatedRow> {
    data.instances
        .iter()
        .zip(&data.targets)
        .map(|(x, &actual)| EvaluatedRow {
            group: group_key(&model.schema, x.values()),
            actual,
            predicted: model.predict_instance(x.values()),
        })
        .collect()
}

fn check_metric(choice: MetricChoice, kind: OutcomeKind) -> Result<(), CliError> {
    let mismatch = match (choice, kind) {
        (MetricChoice::Apa, OutcomeKind::Classification) => Some("APA needs a total-time (regression) model"),
        (MetricChoice::FScore, OutcomeKind::Regression) => Some("F-score needs an occurrence (classification) model"),
        _ => None,
    };
    match mismatch {
        Some(m) => Err(fairpm_core::Error::NotApplicable(m.into()).into()),
        None => Ok(()),
    }
}

/// Scores the model on `data.test` (or `log`): per-row predictions,
/// accuracy and group rates.
pub fn evaluate(
    settings: &Settings,
    model: Option<&Path>,
    log: Option<&Path>,
) -> Result<(RunOutput, FairnessReport), CliError> {
    let config = &settings.config;
    let model_path = model_or_default(settings, model);
    let model = load_model(&model_path)?;
    check_metric(config.evaluate.metric, model.kind())?;
    let log_cfg = log.map_or_else(|| config.data.test.clone(), Path::to_path_buf);
    let mut manifest = builder(settings, "evaluate");
    manifest.input(&settings.relative(&model_path), &model_path)?;
    manifest.input(&display(&log_cfg), &settings.resolve(&log_cfg))?;
    let test = read_log(settings, &log_cfg)?;
    let data = dataset_for(&model, &test)?;
    let rows = evaluated_rows(&model, &data);
    let report = fairness::evaluate(
        &rows,
        model.kind(),
        config.evaluate.threshold,
        config.evaluate.min_support,
    )?;

    let predictions = settings.output_path("predictions.csv");
    write_with(&predictions, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["case_id", "prefix_len", "group", "actual", "predicted"])?;
        for (row, p) in rows.iter().zip(&data.provenance) {
            csv.write_record([
                p.case_id.clone(),
                p.prefix_len.to_string(),
                row.group.clone(),
                row.actual.to_string(),
                row.predicted.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let fairness_csv = settings.output_path("fairness.csv");
    write_with(&fairness_csv, |w| report.write_csv(w))?;
    let summary_path = settings.output_path("fairness_summary.txt");
    write_with(&summary_path, |w| Ok(w.write_all(report.summary().as_bytes())?))?;
    for name in ["predictions.csv", "fairness.csv", "fairness_summary.txt"] {
        manifest.output(name);
    }
    let out = finish(
        settings,
        manifest,
        vec![predictions, fairness_csv, summary_path],
        report.summary(),
    )?;
    Ok((out, report))
}

fn shapley_for(
    settings: &Settings,
    model: &AdversarialModel,
    support: &[Vec<f64>],
    background: &[Vec<f64>],
) -> Result<ShapleyReport, CliError> {
    let e = &settings.config.explain;
    let attribution = AttributionConfig {
        mode: e.mode,
        samples_per_feature: e.samples_per_feature,
        background_size: e.background_size,
        max_support: e.max_support,
        seed: settings.config.seed,
        keep_instances: e.keep_instances,
    };
    let report = aggregate_over_support(
        &buffered(model),
        &model.schema.players(),
        support,
        background,
        &attribution,
    )?;
    Ok(match model.kind() {
        OutcomeKind::Regression => report.scaled(e.display_unit.factor()),
        OutcomeKind::Classification => report,
    })
}

fn write_report(settings: &Settings, report: &ShapleyReport, stem: &str, unit: &str) -> Result<Vec<PathBuf>, CliError> {
    let csv = settings.output_path(&format!("{stem}.csv"));
    write_with(&csv, |w| report.write_csv(w))?;
    let bars = settings.output_path(&format!("{stem}_bars.txt"));
    write_with(&bars, |w| {
        writeln!(w, "unit: {unit}")?;
        Ok(w.write_all(report.render_bars(40).as_bytes())?)
    })?;
    let mut files = vec![csv, bars];
    if report.instances.is_some() {
        let rows = settings.output_path(&format!("{stem}_instances.csv"));
        write_with(&rows, |w| report.write_instances_csv(w))?;
        files.push(rows);
    }
    Ok(files)
}

/// Shapley attribution over the support log (default `data.test`) against a
/// background drawn from `data.train`. With a baseline model, also writes
/// the per-player ratio table.
pub fn explain(
    settings: &Settings,
    model: Option<&Path>,
    log: Option<&Path>,
    baseline: Option<&Path>,
) -> Result<(RunOutput, ShapleyReport), CliError> {
    let config = &settings.config;
    let model_path = model_or_default(settings, model);
    let model = load_model(&model_path)?;
    let support_cfg = log.map_or_else(|| config.data.test.clone(), Path::to_path_buf);
    let mut manifest = builder(settings, "explain");
    manifest.input(&settings.relative(&model_path), &model_path)?;
    manifest.input(&display(&config.data.train), &settings.resolve(&config.data.train))?;
    manifest.input(&display(&support_cfg), &settings.resolve(&support_cfg))?;

    let train_data = dataset_for(&model, &read_log(settings, &config.data.train)?)?;
    let support_data = dataset_for(&model, &read_log(settings, &support_cfg)?)?;
    let background = sample_rows(&train_data, config.explain.background_size, config.seed);
    let support_size = config.explain.max_support.unwrap_or(support_data.len());
    let support = sample_rows(&support_data, support_size, config.seed.wrapping_add(1));

    let unit = match model.kind() {
        OutcomeKind::Regression => format!("{:?}", config.explain.display_unit).to_lowercase(),
        OutcomeKind::Classification => "probability".to_owned(),
    };
    let report = shapley_for(settings, &model, &support, &background)?;
    let mut files = write_report(settings, &report, "shapley", &unit)?;
    for f in &files {
        manifest.output(&display(Path::new(f.file_name().expect("file name"))));
    }

    let mut summary = format!("{} support rows, base value {:.4}\n", report.support_size, report.base_value);
    if let Some(baseline_path) = baseline {
        let base_model = load_model(baseline_path)?;
        if base_model.schema.hash() != model.schema.hash() {
            return Err(CliError::Config(
                "baseline model was trained with a different feature schema".into(),
            ));
        }
        manifest.input(&settings.relative(baseline_path), baseline_path)?;
        let base_report = shapley_for(settings, &base_model, &support, &background)?;
        let mut produced = write_report(settings, &base_report, "shapley_baseline", &unit)?;
        let ratio_path = settings.output_path("ratio.csv");
        write_with(&ratio_path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record([
                "player",
                "baseline_mean_signed",
                "model_mean_signed",
                "ratio_signed",
                "baseline_mean_abs",
                "model_mean_abs",
                "ratio_abs",
            ])?;
            for p in &report.players {
                let b = base_report.get(&p.player).expect("same players");
                let signed = influence_ratio(&base_report, &report, &p.player, RatioBasis::MeanSigned)?;
                let abs = influence_ratio(&base_report, &report, &p.player, RatioBasis::MeanAbs)?;
                csv.write_record([
                    p.player.clone(),
                    b.mean_signed.to_string(),
                    p.mean_signed.to_string(),
                    signed.value.to_string(),
                    b.mean_abs.to_string(),
                    p.mean_abs.to_string(),
                    abs.value.to_string(),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        produced.push(ratio_path);
        for f in &produced {
            manifest.output(&display(Path::new(f.file_name().expect("file name"))));
        }
        for name in &config.task.protected {
            if let Ok(r) = influence_ratio(&base_report, &report, name, RatioBasis::MeanAbs) {
                summary.push_str(&format!("{name}: mean |phi| ratio {:.4}\n", r.value));
            }
        }
        files.extend(produced);
    }
    summary.push_str(&report.render_bars(40));
    let out = finish(settings, manifest, files, summary)?;
    Ok((out, report))
}

/// Writes a synthetic log and its analytic ground truth.
pub fn generate(settings: &Settings, output: Option<&Path>) -> Result<RunOutput, CliError> {
    let config = &settings.config;
    let synth = &config.generate.synth;
    let target = output.map_or_else(|| config.generate.output.clone(), Path::to_path_buf);
    let mut manifest = builder(settings, "generate");
    let log = synthlog::generate(synth)?;
    let path = settings.resolve(&target);
    write_log(settings, &log, &path)?;
    manifest.output(&display(&target));
    let truth_path = settings.output_path("ground_truth.json");
    let truth = synthlog::describe(synth);
    write_with(&truth_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &truth)?;
        Ok(w.write_all(b"\n")?)
    })?;
    manifest.output("ground_truth.json");
    let summary = format!("{} traces, {} events", log.len(), log.event_count());
    finish(settings, manifest, vec![path, truth_path], summary)
}
