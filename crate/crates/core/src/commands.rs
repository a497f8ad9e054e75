//! File-level entry points behind the `pdprog` subcommands.
//!
//! Each command writes its outputs plus a `manifest.json` into an output
//! directory. Result files reference the manifest by name and contain no
//! timestamps, so reruns with the same inputs and seed are byte-identical
//! regardless of worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{self, Cohort, ParsedCohort, VISIT_MONTHS};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::featureset::build_feature_set;
use crate::metrics::{self, ImportanceReport, TTest};
use crate::model::{FittedModel, ModelArtifact, SCHEMA_VERSION};
use crate::search::{self, CellResult, ExperimentRequest, ModelConfig, ResultGrid, TrialStatus};
use crate::synthcohort::{self, SynthSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOP_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_path: Option<String>,
    pub master_seed: u64,
    pub tool_version: String,
    /// File name -> sha256 of every input file.
    pub input_hashes: BTreeMap<String, String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub workers: usize,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(
        command: &str,
        config_path: Option<&Path>,
        master_seed: u64,
        workers: usize,
        inputs: &[&Path],
    ) -> Result<Self> {
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            input_hashes.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            workers,
            outputs: Vec::new(),
        })
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        write_json(&out_dir.join(MANIFEST_FILE), self)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn load_cohort(clinical: &Path, device: &Path) -> Result<ParsedCohort> {
    let c = fs::File::open(clinical)?;
    let d = fs::File::open(device)?;
    cohort::parse_cohort(std::io::BufReader::new(c), std::io::BufReader::new(d))
}

pub fn write_cohort(cohort: &Cohort, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    create_dir(out_dir)?;
    let clinical = out_dir.join("clinical.csv");
    let device = out_dir.join("device.csv");
    cohort::write_clinical_csv(cohort, BufWriter::new(fs::File::create(&clinical)?))?;
    cohort::write_device_csv(cohort, BufWriter::new(fs::File::create(&device)?))?;
    Ok((clinical, device))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub clinical: PathBuf,
    pub device: PathBuf,
    pub truth: PathBuf,
}

pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    let truth = synthcohort::planted_truth(spec)?;
    let cohort = synthcohort::generate_cohort(spec)?;
    let (clinical, device) = write_cohort(&cohort, out_dir)?;
    let truth_path = out_dir.join("truth.json");
    write_json(
        &truth_path,
        &Versioned {
            schema_version: SCHEMA_VERSION,
            body: truth,
        },
    )?;
    write_json(
        &out_dir.join("spec.json"),
        &Versioned {
            schema_version: SCHEMA_VERSION,
            body: spec.clone(),
        },
    )?;
    Ok(SynthOutput {
        clinical,
        device,
        truth: truth_path,
    })
}

pub fn load_synth_spec(path: &Path) -> Result<SynthSpec> {
    let v: Versioned<SynthSpec> =
        serde_json::from_str(&fs::read_to_string(path)?).or_else(|_| {
            serde_json::from_str::<SynthSpec>(&fs::read_to_string(path)?)
                .map(|body| Versioned {
                    schema_version: SCHEMA_VERSION,
                    body,
                })
                .map_err(Error::from)
        })?;
    check_schema(v.schema_version)?;
    Ok(v.body)
}

fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Experiment configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(flatten)]
    pub request: ExperimentRequest,
    /// 0 = one per core.
    pub workers: usize,
    /// Write the refit model of every outer fold under `models/`.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            request: ExperimentRequest::default(),
            workers: 0,
            save_models: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        check_schema(cfg.schema_version)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub selected_trial: Option<usize>,
    pub inner_mean_r2: Option<f64>,
    pub test_r2: Option<f64>,
    pub config: Option<ModelConfig>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub feature_set: String,
    pub target: String,
    pub family: String,
    pub n_subjects: usize,
    pub n_features: usize,
    pub mean_test_r2: Option<f64>,
    pub std_test_r2: Option<f64>,
    pub ppv: Option<f64>,
    pub status: String,
    pub error: Option<String>,
    pub folds: Vec<FoldSummary>,
}

fn cell_status(c: &CellResult) -> &'static str {
    match (&c.error, &c.result) {
        (None, Some(r)) if !r.partial => "ok",
        (None, Some(_)) => "partial",
        _ => "failed",
    }
}

fn summarize(c: &CellResult) -> CellSummary {
    CellSummary {
        feature_set: c.cell.feature_set.to_string(),
        target: c.cell.target.to_string(),
        family: c.cell.family.to_string(),
        n_subjects: c.n_subjects,
        n_features: c.n_features,
        mean_test_r2: c.result.as_ref().and_then(|r| r.mean_test_r2),
        std_test_r2: c.result.as_ref().and_then(|r| r.std_test_r2),
        ppv: c.ppv,
        status: cell_status(c).to_string(),
        error: c.error.clone(),
        folds: c
            .result
            .iter()
            .flat_map(|r| &r.folds)
            .map(|f| FoldSummary {
                fold: f.fold,
                n_train: f.train_rows.len(),
                n_test: f.test_rows.len(),
                selected_trial: f.selected_trial,
                inner_mean_r2: f.inner_mean_r2,
                test_r2: f.test_r2,
                config: f.selected_config.clone(),
                error: f.error.clone(),
            })
            .collect(),
    }
}

const GRID_COLUMNS: [&str; 20] = [
    "feature_set",
    "target",
    "family",
    "n_subjects",
    "n_features",
    "mean_test_r2",
    "std_test_r2",
    "ppv",
    "status",
    "n_estimators",
    "max_depth",
    "l1",
    "l2",
    "learning_rate",
    "n_layers",
    "base_width",
    "taper",
    "taper_size",
    "dropout_rate",
    "activation",
];

fn config_fields(cfg: Option<&ModelConfig>) -> [String; 11] {
    let mut f: [String; 11] = Default::default();
    match cfg {
        Some(ModelConfig::Trees(c)) => {
            f[0] = c.n_estimators.to_string();
            f[1] = c.max_depth.to_string();
            f[2] = c.l1.to_string();
            f[3] = c.l2.to_string();
            f[4] = c.learning_rate.to_string();
        }
        Some(ModelConfig::Net(c)) => {
            f[4] = c.learning_rate.to_string();
            f[5] = c.n_layers.to_string();
            f[6] = c.base_width.to_string();
            f[7] = c.taper.to_string();
            f[8] = c.taper_size.to_string();
            f[9] = c.dropout_rate.to_string();
            f[10] = c.activation.name().to_string();
        }
        None => {}
    }
    f
}

/// One row per cell; the config columns hold the selected configuration
/// with the highest inner score across outer folds.
pub fn write_grid_csv<W: Write>(grid: &ResultGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_COLUMNS)?;
    for c in &grid.cells {
        let s = summarize(c);
        let mut row = vec![
            s.feature_set,
            s.target,
            s.family,
            s.n_subjects.to_string(),
            s.n_features.to_string(),
            opt(s.mean_test_r2),
            opt(s.std_test_r2),
            opt(s.ppv),
            s.status,
        ];
        row.extend(config_fields(
            c.result.as_ref().and_then(|r| r.best_config()),
        ));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trial_log(c: &CellResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record([
        "outer_fold",
        "trial",
        "status",
        "mean_inner_r2",
        "inner_r2",
        "selected",
        "config",
    ])?;
    for f in c.result.iter().flat_map(|r| &r.folds) {
        for t in &f.trials {
            let status = match &t.status {
                TrialStatus::Ok => "ok".to_string(),
                TrialStatus::Failed(e) => format!("failed: {e}"),
            };
            let inner: Vec<String> = t.inner_r2.iter().map(f64::to_string).collect();
            w.write_record([
                f.fold.to_string(),
                t.index.to_string(),
                status,
                if t.mean_inner_r2.is_finite() {
                    t.mean_inner_r2.to_string()
                } else {
                    String::new()
                },
                inner.join(";"),
                (f.selected_trial == Some(t.index)).to_string(),
                serde_json::to_string(&t.config)?,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridFile<'a> {
    schema_version: u32,
    manifest: &'a str,
    excluded_subjects: usize,
    cells: Vec<CellSummary>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub grid: ResultGrid,
    pub complete: bool,
    pub grid_csv: PathBuf,
}

pub fn cmd_run(
    config: &ExperimentConfig,
    clinical: &Path,
    device: &Path,
    out_dir: &Path,
    config_path: Option<&Path>,
) -> Result<RunOutcome> {
    check_schema(config.schema_version)?;
    let parsed = load_cohort(clinical, device)?;
    let exec = Executor::new(config.workers)?;
    let grid = search::run_experiment(&parsed.cohort, &config.request, &exec);

    create_dir(out_dir)?;
    let mut manifest = RunManifest::new(
        "run",
        config_path,
        config.request.master_seed,
        exec.workers(),
        &[clinical, device],
    )?;
    let grid_csv = out_dir.join("grid.csv");
    write_grid_csv(&grid, BufWriter::new(fs::File::create(&grid_csv)?))?;
    write_json(
        &out_dir.join("grid.json"),
        &GridFile {
            schema_version: SCHEMA_VERSION,
            manifest: MANIFEST_FILE,
            excluded_subjects: parsed.warning_count(),
            cells: grid.cells.iter().map(summarize).collect(),
        },
    )?;
    manifest
        .outputs
        .extend(["grid.csv".to_string(), "grid.json".to_string()]);

    let trials_dir = out_dir.join("trials");
    create_dir(&trials_dir)?;
    for c in &grid.cells {
        let name = format!("trials/{}.csv", c.cell.label());
        write_trial_log(c, &out_dir.join(&name))?;
        manifest.outputs.push(name);
    }

    if config.save_models {
        create_dir(&out_dir.join("models"))?;
        for c in &grid.cells {
            for f in c.result.iter().flat_map(|r| &r.folds) {
                let Some(fitted) = &f.fitted else { continue };
                let artifact = ModelArtifact {
                    schema_version: SCHEMA_VERSION,
                    feature_set: c.cell.feature_set,
                    target: c.cell.target,
                    outer_fold: f.fold,
                    preprocessor: fitted.preprocessor.clone(),
                    model: fitted.model.clone(),
                    test_subjects: f.test_rows.iter().map(|&r| c.subjects[r].clone()).collect(),
                };
                let name = format!("models/{}_fold{}.json", c.cell.label(), f.fold);
                write_json(&out_dir.join(&name), &artifact)?;
                manifest.outputs.push(name);
            }
        }
    }
    manifest.write(out_dir)?;
    Ok(RunOutcome {
        complete: grid.is_complete(),
        grid,
        grid_csv,
    })
}

// ---------------------------------------------------------------------------
// importance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ImportanceOptions {
    pub n_repeats: usize,
    pub seed: u64,
    pub workers: usize,
    /// Score every subject instead of the artifact's held-out subjects.
    pub all_subjects: bool,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            n_repeats: metrics::DEFAULT_REPEATS,
            seed: 0,
            workers: 0,
            all_subjects: false,
        }
    }
}

pub fn cmd_importance(
    model_path: &Path,
    clinical: &Path,
    device: &Path,
    out_dir: &Path,
    opts: &ImportanceOptions,
) -> Result<ImportanceReport> {
    let artifact = ModelArtifact::load(model_path)?;
    let parsed = load_cohort(clinical, device)?;
    let matrix = build_feature_set(&parsed.cohort, artifact.feature_set)?;
    let (matrix, y) = matrix.with_targets(&parsed.cohort, artifact.target);
    if matrix.column_names != artifact.preprocessor.input_columns {
        return Err(Error::Schema(format!(
            "model expects {} input columns for {}, data provides {}",
            artifact.preprocessor.input_columns.len(),
            artifact.feature_set,
            matrix.n_cols()
        )));
    }
    let rows: Vec<usize> = if opts.all_subjects || artifact.test_subjects.is_empty() {
        (0..matrix.n_rows()).collect()
    } else {
        let wanted: std::collections::HashSet<&str> =
            artifact.test_subjects.iter().map(String::as_str).collect();
        (0..matrix.n_rows())
            .filter(|&r| wanted.contains(matrix.rows[r].as_str()))
            .collect()
    };
    if rows.len() < 5 {
        return Err(Error::Empty(format!(
            "{} scoring rows (need at least 5)",
            rows.len()
        )));
    }
    let x = artifact
        .preprocessor
        .transform(&matrix.values.select_rows(&rows))?;
    let y: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let exec = Executor::new(opts.workers)?;
    let model: &FittedModel = &artifact.model;
    let report = metrics::permutation_importance(
        model,
        &x,
        &y,
        &artifact.preprocessor.output_columns(),
        opts.n_repeats,
        opts.seed,
        &exec,
    )?;

    create_dir(out_dir)?;
    let mut manifest = RunManifest::new(
        "importance",
        Some(model_path),
        opts.seed,
        exec.workers(),
        &[model_path, clinical, device],
    )?;
    report.write_csv(
        BufWriter::new(fs::File::create(out_dir.join("importance.csv"))?),
        None,
    )?;
    report.write_csv(
        BufWriter::new(fs::File::create(out_dir.join("importance_top15.csv"))?),
        Some(TOP_FEATURES),
    )?;
    write_json(
        &out_dir.join("importance.json"),
        &Versioned {
            schema_version: SCHEMA_VERSION,
            body: serde_json::json!({ "manifest": MANIFEST_FILE, "report": &report }),
        },
    )?;
    manifest.outputs = vec![
        "importance.csv".into(),
        "importance_top15.csv".into(),
        "importance.json".into(),
    ];
    manifest.write(out_dir)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// progression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitStats {
    pub month: u32,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitComparison {
    pub month: u32,
    pub n_pairs: usize,
    pub mean_difference: f64,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionSummary {
    pub visits: Vec<VisitStats>,
    /// Each follow-up visit against baseline.
    pub comparisons: Vec<VisitComparison>,
}

pub fn progression_summary(cohort: &Cohort) -> Result<ProgressionSummary> {
    let mut visits = Vec::new();
    for &month in &VISIT_MONTHS {
        let scores: Vec<f64> = cohort
            .subjects
            .iter()
            .filter_map(|s| s.score(month))
            .collect();
        if scores.is_empty() {
            return Err(Error::Empty(format!("no scores at month {month}")));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let sd = if scores.len() > 1 {
            (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        visits.push(VisitStats {
            month,
            n: scores.len(),
            mean,
            sd,
        });
    }
    let mut comparisons = Vec::new();
    for &month in &VISIT_MONTHS[1..] {
        let (later, base): (Vec<f64>, Vec<f64>) = cohort
            .subjects
            .iter()
            .filter_map(|s| Some((s.score(month)?, s.score(0)?)))
            .unzip();
        let test = metrics::paired_t_test(&later, &base)?;
        comparisons.push(VisitComparison {
            month,
            n_pairs: later.len(),
            mean_difference: later.iter().zip(&base).map(|(a, b)| a - b).sum::<f64>()
                / later.len() as f64,
            test,
        });
    }
    Ok(ProgressionSummary {
        visits,
        comparisons,
    })
}

pub fn cmd_progression(
    clinical: &Path,
    device: &Path,
    out_dir: &Path,
) -> Result<ProgressionSummary> {
    let parsed = load_cohort(clinical, device)?;
    let summary = progression_summary(&parsed.cohort)?;
    create_dir(out_dir)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(
        out_dir.join("progression_visits.csv"),
    )?));
    w.write_record(["month", "n", "mean", "sd"])?;
    for v in &summary.visits {
        w.write_record([
            v.month.to_string(),
            v.n.to_string(),
            v.mean.to_string(),
            v.sd.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(
        out_dir.join("progression_tests.csv"),
    )?));
    w.write_record([
        "month",
        "vs_month",
        "n_pairs",
        "mean_difference",
        "t",
        "df",
        "p",
    ])?;
    for c in &summary.comparisons {
        w.write_record([
            c.month.to_string(),
            "0".to_string(),
            c.n_pairs.to_string(),
            c.mean_difference.to_string(),
            c.test.t.to_string(),
            c.test.df.to_string(),
            c.test.p.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(
        &out_dir.join("progression.json"),
        &Versioned {
            schema_version: SCHEMA_VERSION,
            body: serde_json::json!({ "manifest": MANIFEST_FILE, "summary": &summary }),
        },
    )?;
    let mut manifest = RunManifest::new("progression", None, 0, 1, &[clinical, device])?;
    manifest.outputs = vec![
        "progression_visits.csv".into(),
        "progression_tests.csv".into(),
        "progression.json".into(),
    ];
    manifest.write(out_dir)?;
    Ok(summary)
}
