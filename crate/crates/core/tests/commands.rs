use std::fs;
use std::path::Path;

use pdprog::cohort::TargetKind;
use pdprog::commands::{self, ExperimentConfig, ImportanceOptions, RunManifest};
use pdprog::featureset::FeatureSetId;
use pdprog::model::{Family, FittedModel, ModelArtifact};
use pdprog::search::{Cell, ExperimentRequest, NConfigs};
use pdprog::synthcohort::{generate_cohort, SynthSpec};
use pdprog::Error;

fn small_config(cells: Vec<Cell>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        request: ExperimentRequest {
            cells: Some(cells),
            n_configs: NConfigs { trees: 3, net: 2 },
            master_seed: 3,
            ..ExperimentRequest::default()
        },
        workers: 1,
        save_models: true,
        ..ExperimentConfig::default()
    };
    cfg.request.trees.n_estimators = (10, 60);
    cfg.request.net.epochs = 10;
    cfg
}

fn clin_cell(family: Family) -> Cell {
    Cell {
        feature_set: FeatureSetId::Clin,
        target: TargetKind::PctChange24,
        family,
    }
}

fn synth_files(dir: &Path, n: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let out = commands::cmd_synth(
        &SynthSpec {
            n_subjects: n,
            seed,
            ..SynthSpec::default()
        },
        dir,
    )
    .unwrap();
    (out.clinical, out.device)
}

#[test]
fn synth_default_writes_160_subjects_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = commands::cmd_synth(&SynthSpec::default(), &tmp.path().join("a")).unwrap();
    let b = commands::cmd_synth(&SynthSpec::default(), &tmp.path().join("b")).unwrap();
    let clinical = fs::read_to_string(&a.clinical).unwrap();
    assert_eq!(clinical.lines().count(), 161);
    for (x, y) in [
        (&a.clinical, &b.clinical),
        (&a.device, &b.device),
        (&a.truth, &b.truth),
    ] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&a.truth).unwrap()).unwrap();
    assert_eq!(truth["schema_version"], 1);
    assert_eq!(truth["informative"].as_array().unwrap().len(), 3);
}

#[test]
fn synth_rejects_zero_subjects_and_unwritable_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = SynthSpec {
        n_subjects: 0,
        ..SynthSpec::default()
    };
    assert!(commands::cmd_synth(&zero, tmp.path()).is_err());
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    assert!(matches!(
        commands::cmd_synth(&SynthSpec::default(), &blocker.join("sub")),
        Err(Error::Io(_))
    ));
}

#[test]
fn one_cell_run_writes_one_row_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (clinical, device) = synth_files(&tmp.path().join("data"), 60, 41);
    let cfg = small_config(vec![clin_cell(Family::Trees)]);
    let a = commands::cmd_run(&cfg, &clinical, &device, &tmp.path().join("a"), None).unwrap();
    let b = commands::cmd_run(&cfg, &clinical, &device, &tmp.path().join("b"), None).unwrap();
    assert!(a.complete);
    let csv = fs::read_to_string(&a.grid_csv).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("Clin,PctChange24,Trees,60,40,"));
    assert_eq!(
        fs::read(&a.grid_csv).unwrap(),
        fs::read(&b.grid_csv).unwrap()
    );

    let out = tmp.path().join("a");
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("grid.json")).unwrap()).unwrap();
    assert_eq!(grid["schema_version"], 1);
    assert_eq!(grid["manifest"], commands::MANIFEST_FILE);
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(out.join(commands::MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(manifest.master_seed, 3);
    assert_eq!(manifest.input_hashes.len(), 2);
    for f in &manifest.outputs {
        assert!(out.join(f).is_file(), "{f}");
    }
    let trials = fs::read_to_string(out.join("trials/Clin_PctChange24_Trees.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 3);
    assert_eq!(fs::read_dir(out.join("models")).unwrap().count(), 3);
}

#[test]
fn run_config_round_trips_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(vec![clin_cell(Family::Net)]);
    let path = tmp.path().join("exp.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);

    fs::write(&path, r#"{"schema_version": 99}"#).unwrap();
    assert!(matches!(
        ExperimentConfig::load(&path),
        Err(Error::Schema(_))
    ));
    fs::write(
        &path,
        r#"{"schema_version": 1, "targets": ["Score24"], "workers": 2}"#,
    )
    .unwrap();
    let partial = ExperimentConfig::load(&path).unwrap();
    assert_eq!(partial.request.targets, vec![TargetKind::Score24]);
    assert_eq!(partial.request.cells().len(), 7 * 2);
}

#[test]
fn infeasible_cell_yields_partial_grid() {
    let tmp = tempfile::tempdir().unwrap();
    // Three subjects cannot support 3 x 3 nested folds.
    let (clinical, device) = synth_files(&tmp.path().join("data"), 3, 42);
    let cfg = small_config(vec![clin_cell(Family::Trees)]);
    let out = commands::cmd_run(&cfg, &clinical, &device, &tmp.path().join("run"), None).unwrap();
    assert!(!out.complete);
    let csv = fs::read_to_string(&out.grid_csv).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",failed,"));
}

#[test]
fn importance_from_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let (clinical, device) = synth_files(&tmp.path().join("data"), 90, 43);
    let cfg = small_config(vec![clin_cell(Family::Trees)]);
    commands::cmd_run(&cfg, &clinical, &device, &tmp.path().join("run"), None).unwrap();
    let model = tmp
        .path()
        .join("run/models/Clin_PctChange24_Trees_fold0.json");
    let artifact = ModelArtifact::load(&model).unwrap();
    assert_eq!(artifact.test_subjects.len(), 30);

    let opts = ImportanceOptions {
        n_repeats: 5,
        seed: 1,
        workers: 1,
        all_subjects: false,
    };
    let out = tmp.path().join("imp");
    let report = commands::cmd_importance(&model, &clinical, &device, &out, &opts).unwrap();
    assert_eq!(
        report.features.len(),
        artifact.preprocessor.output_columns().len()
    );
    let full = fs::read_to_string(out.join("importance.csv")).unwrap();
    let top = fs::read_to_string(out.join("importance_top15.csv")).unwrap();
    assert_eq!(full.lines().count(), 1 + report.features.len());
    assert_eq!(top.lines().count(), 1 + 15);
    // Features the tree model never reads score exactly zero.
    if let FittedModel::Trees(m) = &artifact.model {
        let used = m.used_features();
        for (j, f) in report.features.iter().enumerate() {
            if !used.contains(&j) {
                assert_eq!(f.mean_delta_r2, 0.0, "{}", f.feature);
            }
        }
    }

    let again = tmp.path().join("imp2");
    commands::cmd_importance(&model, &clinical, &device, &again, &opts).unwrap();
    assert_eq!(
        fs::read(out.join("importance.csv")).unwrap(),
        fs::read(again.join("importance.csv")).unwrap()
    );

    assert!(commands::cmd_importance(
        &tmp.path().join("missing.json"),
        &clinical,
        &device,
        &out,
        &opts
    )
    .is_err());
}

#[test]
fn importance_rejects_mismatched_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let (clinical, device) = synth_files(&tmp.path().join("data"), 60, 44);
    let cfg = small_config(vec![clin_cell(Family::Trees)]);
    commands::cmd_run(&cfg, &clinical, &device, &tmp.path().join("run"), None).unwrap();
    let path = tmp
        .path()
        .join("run/models/Clin_PctChange24_Trees_fold0.json");
    let mut artifact = ModelArtifact::load(&path).unwrap();
    artifact.preprocessor.input_columns[0] = "not_a_column".into();
    fs::write(&path, serde_json::to_string(&artifact).unwrap()).unwrap();
    let err = commands::cmd_importance(
        &path,
        &clinical,
        &device,
        &tmp.path().join("imp"),
        &ImportanceOptions::default(),
    );
    assert!(matches!(err, Err(Error::Schema(_))));
}

#[test]
fn progression_reports_every_visit() {
    let tmp = tempfile::tempdir().unwrap();
    let (clinical, device) = synth_files(&tmp.path().join("data"), 160, 0);
    let summary = commands::cmd_progression(&clinical, &device, &tmp.path().join("prog")).unwrap();
    assert_eq!(summary.visits.len(), 5);
    assert_eq!(
        summary
            .comparisons
            .iter()
            .map(|c| c.month)
            .collect::<Vec<_>>(),
        vec![6, 12, 18, 24]
    );
    for c in &summary.comparisons {
        assert_eq!(c.test.df, 159);
    }
    let tests = fs::read_to_string(tmp.path().join("prog/progression_tests.csv")).unwrap();
    assert!(tests.starts_with("month,vs_month,n_pairs,mean_difference,t,df,p\n"));
}

#[test]
fn progression_with_identical_visits_has_p_one() {
    let mut cohort = generate_cohort(&SynthSpec {
        n_subjects: 10,
        seed: 45,
        ..SynthSpec::default()
    })
    .unwrap();
    for s in &mut cohort.subjects {
        let b = s.score(0).unwrap();
        for v in &mut s.visits {
            v.part3_total = Some(b);
        }
    }
    let summary = commands::progression_summary(&cohort).unwrap();
    for c in &summary.comparisons {
        assert_eq!((c.test.t, c.test.p), (0.0, 1.0));
    }
}

#[test]
fn progression_needs_two_subjects() {
    let cohort = generate_cohort(&SynthSpec {
        n_subjects: 1,
        seed: 46,
        ..SynthSpec::default()
    })
    .unwrap();
    assert!(commands::progression_summary(&cohort).is_err());
}

#[test]
fn progression_needs_interim_visits() {
    let mut cohort = generate_cohort(&SynthSpec {
        n_subjects: 5,
        seed: 47,
        ..SynthSpec::default()
    })
    .unwrap();
    for s in &mut cohort.subjects {
        s.visits.retain(|v| v.month != 12);
    }
    assert!(commands::progression_summary(&cohort).is_err());
}
