use std::collections::BTreeMap;

use pdprog::cohort::TargetKind;
use pdprog::featureset::{build_feature_set, FeatureSetId};
use pdprog::metrics::r2;
use pdprog::model::Family;
use pdprog::nnet::{train_net, Activation, NetConfig, NetModel, WIDTH_CHOICES};
use pdprog::search::{sample_config, ModelConfig, SearchSpace};
use pdprog::seed;
use pdprog::synthcohort::{generate_cohort, planted_truth, SynthSpec};
use pdprog::Matrix;
use rand::Rng;

/// R² of the planted linear predictor, recovered from the clinical columns,
/// against the generated percent change.
fn planted_r2(target_r2: f64) -> f64 {
    let spec = SynthSpec {
        n_subjects: 10_000,
        target_r2,
        seed: 31,
        ..SynthSpec::default()
    };
    let truth = planted_truth(&spec).unwrap();
    let cohort = generate_cohort(&spec).unwrap();
    let fm = build_feature_set(&cohort, FeatureSetId::Clin).unwrap();
    let (fm, y) = fm.with_targets(&cohort, TargetKind::PctChange24);
    let signal: Vec<f64> = (0..fm.n_rows())
        .map(|r| {
            truth.pct_change_mean
                + truth
                    .informative
                    .iter()
                    .map(|f| {
                        let c = fm
                            .column_names
                            .iter()
                            .position(|n| n == &f.feature)
                            .unwrap();
                        // Subscores are 1 + 0.8 z.
                        f.weight * (fm.values.get(r, c) - 1.0) / 0.8
                    })
                    .sum::<f64>()
        })
        .collect();
    r2(&y, &signal).unwrap()
}

#[test]
fn synthetic_signal_hits_the_requested_r2() {
    let high = planted_r2(0.999);
    assert!(high >= 0.95, "{high}");
    let half = planted_r2(0.5);
    assert!((half - 0.5).abs() <= 0.05, "{half}");
}

#[test]
fn null_target_is_unrelated_to_the_planted_columns() {
    let spec = SynthSpec {
        n_subjects: 4000,
        null_target: true,
        seed: 32,
        ..SynthSpec::default()
    };
    assert!(planted_truth(&spec).unwrap().informative.is_empty());
    let cohort = generate_cohort(&spec).unwrap();
    let fm = build_feature_set(&cohort, FeatureSetId::Clin).unwrap();
    let (fm, y) = fm.with_targets(&cohort, TargetKind::PctChange24);
    let bound = 4.0 / (fm.n_rows() as f64).sqrt();
    for c in 0..fm.n_cols() {
        let r = pdprog::featureset::pearson_r(&fm.values.column(c), &y).unwrap_or(0.0);
        if fm.column_names[c] != pdprog::cohort::BASELINE_COLUMN {
            assert!(r.abs() < bound, "{} r = {r}", fm.column_names[c]);
        }
    }
}

#[test]
fn one_layer_net_learns_a_linear_map() {
    let mut rng = seed::rng(33);
    let n = 200;
    let x = Matrix::new(n, 1, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = x.as_slice().iter().map(|v| 2.0 * v).collect();
    let cfg = NetConfig {
        n_layers: 1,
        base_width: 16,
        dropout_rate: 0.0,
        activation: Activation::Elu,
        learning_rate: 0.005,
        epochs: 300,
        patience: 300,
        seed: 3,
        ..NetConfig::default()
    };
    let trained = train_net(&x, &y, &cfg).unwrap();
    let fit = r2(&y, &trained.model.predict(&x).unwrap()).unwrap();
    assert!(fit >= 0.99, "training R2 {fit}");
    assert!(trained.loss_trace.last().unwrap() < &trained.loss_trace[0]);
}

#[test]
fn dropout_masks_keep_activations_unbiased() {
    let cfg = NetConfig {
        n_layers: 2,
        base_width: 64,
        dropout_rate: 0.6,
        ..NetConfig::default()
    };
    let net = NetModel::build(&cfg, 3).unwrap();
    let masks = net.sample_masks(500, &mut seed::rng(34));
    for layer in masks {
        let mean = layer.iter().sum::<f64>() / layer.len() as f64;
        let dropped = layer.iter().filter(|&&m| m == 0.0).count() as f64 / layer.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        assert!((dropped - 0.6).abs() < 0.02, "{dropped}");
    }
}

#[test]
fn net_sampler_frequencies() {
    let space = SearchSpace::new(Family::Net);
    let mut rng = seed::rng(35);
    let draws = 10_000;
    let mut tapered = 0;
    let mut widths: BTreeMap<usize, usize> = BTreeMap::new();
    let mut acts: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..draws {
        let ModelConfig::Net(c) = sample_config(&space, &mut rng) else {
            panic!("net space produced a tree config");
        };
        tapered += usize::from(c.taper);
        *widths.entry(c.base_width).or_default() += 1;
        *acts.entry(c.activation.name()).or_default() += 1;
        assert!((1..=5).contains(&c.n_layers));
        assert!((0.1..=0.9).contains(&c.dropout_rate));
        assert!((1e-4..=5e-3).contains(&c.learning_rate));
    }
    let f = tapered as f64 / draws as f64;
    assert!((f - 0.5).abs() <= 0.03, "taper frequency {f}");
    assert_eq!(widths.len(), WIDTH_CHOICES.len());
    for (w, n) in widths {
        let f = n as f64 / draws as f64;
        assert!((f - 0.125).abs() <= 0.02, "width {w}: {f}");
    }
    assert_eq!(acts.len(), 6);
}

#[test]
fn tree_sampler_covers_open_intervals_log_uniformly() {
    let space = SearchSpace::new(Family::Trees);
    let mut rng = seed::rng(36);
    let mut below_001 = 0;
    for _ in 0..10_000 {
        let ModelConfig::Trees(c) = sample_config(&space, &mut rng) else {
            panic!("tree space produced a net config");
        };
        assert!(c.l1 > 0.0 && c.l1 < 1.0 && c.l2 > 0.0 && c.l2 < 1.0);
        assert!((10..=1000).contains(&c.n_estimators));
        assert!((5..=50).contains(&c.max_depth));
        assert!((1e-4..=0.4).contains(&c.learning_rate));
        below_001 += usize::from(c.l1 < 0.01);
    }
    // Log-uniform on [1e-4, 1): half the mass lies below 1e-2.
    let f = below_001 as f64 / 10_000.0;
    assert!((f - 0.5).abs() < 0.03, "{f}");
}
