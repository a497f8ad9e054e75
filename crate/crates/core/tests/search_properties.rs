use pdprog::cohort::TargetKind;
use pdprog::exec::Executor;
use pdprog::featureset::{build_feature_set, FeatureMatrix, FeatureSetId};
use pdprog::model::Family;
use pdprog::search::{nested_cv, stratified_folds, CvOptions, SearchSpace};
use pdprog::synthcohort::{generate_cohort, SynthSpec};
use proptest::prelude::*;

fn small_problem(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let cohort = generate_cohort(&SynthSpec {
        n_subjects: n,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    build_feature_set(&cohort, FeatureSetId::Clin)
        .unwrap()
        .with_targets(&cohort, TargetKind::PctChange24)
}

fn tree_space(n: usize) -> SearchSpace {
    let mut s = SearchSpace::new(Family::Trees).with_configs(n);
    s.trees.n_estimators = (10, 40);
    s.trees.max_depth = (5, 8);
    s
}

fn net_space(n: usize) -> SearchSpace {
    let mut s = SearchSpace::new(Family::Net).with_configs(n);
    s.net.epochs = 15;
    s.net.n_layers = (1, 2);
    s.net.widths = vec![16, 32];
    s
}

#[test]
fn perturbing_outer_test_rows_does_not_change_selection() {
    let (x, y) = small_problem(60, 21);
    let exec = Executor::serial();
    for space in [tree_space(4), net_space(3)] {
        let a = nested_cv(&x, &y, &space, &CvOptions::default(), 5, &[1, 2, 3], &exec).unwrap();
        // Scramble every feature of fold 0's held-out subjects.
        let mut x2 = x.clone();
        for &r in &a.folds[0].test_rows {
            for c in 0..x2.n_cols() {
                let v = x2.values.get(r, c);
                x2.values.set(r, c, -3.0 * v + 1000.0);
            }
        }
        let b = nested_cv(&x2, &y, &space, &CvOptions::default(), 5, &[1, 2, 3], &exec).unwrap();
        assert_eq!(a.folds[0].test_rows, b.folds[0].test_rows);
        assert_eq!(a.folds[0].trials, b.folds[0].trials);
        assert_eq!(a.folds[0].selected_config, b.folds[0].selected_config);
        assert_eq!(a.folds[0].fitted, b.folds[0].fitted);
        // The test score itself is what moves.
        assert_ne!(a.folds[0].test_predictions, b.folds[0].test_predictions);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (x, y) = small_problem(48, 22);
    for space in [tree_space(5), net_space(3)] {
        let serial = nested_cv(
            &x,
            &y,
            &space,
            &CvOptions::default(),
            9,
            &[4],
            &Executor::serial(),
        )
        .unwrap();
        let pooled = nested_cv(
            &x,
            &y,
            &space,
            &CvOptions::default(),
            9,
            &[4],
            &Executor::new(3).unwrap(),
        )
        .unwrap();
        assert_eq!(serial, pooled);
    }
}

#[test]
fn different_cells_draw_different_configs() {
    let (x, y) = small_problem(40, 23);
    let space = tree_space(3);
    let a = nested_cv(
        &x,
        &y,
        &space,
        &CvOptions::default(),
        9,
        &[0, 0, 0],
        &Executor::serial(),
    )
    .unwrap();
    let b = nested_cv(
        &x,
        &y,
        &space,
        &CvOptions::default(),
        9,
        &[0, 0, 1],
        &Executor::serial(),
    )
    .unwrap();
    assert_ne!(a.folds[0].trials[0].config, b.folds[0].trials[0].config);
}

/// Bin of the value at sorted position `rank`, mirroring the quantile cut.
fn rank_bin(rank: usize, n: usize, bins: usize) -> usize {
    (1..bins).filter(|&b| rank >= b * n / bins).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn folds_are_balanced_within_every_quantile_bin(
        raw in proptest::collection::vec(-1e6f64..1e6, 6..250),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut y = raw;
        y.sort_by(f64::total_cmp);
        y.dedup();
        prop_assume!(y.len() >= k);
        // Shuffle deterministically so row order is unrelated to value.
        let n = y.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7919 + 13) % n).collect();
        prop_assume!({ let mut p = perm.clone(); p.sort_unstable(); p.dedup(); p.len() == n });
        let rows: Vec<f64> = perm.iter().map(|&i| y[i]).collect();

        let folds = stratified_folds(&rows, k, 5, seed).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

        let bins = 5.min(n / k).max(1);
        for b in 0..bins {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&r| rank_bin(perm[r], n, bins) == b).count())
                .collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "bin {} counts {:?}", b, counts);
        }
    }
}
