//! Random hyperparameter search inside nested, stratified cross-validation.
//!
//! For each outer fold, configurations are sampled afresh, scored by mean R²
//! over inner folds built on the outer-training rows only, and the winner is
//! refit on the whole outer-training partition and scored on the outer test
//! partition. Feature imputation, pruning and scaling are refit on whatever
//! rows a model is trained on.
//!
//! All randomness is derived from `(master seed, cell, fold, trial)`, so the
//! results are identical for any worker count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, TargetKind, DEFAULT_FAST_THRESHOLD};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::featureset::{
    build_feature_set, FeatureMatrix, FeatureSetId, Preprocessor, DEFAULT_PRUNE_THRESHOLD,
};
use crate::gbt::{GbtConfig, GbtModel};
use crate::matrix::Matrix;
use crate::metrics;
use crate::model::{Family, FittedModel, Regressor};
use crate::nnet::{self, Activation, NetConfig};
use crate::seed;

// Seed-path tags, so the different random streams of one fold never collide.
const TAG_OUTER: u64 = 1;
const TAG_INNER: u64 = 2;
const TAG_SAMPLE: u64 = 3;
const TAG_TRIAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSpace {
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    /// Open interval; sampled log-uniformly from `l1.0` up to (excluding) `l1.1`.
    pub l1: (f64, f64),
    pub l2: (f64, f64),
    pub learning_rate: (f64, f64),
}

impl Default for TreeSpace {
    fn default() -> Self {
        Self {
            n_estimators: (10, 1000),
            max_depth: (5, 50),
            l1: (1e-4, 1.0),
            l2: (1e-4, 1.0),
            learning_rate: (1e-4, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSpace {
    pub n_layers: (usize, usize),
    pub widths: Vec<usize>,
    pub taper_probability: f64,
    pub taper_sizes: Vec<f64>,
    pub dropout: (f64, f64),
    pub activations: Vec<Activation>,
    pub learning_rate: (f64, f64),
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for NetSpace {
    fn default() -> Self {
        Self {
            n_layers: (1, 5),
            widths: nnet::WIDTH_CHOICES.to_vec(),
            taper_probability: 0.5,
            taper_sizes: nnet::TAPER_SIZES.to_vec(),
            dropout: (0.1, 0.9),
            activations: Activation::ALL.to_vec(),
            learning_rate: (1e-4, 5e-3),
            epochs: 200,
            batch_size: 16,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: Family,
    pub n_configs: usize,
    pub trees: TreeSpace,
    pub net: NetSpace,
}

impl SearchSpace {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            n_configs: match family {
                Family::Trees => 1000,
                Family::Net => 300,
            },
            trees: TreeSpace::default(),
            net: NetSpace::default(),
        }
    }

    pub fn with_configs(mut self, n: usize) -> Self {
        self.n_configs = n;
        self
    }

    fn validate(&self) -> Result<()> {
        let t = &self.trees;
        let n = &self.net;
        let ok = self.n_configs > 0
            && t.n_estimators.0 <= t.n_estimators.1
            && t.max_depth.0 <= t.max_depth.1
            && 0.0 < t.l1.0
            && t.l1.0 < t.l1.1
            && 0.0 < t.l2.0
            && t.l2.0 < t.l2.1
            && 0.0 < t.learning_rate.0
            && t.learning_rate.0 <= t.learning_rate.1
            && 1 <= n.n_layers.0
            && n.n_layers.0 <= n.n_layers.1
            && !n.widths.is_empty()
            && !n.taper_sizes.is_empty()
            && !n.activations.is_empty()
            && (0.0..=1.0).contains(&n.taper_probability)
            && 0.0 <= n.dropout.0
            && n.dropout.0 <= n.dropout.1
            && n.dropout.1 < 1.0
            && 0.0 < n.learning_rate.0
            && n.learning_rate.0 <= n.learning_rate.1
            && n.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid {} search space",
                self.family
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "config")]
pub enum ModelConfig {
    Trees(GbtConfig),
    Net(NetConfig),
}

impl ModelConfig {
    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Trees(_) => Family::Trees,
            ModelConfig::Net(_) => Family::Net,
        }
    }

    pub fn with_seed(mut self, s: u64) -> Self {
        match &mut self {
            ModelConfig::Trees(c) => c.seed = s,
            ModelConfig::Net(c) => c.seed = s,
        }
        self
    }

    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<FittedModel> {
        match self {
            ModelConfig::Trees(c) => GbtModel::fit(x, y, c).map(FittedModel::Trees),
            ModelConfig::Net(c) => nnet::train_net(x, y, c).map(|t| FittedModel::Net(t.model)),
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..hi.ln()).exp().clamp(lo, hi)
}

fn pick<R: Rng, T: Copy>(rng: &mut R, items: &[T]) -> T {
    items[rng.gen_range(0..items.len())]
}

/// One random configuration. Integers are uniform inclusive; learning rates
/// and regularization terms are log-uniform; categoricals uniform.
pub fn sample_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> ModelConfig {
    match space.family {
        Family::Trees => {
            let t = &space.trees;
            ModelConfig::Trees(GbtConfig {
                n_estimators: rng.gen_range(t.n_estimators.0..=t.n_estimators.1),
                max_depth: rng.gen_range(t.max_depth.0..=t.max_depth.1),
                // half-open draws keep the upper end of (0, 1) excluded
                l1: rng.gen_range(t.l1.0.ln()..t.l1.1.ln()).exp(),
                l2: rng.gen_range(t.l2.0.ln()..t.l2.1.ln()).exp(),
                learning_rate: log_uniform(rng, t.learning_rate),
                seed: 0,
            })
        }
        Family::Net => {
            let n = &space.net;
            ModelConfig::Net(NetConfig {
                n_layers: rng.gen_range(n.n_layers.0..=n.n_layers.1),
                base_width: pick(rng, &n.widths),
                taper: rng.gen_bool(n.taper_probability),
                taper_size: pick(rng, &n.taper_sizes),
                dropout_rate: if n.dropout.0 == n.dropout.1 {
                    n.dropout.0
                } else {
                    rng.gen_range(n.dropout.0..=n.dropout.1)
                },
                activation: pick(rng, &n.activations),
                learning_rate: log_uniform(rng, n.learning_rate),
                epochs: n.epochs,
                batch_size: n.batch_size,
                patience: n.patience,
                seed: 0,
            })
        }
    }
}

/// Quantile-binned stratified k-fold for a continuous target.
///
/// Targets are cut into `n_bins` quantile bins (fewer when `n < k * n_bins`;
/// tied values always share a bin). Within each bin the indices are shuffled
/// and dealt round-robin, the dealing position carrying over between bins.
/// Returns `k` sorted, disjoint index sets covering `0..y.len()`.
pub fn stratified_folds(y: &[f64], k: usize, n_bins: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = y.len();
    if k < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds for {n} rows")));
    }
    let bins = n_bins.min(n / k).max(1);
    let mut sorted: Vec<f64> = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    edges.dedup();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); edges.len() + 1];
    for (i, v) in y.iter().enumerate() {
        let bin = edges.iter().filter(|&&e| *v >= e).count();
        members[bin].push(i);
    }

    let mut rng = seed::rng(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut bin in members {
        rand::seq::SliceRandom::shuffle(bin.as_mut_slice(), &mut rng);
        for i in bin {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: ModelConfig,
    pub inner_r2: Vec<f64>,
    /// Negative infinity for failed trials (serialized as null).
    pub mean_inner_r2: f64,
    pub status: TrialStatus,
}

/// Refit artifacts for one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub preprocessor: Preprocessor,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFold {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub selected_trial: Option<usize>,
    pub selected_config: Option<ModelConfig>,
    pub inner_mean_r2: Option<f64>,
    pub test_r2: Option<f64>,
    pub test_predictions: Vec<f64>,
    pub error: Option<String>,
    pub trials: Vec<Trial>,
    #[serde(skip)]
    pub fitted: Option<FoldModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvResult {
    pub folds: Vec<OuterFold>,
    pub mean_test_r2: Option<f64>,
    pub std_test_r2: Option<f64>,
    /// True when at least one outer fold failed.
    pub partial: bool,
}

impl NestedCvResult {
    /// (row, prediction) over every successful outer test partition, by row.
    pub fn pooled_predictions(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .folds
            .iter()
            .filter(|f| f.test_r2.is_some())
            .flat_map(|f| {
                f.test_rows
                    .iter()
                    .copied()
                    .zip(f.test_predictions.iter().copied())
            })
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }

    /// The selected configuration with the best inner score across folds.
    pub fn best_config(&self) -> Option<&ModelConfig> {
        self.folds
            .iter()
            .filter_map(|f| Some((f.inner_mean_r2?, f.selected_config.as_ref()?)))
            .fold(None, |best: Option<(f64, &ModelConfig)>, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|b| b.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub n_bins: usize,
    pub prune_threshold: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            outer_folds: 3,
            inner_folds: 3,
            n_bins: 5,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
        }
    }
}

struct Split {
    train_x: Matrix,
    train_y: Vec<f64>,
    held_x: Matrix,
    held_y: Vec<f64>,
}

fn prepare_split(
    x: &Matrix,
    columns: &[String],
    y: &[f64],
    train: &[usize],
    held: &[usize],
    family: Family,
    opts: &CvOptions,
) -> Result<(Preprocessor, Split)> {
    let pre = Preprocessor::fit(
        x,
        columns,
        train,
        opts.prune_threshold,
        family.standardizes(),
    );
    let split = Split {
        train_x: pre.transform(&x.select_rows(train))?,
        train_y: train.iter().map(|&r| y[r]).collect(),
        held_x: pre.transform(&x.select_rows(held))?,
        held_y: held.iter().map(|&r| y[r]).collect(),
    };
    Ok((pre, split))
}

fn score_on(config: &ModelConfig, split: &Split) -> Result<(f64, FittedModel, Vec<f64>)> {
    let model = config.fit(&split.train_x, &split.train_y)?;
    let pred = model.predict(&split.held_x)?;
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("held-out predictions".into()));
    }
    Ok((metrics::r2(&split.held_y, &pred)?, model, pred))
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Nested cross-validation of one model family on one feature matrix.
///
/// `cell` identifies the experiment cell in the seed derivation; pass `&[]`
/// for standalone use.
pub fn nested_cv(
    x: &FeatureMatrix,
    y: &[f64],
    space: &SearchSpace,
    opts: &CvOptions,
    master_seed: u64,
    cell: &[u64],
    exec: &Executor,
) -> Result<NestedCvResult> {
    space.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target".into()));
    }
    let path = |tail: &[u64]| -> Vec<u64> { cell.iter().chain(tail).copied().collect() };
    let values = &x.values;
    let columns = &x.column_names;
    let outer = stratified_folds(
        y,
        opts.outer_folds,
        opts.n_bins,
        seed::derive(master_seed, &path(&[TAG_OUTER])),
    )?;

    let mut folds = Vec::with_capacity(outer.len());
    for (o, test_rows) in outer.iter().enumerate() {
        let o64 = o as u64;
        let train_rows = complement(y.len(), test_rows);
        let train_y: Vec<f64> = train_rows.iter().map(|&r| y[r]).collect();
        let inner = stratified_folds(
            &train_y,
            opts.inner_folds,
            opts.n_bins,
            seed::derive(master_seed, &path(&[o64, TAG_INNER])),
        )?;
        let inner_splits = inner
            .iter()
            .map(|held_local| {
                let held: Vec<usize> = held_local.iter().map(|&i| train_rows[i]).collect();
                let fit: Vec<usize> = complement(train_rows.len(), held_local)
                    .iter()
                    .map(|&i| train_rows[i])
                    .collect();
                prepare_split(values, columns, y, &fit, &held, space.family, opts).map(|p| p.1)
            })
            .collect::<Result<Vec<Split>>>()?;

        let mut sampler = seed::derived_rng(master_seed, &path(&[o64, TAG_SAMPLE]));
        let configs: Vec<ModelConfig> = (0..space.n_configs)
            .map(|t| {
                sample_config(space, &mut sampler).with_seed(seed::derive(
                    master_seed,
                    &path(&[o64, TAG_TRIAL, t as u64]),
                ))
            })
            .collect();

        let trials = exec.map(configs.len(), |t| {
            let config = &configs[t];
            let scores: Result<Vec<f64>> = inner_splits
                .iter()
                .map(|s| score_on(config, s).map(|r| r.0))
                .collect();
            match scores {
                Ok(inner_r2) => Trial {
                    index: t,
                    config: config.clone(),
                    mean_inner_r2: inner_r2.iter().sum::<f64>() / inner_r2.len() as f64,
                    inner_r2,
                    status: TrialStatus::Ok,
                },
                Err(e) => Trial {
                    index: t,
                    config: config.clone(),
                    inner_r2: Vec::new(),
                    mean_inner_r2: f64::NEG_INFINITY,
                    status: TrialStatus::Failed(e.to_string()),
                },
            }
        });

        let selected = trials.iter().filter(|t| t.status == TrialStatus::Ok).fold(
            None,
            |best: Option<&Trial>, t| match best {
                Some(b) if b.mean_inner_r2 >= t.mean_inner_r2 => Some(b),
                _ => Some(t),
            },
        );

        let mut fold = OuterFold {
            fold: o,
            train_rows: train_rows.clone(),
            test_rows: test_rows.clone(),
            selected_trial: selected.map(|t| t.index),
            selected_config: selected.map(|t| t.config.clone()),
            inner_mean_r2: selected.map(|t| t.mean_inner_r2),
            test_r2: None,
            test_predictions: Vec::new(),
            error: None,
            trials: Vec::new(),
            fitted: None,
        };
        match selected {
            None => fold.error = Some("every trial failed".into()),
            Some(best) => {
                let refit = prepare_split(
                    values,
                    columns,
                    y,
                    &train_rows,
                    test_rows,
                    space.family,
                    opts,
                )
                .and_then(|(pre, split)| score_on(&best.config, &split).map(|r| (pre, r)));
                match refit {
                    Ok((preprocessor, (r2, model, pred))) => {
                        fold.test_r2 = Some(r2);
                        fold.test_predictions = pred;
                        fold.fitted = Some(FoldModel {
                            preprocessor,
                            model,
                        });
                    }
                    Err(e) => fold.error = Some(format!("refit failed: {e}")),
                }
            }
        }
        fold.trials = trials;
        folds.push(fold);
    }

    let scores: Vec<f64> = folds.iter().filter_map(|f| f.test_r2).collect();
    let (mean_test_r2, std_test_r2) = mean_std(&scores);
    Ok(NestedCvResult {
        partial: scores.len() < folds.len(),
        folds,
        mean_test_r2,
        std_test_r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub feature_set: FeatureSetId,
    pub target: TargetKind,
    pub family: Family,
}

impl Cell {
    pub fn seed_path(&self) -> [u64; 3] {
        [
            self.feature_set.index(),
            self.target.index(),
            self.family.index(),
        ]
    }

    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.feature_set, self.target, self.family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NConfigs {
    pub trees: usize,
    pub net: usize,
}

impl Default for NConfigs {
    fn default() -> Self {
        Self {
            trees: 1000,
            net: 300,
        }
    }
}

/// What to run: the grid of cells plus search-space overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentRequest {
    pub feature_sets: Vec<FeatureSetId>,
    pub targets: Vec<TargetKind>,
    pub families: Vec<Family>,
    /// Explicit cell list; replaces the cartesian product when present.
    pub cells: Option<Vec<Cell>>,
    pub n_configs: NConfigs,
    pub trees: TreeSpace,
    pub net: NetSpace,
    pub cv: CvOptions,
    pub master_seed: u64,
    pub threshold: f64,
}

impl Default for ExperimentRequest {
    fn default() -> Self {
        Self {
            feature_sets: FeatureSetId::ALL.to_vec(),
            targets: TargetKind::ALL.to_vec(),
            families: Family::ALL.to_vec(),
            cells: None,
            n_configs: NConfigs::default(),
            trees: TreeSpace::default(),
            net: NetSpace::default(),
            cv: CvOptions::default(),
            master_seed: 0,
            threshold: DEFAULT_FAST_THRESHOLD,
        }
    }
}

impl ExperimentRequest {
    pub fn cells(&self) -> Vec<Cell> {
        if let Some(c) = &self.cells {
            return c.clone();
        }
        let mut out = Vec::new();
        for &feature_set in &self.feature_sets {
            for &target in &self.targets {
                for &family in &self.families {
                    out.push(Cell {
                        feature_set,
                        target,
                        family,
                    });
                }
            }
        }
        out
    }

    pub fn space(&self, family: Family) -> SearchSpace {
        SearchSpace {
            family,
            n_configs: match family {
                Family::Trees => self.n_configs.trees,
                Family::Net => self.n_configs.net,
            },
            trees: self.trees.clone(),
            net: self.net.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub n_subjects: usize,
    pub n_features: usize,
    /// Subject ids, aligned with the row indices used in `result`.
    pub subjects: Vec<String>,
    pub targets: Vec<f64>,
    pub result: Option<NestedCvResult>,
    /// PPV of thresholded out-of-fold predictions (percent-change target only).
    pub ppv: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.result.as_ref().is_some_and(|r| !r.partial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub cells: Vec<CellResult>,
}

impl ResultGrid {
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(CellResult::is_complete)
    }

    pub fn get(&self, cell: &Cell) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.cell == cell)
    }
}

/// PPV of out-of-fold predictions against true fast-progressor labels.
pub fn fast_progressor_ppv(
    result: &NestedCvResult,
    y: &[f64],
    threshold: f64,
) -> Result<Option<f64>> {
    let pooled = result.pooled_predictions();
    let pred: Vec<f64> = pooled.iter().map(|p| p.1).collect();
    let truth: Vec<bool> = pooled
        .iter()
        .map(|p| crate::cohort::label_fast_progressor(y[p.0], threshold))
        .collect();
    metrics::ppv(
        &metrics::classify_fast_from_regression(&pred, threshold),
        &truth,
    )
}

fn run_cell(
    cohort: &Cohort,
    matrix: &Result<FeatureMatrix>,
    cell: Cell,
    req: &ExperimentRequest,
    exec: &Executor,
) -> CellResult {
    let mut out = CellResult {
        cell,
        n_subjects: 0,
        n_features: 0,
        subjects: Vec::new(),
        targets: Vec::new(),
        result: None,
        ppv: None,
        error: None,
    };
    let matrix = match matrix {
        Ok(m) => m,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let (x, y) = matrix.with_targets(cohort, cell.target);
    out.n_subjects = x.n_rows();
    out.n_features = x.n_cols();
    out.subjects = x.rows.clone();
    out.targets = y.clone();
    match nested_cv(
        &x,
        &y,
        &req.space(cell.family),
        &req.cv,
        req.master_seed,
        &cell.seed_path(),
        exec,
    ) {
        Ok(res) => {
            if cell.target == TargetKind::PctChange24 {
                out.ppv = fast_progressor_ppv(&res, &y, req.threshold).ok().flatten();
            }
            out.result = Some(res);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Evaluate every requested cell. Per-cell failures are recorded, not raised.
pub fn run_experiment(cohort: &Cohort, req: &ExperimentRequest, exec: &Executor) -> ResultGrid {
    let cells = req.cells();
    let mut matrices: std::collections::BTreeMap<FeatureSetId, Result<FeatureMatrix>> =
        Default::default();
    for c in &cells {
        matrices
            .entry(c.feature_set)
            .or_insert_with(|| build_feature_set(cohort, c.feature_set));
    }
    ResultGrid {
        cells: cells
            .into_iter()
            .map(|c| run_cell(cohort, &matrices[&c.feature_set], c, req, exec))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_take_one_per_tercile() {
        let y: Vec<f64> = (1..=9).map(f64::from).collect();
        for s in 0..20 {
            let folds = stratified_folds(&y, 3, 3, s).unwrap();
            for f in &folds {
                let mut terciles: Vec<usize> = f.iter().map(|&i| i / 3).collect();
                terciles.sort_unstable();
                assert_eq!(terciles, vec![0, 1, 2]);
            }
        }
    }

    #[test]
    fn constant_target_is_plain_kfold() {
        let folds = stratified_folds(&[2.0; 10], 3, 5, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn fold_sizes_for_160() {
        let y: Vec<f64> = (0..160).map(|i| ((i * 37) % 101) as f64).collect();
        let folds = stratified_folds(&y, 3, 5, 4).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![53, 53, 54]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..160).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_more_folds_than_rows() {
        assert!(stratified_folds(&[1.0, 2.0], 3, 5, 0).is_err());
        assert!(stratified_folds(&[1.0, 2.0], 1, 5, 0).is_err());
    }

    #[test]
    fn sampled_configs_stay_in_range() {
        let mut rng = seed::rng(0);
        let trees = SearchSpace::new(Family::Trees);
        let net = SearchSpace::new(Family::Net);
        for _ in 0..2000 {
            match sample_config(&trees, &mut rng) {
                ModelConfig::Trees(c) => {
                    assert!((10..=1000).contains(&c.n_estimators));
                    assert!((5..=50).contains(&c.max_depth));
                    assert!(c.l1 > 0.0 && c.l1 < 1.0 && c.l2 > 0.0 && c.l2 < 1.0);
                    assert!((1e-4..=0.4).contains(&c.learning_rate));
                }
                ModelConfig::Net(_) => unreachable!(),
            }
            match sample_config(&net, &mut rng) {
                ModelConfig::Net(c) => {
                    assert!((1..=5).contains(&c.n_layers));
                    assert!(nnet::WIDTH_CHOICES.contains(&c.base_width));
                    assert!(nnet::TAPER_SIZES.contains(&c.taper_size));
                    assert!((0.1..=0.9).contains(&c.dropout_rate));
                    assert!((1e-4..=5e-3).contains(&c.learning_rate));
                    let w = c.hidden_widths();
                    assert!(w.windows(2).all(|p| p[1] <= p[0]));
                }
                ModelConfig::Trees(_) => unreachable!(),
            }
        }
    }

    #[test]
    fn single_config_is_always_selected() {
        let mut rng = seed::rng(8);
        let n = 30;
        let values = Matrix::new(n, 2, (0..2 * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|r| values.get(r, 0) * 2.0 + 0.1 * rng.gen::<f64>())
            .collect();
        let x = FeatureMatrix {
            rows: (0..n).map(|i| i.to_string()).collect(),
            column_names: vec!["a".into(), "b".into()],
            values,
            provenance: Default::default(),
        };
        let mut space = SearchSpace::new(Family::Trees).with_configs(1);
        space.trees.n_estimators = (10, 20);
        let res = nested_cv(
            &x,
            &y,
            &space,
            &CvOptions::default(),
            1,
            &[],
            &Executor::serial(),
        )
        .unwrap();
        assert_eq!(res.folds.len(), 3);
        for f in &res.folds {
            assert_eq!(f.selected_trial, Some(0));
            assert_eq!(f.trials.len(), 1);
            assert!(f.test_r2.is_some());
        }
        assert!(!res.partial);
    }
}
