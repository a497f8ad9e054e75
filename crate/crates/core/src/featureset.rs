//! Feature sets built from a cohort, plus the train-fold preprocessing
//! (median imputation, correlation pruning, z-scoring).
//!
//! Every fitted statistic is computed from the training rows only and
//! recorded in [`Provenance`], so the same transform can be replayed on
//! held-out rows.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, TargetKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSetId {
    BaseG,
    DeltaG,
    AsyBaseG,
    AsyDeltaG,
    AllG,
    Clin,
    AllGclin,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 7] = [
        Self::BaseG,
        Self::DeltaG,
        Self::AsyBaseG,
        Self::AsyDeltaG,
        Self::AllG,
        Self::Clin,
        Self::AllGclin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BaseG => "BaseG",
            Self::DeltaG => "DeltaG",
            Self::AsyBaseG => "AsyBaseG",
            Self::AsyDeltaG => "AsyDeltaG",
            Self::AllG => "AllG",
            Self::Clin => "Clin",
            Self::AllGclin => "AllGclin",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    /// Column count before pruning.
    pub fn expected_width(self) -> usize {
        match self {
            Self::BaseG | Self::DeltaG => 148,
            Self::AsyBaseG | Self::AsyDeltaG => 22,
            Self::AllG => 340,
            Self::Clin => 40,
            Self::AllGclin => 380,
        }
    }

    fn blocks(self) -> &'static [Block] {
        use Block::*;
        match self {
            Self::BaseG => &[Base],
            Self::DeltaG => &[Delta],
            Self::AsyBaseG => &[AsyBase],
            Self::AsyDeltaG => &[AsyDelta],
            Self::AllG => &[Base, Delta, AsyBase, AsyDelta],
            Self::Clin => &[Clinical],
            Self::AllGclin => &[Base, Delta, AsyBase, AsyDelta, Clinical],
        }
    }

    /// Whether subjects need a month-6 visit to be included.
    pub fn needs_month6(self) -> bool {
        self.blocks()
            .iter()
            .any(|b| matches!(b, Block::Delta | Block::AsyDelta))
    }
}

impl std::fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?}")))
    }
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Base,
    Delta,
    AsyBase,
    AsyDelta,
    Clinical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Record of every statistic fitted on `train_rows`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub feature_set: Option<FeatureSetId>,
    pub train_rows: Option<Vec<usize>>,
    pub imputation_medians: Option<Vec<f64>>,
    pub dropped_columns: Vec<String>,
    pub prune_threshold: Option<f64>,
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Subject ids, one per row.
    pub rows: Vec<String>,
    pub column_names: Vec<String>,
    pub values: Matrix,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.n_cols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            column_names: self.column_names.clone(),
            values: self.values.select_rows(rows),
            provenance: self.provenance.clone(),
        }
    }

    /// Restrict to subjects with a defined target and return the aligned targets.
    pub fn with_targets(&self, cohort: &Cohort, kind: TargetKind) -> (Self, Vec<f64>) {
        let (subjects, targets) = cohort.targets(kind);
        let target_of: std::collections::HashMap<&str, f64> = subjects
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| (cohort.subjects[s].id.as_str(), t))
            .collect();
        let (keep, y): (Vec<usize>, Vec<f64>) = self
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, id)| target_of.get(id.as_str()).map(|&t| (i, t)))
            .unzip();
        (self.select_rows(&keep), y)
    }
}

/// Signed asymmetry `1 - left/right`; NaN (missing) when undefined.
pub fn asymmetry(left: f64, right: f64) -> f64 {
    if right == 0.0 || !left.is_finite() || !right.is_finite() {
        f64::NAN
    } else {
        1.0 - left / right
    }
}

pub fn build_feature_set(cohort: &Cohort, id: FeatureSetId) -> Result<FeatureMatrix> {
    let n_dev = cohort.device_measure_names.len();
    let eligible: Vec<usize> = cohort
        .subjects
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            !id.needs_month6()
                || [0, 6]
                    .iter()
                    .all(|&m| s.visit(m).is_some_and(|v| !v.runs.is_empty()))
        })
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Empty(format!("no subjects eligible for {id}")));
    }

    let mut column_names = Vec::with_capacity(id.expected_width());
    for block in id.blocks() {
        match block {
            Block::Base => column_names.extend(
                cohort
                    .device_measure_names
                    .iter()
                    .map(|n| format!("base.{n}")),
            ),
            Block::Delta => column_names.extend(
                cohort
                    .device_measure_names
                    .iter()
                    .map(|n| format!("delta.{n}")),
            ),
            Block::AsyBase => column_names.extend(
                cohort
                    .lateral_pairs
                    .iter()
                    .map(|p| format!("asy_base.{}", p.stem)),
            ),
            Block::AsyDelta => column_names.extend(
                cohort
                    .lateral_pairs
                    .iter()
                    .map(|p| format!("asy_delta.{}", p.stem)),
            ),
            Block::Clinical => column_names.extend(cohort.clinical_names.iter().cloned()),
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = column_names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::Duplicate(format!("feature column {dup}")));
    }

    let mut data = Vec::with_capacity(eligible.len() * column_names.len());
    for &si in &eligible {
        let s = &cohort.subjects[si];
        let base = s
            .visit(0)
            .map_or_else(|| vec![f64::NAN; n_dev], |v| v.median_measures(n_dev));
        let delta: Vec<f64> = if id.needs_month6() {
            let m6 = s
                .visit(6)
                .map_or_else(|| vec![f64::NAN; n_dev], |v| v.median_measures(n_dev));
            m6.iter().zip(&base).map(|(a, b)| a - b).collect()
        } else {
            Vec::new()
        };
        for block in id.blocks() {
            match block {
                Block::Base => data.extend_from_slice(&base),
                Block::Delta => data.extend_from_slice(&delta),
                Block::AsyBase => data.extend(
                    cohort
                        .lateral_pairs
                        .iter()
                        .map(|p| asymmetry(base[p.left], base[p.right])),
                ),
                Block::AsyDelta => data.extend(
                    cohort
                        .lateral_pairs
                        .iter()
                        .map(|p| asymmetry(delta[p.left], delta[p.right])),
                ),
                Block::Clinical => data.extend_from_slice(&s.clinical),
            }
        }
    }

    let values = Matrix::new(eligible.len(), column_names.len(), data)?;
    Ok(FeatureMatrix {
        rows: eligible
            .iter()
            .map(|&i| cohort.subjects[i].id.clone())
            .collect(),
        column_names,
        values,
        provenance: Provenance {
            feature_set: Some(id),
            ..Provenance::default()
        },
    })
}

fn all_equal(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Empty("pearson_r needs at least two points".into()));
    }
    if all_equal(x) || all_equal(y) {
        return Err(Error::Undefined("zero-variance input to pearson_r".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Unit-norm centred copy of a column, or `None` for a constant column.
fn normalized(col: &[f64]) -> Option<Vec<f64>> {
    if col.len() < 2 || all_equal(col) {
        return None;
    }
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(centred.into_iter().map(|v| v / norm).collect())
}

/// Greedy keep-first scan: returns the indices of the columns to keep.
///
/// Columns are visited in order; a kept column drops every later kept
/// column whose |r| on the training rows exceeds `threshold`. Zero-variance
/// columns count as uncorrelated.
fn correlated_keep_mask(values: &Matrix, train_idx: &[usize], threshold: f64) -> Vec<bool> {
    let d = values.n_cols();
    let train = values.select_rows(train_idx);
    let cols: Vec<Vec<f64>> = (0..d).map(|c| train.column(c)).collect();
    let complete = cols.iter().all(|c| c.iter().all(|v| v.is_finite()));
    let normed: Vec<Option<Vec<f64>>> = if complete {
        cols.iter().map(|c| normalized(c)).collect()
    } else {
        Vec::new()
    };

    let r = |i: usize, j: usize| -> f64 {
        if complete {
            match (&normed[i], &normed[j]) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
                _ => 0.0,
            }
        } else {
            let (x, y): (Vec<f64>, Vec<f64>) = cols[i]
                .iter()
                .zip(&cols[j])
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (*a, *b))
                .unzip();
            pearson_r(&x, &y).unwrap_or(0.0)
        }
    };

    let mut keep = vec![true; d];
    for i in 0..d {
        if !keep[i] {
            continue;
        }
        for j in i + 1..d {
            if keep[j] && r(i, j).abs() > threshold {
                keep[j] = false;
            }
        }
    }
    keep
}

pub fn prune_correlated(
    matrix: &FeatureMatrix,
    train_idx: &[usize],
    threshold: f64,
) -> FeatureMatrix {
    let keep = correlated_keep_mask(&matrix.values, train_idx, threshold);
    let kept: Vec<usize> = (0..keep.len()).filter(|&c| keep[c]).collect();
    let mut provenance = matrix.provenance.clone();
    provenance.train_rows = Some(train_idx.to_vec());
    provenance.prune_threshold = Some(threshold);
    provenance.dropped_columns.extend(
        (0..keep.len())
            .filter(|&c| !keep[c])
            .map(|c| matrix.column_names[c].clone()),
    );
    FeatureMatrix {
        rows: matrix.rows.clone(),
        column_names: kept
            .iter()
            .map(|&c| matrix.column_names[c].clone())
            .collect(),
        values: matrix.values.select_cols(&kept),
        provenance,
    }
}

fn column_medians(values: &Matrix, train_idx: &[usize]) -> Vec<f64> {
    (0..values.n_cols())
        .map(|c| {
            let vals: Vec<f64> = train_idx
                .iter()
                .map(|&r| values.get(r, c))
                .filter(|v| v.is_finite())
                .collect();
            // A column missing on every training row imputes to 0.
            crate::cohort::median_of_runs(&vals).unwrap_or(0.0)
        })
        .collect()
}

fn impute(values: &mut Matrix, medians: &[f64]) {
    for r in 0..values.n_rows() {
        for (c, &m) in medians.iter().enumerate() {
            if !values.get(r, c).is_finite() {
                values.set(r, c, m);
            }
        }
    }
}

fn fit_standardization(values: &Matrix, train_idx: &[usize]) -> Standardization {
    let n = train_idx.len() as f64;
    let (means, sds) = (0..values.n_cols())
        .map(|c| {
            let col: Vec<f64> = train_idx.iter().map(|&r| values.get(r, c)).collect();
            if all_equal(&col) {
                return (col.first().copied().unwrap_or(0.0), 0.0);
            }
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip();
    Standardization { means, sds }
}

fn apply_standardization(values: &mut Matrix, s: &Standardization) {
    for r in 0..values.n_rows() {
        for c in 0..values.n_cols() {
            let z = if s.sds[c] > 0.0 {
                (values.get(r, c) - s.means[c]) / s.sds[c]
            } else {
                0.0
            };
            values.set(r, c, z);
        }
    }
}

/// Median-impute then z-score every column with statistics from `train_idx`.
/// Constant training columns map to 0.
pub fn fit_apply_standardize(matrix: &FeatureMatrix, train_idx: &[usize]) -> FeatureMatrix {
    let mut values = matrix.values.clone();
    let medians = column_medians(&values, train_idx);
    impute(&mut values, &medians);
    let scaling = fit_standardization(&values, train_idx);
    apply_standardization(&mut values, &scaling);
    let mut provenance = matrix.provenance.clone();
    provenance.train_rows = Some(train_idx.to_vec());
    provenance.imputation_medians = Some(medians);
    provenance.standardization = Some(scaling);
    FeatureMatrix {
        rows: matrix.rows.clone(),
        column_names: matrix.column_names.clone(),
        values,
        provenance,
    }
}

/// Train-fold preprocessing replayable on any rows with the same input columns:
/// median imputation, then correlation pruning, then optional z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub input_columns: Vec<String>,
    pub medians: Vec<f64>,
    pub prune_threshold: f64,
    pub kept: Vec<usize>,
    pub scaling: Option<Standardization>,
}

impl Preprocessor {
    pub fn fit(
        matrix: &Matrix,
        columns: &[String],
        train_idx: &[usize],
        prune_threshold: f64,
        standardize: bool,
    ) -> Self {
        let medians = column_medians(matrix, train_idx);
        let mut imputed = matrix.select_rows(train_idx);
        impute(&mut imputed, &medians);
        let all_rows: Vec<usize> = (0..imputed.n_rows()).collect();
        let keep = correlated_keep_mask(&imputed, &all_rows, prune_threshold);
        let kept: Vec<usize> = (0..keep.len()).filter(|&c| keep[c]).collect();
        let scaling =
            standardize.then(|| fit_standardization(&imputed.select_cols(&kept), &all_rows));
        Self {
            input_columns: columns.to_vec(),
            medians,
            prune_threshold,
            kept,
            scaling,
        }
    }

    pub fn output_columns(&self) -> Vec<String> {
        self.kept
            .iter()
            .map(|&c| self.input_columns[c].clone())
            .collect()
    }

    pub fn transform(&self, values: &Matrix) -> Result<Matrix> {
        if values.n_cols() != self.input_columns.len() {
            return Err(Error::Dimension {
                expected: self.input_columns.len(),
                got: values.n_cols(),
            });
        }
        let mut out = values.clone();
        impute(&mut out, &self.medians);
        let mut out = out.select_cols(&self.kept);
        if let Some(s) = &self.scaling {
            apply_standardization(&mut out, s);
        }
        Ok(out)
    }

    pub fn apply(&self, matrix: &FeatureMatrix, train_idx: &[usize]) -> Result<FeatureMatrix> {
        if matrix.column_names != self.input_columns {
            return Err(Error::Schema(
                "feature columns differ from the fitted preprocessor".into(),
            ));
        }
        let mut provenance = matrix.provenance.clone();
        provenance.train_rows = Some(train_idx.to_vec());
        provenance.imputation_medians = Some(self.medians.clone());
        provenance.prune_threshold = Some(self.prune_threshold);
        let kept: std::collections::HashSet<usize> = self.kept.iter().copied().collect();
        provenance.dropped_columns = (0..self.input_columns.len())
            .filter(|c| !kept.contains(c))
            .map(|c| self.input_columns[c].clone())
            .collect();
        provenance.standardization = self.scaling.clone();
        Ok(FeatureMatrix {
            rows: matrix.rows.clone(),
            column_names: self.output_columns(),
            values: self.transform(&matrix.values)?,
            provenance,
        })
    }
}
