//! Scoring: R², PPV on fast progressors, permutation importance, paired t-test.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::matrix::Matrix;
use crate::model::Regressor;
use crate::seed;

pub const DEFAULT_REPEATS: usize = 100;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`; may be negative.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    if y_true.len() < 2 {
        return Err(Error::Empty("r2 needs at least two points".into()));
    }
    if y_true.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Undefined("r2 of a constant target".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        ss_res += (t - p) * (t - p);
        ss_tot += (t - mean) * (t - mean);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// TP / (TP + FP), or `None` when nothing was predicted positive.
pub fn ppv(pred_fast: &[bool], true_fast: &[bool]) -> Result<Option<f64>> {
    check_lengths(true_fast.len(), pred_fast.len())?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &t) in pred_fast.iter().zip(true_fast) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            _ => {}
        }
    }
    Ok((tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64))
}

pub fn classify_fast_from_regression(y_pred_pct: &[f64], threshold: f64) -> Vec<bool> {
    y_pred_pct.iter().map(|&y| y >= threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_delta_r2: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_r2: f64,
    /// In input column order.
    pub features: Vec<FeatureImportance>,
    /// Column indices by descending mean ΔR² (ties keep column order).
    pub ranking: Vec<usize>,
    pub n_repeats: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn top(&self, k: usize) -> Vec<&FeatureImportance> {
        self.ranking
            .iter()
            .take(k)
            .map(|&i| &self.features[i])
            .collect()
    }

    /// 0-based rank of a feature by name.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking
            .iter()
            .position(|&i| self.features[i].feature == feature)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W, top: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature", "mean_delta_r2", "std"])?;
        for (rank, &i) in self
            .ranking
            .iter()
            .take(top.unwrap_or(usize::MAX))
            .enumerate()
        {
            let f = &self.features[i];
            w.write_record([
                rank.to_string(),
                f.feature.clone(),
                f.mean_delta_r2.to_string(),
                f.std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean and population standard deviation of the R² drop when one test
/// column at a time is shuffled. Each feature draws from its own derived seed.
pub fn permutation_importance(
    model: &dyn Regressor,
    x_test: &Matrix,
    y_test: &[f64],
    feature_names: &[String],
    n_repeats: usize,
    seed: u64,
    exec: &Executor,
) -> Result<ImportanceReport> {
    check_lengths(x_test.n_cols(), feature_names.len())?;
    check_lengths(x_test.n_rows(), y_test.len())?;
    if n_repeats == 0 {
        return Err(Error::Config("n_repeats must be positive".into()));
    }
    let baseline = r2(y_test, &model.predict(x_test)?)?;

    let per_feature = exec.map(x_test.n_cols(), |j| -> Result<FeatureImportance> {
        let mut rng = seed::derived_rng(seed, &[j as u64]);
        let original = x_test.column(j);
        let mut shuffled = original.clone();
        let mut x = x_test.clone();
        let mut drops = Vec::with_capacity(n_repeats);
        for _ in 0..n_repeats {
            shuffled.copy_from_slice(&original);
            shuffled.shuffle(&mut rng);
            x.set_column(j, &shuffled);
            drops.push(baseline - r2(y_test, &model.predict(&x)?)?);
        }
        let mean = drops.iter().sum::<f64>() / n_repeats as f64;
        let var = drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n_repeats as f64;
        Ok(FeatureImportance {
            feature: feature_names[j].clone(),
            mean_delta_r2: mean,
            std: var.sqrt(),
        })
    });
    let features = per_feature.into_iter().collect::<Result<Vec<_>>>()?;
    let mut ranking: Vec<usize> = (0..features.len()).collect();
    ranking.sort_by(|&a, &b| {
        features[b]
            .mean_delta_r2
            .total_cmp(&features[a].mean_delta_r2)
            .then(a.cmp(&b))
    });
    Ok(ImportanceReport {
        baseline_r2: baseline,
        features,
        ranking,
        n_repeats,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Two-sided paired t-test on `a - b`. All-zero differences give t = 0,
/// p = 1; constant non-zero differences have no defined statistic.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_lengths(a.len(), b.len())?;
    let n = a.len();
    if n < 2 {
        return Err(Error::Empty(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(TTest { t: 0.0, df, p: 1.0 });
    }
    if d.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Undefined(
            "paired differences have zero variance".into(),
        ));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df as f64;
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided(t, df as f64),
    })
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}
