//! Common interface over the two regressor families and the on-disk model artifact.

use serde::{Deserialize, Serialize};

use crate::cohort::TargetKind;
use crate::error::{Error, Result};
use crate::featureset::{FeatureSetId, Preprocessor};
use crate::gbt::GbtModel;
use crate::matrix::Matrix;
use crate::nnet::NetModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Trees,
    Net,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Trees, Family::Net];

    pub fn name(self) -> &'static str {
        match self {
            Family::Trees => "Trees",
            Family::Net => "Net",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    /// Nets see z-scored inputs; trees are scale-invariant and get raw values.
    pub fn standardizes(self) -> bool {
        matches!(self, Family::Net)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

pub trait Regressor: Sync {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>>;
}

impl Regressor for GbtModel {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        GbtModel::predict(self, x)
    }
}

impl Regressor for NetModel {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        NetModel::predict(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model")]
pub enum FittedModel {
    Trees(GbtModel),
    Net(NetModel),
}

impl FittedModel {
    pub fn family(&self) -> Family {
        match self {
            FittedModel::Trees(_) => Family::Trees,
            FittedModel::Net(_) => Family::Net,
        }
    }
}

impl Regressor for FittedModel {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            FittedModel::Trees(m) => m.predict(x),
            FittedModel::Net(m) => m.predict(x),
        }
    }
}

/// A trained model together with everything needed to score new rows of
/// the same feature set: the fitted preprocessing and the held-out subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub feature_set: FeatureSetId,
    pub target: TargetKind,
    pub outer_fold: usize,
    pub preprocessor: Preprocessor,
    pub model: FittedModel,
    pub test_subjects: Vec<String>,
}

impl ModelArtifact {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let artifact: Self = serde_json::from_str(&text)?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema_version {} (expected {SCHEMA_VERSION})",
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }
}
