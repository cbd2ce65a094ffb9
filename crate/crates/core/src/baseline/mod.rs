//! Clinicodemographic baselines and the adjusted odds-ratio analysis.

mod adjusted;
mod features;
mod logistic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adjusted::{adjusted_analysis, pool_races, race_label, AdjustedCovariates, AdjustedOptions, AdjustedRow};
pub use features::{
    select_baseline_features, BaselineFeature, FeatureDef, FeatureKind, FeatureSchema, FeatureValue,
    FittedFeature, FittedKind,
};
pub use logistic::{
    fit_logistic, predict_proba, sample_weights, ClassWeight, LogisticModel, LogisticOptions, LogisticProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub target: String,
    pub split: String,
    pub seed: u64,
    pub tolerance: f64,
    pub c: Option<f64>,
    pub class_weight: ClassWeight,
    pub n_train: usize,
    pub n_positive: usize,
    /// Training cells filled by imputation, per feature.
    pub imputed: Vec<(String, usize)>,
}

/// A fitted baseline: encoder, coefficients and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub features: Vec<BaselineFeature>,
    pub schema: FeatureSchema,
    pub model: LogisticModel,
    pub metadata: TrainingMetadata,
}

impl BaselineModel {
    pub fn predict(&self, rows: &[Vec<FeatureValue>]) -> Result<Vec<f64>> {
        predict_proba(&self.model, &self.schema.encode(rows)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
