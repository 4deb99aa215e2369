//! Base learners and the uniform prediction contract shared by them.

pub mod arima;
pub mod gbt;
pub mod lasso;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use arima::{fit_arima, fit_arima_order, ArimaModel, ArimaOrder};
pub use gbt::{fit_gbt, GbtModel, GbtParams, RegressionTree, TreeNode};
pub use lasso::{cv_lambda, fit_lasso, LassoModel};

use crate::ensemble::{BlendModel, StackModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const MODEL_FORMAT: &str = "salescast-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug)]
pub enum PredictInput<'a> {
    Features(&'a FeatureMatrix),
    Horizon(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ForecastModel {
    Arima(ArimaModel),
    Lasso(LassoModel),
    Gbt(GbtModel),
    Blend(BlendModel),
    Stack(StackModel),
}

impl ForecastModel {
    /// Log-sales predictions. ARIMA takes a horizon; feature models take a
    /// matrix whose columns match training. Blends need their components'
    /// predictions and are applied through [`BlendModel::predict`].
    pub fn predict(&self, input: PredictInput<'_>) -> Result<Vec<f64>> {
        match (self, input) {
            (ForecastModel::Arima(m), PredictInput::Horizon(h)) if h >= 1 => Ok(m.forecast(h)),
            (ForecastModel::Lasso(m), PredictInput::Features(fm)) => m.predict(fm),
            (ForecastModel::Gbt(m), PredictInput::Features(fm)) => m.predict(fm),
            (ForecastModel::Stack(m), PredictInput::Features(fm)) => m.predict(fm),
            (model, _) => Err(Error::InvalidArgument(format!("{} model cannot predict from this input", model.kind()))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ForecastModel::Arima(_) => "arima",
            ForecastModel::Lasso(_) => "lasso",
            ForecastModel::Gbt(_) => "gbt",
            ForecastModel::Blend(_) => "blend",
            ForecastModel::Stack(_) => "stack",
        }
    }
}

/// Versioned JSON container for one or more named fitted models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub models: BTreeMap<String, ForecastModel>,
}

impl ModelDocument {
    pub fn new(models: BTreeMap<String, ForecastModel>) -> Self {
        Self { format: MODEL_FORMAT.into(), version: MODEL_VERSION, models }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Serde(format!("unsupported model document {} v{}", doc.format, doc.version)));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_round_trips_and_rejects_other_versions() {
        let fm = FeatureMatrix::from_rows(
            vec!["a".into()],
            &(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>(),
            (0..20).map(|i| (i * i) as f64).collect(),
        )
        .unwrap();
        let mut models = BTreeMap::new();
        models.insert(
            "gbt".to_string(),
            ForecastModel::Gbt(fit_gbt(&fm, &GbtParams { n_trees: 3, ..Default::default() }).unwrap()),
        );
        models.insert("lasso".to_string(), ForecastModel::Lasso(fit_lasso(&fm, 0.1).unwrap()));
        let doc = ModelDocument::new(models);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let pred = back.models["gbt"].predict(PredictInput::Features(&fm)).unwrap();
        assert_eq!(pred.len(), 20);
        assert!(back.models["gbt"].predict(PredictInput::Horizon(3)).is_err());

        let bumped = doc.to_json().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(ModelDocument::from_json(&bumped).is_err());
    }
}
