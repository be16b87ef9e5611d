//! Utility models: online RLS, an offline regression forest, their
//! average, and a checksummed model container.

mod forest;
mod persist;
mod rls;

use serde::{Deserialize, Serialize};

use crate::features::{transform_for_linear, FeatureVector};

pub use forest::{ForestParams, RandomForestModel, RegressionTree, TreeNode};
pub use persist::{load_model, save_model, ModelBundle, ModelKind, MODEL_FORMAT_VERSION};
pub use rls::OnlineLinearModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsemblePrediction {
    pub value: f64,
    /// `false` when the forest was not fitted and only the linear model
    /// contributed.
    pub forest_used: bool,
}

/// Plain average of the linear model (on log-scaled features) and the
/// forest (on raw features).
pub fn ensemble_predict(
    linear: &OnlineLinearModel,
    forest: Option<&RandomForestModel>,
    raw: &FeatureVector,
) -> EnsemblePrediction {
    let lin = linear.predict(&transform_for_linear(raw));
    match forest.filter(|f| f.is_fitted()) {
        Some(f) => {
            let rf = f.predict(&raw.to_array()).expect("fitted forest of matching dimension");
            EnsemblePrediction {
                value: (lin + rf) / 2.0,
                forest_used: true,
            }
        }
        None => EnsemblePrediction {
            value: lin,
            forest_used: false,
        },
    }
}
