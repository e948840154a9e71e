use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::bow::{LinearBowModel, BOW_FORMAT};
use super::ensemble::{EnsembleModel, ENSEMBLE_FORMAT};
use super::fusion::{FusionModel, FUSION_FORMAT};
use super::mlp::{MlpModel, MLP_FORMAT};
use super::rules::{RuleClassifier, RULE_FORMAT};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;

/// A model stored as a JSON object with a `format` tag.
pub trait ModelFile: Serialize + DeserializeOwned {
    const FORMAT: &'static str;

    /// Hash of the feature spec the model consumes, if any.
    fn spec_hash(&self) -> Option<&str> {
        None
    }

    /// Post-load checks and index rebuilding.
    fn finish(self) -> Result<Self> {
        Ok(self)
    }

    /// Refuses a spec other than the one the model was trained on.
    fn check_spec(&self, spec: &FeatureSpec) -> Result<()> {
        match self.spec_hash() {
            Some(h) if h != spec.hash() => Err(Error::invalid(format!(
                "model was trained on feature spec {h}, got {}",
                spec.hash()
            ))),
            _ => Ok(()),
        }
    }
}

impl ModelFile for MlpModel {
    const FORMAT: &'static str = MLP_FORMAT;
    fn spec_hash(&self) -> Option<&str> {
        self.spec_hash.as_deref()
    }
    fn finish(self) -> Result<Self> {
        self.network.check_shapes()?;
        Ok(self)
    }
}

impl ModelFile for FusionModel {
    const FORMAT: &'static str = FUSION_FORMAT;
    fn spec_hash(&self) -> Option<&str> {
        self.spec_hash.as_deref()
    }
    fn finish(self) -> Result<Self> {
        self.branch.check_shapes()?;
        self.head.check_shapes()?;
        if self.head.input_dim() != self.branch.output_dim() + self.embedding_dim {
            return Err(Error::Shape(
                "fusion head width is not branch width + embedding width".into(),
            ));
        }
        Ok(self)
    }
}

impl ModelFile for RuleClassifier {
    const FORMAT: &'static str = RULE_FORMAT;
    fn finish(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }
}

impl ModelFile for EnsembleModel {
    const FORMAT: &'static str = ENSEMBLE_FORMAT;
    fn spec_hash(&self) -> Option<&str> {
        self.spec_hash.as_deref()
    }
    fn finish(self) -> Result<Self> {
        self.mlp.network.check_shapes()?;
        if self.mlp.input_dim() != self.input_width() {
            return Err(Error::Shape(
                "ensemble network width disagrees with its inputs".into(),
            ));
        }
        Ok(self)
    }
}

impl ModelFile for LinearBowModel {
    const FORMAT: &'static str = BOW_FORMAT;
    fn finish(self) -> Result<Self> {
        self.finish_load()
    }
}

fn format_tag(value: &serde_json::Value) -> String {
    value
        .get("format")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string()
}

pub fn model_to_json<M: ModelFile>(model: &M) -> Result<String> {
    Ok(serde_json::to_string(model)?)
}

pub fn model_from_json<M: ModelFile>(text: &str) -> Result<M> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = format_tag(&value);
    if found != M::FORMAT {
        return Err(Error::Version {
            expected: M::FORMAT.into(),
            found,
        });
    }
    M::deserialize(value)?.finish()
}

pub fn save_model<M: ModelFile>(path: impl AsRef<Path>, model: &M) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<M: ModelFile>(path: impl AsRef<Path>) -> Result<M> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

/// Any stored model, dispatched on its format tag.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Mlp(MlpModel),
    Fusion(FusionModel),
    Rule(RuleClassifier),
    Ensemble(EnsembleModel),
    Bow(LinearBowModel),
}

impl TrainedModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match format_tag(&value).as_str() {
            MLP_FORMAT => Ok(TrainedModel::Mlp(model_from_json(text)?)),
            FUSION_FORMAT => Ok(TrainedModel::Fusion(model_from_json(text)?)),
            RULE_FORMAT => Ok(TrainedModel::Rule(model_from_json(text)?)),
            ENSEMBLE_FORMAT => Ok(TrainedModel::Ensemble(model_from_json(text)?)),
            BOW_FORMAT => Ok(TrainedModel::Bow(model_from_json(text)?)),
            other => Err(Error::Version {
                expected: [
                    MLP_FORMAT,
                    FUSION_FORMAT,
                    RULE_FORMAT,
                    ENSEMBLE_FORMAT,
                    BOW_FORMAT,
                ]
                .join("|"),
                found: other.to_string(),
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn format(&self) -> &'static str {
        match self {
            TrainedModel::Mlp(_) => MLP_FORMAT,
            TrainedModel::Fusion(_) => FUSION_FORMAT,
            TrainedModel::Rule(_) => RULE_FORMAT,
            TrainedModel::Ensemble(_) => ENSEMBLE_FORMAT,
            TrainedModel::Bow(_) => BOW_FORMAT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::mlp::{train_mlp, MlpConfig};
    use crate::features::{Family, FeatureDescriptor, Source};
    use crate::summary::Stat;
    use ndarray::Array2;

    fn tiny() -> MlpModel {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * 3 + j) as f64 % 7.0);
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        train_mlp(
            &x,
            &y,
            &MlpConfig {
                hidden: vec![3],
                max_epochs: 2,
                ..Default::default()
            },
        )
        .unwrap()
        .0
    }

    fn spec(stat: Stat) -> FeatureSpec {
        FeatureSpec::new(vec![FeatureDescriptor::new(
            Family::Simple,
            Source::TitleLength,
            stat,
        )])
        .unwrap()
    }

    #[test]
    fn round_trip_and_dispatch() {
        let m = tiny();
        let text = model_to_json(&m).unwrap();
        let back: MlpModel = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            TrainedModel::from_json(&text).unwrap(),
            TrainedModel::Mlp(_)
        ));
        let err = model_from_json::<FusionModel>(&text).unwrap_err();
        assert!(matches!(err, Error::Version { .. }));
        assert!(TrainedModel::from_json(r#"{"format":"NOPE"}"#).is_err());
    }

    #[test]
    fn spec_hash_mismatch_is_refused() {
        let mut m = tiny();
        let a = spec(Stat::Scalar);
        let b = spec(Stat::Mean);
        m.spec_hash = Some(a.hash());
        assert!(m.check_spec(&a).is_ok());
        assert!(m.check_spec(&b).is_err());
    }

    #[test]
    fn corrupted_shapes_are_rejected() {
        let m = tiny();
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m).unwrap()).unwrap();
        v["network"]["layers"][1]["b"] = serde_json::json!({"v": 1, "dim": [1], "data": [0.0]});
        assert!(model_from_json::<MlpModel>(&v.to_string()).is_err());
    }
}
