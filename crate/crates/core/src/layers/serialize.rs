use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::model::{Model, ModelConfig};

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct ModelFile<T: Scalar> {
    config: ModelConfig,
    params: BTreeMap<String, Tensor<T>>,
}

pub fn model_to_json<T: Scalar>(model: &Model<T>) -> Result<String> {
    let mut params = BTreeMap::new();
    model.for_each_param(&mut |name, t| {
        params.insert(name, t.clone());
    });
    let file = ModelFile {
        config: model.config(),
        params,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Rebuilds a model from its JSON form. The architecture comes from the
/// config; every canonical parameter must be present with the right shape,
/// and unknown names are rejected.
pub fn model_from_json<T: Scalar>(json: &str) -> Result<Model<T>> {
    let mut file: ModelFile<T> = serde_json::from_str(json)?;
    // the seed only fills the skeleton; every value is overwritten below
    let mut model = Model::new(file.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut err = None;
    model.for_each_param_mut(&mut |name, slot| {
        if err.is_some() {
            return;
        }
        match file.params.remove(&name) {
            Some(t) if t.shape() == slot.shape() => *slot = t,
            Some(t) => {
                err = Some(invalid(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )))
            }
            None => err = Some(invalid(format!("missing parameter {name}"))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(name) = file.params.keys().next() {
        return Err(invalid(format!("unknown parameter {name}")));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(path: impl AsRef<Path>, model: &Model<T>) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    model_from_json(&fs::read_to_string(path)?)
}
