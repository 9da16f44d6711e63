use std::path::Path;

use clap::ValueEnum;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
    Tiny,
}

impl Preset {
    pub fn configs(self) -> (ModelConfig, TrainConfig) {
        match self {
            Preset::Paper => (ModelConfig::paper(), TrainConfig::paper()),
            Preset::Tiny => (ModelConfig::tiny(), TrainConfig::tiny()),
        }
    }
}

fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, patch: &serde_json::Map<String, Value>) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("configs serialize as objects");
    for (k, v) in patch {
        if !obj.contains_key(k) {
            return Err(Error::InvalidConfig(format!("unknown config key `{k}`")));
        }
        obj.insert(k.clone(), v.clone());
    }
    Ok(serde_json::from_value(value)?)
}

/// Preset, then the JSON file (training keys at top level, model keys
/// under `"model"`), then explicit flags.
pub fn resolve_train_config(
    preset: Preset,
    config: Option<&Path>,
    flags: impl FnOnce(&mut TrainConfig),
) -> Result<(ModelConfig, TrainConfig, Option<Value>)> {
    let (mut model, mut train) = preset.configs();
    let mut file = None;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        let Value::Object(mut map) = value.clone() else {
            return Err(Error::InvalidConfig(format!("{} is not a JSON object", path.display())));
        };
        if let Some(m) = map.remove("model") {
            let Value::Object(m) = m else {
                return Err(Error::InvalidConfig("`model` must be an object".into()));
            };
            model = overlay(&model, &m)?;
        }
        train = overlay(&train, &map)?;
        file = Some(value);
    }
    flags(&mut train);
    train.validate()?;
    Ok((model, train, file))
}
