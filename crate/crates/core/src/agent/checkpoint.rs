//! Versioned JSON dump of a trained policy and the configuration it was trained under.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mlp, MlpShape, PolicyParams, TrainConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::predictors::PredictorMode;

pub const CHECKPOINT_FORMAT: &str = "linkadapt-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// SHA-256 over the serialized configuration fields below.
    pub config_hash: String,
    pub scenario: String,
    pub predictor: PredictorMode,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

fn config_hash(scenario: &str, predictor: PredictorMode, env: &EnvConfig, train: &TrainConfig, shape: &MlpShape) -> String {
    let blob = serde_json::to_string(&(scenario, predictor, env, train, shape)).expect("configuration serializes");
    Sha256::digest(blob.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(
        policy: &PolicyParams<f64>,
        scenario: &str,
        predictor: PredictorMode,
        env: &EnvConfig,
        train: &TrainConfig,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash(scenario, predictor, env, train, &policy.net.shape),
            scenario: scenario.into(),
            predictor,
            env: env.clone(),
            train: train.clone(),
            shape: policy.net.shape,
            params: policy.net.params.clone(),
        }
    }

    pub fn policy(&self) -> PolicyParams<f64> {
        PolicyParams {
            net: Mlp {
                shape: self.shape,
                params: self.params.clone(),
            },
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                c.format, c.version
            )));
        }
        if c.params.len() != c.shape.num_params() {
            return Err(Error::Checkpoint(format!(
                "{} weights for a network with {} parameters",
                c.params.len(),
                c.shape.num_params()
            )));
        }
        if c.shape.input != c.env.per_ue_len() {
            return Err(Error::Checkpoint("network input does not match the observation layout".into()));
        }
        let want = config_hash(&c.scenario, c.predictor, &c.env, &c.train, &c.shape);
        if want != c.config_hash {
            return Err(Error::Checkpoint("configuration hash mismatch".into()));
        }
        if c.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite weights".into()));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_and_tamper_detection() {
        let env = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParams::<f64>::new(env.per_ue_len(), 8, &mut rng);
        let c = Checkpoint::new(&p, "paper-3ue", PredictorMode::Kf, &env, &TrainConfig::default());
        let text = serde_json::to_string(&c).unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.policy(), p);
        let tampered = text.replace("\"k_e\":0.0", "\"k_e\":0.5");
        assert_ne!(tampered, text);
        assert!(matches!(Checkpoint::from_json(&tampered), Err(Error::Checkpoint(_))));
        let wrong_version = text.replace("\"version\":1", "\"version\":7");
        assert!(Checkpoint::from_json(&wrong_version).is_err());
    }
}
