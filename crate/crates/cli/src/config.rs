use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use swarm_infer::ga::{GaConfig, InstanceSampler};
use swarm_infer::inference::PlannerConfig;
use swarm_infer::qlearning::QlConfig;
use swarm_infer::sim::{ScenarioSampler, SimConfig};
use swarm_infer::world_model::FitConfig;

pub const SEED_ENV: &str = "SWARM_INFER_SEED";

/// Every tunable of the pipeline. Overridden with flat dotted keys, e.g.
/// `ga.population_size=50` or `sim.potential.k_att=2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub num_missions: usize,
    pub demos: InstanceSampler,
    pub ga: GaConfig,
    pub sim: SimConfig,
    pub fit: FitConfig,
    pub ql: QlConfig,
    pub planner: PlannerConfig,
    pub num_scenarios: usize,
    pub scenario: ScenarioSampler,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_missions: 100,
            demos: InstanceSampler {
                num_targets: 50,
                fleet_size: 3,
                num_static_obstacles: 2,
                ..InstanceSampler::default()
            },
            ga: GaConfig {
                population_size: 100,
                generations: 150,
                ..GaConfig::default()
            },
            sim: SimConfig::default(),
            fit: FitConfig::default(),
            ql: QlConfig::default(),
            planner: PlannerConfig::default(),
            num_scenarios: 20,
            scenario: ScenarioSampler::default(),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Applies `key=value` overrides. Values parse as JSON when they can and
    /// as plain strings otherwise.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, String> {
        let mut root = serde_json::to_value(self).map_err(|e| e.to_string())?;
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| format!("override `{item}` is not key=value"))?;
            let mut node = &mut root;
            for part in key.split('.') {
                node = match node {
                    Value::Object(map) => map.get_mut(part).ok_or_else(|| format!("unknown config key `{key}`"))?,
                    Value::Array(items) => {
                        let i: usize = part.parse().map_err(|_| format!("unknown config key `{key}`"))?;
                        items.get_mut(i).ok_or_else(|| format!("unknown config key `{key}`"))?
                    }
                    _ => return Err(format!("unknown config key `{key}`")),
                };
            }
            *node = parse_value(raw);
        }
        serde_json::from_value(root).map_err(|e| format!("invalid override: {e}"))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Seed precedence: `--seed`, then `SWARM_INFER_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, configured: u64) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| format!("{SEED_ENV}={v} is not an unsigned integer")),
        None => Ok(configured),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
