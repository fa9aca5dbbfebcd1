//! Run configuration: one TOML file covering dataset, SDEs, networks,
//! training, sampling and evaluation.
//!
//! The top-level `seed` is the only seed key. It is copied into the dataset,
//! training and sampler sections, and the three networks are initialized
//! with `seed`, `seed + 1` and `seed + 2`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::complex::{AdjacencyQuantization, DimConstraints, SupportRule};
use crate::data_io::DatasetSpec;
use crate::error::{ensure, CcsdError, Result};
use crate::metrics::MetricConfig;
use crate::nn::{DataDims, ScoreModel, ScoreModelSpec};
use crate::pipeline::{GenerationConfig, NodeQuantization};
use crate::sde::{RankSdes, SamplerConfig};
use crate::training::{ScoreModels, TrainConfig};

pub const COMMUNITY_SMALL: &str = include_str!("../configs/community_small.toml");
pub const GRID_SMALL: &str = include_str!("../configs/grid_small.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecs {
    pub x: ScoreModelSpec,
    pub a: ScoreModelSpec,
    pub f: ScoreModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub adjacency: AdjacencyQuantization,
    pub num_samples: usize,
    #[serde(default = "default_threshold")]
    pub incidence_threshold: f64,
    #[serde(default)]
    pub node_features: NodeQuantization,
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_chunk() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub complex: DimConstraints,
    pub sde: RankSdes,
    pub model: ModelSpecs,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub generation: GenerationSection,
    #[serde(default)]
    pub metrics: MetricConfig,
}

const SCORE_X_KEYS: &[&str] = &["depth", "nhid", "final_linears"];
const ATTENTION_KEYS: &[&str] = &[
    "depth",
    "nhid",
    "adim",
    "heads",
    "c_init",
    "c_hid",
    "c_final",
    "num_linears",
    "final_linears",
];
const HODGE_KEYS: &[&str] = &["depth", "num_linears", "hidden", "c_hid", "c_final", "heads", "attn_dim"];
const BASE_HODGE_KEYS: &[&str] = &["depth", "num_linears", "hidden", "c_hid", "c_final"];
const SCORE_F_KEYS: &[&str] = &["power", "depth", "c_hid", "num_linears", "final_linears", "hodge_mask"];

fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |v, k| v.get(k))
}

/// Every required key absent from `root`, as dotted paths. Keys that depend
/// on a discriminator (`model.*.kind`, `dataset.lift.method`,
/// `dataset.name`) are listed once the discriminator is present.
pub fn missing_keys(root: &Value) -> Vec<String> {
    let mut required: Vec<String> = vec!["seed".into()];
    let mut push = |prefix: &str, keys: &[&str]| {
        required.extend(keys.iter().map(|k| format!("{prefix}.{k}")));
    };
    push("dataset", &["name", "count", "node_range", "feature_dim"]);
    push("complex", &["d_min", "d_max"]);
    for r in ["x", "a", "f"] {
        push(&format!("sde.{r}"), &["kind", "beta_min", "beta_max", "num_steps"]);
    }
    push("train", &["lr", "weight_decay", "batch_size", "epochs", "eval_interval"]);
    push("sampler", &["predictor", "corrector", "snr", "scale_coeff", "num_steps"]);
    push("generation", &["adjacency", "num_samples"]);
    if lookup(root, "dataset.name").and_then(Value::as_str) == Some("file") {
        push("dataset", &["path"]);
    }
    if lookup(root, "dataset.lift").is_some() {
        push("dataset.lift", &["method"]);
        if lookup(root, "dataset.lift.method").and_then(Value::as_str) == Some("path") {
            push("dataset.lift", &["k"]);
        }
    }
    for r in ["x", "a", "f"] {
        let prefix = format!("model.{r}");
        push(&prefix, &["kind"]);
        match lookup(root, &format!("{prefix}.kind")).and_then(Value::as_str) {
            Some("score_x") => push(&prefix, SCORE_X_KEYS),
            Some("score_a_cc") => {
                push(&format!("{prefix}.attention"), ATTENTION_KEYS);
                push(&format!("{prefix}.hodge"), HODGE_KEYS);
            }
            Some("score_a_base_cc") => {
                push(&format!("{prefix}.attention"), ATTENTION_KEYS);
                push(&format!("{prefix}.hodge"), BASE_HODGE_KEYS);
            }
            Some("score_f") => push(&prefix, SCORE_F_KEYS),
            _ => {}
        }
    }
    required.into_iter().filter(|k| lookup(root, k).is_none()).collect()
}

fn set(root: &mut Value, section: &str, key: &str, value: Value) {
    if let Some(t) = root.get_mut(section).and_then(Value::as_table_mut) {
        t.insert(key.to_string(), value);
    }
}

impl RunConfig {
    /// Parses a TOML config. `seed` replaces the file's top-level seed.
    pub fn from_toml_str(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut root: Value = text.parse().map_err(|e: toml::de::Error| CcsdError::Config(e.to_string()))?;
        ensure!(root.is_table(), Config, "configuration must be a table");
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| CcsdError::Config(format!("seed {s} exceeds i64")))?;
            root.as_table_mut().expect("checked table").insert("seed".into(), Value::Integer(s));
        }
        let missing = missing_keys(&root);
        if !missing.is_empty() {
            return Err(CcsdError::MissingKeys(missing));
        }
        let seed = root["seed"].clone();
        ensure!(seed.as_integer().is_some_and(|s| s >= 0), Config, "seed must be a non-negative integer");
        for section in ["dataset", "train", "sampler"] {
            set(&mut root, section, "seed", seed.clone());
        }
        let complex = root["complex"].clone();
        if let Some(lift) = root.get_mut("dataset").and_then(|d| d.get_mut("lift")).and_then(Value::as_table_mut) {
            lift.insert("constraints".into(), complex);
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| CcsdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CcsdError::io(path, e))?;
        Self::from_toml_str(&text, seed)
    }

    pub fn community_small() -> Self {
        Self::from_toml_str(COMMUNITY_SMALL, None).expect("shipped config is valid")
    }

    pub fn grid_small() -> Self {
        Self::from_toml_str(GRID_SMALL, None).expect("shipped config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        DimConstraints::new(self.complex.d_min, self.complex.d_max)
            .map_err(|e| CcsdError::Config(format!("complex: {e}")))?;
        if let Some(lift) = &self.dataset.lift {
            ensure!(lift.constraints == self.complex, Config, "dataset.lift bounds differ from [complex]");
        }
        self.dataset.validate()?;
        for (r, spec) in ["x", "a", "f"].iter().zip(self.specs()) {
            spec.validate().map_err(|e| CcsdError::Config(format!("model.{r}: {e}")))?;
        }
        ensure!(
            self.model.x.rank() == 0 && self.model.a.rank() == 1 && self.model.f.rank() == 2,
            Config,
            "model.x, model.a, model.f must score ranks 0, 1 and 2"
        );
        for (r, s) in [("x", &self.sde.x), ("a", &self.sde.a), ("f", &self.sde.f)] {
            s.validate().map_err(|e| CcsdError::Config(format!("sde.{r}: {e}")))?;
        }
        self.train.validate()?;
        self.generation_config().validate()?;
        ensure!(self.generation.num_samples >= 1, Config, "generation.num_samples must be >= 1");
        Ok(())
    }

    pub fn specs(&self) -> [ScoreModelSpec; 3] {
        [self.model.x.clone(), self.model.a.clone(), self.model.f.clone()]
    }

    /// Dimensions of the padded tensors the networks are built for.
    pub fn dims(&self) -> DataDims {
        DataDims {
            n_max: self.dataset.max_nodes(),
            f0: self.dataset.feature_dim,
            f1: 1,
            f2: 1,
            constraints: self.complex,
        }
    }

    /// Freshly initialized networks.
    pub fn models(&self) -> Result<ScoreModels> {
        let dims = self.dims();
        let [x, a, f] = self.specs();
        ScoreModels::new(
            ScoreModel::new(x, dims, self.seed)?,
            ScoreModel::new(a, dims, self.seed.wrapping_add(1))?,
            ScoreModel::new(f, dims, self.seed.wrapping_add(2))?,
        )
    }

    pub fn generation_config(&self) -> GenerationConfig {
        let g = &self.generation;
        GenerationConfig {
            sampler: self.sampler.clone(),
            adjacency: g.adjacency,
            support: self.dataset.lift.as_ref().map_or(SupportRule::AllPairs, |l| l.support_rule()),
            incidence_threshold: g.incidence_threshold,
            node_features: g.node_features,
            chunk: g.chunk,
        }
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CcsdError::Config(e.to_string()))
    }
}
