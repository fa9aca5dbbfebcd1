//! End-to-end runs: dataset building, training, sampling and the artifact
//! directory every command writes into.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex::{CombinatorialComplex, ComplexTensor};
use crate::config::RunConfig;
use crate::data_io::{build_dataset, spec_hash, Checkpoint, CheckpointHeader, FORMAT_VERSION};
use crate::error::{ensure, CcsdError, Result};
use crate::nn::ParamStore;
use crate::pipeline::{sample, EmpiricalNodeDist};
use crate::training::{train, LossRecord, ScoreModels, TrainOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_REV: &str = env!("CCSD_GIT_REV");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Everything needed to rerun a command. Holds no timestamps or absolute
/// paths, so identical runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub options: serde_json::Value,
    pub seed: Option<u64>,
    /// Resolved configuration as TOML.
    pub config: Option<String>,
    pub version: String,
    pub git: String,
    pub artifacts: Vec<Artifact>,
}

/// Output directory. Files are written through a temporary name and renamed,
/// and `manifest.json` is written last, so its presence means every listed
/// artifact is complete.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CcsdError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn finish(
        self,
        command: &str,
        options: serde_json::Value,
        seed: Option<u64>,
        config: Option<&RunConfig>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            options,
            seed,
            config: config.map(RunConfig::to_toml_string).transpose()?,
            version: VERSION.to_string(),
            git: GIT_REV.to_string(),
            artifacts: self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.root.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CcsdError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CcsdError::io(path, e))
}

/// The configured dataset and its tensors padded to the networks' size.
pub fn load_data(cfg: &RunConfig) -> Result<(Vec<CombinatorialComplex>, Vec<ComplexTensor>)> {
    let ccs = build_dataset(&cfg.dataset, cfg.complex)?;
    let n_max = cfg.dims().n_max;
    let tensors = ccs.iter().map(|cc| cc.to_tensor_padded(n_max)).collect::<Result<_>>()?;
    Ok((ccs, tensors))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub outcome: TrainOutcome,
    pub data: Vec<CombinatorialComplex>,
    /// Node counts of the training split.
    pub nodes: EmpiricalNodeDist,
    /// Sampling parameters with the lowest test loss.
    pub checkpoint: Checkpoint,
}

impl Trained {
    pub fn test_set(&self) -> Vec<CombinatorialComplex> {
        self.outcome.test_indices.iter().map(|&i| self.data[i].clone()).collect()
    }
}

pub fn train_run(cfg: &RunConfig, progress: impl FnMut(&LossRecord)) -> Result<Trained> {
    let (data, tensors) = load_data(cfg)?;
    let outcome = train(cfg.models()?, &tensors, &cfg.train, &cfg.sde, progress)?;
    let train_set: Vec<ComplexTensor> = outcome.train_indices.iter().map(|&i| tensors[i].clone()).collect();
    let nodes = EmpiricalNodeDist::from_tensors(&train_set)?;
    let specs = cfg.specs();
    let dims = cfg.dims();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        spec_hash: spec_hash(&specs, &dims),
        models: specs,
        dims,
        sdes: cfg.sde,
        seed: cfg.seed,
        epoch: outcome.best_epoch,
        ema: cfg.train.ema_decay.is_some(),
    };
    let [x, a, f] = &outcome.best;
    let checkpoint = Checkpoint::from_stores(header, [x, a, f]);
    Ok(Trained { outcome, data, nodes, checkpoint })
}

/// Networks for `cfg` holding the checkpoint's parameters. Refuses a
/// checkpoint built for other networks, data dimensions or SDEs.
pub fn restore(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<(ScoreModels, [ParamStore; 3])> {
    ckpt.check_compatible(&cfg.specs(), &cfg.dims())?;
    if ckpt.header.sdes != cfg.sde {
        return Err(CcsdError::Checkpoint("trained under different SDEs than the configuration".into()));
    }
    let models = cfg.models()?;
    let mut stores = [models.x.store.clone(), models.a.store.clone(), models.f.store.clone()];
    let [x, a, f] = &mut stores;
    ckpt.load_into([x, a, f])?;
    Ok((models, stores))
}

/// `num` quantized samples from the checkpoint with node counts drawn from `nodes`.
pub fn sample_run(
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    nodes: &EmpiricalNodeDist,
    num: usize,
) -> Result<Vec<ComplexTensor>> {
    ensure!(num >= 1, Config, "number of samples must be >= 1");
    let (models, stores) = restore(cfg, ckpt)?;
    let [x, a, f] = &stores;
    sample(&models, [x, a, f], &cfg.sde, &cfg.generation_config(), nodes, num)
}

/// Unpadded complexes of quantized samples.
pub fn to_complexes(samples: &[ComplexTensor]) -> Result<Vec<CombinatorialComplex>> {
    samples.iter().map(ComplexTensor::to_complex).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub num_samples: usize,
    /// Samples passing every structural check.
    pub valid: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub mean_cells: f64,
    pub node_counts: BTreeMap<usize, usize>,
}

pub fn summarize(ccs: &[CombinatorialComplex]) -> SampleSummary {
    let n = ccs.len().max(1) as f64;
    let mut node_counts = BTreeMap::new();
    for cc in ccs {
        *node_counts.entry(cc.n).or_insert(0) += 1;
    }
    SampleSummary {
        num_samples: ccs.len(),
        valid: ccs.iter().filter(|cc| cc.validate().is_ok()).count(),
        mean_nodes: ccs.iter().map(|cc| cc.n as f64).sum::<f64>() / n,
        mean_edges: ccs.iter().map(|cc| cc.edges.len() as f64).sum::<f64>() / n,
        mean_cells: ccs.iter().map(|cc| cc.cells.len() as f64).sum::<f64>() / n,
        node_counts,
    }
}
