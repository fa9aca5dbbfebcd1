//! Serializable architecture descriptions.

use serde::{Deserialize, Serialize};

use crate::complex::DimConstraints;
use crate::error::{ensure, Result};

/// Node-feature network: stacked GCNs, then an MLP over all hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreXSpec {
    pub depth: usize,
    pub nhid: usize,
    pub final_linears: usize,
}

/// Attention track shared by both adjacency networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub depth: usize,
    pub nhid: usize,
    pub adim: usize,
    pub heads: usize,
    pub c_init: usize,
    pub c_hid: usize,
    pub c_final: usize,
    pub num_linears: usize,
    pub final_linears: usize,
}

/// Hodge attention track of the adjacency network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HodgeSpec {
    pub depth: usize,
    pub num_linears: usize,
    pub hidden: usize,
    pub c_hid: usize,
    pub c_final: usize,
    pub heads: usize,
    pub attn_dim: usize,
}

/// Hodge track of the baseline adjacency network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseHodgeSpec {
    pub depth: usize,
    pub num_linears: usize,
    pub hidden: usize,
    pub c_hid: usize,
    pub c_final: usize,
}

/// Incidence network over the channels `F, HF, .., H^(power-1) F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFSpec {
    pub power: usize,
    pub depth: usize,
    pub c_hid: usize,
    pub num_linears: usize,
    pub final_linears: usize,
    pub hodge_mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModelSpec {
    ScoreX(ScoreXSpec),
    ScoreACc { attention: AttentionSpec, hodge: HodgeSpec },
    ScoreABaseCc { attention: AttentionSpec, hodge: BaseHodgeSpec },
    ScoreF(ScoreFSpec),
}

/// Data dimensions a network is built for. All inputs are padded to `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataDims {
    pub n_max: usize,
    pub f0: usize,
    pub f1: usize,
    pub f2: usize,
    pub constraints: DimConstraints,
}

fn positive(name: &str, v: usize) -> Result<()> {
    ensure!(v >= 1, Config, "{name} must be >= 1");
    Ok(())
}

impl AttentionSpec {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("attention.depth", self.depth),
            ("attention.nhid", self.nhid),
            ("attention.adim", self.adim),
            ("attention.heads", self.heads),
            ("attention.c_init", self.c_init),
            ("attention.c_hid", self.c_hid),
            ("attention.c_final", self.c_final),
            ("attention.num_linears", self.num_linears),
            ("attention.final_linears", self.final_linears),
        ] {
            positive(k, v)?;
        }
        ensure!(self.adim % self.heads == 0, Config, "attention.adim must be divisible by attention.heads");
        Ok(())
    }
}

impl ScoreModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreModelSpec::ScoreX(s) => {
                positive("depth", s.depth)?;
                positive("nhid", s.nhid)?;
                positive("final_linears", s.final_linears)
            }
            ScoreModelSpec::ScoreACc { attention, hodge } => {
                attention.validate()?;
                for (k, v) in [
                    ("hodge.num_linears", hodge.num_linears),
                    ("hodge.hidden", hodge.hidden),
                    ("hodge.c_hid", hodge.c_hid),
                    ("hodge.c_final", hodge.c_final),
                    ("hodge.heads", hodge.heads),
                    ("hodge.attn_dim", hodge.attn_dim),
                ] {
                    positive(k, v)?;
                }
                ensure!(
                    hodge.attn_dim % hodge.heads == 0,
                    Config,
                    "hodge.attn_dim must be divisible by hodge.heads"
                );
                Ok(())
            }
            ScoreModelSpec::ScoreABaseCc { attention, hodge } => {
                attention.validate()?;
                for (k, v) in [
                    ("hodge.num_linears", hodge.num_linears),
                    ("hodge.hidden", hodge.hidden),
                    ("hodge.c_hid", hodge.c_hid),
                    ("hodge.c_final", hodge.c_final),
                ] {
                    positive(k, v)?;
                }
                Ok(())
            }
            ScoreModelSpec::ScoreF(s) => {
                positive("power", s.power)?;
                positive("c_hid", s.c_hid)?;
                positive("num_linears", s.num_linears)?;
                positive("final_linears", s.final_linears)
            }
        }
    }

    /// The rank this network scores: 0, 1 or 2.
    pub fn rank(&self) -> usize {
        match self {
            ScoreModelSpec::ScoreX(_) => 0,
            ScoreModelSpec::ScoreACc { .. } | ScoreModelSpec::ScoreABaseCc { .. } => 1,
            ScoreModelSpec::ScoreF(_) => 2,
        }
    }
}
