//! Score networks with reverse-mode gradients.

pub mod gradcheck;
pub mod layers;
pub mod models;
pub mod params;
pub mod spec;
pub mod tape;

pub use models::{flatten3, live_incidence_rows, unflatten3, ScoreModel};
pub use params::{ParamId, ParamStore};
pub use spec::{AttentionSpec, BaseHodgeSpec, DataDims, HodgeSpec, ScoreFSpec, ScoreModelSpec, ScoreXSpec};
pub use tape::{Gradients, SparseMat, Tape, Var};
