//! Scenes and the symbolic defining equations of their singular strata.

mod chart;
mod global;
mod scene;

use thiserror::Error;

use crate::expr::ExprError;

pub use chart::{
    audit_hint, build_chain, build_delta_k, combinations, equation_count, intersection_dim,
    select_pivot, select_supplement, Atlas, ChartKey, ChartMargins, HintAudit, PivotFamily,
    PivotSelection, StratumChart, SupplementSelection, HINT_SAMPLES, SUPPLEMENT_TOL,
};
pub use global::{global_equations, stratum_dim, xi_rank_minors};
pub use scene::{FrameMode, Scene, SceneSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("cannot read scene: {0}")]
    Io(String),
    #[error("malformed scene file: {0}")]
    Format(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("in {field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error(transparent)]
    Build(#[from] ExprError),
    #[error("no nonvanishing pivot minor at {0:?}")]
    NoPivot(Vec<f64>),
    #[error("bordered minors are not transversal at {0:?}")]
    NotTransversal(Vec<f64>),
    #[error("no supplement for depth {depth} at {point:?}")]
    NoSupplement { depth: usize, point: Vec<f64> },
    #[error("scene functions undefined at {0:?}")]
    Undefined(Vec<f64>),
}
