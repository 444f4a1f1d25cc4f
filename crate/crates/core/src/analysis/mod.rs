//! Strata computation, Morin checks, zeros of generic 1-forms and the mod 2
//! Euler congruence.

mod check;
mod classify;
mod euler;
mod strata;
mod zeros;

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::linalg::RankReport;
use crate::model::ModelError;

pub use check::{
    check_corank1, check_morin, CorankReport, DepthCheck, MorinReport, StratumLine, Witness,
};
pub use classify::{classify_point, Classification};
pub use euler::{
    check_compactness, draw_covector, euler_congruence, euler_via_morse, CompactnessReport,
    CongruenceReport, DepthRow, DrawRecord, GenericCovector, IndependentChi, MorseReport,
    MAX_DRAWS, SHELL_FRACTION,
};
pub use strata::{Analysis, ChartSummary, Strata, Stratum, StratumPoint, StratumStats};
pub use zeros::{
    find_restricted_zeros, find_xi_zeros, nondegeneracy, BorderedCheck, CriticalPoint,
    PropertyCheck, TopCheck, ZeroChecks, ZeroRecord, ZeroSet,
};

/// Separation a rank decision needs before it counts as definite.
pub const GAP_MIN: f64 = 1e2;
/// A solved point is kept on its chart when every margin is at least this.
pub const MARGIN_ACCEPT: f64 = 0.5;
/// Re-anchoring attempts per seed.
pub const MAX_CHART_SWITCHES: usize = 3;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{0}")]
    Usage(String),
}

/// Three-valued outcome of a numerical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

impl Verdict {
    /// `Yes` when the rank equals `expected` with a clear gap, `No` when it
    /// is lower with a clear gap.
    pub fn from_rank(r: &RankReport, expected: usize) -> Verdict {
        if !r.is_clear(GAP_MIN) {
            Verdict::Inconclusive
        } else if r.rank >= expected {
            Verdict::Yes
        } else {
            Verdict::No
        }
    }

    /// Combines independent checks: any `No` wins, then any `Inconclusive`.
    pub fn all(items: impl IntoIterator<Item = Verdict>) -> Verdict {
        items
            .into_iter()
            .fold(Verdict::Yes, |acc, v| match (acc, v) {
                (Verdict::No, _) | (_, Verdict::No) => Verdict::No,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
                _ => Verdict::Yes,
            })
    }
}

/// Morin type of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MorinType {
    Regular,
    /// `A_k`, k ≥ 1.
    A(usize),
    Inconclusive,
}

impl MorinType {
    pub fn depth(self) -> Option<usize> {
        match self {
            MorinType::Regular => Some(0),
            MorinType::A(k) => Some(k),
            MorinType::Inconclusive => None,
        }
    }
}

impl fmt::Display for MorinType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MorinType::Regular => f.write_str("regular"),
            MorinType::A(k) => write!(f, "A{k}"),
            MorinType::Inconclusive => f.write_str("inconclusive"),
        }
    }
}

impl Serialize for MorinType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
