use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use morin_core::analysis::{Analysis, GAP_MIN, MARGIN_ACCEPT, MAX_CHART_SWITCHES};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize)]
pub struct SceneInfo {
    pub path: String,
    /// SHA-256 of the scene file bytes.
    pub sha256: String,
    pub ambient_dim: usize,
    pub constraints: usize,
    pub n: usize,
    pub mode: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub exit_code: i32,
    /// `yes`, `no`, `inconclusive` or `ok`.
    pub verdict: String,
    pub message: String,
}

/// The JSON document every command emits.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub tool: String,
    pub command: String,
    pub scene: SceneInfo,
    pub options: Map<String, Value>,
    pub status: Status,
    pub results: Value,
    pub diagnostics: Value,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(command: &str, path: &Path, bytes: &[u8], an: &Analysis) -> Report {
        let scene = an.scene();
        let o = an.options();
        let options = json!({
            "seed": an.seed(),
            "grid": o.grid,
            "tol_residual": o.tol_residual,
            "tol_rank": o.tol_rank,
            "newton_max_iter": o.newton_max_iter,
            "dedup_radius": o.dedup_radius,
            "trace_step": o.trace_step,
            "box": { "lo": o.region.lo, "hi": o.region.hi },
            "gap_min": GAP_MIN,
            "margin_accept": MARGIN_ACCEPT,
            "max_chart_switches": MAX_CHART_SWITCHES,
        });
        Report {
            schema_version: SCHEMA_VERSION,
            tool: format!("morin {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            scene: SceneInfo {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(bytes)),
                ambient_dim: scene.dim(),
                constraints: scene.codim(),
                n: scene.n(),
                mode: format!("{:?}", scene.mode).to_lowercase(),
            },
            options: match options {
                Value::Object(m) => m,
                _ => unreachable!(),
            },
            status: Status {
                exit_code: 0,
                verdict: "ok".into(),
                message: String::new(),
            },
            results: Value::Null,
            diagnostics: Value::Null,
            timings: BTreeMap::new(),
        }
    }

    pub fn option(&mut self, key: &str, value: impl Serialize) {
        self.options.insert(key.into(), to_value(value));
    }

    pub fn set_status(&mut self, exit_code: i32, verdict: &str, message: impl Into<String>) {
        self.status = Status {
            exit_code,
            verdict: verdict.into(),
            message: message.into(),
        };
    }

    pub fn to_json(&self, with_timings: bool) -> String {
        let mut v = to_value(self);
        if !with_timings {
            if let Value::Object(m) = &mut v {
                m.remove("timings");
            }
        }
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }
}

pub(crate) fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// Point-cloud CSV with columns `x1, …, xN, depth, type`.
pub fn csv_table<'a>(
    dim: usize,
    rows: impl IntoIterator<Item = (&'a [f64], usize, String)>,
) -> String {
    let mut out = String::new();
    for i in 1..=dim {
        let _ = write!(out, "x{i},");
    }
    out.push_str("depth,type\n");
    for (x, depth, kind) in rows {
        for v in x {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{depth},{kind}");
    }
    out
}
