use serde::Serialize;

use super::{MorinType, GAP_MIN};
use crate::linalg::{numeric_rank, Mat};
use crate::model::{equation_count, intersection_dim, Atlas};
use crate::solver::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub point: Vec<f64>,
    #[serde(rename = "type")]
    pub kind: MorinType,
    /// Entry `j` is `dim(⟨ω⟩ ∩ N*Σ^j)` (with `Σ^0 = M`), for every depth
    /// visited.
    pub intersection_dims: Vec<usize>,
    /// Gap ratio of the coframe rank decision, then of each entry of
    /// `intersection_dims`.
    pub gap_ratios: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Morin type of `x ∈ M`: the coframe rank decides regular versus
/// singular, then the intersection dimension with the conormal of each
/// stratum decides membership in the next one.
pub fn classify_point(atlas: &Atlas, x: &[f64]) -> Classification {
    let scene = atlas.scene();
    let tol = scene.settings.tol_rank;
    let mut out = Classification {
        point: x.to_vec(),
        kind: MorinType::Inconclusive,
        intersection_dims: Vec::new(),
        gap_ratios: Vec::new(),
        note: None,
    };
    let Some(r) = scene.rank_matrix(x, &mut Vec::new()) else {
        out.note = Some("coframe undefined".into());
        return out;
    };
    let rep = numeric_rank(&r, tol);
    out.gap_ratios.push(rep.gap_ratio);
    if !rep.is_clear(GAP_MIN) {
        out.note = Some("coframe rank is not clearly separated".into());
        return out;
    }
    let regular = scene.regular_rank();
    if rep.rank >= regular {
        out.kind = MorinType::Regular;
        return out;
    }
    if rep.rank + 1 < regular {
        out.note = Some(format!("coframe rank drops by {}", regular - rep.rank));
        return out;
    }
    let n = scene.n();
    let mut ws = Workspace::default();
    let g = match scene.constraint_system().jacobian(x, &mut ws) {
        Some(g) => g,
        None => {
            out.note = Some("constraints undefined".into());
            return out;
        }
    };
    match intersection_dim(scene, &g, x, tol) {
        Some((d, gap)) => {
            out.intersection_dims.push(d);
            out.gap_ratios.push(gap);
        }
        None => {
            out.note = Some("intersection dimension undefined".into());
            return out;
        }
    }
    let mut k = 1;
    while k < n {
        let chart = match atlas.chart_at(x, k) {
            Ok(c) => c,
            Err(e) => {
                out.note = Some(format!("no depth-{k} chart: {e}"));
                return out;
            }
        };
        let Some(jac) = chart.system.jacobian(x, &mut ws) else {
            out.note = Some("chart equations undefined".into());
            return out;
        };
        let w: Mat = jac.select_rows(&(0..equation_count(scene, k)).collect::<Vec<_>>());
        let Some((d, gap)) = intersection_dim(scene, &w, x, tol) else {
            out.note = Some("intersection dimension undefined".into());
            return out;
        };
        out.intersection_dims.push(d);
        out.gap_ratios.push(gap);
        if gap < GAP_MIN {
            out.note = Some(format!("membership in Σ^{} is not clearly decided", k + 1));
            return out;
        }
        if d > k {
            out.note = Some(format!(
                "intersection with the conormal of Σ^{k} has dimension {d} > {k}"
            ));
            return out;
        }
        if d < k {
            break;
        }
        k += 1;
    }
    out.kind = MorinType::A(k);
    out
}
