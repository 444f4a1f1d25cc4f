use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{Analysis, AnalysisError, MorinType, Verdict, GAP_MIN};
use crate::expr::{simplify, symbolic_determinant, Expr};
use crate::linalg::{dot, norm, numeric_rank};
use crate::model::{combinations, equation_count, FrameMode};
use crate::solver::{gauss_newton, grid_seeds, solve_points, System, Workspace};

/// Witnesses kept per failed condition and depth.
const MAX_WITNESSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub depth: usize,
    pub condition: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorankReport {
    pub verdict: Verdict,
    /// Sampled points of M.
    pub samples: usize,
    /// Sample count per decided coframe rank.
    pub rank_counts: BTreeMap<usize, usize>,
    /// Samples whose rank decision had too little separation.
    pub undecided: usize,
    /// Solutions of the system "all minors of size p+n−1 vanish".
    pub low_rank_points: usize,
    pub sigma1_points: usize,
    /// Σ¹ chart Jacobians of full rank at every Σ¹ point.
    pub transversal: Verdict,
    /// Largest `|ωᵢ·∇G_j| / (|ωᵢ||∇G_j|)` over the samples (frames on a
    /// constrained manifold only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tangency_defect: Option<f64>,
    pub witnesses: Vec<Witness>,
}

/// Corank-1 check: the coframe rank is never below n − 1 on sampled points
/// of M or on solutions of the minor system, and Σ¹ is cut out transversally
/// at its solved points. `samples` is the sampling grid resolution.
pub fn check_corank1(an: &mut Analysis, samples: usize) -> Result<CorankReport, AnalysisError> {
    an.compute_strata(1.min(an.scene().n()))?;
    let scene = an.scene();
    let tol = scene.settings.tol_rank;
    let regular = scene.regular_rank();
    let mut opts = an.options().clone();
    opts.grid = samples.max(8);

    let seeds = grid_seeds(scene.constraint_system(), &opts);
    let points: Vec<Vec<f64>> = if scene.codim() == 0 {
        seeds
    } else {
        seeds
            .par_iter()
            .map_init(Workspace::default, |ws, s| {
                let r = gauss_newton(
                    scene.constraint_system(),
                    s,
                    opts.tol_residual,
                    opts.newton_max_iter,
                    ws,
                );
                (r.converged && opts.region.contains(&r.x, 1e-9 * opts.region.diameter()))
                    .then_some(r.x)
            })
            .flatten()
            .collect()
    };
    let tangency = scene.mode == FrameMode::Frame && scene.codim() > 0;
    let per_point: Vec<Option<(usize, bool, f64)>> = points
        .par_iter()
        .map_init(Workspace::default, |ws, x| {
            let r = scene.rank_matrix(x, &mut Vec::new())?;
            let rep = numeric_rank(&r, tol);
            let mut defect = 0.0f64;
            if tangency {
                let g = scene.constraint_system().jacobian(x, ws)?;
                for i in 0..r.rows() {
                    for j in 0..g.rows() {
                        let d = norm(r.row(i)) * norm(g.row(j));
                        if d > 0.0 {
                            defect = defect.max(dot(r.row(i), g.row(j)).abs() / d);
                        }
                    }
                }
            }
            Some((rep.rank, rep.is_clear(GAP_MIN), defect))
        })
        .collect();

    let mut witnesses = Vec::new();
    let mut rank_counts = BTreeMap::new();
    let mut undecided = 0;
    let mut max_defect = 0.0f64;
    let mut low_sampled = 0;
    for (x, p) in points.iter().zip(&per_point) {
        let Some((rank, clear, defect)) = *p else {
            undecided += 1;
            continue;
        };
        max_defect = max_defect.max(defect);
        if !clear {
            undecided += 1;
            continue;
        }
        *rank_counts.entry(rank).or_insert(0) += 1;
        if rank + 2 <= regular {
            low_sampled += 1;
            if low_sampled <= MAX_WITNESSES {
                witnesses.push(Witness {
                    point: x.clone(),
                    depth: 1,
                    condition: "rank".into(),
                    message: format!("coframe rank drops to {} (corank {})", rank, regular - rank),
                });
            }
        }
    }

    let low = low_rank_system(an)?;
    let low_points = match &low {
        Some(sys) => solve_points(sys, an.options()).points,
        None => Vec::new(),
    };
    for p in low_points.iter().take(MAX_WITNESSES) {
        witnesses.push(Witness {
            point: p.x.clone(),
            depth: 1,
            condition: "rank".into(),
            message: "all minors of size n − 1 vanish: coframe rank ≤ n − 2".into(),
        });
    }

    let mut transversal = Vec::new();
    let mut fails = 0;
    if let Some(s1) = an.stratum(1) {
        for p in &s1.points {
            let v = if p.note.as_deref().is_some_and(|n| n.starts_with("no chart")) {
                Verdict::No
            } else {
                Verdict::from_rank(&p.rank, p.expected_rank)
            };
            if v == Verdict::No {
                fails += 1;
                if fails <= MAX_WITNESSES {
                    witnesses.push(Witness {
                        point: p.x.clone(),
                        depth: 1,
                        condition: "transversality".into(),
                        message: format!(
                            "Σ¹ chart Jacobian has rank {} < {}",
                            p.rank.rank, p.expected_rank
                        ),
                    });
                }
            }
            transversal.push(v);
        }
    }
    let transversal = Verdict::all(transversal);
    let rank_ok = if low_sampled > 0 || !low_points.is_empty() {
        Verdict::No
    } else {
        Verdict::Yes
    };
    Ok(CorankReport {
        verdict: Verdict::all([rank_ok, transversal]),
        samples: points.len(),
        rank_counts,
        undecided,
        low_rank_points: low_points.len(),
        sigma1_points: an.stratum(1).map_or(0, |s| s.len()),
        transversal,
        max_tangency_defect: tangency.then_some(max_defect),
        witnesses,
    })
}

/// `G` together with every minor of size `p + n − 1` of the rank rows;
/// `None` when that size is 0.
fn low_rank_system(an: &Analysis) -> Result<Option<System>, AnalysisError> {
    let scene = an.scene();
    let size = scene.fixed_rows() + scene.n() - 1;
    if size == 0 {
        return Ok(None);
    }
    let rows = scene.rank_rows();
    let mut eqs: Vec<Expr> = scene.constraints.clone();
    for rsub in combinations(rows.len(), size) {
        for csub in combinations(scene.dim(), size) {
            let m: Vec<Vec<Expr>> = rsub
                .iter()
                .map(|&i| csub.iter().map(|&j| rows[i][j].clone()).collect())
                .collect();
            let d = simplify(&symbolic_determinant(&m).map_err(crate::model::ModelError::from)?);
            if !d.is_zero() && !eqs.contains(&d) {
                eqs.push(d);
            }
        }
    }
    Ok(Some(System::new(eqs, scene.dim())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthCheck {
    pub depth: usize,
    pub points: usize,
    /// `dim(⟨ζ⟩ ∩ N*Σ^{k−1}) ≤ 1` at every point.
    pub condition_i: Verdict,
    /// Full rank of the chart Jacobian including `dδ_k` at every point.
    pub condition_ii: Verdict,
    /// Smallest gap ratio among the condition (ii) decisions.
    pub min_gap_ii: f64,
    /// Points whose classification was inconclusive.
    pub inconclusive_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumLine {
    pub depth: usize,
    #[serde(rename = "type")]
    pub kind: MorinType,
    pub count: usize,
    pub dim: usize,
    pub components: Option<usize>,
}

impl StratumLine {
    fn describe(&self) -> String {
        if self.count == 0 {
            return format!("{} (empty)", self.kind);
        }
        match (self.dim, self.components) {
            (0, _) => format!(
                "{} ({} point{})",
                self.kind,
                self.count,
                if self.count == 1 { "" } else { "s" }
            ),
            (1, Some(1)) => format!("{} (curve)", self.kind),
            (1, Some(c)) => format!("{} (curve, {c} components)", self.kind),
            (d, _) => format!("{} (dimension {d}, {} samples)", self.kind, self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorinReport {
    pub verdict: Verdict,
    pub k_max: usize,
    pub depths: Vec<DepthCheck>,
    pub strata: Vec<StratumLine>,
    pub summary: String,
    pub witnesses: Vec<Witness>,
}

/// Conditions (i) and (ii) of the local description of `Σ^k` at every
/// solved point, for `k ≤ k_max`.
pub fn check_morin(an: &mut Analysis, k_max: usize) -> Result<MorinReport, AnalysisError> {
    an.compute_strata(k_max)?;
    let scene = an.scene();
    let dim = scene.dim();
    let tol = scene.settings.tol_rank;
    let mut depths = Vec::new();
    let mut witnesses = Vec::new();
    let mut lines = Vec::new();
    for k in 1..=k_max {
        let s = an.stratum(k).expect("computed above");
        let mut cond_i = Vec::new();
        let mut cond_ii = Vec::new();
        let mut min_gap = f64::INFINITY;
        let (mut fail_i, mut fail_ii) = (0, 0);
        for p in &s.points {
            let v = Verdict::from_rank(&p.rank, p.expected_rank);
            min_gap = min_gap.min(p.rank.gap_ratio);
            cond_ii.push(v);
            if v == Verdict::No {
                fail_ii += 1;
                if fail_ii <= MAX_WITNESSES {
                    let message = if k == 1 {
                        format!(
                            "Σ¹ is not cut out transversally: chart rank {} < {}",
                            p.rank.rank, p.expected_rank
                        )
                    } else {
                        format!(
                            "condition (ii) fails on Σ^{}: chart Jacobian rank {} < {}; the differential of δ_{k} lies in the conormal span of Σ^{} (∇δ_{k} ≈ 0 along Σ^{})",
                            k,
                            p.rank.rank,
                            p.expected_rank,
                            k - 1,
                            k - 1
                        )
                    };
                    witnesses.push(Witness {
                        point: p.x.clone(),
                        depth: k,
                        condition: "ii".into(),
                        message,
                    });
                }
            }
            if k >= 2 {
                let v = condition_i(an, &p.x, k, dim, tol);
                if v == Verdict::No {
                    fail_i += 1;
                    if fail_i <= MAX_WITNESSES {
                        witnesses.push(Witness {
                            point: p.x.clone(),
                            depth: k,
                            condition: "i".into(),
                            message: format!(
                                "supplement meets the conormal of Σ^{} in dimension ≥ 2",
                                k - 1
                            ),
                        });
                    }
                }
                cond_i.push(v);
            }
        }
        depths.push(DepthCheck {
            depth: k,
            points: s.points.len(),
            condition_i: Verdict::all(cond_i),
            condition_ii: Verdict::all(cond_ii),
            min_gap_ii: min_gap,
            inconclusive_points: s.count(MorinType::Inconclusive),
        });
        lines.push(StratumLine {
            depth: k,
            kind: MorinType::A(k),
            count: s.count(MorinType::A(k)),
            dim: s.expected_dim,
            components: (s.expected_dim == 1 && !s.curves.is_empty()).then_some(s.curves.len()),
        });
    }
    let verdict = Verdict::all(depths.iter().flat_map(|d| [d.condition_i, d.condition_ii]));
    let head = match verdict {
        Verdict::Yes => "Morin",
        Verdict::No => "not Morin",
        Verdict::Inconclusive => "inconclusive",
    };
    let summary = format!(
        "{head}, strata: {}",
        lines
            .iter()
            .map(StratumLine::describe)
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(MorinReport {
        verdict,
        k_max,
        depths,
        strata: lines,
        summary,
        witnesses,
    })
}

/// `rank[∇E_{k−1}; ζ] ≥ N − 1` on the depth-k chart at `x`.
fn condition_i(an: &Analysis, x: &[f64], k: usize, dim: usize, tol: f64) -> Verdict {
    let scene = an.scene();
    let Ok(chart) = an.atlas().chart_at(x, k) else {
        return Verdict::Inconclusive;
    };
    let mut ws = Workspace::default();
    let (Some(j), Some(r)) = (
        chart.system.jacobian(x, &mut ws),
        scene.rank_matrix(x, &mut Vec::new()),
    ) else {
        return Verdict::Inconclusive;
    };
    let w = j.select_rows(&(0..equation_count(scene, k - 1)).collect::<Vec<_>>());
    let p = scene.fixed_rows();
    let zeta: Vec<usize> = chart.supplements[k - 2]
        .coframe
        .iter()
        .map(|&i| p + i)
        .collect();
    let m = w.vstack(&r.select_rows(&zeta));
    Verdict::from_rank(&numeric_rank(&m, tol), dim - 1)
}
