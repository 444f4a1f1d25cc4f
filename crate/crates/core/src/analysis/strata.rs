use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{classify_point, AnalysisError, MorinType, MARGIN_ACCEPT, MAX_CHART_SWITCHES};
use crate::expr::Expr;
use crate::linalg::{determinant, numeric_rank, RankReport};
use crate::model::{audit_hint, stratum_dim, Atlas, ChartKey, HintAudit, Scene, StratumChart};
use crate::solver::{
    dedup_points, gauss_newton, solve_points, trace_curves, CurveComponent, SolveOptions, System,
    Workspace,
};

/// A solved point of a stratum with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumPoint {
    pub x: Vec<f64>,
    /// Residual of the chart equations.
    pub residual: f64,
    /// Rank of the chart Jacobian. Full rank is condition (ii) of the local
    /// description of the stratum.
    pub rank: RankReport,
    pub expected_rank: usize,
    /// Determinant of the chart Jacobian when it is square.
    pub det: Option<f64>,
    /// Smallest validity margin of the chart the point was solved on.
    pub margin: f64,
    #[serde(rename = "type")]
    pub kind: MorinType,
    pub intersection_dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StratumStats {
    pub seeds: usize,
    pub converged: usize,
    /// Seeds where no chart could be built.
    pub failed_charts: usize,
    /// Converged points dropped after exhausting chart switches.
    pub rejected: usize,
    pub chart_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratum {
    pub depth: usize,
    pub expected_dim: usize,
    pub points: Vec<StratumPoint>,
    /// Traced components (one-dimensional Σ¹ only).
    pub curves: Vec<CurveComponent>,
    pub stats: StratumStats,
}

impl Stratum {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, kind: MorinType) -> usize {
        self.points.iter().filter(|p| p.kind == kind).count()
    }

    /// Euler characteristic where it can be read off directly: the point
    /// count of a finite stratum, 0 for a union of closed traced curves.
    pub fn euler_characteristic(&self) -> Option<i64> {
        if self.points.is_empty() {
            return Some(0);
        }
        match self.expected_dim {
            0 => Some(self.points.len() as i64),
            1 if !self.curves.is_empty() && self.curves.iter().all(|c| c.closed && c.complete) => {
                Some(0)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartSummary {
    pub key: ChartKey,
    pub depth: usize,
    pub equations: usize,
}

/// Everything computed by [`Analysis::compute_strata`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Strata {
    pub strata: Vec<Stratum>,
    pub hint_audits: Vec<HintAudit>,
    pub charts: Vec<ChartSummary>,
}

/// Analysis state for one scene: the atlas, the strata found so far and the
/// outcome of hint audits.
#[derive(Debug)]
pub struct Analysis {
    scene: Scene,
    atlas: Atlas,
    opts: SolveOptions,
    seed: u64,
    accepted_hints: BTreeMap<usize, Expr>,
    hint_audits: Vec<HintAudit>,
    strata: Vec<Stratum>,
}

enum Outcome {
    Solved {
        x: Vec<f64>,
        residual: f64,
        chart: Arc<StratumChart>,
        margin: f64,
        switches: usize,
    },
    NoChart,
    NoConvergence,
    Rejected(usize),
}

impl Analysis {
    pub fn new(scene: &Scene) -> Result<Analysis, AnalysisError> {
        let opts = scene.solve_options();
        opts.validate().map_err(AnalysisError::Usage)?;
        Ok(Analysis {
            atlas: Atlas::new(scene)?,
            seed: scene.rng_seed.unwrap_or(0),
            scene: scene.clone(),
            opts,
            accepted_hints: BTreeMap::new(),
            hint_audits: Vec::new(),
            strata: Vec::new(),
        })
    }

    /// Seed for the sampling done by hint audits.
    pub fn with_seed(mut self, seed: u64) -> Analysis {
        self.seed = seed;
        self
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hint_audits(&self) -> &[HintAudit] {
        &self.hint_audits
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    /// `Σ^depth`, if already computed.
    pub fn stratum(&self, depth: usize) -> Option<&Stratum> {
        depth.checked_sub(1).and_then(|i| self.strata.get(i))
    }

    /// Computes `Σ^1, …, Σ^k_max` (reusing strata already computed).
    pub fn compute_strata(&mut self, k_max: usize) -> Result<Strata, AnalysisError> {
        let n = self.scene.n();
        if k_max > n {
            return Err(AnalysisError::Usage(format!(
                "depth {k_max} exceeds the number of forms n = {n}"
            )));
        }
        for k in self.strata.len() + 1..=k_max {
            if k >= 2 {
                self.audit_hint_for(k)?;
            }
            let s = if k == 1 {
                self.sigma1()?
            } else {
                self.deeper(k)
            };
            self.strata.push(s);
        }
        Ok(self.summary(k_max))
    }

    /// Snapshot of the first `k_max` strata with audits and charts.
    pub fn summary(&self, k_max: usize) -> Strata {
        let charts = self
            .atlas
            .charts()
            .iter()
            .map(|c| ChartSummary {
                key: c.key.clone(),
                depth: c.depth,
                equations: c.equations.len(),
            })
            .collect();
        Strata {
            strata: self.strata.iter().take(k_max).cloned().collect(),
            hint_audits: self.hint_audits.clone(),
            charts,
        }
    }

    fn audit_hint_for(&mut self, k: usize) -> Result<(), AnalysisError> {
        let Some(hint) = self.scene.hints.get(&k).cloned() else {
            return Ok(());
        };
        let samples: Vec<Vec<f64>> = self.strata[k - 2]
            .points
            .iter()
            .map(|p| p.x.clone())
            .collect();
        let audit = audit_hint(&self.atlas, k, &hint, &samples, self.seed);
        if audit.accepted {
            self.accepted_hints.insert(k, hint);
            self.atlas = Atlas::with_hints(&self.scene, self.accepted_hints.clone())?;
        }
        self.hint_audits.push(audit);
        Ok(())
    }

    fn sigma1(&self) -> Result<Stratum, AnalysisError> {
        let sys = self.atlas.global_system(1)?;
        let dim = stratum_dim(&self.scene, 1);
        let mut stats = StratumStats::default();
        let (xs, curves) = match dim {
            1 => {
                let t = trace_curves(&sys, &self.opts);
                stats.seeds = t.seeds;
                stats.converged = t.on_curve_seeds;
                let mut xs = Vec::new();
                for c in &t.components {
                    let len = c.points.len() - usize::from(c.closed && c.points.len() > 1);
                    xs.extend(c.points[..len].iter().cloned());
                }
                (xs, t.components)
            }
            _ => {
                let mut opts = self.opts.clone();
                if dim > 0 {
                    opts.dedup_radius = opts.trace_step;
                }
                let cloud = solve_points(&sys, &opts);
                stats.seeds = cloud.stats.seeds;
                stats.converged = cloud.stats.converged;
                (cloud.points.into_iter().map(|p| p.x).collect(), Vec::new())
            }
        };
        let points: Vec<StratumPoint> = xs
            .par_iter()
            .map(|x| match self.atlas.chart_at(x, 1) {
                Ok(chart) => self.make_point(&chart.system, x, 1, 1.0, None),
                Err(e) => self.make_point(&sys, x, 1, 0.0, Some(format!("no chart: {e}"))),
            })
            .collect();
        stats.failed_charts = points
            .iter()
            .filter(|p| p.note.as_deref().is_some_and(|n| n.starts_with("no chart")))
            .count();
        Ok(Stratum {
            depth: 1,
            expected_dim: dim,
            points,
            curves,
            stats,
        })
    }

    fn deeper(&self, k: usize) -> Stratum {
        let seeds: Vec<Vec<f64>> = self.strata[k - 2]
            .points
            .iter()
            .map(|p| p.x.clone())
            .collect();
        let dim = stratum_dim(&self.scene, k);
        let outcomes: Vec<Outcome> = seeds
            .par_iter()
            .map_init(Workspace::default, |ws, s| self.solve_on_charts(s, k, ws))
            .collect();
        let mut stats = StratumStats {
            seeds: seeds.len(),
            ..Default::default()
        };
        let mut solved = Vec::new();
        for o in outcomes {
            match o {
                Outcome::Solved {
                    x,
                    residual,
                    chart,
                    margin,
                    switches,
                } => {
                    stats.converged += 1;
                    stats.chart_switches += switches;
                    solved.push((x, residual, chart, margin));
                }
                Outcome::NoChart => stats.failed_charts += 1,
                Outcome::NoConvergence => {}
                Outcome::Rejected(s) => {
                    stats.converged += 1;
                    stats.rejected += 1;
                    stats.chart_switches += s;
                }
            }
        }
        let radius = if dim == 0 {
            self.opts.dedup_radius
        } else {
            self.opts.trace_step
        };
        let solved = dedup_points(solved, radius, |s| &s.0, |s| s.1);
        let points = solved
            .par_iter()
            .map(|(x, _, chart, margin)| self.make_point(&chart.system, x, k, *margin, None))
            .collect();
        Stratum {
            depth: k,
            expected_dim: dim,
            points,
            curves: Vec::new(),
            stats,
        }
    }

    /// Gauss–Newton on the best depth-k chart at `seed`, re-anchoring while
    /// the solution leaves the chart's comfortable domain.
    fn solve_on_charts(&self, seed: &[f64], k: usize, ws: &mut Workspace) -> Outcome {
        let Ok(mut chart) = self.atlas.chart_at(seed, k) else {
            return Outcome::NoChart;
        };
        let slack = 1e-9 * self.opts.region.diameter();
        let mut x0 = seed.to_vec();
        for switches in 0..=MAX_CHART_SWITCHES {
            let r = gauss_newton(
                &chart.solve_system,
                &x0,
                self.opts.tol_residual,
                self.opts.newton_max_iter,
                ws,
            );
            if !r.converged || !self.opts.region.contains(&r.x, slack) {
                return Outcome::NoConvergence;
            }
            let margin = self.atlas.margins(&chart, &r.x).map_or(0.0, |m| m.min());
            let best = self.atlas.chart_at(&r.x, k);
            let keep = margin >= MARGIN_ACCEPT || best.as_ref().is_ok_and(|b| b.key == chart.key);
            if keep {
                return Outcome::Solved {
                    x: r.x,
                    residual: r.residual,
                    chart,
                    margin,
                    switches,
                };
            }
            match best {
                Ok(b) => {
                    chart = b;
                    x0 = r.x;
                }
                Err(_) => return Outcome::Rejected(switches),
            }
        }
        Outcome::Rejected(MAX_CHART_SWITCHES)
    }

    fn make_point(
        &self,
        sys: &System,
        x: &[f64],
        depth: usize,
        margin: f64,
        note: Option<String>,
    ) -> StratumPoint {
        let mut ws = Workspace::default();
        let residual = sys.residual_norm(x, &mut ws);
        let (rank, det) = match sys.jacobian(x, &mut ws) {
            Some(j) => {
                let det = (j.rows() == j.cols())
                    .then(|| determinant(&j).ok())
                    .flatten();
                (numeric_rank(&j, self.scene.settings.tol_rank), det)
            }
            None => (crate::linalg::rank_from_singular_values(&[], 1.0), None),
        };
        let cls = classify_point(&self.atlas, x);
        StratumPoint {
            x: x.to_vec(),
            residual,
            rank,
            expected_rank: self.scene.dim() - stratum_dim(&self.scene, depth),
            det,
            margin,
            kind: cls.kind,
            intersection_dims: cls.intersection_dims,
            note: note.or(cls.note),
        }
    }
}
