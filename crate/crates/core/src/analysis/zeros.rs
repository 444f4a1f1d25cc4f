use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    classify_point, Analysis, AnalysisError, MorinType, Verdict, MARGIN_ACCEPT, MAX_CHART_SWITCHES,
};
use crate::expr::{build, rational_from_f64, simplify, symbolic_determinant, Expr};
use crate::linalg::{determinant, least_squares, norm, null_space, numeric_rank, Mat};
use crate::model::{combinations, ChartKey, StratumChart};
use crate::solver::{dedup_points, distance, gauss_newton, grid_seeds, lex_cmp, System, Workspace};

/// Outcome of a bordered-determinant test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorderedCheck {
    pub verdict: Verdict,
    pub det: f64,
    pub size: usize,
    pub rank: usize,
    pub gap_ratio: f64,
}

/// Conditions (i) and (ii) at a zero on `Σ^{n−1}`: `δ = det(∇E; ξ)`
/// vanishes and `det(∇E; ∇δ)` does not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopCheck {
    pub delta: f64,
    pub det: f64,
    pub verdict: Verdict,
    pub gap_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroRecord {
    pub x: Vec<f64>,
    /// 0 for zeros of ξ on M, k for zeros of the restriction to `Σ^k`.
    pub depth: usize,
    /// One multiplier per chart equation, constraints first.
    pub multipliers: Vec<f64>,
    pub residual: f64,
    pub nondegenerate: Verdict,
    pub bordered: BorderedCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<TopCheck>,
    #[serde(rename = "type")]
    pub kind: MorinType,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub holds: Verdict,
    pub detail: String,
}

/// Runtime checks of the zero-location and non-degeneracy properties.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ZeroChecks {
    pub items: Vec<PropertyCheck>,
}

impl ZeroChecks {
    pub fn holds(&self) -> Verdict {
        Verdict::all(self.items.iter().map(|c| c.holds))
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.items.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, holds: Verdict, detail: impl Into<String>) {
        self.items.push(PropertyCheck {
            name: name.into(),
            holds,
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSet {
    pub depth: usize,
    pub a: Vec<f64>,
    pub zeros: Vec<ZeroRecord>,
    pub seeds: usize,
    pub converged: usize,
    pub checks: ZeroChecks,
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    /// `Yes` when every zero is nondegenerate.
    pub fn nondegenerate(&self) -> Verdict {
        Verdict::all(self.zeros.iter().map(|z| z.nondegenerate))
    }

    pub fn count(&self, kind: MorinType) -> usize {
        self.zeros.iter().filter(|z| z.kind == kind).count()
    }
}

/// Relative residual below which `ξ(p)` counts as lying in a conormal span.
const SPAN_TOL: f64 = 1e-6;

/// Lagrange system of one chart (or of M itself) for a fixed covector:
/// unknowns `(x, λ)`, equations `ξ − Σ λ_j ∇E_j = 0`, `E = 0`, then audits.
struct Lagrange {
    sys: System,
    /// Number of chart equations (= multipliers).
    q: usize,
    grads: System,
    top: Option<System>,
}

struct Context<'a> {
    an: &'a Analysis,
    a: Vec<f64>,
    xi: Vec<Expr>,
    xi_sys: System,
    cache: Mutex<BTreeMap<Option<ChartKey>, Arc<Lagrange>>>,
}

impl<'a> Context<'a> {
    fn new(an: &'a Analysis, a: &[f64]) -> Result<Context<'a>, AnalysisError> {
        let scene = an.scene();
        if a.len() != scene.n() {
            return Err(AnalysisError::Usage(format!(
                "covector has {} entries, expected {}",
                a.len(),
                scene.n()
            )));
        }
        if norm(a).is_nan() || norm(a) <= 0.0 || a.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Usage(
                "covector must be finite and nonzero".into(),
            ));
        }
        Ok(Context::from_xi(an, a, scene.xi(a)))
    }

    fn from_xi(an: &'a Analysis, a: &[f64], xi: Vec<Expr>) -> Context<'a> {
        Context {
            an,
            a: a.to_vec(),
            xi_sys: System::new(xi.clone(), an.scene().dim()),
            xi,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    fn lagrange(&self, chart: Option<&StratumChart>) -> Arc<Lagrange> {
        let key = chart.map(|c| c.key.clone());
        if let Some(l) = self.cache.lock().expect("poisoned").get(&key) {
            return l.clone();
        }
        let scene = self.an.scene();
        let dim = scene.dim();
        let (eqs, grads, audits): (Vec<Expr>, Vec<Vec<Expr>>, Vec<Expr>) = match chart {
            Some(c) => (
                c.equations.clone(),
                c.gradients.clone(),
                c.solve_system.equations()[c.equations.len()..].to_vec(),
            ),
            None => (
                scene.constraints.clone(),
                scene.constraint_gradients().to_vec(),
                Vec::new(),
            ),
        };
        let q = eqs.len();
        let mut all = Vec::with_capacity(dim + q + audits.len());
        for s in 0..dim {
            let mut terms = vec![self.xi[s].clone()];
            for (j, g) in grads.iter().enumerate() {
                if !g[s].is_zero() {
                    terms.push(build::neg(&build::mul(&Expr::var(dim + j), &g[s])));
                }
            }
            all.push(simplify(&build::sum(terms.iter())));
        }
        all.extend(eqs.iter().cloned());
        all.extend(audits);
        // With q = N − 1 the restricted zero is isolated on a curve and the
        // two conditions of the top-depth test apply.
        let top = (chart.is_some() && q + 1 == dim).then(|| {
            let mut rows = grads.clone();
            rows.push(self.xi.clone());
            symbolic_determinant(&rows)
                .map(|d| System::new(vec![simplify(&d)], dim))
                .ok()
        });
        let l = Arc::new(Lagrange {
            sys: System::new(all, dim + q),
            q,
            grads: System::with_gradients(eqs, grads, dim),
            top: top.flatten(),
        });
        self.cache
            .lock()
            .expect("poisoned")
            .entry(key)
            .or_insert(l)
            .clone()
    }

    /// Least-squares multipliers of `ξ(x)` against the chart gradients.
    fn multipliers(&self, l: &Lagrange, x: &[f64], ws: &mut Workspace) -> Option<(Vec<f64>, f64)> {
        let xi = self.xi_sys.values(x, ws)?;
        if l.q == 0 {
            return Some((Vec::new(), norm(&xi)));
        }
        let g = l.grads.jacobian(x, ws)?;
        let ls = least_squares(&g.transpose(), &xi).ok()?;
        Some((ls.solution, ls.residual_norm))
    }

    fn solve_once(&self, l: &Lagrange, x0: &[f64], ws: &mut Workspace) -> Option<(Vec<f64>, f64)> {
        let (lambda, _) = self.multipliers(l, x0, ws)?;
        let mut z = x0.to_vec();
        z.extend(lambda);
        let opts = self.an.options();
        let r = gauss_newton(&l.sys, &z, opts.tol_residual, opts.newton_max_iter, ws);
        let dim = self.an.scene().dim();
        if !r.converged
            || !opts
                .region
                .contains(&r.x[..dim], 1e-9 * opts.region.diameter())
        {
            return None;
        }
        Some((r.x[..dim].to_vec(), r.residual))
    }

    /// Solves from a seed on the chart of `depth` chosen there, switching
    /// charts like the strata driver does.
    fn solve(
        &self,
        depth: usize,
        seed: &[f64],
        ws: &mut Workspace,
    ) -> Option<(Vec<f64>, f64, Option<Arc<StratumChart>>)> {
        if depth == 0 {
            let l = self.lagrange(None);
            return self.solve_once(&l, seed, ws).map(|(x, r)| (x, r, None));
        }
        let atlas = self.an.atlas();
        let mut chart = atlas.chart_at(seed, depth).ok()?;
        let mut x0 = seed.to_vec();
        for _ in 0..=MAX_CHART_SWITCHES {
            let l = self.lagrange(Some(&chart));
            let (x, r) = self.solve_once(&l, &x0, ws)?;
            let margin = atlas.margins(&chart, &x).map_or(0.0, |m| m.min());
            let best = atlas.chart_at(&x, depth);
            if margin >= MARGIN_ACCEPT || best.as_ref().is_ok_and(|b| b.key == chart.key) {
                return Some((x, r, Some(chart)));
            }
            chart = best.ok()?;
            x0 = x;
        }
        None
    }

    fn record(&self, depth: usize, x: &[f64], chart: Option<&StratumChart>) -> ZeroRecord {
        let mut ws = Workspace::default();
        let l = self.lagrange(chart);
        let mut flags = Vec::new();
        let (lambda, bordered, residual) = match self.multipliers(&l, x, &mut ws) {
            Some((lambda, _)) => {
                let mut z = x.to_vec();
                z.extend(lambda.iter().copied());
                let residual = l.sys.residual_norm(&z, &mut ws);
                let b = bordered_check(&l, &z, self.an.scene().settings.tol_rank, &mut ws);
                (lambda, b, residual)
            }
            None => {
                flags.push("multipliers undefined".to_string());
                (Vec::new(), undefined_check(), f64::INFINITY)
            }
        };
        if residual > 10.0 * self.an.options().tol_residual {
            flags.push(format!("Lagrange residual {residual:.3e} above tolerance"));
        }
        let top = l
            .top
            .as_ref()
            .and_then(|t| top_check(self, &l, t, x, &mut ws));
        let cls = classify_point(self.an.atlas(), x);
        ZeroRecord {
            x: x.to_vec(),
            depth,
            multipliers: lambda,
            residual,
            nondegenerate: bordered.verdict,
            bordered,
            top,
            kind: cls.kind,
            flags,
        }
    }

    /// Whether `ξ(p)` lies in the conormal span of `Σ^depth` at `p`.
    fn in_conormal(&self, depth: usize, p: &[f64], ws: &mut Workspace) -> Option<bool> {
        let chart = if depth == 0 {
            None
        } else {
            Some(self.an.atlas().chart_at(p, depth).ok()?)
        };
        let l = self.lagrange(chart.as_deref());
        let (_, r) = self.multipliers(&l, p, ws)?;
        let scale = norm(&self.xi_sys.values(p, ws)?).max(1.0);
        Some(r <= SPAN_TOL * scale)
    }
}

fn undefined_check() -> BorderedCheck {
    BorderedCheck {
        verdict: Verdict::Inconclusive,
        det: f64::NAN,
        size: 0,
        rank: 0,
        gap_ratio: 0.0,
    }
}

/// `[[Jξ − Σλ Hess E, −∇Eᵀ], [∇E, 0]]` at `z = (x, λ)`: the leading square
/// block of the Lagrange system's Jacobian.
fn bordered_check(l: &Lagrange, z: &[f64], tol: f64, ws: &mut Workspace) -> BorderedCheck {
    let Some(j) = l.sys.jacobian(z, ws) else {
        return undefined_check();
    };
    let size = z.len();
    let m = j.select_rows(&(0..size).collect::<Vec<_>>());
    let rep = numeric_rank(&m, tol);
    BorderedCheck {
        verdict: Verdict::from_rank(&rep, size),
        det: determinant(&m).unwrap_or(f64::NAN),
        size,
        rank: rep.rank,
        gap_ratio: rep.gap_ratio,
    }
}

fn top_check(
    ctx: &Context,
    l: &Lagrange,
    delta: &System,
    x: &[f64],
    ws: &mut Workspace,
) -> Option<TopCheck> {
    let d = delta.values(x, ws)?[0];
    let g = l.grads.jacobian(x, ws)?;
    let m: Mat = g.vstack(&delta.jacobian(x, ws)?);
    let rep = numeric_rank(&m, ctx.an.scene().settings.tol_rank);
    Some(TopCheck {
        delta: d,
        det: determinant(&m).ok()?,
        verdict: Verdict::from_rank(&rep, m.rows()),
        gap_ratio: rep.gap_ratio,
    })
}

/// Zeros of `ξ = Σ aᵢωᵢ` on M.
pub fn find_xi_zeros(an: &Analysis, a: &[f64]) -> Result<ZeroSet, AnalysisError> {
    let ctx = Context::new(an, a)?;
    let scene = an.scene();
    let seeding = an.atlas().global_zero_system(0, a)?;
    let mut seeds = grid_seeds(&seeding, an.options());
    if let Some(s1) = an.stratum(1) {
        seeds.extend(s1.points.iter().map(|p| p.x.clone()));
    }
    let mut set = solve_set(&ctx, 0, &seeds);
    let mut ws = Workspace::default();
    let tol = 10.0 * an.options().tol_residual;

    if scene.n() >= 1 {
        let mut worst = 0.0f64;
        let mut fail = None;
        for z in &set.zeros {
            match an.atlas().chart_at(&z.x, 1) {
                Ok(c) => worst = worst.max(c.system.residual_norm(&z.x, &mut ws)),
                Err(e) => {
                    fail.get_or_insert(format!("no Σ¹ chart at {:?}: {e}", z.x));
                }
            }
        }
        let holds = if fail.is_some() || worst > tol {
            Verdict::No
        } else {
            Verdict::Yes
        };
        let detail = fail
            .unwrap_or_else(|| format!("largest Σ¹ chart residual {worst:.3e} (limit {tol:.1e})"));
        set.checks.push("zeros_on_sigma1", holds, detail);
    }
    exclusion_check(an, &mut set, 2);
    equivalence_checks(&ctx, &mut set);
    Ok(set)
}

/// Zeros of `ξ` restricted to `Σ^depth`. `Σ^depth` must already be
/// computed; deeper strata, when computed, feed the cross-checks.
pub fn find_restricted_zeros(
    an: &Analysis,
    depth: usize,
    a: &[f64],
) -> Result<ZeroSet, AnalysisError> {
    let n = an.scene().n();
    if depth == 0 {
        return find_xi_zeros(an, a);
    }
    if depth > n {
        return Err(AnalysisError::Usage(format!(
            "stratum {depth} does not exist for n = {n}"
        )));
    }
    let Some(stratum) = an.stratum(depth) else {
        return Err(AnalysisError::Usage(format!(
            "Σ^{depth} has not been computed"
        )));
    };
    let ctx = Context::new(an, a)?;
    let seeds: Vec<Vec<f64>> = stratum.points.iter().map(|p| p.x.clone()).collect();
    let mut set = solve_set(&ctx, depth, &seeds);
    exclusion_check(an, &mut set, depth + 2);
    if depth + 1 == n {
        let radius = (10.0 * an.options().dedup_radius).max(1e-6);
        match an.stratum(n) {
            Some(top) => {
                let missing: Vec<&Vec<f64>> = top
                    .points
                    .iter()
                    .filter(|p| p.kind == MorinType::A(n))
                    .map(|p| &p.x)
                    .filter(|x| !set.zeros.iter().any(|z| distance(&z.x, x) <= radius))
                    .collect();
                let holds = if missing.is_empty() {
                    Verdict::Yes
                } else {
                    Verdict::No
                };
                let detail = match missing.first() {
                    None => format!("all {} A{n} points are zeros", top.count(MorinType::A(n))),
                    Some(x) => format!("A{n} point {x:?} is not a zero"),
                };
                set.checks.push("a_n_points_are_zeros", holds, detail);
            }
            None => set.checks.push(
                "a_n_points_are_zeros",
                Verdict::Inconclusive,
                format!("Σ^{n} not computed"),
            ),
        }
        let mismatched = set
            .zeros
            .iter()
            .filter(|z| z.top.as_ref().is_some_and(|t| t.verdict != z.nondegenerate))
            .count();
        let holds = if mismatched == 0 {
            Verdict::Yes
        } else {
            Verdict::No
        };
        set.checks.push(
            "top_conditions_agree",
            holds,
            format!("{mismatched} zeros where the bordered and top-depth tests disagree"),
        );
    }
    equivalence_checks(&ctx, &mut set);
    Ok(set)
}

fn solve_set(ctx: &Context, depth: usize, seeds: &[Vec<f64>]) -> ZeroSet {
    let solved: Vec<(Vec<f64>, f64, Option<Arc<StratumChart>>)> = seeds
        .par_iter()
        .map_init(Workspace::default, |ws, s| ctx.solve(depth, s, ws))
        .flatten()
        .collect();
    let converged = solved.len();
    let solved = dedup_points(solved, ctx.an.options().dedup_radius, |s| &s.0, |s| s.1);
    let mut zeros: Vec<ZeroRecord> = solved
        .par_iter()
        .map(|(x, _, chart)| ctx.record(depth, x, chart.as_deref()))
        .collect();
    zeros.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    ZeroSet {
        depth,
        a: ctx.a.clone(),
        zeros,
        seeds: seeds.len(),
        converged,
        checks: ZeroChecks::default(),
    }
}

/// No zero within the merge radius of `Σ^deeper`.
fn exclusion_check(an: &Analysis, set: &mut ZeroSet, deeper: usize) {
    let name = format!("zeros_off_sigma{deeper}");
    if deeper > an.scene().n() {
        set.checks.push(
            name,
            Verdict::Yes,
            format!("vacuous: Σ^{deeper} is empty for n = {}", an.scene().n()),
        );
        return;
    }
    let Some(s) = an.stratum(deeper) else {
        set.checks.push(
            name,
            Verdict::Inconclusive,
            format!("Σ^{deeper} not computed"),
        );
        return;
    };
    let min = set
        .zeros
        .iter()
        .flat_map(|z| s.points.iter().map(move |p| distance(&z.x, &p.x)))
        .fold(f64::INFINITY, f64::min);
    let holds = if min > an.options().dedup_radius {
        Verdict::Yes
    } else {
        Verdict::No
    };
    set.checks
        .push(name, holds, format!("minimum distance {min:.3e}"));
}

/// At `A_{depth+1}` points: being a zero of the restriction to `Σ^depth`
/// and to `Σ^{depth+1}` are equivalent, and so is non-degeneracy.
fn equivalence_checks(ctx: &Context, set: &mut ZeroSet) {
    let an = ctx.an;
    let depth = set.depth;
    let next = depth + 1;
    if next > an.scene().n() {
        return;
    }
    let kind = MorinType::A(next);
    let mut ws = Workspace::default();
    let mut points: Vec<Vec<f64>> = set
        .zeros
        .iter()
        .filter(|z| z.kind == kind)
        .map(|z| z.x.clone())
        .collect();
    if let Some(s) = an.stratum(next) {
        points.extend(
            s.points
                .iter()
                .filter(|p| p.kind == kind)
                .map(|p| p.x.clone()),
        );
    }
    let mut bad = None;
    let mut undecided = 0;
    for p in &points {
        match (
            ctx.in_conormal(depth, p, &mut ws),
            ctx.in_conormal(next, p, &mut ws),
        ) {
            (Some(u), Some(v)) if u != v => {
                bad.get_or_insert(p.clone());
            }
            (Some(_), Some(_)) => {}
            _ => undecided += 1,
        }
    }
    let holds = match (&bad, undecided) {
        (Some(_), _) => Verdict::No,
        (None, 0) => Verdict::Yes,
        _ => Verdict::Inconclusive,
    };
    let detail = match bad {
        Some(p) => format!("restriction to Σ^{depth} and Σ^{next} disagree at {p:?}"),
        None => format!(
            "{} A{next} points checked, {undecided} undecided",
            points.len()
        ),
    };
    set.checks.push("restriction_equivalence", holds, detail);

    let mut mismatch = None;
    let mut compared = 0;
    for z in set.zeros.iter().filter(|z| z.kind == kind) {
        let Ok(chart) = an.atlas().chart_at(&z.x, next) else {
            mismatch.get_or_insert(format!("no depth-{next} chart at {:?}", z.x));
            continue;
        };
        let l = ctx.lagrange(Some(&chart));
        let Some((lambda, _)) = ctx.multipliers(&l, &z.x, &mut ws) else {
            continue;
        };
        let mut zz = z.x.clone();
        zz.extend(lambda);
        let b = bordered_check(&l, &zz, an.scene().settings.tol_rank, &mut ws);
        compared += 1;
        if b.verdict != z.nondegenerate {
            mismatch.get_or_insert(format!(
                "at {:?}: depth {depth} {:?}, depth {next} {:?}",
                z.x, z.nondegenerate, b.verdict
            ));
        }
    }
    let holds = if mismatch.is_some() {
        Verdict::No
    } else {
        Verdict::Yes
    };
    let detail = mismatch.unwrap_or_else(|| format!("{compared} A{next} zeros compared"));
    set.checks.push("nondegeneracy_equivalence", holds, detail);
}

/// Recomputes the non-degeneracy test of a record found for covector `a`,
/// on the best chart at its point.
pub fn nondegeneracy(
    an: &Analysis,
    record: &ZeroRecord,
    a: &[f64],
) -> Result<BorderedCheck, AnalysisError> {
    let ctx = Context::new(an, a)?;
    let chart = match record.depth {
        0 => None,
        k => Some(an.atlas().chart_at(&record.x, k)?),
    };
    let l = ctx.lagrange(chart.as_deref());
    let mut ws = Workspace::default();
    let (lambda, _) = ctx
        .multipliers(&l, &record.x, &mut ws)
        .ok_or_else(|| AnalysisError::Precondition("multipliers undefined at the zero".into()))?;
    let mut z = record.x.clone();
    z.extend(lambda);
    Ok(bordered_check(
        &l,
        &z,
        an.scene().settings.tol_rank,
        &mut ws,
    ))
}

/// A critical point of a height function `x ↦ h·x` on M.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Sign of the determinant of the constrained Hessian; `None` when the
    /// point is degenerate or the decision is unclear.
    pub index: Option<i8>,
}

/// Critical points of `x ↦ h·x` on M with their Poincaré–Hopf indices:
/// the sign of `det(Zᵀ(−Σ μ_j Hess G_j)Z)`, Z an orthonormal tangent basis.
pub(super) fn height_critical_points(
    an: &Analysis,
    h: &[f64],
) -> Result<Vec<CriticalPoint>, AnalysisError> {
    let scene = an.scene();
    let dim = scene.dim();
    let xi: Vec<Expr> = h
        .iter()
        .map(|&v| {
            rational_from_f64(v)
                .map(Expr::constant)
                .ok_or_else(|| AnalysisError::Usage("height covector must be finite".into()))
        })
        .collect::<Result<_, _>>()?;
    let ctx = Context::from_xi(an, h, xi.clone());
    // x-only seeding system: G and the (c+1)-minors of [∇G; h].
    let c = scene.codim();
    let mut seeding = scene.constraints.clone();
    let grads = scene.constraint_gradients();
    for rows in combinations(c, c) {
        let mut picked: Vec<&Vec<Expr>> = rows.iter().map(|&i| &grads[i]).collect();
        picked.push(&xi);
        for cols in combinations(dim, c + 1) {
            let m: Vec<Vec<Expr>> = picked
                .iter()
                .map(|r| cols.iter().map(|&j| r[j].clone()).collect())
                .collect();
            let d = simplify(&symbolic_determinant(&m).map_err(crate::model::ModelError::from)?);
            if !d.is_zero() {
                seeding.push(d);
            }
        }
    }
    let seeds = grid_seeds(&System::new(seeding, dim), an.options());
    let solved: Vec<(Vec<f64>, f64, Option<Arc<StratumChart>>)> = seeds
        .par_iter()
        .map_init(Workspace::default, |ws, s| ctx.solve(0, s, ws))
        .flatten()
        .collect();
    let solved = dedup_points(solved, an.options().dedup_radius, |s| &s.0, |s| s.1);
    let l = ctx.lagrange(None);
    let tol = scene.settings.tol_rank;
    let mut out = Vec::new();
    let mut ws = Workspace::default();
    for (x, _, _) in solved {
        let Some((mu, _)) = ctx.multipliers(&l, &x, &mut ws) else {
            continue;
        };
        let mut z = x.clone();
        z.extend(mu.iter().copied());
        let index = (|| {
            let j = l.sys.jacobian(&z, &mut ws)?;
            let hess = j
                .select_rows(&(0..dim).collect::<Vec<_>>())
                .select_cols(&(0..dim).collect::<Vec<_>>());
            let g = scene.constraint_system().jacobian(&x, &mut ws)?;
            let basis = null_space(&g, tol);
            if basis.len() != scene.manifold_dim() {
                return None;
            }
            let zm = Mat::from_rows(&basis).transpose();
            let reduced = zm.transpose().mul(&hess).mul(&zm);
            let rep = numeric_rank(&reduced, tol);
            if Verdict::from_rank(&rep, reduced.rows()) != Verdict::Yes {
                return None;
            }
            let d = determinant(&reduced).ok()?;
            Some(if d > 0.0 { 1 } else { -1 })
        })();
        out.push(CriticalPoint {
            x,
            multipliers: mu,
            index,
        });
    }
    out.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    Ok(out)
}
