use morin_core::analysis::{
    check_compactness, check_corank1, check_morin, draw_covector, euler_congruence,
    find_restricted_zeros, Analysis, AnalysisError, Strata, Verdict, ZeroSet,
};
use morin_core::model::stratum_dim;
use morin_core::solver::{distance, grid_oracle, OracleOutcome};
use serde_json::json;

use crate::report::{csv_table, to_value, Report};
use crate::{Table, EXIT_INCONCLUSIVE, EXIT_NO, EXIT_OK};

/// Clusters and solver points closer than this are paired by `oracle`.
pub const MATCH_RADIUS: f64 = 1e-3;

type CmdResult = Result<Vec<Table>, AnalysisError>;

fn verdict_exit(v: Verdict) -> (i32, &'static str) {
    match v {
        Verdict::Yes => (EXIT_OK, "yes"),
        Verdict::No => (EXIT_NO, "no"),
        Verdict::Inconclusive => (EXIT_INCONCLUSIVE, "inconclusive"),
    }
}

fn depth_or_n(an: &Analysis, depth: Option<usize>) -> Result<usize, AnalysisError> {
    let n = an.scene().n();
    match depth {
        Some(0) => Err(AnalysisError::Usage("depth must be at least 1".into())),
        Some(k) if k > n => Err(AnalysisError::Usage(format!(
            "depth {k} exceeds the number of forms n = {n}"
        ))),
        Some(k) => Ok(k),
        None => Ok(an.scene().settings.max_depth),
    }
}

fn strata_tables(an: &Analysis, strata: &Strata) -> Vec<Table> {
    let dim = an.scene().dim();
    strata
        .strata
        .iter()
        .map(|s| {
            let rows = s
                .points
                .iter()
                .map(|p| (p.x.as_slice(), s.depth, p.kind.to_string()));
            (format!("sigma{}.csv", s.depth), csv_table(dim, rows))
        })
        .collect()
}

fn strata_diagnostics(strata: &Strata) -> serde_json::Value {
    let margins: Vec<serde_json::Value> = strata
        .strata
        .iter()
        .map(|s| {
            let min = s
                .points
                .iter()
                .map(|p| p.margin)
                .fold(f64::INFINITY, f64::min);
            json!({
                "depth": s.depth,
                "stats": s.stats,
                "min_margin": if s.points.is_empty() { None } else { Some(min) },
            })
        })
        .collect();
    json!({
        "strata": margins,
        "hint_audits": strata.hint_audits,
        "charts": strata.charts,
    })
}

pub fn check(
    mut an: Analysis,
    report: &mut Report,
    depth: Option<usize>,
    samples: usize,
) -> CmdResult {
    let k_max = depth_or_n(&an, depth)?;
    report.option("depth", k_max);
    report.option("samples", samples);
    let corank = check_corank1(&mut an, samples)?;
    let morin = check_morin(&mut an, k_max)?;
    let verdict = Verdict::all([corank.verdict, morin.verdict]);
    let (code, word) = verdict_exit(verdict);
    let message = if corank.verdict == Verdict::Yes {
        match morin.witnesses.first() {
            Some(w) if morin.verdict == Verdict::No => {
                format!("{}; witness at {:?}: {}", morin.summary, w.point, w.message)
            }
            _ => morin.summary.clone(),
        }
    } else {
        let head = if verdict == Verdict::No {
            "not Morin"
        } else {
            "inconclusive"
        };
        let why = corank.witnesses.first().map_or_else(
            || "corank-1 condition not established".to_string(),
            |w| w.message.clone(),
        );
        format!("{head}: {why}")
    };
    let strata = an.summary(k_max);
    report.set_status(code, word, message);
    report.results = json!({
        "verdict": verdict,
        "corank": corank,
        "morin": morin,
    });
    report.diagnostics = strata_diagnostics(&strata);
    Ok(strata_tables(&an, &strata))
}

pub fn strata(mut an: Analysis, report: &mut Report, depth: Option<usize>) -> CmdResult {
    let k_max = depth_or_n(&an, depth)?;
    report.option("depth", k_max);
    let strata = an.compute_strata(k_max)?;
    let lines: Vec<String> = strata
        .strata
        .iter()
        .map(|s| {
            format!(
                "Σ^{}: {} points, {} curves",
                s.depth,
                s.points.len(),
                s.curves.len()
            )
        })
        .collect();
    report.set_status(EXIT_OK, "ok", lines.join("; "));
    report.results = json!({
        "strata": strata.strata.iter().map(|s| json!({
            "depth": s.depth,
            "expected_dim": s.expected_dim,
            "euler_characteristic": s.euler_characteristic(),
            "points": s.points,
            "curves": s.curves,
        })).collect::<Vec<_>>(),
    });
    report.diagnostics = strata_diagnostics(&strata);
    Ok(strata_tables(&an, &strata))
}

/// The covector of `zeros`: given, from the scene, or the first seeded draw.
fn covector(an: &Analysis, a: Option<&[f64]>) -> Result<Vec<f64>, AnalysisError> {
    let n = an.scene().n();
    let a = match a {
        Some(a) => a.to_vec(),
        None => match &an.scene().covector {
            Some(a) => a.clone(),
            None => draw_covector(n, an.seed(), 0).a,
        },
    };
    if a.len() != n {
        return Err(AnalysisError::Usage(format!(
            "covector has {} entries, expected n = {n}",
            a.len()
        )));
    }
    if !a.iter().all(|v| v.is_finite()) || a.iter().all(|v| *v == 0.0) {
        return Err(AnalysisError::Usage(
            "covector must be finite and nonzero".into(),
        ));
    }
    Ok(a)
}

fn zero_table(dim: usize, set: &ZeroSet) -> Table {
    let rows = set
        .zeros
        .iter()
        .map(|z| (z.x.as_slice(), set.depth, z.kind.to_string()));
    (format!("zeros{}.csv", set.depth), csv_table(dim, rows))
}

pub fn zeros(
    mut an: Analysis,
    report: &mut Report,
    a: Option<&[f64]>,
    stratum: usize,
) -> CmdResult {
    let n = an.scene().n();
    if stratum > n {
        return Err(AnalysisError::Usage(format!(
            "stratum {stratum} does not exist for n = {n}"
        )));
    }
    let a = covector(&an, a)?;
    report.option("stratum", stratum);
    report.option("a", &a);
    // The exclusion and A_n checks read the deeper strata.
    an.compute_strata(n)?;
    let set = find_restricted_zeros(&an, stratum, &a)?;
    let verdict = Verdict::all([set.nondegenerate(), set.checks.holds()]);
    let (code, word) = match verdict {
        Verdict::Yes => (EXIT_OK, "yes"),
        _ => (EXIT_INCONCLUSIVE, "inconclusive"),
    };
    let failing: Vec<&str> = set
        .checks
        .items
        .iter()
        .filter(|c| c.holds != Verdict::Yes)
        .map(|c| c.name.as_str())
        .collect();
    let message = if failing.is_empty() {
        format!("{} zeros on Σ^{stratum}, all nondegenerate", set.len())
    } else {
        format!(
            "{} zeros on Σ^{stratum}; checks not established: {}",
            set.len(),
            failing.join(", ")
        )
    };
    report.set_status(code, word, message);
    report.diagnostics = json!({ "seeds": set.seeds, "converged": set.converged });
    let table = zero_table(an.scene().dim(), &set);
    report.results = to_value(&set);
    Ok(vec![table])
}

pub fn euler(mut an: Analysis, report: &mut Report, a: Option<&[f64]>) -> CmdResult {
    report.option("a", a);
    let seed = an.seed();
    let cong = match euler_congruence(&mut an, seed, a) {
        Ok(c) => c,
        Err(AnalysisError::Precondition(msg)) => {
            report.set_status(
                EXIT_INCONCLUSIVE,
                "inconclusive",
                format!("precondition failed: {msg}"),
            );
            report.results = json!({ "compactness": check_compactness(&an) });
            return Ok(Vec::new());
        }
        Err(e) => return Err(e),
    };
    let (code, word) = match (cong.definite, cong.congruence_holds) {
        (true, true) => (EXIT_OK, "yes"),
        (true, false) => (EXIT_NO, "no"),
        (false, _) => (EXIT_INCONCLUSIVE, "inconclusive"),
    };
    let closures: Vec<String> = cong.chi_closures_mod2.iter().map(u8::to_string).collect();
    let message = format!(
        "χ(M) ≡ {} mod 2, Σ χ(Ā_k) ≡ {} ≡ {} mod 2: congruence {}",
        cong.chi_m_mod2,
        closures.join(" + "),
        cong.rhs_mod2,
        if cong.congruence_holds {
            "holds"
        } else {
            "fails"
        },
    );
    report.set_status(code, word, message);
    let dim = an.scene().dim();
    let tables = cong.zero_sets.iter().map(|s| zero_table(dim, s)).collect();
    report.diagnostics = json!({
        "draws": cong.draws,
        "zero_set_seeds": cong.zero_sets.iter().map(|s| json!({"depth": s.depth, "seeds": s.seeds, "converged": s.converged})).collect::<Vec<_>>(),
    });
    report.results = to_value(&cong);
    Ok(tables)
}

/// Pairs oracle clusters with solver points within [`MATCH_RADIUS`].
fn match_clusters(oracle: &OracleOutcome, solver: &[Vec<f64>]) -> serde_json::Value {
    let unmatched_clusters: Vec<&Vec<f64>> = oracle
        .clusters
        .iter()
        .map(|c| &c.representative)
        .filter(|r| !solver.iter().any(|s| distance(r, s) <= MATCH_RADIUS))
        .collect();
    let unmatched_solver: Vec<&Vec<f64>> = solver
        .iter()
        .filter(|s| {
            !oracle
                .clusters
                .iter()
                .any(|c| distance(&c.representative, s) <= MATCH_RADIUS)
        })
        .collect();
    json!({
        "radius": MATCH_RADIUS,
        "solver_points": solver,
        "bijection": unmatched_clusters.is_empty() && unmatched_solver.is_empty() && oracle.clusters.len() == solver.len(),
        "unmatched_clusters": unmatched_clusters,
        "unmatched_solver_points": unmatched_solver,
    })
}

pub fn oracle(mut an: Analysis, report: &mut Report, depth: usize, a: Option<&[f64]>) -> CmdResult {
    let n = an.scene().n();
    if depth > n {
        return Err(AnalysisError::Usage(format!(
            "depth {depth} exceeds the number of forms n = {n}"
        )));
    }
    let a = a.map(|a| covector(&an, Some(a))).transpose()?;
    report.option("depth", depth);
    report.option("a", &a);
    let sys = match &a {
        Some(a) => an.atlas().global_zero_system(depth, a)?,
        None => (*an.atlas().global_system(depth)?).clone(),
    };
    let outcome = grid_oracle(&sys, an.options());
    let finite = a.is_some() || (depth > 0 && stratum_dim(an.scene(), depth) == 0);
    let comparison = if finite {
        if depth > 0 {
            an.compute_strata(depth)?;
        }
        let points: Vec<Vec<f64>> = match &a {
            Some(a) => find_restricted_zeros(&an, depth, a)?
                .zeros
                .into_iter()
                .map(|z| z.x)
                .collect(),
            None => an
                .stratum(depth)
                .map(|s| s.points.iter().map(|p| p.x.clone()).collect())
                .unwrap_or_default(),
        };
        Some(match_clusters(&outcome, &points))
    } else {
        None
    };
    let agrees = comparison.as_ref().map(|c| c["bijection"] == json!(true));
    let (code, word, message) = match agrees {
        Some(true) | None if outcome.truncated => (
            EXIT_INCONCLUSIVE,
            "inconclusive",
            format!("{} clusters; refinement truncated", outcome.clusters.len()),
        ),
        Some(true) => (
            EXIT_OK,
            "yes",
            format!(
                "{} clusters, matched one to one with the solver",
                outcome.clusters.len()
            ),
        ),
        Some(false) => (
            EXIT_NO,
            "no",
            format!(
                "{} clusters; oracle and solver disagree",
                outcome.clusters.len()
            ),
        ),
        None => (
            EXIT_OK,
            "ok",
            format!("{} clusters", outcome.clusters.len()),
        ),
    };
    report.set_status(code, word, message);
    let dim = an.scene().dim();
    let rows = outcome
        .clusters
        .iter()
        .map(|c| (c.representative.as_slice(), depth, "cluster".to_string()));
    let table = (format!("oracle{depth}.csv"), csv_table(dim, rows));
    report.diagnostics = json!({
        "levels": outcome.levels,
        "leaf_width": outcome.leaf_width,
        "base_grid": outcome.base_grid,
        "cells_tested": outcome.cells_tested,
        "truncated": outcome.truncated,
        "equations": sys.len(),
    });
    report.results = json!({
        "clusters": outcome.clusters,
        "comparison": comparison,
    });
    Ok(vec![table])
}
