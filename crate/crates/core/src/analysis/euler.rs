use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::zeros::{height_critical_points, CriticalPoint};
use super::{
    find_restricted_zeros, find_xi_zeros, Analysis, AnalysisError, MorinType, Verdict, ZeroSet,
};
use crate::linalg::norm;
use crate::solver::{gauss_newton, grid_seeds, Workspace};

/// Covector draws attempted before giving up on genericity.
pub const MAX_DRAWS: usize = 10;
/// Width of the boundary shell, relative to the box, that M must avoid.
pub const SHELL_FRACTION: f64 = 0.05;
/// Offset separating the Morse height draws from the coframe draws.
const MORSE_STREAM: u64 = 0x4d_6f72_7365;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericCovector {
    pub a: Vec<f64>,
    pub rng_seed: u64,
    /// Index of the draw in the seeded sequence; `None` for a given covector.
    pub draw: Option<usize>,
}

/// The `draw`-th unit vector of the normal-direction sequence seeded by
/// `seed`.
pub fn draw_covector(n: usize, seed: u64, draw: usize) -> GenericCovector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut i = 0;
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = norm(&v);
        if r < 1e-12 {
            continue;
        }
        if i == draw {
            return GenericCovector {
                a: v.iter().map(|x| x / r).collect(),
                rng_seed: seed,
                draw: Some(draw),
            };
        }
        i += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactnessReport {
    pub passed: bool,
    pub shell_fraction: f64,
    /// Grid resolution of the scan.
    pub grid: usize,
    /// Points of M found near the boundary.
    pub shell_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

/// Box surrogate for compactness: no point of M within [`SHELL_FRACTION`]
/// of the box boundary at grid resolution.
pub fn check_compactness(an: &Analysis) -> CompactnessReport {
    let scene = an.scene();
    let opts = an.options();
    let mut report = CompactnessReport {
        passed: false,
        shell_fraction: SHELL_FRACTION,
        grid: opts.grid,
        shell_points: 0,
        witness: None,
        detail: String::new(),
    };
    if scene.codim() == 0 {
        report.detail = "no constraints: M is the whole ambient space and not compact".into();
        return report;
    }
    let region = &opts.region;
    let dim = scene.dim();
    let in_shell = |x: &[f64], frac: f64| {
        (0..dim).any(|i| {
            x[i] - region.lo[i] < frac * region.width(i)
                || region.hi[i] - x[i] < frac * region.width(i)
        })
    };
    let seeds: Vec<Vec<f64>> = grid_seeds(scene.constraint_system(), opts)
        .into_iter()
        .filter(|s| in_shell(s, 2.0 * SHELL_FRACTION))
        .collect();
    let hits: Vec<Vec<f64>> = seeds
        .par_iter()
        .map_init(Workspace::default, |ws, s| {
            let r = gauss_newton(
                scene.constraint_system(),
                s,
                opts.tol_residual,
                opts.newton_max_iter,
                ws,
            );
            let outside = !region.contains(&r.x, 0.0);
            (r.converged && (outside || in_shell(&r.x, SHELL_FRACTION))).then_some(r.x)
        })
        .flatten()
        .collect();
    report.shell_points = hits.len();
    report.witness = hits.into_iter().next();
    report.passed = report.witness.is_none();
    report.detail = match &report.witness {
        None => format!(
            "no point of M within {SHELL_FRACTION} of the box boundary at grid {}",
            opts.grid
        ),
        Some(x) => format!("M reaches the box boundary shell at {x:?}; it may not be compact"),
    };
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseReport {
    pub chi: i64,
    pub height: Vec<f64>,
    pub critical_points: Vec<CriticalPoint>,
    pub draws: usize,
}

/// χ(M) as the index sum of the critical points of a random height
/// function. Needs at least one constraint and passes the compactness
/// surrogate.
pub fn euler_via_morse(an: &Analysis, seed: u64) -> Result<MorseReport, AnalysisError> {
    let scene = an.scene();
    if scene.codim() == 0 {
        return Err(AnalysisError::Precondition(
            "M has no constraints and is not compact".into(),
        ));
    }
    let compact = check_compactness(an);
    if !compact.passed {
        return Err(AnalysisError::Precondition(compact.detail));
    }
    for draw in 0..MAX_DRAWS {
        let h = draw_covector(scene.dim(), seed ^ MORSE_STREAM, draw).a;
        let points = height_critical_points(an, &h)?;
        if points.iter().all(|p| p.index.is_some()) {
            return Ok(MorseReport {
                chi: points
                    .iter()
                    .map(|p| i64::from(p.index.expect("checked")))
                    .sum(),
                height: h,
                critical_points: points,
                draws: draw + 1,
            });
        }
    }
    Err(AnalysisError::Precondition(format!(
        "no nondegenerate height function in {MAX_DRAWS} draws"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawRecord {
    pub a: Vec<f64>,
    pub zero_counts: Vec<usize>,
    pub nondegenerate: Verdict,
    pub checks: Verdict,
}

/// Zero counts of one depth, split by Morin type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRow {
    pub depth: usize,
    pub zeros: usize,
    pub parity: u8,
    /// Zeros on `A_depth` (on `A_1` for depth 0).
    pub on_a_k: usize,
    /// Zeros on `A_{depth+1}`.
    pub on_a_next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependentChi {
    /// χ(M) from the Morse count, when available.
    pub manifold: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold_error: Option<String>,
    /// χ(Ā_k) for k = 1..n where it can be read off the stratum.
    pub closures: Vec<Option<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongruenceReport {
    pub covector: GenericCovector,
    pub draws: Vec<DrawRecord>,
    pub rows: Vec<DepthRow>,
    pub a_n_count: usize,
    pub chi_m_mod2: u8,
    /// χ(Ā_k) mod 2 for k = 1..n.
    pub chi_closures_mod2: Vec<u8>,
    pub rhs_mod2: u8,
    pub congruence_holds: bool,
    /// `#Z(ξ) ≡ #(Z(ξ|Σ¹) ∩ A₁) mod 2`.
    pub a1_identity_holds: Option<bool>,
    /// Every restricted zero on `Σ^k` lies on `A_k` or `A_{k+1}`.
    pub decomposition_holds: bool,
    /// Independent values agree with the parities.
    pub independent_agrees: bool,
    /// All zeros nondegenerate and all property checks hold.
    pub definite: bool,
    pub independent: IndependentChi,
    pub compactness: CompactnessReport,
    pub zero_sets: Vec<ZeroSet>,
}

fn parity(v: usize) -> u8 {
    (v % 2) as u8
}

/// Mod 2 Euler congruence by zero counting, redrawing the covector until
/// every zero is nondegenerate and every property check holds. A scene
/// covector (or `fixed`) is tried first.
pub fn euler_congruence(
    an: &mut Analysis,
    seed: u64,
    fixed: Option<&[f64]>,
) -> Result<CongruenceReport, AnalysisError> {
    let compactness = check_compactness(an);
    if !compactness.passed {
        return Err(AnalysisError::Precondition(compactness.detail));
    }
    let n = an.scene().n();
    an.compute_strata(n)?;
    let an: &Analysis = an;
    let given = fixed
        .map(<[f64]>::to_vec)
        .or_else(|| an.scene().covector.clone());
    let mut draws = Vec::new();
    let mut last = None;
    let mut random = 0;
    for attempt in 0..MAX_DRAWS {
        let cov = match (&given, attempt) {
            (Some(a), 0) => {
                let r = norm(a);
                if r.is_nan() || r <= 0.0 {
                    return Err(AnalysisError::Usage("covector must be nonzero".into()));
                }
                GenericCovector {
                    a: a.iter().map(|v| v / r).collect(),
                    rng_seed: seed,
                    draw: None,
                }
            }
            _ => {
                random += 1;
                draw_covector(n, seed, random - 1)
            }
        };
        let sets = zero_sets(an, &cov.a)?;
        let nondegenerate = Verdict::all(sets.iter().map(ZeroSet::nondegenerate));
        let checks = Verdict::all(sets.iter().map(|s| s.checks.holds()));
        draws.push(DrawRecord {
            a: cov.a.clone(),
            zero_counts: sets.iter().map(ZeroSet::len).collect(),
            nondegenerate,
            checks,
        });
        let done = nondegenerate == Verdict::Yes && checks == Verdict::Yes;
        last = Some((cov, sets));
        if done {
            break;
        }
    }
    let (covector, sets) = last.expect("at least one draw");
    let definite = draws
        .last()
        .is_some_and(|d| d.nondegenerate == Verdict::Yes && d.checks == Verdict::Yes);

    let rows: Vec<DepthRow> = sets
        .iter()
        .map(|s| DepthRow {
            depth: s.depth,
            zeros: s.len(),
            parity: parity(s.len()),
            on_a_k: s.count(MorinType::A(s.depth.max(1))),
            on_a_next: if s.depth == 0 {
                0
            } else {
                s.count(MorinType::A(s.depth + 1))
            },
        })
        .collect();
    let a_n_count = an.stratum(n).map_or(0, |s| s.count(MorinType::A(n)));
    let chi_m_mod2 = rows[0].parity;
    let mut chi_closures_mod2: Vec<u8> = rows.iter().skip(1).map(|r| r.parity).collect();
    chi_closures_mod2.push(parity(a_n_count));
    let rhs_mod2 = chi_closures_mod2.iter().fold(0u8, |acc, p| acc ^ p);
    let decomposition_holds = rows.iter().all(|r| r.on_a_k + r.on_a_next == r.zeros);
    let a1_identity_holds = (n >= 2).then(|| parity(rows[0].zeros) == parity(rows[1].on_a_k));

    let (manifold, manifold_error) = if an.scene().codim() > 0 {
        match euler_via_morse(an, seed) {
            Ok(m) => (Some(m.chi), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("M has no constraints".into()))
    };
    let closures: Vec<Option<i64>> = (1..=n)
        .map(|k| an.stratum(k).and_then(|s| s.euler_characteristic()))
        .collect();
    let mod2 = |v: i64| v.rem_euclid(2) as u8;
    let independent_agrees = manifold.is_none_or(|m| mod2(m) == chi_m_mod2)
        && closures
            .iter()
            .zip(&chi_closures_mod2)
            .all(|(c, p)| c.is_none_or(|c| mod2(c) == *p));

    Ok(CongruenceReport {
        covector,
        draws,
        rows,
        a_n_count,
        chi_m_mod2,
        chi_closures_mod2,
        rhs_mod2,
        congruence_holds: chi_m_mod2 == rhs_mod2,
        a1_identity_holds,
        decomposition_holds,
        independent_agrees,
        definite,
        independent: IndependentChi {
            manifold,
            manifold_error,
            closures,
        },
        compactness,
        zero_sets: sets,
    })
}

/// Zeros of ξ on M and of its restrictions to `Σ^1, …, Σ^{n−1}`.
fn zero_sets(an: &Analysis, a: &[f64]) -> Result<Vec<ZeroSet>, AnalysisError> {
    let n = an.scene().n();
    let mut out = vec![find_xi_zeros(an, a)?];
    for k in 1..n {
        out.push(find_restricted_zeros(an, k, a)?);
    }
    Ok(out)
}
