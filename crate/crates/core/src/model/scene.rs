use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::expr::{gradient, parse_expr, simplify, Expr, Tape, UnaryOp};
use crate::linalg::Mat;
use crate::solver::{BoxRegion, SolveOptions, System};

/// How the rows of `omega` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameMode {
    /// Tangent vector fields, identified with covectors by the ambient
    /// Euclidean metric.
    Frame,
    /// Ambient 1-forms, restricted to the manifold.
    Coframe,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    scene: SceneSection,
    #[serde(default)]
    manifold: ManifoldSection,
    coframe: CoframeSection,
    #[serde(default)]
    covector: CovectorSection,
    solver: SolverSection,
    #[serde(default)]
    hints: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSection {
    ambient_dim: usize,
    vars: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldSection {
    #[serde(default)]
    constraints: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoframeSection {
    n: usize,
    mode: FrameMode,
    omega: Vec<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovectorSection {
    a: Option<Vec<f64>>,
    rng_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
    tol_residual: Option<f64>,
    tol_rank: Option<f64>,
    grid: Option<usize>,
    max_depth: Option<usize>,
    newton_max_iter: Option<usize>,
    dedup_radius: Option<f64>,
    trace_step: Option<f64>,
}

/// Numerical settings of a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSettings {
    pub tol_residual: f64,
    pub tol_rank: f64,
    pub grid: usize,
    pub max_depth: usize,
    pub newton_max_iter: usize,
    /// Relative to the box diameter.
    pub dedup_radius: f64,
    /// Absolute; `None` means box width divided by the grid.
    pub trace_step: Option<f64>,
}

/// A manifold `M = G⁻¹(0) ⊂ ℝᴺ` with an n-frame or n-coframe on it, a search
/// box and tolerances.
#[derive(Debug, Clone)]
pub struct Scene {
    pub var_names: Vec<String>,
    pub constraints: Vec<Expr>,
    /// `n` rows of `N` components.
    pub omega: Vec<Vec<Expr>>,
    pub mode: FrameMode,
    pub region: BoxRegion,
    pub settings: SceneSettings,
    pub covector: Option<Vec<f64>>,
    pub rng_seed: Option<u64>,
    /// Replacement defining functions keyed by depth (≥ 2).
    pub hints: BTreeMap<usize, Expr>,
    derived: Arc<Derived>,
}

#[derive(Debug)]
struct Derived {
    constraint_gradients: Vec<Vec<Expr>>,
    rank_rows: Vec<Vec<Expr>>,
    rank_tape: Tape,
    constraint_system: System,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Scene {
    pub fn load(path: impl AsRef<Path>) -> Result<Scene, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Scene::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Scene, ModelError> {
        let file: SceneFile =
            toml::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        let invalid = |m: String| Err(ModelError::Invalid(m));

        let dim = file.scene.ambient_dim;
        let vars = file.scene.vars;
        if dim == 0 {
            return invalid("ambient_dim must be positive".into());
        }
        if vars.len() != dim {
            return invalid(format!(
                "{} variable names given for ambient_dim {dim}",
                vars.len()
            ));
        }
        let mut seen = HashSet::new();
        for v in &vars {
            if !is_identifier(v) || UnaryOp::from_name(v).is_some() {
                return invalid(format!("`{v}` is not a valid variable name"));
            }
            if !seen.insert(v) {
                return invalid(format!("variable `{v}` declared twice"));
            }
        }
        let parse = |field: String, text: &str| {
            parse_expr(text, &vars).map_err(|source| ModelError::Expr { field, source })
        };

        let constraints = file
            .manifold
            .constraints
            .iter()
            .enumerate()
            .map(|(i, t)| parse(format!("manifold.constraints[{i}]"), t))
            .collect::<Result<Vec<_>, _>>()?;
        let c = constraints.len();
        if c >= dim {
            return invalid(format!(
                "{c} constraints leave no manifold in dimension {dim}"
            ));
        }
        let m = dim - c;

        let n = file.coframe.n;
        if n == 0 {
            return invalid("coframe n must be positive".into());
        }
        if n > m {
            return invalid(format!("n = {n} exceeds the manifold dimension m = {m}"));
        }
        if file.coframe.omega.len() != n {
            return invalid(format!(
                "omega has {} rows, expected n = {n}",
                file.coframe.omega.len()
            ));
        }
        let mut omega = Vec::with_capacity(n);
        for (i, row) in file.coframe.omega.iter().enumerate() {
            if row.len() != dim {
                return invalid(format!(
                    "omega row {} has {} entries, expected {dim}",
                    i + 1,
                    row.len()
                ));
            }
            omega.push(
                row.iter()
                    .enumerate()
                    .map(|(j, t)| parse(format!("coframe.omega[{i}][{j}]"), t))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }

        if file.solver.bounds.len() != dim {
            return invalid(format!(
                "box has {} intervals, expected {dim}",
                file.solver.bounds.len()
            ));
        }
        let region = BoxRegion::new(
            file.solver.bounds.iter().map(|b| b[0]).collect(),
            file.solver.bounds.iter().map(|b| b[1]).collect(),
        );
        if !region.is_valid() {
            return invalid("box is empty or unbounded".into());
        }

        let s = &file.solver;
        let settings = SceneSettings {
            tol_residual: s.tol_residual.unwrap_or(1e-10),
            tol_rank: s.tol_rank.unwrap_or(1e-8),
            grid: s.grid.unwrap_or(SolveOptions::DEFAULT_GRID),
            max_depth: s.max_depth.unwrap_or(n),
            newton_max_iter: s.newton_max_iter.unwrap_or(SolveOptions::DEFAULT_MAX_ITER),
            dedup_radius: s.dedup_radius.unwrap_or(SolveOptions::DEFAULT_DEDUP_REL),
            trace_step: s.trace_step,
        };
        if settings.max_depth == 0 || settings.max_depth > n {
            return invalid(format!("max_depth must lie in 1..={n}"));
        }

        if let Some(a) = &file.covector.a {
            if a.len() != n {
                return invalid(format!(
                    "covector a has {} entries, expected n = {n}",
                    a.len()
                ));
            }
            if a.iter().any(|v| !v.is_finite()) || a.iter().all(|v| *v == 0.0) {
                return invalid("covector a must be finite and nonzero".into());
            }
        }

        let mut hints = BTreeMap::new();
        for (key, text) in &file.hints {
            let depth = key
                .strip_prefix("delta_")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|d| (2..=n).contains(d));
            let Some(depth) = depth else {
                return invalid(format!(
                    "unknown hint `{key}`; expected delta_k with 2 <= k <= {n}"
                ));
            };
            hints.insert(depth, parse(format!("hints.{key}"), text)?);
        }

        let scene = Scene::assemble(
            vars,
            constraints,
            omega,
            file.coframe.mode,
            region,
            settings,
            file.covector.a,
            file.covector.rng_seed,
            hints,
        );
        scene
            .solve_options()
            .validate()
            .map_err(ModelError::Invalid)?;
        Ok(scene)
    }

    /// Builds a scene from parsed parts.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        var_names: Vec<String>,
        constraints: Vec<Expr>,
        omega: Vec<Vec<Expr>>,
        mode: FrameMode,
        region: BoxRegion,
        settings: SceneSettings,
        covector: Option<Vec<f64>>,
        rng_seed: Option<u64>,
        hints: BTreeMap<usize, Expr>,
    ) -> Scene {
        let dim = var_names.len();
        let constraint_gradients: Vec<Vec<Expr>> = constraints
            .iter()
            .map(|g| gradient(g, dim).iter().map(simplify).collect())
            .collect();
        let mut rank_rows = Vec::new();
        if mode == FrameMode::Coframe {
            rank_rows.extend(constraint_gradients.iter().cloned());
        }
        rank_rows.extend(omega.iter().cloned());
        let flat: Vec<Expr> = rank_rows.iter().flatten().cloned().collect();
        let rank_tape = Tape::new(&flat);
        let constraint_system =
            System::with_gradients(constraints.clone(), constraint_gradients.clone(), dim);
        Scene {
            var_names,
            constraints,
            omega,
            mode,
            region,
            settings,
            covector,
            rng_seed,
            hints,
            derived: Arc::new(Derived {
                constraint_gradients,
                rank_rows,
                rank_tape,
                constraint_system,
            }),
        }
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        self.var_names.len()
    }

    /// Number of constraints c.
    pub fn codim(&self) -> usize {
        self.constraints.len()
    }

    /// m = N − c.
    pub fn manifold_dim(&self) -> usize {
        self.dim() - self.codim()
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn constraint_gradients(&self) -> &[Vec<Expr>] {
        &self.derived.constraint_gradients
    }

    pub fn constraint_system(&self) -> &System {
        &self.derived.constraint_system
    }

    /// Rows whose rank decides singularity: `[∇G; ω]` for coframes on a
    /// constrained manifold, `ω` alone for frames (tangent fields are
    /// already orthogonal to `∇G`).
    pub fn rank_rows(&self) -> &[Vec<Expr>] {
        &self.derived.rank_rows
    }

    /// How many leading rows of [`Scene::rank_rows`] are constraint
    /// gradients.
    pub fn fixed_rows(&self) -> usize {
        self.derived.rank_rows.len() - self.n()
    }

    /// Rank of the rank rows at a regular point of M.
    pub fn regular_rank(&self) -> usize {
        self.fixed_rows() + self.n()
    }

    pub fn rank_matrix(&self, x: &[f64], scratch: &mut Vec<f64>) -> Option<Mat> {
        let rows = self.derived.rank_rows.len();
        let mut out = vec![0.0; rows * self.dim()];
        self.derived
            .rank_tape
            .eval_with(x, scratch, &mut out)
            .then(|| Mat::from_row_slice(rows, self.dim(), &out))
    }

    pub fn trace_step(&self) -> f64 {
        self.settings
            .trace_step
            .unwrap_or_else(|| self.region.min_width() / self.settings.grid as f64)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut o = SolveOptions::new(self.region.clone());
        o.tol_residual = self.settings.tol_residual;
        o.tol_rank = self.settings.tol_rank;
        o.grid = self.settings.grid;
        o.newton_max_iter = self.settings.newton_max_iter;
        o.dedup_radius = self.settings.dedup_radius * self.region.diameter();
        o.trace_step = self.trace_step();
        o
    }

    /// Numeric value of `ξ = Σ aᵢ ωᵢ` as expressions.
    pub fn xi(&self, a: &[f64]) -> Vec<Expr> {
        use crate::expr::build;
        assert_eq!(a.len(), self.n());
        (0..self.dim())
            .map(|j| {
                let terms: Vec<Expr> = self
                    .omega
                    .iter()
                    .zip(a)
                    .filter(|(_, &ai)| ai != 0.0)
                    .map(|(row, &ai)| {
                        build::mul(
                            &Expr::constant(crate::expr::rational_from_f64(ai).expect("finite")),
                            &row[j],
                        )
                    })
                    .collect();
                simplify(&build::sum(terms.iter()))
            })
            .collect()
    }
}
