use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::global::{global_equations, xi_rank_minors};
use super::{ModelError, Scene};
use crate::expr::{differentiate, simplify, symbolic_determinant, Expr};
use crate::linalg::{determinant, dot, norm, numeric_rank, svd, Mat};
use crate::solver::{lex_cmp, System, Workspace};

/// Subsets of `0..n` of size `k` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A nonvanishing minor of the rank rows: the constraint rows (coframe mode
/// only), the coframe rows `coframe`, and the ambient columns `coords`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotSelection {
    pub coords: Vec<usize>,
    pub coframe: Vec<usize>,
    /// The coframe row left out of the pivot.
    pub free_row: usize,
    pub minor_value_at_anchor: f64,
}

/// Coframe rows used as the supplement `ζ` when building `δ_depth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplementSelection {
    pub depth: usize,
    pub coframe: Vec<usize>,
    pub score_at_anchor: f64,
}

/// Identity of a chart: everything that determines its equations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ChartKey {
    pub coords: Vec<usize>,
    pub coframe: Vec<usize>,
    /// Ambient columns bordering the pivot in the kept minors.
    pub minors: Vec<usize>,
    /// Supplement rows for depths 2, 3, ….
    pub supplements: Vec<Vec<usize>>,
    /// Depths whose determinant was replaced by a scene hint.
    pub hinted: Vec<usize>,
}

/// The pivot minor with all its bordered minors.
#[derive(Debug)]
pub struct PivotFamily {
    pub coords: Vec<usize>,
    pub coframe: Vec<usize>,
    pub free_row: usize,
    pub pivot_minor: Expr,
    /// Bordering column of each bordered minor.
    pub border: Vec<usize>,
    pub bordered: System,
    pivot_system: System,
}

impl PivotFamily {
    fn build(
        scene: &Scene,
        coords: &[usize],
        coframe: &[usize],
        free_row: usize,
    ) -> Result<PivotFamily, ModelError> {
        let rows = scene.rank_rows();
        let p = scene.fixed_rows();
        let mut row_idx: Vec<usize> = (0..p).collect();
        row_idx.extend(coframe.iter().map(|j| p + j));
        let pick = |rs: &[usize], cs: &[usize]| -> Vec<Vec<Expr>> {
            rs.iter()
                .map(|&r| cs.iter().map(|&c| rows[r][c].clone()).collect())
                .collect()
        };
        let pivot_minor = symbolic_determinant(&pick(&row_idx, coords))?;
        let mut full_rows = row_idx.clone();
        full_rows.push(p + free_row);
        let mut border = Vec::new();
        let mut minors = Vec::new();
        for i in 0..scene.dim() {
            if coords.contains(&i) {
                continue;
            }
            let mut cols = coords.to_vec();
            cols.push(i);
            border.push(i);
            minors.push(symbolic_determinant(&pick(&full_rows, &cols))?);
        }
        Ok(PivotFamily {
            coords: coords.to_vec(),
            coframe: coframe.to_vec(),
            free_row,
            pivot_system: System::new(vec![pivot_minor.clone()], scene.dim()),
            pivot_minor,
            border,
            bordered: System::new(minors, scene.dim()),
        })
    }

    pub fn pivot_value(&self, x: &[f64], ws: &mut Workspace) -> Option<f64> {
        self.pivot_system.values(x, ws).map(|v| v[0])
    }
}

/// Defining equations of `Σ^depth` on one chart.
#[derive(Debug, Clone)]
pub struct StratumChart {
    pub key: ChartKey,
    /// Point the chart was first built at.
    pub anchor: Vec<f64>,
    pub depth: usize,
    pub family: Arc<PivotFamily>,
    /// Indices into the family's bordered minors.
    pub minor_idx: Vec<usize>,
    pub supplements: Vec<SupplementSelection>,
    /// Constraints, kept minors, then `δ_2, …, δ_depth`.
    pub equations: Vec<Expr>,
    pub gradients: Vec<Vec<Expr>>,
    pub system: System,
    /// Chart equations followed by the chart-free Σ¹ equations, which rule
    /// out solutions where the pivot degenerates.
    pub solve_system: System,
}

impl StratumChart {
    /// Signs that can flip the chart's determinants between disconnected
    /// parts of its domain: the pivot minor, and each supplement row against
    /// its value at the anchor. `None` where undefined or degenerate.
    pub fn orientation(&self, scene: &Scene, x: &[f64]) -> Option<Vec<i8>> {
        let mut ws = Workspace::default();
        let pivot = self.family.pivot_value(x, &mut ws)?;
        let r = scene.rank_matrix(x, &mut Vec::new())?;
        let r0 = scene.rank_matrix(&self.anchor, &mut Vec::new())?;
        let p = scene.fixed_rows();
        let sign = |v: f64| {
            if v > 0.0 {
                Some(1)
            } else if v < 0.0 {
                Some(-1)
            } else {
                None
            }
        };
        let mut out = vec![sign(pivot)?];
        for s in &self.supplements {
            for &j in &s.coframe {
                out.push(sign(dot(r.row(p + j), r0.row(p + j)))?);
            }
        }
        Some(out)
    }

    /// The determinant cutting this stratum out of the previous one.
    pub fn delta(&self) -> Option<&Expr> {
        (self.depth >= 2).then(|| self.equations.last().expect("nonempty"))
    }

    /// Number of equations describing `Σ^j` on this chart.
    pub fn prefix_len(&self, scene: &Scene, j: usize) -> usize {
        equation_count(scene, j)
    }
}

/// c for j = 0, otherwise c + (m − n + 1) + (j − 1).
pub fn equation_count(scene: &Scene, j: usize) -> usize {
    let c = scene.codim();
    if j == 0 {
        c
    } else {
        c + scene.manifold_dim() + 1 - scene.n() + (j - 1)
    }
}

/// Validity margins of a chart at a point, each as a ratio to the best
/// available choice at that point (1 = this chart's choice is optimal).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartMargins {
    pub pivot: f64,
    pub minors: f64,
    pub supplements: Vec<f64>,
}

impl ChartMargins {
    pub fn min(&self) -> f64 {
        self.supplements
            .iter()
            .copied()
            .fold(self.pivot.min(self.minors), f64::min)
    }
}

/// All candidate pivot minors at a point: (coords, coframe rows, free row,
/// value), in lexicographic order of the index lists.
fn pivot_candidates(scene: &Scene, r: &Mat) -> Vec<(Vec<usize>, Vec<usize>, usize, f64)> {
    let n = scene.n();
    let p = scene.fixed_rows();
    let size = p + n - 1;
    let mut out = Vec::new();
    for coframe in combinations(n, n - 1) {
        let free_row = (0..n)
            .find(|j| !coframe.contains(j))
            .expect("one row left out");
        let mut rows: Vec<usize> = (0..p).collect();
        rows.extend(coframe.iter().map(|j| p + j));
        let sub = r.select_rows(&rows);
        for coords in combinations(scene.dim(), size) {
            let v = determinant(&sub.select_cols(&coords)).expect("square");
            out.push((coords, coframe.clone(), free_row, v));
        }
    }
    out
}

/// The pivot with the largest |minor| at `anchor`; ties go to the
/// lexicographically first index lists.
pub fn select_pivot(scene: &Scene, anchor: &[f64], tol: f64) -> Result<PivotSelection, ModelError> {
    let r = scene
        .rank_matrix(anchor, &mut Vec::new())
        .ok_or_else(|| ModelError::Undefined(anchor.to_vec()))?;
    let mut best: Option<(Vec<usize>, Vec<usize>, usize, f64)> = None;
    for cand in pivot_candidates(scene, &r) {
        if best.as_ref().is_none_or(|b| cand.3.abs() > b.3.abs()) {
            best = Some(cand);
        }
    }
    let (coords, coframe, free_row, value) = best.expect("at least one candidate");
    let scale = r.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if value.abs() <= tol * scale.powi((scene.fixed_rows() + scene.n() - 1) as i32) {
        return Err(ModelError::NoPivot(anchor.to_vec()));
    }
    Ok(PivotSelection {
        coords,
        coframe,
        free_row,
        minor_value_at_anchor: value,
    })
}

/// Gram–Schmidt helper: the component of `v` orthogonal to the orthonormal
/// rows `basis`, as (length, unit direction).
fn residual_direction(basis: &[Vec<f64>], v: &[f64]) -> (f64, Vec<f64>) {
    let nv = norm(v);
    if nv == 0.0 || !nv.is_finite() {
        return (0.0, vec![0.0; v.len()]);
    }
    let mut w = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let d = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= d * bi);
        }
    }
    let d = norm(&w);
    if d > 1e-14 * nv {
        w.iter_mut().for_each(|x| *x /= d);
        (d, w)
    } else {
        (0.0, vec![0.0; v.len()])
    }
}

fn orthonormal_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis = Vec::new();
    for r in rows {
        let (d, w) = residual_direction(&basis, r);
        if d > 0.0 {
            basis.push(w);
        }
    }
    basis
}

/// Greedy max-volume choice of `m − n + 1` bordered minors at `x`: each step
/// takes the minor whose gradient has the longest component orthogonal to
/// the constraint gradients and the minors already taken. Returns indices
/// and the volume.
fn greedy_minors(
    scene: &Scene,
    family: &PivotFamily,
    x: &[f64],
    ws: &mut Workspace,
) -> Option<(Vec<usize>, f64)> {
    let need = scene.manifold_dim() + 1 - scene.n();
    let gj = scene.constraint_system().jacobian(x, ws)?;
    let mut basis = orthonormal_rows(
        &(0..gj.rows())
            .map(|i| gj.row(i).to_vec())
            .collect::<Vec<_>>(),
    );
    let mj = family.bordered.jacobian(x, ws)?;
    let mut chosen = Vec::new();
    let mut volume = 1.0;
    for _ in 0..need {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for i in 0..mj.rows() {
            if chosen.contains(&i) {
                continue;
            }
            let (d, w) = residual_direction(&basis, mj.row(i));
            if best.as_ref().is_none_or(|b| d > b.1) {
                best = Some((i, d, w));
            }
        }
        let (i, d, w) = best?;
        chosen.push(i);
        volume *= d;
        basis.push(w);
    }
    chosen.sort_unstable();
    Some((chosen, volume))
}

/// Volume spanned by the given minors' gradients modulo the constraint
/// gradients.
fn minors_volume(
    scene: &Scene,
    family: &PivotFamily,
    idx: &[usize],
    x: &[f64],
    ws: &mut Workspace,
) -> Option<f64> {
    let gj = scene.constraint_system().jacobian(x, ws)?;
    let mut basis = orthonormal_rows(
        &(0..gj.rows())
            .map(|i| gj.row(i).to_vec())
            .collect::<Vec<_>>(),
    );
    let mj = family.bordered.jacobian(x, ws)?;
    let mut volume = 1.0;
    for &i in idx {
        let (d, w) = residual_direction(&basis, mj.row(i));
        volume *= d;
        basis.push(w);
    }
    Some(volume)
}

/// Scores of all r-subsets of coframe rows as supplements modulo the span of
/// `w_rows`: the r-th singular value of the projected rows, relative to the
/// largest singular value of all projected rows.
fn supplement_scores(
    scene: &Scene,
    w_rows: &Mat,
    x: &[f64],
    r: usize,
    scratch: &mut Vec<f64>,
) -> Option<Vec<(Vec<usize>, f64)>> {
    let n = scene.n();
    let dim = scene.dim();
    let rank_m = scene.rank_matrix(x, scratch)?;
    let p = scene.fixed_rows();
    let basis = orthonormal_rows(
        &(0..w_rows.rows())
            .map(|i| w_rows.row(i).to_vec())
            .collect::<Vec<_>>(),
    );
    let projected: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut v = rank_m.row(p + j).to_vec();
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= d * bi);
                }
            }
            v
        })
        .collect();
    let all = Mat::from_rows(&projected);
    let scale = svd(&all).s.first().copied().unwrap_or(0.0);
    if scale == 0.0 || !scale.is_finite() {
        return Some(combinations(n, r).into_iter().map(|s| (s, 0.0)).collect());
    }
    let _ = dim;
    Some(
        combinations(n, r)
            .into_iter()
            .map(|s| {
                let sub = all.select_rows(&s);
                let sv = svd(&sub).s;
                let score = if r == 0 { 1.0 } else { sv[r - 1] / scale };
                (s, score)
            })
            .collect(),
    )
}

/// Gradient rows of the first `len` equations of `chart` at `x`.
fn gradient_rows(chart: &StratumChart, len: usize, x: &[f64], ws: &mut Workspace) -> Option<Mat> {
    let j = chart.system.jacobian(x, ws)?;
    Some(j.select_rows(&(0..len).collect::<Vec<_>>()))
}

/// Supplement for building `δ_k` from a depth-(k−1) chart: `r = n − k + 1`
/// coframe rows independent modulo the conormal of `Σ^{k−2}`, best
/// conditioned first.
pub fn select_supplement(
    scene: &Scene,
    prev: &StratumChart,
    anchor: &[f64],
    tol: f64,
) -> Result<SupplementSelection, ModelError> {
    let k = prev.depth + 1;
    let r = scene.n() + 1 - k;
    let mut ws = Workspace::default();
    let w = gradient_rows(prev, equation_count(scene, k - 2), anchor, &mut ws)
        .ok_or_else(|| ModelError::Undefined(anchor.to_vec()))?;
    let scores = supplement_scores(scene, &w, anchor, r, &mut Vec::new())
        .ok_or_else(|| ModelError::Undefined(anchor.to_vec()))?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (s, v) in scores {
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((s, v));
        }
    }
    let (coframe, score) = best.expect("at least one subset");
    if score <= tol {
        return Err(ModelError::NoSupplement {
            depth: k,
            point: anchor.to_vec(),
        });
    }
    Ok(SupplementSelection {
        depth: k,
        coframe,
        score_at_anchor: score,
    })
}

/// `δ_k = det(gradients of the depth-(k−1) equations; supplement rows)`.
pub fn build_delta_k(
    scene: &Scene,
    prev: &StratumChart,
    supplement: &SupplementSelection,
) -> Result<Expr, ModelError> {
    let mut rows = prev.gradients.clone();
    let p = scene.fixed_rows();
    for &j in &supplement.coframe {
        rows.push(scene.rank_rows()[p + j].clone());
    }
    assert_eq!(rows.len(), scene.dim(), "determinant rows must be square");
    Ok(symbolic_determinant(&rows)?)
}

fn gradient_of(e: &Expr, dim: usize) -> Vec<Expr> {
    (0..dim).map(|j| simplify(&differentiate(e, j))).collect()
}

/// Pivot families keyed by (rows, columns).
type FamilyCache = HashMap<(Vec<usize>, Vec<usize>), Arc<PivotFamily>>;

/// Shared, lazily built charts for one scene.
pub struct Atlas {
    scene: Scene,
    hints: BTreeMap<usize, Expr>,
    select_tol: f64,
    families: Mutex<FamilyCache>,
    charts: Mutex<BTreeMap<ChartKey, Arc<StratumChart>>>,
    globals: Mutex<BTreeMap<usize, Arc<System>>>,
    sigma1_audits: System,
}

impl std::fmt::Debug for Atlas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Atlas")
            .field("charts", &self.charts.lock().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

/// Bordered minors below this at an anchor put it on Σ¹ for the purpose of
/// the transversality requirement.
const ON_SIGMA1_TOL: f64 = 1e-6;

/// Smallest supplement score accepted when selecting.
pub const SUPPLEMENT_TOL: f64 = 1e-6;

impl Atlas {
    pub fn new(scene: &Scene) -> Result<Atlas, ModelError> {
        Atlas::with_hints(scene, BTreeMap::new())
    }

    /// An atlas whose depth-k determinants are replaced by `hints[k]`.
    pub fn with_hints(scene: &Scene, hints: BTreeMap<usize, Expr>) -> Result<Atlas, ModelError> {
        let sigma1 = global_equations(scene, 1)?;
        let audits: Vec<Expr> = sigma1.into_iter().skip(scene.codim()).collect();
        Ok(Atlas {
            sigma1_audits: System::new(audits, scene.dim()),
            scene: scene.clone(),
            hints,
            select_tol: scene.settings.tol_rank,
            families: Mutex::new(HashMap::new()),
            charts: Mutex::new(BTreeMap::new()),
            globals: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn hints(&self) -> &BTreeMap<usize, Expr> {
        &self.hints
    }

    /// Chart-free equations of `Σ^depth` (see [`global_equations`]).
    pub fn global_system(&self, depth: usize) -> Result<Arc<System>, ModelError> {
        if let Some(s) = self.globals.lock().expect("poisoned").get(&depth) {
            return Ok(s.clone());
        }
        let sys = Arc::new(System::new(
            global_equations(&self.scene, depth)?,
            self.scene.dim(),
        ));
        self.globals
            .lock()
            .expect("poisoned")
            .insert(depth, sys.clone());
        Ok(sys)
    }

    /// Chart-free equations of the points of `Σ^depth` where `ξ = Σ aᵢωᵢ`
    /// restricted to the stratum vanishes (depth 0: zeros of `ξ` on M).
    pub fn global_zero_system(&self, depth: usize, a: &[f64]) -> Result<System, ModelError> {
        let base = global_equations(&self.scene, depth)?;
        let mut eqs = base.clone();
        eqs.extend(xi_rank_minors(&self.scene, &base, depth, a)?);
        Ok(System::new(eqs, self.scene.dim()))
    }

    fn family(
        &self,
        coords: &[usize],
        coframe: &[usize],
        free_row: usize,
    ) -> Result<Arc<PivotFamily>, ModelError> {
        let key = (coords.to_vec(), coframe.to_vec());
        if let Some(f) = self.families.lock().expect("poisoned").get(&key) {
            return Ok(f.clone());
        }
        let fam = Arc::new(PivotFamily::build(&self.scene, coords, coframe, free_row)?);
        Ok(self
            .families
            .lock()
            .expect("poisoned")
            .entry(key)
            .or_insert(fam)
            .clone())
    }

    /// Stores a chart. Of several anchors for one key the lexicographically
    /// smallest is kept, so the stored anchor does not depend on the order
    /// in which concurrent callers arrive.
    fn insert(&self, chart: StratumChart) -> Arc<StratumChart> {
        let mut charts = self.charts.lock().expect("poisoned");
        match charts.get(&chart.key) {
            Some(c) if lex_cmp(&chart.anchor, &c.anchor).is_ge() => c.clone(),
            _ => {
                let c = Arc::new(chart);
                charts.insert(c.key.clone(), c.clone());
                c
            }
        }
    }

    fn cached(&self, key: &ChartKey, anchor: &[f64]) -> Option<Arc<StratumChart>> {
        let c = self.charts.lock().expect("poisoned").get(key).cloned()?;
        if lex_cmp(anchor, &c.anchor).is_lt() {
            let mut moved = (*c).clone();
            moved.anchor = anchor.to_vec();
            return Some(self.insert(moved));
        }
        Some(c)
    }

    /// The depth-1 chart with the given pivot whose minors are chosen at
    /// `anchor`.
    pub fn build_sigma1_chart(
        &self,
        pivot: &PivotSelection,
        anchor: &[f64],
    ) -> Result<Arc<StratumChart>, ModelError> {
        let family = self.family(&pivot.coords, &pivot.coframe, pivot.free_row)?;
        let mut ws = Workspace::default();
        let (minor_idx, volume) = greedy_minors(&self.scene, &family, anchor, &mut ws)
            .ok_or_else(|| ModelError::Undefined(anchor.to_vec()))?;
        // Transversality only matters on Σ¹ itself; elsewhere any choice
        // describes the (locally empty) stratum.
        let values = family
            .bordered
            .values(anchor, &mut ws)
            .ok_or_else(|| ModelError::Undefined(anchor.to_vec()))?;
        let on_sigma1 = values.iter().all(|v| v.abs() <= ON_SIGMA1_TOL);
        if on_sigma1 && volume <= self.select_tol {
            return Err(ModelError::NotTransversal(anchor.to_vec()));
        }
        let key = ChartKey {
            coords: pivot.coords.clone(),
            coframe: pivot.coframe.clone(),
            minors: minor_idx.iter().map(|&i| family.border[i]).collect(),
            supplements: Vec::new(),
            hinted: Vec::new(),
        };
        if let Some(c) = self.cached(&key, anchor) {
            return Ok(c);
        }
        let mut equations = self.scene.constraints.clone();
        let mut gradients: Vec<Vec<Expr>> = self.scene.constraint_gradients().to_vec();
        for &i in &minor_idx {
            equations.push(family.bordered.equations()[i].clone());
            gradients.push(family.bordered.gradients()[i].clone());
        }
        Ok(self.insert(self.finish(
            anchor,
            key,
            1,
            family,
            minor_idx,
            Vec::new(),
            equations,
            gradients,
        )))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        anchor: &[f64],
        key: ChartKey,
        depth: usize,
        family: Arc<PivotFamily>,
        minor_idx: Vec<usize>,
        supplements: Vec<SupplementSelection>,
        equations: Vec<Expr>,
        gradients: Vec<Vec<Expr>>,
    ) -> StratumChart {
        let system = System::with_gradients(equations.clone(), gradients.clone(), self.scene.dim());
        let solve_system = system.concat(&self.sigma1_audits);
        StratumChart {
            key,
            anchor: anchor.to_vec(),
            depth,
            family,
            minor_idx,
            supplements,
            equations,
            gradients,
            system,
            solve_system,
        }
    }

    /// Extends a depth-(k−1) chart by `δ_k` with the supplement chosen at
    /// `anchor`.
    pub fn extend_chart(
        &self,
        prev: &StratumChart,
        anchor: &[f64],
    ) -> Result<Arc<StratumChart>, ModelError> {
        let k = prev.depth + 1;
        let supp = select_supplement(&self.scene, prev, anchor, SUPPLEMENT_TOL)?;
        let mut key = prev.key.clone();
        key.supplements.push(supp.coframe.clone());
        let hint = self.hints.get(&k);
        if hint.is_some() {
            key.hinted.push(k);
        }
        if let Some(c) = self.cached(&key, anchor) {
            return Ok(c);
        }
        let delta = match hint {
            Some(h) => h.clone(),
            None => build_delta_k(&self.scene, prev, &supp)?,
        };
        let mut equations = prev.equations.clone();
        let mut gradients = prev.gradients.clone();
        gradients.push(gradient_of(&delta, self.scene.dim()));
        equations.push(delta);
        let mut supplements = prev.supplements.clone();
        supplements.push(supp);
        Ok(self.insert(self.finish(
            anchor,
            key,
            k,
            prev.family.clone(),
            prev.minor_idx.clone(),
            supplements,
            equations,
            gradients,
        )))
    }

    /// The best chart of the given depth at `x`: best pivot, best minors,
    /// best supplements, all chosen at `x`.
    pub fn chart_at(&self, x: &[f64], depth: usize) -> Result<Arc<StratumChart>, ModelError> {
        assert!(depth >= 1 && depth <= self.scene.n(), "depth out of range");
        let pivot = select_pivot(&self.scene, x, self.select_tol)?;
        let mut chart = self.build_sigma1_chart(&pivot, x)?;
        while chart.depth < depth {
            chart = self.extend_chart(&chart, x)?;
        }
        Ok(chart)
    }

    /// Every chart built so far, in key order.
    pub fn charts(&self) -> Vec<Arc<StratumChart>> {
        self.charts
            .lock()
            .expect("poisoned")
            .values()
            .cloned()
            .collect()
    }

    /// Margins of `chart` at `x`; `None` where anything is undefined.
    pub fn margins(&self, chart: &StratumChart, x: &[f64]) -> Option<ChartMargins> {
        let scene = &self.scene;
        let mut ws = Workspace::default();
        let r = scene.rank_matrix(x, &mut Vec::new())?;
        let best_pivot = pivot_candidates(scene, &r)
            .iter()
            .map(|c| c.3.abs())
            .fold(0.0, f64::max);
        let own = chart.family.pivot_value(x, &mut ws)?.abs();
        let pivot = if best_pivot > 0.0 {
            own / best_pivot
        } else {
            0.0
        };
        let best_vol = greedy_minors(scene, &chart.family, x, &mut ws).map_or(0.0, |b| b.1);
        let own_vol = minors_volume(scene, &chart.family, &chart.minor_idx, x, &mut ws)?;
        let minors = if best_vol > 0.0 {
            (own_vol / best_vol).min(1.0)
        } else {
            0.0
        };
        let mut supplements = Vec::new();
        for s in &chart.supplements {
            let k = s.depth;
            let r = scene.n() + 1 - k;
            let w = gradient_rows(chart, equation_count(scene, k - 2), x, &mut ws)?;
            let scores = supplement_scores(scene, &w, x, r, &mut Vec::new())?;
            let best = scores.iter().map(|t| t.1).fold(0.0, f64::max);
            let own = scores
                .iter()
                .find(|t| t.0 == s.coframe)
                .map_or(0.0, |t| t.1);
            supplements.push(if best > 0.0 { own / best } else { 0.0 });
        }
        Some(ChartMargins {
            pivot,
            minors,
            supplements,
        })
    }
}

/// Charts of depths `1..=k_max` anchored at each of `anchors`. Anchors where
/// a chart cannot be built are skipped; the first error is returned only if
/// no chart at all could be built.
pub fn build_chain(
    atlas: &Atlas,
    k_max: usize,
    anchors: &[Vec<f64>],
) -> Result<Vec<Arc<StratumChart>>, ModelError> {
    let mut out: BTreeMap<ChartKey, Arc<StratumChart>> = BTreeMap::new();
    let mut first_err = None;
    for a in anchors {
        for k in 1..=k_max {
            match atlas.chart_at(a, k) {
                Ok(c) => {
                    out.insert(c.key.clone(), c);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    break;
                }
            }
        }
    }
    match (out.is_empty(), first_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(out.into_values().collect()),
    }
}

/// Outcome of checking a user-supplied defining function against the
/// automatically built one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HintAudit {
    pub depth: usize,
    pub accepted: bool,
    /// Points where both functions were evaluated and compared.
    pub compared: usize,
    pub min_abs_ratio: f64,
    pub max_abs_ratio: f64,
    pub reason: Option<String>,
}

/// Number of stratum points a hint is compared on.
pub const HINT_SAMPLES: usize = 50;

/// Compares `hint` with the automatic `δ_depth` at up to [`HINT_SAMPLES`]
/// points of `Σ^{depth−1}` drawn from `samples`. The hint is accepted when
/// both functions vanish at the same sample points and the ratio `hint / δ`
/// keeps one sign on each chart, per orientation class (see
/// [`StratumChart::orientation`]). `atlas` must not carry hints itself.
pub fn audit_hint(
    atlas: &Atlas,
    depth: usize,
    hint: &Expr,
    samples: &[Vec<f64>],
    seed: u64,
) -> HintAudit {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if samples.len() <= HINT_SAMPLES {
        (0..samples.len()).collect()
    } else {
        let mut v = rand::seq::index::sample(&mut rng, samples.len(), HINT_SAMPLES).into_vec();
        v.sort_unstable();
        v
    };
    let mut values = Vec::new();
    for &i in &picked {
        let x = &samples[i];
        let Ok(chart) = atlas.chart_at(x, depth) else {
            continue;
        };
        let auto = chart.delta().and_then(|d| d.eval(x).ok());
        let h = hint.eval(x).ok();
        let orient = chart.orientation(atlas.scene(), x);
        if let (Some(auto), Some(h), Some(o)) = (auto, h, orient) {
            values.push(((chart.key.clone(), o), auto, h));
        }
    }
    let scale_a = values.iter().fold(0.0f64, |m, v| m.max(v.1.abs()));
    let scale_h = values.iter().fold(0.0f64, |m, v| m.max(v.2.abs()));
    let mut audit = HintAudit {
        depth,
        accepted: false,
        compared: 0,
        min_abs_ratio: f64::INFINITY,
        max_abs_ratio: 0.0,
        reason: None,
    };
    let mut signs: BTreeMap<(ChartKey, Vec<i8>), f64> = BTreeMap::new();
    for (key, a, h) in &values {
        let za = a.abs() <= 1e-9 * scale_a.max(1e-300);
        let zh = h.abs() <= 1e-9 * scale_h.max(1e-300);
        match (za, zh) {
            (true, true) => continue,
            (true, false) | (false, true) => {
                audit.reason =
                    Some("hint and automatic equation vanish at different points".into());
                return audit;
            }
            _ => {}
        }
        let ratio = h / a;
        audit.compared += 1;
        audit.min_abs_ratio = audit.min_abs_ratio.min(ratio.abs());
        audit.max_abs_ratio = audit.max_abs_ratio.max(ratio.abs());
        let s = *signs.entry(key.clone()).or_insert(ratio.signum());
        if s != ratio.signum() {
            audit.reason =
                Some("ratio to the automatic equation changes sign within one chart".into());
            return audit;
        }
    }
    if audit.compared < picked.len().min(5) || audit.compared == 0 {
        audit.reason = Some(format!("only {} usable comparison points", audit.compared));
        return audit;
    }
    audit.accepted = true;
    audit
}

/// Numeric dimension of `⟨ω(x)⟩ ∩ span(rows)` modulo the constraint
/// gradients, where `rows` already contain the constraint gradients:
/// `rank[∇G; ω] + rank(W) − rank[W; ω] − c`.
pub fn intersection_dim(scene: &Scene, w: &Mat, x: &[f64], tol: f64) -> Option<(usize, f64)> {
    let mut ws = Workspace::default();
    let g = scene.constraint_system().jacobian(x, &mut ws)?;
    let r = scene.rank_matrix(x, &mut Vec::new())?;
    let p = scene.fixed_rows();
    let omega = r.select_rows(&(p..r.rows()).collect::<Vec<_>>());
    let a = numeric_rank(&g.vstack(&omega), tol);
    let b = numeric_rank(w, tol);
    let c = numeric_rank(&w.vstack(&omega), tol);
    let gap = a.gap_ratio.min(b.gap_ratio).min(c.gap_ratio);
    let dim = (a.rank + b.rank).checked_sub(c.rank + scene.codim())?;
    Some((dim, gap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
    }
}
