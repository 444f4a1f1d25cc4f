//! Chart-free defining equations of the strata, used for auditing and for
//! the independent subdivision oracle. They are redundant (many more
//! equations than the codimension) but need no pivot or supplement choice.

use std::collections::HashSet;

use super::chart::combinations;
use super::{ModelError, Scene};
use crate::expr::{gradient, simplify, symbolic_determinant, Expr};

fn push_unique(out: &mut Vec<Expr>, seen: &mut HashSet<Expr>, e: Expr) {
    if e.is_zero() {
        return;
    }
    if seen.insert(e.clone()) {
        out.push(e);
    }
}

fn minor(rows: &[&Vec<Expr>], cols: &[usize]) -> Result<Expr, ModelError> {
    let m: Vec<Vec<Expr>> = rows
        .iter()
        .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
        .collect();
    Ok(simplify(&symbolic_determinant(&m)?))
}

fn gradients(eqs: &[Expr], dim: usize) -> Vec<Vec<Expr>> {
    eqs.iter()
        .map(|e| gradient(e, dim).iter().map(simplify).collect())
        .collect()
}

/// Equations `E_depth` whose common zeros in M are the closure of
/// `Σ^depth`:
///
/// * `E_0 = G`,
/// * `E_1 = G` and every maximal minor of the rank rows,
/// * `E_k = E_{k−1}` and every `N×N` minor of `[∇E_{k−1}; ω]` that uses at
///   least one coframe row.
pub fn global_equations(scene: &Scene, depth: usize) -> Result<Vec<Expr>, ModelError> {
    let dim = scene.dim();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for g in &scene.constraints {
        push_unique(&mut out, &mut seen, g.clone());
    }
    if depth == 0 {
        return Ok(out);
    }
    let rows: Vec<&Vec<Expr>> = scene.rank_rows().iter().collect();
    for cols in combinations(dim, rows.len()) {
        push_unique(&mut out, &mut seen, minor(&rows, &cols)?);
    }
    let all_cols: Vec<usize> = (0..dim).collect();
    for _ in 2..=depth {
        let grads = gradients(&out, dim);
        let q = grads.len();
        let stacked: Vec<&Vec<Expr>> = grads.iter().chain(scene.omega.iter()).collect();
        let mut next = Vec::new();
        for subset in combinations(stacked.len(), dim) {
            if subset.iter().all(|&i| i < q) {
                continue;
            }
            let picked: Vec<&Vec<Expr>> = subset.iter().map(|&i| stacked[i]).collect();
            next.push(minor(&picked, &all_cols)?);
        }
        for e in next {
            push_unique(&mut out, &mut seen, e);
        }
    }
    Ok(out)
}

/// Dimension of `Σ^depth` (of M for depth 0).
pub fn stratum_dim(scene: &Scene, depth: usize) -> usize {
    if depth == 0 {
        scene.manifold_dim()
    } else {
        scene.n() - depth
    }
}

/// Minors expressing that `ξ = Σ aᵢωᵢ` lies in the span of `∇E`, where `E`
/// are the global equations of `Σ^depth`: all minors of size
/// `N − dim Σ^depth + 1` of `[∇E; ξ]` containing the `ξ` row.
pub fn xi_rank_minors(
    scene: &Scene,
    base: &[Expr],
    depth: usize,
    a: &[f64],
) -> Result<Vec<Expr>, ModelError> {
    let dim = scene.dim();
    let size = dim - stratum_dim(scene, depth) + 1;
    if size > dim {
        return Ok(Vec::new());
    }
    let xi = scene.xi(a);
    let grads = gradients(base, dim);
    let mut seen: HashSet<Expr> = base.iter().cloned().collect();
    let mut out = Vec::new();
    for rows in combinations(grads.len(), size - 1) {
        let mut picked: Vec<&Vec<Expr>> = rows.iter().map(|&i| &grads[i]).collect();
        picked.push(&xi);
        for cols in combinations(dim, size) {
            push_unique(&mut out, &mut seen, minor(&picked, &cols)?);
        }
    }
    Ok(out)
}
