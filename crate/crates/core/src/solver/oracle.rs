use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::seeds::effective_grid;
use super::{lex_cmp, SolveOptions, System, Workspace};

const ORACLE_KAPPA: f64 = 3.0;
const ORACLE_LEVELS: usize = 10;
const LEAF_BUDGET: usize = 200_000;
/// Leaves are grouped by adjacency of their ancestors this many levels below
/// the base grid, so a thin, fragmented tube around one zero stays one
/// cluster.
const CLUSTER_LEVEL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCluster {
    /// Center of the leaf cell with the smallest residual.
    pub representative: Vec<f64>,
    pub residual: f64,
    pub leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub clusters: Vec<OracleCluster>,
    /// Refinement levels below the base grid that were completed.
    pub levels: usize,
    /// Widths of the final leaf cells.
    pub leaf_width: Vec<f64>,
    pub base_grid: usize,
    pub cells_tested: usize,
    /// Refinement stopped early because the leaf budget was exhausted.
    pub truncated: bool,
}

/// Exhaustive subdivision scan for zeros of `sys` inside `opts.region`.
///
/// Every base-grid cell is tested with a linearized inclusion bound and
/// surviving cells are bisected along every axis, level by level. Adjacent
/// surviving leaves are clustered. No Newton iteration is involved, so the
/// result is independent of the point solver; completeness is relative to
/// the base resolution `opts.grid`.
pub fn grid_oracle(sys: &System, opts: &SolveOptions) -> OracleOutcome {
    let dim = sys.dim();
    let region = &opts.region;
    let g = effective_grid(opts.grid, dim);
    let base_half: Vec<f64> = (0..dim)
        .map(|i| region.width(i) / (2.0 * g as f64))
        .collect();
    let slack = 1e-12;

    let center_of = |cell: &[i64], level: usize| -> (Vec<f64>, Vec<f64>) {
        let scale = (1u64 << level) as f64;
        let half: Vec<f64> = base_half.iter().map(|h| h / scale).collect();
        let c = cell
            .iter()
            .enumerate()
            .map(|(i, &k)| region.lo[i] + (2 * k + 1) as f64 * half[i])
            .collect();
        (c, half)
    };

    let total = g.pow(dim as u32);
    let mut cells: Vec<Vec<i64>> = (0..total)
        .into_par_iter()
        .map_init(Workspace::default, |ws, idx| {
            let mut cell = vec![0i64; dim];
            let mut r = idx;
            for i in (0..dim).rev() {
                cell[i] = (r % g) as i64;
                r /= g;
            }
            let (c, h) = center_of(&cell, 0);
            sys.cell_may_contain_zero(&c, &h, ORACLE_KAPPA, slack, ws)
                .then_some(cell)
        })
        .flatten()
        .collect();
    let mut tested = total;
    let mut level = 0;
    let mut truncated = false;
    while level < ORACLE_LEVELS {
        let children_count = cells.len() << dim;
        if children_count > LEAF_BUDGET * (1 << dim) {
            truncated = true;
            break;
        }
        let next_level = level + 1;
        let next: Vec<Vec<i64>> = cells
            .par_iter()
            .map_init(Workspace::default, |ws, cell| {
                let mut out = Vec::new();
                for code in 0..(1usize << dim) {
                    let child: Vec<i64> = cell
                        .iter()
                        .enumerate()
                        .map(|(i, &k)| 2 * k + ((code >> i) & 1) as i64)
                        .collect();
                    let (c, h) = center_of(&child, next_level);
                    if sys.cell_may_contain_zero(&c, &h, ORACLE_KAPPA, slack, ws) {
                        out.push(child);
                    }
                }
                out
            })
            .flatten()
            .collect();
        tested += children_count;
        if next.len() > LEAF_BUDGET {
            truncated = true;
            break;
        }
        cells = next;
        level = next_level;
    }

    let shift = level.saturating_sub(CLUSTER_LEVEL);
    let clusters = cluster_cells(&cells, shift, |cell| center_of(cell, level).0, sys);
    let scale = (1u64 << level) as f64;
    OracleOutcome {
        clusters,
        levels: level,
        leaf_width: base_half.iter().map(|h| 2.0 * h / scale).collect(),
        base_grid: g,
        cells_tested: tested,
        truncated,
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clusters leaves whose ancestors `shift` levels up coincide or touch.
fn cluster_cells(
    cells: &[Vec<i64>],
    shift: usize,
    center: impl Fn(&[i64]) -> Vec<f64> + Sync,
    sys: &System,
) -> Vec<OracleCluster> {
    let ancestors: Vec<Vec<i64>> = cells
        .iter()
        .map(|c| c.iter().map(|k| k >> shift).collect())
        .collect();
    let mut index: HashMap<&[i64], usize> = HashMap::new();
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    for (i, a) in ancestors.iter().enumerate() {
        match index.get(a.as_slice()) {
            Some(&j) => {
                let (x, y) = (find(&mut parent, i), find(&mut parent, j));
                parent[x.max(y)] = x.min(y);
            }
            None => {
                index.insert(a.as_slice(), i);
            }
        }
    }
    for (i, cell) in ancestors.iter().enumerate() {
        let dim = cell.len();
        let mut nb = cell.clone();
        for code in 0..3usize.pow(dim as u32) {
            let mut c = code;
            for d in 0..dim {
                nb[d] = cell[d] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(&j) = index.get(nb.as_slice()) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let residuals: Vec<(Vec<f64>, f64)> = cells
        .par_iter()
        .map_init(Workspace::default, |ws, cell| {
            let c = center(cell);
            let r = sys.residual_norm(&c, ws);
            (c, r)
        })
        .collect();
    let mut groups: HashMap<usize, OracleCluster> = HashMap::new();
    for (i, (c, r)) in residuals.iter().enumerate() {
        let root = find(&mut parent, i);
        let entry = groups.entry(root).or_insert_with(|| OracleCluster {
            representative: c.clone(),
            residual: *r,
            leaves: 0,
        });
        entry.leaves += 1;
        if r.total_cmp(&entry.residual).is_lt()
            || (*r == entry.residual && lex_cmp(c, &entry.representative).is_lt())
        {
            entry.representative = c.clone();
            entry.residual = *r;
        }
    }
    let mut clusters: Vec<OracleCluster> = groups.into_values().collect();
    clusters.sort_by(|a, b| lex_cmp(&a.representative, &b.representative));
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::solver::BoxRegion;

    #[test]
    fn finds_isolated_points() {
        let v: Vec<String> = vec!["x".into(), "y".into()];
        let sys = System::new(
            vec![
                parse_expr("x^2 + y^2 - 1", &v).unwrap(),
                parse_expr("x - y", &v).unwrap(),
            ],
            2,
        );
        let mut opts = SolveOptions::new(BoxRegion::cube(2, 2.0));
        opts.grid = 32;
        let out = grid_oracle(&sys, &opts);
        assert_eq!(out.clusters.len(), 2);
        let h = 0.5f64.sqrt();
        let w = out.leaf_width[0];
        assert!((out.clusters[0].representative[0] + h).abs() <= w);
        assert!((out.clusters[1].representative[1] - h).abs() <= w);
        assert!(!out.truncated);
    }

    #[test]
    fn empty_set_has_no_clusters() {
        let v: Vec<String> = vec!["x".into()];
        let sys = System::new(vec![parse_expr("x^2 + 1", &v).unwrap()], 1);
        let out = grid_oracle(&sys, &SolveOptions::new(BoxRegion::cube(1, 2.0)));
        assert!(out.clusters.is_empty());
    }
}
