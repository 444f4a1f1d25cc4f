use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{gauss_newton, lex_cmp, SolveOptions, SolvedPoint, System, Workspace};
use crate::linalg::numeric_rank;

/// Linearization safety factor of the seeding cell test.
pub(crate) const SEED_KAPPA: f64 = 2.0;
/// Largest number of cells scanned for seeds.
const MAX_SEED_CELLS: usize = 4_000_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub seeds: usize,
    pub converged: usize,
    pub rejected: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PointCloud {
    pub points: Vec<SolvedPoint>,
    pub stats: SolveStats,
}

/// Per-axis cell count actually used for a scan at `grid`, keeping the
/// total under a fixed budget.
pub(crate) fn effective_grid(grid: usize, dim: usize) -> usize {
    let mut g = grid.max(1);
    while g > 2 && g.saturating_pow(dim as u32) > MAX_SEED_CELLS {
        g -= 1;
    }
    g
}

/// Centers of the grid cells over `opts.region` that pass the linearized
/// cell test for `sys`, in lexicographic cell order.
pub fn grid_seeds(sys: &System, opts: &SolveOptions) -> Vec<Vec<f64>> {
    let dim = sys.dim();
    let region = &opts.region;
    assert_eq!(region.dim(), dim, "box dimension does not match the system");
    let g = effective_grid(opts.grid, dim);
    let total = g.pow(dim as u32);
    let half: Vec<f64> = (0..dim)
        .map(|i| region.width(i) / (2.0 * g as f64))
        .collect();
    (0..total)
        .into_par_iter()
        .map_init(Workspace::default, |ws, idx| {
            let center = cell_center(idx, g, &half, region);
            sys.cell_may_contain_zero(&center, &half, SEED_KAPPA, 0.0, ws)
                .then_some(center)
        })
        .flatten()
        .collect()
}

fn cell_center(mut idx: usize, g: usize, half: &[f64], region: &super::BoxRegion) -> Vec<f64> {
    let dim = half.len();
    let mut c = vec![0.0; dim];
    for i in (0..dim).rev() {
        let k = idx % g;
        idx /= g;
        c[i] = region.lo[i] + (2 * k + 1) as f64 * half[i];
    }
    c
}

/// Runs Gauss–Newton from every seed and returns the distinct converged
/// points inside the box that pass `accept`, sorted lexicographically.
pub fn solve_from_seeds<F>(
    sys: &System,
    seeds: &[Vec<f64>],
    opts: &SolveOptions,
    accept: F,
) -> PointCloud
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let slack = 1e-9 * opts.region.diameter();
    let results: Vec<Option<SolvedPoint>> = seeds
        .par_iter()
        .enumerate()
        .map_init(Workspace::default, |ws, (i, seed)| {
            let r = gauss_newton(sys, seed, opts.tol_residual, opts.newton_max_iter, ws);
            if !r.converged || !opts.region.contains(&r.x[..opts.region.dim()], slack) {
                return None;
            }
            let jac = sys.jacobian(&r.x, ws)?;
            Some(SolvedPoint {
                jacobian_rank: numeric_rank(&jac, opts.tol_rank),
                residual_norm: r.residual,
                x: r.x,
                converged_from: i,
            })
        })
        .collect();
    let converged: Vec<SolvedPoint> = results.into_iter().flatten().collect();
    let n_conv = converged.len();
    let kept: Vec<SolvedPoint> = converged.into_iter().filter(|p| accept(&p.x)).collect();
    let rejected = n_conv - kept.len();
    let dim = opts.region.dim();
    let points = dedup_points(
        kept,
        opts.dedup_radius,
        |p| &p.x[..dim],
        |p| p.residual_norm,
    );
    PointCloud {
        stats: SolveStats {
            seeds: seeds.len(),
            converged: n_conv,
            rejected,
            unique: points.len(),
        },
        points,
    }
}

/// Grid-seeded multistart Gauss–Newton.
pub fn solve_points(sys: &System, opts: &SolveOptions) -> PointCloud {
    let seeds = grid_seeds(sys, opts);
    solve_from_seeds(sys, &seeds, opts, |_| true)
}

/// Merges items closer than `radius`, keeping the one with the lowest
/// score (ties by position), and returns survivors in lexicographic order.
pub fn dedup_points<T, P, S>(mut items: Vec<T>, radius: f64, pos: P, score: S) -> Vec<T>
where
    P: Fn(&T) -> &[f64],
    S: Fn(&T) -> f64,
{
    items.sort_by(|a, b| {
        score(a)
            .total_cmp(&score(b))
            .then_with(|| lex_cmp(pos(a), pos(b)))
    });
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / radius).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<T> = Vec::new();
    for item in items {
        let p = pos(&item);
        let key = cell(p);
        let mut clash = false;
        for_each_neighbor(&key, |nb| {
            if clash {
                return;
            }
            if let Some(list) = buckets.get(nb) {
                clash = list
                    .iter()
                    .any(|&k| super::distance(pos(&kept[k]), p) <= radius);
            }
        });
        if !clash {
            buckets.entry(key).or_default().push(kept.len());
            kept.push(item);
        }
    }
    kept.sort_by(|a, b| lex_cmp(pos(a), pos(b)));
    kept
}

fn for_each_neighbor(key: &[i64], mut f: impl FnMut(&[i64])) {
    let dim = key.len();
    let total = 3usize.pow(dim as u32);
    let mut nb = key.to_vec();
    for code in 0..total {
        let mut c = code;
        for i in 0..dim {
            nb[i] = key[i] + (c % 3) as i64 - 1;
            c /= 3;
        }
        f(&nb);
    }
}
