//! Straightforward reference implementations used by the validation suite.
//!
//! Everything here trades speed for obviousness and stays independent of the
//! optimized code paths it cross-checks: persistence by plain left-to-right
//! bitset reduction, diagram distances by exhaustive matching enumeration,
//! normalizers by midpoint Riemann sums.

use crate::cubical::FiltrationComplex;
use crate::diagram::{DiagramPoint, PersistenceDiagram};
use crate::gibbs::{GibbsModel, NeighborhoodView};

/// Persistence diagrams by full boundary-matrix reduction in filtration
/// order, dense bitset columns, no clearing.
pub fn naive_diagrams(complex: &FiltrationComplex) -> Vec<PersistenceDiagram> {
    let n = complex.n_cells();
    let dims: Vec<usize> = (0..n).map(|id| complex.cell_dim(id)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        complex
            .cell_value(b)
            .total_cmp(&complex.cell_value(a))
            .then(dims[a].cmp(&dims[b]))
            .then(a.cmp(&b))
    });
    let mut position = vec![0usize; n];
    for (pos, &id) in order.iter().enumerate() {
        position[id] = pos;
    }

    let words = n.div_ceil(64);
    let mut cols: Vec<Vec<u64>> = vec![vec![0u64; words]; n];
    for pos in 0..n {
        for f in complex.boundary(order[pos]) {
            let fp = position[f];
            cols[pos][fp / 64] |= 1u64 << (fp % 64);
        }
    }

    let low_of = |col: &[u64]| -> Option<usize> {
        for w in (0..col.len()).rev() {
            if col[w] != 0 {
                return Some(w * 64 + 63 - col[w].leading_zeros() as usize);
            }
        }
        None
    };

    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for j in 0..n {
        loop {
            let Some(low) = low_of(&cols[j]) else {
                break;
            };
            match owner[low] {
                Some(k) => {
                    let (left, right) = cols.split_at_mut(j);
                    for (w, x) in right[0].iter_mut().enumerate() {
                        *x ^= left[k][w];
                    }
                }
                None => {
                    owner[low] = Some(j);
                    pairs.push((low, j));
                    break;
                }
            }
        }
    }

    let mut in_pair = vec![false; n];
    for &(b, d) in &pairs {
        in_pair[b] = true;
        in_pair[d] = true;
    }

    let dim = complex.dim();
    let mut diagrams: Vec<PersistenceDiagram> = (0..=dim)
        .map(|k| PersistenceDiagram::new(k, Vec::new()))
        .collect();
    for pos in 0..n {
        if !in_pair[pos] {
            let cell = order[pos];
            diagrams[dims[cell]].points.push(DiagramPoint {
                death: complex.min_value(),
                birth: complex.cell_value(cell),
                essential: true,
            });
        }
    }
    for &(bp, dp) in &pairs {
        let (bc, dc) = (order[bp], order[dp]);
        let (birth, death) = (complex.cell_value(bc), complex.cell_value(dc));
        if death < birth {
            diagrams[dims[bc]]
                .points
                .push(DiagramPoint::finite(death, birth));
        }
    }
    for d in diagrams.iter_mut() {
        d.points
            .sort_by(|a, b| a.death.total_cmp(&b.death).then(a.birth.total_cmp(&b.birth)));
    }
    diagrams
}

fn linf(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

fn diagonal_cost(p: [f64; 2]) -> f64 {
    (p[1] - p[0]).abs() / 2.0
}

fn finite_points(d: &PersistenceDiagram) -> Vec<[f64; 2]> {
    d.finite_points().map(|p| [p.death, p.birth]).collect()
}

fn enumerate_matchings(
    a: &[[f64; 2]],
    b: &[[f64; 2]],
    edge: &dyn Fn([f64; 2], [f64; 2]) -> f64,
    diag: &dyn Fn([f64; 2]) -> f64,
    combine: &dyn Fn(f64, f64) -> f64,
    identity: f64,
) -> f64 {
    fn rec(
        i: usize,
        a: &[[f64; 2]],
        b: &[[f64; 2]],
        used: &mut [bool],
        acc: f64,
        edge: &dyn Fn([f64; 2], [f64; 2]) -> f64,
        diag: &dyn Fn([f64; 2]) -> f64,
        combine: &dyn Fn(f64, f64) -> f64,
    ) -> f64 {
        if i == a.len() {
            let mut total = acc;
            for (j, &q) in b.iter().enumerate() {
                if !used[j] {
                    total = combine(total, diag(q));
                }
            }
            return total;
        }
        // a[i] to the diagonal:
        let mut best = rec(
            i + 1,
            a,
            b,
            used,
            combine(acc, diag(a[i])),
            edge,
            diag,
            combine,
        );
        // or to any unused b point:
        for j in 0..b.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let v = rec(
                i + 1,
                a,
                b,
                used,
                combine(acc, edge(a[i], b[j])),
                edge,
                diag,
                combine,
            );
            used[j] = false;
            best = best.min(v);
        }
        best
    }
    let mut used = vec![false; b.len()];
    rec(0, a, b, &mut used, identity, edge, diag, combine)
}

/// Wasserstein p-distance by exhaustive enumeration of augmented matchings
/// (intended for at most ~6 points per side).
pub fn wasserstein_enumerated(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> f64 {
    let pa = finite_points(a);
    let pb = finite_points(b);
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    let total = enumerate_matchings(
        &pa,
        &pb,
        &|x, y| linf(x, y).powf(p),
        &|x| diagonal_cost(x).powf(p),
        &|acc, c| acc + c,
        0.0,
    );
    total.powf(1.0 / p)
}

/// Bottleneck distance by exhaustive enumeration: minimum over matchings of
/// the longest edge.
pub fn bottleneck_enumerated(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let pa = finite_points(a);
    let pb = finite_points(b);
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    enumerate_matchings(&pa, &pb, &linf, &|x| diagonal_cost(x), &f64::max, 0.0)
}

/// Distance from `points[i]` to its k-th nearest neighbor (1-based k) by a
/// full sort, rank ties broken by point index.
pub fn kth_neighbor_distance(points: &[[f64; 2]], i: usize, k: usize) -> Option<f64> {
    let x = points[i];
    let mut dists: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| {
            let dx = x[0] - p[0];
            let dy = x[1] - p[1];
            ((dx * dx + dy * dy).sqrt(), j)
        })
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dists.get(k - 1).map(|&(d, _)| d)
}

/// Conditional-density normalizer by a midpoint Riemann sum over the same
/// truncated box the quadrature uses.
pub fn riemann_normalizer(nbhd: &NeighborhoodView, model: &GibbsModel, steps: usize) -> f64 {
    let half_h = 8.0 / (2.0 * model.theta_h).sqrt();
    let half_v = 8.0 / (2.0 * model.theta_v).sqrt();
    let (x_lo, x_hi) = (model.xbar1 - half_h, model.xbar1 + half_h);
    let (y_lo, y_hi) = (0.0, half_v);
    let hx = (x_hi - x_lo) / steps as f64;
    let hy = (y_hi - y_lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let x = x_lo + (i as f64 + 0.5) * hx;
        for j in 0..steps {
            let y = y_lo + (j as f64 + 0.5) * hy;
            total += (-crate::gibbs::conditional_hamiltonian([x, y], nbhd, model)).exp();
        }
    }
    total * hx * hy
}

/// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_handles_pure_diagonal_case() {
        let a = PersistenceDiagram::new(0, vec![DiagramPoint::finite(0.0, 2.0)]);
        let b = PersistenceDiagram::new(0, vec![]);
        assert!((wasserstein_enumerated(&a, &b, 2.0) - 1.0).abs() < 1e-15);
        assert!((bottleneck_enumerated(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ks_statistic_of_exact_quantiles_is_small() {
        // Samples at uniform quantiles of U[0,1] give D = 1/(2n).
        let n = 100;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn kth_neighbor_matches_direct_reasoning() {
        let points = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        assert_eq!(kth_neighbor_distance(&points, 0, 1), Some(1.0));
        assert_eq!(kth_neighbor_distance(&points, 0, 2), Some(3.0));
        assert_eq!(kth_neighbor_distance(&points, 0, 3), None);
    }
}
