//! Bottleneck and Wasserstein-p distances between persistence diagrams.
//!
//! Distances are computed in (death, birth) coordinates on the diagonal-
//! augmented bipartite problem with the L-infinity ground metric: matching a
//! point to the diagonal costs half its lifetime, diagonal-to-diagonal is
//! free. Wasserstein uses an exact O(m^3) assignment solver; bottleneck does
//! a binary search over candidate edge costs with a Hopcroft-Karp feasibility
//! check. Essential points are skipped (and logged) before matching.

use log::debug;

use crate::diagram::PersistenceDiagram;
use crate::error::{Error, Result};

fn finite_points(d: &PersistenceDiagram) -> Vec<[f64; 2]> {
    let skipped = d.points.iter().filter(|p| p.essential).count();
    if skipped > 0 {
        debug!(
            "distance: excluding {skipped} essential point(s) from degree-{} diagram",
            d.degree
        );
    }
    d.finite_points().map(|p| [p.death, p.birth]).collect()
}

fn linf(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

fn diagonal_cost(p: [f64; 2]) -> f64 {
    (p[1] - p[0]).abs() / 2.0
}

/// Put the two point sets in a canonical order so that both distance
/// functions are exactly symmetric in their arguments.
fn canonical<'a>(a: &'a [[f64; 2]], b: &'a [[f64; 2]]) -> (&'a [[f64; 2]], &'a [[f64; 2]]) {
    let swap = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => {
            let mut swap = false;
            'outer: for (p, q) in a.iter().zip(b) {
                for k in 0..2 {
                    match p[k].total_cmp(&q[k]) {
                        std::cmp::Ordering::Less => break 'outer,
                        std::cmp::Ordering::Greater => {
                            swap = true;
                            break 'outer;
                        }
                        std::cmp::Ordering::Equal => {}
                    }
                }
            }
            swap
        }
    };
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

/// Wasserstein p-distance: p-th root of the minimal total of `linf^p` edge
/// costs over augmented matchings.
pub fn wasserstein(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid("p", "must be a finite positive exponent"));
    }
    let pa = finite_points(a);
    let pb = finite_points(b);
    let (pa, pb) = canonical(&pa, &pb);
    if pa.is_empty() && pb.is_empty() {
        return Ok(0.0);
    }
    let (m, n) = (pa.len(), pb.len());
    let size = m + n;
    let mut cost = vec![0.0f64; size * size];
    for i in 0..size {
        for j in 0..size {
            cost[i * size + j] = match (i < m, j < n) {
                (true, true) => linf(pa[i], pb[j]).powf(p),
                (true, false) => diagonal_cost(pa[i]).powf(p),
                (false, true) => diagonal_cost(pb[j]).powf(p),
                (false, false) => 0.0,
            };
        }
    }
    let total = assignment_min_cost(&cost, size);
    Ok(total.powf(1.0 / p))
}

/// Bottleneck distance: the smallest threshold at which a perfect matching of
/// the augmented problem uses only edges of that cost or less.
pub fn bottleneck(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<f64> {
    let pa = finite_points(a);
    let pb = finite_points(b);
    let (pa, pb) = canonical(&pa, &pb);
    if pa.is_empty() && pb.is_empty() {
        return Ok(0.0);
    }
    let mut candidates: Vec<f64> = Vec::with_capacity(pa.len() * pb.len() + pa.len() + pb.len() + 1);
    candidates.push(0.0);
    for &p in pa {
        candidates.push(diagonal_cost(p));
        for &q in pb {
            candidates.push(linf(p, q));
        }
    }
    for &q in pb {
        candidates.push(diagonal_cost(q));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let feasible = |t: f64| matching_feasible(pa, pb, t);
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    debug_assert!(feasible(candidates[hi]));
    if feasible(candidates[0]) {
        return Ok(candidates[0]);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(candidates[hi])
}

/// Exact minimum-cost assignment on a dense square matrix (shortest
/// augmenting paths with potentials).
fn assignment_min_cost(cost: &[f64], n: usize) -> f64 {
    debug_assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // 1-based arrays with column 0 as the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        let i = matched_row[j];
        if i > 0 {
            total += cost[(i - 1) * n + (j - 1)];
        }
    }
    total
}

/// Perfect matching feasibility at threshold `t` on the augmented graph:
/// left = a-points + one diagonal slot per b-point, right symmetric.
fn matching_feasible(pa: &[[f64; 2]], pb: &[[f64; 2]], t: f64) -> bool {
    let (m, n) = (pa.len(), pb.len());
    let size = m + n;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); size];
    for (i, &p) in pa.iter().enumerate() {
        for (j, &q) in pb.iter().enumerate() {
            if linf(p, q) <= t {
                adj[i].push(j as u32);
            }
        }
        if diagonal_cost(p) <= t {
            for j in n..size {
                adj[i].push(j as u32);
            }
        }
    }
    for (di, left) in adj.iter_mut().enumerate().skip(m) {
        let _ = di;
        for (j, &q) in pb.iter().enumerate() {
            if diagonal_cost(q) <= t {
                left.push(j as u32);
            }
        }
        // Diagonal-to-diagonal edges are always free.
        for j in n..size {
            left.push(j as u32);
        }
    }
    hopcroft_karp(&adj, size) == size
}

/// Maximum bipartite matching size (Hopcroft-Karp).
fn hopcroft_karp(adj: &[Vec<u32>], right_count: usize) -> usize {
    let left_count = adj.len();
    const NIL: u32 = u32::MAX;
    let mut match_left = vec![NIL; left_count];
    let mut match_right = vec![NIL; right_count];
    let mut dist = vec![0u32; left_count];
    let mut matching = 0usize;
    loop {
        // BFS layering from unmatched left vertices.
        let mut queue: std::collections::VecDeque<u32> = std::collections::VecDeque::new();
        for u in 0..left_count {
            if match_left[u] == NIL {
                dist[u] = 0;
                queue.push_back(u as u32);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u as usize] {
                let w = match_right[v as usize];
                if w == NIL {
                    found = true;
                } else if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        // DFS augmenting along the layering.
        fn try_augment(
            u: usize,
            adj: &[Vec<u32>],
            match_left: &mut [u32],
            match_right: &mut [u32],
            dist: &mut [u32],
        ) -> bool {
            for idx in 0..adj[u].len() {
                let v = adj[u][idx] as usize;
                let w = match_right[v];
                if w == u32::MAX
                    || (dist[w as usize] == dist[u] + 1
                        && try_augment(w as usize, adj, match_left, match_right, dist))
                {
                    match_left[u] = v as u32;
                    match_right[v] = u as u32;
                    return true;
                }
            }
            dist[u] = u32::MAX;
            false
        }
        for u in 0..left_count {
            if match_left[u] == NIL
                && try_augment(u, adj, &mut match_left, &mut match_right, &mut dist)
            {
                matching += 1;
            }
        }
    }
    matching
}
