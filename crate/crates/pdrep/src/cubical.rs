//! Cubical complex for the superlevel-set filtration of a grid function and
//! persistence via boundary-matrix reduction over Z/2.
//!
//! The complex is vertex-based: grid nodes are the 0-cells and a cell's
//! filtration value is the minimum over its vertices, so a cell enters the
//! superlevel set `f^{-1}([u, inf))` exactly when all its vertices have. Cells
//! are ordered by decreasing value (ties: dimension ascending, then cell id),
//! and the reduction processes dimensions top-down with clearing.

use crate::diagram::{DiagramPoint, PersistenceDiagram};
use crate::grid::ScalarGrid;

/// Full cubical complex on a grid, with one filtration value per cell.
///
/// Cells are indexed by an (axes-mask, base-vertex) pair packed into a single
/// id: for each subset of axes `mask` (the directions the cell extends), cell
/// ids run row-major over valid base vertices.
#[derive(Debug, Clone)]
pub struct FiltrationComplex {
    dim: usize,
    resolution: Vec<usize>,
    /// Start id of each mask group; `offsets[1 << dim]` is the cell count.
    offsets: Vec<usize>,
    values: Vec<f64>,
    min_value: f64,
    max_value: f64,
}

impl FiltrationComplex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn cell_dim(&self, id: usize) -> usize {
        self.mask_of(id).count_ones() as usize
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    fn mask_of(&self, id: usize) -> u32 {
        debug_assert!(id < self.n_cells());
        let mut mask = 0u32;
        while self.offsets[(mask + 1) as usize] <= id {
            mask += 1;
        }
        mask
    }

    /// Extents of the base-vertex grid for a mask.
    fn extents(&self, mask: u32) -> Vec<usize> {
        (0..self.dim)
            .map(|a| self.resolution[a] - ((mask >> a) & 1) as usize)
            .collect()
    }

    fn decode(&self, id: usize) -> (u32, Vec<usize>) {
        let mask = self.mask_of(id);
        let mut rank = id - self.offsets[mask as usize];
        let ext = self.extents(mask);
        let mut coords = vec![0usize; self.dim];
        for a in (0..self.dim).rev() {
            coords[a] = rank % ext[a];
            rank /= ext[a];
        }
        (mask, coords)
    }

    fn encode(&self, mask: u32, coords: &[usize]) -> usize {
        let ext = self.extents(mask);
        let mut rank = 0usize;
        for a in 0..self.dim {
            debug_assert!(coords[a] < ext[a]);
            rank = rank * ext[a] + coords[a];
        }
        self.offsets[mask as usize] + rank
    }

    /// Facet ids of a cell: two per axis the cell extends.
    pub fn boundary(&self, id: usize) -> Vec<usize> {
        let (mask, mut coords) = self.decode(id);
        let mut facets = Vec::with_capacity(2 * mask.count_ones() as usize);
        for a in 0..self.dim {
            if (mask >> a) & 1 == 0 {
                continue;
            }
            let sub = mask & !(1 << a);
            facets.push(self.encode(sub, &coords));
            coords[a] += 1;
            facets.push(self.encode(sub, &coords));
            coords[a] -= 1;
        }
        facets
    }
}

/// Build the full cubical complex of `grid` with min-of-vertices superlevel
/// values.
pub fn build_complex(grid: &ScalarGrid) -> FiltrationComplex {
    let dim = grid.dim();
    assert!(dim <= 16, "grid dimension too large for cubical complex");
    let resolution = grid.resolution().to_vec();
    let n_masks = 1usize << dim;

    let mut offsets = vec![0usize; n_masks + 1];
    for mask in 0..n_masks {
        let count: usize = (0..dim)
            .map(|a| resolution[a] - ((mask >> a) & 1))
            .product();
        offsets[mask + 1] = offsets[mask] + count;
    }

    let mut values = vec![0.0f64; offsets[n_masks]];
    values[..grid.values().len()].copy_from_slice(grid.values());

    let shell = FiltrationComplex {
        dim,
        resolution: resolution.clone(),
        offsets: offsets.clone(),
        values: Vec::new(),
        min_value: 0.0,
        max_value: 0.0,
    };

    // A cell's value is the min of its two facets along any extended axis;
    // masks are visited in increasing order so the facet mask is done first.
    for mask in 1..n_masks as u32 {
        let axis = mask.trailing_zeros() as usize;
        let sub = mask & (mask - 1);
        let ext = shell.extents(mask);
        let total: usize = ext.iter().product();
        let mut coords = vec![0usize; dim];
        for rank in 0..total {
            let mut r = rank;
            for a in (0..dim).rev() {
                coords[a] = r % ext[a];
                r /= ext[a];
            }
            let f1 = shell.encode(sub, &coords);
            coords[axis] += 1;
            let f2 = shell.encode(sub, &coords);
            coords[axis] -= 1;
            values[offsets[mask as usize] + rank] = values[f1].min(values[f2]);
        }
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in grid.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }

    FiltrationComplex {
        dim,
        resolution,
        offsets,
        values,
        min_value: lo,
        max_value: hi,
    }
}

/// Symmetric difference of two sorted Z/2 columns into `out`.
fn add_columns(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Persistence of the superlevel-set filtration: one diagram per homology
/// degree `0..=D`. Finite classes are emitted as `(death, birth)` with
/// `death < birth`; zero-persistence pairs are dropped; the single essential
/// H0 class is emitted with `death = min grid value` and flagged.
pub fn compute_persistence(complex: &FiltrationComplex) -> Vec<PersistenceDiagram> {
    let n = complex.n_cells();
    let dim = complex.dim();

    // Euler characteristic of the full complex on a box must be 1.
    let mut euler: i64 = 0;
    let mut cell_dims = vec![0u8; n];
    for mask in 0..(1u32 << dim) {
        let d = mask.count_ones() as usize;
        for id in complex.offsets[mask as usize]..complex.offsets[mask as usize + 1] {
            cell_dims[id] = d as u8;
        }
        let count = (complex.offsets[mask as usize + 1] - complex.offsets[mask as usize]) as i64;
        euler += if d % 2 == 0 { count } else { -count };
    }
    assert_eq!(euler, 1, "cubical complex on a box must have chi = 1");

    // Filtration order: value descending, dimension ascending, id ascending.
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        complex.values[b as usize]
            .total_cmp(&complex.values[a as usize])
            .then(cell_dims[a as usize].cmp(&cell_dims[b as usize]))
            .then(a.cmp(&b))
    });
    let mut position = vec![0u32; n];
    for (pos, &id) in order.iter().enumerate() {
        position[id as usize] = pos as u32;
    }

    // Boundary columns in position space, sorted ascending.
    let mut cols: Vec<Vec<u32>> = Vec::with_capacity(n);
    for pos in 0..n {
        let id = order[pos] as usize;
        let mut col: Vec<u32> = complex
            .boundary(id)
            .into_iter()
            .map(|f| position[f])
            .collect();
        col.sort_unstable();
        for &f in &col {
            assert!(
                f < pos as u32,
                "non-monotone filtration: facet after coface"
            );
        }
        cols.push(col);
    }

    // Twist reduction: top dimension first, clearing paired births.
    let mut owner: Vec<u32> = vec![u32::MAX; n];
    let mut cleared = vec![false; n];
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();
    for q in (1..=dim).rev() {
        for pos in 0..n {
            if cell_dims[order[pos] as usize] as usize != q {
                continue;
            }
            if cleared[pos] {
                cols[pos].clear();
                continue;
            }
            let mut col = std::mem::take(&mut cols[pos]);
            while let Some(&low) = col.last() {
                let own = owner[low as usize];
                if own == u32::MAX {
                    owner[low as usize] = pos as u32;
                    pairs.push((low, pos as u32));
                    cleared[low as usize] = true;
                    break;
                }
                add_columns(&col, &cols[own as usize], &mut scratch);
                std::mem::swap(&mut col, &mut scratch);
            }
            cols[pos] = col;
        }
    }

    // Every cell is either half of a pair or essential.
    let mut in_pair = vec![false; n];
    for &(b, d) in &pairs {
        in_pair[b as usize] = true;
        in_pair[d as usize] = true;
    }
    let essentials: Vec<usize> = (0..n).filter(|&p| !in_pair[p]).collect();
    assert_eq!(
        2 * pairs.len() + essentials.len(),
        n,
        "persistence bookkeeping mismatch"
    );
    assert_eq!(
        essentials.len(),
        1,
        "a connected grid must have exactly one essential class"
    );
    let ess = essentials[0];
    assert_eq!(
        cell_dims[order[ess] as usize], 0,
        "the essential class must be an H0 class"
    );
    let ess_birth = complex.values[order[ess] as usize];
    assert_eq!(
        ess_birth, complex.max_value,
        "the essential class is born at the global maximum"
    );

    let mut diagrams: Vec<PersistenceDiagram> = (0..=dim)
        .map(|k| PersistenceDiagram::new(k, Vec::new()))
        .collect();
    diagrams[0].points.push(DiagramPoint {
        death: complex.min_value,
        birth: ess_birth,
        essential: true,
    });
    for &(bp, dp) in &pairs {
        let birth_cell = order[bp as usize] as usize;
        let death_cell = order[dp as usize] as usize;
        let birth = complex.values[birth_cell];
        let death = complex.values[death_cell];
        if death < birth {
            let degree = cell_dims[birth_cell] as usize;
            diagrams[degree].points.push(DiagramPoint::finite(death, birth));
        }
    }
    for d in diagrams.iter_mut() {
        d.points
            .sort_by(|a, b| a.death.total_cmp(&b.death).then(a.birth.total_cmp(&b.birth)));
    }
    diagrams
}

/// Convenience: persistence diagrams of a grid's superlevel filtration.
pub fn grid_persistence(grid: &ScalarGrid) -> Vec<PersistenceDiagram> {
    compute_persistence(&build_complex(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarGrid;

    fn grid2(values: Vec<f64>, rows: usize, cols: usize) -> ScalarGrid {
        ScalarGrid::new(
            vec![0.0, 0.0],
            vec![(rows - 1) as f64, (cols - 1) as f64],
            vec![rows, cols],
            values,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn min_rule_on_two_by_two() {
        let grid = grid2(vec![4.0, 3.0, 2.0, 1.0], 2, 2);
        let c = build_complex(&grid);
        assert_eq!(c.n_cells(), 9);
        // Vertices keep their grid values.
        for (id, want) in [4.0, 3.0, 2.0, 1.0].iter().enumerate() {
            assert_eq!(c.cell_value(id), *want);
        }
        // The square has the global min.
        let square = c.n_cells() - 1;
        assert_eq!(c.cell_dim(square), 2);
        assert_eq!(c.cell_value(square), 1.0);
        // Every edge is the min of its endpoints.
        for id in 0..c.n_cells() {
            if c.cell_dim(id) == 1 {
                let facets = c.boundary(id);
                let want = facets
                    .iter()
                    .map(|&f| c.cell_value(f))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(c.cell_value(id), want);
            }
        }
    }

    #[test]
    fn constant_grid_collapses_to_one_value() {
        let grid = grid2(vec![2.5; 12], 3, 4);
        let c = build_complex(&grid);
        assert!((0..c.n_cells()).all(|id| c.cell_value(id) == 2.5));
        let diagrams = compute_persistence(&c);
        assert_eq!(diagrams[0].len(), 1);
        assert!(diagrams[0].points[0].essential);
        assert_eq!(diagrams[0].points[0].birth, 2.5);
        assert!(diagrams[1].is_empty());
        assert!(diagrams[2].is_empty());
    }

    #[test]
    fn facet_values_dominate_cofaces() {
        // Exhaustive monotonicity check on a 3x3 grid (20 facet relations
        // for the 4 squares, plus all edges).
        let values: Vec<f64> = (0..9)
            .map(|i| ((i * 2654435761u64 % 97) as f64) / 97.0)
            .collect();
        let grid = grid2(values, 3, 3);
        let c = build_complex(&grid);
        for id in 0..c.n_cells() {
            for f in c.boundary(id) {
                assert!(c.cell_value(f) >= c.cell_value(id), "facet {f} of {id}");
            }
        }
    }

    #[test]
    fn single_bump_is_contractible_at_every_level() {
        let n = 21usize;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 - 10.0) / 4.0;
                let y = (j as f64 - 10.0) / 4.0;
                values.push((-(x * x + y * y)).exp());
            }
        }
        let grid = grid2(values.clone(), n, n);
        let diagrams = grid_persistence(&grid);
        let h0: Vec<_> = diagrams[0].points.iter().collect();
        assert_eq!(h0.len(), 1);
        assert!(h0[0].essential);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h0[0].birth, max);
        assert!(diagrams[1].is_empty(), "{:?}", diagrams[1].points);
    }

    #[test]
    fn two_equal_bumps_pair_at_the_saddle() {
        // f = max of two downward paraboloids of equal height h; discs of
        // radius sqrt((h-u)/a) touch at u = h - a (L/2)^2.
        let (h, a) = (1.0, 8.0);
        let n = 161usize;
        let c1 = 0.25f64;
        let c2 = 0.75f64;
        let spacing = 1.0 / (n - 1) as f64;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = i as f64 * spacing;
                let y = j as f64 * spacing;
                let f1 = h - a * ((x - c1) * (x - c1) + (y - 0.5) * (y - 0.5));
                let f2 = h - a * ((x - c2) * (x - c2) + (y - 0.5) * (y - 0.5));
                values.push(f1.max(f2).max(0.0));
            }
        }
        let grid = grid2(values, n, n);
        let diagrams = grid_persistence(&grid);
        let saddle = h - a * 0.25f64 * 0.25;
        let finite: Vec<_> = diagrams[0].finite_points().collect();
        assert_eq!(finite.len(), 1, "{finite:?}");
        assert_eq!(finite[0].birth, h, "second bump peak sits on a node");
        // Death within one cell's value gap of the analytic saddle: the
        // gradient magnitude near the pass is 2 a L/2, over one diagonal.
        let tol = 2.0 * a * 0.25 * spacing * 2.0;
        assert!(
            (finite[0].death - saddle).abs() < tol,
            "death {} vs saddle {saddle} (tol {tol})",
            finite[0].death
        );
    }

    fn lcg_values(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    fn diagram_key(diagrams: &[crate::diagram::PersistenceDiagram]) -> Vec<(usize, u64, u64, bool)> {
        let mut key: Vec<_> = diagrams
            .iter()
            .flat_map(|d| {
                d.points
                    .iter()
                    .map(move |p| (d.degree, p.death.to_bits(), p.birth.to_bits(), p.essential))
            })
            .collect();
        key.sort();
        key
    }

    #[test]
    fn matches_naive_reduction_on_random_grids() {
        for seed in 0..10u64 {
            let grid = grid2(lcg_values(25, 1000 + seed), 5, 5);
            let complex = build_complex(&grid);
            let fast = compute_persistence(&complex);
            let naive = crate::reference::naive_diagrams(&complex);
            assert_eq!(diagram_key(&fast), diagram_key(&naive), "seed {seed}");
        }
        // And a couple of 3-D grids.
        for seed in 0..3u64 {
            let values = lcg_values(64, 2000 + seed);
            let grid = ScalarGrid::new(
                vec![0.0; 3],
                vec![3.0; 3],
                vec![4, 4, 4],
                values,
                1.0,
            )
            .unwrap();
            let complex = build_complex(&grid);
            let fast = compute_persistence(&complex);
            let naive = crate::reference::naive_diagrams(&complex);
            assert_eq!(diagram_key(&fast), diagram_key(&naive), "3d seed {seed}");
        }
    }

    #[test]
    fn tiny_perturbations_move_diagrams_by_at_most_epsilon() {
        let eps = 1e-6;
        let values = lcg_values(49, 77);
        let perturbed: Vec<f64> = values
            .iter()
            .zip(lcg_values(49, 78))
            .map(|(v, u)| v + eps * (2.0 * u - 1.0))
            .collect();
        let a = grid_persistence(&grid2(values, 7, 7));
        let b = grid_persistence(&grid2(perturbed, 7, 7));
        for (da, db) in a.iter().zip(&b) {
            let d = crate::distance::bottleneck(da, db).unwrap();
            assert!(d <= eps + 1e-15, "degree {}: {d}", da.degree);
        }
    }

    #[test]
    fn diagram_shifts_with_constant_offset() {
        let values: Vec<f64> = (0..25)
            .map(|i| ((i * 48271u64 % 101) as f64) / 101.0)
            .collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + 10.0).collect();
        let a = grid_persistence(&grid2(values, 5, 5));
        let b = grid_persistence(&grid2(shifted, 5, 5));
        for (da, db) in a.iter().zip(&b) {
            assert_eq!(da.len(), db.len());
            for (p, q) in da.points.iter().zip(&db.points) {
                assert!((q.death - p.death - 10.0).abs() < 1e-12);
                assert!((q.birth - p.birth - 10.0).abs() < 1e-12);
                assert_eq!(p.essential, q.essential);
            }
        }
    }
}
