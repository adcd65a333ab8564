//! Gaussian kernel density estimation on a regular grid.
//!
//! Values live at grid nodes (vertices), matching the vertex-based cubical
//! filtration downstream. Each node value is the exact kernel sum
//! `1/(n (sqrt(2 pi) eta)^D) * sum_i exp(-|p - z_i|^2 / (2 eta^2))`,
//! accumulated over sample points in input order so results do not depend on
//! how nodes are scheduled across threads.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// A regular D-dimensional grid of KDE values with axis metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    dim: usize,
    axis_min: Vec<f64>,
    axis_max: Vec<f64>,
    /// Nodes per axis (>= 2); `values.len()` is their product.
    resolution: Vec<usize>,
    /// Row-major, last axis fastest.
    values: Vec<f64>,
    bandwidth: f64,
}

impl ScalarGrid {
    pub fn new(
        axis_min: Vec<f64>,
        axis_max: Vec<f64>,
        resolution: Vec<usize>,
        values: Vec<f64>,
        bandwidth: f64,
    ) -> Result<Self> {
        let dim = resolution.len();
        if dim == 0 {
            return Err(Error::invalid("resolution", "must have at least one axis"));
        }
        if axis_min.len() != dim || axis_max.len() != dim {
            return Err(Error::invalid("axis_min", "axis metadata length != dim"));
        }
        for a in 0..dim {
            if resolution[a] < 2 {
                return Err(Error::invalid("resolution", "needs >= 2 nodes per axis"));
            }
            if !(axis_min[a] < axis_max[a]) {
                return Err(Error::invalid("axis_min", "axis_min must be < axis_max"));
            }
        }
        let expected: usize = resolution.iter().product();
        if values.len() != expected {
            return Err(Error::invalid(
                "values",
                format!("expected {expected} values, found {}", values.len()),
            ));
        }
        Ok(ScalarGrid {
            dim,
            axis_min,
            axis_max,
            resolution,
            values,
            bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn axis_min(&self) -> &[f64] {
        &self.axis_min
    }

    pub fn axis_max(&self) -> &[f64] {
        &self.axis_max
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.axis_max[axis] - self.axis_min[axis]) / (self.resolution[axis] - 1) as f64
    }

    pub fn node_coord(&self, axis: usize, index: usize) -> f64 {
        self.axis_min[axis] + self.spacing(axis) * index as f64
    }

    /// Flat index of the node with per-axis indices `idx` (row-major, last
    /// axis fastest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        let mut flat = 0usize;
        for a in 0..self.dim {
            debug_assert!(idx[a] < self.resolution[a]);
            flat = flat * self.resolution[a] + idx[a];
        }
        flat
    }

    /// Per-axis indices for a flat node index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.resolution[a];
            flat /= self.resolution[a];
        }
        idx
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }
}

/// Default node counts per axis: 128^2 in 2D, 64^3 in 3D.
pub fn default_resolution(dim: usize) -> Vec<usize> {
    let per_axis = match dim {
        1 => 1024,
        2 => 128,
        3 => 64,
        _ => 32,
    };
    vec![per_axis; dim]
}

/// Evaluate the Gaussian KDE of `cloud` on a grid spanning the data bounding
/// box padded by `padding` per side (default `3 * bandwidth`).
pub fn kde_evaluate(
    cloud: &PointCloud,
    bandwidth: f64,
    resolution: &[usize],
    padding: Option<f64>,
) -> Result<ScalarGrid> {
    kde_evaluate_opts(cloud, bandwidth, resolution, padding, None)
}

/// As [`kde_evaluate`], with an optional hard kernel cutoff radius: sample
/// points farther than `cutoff` from a node are skipped (no renormalization).
/// With `cutoff = 5 * bandwidth` each skipped kernel term is below `4e-6` of
/// its own peak, so the node error is at most `n * exp(-12.5)` kernel units.
pub fn kde_evaluate_opts(
    cloud: &PointCloud,
    bandwidth: f64,
    resolution: &[usize],
    padding: Option<f64>,
    cutoff: Option<f64>,
) -> Result<ScalarGrid> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth", "must be strictly positive"));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cloud", "must contain at least one point"));
    }
    let dim = cloud.ambient_dim();
    if resolution.len() != dim {
        return Err(Error::invalid(
            "resolution",
            format!("expected {dim} axes, found {}", resolution.len()),
        ));
    }
    let padding = padding.unwrap_or(3.0 * bandwidth);
    if !(padding >= 0.0) {
        return Err(Error::invalid("padding", "must be non-negative"));
    }

    let (mut lo, mut hi) = cloud.bounding_box();
    for a in 0..dim {
        lo[a] -= padding;
        hi[a] += padding;
        if lo[a] == hi[a] {
            // Degenerate axis (single point, zero padding); give it width.
            lo[a] -= bandwidth;
            hi[a] += bandwidth;
        }
    }

    let norm = 1.0
        / (cloud.len() as f64
            * (std::f64::consts::TAU.sqrt() * bandwidth).powi(dim as i32));
    let inv_two_eta_sq = 1.0 / (2.0 * bandwidth * bandwidth);
    let cutoff_sq = cutoff.map(|c| c * c);

    let total: usize = resolution.iter().product();
    let shell = ScalarGrid {
        dim,
        axis_min: lo.clone(),
        axis_max: hi.clone(),
        resolution: resolution.to_vec(),
        values: Vec::new(),
        bandwidth,
    };
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = shell.multi_index(flat);
            let mut node = [0.0f64; 8];
            for a in 0..dim {
                node[a] = shell.node_coord(a, idx[a]);
            }
            let mut sum = 0.0;
            for p in cloud.iter() {
                let mut dist_sq = 0.0;
                for a in 0..dim {
                    let d = node[a] - p[a];
                    dist_sq += d * d;
                }
                if let Some(c2) = cutoff_sq {
                    if dist_sq > c2 {
                        continue;
                    }
                }
                sum += (-dist_sq * inv_two_eta_sq).exp();
            }
            norm * sum
        })
        .collect();

    ScalarGrid::new(lo, hi, resolution.to_vec(), values, bandwidth)
}

/// Grid file: `#`-prefixed header (dim, mins, maxs, resolution, bandwidth)
/// followed by the flat value list, one value per line; bit-exact round trip.
pub fn write_grid(grid: &ScalarGrid, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# dim={}", grid.dim)?;
        writeln!(w, "# min={}", join(&grid.axis_min))?;
        writeln!(w, "# max={}", join(&grid.axis_max))?;
        writeln!(
            w,
            "# resolution={}",
            grid.resolution
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
        writeln!(w, "# bandwidth={}", grid.bandwidth)?;
        for v in &grid.values {
            writeln!(w, "{v}")?;
        }
        w.flush()
    };
    emit().map_err(io_err)
}

pub fn read_grid(path: &Path) -> Result<ScalarGrid> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut axis_min = Vec::new();
    let mut axis_max = Vec::new();
    let mut resolution = Vec::new();
    let mut bandwidth = 0.0f64;
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            let header = header.trim();
            let parse_f64s = |s: &str| -> std::result::Result<Vec<f64>, String> {
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| e.to_string()))
                    .collect()
            };
            if let Some(v) = header.strip_prefix("min=") {
                axis_min = parse_f64s(v).map_err(parse_err)?;
            } else if let Some(v) = header.strip_prefix("max=") {
                axis_max = parse_f64s(v).map_err(parse_err)?;
            } else if let Some(v) = header.strip_prefix("resolution=") {
                resolution = v
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("bad resolution: {e}")))?;
            } else if let Some(v) = header.strip_prefix("bandwidth=") {
                bandwidth = v
                    .parse()
                    .map_err(|e| parse_err(format!("bad bandwidth: {e}")))?;
            }
            continue;
        }
        values.push(
            trimmed
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad value: {e}")))?,
        );
    }
    ScalarGrid::new(axis_min, axis_max, resolution, values, bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{sample, SamplerSpec, Shape};

    #[test]
    fn single_point_peak_matches_formula() {
        let cloud = PointCloud::new(vec![0.0, 0.0], 2, "origin").unwrap();
        let eta = 0.25;
        let grid = kde_evaluate(&cloud, eta, &[65, 65], None).unwrap();
        // Odd resolution centers a node on the data point.
        let center = grid.value_at(&[32, 32]);
        let want = 1.0 / (std::f64::consts::TAU * eta * eta);
        assert!((center - want).abs() < 1e-12 * want, "{center} vs {want}");
    }

    #[test]
    fn duplicate_points_are_idempotent() {
        let one = PointCloud::new(vec![0.3, -0.1], 2, "one").unwrap();
        let two = PointCloud::new(vec![0.3, -0.1, 0.3, -0.1], 2, "two").unwrap();
        let g1 = kde_evaluate(&one, 0.2, &[33, 33], None).unwrap();
        let g2 = kde_evaluate(&two, 0.2, &[33, 33], None).unwrap();
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn matches_direct_double_loop() {
        let cloud = sample(&SamplerSpec {
            shape: Shape::Circles {
                rings: vec![(1.0, 50)],
            },
            n: 50,
            seed: 21,
        })
        .unwrap();
        let eta = 0.3;
        let grid = kde_evaluate(&cloud, eta, &[17, 19], None).unwrap();
        let norm = 1.0 / (50.0 * (std::f64::consts::TAU.sqrt() * eta).powi(2));
        for i in 0..17 {
            for j in 0..19 {
                let x = grid.node_coord(0, i);
                let y = grid.node_coord(1, j);
                let mut direct = 0.0;
                for p in cloud.iter() {
                    let d2 = (x - p[0]).powi(2) + (y - p[1]).powi(2);
                    direct += (-d2 / (2.0 * eta * eta)).exp();
                }
                direct *= norm;
                let got = grid.value_at(&[i, j]);
                assert!((got - direct).abs() < 1e-12, "node ({i},{j})");
            }
        }
    }

    #[test]
    fn values_are_positive_without_cutoff() {
        let cloud = sample(&SamplerSpec {
            shape: Shape::Sphere { radius: 1.0 },
            n: 30,
            seed: 2,
        })
        .unwrap();
        let grid = kde_evaluate(&cloud, 0.3, &[12, 12, 12], None).unwrap();
        assert!(grid.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn riemann_mass_is_close_to_one() {
        let cloud = sample(&SamplerSpec {
            shape: Shape::Circles {
                rings: vec![(1.0, 200)],
            },
            n: 200,
            seed: 4,
        })
        .unwrap();
        let eta = 0.15;
        let grid = kde_evaluate(&cloud, eta, &[80, 80], Some(5.0 * eta)).unwrap();
        let mass: f64 = grid.values().iter().sum::<f64>() * grid.cell_volume();
        assert!((mass - 1.0).abs() < 0.05, "mass {mass}");
    }

    #[test]
    fn mirroring_the_cloud_mirrors_the_grid() {
        let cloud = sample(&SamplerSpec {
            shape: Shape::Circles {
                rings: vec![(1.5, 40)],
            },
            n: 40,
            seed: 8,
        })
        .unwrap();
        let mirrored = PointCloud::new(
            cloud
                .iter()
                .flat_map(|p| [-p[0], p[1]])
                .collect::<Vec<_>>(),
            2,
            "mirrored",
        )
        .unwrap();
        let g = kde_evaluate(&cloud, 0.2, &[21, 21], None).unwrap();
        let m = kde_evaluate(&mirrored, 0.2, &[21, 21], None).unwrap();
        // Up to grid alignment: node coordinates differ in the last ulp, so
        // compare values to relative precision.
        for i in 0..21 {
            for j in 0..21 {
                let a = g.value_at(&[i, j]);
                let b = m.value_at(&[20 - i, j]);
                assert!((a - b).abs() <= 1e-12 * a.abs(), "node ({i},{j})");
            }
        }
    }

    #[test]
    fn cutoff_truncation_error_is_tiny() {
        let cloud = sample(&SamplerSpec {
            shape: Shape::Circles {
                rings: vec![(1.0, 60)],
            },
            n: 60,
            seed: 13,
        })
        .unwrap();
        let eta = 0.2;
        let exact = kde_evaluate(&cloud, eta, &[64, 64], Some(5.0 * eta)).unwrap();
        let truncated =
            kde_evaluate_opts(&cloud, eta, &[64, 64], Some(5.0 * eta), Some(5.0 * eta)).unwrap();
        let max_err = exact
            .values()
            .iter()
            .zip(truncated.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Every skipped term is below exp(-12.5) (about 4e-6) of a kernel
        // peak; at most n of them are skipped per node.
        let knorm = 1.0 / (60.0 * (std::f64::consts::TAU.sqrt() * eta).powi(2));
        let bound = 60.0 * knorm * (-12.5f64).exp();
        assert!(max_err <= bound, "err {max_err} bound {bound}");
        assert!(max_err > 0.0, "cutoff must actually drop terms");
    }

    #[test]
    fn parameter_errors() {
        let cloud = PointCloud::new(vec![0.0, 0.0], 2, "x").unwrap();
        assert!(matches!(
            kde_evaluate(&cloud, 0.0, &[8, 8], None),
            Err(Error::InvalidParameter { name: "bandwidth", .. })
        ));
        let empty = PointCloud::new(vec![], 2, "e").unwrap();
        assert!(matches!(
            kde_evaluate(&empty, 0.1, &[8, 8], None),
            Err(Error::InvalidParameter { name: "cloud", .. })
        ));
        assert!(matches!(
            kde_evaluate(&cloud, 0.1, &[1, 8], None),
            Err(Error::InvalidParameter { name: "resolution", .. })
        ));
    }

    #[test]
    fn grid_file_round_trip_is_bit_exact() {
        let cloud = PointCloud::new(vec![0.1, 0.2, -0.4, 0.9], 2, "c").unwrap();
        let grid = kde_evaluate(&cloud, 0.17, &[9, 11], None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.tsv");
        write_grid(&grid, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(grid.resolution(), back.resolution());
        assert_eq!(grid.bandwidth(), back.bandwidth());
        for (a, b) in grid.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for a in 0..2 {
            assert_eq!(grid.axis_min()[a].to_bits(), back.axis_min()[a].to_bits());
            assert_eq!(grid.axis_max()[a].to_bits(), back.axis_max()[a].to_bits());
        }
    }
}
