//! Synthetic samplers for the three test manifolds (sphere, torus, concentric
//! circles) and bootstrap resampling of point clouds.
//!
//! Sphere and circle samples are drawn area/arc-uniformly in closed form; the
//! torus is sampled uniformly w.r.t. its Riemannian area element by rejection
//! on the angular density proportional to `R + r cos(phi)`.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A finite set of points in `R^D`, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
    /// Free-text provenance (shape, n, seed).
    pub label: String,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ambient_dim", "must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(
                "points",
                format!("flat length {} is not a multiple of dim {}", coords.len(), dim),
            ));
        }
        Ok(PointCloud {
            coords,
            dim,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Componentwise bounding box (min, max).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for (a, &x) in p.iter().enumerate() {
                lo[a] = lo[a].min(x);
                hi[a] = hi[a].max(x);
            }
        }
        (lo, hi)
    }
}

/// Supported manifolds.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Sphere S^2 in R^3 of the given radius, centered at the origin.
    Sphere { radius: f64 },
    /// Torus in R^3: circle of radius `tube_radius` rotated about the z-axis
    /// with its center at `center_distance` from the origin.
    Torus {
        tube_radius: f64,
        center_distance: f64,
    },
    /// Concentric circles in R^2: per-ring (radius, point count).
    Circles { rings: Vec<(f64, usize)> },
}

impl Shape {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Shape::Sphere { .. } | Shape::Torus { .. } => 3,
            Shape::Circles { .. } => 2,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Sphere { radius } => write!(f, "sphere({radius})"),
            Shape::Torus {
                tube_radius,
                center_distance,
            } => write!(f, "torus({tube_radius},{center_distance})"),
            Shape::Circles { rings } => {
                write!(f, "circles(")?;
                for (i, (r, c)) in rings.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{r}:{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A sampling request: shape, sample count, RNG seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub shape: Shape,
    pub n: usize,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            Shape::Sphere { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::invalid("radius", "must be strictly positive"));
                }
            }
            Shape::Torus {
                tube_radius,
                center_distance,
            } => {
                if !(*tube_radius > 0.0) {
                    return Err(Error::invalid("tube_radius", "must be strictly positive"));
                }
                if !(*center_distance > 0.0) {
                    return Err(Error::invalid(
                        "center_distance",
                        "must be strictly positive",
                    ));
                }
            }
            Shape::Circles { rings } => {
                if rings.is_empty() {
                    return Err(Error::invalid("rings", "must name at least one circle"));
                }
                for (r, _) in rings {
                    if !(*r > 0.0) {
                        return Err(Error::invalid("rings", "radii must be strictly positive"));
                    }
                }
                let total: usize = rings.iter().map(|(_, c)| c).sum();
                if total != self.n {
                    return Err(Error::invalid(
                        "rings",
                        format!("per-circle counts sum to {total}, expected n={}", self.n),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Draw `spec.n` points uniformly on the requested manifold.
pub fn sample(spec: &SamplerSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.shape.ambient_dim();
    let mut coords = Vec::with_capacity(spec.n * dim);
    match &spec.shape {
        Shape::Sphere { radius } => {
            for _ in 0..spec.n {
                // Closed-form area-uniform: z uniform, azimuth uniform.
                let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                let rho = radius * (1.0 - u * u).sqrt();
                coords.push(rho * theta.cos());
                coords.push(rho * theta.sin());
                coords.push(radius * u);
            }
        }
        Shape::Torus {
            tube_radius: r,
            center_distance: big_r,
        } => {
            for _ in 0..spec.n {
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                // Rejection on the area element R + r cos(phi).
                let phi = loop {
                    let phi = std::f64::consts::TAU * rng.random::<f64>();
                    let accept = (big_r + r * phi.cos()) / (big_r + r);
                    if rng.random::<f64>() < accept {
                        break phi;
                    }
                };
                let ring = big_r + r * phi.cos();
                coords.push(ring * theta.cos());
                coords.push(ring * theta.sin());
                coords.push(r * phi.sin());
            }
        }
        Shape::Circles { rings } => {
            for &(radius, count) in rings {
                for _ in 0..count {
                    let theta = std::f64::consts::TAU * rng.random::<f64>();
                    coords.push(radius * theta.cos());
                    coords.push(radius * theta.sin());
                }
            }
        }
    }
    let label = format!("{} n={} seed={}", spec.shape, spec.n, spec.seed);
    PointCloud::new(coords, dim, label)
}

/// Bootstrap resample: `cloud.len()` points drawn with replacement.
pub fn resample_data(cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::precondition("cannot resample an empty cloud"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cloud.len();
    let mut coords = Vec::with_capacity(n * cloud.dim);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        coords.extend_from_slice(cloud.point(i));
    }
    PointCloud::new(
        coords,
        cloud.dim,
        format!("resample(seed={seed}) of [{}]", cloud.label),
    )
}

/// Write one point per line, `D` space-separated columns, with a provenance
/// header `# dim=D n=N seed=S shape=...`. Floats use shortest round-trip
/// formatting so read-back is bit-exact.
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(
            w,
            "# dim={} n={} shape={}",
            cloud.dim,
            cloud.len(),
            cloud.label
        )?;
        for p in cloud.iter() {
            let row: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    };
    emit().map_err(io_err)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut dim = 0usize;
    let mut label = String::new();
    let mut coords = Vec::new();
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
            for field in header.split_whitespace() {
                if let Some(v) = field.strip_prefix("dim=") {
                    dim = v
                        .parse()
                        .map_err(|e| parse_err(format!("bad dim: {e}")))?;
                }
                if let Some(v) = field.strip_prefix("shape=") {
                    label = v.to_string();
                }
            }
            continue;
        }
        let row: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("bad coordinate: {e}")))?;
        if dim == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(parse_err(format!(
                "expected {dim} columns, found {}",
                row.len()
            )));
        }
        coords.extend_from_slice(&row);
    }
    PointCloud::new(coords, dim.max(1), label)
}
