//! Persistence-diagram and projected-diagram (PPD) types, the projection
//! `(d, b) -> (d, b - d)` and its inverse, and the point-at-infinity policy:
//! the essential class is excluded from modeling, kept in PPD metadata, and
//! re-attached on the way back.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One diagram point in death/birth coordinates (`death < birth` for finite
/// points under the superlevel convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramPoint {
    pub death: f64,
    pub birth: f64,
    pub essential: bool,
}

impl DiagramPoint {
    pub fn finite(death: f64, birth: f64) -> Self {
        DiagramPoint {
            death,
            birth,
            essential: false,
        }
    }

    pub fn lifetime(&self) -> f64 {
        (self.birth - self.death).abs()
    }
}

/// Persistence diagram for a single homology degree.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub degree: usize,
    pub points: Vec<DiagramPoint>,
}

impl PersistenceDiagram {
    pub fn new(degree: usize, points: Vec<DiagramPoint>) -> Self {
        PersistenceDiagram { degree, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn finite_points(&self) -> impl Iterator<Item = &DiagramPoint> {
        self.points.iter().filter(|p| !p.essential)
    }

    pub fn has_essential(&self) -> bool {
        self.points.iter().any(|p| p.essential)
    }

    /// `death < birth` must hold for every finite point.
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !p.essential && !(p.death < p.birth) {
                return Err(Error::invalid(
                    "points",
                    format!("finite point ({}, {}) violates death < birth", p.death, p.birth),
                ));
            }
        }
        Ok(())
    }
}

/// Projected persistence diagram: points `(x1, x2) = (d, b - d)` with
/// `x2 > 0`, living in `R x R+`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ppd {
    pub points: Vec<[f64; 2]>,
    pub source_degree: usize,
    /// The removed point at infinity, with its original list index, when
    /// [`to_ppd`] was asked to drop it.
    removed_essential: Option<(usize, DiagramPoint)>,
}

impl Ppd {
    pub fn new(points: Vec<[f64; 2]>, source_degree: usize) -> Self {
        Ppd {
            points,
            source_degree,
            removed_essential: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn removed_essential(&self) -> Option<(usize, DiagramPoint)> {
        self.removed_essential
    }
}

/// Project a diagram to PPD coordinates. With `drop_infinity`, the essential
/// point (the highest, leftmost flagged point) is removed first and kept in
/// metadata; otherwise flags are discarded and every point is mapped.
pub fn to_ppd(diagram: &PersistenceDiagram, drop_infinity: bool) -> Ppd {
    debug_assert!(diagram.validate().is_ok());
    let mut removed: Option<(usize, DiagramPoint)> = None;
    if drop_infinity {
        let mut best: Option<usize> = None;
        for (i, p) in diagram.points.iter().enumerate() {
            if !p.essential {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let q = &diagram.points[j];
                    // Highest birth wins; leftmost death breaks ties.
                    if (p.birth, -p.death) > (q.birth, -q.death) {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
            };
        }
        removed = best.map(|i| (i, diagram.points[i]));
    }
    let points = diagram
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| removed.map_or(true, |(j, _)| *i != j))
        .map(|(_, p)| [p.death, p.birth - p.death])
        .collect();
    Ppd {
        points,
        source_degree: diagram.degree,
        removed_essential: removed,
    }
}

/// Inverse projection `(x1, x2) -> (x1, x1 + x2)`; re-attaches a stored
/// essential point at its original index when present.
pub fn from_ppd(ppd: &Ppd) -> PersistenceDiagram {
    let mut points: Vec<DiagramPoint> = ppd
        .points
        .iter()
        .map(|&[x1, x2]| DiagramPoint::finite(x1, x1 + x2))
        .collect();
    if let Some((index, p)) = ppd.removed_essential {
        points.insert(index.min(points.len()), p);
    }
    PersistenceDiagram::new(ppd.source_degree, points)
}

/// Bootstrap resample: `N` points drawn with replacement. Metadata about a
/// removed essential point is not carried over.
pub fn resample_diagram(ppd: &Ppd, seed: u64) -> Result<Ppd> {
    if ppd.is_empty() {
        return Err(Error::precondition("cannot resample an empty PPD"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ppd.len();
    let points = (0..n)
        .map(|_| ppd.points[rng.random_range(0..n)])
        .collect();
    Ok(Ppd {
        points,
        source_degree: ppd.source_degree,
        removed_essential: None,
    })
}

/// Write diagrams (one or more degrees) as `degree death birth essential`
/// rows with a provenance header.
pub fn write_diagrams(
    diagrams: &[PersistenceDiagram],
    provenance: &str,
    path: &Path,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# pdrep diagram")?;
        writeln!(w, "# provenance={provenance}")?;
        writeln!(
            w,
            "# degrees={}",
            diagrams
                .iter()
                .map(|d| d.degree.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
        writeln!(w, "# columns: degree death birth essential")?;
        for d in diagrams {
            for p in &d.points {
                writeln!(
                    w,
                    "{} {} {} {}",
                    d.degree,
                    p.death,
                    p.birth,
                    u8::from(p.essential)
                )?;
            }
        }
        w.flush()
    };
    emit().map_err(io_err)
}

/// Read a diagram file; returns one diagram per degree listed in the header
/// (or per degree present among the rows if the header is absent), sorted by
/// degree.
pub fn read_diagrams(path: &Path) -> Result<Vec<PersistenceDiagram>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut degrees: Vec<usize> = Vec::new();
    let mut rows: Vec<(usize, DiagramPoint)> = Vec::new();
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
            if let Some(v) = header.trim().strip_prefix("degrees=") {
                degrees = v
                    .split_whitespace()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("bad degrees: {e}")))?;
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", cols.len())));
        }
        let degree: usize = cols[0]
            .parse()
            .map_err(|e| parse_err(format!("bad degree: {e}")))?;
        let death: f64 = cols[1]
            .parse()
            .map_err(|e| parse_err(format!("bad death: {e}")))?;
        let birth: f64 = cols[2]
            .parse()
            .map_err(|e| parse_err(format!("bad birth: {e}")))?;
        let essential = match cols[3] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("bad essential flag `{other}`"))),
        };
        rows.push((
            degree,
            DiagramPoint {
                death,
                birth,
                essential,
            },
        ));
    }
    if degrees.is_empty() {
        degrees = rows.iter().map(|(d, _)| *d).collect();
        degrees.sort_unstable();
        degrees.dedup();
    }
    let mut out: Vec<PersistenceDiagram> = degrees
        .iter()
        .map(|&d| PersistenceDiagram::new(d, Vec::new()))
        .collect();
    for (degree, point) in rows {
        match out.iter_mut().find(|d| d.degree == degree) {
            Some(d) => d.points.push(point),
            None => out.push(PersistenceDiagram::new(degree, vec![point])),
        }
    }
    out.sort_by_key(|d| d.degree);
    Ok(out)
}

/// PPD file: `x1 x2` rows plus degree and essential metadata in the header.
pub fn write_ppd(ppd: &Ppd, provenance: &str, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# pdrep ppd")?;
        writeln!(w, "# provenance={provenance}")?;
        writeln!(w, "# degree={}", ppd.source_degree)?;
        if let Some((index, p)) = ppd.removed_essential {
            writeln!(
                w,
                "# essential={} {} {} {}",
                index,
                p.death,
                p.birth,
                u8::from(p.essential)
            )?;
        }
        writeln!(w, "# columns: x1 x2")?;
        for [x1, x2] in &ppd.points {
            writeln!(w, "{x1} {x2}")?;
        }
        w.flush()
    };
    emit().map_err(io_err)
}

pub fn read_ppd(path: &Path) -> Result<Ppd> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut degree = 0usize;
    let mut removed: Option<(usize, DiagramPoint)> = None;
    let mut points = Vec::new();
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
            if let Some(v) = header.strip_prefix("degree=") {
                degree = v
                    .parse()
                    .map_err(|e| parse_err(format!("bad degree: {e}")))?;
            } else if let Some(v) = header.strip_prefix("essential=") {
                let cols: Vec<&str> = v.split_whitespace().collect();
                if cols.len() != 4 {
                    return Err(parse_err("essential metadata needs 4 fields".into()));
                }
                let index: usize = cols[0]
                    .parse()
                    .map_err(|e| parse_err(format!("bad index: {e}")))?;
                let death: f64 = cols[1]
                    .parse()
                    .map_err(|e| parse_err(format!("bad death: {e}")))?;
                let birth: f64 = cols[2]
                    .parse()
                    .map_err(|e| parse_err(format!("bad birth: {e}")))?;
                removed = Some((
                    index,
                    DiagramPoint {
                        death,
                        birth,
                        essential: cols[3] == "1",
                    },
                ));
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(parse_err(format!("expected 2 columns, found {}", cols.len())));
        }
        let x1: f64 = cols[0]
            .parse()
            .map_err(|e| parse_err(format!("bad x1: {e}")))?;
        let x2: f64 = cols[1]
            .parse()
            .map_err(|e| parse_err(format!("bad x2: {e}")))?;
        points.push([x1, x2]);
    }
    Ok(Ppd {
        points,
        source_degree: degree,
        removed_essential: removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_fixes_zero_death() {
        let d = PersistenceDiagram::new(0, vec![DiagramPoint::finite(0.0, 1.0)]);
        let ppd = to_ppd(&d, false);
        assert_eq!(ppd.points, vec![[0.0, 1.0]]);
    }

    #[test]
    fn projection_formula() {
        let d = PersistenceDiagram::new(
            1,
            vec![
                DiagramPoint::finite(-1.0, 2.0),
                DiagramPoint::finite(0.5, 0.7),
            ],
        );
        let ppd = to_ppd(&d, false);
        assert_eq!(ppd.points[0], [-1.0, 3.0]);
        assert_eq!(ppd.points[1][0], 0.5);
        assert_eq!(ppd.points[1][1].to_bits(), (0.7f64 - 0.5f64).to_bits());
        assert!((ppd.points[1][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn round_trip_without_essential_is_bit_exact() {
        let d = PersistenceDiagram::new(
            0,
            vec![
                DiagramPoint::finite(0.25, 0.75),
                DiagramPoint::finite(-0.75, 0.125),
            ],
        );
        let back = from_ppd(&to_ppd(&d, false));
        assert_eq!(back.degree, 0);
        for (p, q) in d.points.iter().zip(&back.points) {
            assert_eq!(p.death.to_bits(), q.death.to_bits());
            assert_eq!(p.birth.to_bits(), q.birth.to_bits());
        }
    }

    #[test]
    fn drop_infinity_records_and_reattaches() {
        let d = PersistenceDiagram::new(
            0,
            vec![
                DiagramPoint::finite(0.1, 0.4),
                DiagramPoint {
                    death: 0.0,
                    birth: 0.9,
                    essential: true,
                },
                DiagramPoint::finite(0.2, 0.3),
            ],
        );
        let ppd = to_ppd(&d, true);
        assert_eq!(ppd.len(), 2);
        let (idx, p) = ppd.removed_essential().unwrap();
        assert_eq!(idx, 1);
        assert!(p.essential);
        assert_eq!(p.birth, 0.9);
        let back = from_ppd(&ppd);
        assert_eq!(back, d);
    }

    #[test]
    fn drop_infinity_prefers_highest_then_leftmost() {
        let d = PersistenceDiagram::new(
            0,
            vec![
                DiagramPoint {
                    death: 0.2,
                    birth: 0.9,
                    essential: true,
                },
                DiagramPoint {
                    death: 0.1,
                    birth: 0.9,
                    essential: true,
                },
            ],
        );
        let ppd = to_ppd(&d, true);
        let (idx, _) = ppd.removed_essential().unwrap();
        assert_eq!(idx, 1, "leftmost (smaller death) wins the tie");
    }

    #[test]
    fn projection_preserves_count_without_drop() {
        let d = PersistenceDiagram::new(
            0,
            vec![
                DiagramPoint::finite(0.0, 0.5),
                DiagramPoint::finite(0.1, 0.2),
            ],
        );
        assert_eq!(to_ppd(&d, false).len(), d.len());
    }

    #[test]
    fn resample_single_point_repeats_it() {
        let ppd = Ppd::new(vec![[0.3, 0.8]], 0);
        let r = resample_diagram(&ppd, 4).unwrap();
        assert_eq!(r.points, vec![[0.3, 0.8]]);
    }

    #[test]
    fn resample_support_containment_and_determinism() {
        let ppd = Ppd::new(
            (0..40).map(|i| [i as f64 * 0.1, 1.0 + i as f64]).collect(),
            1,
        );
        let a = resample_diagram(&ppd, 9).unwrap();
        let b = resample_diagram(&ppd, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for p in &a.points {
            assert!(ppd.points.contains(p));
        }
    }

    #[test]
    fn resample_empty_errors() {
        let ppd = Ppd::new(vec![], 0);
        assert!(matches!(
            resample_diagram(&ppd, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn diagram_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.tsv");
        let diagrams = vec![
            PersistenceDiagram::new(
                0,
                vec![
                    DiagramPoint {
                        death: 0.001,
                        birth: 0.93,
                        essential: true,
                    },
                    DiagramPoint::finite(0.25, 0.5),
                ],
            ),
            PersistenceDiagram::new(1, vec![]),
            PersistenceDiagram::new(2, vec![DiagramPoint::finite(-0.125, 0.375)]),
        ];
        write_diagrams(&diagrams, "test", &path).unwrap();
        let back = read_diagrams(&path).unwrap();
        assert_eq!(back, diagrams);
    }

    #[test]
    fn ppd_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ppd.tsv");
        let d = PersistenceDiagram::new(
            0,
            vec![
                DiagramPoint {
                    death: 0.0,
                    birth: 1.0,
                    essential: true,
                },
                DiagramPoint::finite(0.1, 0.7),
            ],
        );
        let ppd = to_ppd(&d, true);
        write_ppd(&ppd, "test", &path).unwrap();
        let back = read_ppd(&path).unwrap();
        assert_eq!(back, ppd);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Round-trip bit-exactness over diagrams with moderate coordinate
        // ranges, both directions.
        #[test]
        fn prop_round_trip_bit_exact(
            raw in proptest::collection::vec((-2.0f64..2.0, 1e-9f64..2.0), 1..40)
        ) {
            let points: Vec<DiagramPoint> = raw
                .iter()
                .map(|&(d, l)| DiagramPoint::finite(d, d + l))
                .collect();
            let diagram = PersistenceDiagram::new(0, points);
            let ppd = to_ppd(&diagram, false);
            let back = from_ppd(&ppd);
            for (p, q) in diagram.points.iter().zip(&back.points) {
                prop_assert_eq!(p.death.to_bits(), q.death.to_bits());
                prop_assert_eq!(p.birth.to_bits(), q.birth.to_bits());
            }
            let ppd2 = to_ppd(&back, false);
            for (a, b) in ppd.points.iter().zip(&ppd2.points) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }
}
