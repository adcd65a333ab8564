//! Signal/noise separation on replicated diagrams: lifetime order statistics,
//! one-sided percentile-bootstrap intervals, and p-values.
//!
//! The statistic `T_j` is the j-th largest lifetime `|b - d|` among finite
//! points. A statistic is significant when the real value exceeds the
//! empirical `1 - alpha` percentile of the replica values; the one-sided
//! p-value is the fraction of replicas at or above the real value. Testing is
//! sequential in `j` and stops at the first insignificant statistic; for
//! degree-0 diagrams the excluded point at infinity is added back to the
//! final component count.

use std::io::Write;
use std::path::Path;

use log::warn;

use crate::diagram::PersistenceDiagram;
use crate::error::{Error, Result};

/// Outcome of testing one order statistic against the replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalReport {
    /// Which order statistic (j >= 1).
    pub statistic_index: usize,
    /// T_j of the real diagram.
    pub t_hat: f64,
    /// Upper end of the one-sided interval [0, c2] at level alpha.
    pub ci_upper: f64,
    /// `(1/M) * #{ T*_m >= t_hat }`.
    pub p_value: f64,
    pub significant: bool,
    /// Number of replicas M.
    pub replica_count: usize,
    pub homology_degree: usize,
    /// Whether the diagram carries an excluded essential point that final
    /// counts re-add.
    pub essential_added_back: bool,
}

/// j-th largest lifetime among the finite points (1-based). Asking beyond the
/// diagram size yields 0 with a warning: a replica may simply have fewer
/// long-lived points.
pub fn order_statistic(diagram: &PersistenceDiagram, j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("j", "order statistics are 1-based"));
    }
    let mut lifetimes: Vec<f64> = diagram.finite_points().map(|p| p.lifetime()).collect();
    if j > lifetimes.len() {
        warn!(
            "order_statistic: j = {j} exceeds {} finite points; returning 0",
            lifetimes.len()
        );
        return Ok(0.0);
    }
    lifetimes.sort_by(|a, b| b.total_cmp(a));
    Ok(lifetimes[j - 1])
}

/// Linear-interpolation percentile of sorted values (the convention used by
/// the bootstrap interval): rank `h = (M - 1) q` between order statistics.
fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Percentile-bootstrap test of `T_j`: one-sided interval `[0, c2]` with
/// `c2` the `1 - alpha` replica percentile.
pub fn significance_test(
    real: &PersistenceDiagram,
    replicas: &[PersistenceDiagram],
    j: usize,
    alpha: f64,
) -> Result<SignalReport> {
    let m = replicas.len();
    if m < 20 {
        return Err(Error::precondition(format!(
            "significance test needs M >= 20 replicas for percentile resolution (M = {m})"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie strictly in (0, 1)"));
    }
    let t_hat = order_statistic(real, j)?;
    let mut t_star: Vec<f64> = replicas
        .iter()
        .map(|r| order_statistic(r, j))
        .collect::<Result<_>>()?;
    let exceed = t_star.iter().filter(|&&t| t >= t_hat).count();
    t_star.sort_by(f64::total_cmp);
    let c2 = percentile_linear(&t_star, 1.0 - alpha);
    Ok(SignalReport {
        statistic_index: j,
        t_hat,
        ci_upper: c2,
        p_value: exceed as f64 / m as f64,
        significant: t_hat > c2,
        replica_count: m,
        homology_degree: real.degree,
        essential_added_back: real.has_essential(),
    })
}

/// Sequential significance summary.
#[derive(Debug, Clone)]
pub struct SignificanceSummary {
    /// Statistics tested in order, up to and including the first
    /// insignificant one.
    pub reports: Vec<SignalReport>,
    /// Number of significant statistics before the first failure.
    pub significant_count: usize,
    /// `significant_count` plus the re-added essential point, when present.
    pub total_with_essential: usize,
}

/// Test `T_1, T_2, ...` until the first insignificant statistic (at most
/// `j_max`), then add the excluded essential point back into the count.
pub fn count_significant(
    real: &PersistenceDiagram,
    replicas: &[PersistenceDiagram],
    alpha: f64,
    j_max: usize,
) -> Result<SignificanceSummary> {
    if j_max == 0 {
        return Err(Error::invalid("j_max", "must test at least T_1"));
    }
    let mut reports = Vec::new();
    let mut significant_count = 0usize;
    for j in 1..=j_max {
        let report = significance_test(real, replicas, j, alpha)?;
        let significant = report.significant;
        reports.push(report);
        if significant {
            significant_count += 1;
        } else {
            break;
        }
    }
    let essential = usize::from(real.has_essential());
    Ok(SignificanceSummary {
        reports,
        significant_count,
        total_with_essential: significant_count + essential,
    })
}

/// Report table mirroring the experiment tables: statistic, real value,
/// block scheme, CI, p-value, significance.
pub fn write_report(
    summary: &SignificanceSummary,
    scheme: &str,
    alpha: f64,
    path: &Path,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# pdrep inference report")?;
        if let Some(first) = summary.reports.first() {
            writeln!(
                w,
                "# degree={} alpha={alpha} M={} scheme={scheme}",
                first.homology_degree, first.replica_count
            )?;
        }
        writeln!(
            w,
            "# columns: statistic real_value ci_low ci_high p_value significant"
        )?;
        for r in &summary.reports {
            writeln!(
                w,
                "T{} {} 0 {} {} {}",
                r.statistic_index,
                r.t_hat,
                r.ci_upper,
                r.p_value,
                if r.significant { "yes" } else { "no" }
            )?;
        }
        writeln!(w, "# significant_count={}", summary.significant_count)?;
        writeln!(
            w,
            "# essential_added_back={}",
            summary
                .reports
                .first()
                .map(|r| r.essential_added_back)
                .unwrap_or(false)
        )?;
        writeln!(w, "# total_with_essential={}", summary.total_with_essential)?;
        w.flush()
    };
    emit().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DiagramPoint;

    fn diagram(lifetimes: &[f64]) -> PersistenceDiagram {
        PersistenceDiagram::new(
            0,
            lifetimes
                .iter()
                .map(|&l| DiagramPoint::finite(0.0, l))
                .collect(),
        )
    }

    fn diagram_with_essential(lifetimes: &[f64]) -> PersistenceDiagram {
        let mut d = diagram(lifetimes);
        d.points.push(DiagramPoint {
            death: 0.0,
            birth: 10.0,
            essential: true,
        });
        d
    }

    #[test]
    fn order_statistics_sort_lifetimes() {
        let d = diagram(&[1.0, 0.5, 0.2]);
        assert_eq!(order_statistic(&d, 1).unwrap(), 1.0);
        assert_eq!(order_statistic(&d, 2).unwrap(), 0.5);
        assert_eq!(order_statistic(&d, 3).unwrap(), 0.2);
        assert_eq!(order_statistic(&d, 4).unwrap(), 0.0);
    }

    #[test]
    fn order_statistic_ignores_essential_points() {
        let d = diagram_with_essential(&[0.4]);
        assert_eq!(order_statistic(&d, 1).unwrap(), 0.4);
    }

    #[test]
    fn t_j_nonincreasing_in_j() {
        let d = diagram(&[0.9, 0.1, 0.5, 0.3, 0.7]);
        let mut prev = f64::INFINITY;
        for j in 1..=6 {
            let t = order_statistic(&d, j).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn dominated_replicas_give_zero_p_value() {
        let real = diagram(&[1.0]);
        let replicas: Vec<_> = (0..50).map(|i| diagram(&[0.1 + 0.001 * i as f64])).collect();
        let r = significance_test(&real, &replicas, 1, 0.05).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.significant);
        assert!(r.ci_upper < 1.0);
    }

    #[test]
    fn identical_replicas_give_p_one() {
        let real = diagram(&[0.7, 0.3]);
        let replicas: Vec<_> = (0..40).map(|_| diagram(&[0.7, 0.3])).collect();
        let r = significance_test(&real, &replicas, 1, 0.05).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant, "t_hat equals c2, not above it");
    }

    #[test]
    fn p_values_are_multiples_of_one_over_m() {
        let real = diagram(&[0.5]);
        let replicas: Vec<_> = (0..25)
            .map(|i| diagram(&[if i % 3 == 0 { 0.6 } else { 0.4 }]))
            .collect();
        let r = significance_test(&real, &replicas, 1, 0.05).unwrap();
        let scaled = r.p_value * 25.0;
        assert!((scaled - scaled.round()).abs() < 1e-12);
    }

    #[test]
    fn too_few_replicas_is_a_precondition_error() {
        let real = diagram(&[0.5]);
        let replicas: Vec<_> = (0..19).map(|_| diagram(&[0.1])).collect();
        assert!(matches!(
            significance_test(&real, &replicas, 1, 0.05),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn sequential_count_stops_at_first_insignificant() {
        // Real diagram: two big lifetimes, then noise within replica range.
        let real = diagram_with_essential(&[0.9, 0.8, 0.11]);
        let replicas: Vec<_> = (0..100)
            .map(|i| {
                let noise = 0.1 + 0.05 * (i as f64 / 99.0);
                diagram(&[noise, noise * 0.9, noise * 0.8])
            })
            .collect();
        let summary = count_significant(&real, &replicas, 0.05, 10).unwrap();
        assert_eq!(summary.significant_count, 2);
        assert_eq!(summary.total_with_essential, 3);
        assert_eq!(summary.reports.len(), 3, "stops after first failure");
        assert!(!summary.reports[2].significant);
    }

    #[test]
    fn scaling_lifetimes_leaves_decisions_unchanged() {
        let real = diagram(&[0.9, 0.2]);
        let replicas: Vec<_> = (0..60)
            .map(|i| diagram(&[0.15 + 0.002 * (i as f64), 0.1]))
            .collect();
        let before = count_significant(&real, &replicas, 0.05, 5).unwrap();
        let scale = 37.5;
        let scaled_real = diagram(&[0.9 * scale, 0.2 * scale]);
        let scaled_reps: Vec<_> = (0..60)
            .map(|i| diagram(&[(0.15 + 0.002 * (i as f64)) * scale, 0.1 * scale]))
            .collect();
        let after = count_significant(&scaled_real, &scaled_reps, 0.05, 5).unwrap();
        assert_eq!(before.significant_count, after.significant_count);
        for (a, b) in before.reports.iter().zip(&after.reports) {
            assert_eq!(a.significant, b.significant);
            assert_eq!(a.p_value, b.p_value);
        }
    }

    #[test]
    fn report_is_deterministic() {
        let real = diagram(&[0.6, 0.25]);
        let replicas: Vec<_> = (0..30).map(|i| diagram(&[0.2 + 0.01 * i as f64])).collect();
        let a = significance_test(&real, &replicas, 1, 0.05).unwrap();
        let b = significance_test(&real, &replicas, 1, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_file_has_table_shape() {
        let real = diagram_with_essential(&[0.9, 0.05]);
        let replicas: Vec<_> = (0..40)
            .map(|i| diagram(&[0.1 + 0.001 * i as f64, 0.09]))
            .collect();
        let summary = count_significant(&real, &replicas, 0.05, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        write_report(&summary, "(500,20,50)", 0.05, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("T1"));
        assert!(text.contains("significant_count=1"));
        assert!(text.contains("total_with_essential=2"));
    }
}
