// Temporary diagnostic; deleted before shipping.
use pdrep::diagram::{read_diagrams, to_ppd};
use pdrep::gibbs::{
    conditional_hamiltonian, fit, log_pseudolikelihood, neighborhoods, spread_stats, GibbsModel,
};
use pdrep::reference::riemann_normalizer;

fn fine_log_pl(ppd: &pdrep::Ppd, model: &GibbsModel, steps: usize) -> f64 {
    let nbhds = neighborhoods(&ppd.points, model.interaction_order());
    let mut total = 0.0;
    for (p, nbhd) in ppd.points.iter().zip(&nbhds) {
        let z = riemann_normalizer(nbhd, model, steps);
        total += -conditional_hamiltonian(*p, nbhd, model) - z.ln();
    }
    total
}

#[test]
#[ignore]
fn inspect_circles_fit() {
    let diagrams = read_diagrams(std::path::Path::new("/tmp/d1.tsv")).unwrap();
    let real = diagrams.iter().find(|d| d.degree == 0).unwrap();
    let ppd = to_ppd(real, true);
    let n = ppd.len();
    let stats = spread_stats(&ppd);
    println!(
        "N={n} sigmaH2={} sigmaV2={} xbar={}",
        stats.sigma_h_sq, stats.sigma_v_sq, stats.xbar1
    );

    let report = fit(&ppd, 3, 2, None).unwrap();
    let m = report.model.clone();
    println!(
        "fitted: delta*={} delta={} th={} tv={} theta={:?} logPL={}",
        m.delta_star, m.delta, m.theta_h, m.theta_v, m.theta, report.log_pseudolikelihood
    );
    println!("fitted fine(1024): {}", fine_log_pl(&ppd, &m, 1024));
    println!("fitted fine(2048): {}", fine_log_pl(&ppd, &m, 2048));

    let free = GibbsModel {
        theta_h: n as f64 / (2.0 * stats.sigma_h_sq),
        theta_v: n as f64 / (2.0 * stats.sigma_v_sq),
        theta: vec![],
        k_max: 3,
        delta: m.delta,
        delta_star: m.delta_star,
        xbar1: stats.xbar1,
        underlying_dim: 2,
    };
    println!(
        "moment-free: th={} tv={} logPL256={} fine={}",
        free.theta_h,
        free.theta_v,
        log_pseudolikelihood(&ppd, &free).unwrap(),
        fine_log_pl(&ppd, &free, 1024)
    );

    for ds in [
        1.0 / (n as f64),
        2.0 / (n as f64),
        1.0 / (n as f64).sqrt(),
        2.0 / (n as f64).sqrt(),
    ] {
        let rep = fit(&ppd, 3, 2, Some(&[ds])).unwrap();
        let m = rep.model.clone();
        println!(
            "ds={ds:.4}: delta={:.5} th={:.1} tv={:.1} theta={:?} logPL={:.1} fine={:.1}",
            m.delta,
            m.theta_h,
            m.theta_v,
            m.theta,
            rep.log_pseudolikelihood,
            fine_log_pl(&ppd, &m, 1024)
        );
    }
}
