//! Metropolis-Hastings replication of projected persistence diagrams.
//!
//! One sweep visits the N points in index order; each visit proposes a
//! replacement from a bivariate Gaussian matched to the empirical moments of
//! the current configuration, restricted to `R x R+`, and accepts with
//!
//! ```text
//! rho = min{ 1, [f(x* | N(x)) q(x | x~*)] / [f(x | N(x)) q(x* | x~)] }
//! ```
//!
//! Both conditional densities share the neighborhood of the current point, so
//! their normalizers cancel and the ratio is computed in log space from the
//! conditional Hamiltonians alone. Proposal moments are refreshed after every
//! accepted replacement (the ratio references the updated configuration), so
//! the standard chain is adaptive; a frozen-proposal mode exists for
//! correctness tests where classical Metropolis theory applies.
//!
//! Replication runs one burn-in from the original PPD, then `n_R` restarts
//! from the post-burn-in state; each restart emits the last configuration of
//! each of `n_r` blocks of `n_b` sweeps, for `M = n_r * n_R` replicas.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diagram::{from_ppd, Ppd};
use crate::distance::{bottleneck, wasserstein};
use crate::error::{Error, Result};
use crate::gibbs::{conditional_hamiltonian, neighborhood, GibbsModel};

/// Block scheme for replica generation; the replica count is
/// `n_r * n_R` (`blocks_per_restart * restarts`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McmcConfig {
    /// Sweeps discarded before any block, from the original PPD.
    pub burn_in: usize,
    /// Sweeps per block (n_b).
    pub block_sweeps: usize,
    /// Blocks per restart (n_r); each block's final state is one replica.
    pub blocks_per_restart: usize,
    /// Independent restarts from the post-burn-in state (n_R).
    pub restarts: usize,
    pub seed: u64,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_sweeps < 1 || self.blocks_per_restart < 1 || self.restarts < 1 {
            return Err(Error::invalid(
                "mcmc",
                "block_sweeps, blocks_per_restart, and restarts must all be >= 1",
            ));
        }
        Ok(())
    }

    pub fn replica_count(&self) -> usize {
        self.blocks_per_restart * self.restarts
    }
}

/// Running first and second moments of a configuration.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: f64,
    s1: [f64; 2],
    s11: f64,
    s22: f64,
    s12: f64,
}

impl Moments {
    fn from_points(points: &[[f64; 2]]) -> Self {
        let mut m = Moments {
            n: points.len() as f64,
            s1: [0.0, 0.0],
            s11: 0.0,
            s22: 0.0,
            s12: 0.0,
        };
        for p in points {
            m.s1[0] += p[0];
            m.s1[1] += p[1];
            m.s11 += p[0] * p[0];
            m.s22 += p[1] * p[1];
            m.s12 += p[0] * p[1];
        }
        m
    }

    fn replace(&self, old: [f64; 2], new: [f64; 2]) -> Self {
        let mut m = *self;
        m.s1[0] += new[0] - old[0];
        m.s1[1] += new[1] - old[1];
        m.s11 += new[0] * new[0] - old[0] * old[0];
        m.s22 += new[1] * new[1] - old[1] * old[1];
        m.s12 += new[0] * new[1] - old[0] * old[1];
        m
    }

    fn mean(&self) -> [f64; 2] {
        [self.s1[0] / self.n, self.s1[1] / self.n]
    }

    fn cov(&self) -> [[f64; 2]; 2] {
        let m = self.mean();
        let c11 = self.s11 / self.n - m[0] * m[0];
        let c22 = self.s22 / self.n - m[1] * m[1];
        let c12 = self.s12 / self.n - m[0] * m[1];
        [[c11, c12], [c12, c22]]
    }
}

/// Bivariate Gaussian matched to a configuration's empirical moments,
/// restricted to `R x R+`.
#[derive(Debug, Clone)]
pub struct ProposalDistribution {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    log_det: f64,
    /// log P(Y2 > 0), the truncation normalization.
    log_trunc: f64,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl ProposalDistribution {
    /// Empirical mean/covariance of the points (population normalization),
    /// eigenvalues floored at `1e-12 * trace`.
    pub fn from_points(points: &[[f64; 2]]) -> Self {
        Self::from_moments(&Moments::from_points(points))
    }

    fn from_moments(moments: &Moments) -> Self {
        let mean = moments.mean();
        let raw = moments.cov();
        // Symmetric 2x2 eigenvalue floor.
        let trace = raw[0][0] + raw[1][1];
        let floor = 1e-12 * trace;
        let half_diff = 0.5 * (raw[0][0] - raw[1][1]);
        let disc = (half_diff * half_diff + raw[0][1] * raw[0][1]).sqrt();
        let (l1, l2) = (0.5 * trace + disc, 0.5 * trace - disc);
        let cov = if l2 < floor {
            warn!("proposal covariance near-degenerate (eigenvalues {l1}, {l2}); flooring");
            let (c, s) = if raw[0][1].abs() > 0.0 || half_diff.abs() > 0.0 {
                let angle = 0.5 * (2.0 * raw[0][1]).atan2(raw[0][0] - raw[1][1]);
                (angle.cos(), angle.sin())
            } else {
                (1.0, 0.0)
            };
            let (l1, l2) = (l1.max(floor), l2.max(floor));
            [
                [
                    l1 * c * c + l2 * s * s,
                    (l1 - l2) * c * s,
                ],
                [
                    (l1 - l2) * c * s,
                    l1 * s * s + l2 * c * c,
                ],
            ]
        } else {
            raw
        };
        let l11 = cov[0][0].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { cov[0][1] / l11 } else { 0.0 };
        let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[0][1];
        let inv = if det > 0.0 {
            [
                [cov[1][1] / det, -cov[0][1] / det],
                [-cov[0][1] / det, cov[0][0] / det],
            ]
        } else {
            [[f64::NAN; 2]; 2]
        };
        let sigma2 = cov[1][1].max(0.0).sqrt();
        let log_trunc = if sigma2 > 0.0 {
            normal_cdf(mean[1] / sigma2).ln()
        } else {
            0.0
        };
        ProposalDistribution {
            mean,
            cov,
            chol: [[l11, 0.0], [l21, l22]],
            inv,
            log_det: if det > 0.0 { det.ln() } else { f64::NAN },
            log_trunc,
        }
    }

    /// Log density including the truncation constant; `-inf` off-support.
    pub fn log_density(&self, y: [f64; 2]) -> f64 {
        if !(y[1] > 0.0) {
            return f64::NEG_INFINITY;
        }
        let d = [y[0] - self.mean[0], y[1] - self.mean[1]];
        let q = d[0] * (self.inv[0][0] * d[0] + self.inv[0][1] * d[1])
            + d[1] * (self.inv[1][0] * d[0] + self.inv[1][1] * d[1]);
        -(std::f64::consts::TAU).ln() - 0.5 * self.log_det - 0.5 * q - self.log_trunc
    }

    /// Draw by rejection on `x2 > 0`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        for _ in 0..1_000_000u32 {
            let n1: f64 = StandardNormal.sample(rng);
            let n2: f64 = StandardNormal.sample(rng);
            let y = [
                self.mean[0] + self.chol[0][0] * n1,
                self.mean[1] + self.chol[1][0] * n1 + self.chol[1][1] * n2,
            ];
            if y[1] > 0.0 {
                return y;
            }
        }
        panic!("proposal rejection loop failed to find a point with x2 > 0");
    }
}

/// Draw one proposal from the truncated Gaussian matched to `ppd` and return
/// it together with the density evaluator.
pub fn propose(ppd: &Ppd, rng: &mut ChaCha8Rng) -> Result<([f64; 2], ProposalDistribution)> {
    if ppd.len() < 2 {
        return Err(Error::precondition(
            "proposal needs N >= 2 for a defined covariance",
        ));
    }
    let dist = ProposalDistribution::from_points(&ppd.points);
    let point = dist.draw(rng);
    Ok((point, dist))
}

fn clamp_prob_from_logs(log_num: f64, log_den: f64) -> f64 {
    if log_den == f64::NEG_INFINITY || log_den.is_nan() || log_num.is_nan() {
        warn!("acceptance ratio denominator vanished; accepting (log-space guard)");
        return 1.0;
    }
    let log_rho = log_num - log_den;
    if log_rho >= 0.0 {
        1.0
    } else {
        log_rho.exp()
    }
}

/// Acceptance probability for replacing `x` (a point of `ppd_current`) with
/// `x_star`, where `ppd_star` is the configuration after the replacement.
/// The neighborhood of `x` in the current configuration serves both
/// conditionals, so their normalizers cancel.
pub fn acceptance_prob(
    x: [f64; 2],
    x_star: [f64; 2],
    ppd_current: &Ppd,
    ppd_star: &Ppd,
    model: &GibbsModel,
) -> Result<f64> {
    if !(x[1] > 0.0) || !(x_star[1] > 0.0) {
        return Err(Error::invalid("x", "points must lie in R x R+"));
    }
    let idx = ppd_current
        .points
        .iter()
        .position(|p| p[0].to_bits() == x[0].to_bits() && p[1].to_bits() == x[1].to_bits())
        .ok_or_else(|| Error::invalid("x", "must be a point of the current PPD"))?;
    let nbhd = neighborhood(&ppd_current.points, idx, model.interaction_order());
    let q_cur = ProposalDistribution::from_points(&ppd_current.points);
    let q_star = ProposalDistribution::from_points(&ppd_star.points);
    let log_num = -conditional_hamiltonian(x_star, &nbhd, model) + q_star.log_density(x);
    let log_den = -conditional_hamiltonian(x, &nbhd, model) + q_cur.log_density(x_star);
    Ok(clamp_prob_from_logs(log_num, log_den))
}

/// A Metropolis-Hastings chain over one PPD.
pub struct McmcChain<'a> {
    model: &'a GibbsModel,
    points: Vec<[f64; 2]>,
    source_degree: usize,
    moments: Moments,
    rng: ChaCha8Rng,
    frozen: Option<ProposalDistribution>,
    pub proposed: u64,
    pub accepted: u64,
}

// Non-allocating neighbor scan for the hot update loop.
const MAX_ORDER: usize = 8;

fn nearest_into(
    points: &[[f64; 2]],
    exclude: usize,
    k: usize,
    buf: &mut [(f64, usize); MAX_ORDER],
) -> usize {
    if k == 0 {
        return 0;
    }
    let x = points[exclude];
    let mut len = 0usize;
    for (i, p) in points.iter().enumerate() {
        if i == exclude {
            continue;
        }
        let dx = x[0] - p[0];
        let dy = x[1] - p[1];
        let d2 = dx * dx + dy * dy;
        if len == k {
            let worst = buf[k - 1];
            if (d2, i) >= worst {
                continue;
            }
            len -= 1;
        }
        let mut pos = len;
        while pos > 0 && (d2, i) < buf[pos - 1] {
            pos -= 1;
        }
        buf.copy_within(pos..len, pos + 1);
        buf[pos] = (d2, i);
        len += 1;
    }
    len
}

impl<'a> McmcChain<'a> {
    pub fn new(ppd: &Ppd, model: &'a GibbsModel, seed: u64) -> Result<Self> {
        Self::from_points(ppd.points.clone(), ppd.source_degree, model, seed)
    }

    fn from_points(
        points: Vec<[f64; 2]>,
        source_degree: usize,
        model: &'a GibbsModel,
        seed: u64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::precondition("chain needs a non-empty PPD"));
        }
        model.validate()?;
        if model.interaction_order() > MAX_ORDER {
            return Err(Error::invalid("k_max", "at most 8 interaction orders"));
        }
        let moments = Moments::from_points(&points);
        Ok(McmcChain {
            model,
            points,
            source_degree,
            moments,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frozen: None,
            proposed: 0,
            accepted: 0,
        })
    }

    /// Chain with a fixed proposal distribution (non-adaptive mode, used by
    /// the stationarity tests).
    pub fn with_frozen_proposal(
        ppd: &Ppd,
        model: &'a GibbsModel,
        seed: u64,
        proposal: ProposalDistribution,
    ) -> Result<Self> {
        let mut chain = Self::new(ppd, model, seed)?;
        chain.frozen = Some(proposal);
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn ppd(&self) -> Ppd {
        Ppd::new(self.points.clone(), self.source_degree)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn conditional_h(&self, z: [f64; 2], nbrs: &[(f64, usize)]) -> f64 {
        let model = self.model;
        let dx = z[0] - model.xbar1;
        let mut h = model.theta_h * dx * dx + model.theta_v * z[1] * z[1];
        if model.delta > 0.0 {
            let inv_d2 = 1.0 / (model.delta * model.delta);
            for (k, &theta_k) in model.theta.iter().enumerate() {
                let Some(&(_, idx)) = nbrs.get(k) else {
                    break;
                };
                let p = self.points[idx];
                let ddx = z[0] - p[0];
                let ddy = z[1] - p[1];
                let d = (ddx * ddx + ddy * ddy).sqrt();
                if d <= model.delta {
                    h += theta_k * inv_d2 * d;
                }
            }
        }
        h
    }

    /// One Metropolis update of point `k` (Algorithm step: propose, accept
    /// with probability rho, refresh proposal moments on acceptance).
    pub fn update_point(&mut self, k: usize) {
        let x = self.points[k];
        let mut buf = [(0.0f64, 0usize); MAX_ORDER];
        let n_nbrs = nearest_into(
            &self.points,
            k,
            self.model.interaction_order().min(self.points.len() - 1),
            &mut buf,
        );
        let nbrs = &buf[..n_nbrs];

        let q_cur = match &self.frozen {
            Some(p) => p.clone(),
            None => ProposalDistribution::from_moments(&self.moments),
        };
        let x_star = q_cur.draw(&mut self.rng);
        let h_cur = self.conditional_h(x, nbrs);
        let h_star = self.conditional_h(x_star, nbrs);
        let m_star = self.moments.replace(x, x_star);
        let q_star = match &self.frozen {
            Some(p) => p.clone(),
            None => ProposalDistribution::from_moments(&m_star),
        };
        let log_num = -h_star + q_star.log_density(x);
        let log_den = -h_cur + q_cur.log_density(x_star);
        let rho = clamp_prob_from_logs(log_num, log_den);
        self.proposed += 1;
        let u: f64 = self.rng.random();
        if u < rho {
            self.points[k] = x_star;
            self.moments = m_star;
            self.accepted += 1;
        }
    }

    /// One full sweep over the points in index order. Moments are refreshed
    /// from scratch at the start of each sweep to keep the incremental
    /// updates from drifting.
    pub fn sweep(&mut self) {
        self.moments = Moments::from_points(&self.points);
        for k in 0..self.points.len() {
            self.update_point(k);
        }
    }
}

/// One sweep of the algorithm as a pure function on a PPD.
pub fn mcmc_sweep(ppd: &Ppd, model: &GibbsModel, rng: &mut ChaCha8Rng) -> Result<Ppd> {
    let mut chain = McmcChain::from_points(
        ppd.points.clone(),
        ppd.source_degree,
        model,
        0,
    )?;
    chain.rng = rng.clone();
    chain.sweep();
    *rng = chain.rng.clone();
    Ok(chain.ppd())
}

/// A replica with its provenance.
#[derive(Debug, Clone)]
pub struct Replica {
    pub ppd: Ppd,
    pub restart: usize,
    pub block: usize,
    pub seed: u64,
}

fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate `n_r * n_R` replicas with the block scheme. Restarts run
/// concurrently on independent RNG streams; output order is deterministic.
pub fn replicate(ppd: &Ppd, model: &GibbsModel, config: &McmcConfig) -> Result<Vec<Replica>> {
    config.validate()?;
    let mut chain = McmcChain::new(ppd, model, child_seed(config.seed, 0))?;
    for _ in 0..config.burn_in {
        chain.sweep();
    }
    let start = chain.points.clone();
    let degree = ppd.source_degree;

    let per_restart: Vec<Result<Vec<Replica>>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = child_seed(config.seed, 1 + r as u64);
            let mut chain = McmcChain::from_points(start.clone(), degree, model, seed)?;
            let mut out = Vec::with_capacity(config.blocks_per_restart);
            for b in 0..config.blocks_per_restart {
                for _ in 0..config.block_sweeps {
                    chain.sweep();
                }
                out.push(Replica {
                    ppd: chain.ppd(),
                    restart: r,
                    block: b,
                    seed,
                });
            }
            Ok(out)
        })
        .collect();

    let mut replicas = Vec::with_capacity(config.replica_count());
    for r in per_restart {
        replicas.extend(r?);
    }
    Ok(replicas)
}

/// Mean distance-to-original curves over independent chains, used to choose
/// the burn-in period.
#[derive(Debug, Clone)]
pub struct BurnInCurve {
    /// Steps 0..=max_steps; step 0 is the original (distance 0).
    pub steps: Vec<usize>,
    pub mean_bottleneck: Vec<f64>,
    pub mean_wasserstein: Vec<f64>,
    pub wasserstein_p: f64,
    pub knee_bottleneck: usize,
    pub knee_wasserstein: usize,
}

/// Smallest step at which the curve first reaches 95% of its tail plateau
/// (the mean over the last 10% of steps).
fn knee_of(curve: &[f64]) -> usize {
    if curve.len() <= 1 {
        return 0;
    }
    let tail = ((curve.len() - 1) / 10).max(1);
    let plateau: f64 = curve[curve.len() - tail..].iter().sum::<f64>() / tail as f64;
    let threshold = 0.95 * plateau;
    for (step, &v) in curve.iter().enumerate().skip(1) {
        if v >= threshold {
            return step;
        }
    }
    curve.len() - 1
}

/// Run `n_chains` chains from `ppd`, recording after every sweep the
/// bottleneck and Wasserstein-p distances to the original diagram.
pub fn burn_in_curve(
    ppd: &Ppd,
    model: &GibbsModel,
    max_steps: usize,
    n_chains: usize,
    p: f64,
    seed: u64,
) -> Result<BurnInCurve> {
    if max_steps < 1 || n_chains < 1 {
        return Err(Error::invalid(
            "max_steps",
            "need at least one step and one chain",
        ));
    }
    let original = from_ppd(&Ppd::new(ppd.points.clone(), ppd.source_degree));
    let chains: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut chain =
                McmcChain::new(ppd, model, child_seed(seed, 0x1000_0000 + c as u64))?;
            let mut bn = Vec::with_capacity(max_steps);
            let mut ws = Vec::with_capacity(max_steps);
            for _ in 0..max_steps {
                chain.sweep();
                let current = from_ppd(&chain.ppd());
                bn.push(bottleneck(&current, &original)?);
                ws.push(wasserstein(&current, &original, p)?);
            }
            Ok((bn, ws))
        })
        .collect();

    let mut mean_bn = vec![0.0f64; max_steps + 1];
    let mut mean_ws = vec![0.0f64; max_steps + 1];
    let mut done = 0usize;
    for c in chains {
        let (bn, ws) = c?;
        for s in 0..max_steps {
            mean_bn[s + 1] += bn[s];
            mean_ws[s + 1] += ws[s];
        }
        done += 1;
    }
    for v in mean_bn.iter_mut().chain(mean_ws.iter_mut()) {
        *v /= done as f64;
    }
    Ok(BurnInCurve {
        steps: (0..=max_steps).collect(),
        knee_bottleneck: knee_of(&mean_bn),
        knee_wasserstein: knee_of(&mean_ws),
        mean_bottleneck: mean_bn,
        mean_wasserstein: mean_ws,
        wasserstein_p: p,
    })
}

/// Burn-in curve file: `step bottleneck wasserstein` rows with the knee
/// estimates in the header.
pub fn write_burn_in_curve(curve: &BurnInCurve, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# pdrep burn-in curve")?;
        writeln!(w, "# wasserstein_p={}", curve.wasserstein_p)?;
        writeln!(w, "# knee_bottleneck={}", curve.knee_bottleneck)?;
        writeln!(w, "# knee_wasserstein={}", curve.knee_wasserstein)?;
        writeln!(w, "# columns: step bottleneck wasserstein")?;
        for (i, &s) in curve.steps.iter().enumerate() {
            writeln!(
                w,
                "{s} {} {}",
                curve.mean_bottleneck[i], curve.mean_wasserstein[i]
            )?;
        }
        w.flush()
    };
    emit().map_err(io_err)
}

/// Write a replica set as one PPD file per replica plus a manifest carrying
/// the config, seeds, and model hash.
pub fn write_replicas(
    replicas: &[Replica],
    config: &McmcConfig,
    model_hash: &str,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let manifest_path = dir.join("manifest.txt");
    let file = std::fs::File::create(&manifest_path).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "# pdrep replica manifest")?;
        writeln!(w, "burn_in={}", config.burn_in)?;
        writeln!(w, "nb={}", config.block_sweeps)?;
        writeln!(w, "nr={}", config.blocks_per_restart)?;
        writeln!(w, "nR={}", config.restarts)?;
        writeln!(w, "seed={}", config.seed)?;
        writeln!(w, "model_hash={model_hash}")?;
        writeln!(w, "count={}", replicas.len())?;
        for (i, r) in replicas.iter().enumerate() {
            writeln!(
                w,
                "replica={i} restart={} block={} seed={} file=rep_{i:05}.tsv",
                r.restart, r.block, r.seed
            )?;
        }
        w.flush()
    };
    emit().map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    for (i, r) in replicas.iter().enumerate() {
        let provenance = format!("replica {i} restart={} block={}", r.restart, r.block);
        crate::diagram::write_ppd(&r.ppd, &provenance, &dir.join(format!("rep_{i:05}.tsv")))?;
    }
    Ok(())
}

/// Read back the PPDs of a replica directory in manifest order.
pub fn read_replicas(dir: &Path) -> Result<Vec<Ppd>> {
    let manifest_path = dir.join("manifest.txt");
    let file = std::fs::File::open(&manifest_path).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut files = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| Error::Io {
            path: manifest_path.clone(),
            source,
        })?;
        for field in line.split_whitespace() {
            if let Some(name) = field.strip_prefix("file=") {
                files.push(name.to_string());
            }
        }
    }
    files
        .iter()
        .map(|name| crate::diagram::read_ppd(&dir.join(name)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_model(xbar1: f64) -> GibbsModel {
        GibbsModel {
            theta_h: 40.0,
            theta_v: 25.0,
            theta: vec![],
            k_max: 3,
            delta: 0.01,
            delta_star: 0.1,
            xbar1,
            underlying_dim: 2,
        }
    }

    fn test_ppd(n: usize, seed: u64) -> Ppd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                let x1 = 0.3 + 0.1 * (rng.random::<f64>() - 0.5);
                let x2 = 0.02 + 0.15 * rng.random::<f64>();
                [x1, x2]
            })
            .collect();
        Ppd::new(points, 0)
    }

    #[test]
    fn proposal_mean_matches_symmetric_configuration() {
        let ppd = Ppd::new(vec![[-0.4, 0.1], [0.4, 0.1], [-0.2, 0.3], [0.2, 0.3]], 0);
        let q = ProposalDistribution::from_points(&ppd.points);
        assert_eq!(q.mean[0], 0.0);
        assert_eq!(q.mean[1], 0.2);
    }

    #[test]
    fn draws_respect_support_and_truncated_moments() {
        let ppd = test_ppd(40, 3);
        let q = ProposalDistribution::from_points(&ppd.points);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000usize;
        let draws: Vec<[f64; 2]> = (0..n).map(|_| q.draw(&mut rng)).collect();
        assert!(draws.iter().all(|d| d[1] > 0.0));

        // Analytic moments of the x2-truncated bivariate Gaussian.
        let (mu1, mu2) = (q.mean[0], q.mean[1]);
        let s22 = q.cov[1][1].sqrt();
        let alpha = -mu2 / s22;
        let phi = (-0.5 * alpha * alpha).exp() / (std::f64::consts::TAU).sqrt();
        let lambda = phi / (1.0 - normal_cdf(alpha));
        let e2 = mu2 + s22 * lambda;
        let v2 = q.cov[1][1] * (1.0 + alpha * lambda - lambda * lambda);
        let slope = q.cov[0][1] / q.cov[1][1];
        let e1 = mu1 + slope * (e2 - mu2);

        let mean1: f64 = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let mean2: f64 = draws.iter().map(|d| d[1]).sum::<f64>() / n as f64;
        let var2: f64 =
            draws.iter().map(|d| (d[1] - mean2) * (d[1] - mean2)).sum::<f64>() / (n - 1) as f64;
        let sd = |v: f64| (v / n as f64).sqrt();
        let var1: f64 =
            draws.iter().map(|d| (d[0] - mean1) * (d[0] - mean1)).sum::<f64>() / (n - 1) as f64;
        assert!((mean1 - e1).abs() < 4.0 * sd(var1), "{mean1} vs {e1}");
        assert!((mean2 - e2).abs() < 4.0 * sd(var2), "{mean2} vs {e2}");
        // Fourth-moment-based standard error for the variance estimate.
        let m4: f64 = draws
            .iter()
            .map(|d| (d[1] - mean2).powi(4))
            .sum::<f64>()
            / n as f64;
        let var_se = ((m4 - var2 * var2) / n as f64).sqrt();
        assert!((var2 - v2).abs() < 4.0 * var_se, "{var2} vs {v2}");
    }

    #[test]
    fn acceptance_is_one_for_identical_state() {
        let ppd = test_ppd(10, 5);
        let model = free_model(0.3);
        let x = ppd.points[4];
        let rho = acceptance_prob(x, x, &ppd, &ppd, &model).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn acceptance_matches_closed_form_ratio_without_interactions() {
        let ppd = test_ppd(12, 7);
        let model = free_model(0.3);
        let x = ppd.points[2];
        let x_star = [0.35, 0.08];
        let mut star = ppd.clone();
        star.points[2] = x_star;

        let rho = acceptance_prob(x, x_star, &ppd, &star, &model).unwrap();

        let h = |z: [f64; 2]| {
            model.theta_h * (z[0] - model.xbar1).powi(2) + model.theta_v * z[1] * z[1]
        };
        let q_cur = ProposalDistribution::from_points(&ppd.points);
        let q_star = ProposalDistribution::from_points(&star.points);
        let log_rho = (-h(x_star) + q_star.log_density(x)) - (-h(x) + q_cur.log_density(x_star));
        let want = log_rho.min(0.0).exp();
        assert!((rho - want).abs() < 1e-10, "{rho} vs {want}");
    }

    #[test]
    fn acceptance_log_ratio_is_antisymmetric_without_interactions() {
        let ppd = test_ppd(9, 11);
        let model = free_model(0.3);
        let x = ppd.points[0];
        let x_star = [0.27, 0.11];
        let mut star = ppd.clone();
        star.points[0] = x_star;
        let fwd = acceptance_prob(x, x_star, &ppd, &star, &model).unwrap();
        let bwd = acceptance_prob(x_star, x, &star, &ppd, &model).unwrap();
        // The log ratios are exact negatives, so min(1,r) * min(1,1/r)
        // collapses to whichever side is below one.
        assert!(
            !(fwd < 1.0 && bwd < 1.0),
            "antisymmetry forbids both directions clamping"
        );
        let product = fwd * bwd;
        let expected = if fwd < 1.0 { fwd } else { bwd };
        assert!((product - expected).abs() < 1e-12, "{fwd} * {bwd}");
    }

    #[test]
    fn sweep_preserves_cardinality_and_support() {
        let ppd = test_ppd(25, 13);
        let model = free_model(0.3);
        let mut chain = McmcChain::new(&ppd, &model, 1).unwrap();
        for _ in 0..20 {
            chain.sweep();
        }
        assert_eq!(chain.len(), 25);
        assert!(chain.points().iter().all(|p| p[1] > 0.0));
        assert!(chain.acceptance_rate() > 0.0);
    }

    #[test]
    fn strong_vertical_weight_pulls_points_down() {
        let ppd = test_ppd(30, 19);
        let mut model = free_model(0.3);
        model.theta_v = 4000.0;
        let initial: f64 =
            ppd.points.iter().map(|p| p[1]).sum::<f64>() / ppd.len() as f64;
        let mut chain = McmcChain::new(&ppd, &model, 2).unwrap();
        for _ in 0..100 {
            chain.sweep();
        }
        let after: f64 =
            chain.points().iter().map(|p| p[1]).sum::<f64>() / chain.len() as f64;
        assert!(
            after < initial,
            "mean lifetime should shrink: {initial} -> {after}"
        );
    }

    #[test]
    fn minimal_config_yields_one_replica() {
        let ppd = test_ppd(8, 23);
        let model = free_model(0.3);
        let config = McmcConfig {
            burn_in: 1,
            block_sweeps: 1,
            blocks_per_restart: 1,
            restarts: 1,
            seed: 5,
        };
        let reps = replicate(&ppd, &model, &config).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].ppd.len(), 8);
    }

    #[test]
    fn replica_count_is_blocks_times_restarts() {
        let ppd = test_ppd(10, 29);
        let model = free_model(0.3);
        let config = McmcConfig {
            burn_in: 2,
            block_sweeps: 3,
            blocks_per_restart: 4,
            restarts: 5,
            seed: 7,
        };
        let reps = replicate(&ppd, &model, &config).unwrap();
        assert_eq!(reps.len(), 20);
        assert_eq!(reps.last().unwrap().restart, 4);
        assert_eq!(reps.last().unwrap().block, 3);
    }

    #[test]
    fn replication_is_deterministic() {
        let ppd = test_ppd(12, 31);
        let model = free_model(0.3);
        let config = McmcConfig {
            burn_in: 2,
            block_sweeps: 2,
            blocks_per_restart: 3,
            restarts: 4,
            seed: 11,
        };
        let a = replicate(&ppd, &model, &config).unwrap();
        let b = replicate(&ppd, &model, &config).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ppd.points, y.ppd.points);
        }
        let mut other = config.clone();
        other.seed = 12;
        let c = replicate(&ppd, &model, &other).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.ppd.points != y.ppd.points));
    }

    #[test]
    fn acceptance_rate_is_reproducible() {
        let ppd = test_ppd(20, 37);
        let mut model = free_model(0.3);
        model.theta_h = 1e-3;
        model.theta_v = 1e-3;
        let run = |seed: u64| {
            let mut chain = McmcChain::new(&ppd, &model, seed).unwrap();
            for _ in 0..50 {
                chain.sweep();
            }
            chain.acceptance_rate()
        };
        let r1 = run(3);
        let r2 = run(3);
        assert_eq!(r1, r2);
        assert!(r1 > 0.5, "near-flat target should accept often: {r1}");
    }

    #[test]
    fn burn_in_curve_starts_at_zero_and_trends_up() {
        let ppd = test_ppd(15, 41);
        let model = free_model(0.3);
        let curve = burn_in_curve(&ppd, &model, 30, 4, 2.0, 9).unwrap();
        assert_eq!(curve.steps.len(), 31);
        assert_eq!(curve.mean_bottleneck[0], 0.0);
        assert_eq!(curve.mean_wasserstein[0], 0.0);
        assert!(curve.mean_bottleneck[1] > 0.0);
        // Smoothed (window 5) curve is nondecreasing in trend up to the
        // plateau: compare first and second halves.
        let half = 15;
        let first: f64 = curve.mean_wasserstein[1..=half].iter().sum::<f64>() / half as f64;
        let second: f64 =
            curve.mean_wasserstein[half + 1..].iter().sum::<f64>() / half as f64;
        assert!(second >= first);
        assert!(curve.knee_bottleneck >= 1);
        assert!(curve.knee_wasserstein <= 30);
    }

    #[test]
    fn replica_files_round_trip() {
        let ppd = test_ppd(6, 43);
        let model = free_model(0.3);
        let config = McmcConfig {
            burn_in: 1,
            block_sweeps: 1,
            blocks_per_restart: 2,
            restarts: 2,
            seed: 3,
        };
        let reps = replicate(&ppd, &model, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_replicas(&reps, &config, "deadbeef", dir.path()).unwrap();
        let back = read_replicas(dir.path()).unwrap();
        assert_eq!(back.len(), reps.len());
        for (r, b) in reps.iter().zip(&back) {
            assert_eq!(r.ppd.points, b.points);
        }
    }
}
