//! `pdrep`: persistence-diagram replication toolkit.
//!
//! Each pipeline stage is a subcommand over serialized artifacts; `run`
//! drives a whole experiment from a flat key=value config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use pdrep::cloud::{read_cloud, resample_data, sample, write_cloud, SamplerSpec, Shape};
use pdrep::cubical::grid_persistence;
use pdrep::diagram::{
    from_ppd, read_diagrams, read_ppd, to_ppd, write_diagrams, write_ppd, PersistenceDiagram, Ppd,
};
use pdrep::distance::{bottleneck, wasserstein};
use pdrep::error::Error;
use pdrep::gibbs::{fit, read_model, write_model};
use pdrep::grid::{default_resolution, kde_evaluate_opts, read_grid, write_grid};
use pdrep::infer::{count_significant, write_report};
use pdrep::mcmc::{
    burn_in_curve, read_replicas, replicate, write_burn_in_curve, write_replicas, McmcConfig,
};
use pdrep::pipeline::{parse_circles_list, parse_config, run_pipeline};

#[derive(Parser)]
#[command(name = "pdrep", version, about = "Model, replicate, and test persistence diagrams")]
struct Cli {
    /// Cap the rayon worker count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point cloud from a synthetic manifold, or bootstrap one.
    Sample(SampleArgs),
    /// Evaluate the Gaussian KDE of a cloud on a regular grid.
    Kde(KdeArgs),
    /// Superlevel-set cubical persistence of a grid.
    Persist(PersistArgs),
    /// Fit the Gibbs model to one degree's projected diagram.
    Fit(FitArgs),
    /// Generate MCMC replicas of a projected diagram under a fitted model.
    Replicate(ReplicateArgs),
    /// Distance-to-original curves for choosing the burn-in period.
    Burnin(BurninArgs),
    /// Bottleneck / Wasserstein distance between two diagram files.
    Dist(DistArgs),
    /// Significance tests of lifetime order statistics against replicas.
    Infer(InferArgs),
    /// Run a whole experiment from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// sphere | torus | circles (ignored with --resample-from).
    #[arg(long, default_value = "sphere")]
    shape: String,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.8)]
    tube_radius: f64,
    #[arg(long, default_value_t = 2.0)]
    center_distance: f64,
    /// Concentric circles as radius:count items, e.g. 3:600,2:400,0.5:200.
    #[arg(long)]
    circles: Option<String>,
    #[arg(short = 'n', long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap an existing cloud file instead of sampling a shape.
    #[arg(long)]
    resample_from: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct KdeArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    eta: f64,
    /// Nodes per axis, comma separated; defaults to 128^2 (2D) or 64^3 (3D).
    #[arg(long)]
    resolution: Option<String>,
    /// Box padding per side; defaults to 3 * eta.
    #[arg(long)]
    padding: Option<f64>,
    /// Optional kernel cutoff radius.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct PersistArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Diagram file; use with --degree. Alternatively pass --ppd.
    #[arg(long)]
    diagram: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    /// Pre-projected PPD file.
    #[arg(long)]
    ppd: Option<PathBuf>,
    /// Maximal cluster order.
    #[arg(long = "K", default_value_t = 3)]
    k_max: usize,
    /// Dimension of the underlying data.
    #[arg(long)]
    d: usize,
    /// Explicit delta* values; defaults to N^-1/2 plus a log grid.
    #[arg(long)]
    delta_star: Option<String>,
    /// Also write the projected PPD that was fitted (input for `replicate`).
    #[arg(long)]
    save_ppd: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long)]
    ppd: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    burn_in: usize,
    #[arg(long = "nb", default_value_t = 500)]
    n_b: usize,
    #[arg(long = "nr", default_value_t = 20)]
    n_r: usize,
    #[arg(long = "nR", default_value_t = 50)]
    n_big_r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct BurninArgs {
    #[arg(long)]
    ppd: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Wasserstein exponent for the second curve.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistArgs {
    a: PathBuf,
    b: PathBuf,
    /// Wasserstein exponent.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Report the bottleneck distance instead of Wasserstein.
    #[arg(long)]
    bottleneck: bool,
    /// Restrict to one homology degree (default: every degree both files share).
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    diagram: PathBuf,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    /// Replica directory written by `replicate`.
    #[arg(long)]
    replicas: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 8)]
    j_max: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the sampler seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "K")]
    k_max: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Override the block scheme (all three of --nb --nr --nR).
    #[arg(long = "nb")]
    n_b: Option<usize>,
    #[arg(long = "nr")]
    n_r: Option<usize>,
    #[arg(long = "nR")]
    n_big_r: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_resolution(text: &Option<String>) -> Result<Option<Vec<usize>>, Error> {
    match text {
        None => Ok(None),
        Some(t) => t
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::invalid("resolution", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
    }
}

fn load_ppd_or_diagram(path: &PathBuf) -> Result<Ppd, Error> {
    read_ppd(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sample(args) => {
            let cloud = if let Some(from) = &args.resample_from {
                resample_data(&read_cloud(from)?, args.seed)?
            } else {
                let shape = match args.shape.as_str() {
                    "sphere" => Shape::Sphere {
                        radius: args.radius,
                    },
                    "torus" => Shape::Torus {
                        tube_radius: args.tube_radius,
                        center_distance: args.center_distance,
                    },
                    "circles" => Shape::Circles {
                        rings: parse_circles_list(
                            args.circles
                                .as_deref()
                                .ok_or_else(|| Error::invalid("circles", "required"))?,
                        )?,
                    },
                    other => {
                        return Err(Error::invalid("shape", format!("unknown shape `{other}`")))
                    }
                };
                sample(&SamplerSpec {
                    shape,
                    n: args.n,
                    seed: args.seed,
                })?
            };
            write_cloud(&cloud, &args.out)?;
            println!(
                "wrote {} points (dim {}) to {}",
                cloud.len(),
                cloud.ambient_dim(),
                args.out.display()
            );
        }
        Command::Kde(args) => {
            let cloud = read_cloud(&args.cloud)?;
            let resolution = parse_resolution(&args.resolution)?
                .unwrap_or_else(|| default_resolution(cloud.ambient_dim()));
            let grid = kde_evaluate_opts(
                &cloud,
                args.eta,
                &resolution,
                args.padding,
                args.cutoff,
            )?;
            write_grid(&grid, &args.out)?;
            println!(
                "wrote {} grid values ({:?}) to {}",
                grid.values().len(),
                grid.resolution(),
                args.out.display()
            );
        }
        Command::Persist(args) => {
            let grid = read_grid(&args.grid)?;
            let diagrams = grid_persistence(&grid);
            write_diagrams(
                &diagrams,
                &format!("grid={}", args.grid.display()),
                &args.out,
            )?;
            for d in &diagrams {
                println!("H{}: {} points", d.degree, d.len());
            }
        }
        Command::Fit(args) => {
            let ppd = if let Some(ppd_path) = &args.ppd {
                load_ppd_or_diagram(ppd_path)?
            } else {
                let diagram_path = args
                    .diagram
                    .as_ref()
                    .ok_or_else(|| Error::invalid("diagram", "pass --diagram or --ppd"))?;
                let diagrams = read_diagrams(diagram_path)?;
                let d = diagrams
                    .iter()
                    .find(|d| d.degree == args.degree)
                    .ok_or_else(|| {
                        Error::invalid("degree", format!("no degree {} in file", args.degree))
                    })?;
                to_ppd(d, true)
            };
            let grid_values = match &args.delta_star {
                None => None,
                Some(t) => Some(
                    t.split(',')
                        .map(|s| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::invalid("delta_star", e.to_string()))
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
            };
            let report = fit(&ppd, args.k_max, args.d, grid_values.as_deref())?;
            if let Some(ppd_out) = &args.save_ppd {
                write_ppd(&ppd, "fit input", ppd_out)?;
            }
            write_model(&report, &args.out)?;
            let m = &report.model;
            println!(
                "delta*={} delta={} theta_h={} theta_v={} theta={:?} logPL={} converged={}",
                m.delta_star,
                m.delta,
                m.theta_h,
                m.theta_v,
                m.theta,
                report.log_pseudolikelihood,
                report.converged
            );
        }
        Command::Replicate(args) => {
            let ppd = read_ppd(&args.ppd)?;
            let report = read_model(&args.model)?;
            let config = McmcConfig {
                burn_in: args.burn_in,
                block_sweeps: args.n_b,
                blocks_per_restart: args.n_r,
                restarts: args.n_big_r,
                seed: args.seed,
            };
            let replicas = replicate(&ppd, &report.model, &config)?;
            let model_hash = {
                use sha2::{Digest, Sha256};
                let bytes = std::fs::read(&args.model).map_err(|source| Error::Io {
                    path: args.model.clone(),
                    source,
                })?;
                let digest = Sha256::digest(&bytes);
                digest.iter().map(|b| format!("{b:02x}")).collect::<String>()[..16].to_string()
            };
            write_replicas(&replicas, &config, &model_hash, &args.out)?;
            println!(
                "wrote {} replicas to {}",
                replicas.len(),
                args.out.display()
            );
        }
        Command::Burnin(args) => {
            let ppd = read_ppd(&args.ppd)?;
            let report = read_model(&args.model)?;
            let curve = burn_in_curve(
                &ppd,
                &report.model,
                args.max_steps,
                args.chains,
                args.p,
                args.seed,
            )?;
            write_burn_in_curve(&curve, &args.out)?;
            println!(
                "knee: bottleneck {} sweeps, wasserstein {} sweeps",
                curve.knee_bottleneck, curve.knee_wasserstein
            );
        }
        Command::Dist(args) => {
            let da = read_diagrams(&args.a)?;
            let db = read_diagrams(&args.b)?;
            let degrees: Vec<usize> = match args.degree {
                Some(k) => vec![k],
                None => da
                    .iter()
                    .map(|d| d.degree)
                    .filter(|k| db.iter().any(|d| d.degree == *k))
                    .collect(),
            };
            let empty = |k: usize| PersistenceDiagram::new(k, Vec::new());
            for k in degrees {
                let a = da.iter().find(|d| d.degree == k).cloned().unwrap_or(empty(k));
                let b = db.iter().find(|d| d.degree == k).cloned().unwrap_or(empty(k));
                let value = if args.bottleneck {
                    bottleneck(&a, &b)?
                } else {
                    wasserstein(&a, &b, args.p)?
                };
                println!("H{k}: {value}");
            }
        }
        Command::Infer(args) => {
            let diagrams = read_diagrams(&args.diagram)?;
            let real = diagrams
                .iter()
                .find(|d| d.degree == args.degree)
                .ok_or_else(|| {
                    Error::invalid("degree", format!("no degree {} in file", args.degree))
                })?;
            let replicas = read_replicas(&args.replicas)?;
            let replica_diagrams: Vec<PersistenceDiagram> =
                replicas.iter().map(from_ppd).collect();
            let summary = count_significant(real, &replica_diagrams, args.alpha, args.j_max)?;
            for r in &summary.reports {
                println!(
                    "T{}: real={} ci=[0, {}] p={} {}",
                    r.statistic_index,
                    r.t_hat,
                    r.ci_upper,
                    r.p_value,
                    if r.significant { "significant" } else { "not significant" }
                );
            }
            println!(
                "significant: {} (+essential = {})",
                summary.significant_count, summary.total_with_essential
            );
            if let Some(out) = &args.out {
                write_report(&summary, "(replica dir)", args.alpha, out)?;
            }
        }
        Command::Run(args) => {
            let mut config = parse_config(&args.config)?;
            if let Some(seed) = args.seed {
                config.sampler.seed = seed;
            }
            if let Some(alpha) = args.alpha {
                config.alpha = alpha;
            }
            if let Some(eta) = args.eta {
                config.eta = eta;
            }
            if let Some(k) = args.k_max {
                config.k_max = k;
            }
            if let Some(b) = args.burn_in {
                config.burn_in = b;
            }
            if args.n_b.is_some() || args.n_r.is_some() || args.n_big_r.is_some() {
                let (b, r, big_r) = config.mcmc_variants.first().copied().unwrap_or((500, 20, 50));
                config.mcmc_variants = vec![(
                    args.n_b.unwrap_or(b),
                    args.n_r.unwrap_or(r),
                    args.n_big_r.unwrap_or(big_r),
                )];
            }
            if let Some(out) = args.out {
                config.out_dir = out;
            }
            let outputs = run_pipeline(&config)?;
            println!("experiment written to {}", outputs.dir.display());
            for (degree, fit) in &outputs.fits {
                let m = &fit.model;
                println!(
                    "H{degree}: delta={} theta_h={} theta_v={} theta={:?}",
                    m.delta, m.theta_h, m.theta_v, m.theta
                );
            }
            for o in &outputs.outcomes {
                println!(
                    "H{} {:?}: {} significant (+essential = {})",
                    o.degree, o.scheme, o.summary.significant_count,
                    o.summary.total_with_essential
                );
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: stage=init {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
