//! Experiment runner: a flat key=value config describing one end-to-end run
//! (sample -> kde -> persistence -> fit -> replicate -> infer), with every
//! stage's artifact serialized so stages can be re-run individually.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cloud::{resample_data, sample, PointCloud, SamplerSpec, Shape};
use crate::cubical::grid_persistence;
use crate::diagram::{
    from_ppd, resample_diagram, to_ppd, write_diagrams, write_ppd, PersistenceDiagram,
};
use crate::error::{Error, Result};
use crate::gibbs::{fit, write_model, FitReport};
use crate::grid::{default_resolution, kde_evaluate, write_grid};
use crate::infer::{count_significant, write_report, SignificanceSummary};
use crate::mcmc::{burn_in_curve, replicate, write_burn_in_curve, write_replicas, McmcConfig};

/// How replication datasets are derived from the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleSetting {
    /// Use the original sample as-is.
    None,
    /// Bootstrap the point cloud before the KDE (Setting II).
    Data,
    /// Bootstrap the projected diagram before fitting (Setting I).
    Diagram,
}

impl std::fmt::Display for ResampleSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResampleSetting::None => "none",
            ResampleSetting::Data => "data",
            ResampleSetting::Diagram => "diagram",
        })
    }
}

/// Everything one experiment needs; see the `run` subcommand for the file
/// format.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sampler: SamplerSpec,
    pub eta: f64,
    pub resolution: Option<Vec<usize>>,
    pub padding: Option<f64>,
    pub degrees: Vec<usize>,
    pub k_max: usize,
    /// Dimension of the underlying data; defaults to the ambient dimension.
    pub underlying_dim: Option<usize>,
    pub delta_star_grid: Option<Vec<f64>>,
    pub alpha: f64,
    pub burn_in: usize,
    /// Block schemes (n_b, n_r, n_R) to replicate and test under.
    pub mcmc_variants: Vec<(usize, usize, usize)>,
    pub mcmc_seed: u64,
    /// Sweeps for the diagnostic distance curve; 0 skips it.
    pub burnin_curve_steps: usize,
    pub burnin_curve_chains: usize,
    pub wasserstein_p: f64,
    pub j_max: usize,
    pub resample: ResampleSetting,
    pub resample_seed: u64,
    /// Refit count for the parameter-stability series; 0 skips it.
    pub stability_reps: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Canonical key=value form; this text is what the config hash covers.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# pdrep experiment config");
        match &self.sampler.shape {
            Shape::Sphere { radius } => {
                let _ = writeln!(s, "shape=sphere");
                let _ = writeln!(s, "radius={radius}");
            }
            Shape::Torus {
                tube_radius,
                center_distance,
            } => {
                let _ = writeln!(s, "shape=torus");
                let _ = writeln!(s, "tube_radius={tube_radius}");
                let _ = writeln!(s, "center_distance={center_distance}");
            }
            Shape::Circles { rings } => {
                let _ = writeln!(s, "shape=circles");
                let rings: Vec<String> =
                    rings.iter().map(|(r, c)| format!("{r}:{c}")).collect();
                let _ = writeln!(s, "circles={}", rings.join(","));
            }
        }
        let _ = writeln!(s, "n={}", self.sampler.n);
        let _ = writeln!(s, "sample_seed={}", self.sampler.seed);
        let _ = writeln!(s, "eta={}", self.eta);
        if let Some(res) = &self.resolution {
            let res: Vec<String> = res.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(s, "resolution={}", res.join(","));
        }
        if let Some(p) = self.padding {
            let _ = writeln!(s, "padding={p}");
        }
        let degrees: Vec<String> = self.degrees.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "degrees={}", degrees.join(","));
        let _ = writeln!(s, "K={}", self.k_max);
        if let Some(d) = self.underlying_dim {
            let _ = writeln!(s, "d={d}");
        }
        if let Some(grid) = &self.delta_star_grid {
            let grid: Vec<String> = grid.iter().map(|g| g.to_string()).collect();
            let _ = writeln!(s, "delta_star_grid={}", grid.join(","));
        }
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "burn_in={}", self.burn_in);
        let variants: Vec<String> = self
            .mcmc_variants
            .iter()
            .map(|(b, r, big_r)| format!("{b},{r},{big_r}"))
            .collect();
        let _ = writeln!(s, "mcmc={}", variants.join(";"));
        let _ = writeln!(s, "mcmc_seed={}", self.mcmc_seed);
        let _ = writeln!(s, "burnin_curve_steps={}", self.burnin_curve_steps);
        let _ = writeln!(s, "burnin_curve_chains={}", self.burnin_curve_chains);
        let _ = writeln!(s, "wasserstein_p={}", self.wasserstein_p);
        let _ = writeln!(s, "j_max={}", self.j_max);
        let _ = writeln!(s, "resample={}", self.resample);
        let _ = writeln!(s, "resample_seed={}", self.resample_seed);
        let _ = writeln!(s, "stability_reps={}", self.stability_reps);
        s
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Parse the flat key=value config format.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut fields: std::collections::BTreeMap<String, String> = Default::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: "expected key=value".into(),
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    config_from_fields(&fields, path)
}

pub fn parse_circles_list(text: &str) -> Result<Vec<(f64, usize)>> {
    text.split(',')
        .map(|item| {
            let (r, c) = item
                .split_once(':')
                .ok_or_else(|| Error::invalid("circles", "expected radius:count items"))?;
            let radius: f64 = r
                .trim()
                .parse()
                .map_err(|e| Error::invalid("circles", format!("bad radius: {e}")))?;
            let count: usize = c
                .trim()
                .parse()
                .map_err(|e| Error::invalid("circles", format!("bad count: {e}")))?;
            Ok((radius, count))
        })
        .collect()
}

fn config_from_fields(
    fields: &std::collections::BTreeMap<String, String>,
    path: &Path,
) -> Result<ExperimentConfig> {
    let get = |key: &str| fields.get(key).map(|s| s.as_str());
    let missing = |key: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("missing field `{key}`"),
    };
    let bad = |key: &str, e: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("bad `{key}`: {e}"),
    };
    let parse_f64 = |key: &str| -> Result<Option<f64>> {
        get(key)
            .map(|v| v.parse::<f64>().map_err(|e| bad(key, e.to_string())))
            .transpose()
    };
    let parse_usize = |key: &str| -> Result<Option<usize>> {
        get(key)
            .map(|v| v.parse::<usize>().map_err(|e| bad(key, e.to_string())))
            .transpose()
    };
    let parse_u64 = |key: &str| -> Result<Option<u64>> {
        get(key)
            .map(|v| v.parse::<u64>().map_err(|e| bad(key, e.to_string())))
            .transpose()
    };

    let n = parse_usize("n")?.ok_or_else(|| missing("n"))?;
    let shape = match get("shape").ok_or_else(|| missing("shape"))? {
        "sphere" => Shape::Sphere {
            radius: parse_f64("radius")?.unwrap_or(1.0),
        },
        "torus" => Shape::Torus {
            tube_radius: parse_f64("tube_radius")?.ok_or_else(|| missing("tube_radius"))?,
            center_distance: parse_f64("center_distance")?
                .ok_or_else(|| missing("center_distance"))?,
        },
        "circles" => Shape::Circles {
            rings: parse_circles_list(get("circles").ok_or_else(|| missing("circles"))?)?,
        },
        other => return Err(bad("shape", format!("unknown shape `{other}`"))),
    };
    let sampler = SamplerSpec {
        shape,
        n,
        seed: parse_u64("sample_seed")?.unwrap_or(0),
    };

    let resolution = get("resolution")
        .map(|v| {
            v.split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad("resolution", e.to_string()))
        })
        .transpose()?;
    let degrees = match get("degrees") {
        Some(v) => v
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad("degrees", e.to_string()))?,
        None => vec![0],
    };
    let delta_star_grid = match get("delta_star_grid") {
        None => None,
        Some("auto") | Some("") => None,
        Some(v) => Some(
            v.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad("delta_star_grid", e.to_string()))?,
        ),
    };
    let mcmc_variants = match get("mcmc") {
        None => vec![(500, 20, 50)],
        Some(v) => v
            .split(';')
            .map(|triple| {
                let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(bad("mcmc", "expected n_b,n_r,n_R triples".into()));
                }
                let nums: std::result::Result<Vec<usize>, _> =
                    parts.iter().map(|p| p.parse::<usize>()).collect();
                let nums = nums.map_err(|e| bad("mcmc", e.to_string()))?;
                Ok((nums[0], nums[1], nums[2]))
            })
            .collect::<Result<_>>()?,
    };
    let resample = match get("resample").unwrap_or("none") {
        "none" => ResampleSetting::None,
        "data" => ResampleSetting::Data,
        "diagram" => ResampleSetting::Diagram,
        other => return Err(bad("resample", format!("unknown setting `{other}`"))),
    };

    Ok(ExperimentConfig {
        sampler,
        eta: parse_f64("eta")?.ok_or_else(|| missing("eta"))?,
        resolution,
        padding: parse_f64("padding")?,
        degrees,
        k_max: parse_usize("K")?.unwrap_or(3),
        underlying_dim: parse_usize("d")?,
        delta_star_grid,
        alpha: parse_f64("alpha")?.unwrap_or(0.05),
        burn_in: parse_usize("burn_in")?.unwrap_or(10),
        mcmc_variants,
        mcmc_seed: parse_u64("mcmc_seed")?.unwrap_or(1),
        burnin_curve_steps: parse_usize("burnin_curve_steps")?.unwrap_or(0),
        burnin_curve_chains: parse_usize("burnin_curve_chains")?.unwrap_or(4),
        wasserstein_p: parse_f64("wasserstein_p")?.unwrap_or(2.0),
        j_max: parse_usize("j_max")?.unwrap_or(8),
        resample,
        resample_seed: parse_u64("resample_seed")?.unwrap_or(0),
        stability_reps: parse_usize("stability_reps")?.unwrap_or(0),
        out_dir: PathBuf::from(get("out").unwrap_or("pdrep_run")),
    })
}

/// One degree's outcome under one block scheme.
#[derive(Debug, Clone)]
pub struct DegreeOutcome {
    pub degree: usize,
    pub scheme: (usize, usize, usize),
    pub summary: SignificanceSummary,
}

/// Everything `run_pipeline` produced.
#[derive(Debug)]
pub struct PipelineOutputs {
    pub dir: PathBuf,
    pub config_hash: String,
    pub fits: Vec<(usize, FitReport)>,
    pub outcomes: Vec<DegreeOutcome>,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run the full experiment, writing every stage artifact under the output
/// directory. Stage failures abort with the stage name; artifacts already
/// written stay on disk.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutputs> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    // The hash covers the experiment parameters, not the output location.
    let canonical = config.canonical_text();
    let config_hash = hex(&Sha256::digest(canonical.as_bytes()))[..16].to_string();
    let config_text = format!("{canonical}out={}\n", dir.display());
    std::fs::write(dir.join("config.txt"), &config_text).map_err(|source| Error::Io {
        path: dir.join("config.txt"),
        source,
    })?;
    let provenance = |extra: &str| format!("config_hash={config_hash} {extra}");

    // Sample (Setting II bootstraps the cloud first).
    let mut cloud = sample(&config.sampler).map_err(|e| e.in_stage("sample"))?;
    if config.resample == ResampleSetting::Data {
        cloud = resample_data(&cloud, config.resample_seed).map_err(|e| e.in_stage("sample"))?;
    }
    crate::cloud::write_cloud(&cloud, &dir.join("cloud.tsv")).map_err(|e| e.in_stage("sample"))?;

    // KDE grid.
    let resolution = config
        .resolution
        .clone()
        .unwrap_or_else(|| default_resolution(cloud.ambient_dim()));
    let grid = kde_evaluate(&cloud, config.eta, &resolution, config.padding)
        .map_err(|e| e.in_stage("kde"))?;
    write_grid(&grid, &dir.join("grid.tsv")).map_err(|e| e.in_stage("kde"))?;

    // Superlevel persistence.
    let diagrams = grid_persistence(&grid);
    write_diagrams(&diagrams, &provenance("stage=persist"), &dir.join("diagram.tsv"))
        .map_err(|e| e.in_stage("persist"))?;

    let underlying_dim = config.underlying_dim.unwrap_or(cloud.ambient_dim());
    let mut fits = Vec::new();
    let mut outcomes = Vec::new();

    for &degree in &config.degrees {
        let Some(real) = diagrams.iter().find(|d| d.degree == degree) else {
            return Err(Error::invalid(
                "degrees",
                format!("degree {degree} exceeds the grid dimension"),
            )
            .in_stage("fit"));
        };
        let hdir = dir.join(format!("h{degree}"));
        std::fs::create_dir_all(&hdir).map_err(|source| Error::Io {
            path: hdir.clone(),
            source,
        })?;

        // Project; Setting I bootstraps the PPD.
        let mut ppd = to_ppd(real, true);
        if config.resample == ResampleSetting::Diagram {
            ppd = resample_diagram(&ppd, mix_seed(config.resample_seed, degree as u64))
                .map_err(|e| e.in_stage("fit"))?;
        }
        write_ppd(&ppd, &provenance("stage=ppd"), &hdir.join("ppd.tsv"))
            .map_err(|e| e.in_stage("fit"))?;

        let report = fit(
            &ppd,
            config.k_max,
            underlying_dim,
            config.delta_star_grid.as_deref(),
        )
        .map_err(|e| e.in_stage("fit"))?;
        write_model(&report, &hdir.join("model.txt")).map_err(|e| e.in_stage("fit"))?;
        let model_bytes = std::fs::read(hdir.join("model.txt")).map_err(|source| Error::Io {
            path: hdir.join("model.txt"),
            source,
        })?;
        let model_hash = hex(&Sha256::digest(&model_bytes))[..16].to_string();

        if config.burnin_curve_steps > 0 {
            let curve = burn_in_curve(
                &ppd,
                &report.model,
                config.burnin_curve_steps,
                config.burnin_curve_chains,
                config.wasserstein_p,
                mix_seed(config.mcmc_seed, 0xB0 + degree as u64),
            )
            .map_err(|e| e.in_stage("burnin"))?;
            write_burn_in_curve(&curve, &hdir.join("burnin.tsv"))
                .map_err(|e| e.in_stage("burnin"))?;
        }

        for (vi, &(n_b, n_r, n_big_r)) in config.mcmc_variants.iter().enumerate() {
            let mcmc_config = McmcConfig {
                burn_in: config.burn_in,
                block_sweeps: n_b,
                blocks_per_restart: n_r,
                restarts: n_big_r,
                seed: mix_seed(config.mcmc_seed, (degree as u64) << 8 | vi as u64),
            };
            let replicas = replicate(&ppd, &report.model, &mcmc_config)
                .map_err(|e| e.in_stage("replicate"))?;
            let scheme_name = format!("{n_b}x{n_r}x{n_big_r}");
            write_replicas(
                &replicas,
                &mcmc_config,
                &model_hash,
                &hdir.join(format!("replicas_{scheme_name}")),
            )
            .map_err(|e| e.in_stage("replicate"))?;

            let replica_diagrams: Vec<PersistenceDiagram> =
                replicas.iter().map(|r| from_ppd(&r.ppd)).collect();
            let summary = count_significant(real, &replica_diagrams, config.alpha, config.j_max)
                .map_err(|e| e.in_stage("infer"))?;
            write_report(
                &summary,
                &format!("({n_b},{n_r},{n_big_r})"),
                config.alpha,
                &hdir.join(format!("report_{scheme_name}.txt")),
            )
            .map_err(|e| e.in_stage("infer"))?;
            outcomes.push(DegreeOutcome {
                degree,
                scheme: (n_b, n_r, n_big_r),
                summary,
            });
        }

        if config.stability_reps > 0 {
            stability_series(config, &cloud, real, degree, underlying_dim, &hdir)
                .map_err(|e| e.in_stage("stability"))?;
        }

        fits.push((degree, report));
    }

    Ok(PipelineOutputs {
        dir: dir.clone(),
        config_hash,
        fits,
        outcomes,
    })
}

/// Parameter-stability series: refit over regenerated datasets and emit the
/// per-rep estimates (the data behind the smoothed-density figures).
fn stability_series(
    config: &ExperimentConfig,
    cloud: &PointCloud,
    real: &PersistenceDiagram,
    degree: usize,
    underlying_dim: usize,
    hdir: &Path,
) -> Result<()> {
    let path = hdir.join("stability.tsv");
    let mut rows = String::new();
    let _ = writeln!(
        rows,
        "# pdrep stability series mode={} reps={}",
        config.resample, config.stability_reps
    );
    let _ = writeln!(rows, "# columns: rep delta theta_h theta_v theta_k...");
    for rep in 0..config.stability_reps {
        let seed = mix_seed(config.resample_seed, 0x57AB + rep as u64);
        let ppd = match config.resample {
            // Fresh draw from the same sampler (the simulation study) or a
            // bootstrap of the original data: both need the full upstream.
            ResampleSetting::None | ResampleSetting::Data => {
                let rep_cloud = if config.resample == ResampleSetting::None {
                    sample(&SamplerSpec {
                        shape: config.sampler.shape.clone(),
                        n: config.sampler.n,
                        seed,
                    })?
                } else {
                    resample_data(cloud, seed)?
                };
                let resolution = config
                    .resolution
                    .clone()
                    .unwrap_or_else(|| default_resolution(rep_cloud.ambient_dim()));
                let grid = kde_evaluate(&rep_cloud, config.eta, &resolution, config.padding)?;
                let diagrams = grid_persistence(&grid);
                let Some(d) = diagrams.iter().find(|d| d.degree == degree) else {
                    continue;
                };
                to_ppd(d, true)
            }
            ResampleSetting::Diagram => resample_diagram(&to_ppd(real, true), seed)?,
        };
        if ppd.len() < config.k_max + 2 {
            continue;
        }
        let report = fit(
            &ppd,
            config.k_max,
            underlying_dim,
            config.delta_star_grid.as_deref(),
        )?;
        let thetas: Vec<String> = report.model.theta.iter().map(|t| format!("{t}")).collect();
        let _ = writeln!(
            rows,
            "{rep} {} {} {} {}",
            report.model.delta,
            report.model.theta_h,
            report.model.theta_v,
            thetas.join(" ")
        );
    }
    std::fs::write(&path, rows).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            sampler: SamplerSpec {
                shape: Shape::Circles {
                    rings: vec![(1.5, 120), (0.5, 60)],
                },
                n: 180,
                seed: 7,
            },
            eta: 0.12,
            resolution: Some(vec![48, 48]),
            padding: None,
            degrees: vec![0],
            k_max: 3,
            underlying_dim: None,
            delta_star_grid: Some(vec![0.1]),
            alpha: 0.05,
            burn_in: 2,
            mcmc_variants: vec![(5, 4, 6)],
            mcmc_seed: 3,
            burnin_curve_steps: 0,
            burnin_curve_chains: 2,
            wasserstein_p: 2.0,
            j_max: 4,
            resample: ResampleSetting::None,
            resample_seed: 0,
            stability_reps: 0,
            out_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn config_round_trips_through_canonical_text() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(&dir.path().join("run"));
        let path = dir.path().join("config.txt");
        std::fs::write(&path, config.canonical_text()).unwrap();
        let parsed = parse_config(&path).unwrap();
        assert_eq!(parsed.canonical_text(), config.canonical_text());
    }

    #[test]
    fn pipeline_writes_every_stage_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = small_config(&out);
        let outputs = run_pipeline(&config).unwrap();
        for name in ["config.txt", "cloud.tsv", "grid.tsv", "diagram.tsv"] {
            assert!(out.join(name).exists(), "{name}");
        }
        for name in [
            "h0/ppd.tsv",
            "h0/model.txt",
            "h0/replicas_5x4x6/manifest.txt",
            "h0/replicas_5x4x6/rep_00000.tsv",
            "h0/report_5x4x6.txt",
        ] {
            assert!(out.join(name).exists(), "{name}");
        }
        assert_eq!(outputs.outcomes.len(), 1);
        assert_eq!(outputs.outcomes[0].summary.reports.len() >= 1, true);
        assert_eq!(
            crate::mcmc::read_replicas(&out.join("h0/replicas_5x4x6"))
                .unwrap()
                .len(),
            24
        );
    }

    #[test]
    fn pipeline_rerun_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let mut config = small_config(&out_a);
        run_pipeline(&config).unwrap();
        config.out_dir = out_b.clone();
        run_pipeline(&config).unwrap();
        for name in ["cloud.tsv", "grid.tsv", "diagram.tsv", "h0/ppd.tsv", "h0/model.txt"] {
            let a = std::fs::read(out_a.join(name)).unwrap();
            let b = std::fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }
}
