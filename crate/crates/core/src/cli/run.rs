//! Runs a validated config and writes its artifacts.
//!
//! Every experiment computes all of its output in memory first; files are
//! written afterwards by a single writer, so worker count cannot affect them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind, Resolved};
use crate::error::{Error, Result};
use crate::experiments::{
    boshernitzan_stat, censored_median, estimate_correlation_decay, estimate_e_measure,
    estimate_e_pair, local_stats, run_sbc, EnEstimate, LocalStats, PairEstimate, RatioStats,
    SbcOptions,
};
use crate::geometry::{maximal_packing, neighbourhood_excess, Partition};
use crate::phase::{Metric, Point};
use crate::rng::{stream, with_workers};
use crate::targets::{validate_target_sequence, SeqValidation};

/// Environment variable that overrides `run.workers`.
pub const WORKERS_ENV: &str = "RECLAB_WORKERS";

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub master_seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    /// `config` or `env`.
    pub workers_source: String,
    pub wall_clock_seconds: f64,
    pub config: ConfigEcho,
    pub artifacts: Vec<Artifact>,
}

/// Config entries serialized as a map in the canonical key order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEcho(pub Vec<(&'static str, String)>);

impl Serialize for ConfigEcho {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    experiment: &'a str,
    version: &'a str,
    master_seed: u64,
    config: ConfigEcho,
    result: T,
}

struct Output {
    csv: Vec<(&'static str, Vec<u8>)>,
    summary: Vec<u8>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv buffer>", std::io::Error::other(e.to_string())))
}

fn summary_bytes<T: Serialize>(cfg: &ExperimentConfig, result: T) -> Result<Vec<u8>> {
    let s = Summary {
        experiment: cfg.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: cfg.master_seed,
        // The output directory says where artifacts go, not what they
        // contain, so it stays out of them.
        config: ConfigEcho(
            cfg.entries()
                .into_iter()
                .filter(|(k, _)| *k != "run.output")
                .collect(),
        ),
        result,
    };
    let mut bytes = serde_json::to_vec_pretty(&s)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Resolves the worker count: the environment wins over the config.
pub fn effective_workers(
    cfg: &ExperimentConfig,
    env: Option<&str>,
) -> Result<(usize, &'static str)> {
    match env {
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map(|w| (w, "env"))
            .map_err(|_| Error::Config(vec![format!("{WORKERS_ENV}: cannot parse {v:?}")])),
        None => Ok((cfg.workers, "config")),
    }
}

/// Runs `cfg`, reading the worker override from the environment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let env = std::env::var(WORKERS_ENV).ok();
    run_experiment_with(cfg, env.as_deref())
}

/// Runs `cfg` with an explicit worker override.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    workers_env: Option<&str>,
) -> Result<RunManifest> {
    let started = Instant::now();
    let (workers, source) = effective_workers(cfg, workers_env)?;
    let resolved = cfg.resolve()?;
    log::info!(
        "running {} with {} worker(s) from {source}",
        cfg.experiment.name(),
        if workers == 0 {
            "all".to_string()
        } else {
            workers.to_string()
        }
    );
    let output = with_workers(workers, || execute(cfg, &resolved))?;
    let artifacts = write_artifacts(&cfg.output, &output)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment.name().to_string(),
        master_seed: cfg.master_seed,
        output: cfg.output.clone(),
        workers,
        workers_source: source.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        config: ConfigEcho(cfg.entries()),
        artifacts,
    };
    let path = cfg.output.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    if let Err(e) = std::fs::write(&path, bytes) {
        remove_artifacts(&cfg.output, &manifest.artifacts);
        return Err(Error::io(path, e));
    }
    verify_manifest(&cfg.output, &manifest.artifacts)?;
    Ok(manifest)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn remove_artifacts(dir: &Path, artifacts: &[Artifact]) {
    for a in artifacts {
        let _ = std::fs::remove_file(dir.join(&a.file));
    }
    let _ = std::fs::remove_file(dir.join(MANIFEST_FILE));
}

fn write_artifacts(dir: &Path, out: &Output) -> Result<Vec<Artifact>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = out
        .csv
        .iter()
        .map(|(name, bytes)| (*name, bytes))
        .chain(std::iter::once((SUMMARY_FILE, &out.summary)));
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            remove_artifacts(dir, &written);
            return Err(Error::io(path, e));
        }
        written.push(Artifact {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    Ok(written)
}

/// Re-reads every listed artifact and compares digests.
pub fn verify_manifest(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    for a in artifacts {
        let path = dir.join(&a.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(Error::io(
                path,
                std::io::Error::other("content does not match the manifest digest"),
            ));
        }
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    match cfg.experiment {
        ExperimentKind::Sbc => sbc(cfg, r),
        ExperimentKind::En => en(cfg, r),
        ExperimentKind::Pair => pair(cfg, r),
        ExperimentKind::Decay => decay(cfg, r),
        ExperimentKind::Local => local(cfg, r),
        ExperimentKind::Bosh => bosh(cfg, r),
        ExperimentKind::Validate => validate(cfg, r),
        ExperimentKind::Packing => packing(cfg, r),
    }
}

#[derive(Serialize)]
struct SbcSummary<'a> {
    system: &'a str,
    measure: &'a str,
    mixing: bool,
    n_max: usize,
    n_seeds: usize,
    checkpoints: &'a [usize],
    cum_mass: &'a [f64],
    ratio_stats: &'a [RatioStats],
    validation: &'a Option<SeqValidation>,
    overridden: bool,
    fixed_center: &'a Option<Vec<f64>>,
}

fn sbc(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let opts = SbcOptions {
        n_max: cfg.n_max,
        n_seeds: cfg.n_seeds,
        checkpoints: cfg.checkpoints.clone(),
        master_seed: cfg.master_seed,
        policy: cfg.policy(),
        fixed_center: cfg.fixed_center.as_deref().map(Point::from_f64),
    };
    let res = run_sbc(&r.system, &r.measure, &r.space, &r.targets, &opts)?;
    let csv = csv_bytes(
        &["seed", "n", "S_n", "cum_mass", "ratio"],
        res.rows().map(|(seed, n, s, cm, ratio)| {
            vec![
                seed.to_string(),
                n.to_string(),
                s.to_string(),
                cm.to_string(),
                ratio.to_string(),
            ]
        }),
    )?;
    let summary = summary_bytes(
        cfg,
        SbcSummary {
            system: &res.system,
            measure: &res.measure,
            mixing: res.mixing,
            n_max: res.n_max,
            n_seeds: res.seeds.len(),
            checkpoints: &res.checkpoints,
            cum_mass: &res.cum_mass,
            ratio_stats: &res.ratio_stats,
            validation: &res.validation,
            overridden: res.overridden,
            fixed_center: &res.fixed_center,
        },
    )?;
    Ok(Output {
        csv: vec![("sbc_ratio.csv", csv)],
        summary,
    })
}

fn en(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let policy = cfg.policy();
    let ests: Vec<EnEstimate> = cfg
        .n
        .iter()
        .map(|&n| {
            estimate_e_measure(
                &r.system,
                &r.measure,
                &r.space,
                &r.targets,
                n,
                cfg.n_samples,
                cfg.master_seed,
                &policy,
            )
        })
        .collect::<Result<_>>()?;
    let csv = csv_bytes(
        &["n", "mu_hat", "se", "M_n", "deviation"],
        ests.iter().map(|e| {
            vec![
                e.n.to_string(),
                e.mu_hat.to_string(),
                e.std_error.to_string(),
                e.target.to_string(),
                e.deviation.to_string(),
            ]
        }),
    )?;
    Ok(Output {
        csv: vec![("en_measure.csv", csv)],
        summary: summary_bytes(cfg, &ests)?,
    })
}

fn pair(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let policy = cfg.policy();
    let ests: Vec<PairEstimate> = cfg
        .pairs()
        .into_iter()
        .map(|(n, m)| {
            estimate_e_pair(
                &r.system,
                &r.measure,
                &r.space,
                &r.targets,
                n,
                m,
                cfg.n_samples,
                cfg.master_seed,
                &policy,
            )
        })
        .collect::<Result<_>>()?;
    let csv = csv_bytes(
        &["n", "m", "joint", "product", "slack"],
        ests.iter().map(|e| {
            vec![
                e.n.to_string(),
                e.m.to_string(),
                e.joint_hat.to_string(),
                e.product_hat.to_string(),
                e.slack.to_string(),
            ]
        }),
    )?;
    Ok(Output {
        csv: vec![("pairs.csv", csv)],
        summary: summary_bytes(cfg, &ests)?,
    })
}

fn decay(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let est = estimate_correlation_decay(
        &r.system,
        &r.measure,
        &r.space,
        &cfg.observables,
        &cfg.gaps,
        cfg.n_samples,
        cfg.master_seed,
    )?;
    let csv = csv_bytes(
        &["gap", "corr", "abs_corr", "used_in_fit"],
        est.points.iter().map(|p| {
            vec![
                p.gap.to_string(),
                p.corr.to_string(),
                p.abs_corr.to_string(),
                p.used_in_fit.to_string(),
            ]
        }),
    )?;
    Ok(Output {
        csv: vec![("decay.csv", csv)],
        summary: summary_bytes(cfg, &est)?,
    })
}

#[derive(Serialize)]
struct RadiusSummary {
    r: f64,
    /// Median over seeds of `log tau / -log mu(B)`; censored returns count
    /// as larger than every observed value.
    median_ratio: Option<f64>,
    censoring_rate: f64,
}

#[derive(Serialize)]
struct LocalSummary {
    seeds: usize,
    cap: u64,
    radii: Vec<RadiusSummary>,
    median_d_lower: Option<f64>,
    median_d_upper: Option<f64>,
    median_r_lower: Option<f64>,
    median_r_upper: Option<f64>,
    unusable_seeds: usize,
}

fn local(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let stats: Vec<LocalStats> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(cfg.master_seed, seed as u64);
            let x = r.measure.sample(&r.space, &mut rng);
            local_stats(
                &r.system, &r.measure, &r.space, &x, &cfg.radii, cfg.cap, rng,
            )
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (seed, s) in stats.iter().enumerate() {
        for row in &s.rows {
            rows.push(vec![
                seed.to_string(),
                row.r.to_string(),
                row.mu_ball.to_string(),
                row.tau.steps().to_string(),
                row.tau.is_censored().to_string(),
            ]);
        }
    }
    let csv = csv_bytes(&["seed", "r", "mu_ball", "tau", "censored"], rows)?;
    let n = stats.len() as f64;
    let radii = cfg
        .radii
        .iter()
        .enumerate()
        .map(|(j, &rad)| {
            let ratios: Vec<Option<f64>> = stats.iter().map(|s| s.rows[j].ratio).collect();
            RadiusSummary {
                r: rad,
                median_ratio: censored_median(&ratios),
                censoring_rate: stats.iter().filter(|s| s.rows[j].tau.is_censored()).count() as f64
                    / n,
            }
        })
        .collect();
    let med = |f: fn(&LocalStats) -> Option<f64>| {
        let v: Vec<f64> = stats.iter().filter_map(f).collect();
        RatioStats::from_values(&v).map(|s| s.median)
    };
    let summary = LocalSummary {
        seeds: stats.len(),
        cap: cfg.cap,
        radii,
        median_d_lower: med(|s| s.d_lower),
        median_d_upper: med(|s| s.d_upper),
        median_r_lower: med(|s| s.r_lower),
        median_r_upper: med(|s| s.r_upper),
        unusable_seeds: stats.iter().filter(|s| !s.usable).count(),
    };
    Ok(Output {
        csv: vec![("local.csv", csv)],
        summary: summary_bytes(cfg, summary)?,
    })
}

#[derive(Serialize)]
struct BoshSummary {
    alpha: f64,
    n_max: usize,
    seeds: usize,
    final_proxy: Option<RatioStats>,
}

fn bosh(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let stats: Vec<_> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(cfg.master_seed, seed as u64);
            let x = r.measure.sample(&r.space, &mut rng);
            boshernitzan_stat(&r.system, &r.space, &x, cfg.alpha, cfg.n_max as u64, rng)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (seed, b) in stats.iter().enumerate() {
        for &(n, v) in &b.checkpoints {
            rows.push(vec![seed.to_string(), n.to_string(), v.to_string()]);
        }
    }
    let csv = csv_bytes(&["seed", "n", "running_min"], rows)?;
    let finals: Vec<f64> = stats.iter().map(|b| b.final_proxy).collect();
    let summary = BoshSummary {
        alpha: cfg.alpha,
        n_max: cfg.n_max,
        seeds: stats.len(),
        final_proxy: RatioStats::from_values(&finals),
    };
    Ok(Output {
        csv: vec![("bosh.csv", csv)],
        summary: summary_bytes(cfg, summary)?,
    })
}

fn validate(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let v = validate_target_sequence(&r.targets, 3, &cfg.targets_alpha_grid, cfg.targets_epsilon)?;
    let csv = csv_bytes(
        &["alpha", "sup_ratio"],
        v.ratio_table
            .iter()
            .map(|(a, s)| vec![a.to_string(), s.to_string()]),
    )?;
    Ok(Output {
        csv: vec![("ratio_table.csv", csv)],
        summary: summary_bytes(cfg, &v)?,
    })
}

#[derive(Serialize)]
struct PackingSummary {
    epsilon: f64,
    centers: usize,
    oversized: bool,
    probes: usize,
    delta: f64,
    /// Absent for euclidean metrics in dimension >= 2.
    max_excess: Option<f64>,
    max_excess_std_error: Option<f64>,
    uncovered: Option<usize>,
}

fn packing(cfg: &ExperimentConfig, r: &Resolved) -> Result<Output> {
    let p = maximal_packing(
        &r.space,
        cfg.geometry_epsilon,
        cfg.geometry_probe_budget,
        &mut stream(cfg.master_seed, 0),
    )?;
    let header: Vec<String> = (1..=r.space.dimension()).map(|i| format!("x{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv = csv_bytes(
        &header,
        p.centers()
            .iter()
            .map(|c| c.to_f64().iter().map(f64::to_string).collect()),
    )?;
    let (centers, oversized, probes) = (p.len(), p.oversized(), p.probes());
    let excess = if r.space.metric() == Metric::ChebyshevQuotient || r.space.dimension() == 1 {
        Some(neighbourhood_excess(
            &r.measure,
            &Partition::new(p),
            cfg.geometry_delta,
            cfg.n_samples,
            &mut stream(cfg.master_seed, 1),
        )?)
    } else {
        None
    };
    let summary = PackingSummary {
        epsilon: cfg.geometry_epsilon,
        centers,
        oversized,
        probes,
        delta: cfg.geometry_delta,
        max_excess: excess.as_ref().map(|e| e.max_estimate),
        max_excess_std_error: excess.as_ref().map(|e| e.max_std_error),
        uncovered: excess.as_ref().map(|e| e.uncovered),
    };
    Ok(Output {
        csv: vec![("packing.csv", csv)],
        summary: summary_bytes(cfg, summary)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str, out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        cfg.output = out.to_path_buf();
        cfg
    }

    #[test]
    fn env_overrides_config_workers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            "experiment.kind = validate\nsystem.kind = shift_map\nrun.workers = 3\ntargets.horizon = 1000\n",
            dir.path(),
        );
        assert_eq!(effective_workers(&cfg, None).unwrap(), (3, "config"));
        assert_eq!(effective_workers(&cfg, Some("2")).unwrap(), (2, "env"));
        assert!(effective_workers(&cfg, Some("two")).is_err());
        let m = run_experiment_with(&cfg, Some("1")).unwrap();
        assert_eq!((m.workers, m.workers_source.as_str()), (1, "env"));
        let files: Vec<&str> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
        assert_eq!(files, vec!["ratio_table.csv", SUMMARY_FILE]);
        verify_manifest(dir.path(), &m.artifacts).unwrap();
    }

    #[test]
    fn refused_run_leaves_no_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cfg = config(
            "experiment.kind = sbc\nsystem.kind = shift_map\ntargets.gamma = 1\ntargets.horizon = 1000\nexperiment.n_seeds = 2\n",
            &out,
        );
        let err = run_experiment_with(&cfg, None).unwrap_err();
        assert!(matches!(err, Error::Assumption1Refused(_)));
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
    }

    #[test]
    fn every_experiment_kind_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("sbc", "system.kind = shift_map\ntargets.horizon = 500\nexperiment.n_seeds = 4\nexperiment.override_assumption1 = true\n"),
            ("en", "system.kind = shift_map\ntargets.kind = explicit\ntargets.values = 0.1, 0.1, 0.1\nexperiment.n = 1, 3\nexperiment.n_samples = 2000\nexperiment.override_assumption1 = true\n"),
            ("pair", "space.dimension = 2\nsystem.kind = toral_automorphism\ntargets.horizon = 100\nexperiment.n = 5\nexperiment.m = 5\nexperiment.n_samples = 2000\nexperiment.override_assumption1 = true\n"),
            ("decay", "system.kind = rotation\nsystem.angle = 0.3\nexperiment.gaps = 1, 2, 3\nexperiment.n_samples = 1000\n"),
            ("local", "space.dimension = 2\nsystem.kind = toral_automorphism\nexperiment.radii = 0.1, 0.05\nexperiment.n_seeds = 3\nexperiment.cap = 100000\n"),
            ("bosh", "system.kind = shift_map\nexperiment.n_max = 1000\nexperiment.n_seeds = 3\n"),
            ("packing", "space.dimension = 2\nsystem.kind = identity\ngeometry.epsilon = 0.1\ngeometry.delta = 0.01\nexperiment.n_samples = 1000\n"),
        ];
        for (kind, body) in cases {
            let out = dir.path().join(kind);
            let cfg = config(&format!("experiment.kind = {kind}\n{body}"), &out);
            let m = run_experiment_with(&cfg, Some("2")).unwrap_or_else(|e| panic!("{kind}: {e}"));
            assert_eq!(m.artifacts.len(), 2, "{kind}");
            assert!(out.join(MANIFEST_FILE).exists());
            let summary: serde_json::Value =
                serde_json::from_slice(&std::fs::read(out.join(SUMMARY_FILE)).unwrap()).unwrap();
            assert_eq!(summary["experiment"], kind);
        }
    }
}
