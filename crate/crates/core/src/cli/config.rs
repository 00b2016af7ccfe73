//! Experiment configuration: flat `key = value` text with dotted section keys.
//!
//! ```text
//! # comment
//! space.dimension = 2
//! system.kind = toral_automorphism
//! system.matrix = 2, 1, 1, 1
//! experiment.kind = sbc
//! ```
//!
//! Unknown keys are rejected. Every problem found is reported, not just the
//! first one.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{Assumption1Policy, Observable};
use crate::geometry::MIN_EXCESS_SAMPLES;
use crate::measures::{GridDensity, MeasureSpec};
use crate::phase::{Metric, SpaceSpec};
use crate::systems::{Arithmetic, SystemKind, SystemSpec};
use crate::targets::{TargetSequence, DEFAULT_ALPHA_GRID};

/// Every accepted key, in the order used when writing a config back out.
pub const KEYS: &[&str] = &[
    "space.dimension",
    "space.metric",
    "system.kind",
    "system.matrix",
    "system.base",
    "system.angle",
    "system.arithmetic",
    "measure.kind",
    "measure.file",
    "measure.resolution",
    "targets.kind",
    "targets.c",
    "targets.gamma",
    "targets.beta",
    "targets.values",
    "targets.horizon",
    "targets.epsilon",
    "targets.alpha_grid",
    "geometry.epsilon",
    "geometry.delta",
    "geometry.probe_budget",
    "experiment.kind",
    "experiment.n_max",
    "experiment.n_seeds",
    "experiment.n_samples",
    "experiment.checkpoints",
    "experiment.n",
    "experiment.m",
    "experiment.gaps",
    "experiment.observables",
    "experiment.radii",
    "experiment.cap",
    "experiment.alpha",
    "experiment.fixed_center",
    "experiment.override_assumption1",
    "run.master_seed",
    "run.output",
    "run.workers",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sbc,
    En,
    Pair,
    Decay,
    Local,
    Bosh,
    Validate,
    Packing,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sbc => "sbc",
            ExperimentKind::En => "en",
            ExperimentKind::Pair => "pair",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Local => "local",
            ExperimentKind::Bosh => "bosh",
            ExperimentKind::Validate => "validate",
            ExperimentKind::Packing => "packing",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "sbc" => ExperimentKind::Sbc,
            "en" => ExperimentKind::En,
            "pair" => ExperimentKind::Pair,
            "decay" => ExperimentKind::Decay,
            "local" => ExperimentKind::Local,
            "bosh" => ExperimentKind::Bosh,
            "validate" => ExperimentKind::Validate,
            "packing" => ExperimentKind::Packing,
            other => {
                return Err(format!(
                    "unknown experiment kind {other:?} (expected sbc, en, pair, decay, local, bosh, validate or packing)"
                ))
            }
        })
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub space_dimension: usize,
    pub space_metric: Metric,
    pub system_kind: String,
    /// Row-major, `dimension^2` entries.
    pub system_matrix: Vec<i64>,
    pub system_base: u32,
    pub system_angle: Option<f64>,
    pub system_arithmetic: Arithmetic,
    pub measure_kind: String,
    pub measure_file: Option<PathBuf>,
    pub measure_resolution: usize,
    pub targets_kind: String,
    pub targets_c: f64,
    pub targets_gamma: f64,
    pub targets_beta: f64,
    pub targets_values: Vec<f64>,
    pub targets_horizon: usize,
    pub targets_epsilon: f64,
    pub targets_alpha_grid: Vec<f64>,
    pub geometry_epsilon: f64,
    pub geometry_delta: f64,
    pub geometry_probe_budget: usize,
    pub experiment: ExperimentKind,
    pub n_max: usize,
    pub n_seeds: usize,
    pub n_samples: usize,
    pub checkpoints: Vec<usize>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub gaps: Vec<usize>,
    pub observables: Vec<Observable>,
    pub radii: Vec<f64>,
    pub cap: u64,
    pub alpha: f64,
    pub fixed_center: Option<Vec<f64>>,
    pub override_assumption1: bool,
    pub master_seed: u64,
    pub output: PathBuf,
    pub workers: usize,
}

/// The objects a config describes.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub space: SpaceSpec,
    pub system: SystemSpec,
    pub measure: MeasureSpec,
    pub targets: TargetSequence,
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn observable_text(o: &Observable) -> String {
    match o {
        Observable::Cosine { freq } => format!("cos:{}", join(freq)),
        Observable::DistanceTo { point } => format!("dist:{}", join(point)),
        Observable::Constant { value } => format!("const:{value}"),
    }
}

fn parse_observable(s: &str) -> std::result::Result<Observable, String> {
    let (head, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("observable {s:?} must look like cos:k, dist:p or const:c"))?;
    let nums = |r: &str| -> std::result::Result<Vec<f64>, String> {
        r.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad number {t:?} in {s:?}"))
            })
            .collect()
    };
    match head.trim() {
        "cos" => Ok(Observable::Cosine {
            freq: rest
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<i64>()
                        .map_err(|_| format!("bad frequency {t:?} in {s:?}"))
                })
                .collect::<std::result::Result<_, _>>()?,
        }),
        "dist" => Ok(Observable::DistanceTo { point: nums(rest)? }),
        "const" => match nums(rest)?.as_slice() {
            [c] => Ok(Observable::Constant { value: *c }),
            _ => Err(format!("const takes one value, got {s:?}")),
        },
        other => Err(format!("unknown observable {other:?}")),
    }
}

/// Raw key/value pairs with per-key typed access that records failures.
struct Reader<'a> {
    raw: &'a BTreeMap<String, String>,
    errors: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        match self.raw.get(key) {
            None => default,
            Some(v) => match v.parse::<T>() {
                Ok(t) => t,
                Err(e) => {
                    self.errors.push(format!("{key}: cannot parse {v:?}: {e}"));
                    default
                }
            },
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        let v = self.raw.get(key)?;
        match v.parse::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse {v:?}: {e}"));
                None
            }
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: Display,
    {
        match self.raw.get(key) {
            None => default,
            Some(v) if v.trim().is_empty() => Vec::new(),
            Some(v) => {
                let mut out = Vec::new();
                for t in v.split(',') {
                    match t.trim().parse::<T>() {
                        Ok(x) => out.push(x),
                        Err(e) => {
                            self.errors.push(format!("{key}: cannot parse {t:?}: {e}"));
                            return default;
                        }
                    }
                }
                out
            }
        }
    }

    fn required(&mut self, key: &str) -> Option<String> {
        match self.raw.get(key) {
            Some(v) => Some(v.clone()),
            None => {
                self.errors.push(format!("{key}: required key missing"));
                None
            }
        }
    }
}

/// Splits config text into key/value pairs, rejecting unknown and repeated keys.
fn tokenize(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut raw = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!(
                "line {}: expected `key = value`, got {line:?}",
                i + 1
            ));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            errors.push(format!("line {}: unknown key {k:?}", i + 1));
            continue;
        }
        if raw.insert(k.to_string(), v.to_string()).is_some() {
            errors.push(format!("line {}: key {k:?} given twice", i + 1));
        }
    }
    raw
}

impl ExperimentConfig {
    /// Parses config text. Relative `measure.file` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut errors = Vec::new();
        let raw = tokenize(text, &mut errors);
        // Unparsable values fall back to their defaults so that the
        // semantic checks still run and report their own findings.
        let cfg = Self::from_raw(&raw, base_dir, &mut errors);
        cfg.check(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    fn from_raw(raw: &BTreeMap<String, String>, base_dir: &Path, errors: &mut Vec<String>) -> Self {
        let mut r = Reader { raw, errors };
        let experiment = r
            .required("experiment.kind")
            .and_then(|v| match v.parse::<ExperimentKind>() {
                Ok(k) => Some(k),
                Err(e) => {
                    r.errors.push(format!("experiment.kind: {e}"));
                    None
                }
            })
            .unwrap_or(ExperimentKind::Validate);
        let space_dimension = r.get("space.dimension", 1usize);
        let space_metric = r.get("space.metric", Metric::ChebyshevQuotient);
        let system_kind = r.required("system.kind").unwrap_or_default();
        let default_matrix = if space_dimension == 2 {
            vec![2, 1, 1, 1]
        } else {
            Vec::new()
        };
        let system_matrix = r.list("system.matrix", default_matrix);
        let system_base = r.get("system.base", 2u32);
        let system_angle = r.opt("system.angle");
        let default_arith = match system_kind.as_str() {
            "toral_automorphism" => Arithmetic::ExactGrid,
            "shift_map" => Arithmetic::BitStream,
            _ => Arithmetic::Float,
        };
        let system_arithmetic = r.get("system.arithmetic", default_arith);
        let measure_kind = r.get("measure.kind", "lebesgue".to_string());
        let measure_file = r.opt::<String>("measure.file").map(|f| {
            let p = PathBuf::from(f);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        });
        let measure_resolution = r.get("measure.resolution", 0usize);
        let targets_kind = r.get("targets.kind", "power".to_string());
        let targets_c = r.get("targets.c", 1.0);
        let targets_gamma = r.get("targets.gamma", 0.9);
        let targets_beta = r.get("targets.beta", 5.0);
        let targets_values = r.list("targets.values", Vec::new());
        let default_horizon = if targets_kind == "explicit" {
            targets_values.len()
        } else {
            100_000
        };
        let targets_horizon = r.get("targets.horizon", default_horizon);
        let targets_epsilon = r.get("targets.epsilon", 0.5);
        let targets_alpha_grid = r.list("targets.alpha_grid", DEFAULT_ALPHA_GRID.to_vec());
        let geometry_epsilon = r.get("geometry.epsilon", 0.1);
        let geometry_delta = r.get("geometry.delta", 0.01);
        let geometry_probe_budget = r.get("geometry.probe_budget", 10_000usize);
        let n_max = r.get("experiment.n_max", targets_horizon.min(100_000));
        let n_seeds = r.get("experiment.n_seeds", 100usize);
        let n_samples = r.get("experiment.n_samples", 100_000usize);
        let checkpoints = r.list("experiment.checkpoints", Vec::new());
        let n = r.list("experiment.n", vec![10usize]);
        let m = r.list("experiment.m", vec![10usize]);
        let gaps = r.list("experiment.gaps", (1..=10).collect());
        let observables = match raw.get("experiment.observables") {
            None => vec![
                Observable::Cosine {
                    freq: vec![1; space_dimension],
                },
                Observable::Cosine {
                    freq: vec![1; space_dimension],
                },
            ],
            Some(v) => {
                let mut out = Vec::new();
                for s in v.split(';') {
                    match parse_observable(s.trim()) {
                        Ok(o) => out.push(o),
                        Err(e) => r.errors.push(format!("experiment.observables: {e}")),
                    }
                }
                out
            }
        };
        let radii = r.list("experiment.radii", vec![0.1, 0.03, 0.01, 0.003, 0.001]);
        let cap = r.get("experiment.cap", 100_000_000u64);
        let alpha = r.get("experiment.alpha", space_dimension as f64);
        let fixed_center = if raw.contains_key("experiment.fixed_center") {
            Some(r.list("experiment.fixed_center", Vec::new()))
        } else {
            None
        };
        let override_assumption1 = r.get("experiment.override_assumption1", false);
        let master_seed = r.get("run.master_seed", 0u64);
        let output = PathBuf::from(r.get("run.output", "reclab-out".to_string()));
        let workers = r.get("run.workers", 0usize);

        ExperimentConfig {
            space_dimension,
            space_metric,
            system_kind,
            system_matrix,
            system_base,
            system_angle,
            system_arithmetic,
            measure_kind,
            measure_file,
            measure_resolution,
            targets_kind,
            targets_c,
            targets_gamma,
            targets_beta,
            targets_values,
            targets_horizon,
            targets_epsilon,
            targets_alpha_grid,
            geometry_epsilon,
            geometry_delta,
            geometry_probe_budget,
            experiment,
            n_max,
            n_seeds,
            n_samples,
            checkpoints,
            n,
            m,
            gaps,
            observables,
            radii,
            cap,
            alpha,
            fixed_center,
            override_assumption1,
            master_seed,
            output,
            workers,
        }
    }

    /// Semantic checks, each failure appended to `errors`.
    fn check(&self, errors: &mut Vec<String>) {
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errors.push(msg);
            }
        };
        self.resolve_collecting(&mut need);
        need(self.n_max >= 1, "experiment.n_max: must be >= 1".into());
        need(
            self.n_max <= self.targets_horizon,
            format!(
                "experiment.n_max: {} exceeds targets.horizon {}",
                self.n_max, self.targets_horizon
            ),
        );
        need(self.n_seeds >= 1, "experiment.n_seeds: must be >= 1".into());
        need(
            self.n_samples >= 1,
            "experiment.n_samples: must be >= 1".into(),
        );
        if matches!(self.experiment, ExperimentKind::En | ExperimentKind::Pair) {
            need(
                self.n_samples >= crate::experiments::MIN_E_SAMPLES,
                format!(
                    "experiment.n_samples: must be >= {} for {}",
                    crate::experiments::MIN_E_SAMPLES,
                    self.experiment.name()
                ),
            );
        }
        if self.experiment == ExperimentKind::Packing {
            need(
                self.n_samples >= MIN_EXCESS_SAMPLES,
                format!("experiment.n_samples: must be >= {MIN_EXCESS_SAMPLES} for packing"),
            );
        }
        need(
            self.checkpoints.iter().all(|&c| c >= 1 && c <= self.n_max),
            format!(
                "experiment.checkpoints: every value must lie in [1, {}]",
                self.n_max
            ),
        );
        need(
            !self.n.is_empty() && self.n.iter().all(|&v| v >= 1),
            "experiment.n: need positive values".into(),
        );
        need(
            !self.m.is_empty() && self.m.iter().all(|&v| v >= 1),
            "experiment.m: need positive values".into(),
        );
        need(
            self.m.len() == 1 || self.m.len() == self.n.len(),
            "experiment.m: give one value or one per experiment.n entry".into(),
        );
        let horizon_needed = match self.experiment {
            ExperimentKind::En => self.n.iter().copied().max().unwrap_or(0),
            ExperimentKind::Pair => self.pairs().iter().map(|(a, b)| a + b).max().unwrap_or(0),
            _ => 0,
        };
        need(
            horizon_needed <= self.targets_horizon,
            format!(
                "targets.horizon: {} is shorter than the largest index used ({horizon_needed})",
                self.targets_horizon
            ),
        );
        need(
            !self.gaps.is_empty() && self.gaps[0] >= 1 && self.gaps.windows(2).all(|w| w[0] < w[1]),
            "experiment.gaps: need positive, strictly increasing values".into(),
        );
        need(
            (2..=3).contains(&self.observables.len()),
            format!(
                "experiment.observables: need 2 or 3, got {}",
                self.observables.len()
            ),
        );
        need(
            !self.radii.is_empty() && self.radii.iter().all(|&r| r > 0.0),
            "experiment.radii: need positive values".into(),
        );
        need(self.cap >= 1, "experiment.cap: must be >= 1".into());
        need(
            self.alpha > 0.0 && self.alpha.is_finite(),
            "experiment.alpha: must be > 0".into(),
        );
        if let Some(c) = &self.fixed_center {
            need(
                c.len() == self.space_dimension,
                format!(
                    "experiment.fixed_center: need {} coordinates, got {}",
                    self.space_dimension,
                    c.len()
                ),
            );
        }
        need(
            self.geometry_epsilon > 0.0,
            "geometry.epsilon: must be > 0".into(),
        );
        need(
            self.geometry_delta > 0.0 && self.geometry_delta < 2.0 * self.geometry_epsilon,
            "geometry.delta: must lie in (0, 2 * geometry.epsilon)".into(),
        );
        need(
            self.geometry_probe_budget >= 1,
            "geometry.probe_budget: must be >= 1".into(),
        );
        need(
            self.targets_epsilon > 0.0,
            "targets.epsilon: must be > 0".into(),
        );
        need(
            !self.targets_alpha_grid.is_empty() && self.targets_alpha_grid.iter().all(|&a| a > 1.0),
            "targets.alpha_grid: need values > 1".into(),
        );
    }

    fn resolve_collecting(&self, need: &mut impl FnMut(bool, String)) -> Option<Resolved> {
        let space = match SpaceSpec::new(self.space_dimension, self.space_metric) {
            Ok(s) => Some(s),
            Err(e) => {
                need(false, format!("space: {e}"));
                None
            }
        };
        let targets = match self.targets() {
            Ok(t) => Some(t),
            Err(e) => {
                need(false, format!("targets: {}", bare(&e)));
                None
            }
        };
        let space = space?;
        let system = match self.system(&space) {
            Ok(s) => Some(s),
            Err(e) => {
                need(false, format!("system: {}", bare(&e)));
                None
            }
        };
        let measure = match self.measure() {
            Ok(m) => Some(m),
            Err(e) => {
                need(false, format!("measure: {}", bare(&e)));
                None
            }
        };
        Some(Resolved {
            space,
            system: system?,
            measure: measure?,
            targets: targets?,
        })
    }

    /// Builds the space, system, measure and target sequence.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut errors = Vec::new();
        let r = self.resolve_collecting(&mut |ok, msg| {
            if !ok {
                errors.push(msg)
            }
        });
        match r {
            Some(r) if errors.is_empty() => Ok(r),
            _ => Err(Error::Config(errors)),
        }
    }

    fn targets(&self) -> Result<TargetSequence> {
        match self.targets_kind.as_str() {
            "power" => {
                TargetSequence::power(self.targets_c, self.targets_gamma, self.targets_horizon)
            }
            "log_power" => {
                TargetSequence::log_power(self.targets_c, self.targets_beta, self.targets_horizon)
            }
            "explicit" => {
                if self.targets_horizon != self.targets_values.len() {
                    return Err(Error::InvalidArgument(format!(
                        "explicit horizon {} differs from the {} listed values",
                        self.targets_horizon,
                        self.targets_values.len()
                    )));
                }
                TargetSequence::explicit(self.targets_values.clone())
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown target kind {other:?} (expected power, log_power or explicit)"
            ))),
        }
    }

    fn system(&self, space: &SpaceSpec) -> Result<SystemSpec> {
        let kind = match self.system_kind.as_str() {
            "toral_automorphism" => {
                let n = self.space_dimension;
                if self.system_matrix.len() != n * n {
                    return Err(Error::InvalidSystem(format!(
                        "system.matrix needs {} entries, got {}",
                        n * n,
                        self.system_matrix.len()
                    )));
                }
                SystemKind::ToralAutomorphism {
                    matrix: self.system_matrix.chunks(n).map(<[i64]>::to_vec).collect(),
                }
            }
            "shift_map" => SystemKind::ShiftMap {
                base: self.system_base,
            },
            "rotation" => {
                let angle = self
                    .system_angle
                    .ok_or_else(|| Error::InvalidSystem("rotation needs system.angle".into()))?;
                SystemKind::Rotation { angle }
            }
            "identity" => SystemKind::Identity,
            other => {
                return Err(Error::InvalidSystem(format!(
                    "unknown system kind {other:?} (expected toral_automorphism, shift_map, rotation or identity)"
                )))
            }
        };
        SystemSpec::new(kind, self.system_arithmetic, space)
    }

    fn measure(&self) -> Result<MeasureSpec> {
        match self.measure_kind.as_str() {
            "lebesgue" => Ok(MeasureSpec::Lebesgue),
            "grid_density" => {
                let path = self.measure_file.as_ref().ok_or_else(|| {
                    Error::InvalidMeasure("grid_density needs measure.file".into())
                })?;
                if self.measure_resolution == 0 {
                    return Err(Error::InvalidMeasure(
                        "grid_density needs measure.resolution".into(),
                    ));
                }
                Ok(MeasureSpec::GridDensity(GridDensity::from_csv_path(
                    path,
                    self.space_dimension,
                    self.measure_resolution,
                )?))
            }
            other => Err(Error::InvalidMeasure(format!(
                "unknown measure kind {other:?} (expected lebesgue or grid_density)"
            ))),
        }
    }

    /// `(n, m)` pairs for the pair experiment.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.n
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                (
                    n,
                    if self.m.len() == 1 {
                        self.m[0]
                    } else {
                        self.m[i]
                    },
                )
            })
            .collect()
    }

    pub fn policy(&self) -> Assumption1Policy {
        Assumption1Policy {
            epsilon: self.targets_epsilon,
            n_min: 3,
            alpha_grid: self.targets_alpha_grid.clone(),
            override_refusal: self.override_assumption1,
        }
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("space.dimension", self.space_dimension.to_string()),
            ("space.metric", self.space_metric.to_string()),
            ("system.kind", self.system_kind.clone()),
            ("system.matrix", join(&self.system_matrix)),
            ("system.base", self.system_base.to_string()),
        ];
        if let Some(a) = self.system_angle {
            out.push(("system.angle", a.to_string()));
        }
        out.extend([
            ("system.arithmetic", self.system_arithmetic.to_string()),
            ("measure.kind", self.measure_kind.clone()),
        ]);
        if let Some(f) = &self.measure_file {
            out.push(("measure.file", f.display().to_string()));
        }
        out.extend([
            ("measure.resolution", self.measure_resolution.to_string()),
            ("targets.kind", self.targets_kind.clone()),
            ("targets.c", self.targets_c.to_string()),
            ("targets.gamma", self.targets_gamma.to_string()),
            ("targets.beta", self.targets_beta.to_string()),
            ("targets.values", join(&self.targets_values)),
            ("targets.horizon", self.targets_horizon.to_string()),
            ("targets.epsilon", self.targets_epsilon.to_string()),
            ("targets.alpha_grid", join(&self.targets_alpha_grid)),
            ("geometry.epsilon", self.geometry_epsilon.to_string()),
            ("geometry.delta", self.geometry_delta.to_string()),
            (
                "geometry.probe_budget",
                self.geometry_probe_budget.to_string(),
            ),
            ("experiment.kind", self.experiment.name().to_string()),
            ("experiment.n_max", self.n_max.to_string()),
            ("experiment.n_seeds", self.n_seeds.to_string()),
            ("experiment.n_samples", self.n_samples.to_string()),
            ("experiment.checkpoints", join(&self.checkpoints)),
            ("experiment.n", join(&self.n)),
            ("experiment.m", join(&self.m)),
            ("experiment.gaps", join(&self.gaps)),
            (
                "experiment.observables",
                self.observables
                    .iter()
                    .map(observable_text)
                    .collect::<Vec<_>>()
                    .join("; "),
            ),
            ("experiment.radii", join(&self.radii)),
            ("experiment.cap", self.cap.to_string()),
            ("experiment.alpha", self.alpha.to_string()),
        ]);
        if let Some(c) = &self.fixed_center {
            out.push(("experiment.fixed_center", join(c)));
        }
        out.extend([
            (
                "experiment.override_assumption1",
                self.override_assumption1.to_string(),
            ),
            ("run.master_seed", self.master_seed.to_string()),
            ("run.output", self.output.display().to_string()),
            ("run.workers", self.workers.to_string()),
        ]);
        out
    }

    /// Config text that parses back to `self`.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// The message of an error without its variant prefix.
fn bare(e: &Error) -> String {
    match e {
        Error::InvalidArgument(m) | Error::InvalidSystem(m) | Error::InvalidMeasure(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Reads and validates the config at `path`.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::parse(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment.kind = sbc\nsystem.kind = shift_map\n";

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    fn messages(e: Error) -> Vec<String> {
        match e {
            Error::Config(v) => v,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.space_dimension, 1);
        assert_eq!(cfg.system_arithmetic, Arithmetic::BitStream);
        assert_eq!(cfg.targets_kind, "power");
        assert_eq!(cfg.targets_horizon, 100_000);
        assert_eq!(cfg.n_max, 100_000);
        let text = cfg.to_text();
        assert_eq!(parse(&text).unwrap(), cfg);
        assert_eq!(parse(&text).unwrap().to_text(), text);
    }

    #[test]
    fn negative_gamma_is_reported() {
        let errs = messages(parse(&format!("{MINIMAL}targets.gamma = -1\n")).unwrap_err());
        assert!(
            errs.iter().any(|e| e.contains("gamma must be in (0,1]")),
            "{errs:?}"
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let errs = messages(
            parse("experiment.kind = sbc\nsysstem.kind = x\nsystm.kind = shift_map\n").unwrap_err(),
        );
        assert!(
            errs.iter().any(|e| e.contains("\"systm.kind\"")),
            "{errs:?}"
        );
        assert!(
            errs.iter().any(|e| e.contains("\"sysstem.kind\"")),
            "{errs:?}"
        );
    }

    #[test]
    fn every_violation_is_listed() {
        let errs = messages(
            parse("experiment.kind = sbc\nsystem.kind = shift_map\ntargets.gamma = 2\nspace.metric = taxicab\nrun.workers = many\n")
                .unwrap_err(),
        );
        assert_eq!(errs.len(), 3, "{errs:?}");
        let errs = messages(
            parse("experiment.kind = sbc\nsystem.kind = shift_map\ntargets.gamma = 2\ngeometry.delta = 5\n")
                .unwrap_err(),
        );
        assert!(errs.len() >= 2, "{errs:?}");
    }

    #[test]
    fn missing_required_keys() {
        let errs = messages(parse("").unwrap_err());
        assert!(errs.iter().any(|e| e.contains("experiment.kind")));
        assert!(errs.iter().any(|e| e.contains("system.kind")));
    }

    #[test]
    fn cat_map_matrix_and_observables() {
        let cfg = parse(
            "experiment.kind = decay\nspace.dimension = 2\nsystem.kind = toral_automorphism\nexperiment.observables = cos:1,0; dist:0.5,0.5; const:2\n",
        )
        .unwrap();
        assert_eq!(cfg.system_matrix, vec![2, 1, 1, 1]);
        assert_eq!(cfg.observables.len(), 3);
        assert_eq!(parse(&cfg.to_text()).unwrap(), cfg);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.system, SystemSpec::cat_map());
    }

    #[test]
    fn missing_density_file_is_an_error() {
        let errs = messages(
            parse("experiment.kind = sbc\nsystem.kind = shift_map\nmeasure.kind = grid_density\nmeasure.file = /no/such/file.csv\nmeasure.resolution = 4\n")
                .unwrap_err(),
        );
        assert!(
            errs.iter().any(|e| e.contains("/no/such/file.csv")),
            "{errs:?}"
        );
    }

    #[test]
    fn repeated_key_rejected() {
        let errs =
            messages(parse(&format!("{MINIMAL}run.workers = 1\nrun.workers = 2\n")).unwrap_err());
        assert!(errs.iter().any(|e| e.contains("given twice")));
    }
}
