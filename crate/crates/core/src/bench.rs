//! Latency and allocation sweeps over the transform engines.
//!
//! Each measurement runs [`WARMUP_RUNS`] discarded calls and then
//! `repetitions` timed calls on a monotonic clock. Only the transform call
//! is timed; scene and feature synthesis happen once up front.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::synth::{synth_features, synth_scene, Precision, SynthParams};
use crate::transform::{
    lss_pool, oracle_pipeline, rc_pipeline, voxel_sampling, AllocationReport, BevGridSpec,
    CameraView, Fusion,
};

pub const WARMUP_RUNS: usize = 2;
pub const MIN_REPETITIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rc,
    Oracle,
    Voxel,
    Lss,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rc => "rc",
            Method::Oracle => "oracle",
            Method::Voxel => "voxel",
            Method::Lss => "lss",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rc" => Ok(Method::Rc),
            "oracle" => Ok(Method::Oracle),
            "voxel" => Ok(Method::Voxel),
            "lss" => Ok(Method::Lss),
            _ => Err(Error::config(format!(
                "unknown method `{s}` (expected rc, oracle, voxel or lss)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    /// Square BEV sizes; each spans the scene grid's x extent.
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    /// Height counts swept for voxel sampling.
    pub voxel_heights: Vec<usize>,
    /// Vertical span of the voxel heights in meters.
    pub voxel_z_range: [f64; 2],
    pub scene: SynthParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Rc, Method::Oracle, Method::Voxel],
            sizes: vec![256],
            repetitions: MIN_REPETITIONS,
            voxel_heights: vec![20],
            voxel_z_range: [-1.0, 3.0],
            scene: SynthParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < MIN_REPETITIONS {
            return Err(Error::config(format!(
                "repetitions must be >= {MIN_REPETITIONS}, got {}",
                self.repetitions
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods to benchmark"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::config(
                "sizes must be a non-empty list of positive cell counts",
            ));
        }
        if self.methods.contains(&Method::Voxel)
            && (self.voxel_heights.is_empty() || self.voxel_heights.contains(&0))
        {
            return Err(Error::config(
                "voxel sampling needs at least one positive height count",
            ));
        }
        let [lo, hi] = self.voxel_z_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("voxel_z_range must be finite and increasing"));
        }
        self.scene.validate()
    }

    /// Evenly spaced height-cell centers over `voxel_z_range`.
    pub fn heights(&self, n: usize) -> Vec<f64> {
        let [lo, hi] = self.voxel_z_range;
        let step = (hi - lo) / n as f64;
        (0..n).map(|k| lo + (k as f64 + 0.5) * step).collect()
    }

    fn grid(&self, n: usize) -> Result<BevGridSpec<f64>> {
        let g = &self.scene.grid;
        let extent_x = g.cell_size * g.nx as f64;
        let extent_y = g.cell_size * g.ny as f64;
        if extent_x != extent_y {
            return Err(Error::config("benchmark sizes need a square scene grid"));
        }
        BevGridSpec::new(g.x_min, g.y_min, extent_x / n as f64, n, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl TimingStats {
    /// Median (mean of the middle pair for even counts) and nearest-rank
    /// 10th/90th percentiles.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("no timing samples"));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        let rank = |q: f64| s[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(Self {
            median,
            p10: rank(0.1),
            p90: rank(0.9),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub heights: Option<usize>,
    pub seconds: TimingStats,
    pub intermediate_floats: u64,
    pub output_floats: u64,
}

impl BenchRow {
    pub fn label(&self) -> String {
        match self.heights {
            Some(z) => format!("{}(z={z})", self.method.name()),
            None => self.method.name().to_string(),
        }
    }
}

/// RC-Sampling divided by another method at the same BEV size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub size: usize,
    pub against: String,
    pub time: f64,
    pub memory: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub dtype: Precision,
    pub threads: usize,
    pub build: String,
    pub warmup: usize,
    pub repetitions: usize,
}

impl Environment {
    pub fn current(dtype: Precision, repetitions: usize) -> Self {
        let profile = if cfg!(debug_assertions) {
            "debug"
        } else {
            "release"
        };
        Self {
            dtype,
            threads: rayon::current_num_threads(),
            build: format!(
                "{profile} {}-{}",
                std::env::consts::ARCH,
                std::env::consts::OS
            ),
            warmup: WARMUP_RUNS,
            repetitions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<RatioRow>,
    pub environment: Environment,
}

impl BenchReport {
    pub fn row(&self, method: Method, size: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.size == size)
    }

    /// Aligned text table: one line per measurement, then the ratios.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>12} {:>12} {:>12} {:>16} {:>14}",
            "method", "size", "median_ms", "p10_ms", "p90_ms", "intermediate", "output"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>12.3} {:>12.3} {:>12.3} {:>16} {:>14}",
                r.label(),
                r.size,
                r.seconds.median * 1e3,
                r.seconds.p10 * 1e3,
                r.seconds.p90 * 1e3,
                r.intermediate_floats,
                r.output_floats
            );
        }
        if !self.ratios.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>12} {:>12}",
                "rc / method", "size", "time", "memory"
            );
            for r in &self.ratios {
                let _ = writeln!(
                    out,
                    "{:<16} {:>6} {:>12.4} {:>12.6}",
                    r.against, r.size, r.time, r.memory
                );
            }
        }
        let e = &self.environment;
        let _ = writeln!(
            out,
            "\ndtype={:?} threads={} build={} warmup={} repetitions={}",
            e.dtype, e.threads, e.build, e.warmup, e.repetitions
        );
        out
    }
}

/// Times `f` after the warm-up runs; returns the stats and the last report.
pub fn time_call<F>(repetitions: usize, mut f: F) -> Result<(TimingStats, AllocationReport)>
where
    F: FnMut() -> Result<AllocationReport>,
{
    if repetitions < MIN_REPETITIONS {
        return Err(Error::config(format!(
            "repetitions must be >= {MIN_REPETITIONS}"
        )));
    }
    for _ in 0..WARMUP_RUNS {
        f()?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    let mut last = AllocationReport::default();
    for _ in 0..repetitions {
        let start = Instant::now();
        last = f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok((TimingStats::from_samples(&samples)?, last))
}

/// Runs the sweep in the precision named by `cfg.scene.dtype`.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    match cfg.scene.dtype {
        Precision::F32 => run_bench_typed::<f32>(cfg),
        Precision::F64 => run_bench_typed::<f64>(cfg),
    }
}

pub fn run_bench_typed<T: Real>(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let scene64 = synth_scene(&cfg.scene)?;
    let features = synth_features::<T>(&cfg.scene, &scene64)?;
    let scene = scene64.cast::<T>();
    let views: Vec<CameraView<'_, T>> = features
        .iter()
        .zip(&scene.cameras)
        .map(|((image, depth), camera)| CameraView {
            image,
            depth,
            camera,
        })
        .collect();
    let z_ref = T::lit(cfg.scene.z_ref);

    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let grid = cfg.grid(size)?.cast::<T>();
        for &method in &cfg.methods {
            match method {
                Method::Voxel => {
                    for &n in &cfg.voxel_heights {
                        let heights: Vec<T> = cfg.heights(n).into_iter().map(T::lit).collect();
                        let (seconds, rep) = time_call(cfg.repetitions, || {
                            voxel_sampling(&views, &grid, &heights).map(|(_, r)| r)
                        })?;
                        rows.push(row(method, size, Some(n), seconds, &rep));
                    }
                }
                _ => {
                    let (seconds, rep) = time_call(cfg.repetitions, || {
                        let out = match method {
                            Method::Rc => rc_pipeline(&views, &grid, z_ref, Fusion::Sum),
                            Method::Oracle => oracle_pipeline(&views, &grid, z_ref, Fusion::Sum),
                            _ => lss_pool(&views, &grid),
                        };
                        out.map(|(_, r)| r)
                    })?;
                    rows.push(row(method, size, None, seconds, &rep));
                }
            }
        }
    }

    let mut ratios = Vec::new();
    for &size in &cfg.sizes {
        let Some(rc) = rows
            .iter()
            .find(|r| r.method == Method::Rc && r.size == size)
        else {
            continue;
        };
        for other in rows
            .iter()
            .filter(|r| r.size == size && matches!(r.method, Method::Voxel | Method::Oracle))
        {
            ratios.push(RatioRow {
                size,
                against: other.label(),
                time: rc.seconds.median / other.seconds.median,
                memory: rc.intermediate_floats as f64 / other.intermediate_floats as f64,
            });
        }
    }

    Ok(BenchReport {
        rows,
        ratios,
        environment: Environment::current(cfg.scene.dtype, cfg.repetitions),
    })
}

fn row(
    method: Method,
    size: usize,
    heights: Option<usize>,
    seconds: TimingStats,
    rep: &AllocationReport,
) -> BenchRow {
    BenchRow {
        method,
        size,
        heights,
        seconds,
        intermediate_floats: rep.intermediate_floats,
        output_floats: rep.output_floats,
    }
}
