//! Experiment harness: simulate, reconstruct and score every cell of an
//! `(alpha, gamma, method, seed)` grid.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{HyperParams, PriorKind};
use crate::depth::{cdf_at, depth_error_cdf};
use crate::error::{LidarError, Result};
use crate::fields::{DepthField, ReflectivityCube};
use crate::forward::{sbr, simulate, SimConfig};
use crate::irf::IrfBank;
use crate::pipeline::{reconstruct, reconstruct_baseline};
use crate::real::Real;
use crate::reflectivity::{reflectivity_mse, DenoiseConfig};
use crate::sem::SemOutput;

/// A reconstruction method: one of the weight priors, or the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Prior(PriorKind),
    Xcorr,
}

impl Method {
    pub fn all() -> Vec<Method> {
        let mut m: Vec<Method> = PriorKind::ALL.iter().map(|&k| Method::Prior(k)).collect();
        m.push(Method::Xcorr);
        m
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Prior(k) => write!(f, "{k}"),
            Method::Xcorr => f.write_str("xcorr"),
        }
    }
}

impl FromStr for Method {
    type Err = LidarError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "xcorr" {
            Ok(Method::Xcorr)
        } else {
            s.parse().map(Method::Prior)
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Grid axes. `gamma_t` values are `gamma * T`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub gamma_t: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    /// The default grid: `alpha in {25, 100}`,
    /// `gamma T in {0.01, 0.05, 0.1, 0.3, 0.5, 1, 5}`, three seeds.
    pub fn full(methods: Vec<Method>) -> Self {
        Self {
            alphas: vec![25.0, 100.0],
            gamma_t: vec![0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 5.0],
            methods,
            seeds: vec![1, 2, 3],
        }
    }
}

/// Truth shared by every cell.
pub struct GridTruth<'a, F> {
    pub depth: &'a DepthField,
    pub reflectivity: &'a ReflectivityCube<F>,
    pub bank: &'a IrfBank<F>,
}

/// Scores of one `(alpha, gamma, method, seed)` run.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub alpha: f64,
    pub gamma_t: f64,
    pub method: Method,
    pub seed: u64,
    /// Mean detected photons per pixel.
    pub counts: f64,
    /// Mean signal-to-background ratio of the simulated truth.
    pub sbr: f64,
    pub outcome: std::result::Result<CellScores, String>,
}

#[derive(Debug, Clone)]
pub struct CellScores {
    pub mse: f64,
    pub cdf: Vec<(usize, f64)>,
    /// Total SEM iterations (0 for the matched filter).
    pub n_iter: usize,
    pub burnin_iters: usize,
    pub burnin_capped: bool,
    pub seconds_per_iter: f64,
    /// Weight estimation time, depth excluded.
    pub weight_seconds: f64,
    pub depth_seconds: f64,
}

/// Seed average of one `(alpha, gamma, method)` cell over its successful runs.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub alpha: f64,
    pub gamma_t: f64,
    pub method: Method,
    pub counts: f64,
    pub sbr: f64,
    pub mse: f64,
    /// Averaged CDF on thresholds `0..=max` over the runs.
    pub cdf: Vec<(usize, f64)>,
    pub n_iter: f64,
    pub burnin_iters: f64,
    pub seconds_per_iter: f64,
    pub weight_seconds: f64,
    pub depth_seconds: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Pointwise mean of CDF tables (each extended by 1 past its end).
pub fn average_cdfs(cdfs: &[&[(usize, f64)]]) -> Vec<(usize, f64)> {
    let max = cdfs.iter().filter_map(|c| c.last().map(|p| p.0)).max();
    let Some(max) = max else {
        return Vec::new();
    };
    (0..=max).map(|h| (h, mean(cdfs.iter().map(|c| cdf_at(c, h))))).collect()
}

/// Runs one cell.
pub fn run_cell<F: Real>(
    truth: &GridTruth<'_, F>,
    alpha: f64,
    gamma_t: f64,
    method: Method,
    seed: u64,
    hyper: &HyperParams,
    denoise: &DenoiseConfig,
) -> CellResult {
    let sim = SimConfig { alpha, gamma_t, seed };
    let t_len = truth.bank.t_len();
    let effective = sim.effective_cube(truth.reflectivity, t_len);
    let sbr_value = sbr(&effective, truth.bank).map(|v| v.as_f64()).unwrap_or(f64::INFINITY);
    let mut counts = f64::NAN;
    let outcome = (|| -> Result<CellScores> {
        let scene = simulate(&sim, truth.depth, truth.reflectivity, truth.bank)?;
        counts = scene.total_photons() as f64 / scene.n_pixels() as f64;
        let rec = match method {
            Method::Prior(kind) => reconstruct(&scene, truth.bank, kind, hyper, denoise, seed)?,
            Method::Xcorr => reconstruct_baseline(&scene, truth.bank, hyper, denoise)?,
        };
        let mse = reflectivity_mse(&rec.reflectivity, &effective)?.as_f64();
        let cdf = depth_error_cdf(&rec.depth, truth.depth)?;
        let (n_iter, burnin_iters, burnin_capped, seconds_per_iter) = match &rec.sem {
            Some(sem) => {
                (sem.total_iters(), sem.burnin_iters, sem.burnin_capped, mean(sem.trace.iter().map(|r| r.seconds)))
            }
            None => (0, 0, false, 0.0),
        };
        Ok(CellScores {
            mse,
            cdf,
            n_iter,
            burnin_iters,
            burnin_capped,
            seconds_per_iter,
            weight_seconds: rec.weight_seconds,
            depth_seconds: rec.depth_seconds,
        })
    })();
    CellResult { alpha, gamma_t, method, seed, counts, sbr: sbr_value, outcome: outcome.map_err(|e| e.to_string()) }
}

/// Per-run results and seed averages for a whole grid. Cells are
/// independent jobs; a failing cell is recorded and the grid continues.
pub struct GridResults {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<CellSummary>,
}

pub fn run_grid<F: Real>(
    truth: &GridTruth<'_, F>,
    spec: &GridSpec,
    hyper: &HyperParams,
    denoise: &DenoiseConfig,
) -> GridResults {
    let mut jobs = Vec::new();
    for &alpha in &spec.alphas {
        for &gamma_t in &spec.gamma_t {
            for &method in &spec.methods {
                for &seed in &spec.seeds {
                    jobs.push((alpha, gamma_t, method, seed));
                }
            }
        }
    }
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(alpha, gamma_t, method, seed)| run_cell(truth, alpha, gamma_t, method, seed, hyper, denoise))
        .collect();
    let summaries = summarize(&cells);
    GridResults { cells, summaries }
}

/// Groups runs by `(alpha, gamma, method)` in first-appearance order and
/// averages them.
pub fn summarize(cells: &[CellResult]) -> Vec<CellSummary> {
    let mut keys: Vec<(f64, f64, Method)> = Vec::new();
    for c in cells {
        let key = (c.alpha, c.gamma_t, c.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(alpha, gamma_t, method)| {
            let group: Vec<&CellResult> =
                cells.iter().filter(|c| c.alpha == alpha && c.gamma_t == gamma_t && c.method == method).collect();
            let ok: Vec<&CellScores> = group.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
            let cdfs: Vec<&[(usize, f64)]> = ok.iter().map(|s| s.cdf.as_slice()).collect();
            CellSummary {
                alpha,
                gamma_t,
                method,
                counts: mean(group.iter().map(|c| c.counts).filter(|v| v.is_finite())),
                sbr: mean(group.iter().map(|c| c.sbr)),
                mse: mean(ok.iter().map(|s| s.mse)),
                cdf: average_cdfs(&cdfs),
                n_iter: mean(ok.iter().map(|s| s.n_iter as f64)),
                burnin_iters: mean(ok.iter().map(|s| s.burnin_iters as f64)),
                seconds_per_iter: mean(ok.iter().map(|s| s.seconds_per_iter)),
                weight_seconds: mean(ok.iter().map(|s| s.weight_seconds)),
                depth_seconds: mean(ok.iter().map(|s| s.depth_seconds)),
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CellRow<'a> {
    alpha: f64,
    gamma_t: f64,
    method: Method,
    seed: u64,
    counts: f64,
    sbr: f64,
    mse: Option<f64>,
    cdf_0: Option<f64>,
    cdf_5: Option<f64>,
    cdf_50: Option<f64>,
    n_iter: Option<usize>,
    burnin_iters: Option<usize>,
    burnin_capped: Option<bool>,
    seconds_per_iter: Option<f64>,
    weight_seconds: Option<f64>,
    depth_seconds: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct SummaryRow {
    alpha: f64,
    gamma_t: f64,
    method: Method,
    counts: f64,
    sbr: f64,
    mse: f64,
    cdf_0: f64,
    cdf_5: f64,
    cdf_50: f64,
    n_iter: f64,
    burnin_iters: f64,
    seconds_per_iter: f64,
    weight_seconds: f64,
    depth_seconds: f64,
    n_ok: usize,
    n_failed: usize,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| LidarError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per run. Columns: `alpha, gamma_t, method, seed, counts, sbr,
/// mse, cdf_0, cdf_5, cdf_50, n_iter, burnin_iters, burnin_capped,
/// seconds_per_iter, weight_seconds, depth_seconds, error`.
pub fn write_cells_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for c in cells {
        let ok = c.outcome.as_ref().ok();
        w.serialize(CellRow {
            alpha: c.alpha,
            gamma_t: c.gamma_t,
            method: c.method,
            seed: c.seed,
            counts: c.counts,
            sbr: c.sbr,
            mse: ok.map(|s| s.mse),
            cdf_0: ok.map(|s| cdf_at(&s.cdf, 0)),
            cdf_5: ok.map(|s| cdf_at(&s.cdf, 5)),
            cdf_50: ok.map(|s| cdf_at(&s.cdf, 50)),
            n_iter: ok.map(|s| s.n_iter),
            burnin_iters: ok.map(|s| s.burnin_iters),
            burnin_capped: ok.map(|s| s.burnin_capped),
            seconds_per_iter: ok.map(|s| s.seconds_per_iter),
            weight_seconds: ok.map(|s| s.weight_seconds),
            depth_seconds: ok.map(|s| s.depth_seconds),
            error: c.outcome.as_ref().err().map(|e| e.as_str()),
        })?;
    }
    w.flush().map_err(|e| LidarError::io(path, e))
}

/// One row per seed-averaged cell. Columns: `alpha, gamma_t, method,
/// counts, sbr, mse, cdf_0, cdf_5, cdf_50, n_iter, burnin_iters,
/// seconds_per_iter, weight_seconds, depth_seconds, n_ok, n_failed`.
pub fn write_summary_csv(path: &Path, summaries: &[CellSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for s in summaries {
        w.serialize(SummaryRow {
            alpha: s.alpha,
            gamma_t: s.gamma_t,
            method: s.method,
            counts: s.counts,
            sbr: s.sbr,
            mse: s.mse,
            cdf_0: cdf_at(&s.cdf, 0),
            cdf_5: cdf_at(&s.cdf, 5),
            cdf_50: cdf_at(&s.cdf, 50),
            n_iter: s.n_iter,
            burnin_iters: s.burnin_iters,
            seconds_per_iter: s.seconds_per_iter,
            weight_seconds: s.weight_seconds,
            depth_seconds: s.depth_seconds,
            n_ok: s.n_ok,
            n_failed: s.n_failed,
        })?;
    }
    w.flush().map_err(|e| LidarError::io(path, e))
}

/// Writes `cdf_a<alpha>_g<gamma_t>_<method>.csv` (columns `threshold,fraction`)
/// for each summary into `dir`.
pub fn write_cdf_files(dir: &Path, summaries: &[CellSummary]) -> Result<()> {
    for s in summaries {
        let path = dir.join(format!("cdf_a{}_g{}_{}.csv", s.alpha, s.gamma_t, s.method));
        let mut w = csv_writer(&path)?;
        w.write_record(["threshold", "fraction"])?;
        for (h, p) in &s.cdf {
            w.write_record([h.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| LidarError::io(&path, e))?;
    }
    Ok(())
}

/// Iteration count and wall time of one SEM run. Depth estimation time is
/// not included (its cost is fixed by the sampler length).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: String,
    pub n_iter: usize,
    pub seconds_per_iter: f64,
    pub total_seconds: f64,
}

pub fn timing_report<F>(traces: &[(String, &SemOutput<F>)]) -> Vec<TimingRow> {
    traces
        .iter()
        .map(|(label, sem)| {
            let total: f64 = sem.trace.iter().map(|r| r.seconds).sum();
            let n = sem.trace.len();
            TimingRow {
                method: label.clone(),
                n_iter: n,
                seconds_per_iter: if n == 0 { 0.0 } else { total / n as f64 },
                total_seconds: total,
            }
        })
        .collect()
}

pub fn write_timing_csv(path: &Path, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| LidarError::io(path, e))
}
