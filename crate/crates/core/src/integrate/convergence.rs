//! Strong convergence on nested Brownian grids.
//!
//! Every path starts from a base grid and is refined by bridge midpoints, so
//! all levels share one Brownian motion. The reference endpoint is the exact
//! solution on the finest level refined further.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{euler_maruyama, exact_family, milstein, refine, refine_to, wiener_path, zero_path};
use crate::model::{Coefficients, ErrorReport, Family, SolutionPath, WienerPath};
use crate::numeric::linear_fit;
use crate::{Error, Result};

/// Errors at or below this are indistinguishable from quadrature noise.
pub const DEGENERATE_ERROR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EulerMaruyama,
    Milstein,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Brownian,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceConfig {
    pub x0: f64,
    pub t0: f64,
    pub t1: f64,
    pub base_steps: usize,
    pub levels: u32,
    pub n_paths: u64,
    pub seed: u64,
    pub scheme: Scheme,
    pub path_kind: PathKind,
    /// Extra refinements of the finest level used for the reference.
    pub reference_levels: u32,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            x0: 1.0,
            t0: 0.0,
            t1: 1.0,
            base_steps: 16,
            levels: 4,
            n_paths: 100,
            seed: 0,
            scheme: Scheme::EulerMaruyama,
            path_kind: PathKind::Brownian,
            reference_levels: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceRow {
    pub dt: f64,
    pub mean_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln error` against `ln Δt`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub paths_used: u64,
    pub truncated: u64,
}

fn run_scheme(
    scheme: Scheme,
    problem: &dyn Coefficients,
    fam: &Family,
    x0: f64,
    path: &WienerPath,
) -> Result<SolutionPath> {
    match scheme {
        Scheme::EulerMaruyama => euler_maruyama(problem, x0, path),
        Scheme::Milstein => milstein(problem, x0, path),
        Scheme::Exact => exact_family(fam, x0, path),
    }
}

fn base_path(cfg: &ConvergenceConfig, index: u64) -> Result<WienerPath> {
    match cfg.path_kind {
        PathKind::Brownian => wiener_path(cfg.seed, index, cfg.t0, cfg.t1, cfg.base_steps),
        PathKind::Zero => zero_path(cfg.t0, cfg.t1, cfg.base_steps),
    }
}

/// Per-level endpoint errors of one path; `None` when any run truncates.
fn path_errors(problem: &dyn Coefficients, fam: &Family, cfg: &ConvergenceConfig, index: u64) -> Result<Option<Vec<f64>>> {
    let mut path = base_path(cfg, index)?;
    let mut endpoints = Vec::with_capacity(cfg.levels as usize);
    for level in 0..cfg.levels {
        if level > 0 {
            path = refine(&path);
        }
        match run_scheme(cfg.scheme, problem, fam, cfg.x0, &path)?.endpoint() {
            Some(e) => endpoints.push(e),
            None => return Ok(None),
        }
    }
    let reference = exact_family(fam, cfg.x0, &refine_to(&path, cfg.reference_levels))?;
    let Some(r) = reference.endpoint() else {
        return Ok(None);
    };
    Ok(Some(endpoints.into_iter().map(|e| (e - r).abs()).collect()))
}

pub fn convergence_study(problem: &dyn Coefficients, fam: &Family, cfg: &ConvergenceConfig) -> Result<ConvergenceTable> {
    if cfg.levels < 4 {
        return Err(Error::InvalidParams(format!(
            "a convergence study needs at least 4 levels, got {}",
            cfg.levels
        )));
    }
    if cfg.n_paths == 0 || cfg.base_steps == 0 {
        return Err(Error::InvalidParams("need at least one path and one step".into()));
    }
    let per_path: Vec<Option<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| path_errors(problem, fam, cfg, i))
        .collect::<Result<_>>()?;
    let used: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let paths_used = used.len() as u64;
    let dt0 = (cfg.t1 - cfg.t0) / cfg.base_steps as f64;
    let rows: Vec<ConvergenceRow> = (0..cfg.levels as usize)
        .map(|l| ConvergenceRow {
            dt: dt0 / (1u64 << l) as f64,
            mean_error: (paths_used > 0).then(|| used.iter().map(|e| e[l]).sum::<f64>() / paths_used as f64),
        })
        .collect();
    let mut table = ConvergenceTable {
        rows,
        slope: None,
        intercept: None,
        paths_used,
        truncated: cfg.n_paths - paths_used,
    };
    if paths_used == 0 {
        return Ok(table);
    }
    if table.rows.iter().all(|r| r.mean_error.unwrap_or(0.0) <= DEGENERATE_ERROR) {
        return Err(Error::DegenerateFit(DEGENERATE_ERROR));
    }
    let (u, v): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter_map(|r| r.mean_error.filter(|e| *e > 0.0).map(|e| (r.dt.ln(), e.ln())))
        .unzip();
    if u.len() < 2 {
        return Err(Error::DegenerateFit(DEGENERATE_ERROR));
    }
    let (a, b) = linear_fit(&u, &v);
    table.slope = Some(b);
    table.intercept = Some(a);
    Ok(table)
}

/// Mean endpoint and worst pathwise `|exact − scheme|` on `n_paths` paths of
/// `n_steps` steps; truncated paths are left out of both.
#[allow(clippy::too_many_arguments)]
pub fn endpoint_error(
    problem: &dyn Coefficients,
    fam: &Family,
    x0: f64,
    scheme: Scheme,
    seed: u64,
    n_paths: u64,
    t1: f64,
    n_steps: usize,
) -> Result<ErrorReport> {
    let per_path: Vec<Option<(f64, f64)>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, f64)>> {
            let w = wiener_path(seed, i, 0.0, t1, n_steps)?;
            let e = exact_family(fam, x0, &w)?;
            let s = run_scheme(scheme, problem, fam, x0, &w)?;
            if e.is_truncated() || s.is_truncated() {
                return Ok(None);
            }
            let max = e
                .states
                .iter()
                .zip(&s.states)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(Some(((e.states[n_steps] - s.states[n_steps]).abs(), max)))
        })
        .collect::<Result<_>>()?;
    let used: Vec<(f64, f64)> = per_path.into_iter().flatten().collect();
    let n = used.len();
    Ok(ErrorReport {
        endpoint_abs_error: if n == 0 { f64::NAN } else { used.iter().map(|p| p.0).sum::<f64>() / n as f64 },
        max_abs_error: used.iter().map(|p| p.1).fold(0.0, f64::max),
        dt: t1 / n_steps as f64,
        n_paths: n,
    })
}
