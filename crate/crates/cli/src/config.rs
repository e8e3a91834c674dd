//! The run configuration: an `SdeProblem` document plus per-command settings.

use std::path::Path;

use itosym::integrate::{PathKind, Scheme};
use itosym::SdeProblem;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SymmetryConfig {
    /// Explicit `φ(x, t, w)`; classified when absent.
    pub phi: Option<String>,
    #[serde(default)]
    pub r: f64,
    /// Integration constant of the W-symmetry.
    #[serde(default)]
    pub gamma: f64,
    /// Arbitrary function `P(u)` for case A.
    pub p: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawConfig {
    drift: Value,
    noise: Value,
    domain: Option<Value>,
    autonomous: Option<bool>,
    symmetry: Option<SymmetryConfig>,
    x0: Option<f64>,
    t1: Option<f64>,
    dt: Option<f64>,
    paths: Option<u64>,
    levels: Option<u32>,
    base_steps: Option<usize>,
    points: Option<usize>,
    scheme: Option<Scheme>,
    path_kind: Option<PathKind>,
}

#[derive(Debug)]
pub struct Config {
    pub problem: SdeProblem,
    pub symmetry: SymmetryConfig,
    pub x0: Option<f64>,
    pub t1: f64,
    pub dt: Option<f64>,
    pub paths: Option<u64>,
    pub levels: Option<u32>,
    pub base_steps: Option<usize>,
    pub points: Option<usize>,
    pub scheme: Option<Scheme>,
    pub path_kind: PathKind,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, Failure> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Failure::config(format!("invalid config: {e}")))?;
        let mut doc = Map::new();
        doc.insert("drift".into(), raw.drift);
        doc.insert("noise".into(), raw.noise);
        if let Some(d) = raw.domain {
            doc.insert("domain".into(), d);
        }
        if let Some(a) = raw.autonomous {
            doc.insert("autonomous".into(), Value::Bool(a));
        }
        let problem: SdeProblem = serde_json::from_value(Value::Object(doc))
            .map_err(|e| Failure::config(format!("invalid problem: {e}")))?;
        let violations = itosym::model::validate(&problem);
        if !violations.is_empty() {
            return Err(Failure::config(violations.join("; ")));
        }
        let t1 = raw.t1.unwrap_or(1.0);
        if !(t1 > 0.0 && t1.is_finite()) {
            return Err(Failure::config(format!("t1 must be positive, got {t1}")));
        }
        Ok(Config {
            problem,
            symmetry: raw.symmetry.unwrap_or_default(),
            x0: raw.x0,
            t1,
            dt: raw.dt,
            paths: raw.paths,
            levels: raw.levels,
            base_steps: raw.base_steps,
            points: raw.points,
            scheme: raw.scheme,
            path_kind: raw.path_kind.unwrap_or(PathKind::Brownian),
        })
    }

    /// Initial state; the domain anchor when unset.
    pub fn x0(&self) -> Result<f64, Failure> {
        let x0 = self.x0.unwrap_or_else(|| self.problem.domain.anchor());
        if !self.problem.domain.contains(x0) {
            return Err(Failure::config(format!("x0 = {x0} outside the domain")));
        }
        Ok(x0)
    }
}
