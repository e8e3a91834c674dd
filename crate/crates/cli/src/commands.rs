use std::fs;
use std::io::BufWriter;
use std::path::Path;

use itosym::classifier::{build_symmetry, build_w_symmetry, classify};
use itosym::determining::{
    first_order_residual, ito_type_criterion, probe_points, residual_summary, w_obstruction, Point,
};
use itosym::integrate::{
    convergence_study, euler_maruyama, exact_family, milstein, wiener_path, write_csv, ConvergenceConfig, Scheme,
};
use itosym::model::Family;
use itosym::{ClassificationResult, Detected, Error, Expr, SdeProblem, SolutionPath, Symmetry};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Config;
use crate::failure::{Failure, ALL_TRUNCATED, UNCLASSIFIED};

/// A finished report and the exit code to leave with.
pub struct Outcome {
    pub report: Value,
    pub code: u8,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, code: 0 }
    }
}

fn classification_json(result: &ClassificationResult) -> Value {
    json!({
        "case": match result.case {
            Detected::Unclassified => "Unclassified".to_string(),
            d => d.case().map(|c| c.to_string()).unwrap_or_default(),
        },
        "params": result.params,
        "residual": result.residual,
        "symmetry": result.symmetry.as_ref().map(|s| s.phi.to_string()),
        "notices": result.notices,
    })
}

pub fn classify_cmd(cfg: &Config) -> Result<Outcome, Failure> {
    let result = classify(&cfg.problem, None, None)?;
    let code = if result.case == Detected::Unclassified { UNCLASSIFIED } else { 0 };
    Ok(Outcome { report: classification_json(&result), code })
}

fn parse_p(cfg: &Config) -> Result<Option<Expr>, Failure> {
    cfg.symmetry
        .p
        .as_deref()
        .map(|src| itosym::exprlang::parse_any(src).map_err(|e| Failure::config(format!("P: {e}"))))
        .transpose()
}

/// The explicit symmetry of the config, else the one of the classified case.
fn resolve_symmetry(cfg: &Config, notices: &mut Vec<String>) -> Result<(Symmetry, Option<ClassificationResult>), Failure> {
    let sc = &cfg.symmetry;
    if let Some(src) = &sc.phi {
        let phi = itosym::exprlang::parse_any(src).map_err(|e| Failure::config(format!("phi: {e}")))?;
        if let Some(bad) = phi.variables().into_iter().find(|v| !matches!(v.as_str(), "x" | "t" | "w" | "pi" | "e")) {
            return Err(Failure::config(format!("phi may use x, t and w only, found `{bad}`")));
        }
        return Ok((Symmetry::from_expr(phi, sc.r), None));
    }
    let result = classify(&cfg.problem, None, None)?;
    let Some(case) = result.case.case() else {
        return Err(Failure {
            code: UNCLASSIFIED,
            message: "drift is unclassified; supply an explicit symmetry".into(),
        });
    };
    let noise = cfg.problem.noise;
    let sym = if sc.r == 0.0 {
        build_symmetry(&result, noise, parse_p(cfg)?)?
    } else {
        match build_w_symmetry(case, &result.params, sc.r, noise, sc.gamma) {
            Ok(s) => s,
            Err(Error::NoWSymmetry(why)) => {
                notices.push(format!("{why}; checking the standard symmetry with r = {}", sc.r));
                let mut s = build_symmetry(&result, noise, parse_p(cfg)?)?;
                s.r = sc.r;
                s
            }
            Err(e) => return Err(e.into()),
        }
    };
    Ok((sym, Some(result)))
}

pub fn symmetry_cmd(cfg: &Config) -> Result<Outcome, Failure> {
    let mut notices = Vec::new();
    let (sym, result) = resolve_symmetry(cfg, &mut notices)?;
    Ok(Outcome::ok(json!({
        "case": sym.case.map(|c| c.to_string()),
        "phi": sym.phi.to_string(),
        "r": sym.r,
        "deterministic": sym.is_deterministic(),
        "arbitraryFunction": sym.arbitrary_function.as_ref().map(|p| p.to_string()),
        "classification": result.as_ref().map(classification_json),
        "notices": notices,
    })))
}

fn is_trivial(sym: &Symmetry, points: &[Point]) -> bool {
    points
        .iter()
        .all(|p| matches!(sym.eval(p.x, p.t, p.w), Ok(v) if v == 0.0))
}

pub fn verify_cmd(cfg: &Config, n_points: usize, seed: u64) -> Result<Outcome, Failure> {
    if n_points == 0 {
        return Err(Failure::config("need at least one probe point"));
    }
    let mut notices = Vec::new();
    let (sym, _) = resolve_symmetry(cfg, &mut notices)?;
    let problem = &cfg.problem;
    let domain = problem.domain;
    let points: Vec<Point> = probe_points(seed, n_points)
        .into_iter()
        .filter(|p| domain.contains(p.x))
        .collect();
    if points.is_empty() {
        return Err(Failure::config("no probe point falls inside the domain"));
    }
    if is_trivial(&sym, &points) {
        return Err(Failure::config("trivial symmetry: phi vanishes identically"));
    }
    let summary = residual_summary(problem, &sym, &points)?;

    let mut first_max: Option<f64> = None;
    let mut first_used = 0usize;
    for p in &points {
        let fo = first_order_residual(problem, &sym, *p)?;
        if fo.precondition_met {
            first_used += 1;
            first_max = Some(first_max.unwrap_or(0.0).max(fo.scaled()));
        }
    }

    let criterion = if sym.r == 0.0 {
        let mut worst = 0.0f64;
        let mut ok = true;
        for p in points.iter().filter(|p| p.w.abs() <= 1.0) {
            match ito_type_criterion(problem, &sym, *p) {
                Ok(v) => worst = worst.max(v.abs()),
                Err(e) => {
                    notices.push(format!("Ito-type criterion not evaluated: {e}"));
                    ok = false;
                    break;
                }
            }
        }
        ok.then_some(worst)
    } else {
        None
    };

    let anchor = domain.anchor();
    Ok(Outcome::ok(json!({
        "phi": sym.phi.to_string(),
        "r": sym.r,
        "points": summary.points,
        "maxR1": summary.max_r1,
        "maxR2": summary.max_r2,
        "meanR1": summary.mean_r1,
        "meanR2": summary.mean_r2,
        "maxResidual": summary.max(),
        "firstOrder": { "max": first_max, "points": first_used },
        "itoCriterion": criterion,
        "wObstruction": { "x": anchor, "value": w_obstruction(problem.noise, sym.r, anchor) },
        "notices": notices,
    })))
}

/// The exact family behind the problem: its own, or the classified one.
fn family_of(problem: &SdeProblem) -> Result<Family, Failure> {
    if let Some(f) = problem.family()? {
        return Ok(f.clone());
    }
    let result = classify(problem, None, None)?;
    let Some(case) = result.case.case() else {
        return Err(Failure {
            code: UNCLASSIFIED,
            message: "drift is unclassified; no exact solution available".into(),
        });
    };
    Ok(result.params.resolve(case, problem.noise)?)
}

fn run(scheme: Scheme, problem: &SdeProblem, fam: &Family, x0: f64, w: &itosym::WienerPath) -> itosym::Result<SolutionPath> {
    match scheme {
        Scheme::EulerMaruyama => euler_maruyama(problem, x0, w),
        Scheme::Milstein => milstein(problem, x0, w),
        Scheme::Exact => exact_family(fam, x0, w),
    }
}

fn endpoint_stats(paths: &[&SolutionPath]) -> Value {
    let ends: Vec<f64> = paths.iter().filter_map(|p| p.endpoint()).collect();
    let exits: Vec<f64> = paths.iter().filter_map(|p| p.exit_time).collect();
    let n = ends.len() as f64;
    let mean = (!ends.is_empty()).then(|| ends.iter().sum::<f64>() / n);
    let std = mean.filter(|_| ends.len() > 1).map(|m| {
        (ends.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    json!({
        "completed": ends.len(),
        "truncated": paths.len() - ends.len(),
        "truncatedFraction": (paths.len() - ends.len()) as f64 / paths.len() as f64,
        "meanExitTime": (!exits.is_empty()).then(|| exits.iter().sum::<f64>() / exits.len() as f64),
        "endpointMean": mean,
        "endpointStd": std,
    })
}

pub struct IntegrateArgs<'a> {
    pub seed: u64,
    pub paths: u64,
    pub dt: f64,
    pub scheme: Scheme,
    pub out: Option<&'a Path>,
    pub gnuplot: bool,
}

pub fn integrate_cmd(cfg: &Config, args: &IntegrateArgs) -> Result<Outcome, Failure> {
    let t1 = cfg.t1;
    if !(args.dt > 0.0 && args.dt.is_finite()) || args.dt > t1 {
        return Err(Failure::config(format!("dt = {} must lie in (0, T = {t1}]", args.dt)));
    }
    if args.paths == 0 {
        return Err(Failure::config("need at least one path"));
    }
    let x0 = cfg.x0()?;
    let fam = family_of(&cfg.problem)?;
    let n = (t1 / args.dt).round().max(1.0) as usize;
    let runs: Vec<_> = (0..args.paths)
        .into_par_iter()
        .map(|i| -> itosym::Result<_> {
            let w = wiener_path(args.seed, i, 0.0, t1, n)?;
            let exact = exact_family(&fam, x0, &w)?;
            let approx = run(args.scheme, &cfg.problem, &fam, x0, &w)?;
            Ok((w, exact, approx))
        })
        .collect::<itosym::Result<_>>()?;

    if let Some(dir) = args.out {
        fs::create_dir_all(dir)?;
        for (i, (w, exact, approx)) in runs.iter().enumerate() {
            let mut f = BufWriter::new(fs::File::create(dir.join(format!("path_{i:04}.csv")))?);
            write_csv(&mut f, w, exact, approx)?;
        }
        if args.gnuplot {
            fs::write(dir.join("paths.gp"), gnuplot_script(runs.len()))?;
        }
    }

    let mut abs_err = Vec::new();
    let mut max_err = 0.0f64;
    for (_, e, s) in &runs {
        if let (Some(a), Some(b)) = (e.endpoint(), s.endpoint()) {
            abs_err.push((a - b).abs());
            for (u, v) in e.states.iter().zip(&s.states) {
                max_err = max_err.max((u - v).abs());
            }
        }
    }
    let exact: Vec<&SolutionPath> = runs.iter().map(|r| &r.1).collect();
    let approx: Vec<&SolutionPath> = runs.iter().map(|r| &r.2).collect();
    let report = json!({
        "family": fam.case.to_string(),
        "scheme": args.scheme,
        "paths": args.paths,
        "steps": n,
        "dt": t1 / n as f64,
        "t1": t1,
        "x0": x0,
        "seed": args.seed,
        "exact": endpoint_stats(&exact),
        "numerical": endpoint_stats(&approx),
        "meanEndpointAbsError": (!abs_err.is_empty()).then(|| abs_err.iter().sum::<f64>() / abs_err.len() as f64),
        "maxAbsError": (!abs_err.is_empty()).then_some(max_err),
    });
    let all_truncated = exact.iter().all(|p| p.is_truncated());
    let mut report = report;
    if fam.case == itosym::Case::C {
        let blown = exact.iter().filter(|p| p.is_truncated()).count();
        report["blowUpFraction"] = (blown as f64 / exact.len() as f64).into();
    }
    Ok(Outcome {
        report,
        code: if all_truncated { ALL_TRUNCATED } else { 0 },
    })
}

fn gnuplot_script(n: usize) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key off\nset xlabel 't'\nset ylabel 'x'\nplot \\\n",
    );
    let lines: Vec<String> = (0..n)
        .map(|i| {
            format!(
                "  'path_{i:04}.csv' every ::1 using 1:3 with lines lc 1, \
                 'path_{i:04}.csv' every ::1 using 1:4 with lines lc 2 dt 2"
            )
        })
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}

pub fn convergence_cmd(cfg: &Config, seed: u64, levels: u32, paths: u64) -> Result<Outcome, Failure> {
    let fam = family_of(&cfg.problem)?;
    let study = ConvergenceConfig {
        x0: cfg.x0()?,
        t0: 0.0,
        t1: cfg.t1,
        base_steps: cfg.base_steps.unwrap_or(16),
        levels,
        n_paths: paths,
        seed,
        scheme: cfg.scheme.unwrap_or(Scheme::EulerMaruyama),
        path_kind: cfg.path_kind,
        reference_levels: 4,
    };
    let table = convergence_study(&cfg.problem, &fam, &study)?;
    let code = if table.paths_used == 0 { ALL_TRUNCATED } else { 0 };
    Ok(Outcome {
        report: json!({
            "family": fam.case.to_string(),
            "config": study,
            "rows": table.rows,
            "slope": table.slope,
            "intercept": table.intercept,
            "pathsUsed": table.paths_used,
            "truncated": table.truncated,
        }),
        code,
    })
}
