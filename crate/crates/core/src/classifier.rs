//! Detection of the symmetric families and construction of their symmetries.
//!
//! Autonomous problems are classified on the unit-noise drift `F(y)` sampled
//! on a grid: constant (A), affine (B), constant plus exponential (C), tested
//! in that order. Time-dependent drifts with constant noise are classified by
//! the `x`-structure of `f` on an `(x, t)` grid instead.

use crate::exprlang::Expr;
use crate::model::{
    build, Case, CaseParams, ClassificationResult, Coefficients, Detected, DriftSpec, NoiseSpec, Omega, Phi,
    SdeProblem, Symmetry,
};
use crate::numeric::{diff, linear_fit};
use crate::transforms::standard_form;
use crate::{Error, Result};

/// Tolerance for drifts given as a family.
pub const FAMILY_TOL: f64 = 1e-8;
/// Tolerance for drifts given as expressions.
pub const EXPRESSION_TOL: f64 = 1e-6;
/// Floor for tests that go through second-derivative stencils.
pub const STENCIL_TOL: f64 = 1e-6;
/// Smallest difference accepted by the exponential-ratio estimator.
pub const MIN_DIFFERENCE: f64 = 1e-10;
pub const MIN_GRID: usize = 6;
pub const DEFAULT_GRID_POINTS: usize = 40;

/// Validates `params` for `case` and returns the family drift.
pub fn construct_drift(case: Case, params: &CaseParams, noise: NoiseSpec) -> Result<DriftSpec> {
    params.resolve(case, noise)?;
    Ok(DriftSpec::family(case, params.clone()))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * (i as f64 / (n - 1) as f64))
        .collect()
}

/// Uniform `y` grid over the image of `x ∈ [0.7, 2.5]` (simple noise) or
/// `x ∈ [−2, 2]` (constant noise), in increasing order.
pub fn default_grid(noise: NoiseSpec, n: usize) -> Vec<f64> {
    let (a, b) = match noise {
        NoiseSpec::SimplePower { .. } => (noise.g(0.7), noise.g(2.5)),
        NoiseSpec::Constant { .. } => (noise.g(-2.0), noise.g(2.0)),
    };
    linspace(a.min(b), a.max(b), n)
}

fn default_tol(problem: &SdeProblem) -> f64 {
    match problem.drift {
        DriftSpec::Family { .. } => FAMILY_TOL,
        DriftSpec::Expression { .. } => EXPRESSION_TOL,
    }
}

pub fn classify(problem: &SdeProblem, grid: Option<&[f64]>, tol: Option<f64>) -> Result<ClassificationResult> {
    let tol = tol.unwrap_or_else(|| default_tol(problem));
    problem.family()?;
    if !problem.autonomous {
        return match problem.noise {
            NoiseSpec::Constant { .. } => classify_time_dependent(problem, tol),
            NoiseSpec::SimplePower { .. } => Err(Error::Unsupported(
                "time-dependent drifts are classified for constant noise only".into(),
            )),
        };
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_grid(problem.noise, DEFAULT_GRID_POINTS);
            &owned
        }
    };
    if grid.len() < MIN_GRID {
        return Err(Error::GridTooSmall(grid.len()));
    }
    let sf = standard_form(problem)?;
    let mut values = Vec::with_capacity(grid.len());
    for &y in grid {
        let v = sf.drift(y, 0.0)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("F({y}) = {v}")));
        }
        values.push(v);
    }
    let Some((case, fit, residual)) = fit_unit_drift(grid, &values, tol) else {
        return Ok(unclassified(residual_of_best_effort(grid, &values)));
    };
    let params = from_unit_params(case, fit, problem.noise);
    finish(case, params, residual, problem.noise)
}

fn unclassified(residual: f64) -> ClassificationResult {
    ClassificationResult {
        case: Detected::Unclassified,
        params: CaseParams::default(),
        residual,
        symmetry: None,
        notices: vec![],
    }
}

fn finish(case: Case, params: CaseParams, residual: f64, noise: NoiseSpec) -> Result<ClassificationResult> {
    let mut result = ClassificationResult {
        case: case.into(),
        params,
        residual,
        symmetry: None,
        notices: vec![],
    };
    if case == Case::A {
        result
            .notices
            .push("arbitrary function P not given; using the identity P(u) = u".into());
    }
    result.symmetry = Some(build_symmetry(&result, noise, None)?);
    Ok(result)
}

/// Unit-noise parameters `(a, b, β)` of `F(y)`.
#[derive(Clone, Copy, Debug)]
struct UnitFit {
    a: f64,
    b: f64,
    beta: f64,
}

fn max_deviation(values: &[f64], model: impl Fn(usize) -> f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - model(i)).abs())
        .fold(0.0, f64::max)
}

fn residual_of_best_effort(grid: &[f64], values: &[f64]) -> f64 {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let (a, b) = linear_fit(grid, values);
    max_deviation(values, |i| a + b * grid[i]) / scale
}

fn fit_unit_drift(grid: &[f64], values: &[f64], tol: f64) -> Option<(Case, UnitFit, f64)> {
    let n = values.len() as f64;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mean = values.iter().sum::<f64>() / n;
    let dev = max_deviation(values, |_| mean) / scale;
    if dev <= tol {
        return Some((Case::A, UnitFit { a: mean, b: 0.0, beta: 0.0 }, dev));
    }
    let (a, b) = linear_fit(grid, values);
    let dev = max_deviation(values, |i| a + b * grid[i]) / scale;
    if dev <= tol {
        return Some((Case::B, UnitFit { a, b, beta: 0.0 }, dev));
    }
    let beta = exponential_rate(grid, values)?;
    let basis: Vec<f64> = grid.iter().map(|y| (beta * y).exp()).collect();
    let (a, b) = linear_fit(&basis, values);
    let dev = max_deviation(values, |i| a + b * basis[i]) / scale;
    (dev <= tol && b != 0.0).then_some((Case::C, UnitFit { a, b, beta }, dev))
}

/// `β = ln(ρ)/Δ` from the mean ratio `ρ` of successive differences on a
/// uniform grid.
fn exponential_rate(grid: &[f64], values: &[f64]) -> Option<f64> {
    let n = grid.len();
    let delta = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    if delta == 0.0
        || grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - delta).abs() > 1e-6 * delta.abs())
    {
        return None;
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if d.iter().any(|v| v.abs() <= MIN_DIFFERENCE) {
        return None;
    }
    let ratios: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
    let rho = ratios.iter().sum::<f64>() / ratios.len() as f64;
    if rho.is_nan() || rho <= 0.0 || rho == 1.0 {
        return None;
    }
    let beta = rho.ln() / delta;
    beta.is_finite().then_some(beta)
}

/// Undoes the unit-noise normalisation: `c = s·c_F`; case B `c1 = c1_F/(1−k)`;
/// case C `c1 = s·c1_F`, `β = β_F/(s(1−k))`.
fn from_unit_params(case: Case, fit: UnitFit, noise: NoiseSpec) -> CaseParams {
    let (s, k) = (noise.s(), noise.k());
    match case {
        Case::A => CaseParams::a_case(s * fit.a),
        Case::B => CaseParams::b_case(s * fit.a, fit.b / (1.0 - k)),
        Case::C => CaseParams::c_case(s * fit.a, s * fit.b, fit.beta / (s * (1.0 - k))),
    }
}

fn classify_time_dependent(problem: &SdeProblem, tol: f64) -> Result<ClassificationResult> {
    let tol = tol.max(STENCIL_TOL);
    let d = problem.domain;
    let xs: Vec<f64> = if d.lo == f64::NEG_INFINITY && d.hi == f64::INFINITY {
        linspace(-2.0, 2.0, 9)
    } else {
        d.samples(9)
    };
    let ts = linspace(0.0, 1.0, 5);
    let mut f = Vec::new();
    let mut fx = Vec::new();
    let mut fxx = Vec::new();
    for &t in &ts {
        for &x in &xs {
            let v = problem.drift(x, t)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("f({x}, {t}) = {v}")));
            }
            f.push(v);
            fx.push(problem.drift_x(x, t)?);
            fxx.push(diff::second(|v| problem.drift(v, t), x, diff::step(diff::SECOND_STEP, x))?);
        }
    }
    let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let expr = problem.drift_expr()?;
    let (p, q) = reference_points(&xs);
    let at = |x: f64| expr.substitute("x", &Expr::num(x));

    let candidate = if max_abs(&fx) <= tol * scale {
        Some((Case::A, CaseParams {
            a: Some(at(p)),
            ..Default::default()
        }))
    } else if max_abs(&fxx) <= tol * scale {
        let b = build::mul(Expr::num(1.0 / (q - p)), build::sub(at(q), at(p)));
        let a = build::sub(at(p), build::mul(Expr::num(p), b.clone()));
        Some((Case::B, CaseParams {
            a: Some(a),
            b: Some(b),
            ..Default::default()
        }))
    } else if fx.iter().all(|v| v.abs() > MIN_DIFFERENCE) {
        let ratio: Vec<f64> = fxx.iter().zip(&fx).map(|(a, b)| a / b).collect();
        let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
        let spread = ratio.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - ratio.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if spread <= tol * (1.0 + mean.abs()) && mean != 0.0 {
            let beta = mean;
            let (ep, eq) = ((beta * p).exp(), (beta * q).exp());
            let b = build::mul(Expr::num(1.0 / (eq - ep)), build::sub(at(q), at(p)));
            let a = build::sub(at(p), build::mul(Expr::num(ep), b.clone()));
            Some((Case::C, CaseParams {
                a: Some(a),
                b: Some(b),
                beta: Some(beta),
                ..Default::default()
            }))
        } else {
            None
        }
    } else {
        None
    };
    let Some((case, params)) = candidate else {
        return Ok(unclassified(max_abs(&fxx) / scale));
    };
    // confirm on the whole grid; catches the stencil accepting a near-miss
    let family = match params.resolve(case, problem.noise) {
        Ok(fam) => fam,
        Err(_) => return Ok(unclassified(f64::INFINITY)),
    };
    let mut residual = 0.0f64;
    for (j, &t) in ts.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            residual = residual.max((family.drift(x, t)? - f[j * xs.len() + i]).abs() / scale);
        }
    }
    if residual > tol {
        return Ok(unclassified(residual));
    }
    finish(case, params, residual, problem.noise)
}

/// `(0, 1)` when both lie on the grid's span, else its first two interior points.
fn reference_points(xs: &[f64]) -> (f64, f64) {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if lo <= 0.0 && hi >= 1.0 {
        (0.0, 1.0)
    } else {
        (xs[1], xs[2])
    }
}

/// The standard symmetry of a classified result. For case A, `p` is the
/// arbitrary function in the variable `u` (identity when absent).
pub fn build_symmetry(result: &ClassificationResult, noise: NoiseSpec, p: Option<Expr>) -> Result<Symmetry> {
    let case = result
        .case
        .case()
        .ok_or_else(|| Error::InvalidParams("cannot build a symmetry for an unclassified drift".into()))?;
    if let Some(p) = &p {
        if let Some(bad) = p.variables().into_iter().find(|v| v != "u") {
            return Err(Error::InvalidParams(format!(
                "the arbitrary function must depend on u only, found `{bad}`"
            )));
        }
    }
    Ok(result.params.resolve(case, noise)?.symmetry(p))
}

/// Strict proper W-symmetry `ω ∂x + r w ∂w` for constant noise, cases A and B.
pub fn build_w_symmetry(case: Case, params: &CaseParams, r: f64, noise: NoiseSpec, gamma: f64) -> Result<Symmetry> {
    if !noise.is_constant() {
        return Err(Error::NoWSymmetry(
            "W-symmetries exist only for constant noise".into(),
        ));
    }
    if r == 0.0 || !r.is_finite() {
        return Err(Error::InvalidParams("a W-symmetry needs r != 0".into()));
    }
    let family = params.resolve(case, noise)?;
    let omega = match case {
        Case::A => Omega::A {
            r,
            shift: family.a.clone(),
        },
        Case::B => {
            if family.is_autonomous() {
                Omega::BAutonomous {
                    r,
                    c0: family.a.as_constant().unwrap_or(0.0),
                    c1: family.b.as_constant().unwrap_or(0.0),
                    gamma,
                }
            } else {
                Omega::BGeneral {
                    r,
                    gamma,
                    a: family.a.clone(),
                    b: family.b.clone(),
                }
            }
        }
        Case::C => {
            return Err(Error::NoWSymmetry(
                "case C admits no proper W-symmetry".into(),
            ))
        }
    };
    Ok(Symmetry {
        phi: Phi::Omega(omega),
        r,
        case: Some(case),
        arbitrary_function: None,
    })
}

/// Runs [`classify`] and, when the problem is a family, fails loudly if the
/// detected case disagrees.
pub fn classify_checked(problem: &SdeProblem) -> Result<ClassificationResult> {
    let result = classify(problem, None, None)?;
    if let (Ok(Some(fam)), Some(found)) = (problem.family(), result.case.case()) {
        if fam.case != found {
            return Err(Error::InvalidParams(format!(
                "family {} classified as {found}",
                fam.case
            )));
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determining::{probe_points, residual_summary};

    fn unit(values: impl Fn(f64) -> f64, grid: &[f64]) -> Option<(Case, UnitFit, f64)> {
        let v: Vec<f64> = grid.iter().map(|&y| values(y)).collect();
        fit_unit_drift(grid, &v, 1e-8)
    }

    #[test]
    fn family_drift_examples() {
        let noise = NoiseSpec::simple(1.0, 2.0);
        let p = SdeProblem::new(construct_drift(Case::A, &CaseParams::a_case(3.0), noise).unwrap(), noise);
        assert!((p.drift(1.5, 0.0).unwrap() - (3.0 * 2.25 + 3.375)).abs() < 1e-12);
        let p = SdeProblem::new(construct_drift(Case::B, &CaseParams::b_case(0.0, 1.0), noise).unwrap(), noise);
        assert!((p.drift(1.5, 0.0).unwrap() - (1.5 + 3.375)).abs() < 1e-12);
        let c = NoiseSpec::constant(0.7);
        let p = SdeProblem::new(construct_drift(Case::A, &CaseParams::a_case(0.0), c).unwrap(), c);
        assert_eq!(p.drift(4.0, 1.0).unwrap(), 0.0);
        assert!(construct_drift(Case::B, &CaseParams::b_case(1.0, 0.0), noise).is_err());
    }

    #[test]
    fn unit_drift_shapes() {
        let grid = linspace(-1.0, 1.0, 20);
        let (case, fit, _) = unit(|_| 3.0, &grid).unwrap();
        assert_eq!(case, Case::A);
        assert_eq!(fit.a, 3.0);
        let (case, fit, _) = unit(|y| 1.0 + 2.0 * y, &grid).unwrap();
        assert_eq!(case, Case::B);
        assert!((fit.a - 1.0).abs() < 1e-12 && (fit.b - 2.0).abs() < 1e-12);

        let grid = linspace(0.5, 1.5, 11);
        let (case, fit, _) = unit(|y| 1.0 + 0.5 * (-y).exp(), &grid).unwrap();
        assert_eq!(case, Case::C);
        assert!((fit.beta + 1.0).abs() < 1e-9, "{fit:?}");
        assert!((fit.a - 1.0).abs() < 1e-9 && (fit.b - 0.5).abs() < 1e-9);
        assert!(unit(|y| y * y, &grid).is_none());
    }

    #[test]
    fn small_grid_is_rejected() {
        let p = SdeProblem::new(DriftSpec::parse("1").unwrap(), NoiseSpec::constant(1.0));
        assert!(matches!(classify(&p, Some(&[0.0, 1.0, 2.0]), None), Err(Error::GridTooSmall(3))));
    }

    #[test]
    fn quadratic_drift_is_unclassified() {
        let p = SdeProblem::new(DriftSpec::parse("x^2").unwrap(), NoiseSpec::constant(1.0));
        let r = classify(&p, None, None).unwrap();
        assert_eq!(r.case, Detected::Unclassified);
        assert!(r.symmetry.is_none());
    }

    #[test]
    fn constant_before_affine() {
        let p = SdeProblem::new(DriftSpec::parse("2 + 0*x").unwrap(), NoiseSpec::constant(1.0));
        assert_eq!(classify(&p, None, None).unwrap().case, Detected::A);
    }

    #[test]
    fn recovers_simple_noise_families() {
        let noise = NoiseSpec::simple(0.8, 3.0);
        for (case, params) in [
            (Case::A, CaseParams::a_case(-1.3)),
            (Case::B, CaseParams::b_case(0.4, -1.1)),
            (Case::C, CaseParams::c_case(0.4, -1.1, 0.7)),
        ] {
            let p = SdeProblem::from_family(case, params.clone(), noise);
            let r = classify(&p, None, None).unwrap();
            assert_eq!(r.case, Detected::from(case));
            for (got, want) in [(r.params.c, params.c), (r.params.c0, params.c0), (r.params.c1, params.c1), (r.params.beta, params.beta)] {
                match (got, want) {
                    (Some(g), Some(w)) => assert!((g - w).abs() < 1e-6, "{case}: {g} vs {w}"),
                    (g, None) => assert!(g.is_none() || g == Some(0.0)),
                    (None, Some(w)) => assert_eq!(w, 0.0),
                }
            }
            let sym = r.symmetry.unwrap();
            let s = residual_summary(&p, &sym, &probe_points(1, 30)).unwrap();
            assert!(s.max() <= 1e-6, "{case}: {s:?}");
        }
    }

    #[test]
    fn symmetry_examples() {
        let r = classify(&SdeProblem::from_family(Case::B, CaseParams::b_case(0.0, 2.0), NoiseSpec::constant(1.0)), None, None).unwrap();
        let s = r.symmetry.unwrap();
        assert!((s.eval(0.3, 0.4, 0.9).unwrap() - 0.8f64.exp()).abs() < 1e-9);

        let r = classify(&SdeProblem::from_family(Case::C, CaseParams::c_case(1.0, 1.0, 0.5), NoiseSpec::constant(1.0)), None, None).unwrap();
        let s = r.symmetry.unwrap();
        let (x, t, w) = (0.3, 0.4, -0.2);
        assert!((s.eval(x, t, w).unwrap() - (0.5 * (x - w - t)).exp()).abs() < 1e-9);

        let a = ClassificationResult {
            case: Detected::A,
            params: CaseParams::a_case(3.0),
            residual: 0.0,
            symmetry: None,
            notices: vec![],
        };
        let s = build_symmetry(&a, NoiseSpec::simple(1.0, 2.0), None).unwrap();
        let (x, t, w) = (1.7, 0.3, 0.25);
        assert!((s.eval(x, t, w).unwrap() - x * x * (-1.0 / x - w - 3.0 * t)).abs() < 1e-12);
    }

    #[test]
    fn w_symmetry_examples() {
        let c = NoiseSpec::constant(1.0);
        let s = build_w_symmetry(Case::A, &CaseParams::a_case(2.0), 1.0, c, 0.0).unwrap();
        assert_eq!(s.eval(1.0, 0.25, 0.0).unwrap(), 0.5);
        let s = build_w_symmetry(Case::B, &CaseParams::b_case(1.0, -1.0), 1.0, c, 0.0).unwrap();
        assert_eq!(s.eval(3.0, 0.6, 0.0).unwrap(), 2.0);
        assert!(matches!(
            build_w_symmetry(Case::C, &CaseParams::c_case(1.0, 1.0, 1.0), 1.0, c, 0.0),
            Err(Error::NoWSymmetry(_))
        ));
    }

    #[test]
    fn time_dependent_constant_noise() {
        let c = NoiseSpec::constant(1.0);
        for (src, want) in [("sin(t)", Detected::A), ("t + exp(t)*x", Detected::B), ("t + cos(t)*exp(0.5*x)", Detected::C)] {
            let p = SdeProblem::new(DriftSpec::parse(src).unwrap(), c);
            let r = classify(&p, None, None).unwrap();
            assert_eq!(r.case, want, "{src}");
            let s = residual_summary(&p, &r.symmetry.unwrap(), &probe_points(2, 20)).unwrap();
            assert!(s.max() <= 1e-6, "{src}: {s:?}");
        }
        let p = SdeProblem::new(DriftSpec::parse("t*x^2").unwrap(), c);
        assert_eq!(classify(&p, None, None).unwrap().case, Detected::Unclassified);
        let p = SdeProblem::new(DriftSpec::parse("t*x").unwrap(), NoiseSpec::simple(1.0, 2.0));
        assert!(matches!(classify(&p, None, None), Err(Error::Unsupported(_))));
    }
}
