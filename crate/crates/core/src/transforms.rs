//! Changes of variables: unit-noise standard form, the Kozlov map and reduced
//! coefficients, and transformation of equations and symmetries under `x̃ = g(x,t)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exprlang::Expr;
use crate::model::{build, Case, Coefficients, Domain, NoiseSpec, Phi, SdeProblem, Symmetry};
use crate::numeric::{diff, quad};
use crate::{DriftSpec, Error, Result};

/// The unit-noise image `dy = F(y,t) dt + dw` of a problem under `y = g(x)`.
#[derive(Clone, Debug)]
pub struct StandardForm {
    pub source: SdeProblem,
}

pub fn standard_form(problem: &SdeProblem) -> Result<StandardForm> {
    let s = problem.noise.s();
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InvalidParams("s must be nonzero".into()));
    }
    if problem.noise.k() == 1.0 {
        return Err(Error::Unsupported("k = 1 out of scope".into()));
    }
    Ok(StandardForm {
        source: problem.clone(),
    })
}

impl StandardForm {
    pub fn noise(&self) -> NoiseSpec {
        self.source.noise
    }

    pub fn g(&self, x: f64) -> f64 {
        self.source.noise.g(x)
    }

    pub fn xi(&self, y: f64) -> Result<f64> {
        let x = self.source.noise.xi(y)?;
        if !self.source.domain.contains(x) {
            return Err(Error::Domain(format!(
                "xi({y}) = {x} lies outside the problem domain"
            )));
        }
        Ok(x)
    }

    /// `F(y,t) = f(ξ)/σ(ξ) − σ'(ξ)/2`.
    pub fn drift(&self, y: f64, t: f64) -> Result<f64> {
        let x = self.xi(y)?;
        let n = self.source.noise;
        Ok(self.source.drift(x, t)? / n.sigma(x) - 0.5 * n.sigma_x(x))
    }

    /// Image of the problem domain under `g`.
    pub fn image_domain(&self) -> Domain {
        let d = self.source.domain;
        let (a, b) = (self.end_image(d.lo), self.end_image(d.hi));
        Domain::new(a.min(b), a.max(b))
    }

    fn end_image(&self, x: f64) -> f64 {
        let n = self.source.noise;
        match n {
            NoiseSpec::Constant { s } => x / s,
            NoiseSpec::SimplePower { s, k } => {
                let e = 1.0 - k;
                let p = if x.is_infinite() {
                    if e > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    x.powf(e)
                };
                p / (s * e)
            }
        }
    }
}

/// A time-dependent change of variables `x̃ = g(x,t)` with known inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum CoordinateMap {
    /// `g(x) = scale·x + shift`
    Affine { scale: f64, shift: f64 },
    /// `forward` over `x, t`; `inverse` over `y, t`.
    Expression { forward: Expr, inverse: Expr },
}

impl CoordinateMap {
    pub fn identity() -> Self {
        CoordinateMap::Affine {
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn affine(scale: f64, shift: f64) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() || !shift.is_finite() {
            return Err(Error::NonInvertible(format!(
                "affine map with scale {scale} and shift {shift}"
            )));
        }
        Ok(CoordinateMap::Affine { scale, shift })
    }

    /// Checks `inverse(forward(x)) = x` and `g_x ≠ 0` at sample points of `domain`.
    pub fn expression(forward: Expr, inverse: Expr, domain: Domain) -> Result<Self> {
        let map = CoordinateMap::Expression { forward, inverse };
        for x in domain.samples(12) {
            for t in [0.0, 0.5, 1.0] {
                let gx = map.g_x(x, t)?;
                if gx == 0.0 || !gx.is_finite() {
                    return Err(Error::NonInvertible(format!("g_x = {gx} at x = {x}, t = {t}")));
                }
                let back = map.inverse(map.forward(x, t)?, t)?;
                if (back - x).abs() > 1e-9 * x.abs().max(1.0) {
                    return Err(Error::NonInvertible(format!(
                        "inverse(g({x})) = {back} at t = {t}"
                    )));
                }
            }
        }
        Ok(map)
    }

    pub fn forward(&self, x: f64, t: f64) -> Result<f64> {
        match self {
            CoordinateMap::Affine { scale, shift } => Ok(scale * x + shift),
            CoordinateMap::Expression { forward, .. } => Ok(forward.eval_vars(&[("x", x), ("t", t)])?),
        }
    }

    pub fn inverse(&self, y: f64, t: f64) -> Result<f64> {
        match self {
            CoordinateMap::Affine { scale, shift } => Ok((y - shift) / scale),
            CoordinateMap::Expression { inverse, .. } => Ok(inverse.eval_vars(&[("y", y), ("t", t)])?),
        }
    }

    fn partial(&self, var: &str, second: Option<&str>, x: f64, t: f64) -> Result<f64> {
        match self {
            CoordinateMap::Affine { scale, .. } => Ok(match (var, second) {
                ("x", None) => *scale,
                _ => 0.0,
            }),
            CoordinateMap::Expression { forward, .. } => {
                let mut d = forward.derivative(var);
                if let Some(v) = second {
                    d = d.derivative(v);
                }
                Ok(d.eval_vars(&[("x", x), ("t", t)])?)
            }
        }
    }

    pub fn g_x(&self, x: f64, t: f64) -> Result<f64> {
        self.partial("x", None, x, t)
    }

    pub fn g_xx(&self, x: f64, t: f64) -> Result<f64> {
        self.partial("x", Some("x"), x, t)
    }

    pub fn g_t(&self, x: f64, t: f64) -> Result<f64> {
        self.partial("t", None, x, t)
    }

    pub fn g_x_expr(&self) -> Option<Expr> {
        match self {
            CoordinateMap::Affine { scale, .. } => Some(Expr::num(*scale)),
            CoordinateMap::Expression { forward, .. } => Some(forward.derivative("x")),
        }
    }

    /// Inverse as an expression over `y` and `t`.
    pub fn inverse_expr(&self) -> Option<Expr> {
        match self {
            CoordinateMap::Affine { scale, shift } => Some(build::mul(
                Expr::num(1.0 / scale),
                build::sub(Expr::var("y"), Expr::num(*shift)),
            )),
            CoordinateMap::Expression { inverse, .. } => Some(inverse.clone()),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, CoordinateMap::Affine { .. })
    }
}

/// `dx̃ = f̃ dt + σ̃ dw` with `f̃ = g_t + f·g_x + ½σ²g_xx` and `σ̃ = σ·g_x`,
/// both composed with the inverse map.
#[derive(Clone)]
pub struct TransformedSde {
    pub source: Arc<dyn Coefficients>,
    pub map: CoordinateMap,
    domain: Domain,
}

impl std::fmt::Debug for TransformedSde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformedSde")
            .field("map", &self.map)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl TransformedSde {
    pub fn new(source: Arc<dyn Coefficients>, map: CoordinateMap) -> Result<Self> {
        let d = source.domain();
        for x in d.samples(12) {
            let gx = map.g_x(x, 0.0)?;
            if gx == 0.0 || !gx.is_finite() {
                return Err(Error::NonInvertible(format!("g_x = {gx} at x = {x}")));
            }
        }
        let sign = map.g_x(d.anchor(), 0.0)?.signum();
        let end = |x: f64, toward: f64| -> Result<f64> {
            if x.is_finite() {
                return map.forward(x, 0.0);
            }
            // Probe outward; a settled value is a finite limit.
            let vals: Vec<f64> = (1..=6)
                .map(|j| map.forward(toward * 10f64.powi(j), 0.0))
                .collect::<Result<_>>()
                .unwrap_or_default();
            match vals.as_slice() {
                [.., p, q] if q.is_finite() && (q - p).abs() <= 1e-12 * q.abs().max(1.0) => Ok(*q),
                _ => Ok(toward * sign * f64::INFINITY),
            }
        };
        let (a, b) = (end(d.lo, -1.0)?, end(d.hi, 1.0)?);
        Ok(TransformedSde {
            source,
            map,
            domain: Domain::new(a.min(b), a.max(b)),
        })
    }

    /// The transformed equation as an [`SdeProblem`], when its noise is still
    /// constant or simple (affine maps only).
    pub fn to_problem(&self, original: &SdeProblem) -> Option<SdeProblem> {
        let CoordinateMap::Affine { scale, shift } = self.map else {
            return None;
        };
        let noise = match original.noise {
            NoiseSpec::Constant { s } => NoiseSpec::constant(s * scale),
            NoiseSpec::SimplePower { s, k } if shift == 0.0 && scale > 0.0 => {
                NoiseSpec::simple(s * scale.powf(1.0 - k), k)
            }
            _ => return None,
        };
        let f = original.drift_expr().ok()?;
        let back = self.map.inverse_expr()?.substitute("y", &Expr::var("x"));
        let drift = build::mul(Expr::num(scale), f.substitute("x", &back));
        let mut p = SdeProblem::with_domain(DriftSpec::expression(drift), noise, self.domain);
        p.autonomous = original.autonomous;
        Some(p)
    }
}

impl Coefficients for TransformedSde {
    fn drift(&self, y: f64, t: f64) -> Result<f64> {
        let x = self.map.inverse(y, t)?;
        let s = self.source.noise(x, t)?;
        Ok(self.map.g_t(x, t)?
            + self.source.drift(x, t)? * self.map.g_x(x, t)?
            + 0.5 * s * s * self.map.g_xx(x, t)?)
    }

    fn noise(&self, y: f64, t: f64) -> Result<f64> {
        let x = self.map.inverse(y, t)?;
        Ok(self.source.noise(x, t)? * self.map.g_x(x, t)?)
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

pub fn transform_sde(problem: &SdeProblem, map: &CoordinateMap) -> Result<TransformedSde> {
    TransformedSde::new(Arc::new(problem.clone()), map.clone())
}

/// `φ̃(x̃) = g_x·φ` composed with the inverse map. The second value is a
/// warning when a W-symmetry is carried through a map that makes the noise
/// non-constant; such symmetries are not preserved.
pub fn transform_symmetry(
    symmetry: &Symmetry,
    map: &CoordinateMap,
    source: &dyn Coefficients,
) -> Result<(Symmetry, Option<String>)> {
    let mut warning = None;
    if symmetry.r != 0.0 {
        let d = source.domain();
        for x in d.samples(8) {
            let (gxx, sx) = (map.g_xx(x, 0.0)?, source.noise_x(x, 0.0)?);
            if gxx.abs() > 1e-12 || sx.abs() > 1e-12 {
                warning = Some(format!(
                    "W-symmetry (r = {}) carried through a map with non-constant transformed noise; \
                     it is preserved only when the noise derivative vanishes",
                    symmetry.r
                ));
                break;
            }
        }
    }
    let phi = Phi::Transformed {
        inner: Box::new(symmetry.phi.clone()),
        map: map.clone(),
    };
    Ok((
        Symmetry {
            phi,
            r: symmetry.r,
            case: symmetry.case,
            arbitrary_function: symmetry.arbitrary_function.clone(),
        },
        warning,
    ))
}

/// `y = ∫_{x0}^{x} dx'/φ(x',t;w)`, closed form for recognised families.
#[derive(Clone, Debug)]
pub struct KozlovMap {
    pub symmetry: Symmetry,
    pub anchor: f64,
    pub domain: Domain,
}

pub fn kozlov_map(symmetry: &Symmetry, anchor: Option<f64>, domain: Domain) -> Result<KozlovMap> {
    if symmetry.r != 0.0 {
        return Err(Error::Unsupported(
            "the Kozlov map is built from standard (r = 0) symmetries".into(),
        ));
    }
    let anchor = anchor.unwrap_or_else(|| domain.anchor());
    if !domain.contains(anchor) {
        return Err(Error::Domain(format!("anchor {anchor} outside the domain")));
    }
    Ok(KozlovMap {
        symmetry: symmetry.clone(),
        anchor,
        domain,
    })
}

enum Closed {
    /// `y = e^{-(1-k)T}·(G(x) − G(x0))`
    B { growth: f64 },
    /// `y = −(e^{−λ(G−c)} − e^{−λ(G0−c)})/λ` with `λ = β(1−k)`
    C { lambda: f64, c: f64 },
    /// `y = ln|(G − c)/(G0 − c)|`, case A with `P = id`
    ALog { c: f64 },
}

impl KozlovMap {
    fn phi(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        self.symmetry.eval(x, t, w)
    }

    fn closed(&self, t: f64, w: f64) -> Result<Option<(Closed, NoiseSpec)>> {
        let Phi::Family(fp) = &self.symmetry.phi else {
            return Ok(None);
        };
        let k = fp.noise.k();
        let shift = fp.shift.primitive_at(t)?;
        let c = fp.noise.s() * w + shift;
        let closed = match fp.case {
            Case::B => Closed::B {
                growth: ((1.0 - k) * shift).exp(),
            },
            Case::C => Closed::C {
                lambda: fp.beta * (1.0 - k),
                c,
            },
            Case::A => match &fp.p {
                None => Closed::ALog { c },
                Some(Expr::Var(v)) if v == "u" => Closed::ALog { c },
                _ => return Ok(None),
            },
        };
        Ok(Some((closed, fp.noise)))
    }

    pub fn y(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!("x = {x} outside the domain")));
        }
        let x0 = self.anchor;
        if let Some((closed, noise)) = self.closed(t, w)? {
            let (g, g0) = (
                noise.primitive_of_inverse_power(x),
                noise.primitive_of_inverse_power(x0),
            );
            return match closed {
                Closed::B { growth } => Ok((g - g0) / growth),
                Closed::C { lambda, c } => {
                    Ok(((-lambda * (g0 - c)).exp() - (-lambda * (g - c)).exp()) / lambda)
                }
                Closed::ALog { c } => {
                    let (a, b) = (g - c, g0 - c);
                    if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                        return Err(Error::SingularMap { x: self.root_between(x0, x, t, w)? });
                    }
                    Ok((a / b).ln())
                }
            };
        }
        self.quadrature(x, t, w)
    }

    fn root_between(&self, a: f64, b: f64, t: f64, w: f64) -> Result<f64> {
        Ok(crate::numeric::bisect(|x| self.phi(x, t, w), a, b, 1e-14)?.unwrap_or(b))
    }

    fn quadrature(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        let x0 = self.anchor;
        let p0 = self.phi(x0, t, w)?;
        if p0 == 0.0 {
            return Err(Error::SingularMap { x: x0 });
        }
        let mut prev = x0;
        for i in 1..=64 {
            let xi = x0 + (x - x0) * i as f64 / 64.0;
            let p = self.phi(xi, t, w)?;
            if p == 0.0 || p.signum() != p0.signum() {
                return Err(Error::SingularMap {
                    x: self.root_between(prev, xi, t, w)?,
                });
            }
            prev = xi;
        }
        let q = quad::integrate(
            |v| -> Result<f64> {
                let p = self.phi(v, t, w)?;
                if p == 0.0 {
                    Err(Error::SingularMap { x: v })
                } else {
                    Ok(1.0 / p)
                }
            },
            x0,
            x,
            1e-12,
            1e-13,
        )?;
        Ok(q.value)
    }

    pub fn inverse(&self, y: f64, t: f64, w: f64) -> Result<f64> {
        let x0 = self.anchor;
        if let Some((closed, noise)) = self.closed(t, w)? {
            let g0 = noise.primitive_of_inverse_power(x0);
            let gval = match closed {
                Closed::B { growth } => Some(g0 + y * growth),
                Closed::C { lambda, c } => {
                    let arg = (-lambda * (g0 - c)).exp() - lambda * y;
                    if arg <= 0.0 {
                        return Err(Error::Domain(format!("y = {y} outside the image of the Kozlov map")));
                    }
                    Some(c - arg.ln() / lambda)
                }
                Closed::ALog { c } => Some(c + (g0 - c) * y.exp()),
            };
            if let Some(gv) = gval {
                let x = match noise {
                    NoiseSpec::Constant { .. } => gv,
                    NoiseSpec::SimplePower { k, .. } => {
                        let base = (1.0 - k) * gv;
                        if base <= 0.0 {
                            return Err(Error::Domain(format!(
                                "y = {y} outside the image of the Kozlov map"
                            )));
                        }
                        base.powf(1.0 / (1.0 - k))
                    }
                };
                if !self.domain.contains(x) {
                    return Err(Error::Domain(format!("inverse {x} outside the domain")));
                }
                return Ok(x);
            }
        }
        self.solve(y, t, w)
    }

    /// Newton on `y(x) − target` (derivative `1/φ`), staying inside the domain,
    /// with a bisection fallback once a bracket is found.
    fn solve(&self, target: f64, t: f64, w: f64) -> Result<f64> {
        let tol = 1e-13 * target.abs().max(1.0);
        let mut x = self.anchor;
        let mut hx = self.y(x, t, w)? - target;
        let mut bracket: Option<(f64, f64)> = None;
        for _ in 0..100 {
            if hx.abs() <= tol {
                return Ok(x);
            }
            let mut step = -hx * self.phi(x, t, w)?;
            let mut next = x + step;
            while !self.domain.contains(next) {
                step *= 0.5;
                next = x + step;
                if step.abs() < 1e-300 {
                    break;
                }
            }
            let hn = self.y(next, t, w)? - target;
            if hn.signum() != hx.signum() {
                bracket = Some((x, next));
            }
            if hn.abs() >= hx.abs() {
                break;
            }
            x = next;
            hx = hn;
        }
        if hx.abs() <= tol {
            return Ok(x);
        }
        let (a, b) = bracket.ok_or_else(|| {
            Error::Domain(format!("y = {target} outside the image of the Kozlov map"))
        })?;
        let root = crate::numeric::bisect(|v| Ok::<_, Error>(self.y(v, t, w)? - target), a, b, 1e-15)?;
        root.ok_or_else(|| Error::Domain(format!("no preimage for y = {target}")))
    }
}

/// Reduced drift `F` and noise `S` of the Kozlov image at fixed `(t, w)`,
/// evaluated at two probe values of `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReducedCoefficients {
    pub t: f64,
    pub w: f64,
    pub drift: f64,
    pub noise: f64,
    pub drift_probes: [f64; 2],
    pub noise_probes: [f64; 2],
}

/// Tolerance for y-independence of the reduced coefficients.
pub const Y_INDEPENDENCE_TOL: f64 = 1e-6;

/// `F = Y_t + f/φ + ½(Y_ww + 2σY_xw + σ²Y_xx)` and `S = Y_w + σ/φ`, with
/// `Y_t`, `Y_w`, `Y_ww` as anchored quadratures and `Y_xw`, `Y_xx` local.
pub fn reduced_coefficients(
    problem: &dyn Coefficients,
    kmap: &KozlovMap,
    t: f64,
    w: f64,
    y_probe: [f64; 2],
) -> Result<ReducedCoefficients> {
    let mut drift = [0.0; 2];
    let mut noise = [0.0; 2];
    for (i, &y) in y_probe.iter().enumerate() {
        let x = kmap.inverse(y, t, w)?;
        let (f, s) = reduced_at(problem, kmap, x, t, w)?;
        drift[i] = f;
        noise[i] = s;
    }
    for (which, v) in [("F", drift), ("S", noise)] {
        if (v[0] - v[1]).abs() > Y_INDEPENDENCE_TOL * v[0].abs().max(v[1].abs()).max(1.0) {
            return Err(Error::YDependence {
                which,
                first: v[0],
                second: v[1],
            });
        }
    }
    Ok(ReducedCoefficients {
        t,
        w,
        drift: drift[0],
        noise: noise[0],
        drift_probes: drift,
        noise_probes: noise,
    })
}

fn reduced_at(
    problem: &dyn Coefficients,
    kmap: &KozlovMap,
    x: f64,
    t: f64,
    w: f64,
) -> Result<(f64, f64)> {
    let phi = |x: f64, t: f64, w: f64| kmap.phi(x, t, w);
    let deterministic = kmap.symmetry.is_deterministic();
    let phi_t = |v: f64| diff::first(|tt| phi(v, tt, w), t, diff::step(diff::FIRST_STEP, t));
    let phi_w = |v: f64| -> Result<f64> {
        if deterministic {
            Ok(0.0)
        } else {
            diff::first(|ww| phi(v, t, ww), w, diff::step(diff::FIRST_STEP, w))
        }
    };
    let phi_ww = |v: f64| -> Result<f64> {
        if deterministic {
            Ok(0.0)
        } else {
            diff::second(|ww| phi(v, t, ww), w, diff::step(diff::SECOND_STEP, w))
        }
    };
    // The integrands carry finite-difference noise near 1e-10; asking for
    // more only exhausts the panel budget.
    let integral = |g: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        Ok(quad::integrate(g, kmap.anchor, x, 1e-9, 1e-9)?.value)
    };
    let y_t = -integral(&|v| {
        let p = phi(v, t, w)?;
        Ok(phi_t(v)? / (p * p))
    })?;
    let (y_w, y_ww) = if deterministic {
        (0.0, 0.0)
    } else {
        let y_w = -integral(&|v| {
            let p = phi(v, t, w)?;
            Ok(phi_w(v)? / (p * p))
        })?;
        let y_ww = integral(&|v| {
            let p = phi(v, t, w)?;
            let pw = phi_w(v)?;
            Ok(2.0 * pw * pw / (p * p * p) - phi_ww(v)? / (p * p))
        })?;
        (y_w, y_ww)
    };
    let p = phi(x, t, w)?;
    if p == 0.0 {
        return Err(Error::SingularMap { x });
    }
    let p_x = diff::first(|v| phi(v, t, w), x, diff::step(diff::FIRST_STEP, x))?;
    let y_xw = -phi_w(x)? / (p * p);
    let y_xx = -p_x / (p * p);
    let f = problem.drift(x, t)?;
    let s = problem.noise(x, t)?;
    let drift = y_t + f / p + 0.5 * (y_ww + 2.0 * s * y_xw + s * s * y_xx);
    let noise = y_w + s / p;
    if !drift.is_finite() || !noise.is_finite() {
        return Err(Error::NonFinite(format!("reduced coefficients at x = {x}")));
    }
    Ok((drift, noise))
}
