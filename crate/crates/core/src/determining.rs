//! Numerical checks against the determining equations
//!
//! ```text
//! R1 = φ_t + f φ_x − φ f_x + ½Δφ,   Δφ = φ_ww + 2σ φ_xw + σ² φ_xx
//! R2 = φ_w + σ φ_x − φ σ_x − r σ
//! ```
//!
//! Residuals are reported raw and scaled by `max(1, Σ|terms|)`, so that a
//! cancellation of large terms is judged relative to their size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::exprlang::Expr;
use crate::model::{Coefficients, NoiseSpec, Symmetry};
use crate::numeric::diff;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub t: f64,
    pub w: f64,
}

impl Point {
    pub fn new(x: f64, t: f64, w: f64) -> Self {
        Point { x, t, w }
    }
}

/// Seeded probe points, uniform on `x ∈ [0.5, 3]`, `t ∈ [0, 1]`, `w ∈ [−1, 1]`.
pub fn probe_points(seed: u64, n: usize) -> Vec<Point> {
    probe_points_in(seed, n, (0.5, 3.0))
}

/// As [`probe_points`] with a custom `x` window.
pub fn probe_points_in(seed: u64, n: usize, x: (f64, f64)) -> Vec<Point> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Point {
            x: rng.random_range(x.0..=x.1),
            t: rng.random_range(0.0..=1.0),
            w: rng.random_range(-1.0..=1.0),
        })
        .collect()
}

/// `Δφ = φ_ww + 2σφ_xw + σ²φ_xx`.
pub fn ito_laplacian(
    phi: &dyn Fn(f64, f64, f64) -> Result<f64>,
    sigma: &dyn Fn(f64, f64) -> Result<f64>,
    p: Point,
) -> Result<f64> {
    let d = Derivatives::of(phi, p)?;
    let s = sigma(p.x, p.t)?;
    Ok(d.ww + 2.0 * s * d.xw + s * s * d.xx)
}

#[derive(Clone, Copy, Debug, Default)]
struct Derivatives {
    value: f64,
    t: f64,
    x: f64,
    w: f64,
    ww: f64,
    xw: f64,
    xx: f64,
}

impl Derivatives {
    fn of(phi: &dyn Fn(f64, f64, f64) -> Result<f64>, p: Point) -> Result<Self> {
        let Point { x, t, w } = p;
        let h1 = |v: f64| diff::step(diff::FIRST_STEP, v);
        let h2 = |v: f64| diff::step(diff::SECOND_STEP, v);
        Ok(Derivatives {
            value: phi(x, t, w)?,
            t: diff::first(|v| phi(x, v, w), t, h1(t))?,
            x: diff::first(|v| phi(v, t, w), x, h1(x))?,
            w: diff::first(|v| phi(x, t, v), w, h1(w))?,
            ww: diff::second(|v| phi(x, t, v), w, h2(w))?,
            xw: diff::mixed(|a, b| phi(a, t, b), x, w, h2(x), h2(w))?,
            xx: diff::second(|v| phi(v, t, w), x, h2(x))?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub r1: f64,
    pub r2: f64,
    /// `Σ|terms|` of each equation.
    pub r1_terms: f64,
    pub r2_terms: f64,
}

impl Residuals {
    pub fn scaled_r1(&self) -> f64 {
        self.r1.abs() / self.r1_terms.max(1.0)
    }

    pub fn scaled_r2(&self) -> f64 {
        self.r2.abs() / self.r2_terms.max(1.0)
    }

    pub fn scaled_max(&self) -> f64 {
        self.scaled_r1().max(self.scaled_r2())
    }
}

fn phi_fn(sym: &Symmetry) -> impl Fn(f64, f64, f64) -> Result<f64> + '_ {
    move |x, t, w| sym.eval(x, t, w)
}

pub fn residuals(problem: &dyn Coefficients, sym: &Symmetry, p: Point) -> Result<Residuals> {
    let phi = phi_fn(sym);
    let d = Derivatives::of(&phi, p)?;
    let f = problem.drift(p.x, p.t)?;
    let f_x = problem.drift_x(p.x, p.t)?;
    let s = problem.noise(p.x, p.t)?;
    let s_x = problem.noise_x(p.x, p.t)?;
    let lap = [d.ww, 2.0 * s * d.xw, s * s * d.xx];
    let t1 = [d.t, f * d.x, -d.value * f_x, 0.5 * lap[0], 0.5 * lap[1], 0.5 * lap[2]];
    let t2 = [d.w, s * d.x, -d.value * s_x, -sym.r * s];
    let out = Residuals {
        r1: t1.iter().sum(),
        r2: t2.iter().sum(),
        r1_terms: t1.iter().map(|v| v.abs()).sum(),
        r2_terms: t2.iter().map(|v| v.abs()).sum(),
    };
    if !(out.r1.is_finite() && out.r2.is_finite()) {
        return Err(Error::NonFinite(format!("residuals at {p:?}")));
    }
    Ok(out)
}

/// Worst and mean scaled residuals over a batch of points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResidualSummary {
    pub max_r1: f64,
    pub max_r2: f64,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub points: usize,
}

impl ResidualSummary {
    pub fn max(&self) -> f64 {
        self.max_r1.max(self.max_r2)
    }
}

pub fn residual_summary(problem: &dyn Coefficients, sym: &Symmetry, points: &[Point]) -> Result<ResidualSummary> {
    let mut s = ResidualSummary::default();
    for &p in points {
        let r = residuals(problem, sym, p)?;
        s.max_r1 = s.max_r1.max(r.scaled_r1());
        s.max_r2 = s.max_r2.max(r.scaled_r2());
        s.mean_r1 += r.scaled_r1();
        s.mean_r2 += r.scaled_r2();
    }
    s.points = points.len();
    if !points.is_empty() {
        s.mean_r1 /= points.len() as f64;
        s.mean_r2 /= points.len() as f64;
    }
    Ok(s)
}

/// Threshold on the scaled `R2` above which the first-order form is not
/// equivalent to `R1`.
pub const R2_PRECONDITION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FirstOrder {
    pub value: f64,
    pub terms: f64,
    /// False when `R2` at the point exceeds [`R2_PRECONDITION`].
    pub precondition_met: bool,
}

impl FirstOrder {
    pub fn scaled(&self) -> f64 {
        self.value.abs() / self.terms.max(1.0)
    }
}

/// `φ_t + Fφ_x − F_xφ + rσσ_x` with `F = f − ½σσ_x`.
pub fn first_order_residual(problem: &dyn Coefficients, sym: &Symmetry, p: Point) -> Result<FirstOrder> {
    let phi = phi_fn(sym);
    let Point { x, t, w } = p;
    let value = phi(x, t, w)?;
    let phi_t = diff::first(|v| phi(x, v, w), t, diff::step(diff::FIRST_STEP, t))?;
    let phi_x = diff::first(|v| phi(v, t, w), x, diff::step(diff::FIRST_STEP, x))?;
    let big_f = |v: f64| -> Result<f64> {
        Ok(problem.drift(v, t)? - 0.5 * problem.noise(v, t)? * problem.noise_x(v, t)?)
    };
    let f = big_f(x)?;
    let f_x = diff::first(big_f, x, diff::step(diff::FIRST_STEP, x))?;
    let s = problem.noise(x, t)?;
    let s_x = problem.noise_x(x, t)?;
    let terms = [phi_t, f * phi_x, -f_x * value, sym.r * s * s_x];
    let r2 = residuals(problem, sym, p)?;
    Ok(FirstOrder {
        value: terms.iter().sum(),
        terms: terms.iter().map(|v| v.abs()).sum(),
        precondition_met: r2.scaled_r2() <= R2_PRECONDITION,
    })
}

/// The coefficient `k·s²·r·x^(2k−1)` that must vanish for a W-symmetry of a
/// simple-noise equation; zero for constant noise.
pub fn w_obstruction(noise: NoiseSpec, r: f64, x: f64) -> f64 {
    match noise {
        NoiseSpec::Constant { .. } => 0.0,
        NoiseSpec::SimplePower { s, k } => k * s * s * r * x.powf(2.0 * k - 1.0),
    }
}

/// Least-squares `r` for the candidate `φ = φ_std − r·x/(k−1)`, which solves
/// `R2` for every `r`. `R1` is affine in `r`, `R1 = a + r·b`, so the fit is
/// `r* = −Σab / Σb²`.
pub fn w_candidate_fit(problem: &dyn Coefficients, standard: &Symmetry, noise: NoiseSpec, points: &[Point]) -> Result<f64> {
    let k = noise.k();
    if noise.is_constant() || k == 1.0 {
        return Err(Error::Unsupported("the W-obstruction fit needs simple noise with k != 1".into()));
    }
    let psi = Symmetry::from_expr(
        crate::model::build::mul(Expr::num(-1.0 / (k - 1.0)), Expr::var("x")),
        0.0,
    );
    let (mut sab, mut sbb) = (0.0, 0.0);
    for &p in points {
        let a = residuals(problem, standard, p)?.r1;
        let b = residuals(problem, &psi, p)?.r1;
        sab += a * b;
        sbb += b * b;
    }
    if sbb == 0.0 {
        return Err(Error::DegenerateFit(0.0));
    }
    Ok(-sab / sbb)
}

/// `σγ_t + σ_tγ − fγ_w − ½(σγ_ww + σ²γ_xw)` with `γ = ∂_w(1/φ)`. Zero means
/// the Kozlov image of the equation is again of Itô type. Deterministic `φ`
/// gives exactly zero.
pub fn ito_type_criterion(problem: &dyn Coefficients, sym: &Symmetry, p: Point) -> Result<f64> {
    if sym.r != 0.0 {
        return Err(Error::InvalidParams("the criterion applies to standard (r = 0) symmetries".into()));
    }
    let Point { x, t, w } = p;
    if sym.eval(x, t, w)? == 0.0 {
        return Err(Error::SingularMap { x });
    }
    if sym.is_deterministic() {
        return Ok(0.0);
    }
    let h = |v: f64| diff::step(diff::SECOND_STEP, v);
    let gamma = |x: f64, t: f64, w: f64| -> Result<f64> {
        diff::first(|v| Ok::<_, Error>(1.0 / sym.eval(x, t, v)?), w, h(w))
    };
    let g = gamma(x, t, w)?;
    let g_t = diff::first(|v| gamma(x, v, w), t, h(t))?;
    let g_w = diff::first(|v| gamma(x, t, v), w, h(w))?;
    let g_ww = diff::second(|v| gamma(x, t, v), w, h(w))?;
    let g_xw = diff::mixed(|a, b| gamma(a, t, b), x, w, h(x), h(w))?;
    let f = problem.drift(x, t)?;
    let s = problem.noise(x, t)?;
    let s_t = problem.noise_t(x, t)?;
    Ok(s * g_t + s_t * g - f * g_w - 0.5 * (s * g_ww + s * s * g_xw))
}
