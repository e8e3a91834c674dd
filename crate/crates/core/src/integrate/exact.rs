//! Exact pathwise solutions of the symmetric families.
//!
//! Constant noise, with `T(t) = ∫_{t0}^t` of the relevant coefficient:
//!
//! * A: `x = x0 + A(t) + s(w − w0)`
//! * B: `x = e^{B(t)} [x0 + ∫ a e^{−B} dτ + s ∫ e^{−B} dw]`, the `dw` integral
//!   as a left-point (Itô) sum on the grid
//! * C: with `z = x − s(w − w0) − A(t)`, `e^{−βz} = e^{−βx0} − β ∫ b e^{β(s(w−w0) + A)} dτ`;
//!   the path blows up when the right-hand side reaches 0
//!
//! Simple noise maps `x0` to `y0 = g(x0)`, integrates the unit-noise family on
//! the same path and maps back through `ξ`.

use crate::model::{Case, Family, Method, NoiseSpec, SolutionPath, TimeFunction, WienerPath};
use crate::numeric::quad;
use crate::{Error, Result};

/// `∫_{t0}^{τ}` of a time coefficient, by closed form or per-interval quadrature.
struct Primitive<'a> {
    tf: &'a TimeFunction,
    closed: bool,
    base: f64,
    grid: Vec<f64>,
}

impl<'a> Primitive<'a> {
    fn new(tf: &'a TimeFunction, times: &[f64]) -> Result<Self> {
        let closed = tf.as_constant().is_some() || tf.primitive.is_some();
        let t0 = times[0];
        let mut grid = Vec::with_capacity(times.len());
        let base = if closed { tf.primitive_at(t0)? } else { 0.0 };
        if closed {
            for &t in times {
                grid.push(tf.primitive_at(t)? - base);
            }
        } else {
            let mut acc = 0.0;
            grid.push(0.0);
            for w in times.windows(2) {
                acc += quad::integrate_default(|s| tf.at(s), w[0], w[1])?.value;
                grid.push(acc);
            }
        }
        Ok(Primitive { tf, closed, base, grid })
    }

    /// Value at `tau ∈ [times[i], times[i+1]]`.
    fn at(&self, tau: f64, i: usize, times: &[f64]) -> Result<f64> {
        if self.closed {
            Ok(self.tf.primitive_at(tau)? - self.base)
        } else {
            Ok(self.grid[i] + quad::integrate_default(|s| self.tf.at(s), times[i], tau)?.value)
        }
    }
}

fn require_constant(fam: &Family, case: Case) -> Result<f64> {
    if fam.case != case {
        return Err(Error::InvalidParams(format!(
            "expected a case {case} family, got case {}",
            fam.case
        )));
    }
    match fam.noise {
        NoiseSpec::Constant { s } => Ok(s),
        _ => Err(Error::Unsupported(
            "this integrator takes constant noise; use exact_simple_noise".into(),
        )),
    }
}

fn check_x0(x0: f64) -> Result<()> {
    if x0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("initial state {x0} is not finite")))
    }
}

fn complete(path: &WienerPath, states: Vec<f64>, method: Method) -> SolutionPath {
    SolutionPath {
        times: path.times.clone(),
        states,
        method,
        truncated_at: None,
        exit_time: None,
    }
}

pub fn exact_case_a(fam: &Family, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    let s = require_constant(fam, Case::A)?;
    check_x0(x0)?;
    let a = Primitive::new(&fam.a, &path.times)?;
    let w0 = path.values[0];
    let states = (0..path.len())
        .map(|i| x0 + a.grid[i] + s * (path.values[i] - w0))
        .collect();
    Ok(complete(path, states, Method::ExactA))
}

pub fn exact_case_b(fam: &Family, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    let s = require_constant(fam, Case::B)?;
    check_x0(x0)?;
    let times = &path.times;
    let b = Primitive::new(&fam.b, times)?;
    let mut states = Vec::with_capacity(path.len());
    let mut y = x0;
    states.push(x0);
    for i in 0..path.steps() {
        let drift = quad::integrate_default(
            |tau| -> Result<f64> { Ok(fam.a.at(tau)? * (-b.at(tau, i, times)?).exp()) },
            times[i],
            times[i + 1],
        )?
        .value;
        y += drift + s * (-b.grid[i]).exp() * (path.values[i + 1] - path.values[i]);
        states.push(b.grid[i + 1].exp() * y);
    }
    Ok(complete(path, states, Method::ExactB))
}

pub fn exact_case_c(fam: &Family, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    let s = require_constant(fam, Case::C)?;
    check_x0(x0)?;
    let beta = fam.beta;
    let times = &path.times;
    let a = Primitive::new(&fam.a, times)?;
    let w0 = path.values[0];
    let mut arg = (-beta * x0).exp();
    if !arg.is_finite() {
        return Err(Error::NonFinite(format!("exp(-beta x0) for x0 = {x0}")));
    }
    let mut states = Vec::with_capacity(path.len());
    states.push(x0);
    for i in 0..path.steps() {
        let (ta, tb) = (times[i], times[i + 1]);
        let (wa, wb) = (path.values[i], path.values[i + 1]);
        let w_at = |tau: f64| wa + (wb - wa) * (tau - ta) / (tb - ta);
        let integral = quad::integrate_default(
            |tau| -> Result<f64> {
                Ok(fam.b.at(tau)? * (beta * (s * (w_at(tau) - w0) + a.at(tau, i, times)?)).exp())
            },
            ta,
            tb,
        )?
        .value;
        let next = arg - beta * integral;
        let x = -next.ln() / beta + s * (wb - w0) + a.grid[i + 1];
        if next.is_nan() || next <= 0.0 || !x.is_finite() {
            let exit = if next.is_finite() && arg > next {
                Some(ta + (tb - ta) * arg / (arg - next))
            } else {
                None
            };
            return Ok(SolutionPath {
                times: times.clone(),
                states,
                method: Method::ExactC,
                truncated_at: Some(i + 1),
                exit_time: exit,
            });
        }
        arg = next;
        states.push(x);
    }
    Ok(complete(path, states, Method::ExactC))
}

/// Unit-noise image, exact integration there, and `x = ξ(y)` back. Truncates
/// at the first `y` outside the image of `g`.
pub fn exact_simple_noise(fam: &Family, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    let NoiseSpec::SimplePower { s, k } = fam.noise else {
        return Err(Error::InvalidParams("exact_simple_noise needs simple noise".into()));
    };
    if x0.is_nan() || x0 <= 0.0 || !x0.is_finite() {
        return Err(Error::Domain(format!("initial state {x0} outside x > 0")));
    }
    let unit = fam.standard_form();
    let y0 = fam.noise.g(x0);
    let ypath = exact_family(&unit, y0, path)?;
    let orient = s * (1.0 - k);
    let mut states = Vec::with_capacity(ypath.states.len());
    for (i, &y) in ypath.states.iter().enumerate() {
        match fam.noise.xi(y) {
            Ok(x) if x.is_finite() && x > 0.0 => states.push(x),
            _ => {
                let exit = (i > 0).then(|| {
                    let (ya, yb) = (orient * ypath.states[i - 1], orient * y);
                    let (ta, tb) = (path.times[i - 1], path.times[i]);
                    ta + (tb - ta) * ya / (ya - yb)
                });
                return Ok(SolutionPath {
                    times: path.times.clone(),
                    states,
                    method: ypath.method,
                    truncated_at: Some(i),
                    exit_time: exit,
                });
            }
        }
    }
    Ok(SolutionPath {
        times: path.times.clone(),
        states,
        method: ypath.method,
        truncated_at: ypath.truncated_at,
        exit_time: ypath.exit_time,
    })
}

/// Dispatches on case and noise kind.
pub fn exact_family(fam: &Family, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    match (fam.noise, fam.case) {
        (NoiseSpec::SimplePower { .. }, _) => exact_simple_noise(fam, x0, path),
        (_, Case::A) => exact_case_a(fam, x0, path),
        (_, Case::B) => exact_case_b(fam, x0, path),
        (_, Case::C) => exact_case_c(fam, x0, path),
    }
}
