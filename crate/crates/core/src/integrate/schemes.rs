//! Euler-Maruyama and Milstein on a given Wiener path.

use crate::model::{Coefficients, Method, SolutionPath, WienerPath};
use crate::Result;

fn run(
    problem: &dyn Coefficients,
    x0: f64,
    path: &WienerPath,
    method: Method,
    step: impl Fn(f64, f64, f64, f64) -> Result<f64>,
) -> Result<SolutionPath> {
    let domain = problem.domain();
    let mut states = Vec::with_capacity(path.len());
    let mut truncated_at = None;
    if x0.is_finite() && domain.contains(x0) {
        states.push(x0);
        let mut x = x0;
        for i in 0..path.steps() {
            let dt = path.times[i + 1] - path.times[i];
            let dw = path.values[i + 1] - path.values[i];
            // an evaluation failure past the domain edge is a truncation, not an error
            let next = match step(x, path.times[i], dt, dw) {
                Ok(v) => v,
                Err(_) if !domain.contains(x) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !next.is_finite() || !domain.contains(next) {
                truncated_at = Some(i + 1);
                break;
            }
            states.push(next);
            x = next;
        }
    } else {
        truncated_at = Some(0);
    }
    Ok(SolutionPath {
        times: path.times.clone(),
        states,
        method,
        exit_time: truncated_at.map(|i| path.times[i]),
        truncated_at,
    })
}

/// `x_{n+1} = x_n + f Δt + σ Δw`
pub fn euler_maruyama(problem: &dyn Coefficients, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    run(problem, x0, path, Method::EulerMaruyama, |x, t, dt, dw| {
        Ok(x + problem.drift(x, t)? * dt + problem.noise(x, t)? * dw)
    })
}

/// Euler-Maruyama plus `½σσ_x(Δw² − Δt)`.
pub fn milstein(problem: &dyn Coefficients, x0: f64, path: &WienerPath) -> Result<SolutionPath> {
    run(problem, x0, path, Method::Milstein, |x, t, dt, dw| {
        let s = problem.noise(x, t)?;
        let sx = problem.noise_x(x, t)?;
        Ok(x + problem.drift(x, t)? * dt + s * dw + 0.5 * s * sx * (dw * dw - dt))
    })
}
