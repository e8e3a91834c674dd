//! Fourth-order central difference stencils.
//!
//! First derivatives use `h = 1e-5 · max(1, |x|)`. Second and mixed derivatives
//! use the wider `h = 1e-3 · max(1, |x|)`: at `1e-5` the `eps/h²` rounding term
//! of a second difference is already ~1e-6, which would swamp the residual
//! tolerances the determining-equation checks are stated against.

/// Relative step for first derivatives.
pub const FIRST_STEP: f64 = 1e-5;
/// Relative step for second and mixed derivatives.
pub const SECOND_STEP: f64 = 1e-3;

pub fn step(rel: f64, at: f64) -> f64 {
    rel * at.abs().max(1.0)
}

/// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`
pub fn first<E>(f: impl Fn(f64) -> Result<f64, E>, x: f64, h: f64) -> Result<f64, E> {
    let fp2 = f(x + 2.0 * h)?;
    let fp1 = f(x + h)?;
    let fm1 = f(x - h)?;
    let fm2 = f(x - 2.0 * h)?;
    Ok((-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h))
}

/// `(−f(x+2h) + 16f(x+h) − 30f(x) + 16f(x−h) − f(x−2h)) / 12h²`
pub fn second<E>(f: impl Fn(f64) -> Result<f64, E>, x: f64, h: f64) -> Result<f64, E> {
    let fp2 = f(x + 2.0 * h)?;
    let fp1 = f(x + h)?;
    let f0 = f(x)?;
    let fm1 = f(x - h)?;
    let fm2 = f(x - 2.0 * h)?;
    Ok((-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h))
}

/// Mixed partial ∂²f/∂a∂b by nesting the first-derivative stencil.
pub fn mixed<E>(
    f: impl Fn(f64, f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    ha: f64,
    hb: f64,
) -> Result<f64, E> {
    first(|av| first(|bv| f(av, bv), b, hb), a, ha)
}
