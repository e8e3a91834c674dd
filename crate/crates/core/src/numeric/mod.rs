//! Numerical building blocks shared by the symbolic-numeric modules.

pub mod diff;
pub mod quad;

/// Ordinary least squares fit `v ≈ a + b·u`; returns `(a, b)`.
pub fn linear_fit(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu) = (0.0, 0.0);
    for (x, y) in u.iter().zip(v) {
        suv += (x - mu) * (y - mv);
        suu += (x - mu) * (x - mu);
    }
    let slope = if suu > 0.0 { suv / suu } else { 0.0 };
    (mv - slope * mu, slope)
}

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<E>(
    f: impl Fn(f64) -> Result<f64, E>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<Option<f64>, E> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(Some(lo));
    }
    if fhi == 0.0 {
        return Ok(Some(hi));
    }
    if flo.signum() == fhi.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol * mid.abs().max(1.0) || mid == lo || mid == hi {
            return Ok(Some(mid));
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(Some(mid));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
