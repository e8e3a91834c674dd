//! Seeded Brownian paths.
//!
//! Generator: ChaCha20 (`rand_chacha`), keyed by `splitmix64(seed ^ level·φ64)`
//! and with the stream set to the path index, so every `(seed, path, level)`
//! triple owns an independent, platform-stable sequence. Normals come from
//! `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::model::WienerPath;
use crate::{Error, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng(seed: u64, path_index: u64, level: u32) -> ChaCha20Rng {
    let key = splitmix64(seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut r = ChaCha20Rng::seed_from_u64(key);
    r.set_stream(path_index);
    r
}

fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { t1 } else { t0 + (t1 - t0) * (i as f64 / n as f64) })
        .collect()
}

fn check(t0: f64, t1: f64, n: usize) -> Result<()> {
    if n == 0 || !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(Error::InvalidParams(format!(
            "a path needs n >= 1 and t1 > t0 (got n = {n}, [{t0}, {t1}])"
        )));
    }
    Ok(())
}

/// `n` Gaussian increments of variance `Δt = (t1 − t0)/n`, starting at 0.
pub fn wiener_path(seed: u64, path_index: u64, t0: f64, t1: f64, n: usize) -> Result<WienerPath> {
    check(t0, t1, n)?;
    let mut r = rng(seed, path_index, 0);
    let sd = ((t1 - t0) / n as f64).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        let z: f64 = r.sample(StandardNormal);
        w += sd * z;
        values.push(w);
    }
    Ok(WienerPath {
        times: grid(t0, t1, n),
        values,
        seed,
        path_index,
        level: 0,
    })
}

/// The driftless, noiseless path `w ≡ 0`.
pub fn zero_path(t0: f64, t1: f64, n: usize) -> Result<WienerPath> {
    check(t0, t1, n)?;
    Ok(WienerPath {
        times: grid(t0, t1, n),
        values: vec![0.0; n + 1],
        seed: 0,
        path_index: 0,
        level: 0,
    })
}

/// Halves the step by Brownian-bridge midpoints; coarse values are kept
/// bit-for-bit. A path that is identically zero stays zero.
pub fn refine(path: &WienerPath) -> WienerPath {
    let n = path.steps();
    let level = path.level + 1;
    let (t0, t1) = (path.t0(), path.t1());
    let zero = path.values.iter().all(|v| *v == 0.0) && path.seed == 0 && path.path_index == 0;
    let mut r = rng(path.seed, path.path_index, level);
    let sd = (path.dt() / 4.0).sqrt();
    let mut values = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        let (a, b) = (path.values[i], path.values[i + 1]);
        values.push(a);
        let mid = if zero {
            0.0
        } else {
            let z: f64 = r.sample(StandardNormal);
            0.5 * (a + b) + sd * z
        };
        values.push(mid);
    }
    values.push(path.values[n]);
    WienerPath {
        times: grid(t0, t1, 2 * n),
        values,
        seed: path.seed,
        path_index: path.path_index,
        level,
    }
}

pub fn refine_to(path: &WienerPath, levels: u32) -> WienerPath {
    let mut p = path.clone();
    for _ in 0..levels {
        p = refine(&p);
    }
    p
}
