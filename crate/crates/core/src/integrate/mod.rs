//! Wiener paths, exact pathwise solutions, reference schemes and strong
//! convergence studies.

mod convergence;
mod exact;
mod schemes;
mod wiener;

use std::io::{self, Write};

pub use convergence::{
    convergence_study, endpoint_error, ConvergenceConfig, ConvergenceRow, ConvergenceTable, PathKind, Scheme,
    DEGENERATE_ERROR,
};
pub use exact::{exact_case_a, exact_case_b, exact_case_c, exact_family, exact_simple_noise};
pub use schemes::{euler_maruyama, milstein};
pub use wiener::{refine, refine_to, wiener_path, zero_path};

use crate::model::{SolutionPath, WienerPath};

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => "nan".to_string(),
    }
}

/// Writes `t,w,x_exact,x_scheme` rows, 17 significant digits; states past a
/// truncation are written as `nan`.
pub fn write_csv(
    out: &mut impl Write,
    path: &WienerPath,
    exact: &SolutionPath,
    scheme: &SolutionPath,
) -> io::Result<()> {
    writeln!(out, "t,w,x_exact,x_scheme")?;
    for (i, (t, w)) in path.times.iter().zip(&path.values).enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_value(Some(*t)),
            fmt_value(Some(*w)),
            fmt_value(exact.state(i)),
            fmt_value(scheme.state(i))
        )?;
    }
    Ok(())
}
