//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use itosym::classifier::{build_w_symmetry, classify, construct_drift};
use itosym::determining::{
    first_order_residual, ito_type_criterion, probe_points, residual_summary, residuals, w_candidate_fit,
    w_obstruction, Point,
};
use itosym::integrate::{
    convergence_study, endpoint_error, exact_family, zero_path, ConvergenceConfig, Scheme,
};
use itosym::model::Family;
use itosym::transforms::{kozlov_map, reduced_coefficients, transform_sde, transform_symmetry, CoordinateMap};
use itosym::{Case, CaseParams, Coefficients, Detected, Domain, DriftSpec, Error, Expr, NoiseSpec, SdeProblem, Symmetry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

struct Fixture {
    name: String,
    problem: SdeProblem,
    sym: Symmetry,
}

const KS: [f64; 4] = [-1.0, 0.5, 2.0, 3.0];
const PS: [&str; 3] = ["u", "exp(u)", "sin(u) + 2"];

fn expr(s: &str) -> Expr {
    s.parse().unwrap()
}

fn family_of(p: &SdeProblem) -> Family {
    p.family().unwrap().unwrap().clone()
}

fn params(v: serde_json::Value) -> CaseParams {
    serde_json::from_value(v).unwrap()
}

fn push_family(out: &mut Vec<Fixture>, label: &str, case: Case, cp: CaseParams, noise: NoiseSpec) {
    let problem = SdeProblem::from_family(case, cp, noise);
    let fam = family_of(&problem);
    if case == Case::A {
        for p in PS {
            out.push(Fixture {
                name: format!("{label} A, P = {p}"),
                sym: fam.symmetry(Some(expr(p))),
                problem: problem.clone(),
            });
        }
    } else {
        out.push(Fixture {
            name: format!("{label} {case}"),
            sym: fam.symmetry(None),
            problem,
        });
    }
}

/// Standard symmetries of every family form.
fn fixtures() -> Vec<Fixture> {
    let mut out = Vec::new();
    for k in KS {
        let noise = NoiseSpec::simple(0.8, k);
        let label = format!("simple k={k}");
        push_family(&mut out, &label, Case::A, CaseParams::a_case(0.7), noise);
        push_family(&mut out, &label, Case::B, CaseParams::b_case(0.4, -0.9), noise);
        push_family(&mut out, &label, Case::C, CaseParams::c_case(0.3, 0.6, 0.8), noise);
    }
    let noise = NoiseSpec::constant(1.2);
    push_family(&mut out, "constant", Case::A, CaseParams::a_case(-0.6), noise);
    push_family(&mut out, "constant", Case::B, CaseParams::b_case(0.5, 1.3), noise);
    push_family(&mut out, "constant", Case::C, CaseParams::c_case(-0.4, 0.9, -0.7), noise);
    push_family(&mut out, "time-dependent", Case::A, params(serde_json::json!({"a": "sin(t)", "A": "-cos(t)"})), noise);
    push_family(
        &mut out,
        "time-dependent",
        Case::B,
        params(serde_json::json!({"a": "cos(t)", "A": "sin(t)", "b": "-1 + 0.5*t", "B": "-t + 0.25*t^2"})),
        noise,
    );
    push_family(
        &mut out,
        "time-dependent",
        Case::C,
        params(serde_json::json!({"a": "t", "A": "0.5*t^2", "b": "cos(t)", "B": "sin(t)", "beta": 0.7})),
        noise,
    );
    out
}

/// Non-symmetries with `R2 = 0`, so `R1` and its first-order form are both nonzero.
fn r2_free_candidates() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "constant, phi = (x - 1.2w)^2 + 1".into(),
            problem: SdeProblem::new(DriftSpec::parse("x^2").unwrap(), NoiseSpec::constant(1.2)),
            sym: Symmetry::from_expr(expr("(x - 1.2*w)^2 + 1"), 0.0),
        },
        Fixture {
            name: "simple k=2, phi = x^2 (G - 0.8w)^2".into(),
            problem: SdeProblem::new(DriftSpec::parse("sin(x) + t").unwrap(), NoiseSpec::simple(0.8, 2.0)),
            sym: Symmetry::from_expr(expr("x^2 * (-1/x - 0.8*w)^2"), 0.0),
        },
    ]
}

fn c1_classification() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(20240501);
    let away = |rng: &mut ChaCha20Rng, lo: f64, hi: f64, gap: f64| loop {
        let v: f64 = rng.random_range(lo..hi);
        if v.abs() >= gap {
            return v;
        }
    };
    let (mut wrong, mut worst) = (Vec::new(), 0.0f64);
    for draw in 0..200 {
        let case = [Case::A, Case::B, Case::C][rng.random_range(0..3)];
        let s = rng.random_range(0.5..2.0);
        let k = KS[rng.random_range(0..4)];
        let noise = NoiseSpec::simple(s, k);
        let cp = match case {
            Case::A => CaseParams::a_case(rng.random_range(-2.0..2.0)),
            Case::B => CaseParams::b_case(rng.random_range(-2.0..2.0), away(&mut rng, -2.0, 2.0, 0.05)),
            Case::C => CaseParams::c_case(
                rng.random_range(-2.0..2.0),
                away(&mut rng, -2.0, 2.0, 0.05),
                away(&mut rng, -1.5, 1.5, 0.05),
            ),
        };
        let drift = construct_drift(case, &cp, noise).map_err(|e| format!("draw {draw}: {e}"))?;
        let r = classify(&SdeProblem::new(drift, noise), None, None).map_err(|e| format!("draw {draw}: {e}"))?;
        if r.case != Detected::from(case) {
            wrong.push(format!("draw {draw}: {case} seen as {:?}", r.case));
            continue;
        }
        for (got, want) in [(r.params.c, cp.c), (r.params.c0, cp.c0), (r.params.c1, cp.c1), (r.params.beta, cp.beta)] {
            worst = worst.max((got.unwrap_or(0.0) - want.unwrap_or(0.0)).abs());
        }
    }
    if !wrong.is_empty() {
        return Err(format!("{} misclassified, first: {}", wrong.len(), wrong[0]));
    }
    if worst > 1e-6 {
        return Err(format!("worst constant error {worst:.2e}"));
    }
    Ok(format!("200/200 cases recovered, worst constant error {worst:.1e}"))
}

fn c2_determining() -> Outcome {
    let points = probe_points(2, 100);
    let (mut worst, mut name) = (0.0f64, String::new());
    let fx = fixtures();
    for f in &fx {
        let s = residual_summary(&f.problem, &f.sym, &points).map_err(|e| format!("{}: {e}", f.name))?;
        if s.max() > worst {
            worst = s.max();
            name = f.name.clone();
        }
    }
    if worst > 1e-6 {
        return Err(format!("{name}: max residual {worst:.2e}"));
    }
    Ok(format!("{} fixtures x 100 points, max residual {worst:.1e} ({name})", fx.len()))
}

fn c3_first_order() -> Outcome {
    let points = probe_points(3, 100);
    let (mut worst, mut used) = (0.0f64, 0usize);
    for f in fixtures().iter().chain(&r2_free_candidates()) {
        for &p in &points {
            let r = residuals(&f.problem, &f.sym, p).map_err(|e| format!("{}: {e}", f.name))?;
            if r.scaled_r2() > 1e-8 {
                continue;
            }
            let fo = first_order_residual(&f.problem, &f.sym, p).map_err(|e| format!("{}: {e}", f.name))?;
            let d = (fo.value - r.r1).abs() / r.r1_terms.max(fo.terms).max(1.0);
            if d > worst {
                worst = d;
            }
            used += 1;
        }
    }
    if worst > 1e-6 {
        return Err(format!("first-order and full forms differ by {worst:.2e}"));
    }
    Ok(format!("{used} points with R2 <= 1e-8, max |first order - R1| {worst:.1e}"))
}

fn c4_kozlov() -> Outcome {
    let tw = [(0.0, 0.0), (0.3, 0.5), (0.7, -0.8), (1.0, 0.2)];
    let (mut worst_f, mut worst_s, mut checked) = (0.0f64, 0.0f64, 0usize);
    let mut singular = Vec::new();
    for f in &fixtures() {
        let kmap = kozlov_map(&f.sym, None, f.problem.domain).map_err(|e| format!("{}: {e}", f.name))?;
        for &(t, w) in &tw {
            let ys = [kmap.y(0.8, t, w), kmap.y(2.0, t, w)];
            let (y0, y1) = match ys {
                [Ok(a), Ok(b)] => (a, b),
                [Err(Error::SingularMap { .. }), _] | [_, Err(Error::SingularMap { .. })] => {
                    singular.push(f.name.clone());
                    continue;
                }
                [Err(e), _] | [_, Err(e)] => return Err(format!("{}: {e}", f.name)),
            };
            let rc = reduced_coefficients(&f.problem, &kmap, t, w, [y0, y1])
                .map_err(|e| format!("{} at t={t}, w={w}: {e}", f.name))?;
            let rel = |v: [f64; 2]| (v[0] - v[1]).abs() / v[0].abs().max(v[1].abs()).max(1.0);
            worst_f = worst_f.max(rel(rc.drift_probes));
            worst_s = worst_s.max(rel(rc.noise_probes));
            checked += 1;
        }
    }
    singular.dedup();
    if checked == 0 {
        return Err("no fixture admitted a Kozlov map".into());
    }
    let note = if singular.is_empty() {
        String::new()
    } else {
        format!("; skipped where phi vanishes: {}", singular.join(", "))
    };
    Ok(format!(
        "{checked} (fixture, t, w) checks, max spread F {worst_f:.1e}, S {worst_s:.1e}{note}"
    ))
}

fn w_symmetries() -> Vec<(String, SdeProblem, Symmetry)> {
    let noise = NoiseSpec::constant(1.0);
    let mut out = Vec::new();
    let cases = [
        ("A constant", Case::A, CaseParams::a_case(0.8)),
        ("A a(t)", Case::A, params(serde_json::json!({"a": "sin(t)", "A": "-cos(t)"}))),
        ("B autonomous", Case::B, CaseParams::b_case(0.5, -1.0)),
        (
            "B a(t), b(t)",
            Case::B,
            params(serde_json::json!({"a": "cos(t)", "A": "sin(t)", "b": "-1 + 0.5*t", "B": "-t + 0.25*t^2"})),
        ),
    ];
    for (name, case, cp) in cases {
        let problem = SdeProblem::from_family(case, cp.clone(), noise);
        let sym = build_w_symmetry(case, &cp, 1.0, noise, 0.3).unwrap();
        out.push((name.to_string(), problem, sym));
    }
    out
}

fn c5_w_symmetry() -> Outcome {
    let points = probe_points(5, 100);
    let mut worst = 0.0f64;
    for (name, problem, sym) in w_symmetries() {
        let s = residual_summary(&problem, &sym, &points).map_err(|e| format!("{name}: {e}"))?;
        if s.max() > 1e-6 {
            return Err(format!("W-symmetry {name}: residual {:.2e}", s.max()));
        }
        worst = worst.max(s.max());
    }
    let mut worst_r = 0.0f64;
    for k in KS {
        let noise = NoiseSpec::simple(0.8, k);
        for (case, cp) in [
            (Case::A, CaseParams::a_case(0.7)),
            (Case::B, CaseParams::b_case(0.4, -0.9)),
            (Case::C, CaseParams::c_case(0.3, 0.6, 0.8)),
        ] {
            let problem = SdeProblem::from_family(case, cp, noise);
            let sym = family_of(&problem).symmetry(Some(expr("exp(u)")));
            let r = w_candidate_fit(&problem, &sym, noise, &points).map_err(|e| format!("k={k} {case}: {e}"))?;
            if r.abs() > 1e-8 {
                return Err(format!("k={k} {case}: fitted r = {r:.2e}"));
            }
            worst_r = worst_r.max(r.abs());
        }
    }
    let ob = w_obstruction(NoiseSpec::simple(1.0, 2.0), 1.0, 1.0);
    if ob != 2.0 {
        return Err(format!("obstruction(k=2, s=1, r=1, x=1) = {ob}"));
    }
    Ok(format!(
        "4 W-symmetries max residual {worst:.1e}; simple-noise fitted |r| <= {worst_r:.1e}; obstruction = {ob}"
    ))
}

fn mapped(points: &[Point], map: &CoordinateMap) -> Vec<Point> {
    points
        .iter()
        .map(|p| Point::new(map.forward(p.x, p.t).unwrap(), p.t, p.w))
        .collect()
}

fn c6_change_of_variables() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let points = probe_points(6, 100);
    let table4: Vec<Fixture> = fixtures().into_iter().filter(|f| !f.problem.noise.is_constant()).collect();
    let mut worst = 0.0f64;
    for i in 0..20 {
        let f = &table4[rng.random_range(0..table4.len())];
        let scale = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let map = CoordinateMap::affine(scale, rng.random_range(-2.0..2.0)).unwrap();
        let tsde = transform_sde(&f.problem, &map).map_err(|e| format!("map {i}: {e}"))?;
        let (tsym, _) = transform_symmetry(&f.sym, &map, &f.problem).map_err(|e| format!("map {i}: {e}"))?;
        let s = residual_summary(&tsde, &tsym, &mapped(&points, &map)).map_err(|e| format!("map {i}, {}: {e}", f.name))?;
        if s.max() > 1e-5 {
            return Err(format!("map {i} on {}: residual {:.2e}", f.name, s.max()));
        }
        worst = worst.max(s.max());
    }

    let (_, problem, sym) = w_symmetries().swap_remove(2);
    let map = CoordinateMap::expression(expr("exp(x)"), expr("log(y)"), Domain::whole_line()).unwrap();
    let tsde = transform_sde(&problem, &map).map_err(|e| e.to_string())?;
    let (tsym, warning) = transform_symmetry(&sym, &map, &problem).map_err(|e| e.to_string())?;
    let tp = mapped(&points, &map);
    let sx = tsde.noise_x(tp[0].x, 0.0).map_err(|e| e.to_string())?;
    let broken = residual_summary(&tsde, &tsym, &tp).map_err(|e| e.to_string())?.max();
    if sx == 0.0 || broken <= 1e-3 || warning.is_none() {
        return Err(format!(
            "W-symmetry under exp map: noise_x {sx:.2e}, residual {broken:.2e}, warned {}",
            warning.is_some()
        ));
    }
    Ok(format!(
        "20 affine maps max residual {worst:.1e}; W-symmetry under exp map fails with {broken:.1e} and a warning"
    ))
}

fn c7_oracle() -> Outcome {
    let b = SdeProblem::from_family(Case::B, CaseParams::b_case(1.0, -1.0), NoiseSpec::constant(1.0));
    let fam = family_of(&b);
    let rep = endpoint_error(&b, &fam, 0.0, Scheme::EulerMaruyama, 7, 100, 1.0, 10_000).map_err(|e| e.to_string())?;
    if rep.n_paths != 100 || rep.endpoint_abs_error > 1e-2 {
        return Err(format!("endpoint error {:.2e} on {} paths", rep.endpoint_abs_error, rep.n_paths));
    }
    let cfg = ConvergenceConfig {
        x0: 0.0,
        levels: 5,
        n_paths: 100,
        seed: 7,
        ..Default::default()
    };
    let em = convergence_study(&b, &fam, &cfg).map_err(|e| e.to_string())?;
    let em_slope = em.slope.unwrap_or(f64::NAN);
    if !(0.8..=1.2).contains(&em_slope) {
        return Err(format!("EM slope on additive noise {em_slope:.3}"));
    }

    let a = SdeProblem::from_family(Case::A, CaseParams::a_case(0.5), NoiseSpec::simple(0.5, 0.5));
    let fam_a = family_of(&a);
    let cfg = ConvergenceConfig {
        x0: 1.0,
        levels: 5,
        n_paths: 200,
        seed: 7,
        ..Default::default()
    };
    let sn = convergence_study(&a, &fam_a, &cfg).map_err(|e| e.to_string())?;
    let sn_slope = sn.slope.unwrap_or(f64::NAN);
    if !(0.4..=0.6).contains(&sn_slope) {
        return Err(format!("EM slope on simple noise {sn_slope:.3} ({} paths used)", sn.paths_used));
    }
    Ok(format!(
        "mean endpoint error {:.1e}; EM slope {em_slope:.2} (additive), {sn_slope:.2} (simple noise, {} paths)",
        rep.endpoint_abs_error, sn.paths_used
    ))
}

/// Classical RK4 for `x' = f(x, t)`, stopping early on non-finite states.
fn rk4(f: impl Fn(f64, f64) -> f64, x0: f64, t1: f64, n: usize) -> f64 {
    let h = t1 / n as f64;
    let mut x = x0;
    for i in 0..n {
        let t = i as f64 * h;
        let k1 = f(x, t);
        let k2 = f(x + 0.5 * h * k1, t + 0.5 * h);
        let k3 = f(x + 0.5 * h * k2, t + 0.5 * h);
        let k4 = f(x + h * k3, t + h);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

fn c8_zero_noise() -> Outcome {
    let path = zero_path(0.0, 1.0, 200).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for f in &fixtures() {
        if f.sym.arbitrary_function.as_ref().is_some_and(|p| p.to_string() != "u") {
            continue;
        }
        let fam = family_of(&f.problem);
        let x0 = if f.problem.noise.is_constant() { 0.2 } else { 1.1 };
        let sol = exact_family(&fam, x0, &path).map_err(|e| format!("{}: {e}", f.name))?;
        let Some(end) = sol.endpoint() else {
            continue;
        };
        let p = &f.problem;
        let oracle = rk4(
            |x, t| p.drift(x, t).unwrap() - 0.5 * p.noise(x, t).unwrap() * p.noise_x(x, t).unwrap(),
            x0,
            1.0,
            20_000,
        );
        let oracle = if p.noise.is_constant() {
            rk4(|x, t| p.drift(x, t).unwrap(), x0, 1.0, 20_000)
        } else {
            oracle
        };
        let err = (end - oracle).abs();
        if err > 1e-6 {
            return Err(format!("{}: exact {end} vs ODE {oracle}", f.name));
        }
        worst = worst.max(err);
        cases += 1;
    }

    let c = |b: f64| SdeProblem::from_family(Case::C, CaseParams::c_case(0.0, b, 1.0), NoiseSpec::constant(1.0));
    let fine = zero_path(0.0, 1.0, 1000).map_err(|e| e.to_string())?;
    let down = exact_family(&family_of(&c(-1.0)), 0.0, &fine).map_err(|e| e.to_string())?;
    let x1 = down.endpoint().unwrap_or(f64::NAN);
    if (x1 + 2f64.ln()).abs() > 1e-6 {
        return Err(format!("case C x(1) = {x1}, want -ln 2"));
    }
    let long = zero_path(0.0, 2.0, 2000).map_err(|e| e.to_string())?;
    let up = exact_family(&family_of(&c(1.0)), 0.0, &long).map_err(|e| e.to_string())?;
    let t_star = up.exit_time.unwrap_or(f64::NAN);
    if (t_star - 1.0).abs() > 1e-3 {
        return Err(format!("case C blow-up at {t_star}, want 1"));
    }
    Ok(format!(
        "{cases} families match the ODE within {worst:.1e}; x(1) = {x1:.12}; t* = {t_star:.6}"
    ))
}

fn c9_criterion() -> Outcome {
    let points: Vec<Point> = probe_points(9, 100).into_iter().filter(|p| p.w.abs() <= 1.0).collect();
    let mut worst_b = 0.0f64;
    for f in fixtures().iter().filter(|f| f.sym.case == Some(Case::B)) {
        for &p in &points {
            let v = ito_type_criterion(&f.problem, &f.sym, p).map_err(|e| format!("{}: {e}", f.name))?;
            worst_b = worst_b.max(v.abs());
        }
    }
    if worst_b > 1e-9 {
        return Err(format!("case B criterion {worst_b:.2e}"));
    }
    let c = SdeProblem::from_family(Case::C, CaseParams::c_case(0.0, 1.0, 1.0), NoiseSpec::constant(1.0));
    let sym = family_of(&c).symmetry(None);
    let mut least_c = f64::INFINITY;
    for &p in &points {
        let v = ito_type_criterion(&c, &sym, p).map_err(|e| e.to_string())?;
        least_c = least_c.min(v.abs());
    }
    if least_c < 1e-3 {
        return Err(format!("case C criterion only {least_c:.2e}"));
    }
    Ok(format!("case B max {worst_b:.1e}; case C min {least_c:.2e} over {} points", points.len()))
}

fn run_cli(args: &[&str]) -> Result<(Vec<u8>, i32), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_itosym"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.stdout, out.status.code().unwrap_or(-1)))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn c10_determinism() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = |name: &str| configs.join(name).to_string_lossy().into_owned();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("classify", vec!["classify".into(), cfg("case_b_simple.json")]),
        ("symmetry", vec!["symmetry".into(), cfg("case_a_simple_milstein.json")]),
        ("verify", vec!["verify".into(), cfg("case_c_blowup.json")]),
        ("integrate", vec!["integrate".into(), "--paths".into(), "8".into(), cfg("case_c_blowup.json")]),
        ("convergence", vec!["convergence".into(), cfg("case_b_constant.json")]),
    ];
    let tmp = std::env::temp_dir().join(format!("itosym-acceptance-{}", std::process::id()));
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.join(format!("{name}-{rep}"));
            let _ = std::fs::remove_dir_all(&out);
            let mut full: Vec<&str> = vec!["--deterministic", "--seed", "42", "--out", out.to_str().unwrap()];
            full.extend(args.iter().map(String::as_str));
            let (stdout, code) = run_cli(&full)?;
            outputs.push((stdout, code, dir_bytes(&out)));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{name} differs between runs"));
        }
        if outputs[0].2.is_empty() {
            return Err(format!("{name} wrote no files"));
        }
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Ok("classify, symmetry, verify, integrate, convergence: stdout and files byte-identical".into())
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("classification fidelity", c1_classification),
        ("determining equations", c2_determining),
        ("first-order equivalence", c3_first_order),
        ("Kozlov y-independence", c4_kozlov),
        ("W-symmetry existence", c5_w_symmetry),
        ("change of variables", c6_change_of_variables),
        ("exact vs numerical", c7_oracle),
        ("zero-noise reductions", c8_zero_noise),
        ("Ito-type criterion", c9_criterion),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
