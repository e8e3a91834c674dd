//! Domain types shared by every module.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::exprlang::{EvalError, Expr};
use crate::numeric::{diff, quad};
use crate::transforms::CoordinateMap;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    A,
    B,
    C,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
        })
    }
}

/// Noise coefficient σ(x): constant `s` or simple `s·x^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NoiseSpec {
    #[serde(rename = "constant")]
    Constant { s: f64 },
    #[serde(rename = "simple")]
    SimplePower { s: f64, k: f64 },
}

impl NoiseSpec {
    pub fn constant(s: f64) -> Self {
        NoiseSpec::Constant { s }
    }

    pub fn simple(s: f64, k: f64) -> Self {
        NoiseSpec::SimplePower { s, k }
    }

    pub fn s(&self) -> f64 {
        match *self {
            NoiseSpec::Constant { s } | NoiseSpec::SimplePower { s, .. } => s,
        }
    }

    /// Exponent; 0 for constant noise.
    pub fn k(&self) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => 0.0,
            NoiseSpec::SimplePower { k, .. } => k,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, NoiseSpec::Constant { .. })
    }

    /// `x^k`, exactly 1 for constant noise.
    pub fn power(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => 1.0,
            NoiseSpec::SimplePower { k, .. } => x.powf(k),
        }
    }

    pub fn sigma(&self, x: f64) -> f64 {
        self.s() * self.power(x)
    }

    pub fn sigma_x(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => 0.0,
            NoiseSpec::SimplePower { s, k } => s * k * x.powf(k - 1.0),
        }
    }

    pub fn sigma_xx(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => 0.0,
            NoiseSpec::SimplePower { s, k } => s * k * (k - 1.0) * x.powf(k - 2.0),
        }
    }

    /// `x^(1-k)/(1-k)`, the primitive of `x^-k`; `x` for constant noise.
    pub fn primitive_of_inverse_power(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => x,
            NoiseSpec::SimplePower { k, .. } => x.powf(1.0 - k) / (1.0 - k),
        }
    }

    /// Standard-form coordinate `y = g(x) = ∫ dx/σ`.
    pub fn g(&self, x: f64) -> f64 {
        self.primitive_of_inverse_power(x) / self.s()
    }

    /// Inverse of [`NoiseSpec::g`]. Fails outside the image of `g`.
    pub fn xi(&self, y: f64) -> Result<f64> {
        match *self {
            NoiseSpec::Constant { s } => Ok(s * y),
            NoiseSpec::SimplePower { s, k } => {
                let base = s * (1.0 - k) * y;
                if base > 0.0 && base.is_finite() {
                    Ok(base.powf(1.0 / (1.0 - k)))
                } else {
                    Err(Error::Domain(format!(
                        "y = {y} is outside the image of g (need s(1-k)y > 0)"
                    )))
                }
            }
        }
    }

    pub fn default_domain(&self) -> Domain {
        match self {
            NoiseSpec::Constant { .. } => Domain::whole_line(),
            NoiseSpec::SimplePower { .. } => Domain::positive(),
        }
    }

    pub fn to_expr(&self) -> Expr {
        build::mul(Expr::num(self.s()), build::pow_x(self.k()))
    }
}

/// Open interval `(lo, hi)`; infinite ends serialize as `null`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Domain { lo, hi }
    }

    pub fn whole_line() -> Self {
        Domain::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn positive() -> Self {
        Domain::new(0.0, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn is_within(&self, other: &Domain) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }

    /// Default anchor for indefinite integrals: 1 on `x > 0` domains, else 0,
    /// moved inside the interval if needed.
    pub fn anchor(&self) -> f64 {
        let preferred = if self.lo >= 0.0 { 1.0 } else { 0.0 };
        if self.contains(preferred) {
            preferred
        } else if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * (self.lo + self.hi)
        } else if self.lo.is_finite() {
            self.lo + 1.0
        } else {
            self.hi - 1.0
        }
    }

    /// Evenly spaced interior sample points, clamped to a finite window.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        let lo = if self.lo.is_finite() { self.lo } else { -3.0 };
        let hi = if self.hi.is_finite() { self.hi } else { lo.max(0.0) + 3.0 };
        (1..=n)
            .map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
            .collect()
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let end = |v: f64| if v.is_finite() { Some(v) } else { None };
        (end(self.lo), end(self.hi)).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(deserializer)?;
        Ok(Domain::new(
            lo.unwrap_or(f64::NEG_INFINITY),
            hi.unwrap_or(f64::INFINITY),
        ))
    }
}

/// A coefficient `a(t)` with an optional closed-form primitive `A(t)`.
/// Without one, `A(t) = ∫_0^t a` by quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeFunction {
    pub value: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Expr>,
}

impl TimeFunction {
    pub fn new(value: Expr, primitive: Option<Expr>) -> Self {
        TimeFunction { value, primitive }
    }

    /// `c` with primitive `c·t`.
    pub fn constant(c: f64) -> Self {
        TimeFunction {
            value: Expr::num(c),
            primitive: Some(build::mul(Expr::num(c), Expr::var("t"))),
        }
    }

    pub fn zero() -> Self {
        TimeFunction::constant(0.0)
    }

    /// `Some(c)` when the value is a literal.
    pub fn as_constant(&self) -> Option<f64> {
        match &self.value {
            Expr::Num(v) => Some(*v),
            Expr::Neg(inner) => match inner.as_ref() {
                Expr::Num(v) => Some(-v),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn at(&self, t: f64) -> Result<f64, EvalError> {
        if let Some(c) = self.as_constant() {
            return Ok(c);
        }
        self.value.eval_vars(&[("t", t)])
    }

    pub fn primitive_at(&self, t: f64) -> Result<f64, EvalError> {
        if let Some(c) = self.as_constant() {
            return Ok(c * t);
        }
        match &self.primitive {
            Some(p) => p.eval_vars(&[("t", t)]),
            None => Ok(quad::integrate_default(|tau| self.at(tau), 0.0, t)?.value),
        }
    }

    pub fn scaled(&self, factor: f64) -> TimeFunction {
        let f = Expr::num(factor);
        TimeFunction {
            value: fold_scale(&self.value, factor, &f),
            primitive: self.primitive.as_ref().map(|p| fold_scale(p, factor, &f)),
        }
    }

    /// Worst `|A'(t) - a(t)| / (1 + |a(t)|)` over a few sample times.
    pub fn primitive_mismatch(&self) -> Result<f64, EvalError> {
        let Some(p) = &self.primitive else {
            return Ok(0.0);
        };
        let mut worst = 0.0f64;
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let d = diff::first(|tt| p.eval_vars(&[("t", tt)]), t, diff::step(diff::FIRST_STEP, t))?;
            let a = self.at(t)?;
            worst = worst.max((d - a).abs() / (1.0 + a.abs()));
        }
        Ok(worst)
    }

    fn primitive_expr(&self) -> Option<Expr> {
        match self.as_constant() {
            Some(c) => Some(build::mul(Expr::num(c), Expr::var("t"))),
            None => self.primitive.clone(),
        }
    }

    fn describe_primitive(&self, name: &str) -> String {
        match self.primitive_expr() {
            Some(e) => format!("({e})"),
            None => format!("{name}(t)"),
        }
    }
}

fn fold_scale(e: &Expr, factor: f64, f: &Expr) -> Expr {
    match e {
        Expr::Num(v) => Expr::num(v * factor),
        Expr::Neg(inner) if matches!(inner.as_ref(), Expr::Num(_)) => {
            let Expr::Num(v) = inner.as_ref() else { unreachable!() };
            Expr::num(-v * factor)
        }
        _ => build::mul(f.clone(), e.clone()),
    }
}

/// Family constants. Autonomous families use `c` (case A) or `c0`, `c1`
/// (cases B, C) plus `beta` (case C). Time-dependent constant-noise families
/// use `a`, `b` with optional primitives `A`, `B` (aliases `h`, `H`, `k`, `K`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, alias = "h", skip_serializing_if = "Option::is_none")]
    pub a: Option<Expr>,
    #[serde(default, rename = "A", alias = "H", skip_serializing_if = "Option::is_none")]
    pub a_prim: Option<Expr>,
    #[serde(default, alias = "k", skip_serializing_if = "Option::is_none")]
    pub b: Option<Expr>,
    #[serde(default, rename = "B", alias = "K", skip_serializing_if = "Option::is_none")]
    pub b_prim: Option<Expr>,
}

impl CaseParams {
    pub fn a_case(c: f64) -> Self {
        CaseParams {
            c: Some(c),
            ..Default::default()
        }
    }

    pub fn b_case(c0: f64, c1: f64) -> Self {
        CaseParams {
            c0: Some(c0),
            c1: Some(c1),
            ..Default::default()
        }
    }

    pub fn c_case(c0: f64, c1: f64, beta: f64) -> Self {
        CaseParams {
            c0: Some(c0),
            c1: Some(c1),
            beta: Some(beta),
            ..Default::default()
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.a.is_some() || self.b.is_some() || self.a_prim.is_some() || self.b_prim.is_some()
    }

    fn time_fn(value: &Option<Expr>, prim: &Option<Expr>, name: &str) -> Result<Option<TimeFunction>> {
        match (value, prim) {
            (Some(v), p) => {
                for e in std::iter::once(v).chain(p) {
                    if let Some(bad) = e.variables().into_iter().find(|n| n != "t") {
                        return Err(Error::InvalidParams(format!(
                            "{name}(t) may only depend on t, found `{bad}`"
                        )));
                    }
                }
                Ok(Some(TimeFunction::new(v.clone(), p.clone())))
            }
            (None, Some(_)) => Err(Error::InvalidParams(format!(
                "primitive of {name} given without {name}(t)"
            ))),
            (None, None) => Ok(None),
        }
    }

    /// Resolves to the uniform representation used by every evaluator.
    pub fn resolve(&self, case: Case, noise: NoiseSpec) -> Result<Family> {
        let invalid = |m: &str| Err(Error::InvalidParams(m.to_string()));
        let a_fn = Self::time_fn(&self.a, &self.a_prim, "a")?;
        let b_fn = Self::time_fn(&self.b, &self.b_prim, "b")?;
        if (a_fn.is_some() || b_fn.is_some()) && !noise.is_constant() {
            return Err(Error::Unsupported(
                "time-dependent families require constant noise".into(),
            ));
        }
        let pick = |tf: Option<TimeFunction>, c: Option<f64>, name: &str, cname: &str| {
            match (tf, c) {
                (Some(_), Some(_)) => Err(Error::InvalidParams(format!(
                    "give either {name}(t) or {cname}, not both"
                ))),
                (Some(tf), None) => Ok(Some(tf)),
                (None, Some(c)) => Ok(Some(TimeFunction::constant(c))),
                (None, None) => Ok(None),
            }
        };
        let nonzero = |tf: &TimeFunction, what: &str| -> Result<()> {
            if tf.as_constant() == Some(0.0) {
                Err(Error::InvalidParams(format!(
                    "case requires {what} != 0 (otherwise it degenerates to case A)"
                )))
            } else {
                Ok(())
            }
        };
        match case {
            Case::A => {
                if self.c0.is_some() || self.c1.is_some() || self.beta.is_some() || b_fn.is_some() {
                    return invalid("case A takes only c (or a(t))");
                }
                let a = pick(a_fn, self.c, "a", "c")?
                    .ok_or_else(|| Error::InvalidParams("case A requires c".into()))?;
                Ok(Family {
                    case,
                    noise,
                    a,
                    b: TimeFunction::zero(),
                    beta: 0.0,
                })
            }
            Case::B | Case::C => {
                if self.c.is_some() {
                    return invalid("cases B and C take c0, c1 rather than c");
                }
                let a = pick(a_fn, self.c0, "a", "c0")?.unwrap_or_else(TimeFunction::zero);
                let b = pick(b_fn, self.c1, "b", "c1")?.ok_or_else(|| {
                    Error::InvalidParams(format!("case {case} requires c1 (or b(t))"))
                })?;
                nonzero(&b, "c1")?;
                let beta = if case == Case::C {
                    match self.beta {
                        Some(beta) if beta != 0.0 && beta.is_finite() => beta,
                        Some(_) => return invalid("case C requires beta != 0"),
                        None => return invalid("case C requires beta"),
                    }
                } else {
                    if self.beta.is_some() {
                        return invalid("case B does not take beta");
                    }
                    0.0
                };
                Ok(Family {
                    case,
                    noise,
                    a,
                    b,
                    beta,
                })
            }
        }
    }
}

/// A symmetric family in uniform form (`k = 0` for constant noise):
///
/// * A: `f = a(t)·x^k + ½s²k·x^(2k-1)`
/// * B: `f = a(t)·x^k + b(t)·x + ½s²k·x^(2k-1)`
/// * C: `f = a(t)·x^k + b(t)·x^k·exp(β·x^(1-k)) + ½s²k·x^(2k-1)`
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub case: Case,
    pub noise: NoiseSpec,
    pub a: TimeFunction,
    pub b: TimeFunction,
    pub beta: f64,
}

impl Family {
    pub fn is_autonomous(&self) -> bool {
        self.a.as_constant().is_some() && self.b.as_constant().is_some()
    }

    fn correction(&self, x: f64) -> f64 {
        let (s, k) = (self.noise.s(), self.noise.k());
        if k == 0.0 {
            0.0
        } else {
            0.5 * s * s * k * x.powf(2.0 * k - 1.0)
        }
    }

    pub fn drift(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        let pw = self.noise.power(x);
        let a = self.a.at(t)?;
        let base = match self.case {
            Case::A => a * pw,
            Case::B => a * pw + self.b.at(t)? * x,
            Case::C => {
                let k = self.noise.k();
                let arg = if k == 0.0 { x } else { x.powf(1.0 - k) };
                a * pw + self.b.at(t)? * pw * (self.beta * arg).exp()
            }
        };
        Ok(base + self.correction(x))
    }

    pub fn drift_expr(&self) -> Expr {
        use build::{add, mul, pow_x};
        let (s, k) = (self.noise.s(), self.noise.k());
        let pw = pow_x(k);
        let a = self.a.value.clone();
        let b = self.b.value.clone();
        let base = match self.case {
            Case::A => mul(a, pw),
            Case::B => add(mul(a, pw), mul(b, Expr::var("x"))),
            Case::C => add(
                mul(a, pw.clone()),
                mul(
                    mul(b, pw),
                    Expr::exp(mul(Expr::num(self.beta), pow_x(1.0 - k))),
                ),
            ),
        };
        if k == 0.0 {
            base
        } else {
            add(base, mul(Expr::num(0.5 * s * s * k), pow_x(2.0 * k - 1.0)))
        }
    }

    /// Back to the user-facing parameter set.
    pub fn params(&self) -> CaseParams {
        let mut p = CaseParams::default();
        if self.is_autonomous() {
            let a = self.a.as_constant().unwrap_or(0.0);
            let b = self.b.as_constant().unwrap_or(0.0);
            match self.case {
                Case::A => p.c = Some(a),
                Case::B => {
                    p.c0 = Some(a);
                    p.c1 = Some(b);
                }
                Case::C => {
                    p.c0 = Some(a);
                    p.c1 = Some(b);
                    p.beta = Some(self.beta);
                }
            }
        } else {
            p.a = Some(self.a.value.clone());
            p.a_prim = self.a.primitive.clone();
            if self.case != Case::A {
                p.b = Some(self.b.value.clone());
                p.b_prim = self.b.primitive.clone();
            }
            if self.case == Case::C {
                p.beta = Some(self.beta);
            }
        }
        p
    }

    /// The unit-noise image `dy = F(y,t) dt + dw` under `y = g(x)`, itself a
    /// constant-noise family with `s = 1`.
    pub fn standard_form(&self) -> Family {
        let (s, k) = (self.noise.s(), self.noise.k());
        let (b, beta) = match self.case {
            Case::A => (TimeFunction::zero(), 0.0),
            Case::B => (self.b.scaled(1.0 - k), 0.0),
            Case::C => (self.b.scaled(1.0 / s), self.beta * s * (1.0 - k)),
        };
        Family {
            case: self.case,
            noise: NoiseSpec::constant(1.0),
            a: self.a.scaled(1.0 / s),
            b,
            beta,
        }
    }

    /// The standard (`r = 0`) symmetry; `p` is the arbitrary function of case
    /// A, written in the variable `u` (identity when absent).
    pub fn symmetry(&self, p: Option<Expr>) -> Symmetry {
        let shift = match self.case {
            Case::A | Case::C => self.a.clone(),
            Case::B => self.b.clone(),
        };
        let arbitrary = if self.case == Case::A {
            Some(p.unwrap_or_else(|| Expr::var("u")))
        } else {
            None
        };
        Symmetry {
            phi: Phi::Family(FamilyPhi {
                case: self.case,
                noise: self.noise,
                beta: self.beta,
                shift,
                p: arbitrary.clone(),
            }),
            r: 0.0,
            case: Some(self.case),
            arbitrary_function: arbitrary,
        }
    }
}

/// The drift coefficient.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftSpec {
    Family {
        case: Case,
        params: CaseParams,
    },
    Expression {
        expr: Expr,
        constants: BTreeMap<String, f64>,
    },
}

impl DriftSpec {
    pub fn family(case: Case, params: CaseParams) -> Self {
        DriftSpec::Family { case, params }
    }

    pub fn expression(expr: Expr) -> Self {
        DriftSpec::Expression {
            expr,
            constants: BTreeMap::new(),
        }
    }

    /// Parses `source` as a drift over `x` and `t`.
    pub fn parse(source: &str) -> Result<Self> {
        Ok(DriftSpec::expression(crate::exprlang::parse_with(
            source,
            &["x", "t", "pi", "e"],
        )?))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Case>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<CaseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expr: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constants: Option<BTreeMap<String, f64>>,
}

impl Serialize for DriftSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = match self {
            DriftSpec::Family { case, params } => RawDrift {
                family: Some(*case),
                params: Some(params.clone()),
                expr: None,
                constants: None,
            },
            DriftSpec::Expression { expr, constants } => RawDrift {
                family: None,
                params: None,
                expr: Some(expr.clone()),
                constants: (!constants.is_empty()).then(|| constants.clone()),
            },
        };
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DriftSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawDrift::deserialize(deserializer)?;
        match (raw.family, raw.expr) {
            (Some(case), None) => {
                if raw.constants.is_some() {
                    return Err(D::Error::custom("`constants` only applies to `expr` drifts"));
                }
                Ok(DriftSpec::Family {
                    case,
                    params: raw.params.unwrap_or_default(),
                })
            }
            (None, Some(expr)) => {
                if raw.params.is_some() {
                    return Err(D::Error::custom("`params` only applies to `family` drifts"));
                }
                Ok(DriftSpec::Expression {
                    expr,
                    constants: raw.constants.unwrap_or_default(),
                })
            }
            (Some(_), Some(_)) => Err(D::Error::custom(
                "drift must have exactly one of `family` or `expr`",
            )),
            (None, None) => Err(D::Error::custom("drift needs `family` or `expr`")),
        }
    }
}

/// Evaluate drift and noise coefficients; implemented by [`SdeProblem`] and
/// by transformed equations whose noise leaves the constant/simple families.
pub trait Coefficients: Send + Sync {
    fn drift(&self, x: f64, t: f64) -> Result<f64>;
    fn noise(&self, x: f64, t: f64) -> Result<f64>;
    fn domain(&self) -> Domain;

    fn noise_x(&self, x: f64, t: f64) -> Result<f64> {
        diff::first(|v| self.noise(v, t), x, diff::step(diff::FIRST_STEP, x))
    }

    fn noise_t(&self, x: f64, t: f64) -> Result<f64> {
        diff::first(|v| self.noise(x, v), t, diff::step(diff::FIRST_STEP, t))
    }

    fn drift_x(&self, x: f64, t: f64) -> Result<f64> {
        diff::first(|v| self.drift(v, t), x, diff::step(diff::FIRST_STEP, x))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum DriftEval {
    Family(Family),
    Expr(Expr),
    /// Parameters failed to resolve; evaluation reports this message.
    Invalid(String),
}

/// The pair `(f, σ)` with its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeProblem {
    pub drift: DriftSpec,
    pub noise: NoiseSpec,
    pub domain: Domain,
    pub autonomous: bool,
    eval: DriftEval,
}

impl SdeProblem {
    /// Builds with the default domain for `noise` and the autonomy flag
    /// inferred from the drift.
    pub fn new(drift: DriftSpec, noise: NoiseSpec) -> Self {
        let domain = noise.default_domain();
        Self::with_domain(drift, noise, domain)
    }

    pub fn with_domain(drift: DriftSpec, noise: NoiseSpec, domain: Domain) -> Self {
        let eval = Self::prepare(&drift, noise);
        let autonomous = match &eval {
            DriftEval::Family(f) => f.is_autonomous(),
            DriftEval::Expr(e) => !e.mentions("t"),
            DriftEval::Invalid(_) => true,
        };
        SdeProblem {
            drift,
            noise,
            domain,
            autonomous,
            eval,
        }
    }

    pub fn from_family(case: Case, params: CaseParams, noise: NoiseSpec) -> Self {
        SdeProblem::new(DriftSpec::family(case, params), noise)
    }

    fn prepare(drift: &DriftSpec, noise: NoiseSpec) -> DriftEval {
        match drift {
            DriftSpec::Family { case, params } => match params.resolve(*case, noise) {
                Ok(f) => DriftEval::Family(f),
                Err(e) => DriftEval::Invalid(e.to_string()),
            },
            DriftSpec::Expression { expr, constants } => {
                let mut e = expr.clone();
                for (name, value) in constants {
                    e = e.substitute(name, &Expr::num(*value));
                }
                DriftEval::Expr(e)
            }
        }
    }

    /// The resolved family, when the drift is given as one.
    pub fn family(&self) -> Result<Option<&Family>> {
        match &self.eval {
            DriftEval::Family(f) => Ok(Some(f)),
            DriftEval::Expr(_) => Ok(None),
            DriftEval::Invalid(m) => Err(Error::InvalidParams(m.clone())),
        }
    }

    /// Drift as an expression over `x` and `t` with constants substituted.
    pub fn drift_expr(&self) -> Result<Expr> {
        match &self.eval {
            DriftEval::Family(f) => Ok(f.drift_expr()),
            DriftEval::Expr(e) => Ok(e.clone()),
            DriftEval::Invalid(m) => Err(Error::InvalidParams(m.clone())),
        }
    }
}

impl Coefficients for SdeProblem {
    fn drift(&self, x: f64, t: f64) -> Result<f64> {
        match &self.eval {
            DriftEval::Family(f) => Ok(f.drift(x, t)?),
            DriftEval::Expr(e) => Ok(e.eval_vars(&[("x", x), ("t", t)])?),
            DriftEval::Invalid(m) => Err(Error::InvalidParams(m.clone())),
        }
    }

    fn noise(&self, x: f64, _t: f64) -> Result<f64> {
        Ok(self.noise.sigma(x))
    }

    fn noise_x(&self, x: f64, _t: f64) -> Result<f64> {
        Ok(self.noise.sigma_x(x))
    }

    fn noise_t(&self, _x: f64, _t: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}

#[derive(Serialize, Deserialize)]
struct RawProblem {
    drift: DriftSpec,
    noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    autonomous: Option<bool>,
}

impl Serialize for SdeProblem {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawProblem {
            drift: self.drift.clone(),
            noise: self.noise,
            domain: Some(self.domain),
            autonomous: Some(self.autonomous),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SdeProblem {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawProblem::deserialize(deserializer)?;
        let domain = raw.domain.unwrap_or_else(|| raw.noise.default_domain());
        let mut p = SdeProblem::with_domain(raw.drift, raw.noise, domain);
        if let Some(a) = raw.autonomous {
            p.autonomous = a;
        }
        Ok(p)
    }
}

/// Lists every violated invariant; empty when the problem is well formed.
pub fn validate(problem: &SdeProblem) -> Vec<String> {
    let mut out = Vec::new();
    let noise = problem.noise;
    let s = noise.s();
    if s == 0.0 || !s.is_finite() {
        out.push("s must be nonzero".to_string());
    }
    if let NoiseSpec::SimplePower { k, .. } = noise {
        if !k.is_finite() {
            out.push("k must be finite".into());
        } else if k == 0.0 {
            out.push("k = 0 must be given as constant noise".into());
        } else if k == 1.0 {
            out.push("k = 1 out of scope".into());
        }
        if k.fract() != 0.0 && !problem.domain.is_within(&Domain::positive()) {
            out.push("non-integer k requires a domain inside x > 0".into());
        }
    }
    let d = problem.domain;
    if d.lo.is_nan() || d.hi.is_nan() || d.lo >= d.hi {
        out.push(format!("domain ({}, {}) is empty", d.lo, d.hi));
        return out;
    }
    match &problem.drift {
        DriftSpec::Family { params, .. } => {
            if let Err(e) = problem.family() {
                out.push(e.to_string());
            }
            for (name, value, prim) in [
                ("a", &params.a, &params.a_prim),
                ("b", &params.b, &params.b_prim),
            ] {
                if let (Some(v), Some(p)) = (value, prim) {
                    let tf = TimeFunction::new(v.clone(), Some(p.clone()));
                    match tf.primitive_mismatch() {
                        Ok(m) if m <= 1e-6 => {}
                        Ok(m) => out.push(format!(
                            "primitive of {name}(t) does not differentiate to {name}(t) (mismatch {m:.2e})"
                        )),
                        Err(e) => out.push(format!("primitive of {name}(t): {e}")),
                    }
                }
            }
        }
        DriftSpec::Expression { expr, constants } => {
            for v in expr.variables() {
                if !matches!(v.as_str(), "x" | "t" | "pi" | "e") && !constants.contains_key(&v) {
                    out.push(format!("drift uses unknown name `{v}`"));
                }
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    let xs = d.samples(9);
    'outer: for &x in &xs {
        for t in [0.0, 0.5, 1.0] {
            match problem.drift(x, t) {
                Ok(v) if v.is_finite() => {}
                Ok(v) => {
                    out.push(format!("drift is not finite at x = {x}, t = {t} ({v})"));
                    break 'outer;
                }
                Err(e) => {
                    out.push(format!("drift not evaluable at x = {x}, t = {t}: {e}"));
                    break 'outer;
                }
            }
        }
    }
    if problem.autonomous && out.is_empty() {
        let depends = xs.iter().any(|&x| {
            let f0 = problem.drift(x, 0.0).unwrap_or(f64::NAN);
            [0.37, 1.0, 2.5].iter().any(|&t| {
                let f = problem.drift(x, t).unwrap_or(f64::NAN);
                (f - f0).abs() > 1e-12 * (1.0 + f0.abs())
            })
        });
        if depends {
            out.push("problem is flagged autonomous but the drift depends on t".into());
        }
    }
    out
}

/// Symmetry coefficient `φ(x,t;w)` of `Y = φ ∂x + r w ∂w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Symmetry {
    pub phi: Phi,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<Case>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbitrary_function: Option<Expr>,
}

impl Symmetry {
    /// A user-supplied `φ` over `x`, `t`, `w`.
    pub fn from_expr(phi: Expr, r: f64) -> Self {
        Symmetry {
            phi: Phi::Expr(phi),
            r,
            case: None,
            arbitrary_function: None,
        }
    }

    pub fn eval(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        self.phi.eval(x, t, w)
    }

    /// True when `φ` cannot depend on `w`.
    pub fn is_deterministic(&self) -> bool {
        self.phi.is_deterministic()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Phi {
    Family(FamilyPhi),
    Omega(Omega),
    Expr(Expr),
    Transformed {
        inner: Box<Phi>,
        map: CoordinateMap,
    },
}

impl Phi {
    pub fn eval(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        match self {
            Phi::Family(f) => f.eval(x, t, w),
            Phi::Omega(o) => o.eval(x, t),
            Phi::Expr(e) => Ok(e.eval_vars(&[("x", x), ("t", t), ("w", w)])?),
            Phi::Transformed { inner, map } => {
                let old = map.inverse(x, t)?;
                Ok(map.g_x(old, t)? * inner.eval(old, t, w)?)
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            Phi::Family(f) => f.case == Case::B,
            Phi::Omega(_) => true,
            Phi::Expr(e) => !e.mentions("w"),
            Phi::Transformed { inner, .. } => inner.is_deterministic(),
        }
    }

    /// Closed form over `x`, `t`, `w`, when one exists.
    pub fn to_expr(&self) -> Option<Expr> {
        match self {
            Phi::Family(f) => f.to_expr(),
            Phi::Omega(o) => o.to_expr(),
            Phi::Expr(e) => Some(e.clone()),
            Phi::Transformed { inner, map } => {
                let inner = inner.to_expr()?;
                let (gx, inv) = (map.g_x_expr()?, map.inverse_expr()?);
                let inv = inv.substitute("y", &Expr::var("x"));
                Some(build::mul(gx, inner).substitute("x", &inv))
            }
        }
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = self.to_expr() {
            return write!(f, "{e}");
        }
        match self {
            Phi::Family(p) => f.write_str(&p.describe()),
            Phi::Omega(o) => f.write_str(&o.describe()),
            Phi::Transformed { inner, .. } => write!(f, "g_x(xi) * [{inner}](xi)"),
            Phi::Expr(e) => write!(f, "{e}"),
        }
    }
}

/// Family symmetry in uniform form, `G(x) = x^(1-k)/(1-k)` (`x` for constant
/// noise) and `T(t)` the primitive of `shift`:
///
/// * A: `x^k · P(G(x) - s·w - T(t))`
/// * B: `x^k · exp((1-k)·T(t))`
/// * C: `x^k · exp(β(1-k)(G(x) - s·w - T(t)))`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyPhi {
    pub case: Case,
    pub noise: NoiseSpec,
    pub beta: f64,
    pub shift: TimeFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Expr>,
}

impl FamilyPhi {
    pub fn eval(&self, x: f64, t: f64, w: f64) -> Result<f64> {
        let k = self.noise.k();
        let pw = self.noise.power(x);
        let shift = self.shift.primitive_at(t)?;
        let v = match self.case {
            Case::A => {
                let u = self.noise.primitive_of_inverse_power(x) - self.noise.s() * w - shift;
                match &self.p {
                    Some(p) => pw * p.eval_vars(&[("u", u)])?,
                    None => pw * u,
                }
            }
            Case::B => pw * ((1.0 - k) * shift).exp(),
            Case::C => {
                let u = self.noise.primitive_of_inverse_power(x) - self.noise.s() * w - shift;
                pw * (self.beta * (1.0 - k) * u).exp()
            }
        };
        Ok(v)
    }

    fn big_g_expr(&self) -> Expr {
        let k = self.noise.k();
        if k == 0.0 {
            Expr::var("x")
        } else {
            build::mul(Expr::num(1.0 / (1.0 - k)), build::pow_x(1.0 - k))
        }
    }

    fn to_expr(&self) -> Option<Expr> {
        use build::{mul, pow_x, sub};
        let k = self.noise.k();
        let shift = self.shift.primitive_expr()?;
        let u = || {
            sub(
                sub(self.big_g_expr(), mul(Expr::num(self.noise.s()), Expr::var("w"))),
                shift.clone(),
            )
        };
        let core = match self.case {
            Case::A => match &self.p {
                Some(p) => p.substitute("u", &u()),
                None => u(),
            },
            Case::B => Expr::exp(mul(Expr::num(1.0 - k), shift.clone())),
            Case::C => Expr::exp(mul(Expr::num(self.beta * (1.0 - k)), u())),
        };
        Some(mul(pow_x(k), core))
    }

    fn describe(&self) -> String {
        let t = self.shift.describe_primitive("T");
        format!(
            "case {} symmetry with k = {}, s = {}, beta = {}, T(t) = {t}",
            self.case,
            self.noise.k(),
            self.noise.s(),
            self.beta
        )
    }
}

/// Strict proper W-symmetry parts for constant noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Omega {
    /// `r·(x - A(t))`
    A { r: f64, shift: TimeFunction },
    /// `r·(x + (c0/c1)(1 + γ·e^(c1 t)))`
    BAutonomous { r: f64, c0: f64, c1: f64, gamma: f64 },
    /// `r·[x - e^(B(t)) (∫_0^t e^(-B) a dτ + γ)]`
    BGeneral {
        r: f64,
        gamma: f64,
        a: TimeFunction,
        b: TimeFunction,
    },
}

impl Omega {
    pub fn r(&self) -> f64 {
        match *self {
            Omega::A { r, .. } | Omega::BAutonomous { r, .. } | Omega::BGeneral { r, .. } => r,
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        match self {
            Omega::A { r, shift } => Ok(r * (x - shift.primitive_at(t)?)),
            Omega::BAutonomous { r, c0, c1, gamma } => {
                Ok(r * (x + (c0 / c1) * (1.0 + gamma * (c1 * t).exp())))
            }
            Omega::BGeneral { r, gamma, a, b } => {
                let b0 = b.primitive_at(0.0)?;
                let integral = quad::integrate_default(
                    |tau| -> Result<f64> { Ok((-(b.primitive_at(tau)? - b0)).exp() * a.at(tau)?) },
                    0.0,
                    t,
                )?
                .value;
                let growth = (b.primitive_at(t)? - b0).exp();
                Ok(r * (x - growth * (integral + gamma)))
            }
        }
    }

    fn to_expr(&self) -> Option<Expr> {
        use build::{add, mul, sub};
        match self {
            Omega::A { r, shift } => Some(mul(
                Expr::num(*r),
                sub(Expr::var("x"), shift.primitive_expr()?),
            )),
            Omega::BAutonomous { r, c0, c1, gamma } => {
                let growth = add(
                    Expr::num(1.0),
                    mul(Expr::num(*gamma), Expr::exp(mul(Expr::num(*c1), Expr::var("t")))),
                );
                Some(mul(
                    Expr::num(*r),
                    add(Expr::var("x"), mul(Expr::num(c0 / c1), growth)),
                ))
            }
            Omega::BGeneral { .. } => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            Omega::BGeneral { r, gamma, a, b } => format!(
                "{r} * (x - exp(B(t)) * (int_0^t exp(-B) * ({}) + {gamma})), B(t) = {}",
                a.value,
                b.describe_primitive("B")
            ),
            other => format!("{other:?}"),
        }
    }
}

/// A seeded discrete Brownian path on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WienerPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    /// Number of bridge refinements applied to the level-0 path.
    pub level: u32,
}

impl WienerPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    /// Linear interpolation of `w` at `t` inside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.steps();
        if n == 0 {
            return self.values[0];
        }
        let pos = ((t - self.t0()) / self.dt()).clamp(0.0, n as f64);
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    ExactA,
    ExactB,
    ExactC,
    EulerMaruyama,
    Milstein,
}

/// States on a Wiener-path grid. A truncated path stops at the first index
/// whose state would be non-finite or outside the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolutionPath {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_at: Option<usize>,
    /// Interpolated exit time for truncated paths, when it can be estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_time: Option<f64>,
}

impl SolutionPath {
    pub fn is_truncated(&self) -> bool {
        self.truncated_at.is_some()
    }

    pub fn endpoint(&self) -> Option<f64> {
        if self.is_truncated() {
            None
        } else {
            self.states.last().copied()
        }
    }

    /// State at grid index `i`, `None` past truncation.
    pub fn state(&self, i: usize) -> Option<f64> {
        self.states.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detected {
    A,
    B,
    C,
    Unclassified,
}

impl Detected {
    pub fn case(self) -> Option<Case> {
        match self {
            Detected::A => Some(Case::A),
            Detected::B => Some(Case::B),
            Detected::C => Some(Case::C),
            Detected::Unclassified => None,
        }
    }
}

impl From<Case> for Detected {
    fn from(c: Case) -> Self {
        match c {
            Case::A => Detected::A,
            Case::B => Detected::B,
            Case::C => Detected::C,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationResult {
    pub case: Detected,
    pub params: CaseParams,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<Symmetry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorReport {
    pub endpoint_abs_error: f64,
    pub max_abs_error: f64,
    pub dt: f64,
    pub n_paths: usize,
}

/// Expression builders that skip multiplications by one and additions of zero.
pub(crate) mod build {
    use crate::exprlang::{BinOp, Expr};

    fn literal(e: &Expr) -> Option<f64> {
        match e {
            Expr::Num(v) => Some(*v),
            Expr::Neg(inner) => match inner.as_ref() {
                Expr::Num(v) => Some(-v),
                _ => None,
            },
            _ => None,
        }
    }

    /// `-e` with double negations and literals folded.
    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Num(v) => Expr::num(-v),
            Expr::Neg(inner) => *inner,
            Expr::Binary(BinOp::Mul, l, r) if literal(&l).is_some() => {
                mul(Expr::num(-literal(&l).unwrap_or(0.0)), *r)
            }
            e => -e,
        }
    }

    /// The negation of `e` when `e` visibly carries a minus sign.
    fn negated(e: &Expr) -> Option<Expr> {
        match e {
            Expr::Num(v) if *v < 0.0 => Some(Expr::num(-v)),
            Expr::Neg(inner) => Some((**inner).clone()),
            Expr::Binary(BinOp::Mul, l, r) => match literal(l) {
                Some(v) if v < 0.0 => Some(mul(Expr::num(-v), (**r).clone())),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (literal(&a), literal(&b)) {
            (Some(x), Some(y)) => Expr::num(x * y),
            (Some(0.0), _) => Expr::num(0.0),
            (_, Some(0.0)) => Expr::num(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            (Some(-1.0), _) => neg(b),
            (_, Some(-1.0)) => neg(a),
            _ => a * b,
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (literal(&a), literal(&b)) {
            (Some(x), Some(y)) => Expr::num(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => match negated(&b) {
                Some(nb) => a - nb,
                None => a + b,
            },
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (literal(&a), literal(&b)) {
            (Some(x), Some(y)) => Expr::num(x - y),
            (_, Some(0.0)) => a,
            (Some(0.0), _) => neg(b),
            _ => match negated(&b) {
                Some(nb) => a + nb,
                None => a - b,
            },
        }
    }

    /// `x^k` with the trivial exponents folded.
    pub fn pow_x(k: f64) -> Expr {
        if k == 0.0 {
            Expr::num(1.0)
        } else if k == 1.0 {
            Expr::var("x")
        } else {
            Expr::var("x").pow(Expr::num(k))
        }
    }
}
