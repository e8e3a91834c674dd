use std::fmt;

use super::{Bindings, EvalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Pow,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt, Func::Pow];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Literals produced by the parser are never negative;
/// a leading minus is always a [`Expr::Neg`] node.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Expr {
    /// Literal constructor that keeps the non-negative literal invariant.
    pub fn num(value: f64) -> Expr {
        if value.is_sign_negative() && value != 0.0 {
            Expr::Neg(Box::new(Expr::Num(-value)))
        } else {
            Expr::Num(value)
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, vec![arg])
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::call(Func::Exp, arg)
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::Binary(BinOp::Pow, Box::new(self), Box::new(exponent))
    }

    fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 => PREC_NEG,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    pub fn eval(&self, env: &Bindings) -> Result<f64, EvalError> {
        self.eval_fn(&|name| env.get(name))
    }

    /// Evaluates with a small slice of bindings.
    pub fn eval_vars(&self, vars: &[(&str, f64)]) -> Result<f64, EvalError> {
        self.eval_fn(&|name| vars.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
    }

    /// Evaluates with variables resolved by `lookup`; avoids building a
    /// [`Bindings`] in hot loops.
    pub fn eval_fn(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => lookup(name)
                .or_else(|| builtin_constant(name))
                .ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(inner) => Ok(-inner.eval_fn(lookup)?),
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval_fn(lookup)?;
                let b = rhs.eval_fn(lookup)?;
                let value = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                };
                self.finite(value)
            }
            Expr::Call(func, args) => {
                let a = args[0].eval_fn(lookup)?;
                let value = match func {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.domain("logarithm of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain("square root of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Pow => a.powf(args[1].eval_fn(lookup)?),
                };
                self.finite(value)
            }
        }
    }

    fn domain(&self, reason: &str) -> EvalError {
        EvalError::Domain {
            expr: self.to_string(),
            reason: reason.to_string(),
        }
    }

    fn finite(&self, value: f64) -> Result<f64, EvalError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    /// True when `name` occurs as a variable anywhere in the tree.
    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => v == name,
            Expr::Neg(inner) => inner.mentions(name),
            Expr::Binary(_, lhs, rhs) => lhs.mentions(name) || rhs.mentions(name),
            Expr::Call(_, args) => args.iter().any(|a| a.mentions(name)),
        }
    }

    /// Free variable names in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Neg(inner) => inner.collect_vars(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Replaces every occurrence of variable `name` by `value`.
    pub fn substitute(&self, name: &str, value: &Expr) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(v) if v == name => value.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Neg(inner) => Expr::Neg(Box::new(inner.substitute(name, value))),
            Expr::Binary(op, lhs, rhs) => {
                Expr::binary(*op, lhs.substitute(name, value), rhs.substitute(name, value))
            }
            Expr::Call(func, args) => {
                Expr::Call(*func, args.iter().map(|a| a.substitute(name, value)).collect())
            }
        }
    }

    /// Symbolic derivative with respect to `name`. No simplification beyond
    /// dropping branches whose variable is absent.
    pub fn derivative(&self, name: &str) -> Expr {
        if !self.mentions(name) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(_) => Expr::Num(1.0),
            Expr::Neg(inner) => -inner.derivative(name),
            Expr::Binary(op, lhs, rhs) => {
                let (u, v) = (lhs.as_ref(), rhs.as_ref());
                match op {
                    BinOp::Add => u.derivative(name) + v.derivative(name),
                    BinOp::Sub => u.derivative(name) - v.derivative(name),
                    BinOp::Mul => u.derivative(name) * v.clone() + u.clone() * v.derivative(name),
                    BinOp::Div => {
                        (u.derivative(name) * v.clone() - u.clone() * v.derivative(name))
                            / v.clone().pow(Expr::Num(2.0))
                    }
                    BinOp::Pow => power_derivative(u, v, name),
                }
            }
            Expr::Call(func, args) => {
                let u = &args[0];
                let du = u.derivative(name);
                match func {
                    Func::Exp => self.clone() * du,
                    Func::Log => du / u.clone(),
                    Func::Sin => Expr::call(Func::Cos, u.clone()) * du,
                    Func::Cos => -(Expr::call(Func::Sin, u.clone()) * du),
                    Func::Sqrt => du / (Expr::Num(2.0) * self.clone()),
                    Func::Pow => power_derivative(u, &args[1], name),
                }
            }
        }
    }
}

fn power_derivative(base: &Expr, exponent: &Expr, name: &str) -> Expr {
    if !exponent.mentions(name) {
        exponent.clone()
            * base.clone().pow(exponent.clone() - Expr::Num(1.0))
            * base.derivative(name)
    } else {
        base.clone().pow(exponent.clone())
            * (exponent.derivative(name) * Expr::call(Func::Log, base.clone())
                + exponent.clone() * base.derivative(name) / base.clone())
    }
}

fn builtin_constant(name: &str) -> Option<f64> {
    match name {
        "pi" => Some(std::f64::consts::PI),
        "e" => Some(std::f64::consts::E),
        _ => None,
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $op:expr) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
    };
}

impl_op!(Add, add, BinOp::Add);
impl_op!(Sub, sub, BinOp::Sub);
impl_op!(Mul, mul, BinOp::Mul);
impl_op!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "-{}", Number(-v)),
            Expr::Num(v) => write!(f, "{}", Number(*v)),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_child(f, inner, inner.precedence() < PREC_NEG)
            }
            Expr::Binary(op, lhs, rhs) => {
                let p = op.precedence();
                let (lp, rp) = (lhs.precedence(), rhs.precedence());
                let (left_parens, right_parens) = if *op == BinOp::Pow {
                    (lp <= p, rp < p)
                } else {
                    (lp < p, rp <= p && rp != PREC_NEG)
                };
                write_child(f, lhs, left_parens)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, rhs, right_parens)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Integers without a trailing `.0`, everything else in round-trip form.
struct Number(f64);

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v.fract() == 0.0 && v.abs() < 1e15 {
            write!(f, "{v}")
        } else {
            write!(f, "{v:?}")
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}
