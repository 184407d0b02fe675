//! Arithmetic expressions over chart variables with symbolic derivatives.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`
//! (right associative), atoms. Functions: sin, cos, exp, ln, sqrt.
//! Constants: pi, e.

use std::fmt;

use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// Smart constructors fold constants and drop neutral elements so that
// repeated differentiation does not blow up the tree.

fn konst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (konst(&a), konst(&b)) {
        (Some(x), Some(y)) => Expr::Const(x.powf(y)),
        (_, Some(0.0)) => Expr::Const(1.0),
        (_, Some(1.0)) => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match konst(&a) {
        Some(x) => Expr::Const(apply(f, x)),
        None => Expr::Call(f, Box::new(a)),
    }
}

fn apply(f: Func, x: f64) -> f64 {
    match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Ln => {
            if x > 0.0 {
                x.ln()
            } else {
                f64::NAN
            }
        }
        Func::Sqrt => {
            if x >= 0.0 {
                x.sqrt()
            } else {
                f64::NAN
            }
        }
    }
}

fn ipow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else if x < 0.0 {
        f64::NAN
    } else {
        x.powf(y)
    }
}

impl Expr {
    /// Evaluates at `p`. Domain violations produce NaN; see [`Expr::try_eval`].
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => p[*i],
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, b) => ipow(a.eval(p), b.eval(p)),
            Expr::Call(f, a) => apply(*f, a.eval(p)),
        }
    }

    /// Evaluates at `p`, reporting the first domain violation encountered.
    pub fn try_eval(&self, p: &[f64]) -> Result<f64, Error> {
        let dom = |msg: String| Err(Error::Domain(msg));
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => p[*i],
            Expr::Neg(a) => -a.try_eval(p)?,
            Expr::Add(a, b) => a.try_eval(p)? + b.try_eval(p)?,
            Expr::Sub(a, b) => a.try_eval(p)? - b.try_eval(p)?,
            Expr::Mul(a, b) => a.try_eval(p)? * b.try_eval(p)?,
            Expr::Div(a, b) => {
                let d = b.try_eval(p)?;
                if d == 0.0 {
                    return dom(format!("division by zero in `{self}`"));
                }
                a.try_eval(p)? / d
            }
            Expr::Pow(a, b) => {
                let (x, y) = (a.try_eval(p)?, b.try_eval(p)?);
                let v = ipow(x, y);
                if v.is_nan() {
                    return dom(format!("{x}^{y} is undefined in `{self}`"));
                }
                v
            }
            Expr::Call(f, a) => {
                let x = a.try_eval(p)?;
                let v = apply(*f, x);
                if v.is_nan() {
                    return dom(format!("{}({x}) is undefined", f.name()));
                }
                v
            }
        })
    }

    /// Symbolic partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(i)),
            Expr::Add(a, b) => add(a.diff(i), b.diff(i)),
            Expr::Sub(a, b) => sub(a.diff(i), b.diff(i)),
            Expr::Mul(a, b) => add(
                mul(a.diff(i), (**b).clone()),
                mul((**a).clone(), b.diff(i)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(i), (**b).clone()),
                    mul((**a).clone(), b.diff(i)),
                ),
                pow((**b).clone(), Expr::Const(2.0)),
            ),
            Expr::Pow(a, b) => {
                let da = a.diff(i);
                if let Some(n) = konst(b) {
                    return mul(
                        mul(Expr::Const(n), pow((**a).clone(), Expr::Const(n - 1.0))),
                        da,
                    );
                }
                // d(a^b) = a^b (b' ln a + b a'/a)
                let db = b.diff(i);
                let inner = add(
                    mul(db, call(Func::Ln, (**a).clone())),
                    div(mul((**b).clone(), da), (**a).clone()),
                );
                mul(self.clone(), inner)
            }
            Expr::Call(f, a) => {
                let da = a.diff(i);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Expr::Const(1.0), a),
                    Func::Sqrt => div(Expr::Const(0.5), call(Func::Sqrt, a)),
                };
                mul(outer, da)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, names: Option<&[&str]>) -> fmt::Result {
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| -> fmt::Result {
            write!(f, "(")?;
            a.fmt_with(f, names)?;
            write!(f, " {op} ")?;
            b.fmt_with(f, names)?;
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => match names {
                Some(n) => write!(f, "{}", n[*i]),
                None => write!(f, "v{i}"),
            },
            Expr::Neg(a) => {
                write!(f, "-(")?;
                a.fmt_with(f, names)?;
                write!(f, ")")
            }
            Expr::Add(a, b) => bin(f, a, "+", b),
            Expr::Sub(a, b) => bin(f, a, "-", b),
            Expr::Mul(a, b) => bin(f, a, "*", b),
            Expr::Div(a, b) => bin(f, a, "/", b),
            Expr::Pow(a, b) => bin(f, a, "^", b),
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_with(f, names)?;
                write!(f, ")")
            }
        }
    }

    pub fn display<'a>(&'a self, names: &'a [&'a str]) -> impl fmt::Display + 'a {
        struct Named<'a>(&'a Expr, &'a [&'a str]);
        impl fmt::Display for Named<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt_with(f, Some(self.1))
            }
        }
        Named(self, names)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, None)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, Error> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only if followed by digits
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    i = k;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| Error::Parse {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Tok::Open));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::Close));
            i += 1;
        } else {
            return Err(Error::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, Error> {
        Err(Error::Parse {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { add(lhs, rhs) } else { sub(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { mul(lhs, rhs) } else { div(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.at += 1;
                Ok(neg(self.unary()?))
            }
            Some(Tok::Op('+')) => {
                self.at += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, Error> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.at += 1;
            let exp = self.unary()?;
            return Ok(pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, Error> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Open) => {
                self.at += 1;
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::Close) => {
                        self.at += 1;
                        Ok(e)
                    }
                    _ => self.err("expected `)`"),
                }
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() != Some(&Tok::Open) {
                        return self.err(format!("expected `(` after `{name}`"));
                    }
                    self.at += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Tok::Close) {
                        return self.err("expected `)`");
                    }
                    self.at += 1;
                    return Ok(call(f, arg));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    _ => Err(Error::UnknownIdentifier { name, pos }),
                }
            }
            Some(Tok::Close) => self.err("unexpected `)`"),
            Some(Tok::Op(c)) => self.err(format!("unexpected operator `{c}`")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parses `src` with the given chart variable names.
pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, Error> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: src.len(),
        vars,
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: [&str; 5] = ["x", "y", "z", "u", "v"];

    #[test]
    fn precedence_and_associativity() {
        let e = parse("2^3^2", &V).unwrap();
        assert_eq!(e.eval(&[0.0; 5]), 512.0);
        let e = parse("-x^2", &V).unwrap();
        assert_eq!(e.eval(&[3.0, 0.0, 0.0, 0.0, 0.0]), -9.0);
        let e = parse("1 - 2 - 3", &V).unwrap();
        assert_eq!(e.eval(&[0.0; 5]), -4.0);
        let e = parse("8/4/2", &V).unwrap();
        assert_eq!(e.eval(&[0.0; 5]), 1.0);
        let e = parse("2*pi + e - 1.5e1", &V).unwrap();
        let want = 2.0 * std::f64::consts::PI + std::f64::consts::E - 15.0;
        assert!((e.eval(&[0.0; 5]) - want).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        match parse("x + * y", &V) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match parse("x + w", &V) {
            Err(Error::UnknownIdentifier { name, pos }) => {
                assert_eq!(name, "w");
                assert_eq!(pos, 4);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("(x", &V), Err(Error::Parse { pos: 2, .. })));
        assert!(matches!(parse("sin x", &V), Err(Error::Parse { .. })));
        assert!(matches!(parse("x $", &V), Err(Error::Parse { pos: 2, .. })));
    }

    #[test]
    fn domain_errors_at_evaluation() {
        let e = parse("ln(z)", &V).unwrap();
        assert!(e.try_eval(&[0.0, 0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(e.eval(&[0.0, 0.0, -1.0, 0.0, 0.0]).is_nan());
        assert!((e.try_eval(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()).abs() < 1e-15);
        let e = parse("1/x", &V).unwrap();
        assert!(e.try_eval(&[0.0; 5]).is_err());
    }

    #[test]
    fn derivatives_of_elementary_functions() {
        let p = [0.3, -0.7, 0.5, 1.1, 0.2];
        let cases = [
            ("sin(x*y)", 0),
            ("cos(x)^2 + exp(u*v)", 3),
            ("ln(1 + z^2) * sqrt(2 + x)", 2),
            ("x^y", 1),
            ("(u^2+v^2)/(1+z^2)", 2),
        ];
        for (src, i) in cases {
            let e = parse(src, &V).unwrap();
            let d = e.diff(i);
            let h = 1e-6;
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (e.eval(&a) - e.eval(&b)) / (2.0 * h);
            assert!((d.eval(&p) - fd).abs() < 1e-7, "{src}: {} vs {fd}", d.eval(&p));
        }
    }

    #[test]
    fn constants_fold() {
        let e = parse("0", &V).unwrap();
        assert!(e.is_zero());
        assert!(e.diff(0).is_zero());
        let e = parse("(u^2+v^2)/2 + z", &V).unwrap();
        assert!(e.diff(0).is_zero());
    }
}
