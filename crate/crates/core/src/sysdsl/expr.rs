//! Expression trees for matrix entries: lexer, recursive-descent parser,
//! canonical printer and evaluator.

use std::fmt;

use thiserror::Error;

/// Elementary functions accepted in entry expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Expression tree over an ordered variable table.
///
/// Variables are referenced by their index in the table the expression was
/// parsed against; the printer needs the same table to render names.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant integer exponent.
    Pow(Box<Expr>, i32),
}

/// Alias matching the domain vocabulary.
pub type ExpressionTree = Expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result ({0})")]
    NonFinite(f64),
    #[error("expected {expected} variable values, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Parse failure inside a single expression. Columns are 1-based and relative
/// to the start of the parsed text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("column {column}: unknown identifier `{name}`")]
    UnknownIdentifier { column: usize, name: String },
}

impl ExprError {
    pub fn column(&self) -> usize {
        match self {
            ExprError::Syntax { column, .. } | ExprError::UnknownIdentifier { column, .. } => {
                *column
            }
        }
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) | Expr::Pow(e, _) => e.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// Evaluate at `vars`. Division by an exact zero and non-finite results
    /// are reported as errors.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_inner(vars)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(v))
        }
    }

    fn eval_inner(&self, vars: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *vars.get(*i).ok_or(EvalError::Arity {
                expected: i + 1,
                got: vars.len(),
            })?,
            Expr::Neg(e) => -e.eval_inner(vars)?,
            Expr::Call(f, e) => f.apply(e.eval_inner(vars)?),
            Expr::Pow(e, k) => {
                let base = e.eval_inner(vars)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(*k)
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval_inner(vars)?;
                let y = b.eval_inner(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    /// Render with the given variable names. The output parses back to an
    /// identical tree.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }

    fn write(&self, names: &[String], out: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let wrap = self.precedence() < min_prec;
        if wrap {
            out.write_str("(")?;
        }
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(out, "(-{})", -c)?;
                } else {
                    write!(out, "{c}")?;
                }
            }
            Expr::Var(i) => match names.get(*i) {
                Some(n) => out.write_str(n)?,
                None => write!(out, "${i}")?,
            },
            Expr::Neg(e) => {
                out.write_str("-")?;
                e.write(names, out, 3)?;
            }
            Expr::Call(f, e) => {
                write!(out, "{}(", f.name())?;
                e.write(names, out, 0)?;
                out.write_str(")")?;
            }
            Expr::Pow(e, k) => {
                e.write(names, out, 5)?;
                write!(out, "^{k}")?;
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                a.write(names, out, p)?;
                write!(out, " {} ", op.symbol())?;
                b.write(names, out, p + 1)?;
            }
        }
        if wrap {
            out.write_str(")")?;
        }
        Ok(())
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(self.names, f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of expression".into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            toks.push((t, col));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                column: col,
                message: format!("malformed number `{text}`"),
            })?;
            toks.push((Tok::Num(v), col));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        return Err(ExprError::Syntax {
            column: col,
            message: format!("unexpected character `{c}`"),
        });
    }
    toks.push((Tok::End, chars.len() + 1));
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: String) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            column: self.col(),
            message,
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(match self.unary()? {
                    Expr::Const(c) => Expr::Const(-c),
                    e => Expr::Neg(Box::new(e)),
                })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let k = self.integer_exponent()?;
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn integer_exponent(&mut self) -> Result<i32, ExprError> {
        let parens = *self.peek() == Tok::LParen;
        if parens {
            self.bump();
        }
        let negative = match self.peek() {
            Tok::Minus => {
                self.bump();
                true
            }
            Tok::Plus => {
                self.bump();
                false
            }
            _ => false,
        };
        let col = self.col();
        let k = match self.bump() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            t => {
                return Err(ExprError::Syntax {
                    column: col,
                    message: format!("exponent must be a constant integer, found {}", describe(&t)),
                })
            }
        };
        if parens {
            if *self.peek() != Tok::RParen {
                return self.err(format!("expected `)`, found {}", describe(self.peek())));
            }
            self.bump();
        }
        Ok(if negative { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let col = self.col();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.err(format!("expected `)`, found {}", describe(self.peek())));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ExprError::UnknownIdentifier { column: col, name });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.err(format!("expected `)`, found {}", describe(self.peek())));
                    }
                    self.bump();
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Expr::Var(i))
                } else if name == "pi" {
                    Ok(Expr::Const(std::f64::consts::PI))
                } else {
                    Err(ExprError::UnknownIdentifier { column: col, name })
                }
            }
            t => Err(ExprError::Syntax {
                column: col,
                message: format!("expected a value, found {}", describe(&t)),
            }),
        }
    }
}

/// Parse `src` against the ordered variable table `vars`.
///
/// `pi` is a constant unless shadowed by a variable of that name. Unary minus
/// applied to a constant folds into the constant.
pub fn parse_expr(src: &str, vars: &[String]) -> Result<Expr, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, vars };
    if *p.peek() == Tok::End {
        return p.err("empty expression".into());
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}

/// Parse and evaluate an expression that may not reference variables.
pub fn eval_constant(src: &str) -> Result<f64, ExprError> {
    let e = parse_expr(src, &[])?;
    e.eval(&[]).map_err(|err| ExprError::Syntax {
        column: 1,
        message: err.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sine_entry_evaluates() {
        let vars = names(&["x1"]);
        let e = parse_expr("2*sin(x1)+1", &vars).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 1.0);
        assert!((e.eval(&[PI / 2.0]).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn affine_entry_evaluates() {
        let vars = names(&["a1", "a2"]);
        let e = parse_expr("1+2*a1", &vars).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let vars = names(&["a1"]);
        let e = parse_expr("1/a1", &vars).unwrap();
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
        let e = parse_expr("a1^-2", &vars).unwrap();
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn overflow_is_non_finite() {
        let vars = names(&["a"]);
        let e = parse_expr("exp(a)", &vars).unwrap();
        assert!(matches!(e.eval(&[1000.0]), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn unknown_identifier_reports_column() {
        let vars = names(&["x1"]);
        let err = parse_expr("2*sin(y1)", &vars).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                column: 7,
                name: "y1".into()
            }
        );
        assert!(matches!(
            parse_expr("sqrt(x1)", &vars),
            Err(ExprError::UnknownIdentifier { column: 1, .. })
        ));
    }

    #[test]
    fn syntax_errors() {
        let vars = names(&["x"]);
        assert!(matches!(parse_expr("x +", &vars), Err(ExprError::Syntax { column: 4, .. })));
        assert!(matches!(parse_expr("(x", &vars), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("x^1.5", &vars), Err(ExprError::Syntax { column: 3, .. })));
        assert!(matches!(parse_expr("x $ 2", &vars), Err(ExprError::Syntax { column: 3, .. })));
        assert!(matches!(parse_expr("   ", &vars), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = names(&["x"]);
        let e = parse_expr("-3^2", &vars).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), -9.0);
        let e = parse_expr("8 - 4 - 2", &vars).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 2.0);
        let e = parse_expr("8 / 4 / 2", &vars).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 1.0);
        let e = parse_expr("2*x^(-1) + pi", &vars).unwrap();
        assert!((e.eval(&[4.0]).unwrap() - (0.5 + PI)).abs() < 1e-15);
        let e = parse_expr("1.5e-3 * 2E2", &vars).unwrap();
        assert!((e.eval(&[]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn printer_round_trips_structure() {
        let vars = names(&["x1", "u1"]);
        for src in [
            "2*sin(x1)+1",
            "x1 - (u1 - 3)",
            "-(x1*u1)",
            "(-3)^2 - -2.5",
            "x1/(u1/2)",
            "abs(-x1)^3 * exp(cos(u1)) / tan(0.25)",
            "--x1",
            "1e-7 + 123456789012.5",
        ] {
            let a = parse_expr(src, &vars).unwrap();
            let printed = a.display(&vars).to_string();
            let b = parse_expr(&printed, &vars).unwrap();
            assert_eq!(a, b, "{src} -> {printed}");
            assert_eq!(printed, b.display(&vars).to_string());
        }
    }
}
