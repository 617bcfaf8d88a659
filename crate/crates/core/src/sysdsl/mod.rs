//! System descriptions: the coefficient matrix function `L(alpha)` given
//! entry-by-entry as arithmetic expressions over a named variable list.
//!
//! Text format, one directive per line, `#` starts a comment:
//!
//! ```text
//! dims: 2 1 1            # nx nu ny
//! vars: x1
//! bounds: x1 -pi/2 pi/2  # optional, repeatable
//! L[1,1] = 2*sin(x1) + 1
//! L[1,2] = 3*x1 + 5
//! ```
//!
//! Entry indices are 1-based; omitted entries are zero.

mod expr;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use expr::{eval_constant, parse_expr, BinOp, EvalError, Expr, ExprError, ExpressionTree, Func};

/// State, input and output counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

impl Dims {
    pub fn new(nx: usize, nu: usize, ny: usize) -> Self {
        Self { nx, nu, ny }
    }

    /// Row count of `L`, `nx + ny`.
    pub fn rows(&self) -> usize {
        self.nx + self.ny
    }

    /// Column count of `L`, `nx + nu`.
    pub fn cols(&self) -> usize {
        self.nx + self.nu
    }

    /// Length of the row-major vectorization of `L`.
    pub fn n_gamma(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Position of entry `(i, j)` (0-based) in the row-major vectorization.
    pub fn row_of_entry(&self, i: usize, j: usize) -> usize {
        i * self.cols() + j
    }

    /// Inverse of [`Dims::row_of_entry`].
    pub fn entry_of_row(&self, r: usize) -> (usize, usize) {
        (r / self.cols(), r % self.cols())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: unknown identifier `{name}`")]
    UnknownIdentifier {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Evaluation failure at a specific entry of `L`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("entry ({row},{col}): {source}")]
pub struct EntryEvalError {
    /// 1-based row of `L`.
    pub row: usize,
    /// 1-based column of `L`.
    pub col: usize,
    pub source: EvalError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDescription {
    dims: Dims,
    variable_names: Vec<String>,
    entries: Vec<Expr>,
    alpha_box: Option<Vec<(f64, f64)>>,
}

impl SystemDescription {
    /// Build from a row-major grid of entries.
    pub fn new(
        dims: Dims,
        variable_names: Vec<String>,
        entries: Vec<Expr>,
        alpha_box: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, SysError> {
        if entries.len() != dims.n_gamma() {
            return Err(SysError::DimensionMismatch(format!(
                "expected {}x{} = {} entries, got {}",
                dims.rows(),
                dims.cols(),
                dims.n_gamma(),
                entries.len()
            )));
        }
        for (r, e) in entries.iter().enumerate() {
            if let Some(v) = e.max_var() {
                if v >= variable_names.len() {
                    let (i, j) = dims.entry_of_row(r);
                    return Err(SysError::DimensionMismatch(format!(
                        "entry ({},{}) references variable #{} but only {} are declared",
                        i + 1,
                        j + 1,
                        v + 1,
                        variable_names.len()
                    )));
                }
            }
        }
        if let Some(b) = &alpha_box {
            if b.len() != variable_names.len() {
                return Err(SysError::DimensionMismatch(format!(
                    "{} bound pairs for {} variables",
                    b.len(),
                    variable_names.len()
                )));
            }
            if let Some((k, _)) = b.iter().enumerate().find(|(_, (lo, hi))| !(lo <= hi)) {
                return Err(SysError::DimensionMismatch(format!(
                    "bounds for `{}` have lower > upper",
                    variable_names[k]
                )));
            }
        }
        Ok(Self {
            dims,
            variable_names,
            entries,
            alpha_box,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    /// Row-major entry grid.
    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    /// Entry `(i, j)`, 0-based.
    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[self.dims.row_of_entry(i, j)]
    }

    pub fn alpha_box(&self) -> Option<&[(f64, f64)]> {
        self.alpha_box.as_deref()
    }

    /// Indices of variables lying outside the declared box at `alpha`.
    pub fn box_violations(&self, alpha: &[f64]) -> Vec<usize> {
        match &self.alpha_box {
            None => Vec::new(),
            Some(b) => b
                .iter()
                .zip(alpha)
                .enumerate()
                .filter(|(_, ((lo, hi), a))| **a < *lo || **a > *hi)
                .map(|(k, _)| k)
                .collect(),
        }
    }

    fn check_arity(&self, alpha: &[f64]) -> Result<(), EntryEvalError> {
        if alpha.len() != self.n_vars() {
            return Err(EntryEvalError {
                row: 0,
                col: 0,
                source: EvalError::Arity {
                    expected: self.n_vars(),
                    got: alpha.len(),
                },
            });
        }
        Ok(())
    }

    /// Row-major vectorization `Gamma(alpha)` of `L(alpha)`.
    pub fn eval_gamma(&self, alpha: &[f64]) -> Result<DVector<f64>, EntryEvalError> {
        self.check_arity(alpha)?;
        let mut out = DVector::zeros(self.dims.n_gamma());
        for (r, e) in self.entries.iter().enumerate() {
            out[r] = e.eval(alpha).map_err(|source| {
                let (i, j) = self.dims.entry_of_row(r);
                EntryEvalError {
                    row: i + 1,
                    col: j + 1,
                    source,
                }
            })?;
        }
        Ok(out)
    }

    /// `L(alpha)` as an `(nx+ny) x (nx+nu)` matrix.
    ///
    /// Points outside the declared box are evaluated anyway; the violation is
    /// logged as a warning (see [`SystemDescription::box_violations`]).
    pub fn eval_matrix(&self, alpha: &[f64]) -> Result<DMatrix<f64>, EntryEvalError> {
        let gamma = self.eval_gamma(alpha)?;
        let violations = self.box_violations(alpha);
        if !violations.is_empty() {
            log::warn!("evaluation point outside the declared box in variables {violations:?}");
        }
        Ok(reshape_row_major(gamma.as_slice(), self.dims.rows(), self.dims.cols()))
    }

    /// Canonical text form; parses back to an equal description.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        hex::encode(h.finalize())
    }
}

impl fmt::Display for SystemDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dims: {} {} {}", self.dims.nx, self.dims.nu, self.dims.ny)?;
        writeln!(f, "vars: {}", self.variable_names.join(" "))?;
        if let Some(b) = &self.alpha_box {
            for (name, (lo, hi)) in self.variable_names.iter().zip(b) {
                if lo.is_finite() || hi.is_finite() {
                    writeln!(f, "bounds: {name} {} {}", fmt_bound(*lo), fmt_bound(*hi))?;
                }
            }
        }
        for (r, e) in self.entries.iter().enumerate() {
            if e.is_zero_const() {
                continue;
            }
            let (i, j) = self.dims.entry_of_row(r);
            writeln!(f, "L[{},{}] = {}", i + 1, j + 1, e.display(&self.variable_names))?;
        }
        Ok(())
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_sign_negative() {
        format!("-{}", -v)
    } else {
        format!("{v}")
    }
}

/// Reverse of the row-major vectorization.
pub fn reshape_row_major(data: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Row-major vectorization of a matrix.
pub fn vectorize_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.transpose().iter().copied())
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> SysError {
    SysError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lift(err: ExprError, line: usize, offset: usize) -> SysError {
    match err {
        ExprError::Syntax { column, message } => syntax(line, column + offset, message),
        ExprError::UnknownIdentifier { column, name } => SysError::UnknownIdentifier {
            line,
            column: column + offset,
            name,
        },
    }
}

fn parse_bound(tok: &str, line: usize, column: usize) -> Result<f64, SysError> {
    match tok {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => eval_constant(tok).map_err(|e| lift(e, line, column - 1)),
    }
}

/// Parse a system description document.
pub fn parse_system(text: &str) -> Result<SystemDescription, SysError> {
    let mut dims: Option<(Dims, usize)> = None;
    let mut vars: Option<Vec<String>> = None;
    let mut bounds: Vec<(usize, usize, String, f64, f64)> = Vec::new();
    // (line, entry-row, entry-col, expression text, column offset)
    let mut entries: Vec<(usize, usize, usize, String, usize)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim_start();
        if trimmed.trim().is_empty() {
            continue;
        }
        let indent = line.len() - trimmed.len();
        if let Some(rest) = trimmed.strip_prefix("dims:") {
            let base = indent + "dims:".len();
            let nums: Vec<(usize, &str)> = split_tokens(rest, base);
            if nums.len() != 3 {
                return Err(syntax(line_no, base + 1, "`dims:` expects three counts: nx nu ny"));
            }
            let mut parsed = [0usize; 3];
            for (k, (col, tok)) in nums.iter().enumerate() {
                parsed[k] = tok
                    .parse()
                    .map_err(|_| syntax(line_no, *col, format!("expected a count, found `{tok}`")))?;
            }
            if dims.is_some() {
                return Err(syntax(line_no, indent + 1, "duplicate `dims:` line"));
            }
            dims = Some((Dims::new(parsed[0], parsed[1], parsed[2]), line_no));
        } else if let Some(rest) = trimmed.strip_prefix("vars:") {
            let base = indent + "vars:".len();
            let names: Vec<(usize, &str)> = split_tokens(rest, base);
            if vars.is_some() {
                return Err(syntax(line_no, indent + 1, "duplicate `vars:` line"));
            }
            let mut list: Vec<String> = Vec::new();
            for (col, name) in names {
                let valid = name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                    && name.chars().all(|c| c.is_alphanumeric() || c == '_');
                if !valid {
                    return Err(syntax(line_no, col, format!("invalid variable name `{name}`")));
                }
                if ["sin", "cos", "tan", "exp", "abs"].contains(&name) {
                    return Err(syntax(line_no, col, format!("`{name}` is a reserved function name")));
                }
                if list.iter().any(|n| n == name) {
                    return Err(syntax(line_no, col, format!("duplicate variable `{name}`")));
                }
                list.push(name.to_string());
            }
            vars = Some(list);
        } else if let Some(rest) = trimmed.strip_prefix("bounds:") {
            let base = indent + "bounds:".len();
            let toks: Vec<(usize, &str)> = split_tokens(rest, base);
            if toks.len() != 3 {
                return Err(syntax(line_no, base + 1, "`bounds:` expects: name lower upper"));
            }
            let lo = parse_bound(toks[1].1, line_no, toks[1].0)?;
            let hi = parse_bound(toks[2].1, line_no, toks[2].0)?;
            bounds.push((line_no, toks[0].0, toks[0].1.to_string(), lo, hi));
        } else if trimmed.starts_with("L[") {
            let close = trimmed
                .find(']')
                .ok_or_else(|| syntax(line_no, indent + 1, "missing `]` in entry index"))?;
            let idx = &trimmed[2..close];
            let mut parts = idx.split(',');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(syntax(line_no, indent + 3, "entry index must be `L[row,col]`"));
            };
            let i: usize = a
                .trim()
                .parse()
                .map_err(|_| syntax(line_no, indent + 3, format!("bad row index `{}`", a.trim())))?;
            let j: usize = b.trim().parse().map_err(|_| {
                syntax(line_no, indent + 4 + a.len(), format!("bad column index `{}`", b.trim()))
            })?;
            let after = &trimmed[close + 1..];
            let eq_rel = after
                .find('=')
                .ok_or_else(|| syntax(line_no, indent + close + 2, "expected `=` after entry index"))?;
            if !after[..eq_rel].trim().is_empty() {
                return Err(syntax(line_no, indent + close + 2, "expected `=` after entry index"));
            }
            let expr_start = indent + close + 1 + eq_rel + 1;
            let expr_text = line[expr_start..].to_string();
            entries.push((line_no, i, j, expr_text, expr_start));
        } else {
            return Err(syntax(
                line_no,
                indent + 1,
                format!("unrecognised directive `{}`", trimmed.split_whitespace().next().unwrap_or("")),
            ));
        }
    }

    let (dims, _) = dims.ok_or_else(|| syntax(1, 1, "missing `dims:` line"))?;
    let vars = vars.ok_or_else(|| syntax(1, 1, "missing `vars:` line"))?;

    let mut grid: Vec<Option<Expr>> = vec![None; dims.n_gamma()];
    for (line_no, i, j, text, offset) in entries {
        if i == 0 || j == 0 || i > dims.rows() || j > dims.cols() {
            return Err(SysError::DimensionMismatch(format!(
                "line {line_no}: entry L[{i},{j}] outside the declared {}x{} grid",
                dims.rows(),
                dims.cols()
            )));
        }
        let r = dims.row_of_entry(i - 1, j - 1);
        if grid[r].is_some() {
            return Err(syntax(line_no, 1, format!("duplicate entry L[{i},{j}]")));
        }
        grid[r] = Some(if text.trim().is_empty() {
            Expr::zero()
        } else {
            parse_expr(&text, &vars).map_err(|e| lift(e, line_no, offset))?
        });
    }

    let alpha_box = if bounds.is_empty() {
        None
    } else {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); vars.len()];
        for (line_no, col, name, lo, hi) in bounds {
            let k = vars.iter().position(|v| *v == name).ok_or(SysError::UnknownIdentifier {
                line: line_no,
                column: col,
                name: name.clone(),
            })?;
            if lo > hi {
                return Err(syntax(line_no, col, format!("bounds for `{name}` have lower > upper")));
            }
            b[k] = (lo, hi);
        }
        Some(b)
    };

    SystemDescription::new(
        dims,
        vars,
        grid.into_iter().map(|e| e.unwrap_or_else(Expr::zero)).collect(),
        alpha_box,
    )
}

/// Whitespace-separated tokens with their 1-based column, given the byte
/// offset of `s` within its line.
fn split_tokens(s: &str, base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, c) in s.char_indices() {
        if c.is_whitespace() {
            if let Some(st) = start.take() {
                out.push((base + st + 1, &s[st..k]));
            }
        } else if start.is_none() {
            start = Some(k);
        }
    }
    if let Some(st) = start {
        out.push((base + st + 1, &s[st..]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
# two states, one input, one output
dims: 2 1 1
vars: x1
bounds: x1 -pi/2 pi/2
L[1,1] = 2*sin(x1)+1
L[1,2] = 3*x1 + 5
L[2,1] = x1
L[2,3] = 1
L[3,1] = sin(x1)
L[3,2] = 2*x1   # trailing comment
";

    #[test]
    fn parses_and_evaluates() {
        let sys = parse_system(EXAMPLE).unwrap();
        assert_eq!(sys.dims(), Dims::new(2, 1, 1));
        let m = sys.eval_matrix(&[0.0]).unwrap();
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        );
        let b = sys.alpha_box().unwrap()[0];
        assert!((b.1 - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn omitted_entries_are_zero() {
        let sys = parse_system("dims: 1 1 0\nvars: a\nL[1,2] =\n").unwrap();
        assert!(sys.entries().iter().all(|e| e.is_zero_const()));
        assert_eq!(sys.eval_matrix(&[3.0]).unwrap(), DMatrix::zeros(1, 2));
    }

    #[test]
    fn unknown_identifier_has_location() {
        let err = parse_system("dims: 1 1 1\nvars: x1\nL[1,1] = 2*sin(y1)\n").unwrap_err();
        assert_eq!(
            err,
            SysError::UnknownIdentifier {
                line: 3,
                column: 16,
                name: "y1".into()
            }
        );
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_system("dims: 1 0 0\nvars: a\n  L[1,1] = a + * 2\n").unwrap_err();
        assert_eq!(
            err,
            SysError::Syntax {
                line: 3,
                column: 16,
                message: "expected a value, found `*`".into()
            }
        );
    }

    #[test]
    fn entry_outside_grid_is_dimension_mismatch() {
        let err = parse_system("dims: 1 1 1\nvars: a\nL[3,1] = a\n").unwrap_err();
        assert!(matches!(err, SysError::DimensionMismatch(_)));
    }

    #[test]
    fn missing_headers_and_bad_bounds() {
        assert!(matches!(parse_system("vars: a\n"), Err(SysError::Syntax { .. })));
        assert!(matches!(parse_system("dims: 1 1 1\n"), Err(SysError::Syntax { .. })));
        assert!(matches!(
            parse_system("dims: 1 1 1\nvars: a\nbounds: b 0 1\n"),
            Err(SysError::UnknownIdentifier { line: 3, .. })
        ));
        assert!(matches!(
            parse_system("dims: 1 1 1\nvars: a\nbounds: a 2 1\n"),
            Err(SysError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            parse_system("dims: 1 1 1\nvars: a a\n"),
            Err(SysError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn canonical_text_round_trips() {
        let sys = parse_system(EXAMPLE).unwrap();
        let again = parse_system(&sys.to_text()).unwrap();
        assert_eq!(sys, again);
        assert_eq!(sys.to_text(), again.to_text());
        assert_eq!(sys.digest(), again.digest());
    }

    #[test]
    fn out_of_box_is_not_an_error() {
        let sys = parse_system(EXAMPLE).unwrap();
        assert_eq!(sys.box_violations(&[2.0]), vec![0]);
        assert!(sys.eval_matrix(&[2.0]).is_ok());
    }

    #[test]
    fn constant_system_ignores_alpha() {
        let sys = parse_system("dims: 1 1 1\nvars: a b\nL[1,1] = -1\nL[1,2]=1\nL[2,1]=1\n").unwrap();
        let m0 = sys.eval_matrix(&[0.0, 0.0]).unwrap();
        assert_eq!(m0, sys.eval_matrix(&[5.0, -3.0]).unwrap());
    }

    #[test]
    fn vectorization_helpers_are_inverse() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = vectorize_row_major(&m);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(reshape_row_major(v.as_slice(), 2, 3), m);
        let d = Dims::new(2, 1, 1);
        for r in 0..d.n_gamma() {
            let (i, j) = d.entry_of_row(r);
            assert_eq!(d.row_of_entry(i, j), r);
        }
    }
}
