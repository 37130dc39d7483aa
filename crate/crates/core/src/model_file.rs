//! Line-oriented model files.
//!
//! ```text
//! # comment
//! system <name>
//! dim <n>
//! param <id> = <constant expression>     # repeatable; may use earlier params
//! f<i> = <expr>                          # i = 1..n, any order
//! c = [<expr>, ..., <expr>]              # must fold to constants
//! psi = <expr>
//! ```
//!
//! Keys may appear in any order, but each at most once. Text after `#` is
//! ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{ModelError, ParseError};
use crate::expr::{parse_expression, Expr};
use crate::model::SystemModel;

/// Parsed contents of a model file, before building the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub name: String,
    pub dim: usize,
    /// Parameters in file order, with their evaluated values.
    pub params: Vec<(String, f64)>,
    pub f: Vec<Expr>,
    pub c: Vec<Expr>,
    pub psi: Expr,
}

fn shift(err: ParseError, by: usize) -> ParseError {
    match err {
        ParseError::Syntax { offset, message } => ParseError::Syntax { offset: offset + by, message },
        ParseError::UnknownFunction { name, offset } => ParseError::UnknownFunction { name, offset: offset + by },
    }
}

fn parse_at(text: &str, line: usize, col: usize) -> Result<Expr, ModelError> {
    parse_expression(text).map_err(|e| ModelError::Parse { line, source: shift(e, col) })
}

fn format_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Format { line, message: message.into() }
}

/// Split a bracketed list on top-level commas, returning `(offset, slice)` pairs.
fn split_list(body: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &body[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &body[start..]));
    out
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<ModelFile, ModelError> {
        let mut name = None;
        let mut dim: Option<(usize, usize)> = None;
        let mut params: Vec<(String, f64)> = Vec::new();
        let mut bound = BTreeMap::new();
        let mut f: BTreeMap<usize, (usize, Expr)> = BTreeMap::new();
        let mut c: Option<(usize, Vec<Expr>)> = None;
        let mut psi = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let lead = content.len() - content.trim_start().len();

            if let Some(rest) = trimmed.strip_prefix("system ") {
                if name.is_some() {
                    return Err(format_err(line, "duplicate `system` line"));
                }
                name = Some(rest.trim().to_string());
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("dim ") {
                if dim.is_some() {
                    return Err(format_err(line, "duplicate `dim` line"));
                }
                let n: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| format_err(line, format!("invalid dimension `{}`", rest.trim())))?;
                if n == 0 {
                    return Err(format_err(line, "dimension must be positive"));
                }
                dim = Some((n, line));
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("param ") {
                let (id, value) = rest
                    .split_once('=')
                    .ok_or_else(|| format_err(line, "expected `param <id>=<value>`"))?;
                let id = id.trim();
                let id_ok = id.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic() || ch == '_')
                    && id.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
                if !id_ok || matches!(parse_expression(id), Ok(Expr::Var(_))) {
                    return Err(format_err(line, format!("invalid parameter name `{id}`")));
                }
                if bound.contains_key(id) {
                    return Err(format_err(line, format!("parameter `{id}` bound twice")));
                }
                let col = lead + "param ".len() + rest.find('=').unwrap() + 1;
                let e = parse_at(value, line, col)?;
                if e.max_var() > 0 {
                    return Err(format_err(line, "parameter values cannot depend on the state"));
                }
                let v = e.eval(&[], &bound).map_err(|err| match err {
                    crate::error::EvalError::UnboundParameter(p) => ModelError::UnboundParameter(p),
                    other => ModelError::Eval(other),
                })?;
                bound.insert(id.to_string(), v);
                params.push((id.to_string(), v));
                continue;
            }

            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| format_err(line, format!("unrecognized line `{trimmed}`")))?;
            let key = key.trim();
            let col = lead + trimmed.find('=').unwrap() + 1;
            if key == "psi" {
                if psi.is_some() {
                    return Err(format_err(line, "duplicate `psi` line"));
                }
                psi = Some(parse_at(value, line, col)?);
            } else if key == "c" {
                if c.is_some() {
                    return Err(format_err(line, "duplicate `c` line"));
                }
                let v = value.trim();
                let inner = v
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| format_err(line, "expected `c = [e1, ..., en]`"))?;
                let base = col + (value.len() - value.trim_start().len()) + 1;
                let entries = split_list(inner)
                    .into_iter()
                    .map(|(off, s)| parse_at(s, line, base + off))
                    .collect::<Result<Vec<_>, _>>()?;
                c = Some((line, entries));
            } else if let Some(i) = key.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
                if i == 0 {
                    return Err(format_err(line, "field components are numbered from 1"));
                }
                if f.contains_key(&i) {
                    return Err(format_err(line, format!("duplicate `f{i}` line")));
                }
                f.insert(i, (line, parse_at(value, line, col)?));
            } else {
                return Err(format_err(line, format!("unknown key `{key}`")));
            }
        }

        let name = name.ok_or_else(|| format_err(0, "missing `system` line"))?;
        let (n, dim_line) = dim.ok_or_else(|| format_err(0, "missing `dim` line"))?;
        let psi = psi.ok_or_else(|| format_err(0, "missing `psi` line"))?;
        let (c_line, c) = c.ok_or_else(|| format_err(0, "missing `c` line"))?;

        if f.len() != n || f.keys().next_back() != Some(&n) {
            return Err(ModelError::DimensionMismatch(format!(
                "dim {n} (line {dim_line}) but field components {:?} given",
                f.keys().map(|i| format!("f{i}")).collect::<Vec<_>>()
            )));
        }
        if c.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "dim {n} but c on line {c_line} has {} entries",
                c.len()
            )));
        }
        Ok(ModelFile { name, dim: n, params, f: f.into_values().map(|(_, e)| e).collect(), c, psi })
    }

    pub fn into_model(self) -> Result<SystemModel, ModelError> {
        let params = self.params.into_iter().collect();
        SystemModel::from_expressions(self.name, self.f, self.c, self.psi, params)
    }

    /// Render back to the file format. Parameter values use shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "system {}", self.name);
        let _ = writeln!(s, "dim {}", self.dim);
        for (k, v) in &self.params {
            let _ = writeln!(s, "param {k} = {v:?}");
        }
        for (i, e) in self.f.iter().enumerate() {
            let _ = writeln!(s, "f{} = {e}", i + 1);
        }
        let c: Vec<String> = self.c.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(s, "c = [{}]", c.join(", "));
        let _ = writeln!(s, "psi = {}", self.psi);
        s
    }
}

/// Parse a model file straight into a [`SystemModel`].
pub fn parse_model_file(text: &str) -> Result<SystemModel, ModelError> {
    ModelFile::parse(text)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = "\
system lin   # a comment
dim 2
param a = 2
param b = a/4
f1 = -a*x1 + x2
f2 = x1 - x2
c = [1, b]
psi = 1
";

    #[test]
    fn parses_linear_model() {
        let m = parse_model_file(LINEAR).unwrap();
        assert_eq!(m.name(), "lin");
        assert_eq!(m.c(), &[1.0, 0.5]);
        let j = m.jacobian(&[0.3, 0.9]).unwrap();
        assert_eq!(j.rows(), vec![vec![-2.0, 1.0], vec![1.0, -1.0]]);
    }

    #[test]
    fn text_round_trip() {
        let mf = ModelFile::parse(LINEAR).unwrap();
        let again = ModelFile::parse(&mf.to_text()).unwrap();
        assert_eq!(again, mf);
    }

    #[test]
    fn dimension_mismatch() {
        let text = "system s\ndim 2\nf1 = x1\nf2 = x2\nf3 = x1\nc = [0, 0]\npsi = 1\n";
        assert!(matches!(parse_model_file(text), Err(ModelError::DimensionMismatch(_))));
        let text = "system s\ndim 2\nf1 = x1\nf2 = x2\nc = [0]\npsi = 1\n";
        assert!(matches!(parse_model_file(text), Err(ModelError::DimensionMismatch(_))));
        let text = "system s\ndim 1\nf1 = x2\nc = [0]\npsi = 1\n";
        assert!(matches!(parse_model_file(text), Err(ModelError::DimensionMismatch(_))));
    }

    #[test]
    fn unbound_parameter() {
        let text = "system s\ndim 1\nparam k1 = 1\nf1 = -k9*x1\nc = [1]\npsi = 1\n";
        assert_eq!(parse_model_file(text), Err(ModelError::UnboundParameter("k9".into())));
        let text = "system s\ndim 1\nparam k1 = k2\nf1 = -x1\nc = [1]\npsi = 1\n";
        assert_eq!(parse_model_file(text), Err(ModelError::UnboundParameter("k2".into())));
    }

    #[test]
    fn syntax_errors_are_located() {
        let text = "system s\ndim 1\nf1 = -x1 +\nc = [1]\npsi = 1\n";
        match parse_model_file(text) {
            Err(ModelError::Parse { line: 3, source }) => assert_eq!(source.offset(), 10),
            other => panic!("unexpected {other:?}"),
        }
        let text = "system s\ndim 1\nf1 = -x1\nc = [1]\npsi = x1\ncolor = 3\n";
        assert!(matches!(parse_model_file(text), Err(ModelError::Format { line: 6, .. })));
    }

    #[test]
    fn c_must_be_constant() {
        let text = "system s\ndim 1\nf1 = -x1\nc = [x1]\npsi = 1\n";
        assert!(parse_model_file(text).is_err());
    }
}
