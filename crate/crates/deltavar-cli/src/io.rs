//! Deterministic serialization: a small JSON emitter with stable key order
//! and an explicit float format, plus CSV reading/writing for sampled paths.
//!
//! Output bytes must be a pure function of the data — rendering goes through
//! insertion-ordered structures and a fixed `{:.16e}` float format (17
//! significant digits, enough to round-trip any `f64`), so identical runs
//! produce identical files.

use crate::CliError;
use anyhow::{Context, Result};
use deltavar::findiff::GridFunction;
use std::fmt::Write as _;
use std::path::Path;

/// A JSON value with insertion-ordered object keys.
#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    /// Integers are kept apart from floats so counts render as `50`,
    /// not `5.0000000000000000e1`.
    Int(i64),
    Num(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(&'static str, Json)>),
}

impl Json {
    /// `Num` if the option is set, `Null` otherwise. Non-finite values also
    /// map to `Null`, since JSON has no representation for them.
    pub fn num_or_null(v: Option<f64>) -> Json {
        match v {
            Some(x) if x.is_finite() => Json::Num(x),
            _ => Json::Null,
        }
    }
}

/// Renders a float with 17 significant digits, exactly round-trippable.
fn push_f64(out: &mut String, x: f64) {
    if x.is_finite() {
        write!(out, "{x:.16e}").expect("writing to a String cannot fail");
    } else {
        out.push_str("null");
    }
}

fn push_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                write!(out, "\\u{:04x}", c as u32).expect("writing to a String cannot fail")
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn push_value(out: &mut String, v: &Json, indent: usize) {
    const STEP: usize = 2;
    match v {
        Json::Null => out.push_str("null"),
        Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Json::Int(i) => write!(out, "{i}").expect("writing to a String cannot fail"),
        Json::Num(x) => push_f64(out, *x),
        Json::Str(s) => push_escaped(out, s),
        Json::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                push_value(out, item, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push(']');
        }
        Json::Object(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, value)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                push_escaped(out, key);
                out.push_str(": ");
                push_value(out, value, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push('}');
        }
    }
}

/// Renders a JSON document with two-space indentation and a trailing
/// newline.
pub fn render_json(v: &Json) -> String {
    let mut out = String::new();
    push_value(&mut out, v, 0);
    out.push('\n');
    out
}

/// Writes a sampled path or field as two-column CSV (`t,value` header).
pub fn write_grid_csv(path: &Path, f: &GridFunction) -> Result<()> {
    let mut out = String::with_capacity(48 * f.n_points() + 16);
    out.push_str("t,value\n");
    for k in 0..f.n_points() {
        push_f64(&mut out, f.t(k));
        out.push(',');
        push_f64(&mut out, f.values()[k]);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a two-column CSV (`t,value`, header optional) back into a grid
/// function. Sample times must be uniform to within the grid-function
/// tolerance; endpoints are inferred from the first and last time.
pub fn read_grid_csv(path: &Path) -> Result<GridFunction> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(t_col), Some(v_col), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(CliError::InvalidArguments(format!(
                "{}:{}: expected exactly two comma-separated columns",
                path.display(),
                lineno + 1
            ))
            .into());
        };
        if lineno == 0 && t_col.trim().parse::<f64>().is_err() {
            // Header row.
            continue;
        }
        let parse = |col: &str, name: &str| -> Result<f64> {
            col.trim().parse::<f64>().map_err(|_| {
                CliError::InvalidArguments(format!(
                    "{}:{}: {} column is not a number: {:?}",
                    path.display(),
                    lineno + 1,
                    name,
                    col
                ))
                .into()
            })
        };
        times.push(parse(t_col, "time")?);
        values.push(parse(v_col, "value")?);
    }
    Ok(GridFunction::from_points(&times, &values)?)
}
