use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Signal1D;

struct Header {
    h: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
}

fn parse_header(line: &str, line_no: usize) -> Result<Header> {
    let mut header = Header { h: None, a: None, b: None };
    for token in line.trim_start_matches('#').split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            // free-form comment
            return Ok(Header { h: None, a: None, b: None });
        };
        let slot = match key {
            "h" => &mut header.h,
            "a" => &mut header.a,
            "b" => &mut header.b,
            _ => continue,
        };
        let v: f64 = value.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad header value {token:?}"),
        })?;
        *slot = Some(v);
    }
    Ok(header)
}

/// Parse the CSV dialect: one decimal literal per line, `#` comments, and an
/// optional first comment line `# h=<value> a=<value> b=<value>`.
///
/// Missing spacing defaults to 1, `a` to 0 and `b` to `a + h (len - 1)`.
pub fn parse_csv_1d(text: &str) -> Result<Signal1D> {
    let mut values = Vec::new();
    let mut header = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if header.is_none() {
                header = Some(parse_header(line, line_no)?);
            }
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("expected a number, found {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { line: line_no, message: format!("non-finite value {line:?}") });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let header = header.unwrap_or(Header { h: None, a: None, b: None });
    let h = header.h.unwrap_or(1.0);
    let a = header.a.unwrap_or(0.0);
    let b = header.b.unwrap_or(a + h * (values.len() - 1) as f64);
    Signal1D::with_domain(values, h, (a, b))
}

pub fn read_csv_1d(path: impl AsRef<Path>) -> Result<Signal1D> {
    parse_csv_1d(&fs::read_to_string(path)?)
}

/// Shortest round-trip representation of each value.
pub fn format_csv_1d(s: &Signal1D) -> String {
    let mut out = format!("# h={:?} a={:?} b={:?}\n", s.h, s.domain.0, s.domain.1);
    for v in &s.values {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

pub fn write_csv_1d(path: impl AsRef<Path>, s: &Signal1D) -> Result<()> {
    fs::write(path, format_csv_1d(s))?;
    Ok(())
}
