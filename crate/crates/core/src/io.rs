//! Plain-text matrix and group files.
//!
//! Matrix files start with a `# rows=<r> cols=<c>` header followed by one
//! comma-separated line of decimal floats per row.
//!
//! Group files hold one group per line, `g <id> : <indices>` for input groups
//! and `h <id> : <indices>` for output groups, indices 1-based and
//! comma-separated. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{HigtError, Result};
use crate::model::GroupStructure;

fn parse_err(line: usize, message: impl Into<String>) -> HigtError {
    HigtError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.trim().strip_prefix('#')?;
    let mut rows = None;
    let mut cols = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    Some((rows?, cols?))
}

pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines().enumerate();
    let (rows, cols) = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => {
                break parse_header(l)
                    .ok_or_else(|| parse_err(i + 1, "expected header `# rows=<r> cols=<c>`"))?
            }
            None => return Err(parse_err(1, "empty matrix file")),
        }
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, l) in lines {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        if seen == rows {
            return Err(parse_err(
                i + 1,
                format!("more than the declared {rows} rows"),
            ));
        }
        let before = data.len();
        for tok in l.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(i + 1, format!("not a number: {:?}", tok.trim())))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(parse_err(
                i + 1,
                format!("expected {cols} columns, found {}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(HigtError::DimensionMismatch(format!(
            "header declares {rows} rows but file has {seen}"
        )));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| HigtError::DimensionMismatch(e.to_string()))
}

/// Uses the shortest representation that round-trips exactly.
pub fn format_matrix(m: &Array2<f64>) -> String {
    let mut out = format!("# rows={} cols={}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

/// Group lists parsed from a group file, still 0-based and unvalidated
/// against matrix dimensions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupFile {
    pub input_groups: Vec<Vec<usize>>,
    pub output_groups: Vec<Vec<usize>>,
    pub input_ids: Vec<String>,
    pub output_ids: Vec<String>,
}

impl GroupFile {
    /// Validates against a `K×J` coefficient matrix; all weights are 1.
    pub fn into_structure(self, n_outputs: usize, n_inputs: usize) -> Result<GroupStructure> {
        GroupStructure::new(n_outputs, n_inputs, self.input_groups, self.output_groups)
    }
}

pub fn parse_groups(text: &str) -> Result<GroupFile> {
    let mut gf = GroupFile::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, body) = line
            .split_once(':')
            .ok_or_else(|| parse_err(i + 1, "missing ':'"))?;
        let mut head = head.split_whitespace();
        let kind = head.next().unwrap_or_default();
        let id = head
            .next()
            .ok_or_else(|| parse_err(i + 1, "missing group id"))?
            .to_string();
        if head.next().is_some() {
            return Err(parse_err(i + 1, "unexpected tokens before ':'"));
        }
        let mut idx = Vec::new();
        for tok in body.split(',') {
            let tok = tok.trim();
            let v: usize = tok
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad index {tok:?}")))?;
            if v == 0 {
                return Err(parse_err(i + 1, "indices are 1-based"));
            }
            idx.push(v - 1);
        }
        match kind {
            "g" => {
                gf.input_groups.push(idx);
                gf.input_ids.push(id);
            }
            "h" => {
                gf.output_groups.push(idx);
                gf.output_ids.push(id);
            }
            other => return Err(parse_err(i + 1, format!("unknown group kind {other:?}"))),
        }
    }
    Ok(gf)
}

pub fn format_groups(gs: &GroupStructure) -> String {
    let mut out = String::new();
    let join = |g: &[usize]| {
        g.iter()
            .map(|v| (v + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    for (m, g) in gs.input_groups().iter().enumerate() {
        let _ = writeln!(out, "g {} : {}", m + 1, join(g));
    }
    for (o, h) in gs.output_groups().iter().enumerate() {
        let _ = writeln!(out, "h {} : {}", o + 1, join(h));
    }
    out
}

pub fn read_groups(path: impl AsRef<Path>) -> Result<GroupFile> {
    parse_groups(&fs::read_to_string(path)?)
}

pub fn write_groups(path: impl AsRef<Path>, gs: &GroupStructure) -> Result<()> {
    fs::write(path, format_groups(gs))?;
    Ok(())
}
