//! Matrix Market reader and writer (real/integer fields, `general` and
//! `symmetric` storage, `coordinate` and `array` formats).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{QmpoError, Result};
use crate::linalg::{CsrMatrix, Mat};
use crate::report::format_f64;

#[derive(Debug, Clone, PartialEq)]
pub enum MmMatrix {
    Dense(Mat),
    Sparse(CsrMatrix),
}

impl MmMatrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MmMatrix::Dense(a) => a.shape(),
            MmMatrix::Sparse(a) => (a.nrows(), a.ncols()),
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            MmMatrix::Dense(a) => a.clone(),
            MmMatrix::Sparse(a) => a.to_dense(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

fn parse_err(line: usize, msg: impl Into<String>) -> QmpoError {
    QmpoError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_matrix_market(path: &Path) -> Result<MmMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

pub fn parse_matrix_market(text: &str) -> Result<MmMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            hline,
            format!("malformed header `{header}`; expected `%%MatrixMarket matrix <format> <field> <symmetry>`"),
        ));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(parse_err(hline, format!("unknown format `{other}`"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => {
            return Err(parse_err(
                hline,
                format!("field `{other}` is not supported; only real data can be read"),
            ))
        }
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(hline, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = data
        .next()
        .ok_or_else(|| parse_err(hline + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(sline, format!("bad size line `{size}`: {e}")))?;

    match format {
        Format::Coordinate => {
            let [nrows, ncols, nnz] = dims[..] else {
                return Err(parse_err(
                    sline,
                    "coordinate size line needs `rows cols nnz`",
                ));
            };
            if symmetric && nrows != ncols {
                return Err(parse_err(sline, "symmetric matrix must be square"));
            }
            let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            let mut count = 0;
            for (ln, line) in data {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(ln, format!("expected `i j value`, got `{line}`")));
                }
                let i: usize = t[0]
                    .parse()
                    .map_err(|e| parse_err(ln, format!("bad row index: {e}")))?;
                let j: usize = t[1]
                    .parse()
                    .map_err(|e| parse_err(ln, format!("bad column index: {e}")))?;
                let v: f64 = t[2]
                    .parse()
                    .map_err(|e| parse_err(ln, format!("bad value `{}`: {e}", t[2])))?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(parse_err(
                        ln,
                        format!("index ({i}, {j}) out of bounds for {nrows}x{ncols}"),
                    ));
                }
                if symmetric && j > i {
                    return Err(parse_err(
                        ln,
                        format!("entry ({i}, {j}) above the diagonal in symmetric storage"),
                    ));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(
                    sline,
                    format!("size line declares {nnz} entries, file has {count}"),
                ));
            }
            Ok(MmMatrix::Sparse(CsrMatrix::from_triplets(
                nrows, ncols, &triplets,
            )?))
        }
        Format::Array => {
            let [nrows, ncols] = dims[..] else {
                return Err(parse_err(sline, "array size line needs `rows cols`"));
            };
            if symmetric && nrows != ncols {
                return Err(parse_err(sline, "symmetric matrix must be square"));
            }
            let mut a = Mat::zeros(nrows, ncols);
            // Column-major; symmetric storage lists the lower triangle only.
            let positions: Vec<(usize, usize)> = (0..ncols)
                .flat_map(|j| {
                    let start = if symmetric { j } else { 0 };
                    (start..nrows).map(move |i| (i, j))
                })
                .collect();
            let mut idx = 0;
            for (ln, line) in data {
                for tok in line.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|e| parse_err(ln, format!("bad value `{tok}`: {e}")))?;
                    let Some(&(i, j)) = positions.get(idx) else {
                        return Err(parse_err(ln, "more values than the declared size"));
                    };
                    a[(i, j)] = v;
                    if symmetric {
                        a[(j, i)] = v;
                    }
                    idx += 1;
                }
            }
            if idx != positions.len() {
                return Err(parse_err(
                    sline,
                    format!("expected {} values, found {idx}", positions.len()),
                ));
            }
            Ok(MmMatrix::Dense(a))
        }
    }
}

pub fn format_matrix_market(m: &MmMatrix) -> String {
    let mut out = String::new();
    match m {
        MmMatrix::Sparse(a) => {
            out.push_str("%%MatrixMarket matrix coordinate real general\n");
            let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
            for (i, j, v) in a.triplets() {
                let _ = writeln!(out, "{} {} {}", i + 1, j + 1, format_f64(v));
            }
        }
        MmMatrix::Dense(a) => {
            out.push_str("%%MatrixMarket matrix array real general\n");
            let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
            for v in a.iter() {
                let _ = writeln!(out, "{}", format_f64(*v));
            }
        }
    }
    out
}

pub fn write_matrix_market(path: &Path, m: &MmMatrix) -> Result<()> {
    std::fs::write(path, format_matrix_market(m))?;
    Ok(())
}

/// One integer label per line; blank lines and `%`/`#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        labels.push(
            t.parse::<usize>()
                .map_err(|e| parse_err(i + 1, format!("bad label `{t}`: {e}")))?,
        );
    }
    Ok(labels)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&std::fs::read_to_string(path)?)
}
