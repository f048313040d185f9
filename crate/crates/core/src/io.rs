//! Matrix Market (coordinate, symmetric) and plain-text vector I/O.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::SymmetricSystem;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Coordinate entries read from a Matrix Market file, 0-based, upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMarket {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Reads a square coordinate Matrix Market stream. `symmetric` files store
/// one triangle; `general` files must describe a symmetric matrix.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<MatrixMarket> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty Matrix Market stream"))?;
    let header = header?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", tokens[2])));
    }
    let field = tokens[3].as_str();
    if !matches!(field, "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field '{field}'")));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut seen = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols nnz'"));
                }
                let rows: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row count"))?;
                let cols: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column count"))?;
                if rows != cols {
                    return Err(parse_err(lineno, "matrix is not square"));
                }
                size = Some((rows, fields[2].parse().map_err(|_| parse_err(lineno, "bad nnz"))?));
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'i j value'"));
                }
                let i: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) out of range")));
                }
                if symmetric && j > i {
                    return Err(parse_err(lineno, "symmetric file has an upper-triangle entry"));
                }
                let key = ((i - 1).min(j - 1), (i - 1).max(j - 1));
                match map.get(&key) {
                    Some(&prev) if symmetric || i == j || prev != v => {
                        return Err(parse_err(
                            lineno,
                            format!("duplicate or asymmetric entry ({i}, {j})"),
                        ));
                    }
                    _ => {
                        map.insert(key, v);
                    }
                }
                seen += 1;
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if seen != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {seen}")));
    }
    if !symmetric {
        // every off-diagonal entry of a general file must appear twice
        let off_diag = map.keys().filter(|(i, j)| i != j).count();
        let diag = map.len() - off_diag;
        if diag + 2 * off_diag != nnz {
            return Err(parse_err(0, "general matrix is not symmetric"));
        }
    }
    Ok(MatrixMarket {
        n,
        entries: map.into_iter().map(|((i, j), v)| (i, j, v)).collect(),
    })
}

pub fn write_matrix_market<W: Write>(mut w: W, sys: &SymmetricSystem) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", sys.dim(), sys.dim(), sys.nnz_upper())?;
    for (i, j, v) in sys.entries() {
        // lower triangle on disk
        writeln!(w, "{} {} {}", j + 1, i + 1, v)?;
    }
    Ok(())
}

/// One value per line; blank lines and lines starting with `%` or `#` are skipped.
pub fn read_vector<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| parse_err(idx + 1, format!("bad value '{t}'")))?,
        );
    }
    Ok(out)
}

pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{x}")?;
    }
    Ok(())
}

/// Loads `A` from a Matrix Market file and `b` from a vector file.
pub fn load_system(matrix: &Path, rhs: &Path) -> Result<SymmetricSystem> {
    let mm = read_matrix_market(fs::File::open(matrix)?)?;
    let b = read_vector(fs::File::open(rhs)?)?;
    SymmetricSystem::new(mm.n, mm.entries, b)
}
