//! Matrix Market coordinate format (real, integer or complex; general or
//! symmetric on input, general on output).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::csr::CsrMatrix;

#[derive(Clone, Debug)]
pub enum MmMatrix {
    Real(CsrMatrix<f64>),
    Complex(CsrMatrix<Complex64>),
}

impl MmMatrix {
    pub fn into_real(self) -> Result<CsrMatrix<f64>> {
        match self {
            MmMatrix::Real(a) => Ok(a),
            MmMatrix::Complex(_) => Err(Error::Invalid("expected a real matrix, found complex".into())),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_matrix_market(text: &str) -> Result<MmMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'"));
    }
    let complex = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "complex" => true,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip: Vec<(usize, usize, Complex64)> = Vec::new();
    let mut entries = 0usize;
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let num = |k: usize| -> Result<f64> {
            tok.get(k).ok_or_else(|| parse_err(lineno, "missing field"))?.parse::<f64>().map_err(|e| parse_err(lineno, e.to_string()))
        };
        let idx_at = |k: usize| -> Result<usize> {
            tok.get(k).ok_or_else(|| parse_err(lineno, "missing index"))?.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()))
        };
        match size {
            None => size = Some((idx_at(0)?, idx_at(1)?, idx_at(2)?)),
            Some((nr, nc, _)) => {
                let (i, j) = (idx_at(0)?, idx_at(1)?);
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) out of range")));
                }
                let v = if complex { Complex64::new(num(2)?, num(3)?) } else { Complex64::new(num(2)?, 0.0) };
                trip.push((i - 1, j - 1, v));
                entries += 1;
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    if entries != nnz {
        return Err(parse_err(0, format!("declared {nnz} entries, found {entries}")));
    }
    if complex {
        Ok(MmMatrix::Complex(CsrMatrix::from_triplets(nr, nc, trip)?))
    } else {
        Ok(MmMatrix::Real(CsrMatrix::from_triplets(nr, nc, trip.into_iter().map(|(i, j, v)| (i, j, v.re)).collect())?))
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<MmMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

pub fn format_matrix_market<T: Scalar>(a: &CsrMatrix<T>) -> String {
    let field = if T::IS_COMPLEX { "complex" } else { "real" };
    let mut out = format!("%%MatrixMarket matrix coordinate {field} general\n{} {} {}\n", a.nrows(), a.ncols(), a.nnz());
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            let z = v.to_complex();
            if T::IS_COMPLEX {
                let _ = writeln!(out, "{} {} {:e} {:e}", i + 1, j + 1, z.re, z.im);
            } else {
                let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, z.re);
            }
        }
    }
    out
}

pub fn write_matrix_market<T: Scalar>(a: &CsrMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_matrix_market(a))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_real_and_complex() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.5), (1, 2, -2.25e-7), (2, 1, 3.0)]).unwrap();
        let back = parse_matrix_market(&format_matrix_market(&a)).unwrap().into_real().unwrap();
        assert_eq!(back, a);
        let c = a.map(|v| Complex64::new(v, -v / 3.0));
        match parse_matrix_market(&format_matrix_market(&c)).unwrap() {
            MmMatrix::Complex(b) => assert_eq!(b, c),
            MmMatrix::Real(_) => panic!("lost complex field"),
        }
    }

    #[test]
    fn symmetric_expands() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n";
        let a = parse_matrix_market(text).unwrap().into_real().unwrap();
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_matrix_market("%%MatrixMarket matrix array real general\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").is_err());
    }
}
