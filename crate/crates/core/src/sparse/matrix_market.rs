use super::{SparseError, SparseSym};
use crate::linalg::Block;
use flate2::read::GzDecoder;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixMarketError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not a valid SPD pattern: {0}")]
    Invalid(#[from] SparseError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MatrixMarketError {
    MatrixMarketError::Parse {
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<Box<dyn BufRead>, MatrixMarketError> {
    let io = |source| MatrixMarketError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Loads a real symmetric coordinate MatrixMarket file (`.gz` accepted).
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseSym, MatrixMarketError> {
    let path = path.as_ref();
    parse_matrix_market(open(path)?)
}

#[derive(PartialEq)]
enum Symmetry {
    Symmetric,
    General,
}

struct Lines<R> {
    inner: R,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-comment, non-blank line with its 1-based number.
    fn next_data(&mut self) -> Result<Option<(usize, String)>, MatrixMarketError> {
        loop {
            let mut buf = String::new();
            let read = self.inner.read_line(&mut buf).map_err(|e| parse_err(self.line + 1, e.to_string()))?;
            if read == 0 {
                return Ok(None);
            }
            self.line += 1;
            let t = buf.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            return Ok(Some((self.line, t.to_string())));
        }
    }

    fn header(&mut self) -> Result<Vec<String>, MatrixMarketError> {
        let mut buf = String::new();
        self.inner.read_line(&mut buf).map_err(|e| parse_err(1, e.to_string()))?;
        self.line = 1;
        let words: Vec<String> = buf.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
        if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
            return Err(parse_err(1, "missing or malformed %%MatrixMarket header"));
        }
        Ok(words)
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MatrixMarketError> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what}")))
}

/// Parses coordinate MatrixMarket text into a full symmetric CSR matrix.
///
/// `symmetric` files may store either triangle (not both). `general` files
/// are accepted only if their values are symmetric.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<SparseSym, MatrixMarketError> {
    let mut lines = Lines { inner: reader, line: 0 };
    let words = lines.header()?;
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", words[2])));
    }
    if words[3] != "real" {
        return Err(parse_err(1, format!("unsupported field '{}', expected real", words[3])));
    }
    let symmetry = match words[4].as_str() {
        "symmetric" => Symmetry::Symmetric,
        "general" => Symmetry::General,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let (line, size) = lines.next_data()?.ok_or_else(|| parse_err(lines.line, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let rows: usize = parse_num(toks.next(), line, "row count")?;
    let cols: usize = parse_num(toks.next(), line, "column count")?;
    let nnz: usize = parse_num(toks.next(), line, "entry count")?;
    if rows != cols {
        return Err(parse_err(line, format!("matrix is {rows}x{cols}, expected square")));
    }
    let n = rows;

    let mut trip = Vec::with_capacity(2 * nnz);
    let (mut lower, mut upper) = (false, false);
    for _ in 0..nnz {
        let (line, text) = lines
            .next_data()?
            .ok_or_else(|| parse_err(lines.line, format!("expected {nnz} entries")))?;
        let mut toks = text.split_whitespace();
        let i: usize = parse_num(toks.next(), line, "row index")?;
        let j: usize = parse_num(toks.next(), line, "column index")?;
        let v: f64 = parse_num(toks.next(), line, "value")?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(parse_err(line, format!("index ({i}, {j}) out of range for n = {n}")));
        }
        if !v.is_finite() {
            return Err(parse_err(line, "non-finite value"));
        }
        let (i, j) = (i - 1, j - 1);
        trip.push((i, j, v));
        if symmetry == Symmetry::Symmetric && i != j {
            lower |= i > j;
            upper |= i < j;
            if lower && upper {
                return Err(parse_err(line, "symmetric file stores entries in both triangles"));
            }
            trip.push((j, i, v));
        }
    }
    if lines.next_data()?.is_some() {
        return Err(parse_err(lines.line, format!("more than {nnz} entries")));
    }
    Ok(SparseSym::from_triplets(n, &trip)?)
}

/// Writes the lower triangle as `coordinate real symmetric`.
pub fn write_matrix_market(a: &SparseSym, mut out: impl Write) -> std::io::Result<()> {
    let lower: Vec<(usize, usize, f64)> = (0..a.n())
        .flat_map(|i| a.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| (i, j, v)))
        .collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{} {} {}", a.n(), a.n(), lower.len())?;
    for (i, j, v) in lower {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a dense `array real general` MatrixMarket file (column-major).
pub fn read_dense_array(path: impl AsRef<Path>) -> Result<Block, MatrixMarketError> {
    let mut lines = Lines {
        inner: open(path.as_ref())?,
        line: 0,
    };
    let words = lines.header()?;
    if words[2] != "array" || words[3] != "real" || words[4] != "general" {
        return Err(parse_err(1, "expected 'array real general'"));
    }
    let (line, size) = lines.next_data()?.ok_or_else(|| parse_err(lines.line, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let rows: usize = parse_num(toks.next(), line, "row count")?;
    let cols: usize = parse_num(toks.next(), line, "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let (line, text) = lines
            .next_data()?
            .ok_or_else(|| parse_err(lines.line, format!("expected {} values", rows * cols)))?;
        data.push(parse_num(text.split_whitespace().next(), line, "value")?);
    }
    Ok(Block::from_column_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmat;
    use nalgebra::dmatrix;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<SparseSym, MatrixMarketError> {
        parse_matrix_market(Cursor::new(s.as_bytes()))
    }

    #[test]
    fn tiny_symmetric_file() {
        let a = parse(
            "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n",
        )
        .unwrap();
        assert_eq!(a.to_dense(), dmatrix![2.0, 1.0; 1.0, 2.0]);
    }

    #[test]
    fn upper_triangle_and_duplicates() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 4\n1 1 1\n1 1 1\n1 2 0.5\n2 2 3\n").unwrap();
        assert_eq!(a.to_dense(), dmatrix![2.0, 0.5; 0.5, 3.0]);
    }

    #[test]
    fn general_with_symmetric_values_is_accepted() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 2\n1 2 1\n2 1 1\n2 2 2\n").unwrap();
        assert_eq!(a.to_dense(), dmatrix![2.0, 1.0; 1.0, 2.0]);
    }

    #[test]
    fn general_with_asymmetric_values_is_rejected() {
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 2\n1 2 1\n2 1 3\n2 2 2\n").unwrap_err();
        assert!(matches!(err, MatrixMarketError::Invalid(SparseError::NotSymmetric { .. })));
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let cases = [
            ("%%MatrixMarket matrix array real general\n2 2\n", 1),
            ("%%MatrixMarket matrix coordinate complex symmetric\n", 1),
            ("%%MatrixMarket matrix coordinate real skew-symmetric\n", 1),
            ("not a header\n", 1),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 x\n", 3),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 1\n1 2 1\n", 5),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(MatrixMarketError::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let a = testmat::random_sparse_spd(30, 0.15, 9);
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = parse_matrix_market(Cursor::new(buf)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gzip_and_missing_files() {
        use flate2::{write::GzEncoder, Compression};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lap.mtx.gz");
        let a = testmat::laplacian_1d(6);
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        write_matrix_market(&a, &mut enc).unwrap();
        enc.finish().unwrap();
        assert_eq!(load_matrix_market(&path).unwrap(), a);
        assert!(matches!(
            load_matrix_market(dir.path().join("nope.mtx")),
            Err(MatrixMarketError::Io { .. })
        ));
    }

    #[test]
    fn dense_array_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.mtx");
        std::fs::write(&path, "%%MatrixMarket matrix array real general\n3 2\n1\n2\n3\n4\n5\n6\n").unwrap();
        let b = read_dense_array(&path).unwrap();
        assert_eq!(b, dmatrix![1.0, 4.0; 2.0, 5.0; 3.0, 6.0]);
    }
}
