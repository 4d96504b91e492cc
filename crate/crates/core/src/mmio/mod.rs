//! Matrix Market coordinate files, plain-text vectors, element and
//! node-partition files, and partition bundles.

mod bundle;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::partition::{ElementConnectivity, PartitionError};
use crate::sparse::{CsrMatrix, SparseError};

pub use bundle::{read_partition_bundle, write_partition_bundle, PartitionBundle, RankData, Strategy, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum MmioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("bundle format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("manifest declares {declared} ranks, found {found}")]
    RankCountMismatch { declared: usize, found: usize },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(PathBuf),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

pub type Result<T> = std::result::Result<T, MmioError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MmioError + '_ {
    move |source| MmioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MmioError {
    MmioError::Parse { line, msg: msg.into() }
}

/// Header of a coordinate Matrix Market file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixMarketHeader {
    pub integer: bool,
    pub symmetric: bool,
}

impl MatrixMarketHeader {
    pub fn parse(line: &str) -> Result<Self> {
        let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
        if words.len() != 5 || words[0] != "%%matrixmarket" {
            return Err(parse_err(1, format!("malformed header `{line}`")));
        }
        if words[1] != "matrix" || words[2] != "coordinate" {
            return Err(MmioError::UnsupportedFormat(format!("{} {}", words[1], words[2])));
        }
        let integer = match words[3].as_str() {
            "real" => false,
            "integer" => true,
            other => return Err(MmioError::UnsupportedFormat(format!("field {other}"))),
        };
        let symmetric = match words[4].as_str() {
            "general" => false,
            "symmetric" => true,
            other => return Err(MmioError::UnsupportedFormat(format!("symmetry {other}"))),
        };
        Ok(MatrixMarketHeader { integer, symmetric })
    }
}

/// Numbered lines that are neither blank nor `%` comments.
fn data_lines<R: BufRead>(reader: R, first: usize) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(move |(k, l)| (k + first, l))
        .filter_map(|(k, l)| match l {
            Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
            Ok(s) => Some(Ok((k, s))),
            Err(e) => Some(Err(parse_err(k, e.to_string()))),
        })
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

pub fn read_matrix_market_from<R: BufRead>(mut reader: R) -> Result<CsrMatrix> {
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| parse_err(1, e.to_string()))?;
    let header = MatrixMarketHeader::parse(header.trim())?;
    let mut lines = data_lines(reader, 2);

    let (k, size) = lines.next().ok_or_else(|| parse_err(2, "missing size line"))??;
    let mut tok = size.split_whitespace();
    let n_rows: usize = parse_field(tok.next(), k, "row count")?;
    let n_cols: usize = parse_field(tok.next(), k, "column count")?;
    let nnz: usize = parse_field(tok.next(), k, "entry count")?;
    if header.symmetric && n_rows != n_cols {
        return Err(parse_err(k, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if header.symmetric { 2 * nnz } else { nnz });
    let mut read = 0;
    for item in lines {
        let (k, line) = item?;
        if read == nnz {
            return Err(parse_err(k, "more entries than declared"));
        }
        let mut tok = line.split_whitespace();
        let i: usize = parse_field(tok.next(), k, "row index")?;
        let j: usize = parse_field(tok.next(), k, "column index")?;
        let v: f64 = if header.integer {
            parse_field::<i64>(tok.next(), k, "value")? as f64
        } else {
            parse_field(tok.next(), k, "value")?
        };
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(parse_err(k, format!("index ({i}, {j}) outside {n_rows}x{n_cols}")));
        }
        triplets.push((i - 1, j - 1, v));
        if header.symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        read += 1;
    }
    if read != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {read}")));
    }
    Ok(CsrMatrix::from_triplets(n_rows, n_cols, triplets)?)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_matrix_market_from(BufReader::new(file))
}

/// Writes `a` as a coordinate real general file.
pub fn write_matrix_market_to<W: Write>(a: &CsrMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    w.flush()
}

pub fn write_matrix_market(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_matrix_market_to(a, BufWriter::new(file)).map_err(io_err(path))
}

pub fn write_vector_to<W: Write>(v: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", v.len())?;
    for x in v {
        writeln!(w, "{x:.16e}")?;
    }
    w.flush()
}

pub fn read_vector_from<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut lines = data_lines(reader, 1);
    let (k, len) = lines.next().ok_or_else(|| parse_err(1, "missing length line"))??;
    let len: usize = parse_field(Some(len.trim()), k, "length")?;
    let v = lines
        .map(|item| item.and_then(|(k, l)| parse_field(Some(l.trim()), k, "value")))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != len {
        return Err(parse_err(0, format!("expected {len} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn write_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_vector_to(v, BufWriter::new(file)).map_err(io_err(path))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_vector_from(BufReader::new(file))
}

/// Element file: a count line, then one element per line as 0-based node
/// indices, `-1` for eliminated nodes.
pub fn write_elements(conn: &ElementConnectivity, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", conn.elements.len())?;
        for el in &conn.elements {
            let line: Vec<String> = el
                .nodes
                .iter()
                .map(|n| n.map_or("-1".to_string(), |i| i.to_string()))
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Reads an element file; `n_nodes` is the order of the matrix it belongs to.
pub fn read_elements(path: impl AsRef<Path>, n_nodes: usize) -> Result<ElementConnectivity> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = data_lines(BufReader::new(file), 1);
    let (k, count) = lines.next().ok_or_else(|| parse_err(1, "missing count line"))??;
    let count: usize = parse_field(Some(count.trim()), k, "element count")?;
    let mut elements = Vec::with_capacity(count);
    for item in lines {
        let (k, line) = item?;
        let nodes = line
            .split_whitespace()
            .map(|t| {
                let id: i64 = t.parse().map_err(|_| parse_err(k, format!("bad node `{t}`")))?;
                match id {
                    -1 => Ok(None),
                    id if id >= 0 => Ok(Some(id as usize)),
                    _ => Err(parse_err(k, format!("bad node `{t}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        elements.push(nodes);
    }
    if elements.len() != count {
        return Err(parse_err(0, format!("expected {count} elements, found {}", elements.len())));
    }
    let npe = elements.first().map_or(0, Vec::len);
    let conn = ElementConnectivity::from_nodes(n_nodes, npe, elements);
    conn.validate()?;
    Ok(conn)
}

/// Node-partition file: a count line, then the part id of node `i` on line `i`.
pub fn read_node_partition(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = data_lines(BufReader::new(file), 1);
    let (k, count) = lines.next().ok_or_else(|| parse_err(1, "missing count line"))??;
    let count: usize = parse_field(Some(count.trim()), k, "node count")?;
    let parts = lines
        .map(|item| item.and_then(|(k, l)| parse_field(Some(l.trim()), k, "part id")))
        .collect::<Result<Vec<usize>>>()?;
    if parts.len() != count {
        return Err(parse_err(0, format!("expected {count} part ids, found {}", parts.len())));
    }
    Ok(parts)
}

pub fn write_node_partition(parts: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", parts.len())?;
        for p in parts {
            writeln!(w, "{p}")?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::csr_example;

    fn parse(s: &str) -> Result<CsrMatrix> {
        read_matrix_market_from(s.as_bytes())
    }

    fn round_trip(a: &CsrMatrix) -> CsrMatrix {
        let mut buf = Vec::new();
        write_matrix_market_to(a, &mut buf).unwrap();
        read_matrix_market_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn single_entry() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n% note\n\n1 1 1\n1 1 7.0\n").unwrap();
        assert_eq!((a.n_rows(), a.nnz(), a.values()), (1, 1, &[7.0][..]));
    }

    #[test]
    fn symmetric_lower_triangle_expands() {
        let a = parse(
            "%%MatrixMarket matrix coordinate integer symmetric\n4 4 7\n\
             1 1 2\n2 2 2\n3 3 2\n4 4 2\n2 1 -1\n3 2 -1\n4 3 -1\n",
        )
        .unwrap();
        assert_eq!(a.nnz(), 10);
        assert_eq!(a, crate::testgen::tridiagonal(4));
        assert_eq!(a.transpose(), a);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate complex general\n1 1 0\n"),
            Err(MmioError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse("%%MatrixMarket matrix array real general\n1 1\n"),
            Err(MmioError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate real hermitian\n1 1 0\n"),
            Err(MmioError::UnsupportedFormat(_))
        ));
        assert!(matches!(parse("not a header\n"), Err(MmioError::Parse { .. })));
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").is_err());
        assert!(matches!(
            read_matrix_market("/nonexistent/a.mtx"),
            Err(MmioError::Io { .. })
        ));
    }

    #[test]
    fn round_trips() {
        let a = csr_example();
        assert_eq!(round_trip(&a), a);
        let empty_row = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (2, 1, -0.1)]).unwrap();
        assert_eq!(round_trip(&empty_row), empty_row);
        let awkward = CsrMatrix::from_triplets(1, 2, vec![(0, 0, 0.1 + 0.2), (0, 1, -1e-300)]).unwrap();
        assert_eq!(round_trip(&awkward), awkward);
    }

    #[test]
    fn vectors_elements_and_parts() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![1.0, -0.1, 1e200, 0.0];
        write_vector(&v, dir.path().join("v.vec")).unwrap();
        assert_eq!(read_vector(dir.path().join("v.vec")).unwrap(), v);

        let conn = crate::partition::linear_chain(3, true);
        write_elements(&conn, dir.path().join("e.txt")).unwrap();
        let back = read_elements(dir.path().join("e.txt"), 2).unwrap();
        let nodes: Vec<_> = back.elements.iter().map(|e| e.nodes.clone()).collect();
        assert_eq!(nodes, vec![vec![None, Some(0)], vec![Some(0), Some(1)], vec![Some(1), None]]);

        write_node_partition(&[0, 1, 1], dir.path().join("p.txt")).unwrap();
        assert_eq!(read_node_partition(dir.path().join("p.txt")).unwrap(), vec![0, 1, 1]);
        assert!(read_vector_from("3\n1.0\n".as_bytes()).is_err());
    }
}
