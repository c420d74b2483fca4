//! Matrix, edge-list and label files.
//!
//! Binary matrices: `b"EGM1"`, rows and cols as little-endian `u64`, then
//! `rows * cols` little-endian `f64` in row-major order. CSV matrices: one row
//! per line, comma separated, no header.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::EdgeList;
use crate::linalg::Mat;

pub const BINARY_MAGIC: &[u8; 4] = b"EGM1";
const HEADER_LEN: usize = 4 + 8 + 8;

fn is_csv(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    )
}

/// Loads a matrix; `.csv`/`.txt` files are parsed as CSV, anything else as binary.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    if is_csv(path) {
        parse_csv_matrix(&fs::read_to_string(path)?)
    } else {
        read_binary_matrix(&mut fs::File::open(path)?)
    }
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    if is_csv(path) {
        write_csv_matrix(&mut buf, m)?;
    } else {
        write_binary_matrix(&mut buf, m)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn write_binary_matrix<W: Write>(w: &mut W, m: &Mat) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary_matrix<R: Read>(r: &mut R) -> Result<Mat> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            format!("byte {}", bytes.len()),
            "truncated header",
        ));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::parse("byte 0", "bad magic, expected EGM1"));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (read_u64(4), read_u64(12));
    if rows == 0 || cols == 0 {
        return Err(Error::parse("byte 4", format!("empty {rows}x{cols} matrix")));
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::parse("byte 4", format!("{rows}x{cols} matrix too large")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < count {
        return Err(Error::parse(
            format!("byte {}", bytes.len()),
            format!("truncated payload: expected {count} bytes after header"),
        ));
    }
    if payload.len() > count {
        return Err(Error::parse(
            format!("byte {}", HEADER_LEN + count),
            "trailing bytes after payload",
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Mat::from_vec(rows as usize, cols as usize, data)
}

/// Writes each entry with 17 significant digits.
pub fn write_csv_matrix<W: Write>(w: &mut W, m: &Mat) -> Result<()> {
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn parse_csv_matrix(text: &str) -> Result<Mat> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::parse(
                        format!("line {}, column {}", lineno + 1, c + 1),
                        format!("non-numeric cell {:?}", cell.trim()),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("line {}", lineno + 1),
                    format!("expected {} cells, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse("line 1", "no rows"));
    }
    Mat::from_rows(&rows)
}

pub fn load_edges(path: impl AsRef<Path>) -> Result<EdgeList> {
    parse_edges(&fs::read_to_string(path)?)
}

/// Parses `out in` lines. `#` starts a comment; a `# nodes=N` line before the
/// first edge fixes the node count, otherwise it is one more than the largest id.
pub fn parse_edges(text: &str) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut declared: Option<usize> = None;
    let mut declared_line = 0;
    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("nodes=") {
                if !edges.is_empty() {
                    return Err(Error::parse(loc(), "nodes directive must precede all edges"));
                }
                let n = value
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(loc(), format!("bad node count {value:?}")))?;
                declared = Some(n);
                declared_line = lineno + 1;
            }
            continue;
        }
        let ids: Vec<&str> = line.split_whitespace().collect();
        if ids.len() != 2 {
            return Err(Error::parse(
                loc(),
                format!("expected two node ids, found {}", ids.len()),
            ));
        }
        let parse_id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(loc(), format!("bad node id {s:?}")))
        };
        let (out, inn) = (parse_id(ids[0])?, parse_id(ids[1])?);
        if out == inn {
            return Err(Error::parse(loc(), format!("self-loop on node {out}")));
        }
        edges.push((out, inn));
    }
    let implied = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let num_nodes = match declared {
        Some(n) if n < implied => {
            return Err(Error::parse(
                format!("line {declared_line}"),
                format!("nodes={n} but ids reach {}", implied - 1),
            ))
        }
        Some(n) => n,
        None => implied,
    };
    EdgeList::new(edges, num_nodes)
}

pub fn save_edges(path: impl AsRef<Path>, edges: &EdgeList) -> Result<()> {
    let mut buf = format!("# nodes={}\n", edges.num_nodes());
    for &(a, b) in edges.edges() {
        buf.push_str(&format!("{a} {b}\n"));
    }
    fs::write(path, buf)?;
    Ok(())
}

/// One non-negative integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(format!("line {}", i + 1), format!("bad label {l:?}")))
        })
        .collect()
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut buf = String::new();
    for l in labels {
        buf.push_str(&format!("{l}\n"));
    }
    fs::write(path, buf)?;
    Ok(())
}
