//! File formats.
//!
//! Matrices are dense CSV (one row per line) or JSON `{"n": .., "rows": [[..]]}`.
//! Trajectories are one decimal state per line, or the binary form: the magic
//! `MXGTRJ01` followed by little-endian `u32` states.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::StochasticMatrix;
use crate::error::{MixError, Result};
use crate::trajectory::Trajectory;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"MXGTRJ01";

#[derive(Debug, Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    rows: Vec<Vec<f64>>,
}

fn parse_err(e: impl std::fmt::Display) -> MixError {
    MixError::Parse(e.to_string())
}

/// Parses a matrix, choosing JSON when the first non-blank byte is `{`.
pub fn parse_matrix(text: &str) -> Result<StochasticMatrix> {
    let rows = if text.trim_start().starts_with('{') {
        let doc: MatrixJson = serde_json::from_str(text).map_err(parse_err)?;
        if doc.rows.len() != doc.n {
            return Err(MixError::Parse(format!(
                "declared n = {} but found {} rows",
                doc.n,
                doc.rows.len()
            )));
        }
        doc.rows
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(parse_err)?;
            let row = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        rows
    };
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(MixError::Parse("matrix must be square and nonempty".into()));
    }
    StochasticMatrix::from_rows(&rows)
}

pub fn matrix_to_json(p: &StochasticMatrix) -> String {
    serde_json::to_string_pretty(&MatrixJson {
        n: p.n(),
        rows: p.to_rows(),
    })
    .expect("serializable")
}

pub fn matrix_to_csv(p: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in p.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Decodes a trajectory in either format. `states` overrides the inferred
/// state-space size `max + 1`.
pub fn parse_trajectory(bytes: &[u8], states: Option<usize>) -> Result<Trajectory> {
    let seq: Vec<usize> = if let Some(body) = bytes.strip_prefix(TRAJECTORY_MAGIC.as_slice()) {
        if body.len() % 4 != 0 {
            return Err(MixError::Parse(format!(
                "binary body of {} bytes is not a multiple of 4",
                body.len()
            )));
        }
        body.chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect()
    } else {
        let text = std::str::from_utf8(bytes).map_err(parse_err)?;
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<usize>().map_err(|e| parse_err(format!("{l:?}: {e}"))))
            .collect::<Result<_>>()?
    };
    match states {
        Some(n) => Trajectory::new(seq, n),
        None => Ok(Trajectory::from_states(seq)),
    }
}

pub fn read_trajectory(mut r: impl Read, states: Option<usize>) -> Result<Trajectory> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(parse_err)?;
    parse_trajectory(&bytes, states)
}

pub fn write_trajectory_text(tr: &Trajectory, mut w: impl Write) -> std::io::Result<()> {
    let mut buf = String::with_capacity(tr.len() * 3);
    for s in tr.states() {
        buf.push_str(&s.to_string());
        buf.push('\n');
    }
    w.write_all(buf.as_bytes())
}

pub fn write_trajectory_binary(tr: &Trajectory, mut w: impl Write) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 * tr.len());
    buf.extend_from_slice(TRAJECTORY_MAGIC);
    for &s in tr.states() {
        let v = u32::try_from(s)
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "state exceeds u32"))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trips() {
        let p = crate::fixtures::skewed_cycle();
        assert_eq!(parse_matrix(&matrix_to_json(&p)).unwrap(), p);
        assert_eq!(parse_matrix(&matrix_to_csv(p.matrix())).unwrap(), p);
        assert_eq!(parse_matrix("0, 1\n 1,0\n").unwrap().n(), 2);
    }

    #[test]
    fn malformed_matrices() {
        assert!(parse_matrix("0.5,0.5\n1\n").unwrap_err().is_parse());
        assert!(parse_matrix("a,b\nc,d\n").unwrap_err().is_parse());
        assert!(parse_matrix(r#"{"n":3,"rows":[[1]]}"#).unwrap_err().is_parse());
        assert_eq!(parse_matrix("0.5,0.6\n0.5,0.5\n").unwrap_err().code(), "INVALID_MATRIX");
    }

    #[test]
    fn trajectory_round_trips() {
        let tr = Trajectory::from_states(vec![0, 3, 1, 1, 2]);
        let mut text = Vec::new();
        write_trajectory_text(&tr, &mut text).unwrap();
        assert_eq!(parse_trajectory(&text, None).unwrap(), tr);
        let mut bin = Vec::new();
        write_trajectory_binary(&tr, &mut bin).unwrap();
        assert_eq!(&bin[..8], TRAJECTORY_MAGIC);
        assert_eq!(bin.len(), 8 + 4 * 5);
        assert_eq!(parse_trajectory(&bin, None).unwrap(), tr);
        assert_eq!(parse_trajectory(&bin, Some(6)).unwrap().n(), 6);
    }

    #[test]
    fn malformed_trajectories() {
        assert!(parse_trajectory(b"0\nx\n", None).unwrap_err().is_parse());
        assert!(parse_trajectory(b"MXGTRJ01\x01\x00", None).unwrap_err().is_parse());
        assert!(parse_trajectory(b"0\n5\n", Some(3)).is_err());
        assert!(parse_trajectory(b"", None).unwrap().is_empty());
    }
}
