//! Binary model container.
//!
//! ```text
//! TEASER-MODEL 1\n
//! {"kind":...,"rows":n,"cols":t,...}\n
//! rows × cols little-endian f64, row-major
//! ```
//!
//! The header is a single line of JSON; everything after its newline is the
//! matrix payload.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::Tag;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::solver::{ConvergenceReport, EncoderModel, Hyperparams};

const MAGIC: &str = "TEASER-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope<H> {
    kind: String,
    rows: usize,
    cols: usize,
    #[serde(flatten)]
    header: H,
}

/// Serializes `matrix` under a typed header.
pub fn encode<H: Serialize>(kind: &str, header: &H, matrix: &DenseMatrix) -> Result<Vec<u8>> {
    let envelope = Envelope {
        kind: kind.to_owned(),
        rows: matrix.rows(),
        cols: matrix.cols(),
        header,
    };
    let json = serde_json::to_string(&envelope)?;
    let mut out = Vec::with_capacity(json.len() + 32 + matrix.as_slice().len() * 8);
    writeln!(out, "{MAGIC} {FORMAT_VERSION}").expect("write to vec");
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode`]; `kind` must match.
pub fn decode<H: DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<(H, DenseMatrix)> {
    let (magic_line, rest) = split_line(bytes).ok_or_else(|| format_err("missing magic line"))?;
    let magic =
        std::str::from_utf8(magic_line).map_err(|_| format_err("magic line is not UTF-8"))?;
    let version = magic
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| format_err("not a model container"))?;
    if version != FORMAT_VERSION {
        return Err(format_err(&format!(
            "unsupported container version {version}"
        )));
    }
    let (header_line, payload) =
        split_line(rest).ok_or_else(|| format_err("missing header line"))?;
    let envelope: Envelope<H> = serde_json::from_slice(header_line)?;
    if envelope.kind != kind {
        return Err(format_err(&format!(
            "expected a `{kind}` model, found `{}`",
            envelope.kind
        )));
    }
    let expected = envelope
        .rows
        .checked_mul(envelope.cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err("matrix size overflows"))?;
    if payload.len() != expected {
        return Err(format_err(&format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let matrix = DenseMatrix::new(envelope.rows, envelope.cols, values)?;
    Ok((envelope.header, matrix))
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

fn format_err(msg: &str) -> Error {
    Error::Format(msg.to_owned())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct EncoderHeader {
    hyperparams: Hyperparams,
    vocabulary: Vec<Tag>,
    report: ConvergenceReport,
}

const ENCODER_KIND: &str = "teaser-encoder";

impl EncoderModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = EncoderHeader {
            hyperparams: self.hyperparams.clone(),
            vocabulary: self.vocabulary.clone(),
            report: self.report.clone(),
        };
        encode(ENCODER_KIND, &header, &self.encoder)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, encoder): (EncoderHeader, _) = decode(ENCODER_KIND, bytes)?;
        if h.vocabulary.len() != encoder.cols() {
            return Err(format_err("vocabulary length differs from encoder columns"));
        }
        Ok(EncoderModel {
            encoder,
            vocabulary: h.vocabulary,
            hyperparams: h.hyperparams,
            report: h.report,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EncoderModel {
        EncoderModel {
            encoder: DenseMatrix::from_fn(3, 2, |i, j| {
                (i as f64 + 0.1).ln() * (j as f64 - 0.3) / 7.0
            }),
            vocabulary: vec![
                Tag {
                    category: "genre".into(),
                    label: "A \"quoted\"\nlabel".into(),
                },
                Tag {
                    category: "popularity".into(),
                    label: "popularity".into(),
                },
            ],
            hyperparams: Hyperparams::new(0.1, 3.0, 1.5),
            report: ConvergenceReport {
                converged: true,
                iterations: 17,
                primal_residual: 1.234e-7,
                dual_step: 1.234e-7,
                objective: 0.1 + 0.2,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = m.to_bytes().unwrap();
        let back = EncoderModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.encoder.as_slice().iter().zip(m.encoder.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn header_is_text() {
        let bytes = model().to_bytes().unwrap();
        let text = std::str::from_utf8(&bytes[..bytes.len() - 48]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("TEASER-MODEL 1"));
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["rows"], 3);
        assert_eq!(header["cols"], 2);
        assert_eq!(header["kind"], "teaser-encoder");
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = model().to_bytes().unwrap();
        assert!(EncoderModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(EncoderModel::from_bytes(b"garbage\n{}\n").is_err());
        let mut wrong = bytes.clone();
        wrong[13] = b'9';
        assert!(matches!(
            EncoderModel::from_bytes(&wrong),
            Err(Error::Format(_))
        ));
    }
}
