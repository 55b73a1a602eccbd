//! JSON documents for recognizers. Every float is a hex-float string, so a
//! save/load cycle reproduces the parameters bit for bit.

use serde::{Deserialize, Serialize};

use super::{CellError, CellKind, CellParams, Dense, Gate, LstmOutput, Readout, Recognizer, Result};
use crate::hexfloat;
use crate::numerics::Matrix;

pub const FORMAT_VERSION: &str = "countlab-recognizer/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDoc {
    pub name: String,
    pub w: Vec<Vec<String>>,
    pub u: Vec<Vec<String>>,
    pub b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseDoc {
    pub w: Vec<Vec<String>>,
    pub b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutDoc {
    pub hidden: Option<DenseDoc>,
    pub out_w: Vec<String>,
    pub out_b: String,
}

/// Serialized form of a [`Recognizer`]. `extra` carries free-form metadata
/// such as a training block in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizerDoc {
    pub format: String,
    pub kind: String,
    pub g: Option<LstmOutput>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub alphabet: Vec<String>,
    pub embedding: Vec<Vec<String>>,
    pub gates: Vec<GateDoc>,
    pub readout: ReadoutDoc,
    pub threshold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

fn enc_vec(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| hexfloat::format(x)).collect()
}

fn enc_mat(m: &Matrix) -> Vec<Vec<String>> {
    (0..m.rows()).map(|i| enc_vec(m.row(i))).collect()
}

fn dec(s: &str) -> Result<f64> {
    hexfloat::parse(s).map_err(CellError::Format)
}

fn dec_vec(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| dec(s)).collect()
}

fn dec_mat(rows: &[Vec<String>], n_rows: usize, n_cols: usize) -> Result<Matrix> {
    let rows = rows.iter().map(|r| dec_vec(r)).collect::<Result<Vec<_>>>()?;
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(CellError::Format(format!("expected a {n_rows}x{n_cols} matrix")));
    }
    if n_rows == 0 {
        return Ok(Matrix::zeros(0, n_cols));
    }
    Matrix::from_rows(&rows).map_err(CellError::from)
}

impl From<&Recognizer> for RecognizerDoc {
    fn from(r: &Recognizer) -> Self {
        let kind = r.cell.kind();
        let g = match kind {
            CellKind::Lstm(g) => Some(g),
            _ => None,
        };
        RecognizerDoc {
            format: FORMAT_VERSION.into(),
            kind: kind.name().into(),
            g,
            input_dim: r.cell.input_dim(),
            hidden_dim: r.cell.hidden_dim(),
            alphabet: r.alphabet().iter().map(|c| c.to_string()).collect(),
            embedding: enc_mat(r.embedding()),
            gates: kind
                .gate_names()
                .iter()
                .zip(r.cell.gates())
                .map(|(name, gate)| GateDoc {
                    name: (*name).into(),
                    w: enc_mat(&gate.w),
                    u: enc_mat(&gate.u),
                    b: enc_vec(&gate.b),
                })
                .collect(),
            readout: ReadoutDoc {
                hidden: r.readout.hidden.as_ref().map(|d| DenseDoc { w: enc_mat(&d.w), b: enc_vec(&d.b) }),
                out_w: enc_vec(&r.readout.out_w),
                out_b: hexfloat::format(r.readout.out_b),
            },
            threshold: hexfloat::format(r.threshold),
            training: None,
        }
    }
}

impl RecognizerDoc {
    pub fn to_recognizer(&self) -> Result<Recognizer> {
        if self.format != FORMAT_VERSION {
            return Err(CellError::Format(format!("unsupported format `{}`", self.format)));
        }
        let kind = match (self.kind.as_str(), self.g) {
            ("srnn", None) => CellKind::Srnn,
            ("irnn", None) => CellKind::Irnn,
            ("gru", None) => CellKind::Gru,
            ("lstm", Some(g)) => CellKind::Lstm(g),
            (k, g) => return Err(CellError::Format(format!("cell kind `{k}` with g = {g:?}"))),
        };
        let (d, n) = (self.input_dim, self.hidden_dim);
        let names = kind.gate_names();
        if self.gates.len() != names.len() {
            return Err(CellError::Format(format!("{} needs gates {names:?}", kind.name())));
        }
        let mut gates = Vec::with_capacity(names.len());
        for (doc, name) in self.gates.iter().zip(names) {
            if doc.name != *name {
                return Err(CellError::Format(format!("expected gate `{name}`, found `{}`", doc.name)));
            }
            gates.push(Gate { w: dec_mat(&doc.w, n, d)?, u: dec_mat(&doc.u, n, n)?, b: dec_vec(&doc.b)? });
        }
        let cell = CellParams::new(kind, d, n, gates)?;
        let alphabet = self
            .alphabet
            .iter()
            .map(|s| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(CellError::Format(format!("alphabet entry `{s}` is not one character"))),
                }
            })
            .collect::<Result<Vec<char>>>()?;
        let embedding = dec_mat(&self.embedding, alphabet.len(), d)?;
        let hidden = match &self.readout.hidden {
            Some(h) => {
                let width = h.b.len();
                Some(Dense { w: dec_mat(&h.w, width, n)?, b: dec_vec(&h.b)? })
            }
            None => None,
        };
        let readout = Readout { hidden, out_w: dec_vec(&self.readout.out_w)?, out_b: dec(&self.readout.out_b)? };
        Recognizer::with_embedding(alphabet, embedding, cell, readout, dec(&self.threshold)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CellError::Format(e.to_string()))
    }
}

impl Recognizer {
    pub fn to_json(&self) -> String {
        RecognizerDoc::from(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        RecognizerDoc::from_json(text)?.to_recognizer()
    }
}
