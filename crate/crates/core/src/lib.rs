//! Counting in finite-precision recurrent networks.
//!
//! - [`numerics`]: reduced-mantissa quantization and the small dense algebra
//!   every state update goes through.
//! - [`cells`]: SRNN, IRNN, GRU and LSTM updates, recognizers, gate pinning,
//!   JSON model files.
//! - [`skcm`]: simplified k-counter machines, canonical machines and the
//!   pigeonhole collision search.
//! - [`constructions`]: hand-set weights for counting LSTMs and IRNNs, the
//!   bounded SRNN and GRU counters, and the binary-counter infeasibility check.
//! - [`langdata`]: membership oracles and seeded dataset generation.
//! - [`training`]: backpropagation through time, gradient checking and SGD.
//! - [`eval`]: generalization sweeps, traces, counting-dimension detection and
//!   plots.

pub mod acceptor;
pub mod cells;
pub mod constructions;
pub mod eval;
pub mod hexfloat;
pub mod langdata;
pub mod numerics;
pub mod skcm;
pub mod training;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] numerics::NumericError),
    #[error(transparent)]
    Cell(#[from] cells::CellError),
    #[error(transparent)]
    Skcm(#[from] skcm::SkcmError),
    #[error(transparent)]
    Lang(#[from] langdata::LangError),
    #[error(transparent)]
    Construction(#[from] constructions::ConstructionError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

pub use acceptor::{Acceptor, AtPrecision};
pub use cells::{CellKind, CellParams, CellState, LstmOutput, Recognizer};
pub use langdata::{Language, Sample};
pub use numerics::{Precision, QuantMode};
pub use skcm::SkcmDef;
