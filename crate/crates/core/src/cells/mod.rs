//! The four recurrent update rules and the recognizer built on top of them.
//!
//! A [`Recognizer`] maps each alphabet symbol to an input vector, folds a cell
//! over the word from the zero state and reads a single score off the final
//! state. The word is accepted when the score exceeds the threshold.

mod batch;
mod io;

pub use io::{RecognizerDoc, FORMAT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::sync::Arc;

use crate::numerics::{self, affine_into, check_finite, Activation, Matrix, NumericError, Precision, QuantMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(char),
    #[error("{0}")]
    WrongKind(String),
    #[error("malformed model document: {0}")]
    Format(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, CellError>;

/// The `g` applied to the LSTM memory cell before the output gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LstmOutput {
    Tanh,
    Identity,
}

impl LstmOutput {
    pub fn activation(self) -> Activation {
        match self {
            LstmOutput::Tanh => Activation::Tanh,
            LstmOutput::Identity => Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// Elman network with tanh.
    Srnn,
    /// Elman network with ReLU.
    Irnn,
    Gru,
    Lstm(LstmOutput),
}

impl CellKind {
    /// Gate names in storage order.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Srnn | CellKind::Irnn => &["h"],
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm(_) => &["f", "i", "o", "c"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Srnn => "srnn",
            CellKind::Irnn => "irnn",
            CellKind::Gru => "gru",
            CellKind::Lstm(_) => "lstm",
        }
    }

    pub fn is_lstm(self) -> bool {
        matches!(self, CellKind::Lstm(_))
    }
}

impl std::str::FromStr for CellKind {
    type Err = String;

    /// `lstm` defaults to a tanh output; `lstm-id` selects the identity.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "srnn" => Ok(CellKind::Srnn),
            "irnn" => Ok(CellKind::Irnn),
            "gru" => Ok(CellKind::Gru),
            "lstm" | "lstm-tanh" => Ok(CellKind::Lstm(LstmOutput::Tanh)),
            "lstm-id" | "lstm-identity" => Ok(CellKind::Lstm(LstmOutput::Identity)),
            other => Err(format!("unknown cell kind `{other}`")),
        }
    }
}

// Gate indices.
pub const GRU_Z: usize = 0;
pub const GRU_R: usize = 1;
pub const GRU_H: usize = 2;
pub const LSTM_F: usize = 0;
pub const LSTM_I: usize = 1;
pub const LSTM_O: usize = 2;
pub const LSTM_C: usize = 3;

/// One affine block `W x + U h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: vec![0.0; hidden_dim],
        }
    }

    /// Zero weights and a constant bias, so the gate outputs `act(bias)`
    /// regardless of input and state.
    pub fn constant(input_dim: usize, hidden_dim: usize, bias: f64) -> Self {
        Gate { b: vec![bias; hidden_dim], ..Gate::zeros(input_dim, hidden_dim) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    kind: CellKind,
    input_dim: usize,
    hidden_dim: usize,
    gates: Vec<Gate>,
}

impl CellParams {
    pub fn new(kind: CellKind, input_dim: usize, hidden_dim: usize, gates: Vec<Gate>) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(CellError::Dimension("input and hidden dims must be positive".into()));
        }
        let names = kind.gate_names();
        if gates.len() != names.len() {
            return Err(CellError::Dimension(format!(
                "{} expects {} gates, got {}",
                kind.name(),
                names.len(),
                gates.len()
            )));
        }
        for (g, name) in gates.iter().zip(names) {
            if g.w.rows() != hidden_dim
                || g.w.cols() != input_dim
                || g.u.rows() != hidden_dim
                || g.u.cols() != hidden_dim
                || g.b.len() != hidden_dim
            {
                return Err(CellError::Dimension(format!(
                    "gate {name}: W {}x{}, U {}x{}, b[{}] for input {input_dim}, hidden {hidden_dim}",
                    g.w.rows(),
                    g.w.cols(),
                    g.u.rows(),
                    g.u.cols(),
                    g.b.len()
                )));
            }
        }
        Ok(CellParams { kind, input_dim, hidden_dim, gates })
    }

    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let gates = (0..kind.gate_names().len()).map(|_| Gate::zeros(input_dim, hidden_dim)).collect();
        CellParams { kind, input_dim, hidden_dim, gates }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, i: usize) -> &Gate {
        &self.gates[i]
    }

    /// Mutable gate access. Shapes must not be changed.
    pub fn gate_mut(&mut self, i: usize) -> &mut Gate {
        &mut self.gates[i]
    }

    pub(crate) fn gates_mut(&mut self) -> &mut [Gate] {
        &mut self.gates
    }
}

/// Recurrent state: `h`, plus the memory cell `c` for LSTMs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

impl CellState {
    pub fn zeros(params: &CellParams) -> Self {
        let n = params.hidden_dim;
        CellState { h: vec![0.0; n], c: params.kind.is_lstm().then(|| vec![0.0; n]) }
    }

    /// The vector a trace shows: `c` for an LSTM, `h` otherwise.
    pub fn observed(&self) -> &[f64] {
        self.c.as_deref().unwrap_or(&self.h)
    }
}

/// Intermediate values of one step, reused as scratch space and as the
/// record backpropagation needs.
#[derive(Debug, Clone, Default)]
pub struct StepCache {
    /// Pre-activations per gate.
    pub pre: Vec<Vec<f64>>,
    /// Activation outputs per gate.
    pub act: Vec<Vec<f64>>,
    /// GRU: `r * h_prev`. LSTM: `g(c)`. Empty otherwise.
    pub aux: Vec<f64>,
}

impl StepCache {
    pub fn for_params(params: &CellParams) -> Self {
        let n = params.hidden_dim;
        let gates = params.gates.len();
        StepCache {
            pre: vec![vec![0.0; n]; gates],
            act: vec![vec![0.0; n]; gates],
            aux: vec![0.0; if gates > 1 { n } else { 0 }],
        }
    }
}

fn check_dims(params: &CellParams, state: &CellState, x: &[f64]) -> Result<()> {
    let n = params.hidden_dim;
    if x.len() != params.input_dim {
        return Err(CellError::Dimension(format!("input has {} entries, expected {}", x.len(), params.input_dim)));
    }
    if state.h.len() != n {
        return Err(CellError::Dimension(format!("h has {} entries, expected {n}", state.h.len())));
    }
    match (&state.c, params.kind.is_lstm()) {
        (Some(c), true) if c.len() == n => Ok(()),
        (None, false) => Ok(()),
        _ => Err(CellError::Dimension("memory cell present iff the cell is an LSTM".into())),
    }
}

/// One state update, writing into `next` and leaving intermediates in `cache`.
pub fn step_into(
    params: &CellParams,
    prev: &CellState,
    x: &[f64],
    p: Precision,
    cache: &mut StepCache,
    next: &mut CellState,
) -> Result<()> {
    check_dims(params, prev, x)?;
    let gates = &params.gates;
    step_with(params, prev, p, cache, next, |gi, h_in, out| {
        let g = &gates[gi];
        Ok(affine_into(&g.w, x, &g.u, h_in, &g.b, p, out)?)
    })
}

/// The update rules, with the gate pre-activations `W x + U h_in + b`
/// supplied by `affine(gate, h_in, out)`.
fn step_with(
    params: &CellParams,
    prev: &CellState,
    p: Precision,
    cache: &mut StepCache,
    next: &mut CellState,
    mut affine: impl FnMut(usize, &[f64], &mut [f64]) -> Result<()>,
) -> Result<()> {
    let h = &prev.h;
    match params.kind {
        CellKind::Srnn | CellKind::Irnn => {
            let act = if params.kind == CellKind::Srnn { Activation::Tanh } else { Activation::Relu };
            affine(0, h, &mut cache.pre[0])?;
            for ((a, &z), out) in cache.act[0].iter_mut().zip(&cache.pre[0]).zip(next.h.iter_mut()) {
                *a = p.q(act.eval(z));
                *out = *a;
            }
        }
        CellKind::Gru => {
            for gi in [GRU_Z, GRU_R] {
                affine(gi, h, &mut cache.pre[gi])?;
                for (a, &z) in cache.act[gi].iter_mut().zip(&cache.pre[gi]) {
                    *a = p.q(numerics::sigmoid(z));
                }
            }
            for ((rh, &r), &hp) in cache.aux.iter_mut().zip(&cache.act[GRU_R]).zip(h) {
                *rh = p.q_op(r * hp);
            }
            affine(GRU_H, &cache.aux, &mut cache.pre[GRU_H])?;
            for (a, &z) in cache.act[GRU_H].iter_mut().zip(&cache.pre[GRU_H]) {
                *a = p.q(z.tanh());
            }
            for j in 0..params.hidden_dim {
                let z = cache.act[GRU_Z][j];
                let keep = p.q_op(z * h[j]);
                let fresh = p.q_op(p.q_op(1.0 - z) * cache.act[GRU_H][j]);
                next.h[j] = p.q(p.q_op(keep + fresh));
            }
        }
        CellKind::Lstm(g_out) => {
            let c_prev = prev.c.as_ref().expect("checked above");
            for (gi, act) in [
                (LSTM_F, Activation::Sigmoid),
                (LSTM_I, Activation::Sigmoid),
                (LSTM_O, Activation::Sigmoid),
                (LSTM_C, Activation::Tanh),
            ] {
                affine(gi, h, &mut cache.pre[gi])?;
                for (a, &z) in cache.act[gi].iter_mut().zip(&cache.pre[gi]) {
                    *a = p.q(act.eval(z));
                }
            }
            let g_act = g_out.activation();
            let c_next = next.c.as_mut().ok_or_else(|| CellError::Dimension("missing memory cell".into()))?;
            for j in 0..params.hidden_dim {
                let kept = p.q_op(cache.act[LSTM_F][j] * c_prev[j]);
                let written = p.q_op(cache.act[LSTM_I][j] * cache.act[LSTM_C][j]);
                let c = p.q(p.q_op(kept + written));
                c_next[j] = c;
                let gc = p.q(g_act.eval(c));
                cache.aux[j] = gc;
                next.h[j] = p.q(p.q_op(cache.act[LSTM_O][j] * gc));
            }
        }
    }
    check_finite(&next.h).map_err(CellError::from)?;
    if let Some(c) = &next.c {
        check_finite(c)?;
    }
    Ok(())
}

/// One state update.
pub fn step(params: &CellParams, state: &CellState, x: &[f64], p: Precision) -> Result<CellState> {
    let mut cache = StepCache::for_params(params);
    let mut next = CellState::zeros(params);
    step_into(params, state, x, p, &mut cache, &mut next)?;
    Ok(next)
}

/// Dense layer used by the readout's optional hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Maps the final hidden state to one score: either `v . h + v0`, or
/// `v . tanh(A h + a) + v0` when a hidden layer is present.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub hidden: Option<Dense>,
    pub out_w: Vec<f64>,
    pub out_b: f64,
}

impl Readout {
    pub fn linear(out_w: Vec<f64>, out_b: f64) -> Self {
        Readout { hidden: None, out_w, out_b }
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(d) => d.w.cols(),
            None => self.out_w.len(),
        }
    }

    /// Hidden activations (if any) and the score.
    pub fn forward(&self, h: &[f64], p: Precision) -> Result<(Option<Vec<f64>>, f64)> {
        let (features, hidden) = match &self.hidden {
            Some(d) => {
                let mut a = d.b.clone();
                d.w.accumulate_mul(h, &mut a, p);
                let y: Vec<f64> = a.iter().map(|&v| p.q(v.tanh())).collect();
                (y.clone(), Some(y))
            }
            None => (h.to_vec(), None),
        };
        let mut score = 0.0;
        for (w, f) in self.out_w.iter().zip(&features) {
            score = p.q_op(score + p.q_op(w * f));
        }
        score = p.q_op(score + self.out_b);
        if !score.is_finite() {
            return Err(CellError::Numeric(NumericError::NonFinite(score)));
        }
        Ok((hidden, score))
    }

    pub fn score(&self, h: &[f64], p: Precision) -> Result<f64> {
        Ok(self.forward(h, p)?.1)
    }
}

/// An RNN acceptor: embedding, cell, readout and decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    alphabet: Vec<char>,
    /// One row per alphabet symbol.
    embedding: Matrix,
    pub cell: CellParams,
    pub readout: Readout,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub state: CellState,
    pub score: f64,
    pub accept: bool,
}

impl Recognizer {
    /// One-hot embedding over `alphabet`.
    pub fn one_hot(alphabet: Vec<char>, cell: CellParams, readout: Readout) -> Result<Self> {
        let embedding = Matrix::identity(alphabet.len());
        Self::with_embedding(alphabet, embedding, cell, readout, 0.0)
    }

    pub fn with_embedding(
        alphabet: Vec<char>,
        embedding: Matrix,
        cell: CellParams,
        readout: Readout,
        threshold: f64,
    ) -> Result<Self> {
        let mut seen = alphabet.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != alphabet.len() || alphabet.is_empty() {
            return Err(CellError::Dimension("alphabet must be non-empty with distinct symbols".into()));
        }
        if embedding.rows() != alphabet.len() || embedding.cols() != cell.input_dim() {
            return Err(CellError::Dimension(format!(
                "embedding is {}x{}, expected {}x{}",
                embedding.rows(),
                embedding.cols(),
                alphabet.len(),
                cell.input_dim()
            )));
        }
        if readout.input_dim() != cell.hidden_dim() {
            return Err(CellError::Dimension(format!(
                "readout reads {} values, cell has {}",
                readout.input_dim(),
                cell.hidden_dim()
            )));
        }
        if let Some(d) = &readout.hidden {
            if d.b.len() != d.w.rows() || readout.out_w.len() != d.w.rows() {
                return Err(CellError::Dimension("readout hidden layer shape".into()));
            }
        }
        Ok(Recognizer { alphabet, embedding, cell, readout, threshold })
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn symbol_index(&self, s: char) -> Result<usize> {
        self.alphabet.iter().position(|&a| a == s).ok_or(CellError::UnknownSymbol(s))
    }

    pub fn embed(&self, s: char) -> Result<&[f64]> {
        Ok(self.embedding.row(self.symbol_index(s)?))
    }

    /// All intermediate states, starting with the zero state.
    pub fn states(&self, word: &[char], p: Precision) -> Result<Vec<CellState>> {
        let mut out = Vec::with_capacity(word.len() + 1);
        out.push(CellState::zeros(&self.cell));
        let mut cache = StepCache::for_params(&self.cell);
        for (t, &s) in word.iter().enumerate() {
            let x = self.embed(s)?;
            let mut next = CellState::zeros(&self.cell);
            step_into(&self.cell, &out[t], x, p, &mut cache, &mut next).map_err(|e| at_step(e, t + 1))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn run(&self, word: &[char], p: Precision) -> Result<RunOutput> {
        let mut runner = Runner::new(self, p);
        for &s in word {
            runner.push(s)?;
        }
        let score = runner.score()?;
        Ok(RunOutput { state: runner.state.clone(), score, accept: score > self.threshold })
    }

    pub fn run_str(&self, word: &str, p: Precision) -> Result<RunOutput> {
        let w: Vec<char> = word.chars().collect();
        self.run(&w, p)
    }
}

fn at_step(e: CellError, step: usize) -> CellError {
    match e {
        CellError::Numeric(NumericError::NonFinite(_)) => CellError::NonFinite { step },
        other => other,
    }
}

/// Gate pre-activations specialised to one-hot inputs and sparse recurrent
/// weights. The summation order matches [`affine_into`], so results are
/// bit-identical; only used when intermediate operations are not rounded.
#[derive(Debug)]
struct Compiled {
    /// `input[symbol][gate]`: the `W x` part for that symbol.
    input: Vec<Vec<Vec<f64>>>,
    /// `recurrent[gate][j]`: nonzero `(i, U[i][j])`, ascending `i`.
    recurrent: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Compiled {
    fn new(r: &Recognizer, p: Precision) -> Option<Self> {
        if p.mode() == QuantMode::FullyQuantized {
            return None;
        }
        let mut input = Vec::with_capacity(r.alphabet.len());
        for s in 0..r.alphabet.len() {
            let row = r.embedding.row(s);
            let mut hot = row.iter().enumerate().filter(|(_, &v)| v != 0.0);
            let col = match (hot.next(), hot.next()) {
                (Some((c, &v)), None) if v == 1.0 => Some(c),
                (None, _) => None,
                _ => return None,
            };
            input.push(
                r.cell
                    .gates
                    .iter()
                    .map(|g| (0..g.w.rows()).map(|i| col.map_or(0.0, |c| g.w.get(i, c))).map(|v| v + 0.0).collect())
                    .collect(),
            );
        }
        let recurrent = r
            .cell
            .gates
            .iter()
            .map(|g| {
                (0..g.u.cols())
                    .map(|j| (0..g.u.rows()).filter(|&i| g.u.get(i, j) != 0.0).map(|i| (i, g.u.get(i, j))).collect())
                    .collect()
            })
            .collect();
        Some(Compiled { input, recurrent })
    }

    fn affine(&self, gate: &Gate, gi: usize, symbol: usize, h_in: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.input[symbol][gi]);
        for (col, &hj) in self.recurrent[gi].iter().zip(h_in) {
            if hj == 0.0 {
                continue;
            }
            for &(i, u) in col {
                out[i] += u * hj;
            }
        }
        for (o, &b) in out.iter_mut().zip(&gate.b) {
            *o += b;
        }
        Ok(check_finite(out)?)
    }
}

/// Incremental evaluation with reusable buffers.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    recognizer: &'a Recognizer,
    precision: Precision,
    compiled: Option<Arc<Compiled>>,
    state: CellState,
    spare: CellState,
    cache: StepCache,
    steps: usize,
}

impl<'a> Runner<'a> {
    pub fn new(recognizer: &'a Recognizer, precision: Precision) -> Self {
        let state = CellState::zeros(&recognizer.cell);
        Runner {
            recognizer,
            precision,
            compiled: Compiled::new(recognizer, precision).map(Arc::new),
            spare: state.clone(),
            state,
            cache: StepCache::for_params(&recognizer.cell),
            steps: 0,
        }
    }

    pub fn push(&mut self, s: char) -> Result<()> {
        let r = self.recognizer;
        let result = match &self.compiled {
            Some(c) => {
                let symbol = r.symbol_index(s)?;
                let gates = &r.cell.gates;
                step_with(&r.cell, &self.state, self.precision, &mut self.cache, &mut self.spare, |gi, h_in, out| {
                    c.affine(&gates[gi], gi, symbol, h_in, out)
                })
            }
            None => step_into(&r.cell, &self.state, r.embed(s)?, self.precision, &mut self.cache, &mut self.spare),
        };
        result.map_err(|e| at_step(e, self.steps + 1))?;
        std::mem::swap(&mut self.state, &mut self.spare);
        self.steps += 1;
        Ok(())
    }

    pub fn state(&self) -> &CellState {
        &self.state
    }

    /// Number of symbols consumed.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn score(&self) -> Result<f64> {
        self.recognizer.readout.score(&self.state.h, self.precision)
    }

    /// Lockstep continuation of several runs over one repeated symbol; see
    /// [`Acceptor::decide_runs`](crate::acceptor::Acceptor::decide_runs).
    /// `None` when the cell has no lockstep implementation.
    pub(crate) fn decide_runs_lockstep(
        runs: &[Runner<'a>],
        symbol: char,
        checkpoints: &[Vec<usize>],
    ) -> Option<Vec<Vec<Option<bool>>>> {
        let first = runs.first()?;
        if runs.iter().any(|r| !std::ptr::eq(r.recognizer, first.recognizer) || r.precision != first.precision) {
            return None;
        }
        let states: Vec<&CellState> = runs.iter().map(|r| &r.state).collect();
        batch::decide_runs(first.recognizer, first.precision, &states, symbol, checkpoints)
    }

    pub fn accepts(&self) -> Result<bool> {
        Ok(self.score()? > self.recognizer.threshold)
    }
}

/// Saturating pre-activation used to pin sigmoid gates to 0 or 1.
pub const SATURATION: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinTarget {
    Srnn,
    Gru,
    Lstm,
}

/// Embed an SRNN into a GRU (`z -> 0`, `r -> 1`) or an identity-output LSTM
/// (`i -> 1`, `o -> 1`, `f -> 0`) by constant saturated gates.
pub fn pin_to_srnn(srnn: &CellParams, target: PinTarget) -> Result<CellParams> {
    if srnn.kind != CellKind::Srnn {
        return Err(CellError::WrongKind(format!("expected srnn parameters, got {}", srnn.kind.name())));
    }
    let (d, n) = (srnn.input_dim, srnn.hidden_dim);
    let core = srnn.gates[0].clone();
    match target {
        PinTarget::Srnn => Err(CellError::WrongKind("pinning target must be gru or lstm".into())),
        PinTarget::Gru => CellParams::new(
            CellKind::Gru,
            d,
            n,
            vec![Gate::constant(d, n, -SATURATION), Gate::constant(d, n, SATURATION), core],
        ),
        PinTarget::Lstm => CellParams::new(
            CellKind::Lstm(LstmOutput::Identity),
            d,
            n,
            vec![
                Gate::constant(d, n, -SATURATION),
                Gate::constant(d, n, SATURATION),
                Gate::constant(d, n, SATURATION),
                core,
            ],
        ),
    }
}

/// Same weights with a different LSTM output function.
pub fn with_lstm_output(params: &CellParams, g: LstmOutput) -> Result<CellParams> {
    if !params.kind.is_lstm() {
        return Err(CellError::WrongKind("not an lstm".into()));
    }
    let mut out = params.clone();
    out.kind = CellKind::Lstm(g);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p23() -> Precision {
        Precision::state(23).unwrap()
    }

    #[test]
    fn zero_srnn_stays_at_zero() {
        let params = CellParams::zeros(CellKind::Srnn, 2, 3);
        let s = step(&params, &CellState::zeros(&params), &[1.0, 0.0], p23()).unwrap();
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn saturated_lstm_gates_hold_the_cell() {
        let d = 2;
        let n = 1;
        let mut params = CellParams::zeros(CellKind::Lstm(LstmOutput::Tanh), d, n);
        params.gate_mut(LSTM_F).b = vec![SATURATION];
        params.gate_mut(LSTM_I).b = vec![-SATURATION];
        params.gate_mut(LSTM_C).b = vec![0.7];
        let state = CellState { h: vec![0.3], c: Some(vec![3.25]) };
        let next = step(&params, &state, &[0.0, 1.0], p23()).unwrap();
        // i = sigmoid(-25) is tiny but nonzero; rounding absorbs it into 3.25.
        assert_eq!(next.c.unwrap()[0], 3.25);
    }

    #[test]
    fn gru_with_update_gate_pinned_open_copies_state() {
        let mut params = CellParams::zeros(CellKind::Gru, 1, 2);
        params.gate_mut(GRU_Z).b = vec![SATURATION; 2];
        params.gate_mut(GRU_H).b = vec![0.9, -0.4];
        let state = CellState { h: vec![0.125, -0.5], c: None };
        let next = step(&params, &state, &[1.0], p23()).unwrap();
        assert_eq!(next.h, state.h);
    }

    #[test]
    fn irnn_is_nonnegative_and_can_explode() {
        let mut params = CellParams::zeros(CellKind::Irnn, 1, 1);
        params.gate_mut(0).u = Matrix::from_rows(&[vec![1.0e300]]).unwrap();
        params.gate_mut(0).w = Matrix::from_rows(&[vec![1.0e300]]).unwrap();
        let rec = Recognizer::one_hot(vec!['a'], params, Readout::linear(vec![1.0], 0.0)).unwrap();
        let err = rec.run_str("aaa", Precision::exact()).unwrap_err();
        assert_eq!(err, CellError::NonFinite { step: 2 });
    }

    #[test]
    fn dimension_checks() {
        let params = CellParams::zeros(CellKind::Srnn, 2, 3);
        assert!(matches!(
            step(&params, &CellState::zeros(&params), &[1.0], p23()),
            Err(CellError::Dimension(_))
        ));
        let bad = CellParams::new(CellKind::Gru, 2, 3, vec![Gate::zeros(2, 3)]);
        assert!(bad.is_err());
        let lstm = CellParams::zeros(CellKind::Lstm(LstmOutput::Tanh), 2, 3);
        let no_cell = CellState { h: vec![0.0; 3], c: None };
        assert!(step(&lstm, &no_cell, &[1.0, 0.0], p23()).is_err());
    }

    #[test]
    fn empty_word_reads_the_zero_state() {
        let params = CellParams::zeros(CellKind::Gru, 2, 2);
        let rec = Recognizer::one_hot(vec!['a', 'b'], params, Readout::linear(vec![1.0, 2.0], 0.5)).unwrap();
        let out = rec.run(&[], p23()).unwrap();
        assert_eq!(out.score, 0.5);
        assert!(out.accept);
        assert_eq!(out.state.h, vec![0.0, 0.0]);
    }

    #[test]
    fn unknown_symbol() {
        let params = CellParams::zeros(CellKind::Srnn, 2, 2);
        let rec = Recognizer::one_hot(vec!['a', 'b'], params, Readout::linear(vec![0.0, 0.0], 0.0)).unwrap();
        assert_eq!(rec.run_str("abz", p23()).unwrap_err(), CellError::UnknownSymbol('z'));
    }

    #[test]
    fn pinning_rejects_bad_targets() {
        let srnn = CellParams::zeros(CellKind::Srnn, 2, 2);
        assert!(pin_to_srnn(&srnn, PinTarget::Srnn).is_err());
        let gru = CellParams::zeros(CellKind::Gru, 2, 2);
        assert!(pin_to_srnn(&gru, PinTarget::Lstm).is_err());
        let pinned = pin_to_srnn(&srnn, PinTarget::Lstm).unwrap();
        assert_eq!(pinned.kind(), CellKind::Lstm(LstmOutput::Identity));
    }

    #[test]
    fn readout_hidden_layer() {
        let readout = Readout {
            hidden: Some(Dense { w: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap(), b: vec![0.0, 0.0] }),
            out_w: vec![1.0, 1.0],
            out_b: 0.0,
        };
        let (hidden, score) = readout.forward(&[0.5, 0.5], Precision::exact()).unwrap();
        assert_eq!(hidden.unwrap(), vec![0.5f64.tanh(), (-0.5f64).tanh()]);
        assert!(score.abs() < 1e-15);
    }
}
