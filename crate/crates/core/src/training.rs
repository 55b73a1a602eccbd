//! Backpropagation through time, finite-difference checks and per-sample SGD.
//!
//! The forward pass runs at the configured precision and records every step;
//! the backward pass differentiates the recorded values in plain `f64`, so
//! rounding is treated as the identity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{
    step_into, CellError, CellKind, CellParams, CellState, Dense, Gate, LstmOutput, Readout, Recognizer, RecognizerDoc,
    StepCache, GRU_H, GRU_R, GRU_Z, LSTM_C, LSTM_F, LSTM_I, LSTM_O,
};
use crate::langdata::Sample;
use crate::numerics::{sigmoid, Activation, Matrix, Precision};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}: non-finite loss; try a smaller learning rate or set clip_norm")]
    Diverged { epoch: usize },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error(transparent)]
    Cell(#[from] CellError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Precision of the forward pass (training and dev evaluation).
    pub precision: Precision,
    /// `None` picks the per-cell default: 1.0 for IRNN, off otherwise.
    pub clip_norm: Option<f64>,
    /// Width of the tanh readout layer; 0 means a linear readout.
    pub readout_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 30,
            seed: 0,
            init_scale: 0.3,
            precision: Precision::default(),
            clip_norm: None,
            readout_hidden: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(TrainError::Config(format!("init_scale must be > 0, got {}", self.init_scale)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(TrainError::Config(format!("clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    pub fn effective_clip(&self, kind: CellKind) -> Option<f64> {
        match (self.clip_norm, kind) {
            (Some(c), _) => Some(c),
            (None, CellKind::Irnn) => Some(1.0),
            (None, _) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub reached_full_dev: bool,
    pub dev_accuracy_history: Vec<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub best_epoch: usize,
    /// Best-dev checkpoint.
    pub final_model: Recognizer,
}

impl TrainReport {
    pub fn best_dev_accuracy(&self) -> f64 {
        self.dev_accuracy_history.iter().copied().fold(0.0, f64::max)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`.
pub fn bce_with_logit(logit: f64, label: bool) -> f64 {
    if label {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Everything the backward pass needs from one forward pass.
struct Tape {
    /// `states[t]` precedes step `t`; the last entry is the final state.
    states: Vec<CellState>,
    caches: Vec<StepCache>,
    symbols: Vec<usize>,
    readout_hidden: Option<Vec<f64>>,
    logit: f64,
}

fn forward(r: &Recognizer, word: &[char], p: Precision) -> Result<Tape> {
    let mut states = Vec::with_capacity(word.len() + 1);
    let mut caches = Vec::with_capacity(word.len());
    let mut symbols = Vec::with_capacity(word.len());
    states.push(CellState::zeros(&r.cell));
    for (t, &s) in word.iter().enumerate() {
        let idx = r.symbol_index(s)?;
        let mut cache = StepCache::for_params(&r.cell);
        let mut next = CellState::zeros(&r.cell);
        step_into(&r.cell, &states[t], r.embedding().row(idx), p, &mut cache, &mut next).map_err(|e| match e {
            CellError::Numeric(_) => CellError::NonFinite { step: t + 1 },
            other => other,
        })?;
        states.push(next);
        caches.push(cache);
        symbols.push(idx);
    }
    let (readout_hidden, score) = r.readout.forward(&states[word.len()].h, p)?;
    Ok(Tape { states, caches, symbols, readout_hidden, logit: score - r.threshold })
}

/// Loss of one sample, forward pass at precision `p`.
pub fn loss_at(r: &Recognizer, s: &Sample, p: Precision) -> Result<f64> {
    let mut runner = crate::cells::Runner::new(r, p);
    for &c in &s.word {
        runner.push(c)?;
    }
    Ok(bce_with_logit(runner.score()? - r.threshold, s.label))
}

/// Loss of one sample in exact arithmetic.
pub fn loss(r: &Recognizer, s: &Sample) -> Result<f64> {
    loss_at(r, s, Precision::exact())
}

/// Gradient of the loss; mirrors the trainable parameters of a recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub gates: Vec<Gate>,
    pub readout: Readout,
}

impl Gradients {
    pub fn zeros_like(r: &Recognizer) -> Self {
        let n = r.cell.hidden_dim();
        let d = r.cell.input_dim();
        Gradients {
            gates: r.cell.gates().iter().map(|_| Gate::zeros(d, n)).collect(),
            readout: Readout {
                hidden: r.readout.hidden.as_ref().map(|h| Dense {
                    w: Matrix::zeros(h.w.rows(), h.w.cols()),
                    b: vec![0.0; h.b.len()],
                }),
                out_w: vec![0.0; r.readout.out_w.len()],
                out_b: 0.0,
            },
        }
    }

    fn slices(&mut self) -> Vec<&mut [f64]> {
        param_slices(&mut self.gates, &mut self.readout)
    }

    pub fn norm(&self) -> f64 {
        let mut copy = self.clone();
        copy.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut copy = self.clone();
        copy.slices().iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn param_slices<'a>(gates: &'a mut [Gate], readout: &'a mut Readout) -> Vec<&'a mut [f64]> {
    let mut out: Vec<&'a mut [f64]> = Vec::new();
    for g in gates.iter_mut() {
        out.push(g.w.as_mut_slice());
        out.push(g.u.as_mut_slice());
        out.push(&mut g.b[..]);
    }
    if let Some(d) = readout.hidden.as_mut() {
        out.push(d.w.as_mut_slice());
        out.push(&mut d.b[..]);
    }
    out.push(&mut readout.out_w[..]);
    out.push(std::slice::from_mut(&mut readout.out_b));
    out
}

fn recognizer_slices(r: &mut Recognizer) -> Vec<&mut [f64]> {
    let Recognizer { cell, readout, .. } = r;
    param_slices(cell.gates_mut(), readout)
}

fn add_scaled(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn accumulate_gate(grad: &mut Gate, dpre: &[f64], x: &[f64], h: &[f64]) {
    grad.w.add_outer(dpre, x);
    grad.u.add_outer(dpre, h);
    add_scaled(&mut grad.b, dpre, 1.0);
}

/// Exact gradients of the loss at the recorded forward pass.
fn backward_tape(r: &Recognizer, tape: &Tape, label: bool, grads: &mut Gradients) {
    let n = r.cell.hidden_dim();
    let dlogit = sigmoid(tape.logit) - if label { 1.0 } else { 0.0 };
    let h_final = &tape.states[tape.states.len() - 1].h;

    let mut dh = vec![0.0; n];
    let ro = &mut grads.readout;
    ro.out_b += dlogit;
    match (&r.readout.hidden, &tape.readout_hidden, ro.hidden.as_mut()) {
        (Some(layer), Some(phi), Some(g)) => {
            add_scaled(&mut ro.out_w, phi, dlogit);
            let dpre: Vec<f64> =
                r.readout.out_w.iter().zip(phi).map(|(&v, &y)| dlogit * v * (1.0 - y * y)).collect();
            g.w.add_outer(&dpre, h_final);
            add_scaled(&mut g.b, &dpre, 1.0);
            layer.w.accumulate_mul_transposed(&dpre, &mut dh);
        }
        _ => {
            add_scaled(&mut ro.out_w, h_final, dlogit);
            add_scaled(&mut dh, &r.readout.out_w, dlogit);
        }
    }

    let gates = r.cell.gates();
    let mut dc = vec![0.0; n];
    let mut dpre: Vec<Vec<f64>> = vec![vec![0.0; n]; gates.len()];
    let mut dh_prev = vec![0.0; n];
    for t in (0..tape.caches.len()).rev() {
        let prev = &tape.states[t];
        let cache = &tape.caches[t];
        let x = r.embedding().row(tape.symbols[t]);
        dh_prev.fill(0.0);
        match r.cell.kind() {
            CellKind::Srnn | CellKind::Irnn => {
                let act = if r.cell.kind() == CellKind::Srnn { Activation::Tanh } else { Activation::Relu };
                for j in 0..n {
                    dpre[0][j] = dh[j] * act.derivative(cache.pre[0][j], cache.act[0][j]);
                }
                accumulate_gate(&mut grads.gates[0], &dpre[0], x, &prev.h);
                gates[0].u.accumulate_mul_transposed(&dpre[0], &mut dh_prev);
            }
            CellKind::Gru => {
                let z = &cache.act[GRU_Z];
                let rg = &cache.act[GRU_R];
                let cand = &cache.act[GRU_H];
                for j in 0..n {
                    dpre[GRU_H][j] = dh[j] * (1.0 - z[j]) * (1.0 - cand[j] * cand[j]);
                    dpre[GRU_Z][j] = dh[j] * (prev.h[j] - cand[j]) * z[j] * (1.0 - z[j]);
                    dh_prev[j] = dh[j] * z[j];
                }
                accumulate_gate(&mut grads.gates[GRU_H], &dpre[GRU_H], x, &cache.aux);
                let mut drh = vec![0.0; n];
                gates[GRU_H].u.accumulate_mul_transposed(&dpre[GRU_H], &mut drh);
                for j in 0..n {
                    dpre[GRU_R][j] = drh[j] * prev.h[j] * rg[j] * (1.0 - rg[j]);
                    dh_prev[j] += drh[j] * rg[j];
                }
                for gi in [GRU_Z, GRU_R] {
                    accumulate_gate(&mut grads.gates[gi], &dpre[gi], x, &prev.h);
                    gates[gi].u.accumulate_mul_transposed(&dpre[gi], &mut dh_prev);
                }
            }
            CellKind::Lstm(g) => {
                let c_prev = prev.c.as_ref().expect("lstm state");
                let (f, i, o, cand) =
                    (&cache.act[LSTM_F], &cache.act[LSTM_I], &cache.act[LSTM_O], &cache.act[LSTM_C]);
                let gc = &cache.aux;
                for j in 0..n {
                    let dg = match g {
                        LstmOutput::Tanh => 1.0 - gc[j] * gc[j],
                        LstmOutput::Identity => 1.0,
                    };
                    let dct = dc[j] + dh[j] * o[j] * dg;
                    dpre[LSTM_O][j] = dh[j] * gc[j] * o[j] * (1.0 - o[j]);
                    dpre[LSTM_F][j] = dct * c_prev[j] * f[j] * (1.0 - f[j]);
                    dpre[LSTM_I][j] = dct * cand[j] * i[j] * (1.0 - i[j]);
                    dpre[LSTM_C][j] = dct * i[j] * (1.0 - cand[j] * cand[j]);
                    dc[j] = dct * f[j];
                }
                for gi in [LSTM_F, LSTM_I, LSTM_O, LSTM_C] {
                    accumulate_gate(&mut grads.gates[gi], &dpre[gi], x, &prev.h);
                    gates[gi].u.accumulate_mul_transposed(&dpre[gi], &mut dh_prev);
                }
            }
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }
}

/// Loss and gradients of one sample; the forward pass runs at `p`.
pub fn backward_at(r: &Recognizer, s: &Sample, p: Precision) -> Result<(f64, Gradients)> {
    let tape = forward(r, &s.word, p)?;
    let mut grads = Gradients::zeros_like(r);
    backward_tape(r, &tape, s.label, &mut grads);
    Ok((bce_with_logit(tape.logit, s.label), grads))
}

/// Exact gradients of [`loss`].
pub fn backward(r: &Recognizer, s: &Sample) -> Result<Gradients> {
    Ok(backward_at(r, s, Precision::exact())?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved a ReLU pre-activation across 0.
    pub skipped_at_kinks: usize,
}

/// Below this, `|analytic| + |numeric|` is treated as this value so that
/// parameters with vanishing gradients do not divide round-off by zero.
const REL_ERROR_FLOOR: f64 = 1e-6;

fn relu_pattern(r: &Recognizer, word: &[char]) -> Result<Vec<bool>> {
    let tape = forward(r, word, Precision::exact())?;
    Ok(tape.caches.iter().flat_map(|c| c.pre[0].iter().map(|&v| v > 0.0)).collect())
}

/// Central finite differences against [`backward`] for every parameter.
pub fn grad_check(r: &Recognizer, s: &Sample, fd_step: f64) -> Result<GradCheckReport> {
    if !(fd_step > 0.0) {
        return Err(TrainError::Config(format!("fd_step must be > 0, got {fd_step}")));
    }
    let analytic = backward(r, s)?.flatten();
    let is_relu = r.cell.kind() == CellKind::Irnn;
    let base_pattern = if is_relu { Some(relu_pattern(r, &s.word)?) } else { None };
    let mut probe = r.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    let total = analytic.len();
    for k in 0..total {
        let original = get_param(&mut probe, k);
        set_param(&mut probe, k, original + fd_step);
        let plus = loss(&probe, s)?;
        let plus_kink = base_pattern.as_ref().map(|b| relu_pattern(&probe, &s.word).map(|p| p != *b)).transpose()?;
        set_param(&mut probe, k, original - fd_step);
        let minus = loss(&probe, s)?;
        let minus_kink = base_pattern.as_ref().map(|b| relu_pattern(&probe, &s.word).map(|p| p != *b)).transpose()?;
        set_param(&mut probe, k, original);
        if plus_kink == Some(true) || minus_kink == Some(true) {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * fd_step);
        let a = analytic[k];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max(err);
        checked += 1;
    }
    Ok(GradCheckReport { max_rel_error: worst, checked, skipped_at_kinks: skipped })
}

fn get_param(r: &mut Recognizer, mut k: usize) -> f64 {
    for s in recognizer_slices(r) {
        if k < s.len() {
            return s[k];
        }
        k -= s.len();
    }
    panic!("parameter index out of range")
}

fn set_param(r: &mut Recognizer, mut k: usize, v: f64) {
    for s in recognizer_slices(r) {
        if k < s.len() {
            s[k] = v;
            return;
        }
        k -= s.len();
    }
    panic!("parameter index out of range")
}

/// Number of trainable parameters.
pub fn parameter_count(r: &Recognizer) -> usize {
    let mut copy = r.clone();
    let n = recognizer_slices(&mut copy).iter().map(|s| s.len()).sum();
    n
}

/// Random recognizer: every weight uniform in `[-scale, scale]`, LSTM
/// forget-gate bias set to +1.
pub fn init_recognizer(
    kind: CellKind,
    alphabet: Vec<char>,
    hidden_dim: usize,
    readout_hidden: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> Result<Recognizer> {
    let d = alphabet.len();
    let mut uniform = |rows: usize, cols: usize| Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale));
    let gate_count = kind.gate_names().len();
    let mut gates = Vec::with_capacity(gate_count);
    for _ in 0..gate_count {
        let w = uniform(hidden_dim, d);
        let u = uniform(hidden_dim, hidden_dim);
        let b = uniform(hidden_dim, 1).as_slice().to_vec();
        gates.push(Gate { w, u, b });
    }
    if kind.is_lstm() {
        gates[LSTM_F].b.fill(1.0);
    }
    let readout = if readout_hidden > 0 {
        let w = uniform(readout_hidden, hidden_dim);
        let b = uniform(readout_hidden, 1).as_slice().to_vec();
        let out_w = uniform(readout_hidden, 1).as_slice().to_vec();
        let out_b = uniform(1, 1).get(0, 0);
        Readout { hidden: Some(Dense { w, b }), out_w, out_b }
    } else {
        let out_w = uniform(hidden_dim, 1).as_slice().to_vec();
        let out_b = uniform(1, 1).get(0, 0);
        Readout::linear(out_w, out_b)
    };
    let cell = CellParams::new(kind, d, hidden_dim, gates)?;
    Ok(Recognizer::one_hot(alphabet, cell, readout)?)
}

fn dev_accuracy(r: &Recognizer, dev: &[Sample], p: Precision) -> Result<f64> {
    let mut correct = 0;
    for s in dev {
        let mut runner = crate::cells::Runner::new(r, p);
        let mut ok = true;
        for &c in &s.word {
            if runner.push(c).is_err() {
                ok = false;
                break;
            }
        }
        // A state that overflows counts as a wrong answer.
        if ok && runner.accepts().map(|a| a == s.label).unwrap_or(false) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dev.len() as f64)
}

/// Per-sample SGD over seeded shuffles of `train`, stopping at the first
/// epoch with 100% dev accuracy. Returns the best-dev checkpoint.
pub fn train(
    kind: CellKind,
    hidden_dim: usize,
    alphabet: &[char],
    train_set: &[Sample],
    dev_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptySet("dev"));
    }
    if hidden_dim == 0 {
        return Err(TrainError::Config("hidden_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model =
        init_recognizer(kind, alphabet.to_vec(), hidden_dim, cfg.readout_hidden, cfg.init_scale, &mut rng)?;
    for s in train_set.iter().chain(dev_set) {
        for &c in &s.word {
            model.symbol_index(c)?;
        }
    }
    let clip = cfg.effective_clip(kind);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut losses = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0, model.clone());
    let mut reached = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &idx in &order {
            let sample = &train_set[idx];
            let (l, mut g) = match backward_at(&model, sample, cfg.precision) {
                Ok(v) => v,
                Err(TrainError::Cell(CellError::NonFinite { .. })) => return Err(TrainError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            total += l;
            if let Some(c) = clip {
                let norm = g.norm();
                if norm > c {
                    g.scale(c / norm);
                }
            }
            if cfg.learning_rate > 0.0 {
                for (p, d) in recognizer_slices(&mut model).into_iter().zip(g.slices()) {
                    add_scaled(p, d, -cfg.learning_rate);
                }
            }
        }
        if recognizer_slices(&mut model).iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(TrainError::Diverged { epoch });
        }
        losses.push(total / train_set.len() as f64);
        let acc = dev_accuracy(&model, dev_set, cfg.precision)?;
        history.push(acc);
        if acc > best.0 {
            best = (acc, epoch, model.clone());
        }
        if acc == 1.0 {
            reached = true;
            break;
        }
    }
    let (_, best_epoch, final_model) = best;
    Ok(TrainReport {
        epochs_run: history.len(),
        reached_full_dev: reached,
        dev_accuracy_history: history,
        loss_history: losses,
        best_epoch,
        final_model,
    })
}

/// Model file contents with a training-metadata block.
pub fn checkpoint_json(report: &TrainReport, cfg: &TrainConfig, extra: serde_json::Value) -> String {
    let mut doc = RecognizerDoc::from(&report.final_model);
    doc.training = Some(serde_json::json!({
        "config": cfg,
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "reached_full_dev": report.reached_full_dev,
        "dev_accuracy_history": report.dev_accuracy_history,
        "loss_history": report.loss_history,
        "data": extra,
    }));
    doc.to_json()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(word: &str, label: bool) -> Sample {
        Sample { word: word.chars().collect(), label }
    }

    fn random(kind: CellKind, n: usize, readout: usize, seed: u64) -> Recognizer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_recognizer(kind, vec!['a', 'b'], n, readout, 0.8, &mut rng).unwrap()
    }

    #[test]
    fn loss_values() {
        assert!((bce_with_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(bce_with_logit(1e6, true), 0.0);
        assert!((bce_with_logit(-1e6, true) - 1e6).abs() < 1e-6);
        for z in [-30.0, -2.5, -0.1, 0.3, 4.0, 35.0] {
            let naive_pos = -(1.0 / (1.0 + (-z as f64).exp())).ln();
            let naive_neg = -(1.0 - 1.0 / (1.0 + (-z as f64).exp())).ln();
            assert!((bce_with_logit(z, true) - naive_pos).abs() < 1e-12);
            if z < 30.0 {
                assert!((bce_with_logit(z, false) - naive_neg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_word_touches_only_the_readout() {
        for readout in [0, 3] {
            let r = random(CellKind::Lstm(LstmOutput::Tanh), 4, readout, 1);
            let g = backward(&r, &sample("", true)).unwrap();
            assert!(g.gates.iter().all(|gate| gate.w.is_zero() && gate.u.is_zero() && gate.b.iter().all(|&v| v == 0.0)));
            assert!(g.readout.out_b != 0.0);
        }
    }

    #[test]
    fn zero_srnn_has_no_recurrent_gradient_on_one_step() {
        let cell = CellParams::zeros(CellKind::Srnn, 2, 3);
        let r = Recognizer::one_hot(vec!['a', 'b'], cell, Readout::linear(vec![1.0, -1.0, 0.5], 0.0)).unwrap();
        let g = backward(&r, &sample("a", true)).unwrap();
        assert!(g.gates[0].u.is_zero());
        assert!(!g.gates[0].w.is_zero());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let kinds = [CellKind::Srnn, CellKind::Irnn, CellKind::Gru, CellKind::Lstm(LstmOutput::Tanh), CellKind::Lstm(LstmOutput::Identity)];
        for (i, kind) in kinds.into_iter().enumerate() {
            let r = random(kind, 6, 3, 10 + i as u64);
            let report = grad_check(&r, &sample("aabbabab", i % 2 == 0), 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");
            assert!(report.checked > 0);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let train_set = vec![sample("ab", true), sample("aab", false), sample("aabb", true), sample("b", false)];
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 3, seed: 5, ..TrainConfig::default() };
        let report = train(CellKind::Gru, 3, &['a', 'b'], &train_set, &train_set[..2], &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = init_recognizer(CellKind::Gru, vec!['a', 'b'], 3, 0, cfg.init_scale, &mut rng).unwrap();
        assert_eq!(report.final_model, init);
        assert_eq!(report.dev_accuracy_history.len(), report.epochs_run);
    }

    #[test]
    fn training_is_deterministic() {
        let train_set = vec![sample("ab", true), sample("aab", false), sample("aabb", true), sample("abb", false)];
        let cfg = TrainConfig { max_epochs: 4, seed: 9, precision: Precision::exact(), learning_rate: 0.1, ..TrainConfig::default() };
        let kind = CellKind::Lstm(LstmOutput::Tanh);
        let a = train(kind, 4, &['a', 'b'], &train_set, &train_set, &cfg).unwrap();
        let b = train(kind, 4, &['a', 'b'], &train_set, &train_set, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let bad = TrainConfig { init_scale: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().effective_clip(CellKind::Irnn), Some(1.0));
        assert_eq!(TrainConfig::default().effective_clip(CellKind::Gru), None);
    }
}
