//! Hand-set weights that realize (or fail to realize) counting.
//!
//! [`counting_lstm`] and [`counting_irnn`] compile a counter-blind SKCM into a
//! recognizer. The finite control is tracked by saturated one-hot units, one
//! per `(state, last symbol)` pair that some transition can produce; with no
//! unit active the machine is in its initial state. Counters live in LSTM
//! memory cells, or in pairs of ReLU units (increments, decrements) for the
//! IRNN. A tanh readout layer tests "final state accepting and every counter
//! zero".
//!
//! [`saturating_srnn`] and [`dividing_gru`] build the bounded counters a
//! squashing network can offer and report where they stop discriminating.

pub mod binary;

pub use binary::{
    binary_counter_infeasibility, forced_signs, random_counter_search, CounterScenario, ForcedSigns,
    InfeasibilityReport, RandomSearchReport, Sign, Witness,
};

use serde::Serialize;
use thiserror::Error;

use crate::cells::{
    CellError, CellKind, CellParams, Dense, Gate, LstmOutput, Readout, Recognizer, Runner, GRU_H, GRU_Z,
    LSTM_C, LSTM_F, LSTM_I, LSTM_O, SATURATION,
};
use crate::langdata::Language;
use crate::numerics::{Matrix, Precision};
use crate::skcm::{build_a1_to_am, CounterOp, SkcmDef, SkcmError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error("unsupported machine: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Skcm(#[from] SkcmError),
}

pub type Result<T> = std::result::Result<T, ConstructionError>;

/// Outcome of running a bounded construction until it stops discriminating.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionReport {
    pub params: Recognizer,
    /// Largest count handled correctly.
    pub verified_up_to: usize,
    /// `verified_up_to + 1` when a failure was found within the search limit.
    pub first_failure: Option<usize>,
    pub failure_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub verified_up_to: usize,
    pub first_failure: Option<usize>,
    pub failure_mode: String,
}

impl ConstructionReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            verified_up_to: self.verified_up_to,
            first_failure: self.first_failure,
            failure_mode: self.failure_mode.clone(),
        }
    }
}

/// Scale of the finite-control pre-activations: margins of half a unit become
/// `+-SATURATION`.
const CONTROL_GAIN: f64 = 2.0 * SATURATION;

/// One-hot finite control for a counter-blind machine.
struct Control {
    /// `(state, symbol index)` per unit.
    units: Vec<(usize, usize)>,
    initial: usize,
    /// `delta[q][s]`.
    delta: Vec<Vec<usize>>,
    symbols: usize,
}

/// Linear form over unit activations plus a constant.
struct LinearForm {
    coef: Vec<f64>,
    constant: f64,
}

impl Control {
    fn new(m: &SkcmDef) -> Result<Self> {
        if !m.is_counter_blind() {
            return Err(ConstructionError::Unsupported(
                "transitions depend on counter zero-ness; only counter-blind control is compiled".into(),
            ));
        }
        let blank = vec![false; m.counters()];
        let symbols = m.alphabet().len();
        let delta = (0..m.states().len())
            .map(|q| m.alphabet().iter().map(|&s| m.transition(q, s, &blank)).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<Vec<Vec<usize>>, _>>()?;
        let mut units = Vec::new();
        for q in 0..m.states().len() {
            for s in 0..symbols {
                if delta.iter().any(|row| row[s] == q) {
                    units.push((q, s));
                }
            }
        }
        Ok(Control { units, initial: m.initial(), delta, symbols })
    }

    /// Indicator of "the current state is in `set`", linear in the units.
    fn indicator(&self, set: &[bool]) -> LinearForm {
        let init = if set[self.initial] { 1.0 } else { 0.0 };
        LinearForm {
            coef: self.units.iter().map(|&(q, _)| if set[q] { 1.0 } else { 0.0 } - init).collect(),
            constant: init,
        }
    }

    /// Pre-activation of unit `(target, symbol)` in half-unit margins: `+0.5`
    /// when the unit must fire, at most `-0.5` otherwise. Returns the
    /// recurrent coefficients, the per-symbol input weights and the bias.
    fn unit_rule(&self, target: usize, symbol: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let sources: Vec<bool> = self.delta.iter().map(|row| row[symbol] == target).collect();
        let ind = self.indicator(&sources);
        let mut input = vec![0.0; self.symbols];
        input[symbol] = 1.0;
        (ind.coef, input, ind.constant - 1.5)
    }
}

fn accepting_states(m: &SkcmDef) -> Result<Vec<bool>> {
    let mut set = vec![false; m.states().len()];
    for (q, mask) in m.accepting() {
        if mask.iter().any(|&b| b) {
            return Err(ConstructionError::Unsupported(
                "accepting configurations with nonzero counters are not compiled".into(),
            ));
        }
        set[q] = true;
    }
    Ok(set)
}

/// Readout testing "accepting state and all counters zero".
///
/// `counter_forms[i]` is a linear form over the hidden state giving counter
/// `i` in units of `scale`; `accept_form` is the accepting-state indicator.
fn zero_test_readout(counter_forms: &[Vec<f64>], scale: f64, accept_form: (Vec<f64>, f64)) -> Readout {
    let k = counter_forms.len();
    let n = accept_form.0.len();
    let gain = CONTROL_GAIN / scale;
    let mut rows = Vec::with_capacity(2 * k + 1);
    let mut bias = Vec::with_capacity(2 * k + 1);
    for form in counter_forms {
        rows.push(form.iter().map(|&v| gain * v).collect::<Vec<_>>());
        bias.push(-SATURATION);
        rows.push(form.iter().map(|&v| -gain * v).collect::<Vec<_>>());
        bias.push(-SATURATION);
    }
    rows.push(accept_form.0.iter().map(|&v| CONTROL_GAIN * v).collect());
    bias.push(CONTROL_GAIN * (accept_form.1 - 0.5));
    let mut out_w = vec![-0.5; 2 * k];
    out_w.push(0.5);
    debug_assert!(rows.iter().all(|r| r.len() == n));
    Readout {
        hidden: Some(Dense { w: Matrix::from_rows(&rows).expect("rectangular"), b: bias }),
        out_w,
        out_b: -(k as f64),
    }
}

/// Counting LSTM for a block language.
pub fn build_counting_lstm(lang: Language, g: LstmOutput) -> Result<Recognizer> {
    let m = lang
        .arity()
        .ok_or_else(|| ConstructionError::Unsupported(format!("{lang} has no counter machine")))?;
    counting_lstm(&build_a1_to_am(m)?, g)
}

/// Compile a counter-blind SKCM into an LSTM.
///
/// Dimensions `0..k` are the counters: `c` moves by `c~ = +-1` with
/// `i = f = 1`, holds with `i = 0, f = 1`, resets with `i = f = 0`; the output
/// gate stays open. The remaining dimensions are control units whose cell is
/// held at 1 and whose output gate computes the next one-hot control state.
pub fn counting_lstm(m: &SkcmDef, g: LstmOutput) -> Result<Recognizer> {
    let control = Control::new(m)?;
    let accept = accepting_states(m)?;
    let k = m.counters();
    let symbols = m.alphabet().len();
    let n = k + control.units.len();
    let unit_value = g.activation().eval(1.0);
    let mut gates: Vec<Gate> = (0..4).map(|_| Gate::zeros(symbols, n)).collect();

    for counter in 0..k {
        gates[LSTM_O].b[counter] = SATURATION;
        for (s, &sym) in m.alphabet().iter().enumerate() {
            let (f, i, c) = match m.update(sym)?[counter] {
                CounterOp::Inc => (1.0, 1.0, 1.0),
                CounterOp::Dec => (1.0, 1.0, -1.0),
                CounterOp::Keep => (1.0, -1.0, 0.0),
                CounterOp::Reset => (-1.0, -1.0, 0.0),
            };
            gates[LSTM_F].w.set(counter, s, f * SATURATION);
            gates[LSTM_I].w.set(counter, s, i * SATURATION);
            gates[LSTM_C].w.set(counter, s, c * SATURATION);
        }
    }
    for (j, &(q, s)) in control.units.iter().enumerate() {
        let row = k + j;
        gates[LSTM_F].b[row] = -SATURATION;
        gates[LSTM_I].b[row] = SATURATION;
        gates[LSTM_C].b[row] = SATURATION;
        let (rec, input, bias) = control.unit_rule(q, s);
        for (u, &coef) in rec.iter().enumerate() {
            gates[LSTM_O].u.set(row, k + u, CONTROL_GAIN * coef / unit_value);
        }
        for (sym, &v) in input.iter().enumerate() {
            gates[LSTM_O].w.set(row, sym, CONTROL_GAIN * v);
        }
        gates[LSTM_O].b[row] = CONTROL_GAIN * bias;
    }
    let cell = CellParams::new(CellKind::Lstm(g), symbols, n, gates)?;

    let counter_forms: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect();
    let ind = control.indicator(&accept);
    let mut accept_coef = vec![0.0; k];
    accept_coef.extend(ind.coef.iter().map(|&c| c / unit_value));
    // Half the smallest nonzero counter reading separates zero from nonzero.
    let readout = zero_test_readout(&counter_forms, unit_value, (accept_coef, ind.constant));
    Ok(Recognizer::one_hot(m.alphabet().to_vec(), cell, readout)?)
}

/// Counting IRNN for a block language.
pub fn build_counting_irnn(lang: Language) -> Result<Recognizer> {
    let m = lang
        .arity()
        .ok_or_else(|| ConstructionError::Unsupported(format!("{lang} has no counter machine")))?;
    counting_irnn(&build_a1_to_am(m)?)
}

/// Compile a counter-blind SKCM without resets into an IRNN.
///
/// Counter `i` occupies dimensions `2i` (increments) and `2i + 1`
/// (decrements); each adds exactly 1 on its trigger symbol and otherwise keeps
/// its value through an identity recurrence. Zero tests read the difference.
/// Control units take values exactly 0 or 1.
pub fn counting_irnn(m: &SkcmDef) -> Result<Recognizer> {
    let control = Control::new(m)?;
    let accept = accepting_states(m)?;
    let k = m.counters();
    let symbols = m.alphabet().len();
    let n = 2 * k + control.units.len();
    let mut gate = Gate::zeros(symbols, n);
    for counter in 0..k {
        gate.u.set(2 * counter, 2 * counter, 1.0);
        gate.u.set(2 * counter + 1, 2 * counter + 1, 1.0);
        for (s, &sym) in m.alphabet().iter().enumerate() {
            match m.update(sym)?[counter] {
                CounterOp::Inc => gate.w.set(2 * counter, s, 1.0),
                CounterOp::Dec => gate.w.set(2 * counter + 1, s, 1.0),
                CounterOp::Keep => {}
                CounterOp::Reset => {
                    return Err(ConstructionError::Unsupported("counter resets have no IRNN pair encoding".into()))
                }
            }
        }
    }
    for (j, &(q, s)) in control.units.iter().enumerate() {
        let row = 2 * k + j;
        let (rec, input, bias) = control.unit_rule(q, s);
        for (u, &coef) in rec.iter().enumerate() {
            gate.u.set(row, 2 * k + u, coef);
        }
        for (sym, &v) in input.iter().enumerate() {
            gate.w.set(row, sym, v);
        }
        // Threshold at zero instead of half a unit: ReLU(x - 1) is 1 or 0.
        gate.b[row] = bias + 0.5;
    }
    let cell = CellParams::new(CellKind::Irnn, symbols, n, vec![gate])?;
    let counter_forms: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[2 * i] = 1.0;
            v[2 * i + 1] = -1.0;
            v
        })
        .collect();
    let ind = control.indicator(&accept);
    let mut accept_coef = vec![0.0; 2 * k];
    accept_coef.extend(ind.coef);
    let readout = zero_test_readout(&counter_forms, 1.0, (accept_coef, ind.constant));
    Ok(Recognizer::one_hot(m.alphabet().to_vec(), cell, readout)?)
}

/// Single-dimension SRNN counter `h <- tanh(h + w [a] - w [b])`, swept over
/// `a^n b^n` for `n = 1..=max_n`.
///
/// Counting fails at the first `n` where the end state of `a^n b^n` is at
/// least as far from zero as the closer of `a^n b^(n-1)` and `a^n b^(n+1)`.
pub fn saturating_srnn(w: f64, p: Precision, max_n: usize) -> Result<ConstructionReport> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(ConstructionError::InvalidParameter(format!("step weight must be positive, got {w}")));
    }
    let gate = Gate {
        w: Matrix::from_rows(&[vec![w, -w]]).expect("1x2"),
        u: Matrix::identity(1),
        b: vec![0.0],
    };
    let cell = CellParams::new(CellKind::Srnn, 2, 1, vec![gate])?;
    let gain = CONTROL_GAIN / w;
    let readout = Readout {
        hidden: Some(Dense { w: Matrix::from_rows(&[vec![gain], vec![-gain]]).expect("2x1"), b: vec![-SATURATION; 2] }),
        out_w: vec![-0.5, -0.5],
        out_b: -0.5,
    };
    let params = Recognizer::one_hot(vec!['a', 'b'], cell, readout)?;

    let mut prefix = Runner::new(&params, p);
    for n in 1..=max_n {
        prefix.push('a')?;
        let mut run = prefix.clone();
        let mut dist = Vec::with_capacity(3);
        if n == 1 {
            dist.push(run.state().h[0].abs());
        }
        for j in 1..=n + 1 {
            run.push('b')?;
            if j + 1 >= n {
                dist.push(run.state().h[0].abs());
            }
        }
        let (short, exact, long) = (dist[0], dist[1], dist[2]);
        if exact >= short.min(long) {
            return Ok(ConstructionReport {
                params,
                verified_up_to: n - 1,
                first_failure: Some(n),
                failure_mode: format!(
                    "|h(a^{n} b^{n})| = {exact:.3e} is not below min(|h(a^{n} b^{})|, |h(a^{n} b^{})|) = {:.3e}",
                    n - 1,
                    n + 1,
                    short.min(long)
                ),
            });
        }
    }
    Ok(ConstructionReport {
        params,
        verified_up_to: max_n,
        first_failure: None,
        failure_mode: format!("no failure up to n = {max_n}"),
    })
}

/// GRU counter that divides by `k` per `a`.
///
/// The update gate is pinned to `z = 1/k` and the proposal to the saturated
/// value `h~ = 1`, so `1 - h` shrinks by a factor `k` on every `a`:
/// `1 - h_n = k^-n`. The reverse step would need `z > 1`, which a sigmoid gate
/// cannot produce. The report gives the number of `a`s that still change the
/// rounded state, the same convention as [`stack_push_capacity`].
///
/// [`stack_push_capacity`]: crate::numerics::stack_push_capacity
pub fn dividing_gru(k: f64, p: Precision, max_n: usize) -> Result<ConstructionReport> {
    if !(k > 1.0 && k.is_finite()) {
        return Err(ConstructionError::InvalidParameter(format!("divisor must exceed 1, got {k}")));
    }
    let mut gates: Vec<Gate> = (0..3).map(|_| Gate::zeros(1, 1)).collect();
    // sigmoid(-ln(k - 1)) = 1/k
    gates[GRU_Z].w.set(0, 0, -(k - 1.0).ln());
    gates[GRU_H].w.set(0, 0, SATURATION);
    let cell = CellParams::new(CellKind::Gru, 1, 1, gates)?;
    let params = Recognizer::one_hot(vec!['a'], cell, Readout::linear(vec![1.0], 0.0))?;

    let mut run = Runner::new(&params, p);
    let mut prev = run.state().h[0];
    for n in 0..max_n {
        run.push('a')?;
        let cur = run.state().h[0];
        if cur == prev {
            let distinct = n;
            return Ok(ConstructionReport {
                params,
                verified_up_to: distinct,
                first_failure: Some(distinct + 1),
                failure_mode: format!(
                    "after {n} symbols 1 - h = {:.3e} no longer changes; counts above {distinct} collapse",
                    1.0 - cur
                ),
            });
        }
        prev = cur;
    }
    Ok(ConstructionReport {
        params,
        verified_up_to: max_n,
        first_failure: None,
        failure_mode: format!("still distinguishable after {max_n} symbols"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::LSTM_O;
    use crate::langdata::{block_word, oracle};
    use crate::numerics::stack_push_capacity;
    use crate::skcm::build_anbn;

    fn p23() -> Precision {
        Precision::state(23).unwrap()
    }

    fn w(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn lstm_counts_on_aabb() {
        let r = build_counting_lstm(Language::AnBn, LstmOutput::Identity).unwrap();
        let out = r.run(&w("aabb"), p23()).unwrap();
        assert_eq!(out.state.c.as_ref().unwrap()[0], 0.0);
        assert!(out.accept);
        let out = r.run(&w("aab"), p23()).unwrap();
        assert_eq!(out.state.c.as_ref().unwrap()[0], 1.0);
        assert!(!out.accept);
    }

    #[test]
    fn lstm_counter_ramp() {
        let r = build_counting_lstm(Language::AnBn, LstmOutput::Identity).unwrap();
        let states = r.states(&block_word(&[10, 10]), p23()).unwrap();
        assert_eq!(states[10].c.as_ref().unwrap()[0], 10.0);
        assert_eq!(states[20].c.as_ref().unwrap()[0], 0.0);
        assert!(r.run(&block_word(&[10, 10]), p23()).unwrap().accept);
        let out = r.run(&block_word(&[5, 6]), p23()).unwrap();
        assert_eq!(out.state.c.as_ref().unwrap()[0], -1.0);
        assert!(!out.accept);
        // Counter is zero, the control rejects.
        assert!(!r.run(&w("ba"), p23()).unwrap().accept);
        assert!(!r.run(&w("abab"), p23()).unwrap().accept);
    }

    #[test]
    fn constructions_agree_with_machines_on_short_words() {
        for g in [LstmOutput::Identity, LstmOutput::Tanh] {
            let lstm = build_counting_lstm(Language::AnBn, g).unwrap();
            let irnn = build_counting_irnn(Language::AnBn).unwrap();
            let m = build_anbn();
            for len in 0..=10 {
                for idx in 0..1u32 << len {
                    let word: Vec<char> = (0..len).map(|i| if idx >> i & 1 == 1 { 'b' } else { 'a' }).collect();
                    let expect = m.accepts(&word).unwrap();
                    assert_eq!(lstm.run(&word, p23()).unwrap().accept, expect, "{g:?} {word:?}");
                    assert_eq!(irnn.run(&word, p23()).unwrap().accept, expect, "{word:?}");
                }
            }
        }
    }

    #[test]
    fn irnn_pair_counts() {
        let r = build_counting_irnn(Language::AnBn).unwrap();
        let out = r.run(&block_word(&[7, 7]), p23()).unwrap();
        assert_eq!(&out.state.h[..2], &[7.0, 7.0]);
        assert!(out.accept);
        let out = r.run(&block_word(&[7, 5]), p23()).unwrap();
        assert_eq!(&out.state.h[..2], &[7.0, 5.0]);
        assert!(!out.accept);
        assert!(out.state.h.iter().all(|&v| v == v.round() && v >= 0.0));
    }

    #[test]
    fn anbncn_constructions() {
        let lstm = build_counting_lstm(Language::AnBnCn, LstmOutput::Identity).unwrap();
        let irnn = build_counting_irnn(Language::AnBnCn).unwrap();
        for lens in [[3, 3, 3], [3, 4, 3], [3, 3, 2], [0, 0, 0], [1, 1, 1], [2, 2, 0]] {
            let word = block_word(&lens);
            let expect = oracle(Language::AnBnCn, &word).unwrap();
            assert_eq!(lstm.run(&word, p23()).unwrap().accept, expect, "{lens:?}");
            assert_eq!(irnn.run(&word, p23()).unwrap().accept, expect, "{lens:?}");
        }
        assert!(!lstm.run(&w("acb"), p23()).unwrap().accept);
    }

    #[test]
    fn reset_machines() {
        // One counter, `r` resets it; accept when the counter is zero in state q.
        let m = SkcmDef::from_fn(
            vec!['a', 'r'],
            vec!["q".into()],
            0,
            1,
            |_, _, _| 0,
            vec![vec![CounterOp::Inc], vec![CounterOp::Reset]],
            [(0, vec![false])],
        )
        .unwrap();
        let lstm = counting_lstm(&m, LstmOutput::Identity).unwrap();
        for word in ["", "a", "aar", "aara", "r"] {
            assert_eq!(lstm.run(&w(word), p23()).unwrap().accept, m.accepts(&w(word)).unwrap(), "{word}");
        }
        assert!(matches!(counting_irnn(&m), Err(ConstructionError::Unsupported(_))));
        // Output gate of the counter is open.
        assert_eq!(lstm.cell.gate(LSTM_O).b[0], SATURATION);
    }

    #[test]
    fn srnn_counter_is_bounded() {
        let report = saturating_srnn(0.01, p23(), 100_000).unwrap();
        let fail = report.first_failure.expect("bounded");
        assert_eq!(fail, report.verified_up_to + 1);
        let halved = saturating_srnn(0.005, p23(), 100_000).unwrap();
        assert!(halved.verified_up_to > report.verified_up_to);
        let states = report.params.states(&block_word(&[5000, 10]), p23()).unwrap();
        assert!(states.iter().all(|s| s.h[0].abs() <= 1.0));
        assert!(saturating_srnn(0.0, p23(), 10).is_err());
    }

    #[test]
    fn dividing_gru_capacity() {
        let k4 = dividing_gru(4.0, p23(), 10_000).unwrap();
        let cap = k4.verified_up_to as i64;
        let stack = stack_push_capacity(p23()) as i64;
        assert!((cap - stack).abs() <= 3, "gru {cap}, stack {stack}");
        let k2 = dividing_gru(2.0, p23(), 10_000).unwrap();
        assert!(k2.verified_up_to > k4.verified_up_to);
        // 1 - h strictly decreases while distinguishable, then sticks.
        let cap = k4.verified_up_to;
        let states = k4.params.states(&vec!['a'; cap + 1], p23()).unwrap();
        let rest: Vec<f64> = states.iter().map(|s| 1.0 - s.h[0]).collect();
        assert!(rest[..=cap].windows(2).all(|w| w[1] < w[0]));
        assert!(rest[..cap].iter().all(|&v| v > 0.0));
        assert_eq!(rest[cap + 1], rest[cap]);
        assert!(dividing_gru(1.0, p23(), 10).is_err());
    }
}
