//! Simplified k-counter machines.
//!
//! A machine reads one symbol per step. The next state depends on the current
//! state, the symbol and the zero-ness mask of the counters; the counters are
//! updated by a per-symbol vector of operations. A word is accepted when the
//! final state together with the final zero-ness mask is in the accepting set.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptor::Acceptor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkcmError {
    #[error("symbol {0:?} is not in the machine alphabet")]
    UnknownSymbol(char),
    #[error("operation vector has {ops} entries but there are {counters} counters")]
    LengthMismatch { ops: usize, counters: usize },
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error("the a_1..a_m family needs 2 <= m <= 26, got {0}")]
    Arity(usize),
    #[error("{words} words to enumerate exceeds the cap of {cap}; use a smaller length")]
    TooManyWords { words: u128, cap: u128 },
    #[error("integer overflow")]
    Overflow,
    #[error("malformed machine document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SkcmError>;

/// Per-counter operation: increment, decrement, reset, or leave unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CounterOp {
    #[serde(rename = "+1")]
    Inc,
    #[serde(rename = "-1")]
    Dec,
    #[serde(rename = "x0")]
    Reset,
    #[serde(rename = "x1")]
    Keep,
}

impl CounterOp {
    pub fn apply(self, n: i64) -> Result<i64> {
        match self {
            CounterOp::Inc => n.checked_add(1).ok_or(SkcmError::Overflow),
            CounterOp::Dec => n.checked_sub(1).ok_or(SkcmError::Overflow),
            CounterOp::Reset => Ok(0),
            CounterOp::Keep => Ok(n),
        }
    }
}

/// Zero-ness mask: entry `i` is `false` iff `n[i] == 0`.
pub fn zero_mask(n: &[i64]) -> Vec<bool> {
    n.iter().map(|&v| v != 0).collect()
}

fn mask_index(n: &[i64]) -> usize {
    n.iter().enumerate().fold(0, |acc, (i, &v)| if v != 0 { acc | (1 << i) } else { acc })
}

fn bits_index(mask: &[bool]) -> usize {
    mask.iter().enumerate().fold(0, |acc, (i, &b)| if b { acc | (1 << i) } else { acc })
}

fn index_bits(idx: usize, k: usize) -> Vec<bool> {
    (0..k).map(|i| idx >> i & 1 == 1).collect()
}

/// Pointwise application of `ops` to `n`.
pub fn apply_counter_ops(ops: &[CounterOp], n: &[i64]) -> Result<Vec<i64>> {
    if ops.len() != n.len() {
        return Err(SkcmError::LengthMismatch { ops: ops.len(), counters: n.len() });
    }
    ops.iter().zip(n).map(|(o, &v)| o.apply(v)).collect()
}

/// Machine configuration: state index and exact counter values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SkcmConfig {
    pub state: usize,
    pub counters: Vec<i64>,
}

/// Largest supported number of counters (the transition table has `2^k`
/// columns per state and symbol).
pub const MAX_COUNTERS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SkcmDef {
    alphabet: Vec<char>,
    states: Vec<String>,
    initial: usize,
    counters: usize,
    /// `delta[(q * |alphabet| + s) * 2^k + mask]`.
    delta: Vec<usize>,
    updates: Vec<Vec<CounterOp>>,
    accepting: BTreeSet<(usize, usize)>,
}

impl SkcmDef {
    /// Build a machine from a transition function over
    /// `(state, symbol index, zero-ness mask)`.
    pub fn from_fn(
        alphabet: Vec<char>,
        states: Vec<String>,
        initial: usize,
        counters: usize,
        delta: impl Fn(usize, usize, &[bool]) -> usize,
        updates: Vec<Vec<CounterOp>>,
        accepting: impl IntoIterator<Item = (usize, Vec<bool>)>,
    ) -> Result<Self> {
        if counters > MAX_COUNTERS {
            return Err(SkcmError::Invalid(format!("at most {MAX_COUNTERS} counters are supported")));
        }
        let masks = 1usize << counters;
        let mut table = Vec::with_capacity(states.len() * alphabet.len() * masks);
        for q in 0..states.len() {
            for s in 0..alphabet.len() {
                for m in 0..masks {
                    table.push(delta(q, s, &index_bits(m, counters)));
                }
            }
        }
        let mut acc = BTreeSet::new();
        for (q, mask) in accepting {
            if mask.len() != counters {
                return Err(SkcmError::Invalid("accepting mask has the wrong length".into()));
            }
            acc.insert((q, bits_index(&mask)));
        }
        let def = SkcmDef { alphabet, states, initial, counters, delta: table, updates, accepting: acc };
        def.validate()?;
        Ok(def)
    }

    fn validate(&self) -> Result<()> {
        let n_states = self.states.len();
        if n_states == 0 || self.alphabet.is_empty() {
            return Err(SkcmError::Invalid("empty state set or alphabet".into()));
        }
        let mut symbols = self.alphabet.clone();
        symbols.sort_unstable();
        symbols.dedup();
        if symbols.len() != self.alphabet.len() {
            return Err(SkcmError::Invalid("duplicate alphabet symbol".into()));
        }
        let mut names = self.states.clone();
        names.sort();
        names.dedup();
        if names.len() != n_states {
            return Err(SkcmError::Invalid("duplicate state name".into()));
        }
        if self.initial >= n_states {
            return Err(SkcmError::Invalid("initial state out of range".into()));
        }
        if self.delta.len() != n_states * self.alphabet.len() << self.counters {
            return Err(SkcmError::Invalid("transition table is not total".into()));
        }
        if let Some(bad) = self.delta.iter().find(|&&q| q >= n_states) {
            return Err(SkcmError::Invalid(format!("transition to unknown state {bad}")));
        }
        if self.updates.len() != self.alphabet.len() || self.updates.iter().any(|u| u.len() != self.counters) {
            return Err(SkcmError::Invalid("counter updates must give k operations per symbol".into()));
        }
        if self.accepting.iter().any(|&(q, m)| q >= n_states || m >= 1 << self.counters) {
            return Err(SkcmError::Invalid("accepting configuration out of range".into()));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn counters(&self) -> usize {
        self.counters
    }

    pub fn update(&self, symbol: char) -> Result<&[CounterOp]> {
        Ok(&self.updates[self.symbol_index(symbol)?])
    }

    /// Accepting masked configurations as `(state, mask)` pairs.
    pub fn accepting(&self) -> impl Iterator<Item = (usize, Vec<bool>)> + '_ {
        self.accepting.iter().map(|&(q, m)| (q, index_bits(m, self.counters)))
    }

    pub fn symbol_index(&self, s: char) -> Result<usize> {
        self.alphabet.iter().position(|&a| a == s).ok_or(SkcmError::UnknownSymbol(s))
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Successor state for `(q, symbol, mask)`.
    pub fn transition(&self, q: usize, symbol: char, mask: &[bool]) -> Result<usize> {
        let s = self.symbol_index(symbol)?;
        Ok(self.delta[self.slot(q, s, bits_index(mask))])
    }

    /// Whether the transition function ignores the counters.
    pub fn is_counter_blind(&self) -> bool {
        let masks = 1 << self.counters;
        self.delta.chunks(masks).all(|row| row.iter().all(|&q| q == row[0]))
    }

    fn slot(&self, q: usize, s: usize, mask: usize) -> usize {
        ((q * self.alphabet.len() + s) << self.counters) + mask
    }

    pub fn start(&self) -> SkcmConfig {
        SkcmConfig { state: self.initial, counters: vec![0; self.counters] }
    }

    pub fn step(&self, c: &SkcmConfig, symbol: char) -> Result<SkcmConfig> {
        let s = self.symbol_index(symbol)?;
        let state = self.delta[self.slot(c.state, s, mask_index(&c.counters))];
        let counters = apply_counter_ops(&self.updates[s], &c.counters)?;
        Ok(SkcmConfig { state, counters })
    }

    pub fn run(&self, word: &[char]) -> Result<SkcmConfig> {
        word.iter().try_fold(self.start(), |c, &s| self.step(&c, s))
    }

    pub fn is_accepting(&self, c: &SkcmConfig) -> bool {
        self.accepting.contains(&(c.state, mask_index(&c.counters)))
    }

    pub fn accepts(&self, word: &[char]) -> Result<bool> {
        Ok(self.is_accepting(&self.run(word)?))
    }

    pub fn accepts_str(&self, word: &str) -> Result<bool> {
        let w: Vec<char> = word.chars().collect();
        self.accepts(&w)
    }
}

impl Acceptor for SkcmDef {
    type State = SkcmConfig;

    fn start(&self) -> SkcmConfig {
        SkcmDef::start(self)
    }

    fn advance(&self, state: &mut SkcmConfig, symbol: char) -> std::result::Result<(), crate::Error> {
        *state = self.step(state, symbol)?;
        Ok(())
    }

    fn decide(&self, state: &SkcmConfig) -> std::result::Result<bool, crate::Error> {
        Ok(self.is_accepting(state))
    }
}

/// Machine for `a^n b^n`, `n >= 1`: states `q_a`, `q_b` and the sink `q_r`,
/// one counter.
pub fn build_anbn() -> SkcmDef {
    build_a1_to_am(2).expect("m = 2 is valid")
}

/// Machine for `a^n b^n c^n`, `n >= 1`, with two counters.
pub fn build_anbncn() -> SkcmDef {
    build_a1_to_am(3).expect("m = 3 is valid")
}

/// Machine for `a_1^n a_2^n ... a_m^n`, `n >= 1`, over the letters `a, b, c, ...`.
///
/// Counter `i` goes up on letter `i` and down on letter `i + 1`. States
/// `q_<letter>` track the current block; any out-of-order letter moves to the
/// sink `q_r`. The only accepting configuration is the last block state with
/// every counter at zero.
pub fn build_a1_to_am(m: usize) -> Result<SkcmDef> {
    if !(2..=26).contains(&m) {
        return Err(SkcmError::Arity(m));
    }
    let k = m - 1;
    let alphabet: Vec<char> = (0..m as u8).map(|i| (b'a' + i) as char).collect();
    let mut states: Vec<String> = alphabet.iter().map(|c| format!("q_{c}")).collect();
    states.push("q_r".into());
    let sink = m;
    let updates = (0..m)
        .map(|letter| {
            (0..k)
                .map(|counter| {
                    if counter == letter {
                        CounterOp::Inc
                    } else if counter + 1 == letter {
                        CounterOp::Dec
                    } else {
                        CounterOp::Keep
                    }
                })
                .collect()
        })
        .collect();
    let delta = move |q: usize, s: usize, _: &[bool]| {
        if q == sink {
            sink
        } else if s == q || s == q + 1 {
            s
        } else {
            sink
        }
    };
    SkcmDef::from_fn(alphabet, states, 0, k, delta, updates, [(m - 1, vec![false; k])])
}

/// Number of configurations reachable on inputs of length `n`:
/// `|Q| * (2n + 1)^k`.
pub fn config_count_bound(m: &SkcmDef, n: u64) -> Result<u128> {
    let per_counter = (n as u128).checked_mul(2).and_then(|v| v.checked_add(1)).ok_or(SkcmError::Overflow)?;
    per_counter
        .checked_pow(m.counters as u32)
        .and_then(|v| v.checked_mul(m.states.len() as u128))
        .ok_or(SkcmError::Overflow)
}

/// Default cap on the number of words [`pigeonhole_collision`] enumerates.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Enumerate all words of length `len` over `letters` in lexicographic order
/// (earlier letters sort first) and return the first pair that reaches the
/// same configuration: the earliest word and the first later word that
/// collides with it.
pub fn pigeonhole_collision(
    m: &SkcmDef,
    letters: &[char],
    len: usize,
    cap: u128,
) -> Result<Option<(Vec<char>, Vec<char>)>> {
    if letters.is_empty() {
        return Err(SkcmError::Invalid("no letters to enumerate".into()));
    }
    for &l in letters {
        m.symbol_index(l)?;
    }
    let total = (letters.len() as u128).checked_pow(len as u32).ok_or(SkcmError::Overflow)?;
    if total > cap {
        return Err(SkcmError::TooManyWords { words: total, cap });
    }
    let base = letters.len();
    let mut first_word: HashMap<SkcmConfig, usize> = HashMap::new();
    let decode = |mut idx: usize| -> Vec<char> {
        let mut w = vec![letters[0]; len];
        for slot in w.iter_mut().rev() {
            *slot = letters[idx % base];
            idx /= base;
        }
        w
    };
    for idx in 0..total as usize {
        let word = decode(idx);
        let config = m.run(&word)?;
        if let Some(&earlier) = first_word.get(&config) {
            return Ok(Some((decode(earlier), word)));
        }
        first_word.insert(config, idx);
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub symbol: String,
    /// Zero-ness bits, one character per counter (`0` = zero).
    pub mask: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptDoc {
    pub state: String,
    pub mask: String,
}

/// JSON form of a machine with an explicit transition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkcmDoc {
    pub alphabet: Vec<String>,
    pub states: Vec<String>,
    pub initial: String,
    pub counters: usize,
    pub transitions: Vec<TransitionDoc>,
    pub updates: std::collections::BTreeMap<String, Vec<CounterOp>>,
    pub accepting: Vec<AcceptDoc>,
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn parse_mask(s: &str, k: usize) -> Result<Vec<bool>> {
    if s.chars().count() != k {
        return Err(SkcmError::Format(format!("mask `{s}` should have {k} bits")));
    }
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(SkcmError::Format(format!("mask `{s}` must use 0 and 1"))),
        })
        .collect()
}

fn single_char(s: &str) -> Result<char> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(SkcmError::Format(format!("symbol `{s}` is not one character"))),
    }
}

impl From<&SkcmDef> for SkcmDoc {
    fn from(m: &SkcmDef) -> Self {
        let mut transitions = Vec::new();
        for (q, from) in m.states.iter().enumerate() {
            for (s, sym) in m.alphabet.iter().enumerate() {
                for mask in 0..1usize << m.counters {
                    transitions.push(TransitionDoc {
                        from: from.clone(),
                        symbol: sym.to_string(),
                        mask: mask_string(&index_bits(mask, m.counters)),
                        to: m.states[m.delta[m.slot(q, s, mask)]].clone(),
                    });
                }
            }
        }
        SkcmDoc {
            alphabet: m.alphabet.iter().map(|c| c.to_string()).collect(),
            states: m.states.clone(),
            initial: m.states[m.initial].clone(),
            counters: m.counters,
            transitions,
            updates: m.alphabet.iter().zip(&m.updates).map(|(c, u)| (c.to_string(), u.clone())).collect(),
            accepting: m
                .accepting()
                .map(|(q, mask)| AcceptDoc { state: m.states[q].clone(), mask: mask_string(&mask) })
                .collect(),
        }
    }
}

impl SkcmDoc {
    pub fn to_machine(&self) -> Result<SkcmDef> {
        let alphabet = self.alphabet.iter().map(|s| single_char(s)).collect::<Result<Vec<_>>>()?;
        let states = self.states.clone();
        let state = |name: &str| {
            states.iter().position(|s| s == name).ok_or_else(|| SkcmError::Format(format!("unknown state `{name}`")))
        };
        let k = self.counters;
        if k > MAX_COUNTERS {
            return Err(SkcmError::Invalid(format!("at most {MAX_COUNTERS} counters are supported")));
        }
        let mut table: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for t in &self.transitions {
            let sym = single_char(&t.symbol)?;
            let s = alphabet
                .iter()
                .position(|&a| a == sym)
                .ok_or_else(|| SkcmError::Format(format!("transition on unknown symbol `{sym}`")))?;
            let key = (state(&t.from)?, s, bits_index(&parse_mask(&t.mask, k)?));
            if table.insert(key, state(&t.to)?).is_some() {
                return Err(SkcmError::Format(format!("duplicate transition {} {} {}", t.from, t.symbol, t.mask)));
            }
        }
        let total = states.len() * alphabet.len() << k;
        if table.len() != total {
            return Err(SkcmError::Invalid(format!("transition table has {} of {total} entries", table.len())));
        }
        let updates = alphabet
            .iter()
            .map(|c| {
                self.updates
                    .get(&c.to_string())
                    .cloned()
                    .ok_or_else(|| SkcmError::Format(format!("no counter update for `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let accepting = self
            .accepting
            .iter()
            .map(|a| Ok((state(&a.state)?, parse_mask(&a.mask, k)?)))
            .collect::<Result<Vec<_>>>()?;
        SkcmDef::from_fn(
            alphabet,
            states.clone(),
            state(&self.initial)?,
            k,
            |q, s, mask| table[&(q, s, bits_index(mask))],
            updates,
            accepting,
        )
    }
}

impl SkcmDef {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SkcmDoc::from(self)).expect("document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SkcmDoc = serde_json::from_str(text).map_err(|e| SkcmError::Format(e.to_string()))?;
        doc.to_machine()
    }
}
