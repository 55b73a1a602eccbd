//! Generalization sweeps, activation traces and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::acceptor::Acceptor;
use crate::cells::{CellError, Recognizer, Runner};
use crate::langdata::{runs, Language, Sample};
use crate::numerics::Precision;
use crate::Error;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("not a block word: {0}")]
    NotBlockWord(String),
    #[error("{0} is not a block language")]
    NotBlockLanguage(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("trace CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anomaly {
    pub n: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub lang: String,
    pub n_limit: usize,
    /// Largest `N` such that every checked word for every `n <= N` was
    /// classified correctly.
    pub max_correct_n: usize,
    /// Sorted by `n`.
    pub anomalies: Vec<Anomaly>,
}

/// Words checked for one `n`: the positive word and every block moved by
/// `+-1` and `+-2` (lengths below zero are skipped).
pub fn sweep_words(arity: usize, n: usize) -> Vec<(Vec<usize>, String)> {
    let letters: Vec<char> = (0..arity).map(|i| (b'a' + i as u8) as char).collect();
    let describe = |block: Option<(usize, i64)>| {
        letters
            .iter()
            .enumerate()
            .map(|(i, c)| match block {
                Some((j, d)) if j == i && d > 0 => format!("{c}^(n+{d})"),
                Some((j, d)) if j == i => format!("{c}^(n-{})", -d),
                _ => format!("{c}^n"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = vec![(vec![n; arity], describe(None))];
    for block in 0..arity {
        for d in [-2i64, -1, 1, 2] {
            let len = n as i64 + d;
            if len < 0 {
                continue;
            }
            let mut lens = vec![n; arity];
            lens[block] = len as usize;
            out.push((lens, describe(Some((block, d)))));
        }
    }
    out
}

struct Target {
    idx: usize,
    lens: Vec<usize>,
    n: usize,
    description: String,
    expected: bool,
}

/// Runs of the last block still to be decided: start state, the block lengths
/// to decide at, and the targets waiting on each length.
struct Pending<'t, S> {
    start: S,
    checkpoints: Vec<usize>,
    waiting: Vec<Vec<&'t Target>>,
}

/// Advance shared prefixes once: targets agreeing on the first `depth` block
/// lengths share a state, and each block is grown incrementally from the
/// shortest requested length to the longest. Runs of the final block are
/// queued so they can be evaluated together.
fn expand_prefixes<'t, A: Acceptor>(
    acceptor: &A,
    state: &A::State,
    letters: &[char],
    depth: usize,
    targets: &[&'t Target],
    results: &mut [bool],
    pending: &mut Vec<Pending<'t, A::State>>,
) {
    let mut groups: BTreeMap<usize, Vec<&'t Target>> = BTreeMap::new();
    for &t in targets {
        groups.entry(t.lens[depth]).or_default().push(t);
    }
    if depth + 1 == letters.len() {
        let (checkpoints, waiting) = groups.into_iter().unzip();
        pending.push(Pending { start: state.clone(), checkpoints, waiting });
        return;
    }
    let mut run = state.clone();
    let mut len = 0;
    let mut broken = false;
    for (target_len, group) in groups {
        while len < target_len && !broken {
            if acceptor.advance(&mut run, letters[depth]).is_err() {
                broken = true;
            }
            len += 1;
        }
        if broken {
            // The state overflowed: every remaining word counts as wrong.
            for t in group {
                results[t.idx] = false;
            }
            continue;
        }
        expand_prefixes(acceptor, &run, letters, depth + 1, &group, results, pending);
    }
}

/// Lanes evaluated together by [`Acceptor::decide_runs`].
const LANES: usize = 256;

fn decide_targets<A: Acceptor>(acceptor: &A, letters: &[char], targets: &[Target]) -> Vec<bool> {
    let refs: Vec<&Target> = targets.iter().collect();
    let mut results = vec![false; targets.len()];
    let mut pending = Vec::new();
    expand_prefixes(acceptor, &acceptor.start(), letters, 0, &refs, &mut results, &mut pending);
    let last = letters[letters.len() - 1];
    for batch in pending.chunks(LANES) {
        let starts: Vec<A::State> = batch.iter().map(|p| p.start.clone()).collect();
        let checkpoints: Vec<Vec<usize>> = batch.iter().map(|p| p.checkpoints.clone()).collect();
        let verdicts = acceptor.decide_runs(&starts, last, &checkpoints);
        for (p, lane) in batch.iter().zip(verdicts) {
            for (waiting, verdict) in p.waiting.iter().zip(lane) {
                for t in waiting {
                    results[t.idx] = matches!(verdict, Ok(v) if v == t.expected);
                }
            }
        }
    }
    results
}

fn describe_failure(expected: bool, pattern: &str) -> String {
    if expected {
        format!("rejects {pattern}")
    } else {
        format!("accepts {pattern}")
    }
}

/// Check `n = 1..=n_limit` on the positive word and its perturbations.
///
/// Targets are processed in chunks of `n` so memory stays bounded for large
/// limits; prefix sharing works within a chunk.
pub fn sweep<A: Acceptor>(acceptor: &A, lang: Language, n_limit: usize) -> Result<SweepReport> {
    let arity = lang.arity().ok_or_else(|| EvalError::NotBlockLanguage(lang.to_string()))?;
    if n_limit == 0 {
        return Err(EvalError::Invalid("n_limit must be at least 1".into()).into());
    }
    let letters = lang.alphabet();
    let mut anomalies = Vec::new();
    let mut first_bad: Option<usize> = None;
    const CHUNK: usize = 4096;
    let mut lo = 1;
    while lo <= n_limit {
        let hi = (lo + CHUNK - 1).min(n_limit);
        let mut targets = Vec::new();
        for n in lo..=hi {
            for (lens, description) in sweep_words(arity, n) {
                let expected = lens.iter().all(|&l| l == lens[0]) && lens[0] > 0;
                targets.push(Target { idx: targets.len(), lens, n, description, expected });
            }
        }
        let results = decide_targets(acceptor, &letters, &targets);
        // Report in sweep order: by n, then by the order words are generated.
        for t in &targets {
            if !results[t.idx] {
                first_bad.get_or_insert(t.n);
                anomalies.push(Anomaly { n: t.n, description: describe_failure(t.expected, &t.description) });
            }
        }
        lo = hi + 1;
    }
    Ok(SweepReport {
        lang: lang.to_string(),
        n_limit,
        max_correct_n: first_bad.map_or(n_limit, |n| n - 1),
        anomalies,
    })
}

/// Sweep a recognizer at a fixed precision.
pub fn sweep_recognizer(r: &Recognizer, lang: Language, n_limit: usize, p: Precision) -> Result<SweepReport> {
    sweep(&crate::acceptor::AtPrecision::new(r, p), lang, n_limit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// 1-based step index.
    pub t: usize,
    pub symbol: char,
    /// `c` for LSTMs, `h` otherwise.
    pub state: Vec<f64>,
}

/// State snapshot after every symbol.
pub fn trace(r: &Recognizer, word: &[char], p: Precision) -> Result<Vec<TraceRecord>> {
    let mut runner = Runner::new(r, p);
    let mut out = Vec::with_capacity(word.len());
    for (i, &s) in word.iter().enumerate() {
        runner.push(s)?;
        out.push(TraceRecord { t: i + 1, symbol: s, state: runner.state().observed().to_vec() });
    }
    Ok(out)
}

/// Default threshold on the block-wise mean `|delta|`.
pub const COUNTING_THETA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Up,
    Down,
    Flat,
    Mixed,
}

fn block_trend(deltas: &[f64], theta: f64) -> Trend {
    let mean = deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len() as f64;
    if mean < theta {
        Trend::Flat
    } else if deltas.iter().all(|&d| d > 0.0) {
        Trend::Up
    } else if deltas.iter().all(|&d| d < 0.0) {
        Trend::Down
    } else {
        Trend::Mixed
    }
}

/// Dimensions that move monotonically within every block (or stay below
/// `theta` on average) and move in opposite directions in two blocks.
/// Deltas are taken from the all-zero initial state.
pub fn detect_counting_dims(tr: &[TraceRecord], word: &[char], theta: f64) -> Result<Vec<usize>> {
    let blocks = runs(word);
    let as_text: String = word.iter().collect();
    if blocks.len() < 2 || tr.len() != word.len() {
        return Err(EvalError::NotBlockWord(as_text).into());
    }
    let mut seen = std::collections::HashSet::new();
    if !blocks.iter().all(|(c, _)| seen.insert(*c)) {
        return Err(EvalError::NotBlockWord(as_text).into());
    }
    let dims = tr[0].state.len();
    let mut found = Vec::new();
    for d in 0..dims {
        let deltas: Vec<f64> = tr
            .iter()
            .enumerate()
            .map(|(t, rec)| rec.state[d] - if t == 0 { 0.0 } else { tr[t - 1].state[d] })
            .collect();
        let mut start = 0;
        let mut trends = Vec::with_capacity(blocks.len());
        for &(_, len) in &blocks {
            trends.push(block_trend(&deltas[start..start + len], theta));
            start += len;
        }
        if trends.contains(&Trend::Mixed) {
            continue;
        }
        if trends.contains(&Trend::Up) && trends.contains(&Trend::Down) {
            found.push(d);
        }
    }
    Ok(found)
}

/// Fraction of samples classified correctly. A state overflow counts as a
/// wrong answer.
pub fn accuracy<A: Acceptor>(acceptor: &A, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(EvalError::Empty("sample list").into());
    }
    let mut correct = 0;
    for s in samples {
        match acceptor.accepts(&s.word) {
            Ok(v) if v == s.label => correct += 1,
            Ok(_) | Err(Error::Cell(CellError::NonFinite { .. })) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

pub fn accuracy_at(r: &Recognizer, samples: &[Sample], p: Precision) -> Result<f64> {
    accuracy(&crate::acceptor::AtPrecision::new(r, p), samples)
}

pub fn trace_csv(tr: &[TraceRecord]) -> String {
    let dims = tr.first().map_or(0, |r| r.state.len());
    let mut out = String::from("t,symbol");
    for d in 0..dims {
        let _ = write!(out, ",d{d}");
    }
    out.push('\n');
    for rec in tr {
        let _ = write!(out, "{},{}", rec.t, rec.symbol);
        for v in &rec.state {
            // `Display` for f64 is the shortest string that parses back exactly.
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let parse_err = |line: usize, msg: String| Error::from(EvalError::Parse { line, msg });
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "t" || cols[1] != "symbol" {
        return Err(parse_err(1, format!("unexpected header `{header}`")));
    }
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("d{i}") {
            return Err(parse_err(1, format!("unexpected column `{c}`")));
        }
    }
    let dims = cols.len() - 2;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims + 2 {
            return Err(parse_err(lineno, format!("expected {} fields, found {}", dims + 2, fields.len())));
        }
        let t = fields[0].parse().map_err(|e| parse_err(lineno, format!("bad step: {e}")))?;
        let mut sym = fields[1].chars();
        let symbol = match (sym.next(), sym.next()) {
            (Some(c), None) => c,
            _ => return Err(parse_err(lineno, format!("bad symbol `{}`", fields[1]))),
        };
        let state = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(lineno, format!("bad value `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(TraceRecord { t, symbol, state });
    }
    Ok(out)
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Line chart of every dimension against `t`.
pub fn trace_svg(tr: &[TraceRecord]) -> String {
    let (width, height, margin) = (800.0, 400.0, 40.0);
    let dims = tr.first().map_or(0, |r| r.state.len());
    let values = tr.iter().flat_map(|r| r.state.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 0.0);
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let t_max = tr.last().map_or(1, |r| r.t.max(1)) as f64;
    let x = |t: usize| margin + (width - 2.0 * margin) * t as f64 / t_max;
    let y = |v: f64| height - margin - (height - 2.0 * margin) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<line x1="{m}" y1="{y0:.2}" x2="{x1}" y2="{y0:.2}" stroke="#000" stroke-width="1"/>"##,
        m = margin,
        y0 = y(0.0),
        x1 = width - margin
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{m}" y1="{m}" x2="{m}" y2="{y1}" stroke="#000" stroke-width="1"/>"##,
        m = margin,
        y1 = height - margin
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">t</text>"#, width - margin, height - margin / 3.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}" font-size="12">{hi:.3}</text>"#, margin);
    let _ = writeln!(svg, r#"<text x="4" y="{}" font-size="12">{lo:.3}</text>"#, height - margin);
    for d in 0..dims {
        let mut points = format!("{:.2},{:.2}", x(0), y(0.0));
        for rec in tr {
            let v = if rec.state[d].is_finite() { rec.state[d] } else { 0.0 };
            let _ = write!(points, " {:.2},{:.2}", x(rec.t), y(v));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{points}"><title>d{d}</title></polyline>"#,
            PALETTE[d % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `<stem>.csv` and `<stem>.svg` next to `out_path` (any extension on
/// `out_path` is replaced). Returns both paths.
pub fn emit_trace_artifacts(tr: &[TraceRecord], out_path: &Path) -> Result<(PathBuf, PathBuf)> {
    if tr.is_empty() {
        return Err(EvalError::Empty("trace").into());
    }
    let csv = out_path.with_extension("csv");
    let svg = out_path.with_extension("svg");
    for (path, body) in [(&csv, trace_csv(tr)), (&svg, trace_svg(tr))] {
        std::fs::write(path, body)
            .map_err(|e| EvalError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    }
    Ok((csv, svg))
}
