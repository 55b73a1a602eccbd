//! Membership oracles and seeded sample generation for the counting languages.
//!
//! Block languages (`a^n b^n`, `a^n b^n c^n`, `a_1^n ... a_m^n`) require
//! `n >= 1`, so the empty word is never a member. Palindromes follow
//! `S -> x | aSa | bSb`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LangError {
    #[error("symbol {0:?} is not in the language alphabet")]
    ForeignSymbol(char),
    #[error("degenerate dataset configuration: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, LangError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    AnBn,
    AnBnCn,
    /// `a_1^n ... a_m^n` over the first `m` letters.
    Blocks(usize),
    Palindrome,
}

impl std::str::FromStr for Language {
    type Err = String;

    /// `anbn`, `anbncn`, `blocks:<m>` or `palindrome`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "anbn" => Ok(Language::AnBn),
            "anbncn" => Ok(Language::AnBnCn),
            "palindrome" | "pal" => Ok(Language::Palindrome),
            other => match other.strip_prefix("blocks:").map(str::parse::<usize>) {
                Some(Ok(m)) if (2..=26).contains(&m) => Ok(Language::Blocks(m)),
                _ => Err(format!("unknown language `{other}` (anbn|anbncn|blocks:<m>|palindrome)")),
            },
        }
    }
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Language::AnBn => write!(f, "anbn"),
            Language::AnBnCn => write!(f, "anbncn"),
            Language::Blocks(m) => write!(f, "blocks:{m}"),
            Language::Palindrome => write!(f, "palindrome"),
        }
    }
}

impl Language {
    /// Number of blocks for block languages.
    pub fn arity(self) -> Option<usize> {
        match self {
            Language::AnBn => Some(2),
            Language::AnBnCn => Some(3),
            Language::Blocks(m) => Some(m),
            Language::Palindrome => None,
        }
    }

    pub fn alphabet(self) -> Vec<char> {
        match self.arity() {
            Some(m) => (0..m as u8).map(|i| (b'a' + i) as char).collect(),
            None => vec!['a', 'b', 'x'],
        }
    }

    /// Largest base `n` drawn by [`generate_eval_set`].
    pub fn eval_n_max(self) -> usize {
        match self {
            Language::AnBn => 200,
            _ => 150,
        }
    }
}

/// Concatenate blocks `a^{lens[0]} b^{lens[1]} ...`.
pub fn block_word(lens: &[usize]) -> Vec<char> {
    lens.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat((b'a' + i as u8) as char).take(n)).collect()
}

/// Split a word into maximal runs of equal symbols.
pub fn runs(word: &[char]) -> Vec<(char, usize)> {
    let mut out: Vec<(char, usize)> = Vec::new();
    for &c in word {
        match out.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

/// Block lengths when `word` has the shape `a^* b^* ...` over `m` letters
/// (blocks may be empty), `None` otherwise.
pub fn block_lengths(word: &[char], m: usize) -> Option<Vec<usize>> {
    let mut lens = vec![0; m];
    let mut block = 0;
    for &c in word {
        let idx = (c as u32).checked_sub('a' as u32)? as usize;
        if idx >= m || idx < block {
            return None;
        }
        block = idx;
        lens[idx] += 1;
    }
    Some(lens)
}

fn is_palindrome_word(w: &[char]) -> bool {
    match w {
        ['x'] => true,
        [first, inner @ .., last] if first == last && (*first == 'a' || *first == 'b') => is_palindrome_word(inner),
        _ => false,
    }
}

/// Exact membership.
pub fn oracle(lang: Language, word: &[char]) -> Result<bool> {
    let alphabet = lang.alphabet();
    if let Some(&bad) = word.iter().find(|c| !alphabet.contains(c)) {
        return Err(LangError::ForeignSymbol(bad));
    }
    Ok(match lang.arity() {
        Some(m) => {
            let r = runs(word);
            r.len() == m && r.iter().enumerate().all(|(i, &(c, n))| c == alphabet[i] && n == r[0].1)
        }
        None => is_palindrome_word(word),
    })
}

pub fn oracle_str(lang: Language, word: &str) -> Result<bool> {
    let w: Vec<char> = word.chars().collect();
    oracle(lang, &w)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub word: Vec<char>,
    pub label: bool,
}

impl Sample {
    pub fn labeled(lang: Language, word: Vec<char>) -> Result<Self> {
        let label = oracle(lang, &word)?;
        Ok(Sample { word, label })
    }

    pub fn word_string(&self) -> String {
        self.word.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub count: usize,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { n_min: 1, n_max: 100, count: 2000, dev_fraction: 0.1, seed: 0 }
    }
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min >= self.n_max {
            return Err(LangError::Degenerate(format!(
                "need 1 <= n_min < n_max, got {}..={}",
                self.n_min, self.n_max
            )));
        }
        if self.count < 2 {
            return Err(LangError::Degenerate("count must be at least 2".into()));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(LangError::Degenerate("dev_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn palindrome_pair(rng: &mut ChaCha8Rng, half: usize, positive: bool) -> Vec<char> {
    let left: Vec<char> = (0..half).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
    let mut right: Vec<char> = left.iter().rev().copied().collect();
    if !positive {
        let i = rng.gen_range(0..half);
        right[i] = if right[i] == 'a' { 'b' } else { 'a' };
    }
    let mut w = left;
    w.push('x');
    w.extend(right);
    w
}

/// Balanced positives and negatives, shuffled and split into train and dev.
///
/// Positives draw `n` uniformly from `[n_min, n_max]`. Negatives draw every
/// block length independently from the same range and redraw until not all are
/// equal. Palindrome negatives mirror a random half and then flip one symbol of
/// the mirrored part.
pub fn generate_training_set(lang: Language, cfg: &DatasetConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positives = cfg.count / 2;
    let mut samples = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let positive = i < positives;
        let word = match lang.arity() {
            Some(m) => {
                let lens = if positive {
                    vec![rng.gen_range(cfg.n_min..=cfg.n_max); m]
                } else {
                    loop {
                        let lens: Vec<usize> = (0..m).map(|_| rng.gen_range(cfg.n_min..=cfg.n_max)).collect();
                        if lens.iter().any(|&l| l != lens[0]) {
                            break lens;
                        }
                    }
                };
                block_word(&lens)
            }
            None => {
                let half = rng.gen_range(cfg.n_min..=cfg.n_max);
                palindrome_pair(&mut rng, half, positive)
            }
        };
        samples.push(Sample::labeled(lang, word)?);
    }
    samples.shuffle(&mut rng);
    let dev = ((cfg.count as f64 * cfg.dev_fraction).round() as usize).clamp(1, cfg.count - 1);
    let train = samples.split_off(dev);
    Ok((train, samples))
}

/// Near-miss test set: `a^{n+i} b^{n+j} ...` with `n` uniform in
/// `[0, eval_n_max]` and each offset uniform in `[-2, 2]`; negative lengths
/// clamp to zero.
pub fn generate_eval_set(lang: Language, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let m = lang
        .arity()
        .ok_or_else(|| LangError::Unsupported("evaluation sets are defined for block languages".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(0..=lang.eval_n_max()) as i64;
            let lens: Vec<usize> = (0..m).map(|_| (n + rng.gen_range(-2..=2)).max(0) as usize).collect();
            Sample::labeled(lang, block_word(&lens))
        })
        .collect()
}

/// Default evaluation set size.
pub const EVAL_SET_SIZE: usize = 1000;

/// One `<word>\t<0|1>` line per sample.
pub fn write_samples(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.extend(s.word.iter());
        out.push('\t');
        out.push(if s.label { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn read_samples(text: &str) -> Result<Vec<Sample>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let (word, label) =
                line.split_once('\t').ok_or(LangError::Parse { line: i + 1, msg: "missing tab".into() })?;
            let label = match label.trim() {
                "1" => true,
                "0" => false,
                other => return Err(LangError::Parse { line: i + 1, msg: format!("label `{other}`") }),
            };
            Ok(Sample { word: word.chars().collect(), label })
        })
        .collect()
}

/// Expand the shorthand `a100b100` (letter followed by an optional count) into
/// a word. Plain words such as `aabb` pass through unchanged.
pub fn expand_shorthand(spec: &str) -> std::result::Result<Vec<char>, String> {
    let mut out = Vec::new();
    let mut chars = spec.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            return Err(format!("count without a letter in `{spec}`"));
        }
        let mut digits = String::new();
        while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
            digits.push(*d);
            chars.next();
        }
        let n = if digits.is_empty() { 1 } else { digits.parse::<usize>().map_err(|e| e.to_string())? };
        out.extend(std::iter::repeat(c).take(n));
    }
    Ok(out)
}
