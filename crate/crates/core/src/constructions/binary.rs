//! Why a squashing SRNN cannot run a binary counter through sign patterns.
//!
//! A value `v` of a `bits`-wide counter is represented by a state whose
//! coordinate signs spell `v` (MSB first, `+` for 1, `-` for 0). With a
//! `tanh` SRNN, `h' = tanh(U h + w_s + b)`, so the sign of `h'` is the sign of
//! `U h + b~` where `b~` folds in the input. Two symmetric states `h` and
//! `-h` (values `v` and `2^bits - 1 - v`) give
//!
//! * `2 b~ = pre(h) + pre(-h)` when both must increment, and
//! * `b_up - b_down = pre_up(h) - pre_down(h)` when one state must go both ways.
//!
//! Each identity forces the sign of a coordinate of the unknown wherever its
//! two summands agree in sign. Enumerating every sign assignment of the
//! unknown shows none satisfies all the forced signs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ConstructionError, Result};
use crate::cells::{step_into, CellKind, CellParams, CellState, Gate, StepCache};
use crate::numerics::{Matrix, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterScenario {
    /// Every input increments.
    ConsistentlyIncreasing,
    /// One symbol increments, another decrements.
    BiDirectional,
}

impl std::str::FromStr for CounterScenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "increasing" | "consistently_increasing" => Ok(CounterScenario::ConsistentlyIncreasing),
            "bidirectional" | "bi_directional" => Ok(CounterScenario::BiDirectional),
            _ => Err(format!("unknown scenario `{s}` (expected increasing or bidirectional)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
    #[serde(rename = "0")]
    Zero,
}

impl Sign {
    fn of_bit(bit: bool) -> Sign {
        if bit {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    fn negate(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
            Sign::Zero => Sign::Zero,
        }
    }

    /// Sign of `x + y` when it is determined by the signs alone.
    fn sum(x: Sign, y: Sign) -> Option<Sign> {
        match (x, y) {
            (a, Sign::Zero) => Some(a),
            (Sign::Zero, b) => Some(b),
            (a, b) if a == b => Some(a),
            _ => None,
        }
    }
}

/// Forced signs of the unknown from one identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForcedSigns {
    pub source: String,
    /// `None` where the identity leaves the coordinate free.
    pub signs: Vec<Option<Sign>>,
}

/// Two identities forcing opposite signs on one coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub coordinate: usize,
    pub positive_from: String,
    pub negative_from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomSearchReport {
    pub samples: usize,
    pub seed: u64,
    pub weight_scale: f64,
    /// Networks that counted correctly on every checked word.
    pub counters_found: usize,
    /// Longest correctly counted prefix over all samples.
    pub best_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub scenario: CounterScenario,
    pub bits: usize,
    pub constraints: Vec<ForcedSigns>,
    /// `3^bits` sign assignments of the unknown.
    pub assignments_checked: usize,
    pub consistent_assignments: usize,
    pub infeasible: bool,
    pub witness: Option<Witness>,
    pub random_search: Option<RandomSearchReport>,
}

fn value_signs(v: usize, bits: usize) -> Vec<Sign> {
    (0..bits).map(|i| Sign::of_bit(v >> (bits - 1 - i) & 1 == 1)).collect()
}

/// Forced-sign constraints of a scenario for a `bits`-wide counter.
pub fn forced_signs(scenario: CounterScenario, bits: usize) -> Vec<ForcedSigns> {
    let top = (1usize << bits) - 1;
    let mut out = Vec::new();
    match scenario {
        CounterScenario::ConsistentlyIncreasing => {
            // h represents v and -h represents top - v; both must step up.
            for v in 1..=top / 2 {
                let mirror = top - v;
                let a = value_signs(v + 1, bits);
                let b = value_signs(mirror + 1, bits);
                out.push(ForcedSigns {
                    source: format!("{v} -> {} and {mirror} -> {}", v + 1, mirror + 1),
                    signs: a.iter().zip(&b).map(|(&x, &y)| Sign::sum(x, y)).collect(),
                });
            }
        }
        CounterScenario::BiDirectional => {
            for v in 1..top {
                let up = value_signs(v + 1, bits);
                let down = value_signs(v - 1, bits);
                out.push(ForcedSigns {
                    source: format!("{v} -> {} and {v} -> {}", v + 1, v - 1),
                    signs: up.iter().zip(&down).map(|(&x, &y)| Sign::sum(x, y.negate())).collect(),
                });
            }
        }
    }
    out
}

fn find_witness(constraints: &[ForcedSigns], bits: usize) -> Option<Witness> {
    for coordinate in 0..bits {
        let pos = constraints.iter().find(|c| c.signs[coordinate] == Some(Sign::Pos));
        let neg = constraints.iter().find(|c| c.signs[coordinate] == Some(Sign::Neg));
        if let (Some(p), Some(n)) = (pos, neg) {
            return Some(Witness {
                coordinate,
                positive_from: p.source.clone(),
                negative_from: n.source.clone(),
            });
        }
    }
    None
}

/// Symbolic check plus an optional seeded random search over 3-dimensional
/// networks (`samples = 0` skips the search).
pub fn binary_counter_infeasibility(
    scenario: CounterScenario,
    bits: usize,
    samples: usize,
    seed: u64,
) -> Result<InfeasibilityReport> {
    if !(1..=10).contains(&bits) {
        return Err(ConstructionError::InvalidParameter(format!("bits must be in 1..=10, got {bits}")));
    }
    let constraints = forced_signs(scenario, bits);
    let total = 3usize.pow(bits as u32);
    let signs = [Sign::Pos, Sign::Neg, Sign::Zero];
    let mut consistent = 0;
    for code in 0..total {
        let assignment: Vec<Sign> = (0..bits).map(|i| signs[code / 3usize.pow(i as u32) % 3]).collect();
        let ok = constraints
            .iter()
            .all(|c| c.signs.iter().zip(&assignment).all(|(forced, &s)| forced.map_or(true, |f| f == s)));
        if ok {
            consistent += 1;
        }
    }
    let witness = find_witness(&constraints, bits);
    let random_search = if samples > 0 {
        if bits != 3 {
            return Err(ConstructionError::InvalidParameter("the random search covers 3-bit counters".into()));
        }
        Some(random_counter_search(scenario, samples, seed, 3.0)?)
    } else {
        None
    };
    Ok(InfeasibilityReport {
        scenario,
        bits,
        constraints,
        assignments_checked: total,
        consistent_assignments: consistent,
        infeasible: consistent == 0,
        witness,
        random_search,
    })
}

fn decode(h: &[f64]) -> Option<usize> {
    h.iter().try_fold(0usize, |acc, &x| {
        if x > 0.0 {
            Some(acc * 2 + 1)
        } else if x < 0.0 {
            Some(acc * 2)
        } else {
            None
        }
    })
}

struct Probe<'a> {
    params: &'a CellParams,
    cache: StepCache,
    x: [[f64; 2]; 2],
}

impl Probe<'_> {
    fn step(&mut self, h: &CellState, symbol: usize) -> Result<CellState> {
        let mut next = h.clone();
        step_into(self.params, h, &self.x[symbol], Precision::exact(), &mut self.cache, &mut next)?;
        Ok(next)
    }

    /// Length of the longest correctly counted word explored, and whether
    /// every word up to `max_len` was counted correctly.
    fn check(&mut self, scenario: CounterScenario, max_len: usize) -> Result<(usize, bool)> {
        let start = CellState { h: vec![-0.5; 3], c: None };
        match scenario {
            CounterScenario::ConsistentlyIncreasing => {
                let mut h = start;
                for t in 1..=max_len.min(7) {
                    h = self.step(&h, 0)?;
                    if decode(&h.h) != Some(t) {
                        return Ok((t - 1, false));
                    }
                }
                Ok((max_len.min(7), true))
            }
            CounterScenario::BiDirectional => self.walk(&start, 0, 0, max_len),
        }
    }

    fn walk(&mut self, h: &CellState, value: usize, depth: usize, max_len: usize) -> Result<(usize, bool)> {
        if depth == max_len {
            return Ok((depth, true));
        }
        let mut best = depth;
        for (symbol, target) in [(0, value.checked_add(1).filter(|&v| v <= 7)), (1, value.checked_sub(1))] {
            let Some(target) = target else { continue };
            let next = self.step(h, symbol)?;
            if decode(&next.h) != Some(target) {
                return Ok((best, false));
            }
            let (len, ok) = self.walk(&next, target, depth + 1, max_len)?;
            best = best.max(len);
            if !ok {
                return Ok((best, false));
            }
        }
        Ok((best, true))
    }
}

/// Sample 3-dimensional tanh SRNNs with weights uniform in
/// `[-scale, scale]`, start from the state spelling 0, and check counting on
/// all admissible words of length at most 8 (an increasing counter
/// overflows after 7 steps, so only 7 are checked there).
pub fn random_counter_search(
    scenario: CounterScenario,
    samples: usize,
    seed: u64,
    scale: f64,
) -> Result<RandomSearchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0;
    let mut best_prefix = 0;
    for _ in 0..samples {
        let mut draw = |rows: usize, cols: usize| Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale));
        let w = draw(3, 2);
        let u = draw(3, 3);
        let b = draw(3, 1).as_slice().to_vec();
        let params = CellParams::new(CellKind::Srnn, 2, 3, vec![Gate { w, u, b }])?;
        let mut probe = Probe { cache: StepCache::for_params(&params), params: &params, x: [[1.0, 0.0], [0.0, 1.0]] };
        let (prefix, ok) = probe.check(scenario, 8)?;
        best_prefix = best_prefix.max(prefix);
        if ok {
            found += 1;
        }
    }
    Ok(RandomSearchReport { samples, seed, weight_scale: scale, counters_found: found, best_prefix })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increasing_conflict_sits_in_the_middle_bit() {
        let r = binary_counter_infeasibility(CounterScenario::ConsistentlyIncreasing, 3, 0, 0).unwrap();
        assert!(r.infeasible);
        assert_eq!(r.assignments_checked, 27);
        let w = r.witness.unwrap();
        assert_eq!(w.coordinate, 1);
        assert!(w.negative_from.starts_with("3 -> 4"));
        assert!(w.positive_from.starts_with("1 -> 2"));
    }

    #[test]
    fn bidirectional_conflict() {
        let r = binary_counter_infeasibility(CounterScenario::BiDirectional, 3, 0, 0).unwrap();
        assert!(r.infeasible);
        let w = r.witness.unwrap();
        assert_eq!(w.coordinate, 1);
        assert!(w.positive_from.starts_with("1 -> 2"));
        assert!(w.negative_from.starts_with("3 -> 4"));
    }

    #[test]
    fn one_bit_counter_has_no_constraints() {
        let r = binary_counter_infeasibility(CounterScenario::ConsistentlyIncreasing, 1, 0, 0).unwrap();
        assert!(r.constraints.is_empty());
        assert!(!r.infeasible);
    }

    #[test]
    fn decode_sign_patterns() {
        assert_eq!(decode(&[-0.5, -0.5, -0.5]), Some(0));
        assert_eq!(decode(&[0.1, -0.2, 0.3]), Some(5));
        assert_eq!(decode(&[0.0, 1.0, 1.0]), None);
    }

    #[test]
    fn random_search_finds_nothing() {
        for scenario in [CounterScenario::ConsistentlyIncreasing, CounterScenario::BiDirectional] {
            let r = random_counter_search(scenario, 2000, 11, 3.0).unwrap();
            assert_eq!(r.counters_found, 0);
            assert!(r.best_prefix < 8);
        }
    }
}
