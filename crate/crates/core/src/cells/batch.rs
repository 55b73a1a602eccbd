//! Lockstep evaluation of many single-gate runs that read the same symbol.
//!
//! Lanes are stored dimension-major so each update is a loop over lanes the
//! compiler can vectorize. Per lane the arithmetic is the one in
//! [`step_into`](super::step_into), in the same order; the only possible
//! difference is the sign of an exact zero, which no decision can observe.

use super::{CellKind, CellState, Recognizer};
use crate::numerics::{round_significand, Precision, QuantMode};

const SIGNIFICAND_BITS: u32 = 52;

/// Whether the fast rounding formula does not apply: subnormal, infinite or
/// NaN.
#[cfg(test)]
fn is_special(raw: u64) -> bool {
    let exponent = (raw >> SIGNIFICAND_BITS) & 0x7ff;
    (exponent == 0x7ff) | ((exponent == 0) & (raw << 1 != 0))
}

/// Round-to-nearest-even on the bit pattern; exact for zeros and normal
/// numbers, including a carry into the exponent.
#[inline(always)]
fn round_fast(raw: u64, drop: u32) -> u64 {
    let mask = (1u64 << drop) - 1;
    (raw + (mask >> 1) + ((raw >> drop) & 1)) & !mask
}

/// Bias, activation and rounding fused into one pass over a row of lanes.
/// The pre-activations are kept in `unrounded`; returns whether any lane needs
/// the slow path.
#[inline(never)]
fn finish_row<const RELU: bool, const ROUND: bool>(row: &mut [f64], unrounded: &mut [f64], b: f64, drop: u32) -> bool {
    let mut special = 0u64;
    for (o, keep) in row.iter_mut().zip(unrounded.iter_mut()) {
        let v = *o + b;
        let a = if RELU {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        } else {
            v.tanh()
        };
        // Float compares vectorize better than tests on the exponent bits; NaN
        // fails every comparison. A non-finite pre-activation is an overflow
        // even when tanh squashes it.
        let m = a.abs();
        let normal = (m >= f64::MIN_POSITIVE) & (m <= f64::MAX);
        special |= (!(normal | (m == 0.0)) | !(v.abs() <= f64::MAX)) as u64;
        *keep = v;
        *o = if ROUND { f64::from_bits(round_fast(a.to_bits(), drop)) } else { a };
    }
    special != 0
}

/// Advance each start state by copies of `symbol`, deciding after every
/// length listed in `checkpoints[lane]` (ascending). A lane whose state stops
/// being finite yields `None` from then on.
///
/// Returns `None` when the recognizer is not a single-gate cell or the
/// precision rounds intermediate operations.
pub(crate) fn decide_runs(
    r: &Recognizer,
    p: Precision,
    starts: &[&CellState],
    symbol: char,
    checkpoints: &[Vec<usize>],
) -> Option<Vec<Vec<Option<bool>>>> {
    let relu = match r.cell.kind {
        CellKind::Srnn => false,
        CellKind::Irnn => true,
        _ => return None,
    };
    if p.mode() == QuantMode::FullyQuantized {
        return None;
    }
    let sym = r.symbol_index(symbol).ok()?;
    let x = r.embedding.row(sym);
    let lanes = starts.len();
    let n = r.cell.hidden_dim;
    let gate = &r.cell.gates[0];

    // `W x` in the order `affine_into` accumulates it.
    let mut input = vec![0.0; n];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (i, o) in input.iter_mut().enumerate() {
            let w = gate.w.get(i, j);
            if w != 0.0 {
                *o += w * xj;
            }
        }
    }
    let columns: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|j| (0..n).filter(|&i| gate.u.get(i, j) != 0.0).map(|i| (i, gate.u.get(i, j))).collect())
        .collect();

    let mut h = vec![0.0; n * lanes];
    for (k, s) in starts.iter().enumerate() {
        for i in 0..n {
            h[i * lanes + k] = s.h[i];
        }
    }
    let mut pre = vec![0.0; n * lanes];
    let mut unrounded = vec![0.0; lanes];
    let mut alive = vec![true; lanes];
    let mut out: Vec<Vec<Option<bool>>> = checkpoints.iter().map(|c| Vec::with_capacity(c.len())).collect();
    let mut events: Vec<(usize, usize)> =
        checkpoints.iter().enumerate().flat_map(|(k, c)| c.iter().map(move |&t| (t, k))).collect();
    events.sort_unstable();
    let mut next_event = 0;
    let mut column = vec![0.0; n];
    let horizon = events.last().map_or(0, |e| e.0);
    let bits = if p.mode() == QuantMode::Exact { SIGNIFICAND_BITS } else { p.mantissa_bits() };
    let drop = SIGNIFICAND_BITS - bits;

    for step in 0..=horizon {
        if step > 0 {
            for i in 0..n {
                pre[i * lanes..(i + 1) * lanes].fill(input[i]);
            }
            for (j, col) in columns.iter().enumerate() {
                let hj = &h[j * lanes..(j + 1) * lanes];
                for &(i, u) in col {
                    let row = &mut pre[i * lanes..(i + 1) * lanes];
                    for (o, &v) in row.iter_mut().zip(hj) {
                        *o += u * v;
                    }
                }
            }
            for i in 0..n {
                let row = &mut pre[i * lanes..(i + 1) * lanes];
                let special = match (relu, drop) {
                    (true, 0) => finish_row::<true, false>(row, &mut unrounded, gate.b[i], 0),
                    (true, _) => finish_row::<true, true>(row, &mut unrounded, gate.b[i], drop),
                    (false, 0) => finish_row::<false, false>(row, &mut unrounded, gate.b[i], 0),
                    (false, _) => finish_row::<false, true>(row, &mut unrounded, gate.b[i], drop),
                };
                if special {
                    for (k, (o, &v)) in row.iter_mut().zip(&unrounded).enumerate() {
                        if !v.is_finite() {
                            alive[k] = false;
                            *o = 0.0;
                            continue;
                        }
                        let a = if relu { v.max(0.0) } else { v.tanh() };
                        *o = if drop == 0 { a } else { round_significand(a, bits) };
                    }
                }
            }
            std::mem::swap(&mut h, &mut pre);
        }
        while next_event < events.len() && events[next_event].0 == step {
            let k = events[next_event].1;
            let verdict = if alive[k] {
                for i in 0..n {
                    column[i] = h[i * lanes + k];
                }
                r.readout.score(&column, p).ok().map(|s| s > r.threshold)
            } else {
                None
            };
            out[k].push(verdict);
            next_event += 1;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{CellParams, Gate, Readout, Runner};
    use crate::numerics::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_recognizer(kind: CellKind, seed: u64) -> Recognizer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r, c| Matrix::from_fn(r, c, |_, _| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-1.2..1.2) });
        let gate = Gate { w: m(5, 2), u: m(5, 5), b: m(5, 1).as_slice().to_vec() };
        let cell = CellParams::new(kind, 2, 5, vec![gate]).unwrap();
        let out_w = m(5, 1).as_slice().to_vec();
        Recognizer::one_hot(vec!['a', 'b'], cell, Readout::linear(out_w, 0.05)).unwrap()
    }

    #[test]
    fn lockstep_matches_scalar_runs() {
        for kind in [CellKind::Srnn, CellKind::Irnn] {
            for (seed, p) in [(1, Precision::state(23).unwrap()), (2, Precision::state(8).unwrap()), (3, Precision::exact())] {
                let r = random_recognizer(kind, seed);
                let mut starts = Vec::new();
                let mut runner = Runner::new(&r, p);
                for _ in 0..6 {
                    starts.push(runner.clone());
                    runner.push('a').unwrap();
                }
                let checkpoints: Vec<Vec<usize>> = (0..6).map(|k| vec![k, k + 3, 2 * k + 7]).collect();
                let states: Vec<&CellState> = starts.iter().map(|s| s.state()).collect();
                let batched = decide_runs(&r, p, &states, 'b', &checkpoints).unwrap();
                for (k, start) in starts.iter().enumerate() {
                    let mut run = start.clone();
                    let mut expected = Vec::new();
                    let mut len = 0;
                    for &c in &checkpoints[k] {
                        while len < c {
                            run.push('b').unwrap();
                            len += 1;
                        }
                        expected.push(Some(run.accepts().unwrap()));
                    }
                    assert_eq!(batched[k], expected, "{kind:?} seed {seed} lane {k}");
                }
            }
        }
    }

    #[test]
    fn fast_rounding_agrees_on_normals_and_zeros() {
        for bits in [1u32, 2, 8, 23, 51] {
            for x in [1.0 / 3.0, -5.75, 0.0, -0.0, 1e300, -2.5e-300, 0.1, 7.0] {
                let raw = f64::to_bits(x);
                assert!(!is_special(raw));
                assert_eq!(f64::from_bits(round_fast(raw, 52 - bits)), round_significand(x, bits), "{x} @ {bits}");
            }
        }
        assert!(is_special(1e-310f64.to_bits()));
        assert!(is_special(f64::INFINITY.to_bits()));
        assert!(is_special(f64::NAN.to_bits()));
    }

    #[test]
    fn overflow_marks_the_lane() {
        let mut gate = Gate::zeros(1, 1);
        gate.u.set(0, 0, 1e200);
        gate.w.set(0, 0, 1.0);
        let cell = CellParams::new(CellKind::Irnn, 1, 1, vec![gate]).unwrap();
        let r = Recognizer::one_hot(vec!['a'], cell, Readout::linear(vec![1.0], 0.0)).unwrap();
        let p = Precision::state(23).unwrap();
        let zero = CellState::zeros(&r.cell);
        let out = decide_runs(&r, p, &[&zero], 'a', &[vec![1, 2, 5]]).unwrap();
        assert_eq!(out[0], vec![Some(true), Some(true), None]);
    }
}
