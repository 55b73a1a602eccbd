//! Small dense linear algebra over `f64` with a reduced-mantissa quantization
//! layer.
//!
//! Every value is stored as an `f64`. A [`Precision`] says how many significand
//! bits (after the implicit leading one) survive rounding, and where rounding is
//! applied: only to recurrent state and activation outputs
//! ([`QuantMode::StateQuantized`]), after every elementary multiply and add
//! ([`QuantMode::FullyQuantized`]), or never ([`QuantMode::Exact`]).
//!
//! The exponent is not limited. Only the significand is rounded, with
//! round-to-nearest, ties-to-even.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("mantissa_bits must be in 1..=52, got {0}")]
    MantissaBits(u32),
}

pub type Result<T> = std::result::Result<T, NumericError>;

/// Where quantization is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantMode {
    /// Round state vectors and activation outputs once per timestep.
    #[default]
    StateQuantized,
    /// Round after every elementary operation.
    FullyQuantized,
    /// No rounding beyond native `f64`.
    Exact,
}

impl std::str::FromStr for QuantMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "state" | "state_quantized" => Ok(QuantMode::StateQuantized),
            "full" | "fully_quantized" => Ok(QuantMode::FullyQuantized),
            "exact" => Ok(QuantMode::Exact),
            other => Err(format!("unknown quantization mode `{other}` (state|full|exact)")),
        }
    }
}

/// Finite-precision arithmetic setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Precision {
    mantissa_bits: u32,
    mode: QuantMode,
}

impl Default for Precision {
    /// Single-precision significand, state quantization.
    fn default() -> Self {
        Precision { mantissa_bits: 23, mode: QuantMode::StateQuantized }
    }
}

impl Precision {
    pub fn new(mantissa_bits: u32, mode: QuantMode) -> Result<Self> {
        if !(1..=52).contains(&mantissa_bits) {
            return Err(NumericError::MantissaBits(mantissa_bits));
        }
        Ok(Precision { mantissa_bits, mode })
    }

    /// State quantization at the given number of significand bits.
    pub fn state(mantissa_bits: u32) -> Result<Self> {
        Self::new(mantissa_bits, QuantMode::StateQuantized)
    }

    pub fn exact() -> Self {
        Precision { mantissa_bits: 52, mode: QuantMode::Exact }
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    pub fn is_exact(&self) -> bool {
        self.mode == QuantMode::Exact
    }

    /// Round a state or activation value. Identity in `Exact` mode.
    #[inline]
    pub fn q(&self, x: f64) -> f64 {
        match self.mode {
            QuantMode::Exact => x,
            _ => round_significand(x, self.mantissa_bits),
        }
    }

    /// Round the result of an elementary operation. Only `FullyQuantized`
    /// rounds here.
    #[inline]
    pub fn q_op(&self, x: f64) -> f64 {
        match self.mode {
            QuantMode::FullyQuantized => round_significand(x, self.mantissa_bits),
            _ => x,
        }
    }
}

const SIGNIFICAND_BITS: u32 = 52;
const MIN_NORMAL: f64 = f64::MIN_POSITIVE;
// 2^64, used to lift subnormals into the normal range before rounding.
const SUBNORMAL_LIFT: f64 = 18446744073709551616.0;

/// Round `x` to `bits` significand bits, ties to even.
#[inline]
pub(crate) fn round_significand(x: f64, bits: u32) -> f64 {
    let raw = x.to_bits();
    let exponent = (raw >> SIGNIFICAND_BITS) & 0x7ff;
    // Zeros take the fast path: the arithmetic below maps them to themselves.
    let subnormal = exponent == 0 && raw << 1 != 0;
    if bits >= SIGNIFICAND_BITS || subnormal || exponent == 0x7ff {
        return round_special(x, bits);
    }
    let drop = SIGNIFICAND_BITS - bits;
    let mask = (1u64 << drop) - 1;
    // Adding half an ulp minus one, plus the kept LSB, rounds ties to even on
    // the magnitude bits. A carry into the exponent is the correct result.
    let lsb = (raw >> drop) & 1;
    f64::from_bits((raw + (mask >> 1) + lsb) & !mask)
}

#[cold]
fn round_special(x: f64, bits: u32) -> f64 {
    if bits >= SIGNIFICAND_BITS || x == 0.0 || !x.is_finite() {
        return x;
    }
    // Subnormal: scaling by a power of two is exact, so this keeps the
    // exponent unbounded.
    debug_assert!(x.abs() < MIN_NORMAL);
    round_significand(x * SUBNORMAL_LIFT, bits) / SUBNORMAL_LIFT
}

/// Nearest value representable with `p.mantissa_bits` significand bits.
pub fn quantize(x: f64, p: Precision) -> Result<f64> {
    if !x.is_finite() {
        return Err(NumericError::NonFinite(x));
    }
    let y = p.q(x);
    if !y.is_finite() {
        return Err(NumericError::NonFinite(y));
    }
    Ok(y)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericError::Dimension("ragged matrix rows".into()));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// `out += self * x`, accumulating column by column in ascending order and
    /// skipping zero entries of `x`. Per output row the summation order is the
    /// same as a plain dot product, so skipping zeros never changes a rounded
    /// result.
    pub(crate) fn accumulate_mul(&self, x: &[f64], out: &mut [f64], p: Precision) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                let w = self.data[i * self.cols + j];
                if w != 0.0 {
                    *o = p.q_op(*o + p.q_op(w * xj));
                }
            }
        }
    }

    /// `out += self^T * g`.
    pub(crate) fn accumulate_mul_transposed(&self, g: &[f64], out: &mut [f64]) {
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w * gi;
            }
        }
    }

    /// `self += a * b^T`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }
}

/// `W x + U h + b`.
///
/// In `FullyQuantized` mode every product and partial sum is rounded. In the
/// other modes the result is exact `f64` arithmetic and rounding is left to the
/// caller.
pub fn affine(
    w: &Matrix,
    x: &[f64],
    u: &Matrix,
    h: &[f64],
    b: &[f64],
    p: Precision,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; b.len()];
    affine_into(w, x, u, h, b, p, &mut out)?;
    Ok(out)
}

pub(crate) fn affine_into(
    w: &Matrix,
    x: &[f64],
    u: &Matrix,
    h: &[f64],
    b: &[f64],
    p: Precision,
    out: &mut [f64],
) -> Result<()> {
    if w.cols != x.len() || u.cols != h.len() || w.rows != b.len() || u.rows != b.len() {
        return Err(NumericError::Dimension(format!(
            "W {}x{} * x[{}] + U {}x{} * h[{}] + b[{}]",
            w.rows,
            w.cols,
            x.len(),
            u.rows,
            u.cols,
            h.len(),
            b.len()
        )));
    }
    out.fill(0.0);
    w.accumulate_mul(x, out, p);
    u.accumulate_mul(h, out, p);
    for (o, &bi) in out.iter_mut().zip(b) {
        *o = p.q_op(*o + bi);
    }
    check_finite(out)
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(&bad) => Err(NumericError::NonFinite(bad)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`
    /// (and the pre-activation `x` for ReLU).
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation followed by rounding in both quantized modes.
pub fn activation(kind: Activation, v: &[f64], p: Precision) -> Result<Vec<f64>> {
    check_finite(v)?;
    Ok(v.iter().map(|&x| p.q(kind.eval(x))).collect())
}

/// Depth of the `g <- g/4 + 1/4` push sequence that stays distinguishable at
/// precision `p`: the number of pushes, starting from `g = 0`, that still
/// change the rounded value. `Exact` mode behaves as native `f64`.
pub fn stack_push_capacity(p: Precision) -> usize {
    let round = |x: f64| round_significand(x, p.mantissa_bits);
    let mut g = 0.0_f64;
    let mut last_change = 0;
    for n in 0..10_000 {
        let next = round(g / 4.0 + 0.25);
        if next != g {
            last_change = n + 1;
        } else {
            break;
        }
        g = next;
    }
    last_change
}
