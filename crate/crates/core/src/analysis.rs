//! Closed-form false-positive, load and file-access estimates.
//!
//! Symbols: `N` stored keys, `F` total bits, `L` key length in characters,
//! `U` segment width. One prefix lights `L/U` bits and one key `L·L/U`.
//! All probabilities are evaluated in log space (`ln_1p`/`expm1`), so values
//! far below the `f64` range still have an exact `log10`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("segment width {u} does not divide key length {l}")]
    InvalidSegmentation { l: u32, u: u32 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Bits in one of the 2^21-bit files used to express storage needs.
pub const FILE_UNIT_BITS: f64 = 2_097_152.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    /// Stored keys, `N`.
    pub keys: u64,
    /// Total bits in the system, `F`.
    pub total_bits: f64,
    /// Key length in characters, `L`.
    pub key_len: u32,
    /// Segment width, `U`.
    pub segment_width: u32,
}

impl AnalysisParams {
    pub fn new(keys: u64, total_bits: f64, key_len: u32, segment_width: u32) -> Self {
        Self { keys, total_bits, key_len, segment_width }
    }

    /// Reference sizing: `L = 64`, `U = 4`, `F = 2^21 · 150`.
    pub fn reference(keys: u64) -> Self {
        Self::new(keys, FILE_UNIT_BITS * 150.0, 64, 4)
    }

    /// `L / U`.
    pub fn bits_per_prefix(&self) -> Result<u64, AnalysisError> {
        let (l, u) = (self.key_len, self.segment_width);
        if u == 0 || l == 0 || l % u != 0 {
            return Err(AnalysisError::InvalidSegmentation { l, u });
        }
        Ok((l / u) as u64)
    }

    /// `L · L / U`.
    pub fn bits_per_key(&self) -> Result<u64, AnalysisError> {
        Ok(self.key_len as u64 * self.bits_per_prefix()?)
    }

    fn checked_bits_per_key(&self) -> Result<f64, AnalysisError> {
        let b = self.bits_per_key()? as f64;
        if !(self.total_bits.is_finite() && self.total_bits > 0.0) {
            return Err(AnalysisError::InvalidParams(format!("F must be positive, got {}", self.total_bits)));
        }
        if b > self.total_bits {
            return Err(AnalysisError::InvalidParams(format!(
                "one key lights {b} bits but F is only {}",
                self.total_bits
            )));
        }
        Ok(b)
    }
}

/// The intermediate quantities behind the false-positive estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProbabilities {
    /// A given bit stays dark after one key: `1 - b/F`.
    pub unset_by_one: f64,
    /// A given bit stays dark after `N` keys: `(1 - b/F)^N`.
    pub unset_after_n: f64,
    /// A given bit is lit after `N` keys: `1 - (1 - b/F)^N`.
    pub set_after_n: f64,
    /// `b = L·L/U`.
    pub bits_per_key: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsePositive {
    /// Linear value; underflows to 0 below ~1e-308.
    pub value: f64,
    pub log10: f64,
}

impl FalsePositive {
    /// Scientific notation built from `log10`, so values below the `f64`
    /// range still print (`6.91e-211`).
    pub fn scientific(&self, digits: usize) -> String {
        if self.log10 == f64::NEG_INFINITY {
            return "0".into();
        }
        let mut exp = self.log10.floor();
        let mut mantissa = 10f64.powf(self.log10 - exp);
        let scale = 10f64.powi(digits as i32);
        if (mantissa * scale).round() >= 10.0 * scale {
            mantissa /= 10.0;
            exp += 1.0;
        }
        format!("{mantissa:.digits$}e{exp}")
    }
}

/// Step probabilities for `n` keys of `b` bits each over `f` bits.
pub fn steps_for_bits(n: f64, f: f64, b: f64) -> StepProbabilities {
    let ln_one = (-b / f).ln_1p();
    let ln_n = if n == 0.0 { 0.0 } else { n * ln_one };
    StepProbabilities {
        unset_by_one: 1.0 - b / f,
        unset_after_n: ln_n.exp(),
        set_after_n: -ln_n.exp_m1(),
        bits_per_key: b,
    }
}

impl StepProbabilities {
    /// Probability that all `b` bits of one more key are already lit.
    pub fn false_positive(&self) -> FalsePositive {
        FalsePositive {
            value: self.set_after_n.powf(self.bits_per_key),
            log10: self.bits_per_key * self.set_after_n.log10(),
        }
    }
}

pub fn step_probabilities(params: &AnalysisParams) -> Result<StepProbabilities, AnalysisError> {
    let b = params.checked_bits_per_key()?;
    Ok(steps_for_bits(params.keys as f64, params.total_bits, b))
}

/// `(1 - (1 - b/F)^N)^b` with `b = L·L/U`.
pub fn fp_probability(params: &AnalysisParams) -> Result<FalsePositive, AnalysisError> {
    Ok(step_probabilities(params)?.false_positive())
}

/// Activated-bit ratio `N·L² / (U·F)` (counts repeated activations).
pub fn alpha_ratio(params: &AnalysisParams) -> Result<f64, AnalysisError> {
    let b = params.bits_per_key()? as f64;
    Ok(params.keys as f64 * b / params.total_bits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSolution {
    /// Real-valued `U = N·L² / (α·F)`.
    pub segment_width: f64,
    /// Set when `U < 1`: even one-character segments cannot reach `α`.
    pub underloaded: bool,
}

/// Solves `α = N·L²/(U·F)` for `U`.
pub fn solve_segment_width(keys: u64, total_bits: f64, key_len: u32, alpha: f64) -> Result<SegmentSolution, AnalysisError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AnalysisError::InvalidParams(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if !(total_bits > 0.0) {
        return Err(AnalysisError::InvalidParams("F must be positive".into()));
    }
    let l = key_len as f64;
    let u = keys as f64 * l * l / (alpha * total_bits);
    Ok(SegmentSolution { segment_width: u, underloaded: u < 1.0 })
}

/// Divisor of `key_len` closest to `u` (ties go to the larger divisor) and
/// the ratio it achieves.
pub fn nearest_divisor(keys: u64, total_bits: f64, key_len: u32, u: f64) -> (u32, f64) {
    let best = (1..=key_len)
        .filter(|d| key_len % d == 0)
        .min_by(|a, b| {
            let da = (*a as f64 - u).abs();
            let db = (*b as f64 - u).abs();
            da.total_cmp(&db).then(b.cmp(a))
        })
        .unwrap_or(1);
    let achieved = alpha_ratio(&AnalysisParams::new(keys, total_bits, key_len, best)).unwrap_or(f64::NAN);
    (best, achieved)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinStorage {
    pub bits: f64,
    /// `bits / 2^21`.
    pub file_units: f64,
}

/// Smallest `F` with `fp_probability <= p_fp`:
/// `F = L² / (U · (1 - (1 - p^(U/L²))^(1/N)))`.
pub fn min_storage(keys: u64, key_len: u32, segment_width: u32, p_fp: f64) -> Result<MinStorage, AnalysisError> {
    if !(p_fp > 0.0 && p_fp < 1.0) {
        return Err(AnalysisError::InvalidParams(format!("p_fp must be in (0, 1), got {p_fp}")));
    }
    if keys == 0 {
        return Err(AnalysisError::InvalidParams("N must be at least 1".into()));
    }
    let b = AnalysisParams::new(keys, 1.0, key_len, segment_width).bits_per_key()? as f64;
    // 1 - p^(1/b): fraction of bits that may stay dark.
    let dark = -(p_fp.ln() / b).exp_m1();
    // 1 - dark^(1/N): per-key dark-bit loss.
    let per_key = -(dark.ln() / keys as f64).exp_m1();
    let bits = b / per_key;
    Ok(MinStorage { bits, file_units: bits / FILE_UNIT_BITS })
}

/// Expected distinct files hit by `ops` uniform picks among `k` files:
/// `K · (1 - (1 - 1/K)^ops)`.
pub fn expected_unique_files(k: u64, ops: u64) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::InvalidParams("K must be at least 1".into()));
    }
    if ops == 0 {
        return Ok(0.0);
    }
    let k = k as f64;
    Ok(-k * (ops as f64 * (-1.0 / k).ln_1p()).exp_m1())
}

/// Same expectation when file `i` is picked with probability `cells[i]`.
pub fn expected_unique_files_weighted(cells: &[f64], ops: u64) -> f64 {
    cells
        .iter()
        .map(|&p| if p >= 1.0 { 1.0 } else { -(ops as f64 * (-p).ln_1p()).exp_m1() })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpRow {
    pub keys: u64,
    pub fp: FalsePositive,
}

/// False-positive probability over a grid of key counts.
pub fn fp_table(base: &AnalysisParams, keys: &[u64]) -> Result<Vec<FpRow>, AnalysisError> {
    keys.iter()
        .map(|&n| {
            let p = AnalysisParams { keys: n, ..*base };
            Ok(FpRow { keys: n, fp: fp_probability(&p)? })
        })
        .collect()
}

/// Reference grid: N = 100 000 .. 1 000 000 in steps of 100 000.
pub fn reference_keys() -> Vec<u64> {
    (1..=10).map(|i| i * 100_000).collect()
}
