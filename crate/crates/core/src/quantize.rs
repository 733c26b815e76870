//! One-bit threshold quantizers and the categorical law they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{JointModel, ModelSpec, ParameterVector};

/// Upper end of the per-axis domain used by [`cell_region_volume_check`].
pub const VALIDATION_DOMAIN_UPPER: f64 = 60.0;

/// `I[x - t] = 1` iff `x >= t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdQuantizer {
    pub threshold: f64,
}

impl ThresholdQuantizer {
    pub fn new(threshold: f64) -> Self {
        ThresholdQuantizer { threshold }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> u8 {
        u8::from(x >= self.threshold)
    }
}

/// One group of quantizers, one per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantizerBank {
    quantizers: Vec<ThresholdQuantizer>,
}

impl TryFrom<Vec<f64>> for QuantizerBank {
    type Error = Error;
    fn try_from(t: Vec<f64>) -> Result<Self> {
        QuantizerBank::new(&t)
    }
}

impl From<QuantizerBank> for Vec<f64> {
    fn from(b: QuantizerBank) -> Self {
        b.thresholds()
    }
}

impl QuantizerBank {
    pub fn new(thresholds: &[f64]) -> Result<Self> {
        if thresholds.is_empty() || thresholds.len() > crate::models::MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "a bank needs 1..={} thresholds, got {}",
                crate::models::MAX_DIM,
                thresholds.len()
            )));
        }
        if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold must be finite, got {t}")));
        }
        Ok(QuantizerBank { quantizers: thresholds.iter().map(|&t| ThresholdQuantizer::new(t)).collect() })
    }

    pub fn len(&self) -> usize {
        self.quantizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantizers.is_empty()
    }

    pub fn quantizers(&self) -> &[ThresholdQuantizer] {
        &self.quantizers
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.quantizers.iter().map(|q| q.threshold).collect()
    }

    pub fn n_cells(&self) -> usize {
        1 << self.quantizers.len()
    }

    /// Short label such as `25,25`.
    pub fn label(&self) -> String {
        self.quantizers.iter().map(|q| format!("{}", q.threshold)).collect::<Vec<_>>().join(",")
    }
}

/// A joint quantizer output. The canonical index reads the bits big-endian:
/// sensor 1 is the most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellWord {
    index: usize,
    len: usize,
}

impl CellWord {
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() || bits.len() > crate::models::MAX_DIM {
            return Err(Error::Input(format!("cell word needs 1..={} bits", crate::models::MAX_DIM)));
        }
        let mut index = 0;
        for &b in bits {
            if b > 1 {
                return Err(Error::Input(format!("cell word bits must be 0 or 1, got {b}")));
            }
            index = (index << 1) | b as usize;
        }
        Ok(CellWord { index, len: bits.len() })
    }

    pub fn from_index(index: usize, len: usize) -> Result<Self> {
        if len == 0 || len > crate::models::MAX_DIM || index >= (1 << len) {
            return Err(Error::Input(format!("cell index {index} out of range for {len} bits")));
        }
        Ok(CellWord { index, len })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit of sensor `i` (0-based).
    pub fn bit(&self, i: usize) -> u8 {
        ((self.index >> (self.len - 1 - i)) & 1) as u8
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.bit(i)).collect()
    }
}

impl std::fmt::Display for CellWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

/// Categorical law over the `2^L` cell words of a bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPmf {
    pub probs: Vec<f64>,
}

impl CellPmf {
    pub fn prob(&self, word: CellWord) -> f64 {
        self.probs[word.index]
    }
}

pub fn quantize_point(y: &[f64], bank: &QuantizerBank) -> CellWord {
    debug_assert_eq!(y.len(), bank.len());
    let mut index = 0;
    for (q, &yi) in bank.quantizers.iter().zip(y) {
        index = (index << 1) | q.apply(yi) as usize;
    }
    CellWord { index, len: bank.len() }
}

/// Exact cell probabilities of `bank` under the family `spec` at `theta`.
pub fn cell_pmf(theta: &ParameterVector, bank: &QuantizerBank, spec: &ModelSpec) -> Result<CellPmf> {
    let model = spec.at(theta)?;
    cell_pmf_for(&model, bank)
}

/// Inclusion–exclusion over the joint CDF. With `G[S]` the copula evaluated
/// at `u_i = F_i(t_i)` for sensors in `S` and 1 elsewhere, the cell with
/// zero-set `Z` and one-set `O` has mass `Σ_{S⊆O} (-1)^{|S|} G[Z ∪ S]`.
pub fn cell_pmf_for(model: &JointModel, bank: &QuantizerBank) -> Result<CellPmf> {
    let l = bank.len();
    if l != model.n_sensors() {
        return Err(Error::InvalidParameter(format!(
            "bank has {l} quantizers, model has {} sensors",
            model.n_sensors()
        )));
    }
    let u: Vec<f64> =
        model.marginals().iter().zip(bank.quantizers()).map(|(m, q)| m.cdf_unchecked(q.threshold)).collect();

    // Masks use bit i for sensor i, independent of the big-endian cell index.
    let n = 1usize << l;
    let mut corner = vec![0.0_f64; n];
    let mut args = vec![1.0_f64; l];
    for (mask, g) in corner.iter_mut().enumerate() {
        for i in 0..l {
            args[i] = if mask >> i & 1 == 1 { u[i] } else { 1.0 };
        }
        *g = model.copula().cdf_multi(&args);
    }

    let full = n - 1;
    let mut probs = vec![0.0_f64; n];
    for (index, p) in probs.iter_mut().enumerate() {
        let word = CellWord { index, len: l };
        let mut zero_mask = 0usize;
        for i in 0..l {
            if word.bit(i) == 0 {
                zero_mask |= 1 << i;
            }
        }
        let one_mask = full & !zero_mask;
        // enumerate subsets of one_mask
        let mut acc = 0.0;
        let mut sub = one_mask;
        loop {
            let sign = if sub.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += sign * corner[zero_mask | sub];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & one_mask;
        }
        *p = acc;
    }
    normalize_pmf(probs)
}

const NEGATIVE_TOLERANCE: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-10;

fn normalize_pmf(mut probs: Vec<f64>) -> Result<CellPmf> {
    for p in probs.iter_mut() {
        if !p.is_finite() || *p < -NEGATIVE_TOLERANCE {
            return Err(Error::NumericalConsistency(format!("cell probability {p} is negative")));
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::NumericalConsistency(format!("cell probabilities sum to {total}")));
    }
    for p in probs.iter_mut() {
        *p = (*p / total).min(1.0);
    }
    Ok(CellPmf { probs })
}

/// Integrates the joint density over each cell rectangle (truncated to
/// `[0, 60]` per axis) with an `n_grid × n_grid` midpoint rule and returns the
/// largest absolute discrepancy from [`cell_pmf`]. Two sensors only.
pub fn cell_region_volume_check(
    theta: &ParameterVector,
    bank: &QuantizerBank,
    spec: &ModelSpec,
    n_grid: usize,
) -> Result<f64> {
    cell_region_volume_check_on(theta, bank, spec, n_grid, VALIDATION_DOMAIN_UPPER)
}

pub fn cell_region_volume_check_on(
    theta: &ParameterVector,
    bank: &QuantizerBank,
    spec: &ModelSpec,
    n_grid: usize,
    upper: f64,
) -> Result<f64> {
    if bank.len() != 2 {
        return Err(Error::InvalidParameter("volume check is defined for two sensors".into()));
    }
    if n_grid == 0 {
        return Err(Error::InvalidParameter("n_grid must be positive".into()));
    }
    let model = spec.at(theta)?;
    let pmf = cell_pmf_for(&model, bank)?;
    let t = bank.thresholds();
    let interval = |bit: u8, t: f64| if bit == 0 { (0.0, t.clamp(0.0, upper)) } else { (t.clamp(0.0, upper), upper) };
    let mut worst = 0.0_f64;
    for index in 0..4 {
        let word = CellWord { index, len: 2 };
        let (a0, a1) = interval(word.bit(0), t[0]);
        let (b0, b1) = interval(word.bit(1), t[1]);
        let (ha, hb) = ((a1 - a0) / n_grid as f64, (b1 - b0) / n_grid as f64);
        let mut mass = 0.0;
        if ha > 0.0 && hb > 0.0 {
            for i in 0..n_grid {
                let ya = a0 + (i as f64 + 0.5) * ha;
                for j in 0..n_grid {
                    let yb = b0 + (j as f64 + 0.5) * hb;
                    mass += model.pdf(&[ya, yb]);
                }
            }
            mass *= ha * hb;
        }
        worst = worst.max((mass - pmf.probs[index]).abs());
    }
    Ok(worst)
}
