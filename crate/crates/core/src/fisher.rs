//! Fisher information of quantized samples and the weighted combination that
//! gives the asymptotic covariance of the multi-bank MLE.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParameterVector};
use crate::quantize::{cell_pmf, CellPmf, QuantizerBank};

/// Relative finite-difference step used by [`fim_quantized`].
pub const DEFAULT_REL_STEP: f64 = 1e-5;
/// Cells rarer than this make the information matrix undefined.
pub const MIN_CELL_PROB: f64 = 1e-12;
const SINGULAR_RATIO: f64 = 1e-12;

/// Fisher information of one quantized sample under one bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub theta_at: Option<ParameterVector>,
    pub bank_id: String,
}

impl FisherMatrix {
    /// Wraps a precomputed information matrix (for example a scalar one).
    pub fn from_matrix(
        matrix: DMatrix<f64>,
        theta_at: Option<ParameterVector>,
        bank_id: impl Into<String>,
    ) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter("information matrix must be square and nonempty".into()));
        }
        Ok(FisherMatrix { matrix, theta_at, bank_id: bank_id.into() })
    }

    pub fn scalar(information: f64, bank_id: impl Into<String>) -> Self {
        FisherMatrix { matrix: DMatrix::from_element(1, 1, information), theta_at: None, bank_id: bank_id.into() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Mixing weights `ω_j`, nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    omegas: Vec<f64>,
}

impl WeightVector {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() || omegas.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be a nonempty list of nonnegative numbers".into()));
        }
        let s: f64 = omegas.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights must sum to 1, got {s}")));
        }
        Ok(WeightVector { omegas })
    }

    pub fn equal(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidParameter("need at least one weight".into()));
        }
        Ok(WeightVector { omegas: vec![1.0 / j as f64; j] })
    }

    /// `N_j / N`, the finite-sample surrogate of the limiting proportions.
    pub fn from_totals(totals: &[u64]) -> Result<Self> {
        let n: u64 = totals.iter().sum();
        if n == 0 {
            return Err(Error::EmptyData("all bank totals are zero".into()));
        }
        Ok(WeightVector { omegas: totals.iter().map(|&t| t as f64 / n as f64).collect() })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// Asymptotic covariance `(Σ ω_j I_j)^{-1}` of one combined sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbPrediction {
    pub covariance: DMatrix<f64>,
    pub condition_number: f64,
}

impl CrlbPrediction {
    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}

fn check_probs(pmf: &CellPmf) -> Result<()> {
    if let Some(p) = pmf.probs.iter().find(|&&p| p < MIN_CELL_PROB) {
        return Err(Error::Singular(format!("cell probability {p:e} is below {MIN_CELL_PROB:e}")));
    }
    Ok(())
}

/// Central-difference gradient of every cell probability; row `i` holds
/// `∂f/∂θ_i`.
fn pmf_gradients(
    theta: &ParameterVector,
    bank: &QuantizerBank,
    spec: &ModelSpec,
    rel_step: f64,
    map: impl Fn(f64) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let k = theta.len();
    let mut grads = Vec::with_capacity(k);
    for i in 0..k {
        let ti = theta.as_slice()[i];
        let h = rel_step * ti.abs().max(1.0);
        if ti - h <= 0.0 {
            return Err(Error::Domain(format!("finite-difference step {h} leaves the parameter space at {ti}")));
        }
        let plus = cell_pmf(&theta.with_component(i, ti + h)?, bank, spec)?;
        let minus = cell_pmf(&theta.with_component(i, ti - h)?, bank, spec)?;
        grads.push(plus.probs.iter().zip(&minus.probs).map(|(p, m)| (map(*p) - map(*m)) / (2.0 * h)).collect());
    }
    Ok(grads)
}

fn symmetric(k: usize, entry: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = entry(a, b);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Information of one quantized sample: `Σ_cells ∇f ∇fᵀ / f`, with `∇f` by
/// central differences of the cell probabilities.
pub fn fim_quantized(theta: &ParameterVector, bank: &QuantizerBank, spec: &ModelSpec) -> Result<FisherMatrix> {
    fim_quantized_with_step(theta, bank, spec, DEFAULT_REL_STEP)
}

pub fn fim_quantized_with_step(
    theta: &ParameterVector,
    bank: &QuantizerBank,
    spec: &ModelSpec,
    rel_step: f64,
) -> Result<FisherMatrix> {
    let pmf = cell_pmf(theta, bank, spec)?;
    check_probs(&pmf)?;
    let g = pmf_gradients(theta, bank, spec, rel_step, |p| p)?;
    let m = symmetric(theta.len(), |a, b| pmf.probs.iter().enumerate().map(|(c, p)| g[a][c] * g[b][c] / p).sum());
    Ok(FisherMatrix { matrix: m, theta_at: Some(theta.clone()), bank_id: bank.label() })
}

/// The same information via the score identity `E[∇ln f ∇ln fᵀ]`, with
/// `∇ln f` differenced directly. Used to cross-check [`fim_quantized`].
pub fn fim_quantized_score_form(
    theta: &ParameterVector,
    bank: &QuantizerBank,
    spec: &ModelSpec,
    rel_step: f64,
) -> Result<FisherMatrix> {
    let pmf = cell_pmf(theta, bank, spec)?;
    check_probs(&pmf)?;
    let s = pmf_gradients(theta, bank, spec, rel_step, f64::ln)?;
    let m = symmetric(theta.len(), |a, b| pmf.probs.iter().enumerate().map(|(c, p)| p * s[a][c] * s[b][c]).sum());
    Ok(FisherMatrix { matrix: m, theta_at: Some(theta.clone()), bank_id: bank.label() })
}

/// `(Σ ω_j I_j)^{-1}` via a symmetric eigendecomposition.
///
/// Terms are accumulated in a canonical order (by weight, then entries), so
/// jointly permuting `fims` and `w` gives a bit-identical result.
pub fn combine_fims(fims: &[FisherMatrix], w: &WeightVector) -> Result<CrlbPrediction> {
    if fims.is_empty() || fims.len() != w.len() {
        return Err(Error::InvalidParameter(format!("{} matrices but {} weights", fims.len(), w.len())));
    }
    let k = fims[0].dim();
    if fims.iter().any(|f| f.dim() != k) {
        return Err(Error::InvalidParameter("information matrices differ in size".into()));
    }
    if let Some(t0) = &fims[0].theta_at {
        if fims.iter().any(|f| f.theta_at.as_ref().is_some_and(|t| t != t0)) {
            return Err(Error::InvalidParameter("information matrices evaluated at different parameters".into()));
        }
    }

    let mut order: Vec<usize> = (0..fims.len()).collect();
    order.sort_by(|&a, &b| {
        w.omegas[a].total_cmp(&w.omegas[b]).then_with(|| {
            fims[a]
                .matrix
                .iter()
                .zip(fims[b].matrix.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut total = DMatrix::<f64>::zeros(k, k);
    for &j in &order {
        total += &fims[j].matrix * w.omegas[j];
    }
    let total = (&total + total.transpose()) * 0.5;
    invert_spd(total)
}

fn invert_spd(m: DMatrix<f64>) -> Result<CrlbPrediction> {
    let eig = SymmetricEigen::new(m);
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let largest = abs.iter().copied().fold(0.0, f64::max);
    let smallest = abs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(largest > 0.0) || smallest < SINGULAR_RATIO * largest {
        return Err(Error::Singular(format!("smallest singular value {smallest:e} vs largest {largest:e}")));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let cov = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(CrlbPrediction { covariance: cov, condition_number: largest / smallest })
}

/// Per-component asymptotic variance of the combined MLE from `n` samples:
/// `diag((Σ ω_j I_j)^{-1}) / n`.
pub fn predict_asymptotic_mse(
    theta_star: &ParameterVector,
    banks: &[QuantizerBank],
    w: &WeightVector,
    spec: &ModelSpec,
    n: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let fims = banks.iter().map(|b| fim_quantized(theta_star, b, spec)).collect::<Result<Vec<_>>>()?;
    let crlb = combine_fims(&fims, w)?;
    Ok(crlb.variances().into_iter().map(|v| v / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_star() -> ParameterVector {
        ParameterVector::new(1.0759, &[4.0, 5.0]).unwrap()
    }

    fn standard_banks() -> Vec<QuantizerBank> {
        [25.0, 20.0, 15.0, 10.0].iter().map(|&t| QuantizerBank::new(&[t, t]).unwrap()).collect()
    }

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn scalar_combinations() {
        let with = [3e-3, 3.0, 3.3].map(|i| FisherMatrix::scalar(i, "s"));
        let c = combine_fims(&with, &WeightVector::equal(3).unwrap()).unwrap();
        assert!((c.covariance[(0, 0)] - 0.4760).abs() < 5e-5);
        let without = [3.0, 3.3].map(|i| FisherMatrix::scalar(i, "s"));
        let c = combine_fims(&without, &WeightVector::equal(2).unwrap()).unwrap();
        assert!((c.covariance[(0, 0)] - 0.3175).abs() < 5e-5);
    }

    #[test]
    fn single_bank_combination_is_plain_inverse() {
        let spec = ModelSpec::two_sensor_default();
        let f = fim_quantized(&theta_star(), &standard_banks()[2], &spec).unwrap();
        let c = combine_fims(std::slice::from_ref(&f), &WeightVector::equal(1).unwrap()).unwrap();
        let inv = f.matrix.clone().try_inverse().unwrap();
        assert!(rel_frobenius(&c.covariance, &inv) < 1e-9);
    }

    #[test]
    fn bernoulli_information() {
        // one sensor: p(θ1) = P(Y >= t), I = p'^2 / (p (1 - p))
        let spec = ModelSpec::new(vec![4.0]).unwrap();
        let b = QuantizerBank::new(&[14.0]).unwrap();
        let theta = ParameterVector::new(1.0, &[3.5]).unwrap();
        let f = fim_quantized(&theta, &b, &spec).unwrap();
        let sf = |k: f64| crate::models::GammaMarginal::new(k, 4.0).unwrap().sf(14.0).unwrap();
        let h = 1e-4;
        let dp = (sf(3.5 + h) - sf(3.5 - h)) / (2.0 * h);
        let p = sf(3.5);
        let expect = dp * dp / (p * (1.0 - p));
        assert!((f.matrix[(1, 1)] - expect).abs() < 1e-5 * expect);
        // the copula parameter does not enter a one-sensor law
        assert_eq!(f.matrix[(0, 0)], 0.0);
    }

    #[test]
    fn step_halving_and_identity_agreement() {
        let spec = ModelSpec::two_sensor_default();
        for b in standard_banks() {
            let f = fim_quantized(&theta_star(), &b, &spec).unwrap();
            let half = fim_quantized_with_step(&theta_star(), &b, &spec, DEFAULT_REL_STEP / 2.0).unwrap();
            assert!(rel_frobenius(&half.matrix, &f.matrix) < 1e-4);
            let score = fim_quantized_score_form(&theta_star(), &b, &spec, DEFAULT_REL_STEP).unwrap();
            assert!(rel_frobenius(&score.matrix, &f.matrix) < 1e-4);
            assert!(f.eigenvalues()[0] > 0.0, "bank {} not PD", b.label());
        }
    }

    #[test]
    fn singular_sum_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = FisherMatrix::from_matrix(m, None, "x").unwrap();
        assert!(matches!(combine_fims(&[f], &WeightVector::equal(1).unwrap()), Err(Error::Singular(_))));
    }

    #[test]
    fn tiny_cells_rejected() {
        let spec = ModelSpec::two_sensor_default();
        let b = QuantizerBank::new(&[500.0, 15.0]).unwrap();
        assert!(matches!(fim_quantized(&theta_star(), &b, &spec), Err(Error::Singular(_))));
    }

    #[test]
    fn weights_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        let w = WeightVector::from_totals(&[10, 30]).unwrap();
        assert_eq!(w.omegas(), &[0.25, 0.75]);
        assert!(WeightVector::from_totals(&[0, 0]).is_err());
    }

    #[test]
    fn prediction_scales_inversely_with_n() {
        let spec = ModelSpec::two_sensor_default();
        let w = WeightVector::equal(4).unwrap();
        let a = predict_asymptotic_mse(&theta_star(), &standard_banks(), &w, &spec, 400).unwrap();
        let b = predict_asymptotic_mse(&theta_star(), &standard_banks(), &w, &spec, 800).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x > 0.0 && x.is_finite());
            assert!((x / y - 2.0).abs() < 1e-12);
        }
        let fims: Vec<_> = standard_banks().iter().map(|b| fim_quantized(&theta_star(), b, &spec).unwrap()).collect();
        let c = combine_fims(&fims, &w).unwrap();
        for (x, v) in a.iter().zip(c.variances()) {
            assert!((x - v / 400.0).abs() <= 1e-15 * x.abs());
        }
    }
}
