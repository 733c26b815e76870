//! Cell counting, quantized and raw-data log-likelihoods, and the
//! multi-start simplex MLE.

pub mod nelder_mead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{JointModel, ModelSpec, ParameterVector};
use crate::quantize::{cell_pmf_for, CellWord, QuantizerBank};

use nelder_mead::{minimize, SimplexOptions};

/// RNG stream reserved for restart perturbations.
const RESTART_STREAM: u64 = u64::MAX;
/// Restart values closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;
/// Distance from the log-space box within which a fit is flagged as boundary.
const BOUNDARY_MARGIN: f64 = 1e-3;

/// Occurrences of each of the `2^L` cell words of one bank.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCounts {
    counts: Vec<u64>,
    total: u64,
}

impl CellCounts {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 || !counts.len().is_power_of_two() {
            return Err(Error::Input(format!("need 2^L cell counts, got {}", counts.len())));
        }
        let total = counts.iter().sum();
        Ok(CellCounts { counts, total })
    }

    pub fn zeros(n_sensors: usize) -> Self {
        CellCounts { counts: vec![0; 1 << n_sensors], total: 0 }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_sensors(&self) -> usize {
        self.counts.len().trailing_zeros() as usize
    }

    pub fn add(&mut self, word: CellWord) {
        self.counts[word.index()] += 1;
        self.total += 1;
    }

    pub fn get(&self, word: CellWord) -> u64 {
        self.counts[word.index()]
    }
}

/// Tallies cell words into counts.
pub fn accumulate_counts<I: IntoIterator<Item = CellWord>>(n_sensors: usize, words: I) -> Result<CellCounts> {
    let mut counts = CellCounts::zeros(n_sensors);
    for w in words {
        if w.len() != n_sensors {
            return Err(Error::Input(format!("cell word has {} bits, expected {n_sensors}", w.len())));
        }
        counts.add(w);
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankCounts {
    pub bank: QuantizerBank,
    pub counts: CellCounts,
}

/// Quantized samples from one or more banks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedDataset {
    groups: Vec<BankCounts>,
}

impl QuantizedDataset {
    pub fn new(groups: Vec<BankCounts>) -> Result<Self> {
        let first = groups.first().ok_or_else(|| Error::EmptyData("dataset has no banks".into()))?;
        let l = first.bank.len();
        for g in &groups {
            if g.bank.len() != l {
                return Err(Error::Input("all banks must quantize the same number of sensors".into()));
            }
            if g.counts.counts().len() != g.bank.n_cells() {
                return Err(Error::Input(format!(
                    "bank {} has {} cells but {} counts",
                    g.bank.label(),
                    g.bank.n_cells(),
                    g.counts.counts().len()
                )));
            }
        }
        Ok(QuantizedDataset { groups })
    }

    pub fn single(bank: QuantizerBank, counts: CellCounts) -> Result<Self> {
        Self::new(vec![BankCounts { bank, counts }])
    }

    pub fn groups(&self) -> &[BankCounts] {
        &self.groups
    }

    pub fn n_sensors(&self) -> usize {
        self.groups[0].bank.len()
    }

    pub fn totals(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.counts.total()).collect()
    }

    pub fn total(&self) -> u64 {
        self.groups.iter().map(|g| g.counts.total()).sum()
    }
}

/// Raw observation points stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Input(format!("{} values do not form points of dimension {dim}", data.len())));
        }
        Ok(SampleSet { dim, data })
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::Input(format!("point has {} coordinates, expected {dim}", p.len())));
            }
            data.extend_from_slice(p);
        }
        Ok(SampleSet { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The first `n` points.
    pub fn head(&self, n: usize) -> SampleSet {
        let n = n.min(self.len());
        SampleSet { dim: self.dim, data: self.data[..n * self.dim].to_vec() }
    }

    pub fn slice(&self, start: usize, end: usize) -> SampleSet {
        SampleSet { dim: self.dim, data: self.data[start * self.dim..end * self.dim].to_vec() }
    }

    /// Points in lexicographic order, so sums over them do not depend on the
    /// order they were supplied in.
    pub fn sorted(&self) -> SampleSet {
        let mut pts: Vec<&[f64]> = self.points().collect();
        pts.sort_by(|a, b| {
            a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        SampleSet { dim: self.dim, data: pts.concat() }
    }
}

/// `Σ_j Σ_cells n · ln f_U(cell | θ)` for a fixed model. Per-bank terms are
/// summed in ascending order so the result is independent of bank order.
pub(crate) fn quantized_loglik_model(model: &JointModel, data: &QuantizedDataset) -> f64 {
    let mut terms = Vec::with_capacity(data.groups.len());
    for g in &data.groups {
        let pmf = match cell_pmf_for(model, &g.bank) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut acc = 0.0;
        for (&n, &p) in g.counts.counts().iter().zip(&pmf.probs) {
            if n == 0 {
                continue;
            }
            if !(p > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += n as f64 * p.ln();
        }
        terms.push(acc);
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Log-likelihood of quantized data. Numerical infeasibility (an observed
/// cell with zero probability) is reported as `-inf`.
pub fn quantized_loglik(theta: &ParameterVector, data: &QuantizedDataset, spec: &ModelSpec) -> Result<f64> {
    check_sensors(spec, data.n_sensors())?;
    Ok(quantized_loglik_model(&spec.at(theta)?, data))
}

pub(crate) fn raw_loglik_model(model: &JointModel, samples: &SampleSet) -> f64 {
    let mut acc = 0.0;
    for y in samples.points() {
        let v = model.ln_pdf(y);
        if v == f64::NEG_INFINITY {
            return v;
        }
        acc += v;
    }
    acc
}

/// `Σ_n ln p(y_n | θ)`; `-inf` if any point is outside the support.
pub fn raw_loglik(theta: &ParameterVector, samples: &SampleSet, spec: &ModelSpec) -> Result<f64> {
    check_sensors(spec, samples.dim())?;
    Ok(raw_loglik_model(&spec.at(theta)?, samples))
}

fn check_sensors(spec: &ModelSpec, n: usize) -> Result<()> {
    if spec.n_sensors() != n {
        return Err(Error::Input(format!("data has {n} sensors, model has {}", spec.n_sensors())));
    }
    Ok(())
}

/// What [`fit_mle`] maximizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Quantized(&'a QuantizedDataset),
    Raw(&'a SampleSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Simplex diameter (log-parameter space) at which a start is converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Total number of starts, including the unperturbed one.
    pub restarts: usize,
    /// Seed for the restart perturbations.
    pub seed: u64,
    pub initial_step: f64,
    /// Standard deviation of the log-space restart perturbations.
    pub restart_spread: f64,
    /// Every log-parameter is confined to `[-log_bound, log_bound]`.
    pub log_bound: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            tol: 1e-8,
            max_iter: 2000,
            restarts: 4,
            seed: 0,
            initial_step: 0.5,
            restart_spread: 0.5,
            log_bound: 10.0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.restarts == 0 {
            return Err(Error::Config("optimizer needs tol > 0, max_iter >= 1 and restarts >= 1".into()));
        }
        if !(self.initial_step > 0.0) || !(self.restart_spread >= 0.0) || !(self.log_bound > 0.0) {
            return Err(Error::Config("optimizer step, spread and bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: ParameterVector,
    pub loglik: f64,
    /// The winning start met the simplex-diameter criterion.
    pub converged: bool,
    /// Simplex iterations of the winning start.
    pub iterations: usize,
    pub n_restarts_used: usize,
    /// The estimate sits on the log-parameter box, i.e. the likelihood has no
    /// interior maximum for this data.
    pub at_boundary: bool,
}

impl MleResult {
    /// Converged to an interior point.
    pub fn is_usable(&self) -> bool {
        self.converged && !self.at_boundary && self.loglik.is_finite()
    }
}

/// Starting points in log-parameter space: the origin (all parameters 1),
/// then Gaussian perturbations of it.
pub fn start_points(k: usize, opts: &OptimizerOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(RESTART_STREAM);
    let mut starts = vec![vec![0.0; k]];
    for _ in 1..opts.restarts {
        starts.push(
            (0..k)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    opts.restart_spread * z
                })
                .collect(),
        );
    }
    starts
}

/// Maximizes the chosen log-likelihood by multi-start simplex search over
/// `φ = ln θ`.
pub fn fit_mle(objective: Objective<'_>, spec: &ModelSpec, opts: &OptimizerOptions) -> Result<MleResult> {
    opts.validate()?;
    let sorted;
    let objective = match objective {
        Objective::Quantized(d) => {
            check_sensors(spec, d.n_sensors())?;
            if d.total() == 0 {
                return Err(Error::EmptyData("quantized dataset has no observations".into()));
            }
            objective
        }
        Objective::Raw(s) => {
            check_sensors(spec, s.dim())?;
            if s.is_empty() {
                return Err(Error::EmptyData("no raw samples".into()));
            }
            sorted = s.sorted();
            Objective::Raw(&sorted)
        }
    };

    let k = spec.n_params();
    let bound = opts.log_bound;
    let loglik_at = |phi: &[f64]| -> f64 {
        if phi.iter().any(|p| p.abs() > bound) {
            return f64::NEG_INFINITY;
        }
        let Ok(theta) = ParameterVector::from_log(phi) else { return f64::NEG_INFINITY };
        let Ok(model) = spec.at(&theta) else { return f64::NEG_INFINITY };
        match objective {
            Objective::Quantized(d) => quantized_loglik_model(&model, d),
            Objective::Raw(s) => raw_loglik_model(&model, s),
        }
    };
    let simplex = SimplexOptions { tol: opts.tol, max_iter: opts.max_iter, initial_step: opts.initial_step };

    let starts = start_points(k, opts);
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    for x0 in &starts {
        let r = minimize(|phi| -loglik_at(phi), x0, &simplex);
        let value = -r.value;
        let better = match &best {
            None => true,
            Some((_, b, _, _)) => value > *b + TIE_TOLERANCE || (b.is_nan() && !value.is_nan()),
        };
        if better {
            best = Some((r.x, value, r.iterations, r.converged));
        }
    }
    let (phi, loglik, iterations, converged) = best.expect("at least one start");
    let at_boundary = phi.iter().any(|p| p.abs() >= bound - BOUNDARY_MARGIN);
    let theta_hat = ParameterVector::from_log(&phi)?;
    Ok(MleResult { theta_hat, loglik, converged, iterations, n_restarts_used: starts.len(), at_boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::cell_pmf;

    fn bank(t: &[f64]) -> QuantizerBank {
        QuantizerBank::new(t).unwrap()
    }

    fn theta_star() -> ParameterVector {
        ParameterVector::new(1.0759, &[4.0, 5.0]).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let empty = accumulate_counts(2, std::iter::empty()).unwrap();
        assert_eq!(empty.counts(), &[0, 0, 0, 0]);
        assert_eq!(empty.total(), 0);
        let words = [[0, 0], [1, 1], [1, 1]].map(|b| CellWord::from_bits(&b).unwrap());
        let c = accumulate_counts(2, words).unwrap();
        assert_eq!(c.counts(), &[1, 0, 0, 2]);
        assert_eq!(c.total(), 3);
        assert!(accumulate_counts(3, words).is_err());
    }

    #[test]
    fn loglik_of_uniform_cells() {
        let spec = ModelSpec::two_sensor_default();
        let m1 = crate::models::GammaMarginal::new(4.0, 4.0).unwrap().quantile(0.5).unwrap();
        let m2 = crate::models::GammaMarginal::new(5.0, 4.0).unwrap().quantile(0.5).unwrap();
        let theta = ParameterVector::new(1e-9, &[4.0, 5.0]).unwrap();
        let counts = CellCounts::from_counts(vec![1, 1, 1, 1]).unwrap();
        let data = QuantizedDataset::single(bank(&[m1, m2]), counts.clone()).unwrap();
        let ll = quantized_loglik(&theta, &data, &spec).unwrap();
        assert!((ll - 4.0 * 0.25f64.ln()).abs() < 1e-8, "{ll}");

        let twice = QuantizedDataset::new(vec![
            BankCounts { bank: bank(&[m1, m2]), counts: counts.clone() },
            BankCounts { bank: bank(&[m1, m2]), counts },
        ])
        .unwrap();
        assert_eq!(quantized_loglik(&theta, &twice, &spec).unwrap(), 2.0 * ll);
    }

    #[test]
    fn log_zero_sentinel() {
        // a threshold far below the support makes the bit-0 cells impossible
        let spec = ModelSpec::two_sensor_default();
        let b = bank(&[1e-300, 15.0]);
        let theta = theta_star();
        let ones = QuantizedDataset::single(b.clone(), CellCounts::from_counts(vec![0, 0, 3, 4]).unwrap()).unwrap();
        assert!(quantized_loglik(&theta, &ones, &spec).unwrap().is_finite());
        let zeros = QuantizedDataset::single(b, CellCounts::from_counts(vec![2, 0, 3, 4]).unwrap()).unwrap();
        assert_eq!(quantized_loglik(&theta, &zeros, &spec).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn raw_loglik_additivity() {
        let spec = ModelSpec::two_sensor_default();
        let one = SampleSet::new(2, vec![12.0, 18.0]).unwrap();
        let lp = crate::models::joint_logpdf(&[12.0, 18.0], &theta_star(), &spec).unwrap();
        assert_eq!(raw_loglik(&theta_star(), &one, &spec).unwrap(), lp);
        let s = SampleSet::new(2, vec![12.0, 18.0, 3.0, 30.0]).unwrap();
        let dup = SampleSet::new(2, vec![12.0, 18.0, 3.0, 30.0, 12.0, 18.0, 3.0, 30.0]).unwrap();
        let a = raw_loglik(&theta_star(), &s, &spec).unwrap();
        assert!((raw_loglik(&theta_star(), &dup, &spec).unwrap() - 2.0 * a).abs() < 1e-12 * a.abs());
        let bad = SampleSet::new(2, vec![-1.0, 2.0]).unwrap();
        assert_eq!(raw_loglik(&theta_star(), &bad, &spec).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn idealized_counts_recover_truth() {
        let spec = ModelSpec::two_sensor_default();
        let b = bank(&[15.0, 15.0]);
        let pmf = cell_pmf(&theta_star(), &b, &spec).unwrap();
        let counts = CellCounts::from_counts(pmf.probs.iter().map(|p| (p * 1e6).round() as u64).collect()).unwrap();
        let data = QuantizedDataset::single(b, counts).unwrap();
        let fit = fit_mle(Objective::Quantized(&data), &spec, &OptimizerOptions::default()).unwrap();
        assert!(fit.converged && !fit.at_boundary);
        for (a, b) in fit.theta_hat.as_slice().iter().zip(theta_star().as_slice()) {
            assert!((a - b).abs() < 0.02, "{:?}", fit.theta_hat);
        }
    }

    #[test]
    fn empty_data_is_an_error() {
        let spec = ModelSpec::two_sensor_default();
        let data = QuantizedDataset::single(bank(&[15.0, 15.0]), CellCounts::zeros(2)).unwrap();
        assert!(matches!(
            fit_mle(Objective::Quantized(&data), &spec, &OptimizerOptions::default()),
            Err(Error::EmptyData(_))
        ));
        let none = SampleSet::new(2, vec![]).unwrap();
        assert!(fit_mle(Objective::Raw(&none), &spec, &OptimizerOptions::default()).is_err());
        assert!(QuantizedDataset::new(vec![]).is_err());
    }

    #[test]
    fn unidentified_copula_parameter_does_not_crash() {
        let spec = ModelSpec::new(vec![4.0]).unwrap();
        let data = QuantizedDataset::single(bank(&[12.0]), CellCounts::from_counts(vec![40, 60]).unwrap()).unwrap();
        let fit = fit_mle(Objective::Quantized(&data), &spec, &OptimizerOptions::default()).unwrap();
        assert!(fit.loglik.is_finite());
        // the shape is still identified through the single marginal cell split
        let f = crate::models::GammaMarginal::new(fit.theta_hat.shapes()[0], 4.0).unwrap().cdf(12.0).unwrap();
        assert!((f - 0.4).abs() < 1e-6);
    }

    #[test]
    fn start_points_are_seeded() {
        let opts = OptimizerOptions { seed: 7, ..Default::default() };
        assert_eq!(start_points(3, &opts), start_points(3, &opts));
        assert_eq!(start_points(3, &opts)[0], vec![0.0; 3]);
        assert_eq!(start_points(3, &opts).len(), 4);
        assert_ne!(start_points(3, &opts)[1], start_points(3, &OptimizerOptions { seed: 8, ..opts })[1]);
    }
}
