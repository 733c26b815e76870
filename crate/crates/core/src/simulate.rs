//! Sampling from the joint model and seeded Monte Carlo studies of the
//! estimators.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    accumulate_counts, fit_mle, BankCounts, Objective, OptimizerOptions, QuantizedDataset, SampleSet,
};
use crate::fisher::{combine_fims, fim_quantized, WeightVector};
use crate::models::{JointModel, ModelSpec, ParameterVector, MAX_DIM};
use crate::quantize::{quantize_point, QuantizerBank};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub theta_star: ParameterVector,
    pub spec: ModelSpec,
    pub seed: u64,
}

/// Generator for one `(seed, stream)` pair. Trials key the seed by
/// `base_seed ^ run_index` and the stream by sample size, so no trial's draws
/// depend on which worker runs it or on what else is scheduled.
pub fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` i.i.d. points: copula uniforms by conditional inversion, then
/// marginal quantiles.
pub fn sample_joint_with<R: Rng + ?Sized>(n: usize, model: &JointModel, rng: &mut R) -> SampleSet {
    let l = model.n_sensors();
    let mut w = [0.0_f64; MAX_DIM];
    let mut u = [0.0_f64; MAX_DIM];
    let mut data = Vec::with_capacity(n * l);
    for _ in 0..n {
        for wi in w[..l].iter_mut() {
            *wi = rng.sample(Open01);
        }
        model.copula().conditional_inversion(&w[..l], &mut u[..l]);
        for (m, &ui) in model.marginals().iter().zip(&u[..l]) {
            // u can round to exactly 0 or 1 under extreme dependence
            let ui = ui.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            data.push(m.quantile_unchecked(ui));
        }
    }
    SampleSet::new(l, data).expect("rows have the model dimension")
}

pub fn sample_joint(n: usize, cfg: &SamplerConfig) -> Result<SampleSet> {
    let model = cfg.spec.at(&cfg.theta_star)?;
    Ok(sample_joint_with(n, &model, &mut keyed_rng(cfg.seed, 0)))
}

/// An estimator compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Summed likelihood over all banks, the sample budget split between them.
    Robust,
    /// All samples through bank `j` (0-based).
    Single(usize),
    /// Unquantized samples.
    Raw,
    /// Unquantized samples, only the first `N / divisor` of them.
    RawSubset(usize),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Robust => write!(f, "robust"),
            Estimator::Single(j) => write!(f, "single:{}", j + 1),
            Estimator::Raw => write!(f, "raw"),
            Estimator::RawSubset(d) => write!(f, "raw_subset:{d}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown estimator '{s}'"));
        match s.split_once(':') {
            None => match s {
                "robust" => Ok(Estimator::Robust),
                "raw" => Ok(Estimator::Raw),
                _ => Err(bad()),
            },
            Some(("single", j)) => {
                let j: usize = j.parse().map_err(|_| bad())?;
                if j == 0 {
                    return Err(Error::Config("bank indices are 1-based".into()));
                }
                Ok(Estimator::Single(j - 1))
            }
            Some(("raw_subset", d)) => {
                let d: usize = d.parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(Error::Config("raw_subset divisor must be positive".into()));
                }
                Ok(Estimator::RawSubset(d))
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub spec: ModelSpec,
    pub theta_star: ParameterVector,
    pub banks: Vec<QuantizerBank>,
    pub n_grid: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub mc_runs: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerOptions,
    /// Theory-only override of the bank weights; otherwise `N_j / N`.
    pub weights: Option<WeightVector>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 {
            return Err(Error::Config("mc_runs must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("sample-size grid is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.theta_star.n_sensors() != self.spec.n_sensors() {
            return Err(Error::Config("true parameter does not match the model's sensor count".into()));
        }
        let needs_banks = self.estimators.iter().any(|e| matches!(e, Estimator::Robust | Estimator::Single(_)));
        if needs_banks && self.banks.is_empty() {
            return Err(Error::Config("quantized estimators need at least one bank".into()));
        }
        for b in &self.banks {
            if b.len() != self.spec.n_sensors() {
                return Err(Error::Config(format!("bank {} does not match the sensor count", b.label())));
            }
        }
        for e in &self.estimators {
            if let Estimator::Single(j) = e {
                if *j >= self.banks.len() {
                    return Err(Error::Config(format!("estimator {e} refers to a missing bank")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.banks.len() {
                return Err(Error::Config("one weight per bank is required".into()));
            }
        }
        self.optimizer.validate()
    }

    /// Per-bank sample sizes for a robust fit with budget `n`: equal shares,
    /// the remainder going to the lowest-index banks.
    pub fn split(&self, n: usize) -> Vec<usize> {
        split_budget(n, self.banks.len())
    }
}

pub fn split_budget(n: usize, j: usize) -> Vec<usize> {
    if j == 0 {
        return vec![];
    }
    (0..j).map(|i| n / j + usize::from(i < n % j)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: Estimator,
    /// Raw points consumed (before quantization).
    pub n_used: usize,
    pub theta_hat: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub at_boundary: bool,
    pub error: Option<String>,
}

impl EstimateRecord {
    pub fn is_usable(&self) -> bool {
        self.converged && !self.at_boundary && self.theta_hat.is_some() && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub run_index: u64,
    pub estimates: Vec<EstimateRecord>,
}

fn quantize_all(samples: &SampleSet, bank: &QuantizerBank) -> Result<QuantizedDataset> {
    let counts = accumulate_counts(bank.len(), samples.points().map(|y| quantize_point(y, bank)))?;
    QuantizedDataset::single(bank.clone(), counts)
}

/// Fits every estimator of the plan on one fresh draw of `n` points.
pub fn run_single_trial(plan: &ExperimentPlan, n: usize, run_index: u64) -> Result<TrialRecord> {
    let model = plan.spec.at(&plan.theta_star)?;
    let seed = plan.base_seed ^ run_index;
    let samples = sample_joint_with(n, &model, &mut keyed_rng(seed, n as u64));
    let opts = OptimizerOptions { seed, ..plan.optimizer };

    let mut estimates = Vec::with_capacity(plan.estimators.len());
    for &est in &plan.estimators {
        let fitted = match est {
            Estimator::Robust => {
                let mut groups = Vec::with_capacity(plan.banks.len());
                let mut start = 0;
                for (bank, size) in plan.banks.iter().zip(plan.split(n)) {
                    let chunk = samples.slice(start, start + size);
                    start += size;
                    let counts = accumulate_counts(bank.len(), chunk.points().map(|y| quantize_point(y, bank)))?;
                    groups.push(BankCounts { bank: bank.clone(), counts });
                }
                QuantizedDataset::new(groups)
                    .and_then(|d| fit_mle(Objective::Quantized(&d), &plan.spec, &opts))
                    .map(|r| (r, n))
            }
            Estimator::Single(j) => quantize_all(&samples, &plan.banks[j])
                .and_then(|d| fit_mle(Objective::Quantized(&d), &plan.spec, &opts))
                .map(|r| (r, n)),
            Estimator::Raw => fit_mle(Objective::Raw(&samples), &plan.spec, &opts).map(|r| (r, n)),
            Estimator::RawSubset(d) => {
                let sub = samples.head(n / d);
                fit_mle(Objective::Raw(&sub), &plan.spec, &opts).map(|r| (r, sub.len()))
            }
        };
        estimates.push(match fitted {
            Ok((r, used)) => EstimateRecord {
                estimator: est,
                n_used: used,
                theta_hat: Some(r.theta_hat.as_slice().to_vec()),
                loglik: Some(r.loglik),
                converged: r.converged,
                at_boundary: r.at_boundary,
                error: None,
            },
            Err(e) => EstimateRecord {
                estimator: est,
                n_used: 0,
                theta_hat: None,
                loglik: None,
                converged: false,
                at_boundary: false,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(TrialRecord { n, run_index, estimates })
}

/// All trials of the plan ordered by (grid position, run index). `jobs`
/// sets the worker count; it never changes the records.
pub fn run_trials(plan: &ExperimentPlan, jobs: Option<usize>) -> Result<Vec<TrialRecord>> {
    plan.validate()?;
    let tasks: Vec<(usize, u64)> =
        plan.n_grid.iter().flat_map(|&n| (0..plan.mc_runs as u64).map(move |r| (n, r))).collect();
    let work = || tasks.par_iter().map(|&(n, r)| run_single_trial(plan, n, r)).collect::<Result<Vec<_>>>();
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub estimator: Estimator,
    pub n: usize,
    pub component: String,
    pub mse: Option<f64>,
    /// Standard error of the MSE over included runs.
    pub mc_se: Option<f64>,
    pub included: usize,
    /// Runs dropped for non-convergence, a boundary estimate, or a fit error.
    pub excluded: usize,
    pub theory_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
}

pub const CSV_HEADER: [&str; 7] = ["estimator", "N", "component", "mse", "mc_se", "excluded", "theory_mse"];

impl MseReport {
    pub fn get(&self, estimator: Estimator, n: usize, component: usize) -> Option<&MseRow> {
        let name = component_name(component);
        self.rows.iter().find(|r| r.estimator == estimator && r.n == n && r.component == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.estimator.to_string(),
                r.n.to_string(),
                r.component.clone(),
                opt(r.mse),
                opt(r.mc_se),
                r.excluded.to_string(),
                opt(r.theory_mse),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn component_name(i: usize) -> String {
    format!("theta{i}")
}

/// Theoretical per-component variance of `est` at budget `n`, where defined.
pub fn theory_mse(plan: &ExperimentPlan, est: Estimator, n: usize) -> Option<Vec<f64>> {
    if n == 0 {
        return None;
    }
    let (fims, w) = match est {
        Estimator::Robust => {
            let fims = plan
                .banks
                .iter()
                .map(|b| fim_quantized(&plan.theta_star, b, &plan.spec))
                .collect::<Result<Vec<_>>>()
                .ok()?;
            let w = match &plan.weights {
                Some(w) => w.clone(),
                None => {
                    let totals: Vec<u64> = plan.split(n).into_iter().map(|s| s as u64).collect();
                    WeightVector::from_totals(&totals).ok()?
                }
            };
            (fims, w)
        }
        Estimator::Single(j) => {
            (vec![fim_quantized(&plan.theta_star, &plan.banks[j], &plan.spec).ok()?], WeightVector::equal(1).ok()?)
        }
        Estimator::Raw | Estimator::RawSubset(_) => return None,
    };
    let crlb = combine_fims(&fims, &w).ok()?;
    Some(crlb.variances().into_iter().map(|v| v / n as f64).collect())
}

/// Per-(estimator, N, component) MSE over usable runs, summed in run order.
pub fn aggregate(plan: &ExperimentPlan, records: &[TrialRecord]) -> MseReport {
    let truth = plan.theta_star.as_slice();
    let mut rows = Vec::new();
    for (ei, &est) in plan.estimators.iter().enumerate() {
        for &n in &plan.n_grid {
            let mut trials: Vec<&TrialRecord> = records.iter().filter(|t| t.n == n).collect();
            trials.sort_by_key(|t| t.run_index);
            let usable: Vec<&Vec<f64>> = trials
                .iter()
                .filter_map(|t| t.estimates.get(ei))
                .filter(|e| e.is_usable())
                .filter_map(|e| e.theta_hat.as_ref())
                .collect();
            let excluded = trials.len() - usable.len();
            let theory = theory_mse(plan, est, n);
            for (c, &t) in truth.iter().enumerate() {
                let sq: Vec<f64> = usable.iter().map(|th| (th[c] - t).powi(2)).collect();
                let m = sq.len();
                let mse = (m > 0).then(|| sq.iter().sum::<f64>() / m as f64);
                let mc_se = match (mse, m) {
                    (Some(mu), m) if m > 1 => {
                        let var = sq.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (m - 1) as f64;
                        Some((var / m as f64).sqrt())
                    }
                    _ => None,
                };
                rows.push(MseRow {
                    estimator: est,
                    n,
                    component: component_name(c),
                    mse,
                    mc_se,
                    included: m,
                    excluded,
                    theory_mse: theory.as_ref().map(|v| v[c]),
                });
            }
        }
    }
    MseReport { rows }
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<MseReport> {
    run_experiment_with_jobs(plan, None)
}

pub fn run_experiment_with_jobs(plan: &ExperimentPlan, jobs: Option<usize>) -> Result<MseReport> {
    let records = run_trials(plan, jobs)?;
    Ok(aggregate(plan, &records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_star() -> ParameterVector {
        ParameterVector::new(1.0759, &[4.0, 5.0]).unwrap()
    }

    fn plan(estimators: Vec<Estimator>) -> ExperimentPlan {
        ExperimentPlan {
            spec: ModelSpec::two_sensor_default(),
            theta_star: theta_star(),
            banks: [25.0, 20.0, 15.0, 10.0].iter().map(|&t| QuantizerBank::new(&[t, t]).unwrap()).collect(),
            n_grid: vec![200],
            estimators,
            mc_runs: 2,
            base_seed: 11,
            optimizer: OptimizerOptions::default(),
            weights: None,
        }
    }

    #[test]
    fn estimator_names_round_trip() {
        for s in ["robust", "single:3", "raw", "raw_subset:5"] {
            assert_eq!(s.parse::<Estimator>().unwrap().to_string(), s);
        }
        assert!("single:0".parse::<Estimator>().is_err());
        assert!("bogus".parse::<Estimator>().is_err());
        assert!("raw_subset:0".parse::<Estimator>().is_err());
    }

    #[test]
    fn split_rule() {
        assert_eq!(split_budget(40, 4), vec![10; 4]);
        assert_eq!(split_budget(42, 4), vec![11, 11, 10, 10]);
        assert_eq!(split_budget(3, 4), vec![1, 1, 1, 0]);
    }

    #[test]
    fn sampler_is_deterministic() {
        let cfg = SamplerConfig { theta_star: theta_star(), spec: ModelSpec::two_sensor_default(), seed: 3 };
        assert_eq!(sample_joint(50, &cfg).unwrap(), sample_joint(50, &cfg).unwrap());
        let other = SamplerConfig { seed: 4, ..cfg.clone() };
        assert_ne!(sample_joint(50, &cfg).unwrap(), sample_joint(50, &other).unwrap());
        assert!(sample_joint(0, &cfg).unwrap().is_empty());
    }

    #[test]
    fn trial_is_deterministic_and_subset_sized() {
        let p = plan(vec![Estimator::Robust, Estimator::RawSubset(5)]);
        let a = run_single_trial(&p, 200, 1).unwrap();
        let b = run_single_trial(&p, 200, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimates[1].n_used, 40);
    }

    #[test]
    fn single_bank_trial_matches_direct_fit() {
        let mut p = plan(vec![Estimator::Single(0)]);
        p.banks.truncate(1);
        let rec = run_single_trial(&p, 200, 5).unwrap();
        let seed = p.base_seed ^ 5;
        let samples = sample_joint_with(200, &p.spec.at(&p.theta_star).unwrap(), &mut keyed_rng(seed, 200));
        let data = quantize_all(&samples, &p.banks[0]).unwrap();
        let fit = fit_mle(Objective::Quantized(&data), &p.spec, &OptimizerOptions { seed, ..p.optimizer }).unwrap();
        assert_eq!(rec.estimates[0].theta_hat.as_deref(), Some(fit.theta_hat.as_slice()));
    }

    #[test]
    fn one_run_mse_is_the_squared_error() {
        let mut p = plan(vec![Estimator::Raw]);
        p.mc_runs = 1;
        let recs = run_trials(&p, Some(1)).unwrap();
        let report = aggregate(&p, &recs);
        let th = recs[0].estimates[0].theta_hat.clone().unwrap();
        for (c, t) in th.iter().enumerate() {
            let row = report.get(Estimator::Raw, 200, c).unwrap();
            assert_eq!(row.mse, Some((t - theta_star().as_slice()[c]).powi(2)));
            assert_eq!(row.theory_mse, None);
        }
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut p = plan(vec![Estimator::Single(7)]);
        assert!(p.validate().is_err());
        p.estimators = vec![Estimator::Robust];
        p.mc_runs = 0;
        assert!(p.validate().is_err());
    }
}
