//! Experiment configuration files and result bundles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::OptimizerOptions;
use crate::fisher::{combine_fims, fim_quantized, WeightVector};
use crate::models::{ClaytonCopula, ModelSpec, ParameterVector};
use crate::quantize::QuantizerBank;
use crate::simulate::{Estimator, ExperimentPlan, MseReport};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_DIVISOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Fixed Gamma scale of each sensor.
    pub scales: Vec<f64>,
    /// True Gamma shapes (simulation and CRLB only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    /// Alternative to `theta0`: the copula is chosen to match this rank correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanksConfig {
    pub thresholds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub n_grid: Vec<usize>,
    pub mc_runs: usize,
    /// `robust`, `single` (every bank), `single:<j>`, `raw`, `raw_subset`
    /// or `raw_subset:<d>`.
    pub estimators: Vec<String>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), name: default_name(), formats: default_formats() }
    }
}

fn default_dir() -> String {
    "results".into()
}
fn default_name() -> String {
    "experiment".into()
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

/// Scalar informations combined with (optional) weights; used for the
/// outlier-robustness arithmetic without any model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarConfig {
    pub informations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banks: Option<BanksConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| Error::Config("missing [model] section".into()))
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.model()?.scales.clone())
    }

    pub fn banks(&self) -> Result<Vec<QuantizerBank>> {
        match &self.banks {
            None => Ok(vec![]),
            Some(b) => b.thresholds.iter().map(|t| QuantizerBank::new(t)).collect(),
        }
    }

    /// The true parameter, resolving a Spearman's-rho specification to the
    /// Clayton parameter.
    pub fn theta_star(&self) -> Result<ParameterVector> {
        let m = self.model()?;
        let shapes = m.shapes.as_ref().ok_or_else(|| Error::Config("[model] needs `shapes`".into()))?;
        let theta0 = match (m.theta0, m.spearman_rho) {
            (Some(t), None) => t,
            (None, Some(rho)) => ClaytonCopula::from_spearman(rho)?.theta0(),
            (Some(_), Some(_)) => return Err(Error::Config("give either `theta0` or `spearman_rho`, not both".into())),
            (None, None) => return Err(Error::Config("[model] needs `theta0` or `spearman_rho`".into())),
        };
        ParameterVector::new(theta0, shapes)
    }

    pub fn weights(&self) -> Result<Option<WeightVector>> {
        match self.plan.as_ref().and_then(|p| p.weights.clone()) {
            None => Ok(None),
            Some(w) => Ok(Some(WeightVector::new(w)?)),
        }
    }

    pub fn estimators(&self, n_banks: usize) -> Result<Vec<Estimator>> {
        let plan = self.plan.as_ref().ok_or_else(|| Error::Config("missing [plan] section".into()))?;
        let divisor = plan.divisor.unwrap_or(DEFAULT_DIVISOR);
        let mut out = Vec::new();
        for name in &plan.estimators {
            match name.as_str() {
                "single" => out.extend((0..n_banks).map(Estimator::Single)),
                "raw_subset" => out.push(Estimator::RawSubset(divisor)),
                other => out.push(other.parse()?),
            }
        }
        Ok(out)
    }

    pub fn to_plan(&self) -> Result<ExperimentPlan> {
        let p = self.plan.as_ref().ok_or_else(|| Error::Config("missing [plan] section".into()))?;
        let banks = self.banks()?;
        let plan = ExperimentPlan {
            spec: self.spec()?,
            theta_star: self.theta_star()?,
            estimators: self.estimators(banks.len())?,
            banks,
            n_grid: p.n_grid.clone(),
            mc_runs: p.mc_runs,
            base_seed: p.base_seed,
            optimizer: self.optimizer,
            weights: self.weights()?,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCrlb {
    pub estimator: Estimator,
    /// Per-sample asymptotic covariance; divide by N for a given budget.
    pub covariance: Vec<Vec<f64>>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub theta_star: Vec<f64>,
    pub report: MseReport,
    pub crlb: Vec<EstimatorCrlb>,
}

impl ResultBundle {
    pub fn new(config: ExperimentConfig, plan: &ExperimentPlan, report: MseReport) -> Self {
        ResultBundle {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            theta_star: plan.theta_star.as_slice().to_vec(),
            report,
            crlb: estimator_crlbs(plan),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

/// Per-sample covariance predictions for the quantized estimators of a plan.
/// Robust weights follow the plan override or equal shares.
pub fn estimator_crlbs(plan: &ExperimentPlan) -> Vec<EstimatorCrlb> {
    let fims: Vec<_> = plan.banks.iter().map(|b| fim_quantized(&plan.theta_star, b, &plan.spec).ok()).collect();
    let mut out = Vec::new();
    for &est in &plan.estimators {
        let pred = match est {
            Estimator::Robust => {
                let Some(all) = fims.iter().cloned().collect::<Option<Vec<_>>>() else { continue };
                let w = match &plan.weights {
                    Some(w) => w.clone(),
                    None => match WeightVector::equal(all.len()) {
                        Ok(w) => w,
                        Err(_) => continue,
                    },
                };
                combine_fims(&all, &w)
            }
            Estimator::Single(j) => match &fims[j] {
                Some(f) => combine_fims(std::slice::from_ref(f), &WeightVector::equal(1).expect("one weight")),
                None => continue,
            },
            Estimator::Raw | Estimator::RawSubset(_) => continue,
        };
        if let Ok(p) = pred {
            out.push(EstimatorCrlb {
                estimator: est,
                covariance: p.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
                condition_number: p.condition_number,
            });
        }
    }
    out
}
