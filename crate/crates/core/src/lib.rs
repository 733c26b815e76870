//! Maximum-likelihood estimation of joint-distribution parameters from
//! dependent, one-bit quantized multi-sensor data.
//!
//! The crate covers the Gamma–Clayton sensor model ([`models`]), threshold
//! quantizers and their exact cell law ([`quantize`]), the quantized and
//! raw-data likelihoods with a multi-start simplex MLE ([`estimate`]), Fisher
//! information and Cramér–Rao predictions ([`fisher`]), seeded Monte Carlo
//! studies ([`simulate`]) and the config-driven command line ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod models;
pub mod quad;
pub mod quantize;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use estimate::{
    accumulate_counts, fit_mle, quantized_loglik, raw_loglik, BankCounts, CellCounts, MleResult, Objective,
    OptimizerOptions, QuantizedDataset, SampleSet,
};
pub use fisher::{combine_fims, fim_quantized, predict_asymptotic_mse, CrlbPrediction, FisherMatrix, WeightVector};
pub use models::{joint_logpdf, ClaytonCopula, GammaMarginal, JointModel, ModelSpec, ParameterVector};
pub use quantize::{cell_pmf, cell_region_volume_check, quantize_point, CellPmf, CellWord, QuantizerBank};
