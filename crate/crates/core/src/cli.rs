//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numerical or I/O failure, 2 malformed input or
//! configuration, 3 fit did not converge (the result is still printed).
//! Every failure writes one `error[<kind>]: <message>` line to stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{ExperimentConfig, ResultBundle};
use crate::error::{Error, Result};
use crate::estimate::{
    accumulate_counts, fit_mle, BankCounts, CellCounts, MleResult, Objective, QuantizedDataset, SampleSet,
};
use crate::fisher::{combine_fims, fim_quantized, FisherMatrix, WeightVector};
use crate::quantize::{CellWord, QuantizerBank};
use crate::simulate::run_experiment_with_jobs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Bundled configurations, by file name.
pub const BUNDLED_CONFIGS: [(&str, &str); 4] = [
    ("mse_grid.toml", include_str!("../configs/mse_grid.toml")),
    ("covariance_law.toml", include_str!("../configs/covariance_law.toml")),
    ("bank_information.toml", include_str!("../configs/bank_information.toml")),
    ("scalar_outlier.toml", include_str!("../configs/scalar_outlier.toml")),
];

#[derive(Debug, Parser)]
#[command(name = "qmle", version, about = "MLE from dependent one-bit quantized sensor data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit parameters to a CSV of quantized words, cell counts or raw points.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Overrides the optimizer seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a Monte Carlo study and write CSV/JSON results.
    Experiment {
        #[arg(long, required_unless_present = "reproduce_paper")]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides `plan.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run every bundled configuration (studies and information tables).
        #[arg(long, conflicts_with = "config")]
        reproduce_paper: bool,
    },
    /// Print per-bank Fisher information and the combined covariance.
    Crlb {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::EmptyData(_) | Error::InvalidParameter(_) | Error::Domain(_) => {
            EXIT_MALFORMED
        }
        _ => EXIT_FAILURE,
    }
}

/// Runs a parsed command, writing results to `out` and diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Fit { config, data, seed } => cmd_fit(&config, &data, seed, out),
        Command::Experiment { config, out_dir, seed, jobs, reproduce_paper } => {
            if reproduce_paper {
                reproduce(out_dir.as_deref(), seed, jobs, out, err)
            } else {
                let config = config.expect("clap enforces --config");
                ExperimentConfig::load(&config)
                    .and_then(|cfg| cmd_experiment(cfg, out_dir.as_deref(), seed, jobs, err))
                    .map(|paths| {
                        for p in paths {
                            let _ = writeln!(out, "wrote {}", p.display());
                        }
                        EXIT_OK
                    })
            }
        }
        Command::Crlb { config } => {
            ExperimentConfig::load(&config).and_then(|cfg| cmd_crlb(&cfg, out)).map(|_| EXIT_OK)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

/// Parsed contents of a fit data file.
#[derive(Debug, Clone, PartialEq)]
pub enum FitData {
    Quantized(QuantizedDataset),
    Raw(SampleSet),
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("data line {line}: {msg}"))
}

fn parse_bits(s: &str, line: usize) -> Result<Vec<u8>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(parse_err(line, format!("bad cell word '{s}'"))),
        })
        .collect()
}

/// Reads a fit data CSV. The header selects the layout:
/// `bank,word,count` (cell counts), `bank,<one column per sensor>`
/// (one quantized word per row) or one numeric column per sensor (raw
/// points). Bank numbers are 1-based indices into the configured banks.
pub fn read_fit_data(text: &str, banks: &[QuantizerBank], n_sensors: usize) -> Result<FitData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Input(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyData("data file is empty".into()));
    }
    let rows =
        reader.records().enumerate().map(|(i, r)| r.map_err(|e| parse_err(i + 2, e))).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyData("data file has no rows".into()));
    }

    let bank_of = |s: &str, line: usize| -> Result<usize> {
        let j: usize = s.parse().map_err(|_| parse_err(line, format!("bad bank number '{s}'")))?;
        if j == 0 || j > banks.len() {
            return Err(parse_err(line, format!("bank {j} is not configured")));
        }
        Ok(j - 1)
    };

    if header.first().map(String::as_str) == Some("bank") {
        let mut per_bank: BTreeMap<usize, CellCounts> = BTreeMap::new();
        let counts_layout = header.len() == 3 && header[1] == "word" && header[2] == "count";
        if !counts_layout && header.len() != n_sensors + 1 {
            return Err(Error::Input(format!("expected bank plus {n_sensors} bit columns")));
        }
        for (i, row) in rows.iter().enumerate() {
            let line = i + 2;
            if row.len() != header.len() {
                return Err(parse_err(line, "wrong number of fields"));
            }
            let j = bank_of(&row[0], line)?;
            let (bits, count) = if counts_layout {
                let c: u64 = row[2].parse().map_err(|_| parse_err(line, format!("bad count '{}'", &row[2])))?;
                (parse_bits(&row[1], line)?, c)
            } else {
                let bits = row.iter().skip(1).map(|b| parse_bits(b, line)).collect::<Result<Vec<_>>>()?;
                if bits.iter().any(|b| b.len() != 1) {
                    return Err(parse_err(line, "each bit column holds a single 0 or 1"));
                }
                (bits.concat(), 1)
            };
            if bits.len() != n_sensors {
                return Err(parse_err(line, format!("cell word has {} bits, expected {n_sensors}", bits.len())));
            }
            let word = CellWord::from_bits(&bits)?;
            let entry = per_bank.entry(j).or_insert_with(|| CellCounts::zeros(n_sensors));
            let mut counts = entry.counts().to_vec();
            counts[word.index()] += count;
            *entry = CellCounts::from_counts(counts)?;
        }
        let groups = per_bank.into_iter().map(|(j, counts)| BankCounts { bank: banks[j].clone(), counts }).collect();
        let data = QuantizedDataset::new(groups)?;
        if data.total() == 0 {
            return Err(Error::EmptyData("all counts are zero".into()));
        }
        return Ok(FitData::Quantized(data));
    }

    if header.len() != n_sensors {
        return Err(Error::Input(format!("raw data needs {n_sensors} columns, found {}", header.len())));
    }
    let mut values = Vec::with_capacity(rows.len() * n_sensors);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_sensors {
            return Err(parse_err(i + 2, "wrong number of fields"));
        }
        for f in row.iter() {
            let v: f64 = f.parse().map_err(|_| parse_err(i + 2, format!("bad number '{f}'")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(parse_err(i + 2, format!("observations must be positive, got {v}")));
            }
            values.push(v);
        }
    }
    Ok(FitData::Raw(SampleSet::new(n_sensors, values)?))
}

/// Builds the data set from words produced by quantizing at the sensors.
pub fn quantized_from_words(bank: &QuantizerBank, words: &[CellWord]) -> Result<QuantizedDataset> {
    QuantizedDataset::single(bank.clone(), accumulate_counts(bank.len(), words.iter().copied())?)
}

fn fit_report(fit: &MleResult, data: &FitData, cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let mut v = json!({
        "theta_hat": fit.theta_hat.as_slice(),
        "loglik": fit.loglik,
        "converged": fit.converged,
        "at_boundary": fit.at_boundary,
        "iterations": fit.iterations,
        "n_restarts_used": fit.n_restarts_used,
    });
    if let FitData::Quantized(d) = data {
        let spec = cfg.spec()?;
        let crlb = d
            .groups()
            .iter()
            .map(|g| fim_quantized(&fit.theta_hat, &g.bank, &spec))
            .collect::<Result<Vec<_>>>()
            .and_then(|fims| combine_fims(&fims, &WeightVector::from_totals(&d.totals())?));
        v["crlb"] = match crlb {
            Ok(c) => {
                let n = d.total() as f64;
                json!({
                    "covariance_per_sample": c.covariance.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                    "std_errors": c.variances().iter().map(|x| (x / n).sqrt()).collect::<Vec<_>>(),
                    "condition_number": c.condition_number,
                })
            }
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    Ok(v)
}

pub fn cmd_fit(config: &Path, data: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let spec = cfg.spec()?;
    let banks = cfg.banks()?;
    let text =
        std::fs::read_to_string(data).map_err(|e| Error::Input(format!("cannot read {}: {e}", data.display())))?;
    let parsed = read_fit_data(&text, &banks, spec.n_sensors())?;
    let mut opts = cfg.optimizer;
    if let Some(s) = seed {
        opts.seed = s;
    }
    let fit = match &parsed {
        FitData::Quantized(d) => fit_mle(Objective::Quantized(d), &spec, &opts)?,
        FitData::Raw(s) => fit_mle(Objective::Raw(s), &spec, &opts)?,
    };
    let report = fit_report(&fit, &parsed, &cfg)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json value serializes"))?;
    Ok(if fit.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Runs the study described by `cfg` and writes `<name>.csv`,
/// `<name>.json` and `<name>.timing.json`. Returns the written paths.
pub fn cmd_experiment(
    mut cfg: ExperimentConfig,
    out_dir: Option<&Path>,
    seed: Option<u64>,
    jobs: usize,
    err: &mut dyn Write,
) -> Result<Vec<PathBuf>> {
    if let (Some(s), Some(plan)) = (seed, cfg.plan.as_mut()) {
        plan.base_seed = s;
    }
    for f in &cfg.output.formats {
        if f != "csv" && f != "json" {
            return Err(Error::Config(format!("unknown output format '{f}'")));
        }
    }
    let plan = cfg.to_plan()?;
    let started = Instant::now();
    let report = run_experiment_with_jobs(&plan, Some(jobs))?;
    let elapsed = started.elapsed().as_secs_f64();

    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)?;
    let name = cfg.output.name.clone();
    let mut written = Vec::new();
    if cfg.output.formats.iter().any(|f| f == "csv") {
        let p = dir.join(format!("{name}.csv"));
        std::fs::write(&p, report.to_csv()?)?;
        written.push(p);
    }
    if cfg.output.formats.iter().any(|f| f == "json") {
        let bundle = ResultBundle::new(cfg.clone(), &plan, report);
        let p = dir.join(format!("{name}.json"));
        std::fs::write(&p, bundle.to_json()?)?;
        written.push(p);
    }
    let timing = dir.join(format!("{name}.timing.json"));
    std::fs::write(&timing, json!({ "wall_clock_seconds": elapsed, "jobs": jobs }).to_string())?;
    written.push(timing);
    let _ = writeln!(err, "{name}: {elapsed:.1}s");
    Ok(written)
}

/// Writes the information table for `cfg`: either the scalar combination
/// (with and without the least informative input) or per-bank matrices at
/// the configured true parameter.
pub fn cmd_crlb(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    if let Some(s) = &cfg.scalar {
        if s.informations.is_empty() || s.informations.iter().any(|i| !(*i > 0.0)) {
            return Err(Error::Config("scalar informations must be positive".into()));
        }
        let w = match &s.weights {
            Some(w) => WeightVector::new(w.clone())?,
            None => WeightVector::equal(s.informations.len())?,
        };
        let fims: Vec<_> =
            s.informations.iter().enumerate().map(|(i, &v)| FisherMatrix::scalar(v, format!("{}", i + 1))).collect();
        for (i, info) in s.informations.iter().enumerate() {
            writeln!(out, "input {}: information {} variance {:.4}", i + 1, info, 1.0 / info)?;
        }
        let all = combine_fims(&fims, &w)?;
        writeln!(out, "combined variance (all inputs): {:.4}", all.covariance[(0, 0)])?;
        if s.informations.len() > 1 && s.weights.is_none() {
            let worst = (0..s.informations.len())
                .min_by(|&a, &b| s.informations[a].total_cmp(&s.informations[b]))
                .expect("nonempty");
            let rest: Vec<_> = fims.iter().enumerate().filter(|(i, _)| *i != worst).map(|(_, f)| f.clone()).collect();
            let c = combine_fims(&rest, &WeightVector::equal(rest.len())?)?;
            writeln!(out, "combined variance (without input {}): {:.4}", worst + 1, c.covariance[(0, 0)])?;
        }
        return Ok(());
    }

    let spec = cfg.spec()?;
    let theta = cfg.theta_star()?;
    let banks = cfg.banks()?;
    if banks.is_empty() {
        return Err(Error::Config("[banks] section is required".into()));
    }
    let fims = banks.iter().map(|b| fim_quantized(&theta, b, &spec)).collect::<Result<Vec<_>>>()?;
    let w = match cfg.weights()? {
        Some(w) => w,
        None => WeightVector::equal(banks.len())?,
    };
    let fmt_row = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ");
    writeln!(out, "theta {}", fmt_row(theta.as_slice()))?;
    for (j, f) in fims.iter().enumerate() {
        writeln!(out, "bank {} [{}] fim_diag {}", j + 1, banks[j].label(), fmt_row(&f.diagonal()))?;
    }
    let c = combine_fims(&fims, &w)?;
    writeln!(out, "weights {}", fmt_row(w.omegas()))?;
    writeln!(out, "combined covariance (per sample)")?;
    for r in c.covariance.row_iter() {
        writeln!(out, "  {}", fmt_row(&r.iter().copied().collect::<Vec<_>>()))?;
    }
    writeln!(out, "condition_number {:.6e}", c.condition_number)?;
    Ok(())
}

fn reproduce(
    out_dir: Option<&Path>,
    seed: Option<u64>,
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir)?;
    for (file, text) in BUNDLED_CONFIGS {
        let cfg = ExperimentConfig::from_toml_str(text)?;
        if cfg.plan.is_some() {
            for p in cmd_experiment(cfg, Some(&dir), seed, jobs, err)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        } else {
            let mut table = Vec::new();
            cmd_crlb(&cfg, &mut table)?;
            let p = dir.join(file.replace(".toml", ".txt"));
            std::fs::write(&p, &table)?;
            out.write_all(&table)?;
            writeln!(out, "wrote {}", p.display())?;
        }
    }
    Ok(EXIT_OK)
}
