//! Versioned JSON reports and their CSV renderings.
//!
//! Every report is a JSON object with `"schema": "iaei-report/1"` and a
//! `"kind"` of `simulation`, `estimate` or `cv`. Rendering is deterministic:
//! the same report always serializes to the same bytes, and reading then
//! rewriting a report reproduces its file exactly.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::center::Centering;
use super::cv::CvResult;
use crate::error::{Error, Result};
use crate::estimators::FitResult;
use crate::imputation::{ImputationDiagnostics, ImputerSpec};
use crate::simulation::study::REPORT_SCHEMA;
use crate::simulation::SimulationReport;

/// Output format of the command line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::UnknownName {
                kind: "format",
                name: other.into(),
            }),
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Format::parse(s)
    }
}

/// One environment of an estimation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub env_id: String,
    pub n_rows: usize,
    pub n_labeled: usize,
    /// Normalized weight `ω^(e)`.
    pub weight: f64,
}

/// Result of the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: String,
    pub kind: String,
    pub input: String,
    pub environments: Vec<EnvSummary>,
    /// Imputer used for prediction-based methods, absent when none ran.
    pub imputer: Option<ImputerSpec>,
    /// Where the imputer's training rows came from.
    pub imputer_training: Option<String>,
    pub centering: Option<Centering>,
    /// Residual diagnostics of the imputer on labeled input rows.
    pub diagnostics: Option<ImputationDiagnostics>,
    pub fits: Vec<FitResult>,
}

impl EstimateReport {
    pub fn new(input: String, environments: Vec<EnvSummary>, fits: Vec<FitResult>) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            kind: "estimate".into(),
            input,
            environments,
            imputer: None,
            imputer_training: None,
            centering: None,
            diagnostics: None,
            fits,
        }
    }
}

/// Result of the `cv` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema: String,
    pub kind: String,
    pub input: String,
    pub history: String,
    pub result: CvResult,
}

impl CvReport {
    pub fn new(input: String, history: String, result: CvResult) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            kind: "cv".into(),
            input,
            history,
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Simulation(SimulationReport),
    Estimate(EstimateReport),
    Cv(CvReport),
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    kind: String,
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Simulation(_) => "simulation",
            Report::Estimate(_) => "estimate",
            Report::Cv(_) => "cv",
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = match self {
            Report::Simulation(r) => serde_json::to_string_pretty(r)?,
            Report::Estimate(r) => serde_json::to_string_pretty(r)?,
            Report::Cv(r) => serde_json::to_string_pretty(r)?,
        };
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)?;
        if header.schema != REPORT_SCHEMA {
            return Err(Error::Schema(format!(
                "unsupported report schema `{}`, expected `{REPORT_SCHEMA}`",
                header.schema
            )));
        }
        Ok(match header.kind.as_str() {
            "simulation" => Report::Simulation(serde_json::from_str(text)?),
            "estimate" => Report::Estimate(serde_json::from_str(text)?),
            "cv" => Report::Cv(serde_json::from_str(text)?),
            other => return Err(Error::Schema(format!("unknown report kind `{other}`"))),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        match self {
            Report::Simulation(r) => simulation_csv(r, out),
            Report::Estimate(r) => estimate_csv(r, out),
            Report::Cv(r) => cv_csv(r, out),
        }
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Json => Ok(self.to_json()?.into_bytes()),
            Format::Csv => {
                let mut buf = Vec::new();
                self.write_csv(&mut buf)?;
                Ok(buf)
            }
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Schema(format!("{other:?}")),
    }
}

/// One row per grid cell; empty statistics mean no replication succeeded.
pub fn simulation_csv(report: &SimulationReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = report
        .cells
        .first()
        .map_or(0, |c| c.selection_frequency.len());
    let mut header: Vec<String> = [
        "model",
        "n_per_env",
        "missing_ratio",
        "method",
        "variant",
        "gamma",
        "family",
        "strategy",
        "replications",
        "failures",
        "mean_fdr",
        "sd_fdr",
        "mean_l2_error",
        "sd_l2_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=p).map(|j| format!("freq_x{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for c in &report.cells {
        let mut row = vec![
            c.key.model.name().to_string(),
            c.key.n_per_env.to_string(),
            c.key.missing_ratio.to_string(),
            c.key.method.name().to_string(),
            c.key.variant.name().to_string(),
            c.key.gamma.to_string(),
            c.family.name().to_string(),
            c.strategy.name().to_string(),
            c.replications.to_string(),
            c.failures.len().to_string(),
            opt(c.mean_fdr),
            opt(c.sd_fdr),
            opt(c.mean_l2_error),
            opt(c.sd_l2_error),
        ];
        row.extend(c.selection_frequency.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per fit; `support` lists 1-based indices separated by `;`.
pub fn estimate_csv(report: &EstimateReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = report.fits.first().map_or(0, |f| f.beta.len());
    let mut header: Vec<String> = [
        "method",
        "variant",
        "gamma",
        "support",
        "objective",
        "loss_part",
        "penalty_part",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=p).map(|j| format!("beta_x{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for f in &report.fits {
        let support: Vec<String> = f.support.one_based().iter().map(usize::to_string).collect();
        let mut row = vec![
            f.method.name().to_string(),
            f.variant.name().to_string(),
            f.gamma.to_string(),
            support.join(";"),
            f.objective.to_string(),
            f.loss_part.to_string(),
            f.penalty_part.to_string(),
        ];
        row.extend(f.beta.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (method, day of month) at the selected `γ`.
pub fn cv_csv(report: &CvReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "day", "folds", "chosen_gamma", "mse"])
        .map_err(csv_error)?;
    for m in &report.result.methods {
        for d in &m.days {
            w.write_record([
                m.method.name().to_string(),
                d.day.to_string(),
                d.folds.to_string(),
                d.chosen_gamma.to_string(),
                d.mse.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}
