//! Report envelopes, the run manifest and the comparison table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::limit::{Comparison, ReferenceKind, ReferenceValue};

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    /// Fully resolved configuration (flags merged over the config file).
    pub config: serde_json::Value,
    pub tool_version: String,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, inputs: Vec<String>, config: serde_json::Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs,
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        }
    }

    /// Comment lines for CSV outputs. The timestamp is left out so that equal
    /// configurations give byte-identical files.
    pub fn csv_comments(&self) -> Vec<String> {
        vec![
            format!("generated by csl-xray {} {}", self.tool_version, self.subcommand),
            format!("config {}", self.config),
        ]
    }
}

fn timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok());
    let ts = match secs {
        Some(s) => chrono::DateTime::from_timestamp(s, 0).unwrap_or_default(),
        None => chrono::Utc::now(),
    };
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// A report body with its manifest attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    #[serde(flatten)]
    pub body: T,
    pub manifest: RunManifest,
}

impl<T: Serialize> Envelope<T> {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Fit report: primary fit, the alternative estimator and the exposure the
/// amplitude refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub fit: FitResult,
    pub exposure_kg_day: f64,
    pub alternative: Option<FitResult>,
}

impl FitReport {
    pub fn validated(mut self) -> Result<Self> {
        self.fit = self.fit.validated()?;
        if let Some(alt) = self.alternative {
            self.alternative = Some(alt.validated()?);
        }
        if !(self.exposure_kg_day > 0.0) {
            return Err(Error::Domain("fit report exposure must be positive".into()));
        }
        Ok(self)
    }
}

/// One row of the rendered comparison matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub kind: String,
    pub reference: String,
    pub verdict: String,
    pub log10_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub lambda_upper: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn new(lambda_upper: f64, comparisons: &[Comparison]) -> Self {
        let rows = comparisons
            .iter()
            .map(|c| ComparisonRow {
                name: c.name.clone(),
                kind: c.kind.as_str().to_string(),
                reference: c.reference_value_or_magnitude.label(),
                verdict: c.verdict().to_string(),
                log10_distance: c.log10_distance,
            })
            .collect();
        ComparisonTable { lambda_upper, rows }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("new limit: lambda <= {:.3e} s^-1\n", self.lambda_upper);
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        out.push_str(&format!(
            "{:<name_w$}  {:<12}  {:>10}  {:>12}  {}\n",
            "name", "kind", "reference", "log10(L/ref)", "verdict"
        ));
        for r in &self.rows {
            let reference = if r.kind == ReferenceKind::Model.as_str() {
                r.reference.clone()
            } else {
                format!("CSL+{}", r.reference)
            };
            out.push_str(&format!(
                "{:<name_w$}  {:<12}  {:>10}  {:>12.2}  {}\n",
                r.name, r.kind, reference, r.log10_distance, r.verdict
            ));
        }
        out
    }

    /// CSV with a `# lambda_upper=` comment line followed by one row per entry.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(format!(
            "# lambda_upper={}\n{}",
            self.lambda_upper,
            String::from_utf8(body).expect("csv output is utf-8")
        ))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or_default();
        let lambda_upper = first
            .strip_prefix("# lambda_upper=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or(Error::Parse { line: 1, msg: "missing '# lambda_upper=' line".into() })?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for r in reader.deserialize::<ComparisonRow>() {
            let row = r.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            ReferenceValue::parse_label(&row.reference)?;
            rows.push(row);
        }
        Ok(ComparisonTable { lambda_upper, rows })
    }
}
