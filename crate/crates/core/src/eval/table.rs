use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};

/// Report group. Declaration order is the order groups appear in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Baseline,
    Linear,
    ClassicalMl,
    Statistical,
    FeedForward,
    Recurrent,
    Convolutional,
    Transformer,
}

impl Family {
    pub fn title(&self) -> &'static str {
        match self {
            Family::Baseline => "Baseline",
            Family::Linear => "Linear regression models",
            Family::ClassicalMl => "Classical machine learning models",
            Family::Statistical => "Statistical time series models",
            Family::FeedForward => "Feed-forward networks",
            Family::Recurrent => "Recurrent networks",
            Family::Convolutional => "CNN and hybrid architectures",
            Family::Transformer => "Transformers",
        }
    }

    /// Group of a neural architecture family label.
    pub fn from_network_family(label: &str) -> Result<Self> {
        match label {
            "feed-forward" => Ok(Family::FeedForward),
            "recurrent" => Ok(Family::Recurrent),
            "convolutional" => Ok(Family::Convolutional),
            "transformer" => Ok(Family::Transformer),
            other => Err(Error::invalid(format!("unknown network family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub family: Family,
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n_test: usize,
}

impl MetricsRecord {
    pub fn new(model: impl Into<String>, family: Family, horizon: usize, m: Metrics) -> Self {
        Self {
            model: model.into(),
            family,
            horizon,
            mae: m.mae,
            rmse: m.rmse,
            r2: m.r2,
            n_test: m.n,
        }
    }
}

/// Metric records, at most one per (model, horizon), plus free-form notes
/// carried into the rendered report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    records: Vec<MetricsRecord>,
    pub notes: Vec<String>,
}

impl MetricsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: MetricsRecord) -> Result<()> {
        if self.get(&record.model, record.horizon).is_some() {
            return Err(Error::invalid(format!(
                "duplicate record for model `{}` at horizon {}",
                record.model, record.horizon
            )));
        }
        if let Some(other) = self.records.iter().find(|r| r.model == record.model && r.family != record.family) {
            return Err(Error::invalid(format!(
                "model `{}` listed under both {:?} and {:?}",
                record.model, other.family, record.family
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, model: &str, horizon: usize) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| r.model == model && r.horizon == horizon)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by family, models in first-insertion order within a
    /// family, horizons ascending within a model.
    pub fn records(&self) -> Vec<&MetricsRecord> {
        let models = self.models();
        let rank = |m: &str| models.iter().position(|x| x == m).unwrap_or(usize::MAX);
        let mut out: Vec<&MetricsRecord> = self.records.iter().collect();
        out.sort_by_key(|r| (rank(&r.model), r.horizon));
        out
    }

    /// Model names in report order.
    pub fn models(&self) -> Vec<String> {
        let mut seen: Vec<(Family, usize, &str)> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if !seen.iter().any(|(_, _, m)| *m == r.model) {
                seen.push((r.family, i, &r.model));
            }
        }
        seen.sort();
        seen.into_iter().map(|(_, _, m)| m.to_string()).collect()
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.horizon).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::invalid(format!("unknown report format `{other}`; expected csv or md"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Markdown => "md",
        })
    }
}

/// Marker written for an undefined R².
pub const UNDEFINED: &str = "NA";

pub fn render_report(table: &MetricsTable, format: ReportFormat) -> Result<String> {
    if table.is_empty() {
        return Err(Error::invalid("cannot render an empty metrics table"));
    }
    Ok(match format {
        ReportFormat::Csv => render_csv(table),
        ReportFormat::Markdown => render_markdown(table),
    })
}

fn render_csv(table: &MetricsTable) -> String {
    let mut out = String::from("model,horizon,mae,rmse,r2,n\n");
    for r in table.records() {
        let r2 = r.r2.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(out, "{},{},{:.6},{:.6},{},{}", csv_field(&r.model), r.horizon, r.mae, r.rmse, r2, r.n_test);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Copy)]
enum Metric {
    Mae,
    Rmse,
    R2,
}

impl Metric {
    const ALL: [Metric; 3] = [Metric::Mae, Metric::Rmse, Metric::R2];

    fn label(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
            Metric::R2 => "R²",
        }
    }

    fn read(self, r: &MetricsRecord) -> Option<f64> {
        match self {
            Metric::Mae => Some(r.mae),
            Metric::Rmse => Some(r.rmse),
            Metric::R2 => r.r2,
        }
    }

    /// Orientation so that smaller is always better.
    fn loss(self, v: f64) -> f64 {
        match self {
            Metric::R2 => -v,
            _ => v,
        }
    }

    fn digits(self) -> usize {
        match self {
            Metric::R2 => 3,
            _ => 2,
        }
    }
}

fn render_markdown(table: &MetricsTable) -> String {
    let horizons = table.horizons();
    let models = table.models();
    let best: Vec<Vec<Option<String>>> = horizons
        .iter()
        .map(|&h| {
            Metric::ALL
                .iter()
                .map(|&m| {
                    table
                        .records
                        .iter()
                        .filter(|r| r.horizon == h)
                        .filter_map(|r| m.read(r))
                        .min_by(|a, b| m.loss(*a).total_cmp(&m.loss(*b)))
                        .map(|v| format!("{v:.*}", m.digits()))
                })
                .collect()
        })
        .collect();

    let mut out = String::from("# Forecast accuracy\n\n");
    let mut header = String::from("| Model |");
    let mut rule = String::from("|:--|");
    for h in &horizons {
        for m in Metric::ALL {
            let _ = write!(header, " {h}h {} |", m.label());
            rule.push_str("--:|");
        }
    }
    let _ = writeln!(out, "{header}\n{rule}");

    let blank = " |".repeat(horizons.len() * Metric::ALL.len());
    let mut current = None;
    for model in &models {
        let family = table.records.iter().find(|r| &r.model == model).map(|r| r.family);
        if family != current {
            current = family;
            if let Some(f) = family {
                let _ = writeln!(out, "| *{}* |{blank}", f.title());
            }
        }
        let mut row = format!("| {model} |");
        for (hi, &h) in horizons.iter().enumerate() {
            let rec = table.get(model, h);
            for (mi, m) in Metric::ALL.iter().enumerate() {
                let cell = match rec {
                    None => "-".to_string(),
                    Some(r) => match m.read(r) {
                        None => UNDEFINED.to_string(),
                        Some(v) => {
                            let s = format!("{v:.*}", m.digits());
                            if best[hi][mi].as_deref() == Some(s.as_str()) {
                                format!("**{s}**")
                            } else {
                                s
                            }
                        }
                    },
                };
                let _ = write!(row, " {cell} |");
            }
        }
        let _ = writeln!(out, "{row}");
    }

    let counts: BTreeSet<usize> = table.records.iter().map(|r| r.n_test).collect();
    let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "\nTest samples per horizon: {}. Best value per column in bold.", counts.join(", "));
    if !table.notes.is_empty() {
        out.push('\n');
        for note in &table.notes {
            let _ = writeln!(out, "- {note}");
        }
    }
    out
}
