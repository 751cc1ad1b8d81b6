use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// One summary row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub k: usize,
    pub corpus_fraction: f64,
    pub n_instances: usize,
    pub n_failed: usize,
    pub em_pct: f64,
    pub es_pct: f64,
    pub bleu_pct: f64,
    pub mean_prompt_tokens: f64,
    pub retrieve_p50_ms: f64,
    pub retrieve_p95_ms: f64,
    pub complete_p50_ms: f64,
    pub complete_p95_ms: f64,
    pub tokens_per_second: f64,
    pub generation_tokens_per_second: f64,
}

const COLUMNS: [&str; 15] = [
    "strategy",
    "k",
    "corpus_fraction",
    "n_instances",
    "n_failed",
    "em_pct",
    "es_pct",
    "bleu_pct",
    "mean_prompt_tokens",
    "retrieve_p50_ms",
    "retrieve_p95_ms",
    "complete_p50_ms",
    "complete_p95_ms",
    "tokens_per_second",
    "generation_tokens_per_second",
];

fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 { 0.0 } else { r }
}

impl ReportRow {
    fn rounded(&self) -> Self {
        Self {
            corpus_fraction: round2(self.corpus_fraction),
            em_pct: round2(self.em_pct),
            es_pct: round2(self.es_pct),
            bleu_pct: round2(self.bleu_pct),
            mean_prompt_tokens: round2(self.mean_prompt_tokens),
            retrieve_p50_ms: round2(self.retrieve_p50_ms),
            retrieve_p95_ms: round2(self.retrieve_p95_ms),
            complete_p50_ms: round2(self.complete_p50_ms),
            complete_p95_ms: round2(self.complete_p95_ms),
            tokens_per_second: round2(self.tokens_per_second),
            generation_tokens_per_second: round2(self.generation_tokens_per_second),
            ..self.clone()
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{:.2},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
            self.strategy,
            self.k,
            self.corpus_fraction,
            self.n_instances,
            self.n_failed,
            self.em_pct,
            self.es_pct,
            self.bleu_pct,
            self.mean_prompt_tokens,
            self.retrieve_p50_ms,
            self.retrieve_p95_ms,
            self.complete_p50_ms,
            self.complete_p95_ms,
            self.tokens_per_second,
            self.generation_tokens_per_second,
        )
    }
}

/// Writes `report.csv` or `report.json` into `dir`. Rows are sorted by
/// (strategy, k, corpus_fraction) and floats rounded to two decimals.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    if rows.is_empty() {
        return Err(Error::invalid("no reports to emit"));
    }
    let mut rows: Vec<ReportRow> = rows.iter().map(ReportRow::rounded).collect();
    rows.sort_by(|a, b| {
        (a.strategy, a.k)
            .cmp(&(b.strategy, b.k))
            .then(a.corpus_fraction.total_cmp(&b.corpus_fraction))
    });
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (path, body) = match format {
        ReportFormat::Csv => {
            let mut body = COLUMNS.join(",");
            body.push('\n');
            for r in &rows {
                let _ = writeln!(body, "{}", r.csv_line());
            }
            (dir.join("report.csv"), body)
        }
        ReportFormat::Json => {
            let mut body = serde_json::to_string_pretty(&rows)?;
            body.push('\n');
            (dir.join("report.json"), body)
        }
    };
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_report_json(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
