//! TOML experiment configuration with dotted-key overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use coderag::bench::{ExperimentConfig, ReportFormat, TimingMode};
use coderag::corpus::FilterConfig;
use coderag::prompt::PromptConfig;
use coderag::providers::{CompletionProviderConfig, EmbeddingProviderConfig, LatencyModel, TOKEN_ENV};
use coderag::retrieval::{Bm25Params, RetrievalConfig, Strategy};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub retrieval: RetrievalSection,
    pub prompt: PromptConfig,
    pub providers: ProvidersSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub window: usize,
    pub stride: usize,
    /// Benchmark instances to sample; all eligible ones when unset.
    pub sample: Option<usize>,
    pub seed: u64,
    pub seq_len: usize,
    pub filter: FilterConfig,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            window: 20,
            stride: 1,
            sample: None,
            seed: 0,
            seq_len: 4096,
            filter: FilterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let r = RetrievalConfig::default();
        let p = Bm25Params::default();
        Self {
            strategy: r.strategy,
            k: r.k,
            seed: r.seed,
            k1: p.k1,
            b: p.b,
        }
    }
}

impl RetrievalSection {
    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersSection {
    /// Use the in-process mock embedder and copy-oracle completer.
    pub mock: bool,
    pub mock_seed: u64,
    pub mock_latency: LatencyModel,
    pub embedding: EmbeddingProviderConfig,
    pub completion: CompletionProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub concurrency: usize,
    pub max_tokens: usize,
    pub timing: TimingMode,
    pub corpus_fraction: f64,
    pub ks: Vec<usize>,
    pub fractions: Vec<f64>,
    pub report_format: ReportFormat,
}

impl Default for BenchSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            concurrency: e.concurrency,
            max_tokens: e.max_tokens,
            timing: e.timing,
            corpus_fraction: e.corpus_fraction,
            ks: (0..=5).collect(),
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            report_format: ReportFormat::Csv,
        }
    }
}

impl Config {
    /// Reads `path` (defaults when absent), applies `key=value` overrides
    /// and picks up the bearer token from the environment.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| UsageError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| UsageError(format!("override {o:?} is not key=value")))?;
            set_path(&mut value, key.trim(), parse_value(raw.trim()))?;
        }
        let mut cfg: Config = toml::Value::Table(value)
            .try_into()
            .map_err(|e| UsageError(format!("invalid configuration: {e}")))?;
        if let Ok(token) = std::env::var(TOKEN_ENV) {
            if !token.is_empty() {
                cfg.providers.embedding.bearer_token = Some(token.clone());
                cfg.providers.completion.bearer_token = Some(token);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            retrieval: RetrievalConfig {
                strategy: self.retrieval.strategy,
                k: self.retrieval.k,
                seed: self.retrieval.seed,
            },
            corpus_fraction: self.bench.corpus_fraction,
            concurrency: self.bench.concurrency,
            max_tokens: self.bench.max_tokens,
            prompt: self.prompt.clone(),
            timing: self.bench.timing,
        }
    }
}

/// A TOML literal when it parses as one, a bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(UsageError(format!("bad override key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| UsageError(format!("override {key:?}: {p} is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let back: Config = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.retrieval.k, 5);
        assert_eq!(cfg.prompt.max_prompt_tokens, 3584);
    }

    #[test]
    fn overrides_apply_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[retrieval]\nk = 3\nstrategy = \"random\"\n").unwrap();
        let cfg = Config::load(
            Some(&path),
            &["retrieval.k=1".into(), "prompt.separator=\"\\n\"".into(), "bench.ks=[0, 2]".into()],
        )
        .unwrap();
        assert_eq!(cfg.retrieval.k, 1);
        assert_eq!(cfg.retrieval.strategy, Strategy::Random);
        assert_eq!(cfg.prompt.separator, "\n");
        assert_eq!(cfg.bench.ks, [0, 2]);
        let s = Config::load(None, &["retrieval.strategy=sim_vector".into()]).unwrap();
        assert_eq!(s.retrieval.strategy, Strategy::SimVector);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        for bad in ["retrieval.kk=1", "retrieval", "k.=1", "retrieval.k.x=1"] {
            let err = Config::load(None, &[bad.into()]).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{bad}: {err}");
        }
    }
}
