//! End-to-end experiments: retrieve, assemble, complete and score every
//! benchmark instance, then sweep over K and corpus scale.

mod chart;
mod prep;
mod report;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CompletionInstance, RetrievalUnit};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, score, truncate_to_first_line, EvalRecord, EvalReport};
use crate::prompt::{assemble_dependency_prompt, assemble_similarity_prompt, PromptBundle, PromptConfig};
use crate::providers::{CompletionProvider, CompletionRequest, EmbeddingProvider};
use crate::retrieval::{
    build_lexical_index, build_symbol_index, dependency_retrieve, extract_calls, lexical_topk,
    random_retrieve, vector_topk, Bm25Params, LexicalIndex, RetrievalConfig, RetrievalResult,
    Strategy, SymbolIndex, VectorIndex,
};
use crate::tokenizer::Tokenizer;

pub use chart::{emit_charts, line_chart_svg, Series};
pub use prep::{measure_preparation, BuiltIndex, PrepBackend, PreparationStats};
pub use report::{emit_report, read_report_json, ReportFormat, ReportRow};

/// Fraction of failed instances above which a run is aborted.
pub const FAILURE_LIMIT: f64 = 0.05;

/// How phase latencies are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Simulated when the completer models its own latency, wall otherwise.
    #[default]
    Auto,
    /// Client-observed wall clock.
    Wall,
    /// Local phases cost 0 and completion costs what the provider reports,
    /// which keeps records byte-identical across runs.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub retrieval: RetrievalConfig,
    pub corpus_fraction: f64,
    pub concurrency: usize,
    pub max_tokens: usize,
    pub prompt: PromptConfig,
    pub timing: TimingMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            corpus_fraction: 1.0,
            concurrency: 4,
            max_tokens: 512,
            prompt: PromptConfig::default(),
            timing: TimingMode::Auto,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.corpus_fraction > 0.0 && self.corpus_fraction <= 1.0) {
            return Err(Error::config("corpus_fraction must lie in (0, 1]"));
        }
        if self.concurrency == 0 {
            return Err(Error::config("concurrency must be at least 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens must be at least 1"));
        }
        self.prompt.validate()
    }
}

/// Everything an evaluation reads. Indexes are only needed by the
/// strategies that use them.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub units: &'a [RetrievalUnit],
    pub lexical: Option<&'a LexicalIndex>,
    pub vector: Option<&'a VectorIndex>,
    pub symbol: Option<&'a SymbolIndex>,
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub completer: &'a dyn CompletionProvider,
    pub tokenizer: &'a dyn Tokenizer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatencies {
    pub embed_query: f64,
    pub retrieve: f64,
    pub assemble: f64,
    pub complete: f64,
}

impl PhaseLatencies {
    pub fn total(&self) -> f64 {
        self.embed_query + self.retrieve + self.assemble + self.complete
    }
}

/// One line of the per-instance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: u32,
    pub strategy: Strategy,
    pub k: usize,
    pub included_unit_ids: Vec<u32>,
    pub prompt_tokens: usize,
    pub prediction: String,
    pub em: u8,
    pub es: f64,
    pub bleu: f64,
    pub phase_latencies_ms: PhaseLatencies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl PhaseStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: rank(0.50),
            p95: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub embed_query: PhaseStats,
    pub retrieve: PhaseStats,
    pub assemble: PhaseStats,
    pub complete: PhaseStats,
    pub count: usize,
}

impl LatencyStats {
    pub fn from_phases(phases: &[PhaseLatencies]) -> Self {
        let stat = |f: fn(&PhaseLatencies) -> f64| {
            PhaseStats::from_samples(&phases.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            embed_query: stat(|p| p.embed_query),
            retrieve: stat(|p| p.retrieve),
            assemble: stat(|p| p.assemble),
            complete: stat(|p| p.complete),
            count: phases.len(),
        }
    }
}

/// `tokens_per_second` counts prompt and completion tokens;
/// `generation_tokens_per_second` counts completion tokens only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputStats {
    pub total_prompt_tokens: usize,
    pub total_completion_tokens: usize,
    pub wall_time_ms: f64,
    pub tokens_per_second: f64,
    pub generation_tokens_per_second: f64,
}

impl ThroughputStats {
    pub fn new(prompt: usize, completion: usize, wall_time_ms: f64) -> Self {
        let rate = |n: usize| {
            if wall_time_ms > 0.0 {
                n as f64 / (wall_time_ms / 1e3)
            } else {
                0.0
            }
        };
        Self {
            total_prompt_tokens: prompt,
            total_completion_tokens: completion,
            wall_time_ms,
            tokens_per_second: rate(prompt + completion),
            generation_tokens_per_second: rate(completion),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub n_failed: usize,
    pub corpus_fraction: f64,
    pub mean_prompt_tokens: f64,
    pub latency: LatencyStats,
    pub throughput: ThroughputStats,
    /// In instance-id order, failed instances included.
    pub records: Vec<InstanceRecord>,
}

impl EvalOutcome {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            strategy: self.report.strategy,
            k: self.report.k,
            corpus_fraction: self.corpus_fraction,
            n_instances: self.report.n_instances,
            n_failed: self.n_failed,
            em_pct: self.report.em_pct,
            es_pct: self.report.es_pct,
            bleu_pct: self.report.bleu_pct,
            mean_prompt_tokens: self.mean_prompt_tokens,
            retrieve_p50_ms: self.latency.retrieve.p50,
            retrieve_p95_ms: self.latency.retrieve.p95,
            complete_p50_ms: self.latency.complete.p50,
            complete_p95_ms: self.latency.complete.p95,
            tokens_per_second: self.throughput.tokens_per_second,
            generation_tokens_per_second: self.throughput.generation_tokens_per_second,
        }
    }

    /// Writes the per-instance log as line-delimited JSON.
    pub fn write_records(&self, path: &Path) -> Result<()> {
        write_records(path, &self.records)
    }
}

pub fn write_records(path: &Path, records: &[InstanceRecord]) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Per-instance seed for random retrieval.
fn instance_seed(seed: u64, instance_id: u32) -> u64 {
    seed ^ (u64::from(instance_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Instance {
    record: InstanceRecord,
    eval: Option<EvalRecord>,
    usage: (usize, usize),
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    b: Backends<'a>,
    by_id: HashMap<u32, &'a RetrievalUnit>,
    unit_ids: Vec<u32>,
    k: usize,
    simulated: bool,
}

impl<'a> Runner<'a> {
    fn retrieve(&self, inst: &CompletionInstance, lat: &mut PhaseLatencies) -> Result<PromptBundle> {
        let (cfg, b, k) = (self.cfg, &self.b, self.k);
        let query = inst.context.as_str();
        let unit = |id: u32| self.by_id.get(&id).copied();
        let started = Instant::now();
        let results: Vec<RetrievalResult> = if k == 0 {
            Vec::new()
        } else {
            match cfg.retrieval.strategy {
                Strategy::SimBm25 => {
                    let lex = b.lexical.ok_or_else(|| Error::config("sim_bm25 needs a BM25 index"))?;
                    lexical_topk(lex, query, k).hits
                }
                Strategy::SimVector => {
                    let index = b.vector.ok_or_else(|| Error::config("sim_vector needs a vector index"))?;
                    let embedder =
                        b.embedder.ok_or_else(|| Error::config("sim_vector needs an embedding provider"))?;
                    let t = Instant::now();
                    let q = embedder
                        .embed_batch(std::slice::from_ref(&inst.context))?
                        .pop()
                        .ok_or_else(|| Error::invalid("embedding provider returned no vector"))?;
                    lat.embed_query = ms_since(t);
                    let t = Instant::now();
                    let hits = vector_topk(index, &q, k)?.hits;
                    lat.retrieve = ms_since(t);
                    hits
                }
                Strategy::Dependency => {
                    let sym = b.symbol.ok_or_else(|| Error::config("dependency needs a symbol index"))?;
                    let mut hits = dependency_retrieve(sym, &extract_calls(query), &inst.source_path).results;
                    hits.truncate(k);
                    hits
                }
                Strategy::Random => random_retrieve(&self.unit_ids, k, instance_seed(cfg.retrieval.seed, inst.id))?,
            }
        };
        if cfg.retrieval.strategy != Strategy::SimVector || k == 0 {
            lat.retrieve = ms_since(started);
        }

        let t = Instant::now();
        let bundle = if cfg.retrieval.strategy == Strategy::Dependency {
            let defs = results
                .iter()
                .map(|r| unit(r.unit_id).ok_or_else(|| Error::invalid(format!("unknown unit {}", r.unit_id))))
                .collect::<Result<Vec<_>>>()?;
            assemble_dependency_prompt(&defs, query, &cfg.prompt, b.tokenizer)?
        } else {
            assemble_similarity_prompt(&results, unit, query, &cfg.prompt, b.tokenizer)?
        };
        lat.assemble = ms_since(t);
        Ok(bundle)
    }

    fn run_one(&self, inst: &CompletionInstance) -> Instance {
        let mut lat = PhaseLatencies::default();
        let mut record = InstanceRecord {
            instance_id: inst.id,
            strategy: self.cfg.retrieval.strategy,
            k: self.k,
            included_unit_ids: Vec::new(),
            prompt_tokens: 0,
            prediction: String::new(),
            em: 0,
            es: 0.0,
            bleu: 0.0,
            phase_latencies_ms: lat,
            error: None,
        };
        let outcome = self.retrieve(inst, &mut lat).and_then(|bundle| {
            record.included_unit_ids = bundle.included_unit_ids.clone();
            record.prompt_tokens = bundle.prompt_token_count;
            let t = Instant::now();
            let resp = self
                .b
                .completer
                .complete(&CompletionRequest::greedy(bundle.prompt_text, self.cfg.max_tokens))?;
            lat.complete = if self.simulated { resp.latency_ms } else { ms_since(t) };
            Ok(resp)
        });
        if self.simulated {
            lat.embed_query = 0.0;
            lat.retrieve = 0.0;
            lat.assemble = 0.0;
        }
        record.phase_latencies_ms = lat;
        match outcome {
            Ok(resp) => {
                let prediction = truncate_to_first_line(&resp.text);
                let eval = score(inst.id, prediction, &inst.target, self.b.tokenizer);
                record.prediction = prediction.to_string();
                record.em = eval.em;
                record.es = eval.es;
                record.bleu = eval.bleu;
                Instance {
                    record,
                    eval: Some(eval),
                    usage: (resp.prompt_tokens, resp.completion_tokens),
                }
            }
            Err(e) => {
                tracing::warn!("instance {} failed: {e}", inst.id);
                record.error = Some(e.to_string());
                Instance {
                    record,
                    eval: None,
                    usage: (0, 0),
                }
            }
        }
    }
}

/// Runs every benchmark instance through retrieve, assemble, complete,
/// first-line truncation and scoring.
///
/// Failed instances are logged and excluded from the means; more than 5%
/// failures aborts with [`Error::QualityGate`].
pub fn run_eval(cfg: &ExperimentConfig, benchmark: &[CompletionInstance], b: Backends<'_>) -> Result<EvalOutcome> {
    cfg.validate()?;
    if benchmark.is_empty() {
        return Err(Error::invalid("benchmark has no instances"));
    }
    let mut unit_ids: Vec<u32> = b.units.iter().map(|u| u.id).collect();
    unit_ids.sort_unstable();
    let mut k = cfg.retrieval.k;
    if k > unit_ids.len() {
        tracing::warn!("k={k} exceeds the {} available units; clamped", unit_ids.len());
        k = unit_ids.len();
    }
    let simulated = match cfg.timing {
        TimingMode::Auto => b.completer.simulated_latency(),
        TimingMode::Wall => false,
        TimingMode::Simulated => true,
    };
    let runner = Runner {
        cfg,
        b,
        by_id: b.units.iter().map(|u| (u.id, u)).collect(),
        unit_ids,
        k,
        simulated,
    };

    let mut ordered: Vec<&CompletionInstance> = benchmark.iter().collect();
    ordered.sort_by_key(|i| i.id);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let started = Instant::now();
    let results: Vec<Instance> = pool.install(|| ordered.par_iter().map(|inst| runner.run_one(inst)).collect());
    let elapsed_ms = ms_since(started);

    let total = results.len();
    let n_failed = results.iter().filter(|r| r.eval.is_none()).count();
    if n_failed as f64 > FAILURE_LIMIT * total as f64 {
        return Err(Error::QualityGate { failed: n_failed, total });
    }
    let ok: Vec<&Instance> = results.iter().filter(|r| r.eval.is_some()).collect();
    let evals: Vec<EvalRecord> = ok.iter().filter_map(|r| r.eval.clone()).collect();
    let report = aggregate(&evals, cfg.retrieval.strategy, k)?;
    let phases: Vec<PhaseLatencies> = ok.iter().map(|r| r.record.phase_latencies_ms).collect();
    let wall_ms = if simulated {
        phases.iter().map(PhaseLatencies::total).sum()
    } else {
        elapsed_ms
    };
    let throughput = ThroughputStats::new(
        ok.iter().map(|r| r.usage.0).sum(),
        ok.iter().map(|r| r.usage.1).sum(),
        wall_ms,
    );
    let mean_prompt_tokens = ok.iter().map(|r| r.record.prompt_tokens as f64).sum::<f64>() / ok.len() as f64;
    Ok(EvalOutcome {
        report,
        n_failed,
        corpus_fraction: cfg.corpus_fraction,
        mean_prompt_tokens,
        latency: LatencyStats::from_phases(&phases),
        throughput,
        records: results.into_iter().map(|r| r.record).collect(),
    })
}

/// One run per k. A k larger than the corpus is clamped with a warning.
pub fn sweep_topk(
    cfg: &ExperimentConfig,
    ks: &[usize],
    benchmark: &[CompletionInstance],
    b: Backends<'_>,
) -> Result<Vec<EvalOutcome>> {
    ks.iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.retrieval.k = k;
            run_eval(&c, benchmark, b)
        })
        .collect()
}

/// Source files of `units` in a seeded shuffled order. A fraction keeps a
/// prefix of this order, so smaller subsets nest inside larger ones.
pub fn scale_order(units: &[RetrievalUnit], seed: u64) -> Vec<String> {
    let paths: BTreeSet<&str> = units.iter().map(|u| u.source_path.as_str()).collect();
    let mut paths: Vec<String> = paths.into_iter().map(String::from).collect();
    paths.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    paths
}

/// Units whose source file lies in the first `⌈fraction · files⌉` entries of
/// [`scale_order`]. Unit ids are kept.
pub fn scale_subset(units: &[RetrievalUnit], fraction: f64, seed: u64) -> Result<Vec<RetrievalUnit>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} is outside (0, 1]")));
    }
    let order = scale_order(units, seed);
    let n = ((fraction * order.len() as f64).ceil() as usize).min(order.len());
    let keep: HashSet<&str> = order[..n].iter().map(String::as_str).collect();
    let subset: Vec<RetrievalUnit> = units
        .iter()
        .filter(|u| keep.contains(u.source_path.as_str()))
        .cloned()
        .collect();
    if subset.is_empty() {
        return Err(Error::invalid(format!("fraction {fraction} selects no units")));
    }
    Ok(subset)
}

/// One run per corpus fraction, with indexes rebuilt over each subset.
/// The lexical index is rebuilt with the parameters of `full.lexical`;
/// vectors are reused from `full.vector` since embeddings do not depend on
/// the rest of the corpus.
pub fn sweep_scale(
    cfg: &ExperimentConfig,
    fractions: &[f64],
    benchmark: &[CompletionInstance],
    full: Backends<'_>,
) -> Result<Vec<EvalOutcome>> {
    fractions
        .iter()
        .map(|&fraction| {
            let units = scale_subset(full.units, fraction, cfg.retrieval.seed)?;
            let keep: HashSet<u32> = units.iter().map(|u| u.id).collect();
            let lexical = match full.lexical {
                Some(l) => Some(build_lexical_index(&units, l.params())?),
                None if cfg.retrieval.strategy == Strategy::SimBm25 => {
                    Some(build_lexical_index(&units, Bm25Params::default())?)
                }
                None => None,
            };
            let vector = full.vector.map(|v| v.subset(&keep));
            let symbol = full.symbol.map(|_| build_symbol_index(&units));
            let b = Backends {
                units: &units,
                lexical: lexical.as_ref(),
                vector: vector.as_ref(),
                symbol: symbol.as_ref(),
                ..full
            };
            let mut c = cfg.clone();
            c.corpus_fraction = fraction;
            run_eval(&c, benchmark, b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let s = PhaseStats::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.mean, s.p50, s.p95), (3.0, 3.0, 5.0));
        let one = PhaseStats::from_samples(&[7.0]);
        assert_eq!((one.p50, one.p95), (7.0, 7.0));
        assert_eq!(PhaseStats::from_samples(&[]), PhaseStats::default());
        let many: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = PhaseStats::from_samples(&many);
        assert_eq!((s.p50, s.p95), (50.0, 95.0));
    }

    #[test]
    fn throughput_rates() {
        let t = ThroughputStats::new(900, 100, 500.0);
        assert_eq!(t.tokens_per_second, 2000.0);
        assert_eq!(t.generation_tokens_per_second, 200.0);
        assert_eq!(ThroughputStats::new(1, 1, 0.0).tokens_per_second, 0.0);
    }

    #[test]
    fn instance_seeds_differ() {
        let seeds: HashSet<u64> = (0..1000).map(|i| instance_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig { corpus_fraction: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { concurrency: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
