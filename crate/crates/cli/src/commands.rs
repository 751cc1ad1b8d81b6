use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use coderag::bench::{
    emit_charts, emit_report, measure_preparation, run_eval, sweep_scale, sweep_topk, Backends, BuiltIndex,
    EvalOutcome, LatencyStats, PrepBackend, PreparationStats, ReportFormat, ReportRow, ThroughputStats,
};
use coderag::corpus::{
    ingest, make_benchmark, pack_training_blocks, segment_all, split_holdout, CompletionInstance, RetrievalUnit,
    Sample, SourceFile, BENCHMARK_STORE, BLOCK_STORE, FILE_STORE, UNIT_STORE,
};
use coderag::providers::conformance::run_conformance;
use coderag::providers::{
    CompletionProvider, CopyOracleCompleter, EmbeddingProvider, HttpCompletionClient, HttpEmbeddingClient,
    MockEmbedder,
};
use coderag::retrieval::{LexicalIndex, Strategy, SymbolIndex, VectorIndex};
use coderag::store::{read_store, write_jsonl, StoreHeader};
use coderag::tokenizer::{CodeTokenizer, Tokenizer};

use crate::config::Config;
use crate::{Backend, Cli, Command, Format, RunArgs, UsageError};

const TOK: CodeTokenizer = CodeTokenizer;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if cli.mock_providers {
        cfg.providers.mock = true;
    }
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!(UsageError("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Ingest { root, out, holdout } => cmd_ingest(&cfg, &root, &out, holdout),
        Command::Index { units, backend, out } => cmd_index(&cfg, &units, backend, &out),
        Command::BenchMake { files, out, window, stride, sample, seed } => {
            if let Some(w) = window {
                cfg.corpus.window = w as usize;
            }
            if let Some(s) = stride {
                cfg.corpus.stride = s as usize;
            }
            if sample.is_some() {
                cfg.corpus.sample = sample;
            }
            if let Some(s) = seed {
                cfg.corpus.seed = s;
            }
            cmd_bench_make(&cfg, &files, &out)
        }
        Command::Eval { run, k } => {
            apply_run_args(&mut cfg, &run);
            if let Some(k) = k {
                cfg.retrieval.k = k;
            }
            cmd_eval(&cfg, &run)
        }
        Command::Sweep { run, k, fractions } => {
            apply_run_args(&mut cfg, &run);
            if let Some(list) = k {
                cfg.bench.ks = parse_ks(&list)?;
            }
            cmd_sweep(&cfg, &run, fractions)
        }
        Command::Report { input, out, format } => {
            if let Some(f) = format {
                cfg.bench.report_format = match f {
                    Format::Csv => ReportFormat::Csv,
                    Format::Json => ReportFormat::Json,
                };
            }
            cmd_report(&cfg, &input, &out)
        }
        Command::Ftprep { files, out, seq_len } => {
            if let Some(l) = seq_len {
                cfg.corpus.seq_len = l as usize;
            }
            cmd_ftprep(&cfg, &files, &out)
        }
        Command::Conformance { endpoint, model } => {
            let endpoint = endpoint.unwrap_or_else(|| cfg.providers.embedding.endpoint.clone());
            let model = model.unwrap_or_else(|| cfg.providers.embedding.model_name.clone());
            cmd_conformance(&endpoint, &model, cfg.providers.embedding.timeout_ms)
        }
    }
}

fn apply_run_args(cfg: &mut Config, run: &RunArgs) {
    if let Some(s) = run.strategy {
        cfg.retrieval.strategy = s;
    }
    if let Some(s) = run.seed {
        cfg.retrieval.seed = s;
    }
}

/// `a..b` (inclusive) or a comma-separated list.
fn parse_ks(list: &str) -> Result<Vec<usize>> {
    let bad = || UsageError(format!("bad K list {list:?}; use 0..5 or 0,1,3"));
    let ks: Vec<usize> = if let Some((a, b)) = list.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            bail!(bad());
        }
        (a..=b).collect()
    } else {
        list.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if ks.is_empty() {
        bail!(bad());
    }
    Ok(ks)
}

fn check_tokenizer(path: &Path, header: &StoreHeader) -> Result<()> {
    if header.tokenizer_id != TOK.id() {
        bail!(coderag::Error::Format {
            path: path.to_path_buf(),
            message: format!("store uses tokenizer {}, expected {}", header.tokenizer_id, TOK.id()),
        });
    }
    Ok(())
}

fn read_files(path: &Path) -> Result<Vec<SourceFile>> {
    let (header, files) = read_store::<SourceFile>(path, FILE_STORE)?;
    check_tokenizer(path, &header)?;
    Ok(files)
}

fn read_units(path: &Path) -> Result<Vec<RetrievalUnit>> {
    let (header, units) = read_store::<RetrievalUnit>(path, UNIT_STORE)?;
    check_tokenizer(path, &header)?;
    if units.is_empty() {
        bail!(coderag::Error::Invalid(format!("{} holds no units", path.display())));
    }
    Ok(units)
}

fn cmd_ingest(cfg: &Config, root: &Path, out: &Path, holdout: Option<f64>) -> Result<()> {
    let (files, report) = ingest(root, &cfg.corpus.filter, &TOK)?;
    println!(
        "scanned {} files: kept {}, removed {} duplicate, {} generated, {} comment-heavy, {} long-define, {} unreadable",
        report.scanned(),
        report.kept,
        report.removed_duplicate,
        report.removed_generated,
        report.removed_comment_heavy,
        report.removed_long_define,
        report.removed_unreadable
    );
    if files.is_empty() {
        bail!(coderag::Error::Invalid(format!("no files kept under {}", root.display())));
    }
    let (files, held) = match holdout {
        Some(f) => split_holdout(files, f, cfg.corpus.seed)?,
        None => (files, Vec::new()),
    };
    let units = segment_all(&files, &TOK);
    write_jsonl(&out.join("files.jsonl"), &StoreHeader::new(FILE_STORE, TOK.id()), &files)?;
    write_jsonl(&out.join("units.jsonl"), &StoreHeader::new(UNIT_STORE, TOK.id()), &units)?;
    if holdout.is_some() {
        write_jsonl(&out.join("holdout_files.jsonl"), &StoreHeader::new(FILE_STORE, TOK.id()), &held)?;
        println!("held out {} files for benchmarking", held.len());
    }
    let report_path = out.join("filter_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!("{} files, {} retrieval units written to {}", files.len(), units.len(), out.display());
    Ok(())
}

fn embedder(cfg: &Config) -> Result<Box<dyn EmbeddingProvider>> {
    let e = &cfg.providers.embedding;
    Ok(if cfg.providers.mock {
        Box::new(MockEmbedder::new(e.dims, cfg.providers.mock_seed))
    } else {
        Box::new(HttpEmbeddingClient::new(e.clone())?)
    })
}

fn completer(cfg: &Config, window: usize) -> Result<Box<dyn CompletionProvider>> {
    Ok(if cfg.providers.mock {
        Box::new(CopyOracleCompleter::new(window).with_latency(cfg.providers.mock_latency))
    } else {
        Box::new(HttpCompletionClient::new(cfg.providers.completion.clone())?)
    })
}

fn print_preparation(backend: &str, stats: &PreparationStats) {
    println!(
        "{backend} preparation: embedding {:.2} ms, indexing {:.2} ms",
        stats.get("embedding"),
        stats.get("indexing")
    );
}

fn cmd_index(cfg: &Config, units_path: &Path, backend: Backend, out: &Path) -> Result<()> {
    let units = read_units(units_path)?;
    let emb;
    let (name, prep) = match backend {
        Backend::Bm25 => ("bm25", PrepBackend::Bm25(cfg.retrieval.bm25())),
        Backend::Symbol => ("symbol", PrepBackend::Symbol),
        Backend::Vector => {
            emb = embedder(cfg)?;
            ("vector", PrepBackend::Vector(emb.as_ref()))
        }
    };
    let (stats, built) = measure_preparation(&units, prep)?;
    match built {
        BuiltIndex::Bm25(ix) => {
            ix.save(out)?;
            println!("bm25 index: N={} documents, {} terms, avgdl {:.2}", ix.doc_count(), ix.term_count(), ix.avg_doc_len());
        }
        BuiltIndex::Vector(ix) => {
            ix.save(out)?;
            println!("vector index: {} vectors of {} dims", ix.len(), ix.dims());
        }
        BuiltIndex::Symbol(ix) => {
            ix.save(out)?;
            println!("symbol index: {} names, {} definitions", ix.name_count(), ix.def_count());
        }
    }
    print_preparation(name, &stats);
    Ok(())
}

fn cmd_bench_make(cfg: &Config, files_path: &Path, out: &Path) -> Result<()> {
    let files = read_files(files_path)?;
    let c = &cfg.corpus;
    let sample = c.sample.map(|count| Sample { count, seed: c.seed });
    let bench = make_benchmark(&files, c.window, c.stride, sample, &TOK)?;
    let s = bench.stats;
    println!(
        "{} candidates; removed {} empty, {} single-symbol, {} comment targets; {} eligible",
        s.candidates, s.removed_empty, s.removed_single_symbol, s.removed_comment, s.eligible
    );
    if bench.instances.is_empty() {
        bail!(coderag::Error::Invalid("benchmark has 0 instances".into()));
    }
    let mut header = StoreHeader::new(BENCHMARK_STORE, TOK.id());
    header.window = Some(bench.window);
    header.stride = Some(bench.stride);
    write_jsonl(out, &header, &bench.instances)?;
    println!("{} instances", bench.instances.len());
    Ok(())
}

/// Indexes, units and providers for evaluation runs.
struct Loaded {
    units: Vec<RetrievalUnit>,
    benchmark: Vec<CompletionInstance>,
    lexical: Option<LexicalIndex>,
    vector: Option<VectorIndex>,
    symbol: Option<SymbolIndex>,
    embedder: Option<Box<dyn EmbeddingProvider>>,
    completer: Box<dyn CompletionProvider>,
}

impl Loaded {
    fn backends(&self) -> Backends<'_> {
        Backends {
            units: &self.units,
            lexical: self.lexical.as_ref(),
            vector: self.vector.as_ref(),
            symbol: self.symbol.as_ref(),
            embedder: self.embedder.as_deref(),
            completer: self.completer.as_ref(),
            tokenizer: &TOK,
        }
    }
}

fn load(cfg: &Config, run: &RunArgs) -> Result<Loaded> {
    let units = read_units(&run.units)?;
    let (header, benchmark) = read_store::<CompletionInstance>(&run.benchmark, BENCHMARK_STORE)?;
    check_tokenizer(&run.benchmark, &header)?;
    let window = header.window.unwrap_or(cfg.corpus.window);
    let strategy = cfg.retrieval.strategy;

    let lexical = match (&run.bm25, strategy) {
        (Some(p), _) => Some(LexicalIndex::load(p)?),
        (None, Strategy::SimBm25) => match measure_preparation(&units, PrepBackend::Bm25(cfg.retrieval.bm25()))?.1 {
            BuiltIndex::Bm25(ix) => Some(ix),
            _ => unreachable!("bm25 preparation builds a lexical index"),
        },
        _ => None,
    };
    let symbol = match (&run.symbol, strategy) {
        (Some(p), _) => Some(SymbolIndex::load(p)?),
        (None, Strategy::Dependency) => match measure_preparation(&units, PrepBackend::Symbol)?.1 {
            BuiltIndex::Symbol(ix) => Some(ix),
            _ => unreachable!("symbol preparation builds a symbol index"),
        },
        _ => None,
    };
    let (embedder, vector) = if strategy == Strategy::SimVector || run.vector.is_some() {
        let emb = embedder(cfg)?;
        let vector = match &run.vector {
            Some(p) => VectorIndex::load(p)?,
            None => {
                let (stats, built) = measure_preparation(&units, PrepBackend::Vector(emb.as_ref()))?;
                print_preparation("vector", &stats);
                match built {
                    BuiltIndex::Vector(ix) => ix,
                    _ => unreachable!("vector preparation builds a vector index"),
                }
            }
        };
        if vector.dims() != emb.dims() {
            bail!(coderag::Error::Invalid(format!(
                "vector index has {} dims, embedding provider {}",
                vector.dims(),
                emb.dims()
            )));
        }
        (Some(emb), Some(vector))
    } else {
        (None, None)
    };
    Ok(Loaded {
        units,
        benchmark,
        lexical,
        vector,
        symbol,
        embedder,
        completer: completer(cfg, window)?,
    })
}

/// Persisted per run next to its record log.
#[derive(Debug, Serialize, Deserialize)]
struct RunSummary {
    row: ReportRow,
    latency: LatencyStats,
    throughput: ThroughputStats,
}

fn run_name(row: &ReportRow) -> String {
    format!("{}_k{}_f{:.2}", row.strategy, row.k, row.corpus_fraction)
}

fn save_run(out: &Path, outcome: &EvalOutcome) -> Result<ReportRow> {
    let row = outcome.row();
    let name = run_name(&row);
    outcome.write_records(&out.join(format!("{name}.records.jsonl")))?;
    let summary = RunSummary {
        row: row.clone(),
        latency: outcome.latency,
        throughput: outcome.throughput,
    };
    let path = out.join(format!("{name}.summary.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{} k={} fraction={:.2}: n={} failed={} EM={:.2} ES={:.2} BLEU={:.2} prompt_tokens={:.2} tok/s={:.2} gen_tok/s={:.2}",
        row.strategy,
        row.k,
        row.corpus_fraction,
        row.n_instances,
        row.n_failed,
        row.em_pct,
        row.es_pct,
        row.bleu_pct,
        row.mean_prompt_tokens,
        row.tokens_per_second,
        row.generation_tokens_per_second
    );
    Ok(row)
}

fn cmd_eval(cfg: &Config, run: &RunArgs) -> Result<()> {
    let loaded = load(cfg, run)?;
    let outcome = run_eval(&cfg.experiment(), &loaded.benchmark, loaded.backends())?;
    std::fs::create_dir_all(&run.out).with_context(|| format!("creating {}", run.out.display()))?;
    save_run(&run.out, &outcome)?;
    Ok(())
}

fn cmd_sweep(cfg: &Config, run: &RunArgs, fractions: Option<Vec<f64>>) -> Result<()> {
    let loaded = load(cfg, run)?;
    let exp = cfg.experiment();
    let scale = fractions.is_some();
    let outcomes = match fractions {
        Some(f) => sweep_scale(&exp, &f, &loaded.benchmark, loaded.backends())?,
        None => sweep_topk(&exp, &cfg.bench.ks, &loaded.benchmark, loaded.backends())?,
    };
    std::fs::create_dir_all(&run.out).with_context(|| format!("creating {}", run.out.display()))?;
    let rows = outcomes.iter().map(|o| save_run(&run.out, o)).collect::<Result<Vec<_>>>()?;
    emit_report(&rows, cfg.bench.report_format, &run.out)?;
    if rows.len() >= 2 {
        let charts = if scale { emit_charts(&run.out, &[], &rows)? } else { emit_charts(&run.out, &rows, &[])? };
        for c in charts {
            println!("chart {}", c.display());
        }
    } else {
        println!("a single run has nothing to chart");
    }
    Ok(())
}

fn cmd_report(cfg: &Config, input: &Path, out: &Path) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".summary.json")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(coderag::Error::Invalid(format!("no run summaries in {}", input.display())));
    }
    let rows = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let s: RunSummary = serde_json::from_str(&text).map_err(|e| coderag::Error::Format {
                path: p.clone(),
                message: e.to_string(),
            })?;
            Ok(s.row)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = emit_report(&rows, cfg.bench.report_format, out)?;
    println!("{} rows written to {}", rows.len(), table.display());

    let (topk, scale) = chartable(&rows);
    if topk.is_empty() && scale.is_empty() {
        println!("no series with two or more points to chart");
    } else {
        for c in emit_charts(out, &topk, &scale)? {
            println!("chart {}", c.display());
        }
    }
    Ok(())
}

/// Full-corpus rows of strategies with several K values, and rows of
/// (strategy, K) pairs run at several corpus fractions.
fn chartable(rows: &[ReportRow]) -> (Vec<ReportRow>, Vec<ReportRow>) {
    let mut ks: BTreeMap<Strategy, BTreeSet<usize>> = BTreeMap::new();
    let mut fractions: BTreeMap<(Strategy, usize), BTreeSet<u64>> = BTreeMap::new();
    for r in rows {
        if r.corpus_fraction == 1.0 {
            ks.entry(r.strategy).or_default().insert(r.k);
        }
        fractions.entry((r.strategy, r.k)).or_default().insert(r.corpus_fraction.to_bits());
    }
    let topk = rows
        .iter()
        .filter(|r| r.corpus_fraction == 1.0 && ks[&r.strategy].len() >= 2)
        .cloned()
        .collect();
    // one series per strategy: the K run at the most fractions, smallest K on ties
    let mut best: BTreeMap<Strategy, (usize, usize)> = BTreeMap::new();
    for (&(strategy, k), f) in &fractions {
        if f.len() >= 2 && best.get(&strategy).is_none_or(|&(_, n)| f.len() > n) {
            best.insert(strategy, (k, f.len()));
        }
    }
    let scale = rows
        .iter()
        .filter(|r| best.get(&r.strategy).is_some_and(|&(k, _)| k == r.k))
        .cloned()
        .collect();
    (topk, scale)
}

fn cmd_ftprep(cfg: &Config, files_path: &Path, out: &Path) -> Result<()> {
    let files = read_files(files_path)?;
    if files.is_empty() || files.iter().all(|f| f.token_count == 0) {
        bail!(coderag::Error::Invalid("corpus is empty".into()));
    }
    let packed = pack_training_blocks(&files, cfg.corpus.seq_len, &TOK)?;
    let mut header = StoreHeader::new(BLOCK_STORE, TOK.id());
    header.window = Some(packed.block_len);
    write_jsonl(&out.join("training_blocks.jsonl"), &header, &packed.blocks)?;
    let vocab_path = out.join("vocab.json");
    std::fs::write(&vocab_path, serde_json::to_string(packed.vocab.tokens())? + "\n")
        .with_context(|| format!("writing {}", vocab_path.display()))?;
    println!(
        "{} blocks of {} tokens from a {}-token stream ({} tokens dropped)",
        packed.blocks.len(),
        packed.block_len,
        packed.stream_len,
        packed.stream_len - packed.blocks.len() * packed.block_len
    );
    Ok(())
}

fn cmd_conformance(endpoint: &str, model: &str, timeout_ms: u64) -> Result<()> {
    let report = run_conformance(endpoint, model, timeout_ms);
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    if !report.passed() {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        bail!(coderag::providers::ProviderError::Protocol(format!(
            "{failed} conformance checks failed against {endpoint}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_lists() {
        assert_eq!(parse_ks("0..5").unwrap(), [0, 1, 2, 3, 4, 5]);
        assert_eq!(parse_ks("0,2, 4").unwrap(), [0, 2, 4]);
        assert!(parse_ks("5..1").is_err());
        assert!(parse_ks("x").is_err());
    }
}
