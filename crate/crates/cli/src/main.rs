//! `vocadapt`: corpus analytics, vocabulary adaptation and summary evaluation
//! from the command line.
//!
//! Every command writes into `--out` and finishes with a `manifest.json`
//! recording the effective configuration, input digests and output digests.
//! Exit codes: 0 on success, 1 when an internal invariant check fails, 2 for
//! usage and input errors.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use serde::Serialize;
use vocadapt::adapt::{
    avocado_vocab, build_candidate_vocabs, candidate_words, compare_vocabularies, emit_vocabulary,
    grid_search, KGrid, RankedSubwords, WordBag,
};
use vocadapt::concepts::ConceptDictionary;
use vocadapt::corpus::{
    clean_training_split, decontaminate, domain_similarity, freq_tsv, oov_stats, Corpus, OovMode,
    Side, WordFreq,
};
use vocadapt::metrics::{evaluate, load_pairs};
use vocadapt::tokenizer::{train_subword_vocab, Family, Segmenter, TrainerConfig, VocabMeta, Vocabulary};

use config::{set, RunConfig};
use manifest::Run;

#[derive(Parser)]
#[command(name = "vocadapt", version, about = "Task-aware subword vocabulary adaptation toolkit")]
struct Cli {
    /// JSON file with settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for resampling; required by evaluate.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid search and scoring.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON field holding the source text.
    #[arg(long, global = true)]
    field_source: Option<String>,
    /// JSON field holding the reference summary.
    #[arg(long, global = true)]
    field_summary: Option<String>,
    /// JSON field holding the document id.
    #[arg(long, global = true)]
    field_id: Option<String>,
    /// Family assumed for vocabulary files without a sidecar.
    #[arg(long, global = true)]
    family: Option<Family>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OOV rate, fragmentation histogram and optional domain overlap.
    Analyze {
        /// Corpus JSONL.
        #[arg(long)]
        corpus: PathBuf,
        /// Vocabulary file, one token per line.
        #[arg(long)]
        vocab: PathBuf,
        /// Corpus side to analyze: source or summary.
        #[arg(long)]
        side: Option<Side>,
        /// Count OOV words as distinct types or occurrences.
        #[arg(long)]
        oov_mode: Option<OovMode>,
        /// Second corpus to measure top-word overlap against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Side of the reference corpus to compare.
        #[arg(long)]
        reference_side: Option<Side>,
        /// Number of most frequent words compared for overlap.
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Build the adapted vocabulary for a target task.
    Adapt {
        /// Target task corpus; its summaries drive the search.
        #[arg(long)]
        target: PathBuf,
        /// In-domain collection the subword ranking is learned from.
        #[arg(long)]
        pac: PathBuf,
        /// Base vocabulary.
        #[arg(long)]
        base: PathBuf,
        /// Concept dictionary, `term<TAB>concept_id` per line.
        #[arg(long)]
        dict: PathBuf,
        /// Also build the threshold-driven baseline vocabulary.
        #[arg(long)]
        with_avocado: bool,
        /// Comma-separated A values (added in-domain subwords per target subword).
        #[arg(long, value_delimiter = ',')]
        a_grid: Option<Vec<f64>>,
        /// Explicit K values; replaces the start/step range.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["k_start", "k_step"])]
        k_values: Option<Vec<usize>>,
        /// First K of the range.
        #[arg(long)]
        k_start: Option<usize>,
        /// Step between K values.
        #[arg(long)]
        k_step: Option<usize>,
        /// Fragment-score slack above the best cell.
        #[arg(long)]
        margin: Option<f64>,
        /// Size of the in-domain subword vocabulary to train.
        #[arg(long)]
        v_pac_size: Option<usize>,
        /// Size of the target-word subword vocabulary to train.
        #[arg(long)]
        v_tgt_size: Option<usize>,
        /// Words split into more pieces than this are candidates.
        #[arg(long)]
        split_threshold: Option<usize>,
        /// Minimum character n-gram similarity for a dictionary match.
        #[arg(long)]
        concept_threshold: Option<f64>,
        /// min-pieces or longest-match.
        #[arg(long)]
        segmenter: Option<Segmenter>,
        /// Fragment score at which the baseline stops adding tokens.
        #[arg(long)]
        avocado_threshold: Option<f64>,
        /// Tokens the baseline adds per step.
        #[arg(long)]
        avocado_batch: Option<usize>,
    },
    /// Score candidate summaries against references.
    Evaluate {
        /// JSONL of `{id, candidate, reference}`.
        #[arg(long)]
        pairs: PathBuf,
        /// Concept dictionary; enables the concept-aware metrics.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Highest Rouge-N order.
        #[arg(long)]
        n_max: Option<usize>,
        /// Bootstrap resamples per aggregate.
        #[arg(long)]
        bootstrap_samples: Option<usize>,
        /// Confidence level of the interval, in percent.
        #[arg(long)]
        confidence: Option<f64>,
        /// Minimum character n-gram similarity for a dictionary match.
        #[arg(long)]
        concept_threshold: Option<f64>,
    },
    /// Decontaminate an in-domain collection and clean training splits.
    Prepare {
        /// In-domain collection to decontaminate.
        #[arg(long)]
        pac: PathBuf,
        /// Downstream corpora to decontaminate against.
        #[arg(long, num_args = 1.., required = true)]
        downstream: Vec<PathBuf>,
        /// Training splits to clean.
        #[arg(long, num_args = 1..)]
        train: Vec<PathBuf>,
        /// Concept dictionary used to clean training splits.
        #[arg(long)]
        dict: PathBuf,
        /// Words per shingle.
        #[arg(long)]
        shingle: Option<usize>,
        /// Minimum shingle Jaccard similarity for removal.
        #[arg(long)]
        jaccard: Option<f64>,
        /// Concept match threshold used when cleaning.
        #[arg(long)]
        clean_threshold: Option<f64>,
    },
    /// Compare two vocabularies grown from the same base at equal size.
    Compare {
        /// First vocabulary.
        #[arg(long)]
        a: PathBuf,
        /// Second vocabulary.
        #[arg(long)]
        b: PathBuf,
        /// Target corpus whose summaries are scored.
        #[arg(long)]
        target: PathBuf,
        /// min-pieces or longest-match.
        #[arg(long)]
        segmenter: Option<Segmenter>,
    },
    /// Train a subword vocabulary from one side of a corpus.
    TrainVocab {
        #[arg(long)]
        corpus: PathBuf,
        /// Vocabulary size.
        #[arg(long)]
        size: Option<usize>,
        /// Corpus side to train on.
        #[arg(long)]
        side: Option<Side>,
        /// Keep case instead of lowercasing.
        #[arg(long)]
        cased: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Adapt { .. } => "adapt",
            Command::Evaluate { .. } => "evaluate",
            Command::Prepare { .. } => "prepare",
            Command::Compare { .. } => "compare",
            Command::TrainVocab { .. } => "train-vocab",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_invariant(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn is_invariant(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| matches!(c.downcast_ref::<vocadapt::Error>(), Some(vocadapt::Error::Invariant(_))))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed.map(Some));
    set(&mut cfg.jobs, cli.jobs.map(Some));
    set(&mut cfg.out, cli.out.map(Some));
    set(&mut cfg.family, cli.family.map(Some));
    set(&mut cfg.fields.source, cli.field_source);
    set(&mut cfg.fields.summary, cli.field_summary);
    set(&mut cfg.fields.id, cli.field_id);

    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    if matches!(cli.command, Command::Evaluate { .. }) && cfg.seed.is_none() {
        bail!("evaluate requires --seed so bootstrap intervals are reproducible");
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("vocadapt-out"));
    let mut run = Run::start(cli.command.name(), &out)?;

    match cli.command {
        Command::Analyze {
            corpus,
            vocab,
            side,
            oov_mode,
            reference,
            reference_side,
            top_n,
        } => {
            set(&mut cfg.analyze.side, side);
            set(&mut cfg.analyze.oov_mode, oov_mode);
            set(&mut cfg.analyze.reference_side, reference_side);
            set(&mut cfg.analyze.top_n, top_n);
            analyze(&mut run, &cfg, &corpus, &vocab, reference.as_deref())?;
        }
        Command::Adapt {
            target,
            pac,
            base,
            dict,
            with_avocado,
            a_grid,
            k_values,
            k_start,
            k_step,
            margin,
            v_pac_size,
            v_tgt_size,
            split_threshold,
            concept_threshold,
            segmenter,
            avocado_threshold,
            avocado_batch,
        } => {
            let a = &mut cfg.adapt;
            set(&mut a.a_grid, a_grid);
            if let Some(values) = k_values {
                a.k_grid = KGrid::Values(values);
            } else if k_start.is_some() || k_step.is_some() {
                let (start, step) = match a.k_grid {
                    KGrid::Range { start, step } => (start, step),
                    KGrid::Values(_) => (5000, 5000),
                };
                a.k_grid = KGrid::Range {
                    start: k_start.unwrap_or(start),
                    step: k_step.unwrap_or(step),
                };
            }
            set(&mut a.margin, margin);
            set(&mut a.v_pac_target_size, v_pac_size.map(Some));
            set(&mut a.v_tgt_target_size, v_tgt_size.map(Some));
            set(&mut a.split_threshold, split_threshold);
            set(&mut a.concept_threshold, concept_threshold);
            set(&mut a.segmenter, segmenter);
            cfg.avocado.segmenter = a.segmenter;
            set(&mut cfg.avocado.threshold, avocado_threshold);
            set(&mut cfg.avocado.batch_size, avocado_batch);
            adapt(&mut run, &cfg, &target, &pac, &base, &dict, with_avocado)?;
        }
        Command::Evaluate {
            pairs,
            dict,
            n_max,
            bootstrap_samples,
            confidence,
            concept_threshold,
        } => {
            let m = &mut cfg.metrics;
            set(&mut m.n_max, n_max);
            set(&mut m.bootstrap_samples, bootstrap_samples);
            set(&mut m.confidence, confidence);
            set(&mut m.concept_threshold, concept_threshold);
            let seed = cfg.seed.expect("checked before the run started");
            evaluate_cmd(&mut run, &cfg, &pairs, dict.as_deref(), seed)?;
        }
        Command::Prepare {
            pac,
            downstream,
            train,
            dict,
            shingle,
            jaccard,
            clean_threshold,
        } => {
            set(&mut cfg.prepare.decontam.shingle, shingle);
            set(&mut cfg.prepare.decontam.jaccard, jaccard);
            set(&mut cfg.prepare.clean_threshold, clean_threshold);
            prepare(&mut run, &cfg, &pac, &downstream, &train, &dict)?;
        }
        Command::Compare {
            a,
            b,
            target,
            segmenter,
        } => {
            set(&mut cfg.adapt.segmenter, segmenter);
            // Sampled equalization is seeded; record the default explicitly.
            cfg.seed.get_or_insert(0);
            compare(&mut run, &cfg, &a, &b, &target)?;
        }
        Command::TrainVocab {
            corpus,
            size,
            side,
            cased,
        } => {
            set(&mut cfg.train.size, size);
            set(&mut cfg.train.side, side);
            if let Some(family) = cfg.family {
                cfg.train.family = family;
            }
            if cased {
                cfg.train.lowercase = false;
            }
            train_vocab(&mut run, &cfg, &corpus)?;
        }
    }
    run.finish(&cfg)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<String> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    Ok(json)
}

fn load_vocab(run: &mut Run, cfg: &RunConfig, path: &Path) -> Result<Vocabulary> {
    let meta = VocabMeta::new(cfg.family.unwrap_or(Family::WordPiece));
    let vocab = Vocabulary::load(path, Some(meta))?;
    run.input(path)?;
    Ok(vocab)
}

fn load_corpus(run: &mut Run, cfg: &RunConfig, path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let corpus = Corpus::load(path, &cfg.fields, vocab.normalizer())?;
    run.input(path)?;
    Ok(corpus)
}

fn load_dict(run: &mut Run, path: &Path) -> Result<ConceptDictionary> {
    let dict = ConceptDictionary::load(path)?;
    run.input(path)?;
    Ok(dict)
}

fn analyze(
    run: &mut Run,
    cfg: &RunConfig,
    corpus: &Path,
    vocab: &Path,
    reference: Option<&Path>,
) -> Result<()> {
    let a = &cfg.analyze;
    let vocab = load_vocab(run, cfg, vocab)?;
    let corpus = load_corpus(run, cfg, corpus, &vocab)?;
    let report = oov_stats(&corpus, &vocab, a.side, a.oov_mode)?;
    log::info!("median OOV {:.2}% over {} documents", report.median_oov_pct, corpus.len());
    run.write("oov_report.json", json_bytes(&report)?)?;

    let mut hist = String::from("pieces,words\n");
    for (pieces, words) in &report.split_histogram {
        let _ = writeln!(hist, "{pieces},{words}");
    }
    run.write("split_histogram.csv", hist)?;
    run.write("word_freq.tsv", freq_tsv(corpus.word_freq(a.side)))?;

    if let Some(path) = reference {
        let other = load_corpus(run, cfg, path, &vocab)?;
        let overlap = domain_similarity(corpus.word_freq(a.side), other.word_freq(a.reference_side), a.top_n)?;
        run.write("domain_overlap.json", json_bytes(&overlap)?)?;
    }
    Ok(())
}

fn adapt(
    run: &mut Run,
    cfg: &RunConfig,
    target: &Path,
    pac: &Path,
    base: &Path,
    dict: &Path,
    with_avocado: bool,
) -> Result<()> {
    let a = &cfg.adapt;
    a.validate()?;
    let base = load_vocab(run, cfg, base)?;
    let target = load_corpus(run, cfg, target, &base)?;
    let pac = load_corpus(run, cfg, pac, &base)?;
    let dict = load_dict(run, dict)?;

    let candidates = candidate_words(&target, &base, &dict, a)?;
    log::info!("{} candidate words", candidates.len());
    run.write("candidate_words.tsv", freq_tsv(&candidates))?;
    let (v_tgt_temp, v_pac) = build_candidate_vocabs(&candidates, &pac, &base, a)?;
    log::info!("{} target subwords, {} in-domain subwords", v_tgt_temp.len(), v_pac.len());
    v_tgt_temp.save(&run.path("v_tgt_temp.txt"))?;
    v_pac.save(&run.path("v_pac.txt"))?;
    run.written([run.path("v_tgt_temp.txt"), run.path("v_pac.txt")]);

    let bag = WordBag::from_freq(target.word_freq(Side::Summary));
    let result = grid_search(&bag, &v_tgt_temp, &v_pac, &base, a)?;
    log::info!(
        "chose A={} K={}: {} tokens, fragment score {:.6} (base {:.6})",
        result.chosen.a,
        result.chosen.k,
        result.chosen.candidate_vocab_size,
        result.chosen.fragment_score,
        result.base_fragment_score
    );
    let written = emit_vocabulary(&result, run.out())?;
    run.written(written);

    if with_avocado {
        let stream = avocado_stream(&target, &base)?;
        let av = avocado_vocab(&bag, &base, &stream, &cfg.avocado)?;
        let dir = run.path("avocado");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let written = av.vocab.save(&run.path("avocado/vocab.txt"))?;
        run.written(written);
        let mut added = String::new();
        for t in &av.added {
            added.push_str(t);
            added.push('\n');
        }
        run.write("avocado/added_tokens.txt", added)?;
        run.write("avocado/trace.json", json_bytes(&av.trace)?)?;
    }
    Ok(())
}

/// Subwords learned from every word of the target corpus, in learning order,
/// minus the base vocabulary.
fn avocado_stream(target: &Corpus, base: &Vocabulary) -> Result<RankedSubwords> {
    let mut freq: WordFreq = target.word_freq(Side::Source).clone();
    for (w, c) in target.word_freq(Side::Summary) {
        *freq.entry(w.clone()).or_insert(0) += c;
    }
    let trainer = TrainerConfig {
        meta: base.meta().clone(),
        target_size: usize::MAX,
    };
    let trained = train_subword_vocab(&freq, &trainer)?;
    let tokens = trained.tokens().iter().filter(|t| !base.contains(t)).cloned().collect();
    Ok(RankedSubwords::new(base.surface().clone(), tokens))
}

fn evaluate_cmd(run: &mut Run, cfg: &RunConfig, pairs: &Path, dict: Option<&Path>, seed: u64) -> Result<()> {
    let loaded = load_pairs(pairs)?;
    run.input(pairs)?;
    let dict = dict.map(|d| load_dict(run, d)).transpose()?;
    let report = evaluate(&loaded, dict.as_ref(), &cfg.metrics, seed)?;
    run.write("per_pair.csv", report.per_pair_csv())?;
    run.write("aggregate.json", report.aggregate_json()?)?;
    Ok(())
}

fn prepare(
    run: &mut Run,
    cfg: &RunConfig,
    pac: &Path,
    downstream: &[PathBuf],
    train: &[PathBuf],
    dict: &Path,
) -> Result<()> {
    let p = &cfg.prepare;
    let norm = vocadapt::text::Normalizer::UNCASED;
    let pac_corpus = Corpus::load(pac, &cfg.fields, norm)?;
    run.input(pac)?;
    let mut others = Vec::new();
    for path in downstream {
        others.push(Corpus::load(path, &cfg.fields, norm)?);
        run.input(path)?;
    }
    let dict = load_dict(run, dict)?;

    let (kept, removals) = decontaminate(&pac_corpus, &others, &p.decontam);
    log::info!("removed {} of {} in-domain documents", removals.len(), pac_corpus.len());
    let mut log_lines = String::new();
    for r in &removals {
        log_lines.push_str(&serde_json::to_string(r)?);
        log_lines.push('\n');
    }
    run.write("removals.jsonl", log_lines)?;
    run.write(&format!("{}.jsonl", pac_corpus.name()), kept.to_jsonl(&cfg.fields))?;

    #[derive(Serialize)]
    struct SplitReport {
        file: String,
        before: usize,
        after: usize,
        no_shared_concept: usize,
        summary_longer: usize,
    }
    #[derive(Serialize)]
    struct PrepareReport {
        pac_before: usize,
        pac_after: usize,
        removed_exact: usize,
        removed_jaccard: usize,
        train: Vec<SplitReport>,
    }
    let exact = removals
        .iter()
        .filter(|r| r.criterion == vocadapt::corpus::Criterion::Exact)
        .count();
    let mut report = PrepareReport {
        pac_before: pac_corpus.len(),
        pac_after: kept.len(),
        removed_exact: exact,
        removed_jaccard: removals.len() - exact,
        train: Vec::new(),
    };
    let mut names = BTreeMap::new();
    for path in train {
        let split = Corpus::load(path, &cfg.fields, norm)?;
        run.input(path)?;
        let name = format!("{}.clean.jsonl", split.name());
        if names.insert(name.clone(), ()).is_some() {
            bail!("two training splits would both be written to {name}");
        }
        let (cleaned, counts) = clean_training_split(&split, &dict, p.clean_threshold);
        run.write(&name, cleaned.to_jsonl(&cfg.fields))?;
        report.train.push(SplitReport {
            file: name,
            before: split.len(),
            after: cleaned.len(),
            no_shared_concept: counts.no_shared_concept,
            summary_longer: counts.summary_longer,
        });
    }
    run.write("prepare_report.json", json_bytes(&report)?)?;
    Ok(())
}

fn compare(run: &mut Run, cfg: &RunConfig, a: &Path, b: &Path, target: &Path) -> Result<()> {
    let va = load_vocab(run, cfg, a)?;
    let vb = load_vocab(run, cfg, b)?;
    let target = load_corpus(run, cfg, target, &va)?;
    let bag = WordBag::from_freq(target.word_freq(Side::Summary));
    let seed = cfg.seed.expect("set before the run started");
    let comparison = compare_vocabularies(&va, &vb, &bag, seed, cfg.adapt.segmenter)?;
    run.write("comparison.json", json_bytes(&comparison)?)?;
    Ok(())
}

fn train_vocab(run: &mut Run, cfg: &RunConfig, path: &Path) -> Result<()> {
    let t = &cfg.train;
    let mut meta = VocabMeta::new(t.family);
    if !t.lowercase {
        meta = meta.cased();
    }
    let corpus = Corpus::load(path, &cfg.fields, meta.normalizer())?;
    run.input(path)?;
    let trainer = TrainerConfig {
        meta,
        target_size: t.size,
    };
    let vocab = train_subword_vocab(corpus.word_freq(t.side), &trainer)?;
    log::info!("trained {} tokens", vocab.len());
    let written = vocab.save(&run.path("vocab.txt"))?;
    run.written(written);
    Ok(())
}
