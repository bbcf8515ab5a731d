//! Suite execution: every (sentence, target, method) attack, sharded over a
//! worker pool, with canonical JSONL/CSV outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use obfbench::metrics::{aggregate, MetricReport};
use obfbench::obfuscator::{attack, random_control, suffix_dropper, AttackConfig, AttackResult};
use obfbench::seqmodels::{load_lm, load_seq2seq, CausalLMModel, Seq2SeqModel};
use obfbench::textkit::{
    gen_synthetic_corpus, read_corpus_with, read_vocab, tokenize, SyntheticLangSpec, TokenSeq,
    Vocabulary, UNK_ID,
};

use crate::config::Method;
use crate::records::{fill_lm_loss, AttackRecord};
use crate::{CliError, Result};

/// Where the suite's input sentences come from.
#[derive(Clone, Debug)]
pub enum SentenceSource {
    /// Source side of a corpus file (tokenized against the suite vocabs).
    Corpus(PathBuf),
    /// Freshly generated synthetic sentences.
    Synthetic(SyntheticLangSpec),
}

/// A fully specified suite run.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub nmt_checkpoint: PathBuf,
    pub lm_checkpoint: PathBuf,
    pub src_vocab: PathBuf,
    pub tgt_vocab: PathBuf,
    pub sentences: SentenceSource,
    pub suite_size: usize,
    pub targets: Vec<String>,
    pub attack: AttackConfig,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub emit_trace: bool,
}

/// Loaded artifacts shared by every attack in a run.
pub struct SuiteContext {
    pub nmt: Seq2SeqModel,
    pub lm: CausalLMModel,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub sentences: Vec<TokenSeq>,
    pub targets: Vec<TokenSeq>,
}

/// Per-example seed: mixes the base seed with the example id so shards are
/// independent of worker layout.
pub fn example_seed(base: u64, id: usize) -> u64 {
    base ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl SuiteConfig {
    /// Load checkpoints and vocabularies, generate or read the evaluation
    /// sentences, and validate everything up front — before any attack.
    pub fn load(&self) -> Result<SuiteContext> {
        if self.targets.is_empty() {
            return Err(CliError::Usage("suite needs at least one target".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Usage("suite needs at least one method".into()));
        }
        let src_vocab = read_vocab(&self.src_vocab)?;
        let tgt_vocab = read_vocab(&self.tgt_vocab)?;
        let nmt = load_seq2seq(&self.nmt_checkpoint)?;
        let lm = load_lm(&self.lm_checkpoint)?;
        if nmt.src_vocab_size != src_vocab.size() || nmt.tgt_vocab_size != tgt_vocab.size() {
            return Err(CliError::Data(format!(
                "translator checkpoint expects vocabularies {}x{}, files have {}x{}",
                nmt.src_vocab_size,
                nmt.tgt_vocab_size,
                src_vocab.size(),
                tgt_vocab.size()
            )));
        }
        if lm.vocab_size != src_vocab.size() {
            return Err(CliError::Data(format!(
                "LM checkpoint expects vocabulary {}, file has {}",
                lm.vocab_size,
                src_vocab.size()
            )));
        }
        let sentences: Vec<TokenSeq> = match &self.sentences {
            SentenceSource::Corpus(path) => {
                let corpus = read_corpus_with(path, &src_vocab, &tgt_vocab)?;
                corpus
                    .pairs
                    .into_iter()
                    .take(self.suite_size)
                    .map(|(s, _)| s)
                    .collect()
            }
            SentenceSource::Synthetic(spec) => {
                if spec.vocab_size + 4 != src_vocab.size() {
                    return Err(CliError::Data(format!(
                        "synthetic spec vocab {} disagrees with vocabulary file {}",
                        spec.vocab_size,
                        src_vocab.size()
                    )));
                }
                gen_synthetic_corpus(spec, self.suite_size)?
                    .pairs
                    .into_iter()
                    .map(|(s, _)| s)
                    .collect()
            }
        };
        if sentences.is_empty() {
            return Err(CliError::Data("no evaluation sentences".into()));
        }
        let mut targets = Vec::with_capacity(self.targets.len());
        for t in &self.targets {
            let seq = tokenize(t, &src_vocab);
            if seq.is_empty() {
                return Err(CliError::Usage(format!("empty target sentence {t:?}")));
            }
            if seq.ids().contains(&UNK_ID) {
                return Err(CliError::Usage(format!(
                    "target {t:?} contains tokens outside the source vocabulary"
                )));
            }
            targets.push(seq);
        }
        // Length preflight so errors surface before any attack runs.
        let max_len = nmt.dims.max_len.min(lm.dims.max_len);
        for x in &sentences {
            for t in &targets {
                if x.len() + 1 + t.len() + 1 > max_len {
                    return Err(CliError::Data(format!(
                        "sentence of {} tokens with target of {} exceeds model capacity {}",
                        x.len(),
                        t.len(),
                        max_len
                    )));
                }
            }
        }
        Ok(SuiteContext {
            nmt,
            lm,
            src_vocab,
            tgt_vocab,
            sentences,
            targets,
        })
    }
}

fn run_one(
    ctx: &SuiteContext,
    method: Method,
    x: &TokenSeq,
    t: &TokenSeq,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let mut result = match method {
        Method::Obfuscator => attack(x, t, &ctx.nmt, &ctx.lm, &ctx.src_vocab, cfg)?,
        Method::SuffixDropper => suffix_dropper(x, t, &ctx.nmt, &ctx.src_vocab, cfg)?,
        Method::RandomControl => {
            random_control(x, t, &ctx.nmt, Some(&ctx.lm), &ctx.src_vocab, cfg)?
        }
    };
    fill_lm_loss(&mut result, &ctx.lm)?;
    Ok(result)
}

/// Run one method over every (sentence, target) pair, sharded across
/// `parallelism` workers. Results come back ordered by example id, so the
/// worker count never changes any output byte.
pub fn run_method(
    ctx: &SuiteContext,
    method: Method,
    base: &AttackConfig,
    parallelism: usize,
) -> Result<Vec<(usize, AttackResult)>> {
    let n_targets = ctx.targets.len();
    let jobs: Vec<(usize, usize, usize)> = (0..ctx.sentences.len())
        .flat_map(|si| (0..n_targets).map(move |ti| (si * n_targets + ti, si, ti)))
        .collect();
    let workers = parallelism.max(1).min(jobs.len().max(1));

    let outputs: Vec<Result<Vec<(usize, AttackResult)>>> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let shard: Vec<(usize, usize, usize)> = jobs
                .iter()
                .skip(w)
                .step_by(workers)
                .copied()
                .collect();
            let base = *base;
            handles.push(scope.spawn(move || {
                let mut out = Vec::with_capacity(shard.len());
                for (id, si, ti) in shard {
                    let cfg = AttackConfig {
                        seed: example_seed(base.seed, id),
                        ..base
                    };
                    let result = run_one(ctx, method, &ctx.sentences[si], &ctx.targets[ti], &cfg)?;
                    out.push((id, result));
                }
                Ok(out)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("suite worker panicked"))
            .collect()
    });

    let mut merged = Vec::with_capacity(jobs.len());
    for shard in outputs {
        merged.extend(shard?);
    }
    merged.sort_by_key(|(id, _)| *id);
    Ok(merged)
}

/// Everything a finished suite produced, per method.
pub struct SuiteOutcome {
    pub per_method: Vec<(Method, MetricReport, Vec<(usize, AttackResult)>)>,
}

/// Run a full suite: attacks, aggregation, and JSONL/CSV/JSON emission.
/// Exit is successful even when the attack never succeeds; the numbers are
/// the result.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let ctx = cfg.load()?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let mut log = RunLog::create(&cfg.out_dir.join("run.log"))?;
    let mut outcome = SuiteOutcome {
        per_method: Vec::new(),
    };
    for &method in &cfg.methods {
        let start = Instant::now();
        let results = run_method(&ctx, method, &cfg.attack, cfg.parallelism)?;
        log.line(&format!(
            "{}: {} attacks in {:.1?}",
            method.name(),
            results.len(),
            start.elapsed()
        ))?;

        let records: Vec<AttackRecord> = results
            .iter()
            .map(|(id, r)| {
                let (si, ti) = (id / ctx.targets.len(), id % ctx.targets.len());
                AttackRecord::render(
                    *id,
                    method.name(),
                    &ctx.sentences[si],
                    &ctx.targets[ti],
                    r,
                    &AttackConfig {
                        seed: example_seed(cfg.attack.seed, *id),
                        ..cfg.attack
                    },
                    &ctx.src_vocab,
                    &ctx.tgt_vocab,
                    cfg.emit_trace,
                )
            })
            .collect::<Result<_>>()?;
        let jsonl: String = records
            .iter()
            .map(|r| r.to_json_line() + "\n")
            .collect();
        fs::write(cfg.out_dir.join(format!("{}.jsonl", method.name())), jsonl)?;

        // Beta is an obfuscator-side constraint; the baselines never
        // enforce it, so their aggregation must not either.
        let beta = match method {
            Method::Obfuscator => cfg.attack.beta,
            _ => None,
        };
        let plain: Vec<AttackResult> = results.iter().map(|(_, r)| r.clone()).collect();
        let report = aggregate(&plain, cfg.attack.alpha, beta, &ctx.src_vocab)?;
        fs::write(
            cfg.out_dir.join(format!("{}.csv", method.name())),
            report.to_csv(),
        )?;
        outcome.per_method.push((method, report, results));
    }

    let summary: Vec<serde_json::Value> = outcome
        .per_method
        .iter()
        .map(|(m, report, _)| {
            serde_json::json!({
                "method": m.name(),
                "asr": report.asr,
                "mean_bleu": report.mean_bleu,
                "mean_perplexity": report.mean_perplexity,
                "mean_lm_loss": report.mean_lm_loss,
                "mean_edit_distance": report.mean_edit_distance,
            })
        })
        .collect();
    fs::write(
        cfg.out_dir.join("report.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    Ok(outcome)
}

/// Timestamped log, kept apart from the reproducible data files.
struct RunLog {
    file: fs::File,
    started: Instant,
}

impl RunLog {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            file: fs::File::create(path)?,
            started: Instant::now(),
        })
    }

    fn line(&mut self, msg: &str) -> Result<()> {
        writeln!(self.file, "[{:>10.3?}] {msg}", self.started.elapsed())?;
        Ok(())
    }
}
