use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obfbench::obfuscator::{attack, random_control, suffix_dropper};
use obfbench::textkit::tokenize;
use obfbench_cli::config::{Method, RunConfig};
use obfbench_cli::records::{fill_lm_loss, AttackRecord};
use obfbench_cli::suite::{example_seed, run_suite, SentenceSource, SuiteConfig};
use obfbench_cli::sweep::{sweep_iterations, sweep_target_length, SweepKind, SweepSpec};
use obfbench_cli::train::{gen_corpus, run_train_lm, run_train_nmt, ArtifactPaths};
use obfbench_cli::{CliError, Result};

/// Workbench for a single-token insertion attack on toy translation models.
#[derive(Parser)]
#[command(name = "obfbench", version, about)]
struct Cli {
    /// Run configuration file (flat key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the attack seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic parallel corpus and vocabulary files.
    GenCorpus,
    /// Train the translator and save its checkpoint.
    TrainNmt,
    /// Train the fluency language model and save its checkpoint.
    TrainLm,
    /// Attack a single (input, target) sentence pair and print the record.
    Attack {
        /// Input sentence (source-language tokens).
        #[arg(long)]
        input: String,
        /// Target sentence to hide.
        #[arg(long)]
        target: String,
        /// Method: obfuscator, suffix_dropper or random_control.
        #[arg(long, default_value = "obfuscator")]
        method: String,
        /// Include the per-iteration trace in the record.
        #[arg(long)]
        trace: bool,
    },
    /// Run the configured attack suite and write JSONL/CSV reports.
    Suite,
    /// Run a sweep (target_length or iteration_budget).
    Sweep {
        /// Sweep kind; defaults to the config's sweep_kind.
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated grid; defaults to the config's sweep_grid.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Rebuild and re-validate summaries from JSONL result files.
    Report {
        /// JSONL files to summarize.
        files: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.attack.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn suite_config(cfg: &RunConfig) -> SuiteConfig {
    let paths = ArtifactPaths::resolve(cfg);
    let sentences = match &cfg.corpus {
        Some(path) => SentenceSource::Corpus(path.clone()),
        None => SentenceSource::Synthetic(cfg.eval_spec()),
    };
    SuiteConfig {
        nmt_checkpoint: paths.nmt_checkpoint,
        lm_checkpoint: paths.lm_checkpoint,
        src_vocab: paths.src_vocab,
        tgt_vocab: paths.tgt_vocab,
        sentences,
        suite_size: cfg.suite_size,
        targets: cfg.targets.clone(),
        attack: cfg.attack,
        methods: cfg.methods.clone(),
        out_dir: cfg.out_dir.clone(),
        parallelism: cfg.parallelism,
        emit_trace: cfg.emit_trace,
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::GenCorpus => {
            let paths = gen_corpus(&cfg)?;
            println!(
                "wrote {} plus vocabularies {} and {}",
                paths.corpus.display(),
                paths.src_vocab.display(),
                paths.tgt_vocab.display()
            );
        }
        Cmd::TrainNmt => {
            let (path, acc) = run_train_nmt(&cfg)?;
            println!("saved {} (held-out token accuracy {acc:.4})", path.display());
        }
        Cmd::TrainLm => {
            let (path, acc) = run_train_lm(&cfg)?;
            println!("saved {} (held-out next-token accuracy {acc:.4})", path.display());
        }
        Cmd::Attack {
            input,
            target,
            method,
            trace,
        } => {
            let scfg = suite_config(&cfg);
            let ctx = SuiteConfig {
                targets: vec![target.clone()],
                ..scfg
            }
            .load()?;
            let x = tokenize(input, &ctx.src_vocab);
            if x.is_empty() {
                return Err(CliError::Usage("empty input sentence".into()));
            }
            let t = &ctx.targets[0];
            let method = match method.as_str() {
                "obfuscator" => Method::Obfuscator,
                "suffix_dropper" => Method::SuffixDropper,
                "random_control" => Method::RandomControl,
                other => {
                    return Err(CliError::Usage(format!("unknown method {other}")));
                }
            };
            let acfg = obfbench::obfuscator::AttackConfig {
                seed: example_seed(cfg.attack.seed, 0),
                ..cfg.attack
            };
            let mut result = match method {
                Method::Obfuscator => attack(&x, t, &ctx.nmt, &ctx.lm, &ctx.src_vocab, &acfg)?,
                Method::SuffixDropper => suffix_dropper(&x, t, &ctx.nmt, &ctx.src_vocab, &acfg)?,
                Method::RandomControl => {
                    random_control(&x, t, &ctx.nmt, Some(&ctx.lm), &ctx.src_vocab, &acfg)?
                }
            };
            fill_lm_loss(&mut result, &ctx.lm)?;
            let record = AttackRecord::render(
                0,
                method.name(),
                &x,
                t,
                &result,
                &acfg,
                &ctx.src_vocab,
                &ctx.tgt_vocab,
                *trace,
            )?;
            println!("{}", record.to_json_line());
        }
        Cmd::Suite => {
            let outcome = run_suite(&suite_config(&cfg))?;
            for (method, report, _) in &outcome.per_method {
                println!(
                    "{}: asr {:.3} mean_bleu {:.3} mean_perplexity {:.2}",
                    method.name(),
                    report.asr,
                    report.mean_bleu,
                    report.mean_perplexity
                );
            }
            println!("reports written to {}", cfg.out_dir.display());
        }
        Cmd::Sweep { kind, grid } => {
            let kind_str = kind
                .clone()
                .or_else(|| cfg.sweep_kind.clone())
                .ok_or_else(|| CliError::Usage("sweep needs --kind or sweep_kind".into()))?;
            let grid_values: Vec<usize> = match grid {
                Some(g) => g
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse()
                            .map_err(|_| CliError::Usage(format!("bad grid value {v:?}")))
                    })
                    .collect::<Result<_>>()?,
                None => cfg.sweep_grid.clone(),
            };
            let spec = SweepSpec {
                kind: SweepKind::parse(&kind_str)?,
                grid: grid_values,
                base: suite_config(&cfg),
            };
            let points = match spec.kind {
                SweepKind::TargetLength => sweep_target_length(&spec)?,
                SweepKind::IterationBudget => sweep_iterations(&spec)?,
            };
            for p in &points {
                println!("{},{},{}", p.value, p.asr, p.mean_distance);
            }
        }
        Cmd::Report { files } => {
            let summaries = obfbench_cli::report::run_report(files, &cfg.out_dir)?;
            for s in &summaries {
                println!(
                    "{} ({}): {} records, asr {:.3}",
                    s.file, s.method, s.records, s.asr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
