//! Corpus generation and model training commands.

use std::fs;
use std::path::{Path, PathBuf};

use obfbench::seqmodels::{save_lm, save_seq2seq, train_lm, train_nmt, TrainConfig};
use obfbench::textkit::{
    gen_synthetic_corpus, read_corpus_with, read_vocab, write_corpus, write_vocab, ParallelCorpus,
};

use crate::config::RunConfig;
use crate::{CliError, Result};

pub struct ArtifactPaths {
    pub corpus: PathBuf,
    pub src_vocab: PathBuf,
    pub tgt_vocab: PathBuf,
    pub nmt_checkpoint: PathBuf,
    pub lm_checkpoint: PathBuf,
}

impl ArtifactPaths {
    /// Resolve paths from the config, defaulting into the output directory.
    pub fn resolve(cfg: &RunConfig) -> Self {
        let d = &cfg.out_dir;
        Self {
            corpus: cfg.corpus.clone().unwrap_or_else(|| d.join("corpus.tsv")),
            src_vocab: cfg.src_vocab.clone().unwrap_or_else(|| d.join("src.vocab")),
            tgt_vocab: cfg.tgt_vocab.clone().unwrap_or_else(|| d.join("tgt.vocab")),
            nmt_checkpoint: cfg
                .nmt_checkpoint
                .clone()
                .unwrap_or_else(|| d.join("nmt.obfb")),
            lm_checkpoint: cfg
                .lm_checkpoint
                .clone()
                .unwrap_or_else(|| d.join("lm.obfb")),
        }
    }
}

/// `gen-corpus`: write the synthetic corpus and both vocabulary files.
pub fn gen_corpus(cfg: &RunConfig) -> Result<ArtifactPaths> {
    let paths = ArtifactPaths::resolve(cfg);
    let corpus = gen_synthetic_corpus(&cfg.synth_spec(), cfg.corpus_pairs)?;
    ensure_parent(&paths.corpus)?;
    ensure_parent(&paths.src_vocab)?;
    ensure_parent(&paths.tgt_vocab)?;
    write_corpus(&paths.corpus, &corpus)?;
    write_vocab(&paths.src_vocab, &corpus.source_vocab)?;
    write_vocab(&paths.tgt_vocab, &corpus.target_vocab)?;
    Ok(paths)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// The training corpus: the configured file when present, else synthesized
/// directly from the language spec.
pub fn load_training_corpus(cfg: &RunConfig, paths: &ArtifactPaths) -> Result<ParallelCorpus> {
    if paths.corpus.exists() {
        let src_vocab = read_vocab(&paths.src_vocab)?;
        let tgt_vocab = read_vocab(&paths.tgt_vocab)?;
        Ok(read_corpus_with(&paths.corpus, &src_vocab, &tgt_vocab)?)
    } else if cfg.corpus.is_some() {
        Err(CliError::Data(format!(
            "corpus file {} does not exist",
            paths.corpus.display()
        )))
    } else {
        Ok(gen_synthetic_corpus(&cfg.synth_spec(), cfg.corpus_pairs)?)
    }
}

fn train_cfg(cfg: &RunConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: cfg.train_batch_size,
        learning_rate: cfg.train_lr,
        seed: cfg.train_seed,
        dims: cfg.model_dims,
    }
}

/// `train-nmt`: train the translator, save the checkpoint and the CSV log.
/// Returns the checkpoint path and the final held-out accuracy.
pub fn run_train_nmt(cfg: &RunConfig) -> Result<(PathBuf, f64)> {
    let paths = ArtifactPaths::resolve(cfg);
    let corpus = load_training_corpus(cfg, &paths)?;
    let (model, log) = train_nmt(&corpus, &train_cfg(cfg, cfg.train_epochs))?;
    ensure_parent(&paths.nmt_checkpoint)?;
    save_seq2seq(&paths.nmt_checkpoint, &model)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("train_nmt.csv"), log.to_csv())?;
    Ok((paths.nmt_checkpoint, log.final_heldout_acc()))
}

/// `train-lm`: train the fluency LM on the corpus source side.
pub fn run_train_lm(cfg: &RunConfig) -> Result<(PathBuf, f64)> {
    let paths = ArtifactPaths::resolve(cfg);
    let corpus = load_training_corpus(cfg, &paths)?;
    let (model, log) = train_lm(&corpus, &train_cfg(cfg, cfg.lm_epochs))?;
    ensure_parent(&paths.lm_checkpoint)?;
    save_lm(&paths.lm_checkpoint, &model)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("train_lm.csv"), log.to_csv())?;
    Ok((paths.lm_checkpoint, log.final_heldout_acc()))
}
