//! The flat key-value run configuration.
//!
//! One file fully determines a run. Lines are `key = value`; `#` starts a
//! comment; `target` and `method` may repeat to build lists. Unknown keys
//! are errors so typos cannot silently change an experiment.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use obfbench::obfuscator::{AttackConfig, Optimizer};
use obfbench::seqmodels::ModelDims;
use obfbench::textkit::{ReorderRule, SyntheticLangSpec};

use crate::{CliError, Result};

/// Which attack methods a suite runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Obfuscator,
    SuffixDropper,
    RandomControl,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Obfuscator => "obfuscator",
            Method::SuffixDropper => "suffix_dropper",
            Method::RandomControl => "random_control",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "obfuscator" => Ok(Method::Obfuscator),
            "suffix_dropper" => Ok(Method::SuffixDropper),
            "random_control" => Ok(Method::RandomControl),
            other => Err(CliError::Usage(format!(
                "unknown method {other}; expected obfuscator, suffix_dropper or random_control"
            ))),
        }
    }
}

/// Everything a run can need. Subcommands validate the subset they use.
#[derive(Clone, Debug)]
pub struct RunConfig {
    // Synthetic language and training corpus.
    pub synth_vocab_size: usize,
    pub synth_min_len: usize,
    pub synth_max_len: usize,
    pub synth_reorder: ReorderRule,
    pub synth_seed: u64,
    pub corpus_pairs: usize,

    // Evaluation sentences for suites and sweeps.
    pub eval_min_len: usize,
    pub eval_max_len: usize,
    pub eval_seed: u64,
    pub suite_size: usize,

    // Model training.
    pub train_epochs: usize,
    pub lm_epochs: usize,
    pub train_batch_size: usize,
    pub train_lr: f64,
    pub train_seed: u64,
    pub model_dims: ModelDims,

    // Artifact paths.
    pub corpus: Option<PathBuf>,
    pub src_vocab: Option<PathBuf>,
    pub tgt_vocab: Option<PathBuf>,
    pub nmt_checkpoint: Option<PathBuf>,
    pub lm_checkpoint: Option<PathBuf>,

    // Attack hyperparameters.
    pub attack: AttackConfig,

    // Suite.
    pub targets: Vec<String>,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub emit_trace: bool,

    // Sweep.
    pub sweep_kind: Option<String>,
    pub sweep_grid: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth_vocab_size: 64,
            synth_min_len: 3,
            synth_max_len: 20,
            synth_reorder: ReorderRule::SwapEvenAdjacent,
            synth_seed: 7,
            corpus_pairs: 2000,
            eval_min_len: 3,
            eval_max_len: 20,
            eval_seed: 1007,
            suite_size: 50,
            train_epochs: 30,
            lm_epochs: 10,
            train_batch_size: 32,
            train_lr: 1e-3,
            train_seed: 7,
            model_dims: ModelDims::default(),
            corpus: None,
            src_vocab: None,
            tgt_vocab: None,
            nmt_checkpoint: None,
            lm_checkpoint: None,
            attack: AttackConfig::default(),
            targets: Vec::new(),
            methods: vec![Method::Obfuscator],
            out_dir: PathBuf::from("runs/out"),
            parallelism: 1,
            emit_trace: false,
            sweep_kind: None,
            sweep_grid: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn synth_spec(&self) -> SyntheticLangSpec {
        SyntheticLangSpec {
            vocab_size: self.synth_vocab_size,
            min_len: self.synth_min_len,
            max_len: self.synth_max_len,
            reorder_rule: self.synth_reorder,
            seed: self.synth_seed,
        }
    }

    pub fn eval_spec(&self) -> SyntheticLangSpec {
        SyntheticLangSpec {
            vocab_size: self.synth_vocab_size,
            min_len: self.eval_min_len,
            max_len: self.eval_max_len,
            reorder_rule: self.synth_reorder,
            seed: self.eval_seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut methods: Vec<Method> = Vec::new();
        let mut targets: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                CliError::Usage(format!(
                    "config line {}: bad {what} value {value:?}",
                    lineno + 1
                ))
            };
            match key {
                "synth_vocab_size" => cfg.synth_vocab_size = value.parse().map_err(|_| bad(key))?,
                "synth_min_len" => cfg.synth_min_len = value.parse().map_err(|_| bad(key))?,
                "synth_max_len" => cfg.synth_max_len = value.parse().map_err(|_| bad(key))?,
                "synth_reorder" => {
                    cfg.synth_reorder = match value {
                        "none" => ReorderRule::None,
                        "swap_even_adjacent" => ReorderRule::SwapEvenAdjacent,
                        _ => return Err(bad(key)),
                    }
                }
                "synth_seed" => cfg.synth_seed = value.parse().map_err(|_| bad(key))?,
                "corpus_pairs" => cfg.corpus_pairs = value.parse().map_err(|_| bad(key))?,
                "eval_min_len" => cfg.eval_min_len = value.parse().map_err(|_| bad(key))?,
                "eval_max_len" => cfg.eval_max_len = value.parse().map_err(|_| bad(key))?,
                "eval_seed" => cfg.eval_seed = value.parse().map_err(|_| bad(key))?,
                "suite_size" => cfg.suite_size = value.parse().map_err(|_| bad(key))?,
                "train_epochs" => cfg.train_epochs = value.parse().map_err(|_| bad(key))?,
                "lm_epochs" => cfg.lm_epochs = value.parse().map_err(|_| bad(key))?,
                "train_batch_size" => cfg.train_batch_size = value.parse().map_err(|_| bad(key))?,
                "train_lr" => cfg.train_lr = value.parse().map_err(|_| bad(key))?,
                "train_seed" => cfg.train_seed = value.parse().map_err(|_| bad(key))?,
                "model_dim" => cfg.model_dims.d = value.parse().map_err(|_| bad(key))?,
                "model_layers" => cfg.model_dims.layers = value.parse().map_err(|_| bad(key))?,
                "model_heads" => cfg.model_dims.heads = value.parse().map_err(|_| bad(key))?,
                "model_ffn_dim" => cfg.model_dims.ffn_dim = value.parse().map_err(|_| bad(key))?,
                "model_max_len" => cfg.model_dims.max_len = value.parse().map_err(|_| bad(key))?,
                "corpus" => cfg.corpus = Some(PathBuf::from(value)),
                "src_vocab" => cfg.src_vocab = Some(PathBuf::from(value)),
                "tgt_vocab" => cfg.tgt_vocab = Some(PathBuf::from(value)),
                "nmt_checkpoint" => cfg.nmt_checkpoint = Some(PathBuf::from(value)),
                "lm_checkpoint" => cfg.lm_checkpoint = Some(PathBuf::from(value)),
                "gamma" => cfg.attack.gamma = value.parse().map_err(|_| bad(key))?,
                "iterations" => cfg.attack.max_iters = value.parse().map_err(|_| bad(key))?,
                "knn_k" => cfg.attack.k = value.parse().map_err(|_| bad(key))?,
                "alpha" => cfg.attack.alpha = value.parse().map_err(|_| bad(key))?,
                "beta" => {
                    cfg.attack.beta = if value.is_empty() {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad(key))?)
                    }
                }
                "optimizer" => {
                    cfg.attack.optimizer = match value {
                        "adam" => Optimizer::Adam,
                        "sgd" => Optimizer::Sgd,
                        _ => return Err(bad(key)),
                    }
                }
                "attack_seed" => cfg.attack.seed = value.parse().map_err(|_| bad(key))?,
                "exclude_special" => {
                    cfg.attack.exclude_special = value.parse().map_err(|_| bad(key))?
                }
                "target" => targets.push(value.to_string()),
                "method" => methods.push(Method::parse(value)?),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "parallelism" => cfg.parallelism = value.parse().map_err(|_| bad(key))?,
                "emit_trace" => cfg.emit_trace = value.parse().map_err(|_| bad(key))?,
                "sweep_kind" => cfg.sweep_kind = Some(value.to_string()),
                "sweep_grid" => {
                    cfg.sweep_grid = value
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| bad(key)))
                        .collect::<Result<Vec<usize>>>()?
                }
                other => {
                    return Err(CliError::Usage(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if !targets.is_empty() {
            cfg.targets = targets;
        }
        if !methods.is_empty() {
            // Preserve order, drop duplicates.
            let mut seen = HashSet::new();
            cfg.methods = methods.into_iter().filter(|m| seen.insert(*m)).collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be at least 1".into()));
        }
        if self.suite_size == 0 {
            return Err(CliError::Usage("suite_size must be at least 1".into()));
        }
        self.attack
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_repeats_and_values() {
        let cfg = RunConfig::parse(
            "# experiment\n\
             gamma = 0.04\n\
             iterations = 100\n\
             target = a1 a2 a3\n\
             target = a4 a5\n\
             method = obfuscator\n\
             method = random_control\n\
             beta =\n",
        )
        .unwrap();
        assert_eq!(cfg.attack.gamma, 0.04);
        assert_eq!(cfg.targets.len(), 2);
        assert_eq!(
            cfg.methods,
            vec![Method::Obfuscator, Method::RandomControl]
        );
        assert_eq!(cfg.attack.beta, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("gama = 0.04\n").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert_eq!(RunConfig::parse("iterations = many\n").unwrap_err().exit_code(), 1);
        assert_eq!(RunConfig::parse("method = magic\n").unwrap_err().exit_code(), 1);
        assert_eq!(RunConfig::parse("gamma = -1\n").unwrap_err().exit_code(), 1);
    }
}
