//! JSONL result records: one JSON object per attack, one per line.

use serde::{Deserialize, Serialize};

use obfbench::obfuscator::{AttackConfig, AttackResult, Optimizer};
use obfbench::seqmodels::CausalLMModel;
use obfbench::textkit::{detokenize, TokenSeq, Vocabulary};

use crate::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Translations {
    pub original: String,
    pub adversarial: String,
}

/// Echo of the attack hyperparameters, embedded in every record so traces
/// stay interpretable on their own.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttackHeader {
    pub gamma: f64,
    pub iterations: usize,
    pub k: usize,
    pub alpha: usize,
    pub beta: Option<f64>,
    pub optimizer: String,
    pub seed: u64,
}

impl AttackHeader {
    pub fn from_config(cfg: &AttackConfig) -> Self {
        Self {
            gamma: cfg.gamma,
            iterations: cfg.max_iters,
            k: cfg.k,
            alpha: cfg.alpha,
            beta: cfg.beta,
            optimizer: match cfg.optimizer {
                Optimizer::Adam => "adam".into(),
                Optimizer::Sgd => "sgd".into(),
            },
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub omega: String,
    pub adv_loss: Option<f64>,
    pub lm_loss: Option<f64>,
    pub distance: usize,
}

/// One attack, fully rendered to strings for the results file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttackRecord {
    pub id: usize,
    pub method: String,
    pub x: String,
    pub t: String,
    /// The inserted token: the successful one, or the best attempt when the
    /// run failed (matching `translations.adversarial`).
    pub omega: String,
    pub success: bool,
    pub iterations_used: usize,
    pub edit_distance: usize,
    pub bleu: f64,
    pub lm_loss: f64,
    pub perplexity: f64,
    pub translations: Translations,
    pub attack: AttackHeader,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl AttackRecord {
    /// Render an in-memory result. `result.lm_loss_value` must already be
    /// filled (the suite scores baseline results with the bundled LM).
    pub fn render(
        id: usize,
        method: &str,
        x: &TokenSeq,
        t: &TokenSeq,
        result: &AttackResult,
        attack_cfg: &AttackConfig,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
        with_trace: bool,
    ) -> Result<Self> {
        let lm_loss = result.lm_loss_value.ok_or_else(|| {
            CliError::Data(format!("result {id} has no LM loss; score it first"))
        })?;
        let omega_id = result.omega.unwrap_or(result.best_attempt.omega);
        let omega = src_vocab
            .token(omega_id)
            .ok_or_else(|| CliError::Data(format!("omega id {omega_id} not in vocabulary")))?
            .to_string();
        let bleu = obfbench::metrics::bleu(
            &result.adversarial_translation,
            &result.original_translation,
        );
        let trace = with_trace.then(|| {
            result
                .trace
                .iter()
                .map(|row| TraceRecord {
                    iteration: row.iteration,
                    omega: src_vocab.token(row.omega).unwrap_or("<bad>").to_string(),
                    adv_loss: row.adv_loss,
                    lm_loss: row.lm_loss,
                    distance: row.distance,
                })
                .collect()
        });
        Ok(Self {
            id,
            method: method.to_string(),
            x: detokenize(x, src_vocab)?,
            t: detokenize(t, src_vocab)?,
            omega,
            success: result.success,
            iterations_used: result.iterations_used,
            edit_distance: result.edit_distance,
            bleu,
            lm_loss,
            perplexity: lm_loss.exp(),
            translations: Translations {
                original: detokenize(&result.original_translation, tgt_vocab)?,
                adversarial: detokenize(&result.adversarial_translation, tgt_vocab)?,
            },
            attack: AttackHeader::from_config(attack_cfg),
            trace,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("malformed record line: {e}")))
    }
}

/// Score a result's adversarial input with the LM when the method itself did
/// not (the first-order baseline has no LM in its loop).
pub fn fill_lm_loss(result: &mut AttackResult, lm: &CausalLMModel) -> Result<()> {
    if result.lm_loss_value.is_none() {
        result.lm_loss_value = Some(
            lm.lm_loss(&result.adversarial_input)
                .map_err(CliError::from)?,
        );
    }
    Ok(())
}
