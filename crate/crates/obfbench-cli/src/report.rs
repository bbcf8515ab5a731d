//! The `report` command: rebuild summaries from stored JSONL records,
//! re-validating every stored number that can be recomputed.

use std::fs;
use std::path::Path;

use obfbench::metrics::{bleu, levenshtein};
use obfbench::textkit::TokenSeq;

use crate::records::AttackRecord;
use crate::{CliError, Result};

/// Summary of one JSONL results file.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FileSummary {
    pub file: String,
    pub method: String,
    pub records: usize,
    pub asr: f64,
    pub mean_bleu: f64,
    pub mean_perplexity: f64,
    pub mean_lm_loss: f64,
    pub mean_edit_distance: f64,
}

/// Token ids for a whitespace-tokenized string, by first occurrence. Edit
/// distances and n-gram overlaps only need consistent ids, not the original
/// vocabulary.
fn ids_of(text: &str, lexicon: &mut Vec<String>) -> TokenSeq {
    let ids = text
        .split_whitespace()
        .map(|tok| {
            if let Some(pos) = lexicon.iter().position(|t| t == tok) {
                pos as u32
            } else {
                lexicon.push(tok.to_string());
                (lexicon.len() - 1) as u32
            }
        })
        .collect();
    TokenSeq::new(ids)
}

/// Parse one JSONL file, recompute success/distance/BLEU from the stored
/// translations, and error out on any disagreement with the stored fields.
pub fn summarize_file(path: &Path) -> Result<FileSummary> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = AttackRecord::from_json_line(line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no records",
            path.display()
        )));
    }
    let method = records[0].method.clone();
    let mut successes = 0usize;
    let mut sum_bleu = 0.0;
    let mut sum_perp = 0.0;
    let mut sum_lm = 0.0;
    let mut sum_dist = 0.0;
    for rec in &records {
        let mut lexicon = Vec::new();
        let original = ids_of(&rec.translations.original, &mut lexicon);
        let adversarial = ids_of(&rec.translations.adversarial, &mut lexicon);
        let distance = levenshtein(&adversarial, &original);
        if distance != rec.edit_distance {
            return Err(CliError::Data(format!(
                "record {}: stored edit_distance {} but translations give {}",
                rec.id, rec.edit_distance, distance
            )));
        }
        let score = bleu(&adversarial, &original);
        if (score - rec.bleu).abs() > 1e-9 {
            return Err(CliError::Data(format!(
                "record {}: stored bleu {} but translations give {}",
                rec.id, rec.bleu, score
            )));
        }
        let beta_ok = rec.attack.beta.map_or(true, |b| rec.lm_loss <= b);
        let should_succeed =
            distance <= rec.attack.alpha && (method != "obfuscator" || beta_ok);
        if should_succeed != rec.success {
            return Err(CliError::Data(format!(
                "record {}: stored success {} disagrees with recomputation {}",
                rec.id, rec.success, should_succeed
            )));
        }
        successes += usize::from(rec.success);
        sum_bleu += score;
        sum_perp += rec.perplexity;
        sum_lm += rec.lm_loss;
        sum_dist += distance as f64;
    }
    let n = records.len() as f64;
    Ok(FileSummary {
        file: path.display().to_string(),
        method,
        records: records.len(),
        asr: successes as f64 / n,
        mean_bleu: sum_bleu / n,
        mean_perplexity: sum_perp / n,
        mean_lm_loss: sum_lm / n,
        mean_edit_distance: sum_dist / n,
    })
}

/// Summarize several JSONL files into one CSV (and return the summaries).
pub fn run_report(paths: &[std::path::PathBuf], out_dir: &Path) -> Result<Vec<FileSummary>> {
    if paths.is_empty() {
        return Err(CliError::Usage("report needs at least one JSONL file".into()));
    }
    let summaries: Vec<FileSummary> = paths
        .iter()
        .map(|p| summarize_file(p))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "file,method,records,asr,mean_bleu,mean_perplexity,mean_lm_loss,mean_edit_distance\n",
    );
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.file,
            s.method,
            s.records,
            s.asr,
            s.mean_bleu,
            s.mean_perplexity,
            s.mean_lm_loss,
            s.mean_edit_distance
        ));
    }
    fs::write(out_dir.join("report_summary.csv"), csv)?;
    Ok(summaries)
}
