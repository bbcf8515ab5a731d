use serde::Serialize;

use crate::metrics::{bleu, levenshtein, MetricError, Result};
use crate::obfuscator::AttackResult;
use crate::textkit::Vocabulary;

/// The smoothing rule used by [`bleu`], recorded in report headers so
/// numbers stay interpretable next to other tools' output.
pub const BLEU_SMOOTHING: &str = "epsilon=0.1/total,n=1..4,bp=min(1,exp(1-|ref|/|hyp|))";

/// Per-example row of a [`MetricReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleRow {
    pub id: usize,
    pub success: bool,
    pub edit_distance: usize,
    pub bleu: f64,
    pub perplexity: f64,
    pub lm_loss: f64,
    /// The obfuscator token string (best attempt when the run failed).
    pub omega: String,
    /// Reserved: requires a large pretrained encoder, never computed here.
    pub bertscore: Option<f64>,
}

/// Aggregated metrics over one method's attack results.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub bleu_smoothing: &'static str,
    pub asr: f64,
    pub mean_bleu: f64,
    pub mean_perplexity: f64,
    pub mean_lm_loss: f64,
    pub mean_edit_distance: f64,
    pub per_example: Vec<ExampleRow>,
}

impl MetricReport {
    /// CSV rendering: a smoothing comment, a header row, per-example rows,
    /// and one trailing summary row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# bleu_smoothing={}\n", self.bleu_smoothing);
        out.push_str("id,success,edit_distance,bleu,perplexity,lm_loss,omega,bertscore\n");
        for r in &self.per_example {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},\n",
                r.id, r.success, r.edit_distance, r.bleu, r.perplexity, r.lm_loss, r.omega
            ));
        }
        out.push_str(&format!(
            "summary,{},{},{},{},{},,\n",
            self.asr, self.mean_edit_distance, self.mean_bleu, self.mean_perplexity, self.mean_lm_loss
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aggregate attack results into a [`MetricReport`].
///
/// Success is recomputed from the stored translations and `alpha` (plus the
/// `beta` cap when the method enforced one) rather than trusting the stored
/// flag; any disagreement with the stored `success` or `edit_distance` is an
/// error. Example ids are positions in `results`.
pub fn aggregate(
    results: &[AttackResult],
    alpha: usize,
    beta: Option<f64>,
    source_vocab: &Vocabulary,
) -> Result<MetricReport> {
    if results.is_empty() {
        return Err(MetricError::EmptyResults);
    }
    let mut rows = Vec::with_capacity(results.len());
    let mut successes = 0usize;
    let mut sum_bleu = 0.0;
    let mut sum_perp = 0.0;
    let mut sum_lm = 0.0;
    let mut sum_dist = 0.0;
    for (index, r) in results.iter().enumerate() {
        let recomputed = levenshtein(&r.adversarial_translation, &r.original_translation);
        if recomputed != r.edit_distance {
            return Err(MetricError::SuccessMismatch {
                index,
                what: "edit_distance",
                stored: r.edit_distance.to_string(),
                recomputed: recomputed.to_string(),
            });
        }
        let lm_loss = r
            .lm_loss_value
            .ok_or(MetricError::MissingLmLoss { index })?;
        let beta_ok = beta.map_or(true, |b| lm_loss <= b);
        let recomputed_success = recomputed <= alpha && beta_ok;
        if recomputed_success != r.success {
            return Err(MetricError::SuccessMismatch {
                index,
                what: "success",
                stored: r.success.to_string(),
                recomputed: recomputed_success.to_string(),
            });
        }
        let omega_id = r.omega.unwrap_or(r.best_attempt.omega);
        let omega = source_vocab
            .token(omega_id)
            .unwrap_or("<out-of-vocab>")
            .to_string();
        let score = bleu(&r.adversarial_translation, &r.original_translation);
        let perplexity = lm_loss.exp();
        successes += usize::from(r.success);
        sum_bleu += score;
        sum_perp += perplexity;
        sum_lm += lm_loss;
        sum_dist += recomputed as f64;
        rows.push(ExampleRow {
            id: index,
            success: r.success,
            edit_distance: recomputed,
            bleu: score,
            perplexity,
            lm_loss,
            omega,
            bertscore: None,
        });
    }
    let n = results.len() as f64;
    Ok(MetricReport {
        bleu_smoothing: BLEU_SMOOTHING,
        asr: successes as f64 / n,
        mean_bleu: sum_bleu / n,
        mean_perplexity: sum_perp / n,
        mean_lm_loss: sum_lm / n,
        mean_edit_distance: sum_dist / n,
        per_example: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obfuscator::BestAttempt;
    use crate::textkit::TokenSeq;

    fn fake_result(success: bool, distance: usize, omega: u32) -> AttackResult {
        // Build translations whose Levenshtein distance is exactly
        // `distance` by appending that many extra tokens.
        let original = TokenSeq::new(vec![4, 5, 6, 7]);
        let mut adv = original.ids().to_vec();
        adv.extend((0..distance).map(|i| 8 + i as u32));
        AttackResult {
            success,
            omega: success.then_some(omega),
            iterations_used: 1,
            adversarial_input: TokenSeq::new(vec![4, omega, 5]),
            original_translation: original,
            adversarial_translation: TokenSeq::new(adv),
            edit_distance: distance,
            lm_loss_value: Some(1.5 + distance as f64),
            best_attempt: BestAttempt {
                omega,
                distance,
                lm_loss: Some(1.5 + distance as f64),
                iteration: 1,
            },
            trace: Vec::new(),
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_content_tokens((0..16).map(|i| format!("a{i}")))
    }

    #[test]
    fn counting_matches_definition() {
        let results = vec![
            fake_result(true, 2, 4),
            fake_result(true, 0, 5),
            fake_result(false, 9, 6),
            fake_result(false, 7, 7),
        ];
        let report = aggregate(&results, 5, None, &vocab()).unwrap();
        assert_eq!(report.asr, 0.5);
        assert_eq!(report.per_example.len(), 4);
        assert_eq!(report.per_example[0].omega, "a0");
        assert!(report.per_example.iter().all(|r| r.bertscore.is_none()));
    }

    #[test]
    fn all_successes_respect_alpha() {
        let results = vec![fake_result(true, 1, 4), fake_result(true, 5, 5)];
        let report = aggregate(&results, 5, None, &vocab()).unwrap();
        assert_eq!(report.asr, 1.0);
        assert!(report.per_example.iter().all(|r| r.edit_distance <= 5));
    }

    #[test]
    fn tampered_success_flag_is_detected() {
        let mut results = vec![fake_result(true, 2, 4)];
        results[0].success = false;
        assert!(matches!(
            aggregate(&results, 5, None, &vocab()),
            Err(MetricError::SuccessMismatch { .. })
        ));
    }

    #[test]
    fn tampered_distance_is_detected() {
        let mut results = vec![fake_result(true, 2, 4)];
        results[0].edit_distance = 1;
        assert!(matches!(
            aggregate(&results, 5, None, &vocab()),
            Err(MetricError::SuccessMismatch { what: "edit_distance", .. })
        ));
    }

    #[test]
    fn empty_results_are_rejected() {
        assert!(matches!(
            aggregate(&[], 5, None, &vocab()),
            Err(MetricError::EmptyResults)
        ));
    }

    #[test]
    fn beta_cap_participates_in_recomputation() {
        // distance 2 ≤ alpha but lm_loss 3.5 > beta: stored success must be
        // false for aggregation to accept it.
        let mut r = fake_result(false, 2, 4);
        r.lm_loss_value = Some(3.5);
        r.best_attempt.lm_loss = Some(3.5);
        let report = aggregate(&[r], 5, Some(3.0), &vocab()).unwrap();
        assert_eq!(report.asr, 0.0);
    }

    #[test]
    fn csv_has_header_rows_and_summary() {
        let results = vec![fake_result(true, 2, 4), fake_result(false, 8, 5)];
        let report = aggregate(&results, 5, None, &vocab()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# bleu_smoothing="));
        assert_eq!(
            lines[1],
            "id,success,edit_distance,bleu,perplexity,lm_loss,omega,bertscore"
        );
        assert_eq!(lines.len(), 2 + 2 + 1);
        assert!(lines.last().unwrap().starts_with("summary,0.5,"));
    }
}
