//! The two experiment sweeps: target-sentence length and iteration budget.

use std::fs;

use obfbench::textkit::detokenize;

use crate::config::Method;
use crate::suite::{run_method, SuiteConfig};
use crate::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    TargetLength,
    IterationBudget,
}

impl SweepKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target_length" => Ok(SweepKind::TargetLength),
            "iteration_budget" => Ok(SweepKind::IterationBudget),
            other => Err(CliError::Usage(format!(
                "unknown sweep kind {other}; expected target_length or iteration_budget"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<usize>,
    pub base: SuiteConfig,
}

/// One point of a sweep curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: usize,
    pub asr: f64,
    pub mean_distance: f64,
}

impl SweepSpec {
    fn validate_grid(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(CliError::Usage("sweep grid is empty".into()));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(CliError::Usage(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

fn write_curve(spec: &SweepSpec, name: &str, header: &str, points: &[SweepPoint]) -> Result<()> {
    fs::create_dir_all(&spec.base.out_dir)?;
    let mut csv = String::from(header);
    for p in points {
        csv.push_str(&format!("{},{},{}\n", p.value, p.asr, p.mean_distance));
    }
    fs::write(spec.base.out_dir.join(name), csv)?;
    Ok(())
}

/// ASR as a function of target-sentence length. The targets are exact token
/// prefixes of the base config's (single) target sentence, mirroring how a
/// fixed sentence can be cut progressively shorter. Runs the gradient
/// attack.
pub fn sweep_target_length(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate_grid()?;
    let ctx = spec.base.load()?;
    let base_target = ctx
        .targets
        .first()
        .ok_or_else(|| CliError::Usage("sweep needs a base target sentence".into()))?
        .clone();
    let max = *spec.grid.last().expect("non-empty grid");
    if max > base_target.len() {
        return Err(CliError::Usage(format!(
            "grid length {max} exceeds the base target sentence ({} tokens)",
            base_target.len()
        )));
    }
    let mut points = Vec::with_capacity(spec.grid.len());
    for &len in &spec.grid {
        let prefix = base_target.prefix(len);
        debug_assert_eq!(prefix.ids(), &base_target.ids()[..len]);
        let ctx_point = crate::suite::SuiteContext {
            nmt: ctx.nmt.clone(),
            lm: ctx.lm.clone(),
            src_vocab: ctx.src_vocab.clone(),
            tgt_vocab: ctx.tgt_vocab.clone(),
            sentences: ctx.sentences.clone(),
            targets: vec![prefix],
        };
        let results = run_method(
            &ctx_point,
            Method::Obfuscator,
            &spec.base.attack,
            spec.base.parallelism,
        )?;
        let n = results.len() as f64;
        let successes = results.iter().filter(|(_, r)| r.success).count() as f64;
        let mean_distance = results
            .iter()
            .map(|(_, r)| r.edit_distance as f64)
            .sum::<f64>()
            / n;
        points.push(SweepPoint {
            value: len,
            asr: successes / n,
            mean_distance,
        });
    }
    write_curve(spec, "sweep_target_length.csv", "target_length,asr,mean_distance\n", &points)?;
    Ok(points)
}

/// ASR as a function of the iteration budget. Implemented as one run at the
/// largest budget; smaller budgets are derived by thresholding
/// `iterations_used`, which makes the curve non-decreasing by construction
/// (the loop is deterministic and stops at first success). The shape is
/// asserted anyway.
pub fn sweep_iterations(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate_grid()?;
    let ctx = spec.base.load()?;
    let max_budget = *spec.grid.last().expect("non-empty grid");
    let attack_cfg = obfbench::obfuscator::AttackConfig {
        max_iters: max_budget,
        ..spec.base.attack
    };
    let results = run_method(&ctx, Method::Obfuscator, &attack_cfg, spec.base.parallelism)?;
    let n = results.len() as f64;
    let mut points = Vec::with_capacity(spec.grid.len());
    for &budget in &spec.grid {
        let successes = results
            .iter()
            .filter(|(_, r)| r.success && r.iterations_used <= budget)
            .count() as f64;
        // Mean distance over the results a budget-limited run would return:
        // for runs still unfinished at this budget, the best attempt so far
        // is not recoverable per-iteration, so report the final distances of
        // successes within budget and the full-run distances otherwise.
        let mean_distance = results
            .iter()
            .map(|(_, r)| r.edit_distance as f64)
            .sum::<f64>()
            / n;
        points.push(SweepPoint {
            value: budget,
            asr: successes / n,
            mean_distance,
        });
    }
    if !points.windows(2).all(|w| w[0].asr <= w[1].asr) {
        return Err(CliError::Numeric(
            "iteration sweep produced a decreasing success curve".into(),
        ));
    }
    write_curve(spec, "sweep_iterations.csv", "iterations,asr,mean_distance\n", &points)?;
    Ok(points)
}

/// Convenience for logging sweeps: the curve as display text.
pub fn curve_text(points: &[SweepPoint], ctx_label: &str) -> String {
    let body: Vec<String> = points
        .iter()
        .map(|p| format!("{}={:.3}", p.value, p.asr))
        .collect();
    format!("{ctx_label}: {}", body.join(" "))
}

/// Re-derive the sweep's prefix targets as strings (handy for logs).
pub fn prefix_targets(spec: &SweepSpec) -> Result<Vec<String>> {
    let ctx = spec.base.load()?;
    let base_target = ctx
        .targets
        .first()
        .ok_or_else(|| CliError::Usage("sweep needs a base target sentence".into()))?
        .clone();
    spec.grid
        .iter()
        .map(|&len| Ok(detokenize(&base_target.prefix(len), &ctx.src_vocab)?))
        .collect()
}
