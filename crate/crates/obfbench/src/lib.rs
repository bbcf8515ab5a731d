//! obfbench: a desk-scale workbench for studying a single-token insertion
//! attack against sequence-to-sequence translation models.
//!
//! The attack scenario: an adversary wants a translator to silently drop a
//! target sentence `t`. They search for one "obfuscator" token `ω` such that
//! the model translates `x || ω || t` into (almost) the same output it
//! produces for `x` alone. The search runs gradient descent on the token's
//! embedding vector, projects back onto the vocabulary by cosine similarity,
//! and picks the candidate a language model finds most natural.
//!
//! Everything needed to study this end to end at desk scale lives here:
//!
//! - [`textkit`]: vocabularies, token sequences, synthetic parallel corpora.
//! - [`gradkit`]: a minimal reverse-mode autodiff tape over dense tensors.
//! - [`seqmodels`]: a toy encoder-decoder translator and a causal LM, with
//!   training loops, greedy decoding, and checkpoints.
//! - [`obfuscator`]: the attack itself plus a first-order replacement
//!   baseline and a random-token control.
//! - [`metrics`]: token-level Levenshtein, smoothed sentence BLEU,
//!   perplexity, and suite-level aggregation.
//!
//! The `obfbench` binary (separate crate) drives experiment suites and
//! emits JSONL/CSV reports; the book under `book/` walks through the
//! concepts chapter by chapter.

pub mod gradkit;
pub mod metrics;
pub mod obfuscator;
pub mod seqmodels;
pub mod textkit;
