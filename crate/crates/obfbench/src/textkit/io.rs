//! Corpus and vocabulary files.
//!
//! Corpus files are UTF-8 text with one pair per line, source and target
//! separated by a single TAB; lines starting with `#` are comments.
//! Vocabulary files hold one token per line with `line number - 1 = id`.

use std::fs;
use std::path::Path;

use crate::textkit::{
    build_vocab, detokenize, tokenize, ParallelCorpus, Result, TextError, Vocabulary,
};

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for tok in vocab.tokens() {
        out.push_str(tok);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path)?;
    let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
    Vocabulary::from_full_list(tokens).map_err(|e| match e {
        TextError::MalformedVocab { msg, .. } => TextError::MalformedVocab {
            path: path.display().to_string(),
            msg,
        },
        other => other,
    })
}

pub fn write_corpus(path: &Path, corpus: &ParallelCorpus) -> Result<()> {
    let mut out = String::new();
    for (src, tgt) in &corpus.pairs {
        out.push_str(&detokenize(src, &corpus.source_vocab)?);
        out.push('\t');
        out.push_str(&detokenize(tgt, &corpus.target_vocab)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_pairs(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let src = cols.next().unwrap_or("");
        let tgt = cols.next().ok_or_else(|| TextError::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            msg: "expected a TAB between source and target".into(),
        })?;
        if cols.next().is_some() {
            return Err(TextError::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                msg: "more than one TAB".into(),
            });
        }
        if src.trim().is_empty() || tgt.trim().is_empty() {
            return Err(TextError::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                msg: "empty source or target".into(),
            });
        }
        pairs.push((src.to_string(), tgt.to_string()));
    }
    if pairs.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    Ok(pairs)
}

/// Read a corpus file, building fresh vocabularies from its own tokens
/// (specials first, then first occurrence order per side).
pub fn read_corpus(path: &Path) -> Result<ParallelCorpus> {
    let text = fs::read_to_string(path)?;
    let raw = parse_pairs(path, &text)?;
    let source_vocab = build_vocab(&raw.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>())?;
    let target_vocab = build_vocab(&raw.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>())?;
    let pairs = raw
        .iter()
        .map(|(s, t)| (tokenize(s, &source_vocab), tokenize(t, &target_vocab)))
        .collect();
    let corpus = ParallelCorpus {
        pairs,
        source_vocab,
        target_vocab,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Read a corpus file against fixed vocabularies (as written by the corpus
/// generator); tokens missing from a vocabulary become UNK.
pub fn read_corpus_with(
    path: &Path,
    source_vocab: &Vocabulary,
    target_vocab: &Vocabulary,
) -> Result<ParallelCorpus> {
    let text = fs::read_to_string(path)?;
    let raw = parse_pairs(path, &text)?;
    let pairs = raw
        .iter()
        .map(|(s, t)| (tokenize(s, source_vocab), tokenize(t, target_vocab)))
        .collect();
    let corpus = ParallelCorpus {
        pairs,
        source_vocab: source_vocab.clone(),
        target_vocab: target_vocab.clone(),
    };
    corpus.validate()?;
    Ok(corpus)
}
