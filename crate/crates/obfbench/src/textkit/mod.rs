//! Vocabularies, token sequences, synthetic parallel languages, and corpus
//! file I/O.
//!
//! Tokenization is whitespace-only: a token is whatever sits between spaces.
//! The four special tokens occupy fixed ids 0..=3 in the order PAD, BOS,
//! EOS, UNK so that checkpoints and test fixtures stay stable.

mod io;
mod synth;

pub use io::{read_corpus, read_corpus_with, read_vocab, write_corpus, write_vocab};
pub use synth::{gen_synthetic_corpus, ReorderRule, SyntheticLangSpec};

use std::collections::HashMap;

use thiserror::Error;

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("invalid synthetic language spec: {0}")]
    InvalidSpec(String),
    #[error("{path}:{line}: {msg}")]
    MalformedLine {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("malformed vocabulary file {path}: {msg}")]
    MalformedVocab { path: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TextError> = std::result::Result<T, E>;

/// An ordered token inventory. Ids 0..size-1 map bijectively onto token
/// strings; ids 0..=3 are always the special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build from content tokens (specials are prepended automatically).
    /// Duplicates keep their first occurrence.
    pub fn from_content_tokens<I, S>(content: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        for tok in content {
            let tok = tok.as_ref();
            if !index.contains_key(tok) {
                index.insert(tok.to_string(), tokens.len() as TokenId);
                tokens.push(tok.to_string());
            }
        }
        Self { tokens, index }
    }

    /// Rebuild from a complete ordered token list (specials included as the
    /// first four entries), as stored in a vocabulary file.
    pub fn from_full_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(TextError::MalformedVocab {
                path: String::new(),
                msg: "fewer than four tokens".into(),
            });
        }
        for (i, expect) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *expect {
                return Err(TextError::MalformedVocab {
                    path: String::new(),
                    msg: format!("line {} must be {}, got {}", i + 1, expect, tokens[i]),
                });
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(TextError::MalformedVocab {
                    path: String::new(),
                    msg: format!("duplicate token {t}"),
                });
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// Ids of the non-special tokens, ascending.
    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (SPECIAL_TOKENS.len() as TokenId)..(self.size() as TokenId)
    }

    /// All token strings in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Collect the distinct whitespace tokens of `lines` into a vocabulary:
/// specials first, then first-occurrence order.
pub fn build_vocab<S: AsRef<str>>(corpus_lines: &[S]) -> Result<Vocabulary> {
    if corpus_lines.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    Ok(Vocabulary::from_content_tokens(
        corpus_lines
            .iter()
            .flat_map(|l| l.as_ref().split_whitespace()),
    ))
}

/// A sentence as a sequence of token ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<TokenId>,
}

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self { ids }
    }

    pub fn empty() -> Self {
        Self { ids: Vec::new() }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `self || mid || tail` — the adversarial concatenation shape.
    pub fn join(&self, mid: TokenId, tail: &TokenSeq) -> TokenSeq {
        let mut ids = Vec::with_capacity(self.len() + 1 + tail.len());
        ids.extend_from_slice(&self.ids);
        ids.push(mid);
        ids.extend_from_slice(&tail.ids);
        TokenSeq::new(ids)
    }

    /// First `n` tokens.
    pub fn prefix(&self, n: usize) -> TokenSeq {
        TokenSeq::new(self.ids[..n.min(self.ids.len())].to_vec())
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        Self::new(ids)
    }
}

/// Map whitespace tokens to ids; tokens outside the vocabulary become UNK.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSeq {
    TokenSeq::new(
        text.split_whitespace()
            .map(|t| vocab.id_of(t).unwrap_or(UNK_ID))
            .collect(),
    )
}

/// Join tokens with single spaces, omitting special tokens.
pub fn detokenize(seq: &TokenSeq, vocab: &Vocabulary) -> Result<String> {
    let mut parts = Vec::with_capacity(seq.len());
    for &id in seq.ids() {
        let tok = vocab.token(id).ok_or(TextError::IdOutOfRange {
            id,
            size: vocab.size(),
        })?;
        if !vocab.is_special(id) {
            parts.push(tok);
        }
    }
    Ok(parts.join(" "))
}

/// Aligned source/target sentence pairs with their vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(TokenSeq, TokenSeq)>,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
}

impl ParallelCorpus {
    /// Check the corpus invariants: non-empty pairs, ids in range.
    pub fn validate(&self) -> Result<()> {
        for (src, tgt) in &self.pairs {
            if src.is_empty() || tgt.is_empty() {
                return Err(TextError::EmptyCorpus);
            }
            for &id in src.ids() {
                if id as usize >= self.source_vocab.size() {
                    return Err(TextError::IdOutOfRange {
                        id,
                        size: self.source_vocab.size(),
                    });
                }
            }
            for &id in tgt.ids() {
                if id as usize >= self.target_vocab.size() {
                    return Err(TextError::IdOutOfRange {
                        id,
                        size: self.target_vocab.size(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Length of the longest sentence on either side.
    pub fn max_sentence_len(&self) -> usize {
        self.pairs
            .iter()
            .map(|(s, t)| s.len().max(t.len()))
            .max()
            .unwrap_or(0)
    }
}
