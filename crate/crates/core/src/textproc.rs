//! Normalization, whitespace tokenization, vocabulary and fixed-length
//! integer encoding.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const DEFAULT_MAX_LEN: usize = 250;
pub const DEFAULT_MIN_FREQ: usize = 2;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '–' | '—' | '«' | '»' | '¿' | '¡' | '。' | '、'
        )
}

/// NFC-normalizes, lowercases, pads punctuation with spaces and collapses
/// runs of whitespace to one space.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let mut spaced = String::with_capacity(lowered.len() + 8);
    for c in lowered.chars() {
        if is_punct(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits on whitespace; punctuation marks become their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// `tokenize(normalize(text))`, the pipeline every model sees.
pub fn analyze(text: &str) -> Vec<String> {
    tokenize(&normalize(text))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    // index i holds the token with id i + 2
    tokens: Vec<String>,
    min_freq: usize,
}

impl Vocabulary {
    /// Builds from token streams keeping tokens seen at least `min_freq`
    /// times, ordered by frequency descending then token ascending.
    pub fn from_token_lists<I, T>(docs: I, min_freq: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[String]>,
    {
        if min_freq == 0 {
            return Err(Error::InvalidInput("min_freq must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0usize;
        for doc in docs {
            n_docs += 1;
            for tok in doc.as_ref() {
                *counts.entry(tok.clone()).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(Error::InvalidInput(
                "cannot build a vocabulary from an empty training set".into(),
            ));
        }
        let mut entries: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens: Vec<String> = entries.into_iter().map(|(t, _)| t).collect();
        Ok(Self::from_ordered(tokens, min_freq))
    }

    fn from_ordered(tokens: Vec<String>, min_freq: usize) -> Vocabulary {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
        Vocabulary {
            token_to_id,
            tokens,
            min_freq,
        }
    }

    /// Number of real tokens (reserved ids excluded).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rows needed by an id-indexed table: real tokens plus pad and unk.
    pub fn n_ids(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        (id as usize)
            .checked_sub(2)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32 + 2))
    }

    /// Writes `token<TAB>id` lines in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (tok, id) in self.iter() {
            writeln!(out, "{tok}\t{id}").expect("write to vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, min_freq: usize) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| Error::MalformedLine {
                line: i + 1,
                reason: "expected `token<TAB>id`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::MalformedLine {
                line: i + 1,
                reason: format!("bad id `{id}`"),
            })?;
            if id != tokens.len() + 2 {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    reason: format!("ids must be contiguous from 2, got {id}"),
                });
            }
            tokens.push(tok.to_string());
        }
        Ok(Self::from_ordered(tokens, min_freq))
    }
}

/// Builds a vocabulary from the analyzed comment texts of a training split.
pub fn build_vocab(train: &Dataset, min_freq: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a vocabulary from an empty training set".into(),
        ));
    }
    Vocabulary::from_token_lists(train.comments().iter().map(|c| analyze(&c.text)), min_freq)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedComment {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

/// Maps tokens to ids (unknown → 1), truncates to `max_len` and right-pads with 0.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> EncodedComment {
    assert!(max_len >= 1, "max_len must be positive");
    let true_length = tokens.len().min(max_len);
    let mut ids = Vec::with_capacity(max_len);
    ids.extend(tokens[..true_length].iter().map(|t| vocab.id(t).unwrap_or(UNK_ID)));
    ids.resize(max_len, PAD_ID);
    EncodedComment { ids, true_length }
}

/// Recovers the in-vocabulary tokens of an encoding, skipping unknowns.
pub fn decode(encoded: &EncodedComment, vocab: &Vocabulary) -> Vec<String> {
    encoded.ids[..encoded.true_length]
        .iter()
        .filter_map(|&id| vocab.token(id).map(str::to_string))
        .collect()
}
