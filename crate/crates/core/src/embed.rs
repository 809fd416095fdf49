//! Subword-hash token embeddings.
//!
//! A token's vector is the mean of its word row (when in vocabulary) and the
//! bucket rows of its hashed character n-grams, so unseen tokens still get a
//! representation from their pieces.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::{Vocabulary, PAD_ID, UNK_ID};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 150,
            n_min: 3,
            n_max: 5,
            buckets: 1 << 18,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.buckets == 0 || self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::InvalidInput(format!("bad embedding config {self:?}")));
        }
        Ok(())
    }
}

/// Character n-grams of `<token>` with lengths `n_min..=n_max`, in order of
/// first occurrence, followed by the whole wrapped token.
pub fn subword_ngrams(token: &str, n_min: usize, n_max: usize) -> Result<Vec<String>> {
    if token.is_empty() {
        return Err(Error::InvalidInput("cannot take n-grams of an empty token".into()));
    }
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidInput(format!("bad n-gram range {n_min}..={n_max}")));
    }
    let wrapped: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let whole: String = wrapped.iter().collect();
    let mut seen = HashSet::new();
    let mut grams = Vec::new();
    for n in n_min..=n_max.min(wrapped.len()) {
        for window in wrapped.windows(n) {
            let gram: String = window.iter().collect();
            if gram != whole && seen.insert(gram.clone()) {
                grams.push(gram);
            }
        }
    }
    grams.push(whole);
    Ok(grams)
}

/// FNV-1a (64-bit) over the UTF-8 bytes, reduced modulo `buckets`.
pub fn hash_ngram(ngram: &str, buckets: usize) -> usize {
    assert!(buckets >= 1, "bucket count must be positive");
    (fnv1a(ngram.as_bytes()) % buckets as u64) as usize
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Table rows contributing to one token's vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenPieces {
    pub word: Option<usize>,
    pub buckets: Vec<usize>,
}

impl TokenPieces {
    pub fn n_rows(&self) -> usize {
        self.buckets.len() + usize::from(self.word.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    config: EmbedConfig,
    n_words: usize,
    words: Vec<f32>,
    buckets: Vec<f32>,
}

/// Where initial vectors come from.
#[derive(Clone, Debug)]
pub enum VectorSource<'a> {
    Random,
    File(&'a Path),
    /// Falls back to random initialization when the file does not exist.
    FileOrRandom(&'a Path),
}

impl EmbeddingTable {
    /// Word and bucket rows uniform in ±0.5/d; the padding row is zero.
    pub fn random(vocab: &Vocabulary, config: EmbedConfig, seed: u64) -> Result<EmbeddingTable> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / config.dim as f32;
        let n_words = vocab.n_ids();
        let mut words: Vec<f32> = (0..n_words * config.dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        words[..config.dim].iter_mut().for_each(|v| *v = 0.0);
        let buckets = (0..config.buckets * config.dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Ok(EmbeddingTable {
            config,
            n_words,
            words,
            buckets,
        })
    }

    pub fn zeros(vocab: &Vocabulary, config: EmbedConfig) -> Result<EmbeddingTable> {
        config.validate()?;
        Ok(EmbeddingTable {
            config,
            n_words: vocab.n_ids(),
            words: vec![0.0; vocab.n_ids() * config.dim],
            buckets: vec![0.0; config.buckets * config.dim],
        })
    }

    pub fn initialize(vocab: &Vocabulary, config: EmbedConfig, source: VectorSource<'_>, seed: u64) -> Result<Self> {
        match source {
            VectorSource::Random => Self::random(vocab, config, seed),
            VectorSource::File(path) => load_vectors(path, vocab, config, seed),
            VectorSource::FileOrRandom(path) if path.exists() => load_vectors(path, vocab, config, seed),
            VectorSource::FileOrRandom(path) => {
                log::warn!("{} not found; using random embeddings", path.display());
                Self::random(vocab, config, seed)
            }
        }
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn n_rows(&self) -> usize {
        self.n_words + self.config.buckets
    }

    /// Row `r` of the combined table: word rows first, then buckets.
    pub fn row(&self, r: usize) -> &[f32] {
        let d = self.config.dim;
        if r < self.n_words {
            &self.words[r * d..(r + 1) * d]
        } else {
            let b = r - self.n_words;
            &self.buckets[b * d..(b + 1) * d]
        }
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let d = self.config.dim;
        if r < self.n_words {
            &mut self.words[r * d..(r + 1) * d]
        } else {
            let b = r - self.n_words;
            &mut self.buckets[b * d..(b + 1) * d]
        }
    }

    pub fn word_rows(&self) -> &[f32] {
        &self.words
    }

    pub fn bucket_rows(&self) -> &[f32] {
        &self.buckets
    }

    /// Rows that make up `token`. Tokens outside the vocabulary contribute no word row.
    pub fn pieces(&self, token: &str, vocab: &Vocabulary) -> TokenPieces {
        let word = vocab
            .id(token)
            .filter(|&id| id != PAD_ID && id != UNK_ID)
            .map(|id| id as usize);
        let buckets = match subword_ngrams(token, self.config.n_min, self.config.n_max) {
            Ok(grams) => grams
                .iter()
                .map(|g| self.n_words + hash_ngram(g, self.config.buckets))
                .collect(),
            Err(_) => Vec::new(),
        };
        TokenPieces { word, buckets }
    }

    /// Mean of the rows named by `pieces`, written into `out`.
    pub fn compose(&self, pieces: &TokenPieces, out: &mut [f32]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = pieces.n_rows();
        if n == 0 {
            return;
        }
        for r in pieces.word.iter().chain(&pieces.buckets) {
            for (o, v) in out.iter_mut().zip(self.row(*r)) {
                *o += v;
            }
        }
        let inv = 1.0 / n as f32;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    /// Spreads the gradient of a composed vector back onto its rows.
    pub fn accumulate_grad(&self, pieces: &TokenPieces, grad: &[f32], acc: &mut SparseRowGrad) {
        let n = pieces.n_rows();
        if n == 0 {
            return;
        }
        let inv = 1.0 / n as f32;
        for &r in pieces.word.iter().chain(&pieces.buckets) {
            if r == PAD_ID as usize {
                continue;
            }
            let row = acc.rows.entry(r).or_insert_with(|| vec![0.0; grad.len()]);
            for (a, g) in row.iter_mut().zip(grad) {
                *a += g * inv;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.words.iter().chain(&self.buckets).all(|v| v.is_finite())
    }

    /// Binary checkpoint: little-endian u64 header `{d, |V|, B, n_min, n_max}`
    /// then word rows and bucket rows as row-major f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = [
            self.config.dim,
            self.n_words - 2,
            self.config.buckets,
            self.config.n_min,
            self.config.n_max,
        ];
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        for h in header {
            write(&(h as u64).to_le_bytes())?;
        }
        for v in self.words.iter().chain(&self.buckets) {
            write(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = [0usize; 5];
        let mut buf8 = [0u8; 8];
        for h in header.iter_mut() {
            r.read_exact(&mut buf8).map_err(|e| Error::io(path, e))?;
            *h = u64::from_le_bytes(buf8) as usize;
        }
        let [dim, n_vocab, buckets, n_min, n_max] = header;
        let config = EmbedConfig {
            dim,
            n_min,
            n_max,
            buckets,
        };
        config.validate()?;
        let n_words = n_vocab + 2;
        let mut read_floats = |n: usize| -> Result<Vec<f32>> {
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let words = read_floats(n_words * dim)?;
        let buckets = read_floats(buckets * dim)?;
        Ok(EmbeddingTable {
            config,
            n_words,
            words,
            buckets,
        })
    }
}

/// Mean vector for `token`; allocating convenience over [`EmbeddingTable::compose`].
pub fn token_vector(token: &str, table: &EmbeddingTable, vocab: &Vocabulary) -> Vec<f32> {
    let mut out = vec![0.0; table.dim()];
    table.compose(&table.pieces(token, vocab), &mut out);
    out
}

/// Reads vectors in the `.vec` text layout (`count dim` header, then
/// `token v1 .. vd`). In-vocabulary tokens are copied; every other row is
/// randomly initialized.
pub fn load_vectors(path: &Path, vocab: &Vocabulary, config: EmbedConfig, seed: u64) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab, config, seed)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedLine {
            line: 1,
            reason: "empty vector file".into(),
        })?
        .map_err(|e| Error::io(path, e))?;
    let mut fields = header.split_whitespace();
    let parse_header = |f: Option<&str>| -> Result<usize> {
        f.and_then(|v| v.parse().ok()).ok_or_else(|| Error::MalformedLine {
            line: 1,
            reason: format!("expected `count dim`, got `{header}`"),
        })
    };
    let _count = parse_header(fields.next())?;
    let dim = parse_header(fields.next())?;
    if dim != config.dim {
        return Err(Error::InvalidInput(format!(
            "vector file has dimension {dim} but the model expects {}",
            config.dim
        )));
    }
    let mut copied = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let token = parts.next().unwrap_or_default();
        let values: Vec<f32> = parts
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        if values.len() != dim || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: format!("expected {dim} finite values, got {}", values.len()),
            });
        }
        if let Some(id) = vocab.id(token) {
            table.row_mut(id as usize).copy_from_slice(&values);
            copied += 1;
        }
    }
    log::info!(
        "copied {copied} of {} vocabulary rows from {}",
        vocab.len(),
        path.display()
    );
    Ok(table)
}

/// Gradient rows keyed by combined-table row index.
#[derive(Clone, Debug, Default)]
pub struct SparseRowGrad {
    pub rows: BTreeMap<usize, Vec<f32>>,
}

impl SparseRowGrad {
    pub fn clear(&mut self) {
        self.rows.clear();
    }

    pub fn scale(&mut self, s: f32) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .map(|&v| f64::from(v) * f64::from(v))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        let docs = vec![tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>()];
        Vocabulary::from_token_lists(&docs, 1).unwrap()
    }

    fn small() -> EmbedConfig {
        EmbedConfig {
            dim: 4,
            n_min: 3,
            n_max: 4,
            buckets: 64,
        }
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            subword_ngrams("pin", 3, 4).unwrap(),
            vec!["<pi", "pin", "in>", "<pin", "pin>", "<pin>"]
        );
        assert_eq!(subword_ngrams("a", 3, 3).unwrap(), vec!["<a>"]);
        assert_eq!(
            subword_ngrams("trâu", 3, 5).unwrap(),
            subword_ngrams("trâu", 3, 5).unwrap()
        );
        assert!(subword_ngrams("", 3, 5).is_err());
        assert!(subword_ngrams("x", 4, 3).is_err());
    }

    #[test]
    fn hash_examples() {
        assert_eq!(hash_ngram("anything", 1), 0);
        assert_eq!(hash_ngram("pin", 1 << 21), hash_ngram("pin", 1 << 21));
        // offset basis 14695981039346656037 = 0xcbf29ce484222325
        assert_eq!(hash_ngram("", 1000), 37);
        assert_eq!(hash_ngram("", 1 << 21), 0x02_2325);
        // published FNV-1a 64 test vector for "a"
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn zero_table_gives_zero_vector() {
        let v = vocab(&["pin"]);
        let t = EmbeddingTable::zeros(&v, small()).unwrap();
        assert!(token_vector("pin", &t, &v).iter().all(|&x| x == 0.0));
        assert!(token_vector("lạ", &t, &v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_ngram_oov_token_is_its_bucket() {
        let v = vocab(&["pin"]);
        let cfg = EmbedConfig {
            n_min: 3,
            n_max: 3,
            ..small()
        };
        let t = EmbeddingTable::random(&v, cfg, 5).unwrap();
        // "<a>" is the only gram of "a"
        let bucket = t.n_words() + hash_ngram("<a>", cfg.buckets);
        assert_eq!(token_vector("a", &t, &v), t.row(bucket).to_vec());
    }

    #[test]
    fn in_vocab_token_is_hand_average() {
        let v = vocab(&["ab"]);
        let cfg = EmbedConfig {
            dim: 2,
            n_min: 4,
            n_max: 4,
            buckets: 8,
        };
        let mut t = EmbeddingTable::zeros(&v, cfg).unwrap();
        // "<ab>" has one 4-gram, which is the whole word: grams = ["<ab>"]
        let b = hash_ngram("<ab>", 8);
        t.row_mut(2).copy_from_slice(&[1.0, 3.0]);
        let nw = t.n_words();
        t.row_mut(nw + b).copy_from_slice(&[5.0, -1.0]);
        assert_eq!(token_vector("ab", &t, &v), vec![3.0, 1.0]);
    }

    #[test]
    fn in_vocab_token_with_two_grams() {
        let v = vocab(&["ab"]);
        let cfg = EmbedConfig {
            dim: 2,
            n_min: 3,
            n_max: 3,
            buckets: 1024,
        };
        let grams = subword_ngrams("ab", 3, 3).unwrap();
        assert_eq!(grams, vec!["<ab", "ab>", "<ab>"]);
        let mut t = EmbeddingTable::zeros(&v, cfg).unwrap();
        t.row_mut(2).copy_from_slice(&[3.0, 0.0]);
        let nw = t.n_words();
        let rows: Vec<usize> = grams.iter().map(|g| nw + hash_ngram(g, 1024)).collect();
        let distinct: HashSet<_> = rows.iter().collect();
        assert_eq!(distinct.len(), 3, "fixture needs collision-free grams");
        t.row_mut(rows[0]).copy_from_slice(&[1.0, 2.0]);
        t.row_mut(rows[1]).copy_from_slice(&[0.0, 4.0]);
        t.row_mut(rows[2]).copy_from_slice(&[4.0, -2.0]);
        // (3+1+0+4)/4, (0+2+4-2)/4
        assert_eq!(token_vector("ab", &t, &v), vec![2.0, 1.0]);
    }

    #[test]
    fn padding_row_is_zero_and_gets_no_gradient() {
        let v = vocab(&["pin"]);
        let t = EmbeddingTable::random(&v, small(), 1).unwrap();
        assert!(t.row(0).iter().all(|&x| x == 0.0));
        let pieces = TokenPieces {
            word: Some(0),
            buckets: vec![t.n_words()],
        };
        let mut g = SparseRowGrad::default();
        t.accumulate_grad(&pieces, &[1.0; 4], &mut g);
        assert!(!g.rows.contains_key(&0));
        assert_eq!(g.rows[&t.n_words()], vec![0.5; 4]);
    }

    #[test]
    fn load_vectors_copies_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        std::fs::write(&path, "2 3\npin 0.1 0.2 0.3\ngiá 1 1 1\n").unwrap();
        let v = vocab(&["pin", "trâu"]);
        let cfg = EmbedConfig { dim: 3, ..small() };
        let t = load_vectors(&path, &v, cfg, 3).unwrap();
        assert_eq!(t.row(v.id("pin").unwrap() as usize), &[0.1, 0.2, 0.3]);
        let other = t.row(v.id("trâu").unwrap() as usize);
        assert!(other.iter().all(|x| x.abs() <= 0.5 / 3.0));

        let wrong_dim = EmbedConfig { dim: 100, ..small() };
        std::fs::write(&path, "1 300\n").unwrap();
        assert!(load_vectors(&path, &v, wrong_dim, 3).is_err());

        std::fs::write(&path, "2 3\npin 0.1 0.2 0.3\ngiá 1 x 1\n").unwrap();
        match load_vectors(&path, &v, cfg, 3) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }

        let missing = dir.path().join("absent.vec");
        let t = EmbeddingTable::initialize(&v, cfg, VectorSource::FileOrRandom(&missing), 3).unwrap();
        assert_eq!(t, EmbeddingTable::random(&v, cfg, 3).unwrap());
        assert!(EmbeddingTable::initialize(&v, cfg, VectorSource::File(&missing), 3).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let v = vocab(&["pin", "trâu"]);
        let t = EmbeddingTable::random(&v, small(), 9).unwrap();
        t.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 40 + 4 * (t.n_rows() * 4));
        assert_eq!(&bytes[..8], &4u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(EmbeddingTable::load(&path).unwrap(), t);
    }

    #[test]
    fn collision_rate_with_two_million_buckets() {
        // 1k synthetic syllable-like tokens
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let alphabet: Vec<char> = "abcdeghiklmnopqrstuvxyàáâãèéêìíòóôõùúýăđơư".chars().collect();
        let mut tokens = HashSet::new();
        while tokens.len() < 1000 {
            let len = rng.gen_range(2..8);
            tokens.insert(
                (0..len)
                    .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                    .collect::<String>(),
            );
        }
        let mut grams = HashSet::new();
        for t in &tokens {
            grams.extend(subword_ngrams(t, 3, 5).unwrap());
        }
        let buckets: HashSet<usize> = grams.iter().map(|g| hash_ngram(g, 2_000_000)).collect();
        let rate = 1.0 - buckets.len() as f64 / grams.len() as f64;
        assert!(rate < 0.05, "collision rate {rate}");
    }

    proptest! {
        #[test]
        fn composed_vector_is_norm_bounded(token in "[a-zđâ]{1,8}", seed in 0u64..50) {
            let v = vocab(&["pin", "ab", "trâu"]);
            let t = EmbeddingTable::random(&v, small(), seed).unwrap();
            let norm = |x: &[f32]| x.iter().map(|v| v * v).sum::<f32>().sqrt();
            let max_row = (0..t.n_rows()).map(|r| norm(t.row(r))).fold(0.0f32, f32::max);
            let out = token_vector(&token, &t, &v);
            prop_assert!(norm(&out) <= max_row * (1.0 + 1e-5));
            prop_assert_eq!(out, token_vector(&token, &t, &v));
        }
    }
}
