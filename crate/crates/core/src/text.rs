//! Shared vocabulary and tokenization for the translator's text encoder and
//! the frozen language model. Whitespace tokenization over lowercased text;
//! one vocabulary serves both models.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const CLS: TokenId = 1;
pub const DEC: TokenId = 2;
pub const BOS: TokenId = 3;
pub const EOS: TokenId = 4;
pub const UNK: TokenId = 5;

pub const RESERVED: [&str; 6] = ["[PAD]", "[CLS]", "[DEC]", "[BOS]", "[EOS]", "[UNK]"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Rank tokens by descending frequency, ties lexicographic. Shared by the
/// vocabulary builder and the bag-of-words featurizer.
pub fn rank_by_frequency<'a>(tokens: impl Iterator<Item = &'a str>) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

impl Vocabulary {
    /// Keep the `max_size - 6` most frequent corpus tokens after the six
    /// reserved entries.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self> {
        if max_size <= RESERVED.len() {
            return Err(Error::InvalidConfig(format!(
                "vocabulary max_size {max_size} leaves no room beyond the reserved tokens"
            )));
        }
        let mut all_tokens = Vec::new();
        let mut saw_line = false;
        for line in corpus {
            saw_line = true;
            all_tokens.extend(tokenize(line));
        }
        if !saw_line {
            return Err(Error::InvalidConfig("empty corpus".into()));
        }
        let ranked = rank_by_frequency(all_tokens.iter().map(String::as_str));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for (t, _) in ranked {
            if tokens.len() >= max_size {
                break;
            }
            if !RESERVED.contains(&t.as_str()) {
                tokens.push(t);
            }
        }
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode_ids(&self, text: &str) -> Vec<TokenId> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Render ids back to text, skipping reserved tokens.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id >= RESERVED.len() && id < self.tokens.len())
            .map(|&id| self.tokens[id].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct VocabFile<'a> {
            format: &'a str,
            tokens: &'a [String],
        }
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(
            w,
            &VocabFile {
                format: "vocab-v1",
                tokens: &self.tokens,
            },
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct VocabFile {
            format: String,
            tokens: Vec<String>,
        }
        let r = BufReader::new(File::open(path)?);
        let file: VocabFile = serde_json::from_reader(r)?;
        if file.format != "vocab-v1" {
            return Err(Error::Invalid(format!(
                "unsupported vocab format {:?}",
                file.format
            )));
        }
        if file.tokens.len() <= RESERVED.len()
            || file.tokens[..RESERVED.len()] != RESERVED.map(str::to_string)
        {
            return Err(Error::Invalid(
                "vocab file must start with the six reserved tokens".into(),
            ));
        }
        Ok(Self::from_tokens(file.tokens))
    }

    /// Stable hash of the token list, recorded in checkpoint manifests.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update([0u8]);
        }
        hex_string(&hasher.finalize())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed-length id sequence with tail padding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    /// 1 = real token, 0 = pad; pads only at the tail.
    pub mask: Vec<u8>,
}

impl TokenSequence {
    pub fn len_total(&self) -> usize {
        self.ids.len()
    }

    pub fn len_real(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }
}

/// Truncate to `max_len` (counting the prepended special token), then pad.
pub fn encode(
    vocab: &Vocabulary,
    text: &str,
    max_len: usize,
    prepend: Option<TokenId>,
) -> Result<TokenSequence> {
    if max_len < 2 {
        return Err(Error::InvalidConfig(format!(
            "max_len {max_len} must be at least 2"
        )));
    }
    let mut ids = Vec::with_capacity(max_len);
    if let Some(special) = prepend {
        ids.push(special);
    }
    for id in vocab.encode_ids(text) {
        if ids.len() >= max_len {
            break;
        }
        ids.push(id);
    }
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    Ok(TokenSequence { ids, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::build(["a a b"], 8).unwrap();
        assert_eq!(v.token(PAD), "[PAD]");
        assert_eq!(v.token(UNK), "[UNK]");
        assert!(v.contains("a") && v.contains("b"));
        assert_eq!(v.len(), 8);
        assert_eq!(v.id("zzz"), UNK);
    }

    #[test]
    fn build_is_deterministic_with_lexicographic_ties() {
        let v1 = Vocabulary::build(["b a", "a b c c"], 9).unwrap();
        let v2 = Vocabulary::build(["b a", "a b c c"], 9).unwrap();
        assert_eq!(v1, v2);
        // c has count 2; a and b tie at 1 and order lexicographically.
        assert_eq!(v1.token(6), "c");
        assert_eq!(v1.token(7), "a");
        assert_eq!(v1.token(8), "b");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(Vocabulary::build(std::iter::empty::<&str>(), 32).is_err());
    }

    #[test]
    fn encode_pads_truncates_and_masks() {
        let v = Vocabulary::build(["cars wheels engine"], 16).unwrap();
        let seq = encode(&v, "cars", 4, Some(CLS)).unwrap();
        assert_eq!(seq.ids, vec![CLS, v.id("cars"), PAD, PAD]);
        assert_eq!(seq.mask, vec![1, 1, 0, 0]);

        let long = encode(&v, "cars wheels engine cars wheels", 4, Some(CLS)).unwrap();
        assert_eq!(long.mask, vec![1, 1, 1, 1]);
        assert_eq!(long.ids.len(), 4);

        let seq = encode(&v, "cars wheels", 8, None).unwrap();
        assert_eq!(v.decode(&seq.ids), "cars wheels");
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = Vocabulary::build(["cars wheels engine stars comet"], 32).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
    }

    proptest! {
        #[test]
        fn mask_zero_iff_pad(words in proptest::collection::vec("[a-d]{1,3}", 0..12), max_len in 2usize..16) {
            let v = Vocabulary::build(["a b c d aa bb cc dd aaa bbb"], 64).unwrap();
            let text = words.join(" ");
            let seq = encode(&v, &text, max_len, Some(CLS)).unwrap();
            prop_assert_eq!(seq.ids.len(), max_len);
            prop_assert_eq!(seq.mask.len(), max_len);
            let mut seen_pad = false;
            for (id, m) in seq.ids.iter().zip(seq.mask.iter()) {
                if *m == 0 {
                    seen_pad = true;
                    prop_assert_eq!(*id, PAD);
                } else {
                    prop_assert!(!seen_pad, "pads must be a suffix");
                }
            }
        }

        #[test]
        fn round_trip_in_vocab(words in proptest::collection::vec("[a-d]", 1..8)) {
            let v = Vocabulary::build(["a b c d"], 16).unwrap();
            let text = words.join(" ");
            let seq = encode(&v, &text, 32, Some(CLS)).unwrap();
            prop_assert_eq!(v.decode(&seq.ids), text);
        }
    }
}
