//! Vocabulary construction plus sentence encoding and decoding.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::TokenSequence;

pub const PAD_TOKEN: &str = "<pad>";
pub const START_TOKEN: &str = "<s>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pad_id: usize,
    start_id: usize,
    unk_id: Option<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list. The list must start
    /// with the pad and start specials; an `<unk>` entry, if present, becomes
    /// the out-of-vocabulary id.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != START_TOKEN {
            return Err(Error::Config(format!(
                "vocabulary must begin with `{PAD_TOKEN}` and `{START_TOKEN}`"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        let unk_id = index.get(UNK_TOKEN).copied();
        Ok(Vocabulary {
            tokens,
            index,
            pad_id: 0,
            start_id: 1,
            unk_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> usize {
        self.pad_id
    }

    pub fn start_id(&self) -> usize {
        self.start_id
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.unk_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::IdOutOfRange {
                id,
                size: self.tokens.len(),
            })
    }

    /// One token per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text.lines().map(str::to_string).collect();
        Self::from_tokens(tokens).map_err(|e| Error::parse(path, e.to_string()))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Frequency-ranked vocabulary of at most `max_size` regular words.
///
/// Ties are broken lexicographically. `<unk>` is reserved only when
/// `max_size` actually drops words from the corpus.
pub fn build_vocab(corpus: &[Vec<String>], max_size: usize) -> Result<Vocabulary> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for tok in sentence {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| ![PAD_TOKEN, START_TOKEN, UNK_TOKEN].contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD_TOKEN.to_string(), START_TOKEN.to_string()];
    if ranked.len() > max_size {
        tokens.push(UNK_TOKEN.to_string());
    }
    tokens.extend(ranked.into_iter().take(max_size).map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

/// Whitespace tokenisation.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Maps a sentence to exactly `len` ids: truncated when longer, right-padded
/// when shorter. Out-of-vocabulary words map to `<unk>` when the vocabulary
/// has one and are dropped otherwise.
pub fn encode<S: AsRef<str>>(sentence: &[S], vocab: &Vocabulary, len: usize) -> TokenSequence {
    let mut ids: Vec<usize> = sentence
        .iter()
        .filter_map(|t| vocab.id(t.as_ref()).or(vocab.unk_id()))
        .take(len)
        .collect();
    let true_length = ids.len();
    ids.resize(len, vocab.pad_id());
    TokenSequence { ids, true_length }
}

/// Inverse of [`encode`] on untruncated input: every pad id is stripped.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> Result<Vec<String>> {
    seq.ids
        .iter()
        .filter(|&&id| id != vocab.pad_id())
        .map(|&id| vocab.token(id).map(str::to_string))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let v = build_vocab(&sents(&["a b", "a"]), 10).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<s>", "a", "b"]);
        let v = build_vocab(&sents(&["y x"]), 10).unwrap();
        assert_eq!(&v.tokens()[2..], &["x", "y"]);
        assert_eq!(v.unk_id(), None);
        assert_ne!(v.pad_id(), v.start_id());
    }

    #[test]
    fn truncation_reserves_unk() {
        let v = build_vocab(&sents(&["a a a b b c"]), 2).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<s>", "<unk>", "a", "b"]);
        let seq = encode(&["c", "a"], &v, 3);
        assert_eq!(seq.ids, vec![2, 3, 0]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocab(&[], 5), Err(Error::EmptyCorpus)));
        assert!(matches!(build_vocab(&[vec![]], 5), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_pads_and_truncates() {
        let v = build_vocab(&sents(&["a b"]), 10).unwrap();
        let seq = encode(&["a"], &v, 3);
        assert_eq!(seq.ids, vec![v.id("a").unwrap(), v.pad_id(), v.pad_id()]);
        assert_eq!(seq.true_length, 1);

        let long: Vec<&str> = (0..40).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let seq = encode(&long, &v, 37);
        assert_eq!(seq.ids.len(), 37);
        assert_eq!(seq.true_length, 37);
    }

    #[test]
    fn decode_strips_pads_and_rejects_bad_ids() {
        let v = build_vocab(&sents(&["a b"]), 10).unwrap();
        let seq = TokenSequence { ids: vec![0, 0, 0], true_length: 0 };
        assert!(decode(&seq, &v).unwrap().is_empty());
        let bad = TokenSequence { ids: vec![2, 99], true_length: 2 };
        assert!(matches!(decode(&bad, &v), Err(Error::IdOutOfRange { id: 99, .. })));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = build_vocab(&sents(&["the cat sat", "the dog"]), 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(back.id(t), Some(i));
        }
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec(0usize..6, 0..12)) {
            let pool = ["w0", "w1", "w2", "w3", "w4", "w5"];
            let v = build_vocab(&[pool.iter().map(|s| s.to_string()).collect()], 10).unwrap();
            let sentence: Vec<String> = words.iter().map(|&i| pool[i].to_string()).collect();
            let seq = encode(&sentence, &v, 12);
            prop_assert!(seq.is_valid(v.len(), v.pad_id()));
            prop_assert_eq!(decode(&seq, &v).unwrap(), sentence);
        }
    }
}
