//! Paraphrase pairs, vocabulary, and extended-id encoding for copying.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Lowercase whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

impl SentencePair {
    pub fn from_text(source: &str, target: &str) -> Self {
        SentencePair {
            source: tokenize(source),
            target: tokenize(target),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadedPairs {
    pub pairs: Vec<SentencePair>,
    /// Lines dropped because one side was empty after tokenization.
    pub dropped: usize,
}

/// Parses `source<TAB>target` lines. Blank lines are skipped.
pub fn parse_pairs(text: &str, limit: Option<usize>) -> Result<LoadedPairs> {
    let mut out = LoadedPairs::default();
    for (i, line) in text.lines().enumerate() {
        if limit.is_some_and(|l| out.pairs.len() >= l) {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let pair = SentencePair::from_text(fields[0], fields[1]);
        if pair.source.is_empty() || pair.target.is_empty() {
            out.dropped += 1;
        } else {
            out.pairs.push(pair);
        }
    }
    Ok(out)
}

pub fn load_pairs(path: impl AsRef<Path>, limit: Option<usize>) -> Result<LoadedPairs> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, limit)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[SentencePair]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in pairs {
        text.push_str(&p.source.join(" "));
        text.push('\t');
        text.push_str(&p.target.join(" "));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Token ↔ id bijection. Ids 0..4 are PAD, UNK, START, STOP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` lines, specials first.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(&format!("{t}\t{i}\n"));
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (tok, id) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected token<TAB>id".into(),
            })?;
            let id: usize = id.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad id {id:?}"),
            })?;
            if id != tokens.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("ids must be consecutive, expected {}", tokens.len()),
                });
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(Error::Format("vocabulary must begin with the reserved tokens".into()));
        }
        Vocabulary::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.dump().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse_dump(&text)
    }
}

/// Keeps the `cap - 4` most frequent tokens; ties go to the earlier first
/// occurrence (sources before targets within a pair).
pub fn build_vocab(pairs: &[SentencePair], cap: usize) -> Result<Vocabulary> {
    if cap < SPECIALS.len() + 1 {
        return Err(Error::config(format!("vocabulary cap {cap} must be at least 5")));
    }
    if pairs.is_empty() {
        return Err(Error::contract("build_vocab: no pairs"));
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for p in pairs {
        for t in p.source.iter().chain(&p.target) {
            if SPECIALS.contains(&t.as_str()) {
                continue;
            }
            let e = counts.entry(t.as_str()).or_insert_with(|| {
                order += 1;
                (0, order)
            });
            e.0 += 1;
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(t, (c, o))| (t, c, o)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(cap - SPECIALS.len()).map(|r| r.0.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// A pair mapped to ids. Source OOV words get ids `base_size + k` where `k`
/// is their first-occurrence index among the source OOVs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub src_ids: Vec<usize>,
    pub src_ext_ids: Vec<usize>,
    pub src_oovs: Vec<String>,
    pub tgt_ids: Vec<usize>,
    pub tgt_ext_ids: Vec<usize>,
    pub base_size: usize,
}

impl EncodedExample {
    /// Size of the per-example extended vocabulary.
    pub fn extended_size(&self) -> usize {
        self.base_size + self.src_oovs.len()
    }

    /// Target ids without the closing STOP.
    pub fn reference_ids(&self) -> &[usize] {
        match self.tgt_ext_ids.split_last() {
            Some((&STOP, rest)) => rest,
            _ => &self.tgt_ext_ids,
        }
    }
}

pub fn encode(pair: &SentencePair, vocab: &Vocabulary, max_len: usize) -> EncodedExample {
    assert!(max_len >= 1, "max_len must be positive");
    let base = vocab.size();
    let source = &pair.source[..pair.source.len().min(max_len)];
    let mut src_oovs: Vec<String> = Vec::new();
    let mut src_ids = Vec::with_capacity(source.len());
    let mut src_ext_ids = Vec::with_capacity(source.len());
    for tok in source {
        match vocab.id_of(tok) {
            Some(id) => {
                src_ids.push(id);
                src_ext_ids.push(id);
            }
            None => {
                let k = match src_oovs.iter().position(|o| o == tok) {
                    Some(k) => k,
                    None => {
                        src_oovs.push(tok.clone());
                        src_oovs.len() - 1
                    }
                };
                src_ids.push(UNK);
                src_ext_ids.push(base + k);
            }
        }
    }
    let target = &pair.target[..pair.target.len().min(max_len - 1)];
    let mut tgt_ids = Vec::with_capacity(target.len() + 1);
    let mut tgt_ext_ids = Vec::with_capacity(target.len() + 1);
    for tok in target {
        match vocab.id_of(tok) {
            Some(id) => {
                tgt_ids.push(id);
                tgt_ext_ids.push(id);
            }
            None => {
                tgt_ids.push(UNK);
                let ext = src_oovs.iter().position(|o| o == tok).map_or(UNK, |k| base + k);
                tgt_ext_ids.push(ext);
            }
        }
    }
    tgt_ids.push(STOP);
    tgt_ext_ids.push(STOP);
    EncodedExample {
        src_ids,
        src_ext_ids,
        src_oovs,
        tgt_ids,
        tgt_ext_ids,
        base_size: base,
    }
}

/// Maps ids back to tokens, stopping at (and excluding) STOP.
pub fn decode_tokens(ids: &[usize], vocab: &Vocabulary, src_oovs: &[String]) -> Result<Vec<String>> {
    let base = vocab.size();
    let mut out = Vec::new();
    for &id in ids {
        if id == STOP {
            break;
        }
        let tok = if id < base {
            vocab.token_of(id).expect("id below size")
        } else if id - base < src_oovs.len() {
            &src_oovs[id - base]
        } else {
            return Err(Error::Decode(format!(
                "id {id} outside extended vocabulary of size {}",
                base + src_oovs.len()
            )));
        };
        out.push(tok.to_string());
    }
    Ok(out)
}

pub struct Splits {
    pub train: Vec<SentencePair>,
    pub val: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
}

/// Seeded shuffle, then contiguous train / val / test slices.
pub fn split(pairs: &[SentencePair], train_n: usize, val_n: usize, test_n: usize, seed: u64) -> Result<Splits> {
    let needed = train_n + val_n + test_n;
    if needed > pairs.len() {
        return Err(Error::config(format!(
            "split needs {needed} pairs but only {} are available",
            pairs.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: std::ops::Range<usize>| idx[r].iter().map(|&i| pairs[i].clone()).collect();
    Ok(Splits {
        train: take(0..train_n),
        val: take(train_n..train_n + val_n),
        test: take(train_n + val_n..needed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str, t: &str) -> SentencePair {
        SentencePair::from_text(s, t)
    }

    #[test]
    fn tokenizes_tab_separated_line() {
        let got = parse_pairs("How do I learn?\tWhat is the way to learn?\n", None).unwrap();
        assert_eq!(got.pairs[0].source.len(), 4);
        assert_eq!(got.pairs[0].target.len(), 6);
        assert_eq!(got.pairs[0].source[0], "how");
    }

    #[test]
    fn empty_input_gives_nothing() {
        let got = parse_pairs("", None).unwrap();
        assert!(got.pairs.is_empty());
        assert_eq!(got.dropped, 0);
    }

    #[test]
    fn missing_tab_names_line() {
        let err = parse_pairs("no tab here\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn empty_side_is_dropped_and_counted() {
        let got = parse_pairs("a b\t \n c\td\n", None).unwrap();
        assert_eq!(got.pairs.len(), 1);
        assert_eq!(got.dropped, 1);
    }

    #[test]
    fn limit_caps_pairs() {
        let got = parse_pairs("a\tb\nc\td\ne\tf\n", Some(2)).unwrap();
        assert_eq!(got.pairs.len(), 2);
    }

    #[test]
    fn frequency_then_first_occurrence() {
        let mut pairs = vec![pair("x learn", "y learn")];
        for _ in 0..4 {
            pairs.push(pair("learn learn", "z learn"));
        }
        let v = build_vocab(&pairs, 6).unwrap();
        assert_eq!(v.size(), 6);
        assert_eq!(&v.tokens()[..4], &SPECIALS.map(String::from));
        assert_eq!(v.id_of("learn"), Some(4));
        assert_eq!(v.id_of("z"), Some(5));
        assert_eq!(v.id_of("x"), None);
        let tie = build_vocab(&[pair("x y", "y x")], 5).unwrap();
        assert_eq!(tie.id_of("x"), Some(4));
    }

    #[test]
    fn large_cap_keeps_everything() {
        let v = build_vocab(&[pair("a b", "c a")], 5000).unwrap();
        assert_eq!(v.size(), 7);
    }

    #[test]
    fn tiny_cap_is_config_error() {
        assert!(matches!(build_vocab(&[pair("a", "b")], 4), Err(Error::Config(_))));
    }

    #[test]
    fn oov_source_words_get_extended_ids() {
        let pairs: Vec<SentencePair> = (0..6).map(|i| pair(&format!("a w{i}"), "a")).collect();
        let v = build_vocab(&pairs, 10).unwrap();
        assert_eq!(v.size(), 10);
        let e = encode(&pair("zzz a zzz", "zzz a"), &v, 20);
        let a = v.id_of("a").unwrap();
        assert_eq!(e.src_ext_ids, vec![10, a, 10]);
        assert_eq!(e.src_ids, vec![UNK, a, UNK]);
        assert_eq!(e.src_oovs, vec!["zzz".to_string()]);
        assert_eq!(e.tgt_ext_ids, vec![10, a, STOP]);
        assert_eq!(e.tgt_ids, vec![UNK, a, STOP]);
    }

    #[test]
    fn in_vocab_source_has_no_extension() {
        let v = build_vocab(&[pair("a b c", "c b a")], 100).unwrap();
        let e = encode(&pair("a b c", "c b a"), &v, 20);
        assert_eq!(e.src_ids, e.src_ext_ids);
        assert!(e.src_oovs.is_empty());
    }

    #[test]
    fn truncates_to_max_len() {
        let long: Vec<String> = (0..25).map(|i| format!("t{i}")).collect();
        let p = SentencePair {
            source: long.clone(),
            target: long,
        };
        let v = build_vocab(std::slice::from_ref(&p), 5000).unwrap();
        let e = encode(&p, &v, 20);
        assert_eq!(e.src_ids.len(), 20);
        assert_eq!(e.tgt_ids.len(), 20);
        assert_eq!(*e.tgt_ids.last().unwrap(), STOP);
    }

    #[test]
    fn decode_maps_extended_ids_and_stops() {
        let v = build_vocab(&[pair("a b", "a")], 100).unwrap();
        let a = v.id_of("a").unwrap();
        let oovs = vec!["zzz".to_string()];
        let got = decode_tokens(&[a, v.size(), STOP, a], &v, &oovs).unwrap();
        assert_eq!(got, vec!["a", "zzz"]);
        assert!(decode_tokens(&[STOP], &v, &oovs).unwrap().is_empty());
        assert!(matches!(
            decode_tokens(&[v.size() + 5], &v, &oovs),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn split_sizes_and_errors() {
        let pairs: Vec<SentencePair> = (0..10).map(|i| pair(&format!("s{i}"), "t")).collect();
        let s = split(&pairs, 6, 2, 2, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let mut all: Vec<_> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .map(|p| p.source[0].clone())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
        let again = split(&pairs, 6, 2, 2, 7).unwrap();
        assert_eq!(again.train, s.train);
        assert!(matches!(split(&pairs, 9, 1, 1, 7), Err(Error::Config(_))));
    }

    #[test]
    fn vocab_dump_round_trips() {
        let v = build_vocab(&[pair("a b", "c")], 100).unwrap();
        let back = Vocabulary::parse_dump(&v.dump()).unwrap();
        assert_eq!(back, v);
        assert!(v.dump().starts_with("<pad>\t0\n<unk>\t1\n<s>\t2\n</s>\t3\n"));
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "x", "y", "z"]), 1..30)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn source_round_trips_through_extended_ids(src in sentence(), tgt in sentence(), max_len in 1usize..25) {
            let v = build_vocab(&[pair("a b c d", "a")], 100).unwrap();
            let p = SentencePair { source: src.clone(), target: tgt };
            let e = encode(&p, &v, max_len);
            let back = decode_tokens(&e.src_ext_ids, &v, &e.src_oovs).unwrap();
            prop_assert_eq!(&back[..], &src[..src.len().min(max_len)]);
            // extended ids form a contiguous block starting at the base size
            let mut ext: Vec<usize> = e.src_ext_ids.iter().copied().filter(|&i| i >= v.size()).collect();
            ext.sort();
            ext.dedup();
            prop_assert_eq!(ext, (v.size()..v.size() + e.src_oovs.len()).collect::<Vec<_>>());
            prop_assert!(e.tgt_ext_ids.len() <= max_len);
        }

        #[test]
        fn vocab_membership_ignores_pair_order(pairs in prop::collection::vec((sentence(), sentence()), 1..8), seed in any::<u64>()) {
            let pairs: Vec<SentencePair> = pairs.into_iter().map(|(source, target)| SentencePair { source, target }).collect();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = build_vocab(&pairs, 5000).unwrap();
            let b = build_vocab(&shuffled, 5000).unwrap();
            let mut ta = a.tokens().to_vec();
            let mut tb = b.tokens().to_vec();
            ta.sort();
            tb.sort();
            prop_assert_eq!(ta, tb);
        }
    }
}
