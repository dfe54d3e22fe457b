//! Greedy pair-merge sub-word vocabulary for the classifier.
//!
//! Text is pre-split into runs of non-whitespace and single whitespace
//! characters, so no learned piece ever mixes the two. Ids: four specials,
//! then the sorted alphabet, then merged pieces in merge order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["[CLS]", "[SEP]", "[PAD]", "[UNK]"];
pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SubwordFile", into = "SubwordFile")]
pub struct SubwordVocab {
    /// Non-special pieces; piece `i` has id `i + NUM_SPECIALS`.
    pieces: Vec<String>,
    alphabet_len: usize,
    pub max_len: usize,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
}

#[derive(Serialize, Deserialize)]
struct SubwordFile {
    specials: Vec<String>,
    alphabet: Vec<String>,
    merges: Vec<String>,
    max_len: usize,
}

impl From<SubwordFile> for SubwordVocab {
    fn from(f: SubwordFile) -> Self {
        let alphabet_len = f.alphabet.len();
        let mut pieces = f.alphabet;
        pieces.extend(f.merges);
        SubwordVocab::from_pieces(pieces, alphabet_len, f.max_len)
    }
}

impl From<SubwordVocab> for SubwordFile {
    fn from(v: SubwordVocab) -> Self {
        SubwordFile {
            specials: SPECIAL_NAMES.iter().map(|s| s.to_string()).collect(),
            alphabet: v.pieces[..v.alphabet_len].to_vec(),
            merges: v.pieces[v.alphabet_len..].to_vec(),
            max_len: v.max_len,
        }
    }
}

impl SubwordVocab {
    fn from_pieces(pieces: Vec<String>, alphabet_len: usize, max_len: usize) -> SubwordVocab {
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), (i + NUM_SPECIALS) as u32))
            .collect();
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        SubwordVocab {
            pieces,
            alphabet_len,
            max_len,
            index,
            max_piece_chars,
        }
    }

    /// A vocabulary from explicit pieces (single characters and longer
    /// pieces may be mixed; order is kept).
    pub fn with_pieces<I, S>(pieces: I, max_len: usize) -> SubwordVocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = std::collections::HashSet::new();
        let pieces: Vec<String> = pieces
            .into_iter()
            .map(Into::into)
            .filter(|p: &String| !p.is_empty() && seen.insert(p.clone()))
            .collect();
        let alphabet_len = pieces.iter().take_while(|p| p.chars().count() == 1).count();
        SubwordVocab::from_pieces(pieces, alphabet_len, max_len)
    }

    pub fn size(&self) -> usize {
        self.pieces.len() + NUM_SPECIALS
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet_len
    }

    pub fn merge_count(&self) -> usize {
        self.pieces.len() - self.alphabet_len
    }

    pub fn id_of(&self, piece: &str) -> Option<u32> {
        SPECIAL_NAMES
            .iter()
            .position(|s| *s == piece)
            .map(|i| i as u32)
            .or_else(|| self.index.get(piece).copied())
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        let i = id as usize;
        if i < NUM_SPECIALS {
            Some(SPECIAL_NAMES[i])
        } else {
            self.pieces.get(i - NUM_SPECIALS).map(String::as_str)
        }
    }

    /// Greedy longest-match segmentation without CLS or truncation.
    pub fn segment(&self, text: &str) -> Vec<u32> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let start = chars[i].0;
            let longest = self.max_piece_chars.min(chars.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                let end = chars.get(i + n).map_or(text.len(), |c| c.0);
                self.index.get(&text[start..end]).map(|&id| (id, n))
            });
            match hit {
                Some((id, n)) => {
                    out.push(id);
                    i += n;
                }
                None => {
                    out.push(UNK);
                    i += 1;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("subword vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<SubwordVocab, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn pre_split(text: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                words.push(&text[s..i]);
            }
            words.push(&text[i..i + c.len_utf8()]);
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push(&text[s..]);
    }
    words
}

/// Learns merges until the vocabulary (specials included) reaches
/// `target_vocab_size` or no adjacent pair is left. The most frequent pair
/// is merged first; ties go to the lexicographically smallest pair.
///
/// # Panics
/// If `texts` is empty.
pub fn train_subword<S: AsRef<str>>(texts: &[S], target_vocab_size: usize, max_len: usize) -> SubwordVocab {
    assert!(!texts.is_empty(), "train_subword on an empty corpus");
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in texts {
        for w in pre_split(t.as_ref()) {
            *word_freq.entry(w).or_insert(0) += 1;
        }
    }
    let mut alphabet: Vec<String> = word_freq
        .keys()
        .flat_map(|w| w.chars())
        .map(String::from)
        .collect();
    alphabet.sort();
    alphabet.dedup();
    if target_vocab_size < alphabet.len() + NUM_SPECIALS {
        log::warn!(
            "subword target {target_vocab_size} is below alphabet + specials ({}); using characters only",
            alphabet.len() + NUM_SPECIALS
        );
    }

    let mut words: Vec<(Vec<String>, usize)> = word_freq
        .iter()
        .map(|(w, &f)| (w.chars().map(String::from).collect(), f))
        .collect();
    let mut pieces = alphabet.clone();
    let mut known: std::collections::HashSet<String> = pieces.iter().cloned().collect();

    while pieces.len() + NUM_SPECIALS < target_vocab_size {
        let mut pair_freq: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (syms, f) in &words {
            for w in syms.windows(2) {
                *pair_freq.entry((&w[0], &w[1])).or_insert(0) += f;
            }
        }
        // BTreeMap iterates pairs in lexicographic order, so the first
        // maximum found is the tie winner.
        let Some(best) = pair_freq
            .iter()
            .fold(None::<(&(&str, &str), usize)>, |acc, (p, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((p, c)),
            })
            .map(|(p, _)| (p.0.to_string(), p.1.to_string()))
        else {
            break;
        };
        let merged = format!("{}{}", best.0, best.1);
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == best.0 && syms[i + 1] == best.1 {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = out;
        }
        if known.insert(merged.clone()) {
            pieces.push(merged);
        }
    }
    SubwordVocab::from_pieces(pieces, alphabet.len(), max_len)
}

/// `CLS` followed by the greedy segmentation, truncated to `v.max_len`.
pub fn encode_for_classifier(text: &str, v: &SubwordVocab) -> Vec<u32> {
    let mut ids = vec![CLS];
    ids.extend(v.segment(text));
    ids.truncate(v.max_len.max(1));
    ids
}

/// Concatenates pieces, skipping CLS, SEP and PAD. UNK renders as `[UNK]`.
pub fn detokenize(ids: &[u32], v: &SubwordVocab) -> String {
    ids.iter()
        .filter(|&&id| !matches!(id, CLS | SEP | PAD))
        .filter_map(|&id| v.piece(id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn character_level_when_target_is_alphabet() {
        let v = train_subword(&["hh hh"], 6, 512);
        assert_eq!(v.alphabet_len(), 2);
        assert_eq!(v.merge_count(), 0);
        assert_eq!(v.size(), 6);
    }

    #[test]
    fn most_frequent_pair_merged() {
        let v = train_subword(&["hh hh"], 7, 512);
        assert_eq!(v.merge_count(), 1);
        assert!(v.id_of("hh").is_some());
        assert_eq!(v.segment("hh hh").len(), 3);
    }

    #[test]
    fn ties_break_lexicographically() {
        // (a,b) and (c,d) both occur once; (a,b) sorts first.
        let v = train_subword(&["cd ab"], 4 + 5 + 1, 512);
        assert!(v.id_of("ab").is_some());
        assert!(v.id_of("cd").is_none());
    }

    #[test]
    fn lossless_round_trip() {
        let text = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nh q[0];\ncx q[0],q[1];\n";
        let v = train_subword(&[text], 60, 10_000);
        let ids = encode_for_classifier(text, &v);
        assert_eq!(ids[0], CLS);
        assert_eq!(detokenize(&ids, &v), text);
    }

    #[test]
    fn unknown_characters_and_truncation() {
        let v = train_subword(&["ab"], 6, 8);
        assert_eq!(encode_for_classifier("", &v), vec![CLS]);
        assert_eq!(encode_for_classifier("z", &v), vec![CLS, UNK]);
        let long = "ab".repeat(5000);
        assert_eq!(encode_for_classifier(&long, &v).len(), 8);
        let v512 = train_subword(&["ab"], 6, DEFAULT_MAX_LEN);
        assert!(encode_for_classifier(&long, &v512).len() <= 512);
    }

    #[test]
    fn greedy_prefers_longest_piece() {
        let v = SubwordVocab::with_pieces(["h", " ", "q", "[", "0", "]", ";", "q["], 512);
        let ids = v.segment("h q[0];");
        let pieces: Vec<&str> = ids.iter().map(|&i| v.piece(i).unwrap()).collect();
        assert_eq!(pieces, vec!["h", " ", "q[", "0", "]", ";"]);
    }

    #[test]
    fn json_round_trip() {
        let v = train_subword(&["cx q[0],q[1];\nh q[2];\n"], 30, 128);
        let back = SubwordVocab::from_json(&v.to_json()).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id_of("[CLS]"), Some(CLS));
    }
}
