//! Statement-level vocabulary: every distinct canonical body statement in the
//! corpus is one token, so any token sequence decodes to complete,
//! well-formed statements.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusStats;
use crate::qasm::{Circuit, Statement};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const PAD: TokenId = 2;
pub const NUM_SPECIALS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("statement `{0}` is not in the vocabulary")]
    UnknownStatement(String),
    #[error("token id {0} is out of range")]
    InvalidToken(TokenId),
    #[error("vocabulary entry `{text}` is not a valid body statement: {reason}")]
    BadEntry { text: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementVocab {
    statements: Vec<Statement>,
    texts: Vec<String>,
    id_of: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    specials: Specials,
    statements: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
struct Specials {
    bos: TokenId,
    eos: TokenId,
    pad: TokenId,
}

impl StatementVocab {
    /// Builds the vocabulary from canonical statement texts. Entries that do
    /// not parse as a single body statement, or that are invalid on their
    /// own (duplicate operands, wrong parameter count), are rejected.
    pub fn from_texts<I, S>(texts: I) -> Result<StatementVocab, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = StatementVocab {
            statements: Vec::new(),
            texts: Vec::new(),
            id_of: HashMap::new(),
        };
        for t in texts {
            let t = t.as_ref();
            let stmt: Statement = t.parse().map_err(|e: crate::qasm::SyntaxError| VocabError::BadEntry {
                text: t.into(),
                reason: e.message,
            })?;
            if !stmt.is_body() {
                return Err(VocabError::BadEntry {
                    text: t.into(),
                    reason: "not a gate, measure or barrier".into(),
                });
            }
            if let Some(v) = stmt.local_violations().first() {
                return Err(VocabError::BadEntry {
                    text: t.into(),
                    reason: format!("{v:?}"),
                });
            }
            vocab.push(stmt);
        }
        Ok(vocab)
    }

    fn push(&mut self, stmt: Statement) {
        let text = stmt.to_string();
        if self.id_of.contains_key(&text) {
            return;
        }
        let id = (self.texts.len() + NUM_SPECIALS) as TokenId;
        self.id_of.insert(text.clone(), id);
        self.texts.push(text);
        self.statements.push(stmt);
    }

    pub fn size(&self) -> usize {
        self.texts.len() + NUM_SPECIALS
    }

    pub fn id_of(&self, text: &str) -> Option<TokenId> {
        self.id_of.get(text).copied()
    }

    /// Canonical text of a non-special token.
    pub fn text_of(&self, id: TokenId) -> Option<&str> {
        (id as usize)
            .checked_sub(NUM_SPECIALS)
            .and_then(|i| self.texts.get(i))
            .map(String::as_str)
    }

    pub fn statement(&self, id: TokenId) -> Option<&Statement> {
        (id as usize)
            .checked_sub(NUM_SPECIALS)
            .and_then(|i| self.statements.get(i))
    }

    /// Non-special token ids in order.
    pub fn statement_ids(&self) -> impl Iterator<Item = TokenId> {
        (NUM_SPECIALS..self.size()).map(|i| i as TokenId)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            specials: Specials {
                bos: BOS,
                eos: EOS,
                pad: PAD,
            },
            statements: self.texts.clone(),
        };
        serde_json::to_string_pretty(&file).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<StatementVocab, Box<dyn std::error::Error + Send + Sync>> {
        let file: VocabFile = serde_json::from_str(text)?;
        Ok(StatementVocab::from_texts(&file.statements)?)
    }
}

/// One token per distinct valid body statement, in the order recorded by
/// `stats` (first appearance over sorted file names, then line order).
/// Entries that are invalid on their own are left out and logged.
pub fn build_vocab(stats: &CorpusStats) -> StatementVocab {
    let mut vocab = StatementVocab::from_texts(std::iter::empty::<&str>()).expect("empty vocab");
    for text in &stats.unique_statements {
        match StatementVocab::from_texts([text]) {
            Ok(single) => vocab.push(single.statements.into_iter().next().expect("one entry")),
            Err(e) => log::warn!("left out of vocabulary: {e}"),
        }
    }
    vocab
}

/// BOS, one id per body statement, EOS.
pub fn encode(c: &Circuit, v: &StatementVocab) -> Result<Vec<TokenId>, VocabError> {
    let mut ids = vec![BOS];
    for s in c.body() {
        let text = s.to_string();
        ids.push(v.id_of(&text).ok_or(VocabError::UnknownStatement(text))?);
    }
    ids.push(EOS);
    Ok(ids)
}

/// Maps ids back to statements, dropping specials.
pub fn decode(ids: &[TokenId], v: &StatementVocab) -> Result<Vec<Statement>, VocabError> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        if id as usize >= v.size() {
            return Err(VocabError::InvalidToken(id));
        }
        if let Some(s) = v.statement(id) {
            out.push(s.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qasm::parse_strict;

    fn fixture() -> StatementVocab {
        StatementVocab::from_texts(["h q[0];", "cx q[0],q[1];", "h q[1];"]).unwrap()
    }

    #[test]
    fn builds_from_stats_with_specials() {
        let stats = CorpusStats {
            files: vec!["a".into()],
            qubit_counts: vec![2],
            gate_counts: vec![3],
            unique_statements: vec!["h q[0];".into(), "h q[1];".into(), "cx q[0],q[1];".into()],
            file_count: 1,
            source_dir: None,
        };
        let v = build_vocab(&stats);
        assert_eq!(v.size(), 6);
        assert_ne!(v.id_of("h q[0];"), v.id_of("h q[1];"));
        assert_eq!(v.id_of("h q[0];"), Some(3));
    }

    #[test]
    fn invalid_entries_are_left_out() {
        let stats = CorpusStats {
            files: vec!["a".into()],
            qubit_counts: vec![2],
            gate_counts: vec![2],
            unique_statements: vec!["cx q[0],q[0];".into(), "h q[0];".into(), "rz q[0];".into()],
            file_count: 1,
            source_dir: None,
        };
        let v = build_vocab(&stats);
        assert_eq!(v.size(), 4);
        assert_eq!(v.id_of("h q[0];"), Some(3));
    }

    #[test]
    fn encode_bell_body() {
        let v = fixture();
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\nh q[0];\ncx q[0],q[1];").unwrap();
        let ids = encode(&c, &v).unwrap();
        assert_eq!(ids, vec![0, 3, 4, 1]);
        let body = decode(&ids, &v).unwrap();
        assert_eq!(body, c.body().cloned().collect::<Vec<_>>());
        let texts: Vec<String> = body.iter().map(|s| s.to_string()).collect();
        assert_eq!(texts, vec!["h q[0];", "cx q[0],q[1];"]);
    }

    #[test]
    fn empty_body_and_specials() {
        let v = fixture();
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];").unwrap();
        assert_eq!(encode(&c, &v).unwrap(), vec![BOS, EOS]);
        assert!(decode(&[0, 1], &v).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let v = fixture();
        assert_eq!(decode(&[0, 999, 1], &v), Err(VocabError::InvalidToken(999)));
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nh q[2];").unwrap();
        assert_eq!(encode(&c, &v), Err(VocabError::UnknownStatement("h q[2];".into())));
    }

    #[test]
    fn json_round_trip() {
        let v = fixture();
        let json = v.to_json();
        assert!(json.contains("\"BOS\": 0"));
        assert_eq!(StatementVocab::from_json(&json).unwrap(), v);
    }

    #[test]
    fn ids_are_contiguous_inverses() {
        let v = fixture();
        for id in v.statement_ids() {
            assert_eq!(v.id_of(v.text_of(id).unwrap()), Some(id));
        }
        assert_eq!(v.text_of(BOS), None);
    }
}
