//! Real-versus-random circuit classifier: a non-causal transformer encoder
//! over sub-word tokens with a two-way head on the first position.

pub mod subword;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::NamedCircuit;
use crate::nn::ops::softmax;
use crate::nn::{HeadKind, ModelConfig, ModelError, Sample, TrainConfig, TrainError, Trainer, TransformerModel};
use crate::qasm::{self, Circuit};

pub use subword::{detokenize, encode_for_classifier, train_subword, SubwordVocab};

pub const LABEL_REAL: usize = 0;
pub const LABEL_RANDOM: usize = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("real and random sets must be the same size ({real} vs {random})")]
    ImbalancedDataset { real: usize, random: usize },
    #[error("split leaves an empty train or test set")]
    EmptySplit,
    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidSplit(f64),
    #[error("model is not a two-class classifier")]
    NotAClassifier,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Counts with `random` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual: usize, predicted: usize) {
        match (actual == LABEL_RANDOM, predicted == LABEL_RANDOM) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.correct() as f64 / self.total() as f64
        }
    }
}

/// Text the classifier sees for a circuit: the canonical serialization.
pub fn canonical_text(c: &Circuit) -> String {
    qasm::serialize(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Probability of the predicted label.
    pub probability: f64,
    pub probabilities: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub model: TransformerModel,
    pub vocab: SubwordVocab,
}

impl Classifier {
    pub fn new(model: TransformerModel, vocab: SubwordVocab) -> Result<Classifier, ClassifierError> {
        if model.config.head != (HeadKind::Classifier { classes: 2 }) {
            return Err(ClassifierError::NotAClassifier);
        }
        Ok(Classifier { model, vocab })
    }

    pub fn encode(&self, c: &Circuit) -> Vec<u32> {
        encode_for_classifier(&canonical_text(c), &self.vocab)
    }

    /// Label is the argmax; an exact tie goes to `real` with a warning.
    pub fn classify(&self, c: &Circuit) -> Result<Prediction, ClassifierError> {
        let logits = self.model.forward(&self.encode(c))?.into_vec();
        let p = softmax(&logits);
        let probabilities = [p[0], p[1]];
        let label = if p[1] > p[0] {
            LABEL_RANDOM
        } else {
            if p[0] == p[1] {
                log::warn!("classifier tie at probability 0.5, reporting label 0");
            }
            LABEL_REAL
        };
        Ok(Prediction {
            label,
            probability: probabilities[label],
            probabilities,
        })
    }

    /// Parses `text` leniently first, so formatting differences such as
    /// trailing whitespace do not change the result.
    pub fn classify_text(&self, text: &str) -> Result<Prediction, ClassifierError> {
        self.classify(&qasm::parse_lenient(text).circuit)
    }

    /// Classifies in parallel, preserving input order.
    pub fn classify_all(&self, circuits: &[&Circuit]) -> Result<Vec<Prediction>, ClassifierError> {
        circuits.par_iter().map(|c| self.classify(c)).collect()
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "classifier", "subword": self.vocab })
    }

    pub fn from_checkpoint(model: TransformerModel, metadata: &serde_json::Value) -> Result<Classifier, ClassifierError> {
        let vocab: SubwordVocab = serde_json::from_value(metadata["subword"].clone())
            .map_err(|_| ClassifierError::NotAClassifier)?;
        Classifier::new(model, vocab)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    /// Model dimensions; `vocab_size` is replaced by the learned vocabulary.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fraction of each class used for training.
    pub split: f64,
    pub subword_vocab_size: usize,
}

impl ClassifierOptions {
    pub fn desk() -> ClassifierOptions {
        ClassifierOptions {
            model: ModelConfig::desk_classifier(0),
            train: TrainConfig {
                learning_rate: 1e-3,
                ..TrainConfig::classifier()
            },
            split: 0.85,
            subword_vocab_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    pub label: usize,
}

/// Algorithm families (file-name prefix before the first `_`) of real
/// circuits that occur on both sides of the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub family: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion_matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub test_size: usize,
    pub train: Vec<SplitEntry>,
    pub test: Vec<SplitEntry>,
    pub shared_families: Vec<LeakageEntry>,
    pub epoch_losses: Vec<f64>,
}

pub struct TrainedClassifier {
    pub classifier: Classifier,
    pub report: EvalReport,
}

pub fn family(name: &str) -> String {
    let file = name.rsplit(['/', '\\']).next().unwrap_or(name);
    let stem = file.strip_suffix(".qasm").unwrap_or(file);
    stem.split('_').next().unwrap_or(stem).to_string()
}

/// Per-class shuffle with `seed`, then the first `round(split * n)` of each
/// class go to training. Returns (train, test) as (index, label) pairs.
pub fn stratified_split(
    n_real: usize,
    n_random: usize,
    split: f64,
    seed: u64,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>), ClassifierError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(ClassifierError::InvalidSplit(split));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, n) in [(LABEL_REAL, n_real), (LABEL_RANDOM, n_random)] {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let cut = (split * n as f64).round() as usize;
        train.extend(idx[..cut].iter().map(|&i| (i, label)));
        test.extend(idx[cut..].iter().map(|&i| (i, label)));
    }
    if train.is_empty() || test.is_empty() {
        return Err(ClassifierError::EmptySplit);
    }
    Ok((train, test))
}

/// Learns the sub-word vocabulary on the training texts, trains the encoder
/// and evaluates on the held-out part.
pub fn train_classifier(
    real: &[NamedCircuit],
    random: &[NamedCircuit],
    opts: &ClassifierOptions,
) -> Result<TrainedClassifier, ClassifierError> {
    if real.len() != random.len() {
        return Err(ClassifierError::ImbalancedDataset {
            real: real.len(),
            random: random.len(),
        });
    }
    opts.train.validate()?;
    let seed = opts.train.seed;
    let (train_idx, test_idx) = stratified_split(real.len(), random.len(), opts.split, seed)?;
    let pick = |&(i, label): &(usize, usize)| if label == LABEL_REAL { &real[i] } else { &random[i] };

    let train_texts: Vec<String> = train_idx.iter().map(|e| canonical_text(&pick(e).circuit)).collect();
    let max_len = subword::DEFAULT_MAX_LEN.min(opts.model.n_positions);
    let vocab = train_subword(&train_texts, opts.subword_vocab_size, max_len);

    let cfg = ModelConfig {
        vocab_size: vocab.size(),
        causal: false,
        head: HeadKind::Classifier { classes: 2 },
        ..opts.model.clone()
    };
    let model = TransformerModel::new(cfg, seed)?;
    let encoded: Vec<(Vec<u32>, usize)> = train_texts
        .iter()
        .zip(&train_idx)
        .map(|(t, &(_, label))| (encode_for_classifier(t, &vocab), label))
        .collect();

    let mut trainer = Trainer::new(model, opts.train.clone(), Some(subword::PAD))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(opts.train.epochs);
    for epoch in 0..opts.train.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.train.batch_size) {
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .map(|&i| Sample::Labeled {
                    tokens: &encoded[i].0,
                    label: encoded[i].1,
                })
                .collect();
            sum += trainer.train_step(&batch)?;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("classifier epoch {}: mean loss {mean:.5}", epoch + 1);
        epoch_losses.push(mean);
    }

    let classifier = Classifier::new(trainer.into_model(), vocab)?;
    let test_circuits: Vec<&Circuit> = test_idx.iter().map(|e| &pick(e).circuit).collect();
    let predictions = classifier.classify_all(&test_circuits)?;
    let mut confusion = ConfusionMatrix::default();
    for (&(_, label), p) in test_idx.iter().zip(&predictions) {
        confusion.record(label, p.label);
    }

    let entries = |idx: &[(usize, usize)]| -> Vec<SplitEntry> {
        idx.iter()
            .map(|e| SplitEntry {
                name: pick(e).name.clone(),
                label: e.1,
            })
            .collect()
    };
    let mut family_counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in train_idx.iter().filter(|e| e.1 == LABEL_REAL) {
        family_counts.entry(family(&pick(e).name)).or_default().0 += 1;
    }
    for e in test_idx.iter().filter(|e| e.1 == LABEL_REAL) {
        family_counts.entry(family(&pick(e).name)).or_default().1 += 1;
    }
    let shared_families = family_counts
        .into_iter()
        .filter(|(_, (a, b))| *a > 0 && *b > 0)
        .map(|(family, (train, test))| LeakageEntry { family, train, test })
        .collect();

    let report = EvalReport {
        confusion_matrix: confusion,
        accuracy: confusion.accuracy(),
        test_size: test_idx.len(),
        train: entries(&train_idx),
        test: entries(&test_idx),
        shared_families,
        epoch_losses,
    };
    Ok(TrainedClassifier { classifier, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_counts() {
        let mut m = ConfusionMatrix::default();
        m.record(LABEL_RANDOM, LABEL_RANDOM);
        m.record(LABEL_REAL, LABEL_REAL);
        m.record(LABEL_REAL, LABEL_RANDOM);
        m.record(LABEL_RANDOM, LABEL_REAL);
        m.record(LABEL_REAL, LABEL_REAL);
        assert_eq!((m.tp, m.tn, m.fp, m.fn_), (1, 2, 1, 1));
        assert_eq!(m.total(), 5);
        assert!((m.accuracy() - 0.6).abs() < 1e-15);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"fn\":1"));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let (tr, te) = stratified_split(20, 20, 0.85, 7).unwrap();
        assert_eq!(tr.len(), 34);
        assert_eq!(te.iter().filter(|e| e.1 == LABEL_REAL).count(), 3);
        assert_eq!(stratified_split(20, 20, 0.85, 7).unwrap(), (tr.clone(), te));
        assert_ne!(stratified_split(20, 20, 0.85, 8).unwrap().0, tr);
        assert!(stratified_split(1, 1, 0.85, 0).is_err());
        assert!(stratified_split(5, 5, 1.0, 0).is_err());
    }

    #[test]
    fn family_prefix() {
        assert_eq!(family("synthetic/ghz_05q_2.qasm"), "ghz");
        assert_eq!(family("random_3_2q_4g.qasm"), "random");
        assert_eq!(family("plain.qasm"), "plain");
    }

    #[test]
    fn imbalance_rejected() {
        let c = NamedCircuit {
            name: "a".into(),
            circuit: Circuit::with_body(1, 0, vec![]),
        };
        let err = train_classifier(&[c.clone(), c.clone()], &[c], &ClassifierOptions::desk());
        assert!(matches!(err, Err(ClassifierError::ImbalancedDataset { real: 2, random: 1 })));
    }

    #[test]
    fn probabilities_sum_to_one_and_whitespace_invariant() {
        let vocab = train_subword(&["OPENQASM 2.0;\nh q[0];\n"], 40, 64);
        let cfg = ModelConfig {
            n_positions: 64,
            ..ModelConfig::desk_classifier(vocab.size())
        };
        let clf = Classifier::new(TransformerModel::new(cfg, 3).unwrap(), vocab).unwrap();
        let text = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\nh q[0];\n";
        let a = clf.classify_text(text).unwrap();
        let b = clf.classify_text(&format!("{text}  \n\n\t")).unwrap();
        assert_eq!(a, b);
        assert!((a.probabilities[0] + a.probabilities[1] - 1.0).abs() < 1e-12);
    }
}
