//! Statement-level generation of OpenQASM 2.0 circuits with a small
//! transformer, a random baseline, a real-versus-random classifier and
//! structural comparison tools.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod generator;
pub mod nn;
pub mod qasm;
pub mod random_gen;
pub mod selftest;
pub mod structure;
pub mod synth;
pub mod vocab;

pub use classifier::{Classifier, ConfusionMatrix, SubwordVocab};
pub use corpus::{Corpus, CorpusStats, NamedCircuit, PreprocessConfig};
pub use generator::{GenerateOptions, Generation, GenerationConstraints, GenerationError};
pub use nn::{ModelConfig, TrainConfig, TransformerModel};
pub use qasm::{Circuit, GateKind, Statement, ValidationReport};
pub use structure::{CircuitMetrics, ClusterReport, Source};
pub use vocab::{StatementVocab, TokenId};
