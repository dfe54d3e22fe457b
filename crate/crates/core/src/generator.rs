//! Constrained generation: sample a (qubit count, gate count) target from
//! the corpus, mask out statements that touch qubits beyond the target,
//! decode with top-k sampling under a no-repeat-n-gram rule, and wrap the
//! body in a header that declares every register it uses.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::seq::SliceRandom;

use crate::corpus::{sample_target, CorpusStats, NamedCircuit};
use crate::nn::ops::softmax_in_place;
use crate::nn::{ModelConfig, ModelError, Sample, TrainConfig, TrainError, Trainer, TransformerModel};
use crate::qasm::{Circuit, Statement};
use crate::vocab::{encode, StatementVocab, TokenId, BOS, EOS, NUM_SPECIALS, PAD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("every token is disallowed after {generated} statements")]
    Exhausted { generated: usize, partial: Vec<TokenId> },
    #[error("no statement in the vocabulary fits in {qubit_count} qubits")]
    EmptyMask { qubit_count: usize },
    #[error("model vocabulary ({model}) does not match statement vocabulary ({vocab})")]
    VocabMismatch { model: usize, vocab: usize },
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub top_k: usize,
    pub no_repeat_window: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            top_k: 5,
            no_repeat_window: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConstraints {
    pub qubit_count: usize,
    pub target_gates: usize,
    pub top_k: usize,
    pub no_repeat_window: usize,
    pub allowed_mask: Vec<bool>,
    pub seed: u64,
}

impl GenerationConstraints {
    pub fn new(
        vocab: &StatementVocab,
        qubit_count: usize,
        target_gates: usize,
        opts: &GenerateOptions,
        seed: u64,
    ) -> Result<GenerationConstraints, GenerationError> {
        if opts.top_k == 0 {
            return Err(GenerationError::ZeroTopK);
        }
        let allowed_mask = build_mask(vocab, qubit_count);
        if !allowed_mask[NUM_SPECIALS..].iter().any(|&a| a) {
            return Err(GenerationError::EmptyMask { qubit_count });
        }
        Ok(GenerationConstraints {
            qubit_count,
            target_gates,
            top_k: opts.top_k,
            no_repeat_window: opts.no_repeat_window,
            allowed_mask,
            seed,
        })
    }
}

/// The three-line prologue every generated file starts with.
pub fn build_prompt(qubit_count: usize) -> String {
    format!("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[{qubit_count}];\n")
}

/// `mask[t]` is true iff every qubit index in statement `t` is below
/// `qubit_count` (register names are ignored). EOS is always allowed, BOS
/// and PAD never.
pub fn build_mask(v: &StatementVocab, qubit_count: usize) -> Vec<bool> {
    let mut mask = vec![false; v.size()];
    mask[EOS as usize] = true;
    for id in v.statement_ids() {
        let stmt = v.statement(id).expect("statement id");
        mask[id as usize] = stmt
            .qubit_operands()
            .iter()
            .all(|op| op.index.is_none_or(|i| i < qubit_count));
    }
    mask[BOS as usize] = false;
    mask[PAD as usize] = false;
    mask
}

/// Tokens that would complete an n-gram (`n = window`) already present in
/// `history`.
pub fn banned_by_no_repeat(history: &[TokenId], window: usize) -> Vec<TokenId> {
    if window == 0 || history.len() + 1 < window {
        return Vec::new();
    }
    if window == 1 {
        return history.to_vec();
    }
    let prefix = &history[history.len() + 1 - window..];
    history
        .windows(window)
        .filter(|w| &w[..window - 1] == prefix)
        .map(|w| w[window - 1])
        .collect()
}

/// The renormalized top-k distribution after masking: `(token, probability)`
/// pairs, most probable first. Equal probabilities are ordered by token id,
/// so the lower id wins the last slot.
pub fn top_k_distribution(
    logits: &[f64],
    allowed: &[bool],
    banned: &[TokenId],
    k: usize,
) -> Vec<(TokenId, f64)> {
    assert_eq!(logits.len(), allowed.len(), "logits and mask lengths differ");
    let mut scores: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(&z, &ok)| if ok { z } else { f64::NEG_INFINITY })
        .collect();
    for &b in banned {
        if let Some(s) = scores.get_mut(b as usize) {
            *s = f64::NEG_INFINITY;
        }
    }
    softmax_in_place(&mut scores);
    let mut ranked: Vec<(TokenId, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as TokenId, p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    let total: f64 = ranked.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut ranked {
        *p /= total;
    }
    ranked
}

/// Draws one token from the constrained top-k distribution.
pub fn top_k_sample<R: Rng + ?Sized>(
    logits: &[f64],
    constraints: &GenerationConstraints,
    history: &[TokenId],
    rng: &mut R,
) -> Result<TokenId, GenerationError> {
    let banned = banned_by_no_repeat(history, constraints.no_repeat_window);
    let dist = top_k_distribution(logits, &constraints.allowed_mask, &banned, constraints.top_k);
    if dist.is_empty() {
        return Err(GenerationError::Exhausted {
            generated: history.len().saturating_sub(1),
            partial: history.to_vec(),
        });
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(id, p) in &dist {
        acc += p;
        if u < acc {
            return Ok(id);
        }
    }
    Ok(dist.last().expect("non-empty").0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    Eos,
    ContextFull,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub seed: u64,
    pub circuit: Circuit,
    pub qubit_count: usize,
    pub target_gates: usize,
    pub achieved_gates: usize,
    /// BOS followed by the sampled tokens (EOS included if sampled).
    pub tokens: Vec<TokenId>,
    pub stop: StopReason,
}

impl Generation {
    /// `ketgpt_{seed}_{q}q_{g}g.qasm`
    pub fn file_name(&self) -> String {
        format!("ketgpt_{}_{}q_{}g.qasm", self.seed, self.qubit_count, self.target_gates)
    }
}

/// Full workflow: sample targets from `stats`, then decode.
pub fn generate(
    model: &TransformerModel,
    v: &StatementVocab,
    stats: &CorpusStats,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Generation, GenerationError> {
    let (q, g) = sample_target(stats, seed);
    generate_with_targets(model, v, q, g, seed, opts)
}

/// Decodes from BOS until `target_gates` gates are emitted, EOS is sampled,
/// or the context is full (checked in that order), then post-processes.
pub fn generate_with_targets(
    model: &TransformerModel,
    v: &StatementVocab,
    qubit_count: usize,
    target_gates: usize,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Generation, GenerationError> {
    if model.config.vocab_size != v.size() {
        return Err(GenerationError::VocabMismatch {
            model: model.config.vocab_size,
            vocab: v.size(),
        });
    }
    let constraints = GenerationConstraints::new(v, qubit_count, target_gates, opts, seed)?;
    // Stream 1 keeps decoding draws independent of the target draw.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let mut tokens = vec![BOS];
    let mut achieved = 0;
    let stop = loop {
        if achieved >= target_gates {
            break StopReason::TargetReached;
        }
        if tokens.len() >= model.config.n_positions {
            break StopReason::ContextFull;
        }
        let logits = model.next_token_logits(&tokens)?;
        let next = top_k_sample(&logits, &constraints, &tokens, &mut rng)?;
        tokens.push(next);
        if next == EOS {
            log::warn!(
                "seed {seed}: EOS after {achieved} of {target_gates} gates, output is shorter than requested"
            );
            break StopReason::Eos;
        }
        if v.statement(next).is_some_and(Statement::is_counted_gate) {
            achieved += 1;
        }
    };

    let body: Vec<Statement> = tokens
        .iter()
        .filter_map(|&t| v.statement(t).cloned())
        .collect();
    Ok(Generation {
        seed,
        circuit: post_process(&body, qubit_count),
        qubit_count,
        target_gates,
        achieved_gates: achieved,
        tokens,
        stop,
    })
}

/// Prepends the header and declares every register the body references:
/// `q` sized to cover both `declared_qubits` and its largest index, other
/// registers to their largest index, and classical registers to cover every
/// measured bit.
pub fn post_process(body: &[Statement], declared_qubits: usize) -> Circuit {
    let mut qregs: BTreeMap<String, usize> = BTreeMap::new();
    qregs.insert("q".into(), declared_qubits.max(1));
    let mut cregs: BTreeMap<String, usize> = BTreeMap::new();
    for s in body {
        for op in s.qubit_operands() {
            let need = op.index.map_or(1, |i| i + 1);
            let e = qregs.entry(op.register.clone()).or_insert(0);
            *e = (*e).max(need);
        }
        for op in s.classical_operands() {
            let need = op.index.map_or(1, |i| i + 1);
            let e = cregs.entry(op.register.clone()).or_insert(0);
            *e = (*e).max(need);
        }
    }
    let mut statements = vec![Statement::header(), Statement::include_qelib()];
    let q_size = qregs.remove("q").expect("q present");
    statements.push(Statement::Qreg {
        name: "q".into(),
        size: q_size,
    });
    statements.extend(qregs.into_iter().map(|(name, size)| Statement::Qreg { name, size }));
    statements.extend(cregs.into_iter().map(|(name, size)| Statement::Creg { name, size }));
    statements.extend(body.iter().cloned());
    Circuit::from_statements(statements)
}

/// One row of the generation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub qubit_count: usize,
    pub target_gates: usize,
    pub achieved_gates: usize,
    pub stop: StopReason,
    pub valid: bool,
}

impl ManifestEntry {
    pub fn from_generation(g: &Generation) -> ManifestEntry {
        ManifestEntry {
            file: g.file_name(),
            seed: g.seed,
            qubit_count: g.qubit_count,
            target_gates: g.target_gates,
            achieved_gates: g.achieved_gates,
            stop: g.stop,
            valid: crate::qasm::validate(&g.circuit).is_valid(),
        }
    }
}

/// Wall-clock timing for one generation; kept apart from the manifest so
/// the manifest stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub file: String,
    pub seconds: f64,
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Generator training result.
pub struct TrainedGenerator {
    pub model: TransformerModel,
    pub epoch_losses: Vec<f64>,
    /// Circuits left out because a statement is missing from the vocabulary
    /// or the sequence does not fit the context.
    pub skipped: Vec<String>,
}

/// Next-token training over BOS + body + EOS sequences, shuffled per epoch.
pub fn train_generator(
    circuits: &[NamedCircuit],
    v: &StatementVocab,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedGenerator, TrainError> {
    let mut skipped = Vec::new();
    let mut sequences = Vec::new();
    for nc in circuits {
        match encode(&nc.circuit, v) {
            Ok(ids) if ids.len() <= model_cfg.n_positions => sequences.push(ids),
            Ok(ids) => {
                log::warn!("{}: {} tokens exceed the context of {}", nc.name, ids.len(), model_cfg.n_positions);
                skipped.push(nc.name.clone());
            }
            Err(e) => {
                log::warn!("{}: {e}", nc.name);
                skipped.push(nc.name.clone());
            }
        }
    }
    if sequences.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let model = TransformerModel::new(model_cfg, train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train_cfg.clone(), Some(PAD))?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    rng.set_stream(4);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| Sample::NextToken(&sequences[i])).collect();
            sum += trainer.train_step(&batch)?;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("generator epoch {}: mean loss {mean:.5}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(TrainedGenerator {
        model: trainer.into_model(),
        epoch_losses,
        skipped,
    })
}

/// Checkpoint metadata for a generator: the vocabulary and the corpus
/// statistics needed to sample targets.
pub fn checkpoint_metadata(v: &StatementVocab, stats: &CorpusStats) -> serde_json::Value {
    serde_json::json!({
        "kind": "generator",
        "vocab": serde_json::from_str::<serde_json::Value>(&v.to_json()).expect("vocab JSON"),
        "qubit_counts": stats.qubit_counts,
        "gate_counts": stats.gate_counts,
        "files": stats.files,
        "unique_statements": stats.unique_statements,
    })
}

/// Inverse of [`checkpoint_metadata`].
pub fn from_checkpoint_metadata(meta: &serde_json::Value) -> Result<(StatementVocab, CorpusStats), String> {
    if meta["kind"] != "generator" {
        return Err("checkpoint is not a generator".into());
    }
    let v = StatementVocab::from_json(&meta["vocab"].to_string()).map_err(|e| e.to_string())?;
    fn field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, k: &str) -> Result<T, String> {
        serde_json::from_value(meta[k].clone()).map_err(|e| format!("metadata {k}: {e}"))
    }
    let files: Vec<String> = field(meta, "files")?;
    let stats = CorpusStats {
        file_count: files.len(),
        files,
        qubit_counts: field(meta, "qubit_counts")?,
        gate_counts: field(meta, "gate_counts")?,
        unique_statements: field(meta, "unique_statements")?,
        source_dir: None,
    };
    Ok((v, stats))
}
