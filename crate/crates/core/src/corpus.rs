//! Corpus ingestion: reads a directory tree of `.qasm` files, applies the
//! size cap and qubit floor, and records the empirical qubit-count and
//! gate-count distributions the generator samples from.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qasm::{self, Circuit};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no usable .qasm files under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus stats: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Files with more statements than this are dropped, not truncated.
    pub max_statements: usize,
    /// When false, files that contain `//` comments are rejected instead of
    /// having their comments removed.
    pub strip_comments: bool,
    pub min_qubits: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_statements: 1024,
            strip_comments: true,
            min_qubits: 2,
        }
    }
}

/// A parsed file together with its path relative to the corpus root.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedCircuit {
    pub name: String,
    pub circuit: Circuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub files: Vec<String>,
    pub qubit_counts: Vec<usize>,
    pub gate_counts: Vec<usize>,
    /// Canonical body statements in first-appearance order over sorted file
    /// names, then line order.
    pub unique_statements: Vec<String>,
    pub file_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dir: Option<PathBuf>,
}

/// On-disk layout of `corpus_stats.json`.
#[derive(Serialize, Deserialize)]
struct StatsFile {
    #[serde(flatten)]
    stats: CorpusStats,
    vocab_size: usize,
}

impl CorpusStats {
    pub fn from_circuits(circuits: &[NamedCircuit]) -> CorpusStats {
        let mut seen = HashSet::new();
        let mut unique_statements = Vec::new();
        for nc in circuits {
            for s in nc.circuit.body() {
                let text = s.to_string();
                if seen.insert(text.clone()) {
                    unique_statements.push(text);
                }
            }
        }
        CorpusStats {
            files: circuits.iter().map(|c| c.name.clone()).collect(),
            qubit_counts: circuits.iter().map(|c| c.circuit.num_qubits()).collect(),
            gate_counts: circuits.iter().map(|c| c.circuit.gate_count()).collect(),
            unique_statements,
            file_count: circuits.len(),
            source_dir: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.file_count == 0
    }

    /// Serializes as `corpus_stats.json`. `vocab_size` counts the three
    /// special tokens.
    pub fn to_json(&self) -> Result<String, CorpusError> {
        let file = StatsFile {
            stats: self.clone(),
            vocab_size: self.unique_statements.len() + crate::vocab::NUM_SPECIALS,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<CorpusStats, CorpusError> {
        let file: StatsFile = serde_json::from_str(text)?;
        Ok(file.stats)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub circuits: Vec<NamedCircuit>,
    pub stats: CorpusStats,
}

/// Every `*.qasm` file below `dir`, sorted by path.
pub fn list_qasm_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "qasm") {
            paths.push(entry.into_path());
        }
    }
    paths.sort();
    Ok(paths)
}

/// Reads every `*.qasm` file below `dir` (sorted by relative path), parses it
/// leniently and keeps the files that satisfy `cfg`.
pub fn ingest(dir: &Path, cfg: &PreprocessConfig) -> Result<Corpus, CorpusError> {
    let paths = list_qasm_files(dir)?;

    let loaded: Vec<Option<NamedCircuit>> = paths
        .par_iter()
        .map(|path| load_one(dir, path, cfg))
        .collect();
    let circuits: Vec<NamedCircuit> = loaded.into_iter().flatten().collect();
    if circuits.is_empty() {
        return Err(CorpusError::EmptyCorpus(dir.to_path_buf()));
    }
    let mut stats = CorpusStats::from_circuits(&circuits);
    stats.source_dir = Some(dir.to_path_buf());
    log::info!(
        "ingested {} of {} files, {} unique statements",
        circuits.len(),
        paths.len(),
        stats.unique_statements.len()
    );
    Ok(Corpus { circuits, stats })
}

fn load_one(root: &Path, path: &Path, cfg: &PreprocessConfig) -> Option<NamedCircuit> {
    let name = path
        .strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/");
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("{name}: skipped ({e})");
            return None;
        }
    };
    if !cfg.strip_comments && text.contains("//") {
        log::warn!("{name}: skipped (contains comments)");
        return None;
    }
    let parsed = qasm::parse_lenient(&text);
    for w in &parsed.warnings {
        log::debug!("{name}:{w}");
    }
    let circuit = parsed.circuit;
    if circuit.statements.len() > cfg.max_statements {
        log::info!("{name}: excluded ({} statements > {})", circuit.statements.len(), cfg.max_statements);
        return None;
    }
    if circuit.num_qubits() < cfg.min_qubits {
        log::info!("{name}: excluded ({} qubits < {})", circuit.num_qubits(), cfg.min_qubits);
        return None;
    }
    Some(NamedCircuit { name, circuit })
}

/// Draws a (qubit count, gate count) target: each uniformly from its own
/// per-file list, independently.
///
/// # Panics
/// If `stats` is empty.
pub fn sample_target(stats: &CorpusStats, seed: u64) -> (usize, usize) {
    assert!(!stats.is_empty(), "sample_target on empty corpus stats");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = stats.qubit_counts[rng.random_range(0..stats.qubit_counts.len())];
    let g = stats.gate_counts[rng.random_range(0..stats.gate_counts.len())];
    (q, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write;

    fn write_file(dir: &Path, name: &str, body_gates: usize) {
        let mut s = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\n");
        for i in 0..body_gates {
            writeln!(s, "h q[{}];", i % 2).unwrap();
        }
        fs::write(dir.join(name), s).unwrap();
    }

    #[test]
    fn oversized_file_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.qasm", 5);
        write_file(dir.path(), "b.qasm", 2000);
        write_file(dir.path(), "c.qasm", 7);
        let corpus = ingest(dir.path(), &PreprocessConfig::default()).unwrap();
        assert_eq!(corpus.circuits.len(), 2);
        assert_eq!(corpus.stats.files, vec!["a.qasm", "c.qasm"]);
        assert_eq!(corpus.stats.gate_counts, vec![5, 7]);
        assert_eq!(corpus.stats.qubit_counts, vec![2, 2]);
        assert_eq!(corpus.stats.unique_statements, vec!["h q[0];", "h q[1];"]);
        assert!(corpus.circuits.iter().all(|c| c.circuit.statements.len() <= 1024));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest(dir.path(), &PreprocessConfig::default()),
            Err(CorpusError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn comments_are_stripped_or_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("x.qasm"),
            "// made by hand\nOPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncx q[0],q[1]; // entangle\n",
        )
        .unwrap();
        let corpus = ingest(dir.path(), &PreprocessConfig::default()).unwrap();
        assert_eq!(corpus.stats.unique_statements, vec!["cx q[0],q[1];"]);
        let strict = PreprocessConfig {
            strip_comments: false,
            ..Default::default()
        };
        assert!(ingest(dir.path(), &strict).is_err());
    }

    #[test]
    fn sample_target_frequencies() {
        let stats = CorpusStats {
            files: vec!["a".into(), "b".into(), "c".into()],
            qubit_counts: vec![3, 3, 5],
            gate_counts: vec![10, 20, 30],
            unique_statements: vec![],
            file_count: 3,
            source_dir: None,
        };
        let n = 10_000;
        let threes = (0..n).filter(|&s| sample_target(&stats, s).0 == 3).count();
        let freq = threes as f64 / n as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.02, "freq {freq}");
        assert_eq!(sample_target(&stats, 42), sample_target(&stats, 42));
    }

    #[test]
    fn single_file_stats_always_same_target() {
        let stats = CorpusStats {
            files: vec!["a".into()],
            qubit_counts: vec![4],
            gate_counts: vec![17],
            unique_statements: vec![],
            file_count: 1,
            source_dir: None,
        };
        for seed in 0..50 {
            assert_eq!(sample_target(&stats, seed), (4, 17));
        }
    }

    #[test]
    fn stats_json_round_trip() {
        let stats = CorpusStats {
            files: vec!["a.qasm".into()],
            qubit_counts: vec![2],
            gate_counts: vec![1],
            unique_statements: vec!["h q[0];".into()],
            file_count: 1,
            source_dir: Some("corpus".into()),
        };
        let json = stats.to_json().unwrap();
        assert!(json.contains("\"vocab_size\": 4"));
        assert_eq!(CorpusStats::from_json(&json).unwrap(), stats);
    }
}
