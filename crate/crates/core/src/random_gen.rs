//! Random-circuit baseline. Statements are drawn uniformly from the corpus
//! vocabulary with no qubit masking, so out-of-range references are
//! expected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{sample_target, CorpusStats};
use crate::qasm::{Circuit, Statement};
use crate::vocab::StatementVocab;

#[derive(Debug, Clone)]
pub struct RandomCircuit {
    pub seed: u64,
    pub qubit_count: usize,
    pub target_gates: usize,
    pub circuit: Circuit,
}

impl RandomCircuit {
    /// `random_{seed}_{q}q_{g}g.qasm`
    pub fn file_name(&self) -> String {
        format!("random_{}_{}q_{}g.qasm", self.seed, self.qubit_count, self.target_gates)
    }
}

/// Samples targets from `stats` and fills the body with uniform draws.
///
/// # Panics
/// If the vocabulary has no statements or `stats` is empty.
pub fn random_circuit(v: &StatementVocab, stats: &CorpusStats, seed: u64) -> RandomCircuit {
    let (q, g) = sample_target(stats, seed);
    random_circuit_with_targets(v, q, g, seed)
}

/// Draws statements until `target_gates` of them count as gates. Barriers
/// may appear but do not count, so the gate count of the result is exactly
/// `target_gates` whenever the vocabulary has at least one countable entry.
pub fn random_circuit_with_targets(
    v: &StatementVocab,
    qubit_count: usize,
    target_gates: usize,
    seed: u64,
) -> RandomCircuit {
    let pool: Vec<&Statement> = v
        .statement_ids()
        .map(|id| v.statement(id).expect("statement id"))
        .collect();
    assert!(!pool.is_empty(), "random_circuit needs a non-empty vocabulary");
    let countable = pool.iter().any(|s| s.is_counted_gate());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut body = Vec::with_capacity(target_gates);
    let mut counted = 0;
    while counted < target_gates {
        let s = pool[rng.random_range(0..pool.len())];
        if s.is_counted_gate() || !countable {
            counted += 1;
        }
        body.push(s.clone());
    }
    let mut statements = vec![
        Statement::header(),
        Statement::include_qelib(),
        Statement::Qreg {
            name: "q".into(),
            size: qubit_count,
        },
    ];
    statements.extend(body);
    RandomCircuit {
        seed,
        qubit_count,
        target_gates,
        circuit: Circuit::from_statements(statements),
    }
}

/// Supremum distance between the empirical CDFs of two samples.
pub fn ks_statistic(a: &[usize], b: &[usize]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks_statistic on empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Pearson chi-squared test of `counts` against the uniform distribution.
/// Returns `(statistic, p_value)`.
pub fn chi_squared_uniform(counts: &[usize]) -> (f64, f64) {
    assert!(counts.len() >= 2, "chi-squared needs at least two categories");
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qasm::{validate, ViolationKind};

    fn stats(q: Vec<usize>, g: Vec<usize>) -> CorpusStats {
        CorpusStats {
            files: (0..q.len()).map(|i| format!("f{i}.qasm")).collect(),
            file_count: q.len(),
            qubit_counts: q,
            gate_counts: g,
            unique_statements: vec![],
            source_dir: None,
        }
    }

    #[test]
    fn single_statement_vocab() {
        let v = StatementVocab::from_texts(["x q[0];"]).unwrap();
        let r = random_circuit_with_targets(&v, 2, 3, 4);
        let body: Vec<String> = r.circuit.body().map(|s| s.to_string()).collect();
        assert_eq!(body, vec!["x q[0];"; 3]);
        assert_eq!(r.file_name(), "random_4_2q_3g.qasm");
    }

    #[test]
    fn uniform_over_statements() {
        let texts = ["h q[0];", "h q[1];", "x q[0];", "cx q[0],q[1];"];
        let v = StatementVocab::from_texts(texts).unwrap();
        let mut counts = [0usize; 4];
        for seed in 0..10_000 {
            let r = random_circuit_with_targets(&v, 2, 1, seed);
            let s = r.circuit.body().next().unwrap().to_string();
            counts[texts.iter().position(|t| *t == s).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02, "{counts:?}");
        }
        assert!(chi_squared_uniform(&counts).1 > 0.001);
    }

    #[test]
    fn unmasked_draws_go_out_of_range() {
        let v = StatementVocab::from_texts(["h q[0];", "cx q[3],q[7];"]).unwrap();
        let s = stats(vec![2], vec![20]);
        let r = random_circuit(&v, &s, 1);
        assert_eq!(r.circuit.num_qubits(), 2);
        assert_eq!(r.circuit.gate_count(), 20);
        assert!(validate(&r.circuit).count(ViolationKind::IndexOutOfRange) > 0);
    }

    #[test]
    fn barriers_do_not_count() {
        let v = StatementVocab::from_texts(["barrier q;", "h q[0];"]).unwrap();
        let r = random_circuit_with_targets(&v, 1, 10, 3);
        assert_eq!(r.circuit.gate_count(), 10);
    }

    #[test]
    fn ks_known_values() {
        assert_eq!(ks_statistic(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(ks_statistic(&[1, 1], &[2, 2]), 1.0);
        assert!((ks_statistic(&[1, 2], &[2, 3]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi_squared_flat_counts() {
        let (stat, p) = chi_squared_uniform(&[10, 10, 10]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_squared_uniform(&[100, 0, 0]);
        assert!(p < 1e-10);
    }
}
