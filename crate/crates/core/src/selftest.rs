//! Quick built-in checks run by `qcgen selftest`: gradient checks on tiny
//! models, an attention loop oracle, top-k renormalization, parser round
//! trips and metric sanity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generator::top_k_distribution;
use crate::nn::gradcheck::check_gradients;
use crate::nn::{attention, HeadKind, ModelConfig, Sample, Tensor2, TransformerModel};
use crate::qasm::{parse_strict, serialize};
use crate::structure::extract_metrics;
use crate::synth;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn tiny(causal: bool, head: HeadKind, vocab: usize) -> ModelConfig {
    ModelConfig {
        n_embd: 4,
        n_layer: 1,
        n_head: 2,
        n_positions: 6,
        vocab_size: vocab,
        causal,
        head,
    }
}

fn gradient_check(name: &'static str, cfg: ModelConfig, samples: &[Sample<'_>]) -> CheckResult {
    let model = TransformerModel::with_init_std(cfg, 5, 0.3).expect("valid tiny config");
    match check_gradients(&model, samples, None, 1e-5) {
        Ok(r) => {
            let err = r.max_rel_error();
            CheckResult {
                name,
                passed: err < 1e-4,
                detail: format!("{} parameters, max relative error {err:.3e}", model.param_count()),
            }
        }
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn loop_attention(q: &Tensor2, k: &Tensor2, v: &Tensor2, causal: bool) -> Vec<Vec<f64>> {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    (0..q.rows())
        .map(|i| {
            let visible = if causal { i + 1 } else { k.rows() };
            let scores: Vec<f64> = (0..visible)
                .map(|j| (0..q.cols()).map(|c| q[(i, c)] * k[(j, c)]).sum::<f64>() * scale)
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v.cols())
                .map(|c| (0..visible).map(|j| e[j] / z * v[(j, c)]).sum())
                .collect()
        })
        .collect()
}

fn attention_check() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (t, d) = (rng.random_range(1..8), rng.random_range(1..6));
        let q = Tensor2::random_normal(t, d, 1.0, &mut rng);
        let k = Tensor2::random_normal(t, d, 1.0, &mut rng);
        let v = Tensor2::random_normal(t, d, 1.0, &mut rng);
        for causal in [false, true] {
            let got = attention(&q, &k, &v, causal).expect("shapes agree");
            let want = loop_attention(&q, &k, &v, causal);
            for (i, row) in want.iter().enumerate() {
                for (c, w) in row.iter().enumerate() {
                    worst = worst.max((got[(i, c)] - w).abs());
                }
            }
        }
    }
    CheckResult {
        name: "attention loop oracle",
        passed: worst < 1e-10,
        detail: format!("max abs difference {worst:.3e}"),
    }
}

fn top_k_check() -> CheckResult {
    let probs = [0.4, 0.3, 0.1, 0.1, 0.05, 0.05];
    let logits: Vec<f64> = probs.iter().map(|p: &f64| p.ln()).collect();
    let dist = top_k_distribution(&logits, &[true; 6], &[], 5);
    let err = dist
        .iter()
        .map(|&(id, p)| (p - probs[id as usize] / 0.95).abs())
        .fold(0.0, f64::max);
    let sum: f64 = dist.iter().map(|d| d.1).sum();
    CheckResult {
        name: "top-k renormalization",
        passed: dist.len() == 5 && err < 1e-12 && (sum - 1.0).abs() < 1e-12,
        detail: format!("max error {err:.3e}, sum {sum}"),
    }
}

fn round_trip_check() -> CheckResult {
    let circuits = synth::fuzz_corpus(300, 3);
    let failures = circuits
        .iter()
        .filter(|c| parse_strict(&serialize(c)).ok().as_ref() != Some(*c))
        .count();
    CheckResult {
        name: "parser round trip",
        passed: failures == 0,
        detail: format!("{failures} of {} fuzz circuits differ", circuits.len()),
    }
}

fn metrics_check() -> CheckResult {
    let text = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\nh q[0];\ncx q[0],q[1];\nmeasure q[0] -> c[0];\nmeasure q[1] -> c[1];\n";
    let m = extract_metrics(&parse_strict(text).expect("bell circuit parses"));
    let ok = m.gate_count == 4.0 && m.two_qubit_gate_fraction == 0.25 && m.measure_fraction == 0.5 && m.depth == 3.0;
    CheckResult {
        name: "bell circuit metrics",
        passed: ok,
        detail: format!("{:?}", m.to_vec()),
    }
}

pub fn run() -> Vec<CheckResult> {
    let seq = [0u32, 3, 4, 5, 1];
    let seq2 = [0u32, 4, 4, 1];
    vec![
        gradient_check(
            "generator gradients",
            tiny(true, HeadKind::TiedLm, 6),
            &[Sample::NextToken(&seq), Sample::NextToken(&seq2)],
        ),
        gradient_check(
            "classifier gradients",
            tiny(false, HeadKind::Classifier { classes: 2 }, 6),
            &[
                Sample::Labeled { tokens: &seq, label: 1 },
                Sample::Labeled { tokens: &seq2, label: 0 },
            ],
        ),
        attention_check(),
        top_k_check(),
        round_trip_check(),
        metrics_check(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
