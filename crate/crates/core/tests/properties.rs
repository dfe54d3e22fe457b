use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcgen_core::corpus::CorpusStats;
use qcgen_core::generator::{banned_by_no_repeat, build_mask, post_process};
use qcgen_core::qasm::{parse_strict, serialize, validate, ViolationKind};
use qcgen_core::synth;
use qcgen_core::vocab::{build_vocab, EOS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fuzz_circuits_round_trip(seed in any::<u64>()) {
        let c = synth::fuzz_circuit(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = serialize(&c);
        let back = parse_strict(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn mask_admits_only_declared_qubits(q in 1usize..=9) {
        let corpus = synth::structured_corpus(56);
        let vocab = build_vocab(&CorpusStats::from_circuits(&corpus));
        let mask = build_mask(&vocab, q);
        prop_assert!(mask[EOS as usize]);
        for id in vocab.statement_ids() {
            let s = vocab.statement(id).unwrap();
            let fits = s.qubit_operands().iter().all(|o| o.index.is_some_and(|i| i < q));
            prop_assert_eq!(mask[id as usize], fits, "{}", s);
        }
    }

    #[test]
    fn no_repeat_ban_prevents_the_repeat(history in prop::collection::vec(0u32..4, 0..40), window in 2usize..6) {
        let banned = banned_by_no_repeat(&history, window);
        for t in 0..4u32 {
            let mut extended = history.clone();
            extended.push(t);
            let repeats = extended.len() >= window && {
                let tail = &extended[extended.len() - window..];
                extended.windows(window).take(extended.len() - window).any(|w| w == tail)
            };
            prop_assert_eq!(banned.contains(&t), repeats);
        }
    }

    #[test]
    fn post_processing_declares_every_reference(seed in any::<u64>(), declared in 1usize..4) {
        let c = synth::fuzz_circuit(&mut ChaCha8Rng::seed_from_u64(seed));
        let body: Vec<_> = c.body().cloned().collect();
        let fixed = post_process(&body, declared);
        let report = validate(&fixed);
        prop_assert_eq!(report.count(ViolationKind::IndexOutOfRange), 0);
        prop_assert!(fixed.num_qubits() >= declared);
    }
}
