//! Structured synthetic circuits for tests and the bundled corpus, plus a
//! fuzzer for random well-formed circuits.
//!
//! Every structured circuit opens with Hadamards on `q[0]..q[n-1]` in
//! ascending order, the way algorithm-derived benchmark files usually do.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::NamedCircuit;
use crate::qasm::{Circuit, GateKind, Operand, Param, Statement};

pub const FAMILIES: [&str; 7] = ["ghz", "dj", "bv", "qft", "grover", "wstate", "qaoa"];
pub const MIN_QUBITS: usize = 2;
pub const MAX_QUBITS: usize = 9;
/// Bodies stay short enough that BOS + body + EOS fits a 128-position model.
pub const MAX_BODY: usize = 126;

fn q(i: usize) -> Operand {
    Operand::new("q", i)
}

fn g1(gate: GateKind, i: usize) -> Statement {
    Statement::gate(gate, vec![], vec![q(i)])
}

fn g2(gate: GateKind, a: usize, b: usize) -> Statement {
    Statement::gate(gate, vec![], vec![q(a), q(b)])
}

fn rot(gate: GateKind, expr: &str, qubits: &[usize]) -> Statement {
    let p = Param::from_expr(expr).expect("valid angle expression");
    Statement::gate(gate, vec![p], qubits.iter().map(|&i| q(i)).collect())
}

fn measure(i: usize) -> Statement {
    Statement::Measure {
        qubit: q(i),
        clbit: Operand::new("c", i),
    }
}

/// Bits of `variant` (plus one) select oracle wires, so every variant sets
/// at least one.
fn secret(n: usize, variant: usize) -> Vec<bool> {
    let s = variant + 1;
    (0..n).map(|i| (s >> (i % usize::BITS as usize)) & 1 == 1).collect()
}

/// One structured circuit. `variant` changes oracle bits, angles or
/// repetition counts within the family.
///
/// # Panics
/// On an unknown family or `n` outside `MIN_QUBITS..=MAX_QUBITS`.
pub fn structured(family: &str, n: usize, variant: usize) -> Circuit {
    assert!((MIN_QUBITS..=MAX_QUBITS).contains(&n), "qubit count {n} out of range");
    let mut body: Vec<Statement> = (0..n).map(|i| g1(GateKind::H, i)).collect();
    let mut measured = true;
    match family {
        "ghz" => {
            let r = variant % 3;
            for i in 0..n - 1 {
                let control = if r == 1 { 0 } else { i };
                body.push(g2(GateKind::Cx, control, i + 1));
            }
            if r == 2 {
                body.push(Statement::Barrier {
                    qubits: vec![Operand::whole("q")],
                });
            }
            body.extend((0..n).map(measure));
        }
        "dj" | "bv" => {
            let target = n - 1;
            body.push(g1(GateKind::Z, target));
            let bits = secret(n - 1, variant);
            if family == "dj" && variant % 2 == 1 {
                body.push(g1(GateKind::X, target));
            }
            for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                body.push(g2(GateKind::Cx, i, target));
            }
            body.extend((0..target).map(|i| g1(GateKind::H, i)));
            body.extend((0..target).map(measure));
        }
        "qft" => {
            for j in 0..n {
                if variant % 2 == 0 || j > 0 {
                    body.push(g1(GateKind::H, j));
                }
                for k in j + 1..n {
                    let angle = format!("pi/{}", 1u64 << (k - j));
                    body.push(rot(GateKind::Cu1, &angle, &[k, j]));
                }
            }
            for i in 0..n / 2 {
                body.push(g2(GateKind::Swap, i, n - 1 - i));
            }
            body.extend((0..n).map(measure));
        }
        "grover" => {
            let marked = secret(n, variant);
            let rounds = if n > 5 { 1 } else { 1 + variant % 2 };
            for _ in 0..rounds {
                for (i, _) in marked.iter().enumerate().filter(|(_, &b)| !b) {
                    body.push(g1(GateKind::X, i));
                }
                oracle(&mut body, n);
                for (i, _) in marked.iter().enumerate().filter(|(_, &b)| !b) {
                    body.push(g1(GateKind::X, i));
                }
                body.extend((0..n).map(|i| g1(GateKind::H, i)));
                body.extend((0..n).map(|i| g1(GateKind::X, i)));
                oracle(&mut body, n);
                body.extend((0..n).map(|i| g1(GateKind::X, i)));
                body.extend((0..n).map(|i| g1(GateKind::H, i)));
            }
            body.extend((0..n).map(measure));
        }
        "wstate" => {
            measured = variant % 2 == 0;
            for i in 0..n - 1 {
                let denom = (n - i) as f64;
                let theta = 2.0 * (1.0 / denom).sqrt().acos();
                body.push(rot(GateKind::Ry, &crate::qasm::format_real(theta), &[i + 1]));
                body.push(g2(GateKind::Cx, i + 1, i));
            }
            if measured {
                body.extend((0..n).map(measure));
            }
        }
        "qaoa" => {
            measured = variant % 3 != 0;
            let layers = 1 + variant % 2;
            for l in 0..layers {
                let gamma = match l + 1 + variant % 3 {
                    1 => "pi/8".to_string(),
                    m => format!("{m}*pi/8"),
                };
                let beta = format!("pi/{}", 4 + l + variant % 4);
                for i in 0..n - 1 {
                    body.push(g2(GateKind::Cx, i, i + 1));
                    body.push(rot(GateKind::Rz, &gamma, &[i + 1]));
                    body.push(g2(GateKind::Cx, i, i + 1));
                }
                body.extend((0..n).map(|i| rot(GateKind::Rx, &beta, &[i])));
            }
            if measured {
                body.extend((0..n).map(measure));
            }
        }
        other => panic!("unknown circuit family '{other}'"),
    }
    assert!(body.len() <= MAX_BODY, "{family} with {n} qubits exceeds the body cap");
    let clbits = if measured && body.iter().any(|s| matches!(s, Statement::Measure { .. })) {
        n
    } else {
        0
    };
    Circuit::with_body(n, clbits, body)
}

/// Phase flip on the all-ones state built from `cz` and a `ccx` ladder.
fn oracle(body: &mut Vec<Statement>, n: usize) {
    if n == 2 {
        body.push(g2(GateKind::Cz, 0, 1));
        return;
    }
    let t = n - 1;
    body.push(g1(GateKind::H, t));
    for i in 0..t - 1 {
        body.push(Statement::gate(GateKind::Ccx, vec![], vec![q(i), q(i + 1), q(t)]));
    }
    body.push(g1(GateKind::H, t));
}

/// `count` structured circuits cycling through families, then qubit counts,
/// then variants. Names look like `qft_05q_v2.qasm`.
pub fn structured_corpus(count: usize) -> Vec<NamedCircuit> {
    let sizes = MAX_QUBITS - MIN_QUBITS + 1;
    (0..count)
        .map(|i| {
            let family = FAMILIES[i % FAMILIES.len()];
            let n = MIN_QUBITS + (i / FAMILIES.len()) % sizes;
            let variant = i / (FAMILIES.len() * sizes);
            NamedCircuit {
                name: format!("{family}_{n:02}q_v{variant}.qasm"),
                circuit: structured(family, n, variant),
            }
        })
        .collect()
}

const ANGLES: [&str; 10] = ["pi", "pi/2", "pi/4", "-pi/8", "0.5", "1.25", "2*pi/3", "0", "sqrt(2)/2", "-0.75"];

/// A random circuit that passes strict validation: one to three quantum
/// registers, up to two classical registers, and a body mixing every
/// statement kind.
pub fn fuzz_circuit<R: Rng + ?Sized>(rng: &mut R) -> Circuit {
    const QNAMES: [&str; 3] = ["q", "anc", "r2"];
    const CNAMES: [&str; 2] = ["c", "m"];
    let qregs: Vec<(&str, usize)> = QNAMES[..rng.random_range(1..=3)]
        .iter()
        .map(|&n| (n, rng.random_range(1..=6)))
        .collect();
    let cregs: Vec<(&str, usize)> = CNAMES[..rng.random_range(0..=2)]
        .iter()
        .map(|&n| (n, rng.random_range(1..=4)))
        .collect();
    let all_qubits: Vec<Operand> = qregs
        .iter()
        .flat_map(|&(n, s)| (0..s).map(move |i| Operand::new(n, i)))
        .collect();

    let mut statements = vec![Statement::header(), Statement::include_qelib()];
    statements.extend(qregs.iter().map(|&(n, s)| Statement::Qreg {
        name: n.into(),
        size: s,
    }));
    statements.extend(cregs.iter().map(|&(n, s)| Statement::Creg {
        name: n.into(),
        size: s,
    }));

    let unitary: Vec<GateKind> = GateKind::ALL
        .into_iter()
        .filter(|g| g.is_unitary() && g.arity() <= all_qubits.len())
        .collect();
    for _ in 0..rng.random_range(0..40) {
        let roll = rng.random_range(0..20);
        if roll == 0 {
            let qubits = if rng.random_bool(0.5) {
                vec![Operand::whole(qregs.choose(rng).expect("a register").0)]
            } else {
                let n = rng.random_range(1..=all_qubits.len());
                all_qubits.choose_multiple(rng, n).cloned().collect()
            };
            statements.push(Statement::Barrier { qubits });
        } else if roll <= 2 && !cregs.is_empty() {
            let (cn, cs) = *cregs.choose(rng).expect("a creg");
            statements.push(Statement::Measure {
                qubit: all_qubits.choose(rng).expect("a qubit").clone(),
                clbit: Operand::new(cn, rng.random_range(0..cs)),
            });
        } else {
            let gate = *unitary.choose(rng).expect("a gate");
            let params = (0..gate.param_count())
                .map(|_| Param::from_expr(ANGLES.choose(rng).expect("an angle")).expect("valid angle"))
                .collect();
            let qubits = all_qubits.choose_multiple(rng, gate.arity()).cloned().collect();
            statements.push(Statement::gate(gate, params, qubits));
        }
    }
    Circuit::from_statements(statements)
}

pub fn fuzz_corpus(count: usize, seed: u64) -> Vec<Circuit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| fuzz_circuit(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qasm::{parse_strict, serialize, validate};

    #[test]
    fn every_family_and_size_is_valid() {
        for family in FAMILIES {
            for n in MIN_QUBITS..=MAX_QUBITS {
                for variant in 0..4 {
                    let c = structured(family, n, variant);
                    assert!(validate(&c).is_valid(), "{family} {n} {variant}: {:?}", validate(&c));
                    let body: Vec<&Statement> = c.body().collect();
                    assert!(body.len() <= MAX_BODY);
                    for (i, s) in body.iter().take(n.min(2)).enumerate() {
                        assert_eq!(s.to_string(), format!("h q[{i}];"), "{family} {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_names_are_unique() {
        let corpus = structured_corpus(200);
        let mut names: Vec<&str> = corpus.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 200);
    }

    #[test]
    fn fuzz_circuits_validate_and_round_trip() {
        for c in fuzz_corpus(200, 5) {
            assert!(validate(&c).is_valid(), "{}\n{:?}", serialize(&c), validate(&c));
            assert_eq!(parse_strict(&serialize(&c)).unwrap(), c);
        }
    }
}
