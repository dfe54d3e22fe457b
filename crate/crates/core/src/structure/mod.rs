//! Interaction and gate-dependency graphs, the per-circuit metric vector,
//! and their CSV / DOT renderings.

pub mod cluster;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qasm::{Circuit, Statement};

pub use cluster::{adjusted_rand_index, cluster, kmeans, ClusterEntry, ClusterReport, ClusterSummary};

/// Version of the metric vector layout written to reports.
pub const METRICS_VERSION: u32 = 1;

pub const METRIC_NAMES: [&str; 16] = [
    "num_qubits",
    "gate_count",
    "depth",
    "two_qubit_gate_fraction",
    "measure_fraction",
    "edge_count",
    "density",
    "max_degree",
    "min_degree",
    "mean_degree",
    "degree_stddev",
    "clustering_coefficient",
    "connected_components",
    "critical_path_length",
    "mean_out_degree",
    "parallelism",
];

/// Flat qubit numbering. Declared registers come first in declaration
/// order; references to undeclared registers or past a register's end get
/// fresh numbers after them, so malformed inputs still yield a graph.
struct QubitMap {
    offsets: BTreeMap<String, usize>,
    extra: HashMap<(String, usize), usize>,
    declared: usize,
    next: usize,
    sizes: BTreeMap<String, usize>,
}

impl QubitMap {
    fn new(c: &Circuit) -> QubitMap {
        let declared = c.num_qubits();
        QubitMap {
            offsets: c.qubit_offsets(),
            extra: HashMap::new(),
            declared,
            next: declared,
            sizes: c.qreg_sizes.clone(),
        }
    }

    fn flat(&mut self, register: &str, index: usize) -> usize {
        if let (Some(&off), Some(&size)) = (self.offsets.get(register), self.sizes.get(register)) {
            if index < size {
                return off + index;
            }
        }
        let next = &mut self.next;
        *self.extra.entry((register.to_string(), index)).or_insert_with(|| {
            *next += 1;
            *next - 1
        })
    }
}

/// Gate applications and measurements with operands mapped to flat qubit
/// numbers. Barriers are dropped.
fn operations(c: &Circuit) -> (Vec<(Vec<usize>, bool)>, usize) {
    let mut map = QubitMap::new(c);
    let ops = c
        .statements
        .iter()
        .filter(|s| s.is_counted_gate())
        .map(|s| {
            let qubits: Vec<usize> = s
                .qubit_operands()
                .iter()
                .filter_map(|o| o.index.map(|i| map.flat(&o.register, i)))
                .collect();
            (qubits, matches!(s, Statement::Measure { .. }))
        })
        .collect();
    (ops, map.next.max(map.declared))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub nodes: usize,
    /// `(a, b)` with `a < b` → number of multi-qubit gates acting on both.
    pub edges: BTreeMap<(usize, usize), usize>,
}

impl InteractionGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes];
        for &(a, b) in self.edges.keys() {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes];
        for &(a, b) in self.edges.keys() {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("graph \"{}\" {{\n", name.replace('"', "'"));
        for n in 0..self.nodes {
            let _ = writeln!(s, "  q{n};");
        }
        for (&(a, b), &w) in &self.edges {
            let _ = writeln!(s, "  q{a} -- q{b} [weight={w}, label={w}];");
        }
        s.push_str("}\n");
        s
    }
}

/// One node per flat qubit; one weighted edge per pair of qubits that share
/// a multi-qubit gate (a three-qubit gate adds all three pairs).
pub fn interaction_graph(c: &Circuit) -> InteractionGraph {
    let (ops, nodes) = operations(c);
    let mut edges = BTreeMap::new();
    for (qs, _) in &ops {
        let distinct: BTreeSet<usize> = qs.iter().copied().collect();
        let distinct: Vec<usize> = distinct.into_iter().collect();
        for i in 0..distinct.len() {
            for j in i + 1..distinct.len() {
                *edges.entry((distinct[i], distinct[j])).or_insert(0) += 1;
            }
        }
    }
    InteractionGraph { nodes, edges }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDependencyGraph {
    /// Index into the circuit's statement list for each node.
    pub statement_index: Vec<usize>,
    pub multi_qubit: Vec<bool>,
    /// Sorted, deduplicated `(from, to)` node pairs with `from < to`.
    pub edges: Vec<(usize, usize)>,
}

impl GateDependencyGraph {
    pub fn len(&self) -> usize {
        self.statement_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statement_index.is_empty()
    }

    /// Kahn's algorithm; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg = vec![0; n];
        let mut out = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            out[a].push(b);
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Longest path measured in nodes, each node weighted by `weight`.
    fn longest_path(&self, weight: impl Fn(usize) -> usize) -> usize {
        let order = self.topological_order().expect("dependency graph is acyclic");
        let mut preds = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            preds[b].push(a);
        }
        let mut best = vec![0; self.len()];
        for v in order {
            best[v] = weight(v) + preds[v].iter().map(|&p| best[p]).max().unwrap_or(0);
        }
        best.into_iter().max().unwrap_or(0)
    }

    /// Number of nodes on the longest chain.
    pub fn depth(&self) -> usize {
        self.longest_path(|_| 1)
    }

    /// Largest number of multi-qubit gates on any chain.
    pub fn critical_path_length(&self) -> usize {
        self.longest_path(|v| usize::from(self.multi_qubit[v]))
    }
}

/// Nodes are gate applications and measurements; each node depends on the
/// previous node on each of its qubits.
pub fn dependency_graph(c: &Circuit) -> GateDependencyGraph {
    let (ops, _) = operations(c);
    let statement_index = c
        .statements
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_counted_gate())
        .map(|(i, _)| i)
        .collect();
    let mut last: HashMap<usize, usize> = HashMap::new();
    let mut edges = BTreeSet::new();
    let mut multi_qubit = Vec::with_capacity(ops.len());
    for (node, (qs, _)) in ops.iter().enumerate() {
        for q in qs {
            if let Some(prev) = last.insert(*q, node) {
                if prev != node {
                    edges.insert((prev, node));
                }
            }
        }
        let distinct: BTreeSet<&usize> = qs.iter().collect();
        multi_qubit.push(distinct.len() >= 2);
    }
    GateDependencyGraph {
        statement_index,
        multi_qubit,
        edges: edges.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CircuitMetrics {
    pub num_qubits: f64,
    pub gate_count: f64,
    pub depth: f64,
    pub two_qubit_gate_fraction: f64,
    pub measure_fraction: f64,
    pub edge_count: f64,
    pub density: f64,
    pub max_degree: f64,
    pub min_degree: f64,
    pub mean_degree: f64,
    pub degree_stddev: f64,
    pub clustering_coefficient: f64,
    pub connected_components: f64,
    pub critical_path_length: f64,
    pub mean_out_degree: f64,
    pub parallelism: f64,
}

impl CircuitMetrics {
    pub fn to_vec(&self) -> [f64; 16] {
        [
            self.num_qubits,
            self.gate_count,
            self.depth,
            self.two_qubit_gate_fraction,
            self.measure_fraction,
            self.edge_count,
            self.density,
            self.max_degree,
            self.min_degree,
            self.mean_degree,
            self.degree_stddev,
            self.clustering_coefficient,
            self.connected_components,
            self.critical_path_length,
            self.mean_out_degree,
            self.parallelism,
        ]
    }

    pub fn from_vec(v: [f64; 16]) -> CircuitMetrics {
        CircuitMetrics {
            num_qubits: v[0],
            gate_count: v[1],
            depth: v[2],
            two_qubit_gate_fraction: v[3],
            measure_fraction: v[4],
            edge_count: v[5],
            density: v[6],
            max_degree: v[7],
            min_degree: v[8],
            mean_degree: v[9],
            degree_stddev: v[10],
            clustering_coefficient: v[11],
            connected_components: v[12],
            critical_path_length: v[13],
            mean_out_degree: v[14],
            parallelism: v[15],
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// All sixteen metrics. Degree statistics run over every node of the
/// interaction graph; connected components count only qubits some gate or
/// measurement touches.
pub fn extract_metrics(c: &Circuit) -> CircuitMetrics {
    let (ops, _) = operations(c);
    let ig = interaction_graph(c);
    let dg = dependency_graph(c);
    let gates = ops.len();
    if gates == 0 {
        return CircuitMetrics {
            num_qubits: c.num_qubits() as f64,
            ..CircuitMetrics::default()
        };
    }
    let multi = dg.multi_qubit.iter().filter(|&&m| m).count();
    let measures = ops.iter().filter(|(_, m)| *m).count();
    let depth = dg.depth();

    let n = ig.nodes;
    let degrees = ig.degrees();
    let mean_degree = ratio(degrees.iter().sum(), n);
    let variance = if n == 0 {
        0.0
    } else {
        degrees.iter().map(|&d| (d as f64 - mean_degree).powi(2)).sum::<f64>() / n as f64
    };

    let adj = ig.neighbors();
    let mut closed = 0usize;
    let mut triples = 0usize;
    for nb in &adj {
        let k = nb.len();
        triples += k * k.saturating_sub(1) / 2;
        let nb: Vec<usize> = nb.iter().copied().collect();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                if adj[nb[i]].contains(&nb[j]) {
                    closed += 1;
                }
            }
        }
    }

    let touched: BTreeSet<usize> = ops.iter().flat_map(|(qs, _)| qs.iter().copied()).collect();
    let mut seen = vec![false; n];
    let mut components = 0;
    for &start in &touched {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }

    CircuitMetrics {
        num_qubits: c.num_qubits() as f64,
        gate_count: gates as f64,
        depth: depth as f64,
        two_qubit_gate_fraction: ratio(multi, gates),
        measure_fraction: ratio(measures, gates),
        edge_count: ig.edges.len() as f64,
        density: ratio(ig.edges.len(), n * n.saturating_sub(1) / 2),
        max_degree: degrees.iter().copied().max().unwrap_or(0) as f64,
        min_degree: degrees.iter().copied().min().unwrap_or(0) as f64,
        mean_degree,
        degree_stddev: variance.sqrt(),
        clustering_coefficient: ratio(closed, triples),
        connected_components: components as f64,
        critical_path_length: dg.critical_path_length() as f64,
        mean_out_degree: ratio(dg.edges.len(), gates),
        parallelism: ratio(gates, depth),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Random,
    Ketgpt,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Real, Source::Random, Source::Ketgpt];

    pub fn name(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Random => "random",
            Source::Ketgpt => "ketgpt",
        }
    }

    /// `ketgpt_*` and `random_*` file names map to their source, anything
    /// else is real.
    pub fn infer(file_name: &str) -> Source {
        let base = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
        if base.starts_with("ketgpt_") {
            Source::Ketgpt
        } else if base.starts_with("random_") {
            Source::Random
        } else {
            Source::Real
        }
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Source, String> {
        Source::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown source '{s}' (expected real, random or ketgpt)"))
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub source: Source,
    pub file: String,
    pub metrics: CircuitMetrics,
}

pub fn write_metrics_csv<W: io::Write>(w: W, rows: &[MetricsRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["source", "file"];
    header.extend(METRIC_NAMES);
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.source.name().to_string(), r.file.clone()];
        rec.extend(r.metrics.to_vec().iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: io::Read>(r: R) -> Result<Vec<MetricsRow>, String> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers().map_err(|e| e.to_string())?.clone();
    let expected: Vec<&str> = ["source", "file"].into_iter().chain(METRIC_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err("metrics CSV header does not match the expected columns".into());
    }
    let mut rows = Vec::new();
    for (line, rec) in input.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let source: Source = rec[0].parse()?;
        let mut v = [0.0; 16];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 2]
                .parse()
                .map_err(|_| format!("row {}: bad value '{}' for {}", line + 1, &rec[i + 2], METRIC_NAMES[i]))?;
        }
        rows.push(MetricsRow {
            source,
            file: rec[1].to_string(),
            metrics: CircuitMetrics::from_vec(v),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qasm::parse_strict;

    fn circ(qubits: usize, clbits: usize, body: &str) -> Circuit {
        let mut text = format!("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[{qubits}];\n");
        if clbits > 0 {
            text.push_str(&format!("creg c[{clbits}];\n"));
        }
        text.push_str(body);
        parse_strict(&text).unwrap()
    }

    #[test]
    fn interaction_chain() {
        let g = interaction_graph(&circ(3, 0, "cx q[0],q[1];\ncx q[1],q[2];\n"));
        assert_eq!(g.edges, BTreeMap::from([((0, 1), 1), ((1, 2), 1)]));
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert!(interaction_graph(&circ(2, 0, "h q[0];\nx q[1];\n")).edges.is_empty());
    }

    #[test]
    fn toffoli_expands_to_triangle() {
        let g = interaction_graph(&circ(3, 0, "ccx q[0],q[1],q[2];\n"));
        assert_eq!(g.edges, BTreeMap::from([((0, 1), 1), ((0, 2), 1), ((1, 2), 1)]));
        let m = extract_metrics(&circ(3, 0, "ccx q[0],q[1],q[2];\n"));
        assert_eq!(m.clustering_coefficient, 1.0);
    }

    #[test]
    fn dependency_edges_and_depth() {
        let d = dependency_graph(&circ(2, 0, "h q[0];\ncx q[0],q[1];\n"));
        assert_eq!(d.edges, vec![(0, 1)]);
        assert!(dependency_graph(&circ(2, 0, "h q[0];\nh q[1];\n")).edges.is_empty());
        assert_eq!(dependency_graph(&circ(1, 0, "h q[0];\nh q[0];\nh q[0];\n")).depth(), 3);
        let d = dependency_graph(&circ(2, 0, "cx q[0],q[1];\ncx q[0],q[1];\n"));
        assert_eq!(d.edges, vec![(0, 1)]);
        assert!(d.topological_order().is_some());
    }

    #[test]
    fn bell_metrics() {
        let m = extract_metrics(&circ(
            2,
            2,
            "h q[0];\ncx q[0],q[1];\nmeasure q[0] -> c[0];\nmeasure q[1] -> c[1];\n",
        ));
        assert_eq!(m.num_qubits, 2.0);
        assert_eq!(m.gate_count, 4.0);
        assert_eq!(m.two_qubit_gate_fraction, 0.25);
        assert_eq!(m.measure_fraction, 0.5);
        assert_eq!(m.depth, 3.0);
        assert_eq!(m.edge_count, 1.0);
        assert_eq!(m.density, 1.0);
        assert_eq!(m.connected_components, 1.0);
        assert_eq!(m.critical_path_length, 1.0);
        assert!((m.parallelism - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_body_is_zero_but_qubits() {
        let m = extract_metrics(&circ(4, 0, ""));
        let v = m.to_vec();
        assert_eq!(v[0], 4.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn barriers_ignored() {
        let a = extract_metrics(&circ(2, 0, "h q[0];\nbarrier q;\nh q[1];\n"));
        let b = extract_metrics(&circ(2, 0, "h q[0];\nh q[1];\n"));
        assert_eq!(a, b);
        assert_eq!(a.depth, 1.0);
        assert_eq!(a.parallelism, 2.0);
    }

    #[test]
    fn out_of_range_reference_does_not_panic() {
        let c = crate::qasm::parse_lenient("OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[5];\n").circuit;
        let m = extract_metrics(&c);
        assert_eq!(m.edge_count, 1.0);
        assert_eq!(m.num_qubits, 2.0);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![MetricsRow {
            source: Source::Ketgpt,
            file: "ketgpt_1_2q_3g.qasm".into(),
            metrics: extract_metrics(&circ(3, 0, "cx q[0],q[1];\nh q[2];\nccx q[0],q[1],q[2];\n")),
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn dot_lists_edges() {
        let g = interaction_graph(&circ(2, 0, "cx q[0],q[1];\ncz q[1],q[0];\n"));
        let dot = g.to_dot("bell");
        assert!(dot.contains("q0 -- q1 [weight=2"));
    }

    #[test]
    fn source_inference() {
        assert_eq!(Source::infer("out/ketgpt_1_2q_3g.qasm"), Source::Ketgpt);
        assert_eq!(Source::infer("random_1_2q_3g.qasm"), Source::Random);
        assert_eq!(Source::infer("ghz_3.qasm"), Source::Real);
        assert_eq!("random".parse::<Source>().unwrap(), Source::Random);
    }
}
