//! Two-level clustering: three qubit-count bands, then k-means on z-scored
//! metrics within each band.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricsRow, Source, METRICS_VERSION, METRIC_NAMES};

pub const MAX_ITERATIONS: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub file: String,
    pub source: Source,
    pub size_bucket: usize,
    /// Global cluster id, numbered bucket by bucket.
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size_bucket: usize,
    pub total: usize,
    pub counts: BTreeMap<Source, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub metrics_version: u32,
    pub metric_names: Vec<String>,
    pub seed: u64,
    pub k_structure: usize,
    /// Upper `num_qubits` bound of bands 0 and 1.
    pub band_thresholds: [f64; 2],
    pub entries: Vec<ClusterEntry>,
    pub clusters: Vec<ClusterSummary>,
    /// Mean fraction of random circuits over clusters that contain at least
    /// one ketgpt circuit; `None` when there are none.
    pub random_share_near_ketgpt: Option<f64>,
    pub warnings: Vec<String>,
}

impl ClusterReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster report serializes")
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["file", "source", "size_bucket", "cluster"])?;
        for e in &self.entries {
            out.write_record([
                e.file.as_str(),
                e.source.name(),
                &e.size_bucket.to_string(),
                &e.cluster.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-source totals, which must equal the input sizes.
    pub fn composition(&self) -> BTreeMap<Source, usize> {
        let mut m = BTreeMap::new();
        for c in &self.clusters {
            for (s, n) in &c.counts {
                *m.entry(*s).or_insert(0) += n;
            }
        }
        m
    }
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-feature z-scores (population standard deviation). Features whose
/// spread is below 1e-12 are dropped.
pub fn zscore(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let dims = points.first().map_or(0, Vec::len);
    let mut keep = Vec::new();
    for d in 0..dims {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let sd = (points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 1e-12 {
            keep.push((d, mean, sd));
        }
    }
    points
        .iter()
        .map(|p| keep.iter().map(|&(d, m, s)| (p[d] - m) / s).collect())
        .collect()
}

/// Lloyd's k-means with farthest-point initialization. The first centroid
/// is a seeded uniform pick; each further one is the point farthest from
/// the chosen set (lowest index on ties). `k` is capped at the number of
/// distinct points. Labels are renumbered by first appearance.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| sq_dist(p, q) == 0.0) {
            distinct.push(p);
        }
    }
    let k = k.clamp(1, distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        centroids.push(points[far].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[far]));
        }
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (j, c)| {
                        let d = sq_dist(p, c);
                        if d < acc.1 {
                            (j, d)
                        } else {
                            acc
                        }
                    })
                    .0
            })
            .collect()
    };

    let mut labels = assign(&centroids);
    for _ in 0..MAX_ITERATIONS {
        let dims = points[0].len();
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[j]).sqrt());
            centroids[j] = next;
        }
        labels = assign(&centroids);
        if shift < TOLERANCE {
            break;
        }
    }

    let mut remap = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = remap.len();
            *remap.entry(l).or_insert(next)
        })
        .collect()
}

/// Bands circuits by `num_qubits` at the 33rd and 67th percentiles, then
/// clusters each band into at most `k_structure` groups.
///
/// # Panics
/// If fewer than two rows are given.
pub fn cluster(rows: &[MetricsRow], k_structure: usize, seed: u64) -> ClusterReport {
    assert!(rows.len() >= 2, "clustering needs at least two circuits");
    let mut qubits: Vec<f64> = rows.iter().map(|r| r.metrics.num_qubits).collect();
    qubits.sort_by(f64::total_cmp);
    let t = [percentile(&qubits, 0.33), percentile(&qubits, 0.67)];
    let band = |q: f64| {
        if q <= t[0] {
            0
        } else if q <= t[1] {
            1
        } else {
            2
        }
    };
    let buckets: Vec<usize> = rows.iter().map(|r| band(r.metrics.num_qubits)).collect();

    let per_band: Vec<(usize, Vec<usize>, Vec<usize>, Option<String>)> = (0..3)
        .into_par_iter()
        .filter_map(|b| {
            let members: Vec<usize> = (0..rows.len()).filter(|&i| buckets[i] == b).collect();
            if members.is_empty() {
                return None;
            }
            let warning = (members.len() < k_structure).then(|| {
                format!(
                    "size band {b} has {} circuits, fewer than k = {k_structure}; k reduced",
                    members.len()
                )
            });
            let points: Vec<Vec<f64>> = members.iter().map(|&i| rows[i].metrics.to_vec().to_vec()).collect();
            let labels = kmeans(&zscore(&points), k_structure, seed.wrapping_add(b as u64));
            Some((b, members, labels, warning))
        })
        .collect();

    let mut cluster_of = vec![0usize; rows.len()];
    let mut clusters = Vec::new();
    let mut warnings = Vec::new();
    for (b, members, labels, warning) in per_band {
        if let Some(w) = warning {
            log::warn!("{w}");
            warnings.push(w);
        }
        let base = clusters.len();
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        for j in 0..k {
            clusters.push(ClusterSummary {
                id: base + j,
                size_bucket: b,
                total: 0,
                counts: BTreeMap::new(),
            });
        }
        for (&i, &l) in members.iter().zip(&labels) {
            cluster_of[i] = base + l;
            let c = &mut clusters[base + l];
            c.total += 1;
            *c.counts.entry(rows[i].source).or_insert(0) += 1;
        }
    }

    let near: Vec<f64> = clusters
        .iter()
        .filter(|c| c.counts.contains_key(&Source::Ketgpt))
        .map(|c| *c.counts.get(&Source::Random).unwrap_or(&0) as f64 / c.total as f64)
        .collect();
    let random_share_near_ketgpt = (!near.is_empty()).then(|| near.iter().sum::<f64>() / near.len() as f64);

    ClusterReport {
        metrics_version: METRICS_VERSION,
        metric_names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        seed,
        k_structure,
        band_thresholds: t,
        entries: rows
            .iter()
            .enumerate()
            .map(|(i, r)| ClusterEntry {
                file: r.file.clone(),
                source: r.source,
                size_bucket: buckets[i],
                cluster: cluster_of[i],
            })
            .collect(),
        clusters,
        random_share_near_ketgpt,
        warnings,
    }
}

fn choose2(n: usize) -> f64 {
    n as f64 * n.saturating_sub(1) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same items. Two identical
/// trivial partitions score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_a * sum_b / choose2(a.len()).max(1.0);
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::CircuitMetrics;

    fn row(file: &str, source: Source, v: [f64; 16]) -> MetricsRow {
        MetricsRow {
            source,
            file: file.into(),
            metrics: CircuitMetrics::from_vec(v),
        }
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[5, 5, 5]), 1.0);
        // sklearn reference: ARI([0,0,1,1],[0,0,1,2]) = 0.5714285714
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 4.0 / 7.0).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1, 0, 1], &[0, 0, 1, 1]) < 0.0);
    }

    #[test]
    fn kmeans_two_blobs() {
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..20 {
            let (cx, label) = if i % 2 == 0 { (0.0, 0) } else { (10.0, 1) };
            points.push(vec![cx + (i as f64) * 0.01, cx - (i as f64) * 0.01]);
            truth.push(label);
        }
        for seed in 0..5 {
            let labels = kmeans(&points, 2, seed);
            assert_eq!(adjusted_rand_index(&labels, &truth), 1.0);
            assert_eq!(labels[0], 0);
        }
    }

    #[test]
    fn identical_points_single_cluster() {
        let rows: Vec<MetricsRow> = (0..6)
            .map(|i| row(&format!("f{i}"), Source::Real, [3.0; 16]))
            .collect();
        let r = cluster(&rows, 4, 1);
        assert_eq!(r.clusters.len(), 1);
        assert!(r.entries.iter().all(|e| e.cluster == 0));
    }

    #[test]
    fn small_band_warns() {
        let mut v = [1.0; 16];
        let rows: Vec<MetricsRow> = (0..3)
            .map(|i| {
                v[1] = i as f64;
                row(&format!("f{i}"), Source::Real, v)
            })
            .collect();
        let r = cluster(&rows, 6, 0);
        assert!(!r.warnings.is_empty());
        assert_eq!(r.composition()[&Source::Real], 3);
    }

    #[test]
    fn bands_and_determinism() {
        let rows: Vec<MetricsRow> = (0..30)
            .map(|i| {
                let mut v = [0.0; 16];
                v[0] = (i % 9 + 2) as f64;
                v[1] = (i * 7 % 13) as f64;
                v[2] = (i * 3 % 5) as f64;
                let src = Source::ALL[i % 3];
                row(&format!("{}_{i}", src.name()), src, v)
            })
            .collect();
        let a = cluster(&rows, 3, 11);
        let b = cluster(&rows, 3, 11);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.composition().values().sum::<usize>(), 30);
        for e in &a.entries {
            let q = rows.iter().find(|r| r.file == e.file).unwrap().metrics.num_qubits;
            let expect = if q <= a.band_thresholds[0] {
                0
            } else if q <= a.band_thresholds[1] {
                1
            } else {
                2
            };
            assert_eq!(e.size_bucket, expect);
        }
        assert!(a.random_share_near_ketgpt.is_some());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(percentile(&v, 0.33), 2.0);
        assert_eq!(percentile(&v, 0.67), 5.0);
    }
}
