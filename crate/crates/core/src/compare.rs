//! Partition similarity: normalized mutual information and adjusted Rand index.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mapeq::Partition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Mutual information normalized by the arithmetic mean of the entropies.
    pub nmi: f64,
    pub ari: f64,
    /// Nodes assigned in both partitions.
    pub overlap: usize,
}

fn choose2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

fn entropy(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    counts
        .map(|c| c as f64 / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// NMI and ARI over the nodes assigned in both partitions. When both
/// labelings are constant they are identical and score 1.
pub fn compare_partitions(a: &Partition, b: &Partition) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::UniverseMismatch(a.len(), b.len()));
    }
    let pairs: Vec<(u32, u32)> = a
        .assignment()
        .iter()
        .zip(b.assignment())
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    let n = pairs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("partitions share no assigned node".into()));
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for &(x, y) in &pairs {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let total = n as f64;
    let h_a = entropy(rows.values().copied(), total);
    let h_b = entropy(cols.values().copied(), total);
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let p = c as f64 / total;
            let px = rows[&x] as f64 / total;
            let py = cols[&y] as f64 / total;
            p * (p / (px * py)).ln()
        })
        .sum();
    let nmi = if h_a + h_b == 0.0 {
        1.0
    } else {
        (2.0 * mi / (h_a + h_b)).clamp(0.0, 1.0)
    };

    let index: f64 = joint.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let pairs_total = choose2(n as u64);
    let expected = if pairs_total > 0.0 { sum_a * sum_b / pairs_total } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let ari = if max_index == expected {
        1.0
    } else {
        (index - expected) / (max_index - expected)
    };
    Ok(Similarity { nmi, ari, overlap: n })
}
