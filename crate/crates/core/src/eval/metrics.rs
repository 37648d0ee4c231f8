//! External clustering scores: ACC (optimal-mapping purity), NMI and ARI.

use super::hungarian::min_cost_assignment;
use crate::error::{CdganError, Result};

/// Label limit for the assignment-based accuracy.
pub const MAX_LABELS: usize = 64;

/// Dense relabeling by first appearance.
fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Contingency table `table[p][t]` between two labelings.
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub n: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(CdganError::contract(format!(
                "prediction has {} entries, truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        let (p, kp) = dense(pred);
        let (t, kt) = dense(truth);
        let mut table = vec![vec![0u64; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            table[a][b] += 1;
        }
        Ok(Contingency {
            table,
            n: pred.len() as u64,
        })
    }

    fn row_sums(&self) -> Vec<u64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let cols = self.table.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.table.iter().map(|r| r[j]).sum()).collect()
    }
}

/// Fraction of points matched under the best one-to-one cluster→class mapping.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Err(CdganError::contract("accuracy of an empty labeling"));
    }
    let (kp, kt) = (c.table.len(), c.table[0].len());
    if kp > MAX_LABELS || kt > MAX_LABELS {
        return Err(CdganError::validation(format!(
            "accuracy supports at most {MAX_LABELS} distinct labels, got {kp} clusters and {kt} classes"
        )));
    }
    // maximize matches = minimize negated counts, rows on the smaller side
    let cost: Vec<Vec<i64>> = if kp <= kt {
        c.table.iter().map(|r| r.iter().map(|&v| -(v as i64)).collect()).collect()
    } else {
        (0..kt).map(|j| (0..kp).map(|i| -(c.table[i][j] as i64)).collect()).collect()
    };
    let assign = min_cost_assignment(&cost);
    let matched: i64 = assign.iter().enumerate().map(|(i, &j)| -cost[i][j]).sum();
    Ok(matched as f64 / c.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the two entropies.
///
/// When both labelings are constant the score is 1; when exactly one is, 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n == 0 {
        return Err(CdganError::contract("nmi of an empty labeling"));
    }
    let n = c.n as f64;
    let rows = c.row_sums();
    let cols = c.col_sums();
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    let trivial_p = rows.len() == 1;
    let trivial_t = cols.len() == 1;
    if trivial_p && trivial_t {
        return Ok(1.0);
    }
    if trivial_p || trivial_t {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand index from pair counts. Identical trivial partitions score 1.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    if c.n < 2 {
        return Err(CdganError::contract("ari needs at least 2 points"));
    }
    let index: u128 = c.table.iter().flatten().map(|&v| pairs(v)).sum();
    let a: u128 = c.row_sums().into_iter().map(pairs).sum();
    let b: u128 = c.col_sums().into_iter().map(pairs).sum();
    let total = pairs(c.n);
    // ARI = (T·index − a·b) / (T·(a+b)/2 − a·b), scaled by 2 to stay integral
    let num = 2 * (total * index) as i128 - 2 * (a * b) as i128;
    let den = (total * (a + b)) as i128 - 2 * (a * b) as i128;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}
