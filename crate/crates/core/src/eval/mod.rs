//! Disentanglement scoring: cluster encoder features with k-means and compare
//! the clusters to the true classes.

mod hungarian;
mod kmeans;
mod metrics;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::map_ordered;

pub use hungarian::min_cost_assignment;
pub use kmeans::{kmeans, KMeansFit};
pub use metrics::{ari, clustering_accuracy, nmi, Contingency, MAX_LABELS};

use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};
use crate::models::{encoder_forward, ModelBundle};
use crate::rng::{seeded, Rng};

/// How the best of several k-means runs is reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Each metric takes its own maximum over runs.
    #[default]
    PerMetric,
    /// All metrics come from the run with the highest ACC.
    PerRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub runs: usize,
    /// Restarts inside each k-means run.
    pub restarts: usize,
    pub max_iter: usize,
    pub selection: Selection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            runs: 5,
            restarts: 1,
            max_iter: 100,
            selection: Selection::PerMetric,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.restarts == 0 || self.max_iter == 0 {
            return Err(CdganError::validation("runs, restarts and max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    /// Cluster sizes of the highest-ACC run, largest first.
    pub cluster_sizes: Vec<usize>,
    pub inter_class_cosine: f64,
    pub n_test: usize,
    pub runs: usize,
    pub selection: Selection,
}

/// Mean cosine similarity over all pairs drawn from different classes.
pub fn uniformity_diagnostic(f: &Matrix<f64>, labels: &[usize]) -> Result<f64> {
    if f.rows() != labels.len() {
        return Err(CdganError::contract(format!("{} features for {} labels", f.rows(), labels.len())));
    }
    let norms: Vec<f64> = (0..f.rows())
        .map(|i| f.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut total = 0.0;
    let mut count = 0u64;
    for i in 0..f.rows() {
        for j in i + 1..f.rows() {
            if labels[i] == labels[j] {
                continue;
            }
            let dot: f64 = f.row(i).iter().zip(f.row(j)).map(|(a, b)| a * b).sum();
            let denom = norms[i] * norms[j];
            total += if denom > 0.0 { dot / denom } else { 0.0 };
            count += 1;
        }
    }
    if count == 0 {
        return Err(CdganError::validation("uniformity needs at least two classes"));
    }
    Ok(total / count as f64)
}

struct RunScore {
    acc: f64,
    nmi: f64,
    ari: f64,
    sizes: Vec<usize>,
}

fn score_run(features: &Matrix<f64>, labels: &[usize], k: usize, cfg: &EvalConfig, seed: u64) -> Result<RunScore> {
    let fit = kmeans(features, k, cfg.restarts, cfg.max_iter, &mut seeded(seed))?;
    let mut sizes = vec![0usize; k];
    for &a in &fit.assignments {
        sizes[a] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(RunScore {
        acc: clustering_accuracy(&fit.assignments, labels)?,
        nmi: nmi(&fit.assignments, labels)?,
        ari: ari(&fit.assignments, labels)?,
        sizes,
    })
}

/// Runs the protocol on precomputed features.
pub fn evaluate_features(
    features: &Matrix<f64>,
    labels: &[usize],
    k: usize,
    cfg: &EvalConfig,
    rng: &mut Rng,
) -> Result<ClusterReport> {
    if features.rows() != labels.len() {
        return Err(CdganError::contract(format!(
            "{} features for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.runs).map(|_| rng.next_u64()).collect();
    let run = |&s: &u64| score_run(features, labels, k, cfg, s);
    let scores = map_ordered(&seeds, run).into_iter().collect::<Result<Vec<RunScore>>>()?;

    let best_run = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if s.acc > scores[b].acc { i } else { b });
    let (acc, nmi, ari) = match cfg.selection {
        Selection::PerMetric => (
            scores.iter().map(|s| s.acc).fold(f64::MIN, f64::max),
            scores.iter().map(|s| s.nmi).fold(f64::MIN, f64::max),
            scores.iter().map(|s| s.ari).fold(f64::MIN, f64::max),
        ),
        Selection::PerRun => {
            let s = &scores[best_run];
            (s.acc, s.nmi, s.ari)
        }
    };
    Ok(ClusterReport {
        acc,
        nmi,
        ari,
        cluster_sizes: scores[best_run].sizes.clone(),
        inter_class_cosine: uniformity_diagnostic(features, labels)?,
        n_test: labels.len(),
        runs: cfg.runs,
        selection: cfg.selection,
    })
}

/// Encodes `images` with the `f` head and scores the clustering against `labels`.
pub fn evaluate(
    bundle: &ModelBundle<f32>,
    images: &Matrix<f32>,
    labels: &[usize],
    k: usize,
    cfg: &EvalConfig,
    rng: &mut Rng,
) -> Result<ClusterReport> {
    let f = encoder_forward(bundle, images)?.f.cast::<f64>();
    evaluate_features(&f, labels, k, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn uniformity_examples() {
        let orth = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(uniformity_diagnostic(&orth, &[0, 0, 1]).unwrap(), 0.0);
        let same = Matrix::from_rows(&vec![vec![0.6, 0.8]; 4]).unwrap();
        assert!((uniformity_diagnostic(&same, &[0, 1, 0, 1]).unwrap() - 1.0).abs() < 1e-12);
        let anti = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(uniformity_diagnostic(&anti, &[0, 1]).unwrap(), -1.0);
        assert!(uniformity_diagnostic(&anti, &[1, 1]).is_err());
    }

    #[test]
    fn perfect_features_score_one() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let f = Matrix::from_fn(60, 3, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let r = evaluate_features(&f, &labels, 3, &EvalConfig::default(), &mut seeded(0)).unwrap();
        assert_eq!((r.acc, r.ari), (1.0, 1.0));
        assert!((r.nmi - 1.0).abs() < 1e-12);
        assert_eq!(r.cluster_sizes, vec![20, 20, 20]);
    }

    #[test]
    fn random_features_score_near_chance() {
        let mut rng = seeded(1);
        let n = 1000;
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let mut f = Matrix::from_fn(n, 16, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            let norm = f.row(i).iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            for j in 0..16 {
                f.as_mut_slice()[i * 16 + j] /= norm;
            }
        }
        let r = evaluate_features(&f, &labels, 10, &EvalConfig::default(), &mut seeded(2)).unwrap();
        assert!(r.acc < 0.25, "{}", r.acc);
    }

    #[test]
    fn more_runs_never_score_lower() {
        let mut rng = seeded(3);
        let labels: Vec<usize> = (0..120).map(|i| i % 3).collect();
        let f = Matrix::from_fn(120, 4, |i, j| if labels[i] == j { 0.5 } else { 0.0 } + rng.gen_range(-0.6..0.6));
        let one = EvalConfig { runs: 1, ..Default::default() };
        let five = EvalConfig { runs: 5, ..Default::default() };
        let a = evaluate_features(&f, &labels, 3, &one, &mut seeded(4)).unwrap();
        let b = evaluate_features(&f, &labels, 3, &five, &mut seeded(4)).unwrap();
        assert!(b.acc >= a.acc && b.nmi >= a.nmi && b.ari >= a.ari);
    }
}
