//! Lloyd's k-means with k-means++ seeding and independent restarts.

use rand::Rng as _;
use rand::RngCore;

use crate::autodiff::kernels::map_ordered;

use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};
use crate::rng::{seeded, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Matrix<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Matrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(x: &Matrix<f64>, k: usize, rng: &mut Rng) -> Matrix<f64> {
    let n = x.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn lloyd(x: &Matrix<f64>, k: usize, max_iter: usize, rng: &mut Rng) -> KMeansFit {
    let (n, d) = (x.rows(), x.cols());
    let mut centroids = plus_plus(x, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, a) in assignments.iter_mut().enumerate() {
            let (c, _) = nearest(x.row(i), &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let cm = centroids.as_mut_slice();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    cm[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
        // empty clusters restart from the point worst served by its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq_dist(x.row(i), centroids.row(assignments[i]))))
                    .fold((0, -1.0), |b, p| if p.1 > b.1 { p } else { b })
                    .0;
                let src = x.row(far).to_vec();
                centroids.as_mut_slice()[c * d..(c + 1) * d].copy_from_slice(&src);
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centroids.row(assignments[i]))).sum();
    KMeansFit {
        assignments,
        centroids,
        inertia,
        iterations,
    }
}

/// Best of `restarts` Lloyd runs by inertia. Restart seeds are drawn from
/// `rng` up front, so the result does not depend on thread scheduling.
pub fn kmeans(features: &Matrix<f64>, k: usize, restarts: usize, max_iter: usize, rng: &mut Rng) -> Result<KMeansFit> {
    if k == 0 {
        return Err(CdganError::validation("k must be at least 1"));
    }
    if features.rows() < k {
        return Err(CdganError::validation(format!(
            "cannot form {k} clusters from {} points",
            features.rows()
        )));
    }
    let seeds: Vec<u64> = (0..restarts.max(1)).map(|_| rng.next_u64()).collect();
    let run = |&s: &u64| lloyd(features, k, max_iter.max(1), &mut seeded(s));

    let fits = map_ordered(&seeds, run);

    Ok(fits
        .into_iter()
        .reduce(|best, f| if f.inertia < best.inertia { f } else { best })
        .expect("at least one restart"))
}
