//! Structured generator input: continuous content `z` plus a one-hot class code `c`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::autodiff::{Matrix, Scalar};
use crate::error::{CdganError, Result};
use crate::rng::Rng;

/// Paired content codes and class codes for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<T = f32> {
    /// `N × D_z`, entries drawn from `N(0, σ²)`.
    pub z: Matrix<T>,
    pub c_index: Vec<usize>,
    /// `N × K`, one 1 per row at `c_index`.
    pub c_onehot: Matrix<T>,
    pub sigma: f64,
}

impl<T: Scalar> LatentBatch<T> {
    pub fn len(&self) -> usize {
        self.c_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_index.is_empty()
    }

    pub fn d_z(&self) -> usize {
        self.z.cols()
    }

    pub fn classes(&self) -> usize {
        self.c_onehot.cols()
    }

    /// Builds a batch from explicit codes; used for image grids and tests.
    pub fn from_parts(z: Matrix<T>, c_index: Vec<usize>, k: usize, sigma: f64) -> Result<Self> {
        if z.rows() != c_index.len() {
            return Err(CdganError::contract(format!(
                "{} content rows for {} class codes",
                z.rows(),
                c_index.len()
            )));
        }
        let c_onehot = onehot(&c_index, k)?;
        Ok(LatentBatch {
            z,
            c_index,
            c_onehot,
            sigma,
        })
    }
}

pub fn onehot<T: Scalar>(labels: &[usize], k: usize) -> Result<Matrix<T>> {
    if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
        return Err(CdganError::validation(format!("label {bad} out of range for {k} classes")));
    }
    Ok(Matrix::from_fn(labels.len(), k, |i, j| {
        if labels[i] == j {
            T::one()
        } else {
            T::zero()
        }
    }))
}

fn gaussian<T: Scalar>(n: usize, d: usize, sigma: f64, rng: &mut Rng) -> Matrix<T> {
    Matrix::from_fn(n, d, |_, _| {
        let e: f64 = rng.sample(StandardNormal);
        T::of(sigma * e)
    })
}

/// Uniform class prior over `k` classes.
pub fn uniform_prior(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

pub fn validate_prior(pi: &[f64]) -> Result<()> {
    if pi.len() < 2 {
        return Err(CdganError::validation(format!("need at least 2 classes, got {}", pi.len())));
    }
    if pi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(CdganError::validation("class prior has a negative or non-finite entry"));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CdganError::validation(format!("class prior sums to {total}, not 1")));
    }
    Ok(())
}

/// Draws `n` independent `(z, c)` pairs: `z ~ N(0, σ²I)` and `c ~ Cat(π)`.
pub fn sample_latent<T: Scalar>(
    n: usize,
    d_z: usize,
    k: usize,
    sigma: f64,
    pi: &[f64],
    rng: &mut Rng,
) -> Result<LatentBatch<T>> {
    if n == 0 || d_z == 0 {
        return Err(CdganError::validation("latent batch needs n >= 1 and d_z >= 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(CdganError::validation(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if pi.len() != k {
        return Err(CdganError::validation(format!(
            "class prior has {} entries for {k} classes",
            pi.len()
        )));
    }
    validate_prior(pi)?;
    let categorical =
        WeightedIndex::new(pi).map_err(|e| CdganError::validation(format!("class prior: {e}")))?;

    let z = gaussian(n, d_z, sigma, rng);
    let c_index: Vec<usize> = (0..n).map(|_| categorical.sample(rng)).collect();
    LatentBatch::from_parts(z, c_index, k, sigma)
}

/// Same class codes, fresh content codes.
pub fn resample_positive<T: Scalar>(latent: &LatentBatch<T>, rng: &mut Rng) -> LatentBatch<T> {
    LatentBatch {
        z: gaussian(latent.len(), latent.d_z(), latent.sigma, rng),
        c_index: latent.c_index.clone(),
        c_onehot: latent.c_onehot.clone(),
        sigma: latent.sigma,
    }
}

/// `mask[i][j] = 1` when column `j` shares row `i`'s class and is not `i` itself.
///
/// Columns `0..N` are the generated samples; columns `N..N+M` are the labeled
/// real anchors, when given.
pub fn positive_mask(
    c_index: &[usize],
    anchor_labels: Option<&[usize]>,
    k: usize,
) -> Result<Vec<Vec<u8>>> {
    let anchors = anchor_labels.unwrap_or(&[]);
    if let Some(&bad) = c_index.iter().chain(anchors).find(|&&c| c >= k) {
        return Err(CdganError::validation(format!("label {bad} out of range for {k} classes")));
    }
    Ok(c_index
        .iter()
        .enumerate()
        .map(|(i, &ci)| {
            c_index
                .iter()
                .enumerate()
                .map(|(j, &cj)| u8::from(i != j && ci == cj))
                .chain(anchors.iter().map(|&a| u8::from(a == ci)))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_sigma_gives_zero_content() {
        let b: LatentBatch<f64> = sample_latent(50, 4, 3, 0.0, &uniform_prior(3), &mut seeded(1)).unwrap();
        assert!(b.z.as_slice().iter().all(|&v| v == 0.0));
        let p = resample_positive(&b, &mut seeded(2));
        assert_eq!(p.z, b.z);
    }

    #[test]
    fn onehot_rows_match_index() {
        let b: LatentBatch<f32> = sample_latent(200, 3, 5, 1.0, &uniform_prior(5), &mut seeded(3)).unwrap();
        for (i, &c) in b.c_index.iter().enumerate() {
            let row = b.c_onehot.row(i);
            assert_eq!(row.iter().sum::<f32>(), 1.0);
            assert_eq!(row[c], 1.0);
        }
    }

    #[test]
    fn class_frequencies_concentrate() {
        let b: LatentBatch<f32> =
            sample_latent(10_000, 1, 10, 1.0, &uniform_prior(10), &mut seeded(4)).unwrap();
        let mut counts = [0usize; 10];
        for &c in &b.c_index {
            counts[c] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.07..=0.13).contains(&f), "{f}");
        }
    }

    #[test]
    fn content_mean_is_near_zero() {
        let sigma = 2.0;
        let (n, d) = (4000, 8);
        let b: LatentBatch<f64> = sample_latent(n, d, 2, sigma, &uniform_prior(2), &mut seeded(5)).unwrap();
        let mean = b.z.as_slice().iter().sum::<f64>() / (n * d) as f64;
        assert!(mean.abs() < 4.0 * sigma / ((n * d) as f64).sqrt());
    }

    #[test]
    fn bad_prior_is_rejected() {
        let r = sample_latent::<f32>(4, 2, 2, 1.0, &[0.7, 0.7], &mut seeded(0));
        assert!(matches!(r, Err(CdganError::Validation(_))));
        let r = sample_latent::<f32>(4, 2, 2, 1.0, &[1.5, -0.5], &mut seeded(0));
        assert!(matches!(r, Err(CdganError::Validation(_))));
    }

    #[test]
    fn same_seed_same_batch() {
        let a: LatentBatch<f32> = sample_latent(32, 5, 4, 1.0, &uniform_prior(4), &mut seeded(9)).unwrap();
        let b: LatentBatch<f32> = sample_latent(32, 5, 4, 1.0, &uniform_prior(4), &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn positive_resample_keeps_classes_and_moves_content() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let b: LatentBatch<f32> = sample_latent(4, 3, 3, 1.0, &uniform_prior(3), &mut rng).unwrap();
            let p = resample_positive(&b, &mut rng);
            assert_eq!(p.c_index, b.c_index);
            for i in 0..b.len() {
                assert_ne!(p.z.row(i), b.z.row(i));
            }
        }
    }

    #[test]
    fn positive_mask_examples() {
        assert_eq!(
            positive_mask(&[0, 0, 1], None, 2).unwrap(),
            vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]]
        );
        assert_eq!(
            positive_mask(&[0, 1, 2], None, 3).unwrap(),
            vec![vec![0; 3]; 3]
        );
        assert_eq!(positive_mask(&[0], Some(&[0, 1]), 2).unwrap(), vec![vec![0, 1, 0]]);
        assert!(positive_mask(&[0, 3], None, 3).is_err());
    }

    #[test]
    fn content_uncorrelated_with_class() {
        let n = 10_000;
        let b: LatentBatch<f64> = sample_latent(n, 4, 3, 1.0, &uniform_prior(3), &mut seeded(21)).unwrap();
        let c: Vec<f64> = b.c_index.iter().map(|&c| c as f64).collect();
        let cm = c.iter().sum::<f64>() / n as f64;
        for d in 0..4 {
            let z: Vec<f64> = (0..n).map(|i| b.z.get(i, d)).collect();
            let zm = z.iter().sum::<f64>() / n as f64;
            let cov: f64 = z.iter().zip(&c).map(|(a, b)| (a - zm) * (b - cm)).sum();
            let vz: f64 = z.iter().map(|a| (a - zm).powi(2)).sum();
            let vc: f64 = c.iter().map(|b| (b - cm).powi(2)).sum();
            assert!((cov / (vz * vc).sqrt()).abs() < 0.05);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mask_block_is_symmetric(labels in proptest::collection::vec(0usize..4, 1..12)) {
                let m = positive_mask(&labels, None, 4).unwrap();
                for i in 0..labels.len() {
                    prop_assert_eq!(m[i][i], 0);
                    for j in 0..labels.len() {
                        prop_assert_eq!(m[i][j], m[j][i]);
                    }
                }
            }
        }
    }
}
