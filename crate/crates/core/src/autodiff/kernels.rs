//! Dense matrix kernels used by the tape.
//!
//! Each kernel writes whole output rows independently, so with the `parallel`
//! feature rows are distributed over rayon's pool and without it they run in a
//! plain loop. The per-element accumulation order is identical in both modes,
//! which keeps results bitwise reproducible regardless of thread count.

use super::Scalar;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::sync::atomic::{AtomicBool, Ordering};

/// Minimum output elements before rows are handed to the thread pool.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 4096;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Switches row parallelism on or off at runtime. Without the `parallel`
/// feature this is a no-op and kernels always run sequentially.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled && cfg!(feature = "parallel"), Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

#[inline]
fn for_each_row<T: Scalar>(out: &mut [T], cols: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PAR_THRESHOLD && parallel_enabled() {
            out.par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    out.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
}

/// Maps `f` over `items`, in parallel when enabled; output order matches input.
pub fn map_ordered<I: Sync, R: Send>(items: &[I], f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        if items.len() > 1 && parallel_enabled() {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// `row += Σ_p coef(p) · b[p]`, accumulated in `p` order. Four rows of `b`
/// are applied per pass over `row` to cut load/store traffic.
#[inline]
fn axpy_rows<T: Scalar>(row: &mut [T], b: &[T], k: usize, coef: impl Fn(usize) -> T) {
    let n = row.len();
    let mut p = 0;
    while p + 4 <= k {
        let (c0, c1, c2, c3) = (coef(p), coef(p + 1), coef(p + 2), coef(p + 3));
        let b0 = &b[p * n..(p + 1) * n];
        let b1 = &b[(p + 1) * n..(p + 2) * n];
        let b2 = &b[(p + 2) * n..(p + 3) * n];
        let b3 = &b[(p + 3) * n..(p + 4) * n];
        for j in 0..n {
            let mut v = row[j];
            v += c0 * b0[j];
            v += c1 * b1[j];
            v += c2 * b2[j];
            v += c3 * b3[j];
            row[j] = v;
        }
        p += 4;
    }
    for p in p..k {
        let c = coef(p);
        for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
            *o += c * bv;
        }
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for_each_row(out, n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        axpy_rows(row, b, k, |p| a_row[p]);
    });
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let mut bt = vec![T::zero(); k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    matmul_acc(a, &bt, out, m, k, n);
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for_each_row(out, n, |i, row| axpy_rows(row, b, k, |p| a[p * m + i]));
}

/// Naive triple loop, kept for benchmarks and as a test oracle.
pub fn matmul_naive<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = T::zero();
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            })
            .collect()
    }

    #[test]
    fn kernels_match_naive_bitwise() {
        let (m, k, n) = (37, 19, 53);
        let a = lcg(m * k, 1);
        let b = lcg(k * n, 2);
        let want = matmul_naive(&a, &b, m, k, n);

        let mut out = vec![0.0; m * n];
        matmul_acc(&a, &b, &mut out, m, k, n);
        assert_eq!(out, want);

        // b transposed: bt[j][p] = b[p][j]
        let bt: Vec<f64> = (0..n)
            .flat_map(|j| (0..k).map(move |p| (p, j)))
            .map(|(p, j)| b[p * n + j])
            .collect();
        let mut out = vec![0.0; m * n];
        matmul_nt_acc(&a, &bt, &mut out, m, k, n);
        assert_eq!(out, want);

        let at: Vec<f64> = (0..k)
            .flat_map(|p| (0..m).map(move |i| (i, p)))
            .map(|(i, p)| a[i * k + p])
            .collect();
        let mut out = vec![0.0; m * n];
        matmul_tn_acc(&at, &b, &mut out, k, m, n);
        assert_eq!(out, want);
    }
}
