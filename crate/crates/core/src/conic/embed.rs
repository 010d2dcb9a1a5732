//! Complex Hermitian ↔ real symmetric embedding.
//!
//! A Hermitian H maps to the symmetric [[Re H, −Im H], [Im H, Re H]] of
//! doubled dimension. The embedding preserves positive semidefiniteness, and
//! traces pick up a factor of two: ⟨E(A), E(X)⟩ = 2·tr(AX) for Hermitian A,
//! X. Trace functionals on the real side therefore carry a ½ correction.

use ndarray::Array2;

use crate::{C64, CMat};

/// Real symmetric embedding of a Hermitian matrix.
pub fn embed_hermitian(h: &CMat) -> Array2<f64> {
    let n = h.nrows();
    let mut out = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = h[[i, j]];
            out[[i, j]] = z.re;
            out[[i, j + n]] = -z.im;
            out[[i + n, j]] = z.im;
            out[[i + n, j + n]] = z.re;
        }
    }
    out
}

/// Recover a Hermitian matrix from a (possibly unstructured) real symmetric
/// solution of doubled dimension by projecting onto the embedding subspace.
/// The projection preserves feasibility of structured constraints and leaves
/// objective values unchanged.
pub fn recover_hermitian(y: &Array2<f64>, n: usize) -> CMat {
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (y[[i, j]] + y[[i + n, j + n]]);
            let im = 0.5 * (y[[i + n, j]] - y[[i, j + n]]);
            out[[i, j]] = C64::new(re, im);
        }
    }
    // Exact Hermitian symmetry after projection.
    let out_h = out.t().mapv(|z: C64| z.conj());
    (&out + &out_h).mapv(|z| z * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::{Eigh, UPLO};

    fn sample_hermitian(n: usize, seed: u64) -> CMat {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Array2::from_shape_fn((n, n), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let raw_h = raw.t().mapv(|z: C64| z.conj());
        (&raw + &raw_h).mapv(|z| z * 0.5)
    }

    #[test]
    fn round_trip_exact() {
        let h = sample_hermitian(5, 1);
        let back = recover_hermitian(&embed_hermitian(&h), 5);
        for (a, b) in h.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn trace_factor_two() {
        let a = sample_hermitian(4, 2);
        let x = sample_hermitian(4, 3);
        let tr_c: f64 = a.dot(&x).diag().iter().map(|z| z.re).sum();
        let ea = embed_hermitian(&a);
        let ex = embed_hermitian(&x);
        let tr_r: f64 = ea.dot(&ex).diag().iter().sum();
        assert!((tr_r - 2.0 * tr_c).abs() < 1e-12);
    }

    #[test]
    fn psd_preserved() {
        let g = sample_hermitian(4, 4);
        let gh = g.t().mapv(|z: C64| z.conj());
        let psd = g.dot(&gh); // PSD by construction
        let e = embed_hermitian(&psd);
        let (vals, _) = e.eigh(UPLO::Lower).unwrap();
        assert!(vals.iter().all(|&v| v > -1e-10));
    }
}
