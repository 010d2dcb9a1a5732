//! Closed-form receive-filter optimization per target.
//!
//! For a fixed transmit matrix the per-target filter problem is a generalized
//! Rayleigh quotient qᴴBq / qᴴCq with B = G_l W Wᴴ G_lᴴ ⪰ 0 and
//! C = Σ_{m≠l} G_m W Wᴴ G_mᴴ + σ_R²·I ≻ 0; the maximizer is the principal
//! eigenvector of C⁻¹B and the attained value is its eigenvalue, which equals
//! the sensing SINR. Because B is rank one, q ∝ C⁻¹g_l in closed form; the
//! eigensolve route and the closed form serve as mutual oracles.

use ndarray::Array2;
use ndarray_linalg::{Cholesky, Eigh, UPLO};
use thiserror::Error;

use crate::channel::ChannelSet;
use crate::sinr::{inner, NoiseModel};
use crate::txbf::phase_fix;
use crate::{C64, CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum RxError {
    #[error("target index {0} out of range (M = {1})")]
    TargetIndexOutOfRange(usize, usize),
    #[error("equivalent sensing noise must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("dimension mismatch: channel dim {0}, W rows {1}")]
    DimensionMismatch(usize, usize),
}

/// Receive filter for one target together with the attained sensing SINR.
#[derive(Debug, Clone)]
pub struct ReceiveFilter {
    /// Unit-norm filter, largest-magnitude entry rotated to the nonnegative
    /// real axis.
    pub q: CVec,
    /// Attained sensing SINR (the generalized Rayleigh eigenvalue).
    pub sinr: f64,
    /// Set when the target is not illuminated (B = 0); the filter falls back
    /// to the matched direction with zero SINR.
    pub degenerate: bool,
}

fn clutter_matrix(
    w: &CMat,
    channel: &ChannelSet,
    noise: &NoiseModel,
    l: usize,
) -> Result<(CMat, f64), RxError> {
    let m = channel.num_targets();
    if l == 0 || l > m {
        return Err(RxError::TargetIndexOutOfRange(l, m));
    }
    if noise.sigma_big_r_sq <= 0.0 {
        return Err(RxError::NonPositiveNoise(noise.sigma_big_r_sq));
    }
    let n = channel.dim();
    if w.nrows() != n {
        return Err(RxError::DimensionMismatch(n, w.nrows()));
    }
    // G_m W Wᴴ G_mᴴ = γ_m·g_m g_mᴴ with γ_m = ‖Wᴴ g_m‖².
    let illum = |g: &CVec| -> f64 {
        (0..w.ncols())
            .map(|c| inner(g, &w.column(c).to_owned()).norm_sqr())
            .sum()
    };
    let mut c: CMat = Array2::eye(n).mapv(|x: f64| C64::new(noise.sigma_big_r_sq * x, 0.0));
    for (mi, g) in channel.target_vectors.iter().enumerate() {
        if mi == l - 1 {
            continue;
        }
        let gamma = illum(g);
        for i in 0..n {
            for j in 0..n {
                c[[i, j]] += C64::new(gamma, 0.0) * g[i] * g[j].conj();
            }
        }
    }
    Ok((c, illum(&channel.target_vectors[l - 1])))
}

fn forward_sub(l: &CMat, b: &CVec) -> CVec {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

fn backward_sub_adjoint(l: &CMat, b: &CVec) -> CVec {
    // Solves Lᴴ x = b with L lower triangular.
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]].conj() * x[k];
        }
        x[i] = s / l[[i, i]].conj();
    }
    x
}

fn unit(mut v: CVec) -> CVec {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / C64::new(norm, 0.0));
    phase_fix(&mut v);
    v
}

fn degenerate_fallback(channel: &ChannelSet, l: usize) -> ReceiveFilter {
    let g = channel.target_vectors[l - 1].clone();
    ReceiveFilter { q: unit(g), sinr: 0.0, degenerate: true }
}

/// Optimal receive filter via the Hermitian-definite pencil (B, C): Cholesky
/// whitening of C followed by a Hermitian eigensolve. The contract is the
/// principal eigenpair of C⁻¹B.
pub fn receive_filter(
    w: &CMat,
    channel: &ChannelSet,
    noise: &NoiseModel,
    l: usize,
) -> Result<ReceiveFilter, RxError> {
    let (c, beta) = clutter_matrix(w, channel, noise, l)?;
    let g = &channel.target_vectors[l - 1];
    let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if beta <= 1e-30 * ng.max(1.0) {
        return Ok(degenerate_fallback(channel, l));
    }
    let n = channel.dim();
    let lchol = c.cholesky(UPLO::Lower).expect("C is PD for positive noise");
    // M = L⁻¹ B L⁻ᴴ with B = β·g gᴴ: form the whitened vector once.
    let gw = forward_sub(&lchol, g);
    let mut m_mat: CMat = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m_mat[[i, j]] = C64::new(beta, 0.0) * gw[i] * gw[j].conj();
        }
    }
    let (vals, vecs) = m_mat.eigh(UPLO::Lower).expect("eigh");
    let top = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let u = vecs.column(top).to_owned();
    let q = unit(backward_sub_adjoint(&lchol, &u));
    Ok(ReceiveFilter { q, sinr: vals[top].max(0.0), degenerate: false })
}

/// Rank-one closed form: since B = β·g_l g_lᴴ, the optimizer is q ∝ C⁻¹g_l
/// with attained SINR β·(g_lᴴ C⁻¹ g_l). Serves as an independent oracle for
/// [`receive_filter`].
pub fn receive_filter_closed_form(
    w: &CMat,
    channel: &ChannelSet,
    noise: &NoiseModel,
    l: usize,
) -> Result<ReceiveFilter, RxError> {
    let (c, beta) = clutter_matrix(w, channel, noise, l)?;
    let g = &channel.target_vectors[l - 1];
    let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if beta <= 1e-30 * ng.max(1.0) {
        return Ok(degenerate_fallback(channel, l));
    }
    let lchol = c.cholesky(UPLO::Lower).expect("C is PD for positive noise");
    let y = backward_sub_adjoint(&lchol, &forward_sub(&lchol, g));
    let quad = inner(g, &y).re; // g_lᴴ C⁻¹ g_l > 0
    Ok(ReceiveFilter { q: unit(y), sinr: beta * quad, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{truncation_grid, ApertureSpec, FarFieldPoint};
    use crate::sinr::{sense_sinr, BeamformerSet, TxView};
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scene(m_targets: usize) -> (ChannelSet, NoiseModel) {
        let ap = ApertureSpec::new(0.25, 0.25, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        let theta = 30f64.to_radians();
        let psis = [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_4, 2.0];
        let range = ap.area.powf(0.25) / (4.0 * std::f64::consts::PI);
        let targets: Vec<FarFieldPoint> = psis[..m_targets]
            .iter()
            .map(|&p| FarFieldPoint::new(range, theta, p).unwrap())
            .collect();
        let ch = ChannelSet::synthesize(&ap, &grid, &[], &targets).unwrap();
        let sigma = 1e-4 * ap.area;
        let noise = NoiseModel::from_effective(sigma, sigma, ap.kappa, ap.z0);
        (ch, noise)
    }

    fn random_w(n: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, cols), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn single_target_matched_filter() {
        let (ch, noise) = scene(1);
        let n = ch.dim();
        let w = random_w(n, 2, 1);
        let rf = receive_filter(&w, &ch, &noise, 1).unwrap();
        let g = &ch.target_vectors[0];
        let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        // With no clutter, C = σ_R²·I: q is the matched filter and the SINR
        // is ‖g‖²·(gᴴWWᴴg)/σ_R².
        let gw: f64 = (0..w.ncols())
            .map(|c| inner(g, &w.column(c).to_owned()).norm_sqr())
            .sum();
        assert_relative_eq!(rf.sinr, ng * gw / noise.sigma_big_r_sq, max_relative = 1e-10);
        let overlap = inner(&rf.q, g).norm() / ng.sqrt();
        assert_relative_eq!(overlap, 1.0, max_relative = 1e-10);
        // Returned eigenvalue equals the evaluated sensing SINR.
        let bf = BeamformerSet { w_c: Array2::zeros((n, 0)), w_r: w, q: vec![rf.q.clone()] };
        let direct = sense_sinr(TxView::Beams(&bf), &rf.q, &ch, &noise, 1).unwrap();
        assert_relative_eq!(rf.sinr, direct, max_relative = 1e-9);
    }

    #[test]
    fn zero_illumination_is_degenerate() {
        let (ch, noise) = scene(1);
        let n = ch.dim();
        let w: CMat = Array2::zeros((n, 1));
        let rf = receive_filter(&w, &ch, &noise, 1).unwrap();
        assert!(rf.degenerate);
        assert_eq!(rf.sinr, 0.0);
        let norm: f64 = rf.q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn eigensolve_agrees_with_closed_form() {
        let (ch, noise) = scene(2);
        let n = ch.dim();
        for seed in 0..5 {
            let w = random_w(n, 3, seed);
            for l in 1..=2 {
                let a = receive_filter(&w, &ch, &noise, l).unwrap();
                let b = receive_filter_closed_form(&w, &ch, &noise, l).unwrap();
                assert_relative_eq!(a.sinr, b.sinr, max_relative = 1e-9);
                // Same vector up to the (already fixed) unit-modulus phase.
                let dot = inner(&a.q, &b.q).norm();
                assert_relative_eq!(dot, 1.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn eigenvalue_is_the_maximum_over_random_filters() {
        let (ch, noise) = scene(2);
        let n = ch.dim();
        let w = random_w(n, 2, 7);
        let rf = receive_filter(&w, &ch, &noise, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let bf = BeamformerSet {
            w_c: Array2::zeros((n, 0)),
            w_r: w.clone(),
            q: vec![],
        };
        for _ in 0..200 {
            let raw: CVec = Array1::from_shape_fn(n, |_| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let q = unit(raw);
            let val = sense_sinr(TxView::Beams(&bf), &q, &ch, &noise, 1).unwrap();
            assert!(val <= rf.sinr + 1e-9, "random filter beat the eigenvalue: {val} > {}", rf.sinr);
        }
    }

    #[test]
    fn sinr_monotone_in_transmit_scale() {
        let (ch, noise) = scene(2);
        let n = ch.dim();
        let w = random_w(n, 2, 3);
        let base = receive_filter_closed_form(&w, &ch, &noise, 1).unwrap();
        let scaled = receive_filter_closed_form(&w.mapv(|z| z * 2.0), &ch, &noise, 1).unwrap();
        assert!(scaled.sinr > base.sinr);
    }

    #[test]
    fn rejects_zero_noise_and_bad_index() {
        let (ch, noise) = scene(1);
        let n = ch.dim();
        let w = random_w(n, 1, 5);
        let zero_noise = NoiseModel { sigma_big_r_sq: 0.0, ..noise };
        assert_eq!(
            receive_filter_closed_form(&w, &ch, &zero_noise, 1).unwrap_err(),
            RxError::NonPositiveNoise(0.0)
        );
        assert_eq!(
            receive_filter(&w, &ch, &noise, 2).unwrap_err(),
            RxError::TargetIndexOutOfRange(2, 1)
        );
    }
}
