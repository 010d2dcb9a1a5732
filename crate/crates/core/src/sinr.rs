//! Communication and sensing SINR evaluation.
//!
//! Both SINRs are available in beamformer form (from W and the receive
//! filters) and covariance form (from R and the per-user R_k); the two routes
//! agree to floating-point accuracy and are cross-checked in tests. All
//! values are linear; dB conversion happens only at the reporting layer.

use ndarray::Array2;
use thiserror::Error;

use crate::aperture::ApertureSpec;
use crate::channel::{conj_transpose, ChannelSet};
use crate::{C64, CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum SinrError {
    #[error("user index {0} out of range (K = {1})")]
    UserIndexOutOfRange(usize, usize),
    #[error("target index {0} out of range (M = {1})")]
    TargetIndexOutOfRange(usize, usize),
    #[error("noise power must be positive for SINR evaluation, got {0}")]
    InvalidNoise(f64),
    #[error("receive filter must have unit norm, got {0}")]
    NonUnitFilter(f64),
    #[error("dimension mismatch: channel dim {0}, operand dim {1}")]
    DimensionMismatch(usize, usize),
}

/// Noise powers of the scene. `sigma_big_r_sq` is the equivalent sensing
/// noise σ_r²/(κ²Z0²) that appears in the discrete-domain SINR denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Raw user noise power σ_c².
    pub sigma_c_sq: f64,
    /// Raw receive-surface noise power σ_r².
    pub sigma_r_sq: f64,
    /// Equivalent sensing noise σ_R² = σ_r²/(κ²Z0²).
    pub sigma_big_r_sq: f64,
    /// Equivalent user noise σ_c²/(κ²Z0²).
    pub sigma_c_eff: f64,
}

impl NoiseModel {
    /// Build from raw noise powers and the aperture's κ, Z0.
    pub fn from_raw(sigma_c_sq: f64, sigma_r_sq: f64, ap: &ApertureSpec) -> Self {
        let k2z2 = (ap.kappa * ap.z0).powi(2);
        Self {
            sigma_c_sq,
            sigma_r_sq,
            sigma_big_r_sq: sigma_r_sq / k2z2,
            sigma_c_eff: sigma_c_sq / k2z2,
        }
    }

    /// Build from the equivalent (discrete-domain) noise levels.
    pub fn from_effective(sigma_c_eff: f64, sigma_big_r_sq: f64, kappa: f64, z0: f64) -> Self {
        let k2z2 = (kappa * z0).powi(2);
        Self {
            sigma_c_sq: sigma_c_eff * k2z2,
            sigma_r_sq: sigma_big_r_sq * k2z2,
            sigma_big_r_sq,
            sigma_c_eff,
        }
    }

    /// Internal consistency of raw and equivalent levels.
    pub fn is_consistent(&self, kappa: f64, z0: f64) -> bool {
        let k2z2 = (kappa * z0).powi(2);
        let ok = |raw: f64, eff: f64| {
            let expect = raw / k2z2;
            (expect - eff).abs() <= 1e-12 * expect.abs().max(eff.abs()).max(f64::MIN_POSITIVE)
        };
        ok(self.sigma_r_sq, self.sigma_big_r_sq) && ok(self.sigma_c_sq, self.sigma_c_eff)
    }
}

/// Total and per-user transmit covariances.
#[derive(Debug, Clone)]
pub struct CovariancePack {
    /// Total transmit covariance R, Hermitian PSD.
    pub total: CMat,
    /// Per-user covariances R_1..R_K.
    pub per_user: Vec<CMat>,
}

impl CovariancePack {
    pub fn dim(&self) -> usize {
        self.total.nrows()
    }

    /// Residual R − Σ_k R_k.
    pub fn sensing_residual(&self) -> CMat {
        let mut res = self.total.clone();
        for rk in &self.per_user {
            res -= rk;
        }
        res
    }

    /// Check the PSD/order/trace invariants within the stated tolerances.
    pub fn validate(&self, power_budget: f64) -> Result<(), String> {
        use ndarray_linalg::{Eigh, UPLO};
        let tr: f64 = self.total.diag().iter().map(|z| z.re).sum();
        if tr > power_budget + 1e-8 * power_budget.max(1.0) {
            return Err(format!("tr(R) = {tr} exceeds budget {power_budget}"));
        }
        let tol = 1e-8 * tr.abs().max(1e-300);
        let min_eig = |m: &CMat| -> f64 {
            let (vals, _) = m.eigh(UPLO::Lower).expect("eigh");
            vals.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        if min_eig(&self.total) < -tol {
            return Err("R not PSD".into());
        }
        for (k, rk) in self.per_user.iter().enumerate() {
            if min_eig(rk) < -tol {
                return Err(format!("R_{} not PSD", k + 1));
            }
        }
        if min_eig(&self.sensing_residual()) < -tol {
            return Err("R - sum(R_k) not PSD".into());
        }
        Ok(())
    }
}

/// Transmit matrix split into communication and sensing columns, plus the
/// per-target receive filters.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    /// Communication beamformers, one column per user (N×K).
    pub w_c: CMat,
    /// Sensing beamformers; column count equals the numerical rank of the
    /// sensing residual covariance.
    pub w_r: CMat,
    /// Unit-norm receive filters, one per target.
    pub q: Vec<CVec>,
}

impl BeamformerSet {
    /// Concatenated transmit matrix [W_c | W_r].
    pub fn w(&self) -> CMat {
        let n = self.w_c.nrows();
        let cols = self.w_c.ncols() + self.w_r.ncols();
        let mut w = Array2::zeros((n, cols));
        w.slice_mut(ndarray::s![.., ..self.w_c.ncols()]).assign(&self.w_c);
        w.slice_mut(ndarray::s![.., self.w_c.ncols()..]).assign(&self.w_r);
        w
    }

    /// Total transmit power ‖W‖_F².
    pub fn power(&self) -> f64 {
        self.w_c.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + self.w_r.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn validate(&self, power_budget: f64) -> Result<(), String> {
        if self.power() > power_budget + 1e-9 * power_budget.max(1.0) {
            return Err(format!("|W|_F^2 = {} exceeds budget {power_budget}", self.power()));
        }
        for (l, q) in self.q.iter().enumerate() {
            let norm = q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(format!("receive filter {} has norm {norm}", l + 1));
            }
        }
        Ok(())
    }
}

/// Transmit design handed to the SINR evaluators: either the covariance pack
/// or explicit beamformers.
#[derive(Debug, Clone, Copy)]
pub enum TxView<'a> {
    Cov(&'a CovariancePack),
    Beams(&'a BeamformerSet),
}

pub(crate) fn inner(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Real quadratic form vᴴ M v (M Hermitian).
pub(crate) fn quad_form(m: &CMat, v: &CVec) -> f64 {
    let mv = m.dot(v);
    inner(v, &mv).re
}

fn check_dim(ch: &ChannelSet, dim: usize) -> Result<(), SinrError> {
    if ch.dim() != dim {
        return Err(SinrError::DimensionMismatch(ch.dim(), dim));
    }
    Ok(())
}

/// Communication SINR of user k (1-based), linear scale:
/// f_kᴴ R_k f_k / (f_kᴴ (R − R_k) f_k + σ_c²/(κ²Z0²)).
pub fn comm_sinr(
    tx: TxView<'_>,
    channel: &ChannelSet,
    noise: &NoiseModel,
    k: usize,
) -> Result<f64, SinrError> {
    let kk = channel.num_users();
    if k == 0 || k > kk {
        return Err(SinrError::UserIndexOutOfRange(k, kk));
    }
    if noise.sigma_c_eff <= 0.0 {
        return Err(SinrError::InvalidNoise(noise.sigma_c_eff));
    }
    let f = &channel.user_vectors[k - 1];
    let (signal, total) = match tx {
        TxView::Cov(pack) => {
            check_dim(channel, pack.dim())?;
            (quad_form(&pack.per_user[k - 1], f), quad_form(&pack.total, f))
        }
        TxView::Beams(bf) => {
            check_dim(channel, bf.w_c.nrows())?;
            let wk = bf.w_c.column(k - 1).to_owned();
            let sig = inner(f, &wk).norm_sqr();
            let mut tot = sig;
            for i in 0..bf.w_c.ncols() {
                if i != k - 1 {
                    tot += inner(f, &bf.w_c.column(i).to_owned()).norm_sqr();
                }
            }
            for i in 0..bf.w_r.ncols() {
                tot += inner(f, &bf.w_r.column(i).to_owned()).norm_sqr();
            }
            (sig, tot)
        }
    };
    let denom = (total - signal).max(0.0) + noise.sigma_c_eff;
    Ok(signal / denom)
}

/// Sensing SINR w.r.t. target l (1-based) for a given unit-norm receive
/// filter, linear scale:
/// q_lᴴ G_l R G_lᴴ q_l / (q_lᴴ(Σ_m G_m R G_mᴴ − G_l R G_lᴴ)q_l + σ_r²/(κ²Z0²)).
pub fn sense_sinr(
    tx: TxView<'_>,
    q_l: &CVec,
    channel: &ChannelSet,
    noise: &NoiseModel,
    l: usize,
) -> Result<f64, SinrError> {
    let m = channel.num_targets();
    if l == 0 || l > m {
        return Err(SinrError::TargetIndexOutOfRange(l, m));
    }
    if noise.sigma_big_r_sq <= 0.0 {
        return Err(SinrError::InvalidNoise(noise.sigma_big_r_sq));
    }
    let norm = q_l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SinrError::NonUnitFilter(norm));
    }
    // G_m = g_m g_mᴴ is rank one, so qᴴ G_m R G_mᴴ q = |qᴴg_m|²·(g_mᴴ R g_m).
    let echo_power = |g: &CVec| -> Result<f64, SinrError> {
        let gain = inner(q_l, g).norm_sqr();
        let illum = match tx {
            TxView::Cov(pack) => {
                check_dim(channel, pack.dim())?;
                quad_form(&pack.total, g)
            }
            TxView::Beams(bf) => {
                check_dim(channel, bf.w_c.nrows())?;
                let mut acc = 0.0;
                for i in 0..bf.w_c.ncols() {
                    acc += inner(g, &bf.w_c.column(i).to_owned()).norm_sqr();
                }
                for i in 0..bf.w_r.ncols() {
                    acc += inner(g, &bf.w_r.column(i).to_owned()).norm_sqr();
                }
                acc
            }
        };
        Ok(gain * illum)
    };
    let signal = echo_power(&channel.target_vectors[l - 1])?;
    let mut clutter = 0.0;
    for (idx, g) in channel.target_vectors.iter().enumerate() {
        if idx != l - 1 {
            clutter += echo_power(g)?;
        }
    }
    Ok(signal / (clutter + noise.sigma_big_r_sq))
}

/// Hermitize a nearly Hermitian matrix (averages M with Mᴴ).
pub(crate) fn hermitize(m: &CMat) -> CMat {
    let mh = conj_transpose(m);
    (m + &mh).mapv(|z| z * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{truncation_grid, FarFieldPoint};
    use crate::channel::outer_product;
    use approx::assert_relative_eq;
    use ndarray::Array1;

    fn small_setup() -> (ApertureSpec, ChannelSet, NoiseModel) {
        let ap = ApertureSpec::new(0.125, 0.125, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        let theta = 30f64.to_radians();
        let users = [FarFieldPoint::new(1.0, theta, std::f64::consts::PI).unwrap()];
        let targets = [FarFieldPoint::new(1.0, theta, std::f64::consts::FRAC_PI_2).unwrap()];
        let ch = ChannelSet::synthesize(&ap, &grid, &users, &targets).unwrap();
        let noise = NoiseModel::from_effective(1e-3, 1e-3, ap.kappa, ap.z0);
        (ap, ch, noise)
    }

    #[test]
    fn matched_single_user_sinr() {
        let (_, ch, noise) = small_setup();
        let f = ch.user_vectors[0].clone();
        let nf: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        let p_t = 2.0;
        let w = f.mapv(|z| z * C64::new((p_t / nf).sqrt(), 0.0));
        let n = f.len();
        let bf = BeamformerSet {
            w_c: w.into_shape_with_order((n, 1)).unwrap(),
            w_r: Array2::zeros((n, 0)),
            q: vec![],
        };
        let sinr = comm_sinr(TxView::Beams(&bf), &ch, &noise, 1).unwrap();
        assert_relative_eq!(sinr, p_t * nf / noise.sigma_c_eff, max_relative = 1e-12);
    }

    #[test]
    fn zero_user_covariance_gives_zero_sinr() {
        let (_, ch, noise) = small_setup();
        let n = ch.dim();
        let pack = CovariancePack {
            total: Array2::eye(n).mapv(|x: f64| C64::new(x, 0.0)),
            per_user: vec![Array2::zeros((n, n))],
        };
        let sinr = comm_sinr(TxView::Cov(&pack), &ch, &noise, 1).unwrap();
        assert_eq!(sinr, 0.0);
    }

    #[test]
    fn orthogonal_users_keep_single_user_sinr() {
        // Users at ψ = 180° and 270° on the θ=30° ring of a 4λ aperture land
        // on distinct lattice orders, hence exactly orthogonal channels.
        let ap = ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        let theta = 30f64.to_radians();
        let users = [
            FarFieldPoint::new(1.0, theta, std::f64::consts::PI).unwrap(),
            FarFieldPoint::new(1.0, theta, 1.5 * std::f64::consts::PI).unwrap(),
        ];
        let targets = [FarFieldPoint::new(1.0, theta, std::f64::consts::FRAC_PI_2).unwrap()];
        let ch = ChannelSet::synthesize(&ap, &grid, &users, &targets).unwrap();
        let noise = NoiseModel::from_effective(1e-4, 1e-4, ap.kappa, ap.z0);
        let cross = inner(&ch.user_vectors[0], &ch.user_vectors[1]).norm();
        assert!(cross < 1e-15);

        let n = ch.dim();
        let p_each = 1.5;
        let mut w_c = Array2::zeros((n, 2));
        for (k, f) in ch.user_vectors.iter().enumerate() {
            let nf: f64 = f.iter().map(|z| z.norm_sqr()).sum();
            let col = f.mapv(|z| z * C64::new((p_each / nf).sqrt(), 0.0));
            w_c.column_mut(k).assign(&col);
        }
        let bf = BeamformerSet { w_c, w_r: Array2::zeros((n, 0)), q: vec![] };
        for k in 1..=2 {
            let nf: f64 = ch.user_vectors[k - 1].iter().map(|z| z.norm_sqr()).sum();
            let sinr = comm_sinr(TxView::Beams(&bf), &ch, &noise, k).unwrap();
            assert_relative_eq!(sinr, p_each * nf / noise.sigma_c_eff, max_relative = 1e-10);
        }
    }

    #[test]
    fn single_target_matched_sense_sinr() {
        let (_, ch, noise) = small_setup();
        let g = ch.target_vectors[0].clone();
        let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        let n = g.len();
        let p_t = 3.0;
        let w = g.mapv(|z| z * C64::new((p_t / ng).sqrt(), 0.0));
        let bf = BeamformerSet {
            w_c: Array2::zeros((n, 0)),
            w_r: w.into_shape_with_order((n, 1)).unwrap(),
            q: vec![],
        };
        let q = g.mapv(|z| z / C64::new(ng.sqrt(), 0.0));
        let sinr = sense_sinr(TxView::Beams(&bf), &q, &ch, &noise, 1).unwrap();
        // |qᴴg|²(gᴴRg)/σ_R² with R = p_t·ggᴴ/‖g‖² equals p_t‖g‖⁴/σ_R².
        assert_relative_eq!(sinr, p_t * ng * ng / noise.sigma_big_r_sq, max_relative = 1e-10);
    }

    #[test]
    fn zero_covariance_zero_sense_sinr() {
        let (_, ch, noise) = small_setup();
        let n = ch.dim();
        let pack = CovariancePack { total: Array2::zeros((n, n)), per_user: vec![] };
        let g = ch.target_vectors[0].clone();
        let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        let q = g.mapv(|z| z / C64::new(ng.sqrt(), 0.0));
        assert_eq!(sense_sinr(TxView::Cov(&pack), &q, &ch, &noise, 1).unwrap(), 0.0);
    }

    #[test]
    fn matched_transmit_starves_other_target() {
        let ap = ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        let theta = 30f64.to_radians();
        let targets = [
            FarFieldPoint::new(1.0, theta, std::f64::consts::FRAC_PI_2).unwrap(),
            FarFieldPoint::new(1.0, theta, std::f64::consts::FRAC_PI_4).unwrap(),
        ];
        let ch = ChannelSet::synthesize(&ap, &grid, &[], &targets).unwrap();
        let noise = NoiseModel::from_effective(1e-6, 1e-6, ap.kappa, ap.z0);
        let g1 = ch.target_vectors[0].clone();
        let ng1: f64 = g1.iter().map(|z| z.norm_sqr()).sum();
        let pack = CovariancePack {
            total: outer_product(&g1).mapv(|z| z / ng1),
            per_user: vec![],
        };
        let q1 = g1.mapv(|z| z / C64::new(ng1.sqrt(), 0.0));
        let g2 = ch.target_vectors[1].clone();
        let ng2: f64 = g2.iter().map(|z| z.norm_sqr()).sum();
        let q2 = g2.mapv(|z| z / C64::new(ng2.sqrt(), 0.0));
        let s1 = sense_sinr(TxView::Cov(&pack), &q1, &ch, &noise, 1).unwrap();
        let s2 = sense_sinr(TxView::Cov(&pack), &q2, &ch, &noise, 2).unwrap();
        assert!(s2 / s1 < 0.1, "target 2 should be starved: {s2} vs {s1}");
    }

    #[test]
    fn form_equivalence_on_random_beams() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let (_, ch, noise) = small_setup();
        let n = ch.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draw = |rows: usize, cols: usize| -> CMat {
            Array2::from_shape_fn((rows, cols), |_| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
        };
        let w_c = draw(n, 1);
        let w_r = draw(n, 2);
        let bf = BeamformerSet { w_c: w_c.clone(), w_r, q: vec![] };
        let w = bf.w();
        let r = w.dot(&conj_transpose(&w));
        let rk = outer_product(&w_c.column(0).to_owned());
        let pack = CovariancePack { total: r, per_user: vec![rk] };
        let c1 = comm_sinr(TxView::Beams(&bf), &ch, &noise, 1).unwrap();
        let c2 = comm_sinr(TxView::Cov(&pack), &ch, &noise, 1).unwrap();
        assert_relative_eq!(c1, c2, max_relative = 1e-10);

        let g = ch.target_vectors[0].clone();
        let q = {
            let nq: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            g.mapv(|z| z / C64::new(nq.sqrt(), 0.0))
        };
        let s1 = sense_sinr(TxView::Beams(&bf), &q, &ch, &noise, 1).unwrap();
        let s2 = sense_sinr(TxView::Cov(&pack), &q, &ch, &noise, 1).unwrap();
        assert_relative_eq!(s1, s2, max_relative = 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (_, ch, noise) = small_setup();
        let n = ch.dim();
        let pack = CovariancePack {
            total: Array2::zeros((n, n)),
            per_user: vec![Array2::zeros((n, n))],
        };
        assert!(matches!(
            comm_sinr(TxView::Cov(&pack), &ch, &noise, 2),
            Err(SinrError::UserIndexOutOfRange(2, 1))
        ));
        let q = Array1::from_elem(n, C64::new(1.0, 0.0));
        assert!(matches!(
            sense_sinr(TxView::Cov(&pack), &q, &ch, &noise, 1),
            Err(SinrError::NonUnitFilter(_))
        ));
        let bad_noise = NoiseModel { sigma_c_eff: 0.0, ..noise };
        assert!(matches!(
            comm_sinr(TxView::Cov(&pack), &ch, &bad_noise, 1),
            Err(SinrError::InvalidNoise(_))
        ));
    }

    #[test]
    fn noise_monotonicity() {
        let (ap, ch, _) = small_setup();
        let g = ch.target_vectors[0].clone();
        let f = ch.user_vectors[0].clone();
        let n = ch.dim();
        let mut w_c = Array2::zeros((n, 1));
        let nf: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        w_c.column_mut(0).assign(&f.mapv(|z| z / C64::new(nf.sqrt(), 0.0)));
        let mut w_r = Array2::zeros((n, 1));
        let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        w_r.column_mut(0).assign(&g.mapv(|z| z / C64::new(ng.sqrt(), 0.0)));
        let bf = BeamformerSet { w_c, w_r, q: vec![] };
        let q = g.mapv(|z| z / C64::new(ng.sqrt(), 0.0));
        let mut prev_c = f64::INFINITY;
        let mut prev_s = f64::INFINITY;
        for sigma in [1e-5, 1e-4, 1e-3] {
            let noise = NoiseModel::from_effective(sigma, sigma, ap.kappa, ap.z0);
            let c = comm_sinr(TxView::Beams(&bf), &ch, &noise, 1).unwrap();
            let s = sense_sinr(TxView::Beams(&bf), &q, &ch, &noise, 1).unwrap();
            assert!(c < prev_c && s < prev_s);
            prev_c = c;
            prev_s = s;
        }
    }
}
