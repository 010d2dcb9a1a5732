//! Homogeneous self-dual interior-point core.
//!
//! Solves the real standard form
//!
//! ```text
//!   min ⟨C, X⟩   s.t.   ⟨A_i, X⟩ = b_i  (i = 1..m),   X ∈ K,
//! ```
//!
//! where K is a product of dense symmetric PSD blocks and a nonnegative
//! orthant. The homogeneous embedding tracks (x, y, z, τ, κ); at convergence
//! τ ≫ κ yields an optimal primal-dual pair after rescaling by 1/τ, while
//! κ ≫ τ certifies primal or dual infeasibility via the Farkas ray.
//!
//! Directions use the HKM linearization of XZ = μI with Mehrotra
//! predictor-corrector. The Schur complement is m×m; constraint coefficients
//! carry low-rank or scaled-identity representations so assembly stays
//! O(m²·r·n²) instead of O(m·n³).

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, Solve, UPLO};

/// Coefficient of one matrix block inside a linear functional.
#[derive(Debug, Clone)]
pub(crate) enum Coeff {
    /// Dense symmetric coefficient.
    Dense(Array2<f64>),
    /// Σ_s weights[s]·vecs[:,s]·vecs[:,s]ᵀ.
    LowRank { vecs: Array2<f64>, weights: Array1<f64> },
    /// c·I.
    ScaledIdentity(f64),
}

impl Coeff {
    fn inner(&self, x: &Array2<f64>) -> f64 {
        match self {
            Coeff::Dense(a) => a.iter().zip(x.iter()).map(|(p, q)| p * q).sum(),
            Coeff::LowRank { vecs, weights } => {
                let mut acc = 0.0;
                for (s, &w) in weights.iter().enumerate() {
                    let u = vecs.column(s);
                    let xu = x.dot(&u);
                    acc += w * u.dot(&xu);
                }
                acc
            }
            Coeff::ScaledIdentity(c) => c * x.diag().sum(),
        }
    }

    /// y += scale·A (dense accumulation).
    pub(crate) fn add_into(&self, y: &mut Array2<f64>, scale: f64) {
        match self {
            Coeff::Dense(a) => y.scaled_add(scale, a),
            Coeff::LowRank { vecs, weights } => {
                let n = y.nrows();
                for (s, &w) in weights.iter().enumerate() {
                    let u = vecs.column(s);
                    let c = scale * w;
                    for i in 0..n {
                        let cu = c * u[i];
                        for j in 0..n {
                            y[[i, j]] += cu * u[j];
                        }
                    }
                }
            }
            Coeff::ScaledIdentity(c) => {
                let n = y.nrows();
                for i in 0..n {
                    y[[i, i]] += scale * c;
                }
            }
        }
    }

    /// q' A p for a symmetric coefficient.
    fn bilinear(&self, q: &Array1<f64>, p: &Array1<f64>) -> f64 {
        match self {
            Coeff::Dense(a) => q.dot(&a.dot(p)),
            Coeff::LowRank { vecs, weights } => {
                let uq = vecs.t().dot(q);
                let up = vecs.t().dot(p);
                weights
                    .iter()
                    .zip(uq.iter().zip(up.iter()))
                    .map(|(&w, (a, b))| w * a * b)
                    .sum()
            }
            Coeff::ScaledIdentity(c) => c * q.dot(p),
        }
    }

}

/// One linear functional over the cone space.
#[derive(Debug, Clone, Default)]
pub(crate) struct ConeRow {
    pub mat_terms: Vec<(usize, Coeff)>,
    pub lp_terms: Vec<(usize, f64)>,
}

impl ConeRow {
    fn value(&self, p: &ConePoint) -> f64 {
        let mats: f64 = self
            .mat_terms
            .iter()
            .map(|(b, coeff)| coeff.inner(&p.mats[*b]))
            .sum();
        let lps: f64 = self.lp_terms.iter().map(|(s, c)| c * p.lp[*s]).sum();
        mats + lps
    }
}

/// A point (or direction) in the cone space.
#[derive(Debug, Clone)]
pub(crate) struct ConePoint {
    pub mats: Vec<Array2<f64>>,
    pub lp: Array1<f64>,
}

impl ConePoint {
    pub(crate) fn zeros_like(form: &StdForm) -> Self {
        Self {
            mats: form.mat_dims.iter().map(|&n| Array2::zeros((n, n))).collect(),
            lp: Array1::zeros(form.lp_len),
        }
    }

    fn identity_like(form: &StdForm, scale: f64) -> Self {
        Self {
            mats: form
                .mat_dims
                .iter()
                .map(|&n| Array2::eye(n) * scale)
                .collect(),
            lp: Array1::from_elem(form.lp_len, scale),
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        let m: f64 = self
            .mats
            .iter()
            .zip(other.mats.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| p * q).sum::<f64>())
            .sum();
        m + self.lp.dot(&other.lp)
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.mats.iter_mut().zip(other.mats.iter()) {
            a.scaled_add(alpha, b);
        }
        self.lp.scaled_add(alpha, &other.lp);
    }

    fn scale(&mut self, alpha: f64) {
        for a in self.mats.iter_mut() {
            *a *= alpha;
        }
        self.lp *= alpha;
    }

    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }
}

/// Real standard-form problem handed to the IPM.
#[derive(Debug, Clone)]
pub(crate) struct StdForm {
    pub mat_dims: Vec<usize>,
    pub lp_len: usize,
    pub c: ConePoint,
    pub rows: Vec<ConeRow>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

#[derive(Debug)]
pub(crate) struct IpmOutcome {
    pub status: IpmStatus,
    /// Primal cone point rescaled by 1/τ (best iterate on MaxIter).
    pub x: ConePoint,
    pub dual_obj: f64,
    pub rel_primal_res: f64,
    pub rel_dual_res: f64,
    pub rel_gap: f64,
    pub iterations: usize,
}

struct BlockFactors {
    lx: Array2<f64>,
    lz_inv: Array2<f64>,
    z_inv: Array2<f64>,
    x_z_inv_trace: f64,
    /// X·Z⁻¹ formed only when some row has a dense coefficient on the block.
    xzinv: Option<Array2<f64>>,
}

/// Largest eigenvalue estimate by shifted power iteration; used for step
/// lengths where a few digits suffice (steps carry a safety factor and a
/// Cholesky verification).
fn max_eig_power(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // Gershgorin upper bound for the shift.
    let mut shift = 0.0f64;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| m[[i, j]].abs()).sum();
        shift = shift.max(row_sum);
    }
    if shift == 0.0 {
        return 0.0;
    }
    // Power iteration on shift·I + M (PSD), deterministic start.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.01 * (i as f64 + 1.0));
    let nv = v.dot(&v).sqrt();
    v /= nv;
    let mut lam = 0.0;
    for _ in 0..120 {
        let mut w = m.dot(&v);
        w.scaled_add(shift, &v);
        let nw = w.dot(&w).sqrt();
        if nw == 0.0 {
            return -shift;
        }
        w /= nw;
        let mw = m.dot(&w);
        let new_lam = w.dot(&mw);
        if (new_lam - lam).abs() <= 1e-6 * (1.0 + new_lam.abs()) {
            lam = new_lam;
            break;
        }
        lam = new_lam;
        v = w;
    }
    lam
}

/// Max step to the PSD boundary along dX given the Cholesky inverse of X.
fn max_step_psd(lx_inv: &Array2<f64>, dx: &Array2<f64>) -> f64 {
    let m = lx_inv.dot(dx).dot(&lx_inv.t());
    // λ_min(M) = −λ_max(−M)
    let lam_max_neg = max_eig_power(&m.mapv(|v| -v));
    if lam_max_neg <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / lam_max_neg
    }
}

fn max_step_lp(x: &Array1<f64>, dx: &Array1<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xi, di) in x.iter().zip(dx.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    alpha
}

fn tri_lower_inverse(l: &Array2<f64>) -> Array2<f64> {
    // Forward substitution against the identity, column by column.
    let n = l.nrows();
    let mut inv = Array2::zeros((n, n));
    for col in 0..n {
        inv[[col, col]] = 1.0 / l[[col, col]];
        for i in (col + 1)..n {
            let mut s = 0.0;
            for k in col..i {
                s += l[[i, k]] * inv[[k, col]];
            }
            inv[[i, col]] = -s / l[[i, i]];
        }
    }
    inv
}

fn sym(m: &Array2<f64>) -> Array2<f64> {
    (m + &m.t()) * 0.5
}

struct Direction {
    dx: ConePoint,
    dy: Vec<f64>,
    dz: ConePoint,
    dtau: f64,
    dkappa: f64,
}

pub(crate) fn solve_hsd(form: &StdForm, tol: f64, max_iter: usize) -> IpmOutcome {
    crate::configure_blas_single_thread();
    let m = form.rows.len();
    let nu: f64 = form.mat_dims.iter().sum::<usize>() as f64 + form.lp_len as f64;
    let b = Array1::from_vec(form.b.clone());
    let norm_b = 1.0 + b.dot(&b).sqrt();
    let norm_c = 1.0 + form.c.norm();

    let mut x = ConePoint::identity_like(form, 1.0);
    let mut z = ConePoint::identity_like(form, 1.0);
    let mut y = vec![0.0f64; m];
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let dense_per_block: Vec<bool> = (0..form.mat_dims.len())
        .map(|bidx| {
            form.rows
                .iter()
                .flat_map(|r| r.mat_terms.iter())
                .chain(std::iter::empty())
                .any(|(bi, c)| *bi == bidx && matches!(c, Coeff::Dense(_)))
                || matches!(
                    form.c.mats.get(bidx),
                    Some(cm) if cm.iter().any(|v| *v != 0.0)
                )
        })
        .collect();

    let mut best: Option<(f64, IpmOutcome)> = None;
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter;
        // Residuals of the homogeneous system.
        let ax: Vec<f64> = form.rows.iter().map(|r| r.value(&x)).collect();
        let mut r_p = Array1::from_vec(ax.clone());
        r_p.scaled_add(-tau, &b);
        let cx = form.c.dot(&x);
        let by: f64 = b.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
        // r_d = −Aᵀy + cτ − z
        let mut r_d = ConePoint::zeros_like(form);
        apply_adjoint(form, &y, &mut r_d, -1.0);
        r_d.axpy(tau, &form.c);
        r_d.axpy(-1.0, &z);
        let r_g = by - cx - kappa;

        let mu = (x.dot(&z) + tau * kappa) / (nu + 1.0);

        // Convergence metrics on the rescaled candidate.
        let pobj = cx / tau;
        let dobj = by / tau;
        let rel_p = r_p.iter().map(|v| v.abs()).fold(0.0, f64::max) / (tau * norm_b);
        let rel_d = r_d.norm() / (tau * norm_c);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let score = rel_p.max(rel_d).max(rel_gap);

        let make_outcome = |status: IpmStatus| -> IpmOutcome {
            let mut xs = x.clone();
            xs.scale(1.0 / tau);
            IpmOutcome {
                status,
                x: xs,
                dual_obj: dobj,
                rel_primal_res: rel_p,
                rel_dual_res: rel_d,
                rel_gap,
                iterations: iter,
            }
        };

        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, make_outcome(IpmStatus::MaxIter)));
        }

        if rel_p <= tol && rel_d <= tol && rel_gap <= tol {
            return make_outcome(IpmStatus::Optimal);
        }

        // Infeasibility detection: the homogeneous ray shrinks τ while κ
        // stays bounded away from zero.
        if tau <= 1e-10 * kappa.max(1.0) || (mu <= 1e-12 && tau <= 1e-6 * kappa) {
            let ray_p: f64 = by;
            let ray_d: f64 = cx;
            if ray_p > tol * (1.0 + ray_d.abs()) {
                return make_outcome(IpmStatus::PrimalInfeasible);
            }
            if ray_d < -tol * (1.0 + ray_p.abs()) {
                return make_outcome(IpmStatus::DualInfeasible);
            }
            return best.take().map(|(_, o)| o).unwrap();
        }

        // Per-block factorizations.
        let factors: Option<Vec<BlockFactors>> = x
            .mats
            .iter()
            .zip(z.mats.iter())
            .enumerate()
            .map(|(bi, (xb, zb))| {
                let lx = xb.cholesky(UPLO::Lower).ok()?;
                let lz = zb.cholesky(UPLO::Lower).ok()?;
                let lz_inv = tri_lower_inverse(&lz);
                let z_inv = lz_inv.t().dot(&lz_inv);
                let x_z_inv_trace = xb.iter().zip(z_inv.iter()).map(|(p, q)| p * q).sum();
                let xzinv = if dense_per_block[bi] {
                    Some(xb.dot(&z_inv))
                } else {
                    None
                };
                Some(BlockFactors {
                    lx,
                    lz_inv,
                    z_inv,
                    x_z_inv_trace,
                    xzinv,
                })
            })
            .collect();
        let factors = match factors {
            Some(f) => f,
            None => return best.take().map(|(_, o)| o).unwrap(),
        };
        let lx_invs: Vec<Array2<f64>> = factors.iter().map(|f| tri_lower_inverse(&f.lx)).collect();

        // Schur system shared by predictor and corrector.
        let schur = build_schur(form, &x, &z, &factors);
        let u_vec = apply_rows_to_point(form, &pc_of(form, &form.c, &x, &z, &factors));
        let w_cc = form.c.dot(&pc_of(form, &form.c, &x, &z, &factors));

        let solve_dir = |sigma_mu: f64,
                         corr: Option<(&Direction, f64)>|
         -> Option<Direction> {
            // D = sym(σμ·Z⁻¹ − X − Corr·Z⁻¹) per block; LP analog.
            let mut d = ConePoint::zeros_like(form);
            for (bi, db) in d.mats.iter_mut().enumerate() {
                let mut t = factors[bi].z_inv.clone() * sigma_mu;
                t -= &x.mats[bi];
                if let Some((aff, _)) = corr {
                    let prod = aff.dx.mats[bi].dot(&aff.dz.mats[bi]);
                    t -= &prod.dot(&factors[bi].z_inv);
                }
                *db = sym(&t);
            }
            for s in 0..form.lp_len {
                let mut v = sigma_mu / z.lp[s] - x.lp[s];
                if let Some((aff, _)) = corr {
                    v -= aff.dx.lp[s] * aff.dz.lp[s] / z.lp[s];
                }
                d.lp[s] = v;
            }
            let corr_tk = corr.map_or(0.0, |(aff, _)| aff.dtau * aff.dkappa);

            let a_d = apply_rows_to_point(form, &d);
            let a_p_rd = apply_rows_to_point(form, &pc_of(form, &r_d, &x, &z, &factors));
            // rhs1 = −r_p − A(D) + A(P(r_d))
            let mut rhs1 = Array1::zeros(m);
            for i in 0..m {
                rhs1[i] = -r_p[i] - a_d[i] + a_p_rd[i];
            }
            let c_d = form.c.dot(&d);
            let c_p_rd = form.c.dot(&pc_of(form, &r_d, &x, &z, &factors));
            let rhs2 = -r_g + c_d - c_p_rd + (sigma_mu - tau * kappa - corr_tk) / tau;

            // (m+1)×(m+1) system.
            let mut big = Array2::zeros((m + 1, m + 1));
            big.slice_mut(ndarray::s![..m, ..m]).assign(&schur);
            for i in 0..m {
                big[[i, m]] = -(u_vec[i] + b[i]);
                big[[m, i]] = b[i] - u_vec[i];
            }
            big[[m, m]] = w_cc + kappa / tau;
            let mut rhs = Array1::zeros(m + 1);
            rhs.slice_mut(ndarray::s![..m]).assign(&rhs1);
            rhs[m] = rhs2;
            let sol = big.solve(&rhs).ok()?;
            let dy: Vec<f64> = sol.iter().take(m).cloned().collect();
            let dtau = sol[m];

            // Δz = −AᵀΔy + cΔτ + r_d
            let mut dz = ConePoint::zeros_like(form);
            apply_adjoint(form, &dy, &mut dz, -1.0);
            dz.axpy(dtau, &form.c);
            dz.axpy(1.0, &r_d);
            // ΔX = D − P(Δz)
            let mut dx = d;
            let p_dz = pc_of(form, &dz, &x, &z, &factors);
            dx.axpy(-1.0, &p_dz);
            let dkappa = (sigma_mu - tau * kappa - corr_tk) / tau - (kappa / tau) * dtau;
            Some(Direction { dx, dy, dz, dtau, dkappa })
        };

        let max_step = |dir: &Direction| -> f64 {
            let mut alpha = f64::INFINITY;
            for (bi, lxi) in lx_invs.iter().enumerate() {
                alpha = alpha.min(max_step_psd(lxi, &dir.dx.mats[bi]));
                alpha = alpha.min(max_step_psd(&factors[bi].lz_inv, &dir.dz.mats[bi]));
            }
            alpha = alpha.min(max_step_lp(&x.lp, &dir.dx.lp));
            alpha = alpha.min(max_step_lp(&z.lp, &dir.dz.lp));
            if dir.dtau < 0.0 {
                alpha = alpha.min(-tau / dir.dtau);
            }
            if dir.dkappa < 0.0 {
                alpha = alpha.min(-kappa / dir.dkappa);
            }
            alpha
        };

        // Predictor.
        let aff = match solve_dir(0.0, None) {
            Some(d) => d,
            None => return best.take().map(|(_, o)| o).unwrap(),
        };
        let alpha_aff = max_step(&aff).min(1.0);
        let mu_aff = {
            let mut xa = x.clone();
            xa.axpy(alpha_aff, &aff.dx);
            let mut za = z.clone();
            za.axpy(alpha_aff, &aff.dz);
            (xa.dot(&za) + (tau + alpha_aff * aff.dtau) * (kappa + alpha_aff * aff.dkappa))
                / (nu + 1.0)
        };
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-6, 0.9);

        // Corrector.
        let dir = match solve_dir(sigma * mu, Some((&aff, sigma))) {
            Some(d) => d,
            None => return best.take().map(|(_, o)| o).unwrap(),
        };
        let mut alpha = (0.99 * max_step(&dir)).min(1.0);

        // Cholesky verification with backoff; the power-iteration step bound
        // is an estimate.
        let mut accepted = false;
        for _ in 0..40 {
            let ok = {
                let mut fine = tau + alpha * dir.dtau > 0.0 && kappa + alpha * dir.dkappa > 0.0;
                if fine {
                    for s in 0..form.lp_len {
                        if x.lp[s] + alpha * dir.dx.lp[s] <= 0.0
                            || z.lp[s] + alpha * dir.dz.lp[s] <= 0.0
                        {
                            fine = false;
                            break;
                        }
                    }
                }
                if fine {
                    for bi in 0..form.mat_dims.len() {
                        let mut xn = x.mats[bi].clone();
                        xn.scaled_add(alpha, &dir.dx.mats[bi]);
                        let mut zn = z.mats[bi].clone();
                        zn.scaled_add(alpha, &dir.dz.mats[bi]);
                        if xn.cholesky(UPLO::Lower).is_err() || zn.cholesky(UPLO::Lower).is_err() {
                            fine = false;
                            break;
                        }
                    }
                }
                fine
            };
            if ok {
                accepted = true;
                break;
            }
            alpha *= 0.8;
        }
        if !accepted || alpha < 1e-14 {
            return best.take().map(|(_, o)| o).unwrap();
        }

        x.axpy(alpha, &dir.dx);
        z.axpy(alpha, &dir.dz);
        for (yi, di) in y.iter_mut().zip(dir.dy.iter()) {
            *yi += alpha * di;
        }
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
    }

    let mut out = best.take().map(|(_, o)| o).unwrap();
    out.status = IpmStatus::MaxIter;
    out.iterations = iterations + 1;
    out
}

/// y_out += scale·Σ_i y_i A_i (dense accumulation over all rows).
fn apply_adjoint(form: &StdForm, y: &[f64], out: &mut ConePoint, scale: f64) {
    for (row, &yi) in form.rows.iter().zip(y.iter()) {
        if yi == 0.0 {
            continue;
        }
        for (bi, coeff) in &row.mat_terms {
            coeff.add_into(&mut out.mats[*bi], scale * yi);
        }
        for (s, c) in &row.lp_terms {
            out.lp[*s] += scale * yi * c;
        }
    }
}

/// Apply every row functional to a cone point.
fn apply_rows_to_point(form: &StdForm, p: &ConePoint) -> Array1<f64> {
    Array1::from_iter(form.rows.iter().map(|r| r.value(p)))
}

/// P(U) = sym(X U Z⁻¹) per matrix block; x·u/z on LP slots.
fn pc_of(
    form: &StdForm,
    u: &ConePoint,
    x: &ConePoint,
    z: &ConePoint,
    factors: &[BlockFactors],
) -> ConePoint {
    let mut out = ConePoint::zeros_like(form);
    for (bi, ub) in u.mats.iter().enumerate() {
        if ub.iter().all(|v| *v == 0.0) {
            continue;
        }
        let t = x.mats[bi].dot(ub).dot(&factors[bi].z_inv);
        out.mats[bi] = sym(&t);
    }
    for s in 0..form.lp_len {
        out.lp[s] = x.lp[s] * u.lp[s] / z.lp[s];
    }
    out
}

/// Cached X·U and Z⁻¹·U columns for one low-rank coefficient.
struct LowRankCache {
    p: Array2<f64>,
    q: Array2<f64>,
}

/// Schur matrix S_ij = ⟨A_i, P(A_j)⟩, exploiting low-rank coefficients.
fn build_schur(
    form: &StdForm,
    x: &ConePoint,
    z: &ConePoint,
    factors: &[BlockFactors],
) -> Array2<f64> {
    let m = form.rows.len();
    let nblocks = form.mat_dims.len();
    let mut schur = Array2::zeros((m, m));

    // caches[row][block] for low-rank coefficients.
    let caches: Vec<Vec<Option<LowRankCache>>> = form
        .rows
        .iter()
        .map(|row| {
            let mut per_block: Vec<Option<LowRankCache>> = (0..nblocks).map(|_| None).collect();
            for (bi, coeff) in &row.mat_terms {
                if let Coeff::LowRank { vecs, .. } = coeff {
                    per_block[*bi] = Some(LowRankCache {
                        p: x.mats[*bi].dot(vecs),
                        q: factors[*bi].z_inv.dot(vecs),
                    });
                }
            }
            per_block
        })
        .collect();

    for j in 0..m {
        for i in 0..m {
            let mut acc = 0.0;
            for (bj, cj) in &form.rows[j].mat_terms {
                let Some((_, ci)) = form.rows[i].mat_terms.iter().find(|(bi, _)| bi == bj)
                else {
                    continue;
                };
                acc += schur_block_entry(
                    ci,
                    cj,
                    *bj,
                    x,
                    &factors[*bj],
                    &caches[j][*bj],
                    &caches[i][*bj],
                );
            }
            for (sj, cj) in &form.rows[j].lp_terms {
                if let Some((_, ci)) = form.rows[i].lp_terms.iter().find(|(si, _)| si == sj) {
                    acc += ci * cj * x.lp[*sj] / z.lp[*sj];
                }
            }
            schur[[i, j]] = acc;
        }
    }
    // The exact operator is symmetric; enforce it against round-off.
    sym(&schur)
}

/// ⟨A_i, sym(X A_j Z⁻¹)⟩ for one shared block.
fn schur_block_entry(
    ci: &Coeff,
    cj: &Coeff,
    block: usize,
    x: &ConePoint,
    f: &BlockFactors,
    cache_j: &Option<LowRankCache>,
    cache_i: &Option<LowRankCache>,
) -> f64 {
    match (cj, cache_j) {
        (Coeff::LowRank { weights, .. }, Some(c)) => {
            // Σ_s w_s·(Z⁻¹u_s)ᵀ A_i (X u_s); A_i symmetric makes the two
            // halves of the symmetrized operator equal.
            let mut acc = 0.0;
            for (s, &w) in weights.iter().enumerate() {
                let pq = c.p.column(s).to_owned();
                let qq = c.q.column(s).to_owned();
                acc += w * ci.bilinear(&qq, &pq);
            }
            acc
        }
        (Coeff::ScaledIdentity(cj_scale), _) => match (ci, cache_i) {
            (Coeff::LowRank { weights, .. }, Some(c)) => {
                let mut acc = 0.0;
                for (s, &w) in weights.iter().enumerate() {
                    acc += w * c.p.column(s).dot(&c.q.column(s));
                }
                cj_scale * acc
            }
            (Coeff::ScaledIdentity(ci_scale), _) => ci_scale * cj_scale * f.x_z_inv_trace,
            (Coeff::Dense(a), _) => {
                let xz = f
                    .xzinv
                    .clone()
                    .unwrap_or_else(|| x.mats[block].dot(&f.z_inv));
                cj_scale * a.iter().zip(sym(&xz).iter()).map(|(p, q)| p * q).sum::<f64>()
            }
            _ => unreachable!("low-rank coefficient without cache"),
        },
        (Coeff::Dense(aj), _) => {
            let t = x.mats[block].dot(aj).dot(&f.z_inv);
            ci.inner(&sym(&t))
        }
        _ => unreachable!("low-rank coefficient without cache"),
    }
}
