//! Transmit-side optimization: the SDR feasibility subproblem, the slack
//! indicator, adaptive bracketing, bisection, and beamformer reconstruction
//! from covariances.
//!
//! The max-min sensing problem at a fixed sensing level Γ_r reduces to a
//! feasibility check; its slack optimum t is nonincreasing in Γ_r and
//! certifies feasibility through its sign, so the optimal Γ_r is found by
//! bisection. Adaptive bracketing first shrinks the search interval to width
//! Γ_c by stepping from the interference-free power bound.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use thiserror::Error;

use crate::channel::{outer_product, ChannelSet};
use crate::conic::{
    solve_sdp, ConicError, HermitianCoeff, LinearFunctional, PsdCoupling, SdpProblem, SdpStatus,
};
use crate::sinr::{inner, quad_form, CovariancePack, NoiseModel};
use crate::{C64, CMat, CVec};

/// Consecutive fixed-stride probes before the bracketing stride starts
/// doubling. Keeps bracketing faithful to the fixed-step schedule near the
/// bound while guaranteeing a logarithmic probe count when the optimum is
/// far below it.
const LINEAR_PROBE_LIMIT: usize = 8;

#[derive(Debug, Error)]
pub enum TxError {
    #[error("receive filter count {0} does not match target count {1}")]
    FilterCountMismatch(usize, usize),
    #[error("receive filter {0} is not unit norm ({1})")]
    NonUnitFilter(usize, f64),
    #[error("{0} must be positive, got {1}")]
    BadParameter(&'static str, f64),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("solver stalled at gamma_r = {gamma_r:.6e} (residual score {score:.3e})")]
    SolverStall { gamma_r: f64, score: f64 },
    #[error("user constraint set infeasible at the configured gamma_c: {details}")]
    InfeasibleScenario { details: String },
    #[error("user {0} channel is degenerate: f^H R_k f = {1:.3e}")]
    DegenerateUser(usize, f64),
    #[error("sensing residual indefinite: min eigenvalue {0:.3e}")]
    IndefiniteResidual(f64),
}

/// Solver knobs threaded through every SDP call.
#[derive(Debug, Clone, Copy)]
pub struct TransmitOptions {
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
}

impl Default for TransmitOptions {
    fn default() -> Self {
        Self { sdp_tol: 1e-7, sdp_max_iter: 200 }
    }
}

/// One indicator evaluation: the probed sensing level, its slack optimum,
/// and the interior-point iterations spent.
#[derive(Debug, Clone, Copy)]
pub struct IndicatorSample {
    pub gamma_r: f64,
    pub t: f64,
    pub sdp_iterations: usize,
}

/// Bisection interval with the probe history that produced it.
#[derive(Debug, Clone)]
pub struct BisectionBracket {
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub history: Vec<IndicatorSample>,
}

impl BisectionBracket {
    pub fn width(&self) -> f64 {
        self.gamma_end - self.gamma_start
    }

    pub fn sdp_calls(&self) -> usize {
        self.history.len()
    }

    /// Probe history must show t nonincreasing in Γ_r (within solver slack).
    pub fn history_is_monotone(&self, slack: f64) -> bool {
        let mut sorted = self.history.clone();
        sorted.sort_by(|a, b| a.gamma_r.partial_cmp(&b.gamma_r).unwrap());
        sorted.windows(2).all(|w| w[1].t <= w[0].t + slack)
    }
}

/// Transmit solve output: the covariance pack at the final feasible level.
#[derive(Debug)]
pub struct TransmitSolve {
    pub pack: CovariancePack,
    pub gamma_r_star: f64,
    pub probes: Vec<IndicatorSample>,
}

fn check_filters(channel: &ChannelSet, q: &[CVec]) -> Result<(), TxError> {
    if q.len() != channel.num_targets() {
        return Err(TxError::FilterCountMismatch(q.len(), channel.num_targets()));
    }
    for (l, ql) in q.iter().enumerate() {
        let norm = ql.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(TxError::NonUnitFilter(l + 1, norm));
        }
    }
    Ok(())
}

/// Assemble the SDR feasibility subproblem at a fixed sensing level:
/// maximize the sensing slack t over (R, R_1..R_K) subject to the per-user
/// communication constraints, the PSD ordering R − ΣR_k ⪰ 0, and the power
/// budget.
pub fn build_subproblem(
    gamma_r: f64,
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
) -> Result<SdpProblem, TxError> {
    if gamma_r <= 0.0 {
        return Err(TxError::BadParameter("gamma_r", gamma_r));
    }
    if gamma_c <= 0.0 {
        return Err(TxError::BadParameter("gamma_c", gamma_c));
    }
    if p_t <= 0.0 {
        return Err(TxError::BadParameter("p_t", p_t));
    }
    check_filters(channel, q)?;
    let k_users = channel.num_users();
    let m_targets = channel.num_targets();
    let n = channel.dim();

    let mut inequalities = Vec::with_capacity(m_targets + k_users);
    // Sensing rows: (1 + Γ_r⁻¹)tr(U_ll R) − Σ_m tr(U_lm R) − σ_R² ≥ t with
    // U_lm = |g_mᴴ q_l|²·g_m g_mᴴ.
    let target_mat = {
        let mut vm = Array2::zeros((n, m_targets));
        for (m, g) in channel.target_vectors.iter().enumerate() {
            vm.column_mut(m).assign(g);
        }
        vm
    };
    for (l, ql) in q.iter().enumerate() {
        let weights: Vec<f64> = channel
            .target_vectors
            .iter()
            .enumerate()
            .map(|(m, g)| {
                let c = inner(g, ql).norm_sqr();
                if m == l {
                    c / gamma_r
                } else {
                    -c
                }
            })
            .collect();
        inequalities.push((
            LinearFunctional {
                terms: vec![(0, HermitianCoeff::Rank { vectors: target_mat.clone(), weights })],
                slack: -1.0,
            },
            noise.sigma_big_r_sq,
        ));
    }
    // User rows: (1 + Γ_c⁻¹)tr(F_k R_k) − tr(F_k R) ≥ σ_c²/(κ²Z0²).
    for (k, f) in channel.user_vectors.iter().enumerate() {
        let fv = f.clone().into_shape_with_order((n, 1)).expect("column");
        inequalities.push((
            LinearFunctional {
                terms: vec![
                    (
                        k + 1,
                        HermitianCoeff::Rank {
                            vectors: fv.clone(),
                            weights: vec![1.0 + 1.0 / gamma_c],
                        },
                    ),
                    (0, HermitianCoeff::Rank { vectors: fv, weights: vec![-1.0] }),
                ],
                slack: 0.0,
            },
            noise.sigma_c_eff,
        ));
    }

    let psd_couplings = if k_users > 0 {
        let mut coeffs = vec![(0usize, 1.0)];
        coeffs.extend((1..=k_users).map(|k| (k, -1.0)));
        vec![PsdCoupling { coeffs }]
    } else {
        vec![]
    };

    Ok(SdpProblem {
        block_dims: std::iter::repeat(n).take(k_users + 1).collect(),
        objective: LinearFunctional { terms: vec![], slack: 1.0 },
        inequalities,
        psd_couplings,
        trace_budget: Some((vec![0], p_t)),
    })
}

fn infeasible_details(channel: &ChannelSet, noise: &NoiseModel, p_t: f64, gamma_c: f64) -> String {
    let mut lines = vec![format!(
        "K = {} users at gamma_c = {:.3} linear, P_T = {:.3e}",
        channel.num_users(),
        gamma_c,
        p_t
    )];
    for (k, f) in channel.user_vectors.iter().enumerate() {
        let nf: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        let bound = p_t * nf / noise.sigma_c_eff;
        if bound < gamma_c {
            lines.push(format!(
                "user {}: interference-free SNR bound {:.3} below gamma_c",
                k + 1,
                bound
            ));
        }
    }
    lines.join("; ")
}

/// Solve the subproblem and report the slack optimum. Feasibility of the
/// probed Γ_r is equivalent to t ≥ 0 (within solver tolerance).
pub fn indicator_t(
    gamma_r: f64,
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
    opts: &TransmitOptions,
) -> Result<IndicatorSample, TxError> {
    let problem = build_subproblem(gamma_r, channel, q, noise, p_t, gamma_c)?;
    let sol = solve_sdp(&problem, opts.sdp_tol, opts.sdp_max_iter)?;
    match sol.status {
        SdpStatus::Optimal => Ok(IndicatorSample { gamma_r, t: sol.t, sdp_iterations: sol.iterations }),
        SdpStatus::Infeasible => Err(TxError::InfeasibleScenario {
            details: infeasible_details(channel, noise, p_t, gamma_c),
        }),
        SdpStatus::MaxIter => {
            let score = sol
                .residuals
                .primal
                .max(sol.residuals.dual)
                .max(sol.residuals.gap);
            if score <= opts.sdp_tol * 1e3 {
                log::warn!("indicator solve hit max iterations (score {score:.2e}), accepting");
                Ok(IndicatorSample { gamma_r, t: sol.t, sdp_iterations: sol.iterations })
            } else {
                Err(TxError::SolverStall { gamma_r, score })
            }
        }
    }
}

struct ProbeCtx<'a> {
    channel: &'a ChannelSet,
    q: &'a [CVec],
    noise: &'a NoiseModel,
    p_t: f64,
    gamma_c: f64,
    opts: &'a TransmitOptions,
    history: Vec<IndicatorSample>,
}

impl<'a> ProbeCtx<'a> {
    fn probe(&mut self, gamma_r: f64) -> Result<f64, TxError> {
        let s = indicator_t(
            gamma_r,
            self.channel,
            self.q,
            self.noise,
            self.p_t,
            self.gamma_c,
            self.opts,
        )?;
        self.history.push(s);
        Ok(s.t)
    }
}

/// Adaptive bracketing: start at the interference-free bound minus K·Γ_c,
/// step down by Γ_c until feasible, step the end point up by Γ_c until
/// infeasible, and return the width-Γ_c interval with certified indicator
/// signs at both ends.
///
/// `power_bound` is the interference-free sensing bound P_T·A_T/σ_R² (or the
/// discrete-array analog), which also serves as the fallback interval top
/// when the adjusted start is nonpositive.
pub fn abs_bracket(
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
    power_bound: f64,
    opts: &TransmitOptions,
) -> Result<BisectionBracket, TxError> {
    if gamma_c <= 0.0 {
        return Err(TxError::BadParameter("gamma_c", gamma_c));
    }
    let start = power_bound - channel.num_users() as f64 * gamma_c;
    if start <= 0.0 {
        log::warn!(
            "adjusted bracket start {start:.3e} nonpositive; falling back to [0, {power_bound:.3e}]"
        );
        return Ok(BisectionBracket { gamma_start: 0.0, gamma_end: power_bound, history: vec![] });
    }
    adaptive_bracket_from(start, channel, q, noise, p_t, gamma_c, opts)
}

/// Adaptive bracketing seeded at a known-good level (used after the first
/// alternating-optimization round, where the previous optimum seeds the
/// search).
pub fn seeded_bracket(
    seed_gamma: f64,
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
    opts: &TransmitOptions,
) -> Result<BisectionBracket, TxError> {
    adaptive_bracket_from(seed_gamma.max(gamma_c * 1e-6), channel, q, noise, p_t, gamma_c, opts)
}

/// Fixed interval [0, power_bound] with no probe history.
pub fn plain_bracket(power_bound: f64) -> BisectionBracket {
    BisectionBracket { gamma_start: 0.0, gamma_end: power_bound, history: vec![] }
}

fn adaptive_bracket_from(
    start: f64,
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
    opts: &TransmitOptions,
) -> Result<BisectionBracket, TxError> {
    check_filters(channel, q)?;
    let mut ctx = ProbeCtx { channel, q, noise, p_t, gamma_c, opts, history: vec![] };

    // Phase 1: walk down from the start until feasible.
    let mut lo = start;
    let mut hi_infeasible: Option<f64> = None;
    let mut steps = 0usize;
    loop {
        let t = ctx.probe(lo)?;
        if t >= 0.0 {
            break;
        }
        hi_infeasible = Some(lo);
        steps += 1;
        let stride = if steps <= LINEAR_PROBE_LIMIT {
            gamma_c
        } else {
            gamma_c * (1u64 << (steps - LINEAR_PROBE_LIMIT).min(50) as u32) as f64
        };
        let next = lo - stride;
        lo = if next > 0.0 { next } else { lo / 2.0 };
    }

    // Phase 2: walk the end point up until infeasible (skipped if the down
    // phase already recorded an infeasible level one stride above).
    let mut hi = match hi_infeasible {
        Some(h) if h - lo <= gamma_c * (1.0 + 1e-12) => h,
        maybe => {
            let mut end = lo + gamma_c;
            let mut up_steps = 0usize;
            loop {
                if let Some(h) = maybe {
                    if end >= h {
                        // A known infeasible level caps the walk.
                        end = h;
                        break;
                    }
                }
                let t = ctx.probe(end)?;
                if t <= 0.0 {
                    break;
                }
                lo = end;
                up_steps += 1;
                let stride = if up_steps <= LINEAR_PROBE_LIMIT {
                    gamma_c
                } else {
                    gamma_c * (1u64 << (up_steps - LINEAR_PROBE_LIMIT).min(50) as u32) as f64
                };
                end += stride;
            }
            end
        }
    };

    // Phase 3: narrow to exactly width Γ_c. Indicator monotonicity certifies
    // t(hi − Γ_c) ≥ 0 once hi − lo ≤ Γ_c.
    while hi - lo > gamma_c * (1.0 + 1e-12) {
        let mid = 0.5 * (lo + hi);
        let t = ctx.probe(mid)?;
        if t >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    Ok(BisectionBracket { gamma_start: hi - gamma_c, gamma_end: hi, history: ctx.history })
}

/// Bisection on a bracket down to width ε₁, returning the covariance pack of
/// the final feasible solve. Solve count is at most ⌈log₂(width/ε₁)⌉ + 1.
pub fn bisect_transmit(
    bracket: &BisectionBracket,
    channel: &ChannelSet,
    q: &[CVec],
    noise: &NoiseModel,
    p_t: f64,
    gamma_c: f64,
    eps1: f64,
    opts: &TransmitOptions,
) -> Result<TransmitSolve, TxError> {
    if eps1 <= 0.0 {
        return Err(TxError::BadParameter("eps1", eps1));
    }
    check_filters(channel, q)?;
    let mut lo = bracket.gamma_start;
    let mut hi = bracket.gamma_end;
    let mut probes: Vec<IndicatorSample> = Vec::new();
    let mut last_feasible: Option<(f64, CovariancePack)> = None;

    let full_solve = |gamma: f64,
                          probes: &mut Vec<IndicatorSample>|
     -> Result<(f64, Option<CovariancePack>), TxError> {
        let problem = build_subproblem(gamma, channel, q, noise, p_t, gamma_c)?;
        let sol = solve_sdp(&problem, opts.sdp_tol, opts.sdp_max_iter)?;
        match sol.status {
            SdpStatus::Infeasible => Err(TxError::InfeasibleScenario {
                details: infeasible_details(channel, noise, p_t, gamma_c),
            }),
            SdpStatus::MaxIter
                if sol.residuals.primal.max(sol.residuals.dual).max(sol.residuals.gap)
                    > opts.sdp_tol * 1e3 =>
            {
                Err(TxError::SolverStall {
                    gamma_r: gamma,
                    score: sol.residuals.primal.max(sol.residuals.dual).max(sol.residuals.gap),
                })
            }
            _ => {
                probes.push(IndicatorSample {
                    gamma_r: gamma,
                    t: sol.t,
                    sdp_iterations: sol.iterations,
                });
                let pack = if sol.t >= 0.0 {
                    let mut values = sol.block_values;
                    let total = values.remove(0);
                    Some(CovariancePack { total, per_user: values })
                } else {
                    None
                };
                Ok((sol.t, pack))
            }
        }
    };

    while hi - lo > eps1 {
        let mid = 0.5 * (lo + hi);
        let (t, pack) = full_solve(mid, &mut probes)?;
        if t >= 0.0 {
            lo = mid;
            last_feasible = pack.map(|p| (mid, p));
        } else {
            hi = mid;
        }
    }

    let gamma_r_star = lo;
    let pack = match last_feasible {
        Some((gamma, pack)) if gamma == gamma_r_star => pack,
        _ => {
            // Final solve at the certified-feasible level (Γ = 0 degenerates
            // to an epsilon level so the 1/Γ term stays finite).
            let gamma = if gamma_r_star > 0.0 { gamma_r_star } else { 1e-8 * hi.max(1.0) };
            let (_, pack) = full_solve(gamma, &mut probes)?;
            pack.ok_or(TxError::SolverStall { gamma_r: gamma, score: f64::NAN })?
        }
    };

    Ok(TransmitSolve { pack, gamma_r_star, probes })
}

/// Recover the exactly rank-one communication beamformers from the SDR
/// covariances: ŵ_k = (f_kᴴ R_k f_k)^{−1/2}·R_k·f_k. The construction
/// preserves every user's SINR at the covariance value.
pub fn extract_rank_one(pack: &CovariancePack, channel: &ChannelSet) -> Result<CMat, TxError> {
    let n = pack.dim();
    let k_users = pack.per_user.len();
    let mut w_c = Array2::zeros((n, k_users));
    for (k, rk) in pack.per_user.iter().enumerate() {
        let f = &channel.user_vectors[k];
        let denom = quad_form(rk, f);
        let tr: f64 = rk.diag().iter().map(|z| z.re).sum();
        let nf: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        if denom <= 1e-12 * (tr * nf).max(1e-300) {
            return Err(TxError::DegenerateUser(k + 1, denom));
        }
        let col = rk.dot(f).mapv(|z| z / C64::new(denom.sqrt(), 0.0));
        w_c.column_mut(k).assign(&col);
    }
    Ok(w_c)
}

/// Factor the sensing residual R − Σ ŵ_k ŵ_kᴴ into W_r with column count
/// equal to its numerical rank.
pub fn factor_sensing_cov(pack: &CovariancePack, w_c: &CMat) -> Result<CMat, TxError> {
    let n = pack.dim();
    let mut residual = pack.total.clone();
    for k in 0..w_c.ncols() {
        let col = w_c.column(k).to_owned();
        residual -= &outer_product(&col);
    }
    let residual = crate::sinr::hermitize(&residual);
    let tr: f64 = residual.diag().iter().map(|z| z.re).sum::<f64>().max(0.0);
    let total_tr: f64 = pack.total.diag().iter().map(|z| z.re).sum();
    let (vals, vecs) = residual.eigh(UPLO::Lower).expect("eigh on Hermitian residual");
    let min_eig = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * total_tr.max(1e-300) {
        return Err(TxError::IndefiniteResidual(min_eig));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| vals[i] > 1e-9 * tr.max(1e-300))
        .collect();
    let mut w_r = Array2::zeros((n, keep.len()));
    // Descending eigenvalue order, deterministic phase.
    for (col, &i) in keep.iter().rev().enumerate() {
        let mut v: CVec = vecs.column(i).to_owned();
        phase_fix(&mut v);
        let scale = C64::new(vals[i].sqrt(), 0.0);
        w_r.column_mut(col).assign(&v.mapv(|z| z * scale));
    }
    Ok(w_r)
}

/// Rotate the largest-magnitude entry to the nonnegative real axis.
pub(crate) fn phase_fix(v: &mut CVec) {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_mag {
            best_mag = z.norm();
            best = i;
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / C64::new(best_mag, 0.0);
        v.mapv_inplace(|z| z * rot);
    }
}

/// Matched-filter receive initialization g_l/‖g_l‖ with deterministic phase.
pub fn matched_filters(channel: &ChannelSet) -> Vec<CVec> {
    channel
        .target_vectors
        .iter()
        .map(|g| {
            let norm: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut q = g.mapv(|z| z / C64::new(norm, 0.0));
            phase_fix(&mut q);
            q
        })
        .collect()
}
