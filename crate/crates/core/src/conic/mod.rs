//! Dense solver for the SDR subproblem class: a linear objective (optionally
//! including a feasibility slack t), linear trace inequalities, a trace
//! budget, and multiple Hermitian PSD matrix variables with optional PSD
//! couplings between them.
//!
//! Complex Hermitian variables are lowered to the standard real symmetric
//! embedding of doubled dimension (trace functionals carry a factor-of-two
//! correction, see [`embed`]), couplings of the form `X_p − Σ X_b ⪰ 0` are
//! eliminated by substitution, and the result is handed to the homogeneous
//! self-dual interior-point core in [`ipm`].

pub mod embed;
pub(crate) mod ipm;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::channel::conj_transpose;
use crate::{C64, CMat};

use embed::{embed_hermitian, recover_hermitian};
use ipm::{Coeff, ConePoint, ConeRow, IpmStatus, StdForm};

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("block index {0} out of range ({1} blocks)")]
    BlockOutOfRange(usize, usize),
    #[error("coefficient for block {0} has shape {1}x{2}, expected {3}x{3}")]
    CoefficientShape(usize, usize, usize, usize),
    #[error("coefficient for block {0} is not Hermitian (asymmetry {1:.3e})")]
    NotHermitian(usize, f64),
    #[error("a slack objective requires a trace budget to bound the feasible set")]
    SlackWithoutBudget,
    #[error("problem is unbounded (dual infeasibility certificate found)")]
    Unbounded,
    #[error(
        "psd coupling {0} is not eliminable (needs one +1 pivot block, nonpositive \
         other coefficients, pivot unused elsewhere) and the slack-block fallback \
         is limited to small problems"
    )]
    UnsupportedCoupling(usize),
    #[error("solver tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("i/o failure writing problem dump: {0}")]
    DumpIo(#[from] std::io::Error),
}

/// Hermitian coefficient of one matrix block. The structured variants keep
/// Schur-complement assembly cheap; `Dense` always works.
#[derive(Debug, Clone)]
pub enum HermitianCoeff {
    Dense(CMat),
    /// Σ_s weights[s]·v_s·v_sᴴ with v_s the columns of `vectors`.
    Rank { vectors: CMat, weights: Vec<f64> },
    /// c·I.
    Identity(f64),
}

impl HermitianCoeff {
    pub fn to_dense(&self, dim: usize) -> CMat {
        match self {
            HermitianCoeff::Dense(m) => m.clone(),
            HermitianCoeff::Rank { vectors, weights } => {
                let mut out = Array2::zeros((dim, dim));
                for (s, &w) in weights.iter().enumerate() {
                    let v = vectors.column(s);
                    for i in 0..dim {
                        for j in 0..dim {
                            out[[i, j]] += C64::new(w, 0.0) * v[i] * v[j].conj();
                        }
                    }
                }
                out
            }
            HermitianCoeff::Identity(c) => Array2::eye(dim).mapv(|x: f64| C64::new(c * x, 0.0)),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            HermitianCoeff::Dense(m) => HermitianCoeff::Dense(m.mapv(|z| z * s)),
            HermitianCoeff::Rank { vectors, weights } => HermitianCoeff::Rank {
                vectors: vectors.clone(),
                weights: weights.iter().map(|w| w * s).collect(),
            },
            HermitianCoeff::Identity(c) => HermitianCoeff::Identity(c * s),
        }
    }

    fn frob_norm(&self, dim: usize) -> f64 {
        match self {
            HermitianCoeff::Dense(m) => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            HermitianCoeff::Rank { vectors, weights } => {
                let r = weights.len();
                let mut gram = Array2::<C64>::zeros((r, r));
                for a in 0..r {
                    for b in 0..r {
                        gram[[a, b]] = vectors
                            .column(a)
                            .iter()
                            .zip(vectors.column(b).iter())
                            .map(|(x, y)| x.conj() * y)
                            .sum();
                    }
                }
                let mut acc = 0.0;
                for a in 0..r {
                    for b in 0..r {
                        acc += weights[a] * weights[b] * gram[[a, b]].norm_sqr();
                    }
                }
                acc.max(0.0).sqrt()
            }
            HermitianCoeff::Identity(c) => c.abs() * (dim as f64).sqrt(),
        }
    }
}

/// Σ_b tr(coeff_b·X_b) + slack·t.
#[derive(Debug, Clone, Default)]
pub struct LinearFunctional {
    pub terms: Vec<(usize, HermitianCoeff)>,
    pub slack: f64,
}

impl LinearFunctional {
    pub fn evaluate(&self, blocks: &[CMat], t: f64) -> f64 {
        let mats: f64 = self
            .terms
            .iter()
            .map(|(b, c)| {
                let dense = c.to_dense(blocks[*b].nrows());
                dense
                    .iter()
                    .zip(blocks[*b].t().iter())
                    .map(|(a, x)| (a * x).re)
                    .sum::<f64>()
            })
            .sum();
        mats + self.slack * t
    }
}

/// Σ_b coeff_b·X_b ⪰ 0 with scalar per-block coefficients.
#[derive(Debug, Clone)]
pub struct PsdCoupling {
    pub coeffs: Vec<(usize, f64)>,
}

/// The SDR subproblem class handled by [`solve_sdp`].
#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// Hermitian matrix-variable dimensions.
    pub block_dims: Vec<usize>,
    /// Maximized linear objective.
    pub objective: LinearFunctional,
    /// Each entry is (functional, lower bound): functional ≥ bound.
    pub inequalities: Vec<(LinearFunctional, f64)>,
    /// Linear matrix expressions required PSD (e.g. R − Σ R_k).
    pub psd_couplings: Vec<PsdCoupling>,
    /// (block set, bound): Σ tr(X_b) ≤ bound over the set.
    pub trace_budget: Option<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug)]
pub struct SdpSolution {
    pub block_values: Vec<CMat>,
    /// Optimal slack value (0 when the problem has no slack term).
    pub t: f64,
    pub status: SdpStatus,
    pub residuals: SdpResiduals,
    pub iterations: usize,
    /// Objective functional evaluated at the returned blocks and t.
    pub objective_value: f64,
    /// Dual bound on the maximized objective (weak duality upper bound).
    pub dual_bound: f64,
}

struct Lowered {
    form: StdForm,
    /// internal complex dims per internal block
    internal_dims: Vec<usize>,
    /// original block -> Σ (internal block, weight)
    expr: Vec<Vec<(usize, f64)>>,
    theta: f64,
    t_slot: Option<usize>,
    t_shift: f64,
    t_col_scale: f64,
    obj_scale: f64,
    obj_slack: f64,
}

/// Solve the subproblem. `tol` is the relative accuracy target for residuals
/// and duality gap; `max_iter` caps interior-point iterations.
pub fn solve_sdp(
    problem: &SdpProblem,
    tol: f64,
    max_iter: usize,
) -> Result<SdpSolution, ConicError> {
    if tol <= 0.0 {
        return Err(ConicError::BadTolerance(tol));
    }
    validate(problem)?;
    let lowered = lower(problem)?;
    let outcome = ipm::solve_hsd(&lowered.form, tol, max_iter);

    match outcome.status {
        IpmStatus::DualInfeasible => return Err(ConicError::Unbounded),
        IpmStatus::PrimalInfeasible => {
            return Ok(SdpSolution {
                block_values: problem
                    .block_dims
                    .iter()
                    .map(|&n| Array2::zeros((n, n)))
                    .collect(),
                t: 0.0,
                status: SdpStatus::Infeasible,
                residuals: SdpResiduals {
                    primal: outcome.rel_primal_res,
                    dual: outcome.rel_dual_res,
                    gap: outcome.rel_gap,
                },
                iterations: outcome.iterations,
                objective_value: f64::NEG_INFINITY,
                dual_bound: f64::NEG_INFINITY,
            });
        }
        IpmStatus::Optimal | IpmStatus::MaxIter => {}
    }

    // Recover internal complex blocks from the embedded real solution.
    let internal: Vec<CMat> = lowered
        .internal_dims
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut x = recover_hermitian(&outcome.x.mats[i], n);
            x.mapv_inplace(|z| z * lowered.theta);
            x
        })
        .collect();
    let block_values: Vec<CMat> = lowered
        .expr
        .iter()
        .zip(problem.block_dims.iter())
        .map(|(combo, &n)| {
            let mut acc: CMat = Array2::zeros((n, n));
            for (ib, w) in combo {
                acc.scaled_add(C64::new(*w, 0.0), &internal[*ib]);
            }
            acc
        })
        .collect();
    let t = lowered
        .t_slot
        .map(|slot| outcome.x.lp[slot] * lowered.t_col_scale - lowered.t_shift)
        .unwrap_or(0.0);

    let objective_value = problem.objective.evaluate(&block_values, t);
    // Internal min form is c = −obj_scale·(objective with X̃ = X/θ and shifted
    // slack); undo both to bound the user-facing maximized objective.
    let dual_bound = -outcome.dual_obj / lowered.obj_scale - lowered.obj_slack * lowered.t_shift;

    Ok(SdpSolution {
        block_values,
        t,
        status: match outcome.status {
            IpmStatus::Optimal => SdpStatus::Optimal,
            _ => SdpStatus::MaxIter,
        },
        residuals: SdpResiduals {
            primal: outcome.rel_primal_res,
            dual: outcome.rel_dual_res,
            gap: outcome.rel_gap,
        },
        iterations: outcome.iterations,
        objective_value,
        dual_bound,
    })
}

fn validate(problem: &SdpProblem) -> Result<(), ConicError> {
    let nb = problem.block_dims.len();
    let check_functional = |f: &LinearFunctional| -> Result<(), ConicError> {
        for (b, coeff) in &f.terms {
            if *b >= nb {
                return Err(ConicError::BlockOutOfRange(*b, nb));
            }
            let dim = problem.block_dims[*b];
            if let HermitianCoeff::Dense(m) = coeff {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(ConicError::CoefficientShape(*b, m.nrows(), m.ncols(), dim));
                }
                let asym = (m - &conj_transpose(m))
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
                if asym > 1e-10 * scale {
                    return Err(ConicError::NotHermitian(*b, asym / scale));
                }
            }
            if let HermitianCoeff::Rank { vectors, weights } = coeff {
                if vectors.nrows() != dim || vectors.ncols() != weights.len() {
                    return Err(ConicError::CoefficientShape(
                        *b,
                        vectors.nrows(),
                        vectors.ncols(),
                        dim,
                    ));
                }
            }
        }
        Ok(())
    };
    check_functional(&problem.objective)?;
    for (f, _) in &problem.inequalities {
        check_functional(f)?;
    }
    for c in &problem.psd_couplings {
        for (b, _) in &c.coeffs {
            if *b >= nb {
                return Err(ConicError::BlockOutOfRange(*b, nb));
            }
        }
    }
    if let Some((set, _)) = &problem.trace_budget {
        for b in set {
            if *b >= nb {
                return Err(ConicError::BlockOutOfRange(*b, nb));
            }
        }
    }
    let uses_slack = problem.objective.slack != 0.0
        || problem.inequalities.iter().any(|(f, _)| f.slack != 0.0);
    if uses_slack && problem.trace_budget.is_none() {
        return Err(ConicError::SlackWithoutBudget);
    }
    Ok(())
}

/// Lower the complex problem to the real standard form: coupling elimination,
/// variable/row scaling, the slack shift, the real embedding, and slack
/// variables for the inequalities.
fn lower(problem: &SdpProblem) -> Result<Lowered, ConicError> {
    let nb = problem.block_dims.len();

    // --- Coupling elimination by substitution -------------------------------
    // expr[b]: the original block as a combination of internal blocks.
    let mut internal_dims: Vec<usize> = problem.block_dims.clone();
    let mut expr: Vec<Vec<(usize, f64)>> = (0..nb).map(|b| vec![(b, 1.0)]).collect();
    // Internal blocks that remain their own PSD variable (pivots are removed
    // and replaced by a fresh slack block).
    let mut substituted: Vec<bool> = vec![false; nb];
    let mut slack_equalities: Vec<(Vec<(usize, f64)>, usize)> = Vec::new(); // (combo, slack block)

    for (ci, coupling) in problem.psd_couplings.iter().enumerate() {
        let pivot = coupling.coeffs.iter().find(|(b, w)| {
            (*w - 1.0).abs() < 1e-12
                && !substituted[*b]
                && coupling
                    .coeffs
                    .iter()
                    .all(|(b2, w2)| b2 == b || *w2 <= 1e-12)
                && problem
                    .psd_couplings
                    .iter()
                    .enumerate()
                    .all(|(cj, other)| cj == ci || other.coeffs.iter().all(|(b2, _)| b2 != b))
        });
        if let Some(&(pivot_block, _)) = pivot {
            // X_pivot := S + Σ (−w_b)·X_b with −w_b ≥ 0, so PSD-ness of the
            // pivot is implied and its standalone cone variable is retired.
            let s_block = internal_dims.len();
            internal_dims.push(problem.block_dims[pivot_block]);
            let mut combo = vec![(s_block, 1.0)];
            for (b, w) in &coupling.coeffs {
                if *b != pivot_block {
                    for (ib, iw) in expr[*b].clone() {
                        combo.push((ib, -w * iw));
                    }
                }
            }
            expr[pivot_block] = combo;
            substituted[pivot_block] = true;
        } else {
            // General fallback: a fresh slack block tied entrywise. Viable
            // only at test scale.
            let dim = problem.block_dims[coupling.coeffs[0].0];
            if 2 * dim > 32 {
                return Err(ConicError::UnsupportedCoupling(ci));
            }
            let s_block = internal_dims.len();
            internal_dims.push(dim);
            let mut combo = Vec::new();
            for (b, w) in &coupling.coeffs {
                for (ib, iw) in expr[*b].clone() {
                    combo.push((ib, w * iw));
                }
            }
            slack_equalities.push((combo, s_block));
        }
    }

    // Internal block layout: every internal dim that still owns a cone
    // variable. Substituted original blocks no longer have their own
    // variable, but their index slot remains in internal_dims for expr
    // bookkeeping; build a compaction map.
    let live: Vec<usize> = (0..internal_dims.len())
        .filter(|&ib| ib >= nb || !substituted[ib])
        .collect();
    let slot_of: Vec<Option<usize>> = {
        let mut v = vec![None; internal_dims.len()];
        for (slot, &ib) in live.iter().enumerate() {
            v[ib] = Some(slot);
        }
        v
    };
    let live_dims: Vec<usize> = live.iter().map(|&ib| internal_dims[ib]).collect();

    // Remap expr to live slots.
    let expr: Vec<Vec<(usize, f64)>> = expr
        .iter()
        .map(|combo| {
            combo
                .iter()
                .map(|(ib, w)| (slot_of[*ib].expect("live slot"), *w))
                .collect()
        })
        .collect();
    let slack_equalities: Vec<(Vec<(usize, f64)>, usize)> = slack_equalities
        .into_iter()
        .map(|(combo, s)| {
            (
                combo
                    .into_iter()
                    .map(|(ib, w)| (slot_of[ib].expect("live slot"), w))
                    .collect(),
                slot_of[s].expect("live slot"),
            )
        })
        .collect();

    // --- Variable scaling ----------------------------------------------------
    let total_dim: usize = live_dims.iter().sum();
    let budget = problem.trace_budget.as_ref().map(|(_, b)| *b);
    let theta = match budget {
        Some(b) if b > 0.0 => b / total_dim as f64,
        _ => 1.0,
    };
    let scaled_budget = budget.map(|b| b / theta);

    // Translate a complex functional into per-live-slot merged coefficients,
    // with the variable scale θ folded in.
    let translate = |f: &LinearFunctional| -> Vec<(usize, HermitianCoeff)> {
        let mut per_slot: Vec<Option<HermitianCoeff>> = vec![None; live_dims.len()];
        let mut add = |slot: usize, coeff: HermitianCoeff| {
            per_slot[slot] = Some(match per_slot[slot].take() {
                None => coeff,
                Some(prev) => merge_coeffs(prev, coeff, live_dims[slot]),
            });
        };
        for (b, coeff) in &f.terms {
            for (slot, w) in &expr[*b] {
                add(*slot, coeff.scaled(w * theta));
            }
        }
        per_slot
            .into_iter()
            .enumerate()
            .filter_map(|(slot, c)| c.map(|c| (slot, c)))
            .collect()
    };

    // --- Row scaling and the slack shift -------------------------------------
    struct RawRow {
        coeffs: Vec<(usize, HermitianCoeff)>,
        slack: f64,
        bound: f64,
    }
    let raw_rows: Vec<RawRow> = problem
        .inequalities
        .iter()
        .map(|(f, lb)| RawRow {
            coeffs: translate(f),
            slack: f.slack,
            bound: *lb,
        })
        .collect();

    let row_norm = |r: &RawRow| -> f64 {
        r.coeffs
            .iter()
            .map(|(slot, c)| c.frob_norm(live_dims[*slot]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let d_row: Vec<f64> = raw_rows
        .iter()
        .map(|r| 1.0 / row_norm(r).max(r.bound.abs()).max(1e-12))
        .collect();
    let d_slack = raw_rows
        .iter()
        .zip(d_row.iter())
        .filter(|(r, _)| r.slack != 0.0)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let d_row: Vec<f64> = raw_rows
        .iter()
        .zip(d_row.iter())
        .map(|(r, d)| if r.slack != 0.0 { d_slack } else { *d })
        .collect();

    let uses_slack = problem.objective.slack != 0.0 || raw_rows.iter().any(|r| r.slack != 0.0);
    // Lower bound on the achievable slack optimum: any X feasible for the
    // hard constraints has tr ≤ scaled budget, bounding each slack row. The
    // factor-two margin keeps the shifted variable interior; the shift also
    // sets the slack's numeric scale, so it must track the problem data
    // rather than being floored at unity (the slack optimum can be many
    // orders below the trace scale).
    let t_shift = if uses_slack {
        let b = scaled_budget.expect("validated: slack requires budget");
        2.0 * raw_rows
            .iter()
            .filter(|r| r.slack != 0.0)
            .map(|r| (row_norm(r) * b + r.bound.abs()) / r.slack.abs())
            .fold(0.0, f64::max)
            .max(1e-12)
    } else {
        0.0
    };
    let t_col_scale = if uses_slack { t_shift } else { 1.0 };

    // --- Assemble the real standard form -------------------------------------
    // LP layout: [t̂] + one slack per inequality + budget slack.
    let t_slot = uses_slack.then_some(0usize);
    let lp_base = if uses_slack { 1 } else { 0 };
    let lp_len = lp_base + raw_rows.len() + usize::from(scaled_budget.is_some());

    let embed_coeff = |c: &HermitianCoeff| -> Coeff {
        match c {
            HermitianCoeff::Identity(s) => Coeff::ScaledIdentity(s / 2.0),
            HermitianCoeff::Rank { vectors, weights } => {
                // g gᴴ embeds as u₁u₁ᵀ + u₂u₂ᵀ with u₁ = [Re; Im],
                // u₂ = [−Im; Re]; the ½ trace correction halves the weights.
                let n = vectors.nrows();
                let r = weights.len();
                let mut vecs = Array2::zeros((2 * n, 2 * r));
                let mut w2 = Array1::zeros(2 * r);
                for s in 0..r {
                    for i in 0..n {
                        let z = vectors[[i, s]];
                        vecs[[i, 2 * s]] = z.re;
                        vecs[[i + n, 2 * s]] = z.im;
                        vecs[[i, 2 * s + 1]] = -z.im;
                        vecs[[i + n, 2 * s + 1]] = z.re;
                    }
                    w2[2 * s] = weights[s] / 2.0;
                    w2[2 * s + 1] = weights[s] / 2.0;
                }
                Coeff::LowRank { vecs, weights: w2 }
            }
            HermitianCoeff::Dense(m) => {
                let e = embed_hermitian(m);
                Coeff::Dense(e.mapv(|v| v / 2.0))
            }
        }
    };

    let mut rows: Vec<ConeRow> = Vec::new();
    let mut b_vec: Vec<f64> = Vec::new();
    for (i, r) in raw_rows.iter().enumerate() {
        let d = d_row[i];
        let mut row = ConeRow::default();
        for (slot, c) in &r.coeffs {
            row.mat_terms.push((*slot, embed_coeff(&c.scaled(d))));
        }
        if r.slack != 0.0 {
            row.lp_terms.push((0, d * r.slack * t_col_scale));
        }
        row.lp_terms.push((lp_base + i, -1.0));
        rows.push(row);
        b_vec.push(d * (r.bound + r.slack * t_shift));
    }
    if let Some(b) = scaled_budget {
        let (set, _) = problem.trace_budget.as_ref().unwrap();
        let mut weights_per_slot = vec![0.0f64; live_dims.len()];
        for orig in set {
            for (slot, w) in &expr[*orig] {
                weights_per_slot[*slot] += *w;
            }
        }
        let d = 1.0 / b.max(1.0);
        let mut row = ConeRow::default();
        for (slot, w) in weights_per_slot.iter().enumerate() {
            if *w != 0.0 {
                // tr on the complex side is half the embedded trace.
                row.mat_terms.push((slot, Coeff::ScaledIdentity(d * w / 2.0)));
            }
        }
        row.lp_terms.push((lp_base + raw_rows.len(), 1.0));
        rows.push(row);
        b_vec.push(d * b);
    }
    for (combo, s_slot) in &slack_equalities {
        // Entrywise ties Σ w·X_b = S on the embedded real side.
        let dim2 = 2 * live_dims[*s_slot];
        for i in 0..dim2 {
            for j in i..dim2 {
                let mut basis = Array2::zeros((dim2, dim2));
                let v = if i == j { 1.0 } else { 0.5 };
                basis[[i, j]] = v;
                basis[[j, i]] = v;
                let mut row = ConeRow::default();
                for (slot, w) in combo {
                    row.mat_terms.push((*slot, scale_real_dense(&basis, *w)));
                }
                row.mat_terms.push((*s_slot, scale_real_dense(&basis, -1.0)));
                rows.push(row);
                b_vec.push(0.0);
            }
        }
    }

    // Objective (min form): c = −obj_scale·objective, normalized so the
    // internal objective is O(1) (the slack column already carries
    // t_col_scale).
    let obj_terms = translate(&problem.objective);
    let obj_norm = obj_terms
        .iter()
        .map(|(slot, c)| c.frob_norm(live_dims[*slot]).powi(2))
        .sum::<f64>()
        .sqrt()
        .max(problem.objective.slack.abs() * t_col_scale)
        .max(1e-12);
    let obj_scale = 1.0 / obj_norm;

    let mut c_point = ConePoint {
        mats: live_dims.iter().map(|&n| Array2::zeros((2 * n, 2 * n))).collect(),
        lp: Array1::zeros(lp_len),
    };
    for (slot, coeff) in &obj_terms {
        embed_coeff(&coeff.scaled(-obj_scale)).add_into(&mut c_point.mats[*slot], 1.0);
    }
    if problem.objective.slack != 0.0 {
        c_point.lp[0] = -obj_scale * problem.objective.slack * t_col_scale;
    }

    let form = StdForm {
        mat_dims: live_dims.iter().map(|&n| 2 * n).collect(),
        lp_len,
        c: c_point,
        rows,
        b: b_vec,
    };

    Ok(Lowered {
        form,
        internal_dims: live_dims,
        expr,
        theta,
        t_slot,
        t_shift,
        t_col_scale,
        obj_scale,
        obj_slack: problem.objective.slack,
    })
}

fn scale_real_dense(m: &Array2<f64>, s: f64) -> Coeff {
    Coeff::Dense(m.mapv(|v| v * s))
}

fn merge_coeffs(a: HermitianCoeff, b: HermitianCoeff, dim: usize) -> HermitianCoeff {
    use HermitianCoeff::*;
    match (a, b) {
        (Identity(x), Identity(y)) => Identity(x + y),
        (Rank { vectors: va, weights: wa }, Rank { vectors: vb, weights: wb }) => {
            let n = va.nrows();
            let mut vectors = Array2::zeros((n, wa.len() + wb.len()));
            vectors.slice_mut(ndarray::s![.., ..wa.len()]).assign(&va);
            vectors.slice_mut(ndarray::s![.., wa.len()..]).assign(&vb);
            let mut weights = wa;
            weights.extend(wb);
            Rank { vectors, weights }
        }
        (x, y) => {
            let mut d = x.to_dense(dim);
            d += &y.to_dense(dim);
            Dense(d)
        }
    }
}

/// Self-describing structured dump for offline cross-checking against
/// external solvers. Complex entries are [re, im] pairs.
pub fn dump_problem(problem: &SdpProblem) -> serde_json::Value {
    use serde_json::json;
    let mat_json = |f: &LinearFunctional| -> serde_json::Value {
        json!({
            "terms": f.terms.iter().map(|(b, c)| {
                let dense = c.to_dense(problem.block_dims[*b]);
                json!({
                    "block": b,
                    "matrix": dense.rows().into_iter().map(|row| {
                        row.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>()
                    }).collect::<Vec<_>>(),
                })
            }).collect::<Vec<_>>(),
            "slack": f.slack,
        })
    };
    json!({
        "format": "holobeam-sdp/1",
        "block_dims": problem.block_dims,
        "objective_max": mat_json(&problem.objective),
        "inequalities": problem.inequalities.iter().map(|(f, lb)| json!({
            "functional": mat_json(f),
            "lower_bound": lb,
        })).collect::<Vec<_>>(),
        "psd_couplings": problem.psd_couplings.iter().map(|c| json!(c.coeffs)).collect::<Vec<_>>(),
        "trace_budget": problem.trace_budget.as_ref().map(|(set, b)| json!({
            "blocks": set,
            "bound": b,
        })),
    })
}

/// Write the dump to a file.
pub fn write_problem_dump(problem: &SdpProblem, path: &std::path::Path) -> Result<(), ConicError> {
    let v = dump_problem(problem);
    std::fs::write(path, serde_json::to_string_pretty(&v).expect("json"))?;
    Ok(())
}
