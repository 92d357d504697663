//! Perturbation weights 𝓜_t by the chi-square-distance program, and wedge
//! series extraction over the identified set.
//!
//! The program is
//!
//! ```text
//!     min ½ Σ_t (M_t - 1)²
//!     s.t. mean(M) = 1,
//!          Σ_t M_t q_{t,j} = 0                      for equality rows j ≤ p,
//!          Σ_t M_t q_{t,j} = T·min(q̄_j, 0)         for inequality rows j > p,
//!          M_t ≥ 0,
//! ```
//!
//! where inequality columns are normalized so that "satisfied" means a
//! nonpositive sample mean. Ignoring the nonnegativity constraint yields the
//! closed form `M = 1 - q̃ V(q)⁻¹ [q̄₁; [q̄₂]₊]` with `V(q) = T⁻¹ q̃'q̃`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::filter;
use crate::linalg;
use crate::mcmc::{quantile, IdentifiedSetDraws, SetEstimate};
use crate::model::{self, ModelSpec};
use crate::params::ParamVector;
use crate::state_space::assemble_state_space;

pub const TOL_KKT: f64 = 1e-8;

/// Weights, multipliers and binding pattern of one solve.
#[derive(Debug, Clone)]
pub struct PerturbationWeights {
    /// T-vector of weights M_t.
    pub m: DVector<f64>,
    /// Multiplier on the unit-mean constraint.
    pub lambda1: f64,
    /// Multipliers on the moment constraints (r-vector).
    pub lambda2: DVector<f64>,
    /// Multipliers on M_t ≥ 0 (zero when the bound is slack).
    pub lambda3: DVector<f64>,
    /// True where M_t = 0 binds.
    pub binding_mask: Vec<bool>,
    /// Smallest weight before any clamping (analytic path diagnostics).
    pub min_m: f64,
    /// ½ Σ (M_t - 1)².
    pub objective: f64,
    /// True when the closed form was already feasible.
    pub analytic_feasible: bool,
}

fn centered(q: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let t = q.nrows() as f64;
    let means = DVector::from_iterator(q.ncols(), (0..q.ncols()).map(|j| q.column(j).sum() / t));
    let mut tilde = q.clone();
    for j in 0..q.ncols() {
        for i in 0..q.nrows() {
            tilde[(i, j)] -= means[j];
        }
    }
    (tilde, means)
}

fn plus_part(means: &DVector<f64>, p_eq: usize) -> DVector<f64> {
    DVector::from_iterator(
        means.len(),
        means.iter().enumerate().map(|(j, &v)| if j < p_eq { v } else { v.max(0.0) }),
    )
}

/// Closed-form solution ignoring the nonnegativity constraint.
///
/// Columns `0..p_eq` of `q` are equality rows; the rest are inequalities
/// normalized to "≤ 0 is satisfied".
pub fn solve_weights_analytic(q: &DMatrix<f64>, p_eq: usize) -> Result<PerturbationWeights> {
    let t_len = q.nrows();
    let r = q.ncols();
    if p_eq > r || t_len <= r {
        return Err(Error::InvalidInput(format!(
            "need T > r moment columns (T={t_len}, r={r}, p={p_eq})"
        )));
    }
    let (q_tilde, means) = centered(q);
    let v = q_tilde.transpose() * &q_tilde / t_len as f64;
    let rc = linalg::rcond(&v);
    if rc < 1.0 / linalg::COND_MAX {
        return Err(Error::SingularMomentCovariance { rcond: rc });
    }
    let rhs = plus_part(&means, p_eq);
    let v_inv_rhs = linalg::solve_lu(&v, &rhs, "moment covariance")?;
    let m_tilde_paper = &q_tilde * &v_inv_rhs; // paper's M̃ = 1 - M
    let m = DVector::from_iterator(t_len, m_tilde_paper.iter().map(|x| 1.0 - x));
    let lambda2 = -v_inv_rhs;
    let lambda1 = means.dot(&(-&lambda2));
    let min_m = m.min();
    let objective = 0.5 * m.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>();
    Ok(PerturbationWeights {
        binding_mask: vec![false; t_len],
        lambda3: DVector::zeros(t_len),
        analytic_feasible: min_m >= -1e-10,
        m,
        lambda1,
        lambda2,
        min_m,
        objective,
    })
}

/// Residual of the block linear system characterizing the closed form:
/// `M̃ = q̃ λ₂claim` and `V λ₂claim = rhs` stacked, with `M̃ = 1 - M`.
pub fn block_system_residual(q: &DMatrix<f64>, p_eq: usize, w: &PerturbationWeights) -> f64 {
    let t_len = q.nrows();
    let (q_tilde, means) = centered(q);
    let rhs = plus_part(&means, p_eq);
    let m_tilde = DVector::from_iterator(t_len, w.m.iter().map(|x| 1.0 - x));
    // First block: M̃ + q̃ λ₂ = 0 (λ₂ = -V⁻¹ rhs).
    let r1 = (&m_tilde + &q_tilde * &w.lambda2).amax();
    // Second block: T⁻¹ q̃' M̃ - rhs = 0.
    let r2 = (q_tilde.transpose() * &m_tilde / t_len as f64 - rhs).amax();
    r1.max(r2)
}

/// Verifies the program constraints at tolerance `tol` (both solution paths).
pub fn verify_feasibility(q: &DMatrix<f64>, p_eq: usize, m: &DVector<f64>, tol: f64) -> Result<()> {
    let t_len = q.nrows() as f64;
    let mean_m = m.sum() / t_len;
    if (mean_m - 1.0).abs() > tol {
        return Err(Error::NumericalFailure {
            context: "perturbation weights",
            detail: format!("mean(M) = {mean_m} violates unit expectation"),
        });
    }
    if m.min() < -1e-10 {
        return Err(Error::NumericalFailure {
            context: "perturbation weights",
            detail: format!("min(M) = {} violates nonnegativity", m.min()),
        });
    }
    let scale = q.amax().max(1.0);
    for j in 0..q.ncols() {
        let q_bar = q.column(j).sum() / t_len;
        let distorted = q.column(j).dot(m) / t_len;
        let target = if j < p_eq { 0.0 } else { q_bar.min(0.0) };
        if (distorted - target).abs() > tol * scale {
            return Err(Error::NumericalFailure {
                context: "perturbation weights",
                detail: format!("moment {j}: E[Mq] = {distorted} vs target {target}"),
            });
        }
    }
    Ok(())
}

/// Full program with the nonnegativity constraint, solved by a primal-dual
/// active-set method with lowest-index (Bland) tie-breaking.
pub fn solve_weights_qp(q: &DMatrix<f64>, p_eq: usize) -> Result<PerturbationWeights> {
    let analytic = solve_weights_analytic(q, p_eq)?;
    if analytic.analytic_feasible {
        verify_feasibility(q, p_eq, &analytic.m, TOL_KKT)?;
        return Ok(PerturbationWeights { analytic_feasible: true, ..analytic });
    }
    let t_len = q.nrows();
    let r = q.ncols();
    let n_con = r + 1;
    let (_, means) = centered(q);

    // A one-signed moment column cannot be zeroed by nonnegative unit-mean
    // weights: the constraint set is empty.
    for j in 0..r {
        let min = q.column(j).min();
        let max = q.column(j).max();
        let eq_impossible = j < p_eq && (min > 0.0 || max < 0.0);
        let ineq_impossible = j >= p_eq && min > 0.0;
        if eq_impossible || ineq_impossible {
            return Err(Error::QpInfeasible {
                detail: format!(
                    "moment column {j} is one-signed on [{min}, {max}]; E[Mq]={} unreachable",
                    if j < p_eq { 0.0 } else { means[j].min(0.0) }
                ),
            });
        }
    }

    // Constraint matrix C (n_con x T) and rhs d.
    let mut c_mat = DMatrix::<f64>::zeros(n_con, t_len);
    let mut d = DVector::<f64>::zeros(n_con);
    for t in 0..t_len {
        c_mat[(0, t)] = 1.0;
    }
    d[0] = t_len as f64;
    for j in 0..r {
        for t in 0..t_len {
            c_mat[(j + 1, t)] = q[(t, j)];
        }
        d[j + 1] = if j < p_eq {
            0.0
        } else {
            t_len as f64 * (means[j]).min(0.0)
        };
    }

    let mut active = vec![false; t_len];
    let max_iters = 4 * t_len + 100;
    for _iter in 0..max_iters {
        // Solve the equality-constrained subproblem with M_A = 0:
        //   M_F = 1 + (C_F' ν),  (C_F C_F') ν = d - C_F 1_F.
        let free: Vec<usize> = (0..t_len).filter(|&t| !active[t]).collect();
        if free.len() < n_con {
            return Err(Error::QpInfeasible {
                detail: format!(
                    "active set left {} free coordinates for {} constraints",
                    free.len(),
                    n_con
                ),
            });
        }
        let mut cf = DMatrix::<f64>::zeros(n_con, free.len());
        for (k, &t) in free.iter().enumerate() {
            for i in 0..n_con {
                cf[(i, k)] = c_mat[(i, t)];
            }
        }
        let gram = &cf * cf.transpose();
        if linalg::rcond(&gram) < 1.0 / linalg::COND_MAX {
            return Err(Error::QpInfeasible {
                detail: "constraint Gram matrix singular on the free set".into(),
            });
        }
        let ones_f = DVector::from_element(free.len(), 1.0);
        let rhs_nu = &d - &cf * ones_f;
        let nu = linalg::solve_lu(&gram, &rhs_nu, "QP dual system")?;
        let mut m = DVector::<f64>::zeros(t_len);
        let corrections = cf.transpose() * &nu;
        for (k, &t) in free.iter().enumerate() {
            m[t] = 1.0 + corrections[k];
        }

        // Primal violations enter the active set. Far from the optimum all
        // violating coordinates are activated at once; near it (few
        // violations) the most negative enters alone, lowest index on ties.
        let violations: Vec<usize> = free.iter().copied().filter(|&t| m[t] < -TOL_KKT).collect();
        if violations.len() > 32 {
            for &t in &violations {
                active[t] = true;
            }
            continue;
        }
        let mut entering: Option<usize> = None;
        let mut worst = -TOL_KKT;
        for &t in &violations {
            if m[t] < worst - 1e-15 {
                worst = m[t];
                entering = Some(t);
            }
        }
        if let Some(t_in) = entering {
            active[t_in] = true;
            continue;
        }

        // Dual feasibility: multipliers on active bounds must be nonnegative.
        let full_corrections = c_mat.transpose() * &nu;
        let mut leaving: Option<usize> = None;
        for t in 0..t_len {
            if active[t] {
                let lambda3_t = -(1.0 + full_corrections[t]);
                if lambda3_t < -TOL_KKT {
                    leaving = Some(t);
                    break; // lowest index leaves
                }
            }
        }
        if let Some(t_out) = leaving {
            active[t_out] = false;
            continue;
        }

        // KKT satisfied: assemble multipliers and verify.
        let mut lambda3 = DVector::<f64>::zeros(t_len);
        for t in 0..t_len {
            if active[t] {
                lambda3[t] = -(1.0 + full_corrections[t]);
                m[t] = 0.0;
            }
        }
        for t in 0..t_len {
            if lambda3[t] * m[t] > TOL_KKT {
                return Err(Error::NumericalFailure {
                    context: "QP complementary slackness",
                    detail: format!("lambda3[{t}] * M[{t}] = {}", lambda3[t] * m[t]),
                });
            }
        }
        verify_feasibility(q, p_eq, &m, TOL_KKT)?;
        let objective = 0.5 * m.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>();
        let min_m = m.min();
        return Ok(PerturbationWeights {
            binding_mask: active,
            lambda1: nu[0],
            lambda2: DVector::from_iterator(r, (0..r).map(|j| nu[j + 1])),
            lambda3,
            m,
            min_m,
            objective,
            analytic_feasible: false,
        });
    }
    Err(Error::NumericalFailure {
        context: "solve_weights_qp",
        detail: "active-set iteration limit reached".into(),
    })
}

/// Wedge paths and means at one parameter draw.
#[derive(Debug, Clone)]
pub struct WedgeSeries {
    /// T x n_Y wedge paths (1 - M_t) ⊙ residual_t.
    pub lambda_t: DMatrix<f64>,
    /// Plain per-observable means (equal to mean residuals by construction).
    pub lambda_mean: Vec<f64>,
    /// Means standardized by the residual standard deviation.
    pub lambda_standardized: Vec<f64>,
    pub theta_used: ParamVector,
}

/// Envelope of wedge series over the set estimate.
#[derive(Debug, Clone)]
pub struct WedgeEnvelope {
    pub lower_mean: Vec<f64>,
    pub upper_mean: Vec<f64>,
    /// 2.5% / 97.5% quantiles of the mean wedges across draws.
    pub q025_mean: Vec<f64>,
    pub q975_mean: Vec<f64>,
    /// T x n_Y per-period band edges over draws.
    pub lower_path: DMatrix<f64>,
    pub upper_path: DMatrix<f64>,
    /// Wedge paths of the draws attaining the extreme means, per observable.
    pub lower_mean_path: DMatrix<f64>,
    pub upper_mean_path: DMatrix<f64>,
    pub n_draws_used: usize,
    /// Standardized-mean envelope.
    pub lower_standardized: Vec<f64>,
    pub upper_standardized: Vec<f64>,
}

/// Extracts the wedge series at one θ: filter the data, run the weight QP on
/// the residual moments (equality block, constant instrument), and attribute
/// the period-t distortion as (1 - M_t) times the residual.
pub fn wedge_series_at(
    spec: &ModelSpec,
    data: &DMatrix<f64>,
    theta: &ParamVector,
) -> Result<WedgeSeries> {
    let sol = model::solve_re(spec, theta)?;
    let ss = assemble_state_space(&sol, spec)?;
    let filt = filter(&ss, data, None)?;
    let resid = filt.innovations.clone();
    let t_len = resid.nrows();
    let n_y = resid.ncols();

    // E[M_t * resid_j] = 0 pinned for every observable (equality block).
    let w = solve_weights_qp(&resid, n_y)?;
    let mut lambda_t = DMatrix::<f64>::zeros(t_len, n_y);
    for t in 0..t_len {
        for j in 0..n_y {
            lambda_t[(t, j)] = (1.0 - w.m[t]) * resid[(t, j)];
        }
    }
    let mut lambda_mean = Vec::with_capacity(n_y);
    let mut lambda_standardized = Vec::with_capacity(n_y);
    for j in 0..n_y {
        let mean = lambda_t.column(j).sum() / t_len as f64;
        let rm = resid.column(j).sum() / t_len as f64;
        let var = resid
            .column(j)
            .iter()
            .map(|v| (v - rm) * (v - rm))
            .sum::<f64>()
            / (t_len as f64 - 1.0);
        lambda_mean.push(mean);
        lambda_standardized.push(if var > 0.0 { mean / var.sqrt() } else { 0.0 });
    }
    Ok(WedgeSeries {
        lambda_t,
        lambda_mean,
        lambda_standardized,
        theta_used: theta.clone(),
    })
}

/// Collects wedge envelopes over the draws inside the set estimate. Draws are
/// thinned deterministically to at most `max_draws` evaluations.
pub fn wedges_from_set(
    spec: &ModelSpec,
    data: &DMatrix<f64>,
    draws: &IdentifiedSetDraws,
    set: &SetEstimate,
    template: &ParamVector,
    max_draws: usize,
) -> Result<WedgeEnvelope> {
    let in_set: Vec<usize> = (0..draws.draws.nrows()).filter(|&r| set.mask[r]).collect();
    if in_set.is_empty() {
        return Err(Error::EmptySetAtCutoff { cutoff: set.nu, smallest_feasible: 0.0 });
    }
    let stride = in_set.len().div_ceil(max_draws.max(1));
    let selected: Vec<usize> = in_set.iter().copied().step_by(stride.max(1)).collect();

    let n_y = spec.n_y();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); n_y];
    let mut std_means: Vec<Vec<f64>> = vec![Vec::new(); n_y];
    let mut lower_path: Option<DMatrix<f64>> = None;
    let mut upper_path: Option<DMatrix<f64>> = None;
    let mut lower_mean_path: Option<DMatrix<f64>> = None;
    let mut upper_mean_path: Option<DMatrix<f64>> = None;
    let mut extreme_means: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); n_y];
    let mut used = 0usize;
    for &r in &selected {
        let vals: Vec<f64> = (0..draws.draws.ncols()).map(|c| draws.draws[(r, c)]).collect();
        let theta = template.with_values(vals)?;
        let series = match wedge_series_at(spec, data, &theta) {
            Ok(s) => s,
            Err(Error::QpInfeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        used += 1;
        if lower_path.is_none() {
            lower_path = Some(series.lambda_t.clone());
            upper_path = Some(series.lambda_t.clone());
            lower_mean_path = Some(series.lambda_t.clone());
            upper_mean_path = Some(series.lambda_t.clone());
        } else {
            let lo = lower_path.as_mut().unwrap();
            let hi = upper_path.as_mut().unwrap();
            for t in 0..series.lambda_t.nrows() {
                for j in 0..n_y {
                    lo[(t, j)] = lo[(t, j)].min(series.lambda_t[(t, j)]);
                    hi[(t, j)] = hi[(t, j)].max(series.lambda_t[(t, j)]);
                }
            }
        }
        for j in 0..n_y {
            means[j].push(series.lambda_mean[j]);
            std_means[j].push(series.lambda_standardized[j]);
            if series.lambda_mean[j] < extreme_means[j].0 {
                extreme_means[j].0 = series.lambda_mean[j];
                lower_mean_path
                    .as_mut()
                    .unwrap()
                    .set_column(j, &series.lambda_t.column(j));
            }
            if series.lambda_mean[j] > extreme_means[j].1 {
                extreme_means[j].1 = series.lambda_mean[j];
                upper_mean_path
                    .as_mut()
                    .unwrap()
                    .set_column(j, &series.lambda_t.column(j));
            }
        }
    }
    if used == 0 {
        return Err(Error::QpInfeasible {
            detail: "weight program infeasible at every draw in the set".into(),
        });
    }
    let mut lower_mean = Vec::with_capacity(n_y);
    let mut upper_mean = Vec::with_capacity(n_y);
    let mut q025_mean = Vec::with_capacity(n_y);
    let mut q975_mean = Vec::with_capacity(n_y);
    let mut lower_standardized = Vec::with_capacity(n_y);
    let mut upper_standardized = Vec::with_capacity(n_y);
    for j in 0..n_y {
        let mut v = means[j].clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lower_mean.push(v[0]);
        upper_mean.push(*v.last().unwrap());
        q025_mean.push(quantile(&v, 0.025));
        q975_mean.push(quantile(&v, 0.975));
        let mut s = std_means[j].clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lower_standardized.push(s[0]);
        upper_standardized.push(*s.last().unwrap());
    }
    Ok(WedgeEnvelope {
        lower_mean,
        upper_mean,
        q025_mean,
        q975_mean,
        lower_path: lower_path.unwrap(),
        upper_path: upper_path.unwrap(),
        lower_mean_path: lower_mean_path.unwrap(),
        upper_mean_path: upper_mean_path.unwrap(),
        n_draws_used: used,
        lower_standardized,
        upper_standardized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn satisfied_inequalities_leave_weights_at_one() {
        // All inequality columns satisfied: [q̄₂]₊ = 0 so M ≡ 1.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = DMatrix::<f64>::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..2 {
            let mean = q.column(j).sum() / 50.0;
            for t in 0..50 {
                q[(t, j)] -= mean + 0.5; // shift means to -0.5 < 0
            }
        }
        let w = solve_weights_analytic(&q, 0).unwrap();
        assert!((w.m.max() - 1.0).abs() < 1e-12 && (w.m.min() - 1.0).abs() < 1e-12);
        assert!(w.analytic_feasible);
    }

    #[test]
    fn hand_kkt_oracle_on_four_points() {
        // Single violated inequality row: q = (1,-1,2,-2) + 0.5.
        // Hand KKT: q̃ = (1,-1,2,-2), V = 2.5, M̃ = q̃ * 0.5/2.5,
        // M = 1 - M̃ = (0.8, 1.2, 0.6, 1.4).
        let q = DMatrix::from_column_slice(4, 1, &[1.5, -0.5, 2.5, -1.5]);
        let w = solve_weights_analytic(&q, 0).unwrap();
        let expected = [0.8, 1.2, 0.6, 1.4];
        for t in 0..4 {
            assert_relative_eq!(w.m[t], expected[t], epsilon = 1e-12);
        }
        // Distorted moment is exactly zero and the mean stays one.
        verify_feasibility(&q, 0, &w.m, 1e-10).unwrap();
        assert_relative_eq!(w.lambda2[0], -0.5 / 2.5, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_satisfies_block_system_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..25 {
            let t_len = 200;
            let mut q = DMatrix::<f64>::from_fn(t_len, 3, |_, _| rng.random_range(-1.0..1.0));
            for j in 0..3 {
                let shift: f64 = rng.random_range(-0.3..0.3);
                for t in 0..t_len {
                    q[(t, j)] += shift;
                }
            }
            let w = solve_weights_analytic(&q, 1).unwrap();
            assert!(block_system_residual(&q, 1, &w) < 1e-10);
        }
    }

    #[test]
    fn qp_matches_analytic_when_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..1000 {
            let t_len = 40;
            let mut q = DMatrix::<f64>::from_fn(t_len, 2, |_, _| rng.random_range(-1.0..1.0) * 0.2);
            let shift: f64 = rng.random_range(-0.05..0.05);
            for t in 0..t_len {
                q[(t, 0)] += shift;
            }
            let analytic = solve_weights_analytic(&q, 1).unwrap();
            if !analytic.analytic_feasible {
                continue;
            }
            checked += 1;
            let qp = solve_weights_qp(&q, 1).unwrap();
            assert!((&qp.m - &analytic.m).amax() < 1e-8);
            assert!((qp.objective - analytic.objective).abs() < 1e-10);
        }
        assert!(checked > 800, "only {checked} feasible instances generated");
    }

    #[test]
    fn qp_clamps_negative_weights_and_matches_enumeration_oracle() {
        // Exhaustive active-set enumeration at T = 8.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut found_binding = false;
        for _case in 0..500 {
            let t_len = 8;
            let mut q = DMatrix::<f64>::from_fn(t_len, 1, |_, _| rng.random_range(-1.0..1.0));
            let shift: f64 = rng.random_range(0.2..0.9);
            for t in 0..t_len {
                q[(t, 0)] += shift;
            }
            let qp = match solve_weights_qp(&q, 0) {
                Ok(w) => w,
                Err(Error::QpInfeasible { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            if qp.m.min() < 1e-12 {
                found_binding = true;
            }
            let oracle = enumeration_oracle(&q, 0);
            let oracle = oracle.expect("oracle found no feasible subset while QP solved");
            assert!(
                (&qp.m - &oracle).amax() < 1e-8,
                "QP {:?} vs oracle {:?}",
                qp.m.as_slice(),
                oracle.as_slice()
            );
        }
        assert!(found_binding, "no instance produced binding constraints");
    }

    /// Brute-force oracle: tries every subset of active bounds and keeps the
    /// best feasible KKT point.
    fn enumeration_oracle(q: &DMatrix<f64>, p_eq: usize) -> Option<DVector<f64>> {
        let t_len = q.nrows();
        let r = q.ncols();
        let n_con = r + 1;
        let t_f = t_len as f64;
        let means =
            DVector::from_iterator(r, (0..r).map(|j| q.column(j).sum() / t_f));
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0..(1u32 << t_len) {
            let free: Vec<usize> = (0..t_len).filter(|t| mask & (1 << t) == 0).collect();
            if free.len() < n_con {
                continue;
            }
            let mut cf = DMatrix::<f64>::zeros(n_con, free.len());
            for (k, &t) in free.iter().enumerate() {
                cf[(0, k)] = 1.0;
                for j in 0..r {
                    cf[(j + 1, k)] = q[(t, j)];
                }
            }
            let mut d = DVector::<f64>::zeros(n_con);
            d[0] = t_f;
            for j in 0..r {
                d[j + 1] = if j < p_eq { 0.0 } else { t_f * means[j].min(0.0) };
            }
            let gram = &cf * cf.transpose();
            if linalg::rcond(&gram) < 1e-10 {
                continue;
            }
            let ones = DVector::from_element(free.len(), 1.0);
            let Ok(nu) = linalg::solve_lu(&gram, &(&d - &cf * ones), "oracle") else {
                continue;
            };
            let corr = cf.transpose() * &nu;
            let mut m = DVector::<f64>::zeros(t_len);
            let mut ok = true;
            for (k, &t) in free.iter().enumerate() {
                m[t] = 1.0 + corr[k];
                if m[t] < -1e-9 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let obj = 0.5 * m.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>();
            if best.as_ref().map(|(b, _)| obj < *b - 1e-12).unwrap_or(true) {
                best = Some((obj, m));
            }
        }
        best.map(|(_, m)| m)
    }

    #[test]
    fn large_sample_violations_bind_rarely() {
        // Adjustment-cost style fixture: mild violation at large T keeps the
        // share of binding coordinates under one percent.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t_len = 5_000;
        let q = DMatrix::<f64>::from_fn(t_len, 1, |_, _| {
            let x: f64 = rng.random_range(-1.0..1.0);
            x * 0.8 + 0.05
        });
        let w = solve_weights_qp(&q, 0).unwrap();
        let binding = w.binding_mask.iter().filter(|&&b| b).count();
        assert!(
            (binding as f64) < 0.01 * t_len as f64,
            "{binding} binding of {t_len}"
        );
        verify_feasibility(&q, 0, &w.m, TOL_KKT).unwrap();
    }

    #[test]
    fn decomposition_identity_is_exact_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t_len = 300;
        let lam = DVector::<f64>::from_fn(t_len, |_, _| rng.random_range(-1.0..1.0) + 0.3);
        let q = DMatrix::from_fn(t_len, 1, |t, _| lam[t]);
        let w = solve_weights_qp(&q, 1).unwrap();
        let e_lam = lam.sum() / t_len as f64;
        let e_m_lam = lam.iter().zip(w.m.iter()).map(|(l, m)| l * m).sum::<f64>() / t_len as f64;
        let e_1m_lam =
            lam.iter().zip(w.m.iter()).map(|(l, m)| l * (1.0 - m)).sum::<f64>() / t_len as f64;
        assert_relative_eq!(e_lam, e_m_lam + e_1m_lam, epsilon = 1e-12);
        // Equality block pins E[M λ] to zero, so the full mean is attributed
        // to the distortion component.
        assert!(e_m_lam.abs() < 1e-8);
        assert_relative_eq!(e_1m_lam, e_lam, epsilon = 1e-8);
    }
}
