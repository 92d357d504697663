//! Local conditional identification diagnostics.
//!
//! The rank condition checks the finite-difference Jacobian of
//! `δ(θ, T) = (vec(T A T⁻¹), vec(T K), vec(C T⁻¹), vech(Σ_a))`
//! with respect to `(θ, vec T)` at `T = I`; full rank requires
//! `n_θ + n_X²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, ModelSpec};
use crate::params::ParamVector;
use crate::state_space::{assemble_state_space, StateSpace};

pub const RANK_TOL: f64 = 1e-7;
pub const EPS_FD: f64 = 1e-6;

/// Outcome of the rank check.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub jacobian_rows: usize,
    pub jacobian_cols: usize,
    pub required_rank: usize,
    pub numerical_rank: usize,
    pub singular_values: Vec<f64>,
    pub pass: bool,
}

/// Optional controllability/observability diagnostics (reported, not gated).
#[derive(Debug, Clone)]
pub struct LciDiagnostics {
    pub controllability_rank: usize,
    pub observability_rank: usize,
    pub n_state: usize,
    pub controllable: bool,
    pub observable: bool,
}

/// Builds `δ(θ, T)` for a given system and similarity transform.
fn delta_ns(ss: &StateSpace, t_mat: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = ss.n_state();
    let t_inv = t_mat.clone().lu().try_inverse().ok_or_else(|| Error::NumericalFailure {
        context: "delta_ns",
        detail: "similarity transform not invertible".into(),
    })?;
    let a_tr = t_mat * &ss.a * &t_inv;
    let k_tr = t_mat * &ss.steady_gain;
    let c_tr = &ss.c * &t_inv;
    let n_y = ss.n_obs();
    let mut out = Vec::with_capacity(n * n + n * n_y + n_y * n + n_y * (n_y + 1) / 2);
    out.extend(a_tr.iter().copied());
    out.extend(k_tr.iter().copied());
    out.extend(c_tr.iter().copied());
    for i in 0..n_y {
        for j in 0..=i {
            out.push(ss.innovation_cov[(i, j)]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Rank check against a generic `θ -> StateSpace` factory.
pub fn check_local_identification_with<Fac>(
    factory: Fac,
    theta: &ParamVector,
    eps_fd: f64,
) -> Result<RankReport>
where
    Fac: Fn(&[f64]) -> Result<StateSpace>,
{
    let base_ss = factory(theta.values())?;
    let n = base_ss.n_state();
    let n_theta = theta.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let base_len = delta_ns(&base_ss, &eye)?.len();

    let n_cols = n_theta + n * n;
    let mut jac = DMatrix::<f64>::zeros(base_len, n_cols);

    // θ directions: central differences with a model re-solve on each side.
    for i in 0..n_theta {
        let h = eps_fd * (1.0 + theta.values()[i].abs());
        let mut up = theta.values().to_vec();
        up[i] += h;
        let mut dn = theta.values().to_vec();
        dn[i] -= h;
        let ss_up = factory(&up).map_err(|e| Error::SolveFailedAtPerturbation {
            coord: i,
            source: Box::new(e),
        })?;
        let ss_dn = factory(&dn).map_err(|e| Error::SolveFailedAtPerturbation {
            coord: i,
            source: Box::new(e),
        })?;
        let d_up = delta_ns(&ss_up, &eye)?;
        let d_dn = delta_ns(&ss_dn, &eye)?;
        jac.set_column(i, &((d_up - d_dn) / (2.0 * h)));
    }

    // vec(T) directions at T = I: no re-solve needed.
    for col in 0..n * n {
        let (r, c) = (col % n, col / n);
        let h = eps_fd;
        let mut t_up = eye.clone();
        t_up[(r, c)] += h;
        let mut t_dn = eye.clone();
        t_dn[(r, c)] -= h;
        let d_up = delta_ns(&base_ss, &t_up)?;
        let d_dn = delta_ns(&base_ss, &t_dn)?;
        jac.set_column(n_theta + col, &((d_up - d_dn) / (2.0 * h)));
    }

    let svd = jac.clone().svd(false, false);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let numerical_rank = singular_values.iter().filter(|s| **s > RANK_TOL * smax).count();
    let required_rank = n_theta + n * n;
    Ok(RankReport {
        jacobian_rows: base_len,
        jacobian_cols: n_cols,
        required_rank,
        numerical_rank,
        singular_values,
        pass: numerical_rank == required_rank,
    })
}

/// Rank check for a full model: solve, assemble, then differentiate.
pub fn check_local_identification(
    spec: &ModelSpec,
    theta: &ParamVector,
    eps_fd: f64,
) -> Result<RankReport> {
    let spec = spec.clone();
    let template = theta.clone();
    check_local_identification_with(
        move |vals: &[f64]| {
            let th = template.with_values(vals.to_vec())?;
            let sol = model::solve_re(&spec, &th)?;
            assemble_state_space(&sol, &spec)
        },
        theta,
        eps_fd,
    )
}

/// Kalman-gain controllability and observability ranks (LCI-4).
pub fn lci_diagnostics(ss: &StateSpace) -> LciDiagnostics {
    let n = ss.n_state();
    let n_y = ss.n_obs();
    let mut ctrb = DMatrix::<f64>::zeros(n, n * n_y);
    let mut block = ss.steady_gain.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * n_y), (n, n_y)).copy_from(&block);
        block = &ss.a * &block;
    }
    let mut obsv = DMatrix::<f64>::zeros(n * n_y, n);
    let mut cblock = ss.c.clone();
    for k in 0..n {
        obsv.view_mut((k * n_y, 0), (n_y, n)).copy_from(&cblock);
        cblock = &cblock * &ss.a;
    }
    let cr = linalg::numerical_rank(&ctrb, RANK_TOL);
    let or = linalg::numerical_rank(&obsv, RANK_TOL);
    LciDiagnostics {
        controllability_rank: cr,
        observability_rank: or,
        n_state: n,
        controllable: cr == n,
        observable: or == n,
    }
}
