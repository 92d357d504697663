//! Parameterized linear(ized) equilibrium models and their solution by
//! undetermined coefficients.
//!
//! A model is the expectational system
//!
//! ```text
//!     G(θ) X_t = F(θ) E_t[X_{t+1}] + L(θ) Z_t,      Z_t = R(θ) Z_{t-1} + ε_t
//! ```
//!
//! and a solution is a pair `(P*, Q*)` such that `X_t = P* X_{t-1} + Q* Z_t`
//! satisfies the system, with `(F P* - G) P* = 0` and a Sylvester-type linear
//! equation pinning `Q*`.
//!
//! Lagged endogenous variables must be expanded by the caller into dummy
//! states. The canonical encoding of the dummy identity `x̃_{t+1} = x_{m,t}`
//! is a row with `F = e_j`, `G = e_m`, `L = 0`; the solver detects such rows
//! structurally, treats the states they define as predetermined, and requires
//! the number of stable pencil roots to equal the number of predetermined
//! states (saddle counting).

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::params::ParamVector;

/// Residual tolerance for an accepted solution.
pub const TOL_SOLVE: f64 = 1e-8;
/// Roots within this distance of the unit circle are classified unstable.
pub const TIE_TOL: f64 = 1e-8;

/// Evaluated equilibrium-condition matrices at one parameter point.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub g: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma_eps: DMatrix<f64>,
}

/// Closure evaluating (G, F, L, R, Σ_ε) at a parameter vector.
pub type MatrixMap = Arc<dyn Fn(&[f64]) -> Result<SystemMatrices> + Send + Sync>;

/// A parameterized model: dimensions, matrix evaluator, observation selector
/// and the per-observable friction direction.
#[derive(Clone)]
pub struct ModelSpec {
    pub n_x: usize,
    pub n_z: usize,
    matrix_map: MatrixMap,
    /// State indices observed, in output order (rows of the selector C₀).
    pub observation_selector: Vec<usize>,
    /// Per observable: +1 (wedge ≥ 0), -1 (wedge ≤ 0), 0 (equality restriction).
    pub friction_signs: Vec<i8>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ModelSpec")
            .field("n_x", &self.n_x)
            .field("n_z", &self.n_z)
            .field("observation_selector", &self.observation_selector)
            .field("friction_signs", &self.friction_signs)
            .finish()
    }
}

impl ModelSpec {
    pub fn new(
        n_x: usize,
        n_z: usize,
        matrix_map: MatrixMap,
        observation_selector: Vec<usize>,
        friction_signs: Vec<i8>,
    ) -> Result<Self> {
        if n_x == 0 || n_z == 0 {
            return Err(Error::InvalidInput("n_x and n_z must be positive".into()));
        }
        if observation_selector.iter().any(|&i| i >= n_x) {
            return Err(Error::InvalidInput(
                "observation selector index out of state range".into(),
            ));
        }
        if friction_signs.len() != observation_selector.len() {
            return Err(Error::DimensionMismatch {
                context: "friction_signs",
                expected: format!("{}", observation_selector.len()),
                got: format!("{}", friction_signs.len()),
            });
        }
        if friction_signs.iter().any(|s| ![-1, 0, 1].contains(s)) {
            return Err(Error::InvalidInput("friction signs must be -1, 0 or +1".into()));
        }
        Ok(ModelSpec {
            n_x,
            n_z,
            matrix_map,
            observation_selector,
            friction_signs,
        })
    }

    pub fn n_y(&self) -> usize {
        self.observation_selector.len()
    }

    /// Evaluates and validates the system matrices at θ.
    pub fn evaluate(&self, theta: &[f64]) -> Result<SystemMatrices> {
        let m = (self.matrix_map)(theta)?;
        let dims_ok = m.g.nrows() == self.n_x
            && m.g.ncols() == self.n_x
            && m.f.nrows() == self.n_x
            && m.f.ncols() == self.n_x
            && m.l.nrows() == self.n_x
            && m.l.ncols() == self.n_z
            && m.r.nrows() == self.n_z
            && m.r.ncols() == self.n_z
            && m.sigma_eps.nrows() == self.n_z
            && m.sigma_eps.ncols() == self.n_z;
        if !dims_ok {
            return Err(Error::DimensionMismatch {
                context: "ModelSpec::evaluate",
                expected: format!("G,F {0}x{0}; L {0}x{1}; R,Sigma {1}x{1}", self.n_x, self.n_z),
                got: format!(
                    "G {}x{}, F {}x{}, L {}x{}, R {}x{}, Sigma {}x{}",
                    m.g.nrows(), m.g.ncols(), m.f.nrows(), m.f.ncols(),
                    m.l.nrows(), m.l.ncols(), m.r.nrows(), m.r.ncols(),
                    m.sigma_eps.nrows(), m.sigma_eps.ncols()
                ),
            });
        }
        let all_finite = m.g.iter().chain(m.f.iter()).chain(m.l.iter()).chain(m.r.iter())
            .chain(m.sigma_eps.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NumericalFailure {
                context: "ModelSpec::evaluate",
                detail: "non-finite matrix entry".into(),
            });
        }
        let asym = (&m.sigma_eps - m.sigma_eps.transpose()).amax();
        if asym > 1e-10 * (1.0 + m.sigma_eps.amax()) {
            return Err(Error::InvalidInput("Sigma_eps is not symmetric".into()));
        }
        let min_eig = linalg::min_symmetric_eigenvalue(&m.sigma_eps);
        if min_eig < -1e-10 * (1.0 + m.sigma_eps.amax()) {
            return Err(Error::InvalidInput(format!(
                "Sigma_eps is not PSD (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(m)
    }

    /// Samples parameter vectors in bounds and checks ρ(R) < 1 at each.
    pub fn check_shock_stability(&self, pv: &ParamVector, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unif = rand::distr::Uniform::new_inclusive(0.0f64, 1.0).unwrap();
        for k in 0..samples {
            let vals: Vec<f64> = pv
                .bounds()
                .iter()
                .map(|b| b.lo + unif.sample(&mut rng) * b.width())
                .collect();
            let m = self.evaluate(&vals)?;
            let rho = linalg::spectral_radius(&m.r);
            if rho >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "R spectral radius {rho} >= 1 at sampled theta #{k}"
                )));
            }
        }
        Ok(())
    }
}

/// A dummy row `E_t[X_{j,t+1}] = X_{m,t}` detected in canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DummyRow {
    /// System row index carrying the identity.
    pub row: usize,
    /// Predetermined state defined by the row.
    pub state: usize,
    /// Source state: X_{state,t} = X_{source,t-1} exactly.
    pub source: usize,
}

/// Detects canonical dummy rows: F-row = e_j, G-row = e_m, L-row = 0.
pub fn detect_dummy_rows(m: &SystemMatrices) -> Result<Vec<DummyRow>> {
    let n_x = m.g.nrows();
    let mut out = Vec::new();
    let unit_entry = |row: nalgebra::RowDVector<f64>| -> Option<usize> {
        let mut idx = None;
        for (j, &v) in row.iter().enumerate() {
            if v.abs() > 1e-12 {
                if idx.is_some() || (v - 1.0).abs() > 1e-9 {
                    return None;
                }
                idx = Some(j);
            }
        }
        idx
    };
    for r in 0..n_x {
        let f_unit = unit_entry(m.f.row(r).into_owned());
        if let Some(j) = f_unit {
            let g_unit = unit_entry(m.g.row(r).into_owned());
            let l_zero = m.l.row(r).iter().all(|v| v.abs() <= 1e-12);
            if let (Some(src), true) = (g_unit, l_zero) {
                out.push(DummyRow { row: r, state: j, source: src });
            }
        }
    }
    let mut states: Vec<usize> = out.iter().map(|d| d.state).collect();
    states.sort_unstable();
    states.dedup();
    if states.len() != out.len() {
        return Err(Error::InvalidInput(
            "a predetermined state is defined by more than one dummy row".into(),
        ));
    }
    Ok(out)
}

/// Decision-rule matrices at an accepted parameter point.
#[derive(Debug, Clone)]
pub struct Solution {
    pub p_star: DMatrix<f64>,
    pub q_star: DMatrix<f64>,
    pub theta: ParamVector,
    /// Finite roots of det(λF - G) = 0; infinite roots omitted.
    pub pencil_roots: Vec<Complex<f64>>,
    pub n_stable: usize,
    pub n_predetermined: usize,
    /// max-abs residual of (F P* - G) P* = 0.
    pub residual_p: f64,
    /// max-abs residual of the Q* equation (G - F P*) Q* - F Q* R = L.
    pub residual_q: f64,
}

/// Solves for the unique stable decision rule by ordered spectral
/// decomposition of the pencil det(λF - G), then a Sylvester-type solve.
pub fn solve_re(spec: &ModelSpec, theta: &ParamVector) -> Result<Solution> {
    let mats = spec.evaluate(theta.values())?;
    solve_system(&mats, theta)
}

/// Same as [`solve_re`] but on already-evaluated matrices.
pub fn solve_system(mats: &SystemMatrices, theta: &ParamVector) -> Result<Solution> {
    let n_x = mats.g.nrows();

    let dummies = detect_dummy_rows(mats)?;
    let n_k = dummies.len();

    let all_roots = linalg::pencil_roots(&mats.g, &mats.f)?;
    let finite: Vec<Complex<f64>> = all_roots.iter().flatten().copied().collect();
    let stable: Vec<Complex<f64>> = finite
        .iter()
        .copied()
        .filter(|z| z.norm() < 1.0 - TIE_TOL)
        .collect();
    let n_s = stable.len();

    if n_s > n_k {
        return Err(Error::Indeterminate { stable: n_s, predetermined: n_k });
    }
    if n_s < n_k {
        return Err(Error::NoStableSolution { stable: n_s, predetermined: n_k });
    }

    let p_star = if n_k == 0 {
        DMatrix::<f64>::zeros(n_x, n_x)
    } else {
        build_p(mats, &dummies, &stable)?
    };

    let residual_p = ((&mats.f * &p_star - &mats.g) * &p_star).amax();
    if residual_p > TOL_SOLVE {
        return Err(Error::NumericalFailure {
            context: "solve_re",
            detail: format!("P residual {residual_p:e} exceeds tol_solve"),
        });
    }
    let rho_p = linalg::spectral_radius(&p_star);
    if rho_p >= 1.0 - TIE_TOL {
        return Err(Error::NumericalFailure {
            context: "solve_re",
            detail: format!("spectral radius of P* is {rho_p}"),
        });
    }

    let q_star = solve_q(mats, &p_star, &dummies)?;
    let residual_q =
        ((&mats.g - &mats.f * &p_star) * &q_star - &mats.f * &q_star * &mats.r - &mats.l).amax();
    if residual_q > TOL_SOLVE {
        return Err(Error::NumericalFailure {
            context: "solve_re",
            detail: format!("Q residual {residual_q:e} exceeds tol_solve"),
        });
    }

    let mut pencil_roots = finite;
    pencil_roots.sort_by(|a, b| {
        (a.norm(), a.re, a.im)
            .partial_cmp(&(b.norm(), b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    Ok(Solution {
        p_star,
        q_star,
        theta: theta.clone(),
        pencil_roots,
        n_stable: n_s,
        n_predetermined: n_k,
        residual_p,
        residual_q,
    })
}

/// Builds P* from the stable deflating subspace plus the exact dummy laws.
fn build_p(
    mats: &SystemMatrices,
    dummies: &[DummyRow],
    stable: &[Complex<f64>],
) -> Result<DMatrix<f64>> {
    let n_x = mats.g.nrows();
    let n_k = dummies.len();

    // Real basis of the stable right deflating subspace. Complex roots come in
    // conjugate pairs; keep the Im > 0 representative and split into Re/Im.
    let mut sorted = stable.to_vec();
    sorted.sort_by(|a, b| {
        (a.norm(), a.re, a.im)
            .partial_cmp(&(b.norm(), b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n_k);
    let mut used = vec![false; sorted.len()];
    for i in 0..sorted.len() {
        if used[i] {
            continue;
        }
        let lam = sorted[i];
        if lam.im.abs() <= 1e-10 {
            used[i] = true;
            let v = linalg::pencil_null_vector(&mats.g, &mats.f, Complex::new(lam.re, 0.0))?;
            let imag_norm: f64 = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
            if imag_norm > 1e-8 {
                return Err(Error::NumericalFailure {
                    context: "solve_re",
                    detail: "real root produced a complex eigenvector".into(),
                });
            }
            basis.push(DVector::from_iterator(n_x, v.iter().map(|z| z.re)));
        } else {
            // Find the conjugate partner.
            let mut partner = None;
            for (j, cand) in sorted.iter().enumerate() {
                if j != i && !used[j] && (cand.conj() - lam).norm() < 1e-8 * (1.0 + lam.norm()) {
                    partner = Some(j);
                    break;
                }
            }
            let j = partner.ok_or_else(|| Error::NumericalFailure {
                context: "solve_re",
                detail: "complex stable root without conjugate partner".into(),
            })?;
            used[i] = true;
            used[j] = true;
            let rep = if lam.im > 0.0 { lam } else { lam.conj() };
            let v = linalg::pencil_null_vector(&mats.g, &mats.f, rep)?;
            basis.push(DVector::from_iterator(n_x, v.iter().map(|z| z.re)));
            basis.push(DVector::from_iterator(n_x, v.iter().map(|z| z.im)));
        }
    }
    if basis.len() != n_k {
        return Err(Error::NumericalFailure {
            context: "solve_re",
            detail: format!("stable basis has {} columns for {} predetermined states", basis.len(), n_k),
        });
    }
    let mut v_full = DMatrix::<f64>::zeros(n_x, n_k);
    for (c, col) in basis.iter().enumerate() {
        v_full.set_column(c, col);
    }

    let pre: Vec<usize> = dummies.iter().map(|d| d.state).collect();
    let jumps: Vec<usize> = (0..n_x).filter(|i| !pre.contains(i)).collect();

    let mut v_k = DMatrix::<f64>::zeros(n_k, n_k);
    for (ri, &s) in pre.iter().enumerate() {
        v_k.set_row(ri, &v_full.row(s));
    }
    if linalg::rcond(&v_k) < 1.0 / linalg::COND_MAX {
        return Err(Error::NumericalFailure {
            context: "solve_re",
            detail: "stable subspace is orthogonal to the predetermined states".into(),
        });
    }
    let mut v_d = DMatrix::<f64>::zeros(jumps.len(), n_k);
    for (ri, &s) in jumps.iter().enumerate() {
        v_d.set_row(ri, &v_full.row(s));
    }
    let v_k_inv = v_k.clone().lu().try_inverse().ok_or_else(|| Error::NumericalFailure {
        context: "solve_re",
        detail: "V_k inversion failed".into(),
    })?;
    let ratio = v_d * v_k_inv; // jumps = ratio * predetermined

    // Exact laws for the predetermined block.
    let mut p_k = DMatrix::<f64>::zeros(n_k, n_x);
    for (ri, d) in dummies.iter().enumerate() {
        p_k[(ri, d.source)] = 1.0;
    }
    let p_d = &ratio * &p_k;

    let mut p = DMatrix::<f64>::zeros(n_x, n_x);
    for (ri, &s) in pre.iter().enumerate() {
        p.set_row(s, &p_k.row(ri));
    }
    for (ri, &s) in jumps.iter().enumerate() {
        p.set_row(s, &p_d.row(ri));
    }
    Ok(p)
}

/// Solves (G - F P) Q - F Q R = L for Q, with dummy-row equations replaced by
/// the exactness conditions Q[j, :] = 0.
fn solve_q(mats: &SystemMatrices, p: &DMatrix<f64>, dummies: &[DummyRow]) -> Result<DMatrix<f64>> {
    let n_x = mats.g.nrows();
    let n_z = mats.l.ncols();
    let gfp = &mats.g - &mats.f * p;

    let dim = n_x * n_z;
    let mut big = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    // vec is column-major: unknown Q[i, s] sits at s*n_x + i.
    for s in 0..n_z {
        for r in 0..n_x {
            let eq = s * n_x + r;
            for i in 0..n_x {
                big[(eq, s * n_x + i)] += gfp[(r, i)];
            }
            for sp in 0..n_z {
                for i in 0..n_x {
                    big[(eq, sp * n_x + i)] -= mats.f[(r, i)] * mats.r[(sp, s)];
                }
            }
            rhs[eq] = mats.l[(r, s)];
        }
    }
    for d in dummies {
        for s in 0..n_z {
            let eq = s * n_x + d.row;
            for c in 0..dim {
                big[(eq, c)] = 0.0;
            }
            big[(eq, s * n_x + d.state)] = 1.0;
            rhs[eq] = 0.0;
        }
    }
    let x = linalg::solve_lu(&big, &rhs, "Q* Sylvester system")?;
    let mut q = DMatrix::<f64>::zeros(n_x, n_z);
    for s in 0..n_z {
        for i in 0..n_x {
            q[(i, s)] = x[s * n_x + i];
        }
    }
    Ok(q)
}

/// A simulated path from a solved model.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    /// T x n_x endogenous states.
    pub x: DMatrix<f64>,
    /// T x n_z exogenous states.
    pub z: DMatrix<f64>,
    /// T x n_y observables (selector rows of x).
    pub y: DMatrix<f64>,
}

/// Simulates `X_t = P* X_{t-1} + Q* Z_t`, `Z_t = R Z_{t-1} + ε_t` for `t = 1..T`
/// from zero initial conditions, discarding `burn` initial periods.
pub fn simulate(
    spec: &ModelSpec,
    sol: &Solution,
    t_len: usize,
    burn: usize,
    seed: u64,
) -> Result<SimulatedPath> {
    let mats = spec.evaluate(sol.theta.values())?;
    let chol = linalg::psd_sqrt(&mats.sigma_eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let total = t_len + burn;
    let n_x = spec.n_x;
    let n_z = spec.n_z;
    let mut x = DMatrix::<f64>::zeros(t_len, n_x);
    let mut z = DMatrix::<f64>::zeros(t_len, n_z);
    let mut xv = DVector::<f64>::zeros(n_x);
    let mut zv = DVector::<f64>::zeros(n_z);
    for t in 0..total {
        let eps_raw = DVector::from_iterator(n_z, (0..n_z).map(|_| std_normal.sample(&mut rng)));
        let eps = &chol * eps_raw;
        zv = &mats.r * &zv + eps;
        xv = &sol.p_star * &xv + &sol.q_star * &zv;
        if t >= burn {
            x.set_row(t - burn, &xv.transpose());
            z.set_row(t - burn, &zv.transpose());
        }
    }
    let n_y = spec.n_y();
    let mut y = DMatrix::<f64>::zeros(t_len, n_y);
    for (c, &si) in spec.observation_selector.iter().enumerate() {
        y.set_column(c, &x.column(si));
    }
    Ok(SimulatedPath { x, z, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Bound;
    use approx::assert_relative_eq;

    fn fixed_spec(
        g: DMatrix<f64>,
        f: DMatrix<f64>,
        l: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma: DMatrix<f64>,
        obs: Vec<usize>,
        signs: Vec<i8>,
    ) -> ModelSpec {
        let n_x = g.nrows();
        let n_z = l.ncols();
        let map: MatrixMap = Arc::new(move |_theta: &[f64]| {
            Ok(SystemMatrices {
                g: g.clone(),
                f: f.clone(),
                l: l.clone(),
                r: r.clone(),
                sigma_eps: sigma.clone(),
            })
        });
        ModelSpec::new(n_x, n_z, map, obs, signs).unwrap()
    }

    fn theta0() -> ParamVector {
        ParamVector::unnamed(vec![0.0], vec![Bound::new(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn static_model_decision_rule_equals_shock_loading() {
        // G = I, F = 0, L = I, R = 0 -> P* = 0, Q* = I.
        let n = 3;
        let spec = fixed_spec(
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            vec![0, 1, 2],
            vec![0, 0, 0],
        );
        let sol = solve_re(&spec, &theta0()).unwrap();
        assert_eq!(sol.p_star.amax(), 0.0);
        assert!((&sol.q_star - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn scalar_model_matches_hand_oracle() {
        // G=1, F=beta=0.99, L=1, R=rho=0.9. Oracle: beta*P^2 - P = 0 with
        // |P|<1 gives P*=0; then (beta*rho - 1) Q = -1 gives Q = 1/(1-beta*rho).
        let beta = 0.99;
        let rho = 0.9;
        let spec = fixed_spec(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[beta]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[rho]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![0],
            vec![0],
        );
        let sol = solve_re(&spec, &theta0()).unwrap();
        // Hand oracle for the quadratic: roots of beta*p^2 - p = 0 are {0, 1/beta}.
        let p_roots = [0.0, 1.0 / beta];
        let stable: Vec<f64> = p_roots.iter().copied().filter(|p| p.abs() < 1.0).collect();
        assert_eq!(stable, vec![0.0]);
        assert_eq!(sol.p_star[(0, 0)], 0.0);
        let q_oracle = -1.0 / (beta * rho - 1.0);
        assert_relative_eq!(sol.q_star[(0, 0)], q_oracle, epsilon = 1e-12);
        assert_relative_eq!(sol.q_star[(0, 0)], 1.0 / (1.0 - beta * rho), epsilon = 1e-12);
    }

    /// RBC investment model in first-order form with one dummy state for the
    /// lagged investment level.
    pub(crate) fn rbc_spec(alpha: f64, sbar: f64, omega: f64, rho_z: f64) -> ModelSpec {
        // a2*E I_{t+1} - a1*I_t + I_{t-1} = a0 * Z_t
        let a2 = sbar / alpha;
        let a1 = 1.0 + ((1.0 - alpha) * (1.0 - sbar) + sbar * omega) / (alpha * omega);
        let a0 = 1.0 / alpha;
        // States: (I_t, Ilag_t). Rows: Euler, dummy Ilag_{t+1} = I_t.
        let g = DMatrix::from_row_slice(2, 2, &[a1, -1.0, 1.0, 0.0]);
        let f = DMatrix::from_row_slice(2, 2, &[a2, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 1, &[a0, 0.0]);
        let r = DMatrix::from_row_slice(1, 1, &[rho_z]);
        let sigma = DMatrix::from_row_slice(1, 1, &[1.0]);
        fixed_spec(g, f, l, r, sigma, vec![0], vec![-1])
    }

    #[test]
    fn rbc_roots_match_quadratic_formula_oracle() {
        let (alpha, sbar, omega) = (0.33, 0.20, 2.0);
        assert!(alpha > sbar, "saddle condition");
        let spec = rbc_spec(alpha, sbar, omega, 0.0);
        let sol = solve_re(&spec, &theta0()).unwrap();

        // Independent quadratic-formula oracle on (sbar/alpha) r^2 - a1 r + 1 = 0.
        let a2 = sbar / alpha;
        let a1 = 1.0 + ((1.0 - alpha) * (1.0 - sbar) + sbar * omega) / (alpha * omega);
        let disc = (a1 * a1 - 4.0 * a2).sqrt();
        let r1 = (a1 - disc) / (2.0 * a2);
        let r2 = (a1 + disc) / (2.0 * a2);
        assert!(r1.abs() < 1.0 && r2.abs() > 1.0, "exactly one root inside the unit circle");

        let mut got: Vec<f64> = sol.pencil_roots.iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got.len(), 2);
        assert!(sol.pencil_roots.iter().all(|z| z.im.abs() < 1e-12));
        assert_relative_eq!(got[0], r1, epsilon = 1e-12);
        assert_relative_eq!(got[1], r2, epsilon = 1e-12);

        // The decision rule loads lagged investment with the stable root.
        assert_relative_eq!(sol.p_star[(0, 0)], r1, epsilon = 1e-9);
        assert_relative_eq!(sol.p_star[(1, 0)], 1.0, epsilon = 1e-12);
        assert!(sol.residual_p <= TOL_SOLVE && sol.residual_q <= TOL_SOLVE);
    }

    #[test]
    fn indeterminate_and_explosive_classification() {
        // G = 0.5, F = 1: root 0.5 stable with no predetermined state.
        let spec = fixed_spec(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![0],
            vec![0],
        );
        assert!(matches!(
            solve_re(&spec, &theta0()),
            Err(Error::Indeterminate { stable: 1, predetermined: 0 })
        ));

        // x_t = 1.5 * x_{t-1} + z_t via a dummy state: the only pencil root is
        // 1.5, so there is no stable rule for the predetermined state.
        let g = DMatrix::from_row_slice(2, 2, &[1.0, -1.5, 1.0, 0.0]);
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let spec_explosive = fixed_spec(
            g,
            f,
            l,
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![0],
            vec![0],
        );
        assert!(matches!(
            solve_re(&spec_explosive, &theta0()),
            Err(Error::NoStableSolution { stable: 0, predetermined: 1 })
        ));
    }

    #[test]
    fn backward_ar_via_dummy_state_recovers_persistence() {
        // x_t = a x_{t-1} + z_t encoded with a dummy state.
        let a = 0.8;
        let g = DMatrix::from_row_slice(2, 2, &[1.0, -a, 1.0, 0.0]);
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let spec = fixed_spec(
            g,
            f,
            l,
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![0],
            vec![0],
        );
        let sol = solve_re(&spec, &theta0()).unwrap();
        // x loads a on its own lag (through the dummy), the dummy copies x.
        assert_relative_eq!(sol.p_star[(0, 0)], a, epsilon = 1e-10);
        assert_relative_eq!(sol.p_star[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.q_star[(0, 0)], 1.0, epsilon = 1e-10);
        assert_eq!(sol.q_star[(1, 0)], 0.0);
    }

    #[test]
    fn law_of_motion_consistency_on_simulated_path() {
        let spec = rbc_spec(0.33, 0.20, 2.0, 0.6);
        let sol = solve_re(&spec, &theta0()).unwrap();
        let path = simulate(&spec, &sol, 200, 50, 7).unwrap();
        let mats = spec.evaluate(sol.theta.values()).unwrap();
        for t in 0..200 {
            let x_t = path.x.row(t).transpose();
            let z_t = path.z.row(t).transpose();
            // E_t X_{t+1} = P* X_t + Q* R Z_t
            let ex_next = &sol.p_star * &x_t + &sol.q_star * &mats.r * &z_t;
            let resid = &mats.g * &x_t - &mats.f * ex_next - &mats.l * &z_t;
            assert!(resid.amax() < 1e-8, "t={t}: {:e}", resid.amax());
        }
    }

    #[test]
    fn solve_is_deterministic_bitwise() {
        let spec = rbc_spec(0.33, 0.20, 2.0, 0.5);
        let a = solve_re(&spec, &theta0()).unwrap();
        let b = solve_re(&spec, &theta0()).unwrap();
        assert_eq!(a.p_star.as_slice(), b.p_star.as_slice());
        assert_eq!(a.q_star.as_slice(), b.q_star.as_slice());
        let ra: Vec<(u64, u64)> = a.pencil_roots.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
        let rb: Vec<(u64, u64)> = b.pencil_roots.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
        assert_eq!(ra, rb);
    }
}
