//! Innovation-form state space built from a solved model.
//!
//! The augmented state is `X̄_t = (X_t, Z_t)` with
//!
//! ```text
//!     X̄_t = A X̄_{t-1} + B ε_t,      Y_t = C X̄_t,
//!     A = [P*  Q*R; 0  R],           B = [Q*; I].
//! ```
//!
//! The steady-state Kalman gain is found by iterating the prediction Riccati
//! recursion to its fixed point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ModelSpec, Solution};

pub const TOL_RICCATI: f64 = 1e-10;
pub const MAX_RICCATI_ITERS: usize = 10_000;

/// State-space system with precomputed steady-state filter quantities.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Shock covariance Σ_ε (so the state noise covariance is B Σ_ε B').
    pub sigma_eps: DMatrix<f64>,
    /// Steady-state predictive gain K in `X̂_{t+1|t} = A X̂_{t|t-1} + K a_t`.
    pub steady_gain: DMatrix<f64>,
    /// Steady-state innovation covariance Σ_a = C P∞ C'.
    pub innovation_cov: DMatrix<f64>,
    /// Stationary state covariance, used as the default P_{1|0}.
    pub init_cov: DMatrix<f64>,
    /// LCI-3 style check: C B Σ_ε B' C' nonsingular.
    pub d_cov_nonsingular: bool,
    /// Iterations until the Riccati recursion reached its fixed point.
    pub riccati_iters: usize,
}

impl StateSpace {
    /// Validates dimensions and stability, solves the stationary Lyapunov
    /// equation and iterates the Riccati recursion to the steady gain.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_eps: DMatrix<f64>,
    ) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x || b.nrows() != n_x || c.ncols() != n_x {
            return Err(Error::DimensionMismatch {
                context: "StateSpace",
                expected: format!("A {n_x}x{n_x}, B {n_x}xn_z, C n_Yx{n_x}"),
                got: format!(
                    "A {}x{}, B {}x{}, C {}x{}",
                    a.nrows(), a.ncols(), b.nrows(), b.ncols(), c.nrows(), c.ncols()
                ),
            });
        }
        let n_z = b.ncols();
        if sigma_eps.nrows() != n_z || sigma_eps.ncols() != n_z {
            return Err(Error::DimensionMismatch {
                context: "StateSpace sigma",
                expected: format!("{n_z}x{n_z}"),
                got: format!("{}x{}", sigma_eps.nrows(), sigma_eps.ncols()),
            });
        }
        let rho = linalg::spectral_radius(&a);
        if rho >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "A spectral radius {rho} >= 1; stationarity (LCI-2) fails"
            )));
        }
        let q_w = &b * &sigma_eps * b.transpose();
        let init_cov = linalg::lyapunov(&a, &q_w)?;
        let d_cov = &c * &q_w * c.transpose();
        let d_cov_nonsingular = linalg::rcond(&d_cov) > 1.0 / linalg::COND_MAX;

        let (steady_gain, innovation_cov, riccati_iters) =
            riccati_steady(&a, &c, &q_w, &init_cov)?;

        Ok(StateSpace {
            a,
            b,
            c,
            sigma_eps,
            steady_gain,
            innovation_cov,
            init_cov,
            d_cov_nonsingular,
            riccati_iters,
        })
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.c.nrows()
    }
}

/// Iterates `P <- A(P - P C' S^{-1} C P)A' + Q` to a fixed point and returns
/// the steady gain `A P C' S^{-1}`, the innovation covariance `C P C'` and the
/// number of iterations used.
fn riccati_steady(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q_w: &DMatrix<f64>,
    p0: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    let mut p = p0.clone();
    let mut last_step = f64::INFINITY;
    for it in 0..MAX_RICCATI_ITERS {
        let s = c * &p * c.transpose();
        let s_inv = invert_innovation_cov(&s)?;
        let gain = a * &p * c.transpose() * &s_inv;
        let next = a * &p * a.transpose() - &gain * &s * gain.transpose() + q_w;
        let next = (&next + next.transpose()) * 0.5;
        last_step = (&next - &p).amax();
        p = next;
        if last_step < TOL_RICCATI {
            let s = c * &p * c.transpose();
            let s_inv = invert_innovation_cov(&s)?;
            let gain = a * &p * c.transpose() * &s_inv;
            return Ok((gain, s, it + 1));
        }
    }
    Err(Error::RiccatiDivergence { iters: MAX_RICCATI_ITERS, last_step })
}

/// Inverts the innovation covariance, falling back to a pseudo-inverse when it
/// is numerically singular.
pub(crate) fn invert_innovation_cov(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (s + s.transpose()) * 0.5;
    if linalg::rcond(&sym) > 1.0 / linalg::COND_MAX {
        sym.clone().lu().try_inverse().ok_or_else(|| Error::NumericalFailure {
            context: "innovation covariance",
            detail: "LU inversion failed".into(),
        })
    } else {
        Ok(linalg::pseudo_inverse(&sym, 1e-12))
    }
}

/// Assembles the augmented innovation-form system from a solved model and
/// computes the steady-state filter quantities.
pub fn assemble_state_space(sol: &Solution, spec: &ModelSpec) -> Result<StateSpace> {
    let mats = spec.evaluate(sol.theta.values())?;
    let n_x = spec.n_x;
    let n_z = spec.n_z;
    let n = n_x + n_z;

    let mut a = DMatrix::<f64>::zeros(n, n);
    a.view_mut((0, 0), (n_x, n_x)).copy_from(&sol.p_star);
    a.view_mut((0, n_x), (n_x, n_z)).copy_from(&(&sol.q_star * &mats.r));
    a.view_mut((n_x, n_x), (n_z, n_z)).copy_from(&mats.r);

    let mut b = DMatrix::<f64>::zeros(n, n_z);
    b.view_mut((0, 0), (n_x, n_z)).copy_from(&sol.q_star);
    b.view_mut((n_x, 0), (n_z, n_z)).copy_from(&DMatrix::identity(n_z, n_z));

    let n_y = spec.n_y();
    let mut c = DMatrix::<f64>::zeros(n_y, n);
    for (k, &si) in spec.observation_selector.iter().enumerate() {
        c[(k, si)] = 1.0;
    }

    StateSpace::new(a, b, c, mats.sigma_eps.clone())
}

/// Simulates observables from a state space (zero initial state).
pub fn simulate_state_space(
    ss: &StateSpace,
    t_len: usize,
    burn: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let chol = linalg::psd_sqrt(&ss.sigma_eps)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let n = ss.n_state();
    let n_z = ss.b.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut y = DMatrix::<f64>::zeros(t_len, ss.n_obs());
    for t in 0..t_len + burn {
        let eps_raw = DVector::from_iterator(n_z, (0..n_z).map(|_| std_normal.sample(&mut rng)));
        x = &ss.a * &x + &ss.b * (&chol * eps_raw);
        if t >= burn {
            let obs = &ss.c * &x;
            y.set_row(t - burn, &obs.transpose());
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn fully_observed_scalar_gain_equals_a() {
        // A=0.9, B=1, C=1, exact observation: hand Riccati
        //   P_{t+1} = 0.81 (P - P^2/P) + 1 = 1, S = P = 1, K = A P / S = 0.9.
        let ss = StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[0.9]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        assert_relative_eq!(ss.steady_gain[(0, 0)], 0.9, epsilon = 1e-9);
        assert_relative_eq!(ss.innovation_cov[(0, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn riccati_matches_brute_force_recursion() {
        // Random stable 3-state system; oracle is the plain recursion run
        // 10_000 times with no convergence shortcut.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut a = DMatrix::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = rng.random_range(-0.5..0.5);
            }
        }
        let rho = linalg::spectral_radius(&a);
        if rho >= 0.95 {
            a *= 0.9 / rho;
        }
        let b = DMatrix::<f64>::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let sigma = DMatrix::identity(2, 2);
        let ss = StateSpace::new(a.clone(), b.clone(), c.clone(), sigma.clone()).unwrap();

        let q_w = &b * &sigma * b.transpose();
        let mut p = linalg::lyapunov(&a, &q_w).unwrap();
        for _ in 0..10_000 {
            let s = &c * &p * c.transpose();
            let s_inv = s.clone().lu().try_inverse().unwrap();
            let k = &a * &p * c.transpose() * &s_inv;
            p = &a * &p * a.transpose() - &k * &s * k.transpose() + &q_w;
            p = (&p + p.transpose()) * 0.5;
        }
        let s = &c * &p * c.transpose();
        let k = &a * &p * c.transpose() * s.clone().lu().try_inverse().unwrap();
        assert!((&ss.steady_gain - &k).amax() < 1e-10);
        assert!((&ss.innovation_cov - &s).amax() < 1e-10);
    }

    #[test]
    fn static_solution_gives_zero_transition_for_states() {
        use crate::model::{self, MatrixMap, SystemMatrices};
        use crate::params::{Bound, ParamVector};
        use std::sync::Arc;
        // P*=0, Q*=I, R=0: A has no feedback, forecasts are zero.
        let n = 2;
        let map: MatrixMap = Arc::new(move |_: &[f64]| {
            Ok(SystemMatrices {
                g: DMatrix::identity(n, n),
                f: DMatrix::zeros(n, n),
                l: DMatrix::identity(n, n),
                r: DMatrix::zeros(n, n),
                sigma_eps: DMatrix::identity(n, n),
            })
        });
        let spec = ModelSpec::new(n, n, map, vec![0, 1], vec![0, 0]).unwrap();
        let theta = ParamVector::unnamed(vec![0.0], vec![Bound::new(-1.0, 1.0)]).unwrap();
        let sol = model::solve_re(&spec, &theta).unwrap();
        let ss = assemble_state_space(&sol, &spec).unwrap();
        assert_eq!(ss.a.amax(), 0.0);
    }
}
