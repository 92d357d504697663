//! Property tests over random model and program instances.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;

use setid_core::linalg;
use setid_core::model::{self, MatrixMap, ModelSpec, SystemMatrices};
use setid_core::moments::Direction;
use setid_core::params::{Bound, ParamVector};
use setid_core::qp::{solve_weights_qp, verify_feasibility};

fn theta0() -> ParamVector {
    ParamVector::unnamed(vec![0.0], vec![Bound::new(-1.0, 1.0)]).unwrap()
}

fn spec_from(mats: SystemMatrices, n_x: usize, n_z: usize) -> ModelSpec {
    let map: MatrixMap = Arc::new(move |_: &[f64]| Ok(mats.clone()));
    ModelSpec::new(n_x, n_z, map, vec![0], vec![0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Models whose pencil roots are all outside the unit circle solve to the
    /// unique stable rule P* = 0 with tight residuals.
    #[test]
    fn forward_models_solve_to_zero_p(
        n in 1usize..5,
        g_seed in prop::collection::vec(-1.0f64..1.0, 25),
        f_seed in prop::collection::vec(-1.0f64..1.0, 25),
        rho_f in 0.05f64..0.9,
        rho_r in 0.0f64..0.9,
    ) {
        let g = DMatrix::<f64>::from_fn(n, n, |i, j| {
            g_seed[i * 5 + j] * 0.3 + if i == j { 1.5 } else { 0.0 }
        });
        // F = G * M with spectral radius of M strictly inside the unit circle,
        // so all pencil roots 1/eig(M) are unstable.
        let mut m = DMatrix::<f64>::from_fn(n, n, |i, j| f_seed[i * 5 + j]);
        let r = linalg::spectral_radius(&m).max(1e-6);
        m *= rho_f / r;
        let f = &g * m;
        let l = DMatrix::<f64>::from_fn(n, 1, |i, _| g_seed[i] + 0.1);
        let rmat = DMatrix::from_row_slice(1, 1, &[rho_r]);
        let sigma = DMatrix::identity(1, 1);
        let mats = SystemMatrices { g, f, l, r: rmat, sigma_eps: sigma };
        let spec = spec_from(mats, n, 1);
        let sol = model::solve_re(&spec, &theta0()).unwrap();
        prop_assert_eq!(sol.p_star.amax(), 0.0);
        prop_assert!(sol.residual_p <= model::TOL_SOLVE);
        prop_assert!(sol.residual_q <= model::TOL_SOLVE);
    }

    /// Saddle blocks with one dummy state recover the stable root in P* and
    /// satisfy both ASSUMPTION-EQ equations.
    #[test]
    fn saddle_models_recover_the_stable_root(
        rho_stable in 0.05f64..0.9,
        rho_unstable in 1.1f64..6.0,
        rho_r in 0.0f64..0.9,
        shock_load in 0.2f64..3.0,
    ) {
        // Lag polynomial a2 x^2 - a1 x + 1 with roots {rho_stable, rho_unstable}.
        let a2 = 1.0 / (rho_stable * rho_unstable);
        let a1 = (rho_stable + rho_unstable) * a2;
        let g = DMatrix::from_row_slice(2, 2, &[a1, -1.0, 1.0, 0.0]);
        let f = DMatrix::from_row_slice(2, 2, &[a2, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 1, &[shock_load, 0.0]);
        let rmat = DMatrix::from_row_slice(1, 1, &[rho_r]);
        let mats = SystemMatrices { g, f, l, r: rmat, sigma_eps: DMatrix::identity(1, 1) };
        let spec = spec_from(mats, 2, 1);
        let sol = model::solve_re(&spec, &theta0()).unwrap();
        prop_assert!((sol.p_star[(0, 0)] - rho_stable).abs() < 1e-7);
        prop_assert!(sol.residual_p <= model::TOL_SOLVE);
        prop_assert!(sol.residual_q <= model::TOL_SOLVE);
        prop_assert!(linalg::spectral_radius(&sol.p_star) < 1.0);
    }

    /// Direction satisfaction status is invariant to positive scaling.
    #[test]
    fn direction_status_is_positively_homogeneous(
        q in -2.0f64..2.0,
        scale in 0.001f64..1000.0,
        which in 0usize..3,
    ) {
        let dir = [Direction::GeqZero, Direction::LeqZero, Direction::Eq][which];
        let tol = 1e-12;
        prop_assert_eq!(
            dir.satisfied(q, tol * q.abs().max(1.0)),
            dir.satisfied(q * scale, tol * (q * scale).abs().max(1.0))
        );
    }

    /// Every weight solve that succeeds satisfies the program constraints.
    #[test]
    fn qp_solutions_are_always_feasible(
        vals in prop::collection::vec(-1.0f64..1.0, 30),
        shift in -0.6f64..0.6,
        p_eq in 0usize..2,
    ) {
        let q = DMatrix::<f64>::from_fn(30, 1, |t, _| vals[t] + shift);
        match solve_weights_qp(&q, p_eq) {
            Ok(w) => {
                verify_feasibility(&q, p_eq, &w.m, 1e-8).unwrap();
                // Complementary slackness.
                for t in 0..30 {
                    prop_assert!(w.lambda3[t] * w.m[t] <= 1e-8);
                    prop_assert!(w.m[t] >= -1e-10);
                }
                let mean = w.m.sum() / 30.0;
                prop_assert!((mean - 1.0).abs() < 1e-8);
            }
            Err(setid_core::Error::QpInfeasible { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    /// The analytic weights reproduce -mu through the round trip
    /// (F Γ - G) λ = -μ for random invertible systems.
    #[test]
    fn mu_lambda_round_trip(
        seeds in prop::collection::vec(-1.0f64..1.0, 16 + 4),
        gdiag in 2.0f64..4.0,
    ) {
        let n = 4;
        let f = DMatrix::<f64>::from_fn(n, n, |i, j| seeds[i * n + j] * 0.5);
        let g = DMatrix::<f64>::from_fn(n, n, |i, j| {
            seeds[(i * n + j + 3) % 16] * 0.3 + if i == j { gdiag } else { 0.0 }
        });
        let gamma = DMatrix::<f64>::from_fn(n, n, |i, j| if i == j { 0.4 } else { 0.02 });
        let mu = DVector::<f64>::from_fn(n, |i, _| seeds[16 + i]);
        let out = setid_core::wedge::mu_to_lambda_mats(&f, &g, &gamma, &mu, false).unwrap();
        let back = (&f * &gamma - &g) * &out.lambda_mean;
        for i in 0..n {
            prop_assert!((back[i] + mu[i]).abs() < 1e-10);
        }
    }
}
