//! Kalman filtering in innovation form: one-step-ahead state predictions,
//! gains and forecast errors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::state_space::{invert_innovation_cov, StateSpace, MAX_RICCATI_ITERS, TOL_RICCATI};

/// Optional initial condition; the default is a zero mean with the stationary
/// covariance (the unconditional moments exist under stability).
#[derive(Debug, Clone)]
pub struct FilterInit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// One full filtering pass.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// T x n_X one-step-ahead predictions X̂_{t|t-1}.
    pub x_pred: DMatrix<f64>,
    /// T x n_Y forecast errors a_t = Y_t - C X̂_{t|t-1}.
    pub innovations: DMatrix<f64>,
    /// Per-period gain until convergence; the steady gain afterwards.
    pub gain_path: Vec<DMatrix<f64>>,
    /// Index from which the gain is frozen at its steady value, if reached.
    pub steady_from: Option<usize>,
    /// Innovation covariances S_t (frozen at steady state after convergence).
    pub innovation_cov_path: Vec<DMatrix<f64>>,
    /// Gaussian log-likelihood (diagnostic only).
    pub loglik: f64,
}

/// Runs the filter over `data` (T x n_Y, rows are periods).
pub fn filter(ss: &StateSpace, data: &DMatrix<f64>, init: Option<FilterInit>) -> Result<FilterOutput> {
    let n_x = ss.n_state();
    let n_y = ss.n_obs();
    if data.ncols() != n_y {
        return Err(Error::DimensionMismatch {
            context: "filter data",
            expected: format!("{n_y} columns"),
            got: format!("{}", data.ncols()),
        });
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("data contains non-finite values".into()));
    }
    let t_len = data.nrows();
    let (mut x_hat, mut p) = match init {
        Some(i) => {
            if i.mean.len() != n_x || i.cov.nrows() != n_x || i.cov.ncols() != n_x {
                return Err(Error::DimensionMismatch {
                    context: "filter init",
                    expected: format!("mean {n_x}, cov {n_x}x{n_x}"),
                    got: format!("mean {}, cov {}x{}", i.mean.len(), i.cov.nrows(), i.cov.ncols()),
                });
            }
            let min_eig = linalg::min_symmetric_eigenvalue(&i.cov);
            if min_eig < -1e-10 * (1.0 + i.cov.amax()) {
                return Err(Error::NonPSDCovariance { t: 0, min_eig });
            }
            (i.mean, i.cov)
        }
        None => (DVector::zeros(n_x), ss.init_cov.clone()),
    };

    let q_w = &ss.b * &ss.sigma_eps * ss.b.transpose();
    let mut x_pred = DMatrix::<f64>::zeros(t_len, n_x);
    let mut innovations = DMatrix::<f64>::zeros(t_len, n_y);
    let mut gain_path = Vec::with_capacity(t_len);
    let mut innovation_cov_path = Vec::with_capacity(t_len);
    let mut steady_from = None;
    let mut loglik = 0.0;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    let mut frozen: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = None; // (K, S, S_inv)
    for t in 0..t_len {
        x_pred.set_row(t, &x_hat.transpose());
        let y_t = data.row(t).transpose();
        let a_t = &y_t - &ss.c * &x_hat;
        innovations.set_row(t, &a_t.transpose());

        let (gain, s, s_inv) = if let Some((k, s, si)) = &frozen {
            (k.clone(), s.clone(), si.clone())
        } else {
            let s = &ss.c * &p * ss.c.transpose();
            let s_inv = invert_innovation_cov(&s)?;
            let gain = &ss.a * &p * ss.c.transpose() * &s_inv;
            (gain, s, s_inv)
        };
        loglik += -0.5
            * (n_y as f64 * ln2pi
                + ln_det_psd(&s)?
                + (a_t.transpose() * &s_inv * &a_t)[(0, 0)]);

        x_hat = &ss.a * &x_hat + &gain * &a_t;

        if frozen.is_none() {
            // Joseph-form update protects positive semi-definiteness.
            let a_kc = &ss.a - &gain * &ss.c;
            let next = &a_kc * &p * a_kc.transpose() + &q_w;
            let next = (&next + next.transpose()) * 0.5;
            let min_eig = linalg::min_symmetric_eigenvalue(&next);
            if min_eig < -1e-10 * (1.0 + next.amax()) {
                return Err(Error::NonPSDCovariance { t, min_eig });
            }
            let step = (&next - &p).amax();
            p = next;
            if step < TOL_RICCATI || t + 1 >= MAX_RICCATI_ITERS {
                steady_from = Some(t + 1);
                let s_frozen = &ss.c * &p * ss.c.transpose();
                let s_inv_frozen = invert_innovation_cov(&s_frozen)?;
                let k_frozen = &ss.a * &p * ss.c.transpose() * &s_inv_frozen;
                frozen = Some((k_frozen, s_frozen, s_inv_frozen));
            }
        }
        gain_path.push(gain);
        innovation_cov_path.push(s);
    }

    Ok(FilterOutput {
        x_pred,
        innovations,
        gain_path,
        steady_from,
        innovation_cov_path,
        loglik,
    })
}

fn ln_det_psd(s: &DMatrix<f64>) -> Result<f64> {
    let sym = (s + s.transpose()) * 0.5;
    match sym.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
        }
        None => {
            let eig = sym.symmetric_eigenvalues();
            let mut acc = 0.0;
            for v in eig.iter() {
                if *v <= 0.0 {
                    return Err(Error::NonPSDCovariance { t: 0, min_eig: *v });
                }
                acc += v.ln();
            }
            Ok(acc)
        }
    }
}

/// Sample autocorrelations of each innovation column at lags `1..=max_lag`,
/// with the ±3/sqrt(T) whiteness band.
pub fn whiteness_check(innovations: &DMatrix<f64>, max_lag: usize) -> (Vec<Vec<f64>>, f64) {
    let t_len = innovations.nrows();
    let band = 3.0 / (t_len as f64).sqrt();
    let mut out = Vec::with_capacity(innovations.ncols());
    for c in 0..innovations.ncols() {
        let col: Vec<f64> = innovations.column(c).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / t_len as f64;
        let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let mut acs = Vec::with_capacity(max_lag);
        for lag in 1..=max_lag {
            let mut acc = 0.0;
            for t in lag..t_len {
                acc += (col[t] - mean) * (col[t - lag] - mean);
            }
            acs.push(if var > 0.0 { acc / var } else { 0.0 });
        }
        out.push(acs);
    }
    (out, band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::simulate_state_space;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn scalar_ss(a: f64) -> StateSpace {
        StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_steady_state_variance_and_gain() {
        let ss = scalar_ss(0.9);
        let y = simulate_state_space(&ss, 300, 50, 3).unwrap();
        let out = filter(&ss, &y, None).unwrap();
        // After convergence the prediction variance solves P = 1 exactly and
        // the gain equals A.
        let last_gain = out.gain_path.last().unwrap();
        assert_relative_eq!(last_gain[(0, 0)], 0.9, epsilon = 1e-8);
        assert_relative_eq!(out.innovation_cov_path.last().unwrap()[(0, 0)], 1.0, epsilon = 1e-8);
        assert!(out.steady_from.is_some());
    }

    #[test]
    fn noiseless_invertible_observation_inverts_state() {
        // C square invertible: X̂_{t+1|t} = A C^{-1} Y_t and
        // a_{t+1} = Y_{t+1} - C A C^{-1} Y_t.
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.4]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let ss = StateSpace::new(a.clone(), b, c.clone(), DMatrix::identity(2, 2)).unwrap();
        let y = simulate_state_space(&ss, 80, 20, 11).unwrap();
        let out = filter(&ss, &y, None).unwrap();
        let c_inv = c.clone().lu().try_inverse().unwrap();
        // Skip the first few periods while the filter is still learning.
        for t in 5..80 {
            let pred = &a * &c_inv * y.row(t - 1).transpose();
            let got = out.x_pred.row(t).transpose();
            assert!((&pred - &got).amax() < 1e-6, "t={t}");
            let a_expected = y.row(t).transpose() - &c * &pred;
            let a_got = out.innovations.row(t).transpose();
            assert!((&a_expected - &a_got).amax() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn innovations_identity_holds_exactly() {
        let ss = scalar_ss(0.7);
        let y = simulate_state_space(&ss, 150, 30, 5).unwrap();
        let out = filter(&ss, &y, None).unwrap();
        for t in 0..150 {
            let lhs = out.innovations[(t, 0)];
            let rhs = y[(t, 0)] - out.x_pred[(t, 0)];
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn loglik_matches_dense_covariance_oracle() {
        // 2-state system, T=50: evaluate the joint Gaussian density directly
        // by building the 50x50 block covariance of the stacked observations.
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.6]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.25]);
        let ss = StateSpace::new(a.clone(), b.clone(), c.clone(), DMatrix::identity(2, 2)).unwrap();
        let t_len = 50;
        let y = simulate_state_space(&ss, t_len, 100, 17).unwrap();
        let out = filter(&ss, &y, None).unwrap();

        let sigma_x = ss.init_cov.clone();
        // Cov(Y_t, Y_{t+k}) = C A^k Sigma_x C'.
        let mut cov = DMatrix::<f64>::zeros(t_len, t_len);
        for i in 0..t_len {
            for j in 0..=i {
                let k = i - j;
                let mut a_pow = DMatrix::<f64>::identity(2, 2);
                for _ in 0..k {
                    a_pow = &a_pow * &a;
                }
                let block = &c * &a_pow * &sigma_x * c.transpose();
                cov[(i, j)] = block[(0, 0)];
                cov[(j, i)] = block[(0, 0)];
            }
        }
        let chol = cov.clone().cholesky().unwrap();
        let yv = DVector::from_iterator(t_len, (0..t_len).map(|t| y[(t, 0)]));
        let solved = chol.solve(&yv);
        let ln_det = 2.0 * (0..t_len).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
        let oracle = -0.5
            * (t_len as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + yv.dot(&solved));
        assert_relative_eq!(out.loglik, oracle, epsilon = 1e-6);
    }

    #[test]
    fn filtering_is_shift_equivariant() {
        let ss = scalar_ss(0.8);
        let y = simulate_state_space(&ss, 100, 20, 23).unwrap();
        let shift = 2.5;
        let y_shifted = y.map(|v| v + shift);
        let base = filter(&ss, &y, None).unwrap();
        let shifted = filter(&ss, &y_shifted, None).unwrap();
        // Linearity: filtering shifted data equals filtering then adjusting by
        // the known constant map x* = x + m where m solves m = A m + K(shift - C m).
        let k = base.gain_path.last().unwrap()[(0, 0)];
        let a = 0.8;
        // On the steady stretch the shifted filter state differs by the fixed
        // point m_inf of m <- (A - K C) m + K shift, so
        // a*_t = a_t + shift - C m_inf.
        let start = base.steady_from.unwrap_or(0).max(shifted.steady_from.unwrap_or(0)) + 1;
        let m_inf = k * shift / (1.0 - (a - k));
        for t in start..100 {
            let expected = base.innovations[(t, 0)] + shift - m_inf;
            assert_relative_eq!(shifted.innovations[(t, 0)], expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn joseph_form_keeps_covariances_psd_on_random_systems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let n = rng.random_range(1..=3usize);
            let mut a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let rho = linalg::spectral_radius(&a);
            if rho >= 0.98 {
                a *= 0.9 / rho;
            }
            let b = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::<f64>::from_fn(1, n, |_, j| if j == 0 { 1.0 } else { 0.3 });
            let Ok(ss) = StateSpace::new(a, b, c, DMatrix::identity(1, 1)) else {
                continue;
            };
            let Ok(y) = simulate_state_space(&ss, 30, 10, 1) else { continue };
            let Ok(_out) = filter(&ss, &y, None) else {
                panic!("filter lost PSD on a random stable system");
            };
            worst = worst.min(0.0);
        }
        assert!(worst >= -1e-10);
    }

    #[test]
    fn innovations_are_white_on_self_simulated_data() {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.2, 0.9]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let ss = StateSpace::new(a, b, c, DMatrix::identity(2, 2)).unwrap();
        let t_len = 2000;
        let n_seeds = 40;
        let mut pass = 0;
        for seed in 0..n_seeds {
            let y = simulate_state_space(&ss, t_len, 200, seed).unwrap();
            let out = filter(&ss, &y, None).unwrap();
            let (acs, band) = whiteness_check(&out.innovations, 5);
            if acs[0].iter().all(|r| r.abs() < band) {
                pass += 1;
            }
        }
        assert!(
            pass as f64 / n_seeds as f64 >= 0.95,
            "whiteness pass rate {pass}/{n_seeds}"
        );
    }
}
