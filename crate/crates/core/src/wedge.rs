//! Mapping first-order-condition distortions μ_t to decision-rule distortions
//! λ_t, and the friction sign fixtures used to populate moment directions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelSpec;
use crate::params::ParamVector;

const TOL_MAP: f64 = 1e-10;

/// The λ_t = λ_{t-1} Γ + ν_t law with sign bookkeeping.
#[derive(Debug, Clone)]
pub struct WedgeLaw {
    pub gamma: DMatrix<f64>,
    pub sign_mu: Vec<i8>,
    /// Derived direction of E_t λ_t per state, via the linear map.
    pub sign_lambda: Vec<i8>,
}

impl WedgeLaw {
    /// Builds the law, checking stability of Γ and deriving λ signs from the
    /// μ signs through `(FΓ - G) λ = -μ`.
    pub fn new(
        gamma: DMatrix<f64>,
        sign_mu: Vec<i8>,
        f: &DMatrix<f64>,
        g: &DMatrix<f64>,
    ) -> Result<Self> {
        let rho = linalg::spectral_radius(&gamma);
        if rho >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "Gamma spectral radius {rho} >= 1; distorted equilibrium unstable"
            )));
        }
        if sign_mu.len() != g.nrows() {
            return Err(Error::DimensionMismatch {
                context: "WedgeLaw sign_mu",
                expected: format!("{}", g.nrows()),
                got: format!("{}", sign_mu.len()),
            });
        }
        let mu_repr = DVector::from_iterator(sign_mu.len(), sign_mu.iter().map(|&s| s as f64));
        let out = mu_to_lambda_mats(f, g, &gamma, &mu_repr, true)?;
        Ok(WedgeLaw {
            gamma,
            sign_mu,
            sign_lambda: out.signs,
        })
    }
}

/// Result of solving `(F Γ - G) λ̄ = -μ̄`.
#[derive(Debug, Clone)]
pub struct MuToLambda {
    pub lambda_mean: DVector<f64>,
    /// Per-coordinate sign report (0 within tolerance of zero).
    pub signs: Vec<i8>,
    /// True when a minimum-norm pseudo-inverse solution was used.
    pub used_pseudo_inverse: bool,
    /// max-abs residual of the linear system at the returned λ̄.
    pub residual: f64,
}

/// Solves `(F(θ₁,0) Γ - G(θ₁,0)) λ̄ = -μ̄` for the conditional-mean distortion.
pub fn mu_to_lambda(
    spec: &ModelSpec,
    theta1: &ParamVector,
    gamma: &DMatrix<f64>,
    mu_mean: &DVector<f64>,
    allow_pseudo_inverse: bool,
) -> Result<MuToLambda> {
    let mats = spec.evaluate(theta1.values())?;
    mu_to_lambda_mats(&mats.f, &mats.g, gamma, mu_mean, allow_pseudo_inverse)
}

/// Matrix-level variant of [`mu_to_lambda`].
pub fn mu_to_lambda_mats(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    mu_mean: &DVector<f64>,
    allow_pseudo_inverse: bool,
) -> Result<MuToLambda> {
    let n = g.nrows();
    if gamma.nrows() != n || gamma.ncols() != n || mu_mean.len() != n {
        return Err(Error::DimensionMismatch {
            context: "mu_to_lambda",
            expected: format!("Gamma {n}x{n}, mu length {n}"),
            got: format!("Gamma {}x{}, mu {}", gamma.nrows(), gamma.ncols(), mu_mean.len()),
        });
    }
    let map = f * gamma - g;
    let rank = linalg::numerical_rank(&map, 1e-12);
    let rhs = -mu_mean;
    let (lambda, used_pinv) = if rank == n && linalg::rcond(&map) > 1.0 / linalg::COND_MAX {
        (linalg::solve_lu(&map, &rhs, "mu_to_lambda")?, false)
    } else if allow_pseudo_inverse {
        (linalg::pseudo_inverse(&map, 1e-12) * &rhs, true)
    } else {
        return Err(Error::SingularMapUnflagged { rank, dim: n });
    };
    let residual = (&map * &lambda - &rhs).amax();
    if !used_pinv && residual > TOL_MAP * (1.0 + rhs.amax()) {
        return Err(Error::NumericalFailure {
            context: "mu_to_lambda",
            detail: format!("residual {residual:e} exceeds tolerance"),
        });
    }
    let scale = lambda.amax().max(1e-300);
    let signs = lambda
        .iter()
        .map(|&v| {
            if v.abs() <= 1e-10 * scale {
                0
            } else if v > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(MuToLambda {
        lambda_mean: lambda,
        signs,
        used_pseudo_inverse: used_pinv,
        residual,
    })
}

/// Friction example economies with known inequality directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EconomyId {
    LiquidityConstraint,
    AdjustmentCost,
    Irreversibility,
    NonRationalExp,
}

/// Calibrated fixture: the inequality direction for the wedge-instrument
/// moment, plus the reduced-form coefficients its simulator uses.
#[derive(Debug, Clone)]
pub struct SignFixture {
    pub economy: EconomyId,
    /// Direction of E[λ̃_t ⊗ instrument_t]: +1 means ≥ 0, -1 means ≤ 0.
    pub direction: i8,
    pub calibration: Vec<f64>,
    /// Reduced-form wedge coefficients (meaning depends on the economy).
    pub coefficients: Vec<f64>,
}

/// A simulated constrained economy: the wedge path and the instrument it is
/// paired with in the sign moment.
#[derive(Debug, Clone)]
pub struct FixtureSim {
    pub wedge: Vec<f64>,
    pub instrument: Vec<f64>,
}

fn require(cond: bool, economy: &'static str, detail: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::CalibrationOutsideValidRegion { economy, detail })
    }
}

/// Adjustment-cost reduced form: `γ1, γ2, γ3` at friction level φ.
fn adjustment_gammas(omega: f64, alpha: f64, beta: f64, phi: f64) -> (f64, f64, f64) {
    let denom = omega + phi * (1.0 + beta * (1.0 - alpha)) + 1.0 - alpha;
    let g1 = (alpha - phi * (1.0 - beta * alpha)) / denom;
    let g2 = (omega + beta * phi) / denom;
    let g3 = -alpha * (1.0 - beta * phi) / denom;
    (g1, g2, g3)
}

/// Builds the sign fixture for an example economy at a calibration.
///
/// Calibration layouts:
/// - `LiquidityConstraint`: `[beta, r, omega]`
/// - `AdjustmentCost`: `[omega, alpha, beta, phi, s]` with `s = C_ss/I_ss`
/// - `Irreversibility`: `[p_high, delta, rho_retain, eps_spread]`
/// - `NonRationalExp`: `[rho, omega, alpha, s]`
pub fn sign_fixture(economy: EconomyId, calibration: &ParamVector) -> Result<SignFixture> {
    let v = calibration.values();
    match economy {
        EconomyId::LiquidityConstraint => {
            require(v.len() == 3, "LiquidityConstraint", format!("need 3 params, got {}", v.len()))?;
            let (beta, r, omega) = (v[0], v[1], v[2]);
            require(
                beta > 0.0 && beta < 1.0 && 1.0 + r > 0.0 && omega > 0.0,
                "LiquidityConstraint",
                format!("beta={beta}, r={r}, omega={omega}"),
            )?;
            // Binding borrowing limits distort the Euler residual upward for
            // any admissible calibration.
            Ok(SignFixture {
                economy,
                direction: 1,
                calibration: v.to_vec(),
                coefficients: vec![],
            })
        }
        EconomyId::AdjustmentCost => {
            require(v.len() == 5, "AdjustmentCost", format!("need 5 params, got {}", v.len()))?;
            let (omega, alpha, beta, phi, s) = (v[0], v[1], v[2], v[3], v[4]);
            require(
                omega > 1.0
                    && alpha > 0.0
                    && alpha < 1.0
                    && beta > 0.0
                    && beta < 1.0
                    && phi > 0.0
                    && phi < 1.0
                    && s > 0.0
                    && alpha < 1.0 / (2.0 * beta),
                "AdjustmentCost",
                format!("omega={omega}, alpha={alpha}, beta={beta}, phi={phi}, s={s}"),
            )?;
            let (g1_0, g2_0, g3_0) = adjustment_gammas(omega, alpha, beta, 0.0);
            let (g1, g2, g3) = adjustment_gammas(omega, alpha, beta, phi);
            let zeta0 = g1_0 / (1.0 - g2_0);
            let zeta = g1 / (1.0 - g2);
            let c_k = -(s / omega) * (zeta0 - zeta) * (1.0 - alpha);
            let c_z = (s / omega) * (zeta0 - zeta + g3_0 - g3);
            require(
                c_k < 0.0,
                "AdjustmentCost",
                format!("capital loading {c_k} not negative; omega must exceed 1"),
            )?;
            Ok(SignFixture {
                economy,
                direction: -1,
                calibration: v.to_vec(),
                coefficients: vec![c_k, c_z],
            })
        }
        EconomyId::Irreversibility => {
            require(v.len() == 4, "Irreversibility", format!("need 4 params, got {}", v.len()))?;
            let (p_high, delta, rho_retain, eps_spread) = (v[0], v[1], v[2], v[3]);
            require(
                p_high > 0.0
                    && p_high < 1.0
                    && delta > 0.0
                    && delta <= 1.0
                    && rho_retain > 0.0
                    && rho_retain < 1.0
                    && eps_spread > 0.0,
                "Irreversibility",
                format!("p_high={p_high}, delta={delta}, rho={rho_retain}, spread={eps_spread}"),
            )?;
            Ok(SignFixture {
                economy,
                direction: -1,
                calibration: v.to_vec(),
                coefficients: vec![1.0 - p_high, eps_spread],
            })
        }
        EconomyId::NonRationalExp => {
            require(v.len() == 4, "NonRationalExp", format!("need 4 params, got {}", v.len()))?;
            let (rho, omega, alpha, s) = (v[0], v[1], v[2], v[3]);
            require(
                rho.abs() < 1.0 && omega > 0.0 && alpha > 0.0 && alpha < 1.0 && s > 0.0,
                "NonRationalExp",
                format!("rho={rho}, omega={omega}, alpha={alpha}, s={s}"),
            )?;
            let a2 = 1.0 + s;
            let a3 = s * alpha / ((1.0 + s) * (omega + 1.0 - alpha));
            require(
                a3 < 1.0 && 1.0 - a3 * rho > 0.0,
                "NonRationalExp",
                format!("a3={a3}, rho={rho}"),
            )?;
            let c_k = a2 / (1.0 - a3 * rho) * alpha;
            let c_z = a2 / (1.0 - a3 * rho) * rho * a3;
            Ok(SignFixture {
                economy,
                direction: 1,
                calibration: v.to_vec(),
                coefficients: vec![c_k, c_z],
            })
        }
    }
}

impl SignFixture {
    /// Simulates the constrained economy and returns the wedge path paired
    /// with the instrument entering the sign moment.
    pub fn simulate(&self, t_len: usize, seed: u64) -> FixtureSim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        match self.economy {
            EconomyId::LiquidityConstraint => {
                let dgp = ConsumptionDgp::baseline();
                let sim = dgp.simulate(t_len, seed);
                FixtureSim {
                    wedge: sim.wedge,
                    instrument: sim.c_lag,
                }
            }
            EconomyId::AdjustmentCost | EconomyId::NonRationalExp => {
                let (c_k, c_z) = (self.coefficients[0], self.coefficients[1]);
                let rho_k = 0.7;
                let mut k = 0.0f64;
                let mut wedge = Vec::with_capacity(t_len);
                let mut instrument = Vec::with_capacity(t_len);
                for t in 0..t_len + 200 {
                    let z: f64 = normal.sample(&mut rng);
                    if t >= 200 {
                        wedge.push(c_k * k + c_z * z);
                        instrument.push(k);
                    }
                    k = rho_k * k + z;
                }
                FixtureSim { wedge, instrument }
            }
            EconomyId::Irreversibility => {
                let p_high = self.calibration[0];
                let spread = self.coefficients[1];
                let eps_h = spread / 2.0;
                let eps_l = -spread / 2.0;
                let rho_k = 0.7;
                let mut k = 0.0f64;
                let mut wedge = Vec::with_capacity(t_len);
                let mut instrument = Vec::with_capacity(t_len);
                for t in 0..t_len + 200 {
                    let z: f64 = normal.sample(&mut rng);
                    let i_star = 0.5 * k + z;
                    if t >= 200 {
                        // λ̃ = -(1 - P(eps_H)) (I* + K - ε̃_L + ε̃_H)
                        wedge.push(-(1.0 - p_high) * (i_star + k - eps_l + eps_h));
                        instrument.push(k);
                    }
                    k = rho_k * k + z;
                }
                FixtureSim { wedge, instrument }
            }
        }
    }
}

/// Sample moment of wedge × instrument with its Monte Carlo standard error.
pub fn sign_moment(sim: &FixtureSim) -> (f64, f64) {
    let t = sim.wedge.len() as f64;
    let prods: Vec<f64> = sim
        .wedge
        .iter()
        .zip(&sim.instrument)
        .map(|(w, z)| w * z)
        .collect();
    let mean = prods.iter().sum::<f64>() / t;
    let var = prods.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// The constrained consumption-savings economy: an AR(1) consumption rule in
/// levels with an occasionally binding constraint that adds a nonnegative
/// wedge `κ b_t` when the iid indicator `b_t` is on.
#[derive(Debug, Clone, Copy)]
pub struct ConsumptionDgp {
    /// Frictionless persistence μ₀.
    pub mu0: f64,
    /// Wedge size when constrained.
    pub kappa: f64,
    /// Probability the constraint binds.
    pub p_constrained: f64,
    /// Innovation standard deviation.
    pub sigma_eps: f64,
}

/// One simulated draw of the constrained consumption economy.
#[derive(Debug, Clone)]
pub struct ConsumptionSim {
    /// c_t, t = 1..T (current consumption).
    pub c: Vec<f64>,
    /// c_{t-1} aligned with `c` (the instrument).
    pub c_lag: Vec<f64>,
    /// Wedge λ̃_{t-1} = κ b_{t-1} entering c_t.
    pub wedge: Vec<f64>,
    /// Survey indicator b_{t-1} aligned with `c` (1 = constrained).
    pub survey: Vec<f64>,
}

impl ConsumptionDgp {
    pub fn baseline() -> Self {
        ConsumptionDgp {
            mu0: 0.8,
            kappa: 0.3,
            p_constrained: 0.5,
            sigma_eps: 0.05,
        }
    }

    /// Population OLS upper endpoint 1 + μ̂ = μ₀ + κ p E[c] / E[c²] is matched
    /// by the sample ratio computed in [`Self::sample_upper_endpoint`].
    pub fn simulate(&self, t_len: usize, seed: u64) -> ConsumptionSim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.sigma_eps).unwrap();
        let burn = 500;
        let mean_level = self.kappa * self.p_constrained / (1.0 - self.mu0);
        let mut c_prev = mean_level;
        let mut c = Vec::with_capacity(t_len);
        let mut c_lag = Vec::with_capacity(t_len);
        let mut wedge = Vec::with_capacity(t_len);
        let mut survey = Vec::with_capacity(t_len);
        for t in 0..t_len + burn {
            let b = if rng.random::<f64>() < self.p_constrained { 1.0 } else { 0.0 };
            let lam = self.kappa * b;
            let c_next = self.mu0 * c_prev + lam + normal.sample(&mut rng);
            if t >= burn {
                c.push(c_next);
                c_lag.push(c_prev);
                wedge.push(lam);
                survey.push(b);
            }
            c_prev = c_next;
        }
        ConsumptionSim { c, c_lag, wedge, survey }
    }

    /// Analytic identified-set upper endpoint `1 + μ̂` evaluated on a sample:
    /// `μ̂ = Σ c_{t-1} Δc_t / Σ c_{t-1}²`, plus its delta-method standard error.
    pub fn sample_upper_endpoint(sim: &ConsumptionSim) -> (f64, f64) {
        let t = sim.c.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for (c_t, c_l) in sim.c.iter().zip(&sim.c_lag) {
            num += c_l * (c_t - c_l);
            den += c_l * c_l;
        }
        let mu_hat = num / den;
        // Delta-method SE of the OLS-style ratio.
        let mut var_num = 0.0;
        for (c_t, c_l) in sim.c.iter().zip(&sim.c_lag) {
            let u = c_l * (c_t - c_l) - mu_hat * c_l * c_l;
            var_num += u * u;
        }
        let se = (var_num / t).sqrt() / (den / t) / t.sqrt();
        (1.0 + mu_hat, se)
    }
}
