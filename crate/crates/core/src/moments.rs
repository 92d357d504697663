//! Stacked moment systems: equality restrictions for observables without
//! frictions, one-sided restrictions for distorted observables, and the
//! survey-bound augmentation with its least-squares nuisance slope.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kalman::{filter, FilterOutput};
use crate::linalg;
use crate::model::{self, ModelSpec};
use crate::params::ParamVector;
use crate::state_space::{assemble_state_space, StateSpace};

/// Direction tag of a moment row. Violations are normalized so that a single
/// code path serves both the ≥0 and ≤0 conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    GeqZero,
    LeqZero,
    Eq,
}

impl Direction {
    pub fn from_sign(sign: i8) -> Self {
        match sign {
            s if s > 0 => Direction::GeqZero,
            s if s < 0 => Direction::LeqZero,
            _ => Direction::Eq,
        }
    }

    /// Violation magnitude of a sample mean under this direction.
    pub fn violation(&self, q_bar: f64) -> f64 {
        match self {
            Direction::GeqZero => (-q_bar).max(0.0),
            Direction::LeqZero => q_bar.max(0.0),
            Direction::Eq => q_bar.abs(),
        }
    }

    pub fn satisfied(&self, q_bar: f64, tol: f64) -> bool {
        self.violation(q_bar) <= tol
    }
}

/// Instruments built from strictly lagged observables: a constant plus
/// `lag_depth` lags of every observable column. Measurability with respect to
/// past data holds by construction, since the builder only ever reads rows
/// `t-1, ..., t-lag_depth`.
#[derive(Debug, Clone)]
pub struct InstrumentSet {
    pub lag_depth: usize,
    pub include_constant: bool,
    pub labels: Vec<String>,
}

impl InstrumentSet {
    pub fn standard(lag_depth: usize, n_obs: usize) -> Result<Self> {
        if lag_depth == 0 {
            return Err(Error::InvalidInput("instrument lag depth must be >= 1".into()));
        }
        let mut labels = vec!["const".to_string()];
        for lag in 1..=lag_depth {
            for c in 0..n_obs {
                labels.push(format!("y{c}_lag{lag}"));
            }
        }
        Ok(InstrumentSet {
            lag_depth,
            include_constant: true,
            labels,
        })
    }

    pub fn n_instruments(&self, n_obs: usize) -> usize {
        (if self.include_constant { 1 } else { 0 }) + self.lag_depth * n_obs
    }

    /// Instrument matrix aligned with rows `lag_depth..T` of the data.
    pub fn build(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let t_len = data.nrows();
        let n_obs = data.ncols();
        let rows = t_len - self.lag_depth;
        let mut phi = DMatrix::<f64>::zeros(rows, self.n_instruments(n_obs));
        for t in 0..rows {
            let mut col = 0;
            if self.include_constant {
                phi[(t, col)] = 1.0;
                col += 1;
            }
            for lag in 1..=self.lag_depth {
                for c in 0..n_obs {
                    phi[(t, col)] = data[(t + self.lag_depth - lag, c)];
                    col += 1;
                }
            }
        }
        phi
    }
}

/// Aggregated qualitative survey shares in [0, 1].
#[derive(Debug, Clone)]
pub struct SurveySeries {
    pub b: Vec<f64>,
    pub question_id: String,
    /// Observable indices (columns of the data) the bound applies to.
    pub target_observables: Vec<usize>,
}

impl SurveySeries {
    pub fn new(b: Vec<f64>, question_id: String, target_observables: Vec<usize>) -> Result<Self> {
        for (i, &v) in b.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "survey share {v} at row {i} outside [0, 1]"
                )));
            }
        }
        Ok(SurveySeries { b, question_id, target_observables })
    }
}

/// Which block a row belongs to for the refinement (Sargan-type) check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockTag {
    Necessary,
    Supernumerary,
}

#[derive(Debug, Clone)]
pub struct MomentRowMeta {
    pub observable: usize,
    pub instrument: usize,
    pub direction: Direction,
    pub block: BlockTag,
    pub label: String,
    /// True for survey-augmented rows.
    pub survey: bool,
}

/// A stack of moment rows with per-period contributions.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    /// (T - lag_depth) x n_rows per-period contributions m_{j,t}.
    pub contributions: DMatrix<f64>,
    pub rows: Vec<MomentRowMeta>,
    /// Diagonal PSD weighting, one entry per row.
    pub weights: Vec<f64>,
    /// Data rows skipped at the start for instrument lags.
    pub offset: usize,
    pub warnings: Vec<String>,
    /// Estimated survey nuisance slopes λ̂¹ per target observable, if any.
    pub lambda1_hat: Vec<(usize, f64)>,
}

impl MomentSystem {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_periods(&self) -> usize {
        self.contributions.nrows()
    }

    /// Sample moment vector q̄_T.
    pub fn sample_means(&self) -> Vec<f64> {
        let t = self.contributions.nrows() as f64;
        (0..self.contributions.ncols())
            .map(|j| self.contributions.column(j).sum() / t)
            .collect()
    }

    /// Appends the rows of another system built on the same data alignment.
    pub fn extend(&mut self, other: MomentSystem) -> Result<()> {
        if other.n_rows() == 0 {
            return Ok(());
        }
        if other.contributions.nrows() != self.contributions.nrows()
            || other.offset != self.offset
        {
            return Err(Error::DimensionMismatch {
                context: "MomentSystem::extend",
                expected: format!("{} periods, offset {}", self.n_periods(), self.offset),
                got: format!("{} periods, offset {}", other.n_periods(), other.offset),
            });
        }
        let old_cols = self.contributions.ncols();
        let mut merged =
            DMatrix::<f64>::zeros(self.contributions.nrows(), old_cols + other.contributions.ncols());
        merged.view_mut((0, 0), (self.contributions.nrows(), old_cols)).copy_from(&self.contributions);
        merged
            .view_mut((0, old_cols), (other.contributions.nrows(), other.contributions.ncols()))
            .copy_from(&other.contributions);
        self.contributions = merged;
        self.rows.extend(other.rows);
        self.weights.extend(other.weights);
        self.warnings.extend(other.warnings);
        self.lambda1_hat.extend(other.lambda1_hat);
        Ok(())
    }

    /// Replaces the weights with inverse variances of each row's contributions.
    pub fn set_inverse_variance_weights(&mut self) {
        let t = self.contributions.nrows() as f64;
        let means = self.sample_means();
        for j in 0..self.n_rows() {
            let var: f64 = self
                .contributions
                .column(j)
                .iter()
                .map(|m| (m - means[j]) * (m - means[j]))
                .sum::<f64>()
                / (t - 1.0);
            self.weights[j] = if var > 1e-300 { 1.0 / var } else { 1.0 };
        }
    }
}

/// Builds the macro moment block: residual (Y_t - C X̂_{t|t-1}) times each
/// instrument, with directions taken from the friction signs.
pub fn build_macro_moments(
    ss: &StateSpace,
    filt: &FilterOutput,
    data: &DMatrix<f64>,
    instruments: &InstrumentSet,
    signs: &[i8],
) -> Result<MomentSystem> {
    let n_y = ss.n_obs();
    if data.ncols() != n_y || signs.len() != n_y {
        return Err(Error::DimensionMismatch {
            context: "build_macro_moments",
            expected: format!("{n_y} observables"),
            got: format!("{} data cols, {} signs", data.ncols(), signs.len()),
        });
    }
    if filt.innovations.nrows() != data.nrows() {
        return Err(Error::DimensionMismatch {
            context: "build_macro_moments",
            expected: format!("{} filtered rows", data.nrows()),
            got: format!("{}", filt.innovations.nrows()),
        });
    }
    let offset = instruments.lag_depth;
    if data.nrows() <= offset + 1 {
        return Err(Error::InvalidInput("too few periods for the instrument lags".into()));
    }
    let phi = instruments.build(data);
    let rows_t = phi.nrows();
    let n_phi = phi.ncols();

    let mut warnings = Vec::new();
    let second_moment = phi.transpose() * &phi / rows_t as f64;
    let rank = linalg::numerical_rank(&second_moment, 1e-10);
    if rank < n_phi {
        warnings.push(format!(
            "instrument second-moment matrix rank {rank} below {n_phi}; inference may be weak"
        ));
    }

    let mut contributions = DMatrix::<f64>::zeros(rows_t, n_y * n_phi);
    let mut rows = Vec::with_capacity(n_y * n_phi);
    let mut col = 0;
    for i in 0..n_y {
        for j in 0..n_phi {
            for t in 0..rows_t {
                contributions[(t, col)] = filt.innovations[(t + offset, i)] * phi[(t, j)];
            }
            rows.push(MomentRowMeta {
                observable: i,
                instrument: j,
                direction: Direction::from_sign(signs[i]),
                block: BlockTag::Necessary,
                label: format!("macro[y{i} x {}]", instruments.labels.get(j).cloned().unwrap_or_else(|| format!("phi{j}"))),
                survey: false,
            });
            col += 1;
        }
    }
    Ok(MomentSystem {
        contributions,
        rows,
        weights: vec![1.0; n_y * n_phi],
        offset,
        warnings,
        lambda1_hat: Vec::new(),
    })
}

/// Builds the survey-augmented inequality rows
/// `(Y_t - C X̂_{t|t-1} - λ̂¹ (C X̂_{t|t-1}) b_t) ⊗ φ` for each target
/// observable, with λ̂¹ re-estimated by least squares of the filtered residual
/// on the prediction-times-share regressor.
pub fn build_survey_moments(
    ss: &StateSpace,
    filt: &FilterOutput,
    data: &DMatrix<f64>,
    survey: &SurveySeries,
    instruments: &InstrumentSet,
    signs: &[i8],
) -> Result<MomentSystem> {
    let n_y = ss.n_obs();
    if survey.b.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            context: "build_survey_moments",
            expected: format!("{} survey rows", data.nrows()),
            got: format!("{}", survey.b.len()),
        });
    }
    for &i in &survey.target_observables {
        if i >= n_y {
            return Err(Error::InvalidInput(format!(
                "survey target observable {i} out of range"
            )));
        }
        if signs[i] == 0 {
            return Err(Error::InvalidInput(format!(
                "survey bound targets observable {i} which carries an equality restriction"
            )));
        }
    }
    let offset = instruments.lag_depth;
    let phi = instruments.build(data);
    let rows_t = phi.nrows();
    let n_phi = phi.ncols();

    let b_all_zero = survey.b.iter().all(|&v| v == 0.0);
    let b_all_one = survey.b.iter().all(|&v| v == 1.0);
    let mut warnings = Vec::new();
    if b_all_zero {
        warnings.push(format!(
            "survey {} identically zero: no agent is constrained, rows become equalities",
            survey.question_id
        ));
    }
    if b_all_one {
        warnings.push(format!(
            "survey {} identically one: bound coincides with the macro inequality shape",
            survey.question_id
        ));
    }

    let mut contributions = DMatrix::<f64>::zeros(rows_t, survey.target_observables.len() * n_phi);
    let mut rows = Vec::new();
    let mut lambda1_hat = Vec::new();
    let mut col = 0;
    for &i in &survey.target_observables {
        // Prediction of observable i: (C X̂)_{t,i} = Y_{t,i} - a_{t,i}.
        // Regressor is prediction times the survey share.
        let mut num = 0.0;
        let mut den = 0.0;
        for t in offset..data.nrows() {
            let pred = data[(t, i)] - filt.innovations[(t, i)];
            let reg = pred * survey.b[t];
            num += filt.innovations[(t, i)] * reg;
            den += reg * reg;
        }
        let sign = signs[i] as f64;
        let mut lam1 = if den > 1e-300 { num / den } else { 0.0 };
        // The nuisance slope carries the friction's sign; clamp wrong-signed
        // estimates at zero so a noisy fit cannot flip the bound.
        if lam1 * sign < 0.0 {
            lam1 = 0.0;
        }
        lambda1_hat.push((i, lam1));

        let direction = if b_all_zero {
            Direction::Eq
        } else {
            Direction::from_sign(signs[i])
        };
        for j in 0..n_phi {
            for t in 0..rows_t {
                let td = t + offset;
                let pred = data[(td, i)] - filt.innovations[(td, i)];
                let resid = filt.innovations[(td, i)] - lam1 * pred * survey.b[td];
                contributions[(t, col)] = resid * phi[(t, j)];
            }
            rows.push(MomentRowMeta {
                observable: i,
                instrument: j,
                direction,
                block: BlockTag::Supernumerary,
                label: format!("survey[{} y{i} x phi{j}]", survey.question_id),
                survey: true,
            });
            col += 1;
        }
    }
    let n_rows = rows.len();
    Ok(MomentSystem {
        contributions,
        rows,
        weights: vec![1.0; n_rows],
        offset,
        warnings,
        lambda1_hat,
    })
}

/// Report of the supernumerary-refinement (Sargan-type) diagnostic.
#[derive(Debug, Clone)]
pub struct RefinementReport {
    /// Variance of each supernumerary row's component orthogonal to the
    /// necessary block's span.
    pub orthogonal_variance: Vec<f64>,
    /// t-statistics of the orthogonal components' means.
    pub orthogonal_mean_tstat: Vec<f64>,
    /// True when the orthogonal components are numerically zero (the
    /// supernumerary rows duplicate the necessary block: no refinement).
    pub no_refinement: bool,
    /// True when any orthogonal mean is statistically nonzero at `z_crit`.
    pub binding: bool,
}

/// Projects supernumerary moment contributions on the necessary block's span
/// and reports whether the orthogonal component is statistically nonzero.
pub fn sargan_refinement_check(ms: &MomentSystem, z_crit: f64) -> Result<RefinementReport> {
    let alpha_idx: Vec<usize> = (0..ms.n_rows())
        .filter(|&j| ms.rows[j].block == BlockTag::Necessary)
        .collect();
    let beta_idx: Vec<usize> = (0..ms.n_rows())
        .filter(|&j| ms.rows[j].block == BlockTag::Supernumerary)
        .collect();
    if alpha_idx.is_empty() || beta_idx.is_empty() {
        return Err(Error::InvalidInput(
            "refinement check needs both necessary and supernumerary rows".into(),
        ));
    }
    let t_len = ms.n_periods();
    let mut a_mat = DMatrix::<f64>::zeros(t_len, alpha_idx.len() + 1);
    for (c, &j) in alpha_idx.iter().enumerate() {
        a_mat.set_column(c, &ms.contributions.column(j));
    }
    // Include a constant so the projection spans means as well.
    for t in 0..t_len {
        a_mat[(t, alpha_idx.len())] = 1.0;
    }
    let gram = a_mat.transpose() * &a_mat;
    let rank = linalg::numerical_rank(&a_mat, 1e-10);
    if rank < alpha_idx.len().min(t_len) {
        return Err(Error::AlphaBlockRankDeficient { rank, rows: alpha_idx.len() });
    }
    let gram_inv = linalg::pseudo_inverse(&gram, 1e-12);

    let mut orthogonal_variance = Vec::with_capacity(beta_idx.len());
    let mut orthogonal_mean_tstat = Vec::with_capacity(beta_idx.len());
    let scale = ms.contributions.amax().max(1e-300);
    for &j in &beta_idx {
        let y = ms.contributions.column(j).into_owned();
        let coef = &gram_inv * (a_mat.transpose() * &y);
        let resid = &y - &a_mat * coef;
        let mean = resid.sum() / t_len as f64;
        let var = resid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t_len as f64 - 1.0);
        let se = (var / t_len as f64).sqrt();
        orthogonal_variance.push(var);
        orthogonal_mean_tstat.push(if se > 0.0 { mean / se } else { 0.0 });
    }
    let no_refinement = orthogonal_variance
        .iter()
        .all(|v| v.sqrt() <= 1e-8 * scale);
    let binding = !no_refinement
        && orthogonal_mean_tstat.iter().any(|t| t.abs() > z_crit);
    Ok(RefinementReport {
        orthogonal_variance,
        orthogonal_mean_tstat,
        no_refinement,
        binding,
    })
}

/// End-to-end builder: solve, assemble, filter and stack moments at θ.
/// The weighting, when fixed at construction, is shared by every θ so that
/// criterion values are comparable across draws.
#[derive(Clone)]
pub struct MomentPipeline {
    pub spec: ModelSpec,
    pub data: DMatrix<f64>,
    pub instruments: InstrumentSet,
    pub survey: Option<SurveySeries>,
    fixed_weights: Option<Vec<f64>>,
}

impl MomentPipeline {
    pub fn new(
        spec: ModelSpec,
        data: DMatrix<f64>,
        instruments: InstrumentSet,
        survey: Option<SurveySeries>,
    ) -> Self {
        MomentPipeline {
            spec,
            data,
            instruments,
            survey,
            fixed_weights: None,
        }
    }

    /// Estimates inverse-variance row weights at `theta` and freezes them for
    /// every subsequent evaluation.
    pub fn freeze_weights_at(&mut self, theta: &ParamVector) -> Result<()> {
        let mut ms = self.system_at_unweighted(theta)?;
        ms.set_inverse_variance_weights();
        self.fixed_weights = Some(ms.weights);
        Ok(())
    }

    fn system_at_unweighted(&self, theta: &ParamVector) -> Result<MomentSystem> {
        let sol = model::solve_re(&self.spec, theta)?;
        let ss = assemble_state_space(&sol, &self.spec)?;
        let filt = filter(&ss, &self.data, None)?;
        let mut ms = build_macro_moments(
            &ss,
            &filt,
            &self.data,
            &self.instruments,
            &self.spec.friction_signs,
        )?;
        if let Some(survey) = &self.survey {
            let aug = build_survey_moments(
                &ss,
                &filt,
                &self.data,
                survey,
                &self.instruments,
                &self.spec.friction_signs,
            )?;
            ms.extend(aug)?;
        }
        Ok(ms)
    }

    /// Builds the moment system at θ, applying frozen weights when present.
    pub fn system_at(&self, theta: &ParamVector) -> Result<MomentSystem> {
        let mut ms = self.system_at_unweighted(theta)?;
        if let Some(w) = &self.fixed_weights {
            if w.len() == ms.weights.len() {
                ms.weights.clone_from(w);
            }
        }
        Ok(ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatrixMap, SystemMatrices};
    use crate::params::Bound;
    use crate::state_space::simulate_state_space;
    use std::sync::Arc;

    /// Frictionless benchmark for the consumption economy: c_t = z_t with
    /// z AR(mu). The single parameter is mu.
    pub(crate) fn consumption_spec(sign: i8) -> ModelSpec {
        let map: MatrixMap = Arc::new(|vals: &[f64]| {
            let mu = vals[0];
            Ok(SystemMatrices {
                g: DMatrix::from_row_slice(1, 1, &[1.0]),
                f: DMatrix::from_row_slice(1, 1, &[0.0]),
                l: DMatrix::from_row_slice(1, 1, &[1.0]),
                r: DMatrix::from_row_slice(1, 1, &[mu]),
                sigma_eps: DMatrix::from_row_slice(1, 1, &[1.0]),
            })
        });
        ModelSpec::new(1, 1, map, vec![0], vec![sign]).unwrap()
    }

    fn theta(mu: f64) -> ParamVector {
        ParamVector::unnamed(vec![mu], vec![Bound::new(0.01, 0.999)]).unwrap()
    }

    fn system_for(data: &DMatrix<f64>, mu: f64, survey: Option<SurveySeries>) -> MomentSystem {
        let pipeline = MomentPipeline::new(
            consumption_spec(1),
            data.clone(),
            InstrumentSet::standard(1, 1).unwrap(),
            survey,
        );
        pipeline.system_at(&theta(mu)).unwrap()
    }

    #[test]
    fn frictionless_null_moments_vanish_at_rate_root_t() {
        // Data simulated from the frictionless model itself.
        let spec = consumption_spec(1);
        let th = theta(0.8);
        let sol = model::solve_re(&spec, &th).unwrap();
        let ss = assemble_state_space(&sol, &spec).unwrap();
        let y = simulate_state_space(&ss, 10_000, 500, 21).unwrap();
        let ms = system_for(&y, 0.8, None);
        let means = ms.sample_means();
        let t = ms.n_periods() as f64;
        for (j, mean) in means.iter().enumerate() {
            let col = ms.contributions.column(j);
            let var: f64 =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
            let se = (var / t).sqrt();
            assert!(mean.abs() < 4.0 * se, "row {j}: |{mean}| vs 4*{se}");
        }
    }

    #[test]
    fn injected_constant_wedge_shows_up_in_constant_instrument_row() {
        // Static model: predictions are identically zero, so the injected
        // wedge mean appears directly in the constant-instrument row.
        let map: MatrixMap = Arc::new(|_: &[f64]| {
            Ok(SystemMatrices {
                g: DMatrix::identity(1, 1),
                f: DMatrix::zeros(1, 1),
                l: DMatrix::identity(1, 1),
                r: DMatrix::zeros(1, 1),
                sigma_eps: DMatrix::identity(1, 1),
            })
        });
        let spec = ModelSpec::new(1, 1, map, vec![0], vec![1]).unwrap();
        let th = ParamVector::unnamed(vec![0.0], vec![Bound::new(-1.0, 1.0)]).unwrap();
        let sol = model::solve_re(&spec, &th).unwrap();
        let ss = assemble_state_space(&sol, &spec).unwrap();
        let mut y = simulate_state_space(&ss, 20_000, 100, 5).unwrap();
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 0.1).unwrap();
        for t in 0..y.nrows() {
            y[(t, 0)] += 0.5 + noise.sample(&mut rng);
        }
        let filt = filter(&ss, &y, None).unwrap();
        let instruments = InstrumentSet::standard(1, 1).unwrap();
        let ms = build_macro_moments(&ss, &filt, &y, &instruments, &[1]).unwrap();
        // Row 0 is observable 0 x constant.
        let means = ms.sample_means();
        assert!((means[0] - 0.5).abs() < 0.05, "constant row mean {}", means[0]);
    }

    #[test]
    fn consumption_bound_endpoint_zeroes_the_lagged_instrument_row() {
        use crate::wedge::ConsumptionDgp;
        let dgp = ConsumptionDgp::baseline();
        let sim = dgp.simulate(20_000, 9);
        let t_len = sim.c.len();
        let mut data = DMatrix::<f64>::zeros(t_len, 1);
        for t in 0..t_len {
            data[(t, 0)] = sim.c[t];
        }
        let (upper, _se) = ConsumptionDgp::sample_upper_endpoint(&sim);
        // At mu = 1 + mu_hat the lagged-instrument row crosses zero.
        let ms_at = |mu: f64| {
            let ms = system_for(&data, mu, None);
            // instrument 1 is the first lag of the observable
            let means = ms.sample_means();
            means[1]
        };
        let at_endpoint = ms_at(upper.min(0.999));
        let below = ms_at(upper - 0.05);
        let above = ms_at((upper + 0.02).min(0.999));
        assert!(below > 0.0 && below.abs() > at_endpoint.abs());
        assert!(at_endpoint.abs() < 5e-3, "endpoint row mean {at_endpoint}");
        if upper + 0.02 < 0.999 {
            assert!(above < 0.0);
        }
    }

    #[test]
    fn survey_all_zero_collapses_to_equality_rows() {
        let dgp = crate::wedge::ConsumptionDgp { p_constrained: 0.0, ..crate::wedge::ConsumptionDgp::baseline() };
        let sim = dgp.simulate(3_000, 13);
        let t_len = sim.c.len();
        let mut data = DMatrix::<f64>::zeros(t_len, 1);
        for t in 0..t_len {
            data[(t, 0)] = sim.c[t];
        }
        let survey = SurveySeries::new(vec![0.0; t_len], "q1".into(), vec![0]).unwrap();
        let ms = system_for(&data, 0.8, Some(survey));
        let survey_rows: Vec<&MomentRowMeta> = ms.rows.iter().filter(|r| r.survey).collect();
        assert!(!survey_rows.is_empty());
        assert!(survey_rows.iter().all(|r| r.direction == Direction::Eq));
        assert!(ms.warnings.iter().any(|w| w.contains("identically zero")));
    }

    #[test]
    fn positive_scaling_never_flips_satisfaction_status() {
        let dgp = crate::wedge::ConsumptionDgp::baseline();
        let sim = dgp.simulate(4_000, 3);
        let t_len = sim.c.len();
        let mut data = DMatrix::<f64>::zeros(t_len, 1);
        for t in 0..t_len {
            data[(t, 0)] = sim.c[t];
        }
        for mu in [0.5, 0.8, 0.95] {
            let base = system_for(&data, mu, None);
            let scaled_data = &data * 3.7;
            let scaled = system_for(&scaled_data, mu, None);
            let tol = 1e-12;
            for (j, row) in base.rows.iter().enumerate() {
                let a = row.direction.satisfied(base.sample_means()[j], tol * base.contributions.amax());
                let b = scaled.rows[j]
                    .direction
                    .satisfied(scaled.sample_means()[j], tol * scaled.contributions.amax());
                assert_eq!(a, b, "row {j} at mu={mu}");
            }
        }
    }

    #[test]
    fn instruments_ignore_future_observations() {
        let mut data = DMatrix::<f64>::zeros(50, 2);
        let mut val = 0.0f64;
        for t in 0..50 {
            for c in 0..2 {
                val += 0.37;
                data[(t, c)] = val.sin();
            }
        }
        let instruments = InstrumentSet::standard(2, 2).unwrap();
        let phi = instruments.build(&data);
        // Permute strictly future rows for the instruments at row index t:
        // row t of phi uses data rows t and t+1 (lags relative to t+2).
        let mut permuted = data.clone();
        for t in 30..50 {
            permuted.swap_rows(t, 79 - t);
        }
        let phi_head = instruments.build(&permuted);
        for t in 0..25 {
            for j in 0..phi.ncols() {
                assert_eq!(phi[(t, j)], phi_head[(t, j)]);
            }
        }
    }

    #[test]
    fn sargan_duplicate_beta_block_reports_no_refinement() {
        let dgp = crate::wedge::ConsumptionDgp::baseline();
        let sim = dgp.simulate(2_000, 8);
        let t_len = sim.c.len();
        let mut data = DMatrix::<f64>::zeros(t_len, 1);
        for t in 0..t_len {
            data[(t, 0)] = sim.c[t];
        }
        let mut ms = system_for(&data, 0.8, None);
        // Duplicate the macro rows as a supernumerary block.
        let mut dup = ms.clone();
        for r in &mut dup.rows {
            r.block = BlockTag::Supernumerary;
            r.label = format!("dup {}", r.label);
        }
        ms.extend(dup).unwrap();
        let report = sargan_refinement_check(&ms, 3.0).unwrap();
        assert!(report.no_refinement);
        assert!(!report.binding);
    }

    #[test]
    fn sargan_independent_noise_rows_have_nonzero_component() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let dgp = crate::wedge::ConsumptionDgp::baseline();
        let sim = dgp.simulate(2_000, 8);
        let t_len = sim.c.len();
        let mut data = DMatrix::<f64>::zeros(t_len, 1);
        for t in 0..t_len {
            data[(t, 0)] = sim.c[t];
        }
        let mut ms = system_for(&data, 0.8, None);
        let rows_t = ms.n_periods();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(44);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut noise_col = DMatrix::<f64>::zeros(rows_t, 1);
        for t in 0..rows_t {
            noise_col[(t, 0)] = ms.contributions[(t, 0)] + normal.sample(&mut rng);
        }
        let aug = MomentSystem {
            contributions: noise_col,
            rows: vec![MomentRowMeta {
                observable: 0,
                instrument: 0,
                direction: Direction::GeqZero,
                block: BlockTag::Supernumerary,
                label: "noise-instrumented".into(),
                survey: true,
            }],
            weights: vec![1.0],
            offset: ms.offset,
            warnings: vec![],
            lambda1_hat: vec![],
        };
        ms.extend(aug).unwrap();
        let report = sargan_refinement_check(&ms, 3.0).unwrap();
        assert!(!report.no_refinement);
        assert!(report.orthogonal_variance[0] > 0.1);
    }
}
