//! Wald specification test: squared scaled distance from a complete model's
//! point-identified wedges to the robust set, with moving-block bootstrap
//! critical values.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Box envelope of admissible wedge means, one interval per observable.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Envelope {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidInput("envelope bounds inconsistent".into()));
        }
        Ok(Envelope { lower, upper })
    }

    /// Coordinate-wise projection onto the box.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect()
    }
}

/// T·W statistic: squared V^{-1/2}-scaled distance from `lambda_p` to the
/// envelope, the inf attained at the coordinate-wise clamp.
pub fn wald_statistic(
    lambda_p: &[f64],
    envelope: &Envelope,
    v_diag: &[f64],
    t_len: usize,
) -> Result<f64> {
    if lambda_p.len() != envelope.lower.len() || v_diag.len() != lambda_p.len() {
        return Err(Error::DimensionMismatch {
            context: "wald_statistic",
            expected: format!("{} coordinates", envelope.lower.len()),
            got: format!("{} lambda, {} variances", lambda_p.len(), v_diag.len()),
        });
    }
    let bad: Vec<usize> = v_diag
        .iter()
        .enumerate()
        .filter(|(_, &v)| !(v > 0.0) || !v.is_finite())
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::SingularVarianceOnTestedCoords(bad));
    }
    let proj = envelope.project(lambda_p);
    let mut acc = 0.0;
    for i in 0..lambda_p.len() {
        let d = lambda_p[i] - proj[i];
        acc += d * d / v_diag[i];
    }
    Ok(t_len as f64 * acc)
}

/// Diagnostic: the inf taken over a discrete draw cloud instead of the box.
pub fn wald_statistic_cloud(
    lambda_p: &[f64],
    cloud: &DMatrix<f64>,
    v_diag: &[f64],
    t_len: usize,
) -> Result<f64> {
    if cloud.ncols() != lambda_p.len() {
        return Err(Error::DimensionMismatch {
            context: "wald_statistic_cloud",
            expected: format!("{} columns", lambda_p.len()),
            got: format!("{}", cloud.ncols()),
        });
    }
    let mut best = f64::INFINITY;
    for r in 0..cloud.nrows() {
        let mut acc = 0.0;
        for i in 0..lambda_p.len() {
            let d = lambda_p[i] - cloud[(r, i)];
            acc += d * d / v_diag[i];
        }
        best = best.min(acc);
    }
    Ok(t_len as f64 * best)
}

/// Diagonal HAC variance (Bartlett kernel) of each column's mean estimator:
/// Var(√T · column mean).
pub fn hac_diag(contributions: &DMatrix<f64>, bandwidth: usize) -> Vec<f64> {
    let t_len = contributions.nrows();
    let t_f = t_len as f64;
    let mut out = Vec::with_capacity(contributions.ncols());
    for j in 0..contributions.ncols() {
        let col: Vec<f64> = contributions.column(j).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / t_f;
        let mut gamma0 = 0.0;
        for v in &col {
            gamma0 += (v - mean) * (v - mean);
        }
        gamma0 /= t_f;
        let mut acc = gamma0;
        for k in 1..=bandwidth.min(t_len.saturating_sub(1)) {
            let w = 1.0 - k as f64 / (bandwidth as f64 + 1.0);
            let mut gk = 0.0;
            for t in k..t_len {
                gk += (col[t] - mean) * (col[t - k] - mean);
            }
            gk /= t_f;
            acc += 2.0 * w * gk;
        }
        out.push(acc.max(0.0));
    }
    out
}

/// Default moving-block length ⌈T^{1/3}⌉.
pub fn default_block_length(t_len: usize) -> usize {
    (t_len as f64).powf(1.0 / 3.0).ceil() as usize
}

/// Resamples row indices by non-overlapping moving blocks with wrap-around
/// for the tail block.
fn block_resample_indices(t_len: usize, block_length: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let b = block_length.max(1).min(t_len);
    let n_blocks = t_len.div_ceil(b);
    let n_starts = t_len.div_ceil(b);
    let mut idx = Vec::with_capacity(n_blocks * b);
    for _ in 0..n_blocks {
        let s = rng.random_range(0..n_starts) * b;
        for k in 0..b {
            idx.push((s + k) % t_len);
        }
    }
    idx.truncate(t_len);
    idx
}

/// Bootstrap distribution of the recentered statistic built from per-period
/// gap contributions (T x p, sample mean = signed outward gap per coordinate).
///
/// With `clamped = true` only outward fluctuations count (the test statistic
/// form); with `clamped = false` the full quadratic form is returned (the
/// asymptotic-comparison form).
pub fn bootstrap_distribution(
    gap_contributions: &DMatrix<f64>,
    v_diag: &[f64],
    block_length: usize,
    b_reps: usize,
    seed: u64,
    clamped: bool,
) -> Result<Vec<f64>> {
    let t_len = gap_contributions.nrows();
    let p = gap_contributions.ncols();
    if t_len < 2 {
        return Err(Error::InvalidInput("need at least two periods".into()));
    }
    if !(1..=t_len / 2 + 1).contains(&block_length) {
        return Err(Error::InvalidInput(format!(
            "block length {block_length} outside [1, T/2]"
        )));
    }
    if v_diag.len() != p {
        return Err(Error::DimensionMismatch {
            context: "bootstrap_distribution",
            expected: format!("{p} variances"),
            got: format!("{}", v_diag.len()),
        });
    }
    let t_f = t_len as f64;
    let base_means: Vec<f64> =
        (0..p).map(|j| gap_contributions.column(j).sum() / t_f).collect();

    let mut stats: Vec<f64> = (0..b_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(rep as u64 + 1)),
            );
            let idx = block_resample_indices(t_len, block_length, &mut rng);
            let mut acc = 0.0;
            for j in 0..p {
                let mut mean_star = 0.0;
                for &t in &idx {
                    mean_star += gap_contributions[(t, j)];
                }
                mean_star /= t_f;
                // Recentered: the bootstrap fluctuation around the sample mean.
                let mut d = mean_star - base_means[j];
                if clamped {
                    d = d.max(0.0);
                }
                acc += d * d / v_diag[j];
            }
            t_f * acc
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spread = stats.last().unwrap() - stats.first().unwrap();
    if spread <= 1e-15 {
        return Err(Error::DegenerateBootstrapDistribution(b_reps));
    }
    Ok(stats)
}

/// Result of the specification test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    /// Sorted bootstrap replicates (for Q-Q output).
    pub bootstrap_draws: Vec<f64>,
    pub reject: bool,
    pub block_length: usize,
    pub seed: u64,
    /// Draw-cloud variant of the statistic, when a cloud was supplied.
    pub cloud_statistic: Option<f64>,
}

/// Runs the full test: statistic from per-period wedge paths of the complete
/// model and the boundary of the robust set, bootstrap critical value from
/// recentered block resampling of the gap contributions.
///
/// `lambda_p_path` is the complete model's T x p wedge path; `boundary_path`
/// is the wedge path of the nearest admissible point in the robust set (its
/// column means are the projection of the point estimate onto the envelope).
pub fn run_test(
    lambda_p_path: &DMatrix<f64>,
    boundary_path: &DMatrix<f64>,
    envelope: &Envelope,
    alpha: f64,
    block_length: usize,
    b_reps: usize,
    seed: u64,
    cloud: Option<&DMatrix<f64>>,
) -> Result<TestResult> {
    if lambda_p_path.shape() != boundary_path.shape() {
        return Err(Error::DimensionMismatch {
            context: "run_test",
            expected: format!("{:?}", lambda_p_path.shape()),
            got: format!("{:?}", boundary_path.shape()),
        });
    }
    let t_len = lambda_p_path.nrows();
    let p = lambda_p_path.ncols();
    let gap = lambda_p_path - boundary_path;
    let v_diag = hac_diag(&gap, block_length);
    let bad: Vec<usize> = v_diag
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= 1e-300)
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::SingularVarianceOnTestedCoords(bad));
    }
    let lambda_p: Vec<f64> = (0..p).map(|j| lambda_p_path.column(j).sum() / t_len as f64).collect();
    let statistic = wald_statistic(&lambda_p, envelope, &v_diag, t_len)?;
    let draws = bootstrap_distribution(&gap, &v_diag, block_length, b_reps, seed, true)?;
    let critical_value = empirical_quantile(&draws, 1.0 - alpha);
    let cloud_statistic = match cloud {
        Some(c) => Some(wald_statistic_cloud(&lambda_p, c, &v_diag, t_len)?),
        None => None,
    };
    Ok(TestResult {
        statistic,
        critical_value,
        alpha,
        reject: statistic > critical_value,
        bootstrap_draws: draws,
        block_length,
        seed,
        cloud_statistic,
    })
}

/// Quantile of an already-sorted sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    crate::mcmc::quantile(sorted, p)
}
