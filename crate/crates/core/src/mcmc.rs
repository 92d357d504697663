//! One-sided GMM criterion, block random-walk MCMC over the quasi-posterior
//! exp(-L_n), and level-set extraction of the identified set.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{MomentPipeline, MomentSystem};
use crate::params::ParamVector;

/// Violations below this are classified as exactly zero criterion.
pub const TOL_CRIT: f64 = 1e-10;
/// Default retained draws per chain (the paper keeps the last 200k-300k).
pub const DEFAULT_RETAINED: usize = 250_000;

/// Criterion value with the violation vector behind it.
#[derive(Debug, Clone)]
pub struct Criterion {
    /// L_n(θ) = n * q₊' W q₊ ≥ 0.
    pub value: f64,
    /// Per-row violations q₊ (zero-clamped at `TOL_CRIT`).
    pub q_plus: Vec<f64>,
    /// Diagonal weight snapshot.
    pub weights: Vec<f64>,
}

/// Evaluates the one-sided criterion on a built moment system. Equality rows
/// enter through their absolute means (both signs violated symmetrically).
pub fn eval_criterion(ms: &MomentSystem) -> Criterion {
    let n = ms.n_periods() as f64;
    let means = ms.sample_means();
    let mut q_plus = Vec::with_capacity(ms.n_rows());
    let mut value = 0.0;
    for (j, row) in ms.rows.iter().enumerate() {
        let mut v = row.direction.violation(means[j]);
        if v <= TOL_CRIT {
            v = 0.0;
        }
        q_plus.push(v);
        value += n * ms.weights[j] * v * v;
    }
    Criterion {
        value,
        q_plus,
        weights: ms.weights.clone(),
    }
}

/// Sampler configuration.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub chains: usize,
    pub steps: usize,
    pub burn_in: usize,
    /// Draws kept per chain (the last `retained` post-burn-in states).
    pub retained: usize,
    pub seed: u64,
    /// Coordinate blocks; defaults to the structural/friction partition.
    pub blocks: Option<Vec<Vec<usize>>>,
    pub target_accept: f64,
    pub initial: Option<Vec<f64>>,
}

impl McmcConfig {
    pub fn new(steps: usize, burn_in: usize, seed: u64) -> Self {
        McmcConfig {
            chains: 2,
            steps,
            burn_in,
            retained: DEFAULT_RETAINED,
            seed,
            blocks: None,
            target_accept: 0.3,
            initial: None,
        }
    }
}

/// Draws, criterion values and cutoff metadata from one MCMC run.
#[derive(Debug, Clone)]
pub struct IdentifiedSetDraws {
    /// M x n_θ retained draws (chains concatenated in order).
    pub draws: DMatrix<f64>,
    pub crit: DVector<f64>,
    /// Cutoff ν_n used for the default set estimate.
    pub cutoff: f64,
    pub acceptance_rate: f64,
    pub block_assignment: Vec<Vec<usize>>,
    pub proposal_scales: Vec<f64>,
    pub burn_in: usize,
    /// Sample size the criterion was built on (for the cutoff schedule).
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

/// Default cutoff ν_n = 2 log n, inside the 1 ≺ ν_n ≺ n window.
pub fn default_cutoff(n_obs: usize) -> f64 {
    2.0 * (n_obs.max(2) as f64).ln()
}

/// Runs block random-walk Metropolis over a generic criterion. Draws target
/// the quasi-posterior ∝ exp(-L_n(θ)) * 1(θ in bounds).
pub fn run_mcmc<F>(
    crit_fn: F,
    prior: &ParamVector,
    n_obs: usize,
    config: &McmcConfig,
) -> Result<IdentifiedSetDraws>
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    let n_theta = prior.len();
    if config.steps <= config.burn_in {
        return Err(Error::InvalidInput("steps must exceed burn_in".into()));
    }
    let blocks: Vec<Vec<usize>> = match &config.blocks {
        Some(b) => b.clone(),
        None => {
            let friction = prior.friction_block().to_vec();
            let structural = prior.structural_block();
            if friction.is_empty() || structural.is_empty() {
                vec![(0..n_theta).collect()]
            } else {
                vec![structural, friction]
            }
        }
    };
    let init_vals = config
        .initial
        .clone()
        .unwrap_or_else(|| prior.bounds().iter().map(|b| 0.5 * (b.lo + b.hi)).collect());
    let init = prior.with_values(init_vals)?;
    let l0 = crit_fn(&init).map_err(|_| Error::NonFiniteCriterion)?;
    if !l0.is_finite() {
        return Err(Error::NonFiniteCriterion);
    }

    let chain_results: Vec<Result<ChainOutput>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            run_chain(
                &crit_fn,
                prior,
                &init,
                l0,
                &blocks,
                config,
                config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(c as u64 + 1)),
            )
        })
        .collect();

    let mut draws_rows: Vec<Vec<f64>> = Vec::new();
    let mut crit_vals: Vec<f64> = Vec::new();
    let mut accepts = 0usize;
    let mut proposals = 0usize;
    let mut scales = vec![0.0f64; blocks.len()];
    let mut warnings = Vec::new();
    for res in chain_results {
        let out = res?;
        draws_rows.extend(out.draws);
        crit_vals.extend(out.crit);
        accepts += out.accepts;
        proposals += out.proposals;
        for (i, s) in out.scales.iter().enumerate() {
            scales[i] = scales[i].max(*s);
        }
    }
    if accepts == 0 {
        return Err(Error::AllProposalsRejected(proposals));
    }
    let acceptance_rate = accepts as f64 / proposals.max(1) as f64;
    if !(0.1..=0.6).contains(&acceptance_rate) {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.3} outside [0.1, 0.6] after adaptation"
        ));
    }

    let m = draws_rows.len();
    let mut draws = DMatrix::<f64>::zeros(m, n_theta);
    for (r, row) in draws_rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            draws[(r, c)] = *v;
        }
    }
    Ok(IdentifiedSetDraws {
        draws,
        crit: DVector::from_vec(crit_vals),
        cutoff: default_cutoff(n_obs),
        acceptance_rate,
        block_assignment: blocks,
        proposal_scales: scales,
        burn_in: config.burn_in,
        n_obs,
        warnings,
    })
}

/// Convenience wrapper: MCMC over a moment pipeline's criterion.
pub fn run_mcmc_moments(
    pipeline: &MomentPipeline,
    prior: &ParamVector,
    config: &McmcConfig,
) -> Result<IdentifiedSetDraws> {
    let n_obs = pipeline.data.nrows() - pipeline.instruments.lag_depth;
    run_mcmc(
        |theta: &ParamVector| Ok(eval_criterion(&pipeline.system_at(theta)?).value),
        prior,
        n_obs,
        config,
    )
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    crit: Vec<f64>,
    accepts: usize,
    proposals: usize,
    scales: Vec<f64>,
}

fn run_chain<F>(
    crit_fn: &F,
    prior: &ParamVector,
    init: &ParamVector,
    l_init: f64,
    blocks: &[Vec<usize>],
    config: &McmcConfig,
    seed: u64,
) -> Result<ChainOutput>
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let widths: Vec<f64> = prior.bounds().iter().map(|b| b.width().max(1e-12)).collect();
    let mut scales = vec![0.1f64; blocks.len()];

    let mut current = init.clone();
    let mut l_cur = l_init;
    let mut accepts = 0usize;
    let mut proposals = 0usize;
    let mut window_accepts = vec![0usize; blocks.len()];
    let mut window_counts = vec![0usize; blocks.len()];

    let keep = (config.steps - config.burn_in).min(config.retained);
    let keep_from = config.steps - keep;
    let mut draws = Vec::with_capacity(keep);
    let mut crit = Vec::with_capacity(keep);

    for step in 0..config.steps {
        for (b, block) in blocks.iter().enumerate() {
            let mut cand = current.values().to_vec();
            for &i in block {
                cand[i] += scales[b] * widths[i] * normal.sample(&mut rng);
            }
            proposals += 1;
            window_counts[b] += 1;
            if !prior.in_bounds(&cand) {
                continue;
            }
            let cand_pv = match prior.with_values(cand) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let l_new = match crit_fn(&cand_pv) {
                Ok(v) if v.is_finite() => v,
                _ => continue, // solve failure: criterion +inf, auto-reject
            };
            let log_ratio = l_cur - l_new;
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                current = cand_pv;
                l_cur = l_new;
                accepts += 1;
                window_accepts[b] += 1;
            }
        }
        // Adapt proposal scales during burn-in only; frozen afterwards.
        if step < config.burn_in && (step + 1) % 50 == 0 {
            for b in 0..blocks.len() {
                if window_counts[b] > 0 {
                    let rate = window_accepts[b] as f64 / window_counts[b] as f64;
                    scales[b] *= ((rate - config.target_accept) * 1.5).exp();
                    scales[b] = scales[b].clamp(1e-6, 4.0);
                }
                window_accepts[b] = 0;
                window_counts[b] = 0;
            }
        }
        if step >= config.burn_in && step >= keep_from {
            draws.push(current.values().to_vec());
            crit.push(l_cur);
        }
    }
    Ok(ChainOutput {
        draws,
        crit,
        accepts,
        proposals,
        scales,
    })
}

/// Summary of one coordinate of the set estimate.
#[derive(Debug, Clone, Serialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub q025: f64,
    pub q975: f64,
    pub min: f64,
    pub max: f64,
}

/// Level-set estimate 𝒜_n at one cutoff.
#[derive(Debug, Clone)]
pub struct SetEstimate {
    pub nu: f64,
    pub mask: Vec<bool>,
    pub n_in: usize,
    pub coordinates: Vec<CoordinateSummary>,
}

/// Sensitivity of the set estimate across a cutoff schedule.
#[derive(Debug, Clone)]
pub struct CutoffSweep {
    pub estimates: Vec<SetEstimate>,
}

/// Interpolated sample quantile (type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Extracts 𝒜_n = {θ draws: L(θ) - min L ≤ ν} and per-coordinate
/// 2.5%/97.5% quantiles of the in-set draws.
pub fn extract_set(draws: &IdentifiedSetDraws, nu: f64, names: &[String]) -> Result<SetEstimate> {
    let m = draws.draws.nrows();
    if m == 0 {
        return Err(Error::EmptySetAtCutoff { cutoff: nu, smallest_feasible: f64::NAN });
    }
    let min_crit = draws.crit.iter().copied().fold(f64::INFINITY, f64::min);
    let mask: Vec<bool> = draws.crit.iter().map(|&l| l - min_crit <= nu).collect();
    let n_in = mask.iter().filter(|&&b| b).count();
    if n_in == 0 {
        return Err(Error::EmptySetAtCutoff { cutoff: nu, smallest_feasible: 0.0 });
    }
    let n_theta = draws.draws.ncols();
    let mut coordinates = Vec::with_capacity(n_theta);
    for c in 0..n_theta {
        let mut vals: Vec<f64> = (0..m)
            .filter(|&r| mask[r])
            .map(|r| draws.draws[(r, c)])
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        coordinates.push(CoordinateSummary {
            name: names.get(c).cloned().unwrap_or_else(|| format!("theta_{c}")),
            q025: quantile(&vals, 0.025),
            q975: quantile(&vals, 0.975),
            min: vals[0],
            max: *vals.last().unwrap(),
        });
    }
    Ok(SetEstimate { nu, mask, n_in, coordinates })
}

/// Runs `extract_set` over a cutoff schedule; set sizes are weakly increasing
/// in ν by construction (asserted).
pub fn cutoff_sweep(
    draws: &IdentifiedSetDraws,
    nus: &[f64],
    names: &[String],
) -> Result<CutoffSweep> {
    let mut sorted_nus = nus.to_vec();
    sorted_nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut estimates = Vec::with_capacity(sorted_nus.len());
    let mut prev_n = 0usize;
    for nu in sorted_nus {
        let est = extract_set(draws, nu, names)?;
        assert!(
            est.n_in >= prev_n,
            "set estimate must be monotone in the cutoff"
        );
        prev_n = est.n_in;
        estimates.push(est);
    }
    Ok(CutoffSweep { estimates })
}

/// Default cutoff schedule {log n, 2 log n, sqrt n}.
pub fn default_cutoff_schedule(n_obs: usize) -> Vec<f64> {
    let n = n_obs.max(2) as f64;
    vec![n.ln(), 2.0 * n.ln(), n.sqrt()]
}

/// Formats per-parameter quantile rows in the two-column confidence-set
/// layout (one q2.5%/q97.5% pair per model).
pub fn format_quantile_table(model_name: &str, coords: &[CoordinateSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<14}{}\n", "", model_name));
    out.push_str(&format!("{:<14}{:>12}{:>12}\n", "Parameter", "q_2.5%", "q_97.5%"));
    for c in coords {
        out.push_str(&format!("{:<14}{:>12.3}{:>12.3}\n", c.name, c.q025, c.q975));
    }
    out
}
