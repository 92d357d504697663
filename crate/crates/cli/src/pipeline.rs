//! Subcommand orchestration: load configs and data, run the estimation
//! stages, and emit results.json, CSV tables, SVG plots and a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use setid_core::kalman::{filter, whiteness_check};
use setid_core::mcmc::{
    cutoff_sweep, default_cutoff, default_cutoff_schedule, eval_criterion, extract_set,
    format_quantile_table, run_mcmc_moments, CoordinateSummary, IdentifiedSetDraws, McmcConfig,
    SetEstimate,
};
use setid_core::model::{self, ModelSpec};
use setid_core::moments::{InstrumentSet, MomentPipeline, SurveySeries};
use setid_core::params::ParamVector;
use setid_core::qp::{wedge_series_at, wedges_from_set, WedgeEnvelope};
use setid_core::state_space::assemble_state_space;
use setid_core::wald::{default_block_length, run_test, Envelope};

use crate::config::{parse_model_config, parse_run_config, ModelConfig, RunConfig, WeightMode};
use crate::csvio::{load_survey, load_timeseries, write_timeseries, TimeSeriesFile};
use crate::error::{core_err, io_err, CliError};
use crate::svg::{write_line_plot, Series};

pub struct Workspace {
    pub run: RunConfig,
    pub run_text: String,
    pub model: ModelConfig,
    pub model_text: String,
    pub spec: ModelSpec,
    pub theta0: ParamVector,
    pub out_dir: PathBuf,
    pub config_path: PathBuf,
}

impl Workspace {
    pub fn load(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let run_text = std::fs::read_to_string(config_path)
            .map_err(io_err(&config_path.display().to_string()))?;
        let mut run = parse_run_config(&run_text).map_err(|source| CliError::Parse {
            path: config_path.display().to_string(),
            source,
        })?;
        if let Some(seed) = seed_override {
            run.seed = seed;
        }
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        let model_path = base.join(&run.model_path);
        let model_text = std::fs::read_to_string(&model_path)
            .map_err(io_err(&model_path.display().to_string()))?;
        let model = parse_model_config(&model_text).map_err(|source| CliError::Parse {
            path: model_path.display().to_string(),
            source,
        })?;
        let spec = model.to_model_spec().map_err(core_err("solve"))?;
        let theta0 = model.param_vector().map_err(core_err("solve"))?;
        std::fs::create_dir_all(out_dir).map_err(io_err(&out_dir.display().to_string()))?;
        Ok(Workspace {
            run,
            run_text,
            model,
            model_text,
            spec,
            theta0,
            out_dir: out_dir.to_path_buf(),
            config_path: config_path.to_path_buf(),
        })
    }

    pub fn load_data(&self) -> Result<TimeSeriesFile, CliError> {
        let base = self.config_path.parent().unwrap_or_else(|| Path::new("."));
        load_timeseries(&base.join(&self.run.data_path))
    }

    fn observable_indices(&self, names: &[String]) -> Result<Vec<usize>, CliError> {
        names
            .iter()
            .map(|n| {
                self.model
                    .observables
                    .iter()
                    .position(|o| o == n)
                    .ok_or_else(|| CliError::Usage(format!("'{n}' is not a model observable")))
            })
            .collect()
    }

    pub fn load_survey_series(&self) -> Result<Option<SurveySeries>, CliError> {
        let Some(spath) = &self.run.survey_path else {
            return Ok(None);
        };
        let base = self.config_path.parent().unwrap_or_else(|| Path::new("."));
        let targets = if self.run.survey_targets.is_empty() {
            (0..self.model.observables.len())
                .filter(|&i| self.spec.friction_signs[i] != 0)
                .collect()
        } else {
            self.observable_indices(&self.run.survey_targets)?
        };
        Ok(Some(load_survey(
            &base.join(spath),
            &self.run.survey_question,
            targets,
        )?))
    }

    pub fn pipeline(&self, data: DMatrix<f64>) -> Result<MomentPipeline, CliError> {
        let instruments = InstrumentSet::standard(self.run.instrument_lags, self.spec.n_y())
            .map_err(core_err("estimate"))?;
        let survey = self.load_survey_series()?;
        let mut pipeline = MomentPipeline::new(self.spec.clone(), data, instruments, survey);
        if self.run.weights == WeightMode::InverseVariance {
            pipeline
                .freeze_weights_at(&self.theta0)
                .map_err(core_err("estimate"))?;
        }
        Ok(pipeline)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(&parent.display().to_string()))?;
        }
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
        std::fs::write(&path, text).map_err(io_err(&path.display().to_string()))?;
        Ok(path)
    }

    fn write_manifest(&self, command: &str, outputs: &[String]) -> Result<(), CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            config_path: self.config_path.display().to_string(),
            config_sha256: sha256_hex(self.run_text.as_bytes()),
            model_sha256: sha256_hex(self.model_text.as_bytes()),
            seed: self.run.seed,
            outputs: outputs.to_vec(),
            operations: operation_trace(command),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Which library operations produced which outputs, for traceability.
fn operation_trace(command: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    match command {
        "solve" => {
            map.insert("solution".into(), "model::solve_re".into());
        }
        "filter" => {
            map.insert("filter".into(), "kalman::filter".into());
        }
        "estimate" => {
            map.insert("quantiles".into(), "mcmc::extract_set".into());
            map.insert("draws".into(), "mcmc::run_mcmc".into());
            map.insert("cutoff_sweep".into(), "mcmc::cutoff_sweep".into());
        }
        "wedges" => {
            map.insert("envelope".into(), "qp::wedges_from_set".into());
            map.insert("weights".into(), "qp::solve_weights_qp".into());
        }
        "test" => {
            map.insert("statistic".into(), "wald::wald_statistic".into());
            map.insert("critical_value".into(), "wald::bootstrap_distribution".into());
        }
        "simulate" => {
            map.insert("data".into(), "model::simulate".into());
        }
        _ => {}
    }
    map
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config_path: String,
    config_sha256: String,
    model_sha256: String,
    seed: u64,
    outputs: Vec<String>,
    operations: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct SolutionReport {
    p_star: Vec<Vec<f64>>,
    q_star: Vec<Vec<f64>>,
    pencil_roots: Vec<(f64, f64)>,
    n_stable: usize,
    n_predetermined: usize,
    residual_p: f64,
    residual_q: f64,
    identification: Option<IdentReport>,
}

#[derive(Serialize)]
struct IdentReport {
    required_rank: usize,
    numerical_rank: usize,
    pass: bool,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn cmd_solve(ws: &Workspace) -> Result<(), CliError> {
    let sol = model::solve_re(&ws.spec, &ws.theta0).map_err(core_err("solve"))?;
    let ident = setid_core::ident::check_local_identification(
        &ws.spec,
        &ws.theta0,
        setid_core::ident::EPS_FD,
    )
    .ok()
    .map(|r| IdentReport {
        required_rank: r.required_rank,
        numerical_rank: r.numerical_rank,
        pass: r.pass,
    });
    let report = SolutionReport {
        p_star: matrix_rows(&sol.p_star),
        q_star: matrix_rows(&sol.q_star),
        pencil_roots: sol.pencil_roots.iter().map(|z| (z.re, z.im)).collect(),
        n_stable: sol.n_stable,
        n_predetermined: sol.n_predetermined,
        residual_p: sol.residual_p,
        residual_q: sol.residual_q,
        identification: ident,
    };
    ws.write_json("solution.json", &report)?;
    ws.write_manifest("solve", &["solution.json".into()])?;
    println!(
        "solved: {} stable roots / {} predetermined, residuals {:.2e} / {:.2e}",
        report.n_stable, report.n_predetermined, report.residual_p, report.residual_q
    );
    Ok(())
}

#[derive(Serialize)]
struct FilterReport {
    loglik: f64,
    steady_from: Option<usize>,
    innovation_autocorr: Vec<Vec<f64>>,
    whiteness_band: f64,
}

pub fn cmd_filter(ws: &Workspace) -> Result<(), CliError> {
    let data = ws.load_data()?;
    let sol = model::solve_re(&ws.spec, &ws.theta0).map_err(core_err("filter"))?;
    let ss = assemble_state_space(&sol, &ws.spec).map_err(core_err("filter"))?;
    let out = filter(&ss, &data.values, None).map_err(core_err("filter"))?;
    let (acs, band) = whiteness_check(&out.innovations, 5);
    let report = FilterReport {
        loglik: out.loglik,
        steady_from: out.steady_from,
        innovation_autocorr: acs,
        whiteness_band: band,
    };
    ws.write_json("filter.json", &report)?;
    let names: Vec<String> = ws.model.observables.iter().map(|o| format!("a_{o}")).collect();
    write_timeseries(
        &ws.out_dir.join("innovations.csv"),
        Some(&data.periods),
        &names,
        &out.innovations,
    )?;
    ws.write_manifest("filter", &["filter.json".into(), "innovations.csv".into()])?;
    println!("filtered {} periods, loglik {:.4}", data.values.nrows(), out.loglik);
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport {
    acceptance_rate: f64,
    cutoff: f64,
    n_draws: usize,
    n_in_set: usize,
    quantiles: Vec<CoordinateSummary>,
    cutoff_sweep: Vec<SweepRow>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SweepRow {
    nu: f64,
    n_in: usize,
    endpoints: Vec<(f64, f64)>,
}

pub struct EstimateArtifacts {
    pub draws: IdentifiedSetDraws,
    pub set: SetEstimate,
    pub pipeline: MomentPipeline,
}

pub fn run_estimation(ws: &Workspace) -> Result<EstimateArtifacts, CliError> {
    let data = ws.load_data()?;
    let pipeline = ws.pipeline(data.values.clone())?;
    let mut config = McmcConfig::new(ws.run.steps, ws.run.burn_in, ws.run.seed);
    config.chains = ws.run.chains;
    config.retained = ws.run.retained;
    let draws = run_mcmc_moments(&pipeline, &ws.theta0, &config).map_err(core_err("estimate"))?;
    let nu = ws.run.cutoff.unwrap_or_else(|| default_cutoff(draws.n_obs));
    let names: Vec<String> = ws.model.params.iter().map(|p| p.name.clone()).collect();
    let set = extract_set(&draws, nu, &names).map_err(core_err("estimate"))?;
    Ok(EstimateArtifacts { draws, set, pipeline })
}

pub fn cmd_estimate(ws: &Workspace) -> Result<(), CliError> {
    let art = run_estimation(ws)?;
    let names: Vec<String> = ws.model.params.iter().map(|p| p.name.clone()).collect();
    let sweep = cutoff_sweep(&art.draws, &default_cutoff_schedule(art.draws.n_obs), &names)
        .map_err(core_err("estimate"))?;
    let report = EstimateReport {
        acceptance_rate: art.draws.acceptance_rate,
        cutoff: art.set.nu,
        n_draws: art.draws.draws.nrows(),
        n_in_set: art.set.n_in,
        quantiles: art.set.coordinates.clone(),
        cutoff_sweep: sweep
            .estimates
            .iter()
            .map(|e| SweepRow {
                nu: e.nu,
                n_in: e.n_in,
                endpoints: e.coordinates.iter().map(|c| (c.min, c.max)).collect(),
            })
            .collect(),
        warnings: art.draws.warnings.clone(),
    };
    ws.write_json("results.json", &report)?;

    let tables = ws.out_dir.join("tables");
    std::fs::create_dir_all(&tables).map_err(io_err(&tables.display().to_string()))?;
    let table_txt = format_quantile_table("Incomplete Model", &art.set.coordinates);
    std::fs::write(tables.join("quantiles.txt"), &table_txt)
        .map_err(io_err("tables/quantiles.txt"))?;
    let mut csv = String::from("parameter,q2.5%,q97.5%\n");
    for c in &art.set.coordinates {
        csv.push_str(&format!("{},{:.6},{:.6}\n", c.name, c.q025, c.q975));
    }
    std::fs::write(tables.join("quantiles.csv"), &csv).map_err(io_err("tables/quantiles.csv"))?;

    ws.write_manifest(
        "estimate",
        &[
            "results.json".into(),
            "tables/quantiles.txt".into(),
            "tables/quantiles.csv".into(),
        ],
    )?;
    println!(
        "estimate: {} draws, {} in set at nu = {:.3}, acceptance {:.3}",
        report.n_draws, report.n_in_set, report.cutoff, report.acceptance_rate
    );
    println!("{table_txt}");
    Ok(())
}

#[derive(Serialize)]
struct WedgeReport {
    observables: Vec<String>,
    lower_mean: Vec<f64>,
    upper_mean: Vec<f64>,
    q025_mean: Vec<f64>,
    q975_mean: Vec<f64>,
    lower_standardized: Vec<f64>,
    upper_standardized: Vec<f64>,
    n_draws_used: usize,
}

pub fn run_wedges(ws: &Workspace) -> Result<(EstimateArtifacts, WedgeEnvelope), CliError> {
    let art = run_estimation(ws)?;
    let envelope = wedges_from_set(
        &ws.spec,
        &art.pipeline.data,
        &art.draws,
        &art.set,
        &ws.theta0,
        ws.run.max_wedge_draws,
    )
    .map_err(core_err("wedges"))?;
    Ok((art, envelope))
}

pub fn cmd_wedges(ws: &Workspace) -> Result<(), CliError> {
    let (_art, env) = run_wedges(ws)?;
    let report = WedgeReport {
        observables: ws.model.observables.clone(),
        lower_mean: env.lower_mean.clone(),
        upper_mean: env.upper_mean.clone(),
        q025_mean: env.q025_mean.clone(),
        q975_mean: env.q975_mean.clone(),
        lower_standardized: env.lower_standardized.clone(),
        upper_standardized: env.upper_standardized.clone(),
        n_draws_used: env.n_draws_used,
    };
    ws.write_json("results.json", &report)?;

    let plots = ws.out_dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(io_err(&plots.display().to_string()))?;
    let mut outputs = vec!["results.json".to_string()];
    for (j, obs) in ws.model.observables.iter().enumerate() {
        let lower: Vec<f64> = (0..env.lower_path.nrows()).map(|t| env.lower_path[(t, j)]).collect();
        let upper: Vec<f64> = (0..env.upper_path.nrows()).map(|t| env.upper_path[(t, j)]).collect();
        let path = plots.join(format!("wedge_{obs}.svg"));
        write_line_plot(
            &path,
            &format!("Wedge band: {obs}"),
            &[
                Series { name: "lower", values: &lower, color: "#1f4e9c" },
                Series { name: "upper", values: &upper, color: "#c03a2b" },
            ],
        )?;
        outputs.push(format!("plots/wedge_{obs}.svg"));
    }
    // Band data as CSV for downstream use.
    let mut names = Vec::new();
    let t_len = env.lower_path.nrows();
    let mut stacked = DMatrix::<f64>::zeros(t_len, 2 * ws.model.observables.len());
    for (j, obs) in ws.model.observables.iter().enumerate() {
        names.push(format!("{obs}_lower"));
        names.push(format!("{obs}_upper"));
        for t in 0..t_len {
            stacked[(t, 2 * j)] = env.lower_path[(t, j)];
            stacked[(t, 2 * j + 1)] = env.upper_path[(t, j)];
        }
    }
    write_timeseries(&ws.out_dir.join("wedges.csv"), None, &names, &stacked)?;
    outputs.push("wedges.csv".into());
    ws.write_manifest("wedges", &outputs)?;
    println!(
        "wedges over {} draws: mean bands {:?} .. {:?}",
        env.n_draws_used, env.lower_mean, env.upper_mean
    );
    Ok(())
}

#[derive(Serialize)]
struct TestReport {
    statistic: f64,
    critical_value: f64,
    alpha: f64,
    reject: bool,
    block_length: usize,
    seed: u64,
    cloud_statistic: Option<f64>,
    lambda_p: Vec<f64>,
    envelope_lower: Vec<f64>,
    envelope_upper: Vec<f64>,
    bootstrap_quantiles: Vec<(f64, f64)>,
}

pub fn cmd_test(ws: &Workspace) -> Result<(), CliError> {
    let Some(cm_rel) = &ws.run.complete_model_path else {
        return Err(CliError::Usage(
            "[run] complete_model = <path> is required for the test subcommand".into(),
        ));
    };
    let base = ws.config_path.parent().unwrap_or_else(|| Path::new("."));
    let cm_path = base.join(cm_rel);
    let cm_text = std::fs::read_to_string(&cm_path)
        .map_err(io_err(&cm_path.display().to_string()))?;
    let cm = parse_model_config(&cm_text).map_err(|source| CliError::Parse {
        path: cm_path.display().to_string(),
        source,
    })?;
    let cm_spec = cm.to_model_spec().map_err(core_err("test"))?;
    let cm_theta = cm.param_vector().map_err(core_err("test"))?;

    let (art, env) = run_wedges(ws)?;
    let data = &art.pipeline.data;
    // Wedge path implied by the complete model at its point estimate.
    let cm_series = wedge_series_at(&cm_spec, data, &cm_theta).map_err(core_err("test"))?;

    // Boundary path per observable: the extreme-mean draw's path on the side
    // the complete model exits, the nearer edge when inside.
    let t_len = cm_series.lambda_t.nrows();
    let n_y = env.lower_mean.len();
    let mut boundary = DMatrix::<f64>::zeros(t_len, n_y);
    for j in 0..n_y {
        let lp = cm_series.lambda_mean[j];
        let use_upper = if lp > env.upper_mean[j] {
            true
        } else if lp < env.lower_mean[j] {
            false
        } else {
            (env.upper_mean[j] - lp) < (lp - env.lower_mean[j])
        };
        for t in 0..t_len {
            boundary[(t, j)] = if use_upper {
                env.upper_mean_path[(t, j)]
            } else {
                env.lower_mean_path[(t, j)]
            };
        }
    }
    let envelope =
        Envelope::new(env.lower_mean.clone(), env.upper_mean.clone()).map_err(core_err("test"))?;
    let block_length = ws.run.block_length.unwrap_or_else(|| default_block_length(t_len));
    let result = run_test(
        &cm_series.lambda_t,
        &boundary,
        &envelope,
        ws.run.alpha,
        block_length,
        ws.run.bootstrap_reps,
        ws.run.seed,
        None,
    )
    .map_err(core_err("test"))?;

    let qgrid: Vec<(f64, f64)> = (1..20)
        .map(|k| {
            let p = k as f64 / 20.0;
            (p, setid_core::wald::empirical_quantile(&result.bootstrap_draws, p))
        })
        .collect();
    let report = TestReport {
        statistic: result.statistic,
        critical_value: result.critical_value,
        alpha: result.alpha,
        reject: result.reject,
        block_length: result.block_length,
        seed: result.seed,
        cloud_statistic: result.cloud_statistic,
        lambda_p: cm_series.lambda_mean.clone(),
        envelope_lower: env.lower_mean.clone(),
        envelope_upper: env.upper_mean.clone(),
        bootstrap_quantiles: qgrid,
    };
    ws.write_json("results.json", &report)?;
    ws.write_manifest("test", &["results.json".into()])?;
    println!(
        "TW = {:.4}, c_{:.2} = {:.4} -> {}",
        report.statistic,
        1.0 - report.alpha,
        report.critical_value,
        if report.reject { "reject" } else { "accept" }
    );
    Ok(())
}

pub fn cmd_simulate(ws: &Workspace) -> Result<(), CliError> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let sol = model::solve_re(&ws.spec, &ws.theta0).map_err(core_err("solve"))?;
    let path = model::simulate(&ws.spec, &sol, ws.run.sim_t, ws.run.sim_burn, ws.run.seed)
        .map_err(core_err("solve"))?;
    let mut y = path.y.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ws.run.seed.wrapping_add(1));
    let mut survey_cols: Vec<(String, Vec<f64>)> = Vec::new();
    for inj in &ws.run.wedges {
        let Some(col) = ws.model.observables.iter().position(|o| o == &inj.observable) else {
            return Err(CliError::Usage(format!(
                "wedge target '{}' is not an observable",
                inj.observable
            )));
        };
        let noise = Normal::new(0.0, inj.sd.max(0.0)).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut indicator = Vec::with_capacity(y.nrows());
        for t in 0..y.nrows() {
            let on = inj.prob >= 1.0 || rng.random::<f64>() < inj.prob;
            indicator.push(if on { 1.0 } else { 0.0 });
            if on {
                y[(t, col)] += inj.mean + if inj.sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            }
        }
        if inj.prob < 1.0 {
            survey_cols.push((format!("q_{}", inj.observable), indicator));
        }
    }
    write_timeseries(&ws.out_dir.join("data.csv"), None, &ws.model.observables, &y)?;
    let mut outputs = vec!["data.csv".to_string()];
    if !survey_cols.is_empty() {
        let mut names = Vec::new();
        let mut m = DMatrix::<f64>::zeros(y.nrows(), survey_cols.len());
        for (j, (name, col)) in survey_cols.iter().enumerate() {
            names.push(name.clone());
            for t in 0..y.nrows() {
                m[(t, j)] = col[t];
            }
        }
        write_timeseries(&ws.out_dir.join("survey.csv"), None, &names, &m)?;
        outputs.push("survey.csv".into());
    }
    ws.write_manifest("simulate", &outputs)?;
    println!("simulated {} periods into {}", y.nrows(), ws.out_dir.display());
    Ok(())
}

/// Dispatch table used by main.
pub fn dispatch(command: &str, ws: &Workspace) -> Result<(), CliError> {
    match command {
        "solve" => cmd_solve(ws),
        "filter" => cmd_filter(ws),
        "estimate" => cmd_estimate(ws),
        "wedges" => cmd_wedges(ws),
        "test" => cmd_test(ws),
        "simulate" => cmd_simulate(ws),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}

/// Criterion value at the configured initial θ (diagnostic helper).
pub fn criterion_at_initial(ws: &Workspace) -> Result<f64, CliError> {
    let data = ws.load_data()?;
    let pipeline = ws.pipeline(data.values)?;
    let ms = pipeline.system_at(&ws.theta0).map_err(core_err("estimate"))?;
    Ok(eval_criterion(&ms).value)
}
