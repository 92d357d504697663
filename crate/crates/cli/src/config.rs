//! Section-based model and run configuration files.
//!
//! Grammar sketch (ABNF, line oriented; `#` starts a comment):
//!
//! ```text
//! config      = *( section / blank )
//! section     = header *( entry / blank )
//! header      = "[" name "]"
//! entry       = key "=" value
//! key         = name / index-pair
//! index-pair  = int "," int                ; 1-based matrix entry
//! value       = expression / word-list / number / path
//! param-entry = name "=" number "in" "[" number "," number "]" ["friction"]
//! expression  = term *( ("+"/"-") term )
//! term        = unary *( ("*"/"/") unary )
//! unary       = ["-"] power
//! power       = atom [ "^" unary ]
//! atom        = number / name / "(" expression ")"
//! ```
//!
//! A model file declares `[model]` (states, shocks, observables), `[params]`,
//! `[signs]` and the matrix sections `[matrix.G]`, `[matrix.F]`, `[matrix.L]`,
//! `[matrix.R]`, `[matrix.Sigma]`. Unlisted matrix entries are zero. Lagged
//! endogenous variables must be written as dummy states: a dummy row has
//! `G = e_m`, `F = e_j`, `L = 0` and marks state `j` as predetermined.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use setid_core::model::{MatrixMap, ModelSpec, SystemMatrices};
use setid_core::params::{Bound, ParamVector};

use crate::expr::{parse_expr, Expr};

/// Parse failure with one-based line and column.
#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, column, message: message.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub friction: bool,
}

/// Parsed model configuration with compiled matrix entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub states: Vec<String>,
    pub shocks: Vec<String>,
    pub observables: Vec<String>,
    pub params: Vec<ParamDecl>,
    pub signs: Vec<(String, i8)>,
    /// (matrix name, row, col, source, compiled) with 0-based indices.
    pub entries: Vec<MatrixEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEntry {
    pub matrix: String,
    pub row: usize,
    pub col: usize,
    pub source: String,
    pub expr: Expr,
}

struct RawEntry {
    line: usize,
    key: String,
    value: String,
    /// 1-based column where the value begins on the raw line.
    value_col: usize,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<RawEntry>,
}

fn split_sections(text: &str) -> Result<Vec<RawSection>, ParseError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let without_comment = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        };
        let trimmed = without_comment.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line_no, raw_line.find('[').unwrap_or(0) + 1, "unterminated section header");
            };
            sections.push(RawSection {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = without_comment.find('=') else {
            return err(line_no, 1, format!("expected 'key = value', got '{trimmed}'"));
        };
        let key = without_comment[..eq].trim().to_string();
        let after = &without_comment[eq + 1..];
        let lead_ws = after.len() - after.trim_start().len();
        let value_col = eq + 1 + lead_ws + 1;
        let value = after.trim().to_string();
        match sections.last_mut() {
            Some(s) => s.entries.push(RawEntry { line: line_no, key, value, value_col }),
            None => return err(line_no, 1, "entry before any [section] header"),
        }
    }
    Ok(sections)
}

fn parse_param_decl(line: usize, name: &str, value: &str) -> Result<ParamDecl, ParseError> {
    // "<value> in [<lo>, <hi>] [friction]"
    let mut rest = value.trim();
    let friction = if let Some(stripped) = rest.strip_suffix("friction") {
        rest = stripped.trim();
        true
    } else {
        false
    };
    let Some(in_pos) = rest.find(" in ") else {
        return err(line, 1, format!("parameter '{name}': expected '<value> in [lo, hi]'"));
    };
    let val: f64 = rest[..in_pos]
        .trim()
        .parse()
        .map_err(|_| ParseError { line, column: 1, message: format!("parameter '{name}': bad value") })?;
    let bracket = rest[in_pos + 4..].trim();
    let inner = bracket
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ParseError { line, column: 1, message: format!("parameter '{name}': expected [lo, hi]") })?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return err(line, 1, format!("parameter '{name}': expected two bound values"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| ParseError {
        line,
        column: 1,
        message: format!("parameter '{name}': bad lower bound"),
    })?;
    let hi: f64 = parts[1].parse().map_err(|_| ParseError {
        line,
        column: 1,
        message: format!("parameter '{name}': bad upper bound"),
    })?;
    Ok(ParamDecl { name: name.to_string(), value: val, lo, hi, friction })
}

/// Parses a model configuration document.
pub fn parse_model_config(text: &str) -> Result<ModelConfig, ParseError> {
    let sections = split_sections(text)?;
    let mut states = Vec::new();
    let mut shocks = Vec::new();
    let mut observables = Vec::new();
    let mut params: Vec<ParamDecl> = Vec::new();
    let mut signs = Vec::new();
    let mut entries = Vec::new();

    let known_matrices = ["G", "F", "L", "R", "Sigma"];
    let mut param_names: Vec<String> = Vec::new();

    // Params must be read before matrix expressions reference them.
    for section in &sections {
        if section.name == "params" {
            for entry in &section.entries {
                let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                let decl = parse_param_decl(*line, key, value)?;
                if param_names.contains(&decl.name) {
                    return err(*line, 1, format!("duplicate parameter '{}'", decl.name));
                }
                param_names.push(decl.name.clone());
                params.push(decl);
            }
        }
    }

    for section in &sections {
        match section.name.as_str() {
            "model" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    let words: Vec<String> =
                        value.split_whitespace().map(str::to_string).collect();
                    match key.as_str() {
                        "states" => states = words,
                        "shocks" => shocks = words,
                        "observables" => observables = words,
                        other => return err(*line, 1, format!("unknown model key '{other}'")),
                    }
                }
            }
            "params" => {}
            "signs" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    let sign: i8 = value.trim().parse().map_err(|_| ParseError {
                        line: *line,
                        column: 1,
                        message: format!("sign for '{key}' must be -1, 0 or 1"),
                    })?;
                    if ![-1, 0, 1].contains(&sign) {
                        return err(*line, 1, format!("sign for '{key}' must be -1, 0 or 1"));
                    }
                    signs.push((key.clone(), sign));
                }
            }
            name if name.starts_with("matrix.") => {
                let mat = name.trim_start_matches("matrix.").to_string();
                if !known_matrices.contains(&mat.as_str()) {
                    return err(section.line, 1, format!("unknown matrix '{mat}'"));
                }
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    let idx: Vec<&str> = key.split(',').map(str::trim).collect();
                    if idx.len() != 2 {
                        return err(*line, 1, format!("matrix entry key '{key}' must be 'row,col'"));
                    }
                    let row: usize = idx[0].parse().map_err(|_| ParseError {
                        line: *line,
                        column: 1,
                        message: format!("bad row index '{}'", idx[0]),
                    })?;
                    let col: usize = idx[1].parse().map_err(|_| ParseError {
                        line: *line,
                        column: 1,
                        message: format!("bad column index '{}'", idx[1]),
                    })?;
                    if row == 0 || col == 0 {
                        return err(*line, 1, "matrix indices are 1-based");
                    }
                    let expr = parse_expr(value, &param_names).map_err(|e| ParseError {
                        line: *line,
                        column: entry.value_col + e.offset,
                        message: e.message,
                    })?;
                    entries.push(MatrixEntry {
                        matrix: mat.clone(),
                        row: row - 1,
                        col: col - 1,
                        source: value.clone(),
                        expr,
                    });
                }
            }
            other => return err(section.line, 1, format!("unknown section '[{other}]'")),
        }
    }

    let config = ModelConfig { states, shocks, observables, params, signs, entries };
    validate_model_config(&config)?;
    Ok(config)
}

fn validate_model_config(config: &ModelConfig) -> Result<(), ParseError> {
    if config.states.is_empty() || config.shocks.is_empty() {
        return err(1, 1, "model must declare states and shocks");
    }
    let n_x = config.states.len();
    let n_z = config.shocks.len();
    for obs in &config.observables {
        if !config.states.contains(obs) {
            return err(1, 1, format!("observable '{obs}' is not a declared state"));
        }
    }
    for (name, _) in &config.signs {
        if !config.observables.contains(name) {
            return err(1, 1, format!("sign declared for non-observable '{name}'"));
        }
    }
    for e in &config.entries {
        let (rows, cols) = match e.matrix.as_str() {
            "G" | "F" => (n_x, n_x),
            "L" => (n_x, n_z),
            "R" | "Sigma" => (n_z, n_z),
            _ => unreachable!(),
        };
        if e.row >= rows || e.col >= cols {
            return err(
                1,
                1,
                format!(
                    "matrix {} entry ({}, {}) outside {}x{}",
                    e.matrix,
                    e.row + 1,
                    e.col + 1,
                    rows,
                    cols
                ),
            );
        }
    }
    Ok(())
}

impl ModelConfig {
    pub fn n_x(&self) -> usize {
        self.states.len()
    }

    pub fn n_z(&self) -> usize {
        self.shocks.len()
    }

    /// Canonical text form; parsing it back yields an equal configuration.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        out.push_str("[model]\n");
        out.push_str(&format!("states = {}\n", self.states.join(" ")));
        out.push_str(&format!("shocks = {}\n", self.shocks.join(" ")));
        out.push_str(&format!("observables = {}\n", self.observables.join(" ")));
        out.push_str("\n[params]\n");
        for p in &self.params {
            out.push_str(&format!(
                "{} = {} in [{}, {}]{}\n",
                p.name,
                p.value,
                p.lo,
                p.hi,
                if p.friction { " friction" } else { "" }
            ));
        }
        out.push_str("\n[signs]\n");
        for (name, sign) in &self.signs {
            out.push_str(&format!("{name} = {sign}\n"));
        }
        for mat in ["G", "F", "L", "R", "Sigma"] {
            let rows: Vec<&MatrixEntry> =
                self.entries.iter().filter(|e| e.matrix == mat).collect();
            if rows.is_empty() {
                continue;
            }
            out.push_str(&format!("\n[matrix.{mat}]\n"));
            for e in rows {
                out.push_str(&format!("{},{} = {}\n", e.row + 1, e.col + 1, e.source));
            }
        }
        out
    }

    /// Initial parameter vector from the declared values, bounds and the
    /// friction partition.
    pub fn param_vector(&self) -> Result<ParamVector, setid_core::Error> {
        let values: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        let bounds: Vec<Bound> = self.params.iter().map(|p| Bound::new(p.lo, p.hi)).collect();
        let friction: Vec<usize> = self
            .params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.friction)
            .map(|(i, _)| i)
            .collect();
        let names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        ParamVector::new(values, bounds, friction, names)
    }

    /// Compiles the configuration into a `ModelSpec` with a closure-backed
    /// matrix map.
    pub fn to_model_spec(&self) -> Result<ModelSpec, setid_core::Error> {
        let n_x = self.n_x();
        let n_z = self.n_z();
        let entries = self.entries.clone();
        let map: MatrixMap = Arc::new(move |theta: &[f64]| {
            let mut g = DMatrix::<f64>::zeros(n_x, n_x);
            let mut f = DMatrix::<f64>::zeros(n_x, n_x);
            let mut l = DMatrix::<f64>::zeros(n_x, n_z);
            let mut r = DMatrix::<f64>::zeros(n_z, n_z);
            let mut sigma = DMatrix::<f64>::zeros(n_z, n_z);
            for e in &entries {
                let value = e.expr.eval(theta);
                match e.matrix.as_str() {
                    "G" => g[(e.row, e.col)] = value,
                    "F" => f[(e.row, e.col)] = value,
                    "L" => l[(e.row, e.col)] = value,
                    "R" => r[(e.row, e.col)] = value,
                    "Sigma" => sigma[(e.row, e.col)] = value,
                    _ => unreachable!(),
                }
            }
            // Mirror Sigma entries specified on one triangle.
            for i in 0..n_z {
                for j in 0..n_z {
                    if sigma[(i, j)] == 0.0 && sigma[(j, i)] != 0.0 {
                        sigma[(i, j)] = sigma[(j, i)];
                    }
                }
            }
            Ok(SystemMatrices { g, f, l, r, sigma_eps: sigma })
        });
        let selector: Vec<usize> = self
            .observables
            .iter()
            .map(|name| self.states.iter().position(|s| s == name).unwrap())
            .collect();
        let mut sign_vec = vec![0i8; self.observables.len()];
        for (name, sign) in &self.signs {
            let pos = self.observables.iter().position(|o| o == name).unwrap();
            sign_vec[pos] = *sign;
        }
        ModelSpec::new(n_x, n_z, map, selector, sign_vec)
    }
}

/// Weight choice for the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Identity,
    InverseVariance,
}

/// Wedge injected by the simulate subcommand into one observable.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeInjection {
    pub observable: String,
    /// Constant mean component.
    pub mean: f64,
    /// Gaussian noise around the mean.
    pub sd: f64,
    /// Probability a Bernoulli regime switches the wedge on (1 = always).
    pub prob: f64,
}

/// Full run configuration for the pipeline subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model_path: String,
    pub data_path: String,
    pub survey_path: Option<String>,
    pub survey_question: String,
    pub survey_targets: Vec<String>,
    pub instrument_lags: usize,
    pub chains: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub retained: usize,
    pub seed: u64,
    pub weights: WeightMode,
    pub cutoff: Option<f64>,
    pub alpha: f64,
    pub block_length: Option<usize>,
    pub bootstrap_reps: usize,
    pub complete_model_path: Option<String>,
    pub sim_t: usize,
    pub sim_burn: usize,
    pub wedges: Vec<WedgeInjection>,
    pub max_wedge_draws: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model_path: String::new(),
            data_path: String::new(),
            survey_path: None,
            survey_question: "q1".into(),
            survey_targets: Vec::new(),
            instrument_lags: 1,
            chains: 2,
            steps: 20_000,
            burn_in: 5_000,
            retained: 250_000,
            seed: 42,
            weights: WeightMode::InverseVariance,
            cutoff: None,
            alpha: 0.05,
            block_length: None,
            bootstrap_reps: 2_000,
            complete_model_path: None,
            sim_t: 500,
            sim_burn: 200,
            wedges: Vec::new(),
            max_wedge_draws: 200,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ParseError> {
    value.trim().parse().map_err(|_| ParseError {
        line,
        column: 1,
        message: format!("bad value for '{key}': '{value}'"),
    })
}

/// Parses a run configuration document.
pub fn parse_run_config(text: &str) -> Result<RunConfig, ParseError> {
    let sections = split_sections(text)?;
    let mut cfg = RunConfig::default();
    let mut seed_seen = false;
    for section in &sections {
        match section.name.as_str() {
            "run" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "model" => cfg.model_path = value.clone(),
                        "data" => cfg.data_path = value.clone(),
                        "survey" => cfg.survey_path = Some(value.clone()),
                        "complete_model" => cfg.complete_model_path = Some(value.clone()),
                        other => return err(*line, 1, format!("unknown run key '{other}'")),
                    }
                }
            }
            "instruments" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "lags" => cfg.instrument_lags = parse_num(*line, key, value)?,
                        other => return err(*line, 1, format!("unknown instruments key '{other}'")),
                    }
                }
            }
            "survey" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "question" => cfg.survey_question = value.clone(),
                        "targets" => {
                            cfg.survey_targets =
                                value.split_whitespace().map(str::to_string).collect()
                        }
                        other => return err(*line, 1, format!("unknown survey key '{other}'")),
                    }
                }
            }
            "mcmc" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "chains" => cfg.chains = parse_num(*line, key, value)?,
                        "steps" => cfg.steps = parse_num(*line, key, value)?,
                        "burn_in" => cfg.burn_in = parse_num(*line, key, value)?,
                        "retained" => cfg.retained = parse_num(*line, key, value)?,
                        "seed" => {
                            cfg.seed = parse_num(*line, key, value)?;
                            seed_seen = true;
                        }
                        "weights" => {
                            cfg.weights = match value.trim() {
                                "identity" => WeightMode::Identity,
                                "inverse_variance" => WeightMode::InverseVariance,
                                other => {
                                    return err(*line, 1, format!("unknown weight mode '{other}'"))
                                }
                            }
                        }
                        other => return err(*line, 1, format!("unknown mcmc key '{other}'")),
                    }
                }
            }
            "cutoff" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "nu" => {
                            if value.trim() != "auto" {
                                cfg.cutoff = Some(parse_num(*line, key, value)?);
                            }
                        }
                        other => return err(*line, 1, format!("unknown cutoff key '{other}'")),
                    }
                }
            }
            "bootstrap" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "alpha" => cfg.alpha = parse_num(*line, key, value)?,
                        "block_length" => {
                            if value.trim() != "auto" {
                                cfg.block_length = Some(parse_num(*line, key, value)?);
                            }
                        }
                        "replicates" => cfg.bootstrap_reps = parse_num(*line, key, value)?,
                        other => return err(*line, 1, format!("unknown bootstrap key '{other}'")),
                    }
                }
            }
            "simulate" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "t" => cfg.sim_t = parse_num(*line, key, value)?,
                        "burn" => cfg.sim_burn = parse_num(*line, key, value)?,
                        "wedge" => {
                            // "<observable> mean=<v> sd=<v> prob=<v>"
                            let mut parts = value.split_whitespace();
                            let Some(obs) = parts.next() else {
                                return err(*line, 1, "wedge needs an observable name");
                            };
                            let mut inj = WedgeInjection {
                                observable: obs.to_string(),
                                mean: 0.0,
                                sd: 0.0,
                                prob: 1.0,
                            };
                            for part in parts {
                                let Some((k, v)) = part.split_once('=') else {
                                    return err(*line, 1, format!("bad wedge field '{part}'"));
                                };
                                match k {
                                    "mean" => inj.mean = parse_num(*line, k, v)?,
                                    "sd" => inj.sd = parse_num(*line, k, v)?,
                                    "prob" => inj.prob = parse_num(*line, k, v)?,
                                    other => {
                                        return err(*line, 1, format!("unknown wedge field '{other}'"))
                                    }
                                }
                            }
                            cfg.wedges.push(inj);
                        }
                        other => return err(*line, 1, format!("unknown simulate key '{other}'")),
                    }
                }
            }
            "wedges" => {
                for entry in &section.entries {
                    let (line, key, value) = (&entry.line, &entry.key, &entry.value);
                    match key.as_str() {
                        "max_draws" => cfg.max_wedge_draws = parse_num(*line, key, value)?,
                        other => return err(*line, 1, format!("unknown wedges key '{other}'")),
                    }
                }
            }
            other => return err(section.line, 1, format!("unknown section '[{other}]'")),
        }
    }
    if cfg.model_path.is_empty() {
        return err(1, 1, "run config must set [run] model = <path>");
    }
    if !seed_seen {
        return err(1, 1, "run config must set [mcmc] seed (reproducibility is mandatory)");
    }
    if cfg.retained > cfg.steps.saturating_sub(cfg.burn_in) {
        cfg.retained = cfg.steps.saturating_sub(cfg.burn_in);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const AR1_MODEL: &str = "\
[model]
states = c
shocks = z
observables = c

[params]
mu = 0.8 in [0.01, 0.99]
sigma = 0.05 in [0.001, 1.0] friction

[signs]
c = 1

[matrix.G]
1,1 = 1

[matrix.L]
1,1 = 1

[matrix.R]
1,1 = mu

[matrix.Sigma]
1,1 = sigma ^ 2
";

    #[test]
    fn ar1_config_round_trips_through_canonical_serializer() {
        let cfg = parse_model_config(AR1_MODEL).unwrap();
        assert_eq!(cfg.states, vec!["c"]);
        assert_eq!(cfg.params.len(), 2);
        assert!(cfg.params[1].friction);
        let canonical = cfg.to_canonical_string();
        let reparsed = parse_model_config(&canonical).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn rbc_config_reproduces_lag_polynomial_coefficients() {
        let text = "\
[model]
states = I Ilag
shocks = z
observables = I

[params]
alpha = 0.33 in [0.2, 0.5]
sbar = 0.2 in [0.05, 0.3]
omega = 2.0 in [1.1, 5.0]
rho_z = 0.5 in [0.0, 0.95]

[signs]
I = -1

[matrix.G]
1,1 = 1 + ((1 - alpha) * (1 - sbar) + sbar * omega) / (alpha * omega)
1,2 = -1
2,1 = 1

[matrix.F]
1,1 = sbar / alpha
2,2 = 1

[matrix.L]
1,1 = 1 / alpha

[matrix.R]
1,1 = rho_z

[matrix.Sigma]
1,1 = 1
";
        let cfg = parse_model_config(text).unwrap();
        let spec = cfg.to_model_spec().unwrap();
        let theta = cfg.param_vector().unwrap();
        let mats = spec.evaluate(theta.values()).unwrap();
        // Hand arithmetic at alpha=0.33, sbar=0.2, omega=2:
        // a2 = 0.2/0.33, a1 = 1 + (0.67*0.8 + 0.4)/0.66, a0 = 1/0.33.
        let a2 = 0.2 / 0.33;
        let a1 = 1.0 + (0.67 * 0.8 + 0.4) / 0.66;
        let a0 = 1.0 / 0.33;
        assert!((mats.f[(0, 0)] - a2).abs() < 1e-15);
        assert!((mats.g[(0, 0)] - a1).abs() < 1e-15);
        assert!((mats.l[(0, 0)] - a0).abs() < 1e-15);
        // The solved roots are checked against the quadratic oracle in core.
        let sol = setid_core::model::solve_re(&spec, &theta).unwrap();
        assert_eq!(sol.pencil_roots.len(), 2);
    }

    #[test]
    fn malformed_expression_reports_line_and_column() {
        let text = "\
[model]
states = c
shocks = z
observables = c

[params]
alpha = 0.5 in [0.0, 1.0]

[matrix.G]
1,1 = alpha ++ 1
";
        let e = parse_model_config(text).unwrap_err();
        assert_eq!(e.line, 10);
        // Column of the second '+' on "1,1 = alpha ++ 1".
        assert_eq!(e.column, 14);
    }

    #[test]
    fn run_config_requires_seed() {
        let text = "[run]\nmodel = m.cfg\ndata = d.csv\n";
        let e = parse_run_config(text).unwrap_err();
        assert!(e.message.contains("seed"));
        let ok = parse_run_config("[run]\nmodel = m.cfg\ndata = d.csv\n[mcmc]\nseed = 7\n").unwrap();
        assert_eq!(ok.seed, 7);
    }
}
