//! Line-oriented experiment configuration.
//!
//! The format is sectioned `key = value` pairs:
//!
//! ```text
//! [experiment]
//! kind = ct
//! seed = 1
//!
//! [solver relaxed]
//! kind = proposed
//! alpha = 1.999
//! rho = continuation
//! subsets = 4
//! iterations = 10
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Section names are
//! `[experiment]`, `[scenario]`, `[lasso]`, `[reference]`, `[spectral]`,
//! and one `[solver NAME]` per solver run.

use lalm::solvers::{DPsiMode, RhoMode};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Which experiment pipeline to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Lasso,
    Ct,
    Spectral,
}

/// Which solver family a `[solver]` section selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Relaxation applied through the `g`/`h` gradient recursions.
    Proposed,
    /// Relaxation applied only to the augmented-Lagrangian variables.
    Simple,
    /// Ordered-subsets separable-quadratic-surrogate baseline.
    Sqs,
}

pub const SOLVER_KIND_NAMES: &str = "proposed, simple, sqs";

/// One solver run from a `[solver NAME]` section.
#[derive(Clone, Debug)]
pub struct SolverEntry {
    pub name: String,
    pub kind: SolverKind,
    pub alpha: f64,
    pub rho: RhoMode,
    pub subsets: usize,
    pub iterations: usize,
    pub d_psi: DPsiMode,
}

/// CT scenario parameters (`[scenario]`).
#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub nx: usize,
    pub ny: usize,
    pub views: usize,
    pub i0: f64,
    pub beta: f64,
    pub delta: f64,
    pub noiseless: bool,
    pub window_hu: (f64, f64),
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            nx: 64,
            ny: 64,
            views: 90,
            i0: 1e5,
            beta: lalm::ct::DEFAULT_BETA,
            delta: lalm::ct::DEFAULT_DELTA_HU,
            noiseless: false,
            window_hu: lalm::ct::DEFAULT_WINDOW_HU,
        }
    }
}

/// LASSO instance parameters (`[lasso]`).
#[derive(Clone, Debug)]
pub struct LassoParams {
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub noise_std: f64,
    pub lambda: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            rows: 100,
            cols: 400,
            sparsity: 20,
            noise_std: 0.1,
            lambda: 1.0,
        }
    }
}

/// Spectral-table parameters (`[spectral]`).
#[derive(Clone, Debug)]
pub struct SpectralParams {
    /// Eigenvalue ratios `lambda_1 / L_A` to tabulate.
    pub ratios: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Penalty at which the damping frequency is evaluated.
    pub rho_small: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            ratios: vec![0.5, 0.1, 0.01, 0.001],
            alphas: vec![1.0, 1.5, 1.999],
            rho_small: 1e-3,
        }
    }
}

/// Fully parsed experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub solvers: Vec<SolverEntry>,
    pub scenario: ScenarioParams,
    pub lasso: LassoParams,
    pub spectral: SpectralParams,
    /// Iterations of the restarted fast gradient method used to build the
    /// reference solution / saddle estimate.
    pub reference_iterations: usize,
}

struct Section {
    name: String,
    line: usize,
    pairs: Vec<(String, String, usize)>,
}

fn tokenize(text: &str) -> Result<Vec<Section>> {
    let mut sections = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return err(format!("line {line}: unterminated section header"));
            };
            sections.push(Section {
                name: name.trim().to_string(),
                line,
                pairs: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return err(format!("line {line}: expected `key = value`, got `{trimmed}`"));
        };
        let Some(section) = sections.last_mut() else {
            return err(format!("line {line}: `key = value` before any [section]"));
        };
        section
            .pairs
            .push((key.trim().to_string(), value.trim().to_string(), line));
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("line {line}: invalid value `{value}` for `{key}`")))
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => err(format!("line {line}: invalid boolean `{value}` for `{key}`")),
    }
}

fn parse_list(value: &str, key: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_num(s.trim(), key, line))
        .collect()
}

fn parse_solver(section: &Section) -> Result<SolverEntry> {
    let name = section
        .name
        .strip_prefix("solver")
        .map(str::trim)
        .unwrap_or("");
    if name.is_empty() {
        return err(format!(
            "line {}: solver section needs a name, e.g. [solver relaxed]",
            section.line
        ));
    }
    let mut kind = None;
    let mut alpha = 1.0;
    let mut rho = RhoMode::Continuation;
    let mut subsets = 1;
    let mut iterations = 10;
    let mut d_psi = DPsiMode::Huber;
    for (key, value, line) in &section.pairs {
        match key.as_str() {
            "kind" => {
                kind = Some(match value.as_str() {
                    "proposed" => SolverKind::Proposed,
                    "simple" => SolverKind::Simple,
                    "sqs" => SolverKind::Sqs,
                    other => {
                        return err(format!(
                            "line {line}: unknown solver kind `{other}` (valid: {SOLVER_KIND_NAMES})"
                        ))
                    }
                })
            }
            "alpha" => alpha = parse_num(value, key, *line)?,
            "rho" => {
                rho = if value == "continuation" {
                    RhoMode::Continuation
                } else {
                    RhoMode::Fixed(parse_num(value, key, *line)?)
                }
            }
            "subsets" => subsets = parse_num(value, key, *line)?,
            "iterations" => iterations = parse_num(value, key, *line)?,
            "d_psi" => {
                d_psi = match value.as_str() {
                    "huber" => DPsiMode::Huber,
                    "max" => DPsiMode::MaxCurvature,
                    other => {
                        return err(format!(
                            "line {line}: unknown d_psi mode `{other}` (valid: huber, max)"
                        ))
                    }
                }
            }
            other => return err(format!("line {line}: unknown solver key `{other}`")),
        }
    }
    let Some(kind) = kind else {
        return err(format!(
            "line {}: solver `{name}` is missing `kind` (valid: {SOLVER_KIND_NAMES})",
            section.line
        ));
    };
    Ok(SolverEntry {
        name: name.to_string(),
        kind,
        alpha,
        rho,
        subsets,
        iterations,
        d_psi,
    })
}

/// Parse the configuration text. `seed_override` replaces the config seed
/// when given (the `--seed` flag).
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let sections = tokenize(text)?;
    let mut kind = None;
    let mut seed = 0u64;
    let mut solvers = Vec::new();
    let mut scenario = ScenarioParams::default();
    let mut lasso = LassoParams::default();
    let mut spectral = SpectralParams::default();
    let mut reference_iterations = 2000;

    for section in &sections {
        match section.name.as_str() {
            "experiment" => {
                for (key, value, line) in &section.pairs {
                    match key.as_str() {
                        "kind" => {
                            kind = Some(match value.as_str() {
                                "lasso" => ExperimentKind::Lasso,
                                "ct" => ExperimentKind::Ct,
                                "spectral" => ExperimentKind::Spectral,
                                other => {
                                    return err(format!(
                                        "line {line}: unknown experiment kind `{other}`"
                                    ))
                                }
                            })
                        }
                        "seed" => seed = parse_num(value, key, *line)?,
                        other => return err(format!("line {line}: unknown experiment key `{other}`")),
                    }
                }
            }
            "scenario" => {
                for (key, value, line) in &section.pairs {
                    match key.as_str() {
                        "nx" => scenario.nx = parse_num(value, key, *line)?,
                        "ny" => scenario.ny = parse_num(value, key, *line)?,
                        "views" => scenario.views = parse_num(value, key, *line)?,
                        "i0" => scenario.i0 = parse_num(value, key, *line)?,
                        "beta" => scenario.beta = parse_num(value, key, *line)?,
                        "delta" => scenario.delta = parse_num(value, key, *line)?,
                        "noiseless" => scenario.noiseless = parse_bool(value, key, *line)?,
                        "window" => {
                            let w = parse_list(value, key, *line)?;
                            if w.len() != 2 {
                                return err(format!("line {line}: `window` needs two values"));
                            }
                            scenario.window_hu = (w[0], w[1]);
                        }
                        other => return err(format!("line {line}: unknown scenario key `{other}`")),
                    }
                }
            }
            "lasso" => {
                for (key, value, line) in &section.pairs {
                    match key.as_str() {
                        "rows" => lasso.rows = parse_num(value, key, *line)?,
                        "cols" => lasso.cols = parse_num(value, key, *line)?,
                        "sparsity" => lasso.sparsity = parse_num(value, key, *line)?,
                        "noise_std" => lasso.noise_std = parse_num(value, key, *line)?,
                        "lambda" => lasso.lambda = parse_num(value, key, *line)?,
                        other => return err(format!("line {line}: unknown lasso key `{other}`")),
                    }
                }
            }
            "reference" => {
                for (key, value, line) in &section.pairs {
                    match key.as_str() {
                        "fgm_iterations" => reference_iterations = parse_num(value, key, *line)?,
                        other => return err(format!("line {line}: unknown reference key `{other}`")),
                    }
                }
            }
            "spectral" => {
                for (key, value, line) in &section.pairs {
                    match key.as_str() {
                        "ratios" => spectral.ratios = parse_list(value, key, *line)?,
                        "alphas" => spectral.alphas = parse_list(value, key, *line)?,
                        "rho_small" => spectral.rho_small = parse_num(value, key, *line)?,
                        other => return err(format!("line {line}: unknown spectral key `{other}`")),
                    }
                }
            }
            name if name.starts_with("solver") => solvers.push(parse_solver(section)?),
            other => {
                return err(format!(
                    "line {}: unknown section `[{other}]`",
                    section.line
                ))
            }
        }
    }

    let Some(kind) = kind else {
        return err("missing [experiment] section with `kind`");
    };
    if solvers.is_empty() && kind != ExperimentKind::Spectral {
        return err("at least one [solver NAME] section is required");
    }
    let mut seen = std::collections::HashSet::new();
    for solver in &solvers {
        if !seen.insert(solver.name.clone()) {
            return err(format!("duplicate solver name `{}`", solver.name));
        }
    }
    if let Some(s) = seed_override {
        seed = s;
    }
    Ok(ExperimentConfig {
        kind,
        seed,
        solvers,
        scenario,
        lasso,
        spectral,
        reference_iterations,
    })
}
