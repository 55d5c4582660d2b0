//! Command-line front end: `cook`, `explain`, `simulate`, `sensitivity`,
//! `serve` and `scenarios-validate`.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::bo::{run_egg, BoState, SearchSpace};
use crate::egg::{classify_feedback, cooking_time_s, perfect_band_loss, sensitivity_analysis, EggParameters, FeedbackGrade, Param};
use crate::harness::{load_scenarios_file, run_agent, shipped_scenarios, AgentKind, AgentPolicy, Block, Catalog, Condition, Scenario};
use crate::render::{render_language, render_rules, render_visual};
use crate::service::{serve, ServiceConfig};
use crate::tntrules::{explain, ExplainConfig, Weights};

pub const MIN_OBSERVATIONS: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "xbo", version, about = "Explainable Bayesian optimization workbench for egg cooking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cook one egg and print the time and feedback grade.
    Cook(EggArgs),
    /// Fit a surrogate and explain its recommendation.
    Explain(ExplainArgs),
    /// Run scripted agents through study sessions and print CSV metrics.
    Simulate(SimulateArgs),
    /// One-at-a-time sensitivity of the cooking time.
    Sensitivity(SensitivityArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Check a scenario file.
    ScenariosValidate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct EggArgs {
    /// Egg mass in grams.
    #[arg(long, allow_negative_numbers = true)]
    pub mass: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Yolk-to-white ratio.
    #[arg(long, allow_negative_numbers = true)]
    pub ywr: f64,
    /// Initial egg temperature in °C.
    #[arg(long, allow_negative_numbers = true)]
    pub t_egg: f64,
    /// Target yolk temperature in °C.
    #[arg(long, allow_negative_numbers = true)]
    pub t_yolk: f64,
    /// Altitude in meters.
    #[arg(long, allow_negative_numbers = true)]
    pub altitude: f64,
}

impl EggArgs {
    pub fn params(&self) -> EggParameters {
        EggParameters::from_array([self.mass, self.lambda, self.ywr, self.t_egg, self.t_yolk, self.altitude])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Rules,
    Visual,
    Language,
    Json,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Scenario whose search space is optimized (and explained).
    #[arg(long, required_unless_present = "observations")]
    pub scenario: Option<String>,
    /// JSON-lines trace with `x` and `y` per line instead of a fresh BO run.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rules")]
    pub format: OutputFormat,
    /// BO evaluations when no observations are given.
    #[arg(long, default_value_t = 30)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Size of the explanation sample.
    #[arg(long, default_value_t = 2000)]
    pub n_e: usize,
    /// Variance threshold for pruning (default: derived from the sample).
    #[arg(long)]
    pub t_s: Option<f64>,
    /// Minimum interestingness of a reported rule.
    #[arg(long, default_value_t = 0.5)]
    pub t_alpha: f64,
    /// Weights for coverage, support, confidence, relevance.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub weights: Option<Vec<f64>>,
    /// Write the BO trace here as JSON lines.
    #[arg(long)]
    pub write_trace: Option<PathBuf>,
    #[arg(long, env = "XBO_SCENARIOS")]
    pub scenarios: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub policy: AgentKind,
    /// Inclusive seed range such as `0..199`, or a single seed.
    #[arg(long, default_value = "0..0")]
    pub seeds: SeedRange,
    #[arg(long, default_value = "rules")]
    pub condition: Condition,
    #[arg(long, env = "XBO_SCENARIOS")]
    pub scenarios: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub egg: EggArgs,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML file whose settings override flags and environment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "XBO_SCENARIOS")]
    pub scenarios: Option<PathBuf>,
    #[arg(long, env = "XBO_LOG_DIR", default_value = "sessions")]
    pub log_dir: PathBuf,
    #[arg(long, env = "XBO_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
    #[arg(long, env = "XBO_LLM_KEY", hide_env_values = true)]
    pub llm_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario file (the bundled fixture when omitted).
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn iter(self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

impl std::str::FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed {t:?}"));
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
            None => (num(s)?, num(s)?),
        };
        if last < first {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok(SeedRange { first, last })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Egg(#[from] crate::egg::EggError),
    #[error(transparent)]
    Bo(#[from] crate::bo::BoError),
    #[error(transparent)]
    Explain(#[from] crate::tntrules::ExplainError),
    #[error(transparent)]
    Scenarios(#[from] crate::harness::ScenarioError),
    #[error(transparent)]
    Harness(#[from] crate::harness::HarnessError),
    #[error(transparent)]
    Service(#[from] crate::service::ServiceError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::File { path: path.to_path_buf(), message: e.to_string() }
}

fn catalog(path: Option<&Path>) -> Result<Catalog, CliError> {
    Ok(Catalog::new(match path {
        Some(p) => load_scenarios_file(p)?,
        None => shipped_scenarios(),
    }))
}

/// Runs a command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Cook(a) => cook(&a, out),
        Command::Explain(a) => explain_cmd(&a, out).map(|_| 0),
        Command::Simulate(a) => simulate(&a, out).map(|_| 0),
        Command::Sensitivity(a) => sensitivity(&a, out).map(|_| 0),
        Command::Serve(a) => {
            let config = service_config(&a)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(config))?;
            Ok(0)
        }
        Command::ScenariosValidate(a) => validate(&a, out),
    }
}

fn cook(a: &EggArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let p = a.params();
    // physical impossibility is the more useful message than a range violation
    if let Err(e @ crate::egg::EggError::Uncookable(_)) = crate::egg::cooking_time_unchecked(&p) {
        return Err(e.into());
    }
    let t = cooking_time_s(&p)?;
    let grade = classify_feedback(t)?;
    writeln!(out, "{t:.1} s, {grade}")?;
    Ok(if grade == FeedbackGrade::Perfect { 0 } else { 1 })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Coords {
    Plain(Vec<f64>),
    Named(BTreeMap<String, f64>),
}

#[derive(Deserialize)]
struct ObservationLine {
    x: Coords,
    y: f64,
    #[serde(default)]
    penalized: bool,
}

fn read_observations(path: &Path, space: &SearchSpace) -> Result<Vec<(Vec<f64>, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut obs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: ObservationLine = serde_json::from_str(line).map_err(|e| file_err(path, format!("line {}: {e}", i + 1)))?;
        if rec.penalized {
            continue;
        }
        let x = match rec.x {
            Coords::Plain(v) => v,
            Coords::Named(m) => space
                .dims()
                .iter()
                .map(|d| m.get(&d.name).copied().ok_or_else(|| file_err(path, format!("line {}: missing {}", i + 1, d.name))))
                .collect::<Result<_, _>>()?,
        };
        obs.push((x, rec.y));
    }
    Ok(obs)
}

fn explain_config(a: &ExplainArgs) -> Result<ExplainConfig, CliError> {
    let weights = match &a.weights {
        Some(w) => Weights(w.as_slice().try_into().map_err(|_| CliError::Usage("--weights takes four numbers".into()))?),
        None => Weights::default(),
    };
    weights.validate()?;
    Ok(ExplainConfig { n_e: a.n_e, t_s: a.t_s, t_alpha: a.t_alpha, weights, seed: a.seed, tune_threshold: 0.1 })
}

fn explain_cmd(a: &ExplainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = explain_config(a)?;
    let space = match &a.scenario {
        Some(id) => {
            let cat = catalog(a.scenarios.as_deref())?;
            let s = cat.get(id).ok_or_else(|| CliError::Usage(format!("unknown scenario {id:?}")))?;
            s.space()?
        }
        None => SearchSpace::egg_domain(),
    };
    let (state, rec) = match &a.observations {
        Some(path) => {
            let obs = read_observations(path, &space)?;
            if obs.len() < MIN_OBSERVATIONS {
                return Err(CliError::Usage(format!(
                    "{} has {} usable observations; at least {MIN_OBSERVATIONS} are needed (run a BO search first, e.g. `xbo explain --scenario chicken --write-trace trace.jsonl`)",
                    path.display(),
                    obs.len()
                )));
            }
            let best = obs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|o| o.0.clone()).expect("non-empty");
            let mut state = BoState::new(space.clone(), a.seed);
            for (x, y) in obs {
                state = state.observe(x, y)?;
            }
            (state, best)
        }
        None => {
            let result = run_egg(perfect_band_loss, space.clone(), a.budget, a.seed)?;
            if let Some(path) = &a.write_trace {
                let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
                result.write_trace_jsonl(std::io::BufWriter::new(file)).map_err(|e| file_err(path, e))?;
            }
            let rec = result.best.point.clone();
            (result.state, rec)
        }
    };
    let model = state.model().ok_or_else(|| CliError::Usage("not enough observations to fit a surrogate".into()))?;
    let ex = explain(model, &space, &rec, &config)?;
    match a.format {
        OutputFormat::Rules => writeln!(out, "{}", render_rules(&ex.decision))?,
        OutputFormat::Language => writeln!(out, "{}", render_language(&ex.decision))?,
        OutputFormat::Visual => writeln!(out, "{}", serde_json::to_string_pretty(&render_visual(&ex.decision, &ex.impacts)).expect("serializes"))?,
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "recommendation": space.named(&rec),
                "decision": ex.decision,
                "impacts": ex.impacts,
                "t_s": ex.t_s,
                "fallback": ex.fallback,
                "rules": ex.rules.to_json(&space)["rules"],
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializes"))?;
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cat = catalog(a.scenarios.as_deref())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "policy",
        "condition",
        "training_success",
        "baseline_success",
        "treatment_success",
        "baseline_mean_trials",
        "treatment_mean_trials",
        "adherence",
    ])?;
    let condition = serde_json::to_value(a.condition).expect("serializes").as_str().unwrap_or_default().to_string();
    let mut rates = [0.0f64; 3];
    let mut trials: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
    let mut n = 0usize;
    for seed in a.seeds.iter() {
        let m = run_agent(AgentPolicy { kind: a.policy, seed }, a.condition, &cat)?;
        for (k, b) in [Block::Training, Block::Baseline, Block::Treatment].into_iter().enumerate() {
            rates[k] += m.success_rate.get(b).unwrap_or(0.0);
        }
        for (k, b) in [Block::Baseline, Block::Treatment].into_iter().enumerate() {
            trials[k].extend(m.eggs.iter().filter(|e| e.block == b).filter_map(|e| e.trials_to_success));
        }
        n += 1;
        w.write_record([
            seed.to_string(),
            a.policy.name().to_string(),
            condition.clone(),
            fmt_opt(m.success_rate.training),
            fmt_opt(m.success_rate.baseline),
            fmt_opt(m.success_rate.treatment),
            fmt_opt(m.mean_trials_to_success.baseline),
            fmt_opt(m.mean_trials_to_success.treatment),
            fmt_opt(m.adherence),
        ])?;
    }
    if n > 1 {
        let mean = |v: &[u8]| (!v.is_empty()).then(|| v.iter().map(|&t| t as f64).sum::<f64>() / v.len() as f64);
        w.write_record([
            "all".to_string(),
            a.policy.name().to_string(),
            condition,
            fmt_opt(Some(rates[0] / n as f64)),
            fmt_opt(Some(rates[1] / n as f64)),
            fmt_opt(Some(rates[2] / n as f64)),
            fmt_opt(mean(&trials[0])),
            fmt_opt(mean(&trials[1])),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sensitivity(a: &SensitivityArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let report = sensitivity_analysis(&a.egg.params(), a.fraction)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializes"))?;
        return Ok(());
    }
    writeln!(out, "base time {:.1} s, perturbation ±{}%", report.base_time_s, a.fraction * 100.0)?;
    writeln!(out, "{:<4} {:<12} {:>10}", "rank", "parameter", "effect")?;
    for (i, e) in report.entries.iter().enumerate() {
        let effect = e.effect.map_or_else(|| "n/a".to_string(), |v| format!("{:.4}", v));
        writeln!(out, "{:<4} {:<12} {:>10}", i + 1, e.param.key(), effect)?;
    }
    Ok(())
}

/// Settings a TOML config file may carry; present keys win over flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub listen: Option<SocketAddr>,
    pub scenarios: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
    pub llm_endpoint: Option<String>,
    pub llm_key: Option<String>,
    pub explainer: Option<ExplainConfig>,
}

/// Flags (which clap already layers over environment variables), then the
/// config file on top.
pub fn service_config(a: &ServeArgs) -> Result<ServiceConfig, CliError> {
    let file = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
            toml::from_str::<ConfigFile>(&text).map_err(|e| file_err(path, e))?
        }
        None => ConfigFile::default(),
    };
    Ok(ServiceConfig {
        listen: file.listen.unwrap_or(a.listen),
        scenarios: file.scenarios.or_else(|| a.scenarios.clone()),
        log_dir: file.log_dir.unwrap_or_else(|| a.log_dir.clone()),
        llm_endpoint: file.llm_endpoint.or_else(|| a.llm_endpoint.clone()),
        llm_key: file.llm_key.or_else(|| a.llm_key.clone()),
        explainer: file.explainer.unwrap_or_default(),
    })
}

fn describe(s: &Scenario) -> String {
    let grade = |p: &EggParameters| match cooking_time_s(p).and_then(|t| classify_feedback(t).map(|g| (t, g))) {
        Ok((t, g)) => format!("{t:.1} s {g}"),
        Err(e) => e.to_string(),
    };
    let fixed: Vec<&str> = s.fixed.keys().map(|p| p.symbol()).collect();
    let arrows: Vec<&str> = s.arrow_params().into_iter().map(Param::symbol).collect();
    format!(
        "{:<8} {:<9} fixed [{}] noisy [{}] recommended {} / optimal {}",
        s.id,
        if s.is_training { "training" } else { "" },
        fixed.join(", "),
        arrows.join(", "),
        grade(&s.recommended),
        grade(&s.optimal)
    )
}

fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let scenarios = match &a.file {
        Some(p) => load_scenarios_file(p)?,
        None => shipped_scenarios(),
    };
    for s in &scenarios {
        writeln!(out, "{}", describe(s))?;
    }
    let training = scenarios.iter().filter(|s| s.is_training).count();
    writeln!(out, "{} scenarios, {} training: ok", scenarios.len(), training)?;
    Ok(0)
}
