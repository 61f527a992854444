//! Run orchestration: TOML run configuration, per-(asset, representation)
//! jobs, and a deterministic artifact layout.
//!
//! Layout: `<out_dir>/<asset>/<representation>/` holds `report.txt`,
//! `row.csv`, `equity.csv`, `actions.csv`, `train_log.csv`,
//! `checkpoint.bin`, and `resolved-config.toml`; buy-and-hold baselines go
//! under `<out_dir>/<asset>/baseline/`; `aggregate.csv` at the root collects
//! one row per agent. Every text artifact starts with the resolved config
//! hash and the seed that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::market_data::{load_series, MarketSeries, PatternConfig, Representation, Segment};
use crate::metrics::{buy_and_hold_report, report_to_row, report_to_text, BacktestReport, ROW_HEADER};
use crate::qnet::{build_network, QNetwork};
use crate::trading_env::{action_log_to_csv, EnvConfig, Rollout};
use crate::trainer::{evaluate, train, train_log_to_csv, TrainConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration: exit status 1.
    #[error("config error: {0}")]
    Config(String),
    /// Failure while executing a valid configuration: exit status 2.
    #[error("runtime error: {0}")]
    Runtime(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Train and checkpoint only.
    Train,
    /// Evaluate existing checkpoints on the test segment.
    Eval,
    /// Buy-and-hold rows only.
    Baseline,
    /// Train, evaluate, and emit baselines.
    All,
}

/// One instrument: where its candles live, where the train/test split falls,
/// and which input representations to run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    pub path: PathBuf,
    /// First date of the test segment, `YYYY-MM-DD`.
    pub split_date: String,
    #[serde(default = "all_representations")]
    pub representations: Vec<Representation>,
}

fn all_representations() -> Vec<Representation> {
    Representation::ALL.to_vec()
}

/// Environment knobs shared by every job; the representation itself comes
/// from the per-asset list.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub initial_cash: f64,
    pub transaction_cost_rate: f64,
    pub window: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        let d = EnvConfig::default();
        EnvSection {
            initial_cash: d.initial_cash,
            transaction_cost_rate: d.transaction_cost_rate,
            window: d.window,
        }
    }
}

/// One config file = one reproducible experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: RunMode,
    pub out_dir: PathBuf,
    pub assets: Vec<AssetSpec>,
    pub env: EnvSection,
    pub patterns: PatternConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: RunMode::All,
            out_dir: PathBuf::from("runs"),
            assets: Vec::new(),
            env: EnvSection::default(),
            patterns: PatternConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Check every invariant and normalize: the top-level seed is
    /// authoritative and is echoed into the trainer section.
    pub fn validate(&mut self) -> Result<(), CliError> {
        if self.assets.is_empty() {
            return Err(CliError::Config("at least one [[assets]] entry is required".into()));
        }
        let mut names: Vec<&str> = self.assets.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.assets.len() {
            return Err(CliError::Config("asset names must be unique".into()));
        }
        for a in &self.assets {
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("invalid asset name: {:?}", a.name)));
            }
            if !a.path.is_file() {
                return Err(CliError::Config(format!(
                    "missing data file for {}: {}",
                    a.name,
                    a.path.display()
                )));
            }
            parse_split_date(a)?;
            if a.representations.is_empty() {
                return Err(CliError::Config(format!(
                    "asset {} lists no representations",
                    a.name
                )));
            }
            let mut reprs = a.representations.clone();
            reprs.sort_unstable_by_key(|r| r.as_str());
            reprs.dedup();
            if reprs.len() != a.representations.len() {
                return Err(CliError::Config(format!(
                    "asset {} repeats a representation",
                    a.name
                )));
            }
        }
        self.env_config(Representation::Vanilla)
            .validate()
            .map_err(CliError::Config)?;
        self.train.seed = self.seed;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    fn env_config(&self, representation: Representation) -> EnvConfig {
        EnvConfig {
            initial_cash: self.env.initial_cash,
            transaction_cost_rate: self.env.transaction_cost_rate,
            representation,
            window: self.env.window,
            patterns: self.patterns,
        }
    }
}

fn parse_split_date(a: &AssetSpec) -> Result<NaiveDate, CliError> {
    NaiveDate::parse_from_str(&a.split_date, "%Y-%m-%d").map_err(|_| {
        CliError::Config(format!(
            "asset {}: split_date {:?} is not YYYY-MM-DD",
            a.name, a.split_date
        ))
    })
}

/// Parse a config file without validating; flag overrides are applied in
/// between.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parse and fully validate a config file.
pub fn validate_config(path: &Path) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Resolved-config dump with all defaults filled in.
pub fn resolved_config_toml(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

/// Hex SHA-256 of the resolved config; embedded in every text artifact.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(resolved_config_toml(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable per-job seed: mixes the run seed with the job identity so adding
/// or reordering jobs never changes another job's stream.
fn job_seed(run_seed: u64, asset: &str, representation: Representation) -> u64 {
    let digest = Sha256::digest(format!("{run_seed}/{asset}/{}", representation.as_str()));
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn artifact_header(hash: &str, seed: u64) -> String {
    format!("# config_hash: {hash}\n# seed: {seed}\n")
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

struct AggRow {
    asset: String,
    agent: String,
    report: BacktestReport,
}

fn aggregate_row(r: &AggRow) -> String {
    let m = &r.report;
    format!(
        "{},{},{:.6},{:.6},{:.6},{:.8},{:.6},{:.6},{:.6},{:.2},{:.4}",
        r.asset,
        r.agent,
        m.arithmetic_return,
        m.avg_daily_return,
        m.daily_return_variance,
        m.time_weighted_return,
        m.total_return,
        m.sharpe,
        m.volatility,
        m.initial_investment,
        m.final_value,
    )
}

const AGGREGATE_HEADER: &str = "asset,agent,arithmetic_return,avg_daily_return,daily_return_variance,time_weighted_return,total_return,sharpe_ratio,volatility,initial_investment,final_portfolio_value";

fn equity_csv(dates: &[NaiveDate], equity: &[f64]) -> String {
    let mut out = String::from("date,equity\n");
    for (d, v) in dates.iter().zip(equity) {
        out.push_str(&format!("{},{v:.10}\n", d.format("%Y-%m-%d")));
    }
    out
}

fn write_eval_artifacts(
    dir: &Path,
    header: &str,
    agent: &str,
    report: &BacktestReport,
    rollout: &Rollout,
) -> Result<(), CliError> {
    write_text(
        &dir.join("report.txt"),
        &format!("{header}{}", report_to_text(report)),
    )?;
    write_text(
        &dir.join("row.csv"),
        &format!("{header}{ROW_HEADER}\n{}\n", report_to_row(agent, report)),
    )?;
    write_text(
        &dir.join("equity.csv"),
        &format!("{header}{}", equity_csv(&rollout.dates, &rollout.equity)),
    )?;
    write_text(
        &dir.join("actions.csv"),
        &format!("{header}{}", action_log_to_csv(&rollout.actions)),
    )?;
    Ok(())
}

/// Train / evaluate one (asset, representation) job and return its agent
/// rows for the aggregate table.
fn run_job(
    cfg: &RunConfig,
    hash: &str,
    resolved: &str,
    asset: &AssetSpec,
    representation: Representation,
) -> Result<Vec<AggRow>, CliError> {
    let split = parse_split_date(asset)?;
    let series = load_series(&asset.path, split)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", asset.name)))?;
    let env_cfg = cfg.env_config(representation);
    let seed = job_seed(cfg.seed, &asset.name, representation);
    let header = artifact_header(hash, seed);
    let dir = cfg.out_dir.join(&asset.name).join(representation.as_str());
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    write_text(&dir.join("resolved-config.toml"), &format!("{header}{resolved}"))?;

    let mut tcfg = cfg.train.clone();
    tcfg.seed = seed;
    let agent = format!("DQN-{}", representation.as_str());
    let ctx = |e: &dyn std::fmt::Display| {
        CliError::Runtime(format!("{}/{}: {e}", asset.name, representation.as_str()))
    };

    let mut net: QNetwork = match cfg.mode {
        RunMode::Train | RunMode::All => {
            let (net, log) = train(&series, &env_cfg, &tcfg).map_err(|e| ctx(&e))?;
            let file = fs::File::create(dir.join("checkpoint.bin"))
                .map_err(|e| ctx(&e))?;
            net.save(file).map_err(|e| ctx(&e))?;
            write_text(
                &dir.join("train_log.csv"),
                &format!("{header}{}", train_log_to_csv(&log)),
            )?;
            if cfg.mode == RunMode::Train {
                return Ok(Vec::new());
            }
            net
        }
        RunMode::Eval => {
            let mut net = build_network(env_cfg.state_dim(), &tcfg.hidden, tcfg.sigma_init, seed)
                .map_err(|e| ctx(&e))?;
            let path = dir.join("checkpoint.bin");
            let file = fs::File::open(&path).map_err(|e| {
                CliError::Runtime(format!("missing checkpoint {}: {e}", path.display()))
            })?;
            net.load(file).map_err(|e| ctx(&e))?;
            net
        }
        RunMode::Baseline => return Ok(Vec::new()),
    };

    let (report, rollout) = evaluate(&mut net, &series, &env_cfg).map_err(|e| ctx(&e))?;
    write_eval_artifacts(&dir, &header, &agent, &report, &rollout)?;
    Ok(vec![AggRow {
        asset: asset.name.clone(),
        agent,
        report,
    }])
}

/// Buy-and-hold baseline row and artifacts for one asset.
fn run_baseline(cfg: &RunConfig, hash: &str, asset: &AssetSpec) -> Result<AggRow, CliError> {
    let split = parse_split_date(asset)?;
    let series: MarketSeries = load_series(&asset.path, split)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", asset.name)))?;
    let report = buy_and_hold_report(&series, Segment::Test, cfg.env.initial_cash)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", asset.name)))?;
    let header = artifact_header(hash, cfg.seed);
    let dir = cfg.out_dir.join(&asset.name).join("baseline");
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    write_text(
        &dir.join("report.txt"),
        &format!("{header}{}", report_to_text(&report)),
    )?;
    let dates: Vec<NaiveDate> = series.test().iter().map(|c| c.date).collect();
    write_text(
        &dir.join("equity.csv"),
        &format!("{header}{}", equity_csv(&dates, &report.equity_curve)),
    )?;
    write_text(
        &dir.join("row.csv"),
        &format!("{header}{ROW_HEADER}\n{}\n", report_to_row("B&H", &report)),
    )?;
    Ok(AggRow {
        asset: asset.name.clone(),
        agent: "B&H".into(),
        report,
    })
}

/// Execute a validated run configuration end to end.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let resolved = resolved_config_toml(cfg);
    let hash = config_hash(cfg);
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    write_text(
        &cfg.out_dir.join("resolved-config.toml"),
        &format!("{}{resolved}", artifact_header(&hash, cfg.seed)),
    )?;

    let jobs: Vec<(&AssetSpec, Representation)> = cfg
        .assets
        .iter()
        .flat_map(|a| a.representations.iter().map(move |&r| (a, r)))
        .collect();

    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<AggRow>, CliError>> = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(a, r)| run_job(cfg, &hash, &resolved, a, *r))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<AggRow>, CliError>> = jobs
        .iter()
        .map(|(a, r)| run_job(cfg, &hash, &resolved, a, *r))
        .collect();

    let mut rows: Vec<AggRow> = Vec::new();
    for res in results {
        rows.extend(res?);
    }
    if matches!(cfg.mode, RunMode::Baseline | RunMode::All) {
        for asset in &cfg.assets {
            rows.push(run_baseline(cfg, &hash, asset)?);
        }
    }
    if !rows.is_empty() {
        rows.sort_by(|a, b| (&a.asset, &a.agent).cmp(&(&b.asset, &b.agent)));
        let mut table = artifact_header(&hash, cfg.seed);
        table.push_str(AGGREGATE_HEADER);
        table.push('\n');
        for row in &rows {
            table.push_str(&aggregate_row(row));
            table.push('\n');
        }
        write_text(&cfg.out_dir.join("aggregate.csv"), &table)?;
    }
    Ok(())
}

/// Process exit status for an error.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 1,
        CliError::Runtime(_) => 2,
    }
}
