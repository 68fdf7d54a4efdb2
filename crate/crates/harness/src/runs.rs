//! Training and evaluation runs laid out on disk.
//!
//! ```text
//! <out>/config.json            resolved configuration
//! <out>/manifest.json          config hash, version, run list
//! <out>/<condition>/seed-<n>/
//!     config.json              configuration of this condition
//!     run.json                 RunManifest
//!     train_log.csv            one row per training episode
//!     timing.csv               wall-clock seconds per episode
//!     checkpoint/              network, optimizer and episode bundle
//!     eval_<domain>.csv        deterministic evaluation episodes
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use tactile_door::domain_rand::{DoorTask, ObservationShift, RandConfig, RandomizedEnv};
use tactile_door::env::{DoorEnv, EnvError};
use tactile_door::fmt_f64;
use tactile_door::tactile::UNITS;
use tactile_door::td3::{
    evaluate_policy, load_bundle, read_manifest, train, write_log_csv, write_timing_csv, Environment,
    EvalEpisode, TrainError, TrainOptions,
};

use crate::config::{Condition, ConfigError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{dir}: configuration hash {found} does not match {expected}; refusing to mix configurations")]
    ConfigDrift {
        dir: PathBuf,
        expected: String,
        found: String,
    },
    #[error("policy expects {policy} observation components but the {domain} environment produces {env}")]
    DimMismatch {
        policy: usize,
        env: usize,
        domain: Domain,
    },
    #[error("{0} is not a run directory (config.json and checkpoint/ expected)")]
    NotARun(PathBuf),
}

/// Evaluation domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Nominal dynamics, no randomization.
    Nominal,
    /// The training distribution.
    Train,
    /// Held-out dynamics and sensing shifts.
    Transfer,
}

pub const DOMAINS: [Domain; 3] = [Domain::Nominal, Domain::Train, Domain::Transfer];

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Nominal => "nominal",
            Domain::Train => "train",
            Domain::Transfer => "transfer",
        }
    }

    /// Row label in the comparison table.
    pub fn label(self) -> &'static str {
        match self {
            Domain::Nominal => "Sim",
            Domain::Train => "Train",
            Domain::Transfer => "Transfer",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nominal" | "sim" => Ok(Domain::Nominal),
            "train" | "training-dist" => Ok(Domain::Train),
            "transfer" => Ok(Domain::Transfer),
            other => Err(format!("unknown domain {other:?} (nominal, train, transfer)")),
        }
    }
}

/// Door task for `domain` under the condition already applied to `cfg`.
pub fn build_task(cfg: &RunConfig, domain: Domain) -> Result<DoorTask, RunError> {
    let mut env_cfg = cfg.environment.clone();
    let mut rand = match domain {
        Domain::Train => cfg.randomization.clone(),
        Domain::Nominal | Domain::Transfer => {
            let mut r = RandConfig::disabled();
            r.nominal = cfg.randomization.nominal;
            r
        }
    };
    let mut shift = ObservationShift::default();
    if domain == Domain::Transfer {
        let t = &cfg.transfer;
        rand.nominal.hinge_stiffness = t.hinge_stiffness;
        rand.nominal.knob_friction = t.knob_friction;
        env_cfg.contact.stiffness *= t.contact_stiffness_scale;
        shift = ObservationShift {
            position_bias: t.observation_bias,
            fixed_delay: t.observation_delay,
        };
    }
    let env = DoorEnv::new(env_cfg, cfg.tactile.clone(), cfg.reward)?;
    Ok(DoorTask::new(RandomizedEnv::new(env, rand, shift)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub condition: Condition,
    pub seed: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episodes: usize,
    pub total_steps: u64,
    pub complete: bool,
    pub resumed_from: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub condition: Condition,
    pub seed: u64,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config_hash: String,
    pub version: String,
    pub runs: Vec<RunEntry>,
}

pub fn run_dir(out: &Path, condition: Condition, seed: u64) -> PathBuf {
    out.join(condition.to_string()).join(format!("seed-{seed}"))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RunError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// What happened to one run during [`cmd_train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Trained,
    Resumed(usize),
    AlreadyComplete,
}

/// Trains every condition × seed. Complete runs with a matching hash are
/// skipped and interrupted runs continue from their last checkpoint.
pub fn cmd_train(
    cfg: &RunConfig,
    out: &Path,
    deterministic: bool,
    mut on_run: impl FnMut(&RunEntry, RunStatus),
) -> Result<ExperimentManifest, RunError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let top = out.join("manifest.json");
    if top.exists() {
        let old: ExperimentManifest = read_json(&top)?;
        if old.config_hash != hash {
            return Err(RunError::ConfigDrift {
                dir: out.to_path_buf(),
                expected: old.config_hash,
                found: hash,
            });
        }
    }
    write_json(&out.join("config.json"), cfg)?;
    let mut runs = Vec::new();
    for &condition in &cfg.conditions {
        for &seed in &cfg.seeds {
            runs.push(RunEntry {
                condition,
                seed,
                dir: PathBuf::from(condition.to_string()).join(format!("seed-{seed}")),
            });
        }
    }
    let manifest = ExperimentManifest {
        config_hash: hash.clone(),
        version: VERSION.into(),
        runs,
    };
    write_json(&top, &manifest)?;
    for entry in &manifest.runs {
        let status = train_one(cfg, &hash, out, entry, deterministic)?;
        on_run(entry, status);
    }
    Ok(manifest)
}

fn train_one(
    cfg: &RunConfig,
    hash: &str,
    out: &Path,
    entry: &RunEntry,
    deterministic: bool,
) -> Result<RunStatus, RunError> {
    let dir = out.join(&entry.dir);
    fs::create_dir_all(&dir)?;
    let run_cfg = cfg.for_condition(entry.condition);
    let run_path = dir.join("run.json");
    if run_path.exists() {
        let old: RunManifest = read_json(&run_path)?;
        if old.config_hash != hash {
            return Err(RunError::ConfigDrift {
                dir,
                expected: old.config_hash,
                found: hash.to_string(),
            });
        }
        if old.complete && DOMAINS.iter().all(|d| eval_path(&dir, *d).exists()) {
            return Ok(RunStatus::AlreadyComplete);
        }
    }
    write_json(&dir.join("config.json"), &run_cfg)?;
    let ckpt = dir.join("checkpoint");
    let resume = if ckpt.join("manifest.json").exists() {
        let m = read_manifest(&ckpt)?;
        if m.config_hash != hash {
            return Err(RunError::ConfigDrift {
                dir: ckpt,
                expected: m.config_hash,
                found: hash.to_string(),
            });
        }
        Some(load_bundle(&ckpt, &run_cfg.td3)?)
    } else {
        None
    };
    let opts = TrainOptions {
        seed: entry.seed,
        episodes: cfg.episodes,
        workers: if deterministic { 1 } else { cfg.workers },
        queue_capacity: 1024,
        checkpoint_every: cfg.checkpoint_every,
        checkpoint_dir: Some(ckpt.clone()),
        config_hash: hash.to_string(),
    };
    let (outcome, status) = match resume {
        Some(r) if r.manifest.complete => {
            let status = RunStatus::AlreadyComplete;
            (
                tactile_door::td3::TrainOutcome {
                    total_steps: r.manifest.total_steps,
                    agent: r.agent,
                    logs: r.logs,
                    first_update_step: None,
                },
                status,
            )
        }
        resume => {
            let status = match &resume {
                Some(r) => RunStatus::Resumed(r.logs.len()),
                None => RunStatus::Trained,
            };
            let factory = |_worker: usize| build_task(&run_cfg, Domain::Train).expect("validated configuration");
            (train(factory, &run_cfg.td3, &opts, resume)?, status)
        }
    };
    write_log_csv(BufWriter::new(File::create(dir.join("train_log.csv"))?), &outcome.logs)?;
    write_timing_csv(BufWriter::new(File::create(dir.join("timing.csv"))?), &outcome.logs)?;
    for domain in DOMAINS {
        let stats = evaluate(&run_cfg, &outcome.agent.actor, domain, cfg.eval.episodes, cfg.eval.seed)?;
        write_eval_csv(&eval_path(&dir, domain), &stats)?;
    }
    let ckpt_manifest = read_manifest(&ckpt)?;
    let manifest = RunManifest {
        config_hash: hash.to_string(),
        version: VERSION.into(),
        condition: entry.condition,
        seed: entry.seed,
        obs_dim: outcome.agent.obs_dim(),
        act_dim: outcome.agent.act_dim(),
        episodes: outcome.logs.len(),
        total_steps: outcome.total_steps,
        complete: true,
        resumed_from: ckpt_manifest.resumed_from,
    };
    write_json(&run_path, &manifest)?;
    Ok(status)
}

pub fn eval_path(run: &Path, domain: Domain) -> PathBuf {
    run.join(format!("eval_{}.csv", domain.name()))
}

/// One evaluation episode in report units.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub final_alpha_deg: f64,
    /// First step with the door at or past the open threshold, else the step count.
    pub steps_to_open: usize,
    pub steps: usize,
    pub episode_return: f64,
    pub term_sums: [f64; 5],
    pub grasp_steps: usize,
    pub activation_counts: [u64; UNITS],
}

impl From<EvalEpisode> for EpisodeStats {
    fn from(e: EvalEpisode) -> Self {
        Self {
            episode: e.episode,
            final_alpha_deg: e.final_progress,
            steps_to_open: e.steps_to_threshold,
            steps: e.steps,
            episode_return: e.episode_return,
            term_sums: e.term_sums,
            grasp_steps: e.grasp_steps,
            activation_counts: e.activation_counts,
        }
    }
}

/// Runs the deterministic policy; the policy must match the domain's dims.
pub fn evaluate(
    cfg: &RunConfig,
    actor: &tactile_door::nn::Mlp,
    domain: Domain,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>, RunError> {
    let mut task = build_task(cfg, domain)?;
    if actor.input_dim() != task.observation_dim() {
        return Err(RunError::DimMismatch {
            policy: actor.input_dim(),
            env: task.observation_dim(),
            domain,
        });
    }
    Ok(evaluate_policy(&mut task, actor, episodes, seed, cfg.eval.open_threshold_deg)
        .into_iter()
        .map(EpisodeStats::from)
        .collect())
}

pub struct EvalRequest<'a> {
    pub run: &'a Path,
    pub domain: Domain,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub max_steps: Option<usize>,
    /// Evaluate on the other condition's observation layout.
    pub condition: Option<Condition>,
}

/// Evaluates the final checkpoint of a run directory without modifying it.
pub fn cmd_eval(req: &EvalRequest) -> Result<Vec<EpisodeStats>, RunError> {
    let config_path = req.run.join("config.json");
    let ckpt = req.run.join("checkpoint");
    if !config_path.exists() || !ckpt.exists() {
        return Err(RunError::NotARun(req.run.to_path_buf()));
    }
    let mut cfg: RunConfig = read_json(&config_path)?;
    if let Some(c) = req.condition {
        cfg.tactile.enabled = c.tactile();
    }
    if let Some(n) = req.max_steps {
        cfg.environment.max_steps = n;
    }
    let actor = tactile_door::nn::Mlp::load(ckpt.join("actor.tdnn")).map_err(TrainError::from)?;
    evaluate(
        &cfg,
        &actor,
        req.domain,
        req.episodes.unwrap_or(cfg.eval.episodes),
        req.seed.unwrap_or(cfg.eval.seed),
    )
}

pub const EVAL_HEADER_FIXED: [&str; 11] = [
    "episode",
    "final_alpha_deg",
    "steps_to_open",
    "steps",
    "return",
    "door",
    "dist",
    "ori",
    "grasp",
    "tactile",
    "grasp_steps",
];

pub fn write_eval_csv(path: &Path, stats: &[EpisodeStats]) -> Result<(), RunError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_eval(&mut w, stats)?;
    w.flush()?;
    Ok(())
}

pub fn write_eval<W: Write>(w: &mut W, stats: &[EpisodeStats]) -> io::Result<()> {
    let mut header: Vec<String> = EVAL_HEADER_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((1..=UNITS).map(|u| format!("unit_{u}")));
    writeln!(w, "{}", header.join(","))?;
    for s in stats {
        let mut row = vec![
            s.episode.to_string(),
            fmt_f64(s.final_alpha_deg),
            s.steps_to_open.to_string(),
            s.steps.to_string(),
            fmt_f64(s.episode_return),
        ];
        row.extend(s.term_sums.iter().map(|&t| fmt_f64(t)));
        row.push(s.grasp_steps.to_string());
        row.extend(s.activation_counts.iter().map(|c| c.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EpisodeStats>, RunError> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, what: &str| {
        RunError::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}:{line}: {what}", path.display()),
        ))
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != EVAL_HEADER_FIXED.len() + UNITS {
            return Err(bad(i + 1, "wrong column count"));
        }
        let float = |k: usize| f[k].parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let int = |k: usize| f[k].parse::<usize>().map_err(|_| bad(i + 1, "bad integer"));
        let mut counts = [0u64; UNITS];
        for (u, c) in counts.iter_mut().enumerate() {
            *c = f[EVAL_HEADER_FIXED.len() + u]
                .parse()
                .map_err(|_| bad(i + 1, "bad count"))?;
        }
        out.push(EpisodeStats {
            episode: int(0)?,
            final_alpha_deg: float(1)?,
            steps_to_open: int(2)?,
            steps: int(3)?,
            episode_return: float(4)?,
            term_sums: [float(5)?, float(6)?, float(7)?, float(8)?, float(9)?],
            grasp_steps: int(10)?,
            activation_counts: counts,
        });
    }
    Ok(out)
}

pub fn read_run_manifest(run: &Path) -> Result<RunManifest, RunError> {
    read_json(&run.join("run.json"))
}
