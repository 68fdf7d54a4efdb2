//! Training loop, checkpoint bundles and deterministic evaluation.
//!
//! With one worker the loop is synchronous and every random draw comes from
//! a fixed stream, so logs and checkpoints are bit-identical across runs.
//! With several workers each thread owns an environment and streams, sends
//! transitions through a bounded channel to the learner, and acts with the
//! latest actor snapshot published after each actor update.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{exploration_action, Batch, Policy, Td3Agent};
use super::replay::ReplayBuffer;
use super::{Environment, Td3Config};
use crate::env::EnvParams;
use crate::fmt_f64;
use crate::nn::{Adam, Mlp, NnError};
use crate::rng::{stream, Purpose};
use crate::tactile::UNITS;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite critic loss {loss} at optimizer step {update}")]
    NonFiniteLoss { update: u64, loss: f64 },
    #[error("network parameters became non-finite after update {update}")]
    NonFiniteNetwork { update: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint bundle: {0}")]
    Bundle(String),
    #[error("rollout worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub worker: usize,
    pub steps: usize,
    pub episode_return: f64,
    /// Door angle in degrees at the end of the episode (toy: final position).
    pub final_progress: f64,
    pub term_sums: [f64; 5],
    pub params: Option<EnvParams>,
    /// Seconds since the start of training; kept out of the main log.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    pub episodes: usize,
    /// 1 runs the deterministic synchronous loop.
    pub workers: usize,
    /// Bounded queue length between workers and learner.
    pub queue_capacity: usize,
    /// Write a bundle every this many episodes (0: only at the end).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub config_hash: String,
}

impl TrainOptions {
    pub fn new(seed: u64, episodes: usize) -> Self {
        Self {
            seed,
            episodes,
            workers: 1,
            queue_capacity: 1024,
            checkpoint_every: 0,
            checkpoint_dir: None,
            config_hash: String::new(),
        }
    }
}

/// State restored from a checkpoint bundle.
#[derive(Debug, Clone)]
pub struct ResumeState {
    pub agent: Td3Agent,
    pub manifest: BundleManifest,
    pub logs: Vec<EpisodeLog>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub logs: Vec<EpisodeLog>,
    pub total_steps: u64,
    /// Environment step at which the first replay sample was drawn.
    pub first_update_step: Option<u64>,
}

pub const BUNDLE_FILES: [&str; 6] = [
    "actor.tdnn",
    "actor_target.tdnn",
    "critic1.tdnn",
    "critic2.tdnn",
    "critic1_target.tdnn",
    "critic2_target.tdnn",
];

const OPTIMIZER_FILES: [&str; 6] = [
    "actor_m.tdnn",
    "actor_v.tdnn",
    "critic1_m.tdnn",
    "critic1_v.tdnn",
    "critic2_m.tdnn",
    "critic2_v.tdnn",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub episodes_completed: usize,
    pub total_steps: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub optimizer_steps: [u64; 3],
    pub complete: bool,
    /// Episode count of the checkpoint this run was resumed from, if any.
    #[serde(default)]
    pub resumed_from: Option<usize>,
}

/// Episode seed for episode `index` of a run; independent of worker layout.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    stream(seed, index as u64, Purpose::EpisodeSeeds).next_u64()
}

/// Writes the six networks, optimizer moments, manifest and episode list.
/// The bundle is assembled in a sibling directory and renamed into place so
/// an interrupted write never replaces the previous bundle.
pub fn save_bundle(
    dir: &Path,
    agent: &Td3Agent,
    manifest: &BundleManifest,
    logs: &[EpisodeLog],
) -> Result<(), TrainError> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let staging = parent.join(format!(".{name}.staging"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(staging.join("optimizer"))?;
    let nets = [
        &agent.actor,
        &agent.actor_target,
        &agent.critics[0],
        &agent.critics[1],
        &agent.critic_targets[0],
        &agent.critic_targets[1],
    ];
    for (file, net) in BUNDLE_FILES.iter().zip(nets) {
        net.save(staging.join(file))?;
    }
    let moments = [
        agent.actor_opt.first_moment(),
        agent.actor_opt.second_moment(),
        agent.critic_opts[0].first_moment(),
        agent.critic_opts[0].second_moment(),
        agent.critic_opts[1].first_moment(),
        agent.critic_opts[1].second_moment(),
    ];
    for (file, net) in OPTIMIZER_FILES.iter().zip(moments) {
        net.save(staging.join("optimizer").join(file))?;
    }
    write_json(&staging.join("manifest.json"), manifest)?;
    write_json(&staging.join("episodes.json"), &logs)?;
    let old = parent.join(format!(".{name}.old"));
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    if dir.exists() {
        fs::rename(dir, &old)?;
    }
    fs::rename(&staging, dir)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), TrainError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest, TrainError> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
}

/// Loads a bundle written by [`save_bundle`].
pub fn load_bundle(dir: &Path, cfg: &Td3Config) -> Result<ResumeState, TrainError> {
    let manifest = read_manifest(dir)?;
    let load = |f: &str| Mlp::load(dir.join(f));
    let actor = load(BUNDLE_FILES[0])?;
    let actor_target = load(BUNDLE_FILES[1])?;
    let critics = [load(BUNDLE_FILES[2])?, load(BUNDLE_FILES[3])?];
    let critic_targets = [load(BUNDLE_FILES[4])?, load(BUNDLE_FILES[5])?];
    if actor.input_dim() != manifest.obs_dim || actor.output_dim() != manifest.act_dim {
        return Err(TrainError::Bundle(format!(
            "actor is {}→{} but manifest says {}→{}",
            actor.input_dim(),
            actor.output_dim(),
            manifest.obs_dim,
            manifest.act_dim
        )));
    }
    let mut agent = Td3Agent::from_networks(cfg.clone(), [actor, actor_target], critics, critic_targets)?;
    let opt_dir = dir.join("optimizer");
    if opt_dir.exists() {
        let m = |i: usize| Mlp::load(opt_dir.join(OPTIMIZER_FILES[i]));
        agent.actor_opt = Adam::from_parts(cfg.actor_optimizer, m(0)?, m(1)?, manifest.optimizer_steps[0])?;
        agent.critic_opts = [
            Adam::from_parts(cfg.critic_optimizer, m(2)?, m(3)?, manifest.optimizer_steps[1])?,
            Adam::from_parts(cfg.critic_optimizer, m(4)?, m(5)?, manifest.optimizer_steps[2])?,
        ];
    }
    agent.critic_updates = manifest.critic_updates;
    agent.actor_updates = manifest.actor_updates;
    let logs = match fs::read_to_string(dir.join("episodes.json")) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(ResumeState {
        agent,
        manifest,
        logs,
    })
}

/// Training log columns; every EnvParams field is logged per episode.
pub const LOG_HEADER: &str = "episode,worker,steps,return,final_alpha_deg,door,dist,ori,grasp,tactile,\
knob_friction,hinge_stiffness,hinge_damping,hinge_friction_loss,door_mass,knob_mass,table_offset_x,table_offset_y";

pub fn write_log_csv<W: Write>(mut w: W, logs: &[EpisodeLog]) -> io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for l in logs {
        let mut row = vec![
            l.episode.to_string(),
            l.worker.to_string(),
            l.steps.to_string(),
            fmt_f64(l.episode_return),
            fmt_f64(l.final_progress),
        ];
        row.extend(l.term_sums.iter().map(|&t| fmt_f64(t)));
        match &l.params {
            Some(p) => row.extend(
                [
                    p.knob_friction,
                    p.hinge_stiffness,
                    p.hinge_damping,
                    p.hinge_friction_loss,
                    p.door_mass,
                    p.knob_mass,
                    p.table_offset_x,
                    p.table_offset_y,
                ]
                .map(fmt_f64),
            ),
            None => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(mut w: W, logs: &[EpisodeLog]) -> io::Result<()> {
    writeln!(w, "episode,wall_time")?;
    for l in logs {
        writeln!(w, "{},{}", l.episode, fmt_f64(l.wall_time))?;
    }
    Ok(())
}

struct Progress {
    manifest: BundleManifest,
}

fn checkpoint(
    opts: &TrainOptions,
    agent: &Td3Agent,
    logs: &[EpisodeLog],
    total_steps: u64,
    complete: bool,
    progress: &mut Progress,
) -> Result<(), TrainError> {
    let Some(dir) = &opts.checkpoint_dir else {
        return Ok(());
    };
    let m = &mut progress.manifest;
    m.episodes_completed = logs.len();
    m.total_steps = total_steps;
    m.critic_updates = agent.critic_updates;
    m.actor_updates = agent.actor_updates;
    m.optimizer_steps = [
        agent.actor_opt.step_count(),
        agent.critic_opts[0].step_count(),
        agent.critic_opts[1].step_count(),
    ];
    m.complete = complete;
    save_bundle(dir, agent, m, logs)
}

/// Trains a fresh agent, or continues `resume` with an empty replay buffer.
pub fn train<E, F>(
    env_factory: F,
    cfg: &Td3Config,
    opts: &TrainOptions,
    resume: Option<ResumeState>,
) -> Result<TrainOutcome, TrainError>
where
    E: Environment + Send,
    F: Fn(usize) -> E + Sync,
{
    cfg.validate().map_err(TrainError::Config)?;
    if opts.workers == 0 {
        return Err(TrainError::Config("workers must be at least 1".into()));
    }
    let probe = env_factory(0);
    let obs_dim = probe.observation_dim();
    let act_dim = probe.action_dim();
    let (agent, logs, total_steps, resumed_from) = match resume {
        Some(r) => {
            if r.agent.obs_dim() != obs_dim || r.agent.act_dim() != act_dim {
                return Err(TrainError::Bundle("checkpoint dims differ from the environment".into()));
            }
            let done = r.logs.len();
            (r.agent, r.logs, r.manifest.total_steps, Some(done))
        }
        None => {
            let mut init = stream(opts.seed, 0, Purpose::NetworkInit);
            (Td3Agent::new(obs_dim, act_dim, cfg.clone(), &mut init)?, Vec::new(), 0, None)
        }
    };
    let mut progress = Progress {
        manifest: BundleManifest {
            format: 1,
            config_hash: opts.config_hash.clone(),
            seed: opts.seed,
            episodes_completed: logs.len(),
            total_steps,
            critic_updates: agent.critic_updates,
            actor_updates: agent.actor_updates,
            obs_dim,
            act_dim,
            optimizer_steps: [0; 3],
            complete: false,
            resumed_from,
        },
    };
    if opts.workers == 1 {
        drop(probe);
        train_sync(env_factory(0), agent, logs, total_steps, resumed_from, opts, &mut progress)
    } else {
        drop(probe);
        train_parallel(&env_factory, agent, logs, total_steps, resumed_from, opts, &mut progress)
    }
}

/// Streams for the learner; a resumed run uses the restart episode as a salt.
fn learner_stream(opts: &TrainOptions, resumed_from: Option<usize>, purpose: Purpose) -> crate::rng::StreamRng {
    let salt = resumed_from.map_or(0, |e| e as u64 + 1);
    stream(opts.seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03), 0, purpose)
}

#[derive(Default)]
struct EpisodeAccumulator {
    steps: usize,
    ret: crate::reward::CompensatedSum,
    terms: [crate::reward::CompensatedSum; 5],
    progress: f64,
}

impl EpisodeAccumulator {
    fn add(&mut self, step: &super::EnvStep) {
        self.steps += 1;
        self.ret.add(step.reward);
        for (acc, t) in self.terms.iter_mut().zip(step.reward_terms) {
            acc.add(t);
        }
        self.progress = step.progress;
    }

    fn finish(&self, episode: usize, worker: usize, params: Option<EnvParams>, wall_time: f64) -> EpisodeLog {
        EpisodeLog {
            episode,
            worker,
            steps: self.steps,
            episode_return: self.ret.value(),
            final_progress: self.progress,
            term_sums: std::array::from_fn(|i| self.terms[i].value()),
            params,
            wall_time,
        }
    }
}

fn train_sync<E: Environment>(
    mut env: E,
    mut agent: Td3Agent,
    mut logs: Vec<EpisodeLog>,
    mut total_steps: u64,
    resumed_from: Option<usize>,
    opts: &TrainOptions,
    progress: &mut Progress,
) -> Result<TrainOutcome, TrainError> {
    let cfg = agent.cfg.clone();
    let act_dim = env.action_dim();
    let mut explore = learner_stream(opts, resumed_from, Purpose::Exploration);
    let mut replay_rng = learner_stream(opts, resumed_from, Purpose::Replay);
    let mut smoothing = learner_stream(opts, resumed_from, Purpose::Smoothing);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env.observation_dim(), act_dim);
    let mut batch = Batch::default();
    let mut first_update = None;
    let start = Instant::now();
    let budget = env.step_budget();
    for episode in logs.len()..opts.episodes {
        let mut s = env.reset(episode_seed(opts.seed, episode));
        let mut acc = EpisodeAccumulator::default();
        while budget.is_none_or(|b| acc.steps < b) {
            let a = exploration_action(&agent.actor, act_dim, &s, total_steps, &cfg, &mut explore);
            let step = env.step(&a);
            buffer.push(&s, &a, step.reward, &step.observation, step.terminal);
            acc.add(&step);
            total_steps += 1;
            if total_steps >= cfg.warmup_steps {
                first_update.get_or_insert(total_steps);
                buffer.sample_into(cfg.batch_size, &mut replay_rng, &mut batch);
                agent.train_step(&batch, &mut smoothing)?;
            }
            s = step.observation;
            if step.done {
                break;
            }
        }
        logs.push(acc.finish(episode, 0, env.episode_params(), start.elapsed().as_secs_f64()));
        let n = logs.len();
        if opts.checkpoint_every > 0 && n.is_multiple_of(opts.checkpoint_every) && n < opts.episodes {
            checkpoint(opts, &agent, &logs, total_steps, false, progress)?;
        }
    }
    checkpoint(opts, &agent, &logs, total_steps, true, progress)?;
    Ok(TrainOutcome {
        agent,
        logs,
        total_steps,
        first_update_step: first_update,
    })
}

enum WorkerMsg {
    Step {
        s: Vec<f64>,
        a: Vec<f64>,
        r: f64,
        s_next: Vec<f64>,
        terminal: bool,
    },
    Episode(EpisodeLog),
    Failed(String),
}

#[allow(clippy::too_many_arguments)]
fn train_parallel<E, F>(
    env_factory: &F,
    mut agent: Td3Agent,
    mut logs: Vec<EpisodeLog>,
    total_steps: u64,
    resumed_from: Option<usize>,
    opts: &TrainOptions,
    progress: &mut Progress,
) -> Result<TrainOutcome, TrainError>
where
    E: Environment + Send,
    F: Fn(usize) -> E + Sync,
{
    let cfg = agent.cfg.clone();
    let snapshot = Mutex::new(Arc::new(agent.actor.clone()));
    let next_episode = AtomicUsize::new(logs.len());
    let global_step = AtomicU64::new(total_steps);
    let stop = AtomicBool::new(false);
    let (tx, rx) = sync_channel::<WorkerMsg>(opts.queue_capacity.max(1));
    let start = Instant::now();
    let salt = resumed_from.map_or(0, |e| e as u64 + 1);

    let result = std::thread::scope(|scope| {
        for worker in 0..opts.workers {
            let tx = tx.clone();
            let (snapshot, next_episode, global_step, stop, cfg) =
                (&snapshot, &next_episode, &global_step, &stop, &cfg);
            scope.spawn(move || {
                let mut env = env_factory(worker);
                let act_dim = env.action_dim();
                let budget = env.step_budget();
                let mut explore = stream(opts.seed ^ salt, worker as u64 + 1, Purpose::Exploration);
                loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let episode = next_episode.fetch_add(1, Ordering::SeqCst);
                    if episode >= opts.episodes {
                        break;
                    }
                    let mut s = env.reset(episode_seed(opts.seed, episode));
                    let mut acc = EpisodeAccumulator::default();
                    while budget.is_none_or(|b| acc.steps < b) {
                        let actor = snapshot.lock().map(|g| Arc::clone(&g));
                        let Ok(actor) = actor else {
                            let _ = tx.send(WorkerMsg::Failed("actor snapshot lock poisoned".into()));
                            return;
                        };
                        let t = global_step.fetch_add(1, Ordering::SeqCst);
                        let a = exploration_action(actor.as_ref(), act_dim, &s, t, cfg, &mut explore);
                        let step = env.step(&a);
                        acc.add(&step);
                        let msg = WorkerMsg::Step {
                            s: std::mem::take(&mut s),
                            a,
                            r: step.reward,
                            s_next: step.observation.clone(),
                            terminal: step.terminal,
                        };
                        if tx.send(msg).is_err() {
                            return;
                        }
                        s = step.observation;
                        if step.done {
                            break;
                        }
                    }
                    let log = acc.finish(episode, worker, env.episode_params(), start.elapsed().as_secs_f64());
                    if tx.send(WorkerMsg::Episode(log)).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        learner(&mut agent, &mut logs, rx, &snapshot, &stop, opts, resumed_from, progress, total_steps)
    });
    let (steps, first_update) = result?;
    logs.sort_by_key(|l| l.episode);
    checkpoint(opts, &agent, &logs, steps, true, progress)?;
    Ok(TrainOutcome {
        agent,
        logs,
        total_steps: steps,
        first_update_step: first_update,
    })
}

#[allow(clippy::too_many_arguments)]
fn learner(
    agent: &mut Td3Agent,
    logs: &mut Vec<EpisodeLog>,
    rx: Receiver<WorkerMsg>,
    snapshot: &Mutex<Arc<Mlp>>,
    stop: &AtomicBool,
    opts: &TrainOptions,
    resumed_from: Option<usize>,
    progress: &mut Progress,
    mut total_steps: u64,
) -> Result<(u64, Option<u64>), TrainError> {
    let cfg = agent.cfg.clone();
    let mut replay_rng = learner_stream(opts, resumed_from, Purpose::Replay);
    let mut smoothing = learner_stream(opts, resumed_from, Purpose::Smoothing);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, agent.obs_dim(), agent.act_dim());
    let mut batch = Batch::default();
    let mut first_update = None;
    let fail = |e: TrainError| {
        stop.store(true, Ordering::Relaxed);
        e
    };
    for msg in rx {
        match msg {
            WorkerMsg::Step {
                s,
                a,
                r,
                s_next,
                terminal,
            } => {
                buffer.push(&s, &a, r, &s_next, terminal);
                total_steps += 1;
                if total_steps >= cfg.warmup_steps {
                    first_update.get_or_insert(total_steps);
                    buffer.sample_into(cfg.batch_size, &mut replay_rng, &mut batch);
                    let stats = agent.train_step(&batch, &mut smoothing).map_err(fail)?;
                    if stats.actor_q.is_some() {
                        if let Ok(mut g) = snapshot.lock() {
                            *g = Arc::new(agent.actor.clone());
                        }
                    }
                }
            }
            WorkerMsg::Episode(log) => {
                logs.push(log);
                let n = logs.len();
                if opts.checkpoint_every > 0 && n.is_multiple_of(opts.checkpoint_every) && n < opts.episodes {
                    let mut sorted = logs.clone();
                    sorted.sort_by_key(|l| l.episode);
                    checkpoint(opts, agent, &sorted, total_steps, false, progress).map_err(fail)?;
                }
            }
            WorkerMsg::Failed(e) => return Err(fail(TrainError::Worker(e))),
        }
    }
    Ok((total_steps, first_update))
}

/// Outcome of one deterministic evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub episode: usize,
    pub steps: usize,
    pub episode_return: f64,
    pub final_progress: f64,
    /// First step whose progress reached the threshold, else the step count.
    pub steps_to_threshold: usize,
    pub term_sums: [f64; 5],
    /// Steps each tactile unit was active.
    pub activation_counts: [u64; UNITS],
    pub grasp_steps: usize,
}

/// Runs the deterministic policy for `episodes` episodes.
pub fn evaluate_policy<E: Environment>(
    env: &mut E,
    actor: &dyn Policy,
    episodes: usize,
    seed: u64,
    progress_threshold: f64,
) -> Vec<EvalEpisode> {
    let mut seeds = stream(seed, 0, Purpose::Evaluation);
    let budget = env.step_budget();
    (0..episodes)
        .map(|episode| {
            let mut s = env.reset(seeds.next_u64());
            let mut acc = EpisodeAccumulator::default();
            let mut reached = None;
            let mut counts = [0u64; UNITS];
            let mut grasp_steps = 0;
            while budget.is_none_or(|b| acc.steps < b) {
                let a = actor.act(&s);
                let step = env.step(&a);
                acc.add(&step);
                if reached.is_none() && step.progress >= progress_threshold {
                    reached = Some(acc.steps);
                }
                for (c, &b) in counts.iter_mut().zip(&step.active_units) {
                    *c += u64::from(b);
                }
                grasp_steps += usize::from(step.grasp);
                s = step.observation;
                if step.done {
                    break;
                }
            }
            let log = acc.finish(episode, 0, None, 0.0);
            EvalEpisode {
                episode,
                steps: log.steps,
                episode_return: log.episode_return,
                final_progress: log.final_progress,
                steps_to_threshold: reached.unwrap_or(log.steps),
                term_sums: log.term_sums,
                activation_counts: counts,
                grasp_steps,
            }
        })
        .collect()
}
