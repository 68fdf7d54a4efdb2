use rand::Rng;
use rand_distr::StandardNormal;

use super::train::TrainError;
use super::{Td3Config, Transition};
use crate::nn::{Activation, Adam, Mlp, Tape};

/// Column-major-free flat mini-batch: row `i` of each field is one transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub s_next: Vec<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn with_dims(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Default::default()
        }
    }

    pub fn from_transitions(items: &[Transition]) -> Self {
        let obs_dim = items.first().map_or(0, |t| t.s.len());
        let act_dim = items.first().map_or(0, |t| t.a.len());
        let mut b = Self::with_dims(obs_dim, act_dim);
        for t in items {
            b.push(&t.s, &t.a, t.r, &t.s_next, t.done);
        }
        b
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.a.clear();
        self.r.clear();
        self.s_next.clear();
        self.done.clear();
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, s_next: &[f64], done: bool) {
        assert_eq!(s.len(), self.obs_dim, "state dimension");
        assert_eq!(a.len(), self.act_dim, "action dimension");
        assert_eq!(s_next.len(), self.obs_dim, "next-state dimension");
        self.s.extend_from_slice(s);
        self.a.extend_from_slice(a);
        self.r.push(r);
        self.s_next.extend_from_slice(s_next);
        self.done.push(done);
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.s[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.a[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.s_next[i * self.obs_dim..(i + 1) * self.obs_dim]
    }
}

/// Deterministic policy.
pub trait Policy {
    fn act(&self, s: &[f64]) -> Vec<f64>;
}

impl Policy for Mlp {
    fn act(&self, s: &[f64]) -> Vec<f64> {
        self.forward(s).expect("policy input matches the actor")
    }
}

/// State-action value with its action gradient.
pub trait QFunction {
    fn q(&self, s: &[f64], a: &[f64]) -> f64;
    fn q_and_action_grad(&self, s: &[f64], a: &[f64]) -> (f64, Vec<f64>);
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

impl QFunction for Mlp {
    fn q(&self, s: &[f64], a: &[f64]) -> f64 {
        self.forward(&concat(s, a)).expect("critic input matches")[0]
    }

    fn q_and_action_grad(&self, s: &[f64], a: &[f64]) -> (f64, Vec<f64>) {
        let x = concat(s, a);
        let mut tape = Tape::default();
        let q = self.forward_tape(&x, &mut tape).expect("critic input matches")[0];
        let mut g = Vec::new();
        self.backward_tape(&mut tape, &[1.0], None, Some(&mut g))
            .expect("critic tape is consistent");
        (q, g.split_off(s.len()))
    }
}

/// Target smoothing noise `clip(N(0, σ), −c, c)` for `n` actions, row-major.
pub fn sample_smoothing_noise<R: Rng + ?Sized>(
    cfg: &Td3Config,
    n: usize,
    act_dim: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..n * act_dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * cfg.smoothing_sigma).clamp(-cfg.smoothing_clip, cfg.smoothing_clip)
        })
        .collect()
}

fn smoothed_next_action(actor_target: &dyn Policy, s_next: &[f64], noise: &[f64]) -> Vec<f64> {
    let mut a = actor_target.act(s_next);
    for (x, e) in a.iter_mut().zip(noise) {
        *x = (*x + e).clamp(-1.0, 1.0);
    }
    a
}

/// Clipped double-Q targets `r + γ(1 − d)·min_i Q_i(s', clip(π_T(s') + ε, −1, 1))`.
pub fn targets_with_noise(
    batch: &Batch,
    actor_target: &dyn Policy,
    critic_targets: [&dyn QFunction; 2],
    gamma: f64,
    noise: &[f64],
) -> Vec<f64> {
    assert_eq!(noise.len(), batch.len() * batch.act_dim, "one noise row per transition");
    (0..batch.len())
        .map(|i| {
            if batch.done[i] {
                return batch.r[i];
            }
            let eps = &noise[i * batch.act_dim..(i + 1) * batch.act_dim];
            let s_next = batch.next_state(i);
            let a_next = smoothed_next_action(actor_target, s_next, eps);
            let q = critic_targets[0]
                .q(s_next, &a_next)
                .min(critic_targets[1].q(s_next, &a_next));
            batch.r[i] + gamma * q
        })
        .collect()
}

/// Targets from one critic alone on the same noise draw.
pub fn single_critic_targets(
    batch: &Batch,
    actor_target: &dyn Policy,
    critic: &dyn QFunction,
    gamma: f64,
    noise: &[f64],
) -> Vec<f64> {
    targets_with_noise(batch, actor_target, [critic, critic], gamma, noise)
}

/// One optimizer step on the mean squared error against `targets`.
/// Returns the loss before the step.
pub fn critic_regression_step(
    critic: &mut Mlp,
    opt: &mut Adam,
    batch: &Batch,
    targets: &[f64],
    grads: &mut Mlp,
    tape: &mut Tape,
) -> Result<f64, TrainError> {
    assert_eq!(targets.len(), batch.len(), "one target per transition");
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    grads.fill_zero();
    let n = batch.len() as f64;
    let mut x = Vec::with_capacity(batch.obs_dim + batch.act_dim);
    let mut loss = 0.0;
    for i in 0..batch.len() {
        x.clear();
        x.extend_from_slice(batch.state(i));
        x.extend_from_slice(batch.action(i));
        let q = critic.forward_tape(&x, tape)?[0];
        let err = q - targets[i];
        loss += err * err;
        critic.backward_tape(tape, &[2.0 * err / n], Some(grads), None)?;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            update: opt.step_count() + 1,
            loss,
        });
    }
    opt.step(critic, grads)?;
    Ok(loss)
}

/// One ascent step on the mean of `critic(s, π(s))` over the batch states.
/// Returns that mean before the step.
pub fn actor_ascent_step(
    actor: &mut Mlp,
    opt: &mut Adam,
    critic: &dyn QFunction,
    batch: &Batch,
    grads: &mut Mlp,
    tape: &mut Tape,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    grads.fill_zero();
    let n = batch.len() as f64;
    let mut mean_q = 0.0;
    let mut out_grad = vec![0.0; batch.act_dim];
    for i in 0..batch.len() {
        let s = batch.state(i);
        let a = actor.forward_tape(s, tape)?.to_vec();
        let (q, dq_da) = critic.q_and_action_grad(s, &a);
        mean_q += q / n;
        for (o, g) in out_grad.iter_mut().zip(&dq_da) {
            *o = -g / n;
        }
        actor.backward_tape(tape, &out_grad, Some(grads), None)?;
    }
    opt.step(actor, grads)?;
    Ok(mean_q)
}

/// Linearly decayed exploration standard deviation at `global_step`.
pub fn exploration_sigma(cfg: &Td3Config, global_step: u64) -> f64 {
    if global_step >= cfg.exploration_decay_steps {
        return cfg.exploration_sigma_final;
    }
    let frac = global_step as f64 / cfg.exploration_decay_steps as f64;
    cfg.exploration_sigma_initial + (cfg.exploration_sigma_final - cfg.exploration_sigma_initial) * frac
}

/// Uniform actions during warmup, then the policy plus Gaussian noise, clipped.
pub fn exploration_action<R: Rng + ?Sized>(
    actor: &dyn Policy,
    act_dim: usize,
    s: &[f64],
    global_step: u64,
    cfg: &Td3Config,
    rng: &mut R,
) -> Vec<f64> {
    if global_step < cfg.warmup_steps {
        return (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    }
    let sigma = exploration_sigma(cfg, global_step);
    let mut a = actor.act(s);
    if sigma > 0.0 {
        for x in a.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = (*x + sigma * z).clamp(-1.0, 1.0);
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: [f64; 2],
    /// Mean critic value under the policy, when the actor was updated.
    pub actor_q: Option<f64>,
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub cfg: Td3Config,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub critic_updates: u64,
    pub actor_updates: u64,
    actor_grads: Mlp,
    critic_grads: Mlp,
    tape: Tape,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        cfg: Td3Config,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let mut actor_dims = vec![obs_dim];
        actor_dims.extend(&cfg.hidden);
        actor_dims.push(act_dim);
        let mut critic_dims = vec![obs_dim + act_dim];
        critic_dims.extend(&cfg.hidden);
        critic_dims.push(1);
        let actor = Mlp::new(&actor_dims, Activation::Relu, Activation::Tanh, rng)?;
        let critics = [
            Mlp::new(&critic_dims, Activation::Relu, Activation::Identity, rng)?,
            Mlp::new(&critic_dims, Activation::Relu, Activation::Identity, rng)?,
        ];
        Self::from_networks(
            cfg,
            [actor.clone(), actor],
            [critics[0].clone(), critics[1].clone()],
            critics,
        )
    }

    /// Rebuilds an agent from `[online, target]` actor and the critic pairs,
    /// with fresh optimizer state.
    pub fn from_networks(
        cfg: Td3Config,
        actors: [Mlp; 2],
        critics: [Mlp; 2],
        critic_targets: [Mlp; 2],
    ) -> Result<Self, TrainError> {
        let [actor, actor_target] = actors;
        let actor_opt = Adam::new(cfg.actor_optimizer, &actor);
        let critic_opts = [
            Adam::new(cfg.critic_optimizer, &critics[0]),
            Adam::new(cfg.critic_optimizer, &critics[1]),
        ];
        Ok(Self {
            actor_grads: actor.zeros_like(),
            critic_grads: critics[0].zeros_like(),
            tape: Tape::default(),
            cfg,
            actor,
            actor_target,
            critics,
            critic_targets,
            actor_opt,
            critic_opts,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn compute_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Vec<f64> {
        let noise = sample_smoothing_noise(&self.cfg, batch.len(), batch.act_dim, rng);
        targets_with_noise(
            batch,
            &self.actor_target,
            [&self.critic_targets[0], &self.critic_targets[1]],
            self.cfg.gamma,
            &noise,
        )
    }

    /// Both critics regress onto the same target batch.
    pub fn update_critics(&mut self, batch: &Batch, targets: &[f64]) -> Result<[f64; 2], TrainError> {
        let mut losses = [0.0; 2];
        for (j, loss) in losses.iter_mut().enumerate() {
            *loss = critic_regression_step(
                &mut self.critics[j],
                &mut self.critic_opts[j],
                batch,
                targets,
                &mut self.critic_grads,
                &mut self.tape,
            )?;
        }
        Ok(losses)
    }

    /// Actor ascent and target tracking, gated by the policy delay.
    pub fn update_actor_and_targets(
        &mut self,
        batch: &Batch,
        update_index: u64,
    ) -> Result<Option<f64>, TrainError> {
        if !update_index.is_multiple_of(self.cfg.policy_delay) {
            return Ok(None);
        }
        let q = actor_ascent_step(
            &mut self.actor,
            &mut self.actor_opt,
            &self.critics[0],
            batch,
            &mut self.actor_grads,
            &mut self.tape,
        )?;
        let tau = self.cfg.tau;
        self.actor_target.polyak_blend(&self.actor, tau)?;
        for j in 0..2 {
            self.critic_targets[j].polyak_blend(&self.critics[j], tau)?;
        }
        self.actor_updates += 1;
        Ok(Some(q))
    }

    /// One full update: targets, both critics, then the delayed actor step.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateStats, TrainError> {
        let targets = self.compute_targets(batch, rng);
        let critic_loss = self.update_critics(batch, &targets)?;
        self.critic_updates += 1;
        let actor_q = self.update_actor_and_targets(batch, self.critic_updates)?;
        if !(self.actor.is_finite() && self.critics.iter().all(Mlp::is_finite)) {
            return Err(TrainError::NonFiniteNetwork {
                update: self.critic_updates,
            });
        }
        Ok(UpdateStats {
            critic_loss,
            actor_q,
        })
    }
}
