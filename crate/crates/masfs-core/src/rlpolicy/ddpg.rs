//! Replay buffer, the DDPG update, and the episodic training loop that
//! drives the simulator with a noisy policy.

use std::path::Path;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::simcore::{SimConfig, Simulation};
use crate::sla::{epoch_reward, RewardMode, SlaBook, DEFAULT_LAMBDA, DEFAULT_SLI_WINDOW};
use crate::workload::{generate_trace, ModelProfile, TenantSpec};

use super::nets::{
    apply_noise, decode_actions, encode_state, ActorParams, CriticParams, EncoderConfig,
};
use super::nn::{soft_update, Adam};
use super::{save_checkpoint, PolicyError};

/// One epoch-level experience. The three sequences are aligned: one feature
/// vector and one raw action tuple per ready sub-job, in snapshot order.
#[derive(Debug, Clone)]
pub struct Transition {
    pub sys: Array1<f64>,
    pub seq: Vec<Array1<f64>>,
    pub actions: Vec<Array1<f64>>,
    pub reward: f64,
    pub next_sys: Array1<f64>,
    pub next_seq: Vec<Array1<f64>>,
    pub terminal: bool,
}

/// Ring buffer with uniform sampling (with replacement).
#[derive(Debug)]
pub struct ReplayBuffer {
    buf: Vec<Transition>,
    cap: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(cap: usize) -> ReplayBuffer {
        assert!(cap > 0);
        ReplayBuffer { buf: Vec::new(), cap, next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.cap {
            self.buf.push(t);
        } else {
            self.buf[self.next] = t;
        }
        self.next = (self.next + 1) % self.cap;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn sample_indices<R: Rng>(&self, rng: &mut R, k: usize) -> Vec<usize> {
        assert!(!self.buf.is_empty());
        (0..k).map(|_| rng.random_range(0..self.buf.len())).collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, k: usize) -> Vec<&Transition> {
        self.sample_indices(rng, k).into_iter().map(|i| &self.buf[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Backpropagation-through-time window, in sub-jobs from the end.
    pub bptt: usize,
    pub n_h: usize,
    pub seed: u64,
    /// Weight of the SLI-gap shaping term in sla_reward.
    pub lambda: f64,
    /// Checkpoint every K episodes; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            episodes: 100,
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            sigma0: 0.2,
            sigma_decay: 0.995,
            batch_size: 32,
            buffer_capacity: 10_000,
            bptt: 32,
            n_h: 192,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0,1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must be in (0,1], got {}", self.tau));
        }
        if self.sigma0 < 0.0 || self.sigma_decay < 0.0 {
            return Err("noise parameters must be nonnegative".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("need buffer_capacity >= batch_size >= 1".into());
        }
        if self.n_h == 0 || self.bptt == 0 {
            return Err("n_h and bptt must be positive".into());
        }
        Ok(())
    }
}

/// Online nets, target nets, and their optimizers.
#[derive(Debug)]
pub struct Trainer {
    pub actor: ActorParams,
    pub critic: CriticParams,
    pub actor_target: ActorParams,
    pub critic_target: CriticParams,
    pub enc: EncoderConfig,
    pub cfg: TrainConfig,
    actor_opt: Adam,
    critic_opt: Adam,
}

fn add_assign(acc: &mut [f64], g: &[f64]) {
    debug_assert_eq!(acc.len(), g.len());
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

impl Trainer {
    pub fn new<R: Rng>(rng: &mut R, enc: EncoderConfig, cfg: TrainConfig) -> Trainer {
        let (n_in, n_sys, n_h, head) = (enc.n_in(), enc.n_sys(), cfg.n_h, enc.head());
        let actor = ActorParams::init(rng, n_in, n_sys, n_h, head);
        let critic = CriticParams::init(rng, n_in, n_sys, n_h, head);
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = Adam::new(cfg.actor_lr, actor.flat().len());
        let critic_opt = Adam::new(cfg.critic_lr, critic.flat().len());
        Trainer { actor, critic, actor_target, critic_target, enc, cfg, actor_opt, critic_opt }
    }

    /// TD target for one transition against the frozen target nets.
    pub fn td_target(&self, tr: &Transition) -> f64 {
        if tr.terminal {
            return tr.reward;
        }
        let a_next = self.actor_target.outputs(&tr.next_sys, &tr.next_seq);
        let (q_next, _) = self.critic_target.forward(&tr.next_sys, &tr.next_seq, &a_next);
        tr.reward + self.cfg.gamma * q_next
    }

    /// One DDPG step on a batch: critic regression toward the TD targets,
    /// actor ascent along the critic's action gradient, soft target updates.
    /// Returns (critic loss, mean Q under the current actor).
    pub fn update(&mut self, batch: &[&Transition]) -> (f64, f64) {
        assert!(!batch.is_empty());
        let b = batch.len() as f64;
        let bptt = self.cfg.bptt;
        let (n_in, n_sys, n_h, head) =
            (self.enc.n_in(), self.enc.n_sys(), self.cfg.n_h, self.enc.head());

        let ys: Vec<f64> = batch.iter().map(|tr| self.td_target(tr)).collect();

        let mut critic_grad = vec![0.0; self.critic.flat().len()];
        let mut critic_loss = 0.0;
        for (tr, &y) in batch.iter().zip(&ys) {
            let (q, cache) = self.critic.forward(&tr.sys, &tr.seq, &tr.actions);
            let diff = q - y;
            critic_loss += diff * diff / b;
            let (g, _) = self.critic.backward(&cache, 2.0 * diff / b, bptt);
            add_assign(&mut critic_grad, &g.flat());
        }
        let mut cflat = self.critic.flat();
        self.critic_opt.step(&mut cflat, &critic_grad);
        self.critic = CriticParams::from_flat(&cflat, n_in, n_sys, n_h, head);

        let mut actor_grad = vec![0.0; self.actor.flat().len()];
        let mut mean_q = 0.0;
        for tr in batch {
            if tr.seq.is_empty() {
                // Q does not depend on the actor when nothing is ready.
                let (q, _) = self.critic.forward(&tr.sys, &tr.seq, &[]);
                mean_q += q / b;
                continue;
            }
            let (outs, a_cache) = self.actor.forward(&tr.sys, &tr.seq);
            let (q, c_cache) = self.critic.forward(&tr.sys, &tr.seq, &outs);
            mean_q += q / b;
            // Objective is +Q; descend on -Q/b.
            let (_, d_actions) = self.critic.backward(&c_cache, -1.0 / b, bptt);
            let g = self.actor.backward(&a_cache, &d_actions, bptt);
            add_assign(&mut actor_grad, &g.flat());
        }
        let mut aflat = self.actor.flat();
        self.actor_opt.step(&mut aflat, &actor_grad);
        self.actor = ActorParams::from_flat(&aflat, n_in, n_sys, n_h, head);

        let mut at = self.actor_target.flat();
        soft_update(&mut at, &self.actor.flat(), self.cfg.tau);
        self.actor_target = ActorParams::from_flat(&at, n_in, n_sys, n_h, head);
        let mut ct = self.critic_target.flat();
        soft_update(&mut ct, &self.critic.flat(), self.cfg.tau);
        self.critic_target = CriticParams::from_flat(&ct, n_in, n_sys, n_h, head);

        (critic_loss, mean_q)
    }
}

/// Everything the training loop needs to roll fresh episodes. Each episode
/// regenerates the trace from `trace_seed + episode` and starts an empty
/// SLA book.
#[derive(Debug, Clone)]
pub struct TrainEnv<'a> {
    pub profiles: &'a [ModelProfile],
    pub tenants: &'a [TenantSpec],
    pub sim: SimConfig,
    pub pareto: (f64, f64),
    pub medium_factor: f64,
    pub trace_seed: u64,
    pub sli_window: usize,
}

impl<'a> TrainEnv<'a> {
    pub fn new(
        profiles: &'a [ModelProfile],
        tenants: &'a [TenantSpec],
        sim: SimConfig,
        pareto: (f64, f64),
        medium_factor: f64,
        trace_seed: u64,
    ) -> TrainEnv<'a> {
        TrainEnv {
            profiles,
            tenants,
            sim,
            pareto,
            medium_factor,
            trace_seed,
            sli_window: DEFAULT_SLI_WINDOW,
        }
    }
}

/// One line of the learning curve (the `episode,return,hit_rate,sigma,
/// critic_loss` CSV).
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePoint {
    pub episode: usize,
    pub ret: f64,
    pub hit_rate: f64,
    pub sigma: f64,
    pub critic_loss: f64,
}

/// Episodic DDPG training. Per epoch: act with exploration noise, step the
/// simulator, reward the previous action with the completions observed
/// since, store the transition, and update once a batch is available.
/// Periodic checkpoints go to `ckpt_dir` when configured.
pub fn train_policy(
    env: &TrainEnv,
    cfg: TrainConfig,
    mode: RewardMode,
    ckpt_dir: Option<&Path>,
) -> Result<(Trainer, Vec<EpisodePoint>), PolicyError> {
    let enc = EncoderConfig::from_profiles(env.profiles, &env.sim.mas, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(&mut rng, enc.clone(), cfg.clone());
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut sigma = cfg.sigma0;
    let mut curve = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let trace = generate_trace(
            env.trace_seed.wrapping_add(episode as u64),
            env.tenants,
            env.profiles,
            env.sim.horizon,
            env.pareto,
            env.medium_factor,
        );
        let book = SlaBook::from_tenants(env.tenants, env.sli_window);
        let mut sim = Simulation::new(env.sim.clone(), &trace, env.profiles, book)?;

        let mut prev: Option<(Array1<f64>, Vec<Array1<f64>>, Vec<Array1<f64>>)> = None;
        let mut ep_return = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;

        while sim.advance().is_some() {
            let completions = sim.drain_completions();
            let snap = sim.snapshot();
            let (sys, seq) = encode_state(&enc, &snap);
            if let Some((p_sys, p_seq, p_acts)) = prev.take() {
                let r = epoch_reward(&completions, mode, cfg.lambda);
                ep_return += r;
                buffer.push(Transition {
                    sys: p_sys,
                    seq: p_seq,
                    actions: p_acts,
                    reward: r,
                    next_sys: sys.clone(),
                    next_seq: seq.clone(),
                    terminal: false,
                });
            }
            let mut outs = trainer.actor.outputs(&sys, &seq);
            apply_noise(&mut rng, &mut outs, sigma);
            let assignment = decode_actions(&snap, &outs);
            sim.apply(&assignment)?;
            prev = Some((sys, seq, outs));

            if buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(&mut rng, cfg.batch_size);
                let (cl, _) = trainer.update(&batch);
                loss_sum += cl;
                loss_n += 1;
            }
        }
        let completions = sim.drain_completions();
        if let Some((p_sys, p_seq, p_acts)) = prev.take() {
            let r = epoch_reward(&completions, mode, cfg.lambda);
            ep_return += r;
            buffer.push(Transition {
                sys: p_sys,
                seq: p_seq,
                actions: p_acts,
                reward: r,
                next_sys: Array1::zeros(enc.n_sys()),
                next_seq: Vec::new(),
                terminal: true,
            });
        }
        let (result, _) = sim.finish();
        let hit_rate = if result.totals.completed > 0 {
            result.totals.hits as f64 / result.totals.completed as f64
        } else {
            0.0
        };
        curve.push(EpisodePoint {
            episode,
            ret: ep_return,
            hit_rate,
            sigma,
            critic_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
        });
        sigma *= cfg.sigma_decay;

        if let Some(dir) = ckpt_dir {
            if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("checkpoint_ep{:05}.bin", episode + 1));
                save_checkpoint(&path, &trainer.actor, &trainer.critic, &trainer.enc)?;
            }
        }
    }
    Ok((trainer, curve))
}

/// Writes the learning curve in the documented CSV layout.
pub fn save_learning_curve(path: &Path, curve: &[EpisodePoint]) -> std::io::Result<()> {
    let mut out = String::from("episode,return,hit_rate,sigma,critic_loss\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.episode, p.ret, p.hit_rate, p.sigma, p.critic_loss
        ));
    }
    std::fs::write(path, out)
}
