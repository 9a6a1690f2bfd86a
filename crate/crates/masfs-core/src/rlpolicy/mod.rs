//! Learned scheduling policy: GRU actor/critic over the ready queue,
//! trained with DDPG against the simulator. The actor reads one feature
//! vector per ready sub-job and emits a priority logit plus per-SA scores;
//! decoding those yields the same Assignment shape the heuristics produce.
//!
//! Checkpoint format (`MASRL1`): 6-byte magic, then n_in, n_h, M, n_models
//! as little-endian u32, then the actor and critic parameter flats as
//! little-endian f64. Flat order per network: w_sys, b_sys, GRU block
//! (wz, uz, bz, wr, ur, br, wn, un, bn), output head; matrices row-major.

mod ddpg;
mod nets;
mod nn;

pub use ddpg::{
    save_learning_curve, train_policy, EpisodePoint, ReplayBuffer, TrainConfig, TrainEnv, Trainer,
    Transition,
};
pub use nets::{
    apply_noise, decode_actions, encode_state, per_step_macs, policy_mac_count, ActorCache,
    ActorParams, CriticCache, CriticParams, EncoderConfig,
};
pub use nn::{
    gru_backward, gru_forward, gru_step, gru_step_backward, gru_step_cached, sigmoid, soft_update,
    Adam, GruCache, GruParams,
};

use std::fs;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::simcore::{Assignment, SimError};
use crate::schedulers::{Scheduler, SchedulerInput};
use crate::sla::RewardMode;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

const CKPT_MAGIC: &[u8; 6] = b"MASRL1";

/// Dimensions recorded in a checkpoint header. The paired encoder is
/// reconstructed from the run's cost table; `expect_encoder` re-checks that
/// the shapes line up before the policy is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub n_in: usize,
    pub n_h: usize,
    pub n_sas: usize,
    pub n_models: usize,
}

impl CheckpointMeta {
    /// Reward mode implied by the input width.
    pub fn mode(&self) -> Result<RewardMode, PolicyError> {
        let base = self.n_models + 3 + 2 * self.n_sas;
        if self.n_in == base {
            Ok(RewardMode::Baseline)
        } else if self.n_in == base + 2 {
            Ok(RewardMode::SlaAware)
        } else {
            Err(PolicyError::Checkpoint(format!(
                "n_in {} inconsistent with {} models and {} SAs",
                self.n_in, self.n_models, self.n_sas
            )))
        }
    }

    pub fn expect_encoder(&self, enc: &EncoderConfig) -> Result<(), PolicyError> {
        if enc.n_in() != self.n_in || enc.n_sas != self.n_sas || enc.n_models != self.n_models {
            return Err(PolicyError::Checkpoint(format!(
                "checkpoint trained for n_in={} M={} models={}, run has n_in={} M={} models={}",
                self.n_in,
                self.n_sas,
                self.n_models,
                enc.n_in(),
                enc.n_sas,
                enc.n_models
            )));
        }
        Ok(())
    }
}

fn actor_flat_len(n_in: usize, n_h: usize, n_sys: usize, head: usize) -> usize {
    n_h * n_sys + n_h + 3 * (n_h * n_in + n_h * n_h + n_h) + head * n_h + head
}

fn critic_flat_len(n_in: usize, n_h: usize, n_sys: usize, head: usize) -> usize {
    n_h * n_sys + n_h + 3 * (n_h * (n_in + head) + n_h * n_h + n_h) + n_h + 1
}

pub fn save_checkpoint(
    path: &Path,
    actor: &ActorParams,
    critic: &CriticParams,
    enc: &EncoderConfig,
) -> Result<(), PolicyError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CKPT_MAGIC);
    for dim in [enc.n_in(), actor.n_h(), enc.n_sas, enc.n_models] {
        bytes.extend_from_slice(&u32::try_from(dim).unwrap().to_le_bytes());
    }
    for v in actor.flat().iter().chain(critic.flat().iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ActorParams, CriticParams, CheckpointMeta), PolicyError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 22 || &bytes[..6] != CKPT_MAGIC {
        return Err(PolicyError::Checkpoint("missing MASRL1 magic".into()));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 6 + 4 * i;
        *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let meta = CheckpointMeta { n_in: dims[0], n_h: dims[1], n_sas: dims[2], n_models: dims[3] };
    meta.mode()?;
    let (n_sys, head) = (2 * meta.n_sas, 1 + meta.n_sas);
    let a_len = actor_flat_len(meta.n_in, meta.n_h, n_sys, head);
    let c_len = critic_flat_len(meta.n_in, meta.n_h, n_sys, head);
    let expect = 22 + 8 * (a_len + c_len);
    if bytes.len() != expect {
        return Err(PolicyError::Checkpoint(format!(
            "size {} does not match header (expected {expect})",
            bytes.len()
        )));
    }
    let floats: Vec<f64> = bytes[22..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let actor = ActorParams::from_flat(&floats[..a_len], meta.n_in, n_sys, meta.n_h, head);
    let critic = CriticParams::from_flat(&floats[a_len..], meta.n_in, n_sys, meta.n_h, head);
    Ok((actor, critic, meta))
}

/// A frozen actor driving the simulator greedily (no noise). Tracks the
/// summed ready-queue length so runs can report policy MACs afterwards.
#[derive(Debug, Clone)]
pub struct PolicyScheduler {
    pub actor: ActorParams,
    pub enc: EncoderConfig,
    pub steps: u64,
}

impl PolicyScheduler {
    pub fn new(actor: ActorParams, enc: EncoderConfig) -> PolicyScheduler {
        PolicyScheduler { actor, enc, steps: 0 }
    }

    pub fn mac_count(&self) -> u64 {
        policy_mac_count(&self.actor, self.steps)
    }
}

impl Scheduler for PolicyScheduler {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        let (sys, seq) = encode_state(&self.enc, input.snapshot);
        self.steps += seq.len() as u64;
        let outs = self.actor.outputs(&sys, &seq);
        decode_actions(input.snapshot, &outs)
    }
}
