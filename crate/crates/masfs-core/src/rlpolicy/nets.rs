//! State encoders and the actor/critic pair. Both networks run one GRU
//! across the ready queue; the hidden state starts from a learned linear
//! projection of the system features.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::simcore::{Assignment, AssignEntry, SystemSnapshot};
use crate::sla::RewardMode;
use crate::workload::{MasConfig, ModelProfile};

use super::nn::{
    add_outer, gru_backward, gru_forward, push_gru, read_gru, xavier, GruCache, GruParams,
    push_mat, push_vec, read_mat, read_vec, sigmoid,
};

/// Normalization constants and dimensions for feature encoding. The table
/// max and bandwidth come from the workload; everything downstream (network
/// shapes, checkpoints) keys off `n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub n_models: usize,
    pub n_sas: usize,
    /// Largest latency anywhere in the cost table; latency normalizer.
    pub max_latency: f64,
    pub total_bandwidth: f64,
    pub mode: RewardMode,
}

impl EncoderConfig {
    pub fn from_profiles(profiles: &[ModelProfile], mas: &MasConfig, mode: RewardMode) -> EncoderConfig {
        let max_latency = profiles
            .iter()
            .flat_map(|p| p.layers.iter())
            .flat_map(|l| l.costs.iter())
            .map(|c| c.latency)
            .max()
            .unwrap_or(1);
        EncoderConfig {
            n_models: profiles.len(),
            n_sas: mas.n_sas(),
            max_latency: max_latency as f64,
            total_bandwidth: mas.total_bandwidth,
            mode,
        }
    }

    /// Per-sub-job feature vector length.
    pub fn n_in(&self) -> usize {
        let base = self.n_models + 3 + 2 * self.n_sas;
        match self.mode {
            RewardMode::Baseline => base,
            RewardMode::SlaAware => base + 2,
        }
    }

    /// System feature vector length: (busy, occupancy) per SA.
    pub fn n_sys(&self) -> usize {
        2 * self.n_sas
    }

    /// Action tuple length: priority logit + one score per SA.
    pub fn head(&self) -> usize {
        1 + self.n_sas
    }
}

/// Encodes the snapshot into (system features, one feature vector per ready
/// sub-job). The sequence keeps the snapshot's (arrival, req_id, layer_id)
/// order. Layout per sub-job: model one-hot, layer_progress, slack_norm,
/// wait_norm, per-SA latency / table max, per-SA bandwidth / total, and in
/// SLA-aware mode the pair (current_sli, target_sli).
pub fn encode_state(enc: &EncoderConfig, snap: &SystemSnapshot) -> (Array1<f64>, Vec<Array1<f64>>) {
    let mut sys = Array1::zeros(enc.n_sys());
    for (i, sa) in snap.sas.iter().enumerate() {
        sys[2 * i] = if sa.busy { 1.0 } else { 0.0 };
        sys[2 * i + 1] = sa.occupied_cycles / enc.max_latency;
    }
    let seq = snap
        .ready
        .iter()
        .map(|sj| {
            let mut f = Array1::zeros(enc.n_in());
            assert!(sj.model_id < enc.n_models, "model id outside encoder range");
            f[sj.model_id] = 1.0;
            let mut k = enc.n_models;
            f[k] = sj.layer_id as f64 / sj.layer_count as f64;
            k += 1;
            let q = sj.deadline.saturating_sub(sj.arrival).max(1) as f64;
            f[k] = ((sj.deadline as f64 - snap.now) / q).clamp(-1.0, 1.0);
            k += 1;
            f[k] = (sj.wait / q).clamp(0.0, 2.0);
            k += 1;
            for s in 0..enc.n_sas {
                f[k + s] = sj.per_sa_latency[s] as f64 / enc.max_latency;
            }
            k += enc.n_sas;
            for s in 0..enc.n_sas {
                f[k + s] = sj.per_sa_bandwidth[s] / enc.total_bandwidth;
            }
            k += enc.n_sas;
            if enc.mode == RewardMode::SlaAware {
                f[k] = sj.current_sli;
                f[k + 1] = sj.target_sli;
            }
            f
        })
        .collect();
    (sys, seq)
}

/// Actor: h0 = W_sys·sys + b_sys, GRU over the feature sequence, per-step
/// head o_t = W_out·h_t + b_out of size 1 + M.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub w_sys: Array2<f64>,
    pub b_sys: Array1<f64>,
    pub gru: GruParams,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorCache {
    pub sys: Array1<f64>,
    pub h0: Array1<f64>,
    pub hs: Vec<Array1<f64>>,
    pub gru: Vec<GruCache>,
}

impl ActorParams {
    pub fn zeros(n_in: usize, n_sys: usize, n_h: usize, head: usize) -> ActorParams {
        ActorParams {
            w_sys: Array2::zeros((n_h, n_sys)),
            b_sys: Array1::zeros(n_h),
            gru: GruParams::zeros(n_in, n_h),
            w_out: Array2::zeros((head, n_h)),
            b_out: Array1::zeros(head),
        }
    }

    pub fn init<R: Rng>(rng: &mut R, n_in: usize, n_sys: usize, n_h: usize, head: usize) -> ActorParams {
        let mut p = ActorParams::zeros(n_in, n_sys, n_h, head);
        p.w_sys = xavier(rng, n_h, n_sys);
        p.gru = GruParams::init(rng, n_in, n_h);
        p.w_out = xavier(rng, head, n_h);
        p
    }

    pub fn n_h(&self) -> usize {
        self.gru.n_h()
    }

    pub fn head(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn forward(&self, sys: &Array1<f64>, seq: &[Array1<f64>]) -> (Vec<Array1<f64>>, ActorCache) {
        let h0 = self.w_sys.dot(sys) + &self.b_sys;
        let (hs, gru) = gru_forward(&self.gru, seq, &h0);
        let outs = hs.iter().map(|h| self.w_out.dot(h) + &self.b_out).collect();
        let cache = ActorCache { sys: sys.clone(), h0, hs, gru };
        (outs, cache)
    }

    /// Raw outputs without keeping the cache; the evaluation path.
    pub fn outputs(&self, sys: &Array1<f64>, seq: &[Array1<f64>]) -> Vec<Array1<f64>> {
        self.forward(sys, seq).0
    }

    /// Backward from per-step output gradients. Steps older than `bptt`
    /// (counted from the end) contribute nothing, head gradients included.
    pub fn backward(&self, cache: &ActorCache, douts: &[Array1<f64>], bptt: usize) -> ActorParams {
        let t_len = cache.hs.len();
        assert_eq!(douts.len(), t_len);
        let n_h = self.n_h();
        let mut grads = ActorParams::zeros(self.gru.n_in(), self.w_sys.ncols(), n_h, self.head());
        let first = t_len.saturating_sub(bptt);
        let mut dh_steps = vec![Array1::zeros(n_h); t_len];
        for t in first..t_len {
            add_outer(&mut grads.w_out, &douts[t], &cache.hs[t]);
            grads.b_out += &douts[t];
            dh_steps[t] = self.w_out.t().dot(&douts[t]);
        }
        let zero = Array1::zeros(n_h);
        let (g_gru, _dxs, dh0) = gru_backward(&self.gru, &cache.gru, &dh_steps, &zero, bptt);
        grads.gru = g_gru;
        add_outer(&mut grads.w_sys, &dh0, &cache.sys);
        grads.b_sys += &dh0;
        grads
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push_mat(&mut out, &self.w_sys);
        push_vec(&mut out, &self.b_sys);
        push_gru(&mut out, &self.gru);
        push_mat(&mut out, &self.w_out);
        push_vec(&mut out, &self.b_out);
        out
    }

    pub fn from_flat(flat: &[f64], n_in: usize, n_sys: usize, n_h: usize, head: usize) -> ActorParams {
        let mut cur = flat;
        let p = ActorParams {
            w_sys: read_mat(&mut cur, n_h, n_sys),
            b_sys: read_vec(&mut cur, n_h),
            gru: read_gru(&mut cur, n_in, n_h),
            w_out: read_mat(&mut cur, head, n_h),
            b_out: read_vec(&mut cur, head),
        };
        assert!(cur.is_empty(), "trailing parameters in flat vector");
        p
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        *self = ActorParams::from_flat(flat, self.gru.n_in(), self.w_sys.ncols(), self.n_h(), self.head());
    }
}

/// Critic: same h0 projection (its own weights), GRU over concat(features,
/// action), Q = w_q·h_last + b_q. With an empty sequence h_last is h0.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub w_sys: Array2<f64>,
    pub b_sys: Array1<f64>,
    pub gru: GruParams,
    pub w_q: Array1<f64>,
    pub b_q: f64,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    pub sys: Array1<f64>,
    pub h0: Array1<f64>,
    pub h_last: Array1<f64>,
    pub gru: Vec<GruCache>,
    pub n_feat: usize,
}

impl CriticParams {
    pub fn zeros(n_feat: usize, n_sys: usize, n_h: usize, head: usize) -> CriticParams {
        CriticParams {
            w_sys: Array2::zeros((n_h, n_sys)),
            b_sys: Array1::zeros(n_h),
            gru: GruParams::zeros(n_feat + head, n_h),
            w_q: Array1::zeros(n_h),
            b_q: 0.0,
        }
    }

    pub fn init<R: Rng>(rng: &mut R, n_feat: usize, n_sys: usize, n_h: usize, head: usize) -> CriticParams {
        let mut p = CriticParams::zeros(n_feat, n_sys, n_h, head);
        p.w_sys = xavier(rng, n_h, n_sys);
        p.gru = GruParams::init(rng, n_feat + head, n_h);
        p.w_q = xavier(rng, n_h, 1).column(0).to_owned();
        p
    }

    pub fn n_h(&self) -> usize {
        self.gru.n_h()
    }

    pub fn forward(
        &self,
        sys: &Array1<f64>,
        seq: &[Array1<f64>],
        actions: &[Array1<f64>],
    ) -> (f64, CriticCache) {
        assert_eq!(seq.len(), actions.len(), "unaligned action sequence");
        let xs: Vec<Array1<f64>> = seq
            .iter()
            .zip(actions)
            .map(|(f, a)| {
                let mut x = Array1::zeros(f.len() + a.len());
                x.slice_mut(ndarray::s![..f.len()]).assign(f);
                x.slice_mut(ndarray::s![f.len()..]).assign(a);
                x
            })
            .collect();
        let h0 = self.w_sys.dot(sys) + &self.b_sys;
        let (hs, gru) = gru_forward(&self.gru, &xs, &h0);
        let h_last = hs.last().cloned().unwrap_or_else(|| h0.clone());
        let q = self.w_q.dot(&h_last) + self.b_q;
        // With an empty sequence the split point is irrelevant; record the
        // full input width so backward derives head = 0 consistently.
        let n_feat = seq.first().map_or(self.gru.n_in(), |f| f.len());
        let cache = CriticCache { sys: sys.clone(), h0, h_last, gru, n_feat };
        (q, cache)
    }

    /// Backward from dL/dq. Returns (param grads, per-step action input
    /// gradients). Action gradients for truncated steps are zero.
    pub fn backward(&self, cache: &CriticCache, dq: f64, bptt: usize) -> (CriticParams, Vec<Array1<f64>>) {
        let n_h = self.n_h();
        let head = self.gru.n_in() - cache.n_feat;
        let n_sys = self.w_sys.ncols();
        let mut grads = CriticParams::zeros(cache.n_feat, n_sys, n_h, head);
        grads.b_q = dq;
        grads.w_q = &cache.h_last * dq;
        let dh_last = &self.w_q * dq;
        let dh0;
        let mut d_actions = Vec::new();
        if cache.gru.is_empty() {
            dh0 = dh_last;
        } else {
            let dh_steps = vec![Array1::zeros(n_h); cache.gru.len()];
            let (g_gru, dxs, dh0_g) = gru_backward(&self.gru, &cache.gru, &dh_steps, &dh_last, bptt);
            grads.gru = g_gru;
            dh0 = dh0_g;
            d_actions = dxs
                .iter()
                .map(|dx| dx.slice(ndarray::s![cache.n_feat..]).to_owned())
                .collect();
        }
        add_outer(&mut grads.w_sys, &dh0, &cache.sys);
        grads.b_sys += &dh0;
        (grads, d_actions)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        push_mat(&mut out, &self.w_sys);
        push_vec(&mut out, &self.b_sys);
        push_gru(&mut out, &self.gru);
        push_vec(&mut out, &self.w_q);
        out.push(self.b_q);
        out
    }

    pub fn from_flat(flat: &[f64], n_feat: usize, n_sys: usize, n_h: usize, head: usize) -> CriticParams {
        let mut cur = flat;
        let p = CriticParams {
            w_sys: read_mat(&mut cur, n_h, n_sys),
            b_sys: read_vec(&mut cur, n_h),
            gru: read_gru(&mut cur, n_feat + head, n_h),
            w_q: read_vec(&mut cur, n_h),
            b_q: cur[0],
        };
        assert!(cur.len() == 1, "trailing parameters in flat vector");
        p
    }

    pub fn assign_flat(&mut self, flat: &[f64], n_feat: usize) {
        let head = self.gru.n_in() - n_feat;
        *self = CriticParams::from_flat(flat, n_feat, self.w_sys.ncols(), self.n_h(), head);
    }
}

/// Turns raw per-step outputs into an Assignment aligned with the snapshot's
/// ready order: priority = logistic(logit), SA = argmax of scores (ties to
/// the lower index).
pub fn decode_actions(snap: &SystemSnapshot, outs: &[Array1<f64>]) -> Assignment {
    assert_eq!(outs.len(), snap.ready.len(), "one output tuple per ready sub-job");
    let entries = snap
        .ready
        .iter()
        .zip(outs)
        .map(|(sj, o)| {
            assert!(o.iter().all(|v| v.is_finite()), "non-finite policy output");
            let mut sa_id = 0usize;
            for s in 1..o.len() - 1 {
                if o[1 + s] > o[1 + sa_id] {
                    sa_id = s;
                }
            }
            AssignEntry {
                req_id: sj.req_id,
                layer_id: sj.layer_id,
                priority: sigmoid(o[0]),
                sa_id,
            }
        })
        .collect();
    Assignment { entries }
}

/// Adds N(0, sigma^2) to every component of every output tuple, in place.
pub fn apply_noise<R: Rng>(rng: &mut R, outs: &mut [Array1<f64>], sigma: f64) {
    assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return;
    }
    for o in outs.iter_mut() {
        for v in o.iter_mut() {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            *v += sigma * e;
        }
    }
}

/// MACs for one GRU step plus the per-step head.
pub fn per_step_macs(n_in: usize, n_h: usize, head: usize) -> u64 {
    (3 * (n_in * n_h + n_h * n_h + n_h) + n_h * head) as u64
}

/// Total policy MACs for a run: per-step cost times the summed ready-queue
/// lengths across all decision epochs.
pub fn policy_mac_count(actor: &ActorParams, total_steps: u64) -> u64 {
    per_step_macs(actor.gru.n_in(), actor.n_h(), actor.head()) * total_steps
}
