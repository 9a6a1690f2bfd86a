//! Pluggable scheduler interface, the heuristic baselines and a brute-force
//! oracle for small-instance validation.
//!
//! All schedulers are pure functions of their input: same SchedulerInput,
//! same SchedulerOutput. Temporal priority is expressed by mapping the
//! chosen order onto descending values 1 - rank/n, which are distinct by
//! construction, so the dispatch order is a strict total order.

use thiserror::Error;

use crate::simcore::{AssignEntry, Assignment, ReadySubJob, SystemSnapshot};
use crate::sla::SlaBook;
use crate::workload::{Cycles, MasConfig, ModelProfile, QosLevel, Request};

/// Everything a scheduler may look at when an epoch fires. The ready
/// descriptors already carry per-SA costs and the tenant's SLI/target, so
/// most schedulers never touch `sla` directly.
pub struct SchedulerInput<'a> {
    pub snapshot: &'a SystemSnapshot,
    pub mas: &'a MasConfig,
    pub epoch_ts: Cycles,
    pub sla: &'a SlaBook,
}

/// A scheduler must return a total Assignment: exactly one entry per ready
/// sub-job, priorities in [0,1].
pub trait Scheduler {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment;
}

impl<F: FnMut(&SchedulerInput) -> Assignment> Scheduler for F {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        self(input)
    }
}

/// Spatial heuristic shared by all baselines: pick the SA with the earliest
/// projected finish for this sub-job. `projected_load` starts from the
/// snapshot's occupied cycles and accrues the work the scheduler has already
/// assigned this epoch (the queued-work-ahead term). Ties break low.
pub fn earliest_finish_sa(sj: &ReadySubJob, projected_load: &[f64]) -> usize {
    let mut best = 0;
    let mut best_finish = f64::INFINITY;
    for (sa_id, &load) in projected_load.iter().enumerate() {
        let finish = load + sj.per_sa_latency[sa_id] as f64;
        if finish < best_finish {
            best_finish = finish;
            best = sa_id;
        }
    }
    best
}

/// Maps a temporal order (indices into the ready list, first = highest) onto
/// an Assignment, routing each sub-job through earliest_finish_sa.
fn assign_in_order(input: &SchedulerInput, order: &[usize]) -> Assignment {
    let ready = &input.snapshot.ready;
    let n = order.len();
    let mut projected: Vec<f64> = input
        .snapshot
        .sas
        .iter()
        .map(|s| s.occupied_cycles)
        .collect();
    let entries = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let sj = &ready[i];
            let sa_id = earliest_finish_sa(sj, &projected);
            projected[sa_id] += sj.per_sa_latency[sa_id] as f64;
            AssignEntry {
                req_id: sj.req_id,
                layer_id: sj.layer_id,
                priority: 1.0 - rank as f64 / n as f64,
                sa_id,
            }
        })
        .collect();
    Assignment { entries }
}

/// First-come-first-serve temporal priority, earliest-finish spatial choice.
#[derive(Debug, Clone, Copy, Default)]
pub struct FcfsH;

impl Scheduler for FcfsH {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        let ready = &input.snapshot.ready;
        let mut order: Vec<usize> = (0..ready.len()).collect();
        order.sort_unstable_by_key(|&i| (ready[i].arrival, ready[i].req_id, ready[i].layer_id));
        assign_in_order(input, &order)
    }
}

/// Earliest absolute deadline first, earliest-finish spatial choice.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdfH;

impl Scheduler for EdfH {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        let ready = &input.snapshot.ready;
        let mut order: Vec<usize> = (0..ready.len()).collect();
        order.sort_unstable_by_key(|&i| {
            (
                ready[i].deadline,
                ready[i].arrival,
                ready[i].req_id,
                ready[i].layer_id,
            )
        });
        assign_in_order(input, &order)
    }
}

/// Greedy per-epoch load balancing. Assigning each sub-job to
/// argmin(load + latency) is exactly the greedy minimizer of the maximum
/// projected SA load, which coincides with the earliest-finish rule; the
/// scheduler differs from FcfsH only in intent, and is kept as its own name
/// so experiment configs read naturally.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeraldLb;

impl Scheduler for HeraldLb {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        FcfsH.assign(input)
    }
}

pub const PREMA_DEFAULT_THETA: f64 = 8.0;

fn qos_base_priority(q: QosLevel) -> f64 {
    match q {
        QosLevel::High => 3.0,
        QosLevel::Medium => 2.0,
        QosLevel::Low => 1.0,
    }
}

/// Token mechanism: token = base priority x epochs waited. Jobs with token
/// >= theta form the candidate set (fallback: the max-token job); candidates
/// run shortest-job-first on estimated remaining work, non-candidates follow
/// by descending token.
#[derive(Debug, Clone, Copy)]
pub struct PremaH {
    pub theta: f64,
}

impl Default for PremaH {
    fn default() -> Self {
        PremaH {
            theta: PREMA_DEFAULT_THETA,
        }
    }
}

impl Scheduler for PremaH {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        let ready = &input.snapshot.ready;
        let ts = input.epoch_ts as f64;
        let tokens: Vec<f64> = ready
            .iter()
            .map(|sj| qos_base_priority(sj.qos_level) * (sj.wait / ts).floor())
            .collect();
        let mut candidate: Vec<bool> = tokens.iter().map(|&t| t >= self.theta).collect();
        if !ready.is_empty() && !candidate.iter().any(|&c| c) {
            // Nobody crossed the threshold: the max-token job is the sole
            // candidate (ties: earlier arrival, then lower req_id).
            let best = (0..ready.len())
                .min_by(|&a, &b| {
                    tokens[b]
                        .partial_cmp(&tokens[a])
                        .unwrap()
                        .then(ready[a].arrival.cmp(&ready[b].arrival))
                        .then(ready[a].req_id.cmp(&ready[b].req_id))
                })
                .unwrap();
            let best_req = ready[best].req_id;
            for (i, sj) in ready.iter().enumerate() {
                candidate[i] = sj.req_id == best_req;
            }
        }
        let mut order: Vec<usize> = (0..ready.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            candidate[b]
                .cmp(&candidate[a])
                .then_with(|| {
                    if candidate[a] && candidate[b] {
                        ready[a].remaining_min_work.cmp(&ready[b].remaining_min_work)
                    } else if !candidate[a] && !candidate[b] {
                        tokens[b].partial_cmp(&tokens[a]).unwrap()
                    } else {
                        std::cmp::Ordering::Equal
                    }
                })
                .then(ready[a].arrival.cmp(&ready[b].arrival))
                .then(ready[a].req_id.cmp(&ready[b].req_id))
                .then(ready[a].layer_id.cmp(&ready[b].layer_id))
        });
        assign_in_order(input, &order)
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance exceeds oracle bounds (at most 8 sub-jobs and 2 SAs)")]
    TooLarge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStep {
    pub req_id: usize,
    pub layer_id: usize,
    pub sa_id: usize,
    pub start: Cycles,
    pub finish: Cycles,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub max_hits: usize,
    /// One schedule achieving max_hits, in dispatch order.
    pub witness: Vec<OracleStep>,
}

struct OracleCtx {
    subjobs: Vec<(usize, usize)>,
    latency: Vec<Vec<Cycles>>,
    preds: Vec<Vec<usize>>,
    job_last_count: Vec<usize>,
    deadline: Vec<Cycles>,
    arrival: Vec<Cycles>,
    job_of: Vec<usize>,
    n_sas: usize,
}

/// Exhaustive best-case scheduler for tiny instances, ignoring epochs and
/// bandwidth contention. Enumerates eager schedules: every dispatch order of
/// dependency-ready sub-jobs crossed with every SA choice, each starting at
/// max(SA free, predecessors done, arrival). Left-shifting any schedule into
/// this family never turns a hit into a miss, so the family contains an
/// optimum.
pub fn brute_force_oracle(
    requests: &[Request],
    profiles: &[ModelProfile],
    mas: &MasConfig,
) -> Result<OracleOutcome, OracleError> {
    let total: usize = requests
        .iter()
        .map(|r| profiles[r.model_id].n_layers())
        .sum();
    if total > 8 || mas.n_sas() > 2 {
        return Err(OracleError::TooLarge);
    }
    let mut subjobs = Vec::new();
    let mut latency = Vec::new();
    let mut preds = Vec::new();
    let mut job_of = Vec::new();
    let mut deadline = Vec::new();
    let mut arrival = Vec::new();
    let mut job_last_count = Vec::new();
    for (job_idx, r) in requests.iter().enumerate() {
        let profile = &profiles[r.model_id];
        let base = subjobs.len();
        job_last_count.push(profile.n_layers());
        for layer in &profile.layers {
            subjobs.push((r.req_id, layer.layer_id));
            latency.push(
                mas.sas
                    .iter()
                    .map(|s| profile.cost(layer.layer_id, s.kind).latency)
                    .collect(),
            );
            preds.push(layer.deps.iter().map(|&d| base + d).collect());
            job_of.push(job_idx);
            deadline.push(r.deadline);
            arrival.push(r.arrival);
        }
    }
    let ctx = OracleCtx {
        subjobs,
        latency,
        preds,
        job_last_count,
        deadline,
        arrival,
        job_of,
        n_sas: mas.n_sas(),
    };

    let n = ctx.subjobs.len();
    let n_jobs = requests.len();
    let mut best_hits: isize = -1;
    let mut best_witness: Vec<OracleStep> = Vec::new();
    let mut finish = vec![0 as Cycles; n];
    let mut done = vec![false; n];
    let mut layers_left: Vec<usize> = ctx.job_last_count.clone();
    let mut trail: Vec<OracleStep> = Vec::new();

    fn dfs(
        ctx: &OracleCtx,
        done: &mut [bool],
        finish: &mut [Cycles],
        layers_left: &mut [usize],
        sa_free: [Cycles; 2],
        placed: usize,
        hits: usize,
        open_jobs: usize,
        trail: &mut Vec<OracleStep>,
        best_hits: &mut isize,
        best_witness: &mut Vec<OracleStep>,
    ) {
        if (hits + open_jobs) as isize <= *best_hits {
            return;
        }
        if placed == ctx.subjobs.len() {
            if hits as isize > *best_hits {
                *best_hits = hits as isize;
                *best_witness = trail.clone();
            }
            return;
        }
        for i in 0..ctx.subjobs.len() {
            if done[i] || !ctx.preds[i].iter().all(|&p| done[p]) {
                continue;
            }
            let ready_at = ctx.preds[i]
                .iter()
                .map(|&p| finish[p])
                .max()
                .unwrap_or(0)
                .max(ctx.arrival[i]);
            for sa in 0..ctx.n_sas {
                let start = ready_at.max(sa_free[sa]);
                let f = start + ctx.latency[i][sa];
                done[i] = true;
                finish[i] = f;
                layers_left[ctx.job_of[i]] -= 1;
                let job_completed = layers_left[ctx.job_of[i]] == 0;
                let job_finish = if job_completed {
                    // The job's finish is the max over its layers; this layer
                    // need not be the last one to finish on a branchy DAG.
                    let job = ctx.job_of[i];
                    (0..ctx.subjobs.len())
                        .filter(|&j| ctx.job_of[j] == job)
                        .map(|j| finish[j])
                        .max()
                        .unwrap()
                } else {
                    0
                };
                let hit = job_completed && job_finish <= ctx.deadline[i];
                let mut sa_free2 = sa_free;
                sa_free2[sa] = f;
                trail.push(OracleStep {
                    req_id: ctx.subjobs[i].0,
                    layer_id: ctx.subjobs[i].1,
                    sa_id: sa,
                    start,
                    finish: f,
                });
                dfs(
                    ctx,
                    done,
                    finish,
                    layers_left,
                    sa_free2,
                    placed + 1,
                    hits + hit as usize,
                    open_jobs - job_completed as usize,
                    trail,
                    best_hits,
                    best_witness,
                );
                trail.pop();
                layers_left[ctx.job_of[i]] += 1;
                done[i] = false;
            }
        }
    }

    dfs(
        &ctx,
        &mut done,
        &mut finish,
        &mut layers_left,
        [0, 0],
        0,
        0,
        n_jobs,
        &mut trail,
        &mut best_hits,
        &mut best_witness,
    );
    Ok(OracleOutcome {
        max_hits: best_hits.max(0) as usize,
        witness: best_witness,
    })
}
