//! Deterministic discrete-event simulation of non-preemptive sub-job
//! execution on M sub-accelerators with shared-bandwidth contention and
//! periodic scheduling epochs of length T_s.
//!
//! The clock is continuous (f64 cycles): bandwidth throttling produces
//! rational progress rates, so completion instants are not integers even
//! though all trace inputs are. Determinism still holds bit-exactly because
//! every float operation happens in a fixed order; there is no randomness
//! anywhere in the engine.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::schedulers::{Scheduler, SchedulerInput};
use crate::sla::{Completion, SlaBook};
use crate::workload::{
    Cycles, MasConfig, ModelProfile, QosLevel, Request, RequestTrace, SaKind, WorkloadError,
};

/// Remaining nominal work at or below this counts as complete (absorbs float
/// drift accumulated across rate changes).
pub const WORK_EPS: f64 = 1e-6;
/// Slack added to the deadline comparison so exact-on-the-line finishes hit.
pub const HIT_EPS: f64 = 1e-9;

pub const RESULTS_HEADER: &str = "req_id,tenant_id,model_id,arrival,deadline,finish,hit,latency";
pub const EVENT_HEADER: &str = "time,event_kind,req_id,layer_id,sa_id";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("request {req_id}: unknown model {model_id}")]
    InconsistentTrace { req_id: usize, model_id: usize },
    #[error("scheduler contract violated: {0}")]
    SchedulerContract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SjState {
    Blocked,
    Ready,
    Queued,
    Running,
    Done,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Scheduling period T_s in cycles.
    pub epoch_ts: Cycles,
    pub mas: MasConfig,
    /// Carried into outputs for bookkeeping; the engine itself draws nothing.
    pub rng_seed: u64,
    /// Hard cut: events past this instant never happen.
    pub horizon: Cycles,
    /// Uniform-throttling contention model on/off (off only for oracle runs).
    pub contention: bool,
    /// Record the per-event debug log.
    pub collect_events: bool,
}

/// One entry of a scheduler's answer for an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignEntry {
    pub req_id: usize,
    pub layer_id: usize,
    /// Temporal priority in [0,1]; higher runs earlier.
    pub priority: f64,
    pub sa_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub entries: Vec<AssignEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaSnapshot {
    pub sa_id: usize,
    pub kind: SaKind,
    pub busy: bool,
    /// Remaining work of the running sub-job at nominal rate, in cycles;
    /// contention-independent by convention. 0 iff idle.
    pub occupied_cycles: f64,
}

/// Ready sub-job descriptor handed to schedulers and encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadySubJob {
    pub req_id: usize,
    pub tenant_id: usize,
    pub model_id: usize,
    pub layer_id: usize,
    pub arrival: Cycles,
    pub deadline: Cycles,
    pub qos_level: QosLevel,
    /// now - arrival.
    pub wait: f64,
    pub defer_count: u32,
    pub layer_count: usize,
    /// Indexed by sa_id.
    pub per_sa_latency: Vec<Cycles>,
    pub per_sa_bandwidth: Vec<f64>,
    /// Sum of min-SA latencies over the job's not-yet-done layers.
    pub remaining_min_work: Cycles,
    pub current_sli: f64,
    pub target_sli: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSnapshot {
    pub now: f64,
    pub sas: Vec<SaSnapshot>,
    /// Ordered by (arrival, req_id, layer_id).
    pub ready: Vec<ReadySubJob>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub req_id: usize,
    pub tenant_id: usize,
    pub model_id: usize,
    pub arrival: Cycles,
    pub deadline: Cycles,
    pub finish: f64,
    pub hit: bool,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubJobRecord {
    pub req_id: usize,
    pub model_id: usize,
    pub layer_id: usize,
    pub sa_id: usize,
    pub sa_kind: SaKind,
    pub start: f64,
    pub finish: f64,
    pub nominal_latency: Cycles,
    pub bandwidth: f64,
    pub energy_pj: f64,
    pub defer_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochAction {
    pub req_id: usize,
    pub tenant_id: usize,
    pub layer_id: usize,
    pub arrival: Cycles,
    pub priority: f64,
    pub sa_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub time: f64,
    pub ready_len: usize,
    /// Ordered by (req_id, layer_id).
    pub actions: Vec<EpochAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrive,
    Epoch,
    Dispatch,
    Start,
    Complete,
    JobDone,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::Arrive => "arrive",
            EventKind::Epoch => "epoch",
            EventKind::Dispatch => "dispatch",
            EventKind::Start => "start",
            EventKind::Complete => "complete",
            EventKind::JobDone => "job-done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRow {
    pub time: f64,
    pub kind: EventKind,
    pub req_id: Option<usize>,
    pub layer_id: Option<usize>,
    pub sa_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub completed: usize,
    /// Arrived-in-trace requests that did not finish within the horizon.
    pub censored: usize,
    pub hits: usize,
    pub energy_pj: f64,
    pub deferral_events: u64,
    /// Mean over executed sub-jobs of (1 + defer_count).
    pub mean_defer_factor: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub requests: Vec<RequestRecord>,
    pub subjobs: Vec<SubJobRecord>,
    pub epochs: Vec<EpochRecord>,
    pub totals: Totals,
    /// Populated only when `collect_events`; exported as CSV, not JSON.
    #[serde(skip)]
    pub events: Vec<EventRow>,
}

/// Uniform proportional throttling: all running sub-jobs progress at rate
/// 1.0 while total demand fits in B, else at B / sum(demands).
pub fn effective_rates(demands: &[f64], total_bandwidth: f64) -> Vec<f64> {
    let sum: f64 = demands.iter().sum();
    if sum <= total_bandwidth {
        vec![1.0; demands.len()]
    } else {
        vec![total_bandwidth / sum; demands.len()]
    }
}

/// Recomputed workload energy: sum over executed sub-jobs of the cost-table
/// energy for (layer, assigned SA kind).
pub fn total_energy(result: &SimResult, profiles: &[ModelProfile]) -> f64 {
    result
        .subjobs
        .iter()
        .map(|s| profiles[s.model_id].cost(s.layer_id, s.sa_kind).energy_pj)
        .sum()
}

#[derive(Debug, Clone)]
struct SubJobSlot {
    state: SjState,
    defer_count: u32,
    assigned_sa: Option<usize>,
    start: Option<f64>,
    finish: Option<f64>,
}

#[derive(Debug, Clone)]
struct ActiveJob {
    req: Request,
    slots: Vec<SubJobSlot>,
    n_done: usize,
}

#[derive(Debug, Clone)]
struct RunningSj {
    req_id: usize,
    layer_id: usize,
    /// Nominal cycles left; decreases by rate * dt.
    remaining: f64,
    bandwidth: f64,
}

#[derive(Debug, Clone, Copy)]
struct QueuedSj {
    req_id: usize,
    layer_id: usize,
    priority: f64,
    arrival: Cycles,
}

#[derive(Debug, Clone)]
struct SaRuntime {
    kind: SaKind,
    running: Option<RunningSj>,
    queue: Vec<QueuedSj>,
}

/// Stepping simulation. Drive it with `advance` / `snapshot` / `apply`;
/// `run_simulation` wraps that loop for plain (non-training) runs.
pub struct Simulation<'a> {
    cfg: SimConfig,
    profiles: &'a [ModelProfile],
    trace_len: usize,
    pending_arrivals: std::iter::Peekable<std::slice::Iter<'a, Request>>,
    now: f64,
    next_epoch: f64,
    jobs: BTreeMap<usize, ActiveJob>,
    sas: Vec<SaRuntime>,
    sla: SlaBook,
    /// Ready set frozen at the last boundary; apply() must cover it exactly.
    last_ready: Vec<(usize, usize)>,
    awaiting_assignment: bool,
    completions_since_drain: Vec<Completion>,
    requests_out: Vec<RequestRecord>,
    subjobs_out: Vec<SubJobRecord>,
    epochs_out: Vec<EpochRecord>,
    events_out: Vec<EventRow>,
    energy_pj: f64,
    deferral_events: u64,
    finished: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(
        cfg: SimConfig,
        trace: &'a RequestTrace,
        profiles: &'a [ModelProfile],
        sla: SlaBook,
    ) -> Result<Simulation<'a>, SimError> {
        assert!(cfg.epoch_ts > 0);
        for r in &trace.requests {
            if r.model_id >= profiles.len() {
                return Err(SimError::InconsistentTrace {
                    req_id: r.req_id,
                    model_id: r.model_id,
                });
            }
        }
        let sas = cfg
            .mas
            .sas
            .iter()
            .map(|s| SaRuntime {
                kind: s.kind,
                running: None,
                queue: Vec::new(),
            })
            .collect();
        Ok(Simulation {
            profiles,
            trace_len: trace.requests.len(),
            pending_arrivals: trace.requests.iter().peekable(),
            now: 0.0,
            next_epoch: 0.0,
            jobs: BTreeMap::new(),
            sas,
            sla,
            last_ready: Vec::new(),
            awaiting_assignment: false,
            completions_since_drain: Vec::new(),
            requests_out: Vec::new(),
            subjobs_out: Vec::new(),
            epochs_out: Vec::new(),
            events_out: Vec::new(),
            energy_pj: 0.0,
            deferral_events: 0,
            finished: false,
            cfg,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn mas(&self) -> &MasConfig {
        &self.cfg.mas
    }

    pub fn epoch_ts(&self) -> Cycles {
        self.cfg.epoch_ts
    }

    pub fn sla(&self) -> &SlaBook {
        &self.sla
    }

    /// Job completions observed since the last call, in completion order.
    pub fn drain_completions(&mut self) -> Vec<Completion> {
        std::mem::take(&mut self.completions_since_drain)
    }

    fn event(&mut self, kind: EventKind, req: Option<usize>, layer: Option<usize>, sa: Option<usize>) {
        if self.cfg.collect_events {
            self.events_out.push(EventRow {
                time: self.now,
                kind,
                req_id: req,
                layer_id: layer,
                sa_id: sa,
            });
        }
    }

    /// Progress rate per SA under the current running set; indexed by sa_id.
    fn rates(&self) -> Vec<f64> {
        if !self.cfg.contention {
            return vec![1.0; self.sas.len()];
        }
        let demands: Vec<f64> = self
            .sas
            .iter()
            .map(|sa| sa.running.as_ref().map_or(0.0, |r| r.bandwidth))
            .collect();
        effective_rates(&demands, self.cfg.mas.total_bandwidth)
    }

    fn start_subjob(&mut self, sa_id: usize, req_id: usize, layer_id: usize) {
        let job = self.jobs.get_mut(&req_id).unwrap();
        let cost = self.profiles[job.req.model_id].cost(layer_id, self.sas[sa_id].kind);
        let slot = &mut job.slots[layer_id];
        debug_assert_eq!(slot.state, SjState::Queued);
        slot.state = SjState::Running;
        slot.start = Some(self.now);
        slot.assigned_sa = Some(sa_id);
        self.sas[sa_id].running = Some(RunningSj {
            req_id,
            layer_id,
            remaining: cost.latency as f64,
            bandwidth: cost.bandwidth,
        });
        self.event(EventKind::Start, Some(req_id), Some(layer_id), Some(sa_id));
    }

    /// Finishes the sub-job running on `sa_id`, starts the queue head if any,
    /// and closes out the whole job when this was its last layer.
    fn complete_subjob(&mut self, sa_id: usize) {
        let run = self.sas[sa_id].running.take().unwrap();
        let kind = self.sas[sa_id].kind;
        let job = self.jobs.get_mut(&run.req_id).unwrap();
        let model_id = job.req.model_id;
        let cost = *self.profiles[model_id].cost(run.layer_id, kind);
        let slot = &mut job.slots[run.layer_id];
        slot.state = SjState::Done;
        slot.finish = Some(self.now);
        let defer_count = slot.defer_count;
        let start = slot.start.unwrap();
        job.n_done += 1;
        let job_done = job.n_done == job.slots.len();
        self.energy_pj += cost.energy_pj;
        self.subjobs_out.push(SubJobRecord {
            req_id: run.req_id,
            model_id,
            layer_id: run.layer_id,
            sa_id,
            sa_kind: kind,
            start,
            finish: self.now,
            nominal_latency: cost.latency,
            bandwidth: cost.bandwidth,
            energy_pj: cost.energy_pj,
            defer_count,
        });
        self.event(EventKind::Complete, Some(run.req_id), Some(run.layer_id), Some(sa_id));

        if job_done {
            let req = self.jobs.remove(&run.req_id).unwrap().req;
            let hit = self.now <= req.deadline as f64 + HIT_EPS;
            let state = self
                .sla
                .get_mut(req.tenant_id, req.model_id)
                .unwrap_or_else(|| {
                    panic!("no SLA state for tenant {} model {}", req.tenant_id, req.model_id)
                });
            self.completions_since_drain.push(Completion {
                target_sli: state.target_sli,
                sli_before: state.current_sli(),
                hit,
            });
            state.record_outcome(hit);
            self.requests_out.push(RequestRecord {
                req_id: req.req_id,
                tenant_id: req.tenant_id,
                model_id: req.model_id,
                arrival: req.arrival,
                deadline: req.deadline,
                finish: self.now,
                hit,
                latency: self.now - req.arrival as f64,
            });
            self.event(EventKind::JobDone, Some(req.req_id), None, None);
        }

        if let Some(head) = self.sas[sa_id].queue.first().copied() {
            self.sas[sa_id].queue.remove(0);
            self.start_subjob(sa_id, head.req_id, head.layer_id);
        }
    }

    /// Boundary bookkeeping: pull back queued-but-unstarted sub-jobs
    /// (deferral), admit arrivals, promote unblocked layers, freeze the
    /// ready set.
    fn collect_ready(&mut self) {
        for sa_id in 0..self.sas.len() {
            let pulled: Vec<QueuedSj> = self.sas[sa_id].queue.drain(..).collect();
            for q in pulled {
                let slot = &mut self.jobs.get_mut(&q.req_id).unwrap().slots[q.layer_id];
                debug_assert_eq!(slot.state, SjState::Queued);
                slot.state = SjState::Ready;
                slot.defer_count += 1;
                self.deferral_events += 1;
            }
        }
        while let Some(&r) = self.pending_arrivals.peek() {
            if r.arrival as f64 > self.now {
                break;
            }
            self.pending_arrivals.next();
            let n_layers = self.profiles[r.model_id].n_layers();
            self.jobs.insert(
                r.req_id,
                ActiveJob {
                    req: r.clone(),
                    slots: vec![
                        SubJobSlot {
                            state: SjState::Blocked,
                            defer_count: 0,
                            assigned_sa: None,
                            start: None,
                            finish: None,
                        };
                        n_layers
                    ],
                    n_done: 0,
                },
            );
            self.event(EventKind::Arrive, Some(r.req_id), None, None);
        }
        let mut ready: Vec<(Cycles, usize, usize)> = Vec::new();
        for (&req_id, job) in &mut self.jobs {
            let profile = &self.profiles[job.req.model_id];
            for layer in &profile.layers {
                let unblocked = job.slots[layer.layer_id].state == SjState::Blocked
                    && layer
                        .deps
                        .iter()
                        .all(|&d| job.slots[d].state == SjState::Done);
                if unblocked {
                    job.slots[layer.layer_id].state = SjState::Ready;
                }
                if job.slots[layer.layer_id].state == SjState::Ready {
                    ready.push((job.req.arrival, req_id, layer.layer_id));
                }
            }
        }
        ready.sort_unstable();
        self.last_ready = ready.into_iter().map(|(_, r, l)| (r, l)).collect();
    }

    /// Runs the event loop to the next scheduling boundary. Returns its time,
    /// or None once the trace is fully processed or the horizon is reached.
    /// Panics if the previous boundary was not answered with `apply`.
    pub fn advance(&mut self) -> Option<f64> {
        assert!(
            !self.awaiting_assignment,
            "advance called while an assignment is pending"
        );
        if self.finished {
            return None;
        }
        let horizon = self.cfg.horizon as f64;
        loop {
            let rates = self.rates();
            let mut t_next = self.next_epoch;
            for (sa_id, sa) in self.sas.iter().enumerate() {
                if let Some(run) = &sa.running {
                    let t_done = self.now + run.remaining / rates[sa_id];
                    if t_done < t_next {
                        t_next = t_done;
                    }
                }
            }
            if t_next > horizon {
                self.now = horizon;
                self.finished = true;
                return None;
            }
            let dt = t_next - self.now;
            self.now = t_next;
            for (sa_id, sa) in self.sas.iter_mut().enumerate() {
                if let Some(run) = &mut sa.running {
                    run.remaining -= rates[sa_id] * dt;
                }
            }
            for sa_id in 0..self.sas.len() {
                let done = matches!(&self.sas[sa_id].running, Some(r) if r.remaining <= WORK_EPS);
                if done {
                    self.complete_subjob(sa_id);
                }
            }
            if self.now == self.next_epoch {
                if self.now >= horizon {
                    self.finished = true;
                    return None;
                }
                self.next_epoch += self.cfg.epoch_ts as f64;
                self.collect_ready();
                if self.jobs.is_empty() {
                    match self.pending_arrivals.peek() {
                        None => {
                            self.finished = true;
                            return None;
                        }
                        Some(&r) => {
                            // Idle until the boundary that admits the next
                            // arrival; nothing can happen in between.
                            let k = r.arrival.div_ceil(self.cfg.epoch_ts);
                            self.next_epoch = (k * self.cfg.epoch_ts) as f64;
                        }
                    }
                } else {
                    self.awaiting_assignment = true;
                    self.event(EventKind::Epoch, None, None, None);
                    return Some(self.now);
                }
            }
        }
    }

    /// State as seen by schedulers at the current boundary.
    pub fn snapshot(&self) -> SystemSnapshot {
        let sas = self
            .sas
            .iter()
            .enumerate()
            .map(|(sa_id, sa)| SaSnapshot {
                sa_id,
                kind: sa.kind,
                busy: sa.running.is_some(),
                occupied_cycles: sa.running.as_ref().map_or(0.0, |r| r.remaining),
            })
            .collect();
        let ready = self
            .last_ready
            .iter()
            .map(|&(req_id, layer_id)| {
                let job = &self.jobs[&req_id];
                let profile = &self.profiles[job.req.model_id];
                let per_sa_latency: Vec<Cycles> = self
                    .sas
                    .iter()
                    .map(|sa| profile.cost(layer_id, sa.kind).latency)
                    .collect();
                let per_sa_bandwidth: Vec<f64> = self
                    .sas
                    .iter()
                    .map(|sa| profile.cost(layer_id, sa.kind).bandwidth)
                    .collect();
                let remaining_min_work: Cycles = profile
                    .layers
                    .iter()
                    .filter(|l| job.slots[l.layer_id].state != SjState::Done)
                    .map(|l| l.costs.iter().map(|c| c.latency).min().unwrap())
                    .sum();
                let state = self
                    .sla
                    .get(job.req.tenant_id, job.req.model_id)
                    .expect("SLA state exists for every tenant in the trace");
                ReadySubJob {
                    req_id,
                    tenant_id: job.req.tenant_id,
                    model_id: job.req.model_id,
                    layer_id,
                    arrival: job.req.arrival,
                    deadline: job.req.deadline,
                    qos_level: job.req.qos_level,
                    wait: self.now - job.req.arrival as f64,
                    defer_count: job.slots[layer_id].defer_count,
                    layer_count: profile.n_layers(),
                    per_sa_latency,
                    per_sa_bandwidth,
                    remaining_min_work,
                    current_sli: state.current_sli(),
                    target_sli: state.target_sli,
                }
            })
            .collect();
        SystemSnapshot {
            now: self.now,
            sas,
            ready,
        }
    }

    /// Dispatches an epoch's assignment: queues every ready sub-job on its
    /// chosen SA ordered by (priority desc, arrival, req_id, layer_id) and
    /// starts the head on each idle SA.
    pub fn apply(&mut self, assignment: &Assignment) -> Result<(), SimError> {
        assert!(self.awaiting_assignment, "apply called outside a boundary");
        let mut expected: std::collections::BTreeSet<(usize, usize)> =
            self.last_ready.iter().copied().collect();
        for e in &assignment.entries {
            if !expected.remove(&(e.req_id, e.layer_id)) {
                return Err(SimError::SchedulerContract(format!(
                    "unexpected or duplicate entry for request {} layer {}",
                    e.req_id, e.layer_id
                )));
            }
            if e.sa_id >= self.sas.len() {
                return Err(SimError::SchedulerContract(format!(
                    "sa_id {} out of range",
                    e.sa_id
                )));
            }
            if !e.priority.is_finite() || !(0.0..=1.0).contains(&e.priority) {
                return Err(SimError::SchedulerContract(format!(
                    "priority {} outside [0,1]",
                    e.priority
                )));
            }
        }
        if let Some(&(req_id, layer_id)) = expected.iter().next() {
            return Err(SimError::SchedulerContract(format!(
                "missing entry for request {req_id} layer {layer_id}"
            )));
        }

        let mut actions: Vec<EpochAction> = Vec::with_capacity(assignment.entries.len());
        for e in &assignment.entries {
            let job = self.jobs.get_mut(&e.req_id).unwrap();
            let slot = &mut job.slots[e.layer_id];
            debug_assert_eq!(slot.state, SjState::Ready);
            slot.state = SjState::Queued;
            let arrival = job.req.arrival;
            let tenant_id = job.req.tenant_id;
            self.sas[e.sa_id].queue.push(QueuedSj {
                req_id: e.req_id,
                layer_id: e.layer_id,
                priority: e.priority,
                arrival,
            });
            actions.push(EpochAction {
                req_id: e.req_id,
                tenant_id,
                layer_id: e.layer_id,
                arrival,
                priority: e.priority,
                sa_id: e.sa_id,
            });
            self.event(EventKind::Dispatch, Some(e.req_id), Some(e.layer_id), Some(e.sa_id));
        }
        for sa_id in 0..self.sas.len() {
            self.sas[sa_id].queue.sort_unstable_by(|a, b| {
                b.priority
                    .partial_cmp(&a.priority)
                    .unwrap()
                    .then(a.arrival.cmp(&b.arrival))
                    .then(a.req_id.cmp(&b.req_id))
                    .then(a.layer_id.cmp(&b.layer_id))
            });
            if self.sas[sa_id].running.is_none() {
                if let Some(head) = self.sas[sa_id].queue.first().copied() {
                    self.sas[sa_id].queue.remove(0);
                    self.start_subjob(sa_id, head.req_id, head.layer_id);
                }
            }
        }
        actions.sort_unstable_by_key(|a| (a.req_id, a.layer_id));
        self.epochs_out.push(EpochRecord {
            time: self.now,
            ready_len: self.last_ready.len(),
            actions,
        });
        self.last_ready.clear();
        self.awaiting_assignment = false;
        Ok(())
    }

    /// Consumes the simulation, yielding records and the updated SLA store.
    pub fn finish(mut self) -> (SimResult, SlaBook) {
        self.requests_out.sort_unstable_by_key(|r| r.req_id);
        let completed = self.requests_out.len();
        let hits = self.requests_out.iter().filter(|r| r.hit).count();
        let mean_defer_factor = if self.subjobs_out.is_empty() {
            1.0
        } else {
            self.subjobs_out
                .iter()
                .map(|s| 1.0 + s.defer_count as f64)
                .sum::<f64>()
                / self.subjobs_out.len() as f64
        };
        let totals = Totals {
            completed,
            censored: self.trace_len - completed,
            hits,
            energy_pj: self.energy_pj,
            deferral_events: self.deferral_events,
            mean_defer_factor,
            epochs: self.epochs_out.len(),
        };
        (
            SimResult {
                requests: self.requests_out,
                subjobs: self.subjobs_out,
                epochs: self.epochs_out,
                totals,
                events: self.events_out,
            },
            self.sla,
        )
    }
}

/// Plain (non-training) driver: schedule at every boundary until done.
pub fn run_simulation<S: Scheduler + ?Sized>(
    cfg: SimConfig,
    trace: &RequestTrace,
    profiles: &[ModelProfile],
    scheduler: &mut S,
    sla: SlaBook,
) -> Result<(SimResult, SlaBook), SimError> {
    let mas = cfg.mas.clone();
    let epoch_ts = cfg.epoch_ts;
    let mut sim = Simulation::new(cfg, trace, profiles, sla)?;
    while sim.advance().is_some() {
        let snapshot = sim.snapshot();
        let assignment = {
            let input = SchedulerInput {
                snapshot: &snapshot,
                mas: &mas,
                epoch_ts,
                sla: sim.sla(),
            };
            scheduler.assign(&input)
        };
        sim.apply(&assignment)?;
    }
    Ok(sim.finish())
}

pub fn save_results_json(path: &Path, result: &SimResult) -> Result<(), WorkloadError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, result).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn save_results_csv(path: &Path, result: &SimResult) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in &result.requests {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.req_id,
            r.tenant_id,
            r.model_id,
            r.arrival,
            r.deadline,
            r.finish,
            r.hit as u8,
            r.latency
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_results_csv(path: &Path) -> Result<Vec<RequestRecord>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == RESULTS_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(WorkloadError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("bad header {h:?}"),
            })
        }
        Some((_, Err(e))) => return Err(e.into()),
        None => {
            return Err(WorkloadError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| WorkloadError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", f.len())));
        }
        let hit = match f[6].trim() {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("bad hit flag {other:?}"))),
        };
        rows.push(RequestRecord {
            req_id: f[0].trim().parse().map_err(|e| err(format!("req_id: {e}")))?,
            tenant_id: f[1].trim().parse().map_err(|e| err(format!("tenant_id: {e}")))?,
            model_id: f[2].trim().parse().map_err(|e| err(format!("model_id: {e}")))?,
            arrival: f[3].trim().parse().map_err(|e| err(format!("arrival: {e}")))?,
            deadline: f[4].trim().parse().map_err(|e| err(format!("deadline: {e}")))?,
            finish: f[5].trim().parse().map_err(|e| err(format!("finish: {e}")))?,
            hit,
            latency: f[7].trim().parse().map_err(|e| err(format!("latency: {e}")))?,
        });
    }
    Ok(rows)
}

pub fn save_event_log(path: &Path, result: &SimResult) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{EVENT_HEADER}")?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &result.events {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.time,
            e.kind.token(),
            opt(e.req_id),
            opt(e.layer_id),
            opt(e.sa_id)
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sla::DEFAULT_SLI_WINDOW;
    use crate::workload::{Layer, LayerCost, MkSpec, TenantSpec};

    fn mas2() -> MasConfig {
        MasConfig::with_kinds(&[SaKind::WeightStationary, SaKind::RowStationary], 16.0)
    }

    fn mas1() -> MasConfig {
        MasConfig::with_kinds(&[SaKind::WeightStationary], 16.0)
    }

    /// Chain model; per layer (latency_ws, latency_rs, bandwidth both kinds).
    fn chain_model(model_id: usize, spec: &[(Cycles, Cycles, f64)]) -> ModelProfile {
        let layers = spec
            .iter()
            .enumerate()
            .map(|(i, &(ws, rs, bw))| Layer {
                layer_id: i,
                costs: [
                    LayerCost { latency: ws, energy_pj: 2.0, bandwidth: bw },
                    LayerCost { latency: rs, energy_pj: 3.0, bandwidth: bw },
                ],
                deps: if i == 0 { vec![] } else { vec![i - 1] },
            })
            .collect();
        ModelProfile {
            model_id,
            name: format!("m{model_id}"),
            layers,
        }
    }

    fn tenants_for(n: usize) -> Vec<TenantSpec> {
        (0..n)
            .map(|i| TenantSpec {
                tenant_id: i,
                model_id: 0,
                target_sli: 0.8,
                mk: Some(MkSpec { m: 5, k: 2 }),
                qos_level_weights: [0.0, 1.0, 0.0],
            })
            .collect()
    }

    fn cfg(mas: MasConfig, epoch_ts: Cycles, horizon: Cycles) -> SimConfig {
        SimConfig {
            epoch_ts,
            mas,
            rng_seed: 0,
            horizon,
            contention: true,
            collect_events: true,
        }
    }

    /// FCFS temporal order, first SA always; enough for engine tests.
    fn naive_scheduler(input: &SchedulerInput) -> Assignment {
        let mut order: Vec<&ReadySubJob> = input.snapshot.ready.iter().collect();
        order.sort_by_key(|r| (r.arrival, r.req_id, r.layer_id));
        let n = order.len();
        let entries = order
            .iter()
            .enumerate()
            .map(|(rank, r)| AssignEntry {
                req_id: r.req_id,
                layer_id: r.layer_id,
                priority: 1.0 - rank as f64 / n.max(1) as f64,
                sa_id: 0,
            })
            .collect();
        Assignment { entries }
    }

    fn req(req_id: usize, tenant: usize, arrival: Cycles, deadline: Cycles) -> Request {
        Request {
            req_id,
            tenant_id: tenant,
            model_id: 0,
            arrival,
            qos_level: QosLevel::Medium,
            deadline,
        }
    }

    fn trace_of(requests: Vec<Request>, horizon: Cycles) -> RequestTrace {
        RequestTrace { requests, seed: 0, horizon }
    }

    #[test]
    fn empty_trace_yields_empty_result() {
        let profiles = [chain_model(0, &[(10, 10, 1.0)])];
        let trace = trace_of(vec![], 100);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        let (res, _) = run_simulation(
            cfg(mas1(), 10, 100),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        assert!(res.requests.is_empty());
        assert!(res.subjobs.is_empty());
        assert_eq!(res.totals.energy_pj, 0.0);
        assert_eq!(res.totals.epochs, 0);
    }

    #[test]
    fn single_request_finishes_at_epoch_plus_latency() {
        // Arrival 3 waits for the boundary at 5; latency 10; finish 15.
        let profiles = [chain_model(0, &[(10, 10, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 3, 100)], 1_000);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        let (res, book) = run_simulation(
            cfg(mas1(), 5, 1_000),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        assert_eq!(res.requests.len(), 1);
        let r = &res.requests[0];
        assert_eq!(r.finish, 15.0);
        assert!(r.hit);
        assert_eq!(r.latency, 12.0);
        assert_eq!(res.subjobs[0].start, 5.0);
        assert_eq!(book.get(0, 0).unwrap().cum_hits, 1);
        // The run stops early: only the admitting epoch plus the in-flight
        // boundaries are logged, not every multiple of T_s up to the horizon.
        assert!(res.totals.epochs <= 3);
    }

    #[test]
    fn deterministic_rerun_bit_identical() {
        let profiles = [chain_model(0, &[(40, 60, 9.0), (30, 20, 10.0)])];
        let requests = vec![
            req(0, 0, 1, 250),
            req(1, 1, 4, 200),
            req(2, 0, 22, 300),
            req(3, 1, 25, 260),
        ];
        let run = || {
            let book = SlaBook::from_tenants(&tenants_for(2), DEFAULT_SLI_WINDOW);
            let (res, _) = run_simulation(
                cfg(mas2(), 10, 2_000),
                &trace_of(requests.clone(), 2_000),
                &profiles,
                &mut naive_scheduler,
                book,
            )
            .unwrap();
            res
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn contention_throttles_uniformly() {
        assert_eq!(effective_rates(&[10.0, 10.0], 16.0), vec![0.8, 0.8]);
        assert_eq!(effective_rates(&[4.0, 8.0], 16.0), vec![1.0, 1.0]);
        assert_eq!(effective_rates(&[32.0], 16.0), vec![0.5]);

        // Two single-layer jobs on separate SAs, both bandwidth 10 vs B=16:
        // rate 0.8 each, so 10 nominal cycles stretch to 12.5.
        let profiles = [chain_model(0, &[(10, 10, 10.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 100), req(1, 1, 2, 100)], 1_000);
        let book = SlaBook::from_tenants(&tenants_for(2), DEFAULT_SLI_WINDOW);
        let mut spread = |input: &SchedulerInput| {
            let mut a = naive_scheduler(input);
            for (i, e) in a.entries.iter_mut().enumerate() {
                e.sa_id = i % 2;
            }
            a
        };
        let (res, _) = run_simulation(
            cfg(mas2(), 10, 1_000),
            &trace,
            &profiles,
            &mut spread,
            book,
        )
        .unwrap();
        assert_eq!(res.requests.len(), 2);
        for r in &res.requests {
            assert!((r.finish - 22.5).abs() < 1e-9, "finish {}", r.finish);
        }
    }

    #[test]
    fn contention_rate_changes_at_event_boundaries() {
        // A: 20 nominal cycles at bandwidth 12; B: 10 at 10. Together the
        // demand is 22 > 16, rate 16/22 = 8/11. B finishes after
        // 10/(8/11) = 13.75; A has 10 nominal left, then runs alone at 1.0.
        let a_model = chain_model(0, &[(20, 20, 12.0)]);
        let b_model = chain_model(1, &[(10, 10, 10.0)]);
        let profiles = [a_model, b_model];
        let mut requests = vec![req(0, 0, 1, 200), req(1, 1, 2, 200)];
        requests[1].model_id = 1;
        let mut tenants = tenants_for(2);
        tenants[1].model_id = 1;
        let book = SlaBook::from_tenants(&tenants, DEFAULT_SLI_WINDOW);
        let mut spread = |input: &SchedulerInput| {
            let mut a = naive_scheduler(input);
            for (i, e) in a.entries.iter_mut().enumerate() {
                e.sa_id = i % 2;
            }
            a
        };
        let (res, _) = run_simulation(
            cfg(mas2(), 10, 1_000),
            &trace_of(requests, 1_000),
            &profiles,
            &mut spread,
            book,
        )
        .unwrap();
        let f: BTreeMap<usize, f64> = res.requests.iter().map(|r| (r.req_id, r.finish)).collect();
        assert!((f[&1] - 23.75).abs() < 1e-9, "B finish {}", f[&1]);
        assert!((f[&0] - 33.75).abs() < 1e-9, "A finish {}", f[&0]);
    }

    #[test]
    fn deferral_pulls_back_queued_subjob() {
        // One SA, latency 25 >> T_s 10: the second job queues, is pulled
        // back at the next boundary, and eventually runs with defer_count 2.
        let profiles = [chain_model(0, &[(25, 25, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 500), req(1, 1, 2, 500)], 1_000);
        let book = SlaBook::from_tenants(&tenants_for(2), DEFAULT_SLI_WINDOW);
        let (res, _) = run_simulation(
            cfg(mas1(), 10, 1_000),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        assert_eq!(res.requests.len(), 2);
        let second = res.subjobs.iter().find(|s| s.req_id == 1).unwrap();
        // Job 0 runs [10,35); boundaries at 20 and 30 pull job 1 back.
        assert_eq!(second.defer_count, 2);
        assert_eq!(res.totals.deferral_events, 2);
        assert!((res.totals.mean_defer_factor - 2.0).abs() < 1e-12);
        assert!((second.start - 35.0).abs() < 1e-9);
    }

    #[test]
    fn diamond_dag_runs_branches_in_parallel() {
        // 0 -> {1,2} -> 3; branches run on both SAs in the same epoch.
        let mut profile = chain_model(0, &[(10, 10, 1.0); 4]);
        profile.layers[1].deps = vec![0];
        profile.layers[2].deps = vec![0];
        profile.layers[3].deps = vec![1, 2];
        profile.layers[2].costs[0].latency = 20;
        profile.layers[2].costs[1].latency = 20;
        let profiles = [profile];
        let trace = trace_of(vec![req(0, 0, 1, 500)], 1_000);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        let mut fanout = |input: &SchedulerInput| {
            let mut a = naive_scheduler(input);
            for (i, e) in a.entries.iter_mut().enumerate() {
                e.sa_id = i % 2;
            }
            a
        };
        let (res, _) = run_simulation(
            cfg(mas2(), 10, 1_000),
            &trace_of(trace.requests.clone(), 1_000),
            &profiles,
            &mut fanout,
            book,
        )
        .unwrap();
        let by_layer: BTreeMap<usize, &SubJobRecord> =
            res.subjobs.iter().map(|s| (s.layer_id, s)).collect();
        // Layers 1 and 2 share a start epoch; layer 3 waits for both.
        assert_eq!(by_layer[&1].start, by_layer[&2].start);
        let branches_done = by_layer[&1].finish.max(by_layer[&2].finish);
        assert!(by_layer[&3].start >= branches_done - 1e-9);
        // Dependency order holds for every edge.
        for (u, v) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            assert!(by_layer[&u].finish <= by_layer[&v].start + 1e-9);
        }
    }

    #[test]
    fn snapshot_reports_nominal_remaining() {
        // Bandwidth 32 on B=16 throttles to rate 0.5. After one 10-cycle
        // epoch the running layer has progressed 5 nominal cycles: the
        // snapshot must say 95, not the 190 wall-clock cycles left.
        let profiles = [chain_model(0, &[(100, 100, 32.0), (10, 10, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 1_000)], 2_000);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        let cfg = SimConfig {
            epoch_ts: 10,
            mas: MasConfig {
                sas: mas1().sas,
                total_bandwidth: 16.0,
            },
            rng_seed: 0,
            horizon: 2_000,
            contention: true,
            collect_events: false,
        };
        let mut sim = Simulation::new(cfg, &trace, &profiles, book).unwrap();
        let t0 = sim.advance().unwrap();
        assert_eq!(t0, 10.0);
        let snap = sim.snapshot();
        assert!(!snap.sas[0].busy);
        assert_eq!(snap.sas[0].occupied_cycles, 0.0);
        assert_eq!(snap.ready.len(), 1);
        assert_eq!(snap.ready[0].remaining_min_work, 110);
        sim.apply(&naive_scheduler(&SchedulerInput {
            snapshot: &snap,
            mas: sim.mas(),
            epoch_ts: 10,
            sla: sim.sla(),
        }))
        .unwrap();
        let t1 = sim.advance().unwrap();
        assert_eq!(t1, 20.0);
        let snap = sim.snapshot();
        assert!(snap.sas[0].busy);
        assert!((snap.sas[0].occupied_cycles - 95.0).abs() < 1e-9);
    }

    #[test]
    fn scheduler_contract_is_enforced() {
        let profiles = [chain_model(0, &[(10, 10, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 100)], 1_000);
        let drive = |assignment: Assignment| {
            let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
            let mut sched = move |_: &SchedulerInput| assignment.clone();
            run_simulation(cfg(mas1(), 10, 1_000), &trace, &profiles, &mut sched, book)
                .map(|_| ())
        };
        // Missing entry.
        assert!(matches!(
            drive(Assignment::default()),
            Err(SimError::SchedulerContract(_))
        ));
        // Unknown sub-job.
        assert!(matches!(
            drive(Assignment {
                entries: vec![AssignEntry { req_id: 9, layer_id: 0, priority: 1.0, sa_id: 0 }],
            }),
            Err(SimError::SchedulerContract(_))
        ));
        // SA out of range.
        assert!(matches!(
            drive(Assignment {
                entries: vec![AssignEntry { req_id: 0, layer_id: 0, priority: 1.0, sa_id: 5 }],
            }),
            Err(SimError::SchedulerContract(_))
        ));
        // Priority outside [0,1].
        assert!(matches!(
            drive(Assignment {
                entries: vec![AssignEntry { req_id: 0, layer_id: 0, priority: 1.5, sa_id: 0 }],
            }),
            Err(SimError::SchedulerContract(_))
        ));
    }

    #[test]
    fn unknown_model_rejected_up_front() {
        let profiles = [chain_model(0, &[(10, 10, 1.0)])];
        let mut r = req(0, 0, 1, 100);
        r.model_id = 7;
        let trace = trace_of(vec![r], 1_000);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        match Simulation::new(cfg(mas1(), 10, 1_000), &trace, &profiles, book) {
            Err(SimError::InconsistentTrace { req_id: 0, model_id: 7 }) => {}
            Err(other) => panic!("expected InconsistentTrace, got {other:?}"),
            Ok(_) => panic!("expected InconsistentTrace, got Ok"),
        }
    }

    #[test]
    fn horizon_censors_unfinished_requests() {
        let profiles = [chain_model(0, &[(500, 500, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 2_000), req(1, 1, 3, 2_000)], 10_000);
        let book = SlaBook::from_tenants(&tenants_for(2), DEFAULT_SLI_WINDOW);
        // Horizon 100 cuts the first job mid-flight; the second never starts.
        let (res, book) = run_simulation(
            cfg(mas1(), 10, 100),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        assert_eq!(res.requests.len(), 0);
        assert_eq!(res.totals.censored, 2);
        assert_eq!(book.get(0, 0).unwrap().cum_total, 0);
    }

    #[test]
    fn idle_gaps_are_skipped() {
        // Arrival at 1000 with T_s=10: no epoch is logged before 1000.
        let profiles = [chain_model(0, &[(10, 10, 1.0)])];
        let trace = trace_of(vec![req(0, 0, 1_000, 2_000)], 10_000);
        let book = SlaBook::from_tenants(&tenants_for(1), DEFAULT_SLI_WINDOW);
        let (res, _) = run_simulation(
            cfg(mas1(), 10, 10_000),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        assert_eq!(res.epochs[0].time, 1_000.0);
        assert_eq!(res.requests[0].finish, 1_010.0);
        assert!(res.totals.epochs <= 2);
    }

    #[test]
    fn per_sa_intervals_never_overlap() {
        let profiles = [
            chain_model(0, &[(40, 60, 9.0), (30, 20, 10.0)]),
            chain_model(1, &[(15, 25, 12.0)]),
        ];
        let mut requests: Vec<Request> = (0..12)
            .map(|i| {
                let mut r = req(i, i % 3, 1 + 7 * i as Cycles, 400 + 7 * i as Cycles);
                r.model_id = i % 2;
                r
            })
            .collect();
        requests.sort_by_key(|r| r.arrival);
        for (i, r) in requests.iter_mut().enumerate() {
            r.req_id = i;
        }
        let mut tenants = tenants_for(3);
        for (i, t) in tenants.iter_mut().enumerate() {
            t.model_id = i % 2;
        }
        // Tenant/model pairs seen in the trace must exist in the book.
        let mut pairs: Vec<TenantSpec> = Vec::new();
        for r in &requests {
            if !pairs
                .iter()
                .any(|t| t.tenant_id == r.tenant_id && t.model_id == r.model_id)
            {
                pairs.push(TenantSpec {
                    tenant_id: r.tenant_id,
                    model_id: r.model_id,
                    target_sli: 0.8,
                    mk: None,
                    qos_level_weights: [0.0, 1.0, 0.0],
                });
            }
        }
        let book = SlaBook::from_tenants(&pairs, DEFAULT_SLI_WINDOW);
        let mut alternate = |input: &SchedulerInput| {
            let mut a = naive_scheduler(input);
            for (i, e) in a.entries.iter_mut().enumerate() {
                e.sa_id = (e.req_id + i) % 2;
            }
            a
        };
        let (res, _) = run_simulation(
            cfg(mas2(), 10, 100_000),
            &trace_of(requests, 100_000),
            &profiles,
            &mut alternate,
            book,
        )
        .unwrap();
        assert_eq!(res.totals.censored, 0);
        for sa_id in 0..2 {
            let mut intervals: Vec<(f64, f64)> = res
                .subjobs
                .iter()
                .filter(|s| s.sa_id == sa_id)
                .map(|s| (s.start, s.finish))
                .collect();
            intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in intervals.windows(2) {
                assert!(w[0].1 <= w[1].0 + 1e-9, "overlap on SA {sa_id}: {w:?}");
            }
        }
        // Energy totals match the per-record recomputation.
        let recomputed = total_energy(&res, &profiles);
        assert!((recomputed - res.totals.energy_pj).abs() < 1e-9);
    }

    #[test]
    fn results_csv_round_trip() {
        let profiles = [chain_model(0, &[(40, 60, 9.0), (30, 20, 10.0)])];
        let trace = trace_of(vec![req(0, 0, 1, 250), req(1, 1, 4, 100)], 2_000);
        let book = SlaBook::from_tenants(&tenants_for(2), DEFAULT_SLI_WINDOW);
        let (res, _) = run_simulation(
            cfg(mas1(), 10, 2_000),
            &trace,
            &profiles,
            &mut naive_scheduler,
            book,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("results.csv");
        save_results_csv(&csv, &res).unwrap();
        assert_eq!(load_results_csv(&csv).unwrap(), res.requests);
        let json = dir.path().join("results.json");
        save_results_json(&json, &res).unwrap();
        let text = std::fs::read_to_string(&json).unwrap();
        assert!(text.contains("\"requests\""));
        let log = dir.path().join("events.csv");
        save_event_log(&log, &res).unwrap();
        let text = std::fs::read_to_string(&log).unwrap();
        assert!(text.starts_with(EVENT_HEADER));
        assert!(text.lines().count() > 4);
    }
}
