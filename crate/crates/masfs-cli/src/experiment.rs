//! Experiment assembly and execution: resolves a RawConfig into concrete
//! workloads, runs replications (optionally in parallel), and writes the
//! artifact set each subcommand promises.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use masfs_core::rlpolicy::{
    load_checkpoint, save_checkpoint, save_learning_curve, train_policy, EncoderConfig,
    PolicyError, PolicyScheduler, TrainConfig, TrainEnv,
};
use masfs_core::schedulers::{EdfH, FcfsH, HeraldLb, PremaH, Scheduler, SchedulerInput, PREMA_DEFAULT_THETA};
use masfs_core::simcore::{
    run_simulation, save_event_log, save_results_csv, save_results_json, Assignment, SimConfig,
    SimError, SimResult,
};
use masfs_core::sla::{
    aggregate_metrics, save_box_csv, save_sla_store, save_swarm_csv, save_swarm_csv_by_scheduler,
    MetricsReport, RewardMode, SlaBook, SlaError, DEFAULT_LAMBDA, DEFAULT_SLI_WINDOW,
};
use masfs_core::workload::{
    assign_targets_zipf, generate_synthetic_cost_table, generate_trace, isolated_latency,
    load_cost_table, load_tenants, load_trace, save_cost_table, save_tenants, save_trace, Cycles,
    MasConfig, MkSpec, ModelProfile, RequestTrace, SaKind, TenantSpec, WorkloadError,
    DEFAULT_BANDWIDTH,
};

use crate::config::{ConfigError, RawConfig};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e)
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<SlaError> for CliError {
    fn from(e: SlaError) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid { key: key.to_string(), msg: msg.into() })
}

/// Values from the global CLI flags that trump the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    /// Replaces `sim.seed` and `trace.seed`.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct TraceGenSpec {
    pub horizon: Cycles,
    pub alpha: f64,
    pub xmin: f64,
    pub medium_factor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum TraceSource {
    Path(PathBuf),
    Gen(TraceGenSpec),
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub mas: MasConfig,
    pub profiles: Vec<ModelProfile>,
    pub tenants: Vec<TenantSpec>,
    pub trace: TraceSource,
    pub scheduler: Option<String>,
    pub prema_theta: f64,
    pub checkpoint: Option<PathBuf>,
    pub epoch_ts: Cycles,
    pub sim_horizon: Option<Cycles>,
    pub sim_seed: u64,
    pub contention: bool,
    pub collect_events: bool,
    pub sli_window: usize,
    pub lambda: f64,
    pub replications: usize,
    pub energy_per_mac: f64,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub train_mode: RewardMode,
    pub quiet: bool,
    /// Set when the cost table was generated rather than loaded; gen-trace
    /// and gen-costs persist generated inputs alongside their outputs.
    pub costs_generated: bool,
    pub tenants_generated: bool,
}

impl Experiment {
    pub fn load(cfg_path: &Path, over: &Overrides) -> Result<Experiment, CliError> {
        let mut raw = RawConfig::from_file(cfg_path)?;

        let mas = read_mas(&mut raw)?;
        let (profiles, costs_generated) = read_costs(&mut raw, &mas)?;
        let (tenants, tenants_generated) = read_tenants(&mut raw, &profiles)?;
        let trace = read_trace_source(&mut raw, over)?;

        let default_ts = default_epoch_ts(&profiles);
        let epoch_ts = raw.get_or("sim.epoch_ts", default_ts)?;
        if epoch_ts == 0 {
            return Err(invalid("sim.epoch_ts", "must be positive"));
        }
        let sim_horizon = raw.opt::<Cycles>("sim.horizon")?;
        let sim_seed = over.seed.map(Ok).unwrap_or_else(|| raw.get_or("sim.seed", 0))?;
        if over.seed.is_some() {
            // Consume the key so finish() does not flag it as unknown.
            let _ = raw.opt::<u64>("sim.seed")?;
        }
        let contention = raw.opt_bool("sim.contention")?.unwrap_or(true);
        let collect_events = raw.opt_bool("sim.events")?.unwrap_or(false);

        let scheduler = raw.opt_str("scheduler");
        if let Some(name) = &scheduler {
            if !KNOWN_SCHEDULERS.contains(&name.as_str()) {
                return Err(invalid(
                    "scheduler",
                    format!("unknown scheduler {name:?}; expected one of {KNOWN_SCHEDULERS:?}"),
                ));
            }
        }
        let prema_theta = raw.get_or("prema.theta", PREMA_DEFAULT_THETA)?;
        let checkpoint = raw.opt_path("checkpoint");

        let sli_window = raw.get_or("sla.window", DEFAULT_SLI_WINDOW)?;
        if sli_window == 0 {
            return Err(invalid("sla.window", "must be positive"));
        }
        let lambda = raw.get_or("sla.lambda", DEFAULT_LAMBDA)?;

        let replications = raw.get_or("replications", 1usize)?;
        if replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if replications > 1 && matches!(trace, TraceSource::Path(_)) {
            return Err(CliError::Config(ConfigError::Conflict(
                "replications > 1 needs a generated trace (drop `trace.path`)".into(),
            )));
        }
        let energy_per_mac = raw.get_or("energy_per_mac", 1.0f64)?;
        if energy_per_mac < 0.0 {
            return Err(invalid("energy_per_mac", "must be nonnegative"));
        }

        let out_dir = over
            .out
            .clone()
            .or_else(|| raw.opt_path("out"))
            .unwrap_or_else(|| PathBuf::from("out"));
        if over.out.is_some() {
            let _ = raw.opt_str("out");
        }

        let train = read_train(&mut raw, over)?;
        let train_mode = match raw.opt_str("train.mode").as_deref() {
            None | Some("sla") => RewardMode::SlaAware,
            Some("baseline") => RewardMode::Baseline,
            Some(v) => {
                return Err(invalid("train.mode", format!("expected sla or baseline, got {v:?}")))
            }
        };

        raw.finish()?;

        Ok(Experiment {
            mas,
            profiles,
            tenants,
            trace,
            scheduler,
            prema_theta,
            checkpoint,
            epoch_ts,
            sim_horizon,
            sim_seed,
            contention,
            collect_events,
            sli_window,
            lambda,
            replications,
            energy_per_mac,
            out_dir,
            train,
            train_mode,
            quiet: over.quiet,
            costs_generated,
            tenants_generated,
        })
    }

    /// Trace for one replication; generated traces step their seed by the
    /// replication index.
    pub fn resolve_trace(&self, rep: usize) -> Result<RequestTrace, CliError> {
        match &self.trace {
            TraceSource::Path(path) => {
                let requests = load_trace(path)?;
                for r in &requests {
                    if r.tenant_id >= self.tenants.len() || r.model_id >= self.profiles.len() {
                        return Err(CliError::Runtime(format!(
                            "trace request {} references tenant {} / model {} outside this config",
                            r.req_id, r.tenant_id, r.model_id
                        )));
                    }
                }
                let horizon = self
                    .sim_horizon
                    .or_else(|| requests.iter().map(|r| r.deadline).max())
                    .unwrap_or(0);
                Ok(RequestTrace { requests, seed: 0, horizon })
            }
            TraceSource::Gen(spec) => {
                let trace = generate_trace(
                    spec.seed.wrapping_add(rep as u64),
                    &self.tenants,
                    &self.profiles,
                    spec.horizon,
                    (spec.alpha, spec.xmin),
                    spec.medium_factor,
                );
                Ok(trace)
            }
        }
    }

    pub fn sim_config(&self, trace: &RequestTrace, rep: usize) -> SimConfig {
        SimConfig {
            epoch_ts: self.epoch_ts,
            mas: self.mas.clone(),
            rng_seed: self.sim_seed.wrapping_add(rep as u64),
            horizon: self.sim_horizon.unwrap_or(trace.horizon),
            contention: self.contention,
            collect_events: self.collect_events,
        }
    }

    pub fn require_scheduler(&self) -> Result<String, CliError> {
        self.scheduler
            .clone()
            .ok_or(CliError::Config(ConfigError::Missing("scheduler".into())))
    }

    pub fn train_env(&self) -> Result<TrainEnv<'_>, CliError> {
        let TraceSource::Gen(spec) = &self.trace else {
            return Err(CliError::Config(ConfigError::Conflict(
                "training regenerates traces per episode; use a trace generation spec, not `trace.path`".into(),
            )));
        };
        let sim = SimConfig {
            epoch_ts: self.epoch_ts,
            mas: self.mas.clone(),
            rng_seed: self.sim_seed,
            horizon: self.sim_horizon.unwrap_or(spec.horizon),
            contention: self.contention,
            collect_events: false,
        };
        let mut env = TrainEnv::new(
            &self.profiles,
            &self.tenants,
            sim,
            (spec.alpha, spec.xmin),
            spec.medium_factor,
            spec.seed,
        );
        env.sli_window = self.sli_window;
        Ok(env)
    }
}

pub const KNOWN_SCHEDULERS: [&str; 6] =
    ["fcfs-h", "edf-h", "herald", "prema-h", "rl-baseline", "rl-sla"];

fn read_mas(raw: &mut RawConfig) -> Result<MasConfig, CliError> {
    let kinds = match raw.opt_list("mas.sas") {
        None => vec![SaKind::WeightStationary, SaKind::RowStationary],
        Some(tokens) => tokens
            .iter()
            .map(|t| {
                SaKind::parse(t).ok_or_else(|| {
                    invalid("mas.sas", format!("unknown SA kind {t:?} (expected ws or rs)"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let bandwidth = raw.get_or("mas.bandwidth", DEFAULT_BANDWIDTH)?;
    let mas = MasConfig::with_kinds(&kinds, bandwidth);
    mas.validate().map_err(|e| invalid("mas.bandwidth", e.to_string()))?;
    Ok(mas)
}

fn read_costs(raw: &mut RawConfig, mas: &MasConfig) -> Result<(Vec<ModelProfile>, bool), CliError> {
    let path = raw.opt_path("costs.path");
    let n_models = raw.opt::<usize>("costs.models")?;
    match (path, n_models) {
        (Some(_), Some(_)) => Err(CliError::Config(ConfigError::Conflict(
            "set exactly one of `costs.path` and `costs.models`".into(),
        ))),
        (None, None) => Err(CliError::Config(ConfigError::Missing("costs.path".into()))),
        (Some(p), None) => Ok((load_cost_table(&p, mas)?, false)),
        (None, Some(n)) => {
            if n == 0 {
                return Err(invalid("costs.models", "must be at least 1"));
            }
            let lo = raw.get_or("costs.layers_min", 3usize)?;
            let hi = raw.get_or("costs.layers_max", 6usize)?;
            if lo == 0 || hi < lo {
                return Err(invalid("costs.layers_max", "need 1 <= layers_min <= layers_max"));
            }
            let spread = raw.get_or("costs.spread", 5.0f64)?;
            if spread <= 1.0 {
                return Err(invalid("costs.spread", "must exceed 1.0"));
            }
            let seed = raw.get_or("costs.seed", 1u64)?;
            Ok((generate_synthetic_cost_table(seed, n, lo..=hi, spread), true))
        }
    }
}

fn read_tenants(
    raw: &mut RawConfig,
    profiles: &[ModelProfile],
) -> Result<(Vec<TenantSpec>, bool), CliError> {
    let path = raw.opt_path("tenants.path");
    let count = raw.opt::<usize>("tenants.count")?;
    let (tenants, generated) = match (path, count) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(ConfigError::Conflict(
                "set exactly one of `tenants.path` and `tenants.count`".into(),
            )))
        }
        (None, None) => return Err(CliError::Config(ConfigError::Missing("tenants.path".into()))),
        (Some(p), None) => (load_tenants(&p)?, false),
        (None, Some(n)) => {
            if n == 0 {
                return Err(invalid("tenants.count", "must be at least 1"));
            }
            let seed = raw.get_or("tenants.seed", 2u64)?;
            let qos = match raw.opt_f64_list("tenants.qos")? {
                None => [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
                Some(v) => {
                    return Err(invalid(
                        "tenants.qos",
                        format!("expected 3 weights (low,med,high), got {}", v.len()),
                    ))
                }
            };
            let mk = match (raw.opt::<usize>("tenants.m")?, raw.opt::<usize>("tenants.k")?) {
                (None, None) => None,
                (Some(m), Some(k)) => Some(MkSpec { m, k }),
                _ => {
                    return Err(CliError::Config(ConfigError::Conflict(
                        "`tenants.m` and `tenants.k` come together".into(),
                    )))
                }
            };
            let uniform_target = raw.opt::<f64>("tenants.target")?;
            let targets = raw.opt_f64_list("tenants.targets")?;
            let zipf_s = raw.get_or("tenants.zipf_s", 1.0f64)?;
            let base: Vec<TenantSpec> = (0..n)
                .map(|i| TenantSpec {
                    tenant_id: i,
                    model_id: i % profiles.len(),
                    target_sli: uniform_target.unwrap_or(0.8),
                    mk,
                    qos_level_weights: qos,
                })
                .collect();
            let tenants = match (targets, uniform_target) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(ConfigError::Conflict(
                        "set at most one of `tenants.target` and `tenants.targets`".into(),
                    )))
                }
                (Some(ts), None) => {
                    if ts.is_empty() {
                        return Err(invalid("tenants.targets", "needs at least one target"));
                    }
                    assign_targets_zipf(seed, base, &ts, zipf_s)
                }
                _ => base,
            };
            (tenants, true)
        }
    };
    for t in &tenants {
        t.validate()?;
        if t.model_id >= profiles.len() {
            return Err(CliError::Runtime(format!(
                "tenant {} references model {} but the cost table has {} models",
                t.tenant_id,
                t.model_id,
                profiles.len()
            )));
        }
    }
    Ok((tenants, generated))
}

fn read_trace_source(raw: &mut RawConfig, over: &Overrides) -> Result<TraceSource, CliError> {
    let path = raw.opt_path("trace.path");
    let horizon = raw.opt::<Cycles>("trace.horizon")?;
    match (path, horizon) {
        (Some(_), Some(_)) => Err(CliError::Config(ConfigError::Conflict(
            "set exactly one of `trace.path` and `trace.horizon`".into(),
        ))),
        (None, None) => Err(CliError::Config(ConfigError::Missing("trace.path".into()))),
        (Some(p), None) => Ok(TraceSource::Path(p)),
        (None, Some(h)) => {
            if h == 0 {
                return Err(invalid("trace.horizon", "must be positive"));
            }
            let alpha = raw.get_or("trace.alpha", 2.5f64)?;
            let xmin = raw.get_or("trace.xmin", 50.0f64)?;
            if alpha <= 1.0 || xmin <= 0.0 {
                return Err(invalid("trace.alpha", "need alpha > 1 and xmin > 0"));
            }
            let medium_factor = raw.get_or("trace.medium_factor", 2.0f64)?;
            if medium_factor <= 0.0 {
                return Err(invalid("trace.medium_factor", "must be positive"));
            }
            let seed = over.seed.map(Ok).unwrap_or_else(|| raw.get_or("trace.seed", 3))?;
            if over.seed.is_some() {
                let _ = raw.opt::<u64>("trace.seed")?;
            }
            Ok(TraceSource::Gen(TraceGenSpec { horizon: h, alpha, xmin, medium_factor, seed }))
        }
    }
}

fn read_train(raw: &mut RawConfig, over: &Overrides) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        episodes: raw.get_or("train.episodes", d.episodes)?,
        gamma: raw.get_or("train.gamma", d.gamma)?,
        tau: raw.get_or("train.tau", d.tau)?,
        actor_lr: raw.get_or("train.actor_lr", d.actor_lr)?,
        critic_lr: raw.get_or("train.critic_lr", d.critic_lr)?,
        sigma0: raw.get_or("train.sigma0", d.sigma0)?,
        sigma_decay: raw.get_or("train.sigma_decay", d.sigma_decay)?,
        batch_size: raw.get_or("train.batch", d.batch_size)?,
        buffer_capacity: raw.get_or("train.buffer", d.buffer_capacity)?,
        bptt: raw.get_or("train.bptt", d.bptt)?,
        n_h: raw.get_or("train.n_h", d.n_h)?,
        seed: over.seed.map(Ok).unwrap_or_else(|| raw.get_or("train.seed", d.seed))?,
        lambda: raw.get_or("sla.lambda", DEFAULT_LAMBDA)?,
        checkpoint_every: raw.get_or("train.checkpoint_every", d.checkpoint_every)?,
    };
    if over.seed.is_some() {
        let _ = raw.opt::<u64>("train.seed")?;
    }
    cfg.validate().map_err(|msg| invalid("train.gamma", msg))?;
    Ok(cfg)
}

/// T_s default: a tenth of the median isolated latency, at least 1 cycle.
pub fn default_epoch_ts(profiles: &[ModelProfile]) -> Cycles {
    let mut iso: Vec<Cycles> = profiles.iter().map(isolated_latency).collect();
    if iso.is_empty() {
        return 1;
    }
    iso.sort_unstable();
    (iso[iso.len() / 2] / 10).max(1)
}

/// One scheduler instance by config name. RL names load the checkpoint and
/// cross-check its dimensions against this run's cost table and MAS.
pub enum NamedScheduler {
    Fcfs(FcfsH),
    Edf(EdfH),
    Herald(HeraldLb),
    Prema(PremaH),
    Policy(Box<PolicyScheduler>),
}

impl NamedScheduler {
    pub fn build(
        name: &str,
        theta: f64,
        checkpoint: Option<&Path>,
        profiles: &[ModelProfile],
        mas: &MasConfig,
    ) -> Result<NamedScheduler, CliError> {
        match name {
            "fcfs-h" => Ok(NamedScheduler::Fcfs(FcfsH)),
            "edf-h" => Ok(NamedScheduler::Edf(EdfH)),
            "herald" => Ok(NamedScheduler::Herald(HeraldLb)),
            "prema-h" => Ok(NamedScheduler::Prema(PremaH { theta })),
            "rl-baseline" | "rl-sla" => {
                let want = if name == "rl-sla" { RewardMode::SlaAware } else { RewardMode::Baseline };
                let path = checkpoint.ok_or(CliError::Config(ConfigError::Missing(
                    "checkpoint".into(),
                )))?;
                let (actor, _, meta) = load_checkpoint(path)?;
                let got = meta.mode()?;
                if got != want {
                    return Err(CliError::Runtime(format!(
                        "{} asked for but checkpoint {} was trained in {:?} mode",
                        name,
                        path.display(),
                        got
                    )));
                }
                let enc = EncoderConfig::from_profiles(profiles, mas, want);
                meta.expect_encoder(&enc)?;
                Ok(NamedScheduler::Policy(Box::new(PolicyScheduler::new(actor, enc))))
            }
            other => Err(invalid("scheduler", format!("unknown scheduler {other:?}"))),
        }
    }

    pub fn mac_count(&self) -> u64 {
        match self {
            NamedScheduler::Policy(p) => p.mac_count(),
            _ => 0,
        }
    }
}

impl Scheduler for NamedScheduler {
    fn assign(&mut self, input: &SchedulerInput) -> Assignment {
        match self {
            NamedScheduler::Fcfs(s) => s.assign(input),
            NamedScheduler::Edf(s) => s.assign(input),
            NamedScheduler::Herald(s) => s.assign(input),
            NamedScheduler::Prema(s) => s.assign(input),
            NamedScheduler::Policy(s) => s.assign(input),
        }
    }
}

/// The 0.39%-style statistic: policy compute as a fraction of workload
/// energy. Heuristics spend no policy MACs, so their overhead is exactly 0.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub workload_energy_pj: f64,
    pub scheduler_energy_pj: f64,
    pub overhead: f64,
    pub mean_defer_factor: f64,
    pub mac_count: u64,
}

pub fn energy_overhead(result: &SimResult, mac_count: u64, energy_per_mac: f64) -> EnergyReport {
    let workload = result.totals.energy_pj;
    let scheduler = mac_count as f64 * energy_per_mac;
    EnergyReport {
        workload_energy_pj: workload,
        scheduler_energy_pj: scheduler,
        overhead: if workload > 0.0 { scheduler / workload } else { 0.0 },
        mean_defer_factor: result.totals.mean_defer_factor,
        mac_count,
    }
}

/// SHA-256 over the canonical JSON of the requests; used to assert that
/// every scheduler in a comparison consumed the same workload.
pub fn trace_digest(trace: &RequestTrace) -> String {
    let bytes = serde_json::to_vec(&trace.requests).expect("requests serialize");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `f` over `items` on up to `threads` workers, preserving order.
/// Errors surface after all workers finish.
pub fn parallel_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Sync,
{
    let n = items.len();
    let threads = threads.clamp(1, n.max(1));
    if threads <= 1 {
        return items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = slots[i].lock().unwrap().take().expect("item taken once");
                let r = f(i, item);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

/// MASFS_THREADS caps worker count; default is the machine parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("MASFS_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

pub struct RepOutput {
    pub rep: usize,
    pub result: SimResult,
    pub book: SlaBook,
    pub metrics: MetricsReport,
    pub energy: EnergyReport,
    pub trace_sha256: String,
}

/// One full simulation of `exp` with the named scheduler on `trace`.
pub fn run_rep(
    exp: &Experiment,
    name: &str,
    trace: &RequestTrace,
    rep: usize,
) -> Result<RepOutput, CliError> {
    let mut sched = NamedScheduler::build(
        name,
        exp.prema_theta,
        exp.checkpoint.as_deref(),
        &exp.profiles,
        &exp.mas,
    )?;
    let book = SlaBook::from_tenants(&exp.tenants, exp.sli_window);
    let cfg = exp.sim_config(trace, rep);
    let (result, book) = run_simulation(cfg, trace, &exp.profiles, &mut sched, book)?;
    let metrics = aggregate_metrics(&book)?;
    let energy = energy_overhead(&result, sched.mac_count(), exp.energy_per_mac);
    Ok(RepOutput { rep, result, book, metrics, energy, trace_sha256: trace_digest(trace) })
}

fn suffix(rep: usize) -> String {
    if rep == 0 {
        String::new()
    } else {
        format!("_r{rep}")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    use std::io::Write;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_rep_artifacts(exp: &Experiment, out: &RepOutput) -> Result<(), CliError> {
    let dir = &exp.out_dir;
    let suf = suffix(out.rep);
    save_results_json(&dir.join(format!("results{suf}.json")), &out.result)?;
    save_results_csv(&dir.join(format!("results{suf}.csv")), &out.result)?;
    write_json(&dir.join(format!("metrics{suf}.json")), &out.metrics)?;
    save_swarm_csv(&dir.join(format!("swarm{suf}.csv")), &out.metrics)?;
    save_sla_store(&dir.join(format!("sla_store{suf}.csv")), &out.book)?;
    write_json(&dir.join(format!("energy{suf}.json")), &out.energy)?;
    if exp.collect_events {
        save_event_log(&dir.join(format!("events{suf}.csv")), &out.result)?;
    }
    Ok(())
}

fn rep_summary(name: &str, out: &RepOutput) -> String {
    format!(
        "rep {} [{}]: completed={} censored={} hit_rate={:.4} sla_met={:.4} std={:.4}",
        out.rep,
        name,
        out.result.totals.completed,
        out.result.totals.censored,
        out.metrics.overall_hit_rate,
        out.metrics.sla_met_fraction,
        out.metrics.std,
    )
}

/// `simulate` and `evaluate`: N replications of one scheduler.
pub fn cmd_simulate(exp: &Experiment, name: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(&exp.out_dir)?;
    let traces = (0..exp.replications)
        .map(|rep| exp.resolve_trace(rep))
        .collect::<Result<Vec<_>, _>>()?;
    let outs = parallel_map(traces, thread_cap(), |rep, trace| {
        run_rep(exp, name, &trace, rep)
    });
    for out in outs {
        let out = out?;
        write_rep_artifacts(exp, &out)?;
        if !exp.quiet {
            println!("{}", rep_summary(name, &out));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonEntry {
    scheduler: String,
    overall_hit_rate: f64,
    sla_met_fraction: f64,
    mean: f64,
    std: f64,
    mean_shortfall: f64,
    mk_violation_total: u64,
    mac_count: u64,
    overhead: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonDoc {
    trace_sha256: String,
    epoch_ts: Cycles,
    schedulers: Vec<ComparisonEntry>,
}

/// `compare`: one shared trace, one run per scheduler name, plot CSVs plus
/// a JSON summary. Every run re-hashes the trace it consumed and the hashes
/// must agree.
pub fn cmd_compare(exp: &Experiment, names: &[String]) -> Result<(), CliError> {
    if names.is_empty() {
        return Err(CliError::Config(ConfigError::Missing("schedulers".into())));
    }
    std::fs::create_dir_all(&exp.out_dir)?;
    let trace = exp.resolve_trace(0)?;
    let runs = parallel_map(names.to_vec(), thread_cap(), |_, name| {
        run_rep(exp, &name, &trace, 0).map(|out| (name, out))
    });

    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut entries = Vec::new();
    let mut sha: Option<String> = None;
    for run in runs {
        let (name, out) = run?;
        match &sha {
            None => sha = Some(out.trace_sha256.clone()),
            Some(prev) => {
                if *prev != out.trace_sha256 {
                    return Err(CliError::Runtime(
                        "schedulers saw different traces in one comparison".into(),
                    ));
                }
            }
        }
        if !exp.quiet {
            println!("{}", rep_summary(&name, &out));
        }
        entries.push(ComparisonEntry {
            scheduler: name.clone(),
            overall_hit_rate: out.metrics.overall_hit_rate,
            sla_met_fraction: out.metrics.sla_met_fraction,
            mean: out.metrics.mean,
            std: out.metrics.std,
            mean_shortfall: out.metrics.mean_shortfall,
            mk_violation_total: out.metrics.mk_violation_total,
            mac_count: out.energy.mac_count,
            overhead: out.energy.overhead,
        });
        rows.push((name, out.metrics));
    }
    save_box_csv(&exp.out_dir.join("box.csv"), &rows)?;
    save_swarm_csv_by_scheduler(&exp.out_dir.join("swarm.csv"), &rows)?;
    let doc = ComparisonDoc {
        trace_sha256: sha.unwrap(),
        epoch_ts: exp.epoch_ts,
        schedulers: entries,
    };
    write_json(&exp.out_dir.join("comparison.json"), &doc)?;
    save_trace(&exp.out_dir.join("trace.csv"), &trace)?;
    Ok(())
}

/// `train`: DDPG against regenerated traces, then the final checkpoint and
/// learning curve.
pub fn cmd_train(exp: &Experiment) -> Result<(), CliError> {
    std::fs::create_dir_all(&exp.out_dir)?;
    let env = exp.train_env()?;
    let ckpt_dir = exp.out_dir.clone();
    let (trainer, curve) =
        train_policy(&env, exp.train.clone(), exp.train_mode, Some(&ckpt_dir))?;
    save_learning_curve(&exp.out_dir.join("curve.csv"), &curve)?;
    let final_path = exp
        .checkpoint
        .clone()
        .unwrap_or_else(|| exp.out_dir.join("checkpoint.bin"));
    save_checkpoint(&final_path, &trainer.actor, &trainer.critic, &trainer.enc)?;
    if !exp.quiet {
        let last = curve.last();
        println!(
            "trained {} episodes ({:?} mode); final hit_rate={} -> {}",
            curve.len(),
            exp.train_mode,
            last.map(|p| format!("{:.4}", p.hit_rate)).unwrap_or_else(|| "n/a".into()),
            final_path.display(),
        );
    }
    Ok(())
}

/// `evaluate`: like simulate, but the scheduler is pinned to the checkpoint
/// (flag beats config key) and the reward mode comes from its header.
pub fn cmd_evaluate(exp: &Experiment, checkpoint_flag: Option<PathBuf>) -> Result<(), CliError> {
    let mut exp = exp.clone();
    if let Some(p) = checkpoint_flag {
        exp.checkpoint = Some(p);
    }
    let Some(path) = exp.checkpoint.clone() else {
        return Err(CliError::Config(ConfigError::Missing("checkpoint".into())));
    };
    let (_, _, meta) = load_checkpoint(&path)?;
    let name = match meta.mode()? {
        RewardMode::SlaAware => "rl-sla",
        RewardMode::Baseline => "rl-baseline",
    };
    cmd_simulate(&exp, name)
}

/// `gen-trace`: materialize the generated workload (trace plus any
/// generated tenants/costs) for reuse via the *.path keys.
pub fn cmd_gen_trace(exp: &Experiment) -> Result<(), CliError> {
    std::fs::create_dir_all(&exp.out_dir)?;
    let TraceSource::Gen(_) = exp.trace else {
        return Err(CliError::Config(ConfigError::Conflict(
            "gen-trace needs a generation spec, not `trace.path`".into(),
        )));
    };
    let trace = exp.resolve_trace(0)?;
    save_trace(&exp.out_dir.join("trace.csv"), &trace)?;
    if exp.tenants_generated {
        save_tenants(&exp.out_dir.join("tenants.csv"), &exp.tenants)?;
    }
    if exp.costs_generated {
        save_cost_table(&exp.out_dir.join("costs.csv"), &exp.profiles)?;
    }
    if !exp.quiet {
        println!(
            "wrote {} requests over horizon {} for {} tenants",
            trace.requests.len(),
            trace.horizon,
            exp.tenants.len()
        );
    }
    Ok(())
}

/// `gen-costs`: materialize a synthetic cost table.
pub fn cmd_gen_costs(exp: &Experiment) -> Result<(), CliError> {
    if !exp.costs_generated {
        return Err(CliError::Config(ConfigError::Conflict(
            "gen-costs needs `costs.models`, not `costs.path`".into(),
        )));
    }
    std::fs::create_dir_all(&exp.out_dir)?;
    save_cost_table(&exp.out_dir.join("costs.csv"), &exp.profiles)?;
    if !exp.quiet {
        let layers: usize = exp.profiles.iter().map(|p| p.layers.len()).sum();
        println!("wrote {} models, {} layers", exp.profiles.len(), layers);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use masfs_core::simcore::Totals;

    fn cfg_file(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("exp.cfg");
        std::fs::write(&path, text).unwrap();
        path
    }

    const BASE_CFG: &str = "costs.models = 3\n\
                            costs.seed = 7\n\
                            tenants.count = 4\n\
                            tenants.target = 0.8\n\
                            trace.horizon = 50000\n\
                            trace.xmin = 400\n\
                            scheduler = edf-h\n";

    #[test]
    fn loads_a_generated_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let path = cfg_file(dir.path(), BASE_CFG);
        let exp = Experiment::load(&path, &Overrides::default()).unwrap();
        assert_eq!(exp.profiles.len(), 3);
        assert_eq!(exp.tenants.len(), 4);
        assert_eq!(exp.tenants[3].model_id, 0, "tenants round-robin over models");
        assert_eq!(exp.require_scheduler().unwrap(), "edf-h");
        let trace = exp.resolve_trace(0).unwrap();
        assert!(!trace.requests.is_empty());
        // Same rep resolves identically, different reps differ.
        assert_eq!(trace, exp.resolve_trace(0).unwrap());
        assert_ne!(trace.requests, exp.resolve_trace(1).unwrap().requests);
    }

    #[test]
    fn seed_override_reaches_trace_and_sim() {
        let dir = tempfile::tempdir().unwrap();
        let path = cfg_file(dir.path(), BASE_CFG);
        let a = Experiment::load(&path, &Overrides { seed: Some(100), ..Default::default() })
            .unwrap();
        let b = Experiment::load(&path, &Overrides::default()).unwrap();
        assert_eq!(a.sim_seed, 100);
        assert_ne!(
            a.resolve_trace(0).unwrap().requests,
            b.resolve_trace(0).unwrap().requests
        );
    }

    #[test]
    fn conflicting_and_missing_sources_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let both = cfg_file(
            dir.path(),
            "costs.models = 2\ncosts.path = x.csv\ntenants.count = 1\ntrace.horizon = 10\n",
        );
        match Experiment::load(&both, &Overrides::default()) {
            Err(CliError::Config(ConfigError::Conflict(msg))) => {
                assert!(msg.contains("costs.path"), "{msg}")
            }
            other => panic!("expected conflict, got {other:?}"),
        }
        let missing = cfg_file(dir.path(), "tenants.count = 1\ntrace.horizon = 10\n");
        match Experiment::load(&missing, &Overrides::default()) {
            Err(CliError::Config(ConfigError::Missing(key))) => assert_eq!(key, "costs.path"),
            other => panic!("expected missing cost table, got {other:?}"),
        }
    }

    #[test]
    fn rl_scheduler_without_checkpoint_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = cfg_file(dir.path(), &BASE_CFG.replace("edf-h", "rl-sla"));
        let exp = Experiment::load(&path, &Overrides::default()).unwrap();
        match run_rep(&exp, "rl-sla", &exp.resolve_trace(0).unwrap(), 0) {
            Err(CliError::Config(ConfigError::Missing(key))) => assert_eq!(key, "checkpoint"),
            other => panic!("expected missing checkpoint, got {:?}", other.err()),
        }
    }

    fn result_with_energy(energy_pj: f64) -> SimResult {
        SimResult {
            requests: vec![],
            subjobs: vec![],
            epochs: vec![],
            totals: Totals {
                completed: 1,
                censored: 0,
                hits: 1,
                energy_pj,
                deferral_events: 0,
                mean_defer_factor: 1.0,
                epochs: 1,
            },
            events: vec![],
        }
    }

    #[test]
    fn energy_overhead_examples() {
        let result = result_with_energy(1e12);
        let heuristic = energy_overhead(&result, 0, 1.0);
        assert_eq!(heuristic.scheduler_energy_pj, 0.0);
        assert_eq!(heuristic.overhead, 0.0);
        assert_eq!(heuristic.mean_defer_factor, 1.0);

        let policy = energy_overhead(&result, 1_000_000_000, 1.0);
        assert!((policy.overhead - 0.001).abs() < 1e-15);

        let idle = result_with_energy(0.0);
        assert_eq!(energy_overhead(&idle, 5, 1.0).overhead, 0.0);
    }

    #[test]
    fn trace_digest_distinguishes_traces() {
        let dir = tempfile::tempdir().unwrap();
        let path = cfg_file(dir.path(), BASE_CFG);
        let exp = Experiment::load(&path, &Overrides::default()).unwrap();
        let t0 = exp.resolve_trace(0).unwrap();
        let t1 = exp.resolve_trace(1).unwrap();
        assert_eq!(trace_digest(&t0), trace_digest(&t0));
        assert_ne!(trace_digest(&t0), trace_digest(&t1));
        assert_eq!(trace_digest(&t0).len(), 64);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..37).collect();
        let seq = parallel_map(items.clone(), 1, |i, v| (i, v * v));
        let par = parallel_map(items, 8, |i, v| (i, v * v));
        assert_eq!(seq, par);
        assert!(par.iter().enumerate().all(|(i, &(j, v))| i == j && v == i * i));
    }

    #[test]
    fn default_epoch_ts_is_a_tenth_of_median_isolated_latency() {
        let dir = tempfile::tempdir().unwrap();
        let path = cfg_file(dir.path(), BASE_CFG);
        let exp = Experiment::load(&path, &Overrides::default()).unwrap();
        let mut iso: Vec<u64> = exp.profiles.iter().map(isolated_latency).collect();
        iso.sort_unstable();
        assert_eq!(exp.epoch_ts, (iso[1] / 10).max(1));
    }
}
