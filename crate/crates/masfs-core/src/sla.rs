//! Per-(tenant, model) SLI bookkeeping, (m,k)-firm evaluation, reward
//! computation and fairness metric aggregation.
//!
//! Two SLI views exist on purpose. The policy reads a windowed SLI (default
//! window 100) so the signal stays responsive in long runs; reports use the
//! cumulative rate over the whole run. An empty history reads as SLI 1.0: a
//! tenant with no outcomes is treated as satisfied rather than starved.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::workload::{MkSpec, TenantSpec, WorkloadError};

pub const DEFAULT_SLI_WINDOW: usize = 100;
pub const DEFAULT_LAMBDA: f64 = 0.5;

pub const SLA_STORE_HEADER: &str = "tenant_id,model_id,target,cum_hits,cum_total,window_bits";
pub const SWARM_HEADER: &str = "tenant_id,target,attained,diff";
pub const BOX_HEADER: &str = "scheduler,mean,median,q1,q3,min,max,std";

#[derive(Debug, Error)]
pub enum SlaError {
    #[error("(m,k) terms not configured for tenant {tenant_id} model {model_id}")]
    NotConfigured { tenant_id: usize, model_id: usize },
    #[error("no tenant has any recorded outcome")]
    EmptyInput,
}

#[derive(Debug, Clone)]
struct MkWindow {
    spec: MkSpec,
    window: VecDeque<bool>,
}

/// Sliding-window and cumulative outcome bookkeeping for one (tenant, model).
#[derive(Debug, Clone)]
pub struct SlaState {
    pub tenant_id: usize,
    pub model_id: usize,
    pub target_sli: f64,
    window: VecDeque<bool>,
    window_cap: usize,
    pub cum_hits: u64,
    pub cum_total: u64,
    mk: Option<MkWindow>,
    /// Outcomes that left the (m,k) window with more than k misses.
    pub mk_violations: u64,
}

impl SlaState {
    pub fn new(
        tenant_id: usize,
        model_id: usize,
        target_sli: f64,
        mk: Option<MkSpec>,
        window_cap: usize,
    ) -> SlaState {
        assert!(window_cap >= 1);
        SlaState {
            tenant_id,
            model_id,
            target_sli,
            window: VecDeque::with_capacity(window_cap),
            window_cap,
            cum_hits: 0,
            cum_total: 0,
            mk: mk.map(|spec| MkWindow {
                spec,
                window: VecDeque::with_capacity(spec.m),
            }),
            mk_violations: 0,
        }
    }

    pub fn from_tenant(t: &TenantSpec, window_cap: usize) -> SlaState {
        SlaState::new(t.tenant_id, t.model_id, t.target_sli, t.mk, window_cap)
    }

    pub fn record_outcome(&mut self, hit: bool) {
        self.window.push_back(hit);
        if self.window.len() > self.window_cap {
            self.window.pop_front();
        }
        self.cum_total += 1;
        self.cum_hits += hit as u64;
        if let Some(mk) = &mut self.mk {
            mk.window.push_back(hit);
            if mk.window.len() > mk.spec.m {
                mk.window.pop_front();
            }
            let misses = mk.window.iter().filter(|&&h| !h).count();
            if misses > mk.spec.k {
                self.mk_violations += 1;
            }
        }
    }

    /// Windowed deadline hit rate; 1.0 before any outcome (optimistic prior).
    pub fn current_sli(&self) -> f64 {
        if self.window.is_empty() {
            1.0
        } else {
            self.window.iter().filter(|&&h| h).count() as f64 / self.window.len() as f64
        }
    }

    /// Cumulative hit rate over the whole run; the report statistic.
    pub fn cumulative_rate(&self) -> f64 {
        if self.cum_total == 0 {
            1.0
        } else {
            self.cum_hits as f64 / self.cum_total as f64
        }
    }

    /// True iff misses within the last min(m, seen) outcomes are at most k.
    /// Fewer than m outcomes: evaluated over the available prefix.
    pub fn mk_firm_ok(&self) -> Result<bool, SlaError> {
        let mk = self.mk.as_ref().ok_or(SlaError::NotConfigured {
            tenant_id: self.tenant_id,
            model_id: self.model_id,
        })?;
        let misses = mk.window.iter().filter(|&&h| !h).count();
        Ok(misses <= mk.spec.k)
    }

    pub fn mk_spec(&self) -> Option<MkSpec> {
        self.mk.as_ref().map(|m| m.spec)
    }

    fn window_bits(&self) -> String {
        self.window.iter().map(|&h| if h { '1' } else { '0' }).collect()
    }
}

/// Distance-modulated reward: g = clamp(target - sli_before, -1, 1), reward
/// = +-(1 + lambda*g). Below target both hit reward and miss penalty grow;
/// at or above target both shrink. Magnitude stays in [0, 2] for lambda <= 1.
pub fn sla_reward_from(sli_before: f64, target: f64, hit: bool, lambda: f64) -> f64 {
    let g = (target - sli_before).clamp(-1.0, 1.0);
    let magnitude = 1.0 + lambda * g;
    if hit {
        magnitude
    } else {
        -magnitude
    }
}

pub fn sla_reward(state_before: &SlaState, hit: bool, lambda: f64) -> f64 {
    sla_reward_from(state_before.current_sli(), state_before.target_sli, hit, lambda)
}

pub fn baseline_reward(hit: bool) -> f64 {
    if hit {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    Baseline,
    SlaAware,
}

/// A job completion observed during one scheduling epoch; `sli_before` is the
/// windowed SLI captured before the outcome was recorded.
#[derive(Debug, Clone, Copy)]
pub struct Completion {
    pub target_sli: f64,
    pub sli_before: f64,
    pub hit: bool,
}

pub fn epoch_reward(completions: &[Completion], mode: RewardMode, lambda: f64) -> f64 {
    completions
        .iter()
        .map(|c| match mode {
            RewardMode::Baseline => baseline_reward(c.hit),
            RewardMode::SlaAware => sla_reward_from(c.sli_before, c.target_sli, c.hit, lambda),
        })
        .sum()
}

/// The per-(tenant, model) SLA store, keyed deterministically.
#[derive(Debug, Clone, Default)]
pub struct SlaBook {
    states: BTreeMap<(usize, usize), SlaState>,
}

impl SlaBook {
    pub fn from_tenants(tenants: &[TenantSpec], window_cap: usize) -> SlaBook {
        let states = tenants
            .iter()
            .map(|t| ((t.tenant_id, t.model_id), SlaState::from_tenant(t, window_cap)))
            .collect();
        SlaBook { states }
    }

    pub fn get(&self, tenant_id: usize, model_id: usize) -> Option<&SlaState> {
        self.states.get(&(tenant_id, model_id))
    }

    pub fn get_mut(&mut self, tenant_id: usize, model_id: usize) -> Option<&mut SlaState> {
        self.states.get_mut(&(tenant_id, model_id))
    }

    pub fn states(&self) -> impl Iterator<Item = &SlaState> {
        self.states.values()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TenantMetric {
    pub tenant_id: usize,
    pub model_id: usize,
    pub target: f64,
    pub attained: f64,
    pub diff: f64,
    pub cum_hits: u64,
    pub cum_total: u64,
    pub mk_violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub per_tenant: Vec<TenantMetric>,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation across tenants.
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of tenants with attained >= target.
    pub sla_met_fraction: f64,
    /// Mean (target - attained) among violators; 0 when none.
    pub mean_shortfall: f64,
    pub overall_hit_rate: f64,
    pub mk_violation_total: u64,
}

/// Linear-interpolation quantile (the common "type 7" rule) on sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Full-run fairness statistics over tenants with at least one outcome.
pub fn aggregate_metrics(book: &SlaBook) -> Result<MetricsReport, SlaError> {
    let mut per_tenant: Vec<TenantMetric> = book
        .states()
        .filter(|s| s.cum_total > 0)
        .map(|s| {
            let attained = s.cumulative_rate();
            TenantMetric {
                tenant_id: s.tenant_id,
                model_id: s.model_id,
                target: s.target_sli,
                attained,
                diff: attained - s.target_sli,
                cum_hits: s.cum_hits,
                cum_total: s.cum_total,
                mk_violations: s.mk_violations,
            }
        })
        .collect();
    if per_tenant.is_empty() {
        return Err(SlaError::EmptyInput);
    }
    per_tenant.sort_by(|a, b| (a.tenant_id, a.model_id).cmp(&(b.tenant_id, b.model_id)));

    let mut rates: Vec<f64> = per_tenant.iter().map(|t| t.attained).collect();
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;

    let violators: Vec<f64> = per_tenant
        .iter()
        .filter(|t| t.attained < t.target)
        .map(|t| t.target - t.attained)
        .collect();
    let mean_shortfall = if violators.is_empty() {
        0.0
    } else {
        violators.iter().sum::<f64>() / violators.len() as f64
    };
    let hits: u64 = per_tenant.iter().map(|t| t.cum_hits).sum();
    let total: u64 = per_tenant.iter().map(|t| t.cum_total).sum();

    Ok(MetricsReport {
        mean,
        median: quantile(&rates, 0.5),
        std: var.sqrt(),
        q1: quantile(&rates, 0.25),
        q3: quantile(&rates, 0.75),
        min: rates[0],
        max: rates[rates.len() - 1],
        sla_met_fraction: 1.0 - violators.len() as f64 / n,
        mean_shortfall,
        overall_hit_rate: hits as f64 / total as f64,
        mk_violation_total: per_tenant.iter().map(|t| t.mk_violations).sum(),
        per_tenant,
    })
}

/// Swarm-plot data: one row per tenant.
pub fn save_swarm_csv(path: &Path, report: &MetricsReport) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SWARM_HEADER}")?;
    for t in &report.per_tenant {
        writeln!(out, "{},{},{},{}", t.tenant_id, t.target, t.attained, t.diff)?;
    }
    out.flush()?;
    Ok(())
}

/// Swarm-plot data for several schedulers side by side.
pub fn save_swarm_csv_by_scheduler(
    path: &Path,
    rows: &[(String, MetricsReport)],
) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "scheduler,{SWARM_HEADER}")?;
    for (name, report) in rows {
        for t in &report.per_tenant {
            writeln!(
                out,
                "{},{},{},{},{}",
                name, t.tenant_id, t.target, t.attained, t.diff
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Box-plot data: one row per scheduler.
pub fn save_box_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{BOX_HEADER}")?;
    for (name, r) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            name, r.mean, r.median, r.q1, r.q3, r.min, r.max, r.std
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of the SLA store snapshot CSV. `window_bits` is the windowed outcome
/// history, oldest first, as '0'/'1' characters.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaSnapshotRow {
    pub tenant_id: usize,
    pub model_id: usize,
    pub target: f64,
    pub cum_hits: u64,
    pub cum_total: u64,
    pub window_bits: String,
}

pub fn save_sla_store(path: &Path, book: &SlaBook) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SLA_STORE_HEADER}")?;
    for s in book.states() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.tenant_id,
            s.model_id,
            s.target_sli,
            s.cum_hits,
            s.cum_total,
            s.window_bits()
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_sla_store(path: &Path) -> Result<Vec<SlaSnapshotRow>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == SLA_STORE_HEADER => {}
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
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", f.len())));
        }
        rows.push(SlaSnapshotRow {
            tenant_id: f[0].trim().parse().map_err(|e| err(format!("tenant_id: {e}")))?,
            model_id: f[1].trim().parse().map_err(|e| err(format!("model_id: {e}")))?,
            target: f[2].trim().parse().map_err(|e| err(format!("target: {e}")))?,
            cum_hits: f[3].trim().parse().map_err(|e| err(format!("cum_hits: {e}")))?,
            cum_total: f[4].trim().parse().map_err(|e| err(format!("cum_total: {e}")))?,
            window_bits: f[5].trim().to_string(),
        });
    }
    Ok(rows)
}
