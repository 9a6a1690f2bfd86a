//! Models, accelerators, tenants and cost tables, plus reproducible
//! multi-tenant request trace generation.
//!
//! Everything here is a pure function of its inputs and an explicit seeded
//! RNG stream; there is no shared mutable state.

mod costs;
mod trace;

pub use costs::{generate_synthetic_cost_table, load_cost_table, save_cost_table};
pub use trace::{
    assign_targets_zipf, generate_trace, load_tenants, load_trace, pareto_inverse_cdf,
    sample_pareto, sample_zipf_rank, save_tenants, save_trace,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Abstract time unit used throughout the simulator.
pub type Cycles = u64;

/// Default shared off-chip memory bandwidth in GB/s.
pub const DEFAULT_BANDWIDTH: f64 = 16.0;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("model {model} layer {layer}: missing cost entry for SA kind {kind}")]
    MissingEntry {
        model: String,
        layer: usize,
        kind: &'static str,
    },
    #[error("model {model}: dependency cycle through layer {layer}")]
    Cycle { model: String, layer: usize },
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
}

/// Dataflow kind of a sub-accelerator. The cost table carries one column set
/// per kind, so the kind fully determines a layer's costs on an SA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SaKind {
    WeightStationary,
    RowStationary,
}

impl SaKind {
    pub const ALL: [SaKind; 2] = [SaKind::WeightStationary, SaKind::RowStationary];

    /// Index into per-kind cost arrays.
    pub fn index(self) -> usize {
        match self {
            SaKind::WeightStationary => 0,
            SaKind::RowStationary => 1,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            SaKind::WeightStationary => "ws",
            SaKind::RowStationary => "rs",
        }
    }

    pub fn parse(s: &str) -> Option<SaKind> {
        match s {
            "ws" => Some(SaKind::WeightStationary),
            "rs" => Some(SaKind::RowStationary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaSpec {
    pub sa_id: usize,
    pub kind: SaKind,
    pub label: String,
}

/// The multi-accelerator system: M sub-accelerators sharing one memory bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasConfig {
    pub sas: Vec<SaSpec>,
    /// Shared off-chip bandwidth B in GB/s.
    pub total_bandwidth: f64,
}

impl MasConfig {
    pub fn with_kinds(kinds: &[SaKind], total_bandwidth: f64) -> MasConfig {
        let sas = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| SaSpec {
                sa_id: i,
                kind,
                label: format!("sa{}-{}", i, kind.token()),
            })
            .collect();
        MasConfig {
            sas,
            total_bandwidth,
        }
    }

    pub fn n_sas(&self) -> usize {
        self.sas.len()
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.sas.is_empty() {
            return Err(WorkloadError::Invalid {
                what: "mas",
                why: "at least one SA required".into(),
            });
        }
        if !(self.total_bandwidth > 0.0) {
            return Err(WorkloadError::Invalid {
                what: "mas",
                why: format!("total_bandwidth must be > 0, got {}", self.total_bandwidth),
            });
        }
        for (i, sa) in self.sas.iter().enumerate() {
            if sa.sa_id != i {
                return Err(WorkloadError::Invalid {
                    what: "mas",
                    why: format!("sa_id {} at position {}", sa.sa_id, i),
                });
            }
        }
        Ok(())
    }
}

/// Per-(layer, SA kind) execution costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub latency: Cycles,
    pub energy_pj: f64,
    /// Bandwidth demanded for the whole time the layer runs, GB/s.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub layer_id: usize,
    /// Indexed by `SaKind::index()`.
    pub costs: [LayerCost; 2],
    /// Predecessor layer ids; empty for source layers.
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: usize,
    pub name: String,
    pub layers: Vec<Layer>,
}

impl ModelProfile {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn cost(&self, layer_id: usize, kind: SaKind) -> &LayerCost {
        &self.layers[layer_id].costs[kind.index()]
    }

    /// Checks dense ids, positive latencies, bandwidths within `bound`, and
    /// acyclic deps (Kahn). Reachability from a source is implied by
    /// acyclicity: walking predecessors from any layer terminates at one.
    pub fn validate(&self, bandwidth_bound: f64) -> Result<(), WorkloadError> {
        let l = self.layers.len();
        if l == 0 {
            return Err(WorkloadError::Invalid {
                what: "model",
                why: format!("{}: no layers", self.name),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.layer_id != i {
                return Err(WorkloadError::Invalid {
                    what: "model",
                    why: format!("{}: layer ids not dense at {}", self.name, i),
                });
            }
            for &d in &layer.deps {
                if d >= l {
                    return Err(WorkloadError::Invalid {
                        what: "model",
                        why: format!("{}: layer {} depends on unknown layer {}", self.name, i, d),
                    });
                }
            }
            for c in &layer.costs {
                if c.latency == 0 {
                    return Err(WorkloadError::Invalid {
                        what: "model",
                        why: format!("{}: layer {} has zero latency", self.name, i),
                    });
                }
                if !(0.0..=bandwidth_bound).contains(&c.bandwidth) {
                    return Err(WorkloadError::Invalid {
                        what: "model",
                        why: format!(
                            "{}: layer {} bandwidth {} outside [0, {}]",
                            self.name, i, c.bandwidth, bandwidth_bound
                        ),
                    });
                }
                if c.energy_pj < 0.0 {
                    return Err(WorkloadError::Invalid {
                        what: "model",
                        why: format!("{}: layer {} negative energy", self.name, i),
                    });
                }
            }
        }
        // Kahn's algorithm; any unprocessed layer sits on a cycle.
        let mut indeg = vec![0usize; l];
        let mut succs = vec![Vec::new(); l];
        for layer in &self.layers {
            for &d in &layer.deps {
                indeg[layer.layer_id] += 1;
                succs[d].push(layer.layer_id);
            }
        }
        let mut queue: Vec<usize> = (0..l).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop() {
            seen += 1;
            for &v in &succs[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
        if seen != l {
            let layer = (0..l).find(|&i| indeg[i] > 0).unwrap();
            return Err(WorkloadError::Cycle {
                model: self.name.clone(),
                layer,
            });
        }
        Ok(())
    }
}

/// Best-SA-per-layer, sequential, contention-free execution time. A lower
/// bound on any simulated latency since layers of one job never overlap.
pub fn isolated_latency(profile: &ModelProfile) -> Cycles {
    profile
        .layers
        .iter()
        .map(|l| l.costs.iter().map(|c| c.latency).min().unwrap())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QosLevel {
    Low,
    #[serde(rename = "med")]
    Medium,
    High,
}

impl QosLevel {
    /// Multiplier applied on top of the medium QoS factor.
    pub fn factor(self) -> f64 {
        match self {
            QosLevel::Low => 1.2,
            QosLevel::Medium => 1.0,
            QosLevel::High => 0.8,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            QosLevel::Low => "low",
            QosLevel::Medium => "med",
            QosLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<QosLevel> {
        match s {
            "low" => Some(QosLevel::Low),
            "med" => Some(QosLevel::Medium),
            "high" => Some(QosLevel::High),
            _ => None,
        }
    }
}

/// deadline = arrival + round(factor × isolated latency), factor being the
/// medium QoS factor scaled by 0.8/1.0/1.2 for high/medium/low levels.
pub fn request_deadline(
    arrival: Cycles,
    profile: &ModelProfile,
    qos: QosLevel,
    medium_factor: f64,
) -> Cycles {
    debug_assert!(medium_factor >= 1.0);
    let factor = medium_factor * qos.factor();
    arrival + (factor * isolated_latency(profile) as f64).round() as Cycles
}

/// (m,k)-firm terms: at most k misses in any m consecutive requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MkSpec {
    pub m: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenantSpec {
    pub tenant_id: usize,
    pub model_id: usize,
    /// Target SLO achievement rate in [0,1].
    pub target_sli: f64,
    pub mk: Option<MkSpec>,
    /// Probabilities of drawing (low, medium, high) QoS for a request.
    pub qos_level_weights: [f64; 3],
}

impl TenantSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(0.0..=1.0).contains(&self.target_sli) {
            return Err(WorkloadError::Invalid {
                what: "tenant",
                why: format!("tenant {}: target_sli {}", self.tenant_id, self.target_sli),
            });
        }
        if let Some(MkSpec { m, k }) = self.mk {
            if k >= m {
                return Err(WorkloadError::Invalid {
                    what: "tenant",
                    why: format!("tenant {}: require k < m, got ({m},{k})", self.tenant_id),
                });
            }
        }
        let sum: f64 = self.qos_level_weights.iter().sum();
        if self.qos_level_weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::Invalid {
                what: "tenant",
                why: format!(
                    "tenant {}: qos weights {:?} must be non-negative and sum to 1",
                    self.tenant_id, self.qos_level_weights
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub req_id: usize,
    pub tenant_id: usize,
    pub model_id: usize,
    pub arrival: Cycles,
    pub qos_level: QosLevel,
    /// Absolute deadline; always > arrival.
    pub deadline: Cycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTrace {
    /// Sorted non-decreasing by arrival.
    pub requests: Vec<Request>,
    pub seed: u64,
    pub horizon: Cycles,
}
