//! Cost-table file IO and the synthetic table generator that stands in for
//! hardware profiling.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Cycles, Layer, LayerCost, MasConfig, ModelProfile, SaKind, WorkloadError, DEFAULT_BANDWIDTH,
};

pub const COST_HEADER: &str = "model,layer,sa_kind,latency_cycles,energy_pj,bandwidth_gbps,deps";

/// Writes one row per (layer, SA kind); deps are repeated on both rows.
pub fn save_cost_table(path: &Path, profiles: &[ModelProfile]) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{COST_HEADER}")?;
    for p in profiles {
        for layer in &p.layers {
            let deps: Vec<String> = layer.deps.iter().map(|d| d.to_string()).collect();
            let deps = deps.join(";");
            for kind in SaKind::ALL {
                let c = &layer.costs[kind.index()];
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p.name,
                    layer.layer_id,
                    kind.token(),
                    c.latency,
                    c.energy_pj,
                    c.bandwidth,
                    deps
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads profiles from the cost CSV. Model ids are assigned in order of
/// first appearance; every (layer, kind) pair must be present and the result
/// is validated against `mas.total_bandwidth`.
pub fn load_cost_table(path: &Path, mas: &MasConfig) -> Result<Vec<ModelProfile>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == COST_HEADER => {}
        Some((_, Ok(h))) => return Err(parse_err(path, 1, format!("bad header {h:?}"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(parse_err(path, 1, "empty file")),
    }

    struct Partial {
        costs: [Option<LayerCost>; 2],
        deps: Option<Vec<usize>>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut models: BTreeMap<String, BTreeMap<usize, Partial>> = BTreeMap::new();

    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, lineno, format!("expected 7 fields, got {}", fields.len())));
        }
        let name = fields[0].trim().to_string();
        let layer: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("layer: {e}")))?;
        let kind = SaKind::parse(fields[2].trim())
            .ok_or_else(|| parse_err(path, lineno, format!("unknown sa_kind {:?}", fields[2])))?;
        let latency: Cycles = fields[3]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("latency_cycles: {e}")))?;
        let energy_pj: f64 = fields[4]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("energy_pj: {e}")))?;
        let bandwidth: f64 = fields[5]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bandwidth_gbps: {e}")))?;
        let deps: Vec<usize> = if fields[6].trim().is_empty() {
            Vec::new()
        } else {
            fields[6]
                .trim()
                .split(';')
                .map(|d| {
                    d.trim()
                        .parse()
                        .map_err(|e| parse_err(path, lineno, format!("deps: {e}")))
                })
                .collect::<Result<_, _>>()?
        };

        if !models.contains_key(&name) {
            order.push(name.clone());
        }
        let entry = models
            .entry(name.clone())
            .or_default()
            .entry(layer)
            .or_insert(Partial {
                costs: [None, None],
                deps: None,
            });
        if entry.costs[kind.index()].is_some() {
            return Err(parse_err(
                path,
                lineno,
                format!("duplicate entry for {name} layer {layer} kind {}", kind.token()),
            ));
        }
        entry.costs[kind.index()] = Some(LayerCost {
            latency,
            energy_pj,
            bandwidth,
        });
        match &entry.deps {
            None => entry.deps = Some(deps),
            Some(prev) if *prev != deps => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("conflicting deps for {name} layer {layer}"),
                ));
            }
            Some(_) => {}
        }
    }

    let mut profiles = Vec::new();
    for (model_id, name) in order.iter().enumerate() {
        let partials = &models[name];
        let mut layers = Vec::new();
        for (expect, (&layer_id, partial)) in partials.iter().enumerate() {
            if layer_id != expect {
                return Err(WorkloadError::Invalid {
                    what: "cost table",
                    why: format!("model {name}: layer ids not dense at {expect}"),
                });
            }
            let mut costs = [LayerCost {
                latency: 0,
                energy_pj: 0.0,
                bandwidth: 0.0,
            }; 2];
            for kind in SaKind::ALL {
                costs[kind.index()] =
                    partial.costs[kind.index()].ok_or(WorkloadError::MissingEntry {
                        model: name.clone(),
                        layer: layer_id,
                        kind: kind.token(),
                    })?;
            }
            layers.push(Layer {
                layer_id,
                costs,
                deps: partial.deps.clone().unwrap(),
            });
        }
        let profile = ModelProfile {
            model_id,
            name: name.clone(),
            layers,
        };
        profile.validate(mas.total_bandwidth)?;
        profiles.push(profile);
    }
    Ok(profiles)
}

/// Generates linear-chain models named M0..M{n-1}. Each layer favors one SA
/// kind: the other kind is slower by a factor uniform in [1, affinity_spread].
/// Bandwidth demands sit in [0.3B, 0.85B] of the default bus, so pairs of
/// concurrent layers can exceed it and contention actually occurs.
pub fn generate_synthetic_cost_table(
    rng_seed: u64,
    n_models: usize,
    layers_per_model: std::ops::RangeInclusive<usize>,
    affinity_spread: f64,
) -> Vec<ModelProfile> {
    assert!(n_models >= 1);
    assert!(affinity_spread > 1.0);
    assert!(*layers_per_model.start() >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bw_lo = 0.30 * DEFAULT_BANDWIDTH;
    let bw_hi = 0.85 * DEFAULT_BANDWIDTH;

    (0..n_models)
        .map(|model_id| {
            let n_layers = rng.random_range(layers_per_model.clone());
            let layers = (0..n_layers)
                .map(|layer_id| {
                    let base: Cycles = rng.random_range(50..=500);
                    let favored = if rng.random::<bool>() {
                        SaKind::WeightStationary
                    } else {
                        SaKind::RowStationary
                    };
                    let factor = rng.random_range(1.0..=affinity_spread);
                    // floor keeps the slow/fast ratio within [1, spread] exactly.
                    let slow = (base as f64 * factor).floor() as Cycles;
                    let mut costs = [LayerCost {
                        latency: 0,
                        energy_pj: 0.0,
                        bandwidth: 0.0,
                    }; 2];
                    for kind in SaKind::ALL {
                        let latency = if kind == favored { base } else { slow };
                        costs[kind.index()] = LayerCost {
                            latency,
                            energy_pj: latency as f64 * rng.random_range(1.0..=3.0),
                            bandwidth: rng.random_range(bw_lo..=bw_hi),
                        };
                    }
                    Layer {
                        layer_id,
                        costs,
                        deps: if layer_id == 0 {
                            vec![]
                        } else {
                            vec![layer_id - 1]
                        },
                    }
                })
                .collect();
            ModelProfile {
                model_id,
                name: format!("M{model_id}"),
                layers,
            }
        })
        .collect()
}
