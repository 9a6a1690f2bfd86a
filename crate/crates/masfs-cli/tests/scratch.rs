use masfs_core::schedulers::{SchedulerInput, earliest_finish_sa};
use masfs_core::simcore::{run_simulation, Assignment, AssignEntry, SimConfig};
use masfs_core::sla::SlaBook;
use masfs_core::workload::{
    generate_trace, Layer, LayerCost, MasConfig, ModelProfile, SaKind, TenantSpec,
};

fn toy_profiles(ws: u64, rs: u64) -> Vec<ModelProfile> {
    let c = |lat: u64| LayerCost { latency: lat, energy_pj: lat as f64 * 2.5, bandwidth: 4.0 };
    vec![ModelProfile {
        model_id: 0,
        name: "tinynet".into(),
        layers: vec![Layer { layer_id: 0, costs: [c(ws), c(rs)], deps: vec![] }],
    }]
}

fn toy_tenants() -> Vec<TenantSpec> {
    (0..2)
        .map(|i| TenantSpec {
            tenant_id: i,
            model_id: 0,
            target_sli: if i == 0 { 0.9 } else { 0.5 },
            mk: None,
            qos_level_weights: [0.0, 1.0, 0.0],
        })
        .collect()
}

#[test]
#[ignore]
fn tenant20_probe() {
    use masfs_core::workload::{load_cost_table, assign_targets_zipf};
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/costs.csv");
    let mas = MasConfig::with_kinds(&[SaKind::WeightStationary, SaKind::RowStationary], 16.0);
    let profiles = load_cost_table(&path, &mas).unwrap();
    let n_models = profiles.len();
    for (label, targets) in [("flat1.0", None), ("zipf", Some(vec![0.7, 0.8, 0.9]))] {
        let base: Vec<TenantSpec> = (0..20)
            .map(|i| TenantSpec {
                tenant_id: i,
                model_id: i % n_models,
                target_sli: 1.0,
                mk: None,
                qos_level_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            })
            .collect();
        let tenants = match &targets {
            Some(t) => assign_targets_zipf(5, base, t, 1.1),
            None => base,
        };
        let trace = generate_trace(9001, &tenants, &profiles, 2_000_000, (2.2, 900.0), 4.0);
        let cfg = SimConfig {
            epoch_ts: 200,
            mas: mas.clone(),
            rng_seed: 0,
            horizon: 2_000_000,
            contention: true,
            collect_events: false,
        };
        for policy in ["deficit", "fresh"] {
            let mut sched = |input: &SchedulerInput| -> Assignment {
                let ready = &input.snapshot.ready;
                let mut keyed: Vec<(i64, i64, usize, usize)> = (0..ready.len())
                    .map(|i| {
                        let r = &ready[i];
                        let s = input.sla.get(r.tenant_id, r.model_id).unwrap();
                        let deficit = ((s.target_sli - s.current_sli()) * 1e6) as i64;
                        let key = if policy == "deficit" { -deficit } else { 0 };
                        (key, -(r.arrival as i64), r.req_id, i)
                    })
                    .collect();
                keyed.sort();
                let order: Vec<usize> = keyed.iter().map(|k| k.3).collect();
                let n = order.len();
                let mut projected: Vec<f64> =
                    input.snapshot.sas.iter().map(|s| s.occupied_cycles).collect();
                Assignment {
                    entries: order
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
                        .collect(),
                }
            };
            let book = SlaBook::from_tenants(&tenants, 100);
            let (result, book) =
                run_simulation(cfg.clone(), &trace, &profiles, &mut sched, book).unwrap();
            let slis: Vec<f64> = book.states().map(|s| s.cumulative_rate()).collect();
            let mean = slis.iter().sum::<f64>() / slis.len() as f64;
            let std =
                (slis.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / slis.len() as f64).sqrt();
            let met = book
                .states()
                .filter(|s| s.cumulative_rate() >= s.target_sli)
                .count();
            println!(
                "{label} {policy}: hits {:.3} mean {:.3} std {:.4} met {}/20",
                result.totals.hits as f64 / result.totals.completed as f64,
                mean,
                std,
                met
            );
        }
    }
}

#[test]
#[ignore]
fn corner_probe() {
    for (svc, xmin, mf) in [(300u64, 260.0f64, 2.5f64)] {
        let profiles = toy_profiles(svc, 1000);
        let tenants = toy_tenants();
        let trace = generate_trace(7001, &tenants, &profiles, 2_400_000, (1.65, xmin), mf);
        let mas = MasConfig::with_kinds(&[SaKind::WeightStationary, SaKind::RowStationary], 16.0);
        let cfg = SimConfig {
            epoch_ts: 450,
            mas,
            rng_seed: 0,
            horizon: 2_400_000,
            contention: true,
            collect_events: false,
        };
        for policy in ["a-first", "fresh"] {
            let mut contested = 0usize;
            let mut sched = |input: &SchedulerInput| -> Assignment {
                let ready = &input.snapshot.ready;
                if ready.iter().any(|r| r.tenant_id == 0) && ready.iter().any(|r| r.tenant_id == 1)
                {
                    contested += 1;
                }
                let mut order: Vec<usize> = (0..ready.len()).collect();
                // fresh-first = newest arrival first; a-first ranks tenant 0
                // above everything, fresh within tenant.
                order.sort_by_key(|&i| {
                    let r = &ready[i];
                    let tenant_rank = if policy == "a-first" { r.tenant_id } else { 0 };
                    (tenant_rank, std::cmp::Reverse(r.arrival), r.req_id)
                });
                let n = order.len();
                let mut projected: Vec<f64> =
                    input.snapshot.sas.iter().map(|s| s.occupied_cycles).collect();
                Assignment {
                    entries: order
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
                        .collect(),
                }
            };
            let book = SlaBook::from_tenants(&tenants, 100);
            let (result, book) =
                run_simulation(cfg.clone(), &trace, &profiles, &mut sched, book).unwrap();
            let slis: Vec<(usize, f64)> = book
                .states()
                .map(|s| (s.tenant_id, s.cumulative_rate()))
                .collect();
            println!(
                "svc {svc} xmin {xmin} mf {mf} {policy}: total {:.3} slis {:?} contested {contested}",
                result.totals.hits as f64 / result.totals.completed as f64,
                slis.iter().map(|(t, r)| format!("{t}:{r:.3}")).collect::<Vec<_>>()
            );
        }
    }
}
