//! Arrival-process sampling and trace/tenant file IO.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Cycles, MkSpec, ModelProfile, QosLevel, Request, RequestTrace, TenantSpec, WorkloadError,
};

pub const TRACE_HEADER: &str = "req_id,tenant_id,model_id,arrival,qos_level,deadline";
pub const TENANT_HEADER: &str = "tenant_id,model_id,target_sli,m,k,w_low,w_med,w_high";

/// Inverse Pareto CDF: x = xmin * u^(-1/alpha) for u in (0,1].
/// Kept separate from the sampler so tests can drive u directly.
pub fn pareto_inverse_cdf(u: f64, alpha: f64, xmin: f64) -> f64 {
    debug_assert!(u > 0.0 && u <= 1.0);
    xmin * u.powf(-1.0 / alpha)
}

pub fn sample_pareto<R: Rng>(rng: &mut R, alpha: f64, xmin: f64) -> f64 {
    debug_assert!(alpha > 1.0, "finite mean requires alpha > 1");
    debug_assert!(xmin > 0.0);
    // random::<f64>() is in [0,1); flip to (0,1] to keep the CDF endpoint.
    let u = 1.0 - rng.random::<f64>();
    pareto_inverse_cdf(u, alpha, xmin)
}

/// Draws a 1-based rank with P(r) = r^(-s) / sum_i i^(-s).
pub fn sample_zipf_rank<R: Rng>(rng: &mut R, n_ranks: usize, exponent_s: f64) -> usize {
    assert!(n_ranks >= 1);
    assert!(exponent_s > 0.0);
    let norm: f64 = (1..=n_ranks).map(|r| (r as f64).powf(-exponent_s)).sum();
    let mut u = rng.random::<f64>() * norm;
    for r in 1..n_ranks {
        let w = (r as f64).powf(-exponent_s);
        if u < w {
            return r;
        }
        u -= w;
    }
    n_ranks
}

fn pick_weighted(u: f64, weights: &[f64; 3]) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// One global Pareto arrival process; each arrival is assigned to a tenant
/// uniformly at random, QoS drawn from that tenant's level weights.
/// Continuous arrival times are rounded up to whole cycles.
pub fn generate_trace(
    seed: u64,
    tenants: &[TenantSpec],
    profiles: &[ModelProfile],
    horizon: Cycles,
    pareto: (f64, f64),
    medium_factor: f64,
) -> RequestTrace {
    let (alpha, xmin) = pareto;
    assert!(!tenants.is_empty());
    for t in tenants {
        assert!(
            t.model_id < profiles.len(),
            "tenant {} references unknown model {}",
            t.tenant_id,
            t.model_id
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requests = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += sample_pareto(&mut rng, alpha, xmin);
        let arrival = t.ceil() as Cycles;
        if arrival >= horizon {
            break;
        }
        let tenant = &tenants[rng.random_range(0..tenants.len())];
        let qos = match pick_weighted(rng.random::<f64>(), &tenant.qos_level_weights) {
            0 => QosLevel::Low,
            1 => QosLevel::Medium,
            _ => QosLevel::High,
        };
        let profile = &profiles[tenant.model_id];
        requests.push(Request {
            req_id: requests.len(),
            tenant_id: tenant.tenant_id,
            model_id: tenant.model_id,
            arrival,
            qos_level: qos,
            deadline: super::request_deadline(arrival, profile, qos, medium_factor),
        });
    }
    RequestTrace {
        requests,
        seed,
        horizon,
    }
}

/// Draws each tenant's target SLI from `targets` via Zipf rank sampling;
/// rank 1 is the first listed target, so list ascending to make the lowest
/// target the most common.
pub fn assign_targets_zipf(
    seed: u64,
    mut tenants: Vec<TenantSpec>,
    targets: &[f64],
    exponent_s: f64,
) -> Vec<TenantSpec> {
    assert!(!targets.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in &mut tenants {
        let rank = sample_zipf_rank(&mut rng, targets.len(), exponent_s);
        t.target_sli = targets[rank - 1];
    }
    tenants
}

pub fn save_trace(path: &Path, trace: &RequestTrace) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.requests {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.req_id,
            r.tenant_id,
            r.model_id,
            r.arrival,
            r.qos_level.token(),
            r.deadline
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_trace(path: &Path) -> Result<Vec<Request>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == TRACE_HEADER => {}
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
    let mut requests = Vec::new();
    let mut prev_arrival = 0;
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
        let qos_level =
            QosLevel::parse(f[4].trim()).ok_or_else(|| err(format!("bad qos_level {:?}", f[4])))?;
        let r = Request {
            req_id: f[0].trim().parse().map_err(|e| err(format!("req_id: {e}")))?,
            tenant_id: f[1].trim().parse().map_err(|e| err(format!("tenant_id: {e}")))?,
            model_id: f[2].trim().parse().map_err(|e| err(format!("model_id: {e}")))?,
            arrival: f[3].trim().parse().map_err(|e| err(format!("arrival: {e}")))?,
            qos_level,
            deadline: f[5].trim().parse().map_err(|e| err(format!("deadline: {e}")))?,
        };
        if r.deadline <= r.arrival {
            return Err(err(format!("deadline {} <= arrival {}", r.deadline, r.arrival)));
        }
        if r.arrival < prev_arrival {
            return Err(err("arrivals not sorted".into()));
        }
        prev_arrival = r.arrival;
        requests.push(r);
    }
    Ok(requests)
}

pub fn save_tenants(path: &Path, tenants: &[TenantSpec]) -> Result<(), WorkloadError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TENANT_HEADER}")?;
    for t in tenants {
        let (m, k) = match t.mk {
            Some(MkSpec { m, k }) => (m.to_string(), k.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.tenant_id,
            t.model_id,
            t.target_sli,
            m,
            k,
            t.qos_level_weights[0],
            t.qos_level_weights[1],
            t.qos_level_weights[2]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_tenants(path: &Path) -> Result<Vec<TenantSpec>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == TENANT_HEADER => {}
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
    let mut tenants = Vec::new();
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
        let mk = match (f[3].trim(), f[4].trim()) {
            ("", "") => None,
            (m, k) => Some(MkSpec {
                m: m.parse().map_err(|e| err(format!("m: {e}")))?,
                k: k.parse().map_err(|e| err(format!("k: {e}")))?,
            }),
        };
        let t = TenantSpec {
            tenant_id: f[0].trim().parse().map_err(|e| err(format!("tenant_id: {e}")))?,
            model_id: f[1].trim().parse().map_err(|e| err(format!("model_id: {e}")))?,
            target_sli: f[2].trim().parse().map_err(|e| err(format!("target_sli: {e}")))?,
            mk,
            qos_level_weights: [
                f[5].trim().parse().map_err(|e| err(format!("w_low: {e}")))?,
                f[6].trim().parse().map_err(|e| err(format!("w_med: {e}")))?,
                f[7].trim().parse().map_err(|e| err(format!("w_high: {e}")))?,
            ],
        };
        t.validate()?;
        tenants.push(t);
    }
    Ok(tenants)
}

#[cfg(test)]
mod tests {
    use super::super::generate_synthetic_cost_table;
    use super::*;

    #[test]
    fn pareto_cdf_endpoint_and_closed_form() {
        assert_eq!(pareto_inverse_cdf(1.0, 2.0, 3.0), 3.0);
        assert!((pareto_inverse_cdf(0.25, 2.0, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pareto_mean_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_pareto(&mut rng, 3.0, 1.0))
            .sum::<f64>()
            / n as f64;
        let analytic = 3.0 / 2.0; // alpha*xmin/(alpha-1)
        assert!((mean - analytic).abs() / analytic < 0.01, "mean {mean}");
    }

    #[test]
    fn pareto_passes_ks_test() {
        // One-sample KS against the analytic CDF, alpha=0.01 critical value.
        let (alpha, xmin) = (2.5, 2.0);
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..n).map(|_| sample_pareto(&mut rng, alpha, xmin)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |x: f64| 1.0 - (xmin / x).powf(alpha);
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = cdf(x);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        let critical = 1.62762 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn zipf_probabilities_n3_s1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_zipf_rank(&mut rng, 3, 1.0) - 1] += 1;
        }
        let expect = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (c, e) in counts.iter().zip(expect) {
            assert!((*c as f64 / n as f64 - e).abs() < 0.01);
        }
    }

    #[test]
    fn zipf_degenerate_and_steep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(sample_zipf_rank(&mut rng, 1, 1.0), 1);
        }
        let n = 10_000;
        let ones = (0..n)
            .filter(|_| sample_zipf_rank(&mut rng, 3, 20.0) == 1)
            .count();
        assert!(ones as f64 / n as f64 > 0.999);
    }

    fn some_tenants(n: usize, n_models: usize) -> Vec<TenantSpec> {
        (0..n)
            .map(|i| TenantSpec {
                tenant_id: i,
                model_id: i % n_models,
                target_sli: 0.8,
                mk: None,
                qos_level_weights: [0.2, 0.5, 0.3],
            })
            .collect()
    }

    #[test]
    fn trace_deterministic_and_sorted() {
        let profiles = generate_synthetic_cost_table(1, 2, 2..=4, 2.0);
        let tenants = some_tenants(5, 2);
        let a = generate_trace(9, &tenants, &profiles, 5_000, (2.5, 3.0), 2.0);
        let b = generate_trace(9, &tenants, &profiles, 5_000, (2.5, 3.0), 2.0);
        assert_eq!(a, b);
        assert!(!a.requests.is_empty());
        for w in a.requests.windows(2) {
            assert!(w[0].arrival <= w[1].arrival);
        }
        for r in &a.requests {
            assert!(r.deadline > r.arrival);
            assert!(r.arrival < 5_000);
        }
    }

    #[test]
    fn trace_empty_horizon() {
        let profiles = generate_synthetic_cost_table(1, 1, 1..=1, 2.0);
        let tenants = some_tenants(1, 1);
        let t = generate_trace(9, &tenants, &profiles, 0, (2.5, 3.0), 2.0);
        assert!(t.requests.is_empty());
    }

    #[test]
    fn trace_tenant_share_near_uniform() {
        let profiles = generate_synthetic_cost_table(1, 4, 2..=4, 2.0);
        let tenants = some_tenants(100, 4);
        let t = generate_trace(21, &tenants, &profiles, 20_000, (3.0, 1.0), 2.0);
        let mut counts = vec![0usize; 100];
        for r in &t.requests {
            counts[r.tenant_id] += 1;
        }
        let expect = t.requests.len() as f64 / 100.0;
        for &c in &counts {
            assert!((c as f64) < 5.0 * expect, "count {c} vs expectation {expect}");
            assert!((c as f64) > expect / 5.0, "count {c} vs expectation {expect}");
        }
    }

    #[test]
    fn zipf_target_assignment() {
        let tenants = some_tenants(10_000, 1);
        let targets = [0.7, 0.8, 0.9];
        let out = assign_targets_zipf(17, tenants.clone(), &targets, 1.0);
        let expect = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for (i, &tgt) in targets.iter().enumerate() {
            let frac = out.iter().filter(|t| t.target_sli == tgt).count() as f64 / 10_000.0;
            assert!((frac - expect[i]).abs() < 0.02, "target {tgt}: {frac}");
        }
        // Determinism and the single-target degenerate case.
        assert_eq!(out, assign_targets_zipf(17, tenants.clone(), &targets, 1.0));
        let single = assign_targets_zipf(17, tenants, &[0.8], 1.0);
        assert!(single.iter().all(|t| t.target_sli == 0.8));
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let profiles = generate_synthetic_cost_table(1, 2, 2..=4, 2.0);
        let tenants = some_tenants(3, 2);
        let trace = generate_trace(5, &tenants, &profiles, 3_000, (2.5, 3.0), 2.0);
        save_trace(&path, &trace).unwrap();
        let loaded = load_trace(&path).unwrap();
        assert_eq!(trace.requests, loaded);
    }

    #[test]
    fn tenant_round_trip_with_and_without_mk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tenants.csv");
        let mut tenants = some_tenants(4, 2);
        tenants[1].mk = Some(MkSpec { m: 10, k: 2 });
        tenants[3].mk = Some(MkSpec { m: 5, k: 0 });
        save_tenants(&path, &tenants).unwrap();
        let loaded = load_tenants(&path).unwrap();
        assert_eq!(tenants, loaded);
    }
}
