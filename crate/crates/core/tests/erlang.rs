//! Without PUs, fixed-bandwidth sharing is an Erlang loss system with
//! ⌊N/b⌋ servers, which gives an oracle independent of the generator.

use caf_core::des::{simulate, SimConfig};
use caf_core::{analyze, SystemParams};

fn erlang_b(servers: u32, load: f64) -> f64 {
    // Standard recursion B(k) = a·B(k-1) / (k + a·B(k-1)).
    (1..=servers).fold(1.0, |b, k| load * b / (k as f64 + load * b))
}

fn no_pu(b: f64) -> SystemParams {
    SystemParams::reference(b, b, 0.0)
}

#[test]
fn fixed_bandwidth_without_pus_is_erlang_b() {
    for b in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let p = no_pu(b);
        let servers = (12.0 / b).floor() as u32;
        let mu = b * p.h_s + p.r_s;
        let want = erlang_b(servers, p.lambda_s / mu);
        let m = analyze(&p).unwrap().metrics;
        assert!((m.p_block - want).abs() < 1e-12, "b={b}: {} vs {want}", m.p_block);
        assert_eq!(m.p_drop, 0.0);
        let carried = p.lambda_s * (1.0 - want) / mu;
        assert!((m.utilization - carried * b / 12.0).abs() < 1e-12);
    }
}

#[test]
fn simulation_matches_erlang_b() {
    let p = no_pu(3.0);
    let want = erlang_b(4, p.lambda_s / (3.0 * p.h_s + p.r_s));
    let mut cfg = SimConfig::new(p);
    cfg.max_events = 220_000;
    cfg.warmup_events = 20_000;
    cfg.replications = 4;
    cfg.seed = 3;
    let r = simulate(&cfg).unwrap();
    let hw = r.half_width.unwrap().p_block;
    assert!((r.metrics.p_block - want).abs() < 4.0 * hw.max(1e-3), "{} vs {want}", r.metrics.p_block);
    assert_eq!(r.counters.su_dropped, 0);
}
