//! End-to-end checks of the analytical engine, the simulator and the sweep
//! harness against closed forms, each other, and the qualitative behaviour
//! the CAF strategy is expected to show. Each check returns an outcome
//! instead of panicking so the CLI can print a full report.

use std::fmt;
use std::time::{Duration, Instant};

use crate::ctmc::{self, uniformization, Metrics};
use crate::des::{self, SimConfig};
use crate::exec::Execution;
use crate::harness::config::{default_grid, Engines, Scenario, SweepSpec};
use crate::harness::output::{render, Format};
use crate::harness::report::{agreement_report, METRIC_NAMES};
use crate::harness::sweep::run_sweep;
use crate::model::{SystemParams, SystemState};

pub const SUM_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-8;
pub const CLOSED_FORM_TOL: f64 = 1e-12;
pub const CONSERVATION_TOL: f64 = 1e-9;
pub const AGREEMENT_TOL: f64 = 0.03;
pub const PROBABILITY_FLOOR: f64 = 0.005;
pub const AGREEMENT_EVENTS: u64 = 1_000_000;
pub const AGREEMENT_REPLICATIONS: u32 = 20;
pub const AGREEMENT_LAMBDA_P: [f64; 3] = [0.5, 2.0, 4.0];
pub const MAP_EVENTS: u64 = 100_000;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {} ({:.2}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    Outcome { id, title, passed, detail, elapsed: start.elapsed() }
}

fn analytic_grid() -> Vec<(Scenario, f64, Result<ctmc::Analysis, ctmc::CtmcError>)> {
    let mut out = Vec::new();
    for sc in Scenario::reference_set() {
        for lp in default_grid() {
            let p = SystemParams { lambda_p: lp, ..sc.params };
            out.push((sc.clone(), lp, ctmc::analyze(&p)));
        }
    }
    out
}

fn metrics_by_label(label: &str) -> Vec<Metrics> {
    let sc = Scenario::reference_set()
        .into_iter()
        .find(|s| s.label == label)
        .expect("reference label");
    default_grid()
        .into_iter()
        .map(|lp| {
            ctmc::analyze(&SystemParams { lambda_p: lp, ..sc.params })
                .expect("reference scenarios solve")
                .metrics
        })
        .collect()
}

/// 1: N=4, B_m=2, B_M=3 enumerates exactly the brute-force feasible set.
pub fn state_space_oracle() -> Outcome {
    timed(1, "state-space enumeration (N=4, B_m=2, B_M=3)", || {
        let start = Instant::now();
        let p = SystemParams { channels: 4, ..SystemParams::reference(2.0, 3.0, 1.0) };
        let got = p.enumerate_states().states().to_vec();
        let mut brute = Vec::new();
        for i in 0..=4u32 {
            for j in 0..=2u32 {
                if i + 2 * j <= 4 {
                    brute.push(SystemState::new(i, j));
                }
            }
        }
        let dt = start.elapsed();
        let ok = got == brute && got.len() == 9 && dt < Duration::from_secs(1);
        (ok, format!("{} states, expected {} (brute force)", got.len(), brute.len()))
    })
}

/// 2: normalization, balance residual, and agreement with uniformization.
pub fn solver_correctness() -> Outcome {
    timed(2, "steady-state solver vs uniformization oracle", || {
        let start = Instant::now();
        let mut worst_sum = 0.0f64;
        let mut worst_res = 0.0f64;
        let mut worst_oracle = 0.0f64;
        let mut failures = Vec::new();
        for (sc, lp, a) in analytic_grid() {
            let a = match a {
                Ok(a) => a,
                Err(e) => {
                    failures.push(format!("{} @ {lp}: {e}", sc.label));
                    continue;
                }
            };
            worst_sum = worst_sum.max((a.steady.pi.iter().sum::<f64>() - 1.0).abs());
            worst_res = worst_res.max(ctmc::verify_balance(&a.steady, &a.generator));
            match uniformization::stationary(&a.generator, 1e-15) {
                Some(u) => {
                    let d = u.iter().zip(&a.steady.pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    worst_oracle = worst_oracle.max(d);
                }
                None => failures.push(format!("{} @ {lp}: uniformization did not converge", sc.label)),
            }
        }
        let dt = start.elapsed();
        let ok = failures.is_empty()
            && worst_sum <= SUM_TOL
            && worst_res < RESIDUAL_TOL
            && worst_oracle <= ORACLE_TOL
            && dt < Duration::from_secs(5);
        let mut detail = format!(
            "max |Σπ-1| = {worst_sum:.2e}, max residual = {worst_res:.2e}, max |π_ls - π_unif| = {worst_oracle:.2e}"
        );
        if !failures.is_empty() {
            detail.push_str(&format!("; failures: {}", failures.join(", ")));
        }
        (ok, detail)
    })
}

/// 3: N=1, B_m=B_M=1, λ_p=0 against the two-state closed form.
pub fn closed_form() -> Outcome {
    timed(3, "single-channel closed form", || {
        let p = SystemParams { channels: 1, ..SystemParams::reference(1.0, 1.0, 0.0) };
        let m = match ctmc::analyze(&p) {
            Ok(a) => a.metrics,
            Err(e) => return (false, e.to_string()),
        };
        let pb = p.lambda_s / (p.lambda_s + p.h_s + p.r_s);
        let errs = [
            (m.p_block - pb).abs(),
            (m.utilization - pb).abs(),
            (m.throughput - (1.0 - pb) * p.lambda_s).abs(),
            m.p_drop.abs(),
        ];
        let worst = errs.iter().copied().fold(0.0, f64::max);
        (worst <= CLOSED_FORM_TOL, format!("P_b = {:.12}, max deviation {worst:.2e}", m.p_block))
    })
}

/// 4: Th = (1 - P_b)(1 - P_d) λ_s.
pub fn rate_conservation() -> Outcome {
    timed(4, "rate conservation Th = (1-P_b)(1-P_d)λ_s", || {
        let mut worst = 0.0f64;
        for (sc, _, a) in analytic_grid() {
            let Ok(a) = a else { return (false, format!("{} failed to solve", sc.label)) };
            let m = a.metrics;
            let flow = (1.0 - m.p_block) * (1.0 - m.p_drop) * sc.params.lambda_s;
            worst = worst.max((m.throughput - flow).abs());
        }
        (worst <= CONSERVATION_TOL, format!("max |Th - flow| = {worst:.2e}"))
    })
}

/// 5: simulation and analysis agree at 3% relative (probability floor
/// 0.005) at desk scale.
pub fn cross_engine_agreement(mode: Execution) -> Outcome {
    timed(5, "simulation vs analysis (10^6 events x 20 replications)", || {
        let start = Instant::now();
        let mut spec = SweepSpec::reference();
        spec.grid = AGREEMENT_LAMBDA_P.to_vec();
        spec.engines = Engines::Both;
        spec.sim.replications = AGREEMENT_REPLICATIONS;
        spec.sim.warmup_events = AGREEMENT_EVENTS / 10;
        spec.sim.max_events = AGREEMENT_EVENTS + spec.sim.warmup_events;
        spec.sim.seed = 20_120_501;
        spec.agreement.tolerance = AGREEMENT_TOL;
        spec.agreement.probability_floor = PROBABILITY_FLOOR;
        let rows = crate::harness::sweep::run_sweep_with(&spec, mode);
        let failed: Vec<_> = rows.iter().filter(|r| r.failed()).collect();
        let report = agreement_report(&rows, &spec.agreement);
        let dt = start.elapsed();
        let expected = spec.base.len() * spec.grid.len();
        let ok = failed.is_empty()
            && report.comparisons.len() == expected
            && report.passed()
            && dt < Duration::from_secs(120);
        let worst = report
            .worst
            .as_ref()
            .map(|w| format!("worst {} {:.2}% ({} @ λ_p={})", w.metric, w.relative_error * 100.0, w.scenario, w.sweep_value))
            .unwrap_or_default();
        let bad: Vec<String> = report
            .comparisons
            .iter()
            .filter(|c| !c.within_tolerance)
            .map(|c| {
                let names: Vec<_> = (0..4)
                    .filter(|&k| c.relative_error[k] > report.tolerance)
                    .map(|k| format!("{}={:.2}%", METRIC_NAMES[k], c.relative_error[k] * 100.0))
                    .collect();
                format!("{} @ {}: {}", c.scenario, c.sweep_value, names.join(" "))
            })
            .collect();
        let mut detail = format!("{}/{} points within tolerance, {worst}", expected - bad.len(), expected);
        if !bad.is_empty() {
            detail.push_str(&format!("; out of tolerance: {}", bad.join("; ")));
        }
        if !failed.is_empty() {
            detail.push_str(&format!("; {} rows failed", failed.len()));
        }
        (ok, detail)
    })
}

/// 6: CAF(4,2) beats CCA(4,4) and CCA(2,2) on every metric at every point.
pub fn dominance() -> Outcome {
    timed(6, "CAF(4,2) dominates CCA(4,4) and CCA(2,2)", || {
        let caf = metrics_by_label("CAF(4,2)");
        let mut violations = Vec::new();
        for other in ["CCA(4,4)", "CCA(2,2)"] {
            for (k, (c, o)) in caf.iter().zip(metrics_by_label(other)).enumerate() {
                let checks = [
                    ("p_block", c.p_block < o.p_block),
                    ("p_drop", c.p_drop < o.p_drop),
                    ("utilization", c.utilization > o.utilization),
                    ("throughput", c.throughput > o.throughput),
                ];
                for (name, ok) in checks {
                    if !ok {
                        violations.push(format!("{name} vs {other} @ λ_p={}", default_grid()[k]));
                    }
                }
            }
        }
        let detail = if violations.is_empty() {
            "strict on all four metrics at all 10 grid points".to_string()
        } else {
            violations.join("; ")
        };
        (violations.is_empty(), detail)
    })
}

/// 7: monotonicity in λ_p and the effect of B_m and B_M.
pub fn trends() -> Outcome {
    timed(7, "blocking/dropping trends in λ_p, B_m and B_M", || {
        let mut problems = Vec::new();
        for sc in Scenario::reference_set() {
            let m = metrics_by_label(&sc.label);
            for w in m.windows(2) {
                if w[1].p_block < w[0].p_block || w[1].p_drop < w[0].p_drop {
                    problems.push(format!("{} not monotone", sc.label));
                    break;
                }
            }
        }
        let base = metrics_by_label("CAF(4,2)");
        let lower_min = metrics_by_label("CAF(4,1)");
        let lower_max = metrics_by_label("CAF(3,2)");
        for (k, lp) in default_grid().into_iter().enumerate() {
            let pairs = [
                ("B_m 2→1", &lower_min[k], &base[k]),
                ("B_M 3→4", &base[k], &lower_max[k]),
            ];
            for (change, better, worse) in pairs {
                if better.p_block >= worse.p_block {
                    problems.push(format!(
                        "{change} raises P_b @ λ_p={lp} ({:.6} vs {:.6})",
                        better.p_block, worse.p_block
                    ));
                }
                if better.p_drop >= worse.p_drop {
                    problems.push(format!(
                        "{change} raises P_d @ λ_p={lp} ({:.6} vs {:.6})",
                        better.p_drop, worse.p_drop
                    ));
                }
            }
        }
        let detail = if problems.is_empty() {
            "monotone in λ_p; B_m 2→1 and B_M 3→4 both lower P_b and P_d everywhere".to_string()
        } else {
            problems.join("; ")
        };
        (problems.is_empty(), detail)
    })
}

/// Utilization gain from raising B_M 3→4 (at B_m=2) and from lowering B_m
/// 2→1 (at B_M=4), per grid point.
pub fn utilization_gains() -> Vec<(f64, f64, f64)> {
    let base = metrics_by_label("CAF(4,2)");
    let low_max = metrics_by_label("CAF(3,2)");
    let low_min = metrics_by_label("CAF(4,1)");
    default_grid()
        .into_iter()
        .enumerate()
        .map(|(k, lp)| {
            (
                lp,
                base[k].utilization - low_max[k].utilization,
                low_min[k].utilization - base[k].utilization,
            )
        })
        .collect()
}

/// 8: at low λ_p raising B_M helps utilization more than lowering B_m; at
/// high λ_p the order reverses.
pub fn utilization_crossover() -> Outcome {
    timed(8, "utilization crossover between B_M and B_m gains", || {
        let gains = utilization_gains();
        let low = gains.iter().find(|g| g.1 > g.2).map(|g| g.0);
        let high = low.and_then(|l| gains.iter().find(|g| g.0 > l && g.1 < g.2).map(|g| g.0));
        let table: Vec<String> = gains
            .iter()
            .map(|(lp, bm, bmin)| format!("{lp}:{:+.4}/{:+.4}", bm, bmin))
            .collect();
        match (low, high) {
            (Some(l), Some(h)) => (
                true,
                format!("B_M gain leads at λ_p={l}, B_m gain leads at λ_p={h} [{}]", table.join(" ")),
            ),
            _ => (false, format!("no crossover found [{}]", table.join(" "))),
        }
    })
}

/// 9: spectrum-map conservation and fragment bounds over tracked runs.
pub fn spectrum_map_invariants() -> Outcome {
    timed(9, "spectrum-map invariants over a 10^5-event tracked run", || {
        let mut lines = Vec::new();
        let mut ok = true;
        for sc in Scenario::reference_set() {
            let mut cfg = SimConfig::new(SystemParams { lambda_p: 2.0, ..sc.params });
            cfg.max_events = MAP_EVENTS;
            cfg.warmup_events = 0;
            cfg.replications = 1;
            cfg.seed = 9;
            cfg.track_spectrum_map = true;
            match des::simulate(&cfg) {
                Ok(r) => {
                    let m = r.map.expect("tracking enabled");
                    ok &= m.snapshots == MAP_EVENTS && m.max_fragments_per_su <= 2;
                    lines.push(format!(
                        "{}: max {} fragments (bound {}, exceeded in {} snapshots), ≤{}/SU",
                        sc.label, m.max_total_fragments, m.fragment_bound, m.bound_exceeded, m.max_fragments_per_su
                    ));
                }
                Err(e) => {
                    ok = false;
                    lines.push(format!("{}: {e}", sc.label));
                }
            }
        }
        (ok, lines.join("; "))
    })
}

/// 10: identical spec and seed give byte-identical CSV.
pub fn determinism() -> Outcome {
    timed(10, "byte-identical sweep output", || {
        let mut spec = SweepSpec::reference();
        spec.grid = vec![0.5, 2.0, 4.0];
        spec.sim.set_events(50_000);
        spec.sim.replications = 3;
        spec.sim.seed = 77;
        let a = render(&run_sweep(&spec), Format::Csv);
        let b = render(&run_sweep_sequential(&spec), Format::Csv);
        match (a, b) {
            (Ok(a), Ok(b)) => (a == b, format!("{} bytes, identical: {}", a.len(), a == b)),
            (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
        }
    })
}

fn run_sweep_sequential(spec: &SweepSpec) -> Vec<crate::harness::ResultRow> {
    crate::harness::sweep::run_sweep_with(spec, Execution::Sequential)
}

/// Every check in order.
pub fn run_all() -> Vec<Outcome> {
    let checks: Vec<fn() -> Outcome> = vec![
        state_space_oracle,
        solver_correctness,
        closed_form,
        rate_conservation,
        || cross_engine_agreement(Execution::default()),
        dominance,
        trends,
        utilization_crossover,
        spectrum_map_invariants,
        determinism,
    ];
    checks.iter().map(|check| check()).collect()
}
