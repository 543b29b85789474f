//! Analytical-versus-simulation agreement.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::config::AgreementSettings;
use super::sweep::{Engine, Quality, ResultRow};

pub const METRIC_NAMES: [&str; 4] = ["p_block", "p_drop", "utilization", "throughput"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub sweep_value: f64,
    /// `|sim - ana| / max(ana, floor)` per metric; the floor only applies
    /// to the two probabilities.
    pub relative_error: [f64; 4],
    /// Confidence half-width on the same relative scale, when available.
    pub relative_half_width: Option<[f64; 4]>,
    pub within_tolerance: bool,
    /// Half-widths are small enough for the comparison to mean something.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Worst {
    pub scenario: String,
    pub sweep_value: f64,
    pub metric: &'static str,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub tolerance: f64,
    pub probability_floor: f64,
    pub comparisons: Vec<Comparison>,
    pub worst: Option<Worst>,
}

impl AgreementReport {
    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.within_tolerance)
    }

    pub fn unconverged(&self) -> usize {
        self.comparisons.iter().filter(|c| !c.converged).count()
    }
}

/// Pairs every analytical row with the simulation row at the same
/// `(scenario, sweep value)`. Failed rows are skipped.
pub fn agreement_report(rows: &[ResultRow], settings: &AgreementSettings) -> AgreementReport {
    let mut pairs: BTreeMap<(String, u64), [Option<&ResultRow>; 2]> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows.iter().filter(|r| r.metrics.is_some()) {
        let key = (r.scenario.clone(), r.sweep_value.to_bits());
        let slot = pairs.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            [None, None]
        });
        slot[matches!(r.engine, Engine::Simulation) as usize] = Some(r);
    }

    let mut comparisons = Vec::new();
    let mut worst: Option<Worst> = None;
    for key in order {
        let [Some(ana), Some(sim)] = pairs[&key] else { continue };
        let a = ana.metrics.expect("filtered").as_array();
        let s = sim.metrics.expect("filtered").as_array();
        let denom: [f64; 4] = std::array::from_fn(|k| {
            let floor = if k < 2 { settings.probability_floor } else { 0.0 };
            a[k].abs().max(floor).max(f64::MIN_POSITIVE)
        });
        let relative_error: [f64; 4] = std::array::from_fn(|k| (s[k] - a[k]).abs() / denom[k]);
        let relative_half_width = match &sim.quality {
            Quality::HalfWidth(Some(h)) => {
                let h = h.as_array();
                Some(std::array::from_fn(|k| h[k] / denom[k]))
            }
            _ => None,
        };
        let within_tolerance = relative_error.iter().all(|&e| e <= settings.tolerance);
        let converged = relative_half_width
            .is_some_and(|h: [f64; 4]| h.iter().all(|&x| x <= settings.tolerance));
        for (k, &e) in relative_error.iter().enumerate() {
            if worst.as_ref().is_none_or(|w| e > w.relative_error) {
                worst = Some(Worst {
                    scenario: ana.scenario.clone(),
                    sweep_value: ana.sweep_value,
                    metric: METRIC_NAMES[k],
                    relative_error: e,
                });
            }
        }
        comparisons.push(Comparison {
            scenario: ana.scenario.clone(),
            sweep_value: ana.sweep_value,
            relative_error,
            relative_half_width,
            within_tolerance,
            converged,
        });
    }
    AgreementReport {
        tolerance: settings.tolerance,
        probability_floor: settings.probability_floor,
        comparisons,
        worst,
    }
}

impl fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "agreement: no analytical/simulation pairs to compare");
        }
        writeln!(
            f,
            "agreement (tolerance {:.1}%, probability floor {}):",
            self.tolerance * 100.0,
            self.probability_floor
        )?;
        writeln!(
            f,
            "  {:<12} {:>8}  {:>8} {:>8} {:>8} {:>8}  status",
            "scenario", "value", "p_block", "p_drop", "util", "thru"
        )?;
        for c in &self.comparisons {
            let e = c.relative_error.map(|x| x * 100.0);
            let status = match (c.within_tolerance, c.converged) {
                (true, true) => "ok",
                (true, false) => "ok (unconverged)",
                (false, true) => "FAIL",
                (false, false) => "FAIL (unconverged)",
            };
            writeln!(
                f,
                "  {:<12} {:>8.3}  {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}%  {status}",
                c.scenario, c.sweep_value, e[0], e[1], e[2], e[3]
            )?;
        }
        if let Some(w) = &self.worst {
            writeln!(
                f,
                "  worst: {} at {} ({}) {:.3}%",
                w.metric,
                w.sweep_value,
                w.scenario,
                w.relative_error * 100.0
            )?;
        }
        if self.unconverged() > 0 {
            writeln!(
                f,
                "  warning: {} comparison(s) have confidence half-widths above tolerance; increase events or replications",
                self.unconverged()
            )?;
        }
        write!(f, "  result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::Metrics;
    use crate::harness::config::{Engines, SweepSpec};
    use crate::harness::sweep::run_sweep;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Metrics {
        Metrics { p_block: a, p_drop: b, utilization: c, throughput: d }
    }

    fn row(engine: Engine, metrics: Metrics, quality: Quality) -> ResultRow {
        ResultRow { scenario: "X".into(), sweep_value: 1.0, engine, metrics: Some(metrics), quality }
    }

    #[test]
    fn relative_errors_use_probability_floor() {
        let rows = vec![
            row(Engine::Analytical, m(0.2, 0.001, 0.5, 4.0), Quality::Residual(0.0)),
            row(
                Engine::Simulation,
                m(0.202, 0.0011, 0.49, 4.2),
                Quality::HalfWidth(Some(m(0.001, 0.0001, 0.001, 0.01))),
            ),
        ];
        let r = agreement_report(&rows, &AgreementSettings::default());
        let c = &r.comparisons[0];
        let want = [0.01, 0.0001 / 0.005, 0.02, 0.05];
        for (x, y) in c.relative_error.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(!c.within_tolerance);
        assert!(c.converged);
        assert_eq!(r.worst.as_ref().unwrap().metric, "throughput");
        assert!(!r.passed());
    }

    #[test]
    fn analytical_only_gives_empty_report() {
        let mut spec = SweepSpec::reference();
        spec.engines = Engines::Analytical;
        let rows = run_sweep(&spec);
        let r = agreement_report(&rows, &spec.agreement);
        assert!(r.is_empty());
        assert!(r.to_string().contains("no analytical/simulation pairs"));
    }

    #[test]
    fn tiny_runs_are_flagged() {
        let mut spec = SweepSpec::reference();
        spec.base.truncate(1);
        spec.grid = vec![2.0];
        spec.sim.set_events(1_000);
        spec.sim.replications = 3;
        let rows = run_sweep(&spec);
        let r = agreement_report(&rows, &spec.agreement);
        assert_eq!(r.comparisons.len(), 1);
        assert_eq!(r.unconverged(), 1);
        assert!(r.to_string().contains("unconverged"));
    }
}
