use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ctmc::{self, Metrics};
use crate::des;
use crate::exec::{self, Execution};

use super::config::{Engines, Scenario, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytical,
    Simulation,
}

impl Engine {
    pub fn tag(self) -> &'static str {
        match self {
            Engine::Analytical => "analytical",
            Engine::Simulation => "simulation",
        }
    }
}

/// Accuracy indicator attached to each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    /// Balance residual `max |πQ|` of the analytical solution.
    Residual(f64),
    /// 95% half-widths across replications (absent with one replication).
    HalfWidth(Option<Metrics>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep_value: f64,
    pub engine: Engine,
    /// `None` when the engine failed at this point; see `quality`.
    pub metrics: Option<Metrics>,
    pub quality: Quality,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        matches!(self.quality, Quality::Failed(_))
    }
}

/// Seed for one sweep point. Depends on the scenario label rather than its
/// position, so adding or removing scenarios leaves other rows untouched.
pub fn point_seed(base: u64, label: &str, grid_index: usize) -> u64 {
    // FNV-1a over the label, then two splitmix64 rounds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(splitmix(base ^ h) ^ grid_index as u64)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn point_rows(spec: &SweepSpec, scenario: &Scenario, grid_index: usize) -> Vec<ResultRow> {
    let value = spec.grid[grid_index];
    let params = spec.sweep_variable.apply(&scenario.params, value);
    let mut rows = Vec::with_capacity(2);
    let row = |engine, metrics, quality| ResultRow {
        scenario: scenario.label.clone(),
        sweep_value: value,
        engine,
        metrics,
        quality,
    };
    if spec.engines.analytical() {
        rows.push(match ctmc::analyze(&params) {
            Ok(a) => row(Engine::Analytical, Some(a.metrics), Quality::Residual(a.steady.residual)),
            Err(e) => row(Engine::Analytical, None, Quality::Failed(e.to_string())),
        });
    }
    if spec.engines.simulation() {
        let seed = point_seed(spec.sim.seed, &scenario.label, grid_index);
        let cfg = spec.sim.config_for(params, seed);
        // Points already run in parallel; replications stay sequential.
        rows.push(match des::simulate_with(&cfg, Execution::Sequential) {
            Ok(r) => row(Engine::Simulation, Some(r.metrics), Quality::HalfWidth(r.half_width)),
            Err(e) => row(Engine::Simulation, None, Quality::Failed(e.to_string())),
        });
    }
    rows
}

/// Every scenario at every grid point, in scenario-major order with the
/// analytical row before the simulation row.
pub fn run_sweep(spec: &SweepSpec) -> Vec<ResultRow> {
    run_sweep_with(spec, Execution::default())
}

pub fn run_sweep_with(spec: &SweepSpec, mode: Execution) -> Vec<ResultRow> {
    let points = spec.grid.len();
    let per_point = exec::map_indices(spec.base.len() * points, mode, |k| {
        point_rows(spec, &spec.base[k / points], k % points)
    });
    per_point.into_iter().flatten().collect()
}

/// Like [`run_sweep`] but one point at a time, writing a JSON event trace
/// for every simulated point. Each point's records are preceded by a
/// header line naming the scenario, sweep value and seed.
pub fn run_sweep_traced(spec: &SweepSpec, out: &mut dyn Write) -> Result<Vec<ResultRow>, des::SimError> {
    let mut rows = Vec::new();
    for scenario in &spec.base {
        for (k, &value) in spec.grid.iter().enumerate() {
            let params = spec.sweep_variable.apply(&scenario.params, value);
            if spec.engines.analytical() {
                let mut only_ana = spec.clone();
                only_ana.engines = Engines::Analytical;
                rows.extend(point_rows(&only_ana, scenario, k));
            }
            if spec.engines.simulation() {
                let seed = point_seed(spec.sim.seed, &scenario.label, k);
                let header = serde_json::json!({
                    "scenario": scenario.label,
                    "sweep_variable": spec.sweep_variable.name(),
                    "sweep_value": value,
                    "seed": seed,
                });
                writeln!(out, "{header}")?;
                let cfg = spec.sim.config_for(params, seed);
                let row = |metrics, quality| ResultRow {
                    scenario: scenario.label.clone(),
                    sweep_value: value,
                    engine: Engine::Simulation,
                    metrics,
                    quality,
                };
                rows.push(match des::simulate_traced(&cfg, out) {
                    Ok(r) => row(Some(r.metrics), Quality::HalfWidth(r.half_width)),
                    Err(des::SimError::Io(e)) => return Err(des::SimError::Io(e)),
                    Err(e) => row(None, Quality::Failed(e.to_string())),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        let mut spec = SweepSpec::reference();
        spec.grid = vec![0.0, 1.0, 4.0];
        spec.sim.set_events(20_000);
        spec.sim.replications = 2;
        spec.sim.seed = 5;
        spec
    }

    #[test]
    fn rows_are_ordered_and_complete() {
        let spec = small_spec();
        let rows = run_sweep(&spec);
        assert_eq!(rows.len(), 5 * 3 * 2);
        assert_eq!(rows[0].scenario, "CAF(4,2)");
        assert_eq!(rows[0].engine, Engine::Analytical);
        assert_eq!(rows[1].engine, Engine::Simulation);
        assert_eq!(rows[2].sweep_value, 1.0);
        assert!(rows.iter().all(|r| !r.failed()));
        for r in rows.iter().filter(|r| r.sweep_value == 0.0) {
            assert_eq!(r.metrics.unwrap().p_drop, 0.0);
        }
    }

    #[test]
    fn removing_a_scenario_keeps_other_rows() {
        let spec = small_spec();
        let full = run_sweep(&spec);
        let mut reduced = spec.clone();
        reduced.base.remove(0);
        let part = run_sweep(&reduced);
        assert_eq!(&full[6..], &part[..]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut spec = small_spec();
        spec.engines = Engines::Simulation;
        assert_eq!(
            run_sweep_with(&spec, Execution::Sequential),
            run_sweep_with(&spec, Execution::Parallel)
        );
    }

    #[test]
    fn failures_are_marked_per_row() {
        let mut spec = small_spec();
        spec.sim.set_events(5);
        spec.sim.warmup_events = 4;
        spec.base[0].params.lambda_s = 1e-9;
        let rows = run_sweep(&spec);
        assert!(rows.iter().any(|r| r.failed()));
        assert!(rows.iter().any(|r| !r.failed()));
    }

    #[test]
    fn seeds_differ_by_label_and_point() {
        assert_ne!(point_seed(1, "a", 0), point_seed(1, "b", 0));
        assert_ne!(point_seed(1, "a", 0), point_seed(1, "a", 1));
        assert_ne!(point_seed(1, "a", 0), point_seed(2, "a", 0));
        assert_eq!(point_seed(1, "a", 3), point_seed(1, "a", 3));
    }
}
