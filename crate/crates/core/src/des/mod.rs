//! Discrete-event simulation of the CAF admission and sharing procedures.
//!
//! The engine samples the jump chain directly: from the current `(i, j)`
//! the next event is drawn among the competing exponential clocks (PU
//! arrival, SU arrival, PU departure, SU departure) and the holding time is
//! exponential in their total rate. With every duration exponential this is
//! exact, and it is statistically equivalent to keeping one timer per user.

pub mod spectrum;
pub mod trace;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctmc::Metrics;
use crate::exec::{self, Execution};
use crate::model::{ModelError, SystemParams, SystemState};
use spectrum::{FragmentCensus, SpectrumMap, SuId};
use trace::{EventKind, TraceRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("replication {0}: no SU admitted after warm-up, dropping probability undefined")]
    NoAdmissions(u32),
    #[error("spectrum map invariant violated at event {event}: {reason}")]
    SpectrumMap { event: u64, reason: String },
    #[error("departure from an empty population ({0:?})")]
    EmptyPopulation(UserKind),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: SystemParams,
    /// Total events per replication, warm-up included.
    pub max_events: u64,
    pub seed: u64,
    pub replications: u32,
    pub warmup_events: u64,
    pub track_spectrum_map: bool,
}

impl SimConfig {
    pub const DEFAULT_EVENTS: u64 = 1_000_000;
    pub const DEFAULT_REPLICATIONS: u32 = 20;

    /// Desk-scale defaults: 10^6 events, 10% warm-up, 20 replications.
    pub fn new(params: SystemParams) -> Self {
        SimConfig {
            params,
            max_events: Self::DEFAULT_EVENTS,
            seed: 0,
            replications: Self::DEFAULT_REPLICATIONS,
            warmup_events: Self::DEFAULT_EVENTS / 10,
            track_spectrum_map: false,
        }
    }

    /// `post_warmup` counted events preceded by a warm-up of a tenth of that.
    pub fn with_counted_events(mut self, post_warmup: u64) -> Self {
        self.warmup_events = post_warmup / 10;
        self.max_events = post_warmup + self.warmup_events;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.max_events == 0 {
            return Err(SimError::Config("max_events must be positive".into()));
        }
        if self.warmup_events >= self.max_events {
            return Err(SimError::Config(format!(
                "warmup_events ({}) must be below max_events ({})",
                self.warmup_events, self.max_events
            )));
        }
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        Ok(())
    }
}

/// Event counts and time integrals gathered after warm-up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimCounters {
    pub su_arrivals: u64,
    pub su_blocked: u64,
    pub su_admitted: u64,
    pub su_dropped: u64,
    pub su_departed: u64,
    pub pu_arrivals: u64,
    /// PU arrivals discarded because every channel already hosts a PU.
    pub pu_lost: u64,
    pub pu_departed: u64,
    /// ∫ j·B(i,j) dt, in channel·time.
    pub occupancy_integral: f64,
    pub elapsed: f64,
    pub su_in_system_at_start: u64,
    pub su_in_system_at_end: u64,
}

impl SimCounters {
    pub fn check_conservation(&self, channels: u32) -> Result<(), String> {
        if self.su_arrivals != self.su_blocked + self.su_admitted {
            return Err(format!(
                "arrivals {} != blocked {} + admitted {}",
                self.su_arrivals, self.su_blocked, self.su_admitted
            ));
        }
        if self.su_in_system_at_start + self.su_admitted
            != self.su_dropped + self.su_departed + self.su_in_system_at_end
        {
            return Err("admitted SUs do not balance departures, drops and in-flight".into());
        }
        if self.occupancy_integral > channels as f64 * self.elapsed * (1.0 + 1e-12) {
            return Err("occupancy integral exceeds N·elapsed".into());
        }
        Ok(())
    }

    pub fn metrics(&self, channels: u32) -> Option<Metrics> {
        if self.su_admitted == 0 || self.su_arrivals == 0 || self.elapsed <= 0.0 {
            return None;
        }
        Some(Metrics {
            p_block: self.su_blocked as f64 / self.su_arrivals as f64,
            p_drop: self.su_dropped as f64 / self.su_admitted as f64,
            utilization: self.occupancy_integral / (channels as f64 * self.elapsed),
            throughput: self.su_departed as f64 / self.elapsed,
        })
    }

    fn merge(&mut self, o: &SimCounters) {
        self.su_arrivals += o.su_arrivals;
        self.su_blocked += o.su_blocked;
        self.su_admitted += o.su_admitted;
        self.su_dropped += o.su_dropped;
        self.su_departed += o.su_departed;
        self.pu_arrivals += o.pu_arrivals;
        self.pu_lost += o.pu_lost;
        self.pu_departed += o.pu_departed;
        self.occupancy_integral += o.occupancy_integral;
        self.elapsed += o.elapsed;
        self.su_in_system_at_start += o.su_in_system_at_start;
        self.su_in_system_at_end += o.su_in_system_at_end;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserKind {
    Pu,
    Su,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuArrival {
    /// Admitted; every SU (the new one included) now holds `bandwidth`.
    Admit { id: SuId, bandwidth: f64 },
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PuArrival {
    /// All channels already host PUs; the arrival is discarded.
    NoChange,
    Normal,
    Drop { victim: SuId },
}

/// Live CAF system: the `(i, j)` state plus the identities of active SUs.
#[derive(Debug, Clone)]
pub struct CafSystem {
    params: SystemParams,
    state: SystemState,
    sus: Vec<SuId>,
    next_id: SuId,
}

impl CafSystem {
    pub fn new(params: SystemParams) -> Self {
        CafSystem { params, state: SystemState::new(0, 0), sus: Vec::new(), next_id: 0 }
    }

    pub fn state(&self) -> SystemState {
        self.state
    }

    pub fn active_sus(&self) -> &[SuId] {
        &self.sus
    }

    /// Bandwidth each active SU currently holds.
    pub fn per_su_bandwidth(&self) -> f64 {
        self.params.share(self.state.i, self.state.j)
    }

    /// A new SU takes `B_M` when spectrum is plentiful, otherwise all SUs
    /// re-share equally; blocked if that would leave anyone below `B_m`.
    pub fn on_su_arrival(&mut self) -> SuArrival {
        if self.params.blocks_su(self.state) {
            return SuArrival::Block;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.sus.push(id);
        self.state.j += 1;
        SuArrival::Admit { id, bandwidth: self.per_su_bandwidth() }
    }

    /// A PU claims a channel free of PUs. SUs hand off or re-share; if even
    /// equal sharing cannot keep everyone at `B_m`, one SU chosen uniformly
    /// at random is dropped.
    pub fn on_pu_arrival<R: Rng + ?Sized>(&mut self, rng: &mut R) -> PuArrival {
        if self.state.i >= self.params.channels {
            return PuArrival::NoChange;
        }
        if self.params.pu_arrival_drops(self.state) {
            let victim = self.remove_random_su(rng);
            self.state.i += 1;
            self.state.j -= 1;
            PuArrival::Drop { victim }
        } else {
            self.state.i += 1;
            PuArrival::Normal
        }
    }

    /// One user of `kind` leaves; remaining SUs re-share the freed spectrum
    /// up to `B_M`. The departing SU is chosen uniformly at random.
    pub fn on_departure<R: Rng + ?Sized>(
        &mut self,
        kind: UserKind,
        rng: &mut R,
    ) -> Result<SystemState, SimError> {
        match kind {
            UserKind::Pu => {
                if self.state.i == 0 {
                    return Err(SimError::EmptyPopulation(kind));
                }
                self.state.i -= 1;
            }
            UserKind::Su => {
                if self.state.j == 0 {
                    return Err(SimError::EmptyPopulation(kind));
                }
                self.remove_random_su(rng);
                self.state.j -= 1;
            }
        }
        Ok(self.state)
    }

    fn remove_random_su<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SuId {
        let k = if self.sus.len() > 1 { rng.random_range(0..self.sus.len()) } else { 0 };
        self.sus.swap_remove(k)
    }

    pub fn spectrum_map(&self) -> Result<SpectrumMap, String> {
        let mut ids = self.sus.clone();
        ids.sort_unstable();
        SpectrumMap::rebuild(self.state, &self.params, &ids)
    }
}

/// Extremes of the fragment census over every tracked snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MapSummary {
    pub snapshots: u64,
    pub max_total_fragments: usize,
    pub max_fragments_per_su: usize,
    /// ⌊N / B_m⌋
    pub fragment_bound: usize,
    pub bound_exceeded: u64,
}

impl MapSummary {
    fn record(&mut self, c: &FragmentCensus) {
        self.snapshots += 1;
        self.max_total_fragments = self.max_total_fragments.max(c.total_fragments);
        self.max_fragments_per_su = self.max_fragments_per_su.max(c.max_per_su);
        self.fragment_bound = c.bound;
        if !c.within_bound {
            self.bound_exceeded += 1;
        }
    }

    fn merge(&mut self, o: &MapSummary) {
        self.snapshots += o.snapshots;
        self.max_total_fragments = self.max_total_fragments.max(o.max_total_fragments);
        self.max_fragments_per_su = self.max_fragments_per_su.max(o.max_fragments_per_su);
        self.fragment_bound = self.fragment_bound.max(o.fragment_bound);
        self.bound_exceeded += o.bound_exceeded;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: u32,
    pub seed: u64,
    pub counters: SimCounters,
    pub metrics: Metrics,
    pub map: Option<MapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Mean of the per-replication estimates.
    pub metrics: Metrics,
    /// 95% normal-approximation half-widths; `None` with one replication.
    pub half_width: Option<Metrics>,
    /// Counters summed over replications.
    pub counters: SimCounters,
    pub map: Option<MapSummary>,
    pub replications: Vec<Replication>,
}

pub fn replication_seed(base: u64, index: u32) -> u64 {
    base.wrapping_add(index as u64)
}

/// Runs every replication with the default execution mode.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport, SimError> {
    simulate_with(cfg, Execution::default())
}

pub fn simulate_with(cfg: &SimConfig, mode: Execution) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let reps = exec::map_indices(cfg.replications as usize, mode, |k| {
        run_replication(cfg, k as u32, None)
    });
    let reps = reps.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(reps))
}

/// Runs every replication in order, writing one trace line per event.
pub fn simulate_traced(cfg: &SimConfig, out: &mut dyn Write) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let mut reps = Vec::with_capacity(cfg.replications as usize);
    for k in 0..cfg.replications {
        reps.push(run_replication(cfg, k, Some(&mut *out))?);
    }
    out.flush()?;
    Ok(summarize(reps))
}

fn summarize(reps: Vec<Replication>) -> SimReport {
    let n = reps.len() as f64;
    let mut sum = [0.0; 4];
    for r in &reps {
        for (acc, v) in sum.iter_mut().zip(r.metrics.as_array()) {
            *acc += v;
        }
    }
    let mean = sum.map(|s| s / n);
    let half_width = (reps.len() > 1).then(|| {
        let mut ss = [0.0; 4];
        for r in &reps {
            for ((acc, v), m) in ss.iter_mut().zip(r.metrics.as_array()).zip(mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let hw = ss.map(|s| 1.96 * (s / (n - 1.0)).sqrt() / n.sqrt());
        to_metrics(hw)
    });
    let mut counters = SimCounters::default();
    let mut map: Option<MapSummary> = None;
    for r in &reps {
        counters.merge(&r.counters);
        if let Some(m) = &r.map {
            map.get_or_insert_with(MapSummary::default).merge(m);
        }
    }
    SimReport { metrics: to_metrics(mean), half_width, counters, map, replications: reps }
}

fn to_metrics(a: [f64; 4]) -> Metrics {
    Metrics { p_block: a[0], p_drop: a[1], utilization: a[2], throughput: a[3] }
}

/// One independent run seeded with `seed + index`.
pub fn run_replication(
    cfg: &SimConfig,
    index: u32,
    mut trace: Option<&mut dyn Write>,
) -> Result<Replication, SimError> {
    let p = cfg.params;
    let seed = replication_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = CafSystem::new(p);
    let mut c = SimCounters::default();
    let mut map_summary = cfg.track_spectrum_map.then(MapSummary::default);
    let mut time = 0.0;

    for event in 0..cfg.max_events {
        let counting = event >= cfg.warmup_events;
        if event == cfg.warmup_events {
            c.su_in_system_at_start = sys.state.j as u64;
        }
        let SystemState { i, j } = sys.state;
        let pu_in = p.lambda_p;
        let su_in = p.lambda_s;
        let pu_out = i as f64 * p.mu_p;
        let su_out = j as f64 * p.service(i, j);
        let total = pu_in + su_in + pu_out + su_out;

        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        time += dt;
        if counting {
            c.elapsed += dt;
            c.occupancy_integral += j as f64 * p.share(i, j) * dt;
        }

        let pick = rng.random::<f64>() * total;
        let kind = if pick < su_in {
            match sys.on_su_arrival() {
                SuArrival::Admit { .. } => {
                    if counting {
                        c.su_arrivals += 1;
                        c.su_admitted += 1;
                    }
                    EventKind::SuAdmitted
                }
                SuArrival::Block => {
                    if counting {
                        c.su_arrivals += 1;
                        c.su_blocked += 1;
                    }
                    EventKind::SuBlocked
                }
            }
        } else if pick < su_in + pu_in {
            let outcome = sys.on_pu_arrival(&mut rng);
            if counting {
                c.pu_arrivals += 1;
                match outcome {
                    PuArrival::NoChange => c.pu_lost += 1,
                    PuArrival::Drop { .. } => c.su_dropped += 1,
                    PuArrival::Normal => {}
                }
            }
            match outcome {
                PuArrival::NoChange => EventKind::PuLost,
                PuArrival::Normal => EventKind::PuArrival,
                PuArrival::Drop { .. } => EventKind::SuDropped,
            }
        } else if pick < su_in + pu_in + pu_out || j == 0 {
            // `j == 0` only catches round-off at the top of the range.
            sys.on_departure(UserKind::Pu, &mut rng)?;
            if counting {
                c.pu_departed += 1;
            }
            EventKind::PuDeparture
        } else {
            sys.on_departure(UserKind::Su, &mut rng)?;
            if counting {
                c.su_departed += 1;
            }
            EventKind::SuDeparture
        };

        debug_assert!(p.is_feasible(sys.state), "visited infeasible {}", sys.state);

        let snapshot = match map_summary.as_mut() {
            Some(summary) => {
                let map = sys
                    .spectrum_map()
                    .map_err(|reason| SimError::SpectrumMap { event, reason })?;
                map.check(sys.state, &p)
                    .map_err(|reason| SimError::SpectrumMap { event, reason })?;
                summary.record(&map.census(&p));
                Some(map)
            }
            None => None,
        };

        if let Some(out) = trace.as_mut() {
            let rec = TraceRecord {
                rep: index,
                event,
                time,
                kind,
                warmup: !counting,
                i: sys.state.i,
                j: sys.state.j,
                bandwidth: sys.per_su_bandwidth(),
                map: snapshot.as_ref(),
            };
            rec.write_line(&mut **out)?;
        }
    }
    c.su_in_system_at_end = sys.state.j as u64;
    c.check_conservation(p.channels)
        .map_err(|reason| SimError::Config(format!("counter conservation failed: {reason}")))?;
    let metrics = c.metrics(p.channels).ok_or(SimError::NoAdmissions(index))?;
    Ok(Replication { index, seed, counters: c, metrics, map: map_summary })
}
