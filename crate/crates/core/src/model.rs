//! System parameters, the (PU count, SU count) state space, and the
//! per-state bandwidth, service-rate and transition-rate functions shared by
//! the analytical and simulation engines.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guard used for every comparison involving a real-valued `b_min`.
pub const FEASIBILITY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("state {0} is not feasible for these parameters")]
    Infeasible(SystemState),
    #[error("state list is not a valid ordering of the feasible space: {0}")]
    BadOrdering(String),
}

/// Model constants. Bandwidths are in channel widths, rates in 1/time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub channels: u32,
    pub b_min: f64,
    pub b_max: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub mu_p: f64,
    /// Channel-holding completion rate per unit of bandwidth.
    pub h_s: f64,
    /// Cell-residence exit rate, independent of bandwidth.
    pub r_s: f64,
}

impl SystemParams {
    /// The evaluation setup used throughout: 12 channels, μ_p = 0.45,
    /// λ_s = 7.2, h_s = r_s = 1.
    pub fn reference(b_min: f64, b_max: f64, lambda_p: f64) -> Self {
        SystemParams {
            channels: 12,
            b_min,
            b_max,
            lambda_p,
            lambda_s: 7.2,
            mu_p: 0.45,
            h_s: 1.0,
            r_s: 1.0,
        }
    }

    /// Every violated invariant, as `(field, reason)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.channels < 1 {
            out.push(("channels", "must be at least 1".to_string()));
        }
        if !self.b_min.is_finite() || self.b_min < 1.0 {
            out.push(("b_min", format!("must be >= 1, got {}", self.b_min)));
        }
        if !self.b_max.is_finite() || self.b_max < self.b_min {
            out.push((
                "b_max",
                format!("must be >= b_min ({}), got {}", self.b_min, self.b_max),
            ));
        } else if self.b_max > self.channels as f64 {
            out.push((
                "b_max",
                format!("must not exceed channels ({}), got {}", self.channels, self.b_max),
            ));
        }
        if !self.lambda_p.is_finite() || self.lambda_p < 0.0 {
            out.push(("lambda_p", format!("must be >= 0, got {}", self.lambda_p)));
        }
        for (field, v) in [
            ("lambda_s", self.lambda_s),
            ("mu_p", self.mu_p),
            ("h_s", self.h_s),
            ("r_s", self.r_s),
        ] {
            if !v.is_finite() || v <= 0.0 {
                out.push((field, format!("must be > 0, got {v}")));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, reason)) => Err(ModelError::InvalidParam { field, reason }),
        }
    }

    /// ⌊N / B_m⌋: the most SUs the system can ever hold.
    pub fn max_sus(&self) -> u32 {
        (self.channels as f64 / self.b_min + FEASIBILITY_EPS).floor() as u32
    }

    pub fn is_feasible(&self, s: SystemState) -> bool {
        s.i <= self.channels
            && s.j <= self.max_sus()
            && fits(s.i, s.j, self.b_min, self.channels)
    }

    fn check(&self, s: SystemState) -> Result<(), ModelError> {
        if self.is_feasible(s) {
            Ok(())
        } else {
            Err(ModelError::Infeasible(s))
        }
    }

    /// Per-SU bandwidth under equal sharing, `min{B_M, max{B_m, (N-i)/j}}`,
    /// or 0 with no SUs present.
    pub fn bandwidth(&self, s: SystemState) -> Result<f64, ModelError> {
        self.check(s)?;
        Ok(self.share(s.i, s.j))
    }

    /// Per-SU departure rate `B(i,j)·h_s + r_s`, or 0 with no SUs present.
    pub fn su_service_rate(&self, s: SystemState) -> Result<f64, ModelError> {
        self.check(s)?;
        Ok(self.service(s.i, s.j))
    }

    /// Unchecked equal-share bandwidth; callers guarantee feasibility.
    #[inline]
    pub(crate) fn share(&self, i: u32, j: u32) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let free = (self.channels - i) as f64 / j as f64;
        free.max(self.b_min).min(self.b_max)
    }

    #[inline]
    pub(crate) fn service(&self, i: u32, j: u32) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.share(i, j) * self.h_s + self.r_s
        }
    }

    /// Whether an arriving SU would be blocked in `s`.
    #[inline]
    pub fn blocks_su(&self, s: SystemState) -> bool {
        !fits(s.i, s.j + 1, self.b_min, self.channels)
    }

    /// Whether a PU arriving in `s` forces one SU out. Only meaningful for
    /// `i < N`; at `i = N` the arrival is discarded.
    #[inline]
    pub fn pu_arrival_drops(&self, s: SystemState) -> bool {
        s.i < self.channels && !fits(s.i + 1, s.j, self.b_min, self.channels)
    }

    /// Self-rate of the blocking case: λ_s when an SU arrival cannot be
    /// admitted, 0 otherwise. Not a generator entry.
    pub fn blocking_rate(&self, s: SystemState) -> Result<f64, ModelError> {
        self.check(s)?;
        Ok(if self.blocks_su(s) { self.lambda_s } else { 0.0 })
    }

    /// All state-changing transitions out of a feasible state. Blocking
    /// self-loops and PU arrivals at `i = N` are not listed.
    pub fn outgoing(&self, s: SystemState) -> Result<Vec<Transition>, ModelError> {
        self.check(s)?;
        let SystemState { i, j } = s;
        let mut out = Vec::with_capacity(4);
        if j > 0 {
            out.push(Transition {
                kind: TransitionKind::SuDeparture,
                to: SystemState::new(i, j - 1),
                rate: j as f64 * self.service(i, j),
            });
        }
        if !self.blocks_su(s) {
            out.push(Transition {
                kind: TransitionKind::SuArrival,
                to: SystemState::new(i, j + 1),
                rate: self.lambda_s,
            });
        }
        if i > 0 {
            out.push(Transition {
                kind: TransitionKind::PuDeparture,
                to: SystemState::new(i - 1, j),
                rate: i as f64 * self.mu_p,
            });
        }
        if i < self.channels {
            if !self.pu_arrival_drops(s) {
                out.push(Transition {
                    kind: TransitionKind::PuArrival,
                    to: SystemState::new(i + 1, j),
                    rate: self.lambda_p,
                });
            } else if j > 0 {
                out.push(Transition {
                    kind: TransitionKind::Drop,
                    to: SystemState::new(i + 1, j - 1),
                    rate: self.lambda_p,
                });
            }
        }
        // Zero-rate entries (λ_p = 0) carry no information.
        out.retain(|t| t.rate > 0.0 && self.is_feasible(t.to));
        Ok(out)
    }

    /// Rate of the direct transition `from -> to`; 0 for `from == to` and
    /// for any pair not connected by a single arrival or departure.
    pub fn transition_rate(&self, from: SystemState, to: SystemState) -> Result<f64, ModelError> {
        if from == to {
            self.check(from)?;
            return Ok(0.0);
        }
        Ok(self
            .outgoing(from)?
            .into_iter()
            .find(|t| t.to == to)
            .map_or(0.0, |t| t.rate))
    }

    pub fn enumerate_states(&self) -> StateSpace {
        let max_j = self.max_sus();
        let states = (0..=self.channels)
            .flat_map(|i| (0..=max_j).map(move |j| SystemState::new(i, j)))
            .filter(|&s| self.is_feasible(s))
            .collect();
        StateSpace::from_ordered(states)
    }
}

#[inline]
fn fits(i: u32, j: u32, b_min: f64, channels: u32) -> bool {
    i as f64 + j as f64 * b_min <= channels as f64 + FEASIBILITY_EPS
}

/// `(i, j)`: active PUs and active SUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub i: u32,
    pub j: u32,
}

impl SystemState {
    pub const fn new(i: u32, j: u32) -> Self {
        SystemState { i, j }
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    SuArrival,
    SuDeparture,
    PuArrival,
    PuDeparture,
    /// A PU arrival that leaves too little spectrum and evicts one SU.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub to: SystemState,
    pub rate: f64,
}

/// Feasible states in a fixed order, with the inverse index.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<SystemState>,
    index: HashMap<SystemState, usize>,
}

impl StateSpace {
    fn from_ordered(states: Vec<SystemState>) -> Self {
        let index = states.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        StateSpace { states, index }
    }

    /// A space with a caller-chosen ordering. The list must hold every
    /// feasible state exactly once.
    pub fn with_ordering(p: &SystemParams, states: Vec<SystemState>) -> Result<Self, ModelError> {
        let canonical = p.enumerate_states();
        if let Some(s) = states.iter().find(|&&s| !p.is_feasible(s)) {
            return Err(ModelError::Infeasible(*s));
        }
        let space = Self::from_ordered(states);
        if space.index.len() != space.states.len() {
            return Err(ModelError::BadOrdering("duplicate states".into()));
        }
        if space.len() != canonical.len() {
            return Err(ModelError::BadOrdering(format!(
                "expected {} states, got {}",
                canonical.len(),
                space.len()
            )));
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn index_of(&self, s: SystemState) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, SystemState)> + '_ {
        self.states.iter().copied().enumerate()
    }
}
