//! Per-channel layout of an equal-sharing allocation.
//!
//! PUs sit on the lowest-index channels. Each SU then takes `⌊B⌋` whole
//! channels, and the fractional remainders are packed left to right into
//! what is left, crossing a channel boundary only when the remaining free
//! channels could not otherwise hold the remaining demand.

use serde::Serialize;

use crate::model::{SystemParams, SystemState};

pub type SuId = u64;

const FRACTION_EPS: f64 = 1e-12;
const CONSERVATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelUse {
    Free,
    Pu,
    /// `(su, fraction)` pairs; a whole aggregated channel has fraction 1.
    Su(Vec<(SuId, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuAllocation {
    pub id: SuId,
    pub total: f64,
    pub whole_channels: Vec<usize>,
    /// Sub-channel pieces as `(channel, fraction)`.
    pub fragments: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumMap {
    pub channels: Vec<ChannelUse>,
    pub allocations: Vec<SuAllocation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FragmentCensus {
    pub total_fragments: usize,
    pub max_per_su: usize,
    /// ⌊N / B_m⌋
    pub bound: usize,
    pub within_bound: bool,
}

/// Layout for `state` with SUs labelled `0..j`.
pub fn rebuild_spectrum_map(state: SystemState, p: &SystemParams) -> Result<SpectrumMap, String> {
    let ids: Vec<SuId> = (0..state.j as SuId).collect();
    SpectrumMap::rebuild(state, p, &ids)
}

impl SpectrumMap {
    pub fn rebuild(state: SystemState, p: &SystemParams, ids: &[SuId]) -> Result<Self, String> {
        if !p.is_feasible(state) {
            return Err(format!("state {state} is not feasible"));
        }
        if ids.len() != state.j as usize {
            return Err(format!("{} SU ids for j = {}", ids.len(), state.j));
        }
        let n = p.channels as usize;
        let mut channels = vec![ChannelUse::Free; n];
        for ch in channels.iter_mut().take(state.i as usize) {
            *ch = ChannelUse::Pu;
        }
        let share = p.share(state.i, state.j);
        let whole = share.floor() as usize;
        let remainder = share - whole as f64;

        let mut allocations: Vec<SuAllocation> = ids
            .iter()
            .map(|&id| SuAllocation {
                id,
                total: share,
                whole_channels: Vec::with_capacity(whole),
                fragments: Vec::new(),
            })
            .collect();

        let mut next_free = state.i as usize;
        for alloc in allocations.iter_mut() {
            for _ in 0..whole {
                if next_free >= n {
                    return Err("ran out of channels for whole allocations".into());
                }
                channels[next_free] = ChannelUse::Su(vec![(alloc.id, 1.0)]);
                alloc.whole_channels.push(next_free);
                next_free += 1;
            }
        }

        if remainder > FRACTION_EPS {
            let mut cursor = next_free;
            let mut used = 0.0;
            let count = allocations.len();
            for (k, alloc) in allocations.iter_mut().enumerate() {
                if cursor >= n {
                    return Err("ran out of channels for fragments".into());
                }
                let room = 1.0 - used;
                let mut pieces = Vec::with_capacity(2);
                if remainder <= room + FRACTION_EPS {
                    pieces.push((cursor, remainder));
                    used += remainder;
                } else {
                    let demand = remainder * (count - k) as f64;
                    let fresh = (n - cursor - 1) as f64;
                    if fresh + FRACTION_EPS >= demand {
                        cursor += 1;
                        pieces.push((cursor, remainder));
                        used = remainder;
                    } else {
                        pieces.push((cursor, room));
                        cursor += 1;
                        if cursor >= n {
                            return Err("fragment split ran past the last channel".into());
                        }
                        pieces.push((cursor, remainder - room));
                        used = remainder - room;
                    }
                }
                for &(ch, frac) in &pieces {
                    match &mut channels[ch] {
                        ChannelUse::Su(v) => v.push((alloc.id, frac)),
                        slot @ ChannelUse::Free => *slot = ChannelUse::Su(vec![(alloc.id, frac)]),
                        ChannelUse::Pu => return Err(format!("fragment placed on PU channel {ch}")),
                    }
                }
                alloc.fragments = pieces;
                if used >= 1.0 - FRACTION_EPS {
                    cursor += 1;
                    used = 0.0;
                }
            }
        }
        Ok(SpectrumMap { channels, allocations })
    }

    pub fn su_occupancy(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| match c {
                ChannelUse::Su(v) => v.iter().map(|&(_, f)| f).sum(),
                _ => 0.0,
            })
            .sum()
    }

    pub fn pu_channels(&self) -> usize {
        self.channels.iter().filter(|c| matches!(c, ChannelUse::Pu)).count()
    }

    pub fn census(&self, p: &SystemParams) -> FragmentCensus {
        let per_su = self.allocations.iter().map(|a| a.fragments.len());
        let total_fragments = per_su.clone().sum();
        let bound = p.max_sus() as usize;
        FragmentCensus {
            total_fragments,
            max_per_su: per_su.max().unwrap_or(0),
            bound,
            within_bound: total_fragments <= bound,
        }
    }

    /// Checks conservation against the equal-share bandwidth of `state`.
    pub fn check(&self, state: SystemState, p: &SystemParams) -> Result<(), String> {
        let share = p.share(state.i, state.j);
        if self.pu_channels() != state.i as usize {
            return Err(format!("{} PU channels for i = {}", self.pu_channels(), state.i));
        }
        for (ch, c) in self.channels.iter().enumerate() {
            if let ChannelUse::Su(v) = c {
                let sum: f64 = v.iter().map(|&(_, f)| f).sum();
                if sum > 1.0 + FRACTION_EPS {
                    return Err(format!("channel {ch} carries {sum}"));
                }
                if v.iter().any(|&(_, f)| f <= 0.0 || f > 1.0 + FRACTION_EPS) {
                    return Err(format!("channel {ch} has an out-of-range fraction"));
                }
            }
        }
        for a in &self.allocations {
            let held = a.whole_channels.len() as f64 + a.fragments.iter().map(|&(_, f)| f).sum::<f64>();
            if (held - share).abs() > CONSERVATION_EPS || (a.total - share).abs() > CONSERVATION_EPS {
                return Err(format!("SU {} holds {held}, expected {share}", a.id));
            }
            if a.fragments.len() > 2 {
                return Err(format!("SU {} has {} fragments", a.id, a.fragments.len()));
            }
        }
        let total = state.j as f64 * share;
        if (self.su_occupancy() - total).abs() > CONSERVATION_EPS {
            return Err(format!("SU occupancy {} != {total}", self.su_occupancy()));
        }
        if self.su_occupancy() + self.pu_channels() as f64 > p.channels as f64 + CONSERVATION_EPS {
            return Err("occupancy exceeds channel count".into());
        }
        Ok(())
    }
}

pub fn fragment_census(map: &SpectrumMap, p: &SystemParams) -> FragmentCensus {
    map.census(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, b_min: f64, b_max: f64) -> SystemParams {
        SystemParams { channels: n, b_min, b_max, ..SystemParams::reference(1.0, 1.0, 1.0) }
    }

    #[test]
    fn three_sus_share_four_channels() {
        let p = params(5, 1.0, 2.0);
        let s = SystemState::new(1, 3);
        let map = rebuild_spectrum_map(s, &p).unwrap();
        map.check(s, &p).unwrap();
        assert_eq!(map.channels[0], ChannelUse::Pu);
        for a in &map.allocations {
            assert_eq!(a.whole_channels.len(), 1);
            assert_eq!(a.fragments.len(), 1);
            assert_eq!(a.fragments[0].0, 4);
        }
        let c = map.census(&p);
        assert_eq!((c.total_fragments, c.max_per_su), (3, 1));
        assert_eq!(c.bound, 5);
        assert!(c.within_bound);
    }

    #[test]
    fn integral_shares_have_no_fragments() {
        let p = params(12, 2.0, 4.0);
        for s in [SystemState::new(0, 3), SystemState::new(0, 1), SystemState::new(4, 4), SystemState::new(12, 0)] {
            let map = rebuild_spectrum_map(s, &p).unwrap();
            map.check(s, &p).unwrap();
            let c = map.census(&p);
            assert_eq!((c.total_fragments, c.max_per_su), (0, 0));
            assert!((map.su_occupancy() - s.j as f64 * p.share(s.i, s.j)).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_split_straddles_one_boundary() {
        // i=1, j=4: share 2.75, four 0.75 remainders into three channels.
        let p = params(12, 2.0, 4.0);
        let s = SystemState::new(1, 4);
        let map = rebuild_spectrum_map(s, &p).unwrap();
        map.check(s, &p).unwrap();
        let counts: Vec<_> = map.allocations.iter().map(|a| a.fragments.len()).collect();
        assert_eq!(counts, vec![1, 2, 2, 1]);
        assert_eq!(map.census(&p).total_fragments, 6);
    }

    #[test]
    fn unforced_remainder_moves_to_fresh_channel() {
        // share 2.4: remainders 0.4 x3 into 9 - 6 = 3 channels, so the
        // third one does not need to straddle.
        let p = params(9, 1.0, 2.4);
        let s = SystemState::new(0, 3);
        let map = rebuild_spectrum_map(s, &p).unwrap();
        map.check(s, &p).unwrap();
        let c = map.census(&p);
        assert_eq!(c.max_per_su, 1);
        assert_eq!(c.total_fragments, 3);
    }

    #[test]
    fn reference_states_respect_fragment_bound() {
        for (b_min, b_max) in [(2.0, 4.0), (2.0, 3.0), (1.0, 4.0), (2.0, 2.0), (4.0, 4.0)] {
            let p = SystemParams::reference(b_min, b_max, 1.0);
            for (_, s) in p.enumerate_states().iter() {
                let map = rebuild_spectrum_map(s, &p).unwrap();
                map.check(s, &p).unwrap();
                let c = map.census(&p);
                assert!(c.max_per_su <= 2);
                if b_min == 2.0 {
                    assert!(c.total_fragments <= 6, "state {s}: {c:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_ids() {
        let p = params(5, 1.0, 2.0);
        assert!(SpectrumMap::rebuild(SystemState::new(1, 3), &p, &[1, 2]).is_err());
        assert!(rebuild_spectrum_map(SystemState::new(5, 1), &p).is_err());
    }
}
