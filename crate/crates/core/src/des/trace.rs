//! Line-delimited JSON event trace.

use std::io::{self, Write};

use serde::Serialize;

use super::spectrum::SpectrumMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SuAdmitted,
    SuBlocked,
    SuDeparture,
    PuArrival,
    /// PU arrival that evicted one SU.
    SuDropped,
    /// PU arrival discarded at full PU occupancy.
    PuLost,
    PuDeparture,
}

/// State after the event, with the per-SU bandwidth it implies.
#[derive(Debug, Serialize)]
pub struct TraceRecord<'a> {
    pub rep: u32,
    pub event: u64,
    pub time: f64,
    pub kind: EventKind,
    pub warmup: bool,
    pub i: u32,
    pub j: u32,
    pub bandwidth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<&'a SpectrumMap>,
}

impl TraceRecord<'_> {
    pub fn write_line(&self, out: &mut dyn Write) -> io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}
