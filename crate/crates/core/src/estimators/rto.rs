use crate::clock::{tick_delta_signed, ClockError, PacketObservation};

/// One packet in differenced form, relative to the first packet of the
/// stream. Deltas use the half-range rule, so a reordered packet shows up
/// as a negative `idt` and the running sums stay equal to the unwrapped
/// counter differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RtoSample {
    /// Source ticks since the first packet.
    pub tilde_ts: i64,
    /// Receiver ticks since the first packet.
    pub tilde_tr: i64,
    /// Receiver ticks since the previous packet.
    pub iat: i64,
    /// Source ticks since the previous packet.
    pub idt: i64,
}

/// Turns raw counter readings into [`RtoSample`]s one packet at a time.
#[derive(Debug, Clone)]
pub struct RtoTracker {
    source_width: u32,
    receiver_width: u32,
    prev: Option<(u64, u64)>,
    tilde_ts: i64,
    tilde_tr: i64,
}

impl RtoTracker {
    pub fn new(source_width: u32, receiver_width: u32) -> Result<Self, ClockError> {
        // validate both widths up front
        tick_delta_signed(0, 0, source_width)?;
        tick_delta_signed(0, 0, receiver_width)?;
        Ok(RtoTracker {
            source_width,
            receiver_width,
            prev: None,
            tilde_ts: 0,
            tilde_tr: 0,
        })
    }

    /// The first observation only sets the reference and yields nothing.
    pub fn push(&mut self, obs: &PacketObservation) -> Result<Option<RtoSample>, ClockError> {
        let Some((prev_ts, prev_tr)) = self.prev else {
            // check ranges even for the reference packet
            tick_delta_signed(obs.ts_ticks, obs.ts_ticks, self.source_width)?;
            tick_delta_signed(obs.arrival_ticks, obs.arrival_ticks, self.receiver_width)?;
            self.prev = Some((obs.ts_ticks, obs.arrival_ticks));
            return Ok(None);
        };
        let idt = tick_delta_signed(prev_ts, obs.ts_ticks, self.source_width)?;
        let iat = tick_delta_signed(prev_tr, obs.arrival_ticks, self.receiver_width)?;
        self.prev = Some((obs.ts_ticks, obs.arrival_ticks));
        self.tilde_ts += idt;
        self.tilde_tr += iat;
        Ok(Some(RtoSample {
            tilde_ts: self.tilde_ts,
            tilde_tr: self.tilde_tr,
            iat,
            idt,
        }))
    }
}

pub fn to_rto_samples(
    observations: &[PacketObservation],
    source_width: u32,
    receiver_width: u32,
) -> Result<Vec<RtoSample>, ClockError> {
    let mut tracker = RtoTracker::new(source_width, receiver_width)?;
    let mut out = Vec::with_capacity(observations.len().saturating_sub(1));
    for obs in observations {
        if let Some(s) = tracker.push(obs)? {
            out.push(s);
        }
    }
    Ok(out)
}
