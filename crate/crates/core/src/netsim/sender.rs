/// Per-frame outcome at the sender: `Some(departure)` or `None` if dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderOutput {
    pub departures: Vec<Option<f64>>,
    pub dropped: usize,
}

/// Fluid FIFO buffer of `buffer_bits` (None = unbounded) drained at `rate`
/// bits/s. A frame that does not fit in the free space at its arrival is
/// dropped whole. Departure is the instant its last bit leaves.
///
/// `arrivals` must be nondecreasing.
pub fn sender_buffer(arrivals: &[f64], bits: &[f64], buffer_bits: Option<f64>, rate: f64) -> SenderOutput {
    assert_eq!(arrivals.len(), bits.len());
    let cap = buffer_bits.unwrap_or(f64::INFINITY);
    let mut departures = Vec::with_capacity(arrivals.len());
    let mut dropped = 0;
    let mut busy_until = f64::NEG_INFINITY;
    // only used when nothing ever drains
    let mut stuck_bits = 0.0;
    for (&t, &b) in arrivals.iter().zip(bits) {
        let backlog = if rate == 0.0 {
            stuck_bits
        } else if rate.is_infinite() {
            0.0
        } else {
            (busy_until - t).max(0.0) * rate
        };
        if backlog + b > cap {
            departures.push(None);
            dropped += 1;
            continue;
        }
        if rate == 0.0 {
            stuck_bits += b;
            departures.push(Some(f64::INFINITY));
        } else {
            busy_until = busy_until.max(t) + b / rate;
            departures.push(Some(busy_until));
        }
    }
    SenderOutput { departures, dropped }
}
