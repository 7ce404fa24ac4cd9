use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlayoutOutput {
    pub played: usize,
    pub late: usize,
    pub overflow: usize,
    /// Indices (into the input) of frames lost at the receiver buffer.
    pub lost_frames: Vec<usize>,
}

/// Receiver playout buffer of `buffer_bits` (None = unbounded).
///
/// `arrivals[m]` is `None` for frames that never arrive; `offsets[m]` is the
/// frame's playout time relative to the first frame (its generation time
/// minus the first generation time). Playback starts `prefetch` seconds
/// after the first arrival, the frame whose arrival starts playback being
/// played at offset 0. A frame arriving after its deadline is late; one
/// that does not fit in the free space is an overflow; accepted frames leave
/// the buffer at their deadlines.
pub fn playout(
    arrivals: &[Option<f64>],
    offsets: &[f64],
    bits: &[f64],
    prefetch: f64,
    buffer_bits: Option<f64>,
) -> PlayoutOutput {
    assert!(arrivals.len() == offsets.len() && offsets.len() == bits.len());
    let cap = buffer_bits.unwrap_or(f64::INFINITY);
    let mut out = PlayoutOutput::default();
    let Some(first) = arrivals.iter().position(|a| a.is_some()) else {
        return out;
    };
    let start = arrivals[first].unwrap() + prefetch - offsets[first];
    let mut queue: VecDeque<(f64, f64)> = VecDeque::new();
    let mut occupancy = 0.0;
    for m in first..arrivals.len() {
        let Some(a) = arrivals[m] else { continue };
        let deadline = start + offsets[m];
        while let Some(&(d, b)) = queue.front() {
            if d > a {
                break;
            }
            occupancy -= b;
            queue.pop_front();
        }
        if queue.is_empty() {
            occupancy = 0.0;
        }
        if a > deadline {
            out.late += 1;
            out.lost_frames.push(m);
        } else if occupancy + bits[m] > cap {
            out.overflow += 1;
            out.lost_frames.push(m);
        } else {
            occupancy += bits[m];
            queue.push_back((deadline, bits[m]));
            out.played += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timely_frames_all_play() {
        let arr: Vec<Option<f64>> = (0..10).map(|i| Some(0.3 + i as f64 * 0.04)).collect();
        let off: Vec<f64> = (0..10).map(|i| i as f64 * 0.04).collect();
        let out = playout(&arr, &off, &[1e4; 10], 2.0, None);
        assert_eq!((out.played, out.late, out.overflow), (10, 0, 0));
    }

    #[test]
    fn late_by_epsilon() {
        // second frame is due at Δ after the first arrival but shows up Δ + ε later
        let eps = 1e-9;
        let out = playout(&[Some(1.0), Some(3.0 + eps)], &[0.0, 0.0], &[1.0, 1.0], 2.0, None);
        assert_eq!(out.lost_frames, vec![1]);
        assert_eq!(out.late, 1);
    }

    #[test]
    fn hand_timeline() {
        // fps 10, Δ = 0.5: deadlines 0.5, 0.6, 0.7 after a first arrival at 0
        let arr = [Some(0.0), Some(0.65), Some(0.66)];
        let off = [0.0, 0.1, 0.2];
        let out = playout(&arr, &off, &[1.0; 3], 0.5, None);
        assert_eq!(out.lost_frames, vec![1]);
        assert_eq!((out.played, out.late), (2, 1));
    }

    #[test]
    fn overflow_and_drain() {
        // all arrive before the first deadline: only 2 fit
        let arr = [Some(0.0), Some(0.01), Some(0.02), Some(1.25)];
        let off = [0.0, 0.1, 0.2, 0.3];
        let out = playout(&arr, &off, &[5.0; 4], 1.0, Some(10.0));
        assert_eq!(out.lost_frames, vec![2]);
        assert_eq!(out.overflow, 1);
        // frame 3 arrives after frames 0 and 1 have been consumed
        assert_eq!(out.played, 3);
    }

    #[test]
    fn missing_first_frames() {
        let out = playout(&[None, Some(5.0), Some(5.0)], &[0.0, 0.04, 0.08], &[1.0; 3], 0.0, None);
        assert_eq!((out.played, out.late), (2, 0));
    }
}
