use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Random-delay packet channel: each packet is lost with probability
/// `loss_prob`, otherwise delayed by a Gamma(`gamma_shape`, `gamma_rate`)
/// sample in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub gamma_shape: f64,
    /// Per second.
    pub gamma_rate: f64,
    pub loss_prob: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            gamma_shape: 4.0,
            gamma_rate: 80.0,
            loss_prob: 0.025,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_shape > 0.0 && self.gamma_shape.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma_shape must be positive, got {}", self.gamma_shape)));
        }
        if !(self.gamma_rate > 0.0 && self.gamma_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma_rate must be positive, got {}", self.gamma_rate)));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(Error::InvalidArgument(format!("loss_prob must be in [0, 1], got {}", self.loss_prob)));
        }
        Ok(())
    }

    pub fn mean_delay(&self) -> f64 {
        self.gamma_shape / self.gamma_rate
    }

    /// Probability that a frame of `packets` packets gets through.
    pub fn frame_survival(&self, packets: usize) -> f64 {
        (1.0 - self.loss_prob).powi(packets as i32)
    }
}

pub fn packets_for(bytes: u64, packet_size: usize) -> usize {
    (bytes.div_ceil(packet_size as u64) as usize).max(1)
}

/// Draws of one offered frame (sampled even if the sender drops it, so the
/// channel sees identical randomness across buffer settings).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDraw {
    pub lost: bool,
    pub max_delay: f64,
}

pub fn draw_frames(packets: &[usize], params: &ChannelParams, rng: &mut SimRng) -> Vec<FrameDraw> {
    let gamma = Gamma::new(params.gamma_shape, 1.0 / params.gamma_rate).expect("validated params");
    packets
        .iter()
        .map(|&p| {
            let mut lost = false;
            let mut max_delay = 0.0f64;
            for _ in 0..p {
                if rng.random::<f64>() < params.loss_prob {
                    lost = true;
                }
                max_delay = max_delay.max(gamma.sample(rng));
            }
            FrameDraw { lost, max_delay }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    /// `Some(arrival)` for delivered frames; `None` for frames dropped at the
    /// sender or lost in the channel.
    pub arrivals: Vec<Option<f64>>,
    pub lost: usize,
}

/// Applies precomputed draws to sender departures. Arrivals are forced
/// nondecreasing so frames are delivered in order.
pub fn channel(departures: &[Option<f64>], draws: &[FrameDraw]) -> ChannelOutput {
    assert_eq!(departures.len(), draws.len());
    let mut last = f64::NEG_INFINITY;
    let mut lost = 0;
    let arrivals = departures
        .iter()
        .zip(draws)
        .map(|(d, draw)| {
            let d = (*d)?;
            if draw.lost {
                lost += 1;
                return None;
            }
            last = last.max(d + draw.max_delay);
            Some(last)
        })
        .collect();
    ChannelOutput { arrivals, lost }
}
