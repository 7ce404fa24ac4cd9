//! Sender buffer, random-delay channel and playout buffer simulation.
//!
//! Frames enter a fluid FIFO sender buffer at their capture instants (all
//! views of one instant together, lowest view first), cross a lossy packet
//! channel with Gamma delays, and wait in a playout buffer that starts
//! draining a prefetch delay after the first arrival. Each Monte Carlo run
//! reports counters at every stage and the resulting loss rates.

mod channel;
mod playout;
mod sender;

pub use channel::{channel, draw_frames, packets_for, ChannelOutput, ChannelParams, FrameDraw};
pub use playout::{playout, PlayoutOutput};
pub use sender::{sender_buffer, SenderOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{GopStructure, PHmmParams, Trace};
use crate::rng;
use crate::synthesis::generate_trace;
use crate::viewswitch::{compose_interactive_trace, full_stream, generate_schedule, TxFrame, ViewSchedule, VsmParams};

/// Target sender loss of the automatic buffer sizing.
pub const AUTO_SENDER_LOSS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRate {
    /// Multiple of the average bit-rate of the offered stream.
    Ratio(f64),
    BitsPerSecond(f64),
    Unlimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenderBuffer {
    Bits(f64),
    Unlimited,
    /// Smallest size keeping the mean sender loss at or below 5%.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sender_buffer: SenderBuffer,
    pub channel_rate: ChannelRate,
    pub channel: ChannelParams,
    pub prefetch_delay_s: f64,
    /// None = unbounded.
    pub receiver_buffer_bits: Option<f64>,
    pub packet_size: usize,
    pub monte_carlo_runs: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sender_buffer: SenderBuffer::Auto,
            channel_rate: ChannelRate::Ratio(1.5),
            channel: ChannelParams::default(),
            prefetch_delay_s: 2.0,
            receiver_buffer_bits: None,
            packet_size: 1500,
            monte_carlo_runs: 10,
            seed: 0,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")))
    }
}

impl SimConfig {
    /// Everything unbounded and a lossless channel.
    pub fn lossless() -> Self {
        SimConfig {
            sender_buffer: SenderBuffer::Unlimited,
            channel_rate: ChannelRate::Unlimited,
            channel: ChannelParams { loss_prob: 0.0, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.sender_buffer {
            SenderBuffer::Bits(b) => positive("sender buffer", b)?,
            SenderBuffer::Unlimited | SenderBuffer::Auto => {}
        }
        match self.channel_rate {
            ChannelRate::Ratio(r) => positive("channel rate ratio", r)?,
            ChannelRate::BitsPerSecond(c) => positive("channel rate", c)?,
            ChannelRate::Unlimited => {}
        }
        self.channel.validate()?;
        if !(self.prefetch_delay_s >= 0.0 && self.prefetch_delay_s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prefetch delay must be non-negative, got {}",
                self.prefetch_delay_s
            )));
        }
        if let Some(b) = self.receiver_buffer_bits {
            positive("receiver buffer", b)?;
        }
        if self.packet_size == 0 {
            return Err(Error::InvalidArgument("packet size must be positive".into()));
        }
        if self.monte_carlo_runs == 0 {
            return Err(Error::InvalidArgument("need at least one Monte Carlo run".into()));
        }
        Ok(())
    }
}

/// Where the traffic of each run comes from.
#[derive(Debug, Clone)]
pub enum Source {
    /// The same trace in every run.
    Trace(Trace),
    /// A fresh synthetic trace of `gops` GOPs per run.
    Model {
        params: PHmmParams,
        structure: GopStructure,
        gops: usize,
    },
}

impl Source {
    fn structure(&self) -> &GopStructure {
        match self {
            Source::Trace(t) => t.structure(),
            Source::Model { structure, .. } => structure,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Mode {
    /// All views are sent.
    Multiview,
    /// One schedule reused by every run.
    Interactive(ViewSchedule),
    /// A fresh schedule per run.
    InteractiveVsm(VsmParams),
}

/// One frame as offered to the sender buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfferedFrame {
    pub time: f64,
    pub bits: f64,
    pub bytes: u64,
}

/// Transmission order: capture instant, then view.
pub fn offered_stream(frames: &[TxFrame], structure: &GopStructure) -> Vec<OfferedFrame> {
    let mut v: Vec<TxFrame> = frames.to_vec();
    v.sort_by_key(|f| (f.gop, f.index, f.view));
    v.iter()
        .map(|f| OfferedFrame {
            time: f.generation_time(structure),
            bits: f.bytes as f64 * 8.0,
            bytes: f.bytes,
        })
        .collect()
}

/// Average bit-rate of a stream spanning `duration` seconds.
pub fn average_bitrate(frames: &[OfferedFrame], duration: f64) -> f64 {
    frames.iter().map(|f| f.bits).sum::<f64>() / duration
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub channel_rate_bps: f64,
    /// None = unbounded.
    pub sender_buffer_bits: Option<f64>,
    pub offered: usize,
    pub sender_dropped: usize,
    pub transmitted: usize,
    pub channel_lost: usize,
    pub delivered: usize,
    pub late: usize,
    pub overflow: usize,
    pub played: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl RunReport {
    pub fn sender_loss_rate(&self) -> f64 {
        ratio(self.sender_dropped, self.offered)
    }

    /// Frames lost after leaving the sender (channel, late, overflow) over
    /// transmitted frames.
    pub fn playout_loss_rate(&self) -> f64 {
        ratio(self.channel_lost + self.late + self.overflow, self.transmitted)
    }

    pub fn late_loss_rate(&self) -> f64 {
        ratio(self.late, self.transmitted)
    }

    pub fn overall_loss_rate(&self) -> f64 {
        ratio(self.sender_dropped + self.channel_lost + self.late + self.overflow, self.offered)
    }

    pub fn is_conserved(&self) -> bool {
        self.offered == self.transmitted + self.sender_dropped
            && self.transmitted == self.delivered + self.channel_lost
            && self.delivered == self.played + self.late + self.overflow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersion {
    pub mean: f64,
    pub std: f64,
}

impl Dispersion {
    fn of(xs: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.collect();
        let s = crate::stats::summary(&v).expect("at least one run");
        Dispersion { mean: s.mean, std: s.std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub runs: Vec<RunReport>,
    pub sender_loss: Dispersion,
    pub playout_loss: Dispersion,
    pub overall_loss: Dispersion,
}

impl SimReport {
    fn new(runs: Vec<RunReport>) -> Self {
        SimReport {
            sender_loss: Dispersion::of(runs.iter().map(RunReport::sender_loss_rate)),
            playout_loss: Dispersion::of(runs.iter().map(RunReport::playout_loss_rate)),
            overall_loss: Dispersion::of(runs.iter().map(RunReport::overall_loss_rate)),
            runs,
        }
    }

    pub fn total(&self, f: impl Fn(&RunReport) -> usize) -> usize {
        self.runs.iter().map(f).sum()
    }
}

/// Offered stream of one run plus its duration.
struct RunInput {
    frames: Vec<OfferedFrame>,
    duration: f64,
}

fn run_input(source: &Source, mode: &Mode, run_seed: u64) -> Result<RunInput> {
    let generated;
    let trace = match source {
        Source::Trace(t) => t,
        Source::Model { params, structure, gops } => {
            generated = generate_trace(params, structure, *gops, rng::child_seed(run_seed, 1))?;
            &generated
        }
    };
    let s = trace.structure();
    let tx = match mode {
        Mode::Multiview => full_stream(trace),
        Mode::Interactive(sched) => compose_interactive_trace(trace, sched, s)?,
        Mode::InteractiveVsm(vsm) => {
            let sched = generate_schedule(vsm, trace.duration(), rng::child_seed(run_seed, 2))?;
            compose_interactive_trace(trace, &sched, s)?
        }
    };
    let gops_sent = tx.iter().map(|f| f.gop + 1).max().unwrap_or(0);
    Ok(RunInput {
        frames: offered_stream(&tx, s),
        duration: gops_sent as f64 * s.gop_duration(),
    })
}

fn channel_rate(rate: ChannelRate, input: &RunInput) -> f64 {
    match rate {
        ChannelRate::Ratio(r) => r * average_bitrate(&input.frames, input.duration),
        ChannelRate::BitsPerSecond(c) => c,
        ChannelRate::Unlimited => f64::INFINITY,
    }
}

fn split(frames: &[OfferedFrame]) -> (Vec<f64>, Vec<f64>) {
    frames.iter().map(|f| (f.time, f.bits)).unzip()
}

/// Smallest sender buffer (to 0.1% relative) with mean sender loss at or
/// below [`AUTO_SENDER_LOSS`] across the given runs. Sender-side losses
/// only depend on the offered stream and the channel rate.
fn auto_sender_buffer(inputs: &[(RunInput, f64)]) -> Option<f64> {
    let mean_loss = |b: f64| {
        inputs
            .iter()
            .map(|(inp, c)| {
                let (t, bits) = split(&inp.frames);
                ratio(sender_buffer(&t, &bits, Some(b), *c).dropped, inp.frames.len())
            })
            .sum::<f64>()
            / inputs.len() as f64
    };
    let max_frame = inputs
        .iter()
        .flat_map(|(i, _)| i.frames.iter().map(|f| f.bits))
        .fold(0.0, f64::max);
    let total: f64 = inputs
        .iter()
        .map(|(i, _)| i.frames.iter().map(|f| f.bits).sum::<f64>())
        .fold(0.0, f64::max);
    if max_frame == 0.0 {
        return Some(1.0);
    }
    let mut hi = max_frame;
    while mean_loss(hi) > AUTO_SENDER_LOSS {
        if hi > total {
            // even an unbounded buffer would not help (zero rate)
            return None;
        }
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    if mean_loss(lo) <= AUTO_SENDER_LOSS {
        return Some(lo);
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if mean_loss(mid) <= AUTO_SENDER_LOSS {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Runs the three stages on one offered stream.
pub fn simulate_run(
    frames: &[OfferedFrame],
    rate_bps: f64,
    sender_buffer_bits: Option<f64>,
    config: &SimConfig,
    seed: u64,
) -> RunReport {
    let (times, bits) = split(frames);
    let packets: Vec<usize> = frames.iter().map(|f| packets_for(f.bytes, config.packet_size)).collect();
    let draws = draw_frames(&packets, &config.channel, &mut rng::stream(seed, 0));
    let snd = sender_buffer(&times, &bits, sender_buffer_bits, rate_bps);
    let ch = channel(&snd.departures, &draws);
    let t0 = times.first().copied().unwrap_or(0.0);
    let offsets: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let po = playout(&ch.arrivals, &offsets, &bits, config.prefetch_delay_s, config.receiver_buffer_bits);
    let transmitted = frames.len() - snd.dropped;
    RunReport {
        seed,
        channel_rate_bps: rate_bps,
        sender_buffer_bits,
        offered: frames.len(),
        sender_dropped: snd.dropped,
        transmitted,
        channel_lost: ch.lost,
        delivered: transmitted - ch.lost,
        late: po.late,
        overflow: po.overflow,
        played: po.played,
    }
}

/// Monte Carlo experiment. Run `m` uses seed `child_seed(config.seed, m)`.
pub fn run_experiment(source: &Source, mode: &Mode, config: &SimConfig, exec: Exec) -> Result<SimReport> {
    config.validate()?;
    if let Mode::Interactive(s) = mode {
        if let Some(seg) = s.segments().iter().find(|g| g.view >= source.structure().num_views()) {
            return Err(Error::Mismatch(format!("schedule uses unknown view {}", seg.view)));
        }
    }
    let seeds: Vec<u64> = (0..config.monte_carlo_runs as u64)
        .map(|m| rng::child_seed(config.seed, m))
        .collect();
    let inputs = exec
        .map_indexed(seeds.len(), |m| {
            let inp = run_input(source, mode, seeds[m])?;
            let c = channel_rate(config.channel_rate, &inp);
            Ok((inp, c))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let sender_bits = match config.sender_buffer {
        SenderBuffer::Bits(b) => Some(b),
        SenderBuffer::Unlimited => None,
        SenderBuffer::Auto => auto_sender_buffer(&inputs),
    };
    let runs = exec.map_indexed(seeds.len(), |m| {
        let (inp, c) = &inputs[m];
        simulate_run(&inp.frames, *c, sender_bits, config, seeds[m])
    });
    Ok(SimReport::new(runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SenderBuffer,
    ReceiverBuffer,
}

/// One experiment per buffer size, all on the same seeds.
pub fn sweep(
    source: &Source,
    mode: &Mode,
    config: &SimConfig,
    axis: SweepAxis,
    buffers_bits: &[f64],
    exec: Exec,
) -> Result<Vec<(f64, SimReport)>> {
    buffers_bits
        .iter()
        .map(|&b| {
            let mut c = config.clone();
            match axis {
                SweepAxis::SenderBuffer => c.sender_buffer = SenderBuffer::Bits(b),
                SweepAxis::ReceiverBuffer => c.receiver_buffer_bits = Some(b),
            }
            Ok((b, run_experiment(source, mode, &c, exec)?))
        })
        .collect()
}
