//! View-switching user model and the Interactive TV transmitted stream.
//!
//! The user sits in one view for a Gamma-distributed time, then jumps to
//! another view according to a zero-diagonal transition matrix. Since
//! non-reference views are predicted from others, the server has to send
//! every view in the dependency closure of the one being watched.

use std::collections::BTreeSet;

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{GopStructure, Trace, PROB_TOL};
use crate::rng;
use crate::synthesis::sample_index;

/// `(α, β)` of a Gamma law with mean `mu` and standard deviation `sigma`:
/// `α = μ²/σ²`, `β = μ/σ²` (shape, rate).
pub fn gamma_from_moments(mu: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && sigma > 0.0 && mu.is_finite() && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mean and standard deviation must be positive, got ({mu}, {sigma})"
        )));
    }
    let var = sigma * sigma;
    Ok((mu * mu / var, mu / var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VsmParams {
    transition: Vec<Vec<f64>>,
    mean_s: Vec<f64>,
    std_s: Vec<f64>,
    shape: Vec<f64>,
    rate: Vec<f64>,
}

impl VsmParams {
    pub fn new(transition: Vec<Vec<f64>>, mean_s: Vec<f64>, std_s: Vec<f64>) -> Result<Self> {
        let nv = transition.len();
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if nv == 0 {
            return bad("view switching model needs at least one view".into());
        }
        if mean_s.len() != nv || std_s.len() != nv {
            return bad(format!("{nv} views need {nv} means and standard deviations"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != nv {
                return bad(format!("transition row {i} has {} entries", row.len()));
            }
            if row[i] != 0.0 {
                return bad(format!("transition row {i} has a nonzero diagonal"));
            }
            if row.iter().any(|&x| !(x >= 0.0)) {
                return bad(format!("transition row {i} has a negative entry"));
            }
            let s: f64 = row.iter().sum();
            let target = if nv == 1 { 0.0 } else { 1.0 };
            if (s - target).abs() > PROB_TOL {
                return bad(format!("transition row {i} sums to {s}"));
            }
        }
        let mut shape = Vec::with_capacity(nv);
        let mut rate = Vec::with_capacity(nv);
        for v in 0..nv {
            let (a, b) = gamma_from_moments(mean_s[v], std_s[v])?;
            shape.push(a);
            rate.push(b);
        }
        Ok(VsmParams {
            transition,
            mean_s,
            std_s,
            shape,
            rate,
        })
    }

    /// Reference-view-centric sample model: 6 min ± 30 s in view 0, 1 min
    /// ± 10 s elsewhere.
    pub fn four_views() -> Self {
        VsmParams::new(
            vec![
                vec![0.0, 0.4, 0.2, 0.4],
                vec![0.4, 0.0, 0.4, 0.2],
                vec![0.2, 0.4, 0.0, 0.4],
                vec![0.4, 0.2, 0.4, 0.0],
            ],
            vec![360.0, 60.0, 60.0, 60.0],
            vec![30.0, 10.0, 10.0, 10.0],
        )
        .expect("preset is valid")
    }

    pub fn num_views(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn mean_s(&self) -> &[f64] {
        &self.mean_s
    }

    pub fn std_s(&self) -> &[f64] {
        &self.std_s
    }

    /// Gamma shape `α_i`.
    pub fn shape(&self, view: usize) -> f64 {
        self.shape[view]
    }

    /// Gamma rate `β_i` (per second).
    pub fn rate(&self, view: usize) -> f64 {
        self.rate[view]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSegment {
    pub view: usize,
    pub start: f64,
    pub end: f64,
}

impl ViewSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Contiguous view segments covering `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSchedule {
    segments: Vec<ViewSegment>,
}

impl ViewSchedule {
    pub fn new(segments: Vec<ViewSegment>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let Some(first) = segments.first() else {
            return bad("empty schedule".into());
        };
        if first.start != 0.0 {
            return bad("schedule must start at 0".into());
        }
        for s in &segments {
            if !(s.end > s.start) {
                return bad(format!("segment [{}, {}] is empty", s.start, s.end));
            }
        }
        for w in segments.windows(2) {
            if w[0].end != w[1].start {
                return bad(format!("gap or overlap at {}", w[0].end));
            }
            if w[0].view == w[1].view {
                return bad(format!("consecutive segments both show view {}", w[0].view));
            }
        }
        Ok(ViewSchedule { segments })
    }

    /// A schedule that never leaves `view`.
    pub fn pinned(view: usize, horizon: f64) -> Result<Self> {
        ViewSchedule::new(vec![ViewSegment {
            view,
            start: 0.0,
            end: horizon,
        }])
    }

    pub fn segments(&self) -> &[ViewSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    /// View being watched at time `t` (segments are `[start, end)`; the last
    /// one also owns its end point).
    pub fn view_at(&self, t: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.end <= t);
        self.segments[idx.min(self.segments.len() - 1)].view
    }
}

/// Samples a schedule starting in the reference view 0.
pub fn generate_schedule(vsm: &VsmParams, horizon: f64, seed: u64) -> Result<ViewSchedule> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut r = rng::stream(seed, 0);
    let stays: Vec<Gamma<f64>> = (0..vsm.num_views())
        .map(|v| Gamma::new(vsm.shape(v), 1.0 / vsm.rate(v)).expect("valid gamma"))
        .collect();
    let mut segs = Vec::new();
    let mut view = 0;
    let mut t = 0.0;
    loop {
        if vsm.num_views() == 1 {
            segs.push(ViewSegment { view, start: 0.0, end: horizon });
            break;
        }
        let d = stays[view].sample(&mut r);
        let end = (t + d).min(horizon);
        if end > t {
            segs.push(ViewSegment { view, start: t, end });
        }
        if end >= horizon {
            break;
        }
        t = end;
        view = sample_index(&vsm.transition[view], &mut r);
    }
    ViewSchedule::new(segs)
}

/// Views that must be sent so `view` can be decoded (itself included).
pub fn dependency_closure(structure: &GopStructure, view: usize) -> Result<BTreeSet<usize>> {
    if view >= structure.num_views() {
        return Err(Error::InvalidArgument(format!(
            "view {view} does not exist ({} views)",
            structure.num_views()
        )));
    }
    let mut set = BTreeSet::from([view]);
    let mut stack = vec![view];
    while let Some(v) = stack.pop() {
        for &(a, b) in structure.view_deps() {
            if a == v && set.insert(b) {
                stack.push(b);
            }
        }
    }
    Ok(set)
}

/// One frame of a transmitted stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxFrame {
    pub gop: usize,
    pub view: usize,
    /// Display index within the view's GOP.
    pub index: usize,
    pub bytes: u64,
}

impl TxFrame {
    /// Capture instant of the frame in seconds from the start of the trace.
    pub fn generation_time(&self, structure: &GopStructure) -> f64 {
        (self.gop * structure.gop_len() + self.index) as f64 / structure.fps()
    }
}

/// Every frame of every GOP (the Multiview TV stream).
pub fn full_stream(trace: &Trace) -> Vec<TxFrame> {
    let s = trace.structure();
    trace
        .gops()
        .iter()
        .enumerate()
        .flat_map(|(n, g)| {
            g.0.iter().enumerate().map(move |(pos, &bytes)| {
                let (view, index) = s.view_and_index(pos);
                TxFrame { gop: n, view, index, bytes }
            })
        })
        .collect()
}

/// Frames sent in Interactive TV: per GOP, the dependency closure of the
/// view being watched at the GOP's first instant. A switch therefore takes
/// effect at the next GOP boundary. GOPs starting at or after the schedule
/// horizon are not sent. Canonical frame order is kept.
pub fn compose_interactive_trace(
    trace: &Trace,
    schedule: &ViewSchedule,
    structure: &GopStructure,
) -> Result<Vec<TxFrame>> {
    if trace.structure() != structure {
        return Err(Error::Mismatch("trace was recorded with a different GOP structure".into()));
    }
    let dur = trace.duration();
    if schedule.horizon() > dur * (1.0 + 1e-12) {
        return Err(Error::Mismatch(format!(
            "schedule horizon {} s exceeds trace duration {dur} s",
            schedule.horizon()
        )));
    }
    if let Some(s) = schedule.segments().iter().find(|s| s.view >= structure.num_views()) {
        return Err(Error::Mismatch(format!("schedule uses unknown view {}", s.view)));
    }
    let closures: Vec<BTreeSet<usize>> = (0..structure.num_views())
        .map(|v| dependency_closure(structure, v))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (n, g) in trace.gops().iter().enumerate() {
        let t0 = n as f64 * structure.gop_duration();
        if t0 >= schedule.horizon() {
            break;
        }
        let send = &closures[schedule.view_at(t0)];
        for (pos, &bytes) in g.0.iter().enumerate() {
            let (view, index) = structure.view_and_index(pos);
            if send.contains(&view) {
                out.push(TxFrame { gop: n, view, index, bytes });
            }
        }
    }
    Ok(out)
}
