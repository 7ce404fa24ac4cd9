use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    B,
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::B => "B",
        })
    }
}

impl FromStr for FrameType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(FrameType::I),
            "P" => Ok(FrameType::P),
            "B" => Ok(FrameType::B),
            other => Err(Error::InvalidArgument(format!(
                "frame type must be I, P or B, got {other:?}"
            ))),
        }
    }
}

/// Static description of a multiview GOP.
///
/// Positions inside a GOP are numbered in canonical order: view-major, and
/// display order within each view, so position `v * gop_len + t` is frame `t`
/// of view `v`. An edge `(v, w)` in `view_deps` means view `v` is predicted
/// from view `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GopStructure {
    num_views: usize,
    gop_len: usize,
    fps: f64,
    frame_labels: Vec<FrameType>,
    bin_counts: Vec<usize>,
    view_deps: Vec<(usize, usize)>,
}

impl GopStructure {
    pub fn new(
        num_views: usize,
        gop_len: usize,
        fps: f64,
        frame_labels: Vec<FrameType>,
        bin_counts: Vec<usize>,
        view_deps: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidStructure(m));
        if num_views == 0 || gop_len == 0 {
            return bad("num_views and gop_len must be positive".into());
        }
        if !(fps.is_finite() && fps > 0.0) {
            return bad(format!("fps must be positive, got {fps}"));
        }
        let nf = num_views * gop_len;
        if frame_labels.len() != nf {
            return bad(format!(
                "frame_labels has {} entries, expected {nf}",
                frame_labels.len()
            ));
        }
        if bin_counts.len() != nf {
            return bad(format!(
                "bin_counts has {} entries, expected {nf}",
                bin_counts.len()
            ));
        }
        if let Some(p) = bin_counts.iter().position(|&b| b < 2) {
            return bad(format!("position {p} has fewer than 2 bins"));
        }
        let mut seen = BTreeSet::new();
        for &(v, w) in &view_deps {
            if v >= num_views || w >= num_views {
                return bad(format!("dependency {v}->{w} names an unknown view"));
            }
            if v == w {
                return bad(format!("view {v} depends on itself"));
            }
            if v == 0 {
                return bad("the reference view 0 cannot depend on another view".into());
            }
            if !seen.insert((v, w)) {
                return bad(format!("duplicate dependency {v}->{w}"));
            }
        }
        let s = GopStructure {
            num_views,
            gop_len,
            fps,
            frame_labels,
            bin_counts,
            view_deps,
        };
        if s.has_cycle() {
            return bad("view dependencies contain a cycle".into());
        }
        Ok(s)
    }

    /// Four views, GOP of 8 with hierarchical B frames, bins as used for the
    /// long-GOP encodes (50/30 bins for anchors, 20 for the mid-GOP B, 10
    /// elsewhere). Inter-view prediction is a chain 3→2→1→0.
    pub fn mvc_gop8() -> Self {
        Self::preset(8, &[50, 10, 10, 10, 20, 10, 10, 10], &[30, 10, 10, 10, 20, 10, 10, 10])
    }

    /// Four views, GOP of 4; bins 50/30, 10, 20, 10.
    pub fn mvc_gop4() -> Self {
        Self::preset(4, &[50, 10, 20, 10], &[30, 10, 20, 10])
    }

    fn preset(gop_len: usize, ref_bins: &[usize], other_bins: &[usize]) -> Self {
        let num_views = 4;
        let mut labels = Vec::new();
        let mut bins = Vec::new();
        for v in 0..num_views {
            for t in 0..gop_len {
                labels.push(match (v, t) {
                    (0, 0) => FrameType::I,
                    (_, 0) => FrameType::P,
                    (_, t) if gop_len == 4 && t == 2 => FrameType::P,
                    _ => FrameType::B,
                });
            }
            bins.extend_from_slice(if v == 0 { ref_bins } else { other_bins });
        }
        let deps = (1..num_views).map(|v| (v, v - 1)).collect();
        GopStructure::new(num_views, gop_len, 25.0, labels, bins, deps)
            .expect("preset structure is valid")
    }

    pub fn num_views(&self) -> usize {
        self.num_views
    }

    pub fn gop_len(&self) -> usize {
        self.gop_len
    }

    pub fn frames_per_gop(&self) -> usize {
        self.num_views * self.gop_len
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_labels(&self) -> &[FrameType] {
        &self.frame_labels
    }

    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    pub fn view_deps(&self) -> &[(usize, usize)] {
        &self.view_deps
    }

    /// Duration of one GOP in seconds.
    pub fn gop_duration(&self) -> f64 {
        self.gop_len as f64 / self.fps
    }

    pub fn position(&self, view: usize, t: usize) -> usize {
        view * self.gop_len + t
    }

    /// `(view, display index)` of a canonical position.
    pub fn view_and_index(&self, pos: usize) -> (usize, usize) {
        (pos / self.gop_len, pos % self.gop_len)
    }

    /// Canonical positions belonging to `view`.
    pub fn view_positions(&self, view: usize) -> std::ops::Range<usize> {
        view * self.gop_len..(view + 1) * self.gop_len
    }

    fn has_cycle(&self) -> bool {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.num_views];
        fn visit(s: &GopStructure, v: usize, mark: &mut [u8]) -> bool {
            match mark[v] {
                1 => return true,
                2 => return false,
                _ => {}
            }
            mark[v] = 1;
            for &(a, b) in &s.view_deps {
                if a == v && visit(s, b, mark) {
                    return true;
                }
            }
            mark[v] = 2;
            false
        }
        (0..self.num_views).any(|v| visit(self, v, &mut mark))
    }
}

/// Per-frame sizes in bytes of one GOP, in canonical position order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GopVector(pub Vec<u64>);

impl GopVector {
    pub fn sizes(&self) -> &[u64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().map(|&s| s as f64).sum::<f64>() / self.0.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// An observed or synthetic frame-size trace: a sequence of GOP vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    structure: GopStructure,
    gops: Vec<GopVector>,
}

impl Trace {
    pub fn new(structure: GopStructure, gops: Vec<GopVector>) -> Result<Self> {
        if gops.is_empty() {
            return Err(Error::EmptyInput);
        }
        let nf = structure.frames_per_gop();
        if let Some(n) = gops.iter().position(|g| g.0.len() != nf) {
            return Err(Error::Mismatch(format!(
                "GOP {n} has {} frames, structure expects {nf}",
                gops[n].0.len()
            )));
        }
        Ok(Trace { structure, gops })
    }

    pub fn structure(&self) -> &GopStructure {
        &self.structure
    }

    pub fn gops(&self) -> &[GopVector] {
        &self.gops
    }

    pub fn len(&self) -> usize {
        self.gops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gops.is_empty()
    }

    /// Playback duration in seconds.
    pub fn duration(&self) -> f64 {
        self.gops.len() as f64 * self.structure.gop_duration()
    }

    pub fn total_bytes(&self) -> u64 {
        self.gops.iter().map(GopVector::total).sum()
    }

    /// All frame sizes flattened in canonical order (every view interleaved
    /// per GOP).
    pub fn frame_series(&self) -> Vec<f64> {
        self.gops
            .iter()
            .flat_map(|g| g.0.iter().map(|&s| s as f64))
            .collect()
    }

    /// Frame sizes of one view only, in display order.
    pub fn view_series(&self, view: usize) -> Vec<f64> {
        let range = self.structure.view_positions(view);
        self.gops
            .iter()
            .flat_map(|g| g.0[range.clone()].iter().map(|&s| s as f64))
            .collect()
    }
}
