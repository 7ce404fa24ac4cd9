use serde::{Deserialize, Serialize};

use super::gop::{GopStructure, Trace};
use crate::error::{Error, Result};

/// Equal-width bins over `[lower, upper]` for one GOP position.
///
/// Bins are half-open `[lower + w*b, lower + w*(b+1))` except the last, which
/// is closed at `upper`. Sizes outside the range clamp to the first or last
/// bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl BinRange {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) || bins < 1 {
            return Err(Error::InvalidArgument(format!(
                "bin range needs lower < upper and at least one bin, got [{lower}, {upper}] x {bins}"
            )));
        }
        Ok(BinRange { lower, upper, bins })
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.bins as f64
    }

    pub fn bin_of(&self, size: f64) -> usize {
        if size <= self.lower {
            return 0;
        }
        if size >= self.upper {
            return self.bins - 1;
        }
        let b = ((size - self.lower) / self.width()).floor() as usize;
        b.min(self.bins - 1)
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        self.lower + self.width() * (bin as f64 + 0.5)
    }
}

/// Quantization grid: one [`BinRange`] per canonical GOP position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    ranges: Vec<BinRange>,
}

impl QuantGrid {
    pub fn new(ranges: Vec<BinRange>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::EmptyInput);
        }
        for r in &ranges {
            BinRange::new(r.lower, r.upper, r.bins)?;
        }
        Ok(QuantGrid { ranges })
    }

    /// Bins spanning the observed min..max size of each position, with the
    /// bin counts taken from the structure. A position whose size never
    /// varies gets a one-byte-wide range so the bins stay well defined.
    pub fn from_trace(trace: &Trace) -> Self {
        let s = trace.structure();
        let ranges = (0..s.frames_per_gop())
            .map(|p| {
                let (lo, hi) = trace
                    .gops()
                    .iter()
                    .map(|g| g.0[p] as f64)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                let hi = if hi > lo { hi } else { lo + 1.0 };
                BinRange {
                    lower: lo,
                    upper: hi,
                    bins: s.bin_counts()[p],
                }
            })
            .collect();
        QuantGrid { ranges }
    }

    pub fn positions(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[BinRange] {
        &self.ranges
    }

    pub fn range(&self, pos: usize) -> &BinRange {
        &self.ranges[pos]
    }

    pub fn bins(&self, pos: usize) -> usize {
        self.ranges[pos].bins
    }

    pub fn size_to_bin(&self, size: f64, pos: usize) -> Result<usize> {
        self.ranges
            .get(pos)
            .map(|r| r.bin_of(size))
            .ok_or_else(|| Error::InvalidArgument(format!("no grid for position {pos}")))
    }

    pub fn bin_to_size(&self, bin: usize, pos: usize) -> Result<f64> {
        let r = self
            .ranges
            .get(pos)
            .ok_or_else(|| Error::InvalidArgument(format!("no grid for position {pos}")))?;
        if bin >= r.bins {
            return Err(Error::InvalidArgument(format!(
                "bin {bin} out of range for position {pos} ({} bins)",
                r.bins
            )));
        }
        Ok(r.midpoint(bin))
    }

    /// Bin-index each frame of each GOP: result is `[gop][pos]`.
    pub fn quantize(&self, trace: &Trace) -> Result<Vec<Vec<usize>>> {
        self.check_structure(trace.structure())?;
        Ok(trace
            .gops()
            .iter()
            .map(|g| {
                g.0.iter()
                    .zip(&self.ranges)
                    .map(|(&s, r)| r.bin_of(s as f64))
                    .collect()
            })
            .collect())
    }

    pub fn check_structure(&self, s: &GopStructure) -> Result<()> {
        if self.ranges.len() != s.frames_per_gop() {
            return Err(Error::Mismatch(format!(
                "grid covers {} positions, structure has {}",
                self.ranges.len(),
                s.frames_per_gop()
            )));
        }
        if let Some(p) = (0..self.ranges.len()).find(|&p| self.ranges[p].bins != s.bin_counts()[p]) {
            return Err(Error::Mismatch(format!(
                "position {p}: grid has {} bins, structure {}",
                self.ranges[p].bins,
                s.bin_counts()[p]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_0_100() -> QuantGrid {
        QuantGrid::new(vec![BinRange::new(0.0, 100.0, 10).unwrap()]).unwrap()
    }

    #[test]
    fn bin_conventions() {
        let g = grid_0_100();
        assert_eq!(g.size_to_bin(5.0, 0).unwrap(), 0);
        assert_eq!(g.bin_to_size(0, 0).unwrap(), 5.0);
        assert_eq!(g.size_to_bin(100.0, 0).unwrap(), 9);
        assert_eq!(g.size_to_bin(37.0, 0).unwrap(), 3);
        assert_eq!(g.bin_to_size(3, 0).unwrap(), 35.0);
        assert_eq!(g.size_to_bin(-3.0, 0).unwrap(), 0);
        assert_eq!(g.size_to_bin(1e9, 0).unwrap(), 9);
        assert_eq!(g.size_to_bin(10.0, 0).unwrap(), 1);
        assert!(g.bin_to_size(10, 0).is_err());
        assert!(g.size_to_bin(1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_half_bin(
            lo in -1e6f64..1e6,
            span in 1e-3f64..1e6,
            bins in 2usize..64,
            frac in 0.0f64..=1.0,
        ) {
            let r = BinRange::new(lo, lo + span, bins).unwrap();
            let s = lo + frac * span;
            let back = r.midpoint(r.bin_of(s));
            prop_assert!((back - s).abs() <= 0.5 * r.width() * (1.0 + 1e-9));
        }

        #[test]
        fn midpoints_increase(lo in -1e3f64..1e3, span in 1e-2f64..1e4, bins in 2usize..64) {
            let r = BinRange::new(lo, lo + span, bins).unwrap();
            for b in 1..bins {
                prop_assert!(r.midpoint(b) > r.midpoint(b - 1));
            }
        }
    }
}
