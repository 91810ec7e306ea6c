use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;

/// One bin of a [`Histogram`]: training count and the mean of the training
/// values that fell into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub count: u64,
    pub representative: f64,
}

/// Variable-width histogram with percentile cut-points.
///
/// Bin `i` covers `[cuts[i-1], cuts[i])`; the first bin extends to `-inf`
/// and the last to `+inf`, so every real number has a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    cuts: Vec<f64>,
    bins: Vec<Bin>,
    target_bins: usize,
}

impl Histogram {
    /// Fits a histogram with at most `bins` bins.
    ///
    /// Cut-point `i` sits halfway between the nearest-rank `i/bins` quantile
    /// and the next larger training value; cut-points that would split equal
    /// values are dropped, so no bin is ever empty.
    pub fn fit(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("histogram over no values".into()));
        }
        if bins == 0 {
            return Err(Error::InvalidArgument("bins must be positive".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {bad}")));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();

        let mut cuts: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
        for i in 1..bins {
            let rank = (i * n).div_ceil(bins);
            if rank == 0 || rank >= n {
                continue;
            }
            let (lo, hi) = (sorted[rank - 1], sorted[rank]);
            if lo >= hi {
                continue;
            }
            let mut cut = lo + (hi - lo) / 2.0;
            if cut <= lo {
                cut = hi;
            }
            if cuts.last().is_none_or(|&last| cut > last) {
                cuts.push(cut);
            }
        }

        let mut sums = vec![0.0; cuts.len() + 1];
        let mut counts = vec![0u64; cuts.len() + 1];
        for &v in &sorted {
            let b = cuts.partition_point(|&c| c <= v);
            sums[b] += v;
            counts[b] += 1;
        }
        let bins_out = counts
            .iter()
            .zip(&sums)
            .map(|(&count, &sum)| Bin {
                count,
                representative: sum / count as f64,
            })
            .collect();
        Ok(Self {
            cuts,
            bins: bins_out,
            target_bins: bins,
        })
    }

    /// Index of the bin containing `x`. Values outside the training range
    /// clamp to the first or last bin.
    pub fn discretize(&self, x: f64) -> usize {
        if x.is_nan() {
            return 0;
        }
        self.cuts.partition_point(|&c| c <= x)
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn target_bins(&self) -> usize {
        self.target_bins
    }

    pub fn representative(&self, bin: usize) -> f64 {
        self.bins[bin].representative
    }

    /// Half-open range `[lower, upper)` of a bin, with infinite outer edges.
    pub fn range(&self, bin: usize) -> (f64, f64) {
        let lower = if bin == 0 { f64::NEG_INFINITY } else { self.cuts[bin - 1] };
        let upper = self.cuts.get(bin).copied().unwrap_or(f64::INFINITY);
        (lower, upper)
    }

    /// All bins intersecting the closed interval `[lo, hi]`, in ascending order.
    pub fn overlapping(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        self.discretize(lo)..=self.discretize(hi)
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}
