use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Sorted boundaries splitting a time-difference axis into
/// `boundaries.len() + 1` buckets.
///
/// Buckets are closed on the right: a value equal to a boundary belongs to
/// the bucket on its left. Values outside the fitted range land in the first
/// or last bucket, so [`Bucketizer::bucketize`] is total.
#[derive(Clone, Debug, PartialEq)]
pub struct Bucketizer<T = i64> {
    boundaries: Vec<T>,
}

fn sorted<T: Copy + PartialOrd>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Nearest-rank order statistic: the value at rank `ceil(q * n)` (1-based).
fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

impl<T: Copy + PartialOrd> Bucketizer<T> {
    /// One bucket holding everything.
    pub fn single() -> Self {
        Bucketizer { boundaries: Vec::new() }
    }

    pub fn from_boundaries(boundaries: Vec<T>) -> Result<Self> {
        if boundaries
            .windows(2)
            .any(|w| !matches!(w[0].partial_cmp(&w[1]), Some(Ordering::Less | Ordering::Equal)))
        {
            return Err(Error::Config("bucket boundaries must be non-decreasing".into()));
        }
        Ok(Bucketizer { boundaries })
    }

    /// Equal-mass buckets: boundary `k` is the nearest-rank `k / buckets`
    /// quantile of `diffs`, for `k = 1..buckets`. With `n` distinct values
    /// and `buckets | n`, each bucket receives exactly `n / buckets` of them.
    pub fn fit_quantile(diffs: &[T], buckets: usize) -> Result<Self> {
        if diffs.is_empty() {
            return Err(Error::Config("cannot fit buckets on an empty sample".into()));
        }
        if buckets == 0 {
            return Err(Error::Config("bucket count must be at least 1".into()));
        }
        let s = sorted(diffs);
        let n = s.len();
        let boundaries: Vec<T> = (1..buckets)
            .map(|k| {
                let rank = (k * n).div_ceil(buckets).max(1);
                s[rank - 1]
            })
            .collect();
        let distinct = 1 + s.windows(2).filter(|w| w[0] != w[1]).count();
        if buckets > distinct {
            log::warn!("{buckets} buckets requested for {distinct} distinct values; some buckets will be empty");
        }
        Ok(Bucketizer { boundaries })
    }

    pub fn bucket_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[T] {
        &self.boundaries
    }

    /// Number of boundaries strictly below `value`.
    pub fn bucketize(&self, value: T) -> usize {
        self.boundaries.partition_point(|b| *b < value)
    }
}

impl Bucketizer<i64> {
    /// Equal-width buckets over the range between the `clip` and `1 - clip`
    /// nearest-rank quantiles of `diffs`. Boundaries are floored to whole
    /// milliseconds, which leaves the assignment of integer inputs unchanged.
    pub fn fit_equal_width(diffs: &[i64], buckets: usize, clip: f64) -> Result<Self> {
        if diffs.is_empty() {
            return Err(Error::Config("cannot fit buckets on an empty sample".into()));
        }
        if buckets == 0 {
            return Err(Error::Config("bucket count must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&clip) {
            return Err(Error::Config(format!("clip fraction {clip} outside [0, 0.5)")));
        }
        let s = sorted(diffs);
        let lo = nearest_rank(&s, clip) as f64;
        let hi = nearest_rank(&s, 1.0 - clip) as f64;
        let width = (hi - lo) / buckets as f64;
        let boundaries = (1..buckets).map(|k| (lo + width * k as f64).floor() as i64).collect();
        Ok(Bucketizer { boundaries })
    }
}
