use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Event, Session};

/// Parameters of the synthetic click generator.
///
/// Every inter-click gap is drawn from one of `regimes` disjoint ranges
/// `[lo_r, 2 * lo_r)` with `lo_r = 1s * 5^r`. With `temporal_signal` the next
/// item is `successor[current][r]`, so the gap that will elapse before the
/// next click decides which item comes next; without it the next item is
/// always `successor[current][0]` and time carries no information.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_items: usize,
    pub n_sessions: usize,
    pub seed: u64,
    pub temporal_signal: bool,
    pub regimes: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub span_days: i64,
}

pub const SYNTH_EPOCH_MS: i64 = 1_600_000_000_000;

impl SynthSpec {
    pub fn new(n_items: usize, n_sessions: usize, seed: u64, temporal_signal: bool) -> Self {
        SynthSpec {
            n_items,
            n_sessions,
            seed,
            temporal_signal,
            regimes: 8,
            min_len: 2,
            max_len: 8,
            span_days: 30,
        }
    }

    /// Half-open gap range of regime `r`, in milliseconds.
    pub fn regime_bounds(&self, r: usize) -> (i64, i64) {
        let lo = 1000 * 5i64.pow(r as u32);
        (lo, 2 * lo)
    }

    pub fn item_key(i: usize) -> String {
        format!("i{i:04}")
    }
}

/// Deterministic under `spec.seed`.
///
/// # Panics
/// When `n_items < 4`, `n_sessions == 0`, `regimes == 0` or `min_len < 2`.
pub fn synth_corpus(spec: &SynthSpec) -> Vec<Session> {
    assert!(spec.n_items >= 4, "need at least 4 items");
    assert!(spec.n_sessions >= 1, "need at least one session");
    assert!(spec.regimes >= 1 && spec.min_len >= 2 && spec.max_len >= spec.min_len);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let successors: Vec<Vec<usize>> = (0..spec.n_items)
        .map(|i| {
            let mut others: Vec<usize> = (0..spec.n_items).filter(|&j| j != i).collect();
            others.shuffle(&mut rng);
            (0..spec.regimes).map(|r| others[r % others.len()]).collect()
        })
        .collect();

    let span_ms = spec.span_days * 86_400_000;
    (0..spec.n_sessions)
        .map(|s| {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let mut ts = SYNTH_EPOCH_MS + rng.gen_range(0..span_ms);
            let mut item = rng.gen_range(0..spec.n_items);
            let mut events = Vec::with_capacity(len);
            events.push(Event {
                item: SynthSpec::item_key(item),
                timestamp_ms: ts,
            });
            for _ in 1..len {
                let r = rng.gen_range(0..spec.regimes);
                let (lo, hi) = spec.regime_bounds(r);
                ts += rng.gen_range(lo..hi);
                item = successors[item][if spec.temporal_signal { r } else { 0 }];
                events.push(Event {
                    item: SynthSpec::item_key(item),
                    timestamp_ms: ts,
                });
            }
            Session::new(format!("s{s:06}"), events)
        })
        .collect()
}
