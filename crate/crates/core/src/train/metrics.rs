use rayon::prelude::*;

use crate::data::LabeledInstance;
use crate::error::{Error, Result};
use crate::model::TempGnn;

pub const CUTOFFS: [usize; 2] = [5, 20];

/// 1-based rank of `target` when items are sorted by score descending, ties
/// broken by ascending item index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > t || (s == t && i < target))
        .count();
    ahead + 1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub ranks: Vec<usize>,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<usize>) -> Self {
        EvalReport { ranks }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Fraction in [0, 1]; 0 for an empty report.
    pub fn recall(&self, k: usize) -> f64 {
        if self.ranks.is_empty() {
            return 0.0;
        }
        self.ranks.iter().filter(|&&r| r <= k).count() as f64 / self.ranks.len() as f64
    }

    pub fn mrr(&self, k: usize) -> f64 {
        if self.ranks.is_empty() {
            return 0.0;
        }
        let total: f64 = self.ranks.iter().filter(|&&r| r <= k).map(|&r| 1.0 / r as f64).sum();
        total / self.ranks.len() as f64
    }

    pub fn at(&self, k: usize) -> Metrics {
        Metrics {
            k,
            recall: self.recall(k),
            mrr: self.mrr(k),
        }
    }

    pub fn metrics(&self) -> [Metrics; 2] {
        CUTOFFS.map(|k| self.at(k))
    }
}

pub fn report_from_scores(scores: &[Vec<f64>], targets: &[usize]) -> EvalReport {
    EvalReport::from_ranks(scores.iter().zip(targets).map(|(s, &t)| rank_of(s, t)).collect())
}

/// Ranks every instance against the full catalogue by predicted probability.
pub fn evaluate(model: &TempGnn, instances: &[LabeledInstance]) -> Result<EvalReport> {
    let n = model.config.n_items;
    let ranks = instances
        .par_iter()
        .map(|inst| {
            if inst.target >= n {
                return Err(Error::Vocabulary {
                    index: inst.target,
                    size: n,
                });
            }
            Ok(rank_of(model.predict(inst)?.data(), inst.target))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_ranks(ranks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn definitions() {
        let r = EvalReport::from_ranks(vec![1]);
        assert_eq!((r.recall(5), r.mrr(5)), (1.0, 1.0));
        let r = EvalReport::from_ranks(vec![6]);
        assert_eq!((r.recall(5), r.mrr(5)), (0.0, 0.0));
        assert_eq!(r.recall(20), 1.0);
        assert_eq!(r.mrr(20), 1.0 / 6.0);
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let s = [0.5, 0.9, 0.5, 0.5];
        assert_eq!(rank_of(&s, 1), 1);
        assert_eq!(rank_of(&s, 0), 2);
        assert_eq!(rank_of(&s, 2), 3);
        assert_eq!(rank_of(&s, 3), 4);
    }

    #[test]
    fn empty_report_is_zero() {
        let r = EvalReport::default();
        assert_eq!(r.recall(20), 0.0);
        assert_eq!(r.mrr(20), 0.0);
    }

    proptest! {
        #[test]
        fn deeper_cutoffs_never_score_lower(
            rows in prop::collection::vec((prop::collection::vec(0u8..6, 30), 0usize..30), 1..40)
        ) {
            let scores: Vec<Vec<f64>> = rows.iter().map(|(s, _)| s.iter().map(|&v| v as f64).collect()).collect();
            let targets: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let r = report_from_scores(&scores, &targets);
            let [m5, m20] = r.metrics();
            prop_assert!(m20.recall >= m5.recall && m20.mrr >= m5.mrr);
            prop_assert!((0.0..=1.0).contains(&m5.mrr) && (0.0..=1.0).contains(&m20.recall));
        }

        #[test]
        fn ranks_form_a_permutation(s in prop::collection::vec(0u8..4, 1..25)) {
            let scores: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            let mut ranks: Vec<usize> = (0..scores.len()).map(|t| rank_of(&scores, t)).collect();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=scores.len()).collect::<Vec<_>>());
        }
    }
}
