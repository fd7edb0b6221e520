//! Variant ablation grid and bucket-count sweep.

use std::fmt::Write as _;

use super::config::RunConfig;
use super::metrics::{evaluate, EvalReport, Metrics, CUTOFFS};
use super::trainer::train;
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TempGnn};
use crate::temporal::EncoderVariant;

pub const METHODS: [&str; 8] = ["base", "position", "constant", "bucket", "q", "q+a", "q+g", "q+a+g"];

/// Trains on `corpus.train` (selecting on `corpus.validation`) and ranks
/// `corpus.test`. Initialization and shuffling both use `seed`.
pub fn train_and_evaluate(model: ModelConfig, run: &RunConfig, corpus: &Corpus, seed: u64) -> Result<EvalReport> {
    let mut tc = run.train_config()?;
    tc.seed = seed;
    let init = TempGnn::from_training(model, &corpus.train, seed)?;
    let out = train(init, &corpus.train, &corpus.validation, &tc)?;
    evaluate(&out.model, &corpus.test)
}

/// Metrics averaged over replicates.
fn mean_metrics(reports: &[EvalReport]) -> [Metrics; 2] {
    let n = reports.len() as f64;
    CUTOFFS.map(|k| Metrics {
        k,
        recall: reports.iter().map(|r| r.recall(k)).sum::<f64>() / n,
        mrr: reports.iter().map(|r| r.mrr(k)).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub method: String,
    pub tn: bool,
    pub te: bool,
}

impl AblationCell {
    /// `base` always has both flags off.
    pub fn new(method: &str, tn: bool, te: bool) -> Self {
        let base = EncoderVariant::parse(method, 1).is_ok_and(|v| v.is_none());
        AblationCell {
            method: method.to_string(),
            tn: tn && !base,
            te: te && !base,
        }
    }

    /// TN and TE variants of this cell; `base` or both flags off disables
    /// both embeddings.
    pub fn variants(&self, tn_buckets: usize, te_buckets: usize) -> Result<(EncoderVariant, EncoderVariant)> {
        let pick = |on: bool, buckets| {
            if on {
                EncoderVariant::parse(&self.method, buckets)
            } else {
                Ok(EncoderVariant::None)
            }
        };
        Ok((pick(self.tn, tn_buckets)?, pick(self.te, te_buckets)?))
    }
}

/// Every method with TN only, TE only and both; `base` appears once.
pub fn full_grid(methods: &[&str]) -> Result<Vec<AblationCell>> {
    let mut cells = Vec::new();
    for &m in methods {
        let v = EncoderVariant::parse(m, 1)?;
        if v.is_none() {
            cells.push(AblationCell::new(m, false, false));
        } else {
            for (tn, te) in [(true, false), (false, true), (true, true)] {
                cells.push(AblationCell::new(m, tn, te));
            }
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub reports: Vec<EvalReport>,
}

impl AblationRow {
    pub fn metrics(&self) -> [Metrics; 2] {
        mean_metrics(&self.reports)
    }
}

pub fn ablate(run: &RunConfig, corpus: &Corpus, grid: &[AblationCell], replicates: usize) -> Result<Vec<AblationRow>> {
    if grid.is_empty() || replicates == 0 {
        return Err(Error::Config(
            "ablation needs at least one cell and one replicate".into(),
        ));
    }
    let base = run.model_config(corpus.vocab.len())?;
    grid.iter()
        .map(|cell| {
            let (tn, te) = cell.variants(run.tn_buckets, run.te_buckets)?;
            let config = ModelConfig { tn, te, ..base.clone() };
            let reports = (0..replicates)
                .map(|r| {
                    log::info!("ablation {} tn={} te={} replicate {r}", cell.method, cell.tn, cell.te);
                    train_and_evaluate(config.clone(), run, corpus, run.seed + r as u64)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow {
                cell: cell.clone(),
                reports,
            })
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let flag = |b: bool| if b { "on" } else { "off" };
    let mut out = String::from("method\tTN\tTE\tR@5\tM@5\tR@20\tM@20\n");
    for row in rows {
        let [m5, m20] = row.metrics();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.cell.method,
            flag(row.cell.tn),
            flag(row.cell.te),
            pct(m5.recall),
            pct(m5.mrr),
            pct(m20.recall),
            pct(m20.mrr)
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepTarget {
    Tn,
    Te,
}

impl std::str::FromStr for SweepTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tn" => Ok(SweepTarget::Tn),
            "te" => Ok(SweepTarget::Te),
            other => Err(Error::Config(format!("sweep target must be tn or te, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub buckets: usize,
    pub reports: Vec<EvalReport>,
}

impl SweepRow {
    pub fn metrics(&self) -> [Metrics; 2] {
        mean_metrics(&self.reports)
    }
}

/// One run per bucket count on the target embedding, the other embedding
/// disabled. Count 0 is the base model. The target uses the run's variant
/// for that embedding, which must be a bucketed one.
pub fn sweep_buckets(
    run: &RunConfig,
    corpus: &Corpus,
    counts: &[usize],
    target: SweepTarget,
    replicates: usize,
) -> Result<Vec<SweepRow>> {
    if counts.is_empty() || replicates == 0 {
        return Err(Error::Config("sweep needs at least one count and one replicate".into()));
    }
    let name = match target {
        SweepTarget::Tn => &run.tn_variant,
        SweepTarget::Te => &run.te_variant,
    };
    if !EncoderVariant::parse(name, 1)?.is_bucketed() {
        return Err(Error::Config(format!("variant {name:?} has no buckets to sweep")));
    }
    let base = run.model_config(corpus.vocab.len())?;
    counts
        .iter()
        .map(|&b| {
            let v = if b == 0 {
                EncoderVariant::None
            } else {
                EncoderVariant::parse(name, b)?
            };
            let (tn, te) = match target {
                SweepTarget::Tn => (v, EncoderVariant::None),
                SweepTarget::Te => (EncoderVariant::None, v),
            };
            let config = ModelConfig { tn, te, ..base.clone() };
            let reports = (0..replicates)
                .map(|r| train_and_evaluate(config.clone(), run, corpus, run.seed + r as u64))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow { buckets: b, reports })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("buckets,R@20,M@20\n");
    for row in rows {
        let [_, m20] = row.metrics();
        writeln!(out, "{},{},{}", row.buckets, pct(m20.recall), pct(m20.mrr)).expect("writing to a String");
    }
    out
}
