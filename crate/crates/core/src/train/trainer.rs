use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{Adam, AdamConfig};
use super::metrics::evaluate;
use crate::data::LabeledInstance;
use crate::error::{Error, Result};
use crate::model::{Param, TempGnn};
use crate::tensor::Tensor;

/// Instances per parallel work unit. Fixed so the summation order, and hence
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 100,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there is no validation slice.
    pub val_recall20: Option<f64>,
    pub val_mrr20: Option<f64>,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation model, or the last epoch without validation data.
    pub model: TempGnn,
    pub best_epoch: Option<usize>,
    pub logs: Vec<EpochLog>,
}

fn accumulate(sum: &mut [Option<Tensor>], grads: Vec<Option<Tensor>>) {
    for (s, g) in sum.iter_mut().zip(grads) {
        match (s.as_mut(), g) {
            (Some(s), Some(g)) => s.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
            (None, Some(g)) => *s = Some(g),
            (_, None) => {}
        }
    }
}

/// Summed loss and summed gradients over `batch`.
pub fn batch_gradient(model: &TempGnn, batch: &[&LabeledInstance]) -> Result<(f64, Vec<Option<Tensor>>)> {
    let width = model.params.len();
    let chunks = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut sum = vec![None; width];
            for inst in chunk {
                let (l, g) = model.loss_and_grad(inst)?;
                loss += l;
                accumulate(&mut sum, g);
            }
            Ok((loss, sum))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut sum = vec![None; width];
    for (l, g) in chunks {
        loss += l;
        accumulate(&mut sum, g);
    }
    Ok((loss, sum))
}

pub fn train(
    mut model: TempGnn,
    train_set: &[LabeledInstance],
    validation: &[LabeledInstance],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus { stage: "training" });
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    for inst in train_set.iter().chain(validation) {
        inst.check(model.config.n_items)?;
    }
    if validation.is_empty() && config.epochs > 0 {
        log::warn!("validation slice is empty; keeping the last epoch");
    }

    let names: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
    let mut adam = Adam::new(config.adam.clone(), &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, TempGnn)> = None;
    let start = Instant::now();

    for epoch in 0..config.epochs {
        let lr = config.adam.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledInstance> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradient(&model, &batch).map_err(|e| match e {
                Error::NonFinite { what } => Error::NonFinite {
                    what: format!("{what} (epoch {epoch}, batch {b})"),
                },
                other => other,
            })?;
            let n = batch.len() as f64;
            for t in grads.iter_mut().flatten() {
                t.data_mut().iter_mut().for_each(|v| *v /= n);
            }
            adam.step(&mut model.params, &grads, lr, &names)?;
            total += loss;
        }
        let train_loss = total / train_set.len() as f64;

        let (val_recall20, val_mrr20) = if validation.is_empty() {
            (None, None)
        } else {
            let report = evaluate(&model, validation)?;
            let (r, m) = (report.recall(20), report.mrr(20));
            if best.as_ref().is_none_or(|(score, _, _)| r > *score) {
                best = Some((r, epoch, model.clone()));
            }
            (Some(r), Some(m))
        };
        let log = EpochLog {
            epoch,
            train_loss,
            val_recall20,
            val_mrr20,
            lr,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.5} val R@20 {} lr {lr:e}",
            val_recall20.map_or("-".into(), |r| format!("{:.2}", 100.0 * r))
        );
        logs.push(log);
    }

    Ok(match best {
        Some((_, epoch, best_model)) => TrainOutcome {
            model: best_model,
            best_epoch: Some(epoch),
            logs,
        },
        None => TrainOutcome {
            model,
            best_epoch: None,
            logs,
        },
    })
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_R@20,val_M@20,lr,wall_time";

/// Validation metrics are percentages; missing ones are empty fields.
pub fn write_metrics_csv<W: Write>(mut out: W, logs: &[EpochLog]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    let pct = |v: Option<f64>| v.map_or(String::new(), |v| format!("{:.2}", 100.0 * v));
    for l in logs {
        writeln!(
            out,
            "{},{},{},{},{:e},{:.3}",
            l.epoch,
            l.train_loss,
            pct(l.val_recall20),
            pct(l.val_mrr20),
            l.lr,
            l.wall_time
        )?;
    }
    Ok(())
}

pub fn save_metrics_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_csv(std::io::BufWriter::new(file), logs).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{expand, synth_corpus, SynthSpec, Vocabulary};
    use crate::model::ModelConfig;
    use crate::temporal::EncoderVariant;

    fn corpus(n_sessions: usize) -> Vec<LabeledInstance> {
        let sessions = synth_corpus(&SynthSpec::new(15, n_sessions, 3, true));
        let vocab = Vocabulary::from_sessions(&sessions);
        let encoded: Vec<_> = sessions.iter().map(|s| vocab.encode(s).unwrap()).collect();
        expand(&encoded, 5).unwrap()
    }

    fn small_model(data: &[LabeledInstance], seed: u64) -> TempGnn {
        let config = ModelConfig {
            dim: 8,
            layers: 1,
            max_len: 5,
            tn: EncoderVariant::QuantileActGate(4),
            te: EncoderVariant::QuantileActGate(4),
            ..ModelConfig::new(15)
        };
        TempGnn::from_training(config, data, seed).unwrap()
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let data = corpus(20);
        let model = small_model(&data, 1);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(model.clone(), &data, &data, &config).unwrap();
        assert_eq!(out.model, model);
        assert!(out.logs.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let data = corpus(30);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 16,
            seed: 4,
            ..TrainConfig::default()
        };
        let a = train(small_model(&data, 2), &data, &data[..20], &config).unwrap();
        let b = train(small_model(&data, 2), &data, &data[..20], &config).unwrap();
        let bits = |o: &TrainOutcome| o.logs.iter().map(|l| l.train_loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn chunked_gradient_matches_sequential_sum() {
        let data = corpus(10);
        let model = small_model(&data, 5);
        let batch: Vec<&LabeledInstance> = data.iter().take(23).collect();
        let (loss, grads) = batch_gradient(&model, &batch).unwrap();
        let mut want_loss = 0.0;
        let mut want = vec![None; model.params.len()];
        for inst in &batch {
            let (l, g) = model.loss_and_grad(inst).unwrap();
            want_loss += l;
            accumulate(&mut want, g);
        }
        assert!((loss - want_loss).abs() <= 1e-9 * want_loss);
        for (g, w) in grads.iter().zip(&want) {
            match (g, w) {
                (Some(g), Some(w)) => assert!(g.max_abs_diff(w) <= 1e-12),
                (None, None) => {}
                _ => panic!("sparsity pattern differs"),
            }
        }
    }

    #[test]
    fn training_lowers_the_loss() {
        let data = corpus(40);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 20,
            adam: AdamConfig {
                lr: 1e-2,
                decay_epochs: 100,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train(small_model(&data, 0), &data, &[], &config).unwrap();
        assert!(out.logs[2].train_loss < out.logs[0].train_loss);
        assert_eq!(out.best_epoch, None);
        assert!(out.logs.iter().all(|l| l.val_recall20.is_none()));
    }

    #[test]
    fn best_validation_epoch_is_kept() {
        let data = corpus(30);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 25,
            ..TrainConfig::default()
        };
        let out = train(small_model(&data, 1), &data, &data[..30], &config).unwrap();
        let best = out.best_epoch.unwrap();
        let r = out.logs[best].val_recall20.unwrap();
        assert!(out.logs.iter().all(|l| l.val_recall20.unwrap() <= r));
        assert_eq!(evaluate(&out.model, &data[..30]).unwrap().recall(20), r);
    }

    #[test]
    fn metrics_csv_layout() {
        let logs = vec![
            EpochLog {
                epoch: 0,
                train_loss: 2.5,
                val_recall20: Some(0.5),
                val_mrr20: Some(0.125),
                lr: 1e-3,
                wall_time: 1.0,
            },
            EpochLog {
                epoch: 1,
                train_loss: 2.0,
                val_recall20: None,
                val_mrr20: None,
                lr: 1e-3,
                wall_time: 2.0,
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &logs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "0,2.5,50.00,12.50,1e-3,1.000");
        assert_eq!(lines[2], "1,2,,,1e-3,2.000");
    }
}
