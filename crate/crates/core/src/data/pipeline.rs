//! The full preparation protocol and its on-disk directory layout.

use std::path::Path;

use super::{
    carve_validation, expand, keep_last_fraction, preprocess, read_instances, read_vocabulary, split_by_time,
    write_instances, write_vocabulary, LabeledInstance, Session, Vocabulary,
};
use crate::error::{Error, Result};

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareOptions {
    pub min_item_count: usize,
    pub test_window_ms: i64,
    /// Most recent fraction of training sessions kept, before expansion.
    pub keep_last_fraction: f64,
    pub validation_fraction: f64,
    pub max_len: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            min_item_count: 5,
            test_window_ms: 86_400_000,
            keep_last_fraction: 1.0,
            validation_fraction: 0.1,
            max_len: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<LabeledInstance>,
    pub validation: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

/// Filter, split by time, subsample, carve validation, index and expand.
///
/// The vocabulary covers exactly the items of the kept training sessions
/// (validation included); test clicks outside it are removed.
pub fn prepare(sessions: Vec<Session>, opts: &PrepareOptions) -> Result<Corpus> {
    let (sessions, _) = preprocess(sessions, opts.min_item_count)?;
    let (train, test) = split_by_time(sessions, opts.test_window_ms)?;
    let train = keep_last_fraction(train, opts.keep_last_fraction)?;
    let vocab = Vocabulary::from_sessions(&train);
    let test: Vec<Session> = test
        .into_iter()
        .filter_map(|mut s| {
            s.events.retain(|e| vocab.contains(&e.item));
            s.prediction_ts = s.last_ts();
            (s.len() >= 2).then_some(s)
        })
        .collect();
    let (train, validation) = carve_validation(train, opts.validation_fraction);

    let encode = |ss: &[Session]| -> Result<Vec<LabeledInstance>> {
        let encoded = ss.iter().map(|s| vocab.encode(s)).collect::<Result<Vec<_>>>()?;
        expand(&encoded, opts.max_len)
    };
    let corpus = Corpus {
        train: encode(&train)?,
        validation: encode(&validation)?,
        test: encode(&test)?,
        vocab,
    };
    if corpus.train.is_empty() {
        return Err(Error::EmptyCorpus {
            stage: "validation carving",
        });
    }
    Ok(corpus)
}

impl Corpus {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_vocabulary(&dir.join(VOCAB_FILE), &self.vocab)?;
        write_instances(&dir.join(TRAIN_FILE), &self.train)?;
        write_instances(&dir.join(VALID_FILE), &self.validation)?;
        write_instances(&dir.join(TEST_FILE), &self.test)
    }

    /// Reads a directory written by [`Corpus::save`]; a missing validation
    /// file reads as an empty slice.
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = read_vocabulary(&dir.join(VOCAB_FILE))?;
        let valid = dir.join(VALID_FILE);
        let corpus = Corpus {
            train: read_instances(&dir.join(TRAIN_FILE))?,
            validation: if valid.exists() {
                read_instances(&valid)?
            } else {
                Vec::new()
            },
            test: read_instances(&dir.join(TEST_FILE))?,
            vocab,
        };
        for inst in corpus.train.iter().chain(&corpus.validation).chain(&corpus.test) {
            inst.check(corpus.vocab.len())?;
        }
        Ok(corpus)
    }
}
