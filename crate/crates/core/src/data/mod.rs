//! Session logs: parsing, the preprocessing protocol, train/test splitting,
//! sub-sequence expansion, synthetic corpora, and the on-disk corpus format.

mod corpus;
mod ingest;
mod pipeline;
mod preprocess;
mod synth;

use std::collections::HashMap;

pub use corpus::{read_instances, read_vocabulary, write_instances, write_log, write_vocabulary};
pub use ingest::{parse_duration_ms, parse_log, parse_reader, parse_timestamp_ms, ColumnRef, LogFormat};
pub use pipeline::{prepare, Corpus, PrepareOptions, TEST_FILE, TRAIN_FILE, VALID_FILE, VOCAB_FILE};
pub use preprocess::{carve_validation, expand, keep_last_fraction, preprocess, split_by_time};
pub use synth::{synth_corpus, SynthSpec};

use crate::error::{Error, Result};

/// One click: an item key and an epoch-millisecond timestamp.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event<K = String> {
    pub item: K,
    pub timestamp_ms: i64,
}

/// Time-ordered clicks of one anonymous session plus the time at which the
/// next click is to be predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session<K = String> {
    pub id: String,
    pub events: Vec<Event<K>>,
    pub prediction_ts: i64,
}

impl<K> Session<K> {
    pub fn new(id: impl Into<String>, events: Vec<Event<K>>) -> Self {
        let prediction_ts = events.last().map_or(0, |e| e.timestamp_ms);
        Session {
            id: id.into(),
            events,
            prediction_ts,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_ts(&self) -> i64 {
        self.events.last().map_or(i64::MIN, |e| e.timestamp_ms)
    }

    pub fn items(&self) -> impl Iterator<Item = &K> {
        self.events.iter().map(|e| &e.item)
    }
}

/// A session prefix paired with the item clicked next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledInstance {
    pub prefix: Session<usize>,
    pub target: usize,
}

impl LabeledInstance {
    pub fn items(&self) -> Vec<usize> {
        self.prefix.events.iter().map(|e| e.item).collect()
    }

    pub fn check(&self, n_items: usize) -> Result<()> {
        if self.prefix.is_empty() {
            return Err(Error::Degenerate {
                op: "instance",
                detail: format!("session {} has an empty prefix", self.prefix.id),
            });
        }
        for &index in self.prefix.items().chain(std::iter::once(&self.target)) {
            if index >= n_items {
                return Err(Error::Vocabulary { index, size: n_items });
            }
        }
        Ok(())
    }
}

/// Bijection between external item keys and dense indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Indices follow first occurrence across `sessions` in order.
    pub fn from_sessions(sessions: &[Session]) -> Self {
        let mut vocab = Vocabulary::default();
        for s in sessions {
            for item in s.items() {
                vocab.insert(item);
            }
        }
        vocab
    }

    pub fn from_keys(keys: Vec<String>) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for k in keys {
            if vocab.index.contains_key(&k) {
                return Err(Error::Config(format!("duplicate vocabulary key {k:?}")));
            }
            vocab.insert(&k);
        }
        Ok(vocab)
    }

    fn insert(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(key.to_string());
        self.index.insert(key.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, index: usize) -> Option<&str> {
        self.keys.get(index).map(String::as_str)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn encode(&self, session: &Session) -> Result<Session<usize>> {
        let events = session
            .events
            .iter()
            .map(|e| {
                self.get(&e.item)
                    .map(|item| Event {
                        item,
                        timestamp_ms: e.timestamp_ms,
                    })
                    .ok_or_else(|| Error::UnknownItem(e.item.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Session {
            id: session.id.clone(),
            events,
            prediction_ts: session.prediction_ts,
        })
    }
}

#[cfg(test)]
pub(crate) fn raw_session(id: &str, events: &[(&str, i64)]) -> Session {
    Session::new(
        id,
        events
            .iter()
            .map(|&(item, ts)| Event {
                item: item.to_string(),
                timestamp_ms: ts,
            })
            .collect(),
    )
}
