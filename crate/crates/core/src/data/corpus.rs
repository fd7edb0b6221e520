//! Preprocessed corpus files.
//!
//! An instance file holds one labeled instance per line:
//! `session_id <TAB> item_idx:timestamp_ms,item_idx:timestamp_ms,...`, where
//! the final pair is the target click and its timestamp is the prediction
//! time. The vocabulary file holds `item_key <TAB> index` lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Event, LabeledInstance, Session, Vocabulary};
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn write_instances(path: &Path, instances: &[LabeledInstance]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for inst in instances {
        write!(w, "{}\t", inst.prefix.id).map_err(io)?;
        for e in &inst.prefix.events {
            write!(w, "{}:{},", e.item, e.timestamp_ms).map_err(io)?;
        }
        writeln!(w, "{}:{}", inst.target, inst.prefix.prediction_ts).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_pair(raw: &str, line: usize) -> Result<(usize, i64)> {
    let bad = || Error::Parse {
        line,
        detail: format!("malformed click {raw:?}"),
    };
    let (item, ts) = raw.split_once(':').ok_or_else(bad)?;
    Ok((
        item.trim().parse().map_err(|_| bad())?,
        ts.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn read_instances(path: &Path) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, clicks) = line.split_once('\t').ok_or(Error::Parse {
            line: lineno,
            detail: "missing tab separator".into(),
        })?;
        let pairs = clicks
            .split(',')
            .map(|p| parse_pair(p, lineno))
            .collect::<Result<Vec<_>>>()?;
        if pairs.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                detail: "an instance needs at least one prefix click and a target".into(),
            });
        }
        let (target, prediction_ts) = *pairs.last().unwrap();
        let events: Vec<Event<usize>> = pairs[..pairs.len() - 1]
            .iter()
            .map(|&(item, timestamp_ms)| Event { item, timestamp_ms })
            .collect();
        if events.windows(2).any(|w| w[0].timestamp_ms > w[1].timestamp_ms)
            || events.last().is_some_and(|e| e.timestamp_ms > prediction_ts)
        {
            return Err(Error::Parse {
                line: lineno,
                detail: "timestamps must be non-decreasing".into(),
            });
        }
        out.push(LabeledInstance {
            prefix: Session {
                id: id.to_string(),
                events,
                prediction_ts,
            },
            target,
        });
    }
    Ok(out)
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut w = create(path)?;
    for (i, k) in vocab.keys().iter().enumerate() {
        writeln!(w, "{k}\t{i}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let mut keys: Vec<Option<String>> = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: &str| Error::Parse {
            line: n + 1,
            detail: detail.to_string(),
        };
        let (key, idx) = line.rsplit_once('\t').ok_or_else(|| bad("missing tab separator"))?;
        let idx: usize = idx.trim().parse().map_err(|_| bad("invalid index"))?;
        if idx >= keys.len() {
            keys.resize(idx + 1, None);
        }
        if keys[idx].replace(key.to_string()).is_some() {
            return Err(bad("duplicate index"));
        }
    }
    let keys = keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| k.ok_or_else(|| Error::Format(format!("vocabulary index {i} missing"))))
        .collect::<Result<Vec<_>>>()?;
    Vocabulary::from_keys(keys)
}

/// Writes raw sessions as a `session_id,timestamp,item_id` log with a header.
pub fn write_log(path: &Path, sessions: &[Session]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "session_id,timestamp,item_id").map_err(io)?;
    for s in sessions {
        for e in &s.events {
            writeln!(w, "{},{},{}", s.id, e.timestamp_ms, e.item).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{expand, parse_log, LogFormat};

    #[test]
    fn instances_survive_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.txt");
        let session = Session::new(
            "s1",
            vec![
                Event {
                    item: 2,
                    timestamp_ms: 10,
                },
                Event {
                    item: 0,
                    timestamp_ms: 30,
                },
                Event {
                    item: 2,
                    timestamp_ms: 35,
                },
            ],
        );
        let instances = expand(&[session], 10).unwrap();
        write_instances(&path, &instances).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "s1\t2:10,0:30\ns1\t2:10,0:30,2:35\n");
        assert_eq!(read_instances(&path).unwrap(), instances);
    }

    #[test]
    fn malformed_instance_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "s1\t1:10,2:20\ns2\t1:x,2:3\n").unwrap();
        match read_instances(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn vocabulary_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = Vocabulary::from_keys(vec!["b".into(), "a b".into()]).unwrap();
        write_vocabulary(&path, &vocab).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\t0\na b\t1\n");
        assert_eq!(read_vocabulary(&path).unwrap(), vocab);
    }

    #[test]
    fn log_round_trips_through_parser() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let sessions = crate::data::synth_corpus(&crate::data::SynthSpec::new(5, 4, 1, true));
        write_log(&path, &sessions).unwrap();
        assert_eq!(parse_log(&path, &LogFormat::default()).unwrap(), sessions);
    }
}
