use std::collections::{HashMap, HashSet};

use super::{LabeledInstance, Session, Vocabulary};
use crate::error::{Error, Result};

fn refresh(session: &mut Session) {
    session.prediction_ts = session.last_ts();
}

/// Drops items seen fewer than `min_item_count` times and sessions shorter
/// than two clicks, repeating until neither filter removes anything.
pub fn preprocess(sessions: Vec<Session>, min_item_count: usize) -> Result<(Vec<Session>, Vocabulary)> {
    if min_item_count == 0 {
        return Err(Error::Config("min_item_count must be at least 1".into()));
    }
    let mut current = sessions;
    loop {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &current {
            for item in s.items() {
                *counts.entry(item.as_str()).or_default() += 1;
            }
        }
        let rare: HashSet<String> = counts
            .into_iter()
            .filter(|&(_, c)| c < min_item_count)
            .map(|(k, _)| k.to_string())
            .collect();
        let before: usize = current.iter().map(Session::len).sum::<usize>() + current.len();

        let mut next = Vec::with_capacity(current.len());
        for mut s in current {
            s.events.retain(|e| !rare.contains(&e.item));
            if s.len() >= 2 {
                refresh(&mut s);
                next.push(s);
            }
        }
        let after: usize = next.iter().map(Session::len).sum::<usize>() + next.len();
        current = next;
        if after == before {
            break;
        }
    }
    if current.is_empty() {
        return Err(Error::EmptyCorpus { stage: "preprocessing" });
    }
    let vocab = Vocabulary::from_sessions(&current);
    Ok((current, vocab))
}

/// Sessions whose last click is within `test_window_ms` of the newest click
/// in the corpus form the test set. Test clicks on items never seen in
/// training are removed, and test sessions left with fewer than two clicks
/// are dropped.
pub fn split_by_time(sessions: Vec<Session>, test_window_ms: i64) -> Result<(Vec<Session>, Vec<Session>)> {
    if test_window_ms <= 0 {
        return Err(Error::Split("test window must be positive".into()));
    }
    let max_ts = sessions
        .iter()
        .map(Session::last_ts)
        .max()
        .ok_or(Error::EmptyCorpus { stage: "splitting" })?;
    let cutoff = max_ts - test_window_ms;
    let (test, train): (Vec<Session>, Vec<Session>) = sessions.into_iter().partition(|s| s.last_ts() > cutoff);
    if train.is_empty() {
        return Err(Error::Split(format!(
            "a test window of {test_window_ms} ms covers every session"
        )));
    }
    let known: HashSet<&str> = train.iter().flat_map(|s| s.items().map(String::as_str)).collect();
    let test = test
        .into_iter()
        .filter_map(|mut s| {
            s.events.retain(|e| known.contains(e.item.as_str()));
            refresh(&mut s);
            (s.len() >= 2).then_some(s)
        })
        .collect();
    Ok((train, test))
}

fn by_recency<K>(sessions: &mut [Session<K>]) {
    sessions.sort_by(|a, b| a.last_ts().cmp(&b.last_ts()).then_with(|| a.id.cmp(&b.id)));
}

/// Keeps the most recent `fraction` of sessions (by last click), rounded up.
pub fn keep_last_fraction<K>(mut sessions: Vec<Session<K>>, fraction: f64) -> Result<Vec<Session<K>>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    by_recency(&mut sessions);
    let keep = ((sessions.len() as f64) * fraction).ceil() as usize;
    let drop = sessions.len() - keep.min(sessions.len());
    let mut kept = sessions.split_off(drop);
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(kept)
}

/// Splits off the most recent `fraction` of sessions (by last click) as a
/// validation set. Both halves come back sorted by session id.
pub fn carve_validation<K>(mut sessions: Vec<Session<K>>, fraction: f64) -> (Vec<Session<K>>, Vec<Session<K>>) {
    by_recency(&mut sessions);
    let n_valid = ((sessions.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    let mut valid = sessions.split_off(sessions.len() - n_valid);
    sessions.sort_by(|a, b| a.id.cmp(&b.id));
    valid.sort_by(|a, b| a.id.cmp(&b.id));
    (sessions, valid)
}

/// Turns every session of length `n` into `n - 1` labeled prefixes, each cut
/// to its most recent `max_len` clicks. The prediction time of a prefix is
/// the timestamp of its target click.
pub fn expand(sessions: &[Session<usize>], max_len: usize) -> Result<Vec<LabeledInstance>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(sessions.iter().map(|s| s.len().saturating_sub(1)).sum());
    for s in sessions {
        for j in 1..s.len() {
            let start = j.saturating_sub(max_len);
            out.push(LabeledInstance {
                prefix: Session {
                    id: s.id.clone(),
                    events: s.events[start..j].to_vec(),
                    prediction_ts: s.events[j].timestamp_ms,
                },
                target: s.events[j].item,
            });
        }
    }
    Ok(out)
}
