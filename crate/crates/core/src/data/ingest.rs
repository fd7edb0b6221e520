use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::{Event, Session};
use crate::error::{Error, Result};

/// A column addressed by header name or zero-based position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty column reference".into()));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LogFormat {
    pub delimiter: u8,
    pub has_header: bool,
    pub session: ColumnRef,
    pub timestamp: ColumnRef,
    pub item: ColumnRef,
}

impl Default for LogFormat {
    fn default() -> Self {
        LogFormat {
            delimiter: b',',
            has_header: true,
            session: ColumnRef::Name("session_id".into()),
            timestamp: ColumnRef::Name("timestamp".into()),
            item: ColumnRef::Name("item_id".into()),
        }
    }
}

impl LogFormat {
    /// Positional layout `(session_id, timestamp, item_id)` without a header.
    pub fn positional(delimiter: u8) -> Self {
        LogFormat {
            delimiter,
            has_header: false,
            session: ColumnRef::Index(0),
            timestamp: ColumnRef::Index(1),
            item: ColumnRef::Index(2),
        }
    }
}

/// Epoch milliseconds from either an integer or an ISO-8601 datetime.
/// Datetimes without an offset are taken as UTC.
pub fn parse_timestamp_ms(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(ms) = raw.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

/// Durations such as `500ms`, `30s`, `15m`, `12h`, `1d`, `7d`, `2w`. A bare
/// integer is milliseconds.
pub fn parse_duration_ms(raw: &str) -> Result<i64> {
    let raw = raw.trim();
    let split = raw.find(|c: char| !c.is_ascii_digit()).unwrap_or(raw.len());
    let (num, unit) = raw.split_at(split);
    let n: i64 = num
        .parse()
        .map_err(|_| Error::Config(format!("invalid duration {raw:?}")))?;
    let scale = match unit {
        "" | "ms" => 1,
        "s" => 1_000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" => 86_400_000,
        "w" => 7 * 86_400_000,
        _ => return Err(Error::Config(format!("invalid duration unit in {raw:?}"))),
    };
    Ok(n * scale)
}

fn resolve(col: &ColumnRef, header: Option<&csv::StringRecord>) -> Result<usize> {
    match col {
        ColumnRef::Index(i) => Ok(*i),
        ColumnRef::Name(name) => header
            .and_then(|h| h.iter().position(|f| f.trim() == name))
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in header"))),
    }
}

/// Groups rows into sessions sorted by id, each with events stably sorted by
/// timestamp so equal timestamps keep their log order.
pub fn parse_reader<R: Read>(reader: R, format: &LogFormat) -> Result<Vec<Session>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = if format.has_header {
        match records.next() {
            None => return Ok(Vec::new()),
            Some(r) => Some(r.map_err(|e| Error::Parse {
                line: 1,
                detail: e.to_string(),
            })?),
        }
    } else {
        None
    };
    let cols = [
        resolve(&format.session, header.as_ref())?,
        resolve(&format.timestamp, header.as_ref())?,
        resolve(&format.item, header.as_ref())?,
    ];

    let mut groups: HashMap<String, Vec<Event>> = HashMap::new();
    for record in records {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            detail: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let field = |i: usize| {
            record.get(i).map(str::trim).ok_or_else(|| Error::Parse {
                line,
                detail: format!("missing column {i}"),
            })
        };
        let session = field(cols[0])?;
        let ts_raw = field(cols[1])?;
        let item = field(cols[2])?;
        let timestamp_ms = parse_timestamp_ms(ts_raw).ok_or_else(|| Error::Parse {
            line,
            detail: format!("unparseable timestamp {ts_raw:?}"),
        })?;
        if timestamp_ms < 0 {
            return Err(Error::Parse {
                line,
                detail: format!("negative timestamp {timestamp_ms}"),
            });
        }
        if session.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line,
                detail: "empty session or item id".into(),
            });
        }
        groups.entry(session.to_string()).or_default().push(Event {
            item: item.to_string(),
            timestamp_ms,
        });
    }

    let mut sessions: Vec<Session> = groups
        .into_iter()
        .map(|(id, mut events)| {
            events.sort_by_key(|e| e.timestamp_ms);
            Session::new(id, events)
        })
        .collect();
    sessions.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(sessions)
}

pub fn parse_log(path: &Path, format: &LogFormat) -> Result<Vec<Session>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(std::io::BufReader::new(file), format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Session>> {
        parse_reader(text.as_bytes(), &LogFormat::default())
    }

    #[test]
    fn groups_one_session() {
        let s = parse("session_id,timestamp,item_id\n1,10,a\n1,20,b\n1,30,c\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[0].prediction_ts, 30);
    }

    #[test]
    fn sorts_events_stably() {
        let s = parse("session_id,timestamp,item_id\n1,30,c\n1,10,a\n1,20,b\n1,20,x\n").unwrap();
        let items: Vec<&str> = s[0].items().map(String::as_str).collect();
        assert_eq!(items, ["a", "b", "x", "c"]);
    }

    #[test]
    fn duplicate_rows_are_kept() {
        let s = parse("session_id,timestamp,item_id\n1,10,a\n1,10,a\n").unwrap();
        assert_eq!(s[0].len(), 2);
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("session_id,timestamp,item_id\n").unwrap().is_empty());
    }

    #[test]
    fn bad_row_reports_line_number() {
        let err = parse("session_id,timestamp,item_id\n1,10,a\n1,yesterday,b\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn named_columns_in_any_order() {
        let text = "item_id;ts;sid\na;2014-04-07T10:51:09.277Z;9\nb;2014-04-07T10:52:09.277Z;9\n";
        let fmt = LogFormat {
            delimiter: b';',
            timestamp: ColumnRef::Name("ts".into()),
            session: ColumnRef::Name("sid".into()),
            ..LogFormat::default()
        };
        let s = parse_reader(text.as_bytes(), &fmt).unwrap();
        assert_eq!(s[0].events[1].timestamp_ms - s[0].events[0].timestamp_ms, 60_000);
    }

    #[test]
    fn positional_without_header() {
        let s = parse_reader("7\t5\tq\n".as_bytes(), &LogFormat::positional(b'\t')).unwrap();
        assert_eq!(s[0].events[0].item, "q");
    }

    #[test]
    fn timestamp_forms() {
        assert_eq!(parse_timestamp_ms("1500"), Some(1500));
        assert_eq!(parse_timestamp_ms("1970-01-01T00:00:01Z"), Some(1000));
        assert_eq!(parse_timestamp_ms("1970-01-01 00:00:02.5"), Some(2500));
        assert_eq!(parse_timestamp_ms("1970-01-02"), Some(86_400_000));
        assert_eq!(parse_timestamp_ms("soon"), None);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration_ms("1d").unwrap(), 86_400_000);
        assert_eq!(parse_duration_ms("7d").unwrap(), 7 * 86_400_000);
        assert_eq!(parse_duration_ms("250ms").unwrap(), 250);
        assert_eq!(parse_duration_ms("90").unwrap(), 90);
        assert!(parse_duration_ms("1y").is_err());
    }
}
