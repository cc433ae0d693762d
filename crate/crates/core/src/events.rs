//! Event registry and same-week deduplication.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::DateDay;

/// Events closer than this many days compete in deduplication.
pub const SAME_WEEK_DAYS: i64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    IslamistTerrorism,
    Islamophobic,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::IslamistTerrorism => "islamist_terrorism",
            EventType::Islamophobic => "islamophobic",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "islamist_terrorism" => Ok(EventType::IslamistTerrorism),
            "islamophobic" => Ok(EventType::Islamophobic),
            other => Err(Error::Validation(format!("unknown event type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub date: DateDay,
    pub name: String,
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub country: String,
    pub victims: u32,
}

const HEADER: [&str; 6] = ["id", "date", "name", "type", "country", "victims"];

/// Parses the events CSV (`id,date,name,type,country,victims`), sorted by
/// date then id.
pub fn parse_events_csv(text: &str, source: &str) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::format(source, format!("header must be `{}`", HEADER.join(","))));
    }
    let mut events = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(source, format!("row {line}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |msg: String| Error::format(source, format!("row {line}: {msg}"));
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if !ids.insert(id.clone()) {
            return Err(bad(format!("duplicate id `{id}`")));
        }
        let date: DateDay = field(1).parse().map_err(|e: Error| bad(e.to_string()))?;
        let event_type: EventType = field(3).parse().map_err(|e: Error| bad(e.to_string()))?;
        let victims: u32 = field(5)
            .parse()
            .map_err(|_| bad(format!("victims `{}` is not a non-negative integer", field(5))))?;
        events.push(Event {
            id,
            date,
            name: field(2).to_string(),
            event_type,
            country: field(4).to_string(),
            victims,
        });
    }
    events.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));
    Ok(events)
}

pub fn load_events(path: &Path) -> Result<Vec<Event>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events_csv(&text, &path.display().to_string())
}

pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Validation(format!("writing events: {e}"));
    w.write_record(HEADER).map_err(to_err)?;
    for e in events {
        w.write_record([
            e.id.as_str(),
            &e.date.to_string(),
            &e.name,
            e.event_type.as_str(),
            &e.country,
            &e.victims.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Validation(format!("writing events: {e}")))?;
    Ok(())
}

/// Keeps at most one event per sliding 7-day neighbourhood.
///
/// Events are taken greedily by most victims (ties: earlier date, then id);
/// an event is dropped when a kept event lies fewer than 7 days away. The
/// result is sorted by date and does not depend on input order.
pub fn dedupe_same_week(events: &[Event]) -> Vec<Event> {
    let mut order: Vec<&Event> = events.iter().collect();
    order.sort_by(|a, b| {
        b.victims
            .cmp(&a.victims)
            .then_with(|| a.date.cmp(&b.date))
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut kept: Vec<Event> = Vec::new();
    for e in order {
        if kept
            .iter()
            .all(|k| k.date.days_until(e.date).abs() >= SAME_WEEK_DAYS)
        {
            kept.push(e.clone());
        }
    }
    kept.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));
    kept
}
