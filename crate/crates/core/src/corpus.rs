//! Message ingestion, term matching and per-term daily series.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Term;
use crate::series::{DailySeries, DateDay};

pub const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Ingestion fails when more than this fraction of non-blank lines is malformed.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    TwitterLike,
    RedditLike,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::TwitterLike => "twitter_like",
            Platform::RedditLike => "reddit_like",
        }
    }

    pub fn variants(self) -> [SeriesVariant; 3] {
        match self {
            Platform::TwitterLike => [
                SeriesVariant::Messages,
                SeriesVariant::MessagesDedup,
                SeriesVariant::Users,
            ],
            Platform::RedditLike => [
                SeriesVariant::Posts,
                SeriesVariant::Comments,
                SeriesVariant::Users,
            ],
        }
    }

    /// Variants consulted by the peak prefilter.
    pub fn volume_variants(self) -> &'static [SeriesVariant] {
        match self {
            Platform::TwitterLike => &[SeriesVariant::Messages, SeriesVariant::Users],
            Platform::RedditLike => &[SeriesVariant::Posts, SeriesVariant::Comments, SeriesVariant::Users],
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twitter_like" => Ok(Platform::TwitterLike),
            "reddit_like" => Ok(Platform::RedditLike),
            other => Err(Error::Validation(format!("unknown platform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Message,
    Post,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVariant {
    Messages,
    MessagesDedup,
    Users,
    Posts,
    Comments,
}

impl SeriesVariant {
    pub const ALL: [SeriesVariant; 5] = [
        SeriesVariant::Messages,
        SeriesVariant::MessagesDedup,
        SeriesVariant::Users,
        SeriesVariant::Posts,
        SeriesVariant::Comments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesVariant::Messages => "messages",
            SeriesVariant::MessagesDedup => "messages_dedup",
            SeriesVariant::Users => "users",
            SeriesVariant::Posts => "posts",
            SeriesVariant::Comments => "comments",
        }
    }

    pub fn valid_for(self, platform: Platform) -> bool {
        platform.variants().contains(&self)
    }
}

impl fmt::Display for SeriesVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SeriesVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown series variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub platform: Platform,
    pub id: String,
    pub timestamp: NaiveDateTime,
    pub user: String,
    pub text: String,
    pub kind: MessageKind,
    pub parent_id: Option<String>,
}

impl MessageRecord {
    pub fn day(&self) -> DateDay {
        DateDay::from_naive(self.timestamp.date())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    platform: String,
    id: String,
    ts: String,
    user: String,
    text: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
}

/// Parses one JSONL line into a record.
pub fn parse_record(line: &str) -> Result<MessageRecord> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| Error::Validation(format!("bad record: {e}")))?;
    let platform: Platform = raw.platform.parse()?;
    let kind = match raw.kind.as_str() {
        "message" => MessageKind::Message,
        "post" => MessageKind::Post,
        "comment" => MessageKind::Comment,
        other => return Err(Error::Validation(format!("unknown kind `{other}`"))),
    };
    let allowed = match platform {
        Platform::TwitterLike => kind == MessageKind::Message,
        Platform::RedditLike => kind != MessageKind::Message,
    };
    if !allowed {
        return Err(Error::Validation(format!("kind {kind:?} not valid on {platform}")));
    }
    if kind == MessageKind::Comment && raw.parent_id.as_deref().is_none_or(str::is_empty) {
        return Err(Error::Validation("comment without parent_id".into()));
    }
    if raw.id.is_empty() {
        return Err(Error::Validation("empty id".into()));
    }
    let timestamp = NaiveDateTime::parse_from_str(&raw.ts, TS_FORMAT)
        .map_err(|e| Error::Validation(format!("bad ts `{}`: {e}", raw.ts)))?;
    Ok(MessageRecord {
        platform,
        id: raw.id,
        timestamp,
        user: raw.user,
        text: raw.text,
        kind,
        parent_id: raw.parent_id,
    })
}

pub fn record_to_json(r: &MessageRecord) -> String {
    let kind = match r.kind {
        MessageKind::Message => "message",
        MessageKind::Post => "post",
        MessageKind::Comment => "comment",
    };
    let raw = RawRecord {
        platform: r.platform.as_str().into(),
        id: r.id.clone(),
        ts: r.timestamp.format(TS_FORMAT).to_string(),
        user: r.user.clone(),
        text: r.text.clone(),
        kind: kind.into(),
        parent_id: r.parent_id.clone(),
    };
    serde_json::to_string(&raw).expect("record serializes")
}

pub fn write_jsonl<W: Write>(records: &[MessageRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", record_to_json(r))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<MessageRecord>,
    /// Non-blank lines seen.
    pub lines: usize,
    pub malformed: usize,
}

/// Reads JSONL records, skipping (and counting) malformed lines and
/// duplicate `(platform, id)` pairs.
pub fn read_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut seen: HashSet<(Platform, String)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::format(source, format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        match parse_record(&line) {
            Ok(r) if seen.insert((r.platform, r.id.clone())) => out.records.push(r),
            Ok(r) => {
                log::debug!("{source}:{}: duplicate id {}", i + 1, r.id);
                out.malformed += 1;
            }
            Err(e) => {
                log::debug!("{source}:{}: {e}", i + 1);
                out.malformed += 1;
            }
        }
    }
    if out.lines > 0 && out.malformed as f64 > MAX_MALFORMED_FRACTION * out.lines as f64 {
        return Err(Error::format(
            source,
            format!("{} of {} lines malformed", out.malformed, out.lines),
        ));
    }
    if out.malformed > 0 {
        log::warn!("{source}: skipped {} malformed lines of {}", out.malformed, out.lines);
    }
    Ok(out)
}

pub fn ingest_jsonl(path: &Path) -> Result<Ingested> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(f), &path.display().to_string())
}

/// Lowercases and splits on anything that is not a letter, digit or
/// apostrophe. `#` is kept only as the first character of a token; a bare
/// `#` is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if !cur.is_empty() && cur != "#" {
            tokens.push(std::mem::take(cur));
        }
        cur.clear();
    };
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() || c == '\'' {
            cur.push(c);
        } else if c == '#' {
            flush(&mut cur, &mut tokens);
            cur.push('#');
        } else {
            flush(&mut cur, &mut tokens);
        }
    }
    flush(&mut cur, &mut tokens);
    tokens
}

/// Conjunction match: every token of the term occurs somewhere in the text.
pub fn matches(term: &Term, text: &str) -> bool {
    let toks: HashSet<String> = tokenize(text).into_iter().collect();
    term.tokens.iter().all(|t| toks.contains(t))
}

/// Removes one leading `rt @handle:` / `rt @handle` prefix.
pub fn strip_repost(text: &str) -> &str {
    let s = text.trim_start();
    let rest = match s.get(..2) {
        Some(p) if p.eq_ignore_ascii_case("rt") => &s[2..],
        _ => return text,
    };
    let after_ws = rest.trim_start();
    if after_ws.len() == rest.len() || !after_ws.starts_with('@') {
        return text;
    }
    let handle_and_rest = &after_ws[1..];
    let end = handle_and_rest
        .find(|c: char| c.is_whitespace() || c == ':')
        .unwrap_or(handle_and_rest.len());
    if end == 0 {
        return text;
    }
    let mut tail = &handle_and_rest[end..];
    if let Some(t) = tail.strip_prefix(':') {
        tail = t;
    }
    tail.trim()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Comments count only through a matching parent post.
    pub parent_only: bool,
}

/// Records with their token sets precomputed.
pub struct Corpus {
    records: Vec<MessageRecord>,
    tokens: Vec<HashSet<String>>,
}

impl Corpus {
    pub fn new(records: Vec<MessageRecord>) -> Self {
        let tokens = records.iter().map(|r| tokenize(&r.text).into_iter().collect()).collect();
        Corpus { records, tokens }
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn platforms(&self) -> Vec<Platform> {
        let mut p: Vec<Platform> = self.records.iter().map(|r| r.platform).collect();
        p.sort();
        p.dedup();
        p
    }

    fn matched(&self, i: usize, term_tokens: &[String]) -> bool {
        term_tokens.iter().all(|t| self.tokens[i].contains(t))
    }

    /// Indices of records on `platform` whose own text matches.
    pub fn matching(&self, term: &Term, platform: Platform) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].platform == platform && self.matched(i, &term.tokens))
            .collect()
    }

    /// Daily series for one term and variant over `[from, to]`.
    pub fn term_series(
        &self,
        term: &Term,
        platform: Platform,
        variant: SeriesVariant,
        from: DateDay,
        to: DateDay,
        opts: &SeriesOptions,
    ) -> Result<DailySeries> {
        if !variant.valid_for(platform) {
            return Err(Error::Validation(format!("variant {variant} is not defined for {platform}")));
        }
        if from > to {
            return Err(Error::Validation(format!("empty range {from}..{to}")));
        }
        let own: Vec<bool> = (0..self.records.len())
            .map(|i| self.records[i].platform == platform && self.matched(i, &term.tokens))
            .collect();
        let matched_posts: HashSet<&str> = self
            .records
            .iter()
            .zip(&own)
            .filter(|(r, m)| **m && r.kind == MessageKind::Post)
            .map(|(r, _)| r.id.as_str())
            .collect();
        let comment_counts = |r: &MessageRecord, m: bool| {
            let via_parent = r
                .parent_id
                .as_deref()
                .is_some_and(|p| matched_posts.contains(p));
            via_parent || (m && !opts.parent_only)
        };

        // day index -> distinct keys or plain counts
        let n_days = from.days_until(to) as usize + 1;
        let mut counts = vec![0.0; n_days];
        let mut distinct: BTreeMap<usize, HashSet<&str>> = BTreeMap::new();
        for (r, &m) in self.records.iter().zip(&own) {
            if r.platform != platform {
                continue;
            }
            let day = r.day();
            if day < from || day > to {
                continue;
            }
            let idx = from.days_until(day) as usize;
            let included = match (platform, r.kind) {
                (Platform::RedditLike, MessageKind::Comment) => comment_counts(r, m),
                _ => m,
            };
            if !included {
                continue;
            }
            match variant {
                SeriesVariant::Messages => counts[idx] += 1.0,
                SeriesVariant::Posts if r.kind == MessageKind::Post => counts[idx] += 1.0,
                SeriesVariant::Comments if r.kind == MessageKind::Comment => counts[idx] += 1.0,
                SeriesVariant::MessagesDedup => {
                    distinct.entry(idx).or_default().insert(strip_repost(&r.text));
                }
                SeriesVariant::Users => {
                    distinct.entry(idx).or_default().insert(r.user.as_str());
                }
                _ => {}
            }
        }
        for (idx, set) in distinct {
            counts[idx] = set.len() as f64;
        }
        DailySeries::from_counts(from, counts)
    }
}

/// One-shot form of [`Corpus::term_series`].
pub fn build_term_series(
    records: &[MessageRecord],
    term: &Term,
    platform: Platform,
    variant: SeriesVariant,
    from: DateDay,
    to: DateDay,
    opts: &SeriesOptions,
) -> Result<DailySeries> {
    Corpus::new(records.to_vec()).term_series(term, platform, variant, from, to, opts)
}

/// Per-day record counts per platform, used as a quick corpus summary.
pub fn daily_volume(records: &[MessageRecord]) -> HashMap<Platform, BTreeMap<DateDay, usize>> {
    let mut out: HashMap<Platform, BTreeMap<DateDay, usize>> = HashMap::new();
    for r in records {
        *out.entry(r.platform).or_default().entry(r.day()).or_default() += 1;
    }
    out
}
