//! Query-term lexicon: normalization, n-gram expansion and merging.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::taxonomy::{Category, Dimension, TermLabels};

static STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_EN.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    Bootstrap,
    External,
    Expanded,
}

impl TermSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TermSource::Bootstrap => "bootstrap",
            TermSource::External => "external",
            TermSource::Expanded => "expanded",
        }
    }

    /// Higher wins when two lists contain the same canonical term.
    fn precedence(self) -> u8 {
        match self {
            TermSource::Bootstrap => 3,
            TermSource::External => 2,
            TermSource::Expanded => 1,
        }
    }
}

impl fmt::Display for TermSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(TermSource::Bootstrap),
            "external" => Ok(TermSource::External),
            "expanded" => Ok(TermSource::Expanded),
            other => Err(Error::Validation(format!("unknown term source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermStatus {
    Candidate,
    Accepted,
    Rejected,
}

impl TermStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TermStatus::Candidate => "candidate",
            TermStatus::Accepted => "accepted",
            TermStatus::Rejected => "rejected",
        }
    }
}

impl fmt::Display for TermStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidate" => Ok(TermStatus::Candidate),
            "accepted" => Ok(TermStatus::Accepted),
            "rejected" => Ok(TermStatus::Rejected),
            other => Err(Error::Validation(format!("unknown term status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub text: String,
    pub tokens: Vec<String>,
    pub source: TermSource,
    pub status: TermStatus,
    #[serde(default)]
    pub labels: TermLabels,
}

impl Term {
    /// Accepted bootstrap term from raw text.
    pub fn parse(raw: &str) -> Result<Term> {
        Term::new(raw, TermSource::Bootstrap, TermStatus::Accepted, false)
    }

    pub fn new(raw: &str, source: TermSource, status: TermStatus, fold_plurals: bool) -> Result<Term> {
        let tokens = canonical_tokens(raw, fold_plurals);
        if tokens.is_empty() {
            return Err(Error::Validation(format!("term `{raw}` has no tokens after normalization")));
        }
        Ok(Term {
            text: tokens.join(" "),
            tokens,
            source,
            status,
            labels: TermLabels::default(),
        })
    }
}

fn canonical_tokens(raw: &str, fold_plurals: bool) -> Vec<String> {
    let mut tokens: Vec<String> = tokenize(raw).into_iter().filter(|t| t != "a").collect();
    if fold_plurals {
        if let Some(last) = tokens.last_mut() {
            *last = fold_plural(last);
        }
    }
    tokens
}

/// Drops a plural `s` from words longer than three characters not ending in `ss`.
pub fn fold_plural(tok: &str) -> String {
    if tok.chars().count() > 3 && tok.ends_with('s') && !tok.ends_with("ss") {
        tok[..tok.len() - 1].to_string()
    } else {
        tok.to_string()
    }
}

/// Lowercase, tokenize, drop the article `a`, single-space join.
pub fn normalize(raw: &str) -> String {
    canonical_tokens(raw, false).join(" ")
}

pub fn normalize_with(raw: &str, fold_plurals: bool) -> String {
    canonical_tokens(raw, fold_plurals).join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    /// Minimum frequency for n-grams of length `i + 1`.
    pub thresholds: Vec<u64>,
    pub max_ngram: usize,
    pub stopwords: String,
    pub fold_plurals: bool,
}

impl ExpansionConfig {
    pub fn twitter() -> Self {
        ExpansionConfig {
            thresholds: vec![300, 150, 75],
            max_ngram: 3,
            stopwords: "en".into(),
            fold_plurals: false,
        }
    }

    pub fn reddit() -> Self {
        ExpansionConfig {
            thresholds: vec![300, 120, 50],
            ..ExpansionConfig::twitter()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_ngram == 0 || self.thresholds.len() != self.max_ngram {
            return Err(Error::Validation(format!(
                "need one threshold per n-gram length 1..{}, got {}",
                self.max_ngram,
                self.thresholds.len()
            )));
        }
        if self.thresholds.contains(&0) {
            return Err(Error::Validation("expansion thresholds must be >= 1".into()));
        }
        if self.stopwords != "en" {
            return Err(Error::Validation(format!("unknown stopword list `{}`", self.stopwords)));
        }
        Ok(())
    }
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig::twitter()
    }
}

/// Occurrence counts of every 1..=max_n token n-gram, skipping n-grams made
/// only of stopwords.
pub fn count_ngrams<S: AsRef<str> + Sync>(messages: &[S], max_n: usize) -> HashMap<String, u64> {
    let stop = stopwords();
    messages
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<String, u64>, m| {
            let toks = tokenize(m.as_ref());
            for n in 1..=max_n {
                for w in toks.windows(n) {
                    if w.iter().all(|t| stop.contains(t.as_str())) {
                        continue;
                    }
                    *acc.entry(w.join(" ")).or_default() += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

/// Frequent n-grams not already in `existing`, by descending frequency then
/// text.
pub fn expand_candidates<S: AsRef<str> + Sync>(
    messages: &[S],
    cfg: &ExpansionConfig,
    existing: &Lexicon,
) -> Result<Vec<(String, u64)>> {
    cfg.validate()?;
    let counts = count_ngrams(messages, cfg.max_ngram);
    let mut out: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(g, c)| {
            let n = g.split(' ').count();
            *c >= cfg.thresholds[n - 1]
                && !existing.contains(&normalize_with(g, cfg.fold_plurals))
        })
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Terms keyed by canonical text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Lexicon {
    terms: BTreeMap<String, Term>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.terms.contains_key(canonical)
    }

    pub fn get(&self, canonical: &str) -> Option<&Term> {
        self.terms.get(canonical)
    }

    pub fn get_mut(&mut self, canonical: &str) -> Option<&mut Term> {
        self.terms.get_mut(canonical)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.values()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Term> {
        self.terms.values().filter(|t| t.status == TermStatus::Accepted)
    }

    /// Inserts, keeping the existing entry unless the new source has higher
    /// precedence.
    pub fn insert(&mut self, term: Term) {
        match self.terms.get(&term.text) {
            Some(old) if old.source.precedence() >= term.source.precedence() => {}
            _ => {
                self.terms.insert(term.text.clone(), term);
            }
        }
    }
}

impl FromIterator<Term> for Lexicon {
    fn from_iter<I: IntoIterator<Item = Term>>(iter: I) -> Self {
        let mut lex = Lexicon::new();
        for t in iter {
            lex.insert(t);
        }
        lex
    }
}

/// Union of term lists, deduplicated by canonical form.
pub fn merge(lists: &[Vec<Term>]) -> Lexicon {
    lists.iter().flatten().cloned().collect()
}

pub const LEXICON_HEADER: [&str; 7] = ["term", "source", "status", "stance", "target", "severity", "frame"];

/// Reads the lexicon CSV; term text is normalized on the way in and
/// taxonomy columns may be empty.
pub fn parse_lexicon_csv(text: &str, source: &str, fold_plurals: bool) -> Result<Lexicon> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    let n_cols = headers.len();
    if !(3..=7).contains(&n_cols) || headers.iter().ne(LEXICON_HEADER[..n_cols].iter().copied()) {
        return Err(Error::format(
            source,
            format!("header must be a prefix of `{}` with at least term,source,status", LEXICON_HEADER.join(",")),
        ));
    }
    let mut lex = Lexicon::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(source, format!("row {line}: {e}")))?;
        if rec.len() != n_cols {
            return Err(Error::format(source, format!("row {line}: expected {n_cols} fields")));
        }
        let bad = |e: Error| Error::format(source, format!("row {line}: {e}"));
        let src: TermSource = rec[1].parse().map_err(bad)?;
        let status: TermStatus = rec[2].parse().map_err(bad)?;
        let mut term = Term::new(&rec[0], src, status, fold_plurals).map_err(bad)?;
        for (k, dim) in Dimension::ALL.iter().enumerate() {
            match rec.get(3 + k) {
                Some(v) if !v.is_empty() => term.labels.set(*dim, v).map_err(bad)?,
                _ => {}
            }
        }
        lex.insert(term);
    }
    Ok(lex)
}

pub fn load_lexicon(path: &Path, fold_plurals: bool) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon_csv(&text, &path.display().to_string(), fold_plurals)
}

pub fn write_lexicon_csv<W: Write>(lex: &Lexicon, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("writing lexicon: {e}"));
    w.write_record(LEXICON_HEADER).map_err(err)?;
    for t in lex.terms() {
        let mut row = vec![t.text.clone(), t.source.to_string(), t.status.to_string()];
        for dim in Dimension::ALL {
            row.push(t.labels.get(*dim).unwrap_or("").to_string());
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Validation(format!("writing lexicon: {e}")))?;
    Ok(())
}

pub fn write_candidates_csv<W: Write>(cands: &[(String, u64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "term,frequency")?;
    let mut w = csv::Writer::from_writer(&mut out);
    for (t, f) in cands {
        w.write_record([t.as_str(), &f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads reviewed candidates back as expanded terms. An optional third
/// `status` column carries the reviewer's decision; without it candidates
/// stay `candidate`.
pub fn parse_candidates_csv(text: &str, source: &str, fold_plurals: bool) -> Result<Vec<Term>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    let with_status = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["term", "frequency"] => false,
        ["term", "frequency", "status"] => true,
        _ => return Err(Error::format(source, "header must be `term,frequency[,status]`")),
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(source, format!("row {line}: {e}")))?;
        let bad = |e: Error| Error::format(source, format!("row {line}: {e}"));
        rec[1]
            .parse::<u64>()
            .map_err(|_| Error::format(source, format!("row {line}: bad frequency `{}`", &rec[1])))?;
        let status = if with_status {
            rec[2].parse().map_err(bad)?
        } else {
            TermStatus::Candidate
        };
        out.push(Term::new(&rec[0], TermSource::Expanded, status, fold_plurals).map_err(bad)?);
    }
    Ok(out)
}

/// Reads a plain term list (one term per line, `#` comment lines allowed
/// only when followed by a space).
pub fn parse_term_list(text: &str, source: TermSource) -> Result<Vec<Term>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("# "))
        .map(|l| Term::new(l, source, TermStatus::Accepted, false))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(raw: &str, source: TermSource) -> Term {
        Term::new(raw, source, TermStatus::Accepted, false).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Ban A Mosque"), "ban mosque");
        assert_eq!(normalize("ban islam"), "ban islam");
        assert_eq!(normalize("\\#NoSharia"), "#nosharia");
        assert_eq!(normalize("  ban   islam  "), "ban islam");
    }

    #[test]
    fn bundled_stopwords() {
        let s = stopwords();
        assert_eq!(s.len(), 179);
        assert!(s.contains("now") && s.contains("the") && !s.contains("islam"));
    }

    #[test]
    fn expansion_example() {
        let msgs = vec!["ban islam now"; 400];
        let c = expand_candidates(&msgs, &ExpansionConfig::twitter(), &Lexicon::new()).unwrap();
        let m: BTreeMap<_, _> = c.iter().cloned().collect();
        assert_eq!(m.get("ban islam"), Some(&400));
        assert_eq!(m.get("islam now"), Some(&400));
        assert_eq!(m.get("ban islam now"), Some(&400));
        assert_eq!(m.get("ban"), Some(&400));
        assert_eq!(m.get("islam"), Some(&400));
        assert_eq!(m.get("now"), None);
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn expansion_excludes_lexicon_and_thresholds() {
        let msgs = vec!["ban islam now"; 400];
        let lex: Lexicon = [t("ban islam", TermSource::Bootstrap)].into_iter().collect();
        let c = expand_candidates(&msgs, &ExpansionConfig::twitter(), &lex).unwrap();
        assert!(c.iter().all(|(g, _)| g != "ban islam"));
        let unreachable = ExpansionConfig { thresholds: vec![u64::MAX; 3], ..ExpansionConfig::twitter() };
        assert!(expand_candidates(&msgs, &unreachable, &Lexicon::new()).unwrap().is_empty());
        let empty: Vec<&str> = Vec::new();
        assert!(expand_candidates(&empty, &ExpansionConfig::twitter(), &Lexicon::new()).unwrap().is_empty());
        let bad = ExpansionConfig { thresholds: vec![1, 1], ..ExpansionConfig::twitter() };
        assert!(expand_candidates(&msgs, &bad, &Lexicon::new()).is_err());
    }

    #[test]
    fn merge_examples() {
        let a = vec![t("Ban A Mosque", TermSource::Expanded)];
        let b = vec![t("ban mosque", TermSource::Bootstrap)];
        let m = merge(&[a.clone(), b.clone()]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.get("ban mosque").unwrap().source, TermSource::Bootstrap);
        assert_eq!(merge(&[b.clone(), a.clone()]), m);
        assert_eq!(merge(&[a.clone(), a.clone()]), merge(&[a.clone()]));
        assert_eq!(merge(&[vec![], a.clone()]), merge(&[a]));
    }

    #[test]
    fn plural_folding() {
        assert_eq!(normalize_with("ban mosques", true), "ban mosque");
        assert_eq!(normalize_with("ban mosques", false), "ban mosques");
        assert_eq!(normalize_with("kiss", true), "kiss");
        assert_eq!(normalize_with("us", true), "us");
    }

    #[test]
    fn lexicon_csv_round_trip() {
        let text = "term,source,status,stance,target,severity,frame\n\
                    Ban A Mosque,bootstrap,accepted,unfavorable,muslims_islam,promotes_violence,\n\
                    refugees welcome,external,candidate,,,,\n";
        let lex = parse_lexicon_csv(text, "t", false).unwrap();
        assert_eq!(lex.len(), 2);
        let ban = lex.get("ban mosque").unwrap();
        assert_eq!(ban.labels.stance, Some(crate::taxonomy::Stance::Unfavorable));
        assert_eq!(ban.labels.frame, None);
        let mut buf = Vec::new();
        write_lexicon_csv(&lex, &mut buf).unwrap();
        assert_eq!(parse_lexicon_csv(std::str::from_utf8(&buf).unwrap(), "t", false).unwrap(), lex);
        assert!(parse_lexicon_csv("term,source,status\nx,bootstrap,maybe\n", "t", false).is_err());
        assert!(parse_lexicon_csv("term,source,status\nx,bootstrap,accepted,extra\n", "t", false).is_err());
        assert!(parse_lexicon_csv("term,status\n", "t", false).is_err());
        assert!(parse_lexicon_csv("term,source,status\na,bootstrap,accepted\n", "t", false).is_err());
    }

    #[test]
    fn candidates_round_trip() {
        let c = vec![("ban islam".to_string(), 400), ("x, y".to_string(), 3)];
        let mut buf = Vec::new();
        write_candidates_csv(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("term,frequency\nban islam,400\n"));
        let back = parse_candidates_csv(&text, "t", false).unwrap();
        assert_eq!(back[1].text, "x y");
        assert_eq!(back[0].status, TermStatus::Candidate);
    }

    fn brute_counts(msgs: &[String], max_n: usize) -> HashMap<String, u64> {
        let stop = stopwords();
        let mut m = HashMap::new();
        for msg in msgs {
            let toks = tokenize(msg);
            for i in 0..toks.len() {
                for n in 1..=max_n.min(toks.len() - i) {
                    let g = &toks[i..i + n];
                    if g.iter().any(|t| !stop.contains(t.as_str())) {
                        *m.entry(g.join(" ")).or_insert(0) += 1;
                    }
                }
            }
        }
        m
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in ".{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn ngram_counts_match_brute_force(msgs in prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["ban", "islam", "the", "now", "#x", "a"]), 0..7)
                .prop_map(|w| w.join(" ")), 0..30)) {
            prop_assert_eq!(count_ngrams(&msgs, 3), brute_counts(&msgs, 3));
        }

        #[test]
        fn merge_no_duplicates_and_commutes(
            a in prop::collection::vec("[b-d]{1,2}( [b-d]{1,2})?", 0..8),
            b in prop::collection::vec("[b-d]{1,2}( [b-d]{1,2})?", 0..8),
        ) {
            let la: Vec<Term> = a.iter().map(|s| t(s, TermSource::External)).collect();
            let lb: Vec<Term> = b.iter().map(|s| t(s, TermSource::Bootstrap)).collect();
            let ab = merge(&[la.clone(), lb.clone()]);
            let ba = merge(&[lb.clone(), la.clone()]);
            prop_assert_eq!(&ab, &ba);
            let texts: HashSet<&str> = ab.terms().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(texts.len(), ab.len());
            prop_assert_eq!(merge(&[merge(&[la.clone()]).terms().cloned().collect(), lb.clone()]), ab);
        }
    }
}
