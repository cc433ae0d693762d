//! Stance / target / severity / framing labels and vote resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_VOTES: usize = 3;
pub const MAX_VOTES: usize = 5;
/// Largest causes/solutions count gap still treated as "similarly prevalent".
pub const DEFAULT_BOTH_GAP: usize = 1;

/// A closed label set serialized as lowercase identifiers.
pub trait Category: Copy + Ord + Sized + 'static {
    const ALL: &'static [Self];
    fn as_str(self) -> &'static str;

    fn parse_label(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.as_str() == s)
    }
}

macro_rules! category {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl Category for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::parse_label(s).ok_or_else(|| {
                    Error::Validation(format!("`{s}` is not a valid {} label", stringify!($name).to_lowercase()))
                })
            }
        }
    };
}

category!(Stance {
    Favorable => "favorable",
    Unfavorable => "unfavorable",
    Commentary => "commentary",
    Neutral => "neutral",
});

category!(Target {
    MuslimsIslam => "muslims_islam",
    ReligiousOther => "religious_other",
    ArabsMena => "arabs_mena",
    EthnicOther => "ethnic_other",
    Immigrants => "immigrants",
    NonImmigrants => "non_immigrants",
});

category!(Severity {
    PromotesViolence => "promotes_violence",
    Intimidates => "intimidates",
    OffendsDiscriminates => "offends_discriminates",
    NotApplicable => "not_applicable",
});

category!(Frame {
    Causes => "causes",
    Solutions => "solutions",
    Both => "both",
    None => "none",
});

category!(Dimension {
    Stance => "stance",
    Target => "target",
    Severity => "severity",
    Frame => "frame",
});

impl Dimension {
    pub fn labels(self) -> Vec<&'static str> {
        match self {
            Dimension::Stance => Stance::ALL.iter().map(|v| v.as_str()).collect(),
            Dimension::Target => Target::ALL.iter().map(|v| v.as_str()).collect(),
            Dimension::Severity => Severity::ALL.iter().map(|v| v.as_str()).collect(),
            Dimension::Frame => Frame::ALL.iter().map(|v| v.as_str()).collect(),
        }
    }

    /// Label meaning "no category applies", omitted from distributions.
    pub fn catch_all(self) -> Option<&'static str> {
        match self {
            Dimension::Severity => Some("not_applicable"),
            Dimension::Frame => Some("none"),
            _ => None,
        }
    }

    pub fn validate_label(self, label: &str) -> Result<()> {
        if self.labels().contains(&label) {
            Ok(())
        } else {
            Err(Error::Validation(format!("`{label}` is not a valid {self} label")))
        }
    }
}

/// Resolved labels of one term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TermLabels {
    pub stance: Option<Stance>,
    pub target: Option<Target>,
    pub severity: Option<Severity>,
    pub frame: Option<Frame>,
}

impl TermLabels {
    pub fn get(&self, dim: Dimension) -> Option<&'static str> {
        match dim {
            Dimension::Stance => self.stance.map(Category::as_str),
            Dimension::Target => self.target.map(Category::as_str),
            Dimension::Severity => self.severity.map(Category::as_str),
            Dimension::Frame => self.frame.map(Category::as_str),
        }
    }

    pub fn set(&mut self, dim: Dimension, label: &str) -> Result<()> {
        match dim {
            Dimension::Stance => self.stance = Some(label.parse()?),
            Dimension::Target => self.target = Some(label.parse()?),
            Dimension::Severity => self.severity = Some(label.parse()?),
            Dimension::Frame => self.frame = Some(label.parse()?),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub subject_id: String,
    pub dimension: Dimension,
    pub label: String,
    pub annotator: String,
}

impl Annotation {
    pub fn new(subject: &str, dimension: Dimension, label: &str, annotator: &str) -> Result<Self> {
        dimension.validate_label(label)?;
        Ok(Annotation {
            subject_id: subject.into(),
            dimension,
            label: label.into(),
            annotator: annotator.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Label(String),
    NeedsMore,
    Unresolved,
}

/// Strict-majority vote over the annotations of one subject and dimension.
pub fn resolve_label(annotations: &[Annotation], min_votes: usize, max_votes: usize) -> Result<Resolution> {
    if min_votes == 0 || max_votes < min_votes {
        return Err(Error::Validation(format!("bad vote bounds {min_votes}..{max_votes}")));
    }
    if let Some(first) = annotations.first() {
        if annotations
            .iter()
            .any(|a| a.subject_id != first.subject_id || a.dimension != first.dimension)
        {
            return Err(Error::Validation(
                "annotations must share one subject and dimension".into(),
            ));
        }
    }
    let n = annotations.len();
    if n < min_votes {
        return Ok(Resolution::NeedsMore);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        *counts.entry(a.label.as_str()).or_default() += 1;
    }
    if let Some((label, _)) = counts.iter().find(|(_, c)| 2 * **c > n) {
        return Ok(Resolution::Label(label.to_string()));
    }
    Ok(if n < max_votes {
        Resolution::NeedsMore
    } else {
        Resolution::Unresolved
    })
}

/// Term-level frame from the frames of its matching messages.
///
/// Returns `Both` when causes and solutions are both present, differ by at
/// most `both_gap` and neither is outnumbered by another frame; otherwise the most
/// frequent frame, ties going to the earlier of causes, solutions, both, none.
pub fn term_frame(message_frames: &[Frame], both_gap: usize) -> Result<Frame> {
    if message_frames.is_empty() {
        return Err(Error::Validation("term_frame needs at least one message frame".into()));
    }
    let count = |f: Frame| message_frames.iter().filter(|x| **x == f).count();
    let (c, s) = (count(Frame::Causes), count(Frame::Solutions));
    let others = count(Frame::Both).max(count(Frame::None));
    if c.abs_diff(s) <= both_gap && c.min(s) > 0 && c.min(s) >= others {
        return Ok(Frame::Both);
    }
    let mut best = Frame::Causes;
    for f in Frame::ALL.iter().copied() {
        if count(f) > count(best) {
            best = f;
        }
    }
    Ok(best)
}

/// Percentage of labelled terms per label, per dimension. Catch-all labels
/// count in the denominator but are not listed.
pub type Distribution = BTreeMap<Dimension, Vec<(&'static str, f64)>>;

pub fn distribution(terms: &[TermLabels]) -> Distribution {
    let mut out = Distribution::new();
    for dim in Dimension::ALL.iter().copied() {
        let labelled: Vec<&'static str> = terms.iter().filter_map(|t| t.get(dim)).collect();
        let total = labelled.len();
        let rows = dim
            .labels()
            .into_iter()
            .filter(|l| Some(*l) != dim.catch_all())
            .map(|l| {
                let k = labelled.iter().filter(|x| **x == l).count();
                let pct = if total == 0 { 0.0 } else { 100.0 * k as f64 / total as f64 };
                (l, pct)
            })
            .collect();
        out.insert(dim, rows);
    }
    out
}

pub fn write_distribution_csv<W: Write>(dist: &Distribution, mut out: W) -> std::io::Result<()> {
    writeln!(out, "dimension,label,percent")?;
    for (dim, rows) in dist {
        for (label, pct) in rows {
            writeln!(out, "{dim},{label},{pct:.1}")?;
        }
    }
    Ok(())
}

const ANNOTATION_HEADER: [&str; 4] = ["subject_id", "dimension", "label", "annotator"];

pub fn parse_annotations_csv(text: &str, source: &str) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    if headers.iter().ne(ANNOTATION_HEADER.iter().copied()) {
        return Err(Error::format(
            source,
            format!("header must be `{}`", ANNOTATION_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(source, format!("row {line}: {e}")))?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let bad = |e: Error| Error::format(source, format!("row {line}: {e}"));
        if get(0).is_empty() {
            return Err(Error::format(source, format!("row {line}: empty subject_id")));
        }
        let dim: Dimension = get(1).parse().map_err(bad)?;
        out.push(Annotation::new(get(0), dim, get(2), get(3)).map_err(bad)?);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations_csv(&text, &path.display().to_string())
}

/// Resolves every (subject, dimension) group.
pub fn resolve_all(
    annotations: &[Annotation],
    min_votes: usize,
    max_votes: usize,
) -> Result<BTreeMap<(String, Dimension), Resolution>> {
    let mut groups: BTreeMap<(String, Dimension), Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        groups
            .entry((a.subject_id.clone(), a.dimension))
            .or_default()
            .push(a.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| resolve_label(&v, min_votes, max_votes).map(|r| (k, r)))
        .collect()
}

/// Subjects that still need votes, for the next annotation round.
pub fn pending_subjects(resolved: &BTreeMap<(String, Dimension), Resolution>) -> BTreeSet<(String, Dimension)> {
    resolved
        .iter()
        .filter(|(_, r)| **r == Resolution::NeedsMore)
        .map(|(k, _)| k.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn votes(labels: &[&str]) -> Vec<Annotation> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| Annotation::new("t", Dimension::Stance, l, &format!("w{i}")).unwrap())
            .collect()
    }

    fn resolve(labels: &[&str]) -> Resolution {
        resolve_label(&votes(labels), MIN_VOTES, MAX_VOTES).unwrap()
    }

    #[test]
    fn resolve_examples() {
        let (a, b, c) = ("favorable", "unfavorable", "neutral");
        assert_eq!(resolve(&[a, a, b]), Resolution::Label(a.into()));
        assert_eq!(resolve(&[a, b, c]), Resolution::NeedsMore);
        assert_eq!(resolve(&[a, a, b, b, c]), Resolution::Unresolved);
        assert_eq!(resolve(&[a, a]), Resolution::NeedsMore);
        assert_eq!(resolve(&[a, a, b, b]), Resolution::NeedsMore);
        assert_eq!(resolve(&[a, a, a, b, b]), Resolution::Label(a.into()));
    }

    #[test]
    fn mixed_subjects_rejected() {
        let mut v = votes(&["neutral", "neutral", "neutral"]);
        v[1].subject_id = "other".into();
        assert!(resolve_label(&v, 3, 5).is_err());
    }

    #[test]
    fn labels_validated() {
        assert!(Annotation::new("t", Dimension::Severity, "favorable", "w").is_err());
        assert_eq!("muslims_islam".parse::<Target>().unwrap(), Target::MuslimsIslam);
        assert_eq!(serde_json::to_string(&Severity::PromotesViolence).unwrap(), "\"promotes_violence\"");
    }

    #[test]
    fn frame_examples() {
        use Frame::*;
        assert_eq!(term_frame(&[Solutions, Solutions, Solutions], 1).unwrap(), Solutions);
        assert_eq!(term_frame(&[None, None, Causes], 1).unwrap(), None);
        assert_eq!(term_frame(&[Causes, Causes, Solutions], 1).unwrap(), Both);
        assert_eq!(term_frame(&[Causes, Solutions], 1).unwrap(), Both);
        // solutions does not strictly exceed none here
        assert_eq!(term_frame(&[Causes, Causes, Solutions, None], 1).unwrap(), Both);
        assert_eq!(term_frame(&[Causes, Causes, Solutions, None, None], 1).unwrap(), Causes);
        assert_eq!(term_frame(&[Causes, Solutions, Both, Both], 1).unwrap(), Both);
        assert_eq!(term_frame(&[Causes, Causes, Solutions, Both, Both], 1).unwrap(), Causes);
        assert_eq!(term_frame(&[Causes, Causes, Causes, Solutions], 1).unwrap(), Causes);
        assert!(term_frame(&[], 1).is_err());
    }

    #[test]
    fn distribution_fixture() {
        let stances = [
            Stance::Unfavorable, Stance::Unfavorable, Stance::Unfavorable, Stance::Unfavorable,
            Stance::Favorable, Stance::Favorable, Stance::Commentary, Stance::Neutral,
            Stance::Neutral, Stance::Neutral,
        ];
        let terms: Vec<TermLabels> = stances
            .iter()
            .map(|s| TermLabels { stance: Some(*s), ..Default::default() })
            .collect();
        let d = distribution(&terms);
        let st: BTreeMap<_, _> = d[&Dimension::Stance].iter().cloned().collect();
        assert_eq!(st["unfavorable"], 40.0);
        assert_eq!(st["neutral"], 30.0);
        assert!(d[&Dimension::Target].iter().all(|(_, p)| *p == 0.0));
    }

    #[test]
    fn catch_all_omitted_but_counted() {
        let terms = vec![
            TermLabels { severity: Some(Severity::Intimidates), ..Default::default() },
            TermLabels { severity: Some(Severity::NotApplicable), ..Default::default() },
        ];
        let d = distribution(&terms);
        let sev = &d[&Dimension::Severity];
        assert_eq!(sev.len(), 3);
        assert_eq!(sev.iter().map(|(_, p)| p).sum::<f64>(), 50.0);
    }

    #[test]
    fn annotations_csv() {
        let text = "subject_id,dimension,label,annotator\nban islam,stance,unfavorable,w1\n";
        let a = parse_annotations_csv(text, "t").unwrap();
        assert_eq!(a[0].dimension, Dimension::Stance);
        assert!(parse_annotations_csv("subject_id,dimension,label,annotator\nx,stance,bad,w\n", "t").is_err());
        assert!(parse_annotations_csv("subject,dim\n", "t").is_err());
    }

    fn arb_frames() -> impl Strategy<Value = Vec<Frame>> {
        prop::collection::vec(prop::sample::select(Frame::ALL.to_vec()), 1..12)
    }

    proptest! {
        #[test]
        fn resolve_is_order_invariant(idx in prop::collection::vec(0usize..4, 0..7), k in 0usize..7) {
            let labels: Vec<&str> = idx.iter().map(|i| Stance::ALL[*i].as_str()).collect();
            let mut shuffled = labels.clone();
            if !shuffled.is_empty() { let n = shuffled.len(); shuffled.rotate_left(k % n); shuffled.reverse(); }
            prop_assert_eq!(resolve(&labels), resolve(&shuffled));
        }

        #[test]
        fn winning_vote_keeps_winner(frames in arb_frames()) {
            let w = term_frame(&frames, 1).unwrap();
            let mut more = frames.clone();
            more.push(w);
            if w != Frame::Both {
                prop_assert_eq!(term_frame(&more, 1).unwrap(), w);
            }
        }

        #[test]
        fn both_only_when_jointly_dominant(frames in prop::collection::vec(
            prop::sample::select(vec![Frame::Causes, Frame::Solutions, Frame::None]), 1..12)) {
            if term_frame(&frames, 1).unwrap() == Frame::Both {
                let c = frames.iter().filter(|f| **f == Frame::Causes).count();
                let s = frames.iter().filter(|f| **f == Frame::Solutions).count();
                let o = frames.len() - c - s;
                prop_assert!(c > 0 && s > 0 && c.abs_diff(s) <= 1);
                prop_assert!(c + s > o);
            }
        }

        #[test]
        fn distribution_bounds(picks in prop::collection::vec((0usize..5, 0usize..5), 1..30)) {
            let terms: Vec<TermLabels> = picks.iter().map(|(s, v)| TermLabels {
                stance: Stance::ALL.get(*s).copied(),
                severity: Severity::ALL.get(*v).copied(),
                ..Default::default()
            }).collect();
            let d = distribution(&terms);
            for (dim, rows) in &d {
                let sum: f64 = rows.iter().map(|(_, p)| p).sum();
                for (_, p) in rows { prop_assert!((0.0..=100.0).contains(p)); }
                prop_assert!(sum <= 100.0 + 1e-9);
                let all_applicable = terms.iter().all(|t| t.get(*dim).is_some_and(|l| Some(l) != dim.catch_all()));
                if all_applicable && terms.iter().any(|t| t.get(*dim).is_some()) {
                    prop_assert!((sum - 100.0).abs() < 1e-9);
                }
            }
        }
    }
}
