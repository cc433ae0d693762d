//! Effect estimation, decision rule, ranking, aggregation and plot
//! compression.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ControlDesign, ControlSeries};
use crate::error::{Error, Result};
use crate::series::{DailySeries, DateDay};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactConfig {
    pub shift_c: f64,
    pub width_cap: f64,
    pub n_draws: usize,
    pub min_peak: f64,
    pub n_boot: usize,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        ImpactConfig {
            shift_c: 1000.0,
            width_cap: 5.0,
            n_draws: 1000,
            min_peak: 30.0,
            n_boot: 10_000,
        }
    }
}

impl ImpactConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.shift_c.is_finite() {
            return Err(Error::Validation("impact.shift_c must be finite".into()));
        }
        if !(self.width_cap > 0.0 && self.width_cap.is_finite()) {
            return Err(Error::Validation("impact.width_cap must be positive".into()));
        }
        if self.n_draws < crate::ssm::MIN_DRAWS {
            return Err(Error::Validation(format!(
                "impact.n_draws must be at least {}",
                crate::ssm::MIN_DRAWS
            )));
        }
        if !(self.min_peak >= 0.0) {
            return Err(Error::Validation("impact.min_peak must be >= 0".into()));
        }
        if self.n_boot == 0 {
            return Err(Error::Validation("impact.n_boot must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Increase,
    Decrease,
    None,
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Increase => "increase",
            Decision::Decrease => "decrease",
            Decision::None => "none",
            Decision::Inconclusive => "inconclusive",
        }
    }

    pub fn is_directional(self) -> bool {
        matches!(self, Decision::Increase | Decision::Decrease)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increase" => Ok(Decision::Increase),
            "decrease" => Ok(Decision::Decrease),
            "none" => Ok(Decision::None),
            "inconclusive" => Ok(Decision::Inconclusive),
            other => Err(Error::Validation(format!("unknown decision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEstimate {
    pub event_id: String,
    pub term: String,
    pub variant: String,
    /// Cumulative post-window difference, original scale.
    pub abs_effect: f64,
    /// Relative effect in percent, on the shifted scale.
    pub rel_effect_pct: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    pub decision: Decision,
    pub n_draws: usize,
    pub seed: u64,
}

/// `100 * sum(t - c) / sum(c)`.
pub fn relative_effect(t: &[f64], c: &[f64]) -> Result<f64> {
    if t.len() != c.len() || t.is_empty() {
        return Err(Error::Validation(format!(
            "relative_effect needs equal non-empty lengths, got {} and {}",
            t.len(),
            c.len()
        )));
    }
    let denom: f64 = c.iter().sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Numeric(format!("relative effect undefined: control sum is {denom}")));
    }
    let diff: f64 = t.iter().zip(c).map(|(a, b)| a - b).sum();
    Ok(100.0 * diff / denom)
}

/// Inverse empirical CDF of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (n as f64 * p - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Applies the 90% interval rule with the width cap relative to the
/// cumulative control.
pub fn decide(ci90: (f64, f64), cum_control: f64, width_cap: f64) -> Decision {
    let (low, high) = ci90;
    if (high - low) / cum_control.abs().max(1.0) > width_cap {
        Decision::Inconclusive
    } else if low > 0.0 {
        Decision::Increase
    } else if high < 0.0 {
        Decision::Decrease
    } else {
        Decision::None
    }
}

/// Effect of the event on `treated` (original scale) given a control
/// synthesized from `design`.
pub fn estimate_impact(
    treated: &DailySeries,
    design: &ControlDesign,
    control: &ControlSeries,
    width_cap: f64,
) -> Result<(Vec<f64>, ImpactSummary)> {
    let (from, to) = design.post_window();
    if !treated.covers(from, to) {
        return Err(Error::DataAvailability(format!(
            "treated series {}..{} does not cover post window {from}..{to}",
            treated.start(),
            treated.end()
        )));
    }
    let h = design.post_days;
    if control.mean.len() != h || control.draws.ncols() != h || control.draws.nrows() == 0 {
        return Err(Error::Validation(format!(
            "control has {} days and {}x{} draws, post window has {h} days",
            control.mean.len(),
            control.draws.nrows(),
            control.draws.ncols()
        )));
    }
    let c = design.shift_c;
    let t: Vec<f64> = treated.slice(from, to)?.original_values().iter().map(|v| v + c).collect();

    let abs_effect: f64 = t.iter().zip(&control.mean).map(|(a, b)| a - b).sum();
    let rel_effect_pct = relative_effect(&t, &control.mean)?;
    let mut cum: Vec<f64> = control
        .draws
        .row_iter()
        .map(|row| t.iter().zip(row.iter()).map(|(a, b)| a - b).sum())
        .collect();
    if cum.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Numeric("non-finite control draw".into()));
    }
    cum.sort_by(f64::total_cmp);
    let ci90 = (quantile_sorted(&cum, 0.05), quantile_sorted(&cum, 0.95));
    let ci95 = (quantile_sorted(&cum, 0.025), quantile_sorted(&cum, 0.975));
    let cum_control: f64 = control.mean.iter().map(|m| m - c).sum();
    let decision = decide(ci90, cum_control, width_cap);
    let pointwise = t.iter().zip(&control.mean).map(|(a, b)| a - b).collect();
    Ok((
        pointwise,
        ImpactSummary {
            abs_effect,
            rel_effect_pct,
            ci90,
            ci95,
            decision,
            n_draws: control.draws.nrows(),
        },
    ))
}

/// Estimate fields that do not depend on the task identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactSummary {
    pub abs_effect: f64,
    pub rel_effect_pct: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    pub decision: Decision,
    pub n_draws: usize,
}

impl ImpactSummary {
    pub fn into_estimate(self, event_id: &str, term: &str, variant: &str, seed: u64) -> ImpactEstimate {
        ImpactEstimate {
            event_id: event_id.into(),
            term: term.into(),
            variant: variant.into(),
            abs_effect: self.abs_effect,
            rel_effect_pct: self.rel_effect_pct,
            ci90: self.ci90,
            ci95: self.ci95,
            decision: self.decision,
            n_draws: self.n_draws,
            seed,
        }
    }
}

/// True iff some variant reaches `min_peak` on some day of `[from, to]`.
pub fn prefilter(variants: &[&DailySeries], from: DateDay, to: DateDay, min_peak: f64) -> bool {
    variants.iter().any(|s| {
        s.dates()
            .zip(s.original_values())
            .any(|(d, v)| d >= from && d <= to && *v >= min_peak)
    })
}

/// Descending relative effect; ties by term, event and variant.
pub fn rank_terms(mut estimates: Vec<ImpactEstimate>) -> Vec<ImpactEstimate> {
    // adding 0.0 folds -0.0 into 0.0 so equal effects tie
    estimates.sort_by(|a, b| {
        (b.rel_effect_pct + 0.0)
            .total_cmp(&(a.rel_effect_pct + 0.0))
            .then_with(|| a.term.cmp(&b.term))
            .then_with(|| a.event_id.cmp(&b.event_id))
            .then_with(|| a.variant.cmp(&b.variant))
    });
    estimates
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEstimate {
    pub category: String,
    pub mean_rel_effect: f64,
    pub ci95: (f64, f64),
    pub n: usize,
}

/// Mean relative effect of the selected estimates with a bootstrap 95%
/// percentile interval.
pub fn aggregate<F>(
    estimates: &[ImpactEstimate],
    category: &str,
    selector: F,
    n_boot: usize,
    seed: u64,
) -> Result<AggregateEstimate>
where
    F: Fn(&ImpactEstimate) -> bool,
{
    let mut chosen: Vec<&ImpactEstimate> = estimates.iter().filter(|e| selector(e)).collect();
    if chosen.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "category `{category}` matches {} estimates, need at least 2",
            chosen.len()
        )));
    }
    if n_boot == 0 {
        return Err(Error::Validation("n_boot must be >= 1".into()));
    }
    // resampling indexes into a canonical order so input order cannot matter
    chosen.sort_by(|a, b| {
        (&a.event_id, &a.term, &a.variant)
            .cmp(&(&b.event_id, &b.term, &b.variant))
            .then_with(|| a.rel_effect_pct.total_cmp(&b.rel_effect_pct))
    });
    let vals: Vec<f64> = chosen.iter().map(|e| e.rel_effect_pct).collect();
    let n = vals.len();
    let mean = vals.iter().sum::<f64>() / n as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..n_boot)
        .map(|_| (0..n).map(|_| vals[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(AggregateEstimate {
        category: category.into(),
        mean_rel_effect: mean,
        ci95: (quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)),
        n,
    })
}

/// `sign(x) * ln|x|`, zero for `|x| < 1`.
pub fn log_compress(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.0
    } else {
        x.signum() * x.abs().ln()
    }
}

pub const REPORT_HEADER: [&str; 10] = [
    "event_id",
    "term",
    "variant",
    "abs_effect",
    "rel_effect_pct",
    "ci90_low",
    "ci90_high",
    "ci95_low",
    "ci95_high",
    "decision",
];

/// Flat report row, shared by the CSV and JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub event_id: String,
    pub term: String,
    pub variant: String,
    pub abs_effect: f64,
    pub rel_effect_pct: f64,
    pub ci90_low: f64,
    pub ci90_high: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub decision: Decision,
}

impl From<&ImpactEstimate> for ReportRow {
    fn from(e: &ImpactEstimate) -> Self {
        ReportRow {
            event_id: e.event_id.clone(),
            term: e.term.clone(),
            variant: e.variant.clone(),
            abs_effect: e.abs_effect,
            rel_effect_pct: e.rel_effect_pct,
            ci90_low: e.ci90.0,
            ci90_high: e.ci90.1,
            ci95_low: e.ci95.0,
            ci95_high: e.ci95.1,
            decision: e.decision,
        }
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("writing report: {e}"));
    w.write_record(REPORT_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.event_id.clone(),
            r.term.clone(),
            r.variant.clone(),
            r.abs_effect.to_string(),
            r.rel_effect_pct.to_string(),
            r.ci90_low.to_string(),
            r.ci90_high.to_string(),
            r.ci95_low.to_string(),
            r.ci95_high.to_string(),
            r.decision.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Validation(format!("writing report: {e}")))?;
    Ok(())
}

pub fn parse_report_csv(text: &str, source: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    if headers.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(Error::format(source, format!("header must be `{}`", REPORT_HEADER.join(","))));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::format(source, format!("row {}: {e}", i + 2))))
        .collect()
}

impl From<&ReportRow> for ImpactEstimate {
    fn from(r: &ReportRow) -> Self {
        ImpactEstimate {
            event_id: r.event_id.clone(),
            term: r.term.clone(),
            variant: r.variant.clone(),
            abs_effect: r.abs_effect,
            rel_effect_pct: r.rel_effect_pct,
            ci90: (r.ci90_low, r.ci90_high),
            ci95: (r.ci95_low, r.ci95_high),
            decision: r.decision,
            n_draws: 0,
            seed: 0,
        }
    }
}

pub fn write_aggregate_csv<W: Write>(aggs: &[AggregateEstimate], mut out: W) -> std::io::Result<()> {
    writeln!(out, "category,mean_rel_effect,ci95_low,ci95_high,n")?;
    let mut w = csv::Writer::from_writer(&mut out);
    for a in aggs {
        w.write_record([
            a.category.clone(),
            a.mean_rel_effect.to_string(),
            a.ci95.0.to_string(),
            a.ci95.1.to_string(),
            a.n.to_string(),
        ])?;
    }
    w.flush()
}
