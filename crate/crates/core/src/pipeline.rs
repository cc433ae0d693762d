//! End-to-end commands: corpus to series store, impact over events,
//! aggregation by taxonomy, calibration, and plotting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, TaxonomyConfig};
use crate::control::{build_design, synthesize_control, ControlConfig};
use crate::corpus::{Corpus, Platform, SeriesOptions, SeriesVariant};
use crate::error::{Error, Result};
use crate::events::{Event, EventType};
use crate::impact::{
    aggregate, estimate_impact, log_compress, prefilter, quantile_sorted, rank_terms, AggregateEstimate,
    ImpactEstimate, ReportRow,
};
use crate::lexicon::{
    parse_candidates_csv, parse_lexicon_csv, parse_term_list, write_lexicon_csv, Lexicon, Term, TermSource,
};
use crate::plot::{self, Layer, Panel};
use crate::seed::task_seed;
use crate::series::{read_series_csv, write_series_csv, DailySeries, DateDay};
use crate::sim::{self, CalibrationReport, Engine};
use crate::taxonomy::{
    distribution, resolve_all, term_frame, write_distribution_csv, Annotation, Category, Dimension, Distribution, Frame,
    Resolution, Severity, Stance, Target, TermLabels,
};

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Run metadata kept apart from the primary outputs so those stay
/// byte-identical across runs.
pub fn write_sidecar(out: &Path, command: &str, cfg: &Config, extra: serde_json::Value) -> Result<()> {
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "created": chrono::Utc::now().to_rfc3339(),
        "config_sha256": hex::encode(Sha256::digest(cfg.to_toml().as_bytes())),
        "details": extra,
    });
    let text = serde_json::to_string_pretty(&meta).expect("json");
    write_file(&out.join(format!("{command}.meta.json")), text.as_bytes())
}

// ---- series store ----

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StoreEntry {
    pub term: String,
    pub platform: Platform,
    pub variant: SeriesVariant,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub from: DateDay,
    pub to: DateDay,
    pub entries: Vec<StoreEntry>,
}

/// File name for a term series: readable slug plus a short hash so distinct
/// terms never collide.
pub fn series_file_name(term: &str, platform: Platform, variant: SeriesVariant) -> String {
    format!("series/{platform}__{variant}__{}.csv", term_slug(term))
}

fn term_slug(term: &str) -> String {
    let slug: String = term
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .take(40)
        .collect();
    format!("{slug}-{}", hex::encode(&Sha256::digest(term.as_bytes())[..4]))
}

pub struct SeriesStore {
    pub index: StoreIndex,
    pub series: BTreeMap<(String, Platform, SeriesVariant), DailySeries>,
}

impl SeriesStore {
    pub fn new(from: DateDay, to: DateDay) -> Self {
        SeriesStore {
            index: StoreIndex { from, to, entries: Vec::new() },
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, term: &str, platform: Platform, variant: SeriesVariant, s: DailySeries) {
        let key = (term.to_string(), platform, variant);
        if self.series.insert(key, s).is_none() {
            self.index.entries.push(StoreEntry {
                term: term.into(),
                platform,
                variant,
                file: series_file_name(term, platform, variant),
            });
            self.index.entries.sort();
        }
    }

    pub fn get(&self, term: &str, platform: Platform, variant: SeriesVariant) -> Option<&DailySeries> {
        self.series.get(&(term.to_string(), platform, variant))
    }

    pub fn terms(&self, platform: Platform) -> BTreeSet<String> {
        self.series.keys().filter(|k| k.1 == platform).map(|k| k.0.clone()).collect()
    }

    pub fn platforms(&self) -> BTreeSet<Platform> {
        self.series.keys().map(|k| k.1).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for e in &self.index.entries {
            let s = &self.series[&(e.term.clone(), e.platform, e.variant)];
            let mut buf = Vec::new();
            write_series_csv(s, &mut buf).map_err(|err| Error::io(dir, err))?;
            write_file(&dir.join(&e.file), &buf)?;
        }
        let idx = serde_json::to_string_pretty(&self.index).expect("json") + "\n";
        write_file(&dir.join("index.json"), idx.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("index.json");
        let index: StoreIndex =
            serde_json::from_str(&read_file(&path)?).map_err(|e| Error::format(path.display(), e.to_string()))?;
        let mut series = BTreeMap::new();
        for e in &index.entries {
            if !e.variant.valid_for(e.platform) {
                return Err(Error::format(
                    path.display(),
                    format!("variant {} is not defined for {}", e.variant, e.platform),
                ));
            }
            if Path::new(&e.file).components().any(|c| matches!(c, std::path::Component::ParentDir)) || Path::new(&e.file).is_absolute() {
                return Err(Error::format(path.display(), format!("entry path `{}` escapes the store", e.file)));
            }
            series.insert((e.term.clone(), e.platform, e.variant), read_series_csv(&dir.join(&e.file))?);
        }
        Ok(SeriesStore { index, series })
    }
}

/// Builds every variant of every accepted term over `[from, to]`.
pub fn build_series_store(
    corpus: &Corpus,
    lexicon: &Lexicon,
    from: DateDay,
    to: DateDay,
    platforms: &[Platform],
    variants: Option<&[SeriesVariant]>,
    opts: &SeriesOptions,
) -> Result<SeriesStore> {
    let terms: Vec<&Term> = lexicon.accepted().collect();
    if terms.is_empty() {
        return Err(Error::Validation("lexicon has no accepted terms".into()));
    }
    let mut tasks = Vec::new();
    for t in &terms {
        for p in platforms {
            for v in p.variants() {
                if variants.is_none_or(|vs| vs.contains(&v)) {
                    tasks.push((*t, *p, v));
                }
            }
        }
    }
    let built: Vec<DailySeries> = tasks
        .par_iter()
        .map(|(t, p, v)| corpus.term_series(t, *p, *v, from, to, opts))
        .collect::<Result<_>>()?;
    let mut store = SeriesStore::new(from, to);
    for ((t, p, v), s) in tasks.into_iter().zip(built) {
        store.insert(&t.text, p, v, s);
    }
    Ok(store)
}

// ---- impact ----

/// Observed and counterfactual paths for one task, original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPath {
    pub event_id: String,
    pub term: String,
    pub variant: String,
    pub first_day: DateDay,
    pub event_day: DateDay,
    /// Training plus post window.
    pub observed: Vec<f64>,
    /// One-step fit over training, then the control mean.
    pub counterfactual: Vec<Option<f64>>,
    pub band90_low: Vec<f64>,
    pub band90_high: Vec<f64>,
    pub pointwise: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub cumulative_low: Vec<f64>,
    pub cumulative_high: Vec<f64>,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRun {
    /// Ordered by event date, event id, term, variant.
    pub estimates: Vec<ImpactEstimate>,
    pub paths: Vec<TaskPath>,
    pub skipped: Vec<(String, String, String)>,
}

pub struct ImpactInputs<'a> {
    pub store: &'a SeriesStore,
    pub platform: Platform,
    pub events: &'a [Event],
    pub exogenous: &'a BTreeMap<String, DailySeries>,
}

impl std::fmt::Debug for SeriesStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesStore").field("index", &self.index).finish()
    }
}

impl PartialEq for SeriesStore {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index && self.series == other.series
    }
}

struct Task<'a> {
    event: &'a Event,
    term: String,
    variant: SeriesVariant,
    series: &'a DailySeries,
}

/// Runs design, control and impact for every event, term and variant of
/// `platform` that passes the peak prefilter.
pub fn run_impact(inputs: &ImpactInputs<'_>, cfg: &Config, global_seed: u64) -> Result<ImpactRun> {
    let control_cfg = resolve_control(&cfg.control, inputs.exogenous)?;
    let store = inputs.store;
    let platform = inputs.platform;
    let mut events: Vec<&Event> = inputs.events.iter().collect();
    events.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));

    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for ev in &events {
        let (from, to) = control_cfg.post_window(ev.date);
        for term in store.terms(platform) {
            let volume: Vec<&DailySeries> = platform
                .volume_variants()
                .iter()
                .filter_map(|v| store.get(&term, platform, *v))
                .collect();
            if volume.is_empty() || !prefilter(&volume, from, to, cfg.impact.min_peak) {
                info!("skip {} / {term}: peak below {} in {from}..{to}", ev.id, cfg.impact.min_peak);
                skipped.push((ev.id.clone(), term.clone(), format!("peak below {}", cfg.impact.min_peak)));
                continue;
            }
            for v in platform.variants() {
                if let Some(s) = store.get(&term, platform, v) {
                    tasks.push(Task { event: ev, term: term.clone(), variant: v, series: s });
                }
            }
        }
    }

    let results: Vec<Result<(ImpactEstimate, TaskPath)>> = tasks
        .par_iter()
        .map(|t| run_task(t, inputs.exogenous, &control_cfg, cfg, global_seed))
        .collect();
    let mut estimates = Vec::with_capacity(results.len());
    let mut paths = Vec::with_capacity(results.len());
    for r in results {
        let (e, p) = r?;
        estimates.push(e);
        paths.push(p);
    }
    Ok(ImpactRun { estimates, paths, skipped })
}

/// Exogenous ids come from the config, or from the supplied files when the
/// config lists none.
fn resolve_control(cfg: &ControlConfig, exogenous: &BTreeMap<String, DailySeries>) -> Result<ControlConfig> {
    let mut c = cfg.clone();
    if c.exogenous_ids.is_empty() {
        c.exogenous_ids = exogenous.keys().cloned().collect();
    }
    for id in &c.exogenous_ids {
        if !exogenous.contains_key(id) {
            return Err(Error::DataAvailability(format!("exogenous series `{id}` named in config but not supplied")));
        }
    }
    Ok(c)
}

fn run_task(
    t: &Task<'_>,
    exogenous: &BTreeMap<String, DailySeries>,
    control_cfg: &ControlConfig,
    cfg: &Config,
    global_seed: u64,
) -> Result<(ImpactEstimate, TaskPath)> {
    let seed = task_seed(global_seed, &[&t.event.id, &t.term, t.variant.as_str()]);
    let c = cfg.impact.shift_c;
    let ctx = |e: Error| match e {
        Error::DataAvailability(m) => Error::DataAvailability(format!("{} / {} / {}: {m}", t.event.id, t.term, t.variant)),
        Error::Range(m) => Error::Range(format!("{} / {} / {}: {m}", t.event.id, t.term, t.variant)),
        Error::Fit(m) => Error::Fit(format!("{} / {} / {}: {m}", t.event.id, t.term, t.variant)),
        other => other,
    };
    let design = build_design(t.series, exogenous, t.event, control_cfg, c).map_err(ctx)?;
    let control = synthesize_control(&design, &cfg.ssm, cfg.impact.n_draws, seed).map_err(ctx)?;
    let (pointwise, summary) = estimate_impact(t.series, &design, &control, cfg.impact.width_cap).map_err(ctx)?;
    let est = summary.into_estimate(&t.event.id, &t.term, t.variant.as_str(), seed);

    let (pre_from, _) = control_cfg.pre_window(t.event.date);
    let (_, post_to) = control_cfg.post_window(t.event.date);
    let observed = t.series.slice(pre_from, post_to)?.original_values().to_vec();
    let h = design.post_days;
    let mut band_low = Vec::with_capacity(h);
    let mut band_high = Vec::with_capacity(h);
    let mut cum_low = Vec::with_capacity(h);
    let mut cum_high = Vec::with_capacity(h);
    let t_post: Vec<f64> = observed[observed.len() - h..].iter().map(|v| v + c).collect();
    let mut running = vec![0.0; control.draws.nrows()];
    for k in 0..h {
        let mut col: Vec<f64> = control.draws.column(k).iter().map(|v| v - c).collect();
        col.sort_by(f64::total_cmp);
        band_low.push(quantile_sorted(&col, 0.05));
        band_high.push(quantile_sorted(&col, 0.95));
        for (r, acc) in running.iter_mut().enumerate() {
            *acc += t_post[k] - control.draws[(r, k)];
        }
        let mut sorted = running.clone();
        sorted.sort_by(f64::total_cmp);
        cum_low.push(quantile_sorted(&sorted, 0.05));
        cum_high.push(quantile_sorted(&sorted, 0.95));
    }
    let mut counterfactual: Vec<Option<f64>> = control.fitted_pre.iter().map(|v| v.map(|v| v - c)).collect();
    counterfactual.extend(control.mean.iter().map(|m| Some(m - c)));
    let cumulative = pointwise
        .iter()
        .scan(0.0, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    let path = TaskPath {
        event_id: t.event.id.clone(),
        term: t.term.clone(),
        variant: t.variant.to_string(),
        first_day: pre_from,
        event_day: t.event.date,
        observed,
        counterfactual,
        band90_low: band_low,
        band90_high: band_high,
        pointwise,
        cumulative,
        cumulative_low: cum_low,
        cumulative_high: cum_high,
        covariates: design.covariate_labels(),
    };
    Ok((est, path))
}

/// Writes `impact.csv`, `impact.json`, `ranking.csv` and `paths.jsonl`.
pub fn write_impact_outputs(run: &ImpactRun, out: &Path) -> Result<()> {
    let rows: Vec<ReportRow> = run.estimates.iter().map(ReportRow::from).collect();
    let mut csv_buf = Vec::new();
    crate::impact::write_report_csv(&rows, &mut csv_buf)?;
    write_file(&out.join("impact.csv"), &csv_buf)?;
    let json = serde_json::to_string_pretty(&rows).expect("json") + "\n";
    write_file(&out.join("impact.json"), json.as_bytes())?;

    let ranked: Vec<ReportRow> = rank_terms(run.estimates.clone()).iter().map(ReportRow::from).collect();
    let mut rank_buf = Vec::new();
    crate::impact::write_report_csv(&ranked, &mut rank_buf)?;
    write_file(&out.join("ranking.csv"), &rank_buf)?;

    let mut paths = Vec::new();
    for p in &run.paths {
        serde_json::to_writer(&mut paths, p).expect("json");
        paths.push(b'\n');
    }
    write_file(&out.join("paths.jsonl"), &paths)
}

pub fn read_paths(path: &Path) -> Result<Vec<TaskPath>> {
    let src = path.display().to_string();
    read_file(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(&src, format!("line {}: {e}", i + 1))))
        .collect()
}

// ---- aggregation ----

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRun {
    pub aggregates: Vec<AggregateEstimate>,
    /// Categories with fewer than two estimates.
    pub insufficient: Vec<String>,
    pub plot_rows: Vec<PlotRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub event_id: String,
    pub event_type: String,
    pub term: String,
    pub variant: String,
    pub stance: String,
    pub severity: String,
    pub rel_effect_pct: f64,
    pub compressed: f64,
}

fn labels_of<C: Category>(all: &'static [C]) -> Vec<&'static str> {
    all.iter().map(|c| c.as_str()).collect()
}

/// Mean relative effect per event scope and taxonomy label. Scopes are all
/// events plus each event type present in `events`.
pub fn run_aggregate(
    estimates: &[ImpactEstimate],
    lexicon: &Lexicon,
    events: &[Event],
    variant: Option<&str>,
    n_boot: usize,
    seed: u64,
) -> Result<AggregateRun> {
    let event_type: BTreeMap<&str, EventType> = events.iter().map(|e| (e.id.as_str(), e.event_type)).collect();
    let selected: Vec<ImpactEstimate> = estimates
        .iter()
        .filter(|e| variant.is_none_or(|v| e.variant == v))
        .cloned()
        .collect();
    let mut scopes: Vec<Option<EventType>> = vec![None];
    let present: BTreeSet<EventType> = selected.iter().filter_map(|e| event_type.get(e.event_id.as_str()).copied()).collect();
    scopes.extend(present.into_iter().map(Some));

    let dims: [(Dimension, Vec<&'static str>); 4] = [
        (Dimension::Stance, labels_of(Stance::ALL)),
        (Dimension::Target, labels_of(Target::ALL)),
        (Dimension::Severity, labels_of(Severity::ALL)),
        (Dimension::Frame, labels_of(Frame::ALL)),
    ];
    let mut aggregates = Vec::new();
    let mut insufficient = Vec::new();
    for scope in &scopes {
        let scope_name = scope.map_or("all", |t| t.as_str());
        for (dim, labels) in &dims {
            for label in labels {
                let category = format!("{scope_name}/{dim}={label}");
                let pick = |e: &ImpactEstimate| {
                    let in_scope = scope.is_none_or(|t| event_type.get(e.event_id.as_str()) == Some(&t));
                    in_scope && lexicon.get(&e.term).and_then(|t| t.labels.get(*dim)) == Some(*label)
                };
                match aggregate(&selected, &category, pick, n_boot, task_seed(seed, &["aggregate", &category])) {
                    Ok(a) => aggregates.push(a),
                    Err(Error::InsufficientData(_)) => insufficient.push(category),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if aggregates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no taxonomy category has at least 2 of the {} estimates",
            selected.len()
        )));
    }
    let mut plot_rows: Vec<PlotRow> = selected
        .iter()
        .map(|e| {
            let labels = lexicon.get(&e.term).map(|t| t.labels).unwrap_or_default();
            PlotRow {
                event_id: e.event_id.clone(),
                event_type: event_type.get(e.event_id.as_str()).map_or("", |t| t.as_str()).to_string(),
                term: e.term.clone(),
                variant: e.variant.clone(),
                stance: labels.stance.map_or("", |s| s.as_str()).to_string(),
                severity: labels.severity.map_or("", |s| s.as_str()).to_string(),
                rel_effect_pct: e.rel_effect_pct,
                compressed: log_compress(e.rel_effect_pct),
            }
        })
        .collect();
    plot_rows.sort_by(|a, b| (&a.event_id, &a.term, &a.variant).cmp(&(&b.event_id, &b.term, &b.variant)));
    Ok(AggregateRun { aggregates, insufficient, plot_rows })
}

pub fn write_aggregate_outputs(run: &AggregateRun, out: &Path) -> Result<()> {
    let mut buf = Vec::new();
    crate::impact::write_aggregate_csv(&run.aggregates, &mut buf).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("aggregate.csv"), &buf)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &run.plot_rows {
        w.serialize(r).map_err(|e| Error::Validation(format!("writing plot data: {e}")))?;
    }
    let data = w.into_inner().map_err(|e| Error::Validation(format!("writing plot data: {e}")))?;
    write_file(&out.join("aggregate_plot.csv"), &data)?;
    write_file(&out.join("aggregate_plot.svg"), severity_stance_svg(&run.plot_rows).as_bytes())
}

/// Strip plot of compressed effects per severity (top) and stance (bottom).
fn severity_stance_svg(rows: &[PlotRow]) -> String {
    let mut panels = Vec::new();
    for (title, key, labels) in [
        ("severity", 0, labels_of(Severity::ALL)),
        ("stance", 1, labels_of(Stance::ALL)),
    ] {
        let mut p = Panel::new(format!("sign(x) ln|x| of relative effect by {title}: {}", labels.join(", ")));
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for r in rows {
            let v = if key == 0 { &r.severity } else { &r.stance };
            if let Some(i) = labels.iter().position(|l| l == v) {
                xs.push(i as f64);
                ys.push(r.compressed);
            }
        }
        p.layers.push(Layer::Points { xs, ys, color: "steelblue" });
        p.layers.push(Layer::Line { ys: vec![Some(0.0); labels.len()], color: "#999", dashed: true });
        p.zero_line = true;
        panels.push(p);
    }
    plot::render("Distribution of impact", &panels, ("", ""))
}

// ---- report ----

/// One three-panel SVG per task: observed vs counterfactual, pointwise and
/// cumulative differences.
pub fn task_svg(p: &TaskPath) -> String {
    let pre = p.observed.len() - p.pointwise.len();
    let n = p.observed.len();
    let pad = |v: &[f64]| -> Vec<Option<f64>> {
        std::iter::repeat_n(None, pre).chain(v.iter().copied().map(Some)).collect()
    };
    let mut top = Panel::new("observed (black) and counterfactual (blue, 90% band)");
    top.layers.push(Layer::Band { low: pad(&p.band90_low), high: pad(&p.band90_high), color: "steelblue" });
    top.layers.push(Layer::Line { ys: p.observed.iter().copied().map(Some).collect(), color: "black", dashed: false });
    top.layers.push(Layer::Line { ys: p.counterfactual.clone(), color: "steelblue", dashed: true });
    top.marker = Some(pre as f64);

    let mut mid = Panel::new("pointwise difference");
    mid.layers.push(Layer::Line { ys: pad(&p.pointwise), color: "darkred", dashed: false });
    mid.marker = Some(pre as f64);
    mid.zero_line = true;

    let mut bottom = Panel::new("cumulative difference (90% band)");
    bottom.layers.push(Layer::Band { low: pad(&p.cumulative_low), high: pad(&p.cumulative_high), color: "darkred" });
    bottom.layers.push(Layer::Line { ys: pad(&p.cumulative), color: "darkred", dashed: false });
    bottom.marker = Some(pre as f64);
    bottom.zero_line = true;
    // keep all panels on the same x range
    for panel in [&mut mid, &mut bottom] {
        panel.layers.push(Layer::Line { ys: vec![None; n], color: "none", dashed: false });
    }
    let last = p.first_day.add_days(n as i64 - 1).to_string();
    plot::render(
        &format!("{} / {} / {}", p.event_id, p.term, p.variant),
        &[top, mid, bottom],
        (&p.first_day.to_string(), &last),
    )
}

pub fn write_report(paths: &[TaskPath], rows: &[ReportRow], out: &Path) -> Result<()> {
    let mut names = BTreeSet::new();
    for p in paths {
        let name = format!("plots/{}__{}__{}.svg", p.event_id, term_slug(&p.term), p.variant);
        write_file(&out.join(&name), task_svg(p).as_bytes())?;
        names.insert(name);
    }
    let estimates: Vec<ImpactEstimate> = rows.iter().map(ImpactEstimate::from).collect();
    let ranked = rank_terms(estimates);
    let mut md = String::from("# Impact summary\n\n| rank | event | term | variant | rel. effect % | 90% CI (cumulative) | decision |\n|---|---|---|---|---|---|---|\n");
    for (i, e) in ranked.iter().enumerate() {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {:+.1} | [{:.1}, {:.1}] | {} |\n",
            i + 1,
            e.event_id,
            e.term.replace('|', "\\|"),
            e.variant,
            e.rel_effect_pct,
            e.ci90.0,
            e.ci90.1,
            e.decision
        ));
    }
    md.push_str(&format!("\n{} plots written under `plots/`.\n", names.len()));
    write_file(&out.join("summary.md"), md.as_bytes())
}

// ---- calibration ----

pub fn run_calibrate(cfg: &Config, trials: usize, seed: u64) -> Result<CalibrationReport> {
    let engine = Engine::from_config(cfg);
    sim::run_calibration(&cfg.sim, &engine, &sim::trial_seeds(seed, trials))
}

// ---- misc inputs ----

/// Parses `id=path` exogenous arguments and reads each series.
pub fn load_exogenous(specs: &[String]) -> Result<BTreeMap<String, DailySeries>> {
    let mut out = BTreeMap::new();
    for s in specs {
        let (id, path) = s
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("exogenous argument `{s}` must be ID=PATH")))?;
        if id.is_empty() || out.contains_key(id) {
            return Err(Error::Validation(format!("exogenous id `{id}` is empty or repeated")));
        }
        out.insert(id.to_string(), read_series_csv(Path::new(path))?);
    }
    Ok(out)
}

pub fn warn_skipped(run: &ImpactRun) {
    if !run.skipped.is_empty() {
        warn!("{} event/term pairs failed the peak prefilter", run.skipped.len());
    }
}

// ---- lexicon ----

/// Reads a term list in any of the three accepted shapes: lexicon CSV,
/// reviewed candidates CSV, or one term per line.
pub fn load_terms(path: &Path, source: TermSource, fold_plurals: bool) -> Result<Vec<Term>> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    let first = text.lines().next().unwrap_or("").trim();
    if first.starts_with("term,source") {
        Ok(parse_lexicon_csv(&text, &name, fold_plurals)?.terms().cloned().collect())
    } else if first.starts_with("term,frequency") {
        parse_candidates_csv(&text, &name, fold_plurals)
    } else {
        parse_term_list(&text, source)
    }
}

/// Texts on `platform` matched by at least one accepted term.
pub fn matched_texts<'a>(corpus: &'a Corpus, lexicon: &Lexicon, platform: Platform) -> Vec<&'a str> {
    let mut idx = BTreeSet::new();
    for t in lexicon.accepted() {
        idx.extend(corpus.matching(t, platform));
    }
    idx.into_iter().map(|i| corpus.records()[i].text.as_str()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct PendingRow {
    pub subject_id: String,
    pub dimension: String,
    pub status: String,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub lexicon: Lexicon,
    pub pending: Vec<PendingRow>,
    pub distribution: Distribution,
}

/// Applies majority-vote labels to the lexicon. Annotations whose subject is
/// a lexicon term label that term directly. Frame annotations on any other
/// subject are message labels; each term then takes the term-level frame of
/// the resolved messages it matches in `corpus`.
pub fn resolve_lexicon(
    lexicon: &Lexicon,
    annotations: &[Annotation],
    corpus: Option<&Corpus>,
    cfg: &TaxonomyConfig,
) -> Result<Resolved> {
    let resolved = resolve_all(annotations, cfg.min_votes, cfg.max_votes)?;
    let mut votes: BTreeMap<(String, Dimension), usize> = BTreeMap::new();
    for a in annotations {
        *votes.entry((a.subject_id.clone(), a.dimension)).or_default() += 1;
    }
    let mut lex = lexicon.clone();
    let mut pending = Vec::new();
    let mut message_frames: BTreeMap<&str, Frame> = BTreeMap::new();
    for ((subject, dim), res) in &resolved {
        let status = match res {
            Resolution::Label(label) => {
                if let Some(t) = lex.get_mut(subject) {
                    t.labels.set(*dim, label)?;
                } else if *dim == Dimension::Frame {
                    message_frames.insert(subject, label.parse()?);
                } else {
                    warn!("annotation subject `{subject}` is not a lexicon term; ignored");
                }
                continue;
            }
            Resolution::NeedsMore => "needs_more",
            Resolution::Unresolved => "unresolved",
        };
        pending.push(PendingRow {
            subject_id: subject.clone(),
            dimension: dim.to_string(),
            status: status.into(),
            votes: votes[&(subject.clone(), *dim)],
        });
    }
    if !message_frames.is_empty() {
        let corpus = corpus.ok_or_else(|| {
            Error::Validation("message-level frame annotations need the corpus to map messages to terms".into())
        })?;
        let texts: Vec<Term> = lex.terms().cloned().collect();
        for term in texts {
            if term.labels.frame.is_some() {
                continue;
            }
            let frames: Vec<Frame> = corpus
                .records()
                .iter()
                .filter(|r| crate::corpus::matches(&term, &r.text))
                .filter_map(|r| message_frames.get(r.id.as_str()).copied())
                .collect();
            if !frames.is_empty() {
                let f = term_frame(&frames, cfg.both_gap)?;
                lex.get_mut(&term.text).expect("term present").labels.frame = Some(f);
            }
        }
    }
    let labels: Vec<TermLabels> = lex.accepted().map(|t| t.labels).collect();
    let distribution = distribution(&labels);
    Ok(Resolved { lexicon: lex, pending, distribution })
}

pub fn write_resolved(r: &Resolved, out: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_lexicon_csv(&r.lexicon, &mut buf)?;
    write_file(&out.join("lexicon.csv"), &buf)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subject_id", "dimension", "status", "votes"])
        .map_err(|e| Error::Validation(format!("writing pending: {e}")))?;
    for p in &r.pending {
        w.write_record([p.subject_id.as_str(), &p.dimension, &p.status, &p.votes.to_string()])
            .map_err(|e| Error::Validation(format!("writing pending: {e}")))?;
    }
    let data = w.into_inner().map_err(|e| Error::Validation(format!("writing pending: {e}")))?;
    write_file(&out.join("pending.csv"), &data)?;
    let mut dist = Vec::new();
    write_distribution_csv(&r.distribution, &mut dist).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("distribution.csv"), &dist)
}
