//! Synthetic series and corpora with known injected effects, and the
//! calibration study that runs the control and impact pipeline over them.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{build_design, synthesize_control, ControlConfig};
use crate::corpus::{MessageKind, MessageRecord, Platform};
use crate::error::{Error, Result};
use crate::events::{Event, EventType};
use crate::impact::{estimate_impact, Decision, ImpactConfig};
use crate::seed::task_seed;
use crate::series::{DailySeries, DateDay};
use crate::ssm::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Variance equal to the mean; Gaussian at rates of 30 and above,
    /// Poisson below.
    PoissonLike,
    /// Constant variance equal to the base rate.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub start: DateDay,
    pub n_days: usize,
    /// Index of the event day.
    pub event_day: usize,
    pub base_rate: f64,
    /// Relative amplitude of the weekly cycle.
    pub weekly_amplitude: f64,
    /// Relative drift per day.
    pub trend_slope: f64,
    /// Step standard deviation of the shared random-walk level, relative.
    pub factor_sd: f64,
    pub noise_model: NoiseModel,
    /// How strongly the treated series follows the shared factor.
    pub shared_factor_loading: f64,
    /// One exogenous series per entry, scaled copies of the shared factor.
    pub exogenous_scales: Vec<f64>,
    /// Multiplicative lift over the post window; 0 for no effect.
    pub lift: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start: DateDay::from_ymd(2016, 1, 1).expect("valid date"),
            n_days: 560,
            event_day: 500,
            base_rate: 200.0,
            weekly_amplitude: 0.1,
            trend_slope: 0.0,
            factor_sd: 0.01,
            noise_model: NoiseModel::PoissonLike,
            shared_factor_loading: 1.0,
            exogenous_scales: vec![5.0, 10.0],
            lift: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn exogenous_ids(&self) -> Vec<String> {
        (0..self.exogenous_scales.len()).map(|i| format!("exo{i}")).collect()
    }

    pub fn validate(&self, control: &ControlConfig) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate.is_finite()) {
            return Err(Error::Validation("sim.base_rate must be positive".into()));
        }
        if self.event_day < control.pre_days.max(77) {
            return Err(Error::Validation(format!(
                "sim.event_day {} leaves fewer than {} pre days",
                self.event_day,
                control.pre_days.max(77)
            )));
        }
        if self.event_day + control.post_days > self.n_days {
            return Err(Error::Validation("sim post window runs past n_days".into()));
        }
        if self.exogenous_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Validation("sim.exogenous_scales must be positive".into()));
        }
        if !(self.lift > -1.0 && self.lift.is_finite()) {
            return Err(Error::Validation("sim.lift must exceed -1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPair {
    pub treated: DailySeries,
    pub exogenous: BTreeMap<String, DailySeries>,
    pub event: Event,
    /// Expected treated means before the lift.
    pub baseline_mean: Vec<f64>,
    pub true_rel_effect: f64,
}

impl SimPair {
    /// Expected cumulative effect over `post_days` days from the event.
    pub fn true_cum_effect(&self, lift: f64, post_days: usize) -> f64 {
        let e = self.event_index();
        self.baseline_mean[e..e + post_days].iter().map(|m| lift * m).sum()
    }

    /// Expected relative effect on the scale shifted by `c`.
    pub fn true_rel_effect_shifted(&self, lift: f64, post_days: usize, c: f64) -> f64 {
        let e = self.event_index();
        let base: f64 = self.baseline_mean[e..e + post_days].iter().map(|m| m + c).sum();
        100.0 * self.true_cum_effect(lift, post_days) / base
    }

    fn event_index(&self) -> usize {
        self.treated.start().days_until(self.event.date) as usize
    }
}

fn noise_sample(rng: &mut ChaCha8Rng, model: NoiseModel, mean: f64, base: f64) -> f64 {
    match model {
        NoiseModel::PoissonLike if mean < 30.0 => {
            if mean <= 0.0 {
                0.0
            } else {
                Poisson::new(mean).expect("positive rate").sample(rng)
            }
        }
        NoiseModel::PoissonLike => (mean + mean.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)).max(0.0),
        NoiseModel::Gaussian => (mean + base.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)).max(0.0),
    }
}

/// One treated series with its exogenous covariates. The post window is
/// `post_days` long; `post_days` only matters when a lift is injected.
pub fn simulate_pair(cfg: &SimConfig, post_days: usize) -> Result<SimPair> {
    cfg.validate(&ControlConfig { post_days, ..ControlConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = Normal::new(0.0, cfg.factor_sd.max(0.0)).map_err(|e| Error::Validation(e.to_string()))?;
    let mut walk = 0.0;
    let factor: Vec<f64> = (0..cfg.n_days)
        .map(|t| {
            if t > 0 {
                walk += step.sample(&mut rng);
            }
            let season = cfg.weekly_amplitude * (2.0 * std::f64::consts::PI * (t % 7) as f64 / 7.0).sin();
            let drift = cfg.trend_slope * (t as f64 - cfg.event_day as f64);
            (1.0 + walk + season + drift).max(0.05)
        })
        .collect();

    let baseline_mean: Vec<f64> = factor
        .iter()
        .map(|f| cfg.base_rate * (1.0 + cfg.shared_factor_loading * (f - 1.0)).max(0.05))
        .collect();
    let post = cfg.event_day..cfg.event_day + post_days;
    let treated: Vec<f64> = baseline_mean
        .iter()
        .enumerate()
        .map(|(t, m)| {
            let mean = if post.contains(&t) { m * (1.0 + cfg.lift) } else { *m };
            noise_sample(&mut rng, cfg.noise_model, mean, cfg.base_rate)
        })
        .collect();

    let mut exogenous = BTreeMap::new();
    for (id, scale) in cfg.exogenous_ids().into_iter().zip(&cfg.exogenous_scales) {
        let base = cfg.base_rate * scale;
        let vals: Vec<f64> = factor
            .iter()
            .map(|f| noise_sample(&mut rng, cfg.noise_model, base * f, base))
            .collect();
        exogenous.insert(id, DailySeries::new(cfg.start, vals)?);
    }
    let event = Event {
        id: "sim".into(),
        date: cfg.start.add_days(cfg.event_day as i64),
        name: "simulated event".into(),
        event_type: EventType::IslamistTerrorism,
        country: "none".into(),
        victims: 0,
    };
    Ok(SimPair {
        treated: DailySeries::new(cfg.start, treated)?,
        exogenous,
        event,
        baseline_mean,
        true_rel_effect: 100.0 * cfg.lift,
    })
}

/// Statistics of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub trials: usize,
    /// Share of trials with a directional decision against the truth (any
    /// directional decision when there is no effect).
    pub fpr: f64,
    /// Share of trials whose decision matches the sign of the lift.
    pub detection: f64,
    /// Mean of estimated minus true relative effect, both on the shifted scale.
    pub bias: f64,
    /// Share of trials whose 90% interval covers the true cumulative effect.
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub decision: Decision,
    pub rel_error: f64,
    pub covered: bool,
    pub abs_effect: f64,
}

/// Engine settings shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    pub control: ControlConfig,
    pub model: ModelConfig,
    pub impact: ImpactConfig,
}

impl Engine {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Engine {
            control: cfg.control.clone(),
            model: cfg.ssm,
            impact: cfg.impact.clone(),
        }
    }
}

pub fn trial_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| task_seed(base, &["trial", &i.to_string()])).collect()
}

/// Simulates one pair with `seed` and runs design, control and impact on it.
pub fn run_trial(template: &SimConfig, engine: &Engine, seed: u64) -> Result<TrialOutcome> {
    let cfg = SimConfig { seed, ..template.clone() };
    let control_cfg = ControlConfig {
        exogenous_ids: cfg.exogenous_ids(),
        ..engine.control.clone()
    };
    let pair = simulate_pair(&cfg, control_cfg.post_days)?;
    let c = engine.impact.shift_c;
    let design = build_design(&pair.treated, &pair.exogenous, &pair.event, &control_cfg, c)?;
    let control = synthesize_control(&design, &engine.model, engine.impact.n_draws, task_seed(seed, &["draws"]))?;
    let (_, s) = estimate_impact(&pair.treated, &design, &control, engine.impact.width_cap)?;
    let h = control_cfg.post_days;
    let truth = pair.true_cum_effect(cfg.lift, h);
    Ok(TrialOutcome {
        decision: s.decision,
        rel_error: s.rel_effect_pct - pair.true_rel_effect_shifted(cfg.lift, h, c),
        covered: s.ci90.0 <= truth && truth <= s.ci90.1,
        abs_effect: s.abs_effect,
    })
}

/// Runs one trial per seed in parallel; the report depends only on the
/// inputs.
pub fn run_calibration(template: &SimConfig, engine: &Engine, seeds: &[u64]) -> Result<CalibrationReport> {
    if seeds.is_empty() {
        return Err(Error::Validation("calibration needs at least one trial".into()));
    }
    let outcomes: Vec<TrialOutcome> = seeds
        .par_iter()
        .map(|s| run_trial(template, engine, *s))
        .collect::<Result<_>>()?;
    Ok(summarize(&outcomes, template.lift))
}

pub fn summarize(outcomes: &[TrialOutcome], lift: f64) -> CalibrationReport {
    let n = outcomes.len() as f64;
    let share = |f: &dyn Fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let (right, wrong) = if lift > 0.0 {
        (Some(Decision::Increase), Some(Decision::Decrease))
    } else if lift < 0.0 {
        (Some(Decision::Decrease), Some(Decision::Increase))
    } else {
        (None, None)
    };
    CalibrationReport {
        trials: outcomes.len(),
        fpr: match wrong {
            Some(w) => share(&|o| o.decision == w),
            None => share(&|o| o.decision.is_directional()),
        },
        detection: match right {
            Some(r) => share(&|o| o.decision == r),
            None => 0.0,
        },
        bias: outcomes.iter().map(|o| o.rel_error).sum::<f64>() / n,
        coverage: share(&|o| o.covered),
    }
}

/// Message-level corpus whose daily count of messages mentioning each term
/// follows the given daily means. Each message mentions exactly one term.
/// Reddit-like corpora get one post per mention plus `comments_per_post`
/// comments that do not repeat the term.
pub fn simulate_messages(
    platform: Platform,
    start: DateDay,
    terms: &[(&str, Vec<f64>)],
    comments_per_post: usize,
    n_users: usize,
    seed: u64,
) -> Result<Vec<MessageRecord>> {
    if n_users == 0 {
        return Err(Error::Validation("n_users must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let fillers = ["today", "people", "news", "again", "world", "city"];
    let days = terms.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut next_id = 0usize;
    let mut id = |prefix: &str| {
        next_id += 1;
        format!("{prefix}{next_id:07}")
    };
    for d in 0..days {
        let date = start.add_days(d as i64).naive();
        for (term, rates) in terms {
            let rate = rates.get(d).copied().unwrap_or(0.0);
            let n = if rate > 0.0 {
                Poisson::new(rate).map_err(|e| Error::Validation(e.to_string()))?.sample(&mut rng) as usize
            } else {
                0
            };
            for _ in 0..n {
                let ts = date.and_time(NaiveTime::MIN) + Duration::seconds(rng.random_range(0..86_400));
                let filler = fillers[rng.random_range(0..fillers.len())];
                let user = format!("u{}", rng.random_range(0..n_users));
                let (kind, text) = match platform {
                    Platform::TwitterLike if rng.random_bool(0.2) => {
                        (MessageKind::Message, format!("RT @u{}: {term} {filler}", rng.random_range(0..n_users)))
                    }
                    Platform::TwitterLike => (MessageKind::Message, format!("{term} {filler}")),
                    Platform::RedditLike => (MessageKind::Post, format!("{term} {filler}")),
                };
                let post_id = id(if platform == Platform::RedditLike { "p" } else { "m" });
                out.push(MessageRecord {
                    platform,
                    id: post_id.clone(),
                    timestamp: ts,
                    user,
                    text,
                    kind,
                    parent_id: None,
                });
                if platform == Platform::RedditLike {
                    for _ in 0..comments_per_post {
                        let cts = (ts + Duration::seconds(rng.random_range(0..3600))).min(
                            date.and_time(NaiveTime::MIN) + Duration::seconds(86_399),
                        );
                        out.push(MessageRecord {
                            platform,
                            id: id("c"),
                            timestamp: cts,
                            user: format!("u{}", rng.random_range(0..n_users)),
                            text: fillers[rng.random_range(0..fillers.len())].to_string(),
                            kind: MessageKind::Comment,
                            parent_id: Some(post_id.clone()),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
