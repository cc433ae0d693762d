//! Counterfactual design (training window, lagged self-windows, exogenous
//! covariates) and control synthesis.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Event;
use crate::series::{DailySeries, DateDay};
use crate::ssm::{fit_mle, forecast, ModelConfig, VarianceParams};

/// One lagged self-window: `lag_days` into the past, else `fallback_lag_days`
/// (negative means into the future).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct LagSpec {
    pub lag_days: i64,
    pub fallback_lag_days: i64,
}

impl From<(i64, i64)> for LagSpec {
    fn from((lag_days, fallback_lag_days): (i64, i64)) -> Self {
        LagSpec { lag_days, fallback_lag_days }
    }
}

impl From<LagSpec> for (i64, i64) {
    fn from(l: LagSpec) -> Self {
        (l.lag_days, l.fallback_lag_days)
    }
}

impl LagSpec {
    pub const fn new(lag_days: i64, fallback_lag_days: i64) -> Self {
        LagSpec { lag_days, fallback_lag_days }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub pre_days: usize,
    pub post_days: usize,
    pub lag_specs: Vec<LagSpec>,
    pub exogenous_ids: Vec<String>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            pre_days: 77,
            post_days: 7,
            // one year back else forward; 23 weeks back else 5 weeks forward
            lag_specs: vec![LagSpec::new(365, -365), LagSpec::new(161, -35)],
            exogenous_ids: Vec::new(),
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pre_days < 28 {
            return Err(Error::Validation(format!("control.pre_days must be >= 28, got {}", self.pre_days)));
        }
        if self.post_days < 1 {
            return Err(Error::Validation("control.post_days must be >= 1".into()));
        }
        let span = (self.pre_days + self.post_days) as u64;
        for l in &self.lag_specs {
            if l.lag_days.unsigned_abs() <= span {
                return Err(Error::Validation(format!(
                    "lag {} must exceed pre_days + post_days = {span} in magnitude",
                    l.lag_days
                )));
            }
            // the default 5-week-forward fallback is shorter than the window
            if l.fallback_lag_days == 0 {
                return Err(Error::Validation(format!("lag {}: fallback lag must be nonzero", l.lag_days)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &self.exogenous_ids {
            if !seen.insert(id) {
                return Err(Error::Validation(format!("exogenous id `{id}` listed twice")));
            }
        }
        Ok(())
    }

    /// First and last day of the training window.
    pub fn pre_window(&self, event: DateDay) -> (DateDay, DateDay) {
        (event.add_days(-(self.pre_days as i64)), event.add_days(-1))
    }

    /// Event day through the last post day.
    pub fn post_window(&self, event: DateDay) -> (DateDay, DateDay) {
        (event, event.add_days(self.post_days as i64 - 1))
    }
}

/// Where a design column came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariate {
    Lag { requested: i64, used: i64, used_fallback: bool },
    Exogenous { id: String },
}

impl Covariate {
    pub fn label(&self) -> String {
        match self {
            Covariate::Lag { used, .. } => format!("lag:{used}"),
            Covariate::Exogenous { id } => format!("exo:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDesign {
    pub event_id: String,
    pub event_date: DateDay,
    /// Shifted by `shift_c`.
    pub treated_pre: DailySeries,
    /// `pre_days x k`, shifted.
    pub x_pre: DMatrix<f64>,
    /// `post_days x k`, shifted.
    pub x_post: DMatrix<f64>,
    pub covariates: Vec<Covariate>,
    pub shift_c: f64,
    pub post_days: usize,
}

impl ControlDesign {
    pub fn covariate_labels(&self) -> Vec<String> {
        self.covariates.iter().map(Covariate::label).collect()
    }

    pub fn post_window(&self) -> (DateDay, DateDay) {
        (self.event_date, self.event_date.add_days(self.post_days as i64 - 1))
    }
}

pub fn build_design(
    treated: &DailySeries,
    exogenous: &BTreeMap<String, DailySeries>,
    event: &Event,
    cfg: &ControlConfig,
    c: f64,
) -> Result<ControlDesign> {
    cfg.validate()?;
    if !c.is_finite() {
        return Err(Error::Validation(format!("shift constant must be finite, got {c}")));
    }
    let (pre_from, pre_to) = cfg.pre_window(event.date);
    let (_, post_to) = cfg.post_window(event.date);
    if !treated.covers(pre_from, pre_to) {
        return Err(Error::DataAvailability(format!(
            "treated series {}..{} does not cover training window {pre_from}..{pre_to} for event {}",
            treated.start(),
            treated.end(),
            event.id
        )));
    }
    let treated_pre = treated.slice(pre_from, pre_to)?.shift_constant(c);

    let k = cfg.lag_specs.len() + cfg.exogenous_ids.len();
    let (pre, post) = (cfg.pre_days, cfg.post_days);
    let mut x_pre = DMatrix::zeros(pre, k);
    let mut x_post = DMatrix::zeros(post, k);
    let mut covariates = Vec::with_capacity(k);
    let mut put = |j: usize, vals: &[f64]| {
        for (r, v) in vals.iter().enumerate() {
            if r < pre {
                x_pre[(r, j)] = v + c;
            } else {
                x_post[(r - pre, j)] = v + c;
            }
        }
    };

    for (j, l) in cfg.lag_specs.iter().enumerate() {
        let w = treated
            .lag_window(event.date, l.lag_days, pre, post, l.fallback_lag_days)
            .map_err(|e| match e {
                Error::DataAvailability(msg) => {
                    Error::DataAvailability(format!("event {}: lag {}: {msg}", event.id, l.lag_days))
                }
                other => other,
            })?;
        put(j, w.series.original_values());
        covariates.push(Covariate::Lag {
            requested: l.lag_days,
            used: w.lag_days,
            used_fallback: w.used_fallback,
        });
    }
    for (i, id) in cfg.exogenous_ids.iter().enumerate() {
        let s = exogenous
            .get(id)
            .ok_or_else(|| Error::DataAvailability(format!("exogenous series `{id}` not supplied")))?;
        if !s.covers(pre_from, post_to) {
            return Err(Error::Range(format!(
                "exogenous series `{id}` ({}..{}) does not cover {pre_from}..{post_to}",
                s.start(),
                s.end()
            )));
        }
        put(cfg.lag_specs.len() + i, s.slice(pre_from, post_to)?.original_values());
        covariates.push(Covariate::Exogenous { id: id.clone() });
    }

    Ok(ControlDesign {
        event_id: event.id.clone(),
        event_date: event.date,
        treated_pre,
        x_pre,
        x_post,
        covariates,
        shift_c: c,
        post_days: post,
    })
}

/// Synthesized counterfactual for the post window, on the shifted scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSeries {
    pub mean: Vec<f64>,
    /// `n_draws x post_days`.
    pub draws: DMatrix<f64>,
    /// One-step predictions over the training window; `None` during burn-in.
    pub fitted_pre: Vec<Option<f64>>,
    pub params: VarianceParams,
    pub loglik: f64,
    /// Labels of design columns that were constant over training and left out.
    pub dropped: Vec<String>,
    /// Training series was constant.
    pub degenerate: bool,
    pub seed: u64,
}

/// Column mean and population standard deviation over the training rows.
fn column_scale(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let n = x.nrows() as f64;
    let m = x.column(j).iter().sum::<f64>() / n;
    let v = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Fits the state-space model on the training window and forecasts the post
/// window. The response is centred and covariates standardized on the
/// training rows before fitting; results are mapped back afterwards.
pub fn synthesize_control(
    design: &ControlDesign,
    model_cfg: &ModelConfig,
    n_draws: usize,
    seed: u64,
) -> Result<ControlSeries> {
    model_cfg.validate()?;
    let y = design.treated_pre.values();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let degenerate = yc.iter().all(|v| *v == 0.0);

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut scales = Vec::new();
    for (j, cov) in design.covariates.iter().enumerate() {
        let (m, s) = column_scale(&design.x_pre, j);
        if s > 1e-12 * m.abs().max(1.0) {
            keep.push(j);
            scales.push((m, s));
        } else {
            dropped.push(cov.label());
        }
    }
    let standardize = |x: &DMatrix<f64>| {
        DMatrix::from_fn(x.nrows(), keep.len(), |r, i| {
            let (m, s) = scales[i];
            (x[(r, keep[i])] - m) / s
        })
    };
    let x_pre = standardize(&design.x_pre);
    let x_post = standardize(&design.x_post);

    let spec = model_cfg.spec(keep.len());
    let model = fit_mle(&spec, &yc, &x_pre, &model_cfg.fit())?;
    let fc = forecast(&model, &x_post, design.post_days, n_draws, seed)?;
    Ok(ControlSeries {
        mean: fc.mean_path.iter().map(|v| v + y_mean).collect(),
        draws: fc.draws.map(|v| v + y_mean),
        fitted_pre: model
            .filter
            .one_step_means
            .iter()
            .enumerate()
            .map(|(i, m)| (i >= model.filter.burn_in).then_some(m + y_mean))
            .collect(),
        params: model.params,
        loglik: model.loglik,
        dropped,
        degenerate,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventType;

    fn day(i: i64) -> DateDay {
        DateDay::from_ymd(2016, 1, 1).unwrap().add_days(i)
    }

    fn event_at(i: i64) -> Event {
        Event {
            id: "ev".into(),
            date: day(i),
            name: "ev".into(),
            event_type: EventType::IslamistTerrorism,
            country: "X".into(),
            victims: 1,
        }
    }

    fn series(f: impl Fn(i64) -> f64, n: i64) -> DailySeries {
        DailySeries::new(day(0), (0..n).map(f).collect()).unwrap()
    }

    fn quick() -> ModelConfig {
        ModelConfig::default()
    }

    #[test]
    fn default_design_shape() {
        let t = series(|i| (i % 7) as f64 + 10.0, 600);
        let mut exo = BTreeMap::new();
        let mut cfg = ControlConfig::default();
        for id in ["news", "ref_a", "ref_b"] {
            exo.insert(id.to_string(), series(|i| (i % 5) as f64, 600));
            cfg.exogenous_ids.push(id.into());
        }
        let d = build_design(&t, &exo, &event_at(500), &cfg, 0.0).unwrap();
        assert_eq!(d.x_pre.shape(), (77, 5));
        assert_eq!(d.x_post.shape(), (7, 5));
        assert_eq!(d.treated_pre.len(), 77);
        assert_eq!(d.treated_pre.end(), day(499));
        assert_eq!(d.covariate_labels(), ["lag:365", "lag:161", "exo:news", "exo:ref_a", "exo:ref_b"]);
        // x_post row 0 of the lag-161 column is the event day 161 days back
        assert_eq!(d.x_post[(0, 1)], t.get(day(500 - 161)).unwrap());
    }

    #[test]
    fn empty_design() {
        let t = series(|i| i as f64, 200);
        let cfg = ControlConfig { lag_specs: vec![], ..ControlConfig::default() };
        let d = build_design(&t, &BTreeMap::new(), &event_at(150), &cfg, 0.0).unwrap();
        assert_eq!(d.x_pre.ncols(), 0);
        let c = synthesize_control(&d, &quick(), 200, 1).unwrap();
        assert_eq!(c.mean.len(), 7);
        // a noiseless ramp extrapolates
        for (k, m) in c.mean.iter().enumerate() {
            assert!((m - (150 + k) as f64).abs() < 1e-3, "{k}: {m}");
        }
    }

    #[test]
    fn yearly_sine_lag_correlates() {
        let t = series(|i| 100.0 + 20.0 * (2.0 * std::f64::consts::PI * i as f64 / 364.0).sin(), 700);
        let d = build_design(&t, &BTreeMap::new(), &event_at(600), &ControlConfig::default(), 0.0).unwrap();
        let a: Vec<f64> = d.treated_pre.values().to_vec();
        let b: Vec<f64> = d.x_pre.column(0).iter().copied().collect();
        assert!(correlation(&a, &b) > 0.99);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn fallback_is_used_only_when_needed() {
        let t = series(|i| i as f64, 900);
        let cfg = ControlConfig::default();
        let early = build_design(&t, &BTreeMap::new(), &event_at(200), &cfg, 0.0).unwrap();
        assert_eq!(
            early.covariates[0],
            Covariate::Lag { requested: 365, used: -365, used_fallback: true }
        );
        assert_eq!(
            early.covariates[1],
            Covariate::Lag { requested: 161, used: -35, used_fallback: true }
        );
        let late = build_design(&t, &BTreeMap::new(), &event_at(500), &cfg, 0.0).unwrap();
        assert!(late.covariates.iter().all(|c| matches!(c, Covariate::Lag { used_fallback: false, .. })));
        assert_eq!(late.covariate_labels(), ["lag:365", "lag:161"]);
    }

    #[test]
    fn unavailable_windows() {
        let t = series(|i| i as f64, 300);
        let err = build_design(&t, &BTreeMap::new(), &event_at(250), &ControlConfig::default(), 0.0).unwrap_err();
        assert!(matches!(err, Error::DataAvailability(ref m) if m.contains("lag 365")), "{err}");
        let cfg = ControlConfig { lag_specs: vec![], exogenous_ids: vec!["news".into()], ..ControlConfig::default() };
        let mut exo = BTreeMap::new();
        exo.insert("news".to_string(), series(|_| 1.0, 252));
        assert!(matches!(build_design(&t, &exo, &event_at(250), &cfg, 0.0), Err(Error::Range(_))));
        assert!(matches!(build_design(&t, &BTreeMap::new(), &event_at(250), &cfg, 0.0), Err(Error::DataAvailability(_))));
        assert!(matches!(build_design(&t, &BTreeMap::new(), &event_at(50), &cfg, 0.0), Err(Error::DataAvailability(_))));
    }

    #[test]
    fn config_validation() {
        assert!(ControlConfig { pre_days: 27, ..ControlConfig::default() }.validate().is_err());
        assert!(ControlConfig { post_days: 0, ..ControlConfig::default() }.validate().is_err());
        assert!(ControlConfig { lag_specs: vec![LagSpec::new(84, -365)], ..ControlConfig::default() }.validate().is_err());
        assert!(ControlConfig { lag_specs: vec![LagSpec::new(365, 0)], ..ControlConfig::default() }.validate().is_err());
        assert!(ControlConfig::default().validate().is_ok());
    }

    #[test]
    fn exact_linear_combination_is_reproduced() {
        let a = series(|i| 50.0 + 10.0 * ((i * 37 % 11) as f64), 700);
        let b = series(|i| 80.0 + 5.0 * ((i * 13 % 7) as f64), 700);
        let t = series(|i| 3.0 + 2.0 * a.values()[i as usize] - 0.5 * b.values()[i as usize], 700);
        let mut exo = BTreeMap::new();
        exo.insert("a".to_string(), a);
        exo.insert("b".to_string(), b);
        let cfg = ControlConfig { lag_specs: vec![], exogenous_ids: vec!["a".into(), "b".into()], ..ControlConfig::default() };
        let d = build_design(&t, &exo, &event_at(600), &cfg, 0.0).unwrap();
        let c = synthesize_control(&d, &quick(), 200, 7).unwrap();
        for k in 0..7 {
            let truth = t.get(day(600 + k)).unwrap();
            assert!((c.mean[k as usize] - truth).abs() <= 0.01 * truth.abs(), "{k}: {} vs {truth}", c.mean[k as usize]);
        }
    }

    #[test]
    fn shift_moves_mean_by_c() {
        let t = series(|i| 20.0 + ((i * 7919) % 13) as f64 + 0.05 * i as f64, 700);
        let cfg = ControlConfig::default();
        let d0 = build_design(&t, &BTreeMap::new(), &event_at(600), &cfg, 0.0).unwrap();
        let d1 = build_design(&t, &BTreeMap::new(), &event_at(600), &cfg, 1000.0).unwrap();
        let c0 = synthesize_control(&d0, &quick(), 200, 3).unwrap();
        let c1 = synthesize_control(&d1, &quick(), 200, 3).unwrap();
        for (m0, m1) in c0.mean.iter().zip(&c1.mean) {
            assert!(((m1 - m0) - 1000.0).abs() <= 1e-3 * m0.abs().max(1.0), "{m0} {m1}");
        }
    }

    #[test]
    fn constant_training_is_degenerate_but_valid() {
        let t = series(|_| 5.0, 200);
        let cfg = ControlConfig { lag_specs: vec![], ..ControlConfig::default() };
        let d = build_design(&t, &BTreeMap::new(), &event_at(150), &cfg, 0.0).unwrap();
        let c = synthesize_control(&d, &quick(), 200, 1).unwrap();
        assert!(c.degenerate);
        for m in &c.mean {
            assert!((m - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_covariate_is_dropped() {
        let t = series(|i| 10.0 + (i % 3) as f64, 700);
        let mut exo = BTreeMap::new();
        exo.insert("flat".to_string(), series(|_| 4.0, 700));
        let cfg = ControlConfig { exogenous_ids: vec!["flat".into()], ..ControlConfig::default() };
        let d = build_design(&t, &exo, &event_at(600), &cfg, 0.0).unwrap();
        let c = synthesize_control(&d, &quick(), 200, 1).unwrap();
        assert_eq!(c.dropped, ["exo:flat"]);
    }

    #[test]
    fn deterministic_given_seed() {
        let t = series(|i| 30.0 + ((i * 31) % 17) as f64, 700);
        let d = build_design(&t, &BTreeMap::new(), &event_at(600), &ControlConfig::default(), 1000.0).unwrap();
        let a = synthesize_control(&d, &quick(), 300, 11).unwrap();
        let b = synthesize_control(&d, &quick(), 300, 11).unwrap();
        assert_eq!(a, b);
        let c = synthesize_control(&d, &quick(), 300, 12).unwrap();
        assert_ne!(a.draws, c.draws);
    }
}
