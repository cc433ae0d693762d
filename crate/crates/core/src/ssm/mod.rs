//! Structural (unobserved-components) state-space model.
//!
//! The state vector is laid out as
//!
//! ```text
//! [ level | slope? | seasonal s_t .. s_{t-5}? | beta_1 .. beta_k ]
//! ```
//!
//! with observation `y_t = level_t + s_t + x_t' beta + eps_t`. The level is a
//! random walk (plus slope when the trend is enabled), the slope is a random
//! walk, the weekly seasonal is the usual sum-to-zero dummy form, and the
//! regression coefficients are constant states.

mod filter;
mod fit;
mod forecast;
mod optim;
pub mod oracle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{kalman_filter, kalman_filter_steps, FilterResult, FilterStep};
pub use fit::{fit_mle, FitConfig, FittedModel, StartOutcome};
pub use forecast::{forecast, ForecastDraws, MIN_DRAWS};
pub use oracle::loglik_bruteforce;

/// Number of free seasonal states for a period-7 sum-to-zero seasonal.
pub const SEASONAL_STATES: usize = 6;

/// Default multiplier for the approximate diffuse prior.
pub const DEFAULT_DIFFUSE_KAPPA: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub has_trend: bool,
    pub has_weekly_seasonal: bool,
    pub n_covariates: usize,
    /// Initial state covariance is `diffuse_kappa * var(y) * I`.
    pub diffuse_kappa: f64,
}

impl ModelSpec {
    pub fn local_level() -> Self {
        ModelSpec {
            has_trend: false,
            has_weekly_seasonal: false,
            n_covariates: 0,
            diffuse_kappa: DEFAULT_DIFFUSE_KAPPA,
        }
    }

    pub fn with_trend(mut self, on: bool) -> Self {
        self.has_trend = on;
        self
    }

    pub fn with_seasonal(mut self, on: bool) -> Self {
        self.has_weekly_seasonal = on;
        self
    }

    pub fn with_covariates(mut self, k: usize) -> Self {
        self.n_covariates = k;
        self
    }

    /// The level component is always present.
    pub fn has_level(&self) -> bool {
        true
    }

    pub fn state_dim(&self) -> usize {
        1 + usize::from(self.has_trend)
            + if self.has_weekly_seasonal { SEASONAL_STATES } else { 0 }
            + self.n_covariates
    }

    pub(crate) fn seasonal_offset(&self) -> usize {
        1 + usize::from(self.has_trend)
    }

    pub(crate) fn covariate_offset(&self) -> usize {
        self.seasonal_offset() + if self.has_weekly_seasonal { SEASONAL_STATES } else { 0 }
    }

    /// Number of variance parameters estimated by [`fit_mle`].
    pub fn n_params(&self) -> usize {
        2 + usize::from(self.has_trend) + usize::from(self.has_weekly_seasonal)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.diffuse_kappa.is_finite() && self.diffuse_kappa > 0.0) {
            return Err(Error::Validation(format!(
                "diffuse_kappa must be finite and positive, got {}",
                self.diffuse_kappa
            )));
        }
        Ok(())
    }
}

/// Model composition and optimizer settings, without the covariate count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub trend: bool,
    pub weekly_seasonal: bool,
    pub n_starts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub diffuse_kappa: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        ModelConfig {
            trend: true,
            weekly_seasonal: false,
            n_starts: fit.n_starts,
            tol: fit.tol,
            max_iter: fit.max_iter,
            diffuse_kappa: DEFAULT_DIFFUSE_KAPPA,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, n_covariates: usize) -> ModelSpec {
        ModelSpec {
            diffuse_kappa: self.diffuse_kappa,
            ..ModelSpec::local_level()
        }
        .with_trend(self.trend)
        .with_seasonal(self.weekly_seasonal)
        .with_covariates(n_covariates)
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            n_starts: self.n_starts,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec(0).validate()?;
        if self.n_starts == 0 || self.max_iter == 0 || !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Validation("ssm.n_starts, ssm.max_iter and ssm.tol must be positive".into()));
        }
        Ok(())
    }
}

/// Disturbance variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParams {
    pub obs_var: f64,
    pub level_var: f64,
    pub trend_var: Option<f64>,
    pub seasonal_var: Option<f64>,
}

impl VarianceParams {
    pub fn local_level(obs_var: f64, level_var: f64) -> Self {
        VarianceParams {
            obs_var,
            level_var,
            trend_var: None,
            seasonal_var: None,
        }
    }

    /// Fills in zero trend/seasonal variances where `spec` needs them.
    pub fn for_spec(spec: &ModelSpec, obs_var: f64, level_var: f64) -> Self {
        VarianceParams {
            obs_var,
            level_var,
            trend_var: spec.has_trend.then_some(0.0),
            seasonal_var: spec.has_weekly_seasonal.then_some(0.0),
        }
    }

    pub(crate) fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if spec.has_trend != self.trend_var.is_some() {
            return Err(Error::Validation("trend_var must be present iff the trend is enabled".into()));
        }
        if spec.has_weekly_seasonal != self.seasonal_var.is_some() {
            return Err(Error::Validation(
                "seasonal_var must be present iff the weekly seasonal is enabled".into(),
            ));
        }
        if !(self.obs_var.is_finite() && self.obs_var > 0.0) {
            return Err(Error::Validation(format!("obs_var must be positive, got {}", self.obs_var)));
        }
        for v in [Some(self.level_var), self.trend_var, self.seasonal_var].into_iter().flatten() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("state variance must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Log-space parameter vector in the order obs, level, trend?, seasonal?.
    #[cfg(test)]
    pub(crate) fn to_log(self) -> Vec<f64> {
        [Some(self.obs_var), Some(self.level_var), self.trend_var, self.seasonal_var]
            .into_iter()
            .flatten()
            .map(f64::ln)
            .collect()
    }

    pub(crate) fn from_log(spec: &ModelSpec, theta: &[f64]) -> Self {
        let mut it = theta.iter().map(|t| t.exp());
        let obs_var = it.next().unwrap_or(1.0);
        let level_var = it.next().unwrap_or(0.0);
        let trend_var = if spec.has_trend { it.next() } else { None };
        let seasonal_var = if spec.has_weekly_seasonal { it.next() } else { None };
        VarianceParams {
            obs_var,
            level_var,
            trend_var,
            seasonal_var,
        }
    }

    /// Diagonal of the state disturbance covariance.
    pub(crate) fn state_noise_diag(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut q = vec![0.0; spec.state_dim()];
        q[0] = self.level_var;
        if let Some(v) = self.trend_var {
            q[1] = v;
        }
        if let Some(v) = self.seasonal_var {
            q[spec.seasonal_offset()] = v;
        }
        q
    }
}

/// Dense transition matrix.
pub fn transition_matrix(spec: &ModelSpec) -> DMatrix<f64> {
    let n = spec.state_dim();
    let mut t = DMatrix::zeros(n, n);
    t[(0, 0)] = 1.0;
    if spec.has_trend {
        t[(0, 1)] = 1.0;
        t[(1, 1)] = 1.0;
    }
    if spec.has_weekly_seasonal {
        let o = spec.seasonal_offset();
        for j in 0..SEASONAL_STATES {
            t[(o, o + j)] = -1.0;
        }
        for i in 1..SEASONAL_STATES {
            t[(o + i, o + i - 1)] = 1.0;
        }
    }
    for j in spec.covariate_offset()..n {
        t[(j, j)] = 1.0;
    }
    t
}

/// Applies the transition to `x` in place (`x <- T x`).
pub(crate) fn apply_transition<R: filter::Real>(spec: &ModelSpec, x: &mut [R]) {
    if spec.has_trend {
        x[0] = x[0] + x[1];
    }
    if spec.has_weekly_seasonal {
        let o = spec.seasonal_offset();
        let sum = x[o..o + SEASONAL_STATES].iter().fold(R::from(0.0), |acc, v| acc + *v);
        x.copy_within(o..o + SEASONAL_STATES - 1, o + 1);
        x[o] = -sum;
    }
}

/// Observation loading for day `t`.
pub(crate) fn fill_loading(spec: &ModelSpec, x: &DMatrix<f64>, t: usize, z: &mut [f64]) {
    z.iter_mut().for_each(|v| *v = 0.0);
    z[0] = 1.0;
    if spec.has_weekly_seasonal {
        z[spec.seasonal_offset()] = 1.0;
    }
    let o = spec.covariate_offset();
    for j in 0..spec.n_covariates {
        z[o + j] = x[(t, j)];
    }
}

/// Sample variance, or 0 for fewer than two points.
pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Diffuse prior variance `kappa * var(y)`, using `kappa` alone when `y` is constant.
pub(crate) fn diffuse_variance(spec: &ModelSpec, y: &[f64]) -> f64 {
    let v = sample_variance(y);
    spec.diffuse_kappa * if v > 0.0 { v } else { 1.0 }
}

pub(crate) fn check_inputs(spec: &ModelSpec, y: &[f64], x: &DMatrix<f64>) -> Result<()> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!(
            "covariate rows {} != observations {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() != spec.n_covariates {
        return Err(Error::Validation(format!(
            "covariate columns {} != spec.n_covariates {}",
            x.ncols(),
            spec.n_covariates
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite observation or covariate".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_dim_counts_components() {
        assert_eq!(ModelSpec::local_level().state_dim(), 1);
        assert_eq!(ModelSpec::local_level().with_trend(true).state_dim(), 2);
        let full = ModelSpec::local_level().with_trend(true).with_seasonal(true).with_covariates(3);
        assert_eq!(full.state_dim(), 1 + 1 + 6 + 3);
        assert_eq!(transition_matrix(&full).nrows(), full.state_dim());
        assert_eq!(full.n_params(), 4);
    }

    #[test]
    fn in_place_transition_matches_matrix() {
        let spec = ModelSpec::local_level().with_trend(true).with_seasonal(true).with_covariates(2);
        let n = spec.state_dim();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) * 0.7 - 2.0).collect();
        let mut y = x.clone();
        apply_transition(&spec, &mut y);
        let expect = transition_matrix(&spec) * nalgebra::DVector::from_vec(x);
        for i in 0..n {
            assert!((y[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn seasonal_sums_to_zero_over_period() {
        let spec = ModelSpec::local_level().with_seasonal(true);
        let mut x = vec![0.0, 3.0, -1.0, 2.0, 0.5, -4.0, 1.0];
        let mut seen = Vec::new();
        for _ in 0..7 {
            seen.push(x[1]);
            apply_transition(&spec, &mut x);
        }
        assert!(seen.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn params_log_round_trip() {
        let spec = ModelSpec::local_level().with_trend(true);
        let p = VarianceParams {
            obs_var: 2.0,
            level_var: 0.3,
            trend_var: Some(0.01),
            seasonal_var: None,
        };
        let back = VarianceParams::from_log(&spec, &p.to_log());
        assert!((back.obs_var - 2.0).abs() < 1e-12);
        assert!((back.trend_var.unwrap() - 0.01).abs() < 1e-14);
        assert!(p.validate(&spec).is_ok());
        assert!(VarianceParams::local_level(1.0, 0.1).validate(&spec).is_err());
    }
}
