use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filter::loglik_only;
use super::optim::NelderMead;
use super::{check_inputs, kalman_filter, sample_variance, FilterResult, ModelSpec, VarianceParams};
use crate::error::{Error, Result};

/// Variances are searched within `[1e-10, 1e4] * var(y)`.
const LOG_LOWER: f64 = -23.025_850_929_940_457;
const LOG_UPPER: f64 = 9.210_340_371_976_184;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_starts: usize,
    /// Convergence tolerance on the log-likelihood.
    pub tol: f64,
    /// Iteration budget per start.
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_starts: 3,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Diagnostics for one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    /// Common multiplier of `var(y)` used for every initial variance.
    pub multiplier: f64,
    pub loglik: Option<f64>,
    pub iterations: usize,
    /// Best log-likelihood over this and all earlier starts.
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub params: VarianceParams,
    pub loglik: f64,
    pub filter: FilterResult,
    pub n_obs: usize,
    pub starts: Vec<StartOutcome>,
}

impl FittedModel {
    /// Wraps fixed parameters without optimizing.
    pub fn from_params(
        spec: ModelSpec,
        params: VarianceParams,
        y: &[f64],
        x: &DMatrix<f64>,
    ) -> Result<Self> {
        let filter = kalman_filter(&spec, &params, y, x)?;
        Ok(FittedModel {
            spec,
            params,
            loglik: filter.loglik,
            filter,
            n_obs: y.len(),
            starts: Vec::new(),
        })
    }
}

/// Start multipliers spread geometrically over `[1e-2, 1e2]`.
fn start_multipliers(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Maximum-likelihood estimate of the disturbance variances.
pub fn fit_mle(spec: &ModelSpec, y: &[f64], x: &DMatrix<f64>, cfg: &FitConfig) -> Result<FittedModel> {
    check_inputs(spec, y, x)?;
    let min_len = spec.state_dim() + 5;
    if y.len() < min_len {
        return Err(Error::InsufficientData(format!(
            "need at least {min_len} observations for state dimension {}, got {}",
            spec.state_dim(),
            y.len()
        )));
    }
    if cfg.n_starts == 0 || cfg.max_iter == 0 || !(cfg.tol > 0.0) {
        return Err(Error::Validation("fit config needs n_starts, max_iter and tol > 0".into()));
    }

    let var = sample_variance(y);
    let log_scale = if var > 0.0 { var.ln() } else { 0.0 };
    let k = spec.n_params();
    let nm = NelderMead {
        lower: vec![log_scale + LOG_LOWER; k],
        upper: vec![log_scale + LOG_UPPER; k],
        step: 1.0,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let objective = |theta: &[f64]| {
        let params = VarianceParams::from_log(spec, theta);
        match loglik_only(spec, &params, y, x) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut starts = Vec::with_capacity(cfg.n_starts);
    for m in start_multipliers(cfg.n_starts) {
        let x0 = vec![log_scale + m.ln(); k];
        let res = nm.minimize(&x0, objective);
        let ll = (-res.value).is_finite().then_some(-res.value);
        if let Some(ll) = ll {
            if best.as_ref().is_none_or(|(_, b)| ll > *b) {
                best = Some((res.x.clone(), ll));
            }
        }
        starts.push(StartOutcome {
            multiplier: m,
            loglik: ll,
            iterations: res.iterations,
            best_so_far: best.as_ref().map(|(_, b)| *b),
        });
    }

    let (theta, _) = best.ok_or_else(|| {
        Error::Fit(format!(
            "no start produced a finite log-likelihood (var(y) = {var}, n = {}, starts = {:?})",
            y.len(),
            starts
        ))
    })?;
    let params = VarianceParams::from_log(spec, &theta);
    let filter = kalman_filter(spec, &params, y, x)?;
    Ok(FittedModel {
        spec: *spec,
        params,
        loglik: filter.loglik,
        filter,
        n_obs: y.len(),
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate_local_level(seed: u64, t: usize, obs: f64, lvl: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = 0.0;
        (0..t)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                let n: f64 = rng.sample(StandardNormal);
                let y = level + obs.sqrt() * e;
                level += lvl.sqrt() * n;
                y
            })
            .collect()
    }

    #[test]
    fn start_grid() {
        assert_eq!(start_multipliers(3), vec![0.01, 1.0, 100.0]);
    }

    #[test]
    fn constant_input_hits_lower_bound() {
        let y = vec![5.0; 40];
        let x = DMatrix::zeros(40, 0);
        let m = fit_mle(&ModelSpec::local_level(), &y, &x, &FitConfig::default()).unwrap();
        assert!(m.params.level_var < 1e-6, "{:?}", m.params);
        for p in &m.filter.one_step_means[2..] {
            assert!((p - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_beats_true_parameters() {
        let y = simulate_local_level(3, 300, 1.0, 0.1);
        let x = DMatrix::zeros(y.len(), 0);
        let spec = ModelSpec::local_level();
        let m = fit_mle(&spec, &y, &x, &FitConfig::default()).unwrap();
        let truth = kalman_filter(&spec, &VarianceParams::local_level(1.0, 0.1), &y, &x).unwrap();
        assert!(m.loglik >= truth.loglik - 1e-6);
        let starts: Vec<f64> = m.starts.iter().filter_map(|s| s.best_so_far).collect();
        assert!(starts.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn deterministic() {
        let y = simulate_local_level(11, 120, 2.0, 0.5);
        let x = DMatrix::zeros(y.len(), 0);
        let spec = ModelSpec::local_level().with_trend(true);
        let a = fit_mle(&spec, &y, &x, &FitConfig::default()).unwrap();
        let b = fit_mle(&spec, &y, &x, &FitConfig::default()).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn too_short_is_rejected() {
        let spec = ModelSpec::local_level().with_covariates(3);
        let y = vec![1.0; 8];
        let err = fit_mle(&spec, &y, &DMatrix::zeros(8, 3), &FitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
