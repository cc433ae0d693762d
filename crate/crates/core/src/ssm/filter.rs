use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use super::{apply_transition, check_inputs, diffuse_variance, fill_loading, ModelSpec, VarianceParams};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Arithmetic the filter recursion needs; implemented for `f64` and for
/// double-double, which is used while the diffuse prior is being absorbed.
pub(crate) trait Real:
    Copy
    + From<f64>
    + Into<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn ratio(self, d: Self) -> Self;
}

impl Real for f64 {
    fn ratio(self, d: Self) -> Self {
        self / d
    }
}

impl Real for TwoFloat {
    /// Division through a Newton-refined reciprocal; the crate's own `/`
    /// loses the low word on some inputs.
    fn ratio(self, d: Self) -> Self {
        let one = TwoFloat::from(1.0);
        let mut r = TwoFloat::from(1.0 / d.hi());
        for _ in 0..2 {
            r = r + r * (one - d * r);
        }
        self * r
    }
}

/// Filter state carried between observations.
struct State<R> {
    a: Vec<R>,
    p: Vec<R>,
    n: usize,
}

impl<R: Real> State<R> {
    fn convert<S: Real>(&self) -> State<S> {
        State {
            a: self.a.iter().map(|v| S::from((*v).into())).collect(),
            p: self.p.iter().map(|v| S::from((*v).into())).collect(),
            n: self.n,
        }
    }

    /// One-step prediction `(z'a, z'Pz + h)` and the vector `Pz`.
    fn predict_obs(&self, z: &[f64], h: f64, pz: &mut [R]) -> (R, R) {
        let n = self.n;
        let zero = R::from(0.0);
        for i in 0..n {
            let row = &self.p[i * n..(i + 1) * n];
            pz[i] = row.iter().zip(z).fold(zero, |acc, (p, zj)| acc + *p * R::from(*zj));
        }
        let f = z.iter().zip(pz.iter()).fold(R::from(h), |acc, (zi, v)| acc + R::from(*zi) * *v);
        let pred = z.iter().zip(&self.a).fold(zero, |acc, (zi, ai)| acc + R::from(*zi) * *ai);
        (pred, f)
    }

    fn update(&mut self, pz: &[R], v: R, f: R) {
        let n = self.n;
        let gain = v.ratio(f);
        let k: Vec<R> = pz.iter().map(|v| v.ratio(f)).collect();
        for i in 0..n {
            self.a[i] = self.a[i] + pz[i] * gain;
        }
        for i in 0..n {
            for j in i..n {
                let upd = self.p[i * n + j] - k[i] * pz[j];
                self.p[i * n + j] = upd;
                self.p[j * n + i] = upd;
            }
        }
    }

    /// `a <- T a`, `P <- T P T' + Q`.
    fn predict_state(&mut self, spec: &ModelSpec, q: &[f64]) {
        let n = self.n;
        apply_transition(spec, &mut self.a);
        propagate_cov(spec, &mut self.p, n);
        for i in 0..n {
            self.p[i * n + i] = self.p[i * n + i] + R::from(q[i]);
        }
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(self.n, self.n, self.p.iter().map(|v| (*v).into()))
    }
}

/// Output of one Kalman filter pass.
///
/// `final_state_mean` / `final_state_cov` are the one-step-ahead prediction
/// for the day after the last observation, which is where forecasting starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub loglik: f64,
    pub one_step_means: Vec<f64>,
    pub one_step_vars: Vec<f64>,
    pub final_state_mean: Vec<f64>,
    pub final_state_cov: DMatrix<f64>,
    /// Number of leading terms excluded from `loglik`.
    pub burn_in: usize,
}

/// Predicted and updated state covariance for one observation.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub predicted_cov: DMatrix<f64>,
    pub updated_cov: DMatrix<f64>,
}

/// Runs the filter and returns the prediction-error-decomposition
/// log-likelihood, skipping the first `state_dim` terms.
pub fn kalman_filter(
    spec: &ModelSpec,
    params: &VarianceParams,
    y: &[f64],
    x: &DMatrix<f64>,
) -> Result<FilterResult> {
    run(spec, params, y, x, None)
}

/// Same as [`kalman_filter`] but also records every predict/update covariance.
pub fn kalman_filter_steps(
    spec: &ModelSpec,
    params: &VarianceParams,
    y: &[f64],
    x: &DMatrix<f64>,
) -> Result<(FilterResult, Vec<FilterStep>)> {
    let mut steps = Vec::with_capacity(y.len());
    let res = run(spec, params, y, x, Some(&mut steps))?;
    Ok((res, steps))
}

/// Log-likelihood only; the optimizer's hot path.
pub(crate) fn loglik_only(
    spec: &ModelSpec,
    params: &VarianceParams,
    y: &[f64],
    x: &DMatrix<f64>,
) -> Result<f64> {
    run(spec, params, y, x, None).map(|r| r.loglik)
}

fn run(
    spec: &ModelSpec,
    params: &VarianceParams,
    y: &[f64],
    x: &DMatrix<f64>,
    mut trace: Option<&mut Vec<FilterStep>>,
) -> Result<FilterResult> {
    check_inputs(spec, y, x)?;
    params.validate(spec)?;

    let n = spec.state_dim();
    let burn_in = n;
    let q = params.state_noise_diag(spec);
    let h = params.obs_var;

    let kappa = diffuse_variance(spec, y);
    let mut wide = State {
        a: vec![TwoFloat::from(0.0); n],
        p: vec![TwoFloat::from(0.0); n * n],
        n,
    };
    for i in 0..n {
        wide.p[i * n + i] = TwoFloat::from(kappa);
    }
    let mut z = vec![0.0; n];
    let mut pz_wide = vec![TwoFloat::from(0.0); n];
    let mut pz = vec![0.0; n];

    let mut loglik = 0.0;
    let mut means = Vec::with_capacity(y.len());
    let mut vars = Vec::with_capacity(y.len());

    // The burn-in steps resolve the diffuse prior, where covariance entries of
    // order kappa cancel down to order one, so they run in double-double.
    let wide_steps = burn_in.min(y.len());
    for (t, &obs) in y.iter().enumerate().take(wide_steps) {
        fill_loading(spec, x, t, &mut z);
        let (pred, f) = wide.predict_obs(&z, h, &mut pz_wide);
        let f64_f: f64 = f.into();
        check_variance(f64_f, t)?;
        means.push(pred.into());
        vars.push(f64_f);
        let predicted_cov = trace.as_ref().map(|_| wide.cov_matrix());
        wide.update(&pz_wide, TwoFloat::from(obs) - pred, f);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(FilterStep {
                predicted_cov: predicted_cov.unwrap_or_else(|| DMatrix::zeros(n, n)),
                updated_cov: wide.cov_matrix(),
            });
        }
        wide.predict_state(spec, &q);
    }

    let mut st: State<f64> = wide.convert();
    for (t, &obs) in y.iter().enumerate().skip(wide_steps) {
        fill_loading(spec, x, t, &mut z);
        let (pred, f) = st.predict_obs(&z, h, &mut pz);
        check_variance(f, t)?;
        let v = obs - pred;
        means.push(pred);
        vars.push(f);
        loglik -= 0.5 * (LN_2PI + f.ln() + v * v / f);

        let predicted_cov = trace.as_ref().map(|_| st.cov_matrix());
        st.update(&pz, v, f);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(FilterStep {
                predicted_cov: predicted_cov.unwrap_or_else(|| DMatrix::zeros(n, n)),
                updated_cov: st.cov_matrix(),
            });
        }
        st.predict_state(spec, &q);
    }

    Ok(FilterResult {
        loglik,
        one_step_means: means,
        one_step_vars: vars,
        final_state_cov: st.cov_matrix(),
        final_state_mean: st.a,
        burn_in,
    })
}

fn check_variance(f: f64, t: usize) -> Result<()> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Numeric(format!(
            "one-step variance {f} at t={t} is not positive"
        )));
    }
    Ok(())
}

/// `P <- T P T'` using the in-place transition on columns then rows.
pub(crate) fn propagate_cov<R: Real>(spec: &ModelSpec, p: &mut [R], n: usize) {
    let mut col = vec![R::from(0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = p[i * n + j];
        }
        apply_transition(spec, &mut col);
        for i in 0..n {
            p[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        apply_transition(spec, &mut p[i * n..(i + 1) * n]);
    }
    // keep exact symmetry
    for i in 0..n {
        for j in i + 1..n {
            let s = R::from(0.5) * (p[i * n + j] + p[j * n + i]);
            p[i * n + j] = s;
            p[j * n + i] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn empty(t: usize) -> DMatrix<f64> {
        DMatrix::zeros(t, 0)
    }

    #[test]
    fn noiseless_constant_state() {
        let spec = ModelSpec::local_level();
        let params = VarianceParams::local_level(1.0, 0.0);
        let y = [0.0; 4];
        let r = kalman_filter(&spec, &params, &y, &empty(4)).unwrap();
        for m in &r.one_step_means[1..] {
            assert!(m.abs() < 1e-12);
        }
        // after the first observation the level variance is ~1/t, so v_t -> 1
        let expected_vars = [1.0 + 1.0, 1.0 + 0.5, 1.0 + 1.0 / 3.0];
        for (v, e) in r.one_step_vars[1..].iter().zip(expected_vars) {
            assert!((v - e).abs() < 1e-5, "{v} vs {e}");
        }
        let expect: f64 = expected_vars.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum();
        assert!((r.loglik - expect).abs() < 1e-5);
    }

    #[test]
    fn regression_coefficients_are_recovered() {
        let spec = ModelSpec::local_level().with_covariates(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 200;
        let mut x = DMatrix::zeros(t, 2);
        let mut y = Vec::with_capacity(t);
        for i in 0..t {
            let x1: f64 = rng.sample(StandardNormal);
            let x2: f64 = rng.sample(StandardNormal);
            x[(i, 0)] = x1;
            x[(i, 1)] = x2;
            let e: f64 = rng.sample(StandardNormal);
            y.push(3.0 + 2.0 * x1 - x2 + 0.01 * e);
        }
        let params = VarianceParams::local_level(1e-4, 0.0);
        let r = kalman_filter(&spec, &params, &y, &x).unwrap();
        let beta = &r.final_state_mean[1..];
        assert!((beta[0] - 2.0).abs() < 0.1, "{beta:?}");
        assert!((beta[1] + 1.0).abs() < 0.1, "{beta:?}");
        assert!((r.final_state_mean[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_dimensions_and_values() {
        let spec = ModelSpec::local_level().with_covariates(1);
        let p = VarianceParams::local_level(1.0, 0.1);
        assert!(matches!(
            kalman_filter(&spec, &p, &[1.0, 2.0], &DMatrix::zeros(2, 2)),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            kalman_filter(&spec, &p, &[1.0, f64::NAN], &DMatrix::zeros(2, 1)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn final_covariance_is_symmetric_psd() {
        let spec = ModelSpec::local_level().with_trend(true).with_seasonal(true).with_covariates(1);
        let params = VarianceParams {
            obs_var: 1.0,
            level_var: 0.2,
            trend_var: Some(0.01),
            seasonal_var: Some(0.05),
        };
        let t = 60;
        let x = DMatrix::from_fn(t, 1, |i, _| (i as f64 * 0.3).sin());
        let y: Vec<f64> = (0..t).map(|i| 10.0 + (i as f64 * 0.9).cos() * 3.0).collect();
        let r = kalman_filter(&spec, &params, &y, &x).unwrap();
        let p = &r.final_state_cov;
        assert!((p - p.transpose()).amax() < 1e-10);
        let eig = p.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|e| *e > -1e-9));
        assert!(r.one_step_vars.iter().all(|v| *v > 0.0));
    }
}
