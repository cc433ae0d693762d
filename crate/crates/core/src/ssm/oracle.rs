//! Dense joint-Gaussian likelihood, used as an independent check on the filter.
//!
//! Writes the observations as `y = G a0 + w`, where `a0 ~ N(0, kappa I)` is the
//! initial state and `w` collects the state disturbances and observation
//! noise, with covariance `S_w` built by explicit propagation. The joint
//! covariance `S_w + kappa G G'` is evaluated through the determinant lemma and
//! Woodbury identity so the `n ln kappa` terms cancel exactly in
//! `log p(y_{d+1..T} | y_{1..d}) = log p(y_{1..T}) - log p(y_{1..d})`,
//! which conditions on the same burn-in observations the filter skips.

use nalgebra::{DMatrix, DVector};

use super::{check_inputs, diffuse_variance, transition_matrix, ModelSpec, VarianceParams};
use crate::error::{Error, Result};

pub const MAX_ORACLE_LEN: usize = 12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn loglik_bruteforce(
    spec: &ModelSpec,
    params: &VarianceParams,
    y: &[f64],
    x: &DMatrix<f64>,
) -> Result<f64> {
    check_inputs(spec, y, x)?;
    params.validate(spec)?;
    let t_len = y.len();
    if t_len > MAX_ORACLE_LEN {
        return Err(Error::Validation(format!(
            "oracle supports at most {MAX_ORACLE_LEN} observations, got {t_len}"
        )));
    }
    let n = spec.state_dim();
    if t_len <= n {
        return Ok(0.0);
    }

    let tm = transition_matrix(spec);
    let q = DMatrix::from_diagonal(&DVector::from_vec(params.state_noise_diag(spec)));

    // powers of T
    let mut powers = vec![DMatrix::identity(n, n)];
    for k in 1..t_len {
        powers.push(&tm * &powers[k - 1]);
    }
    let loadings: Vec<DVector<f64>> = (0..t_len).map(|t| loading(spec, x, t)).collect();

    // G row t = Z_t T^t
    let mut g = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        let row = powers[t].transpose() * &loadings[t];
        g.set_row(t, &row.transpose());
    }

    // D_t = Cov of the accumulated disturbance in the state at time t;
    // D_0 = 0, D_{t+1} = T D_t T' + Q. Cross-covariance for t >= s is T^{t-s} D_s.
    let mut d = vec![DMatrix::zeros(n, n)];
    for t in 1..t_len {
        let next = &tm * &d[t - 1] * tm.transpose() + &q;
        d.push(next);
    }
    let mut sw = DMatrix::zeros(t_len, t_len);
    for t in 0..t_len {
        for s in 0..=t {
            let cov = loadings[t].dot(&(&powers[t - s] * &d[s] * &loadings[s]));
            sw[(t, s)] = cov;
            sw[(s, t)] = cov;
        }
        sw[(t, t)] += params.obs_var;
    }

    let inv_kappa = 1.0 / diffuse_variance(spec, y);
    let full = reduced_logpdf(&sw, &g, y, inv_kappa)?;
    let head = reduced_logpdf(
        &sw.view((0, 0), (n, n)).into_owned(),
        &g.rows(0, n).into_owned(),
        &y[..n],
        inv_kappa,
    )?;
    Ok(full - head)
}

fn loading(spec: &ModelSpec, x: &DMatrix<f64>, t: usize) -> DVector<f64> {
    let mut z = DVector::zeros(spec.state_dim());
    z[0] = 1.0;
    if spec.has_weekly_seasonal {
        z[spec.seasonal_offset()] = 1.0;
    }
    for j in 0..spec.n_covariates {
        z[spec.covariate_offset() + j] = x[(t, j)];
    }
    z
}

/// `log N(y; 0, S_w + kappa G G') + (n/2) ln kappa`.
fn reduced_logpdf(sw: &DMatrix<f64>, g: &DMatrix<f64>, y: &[f64], inv_kappa: f64) -> Result<f64> {
    let m = y.len();
    let n = g.ncols();
    let lw = sw
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("oracle noise covariance is not positive definite".into()))?
        .unpack();
    let a = lw
        .solve_lower_triangular(g)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let r = lw
        .solve_lower_triangular(&DVector::from_column_slice(y))
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let mut inner = a.transpose() * &a;
    for i in 0..n {
        inner[(i, i)] += inv_kappa;
    }
    let li = inner
        .cholesky()
        .ok_or_else(|| Error::Numeric("oracle information matrix is not positive definite".into()))?
        .unpack();
    let c = li
        .solve_lower_triangular(&(a.transpose() * &r))
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let logdet = 2.0 * lw.diagonal().iter().map(|v| v.ln()).sum::<f64>()
        + 2.0 * li.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (m as f64 * LN_2PI + logdet + r.norm_squared() - c.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::kalman_filter;

    #[test]
    fn local_level_t6_matches_filter() {
        let spec = ModelSpec::local_level();
        let params = VarianceParams::local_level(1.0, 0.5);
        let y = [1.2, 0.7, 2.5, 1.9, 3.1, 2.2];
        let x = DMatrix::zeros(6, 0);
        let brute = loglik_bruteforce(&spec, &params, &y, &x).unwrap();
        let kf = kalman_filter(&spec, &params, &y, &x).unwrap().loglik;
        assert!((brute - kf).abs() <= 1e-8 * kf.abs().max(1.0), "{brute} vs {kf}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(256))]
        #[test]
        fn random_specs_match_filter(
            trend in proptest::bool::ANY,
            seasonal in proptest::bool::ANY,
            k in 0usize..3,
            t in 1usize..=8,
            logs in proptest::collection::vec(-3.0f64..2.0, 4),
            ys in proptest::collection::vec(-5.0f64..5.0, 8),
            xs in proptest::collection::vec(-2.0f64..2.0, 16),
        ) {
            let spec = ModelSpec::local_level().with_trend(trend).with_seasonal(seasonal).with_covariates(k);
            let params = VarianceParams {
                obs_var: logs[0].exp(),
                level_var: logs[1].exp(),
                trend_var: trend.then(|| logs[2].exp()),
                seasonal_var: seasonal.then(|| logs[3].exp()),
            };
            let y = &ys[..t];
            let x = DMatrix::from_fn(t, k, |i, j| xs[i * 2 + j]);
            let brute = loglik_bruteforce(&spec, &params, y, &x).unwrap();
            let kf = kalman_filter(&spec, &params, y, &x).unwrap().loglik;
            proptest::prop_assert!((brute - kf).abs() <= 1e-8 * kf.abs().max(1.0), "{} vs {}", brute, kf);
        }
    }

    #[test]
    fn too_long_is_size_error() {
        let spec = ModelSpec::local_level();
        let params = VarianceParams::local_level(1.0, 0.5);
        let y = vec![0.0; 13];
        assert!(loglik_bruteforce(&spec, &params, &y, &DMatrix::zeros(13, 0)).is_err());
    }
}
