use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{apply_transition, fill_loading, FittedModel};
use crate::error::{Error, Result};

pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDraws {
    pub horizon: usize,
    pub mean_path: Vec<f64>,
    /// `n_draws x horizon`.
    pub draws: DMatrix<f64>,
    pub seed: u64,
}

/// Multi-step forecast continuing from the model's final predicted state.
///
/// Each draw samples the starting state from its predictive distribution and
/// then propagates state disturbances and observation noise.
pub fn forecast(
    model: &FittedModel,
    x_post: &DMatrix<f64>,
    horizon: usize,
    n_draws: usize,
    seed: u64,
) -> Result<ForecastDraws> {
    let spec = &model.spec;
    if x_post.nrows() != horizon || x_post.ncols() != spec.n_covariates {
        return Err(Error::Validation(format!(
            "x_post is {}x{}, expected {horizon}x{}",
            x_post.nrows(),
            x_post.ncols(),
            spec.n_covariates
        )));
    }
    if n_draws < MIN_DRAWS {
        return Err(Error::Validation(format!("n_draws must be at least {MIN_DRAWS}, got {n_draws}")));
    }
    if x_post.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite covariate in forecast window".into()));
    }
    let n = spec.state_dim();
    let mut z = vec![0.0; n];

    let mut mean_path = Vec::with_capacity(horizon);
    let mut a = model.filter.final_state_mean.clone();
    for h in 0..horizon {
        fill_loading(spec, x_post, h, &mut z);
        mean_path.push(dot(&z, &a));
        apply_transition(spec, &mut a);
    }

    let root = psd_sqrt(&model.filter.final_state_cov);
    let q_sd: Vec<f64> = model
        .params
        .state_noise_diag(spec)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let obs_sd = model.params.obs_var.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = DMatrix::zeros(n_draws, horizon);
    let mut eps = vec![0.0; n];
    let mut state = vec![0.0; n];
    for d in 0..n_draws {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..n {
            state[i] = model.filter.final_state_mean[i]
                + (0..n).map(|j| root[(i, j)] * eps[j]).sum::<f64>();
        }
        for h in 0..horizon {
            fill_loading(spec, x_post, h, &mut z);
            let noise: f64 = rng.sample(StandardNormal);
            draws[(d, h)] = dot(&z, &state) + obs_sd * noise;
            apply_transition(spec, &mut state);
            for (s, sd) in state.iter_mut().zip(&q_sd) {
                if *sd > 0.0 {
                    let w: f64 = rng.sample(StandardNormal);
                    *s += sd * w;
                }
            }
        }
    }

    Ok(ForecastDraws {
        horizon,
        mean_path,
        draws,
        seed,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric square root factor `L` with `L L' = P`, clamping tiny negative
/// eigenvalues from round-off to zero.
fn psd_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}
