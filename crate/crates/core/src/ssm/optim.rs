//! Bounded Nelder-Mead minimizer.

pub(crate) struct NelderMead {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Initial simplex edge length.
    pub step: f64,
    /// Converged when the spread of simplex values is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Minimizes `f` from `x0`, restarting the simplex at the incumbent after
    /// each convergence until a restart no longer improves by more than `tol`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, x0: &[f64], mut f: F) -> Minimum {
        let mut best = x0.to_vec();
        self.clamp(&mut best);
        let mut best_val = f(&best);
        let mut used = 0;
        loop {
            let (x, val, it) = self.run(&best, best_val, &mut f, self.max_iter - used);
            used += it;
            let improved = best_val - val;
            if val < best_val {
                best = x;
                best_val = val;
            }
            if !(improved > self.tol) || used >= self.max_iter {
                break;
            }
        }
        Minimum {
            x: best,
            value: best_val,
            iterations: used,
        }
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        x0: &[f64],
        f0: f64,
        f: &mut F,
        budget: usize,
    ) -> (Vec<f64>, f64, usize) {
        let n = x0.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step;
            if x[i] > self.upper[i] {
                x[i] = x0[i] - self.step;
            }
            self.clamp(&mut x);
            let v = f(&x);
            simplex.push((x, v));
        }

        let mut iterations = 0;
        while iterations < budget {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            if spread.is_finite() && spread <= self.tol {
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let point = |coef: f64| -> Vec<f64> {
                let worst = &simplex[n].0;
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(worst)
                    .map(|(c, w)| c + coef * (w - c))
                    .collect();
                self.clamp(&mut p);
                p
            };

            let xr = point(-1.0);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = point(-2.0);
                let fe = f(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = point(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = point(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best = simplex[0].0.clone();
            for (x, v) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&best) {
                    *xi = bi + 0.5 * (*xi - bi);
                }
                *v = f(x);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        (x, v, iterations)
    }
}
