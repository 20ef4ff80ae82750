//! Gaussian-process regression on a scalar input.
//!
//! RBF kernel with a constant mean (the training-target mean), fitted by
//! maximising the log marginal likelihood over (lengthscale, signal
//! variance, noise variance) with deterministic multi-start Nelder-Mead.
//! The quality meta-model runs this regressor on logit-transformed
//! quality values, one regressor per quality component.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{EvitError, Result};

const NOISE_FLOOR: f64 = 1e-6;
const SIGNAL_FLOOR: f64 = 1e-8;
const LENGTHSCALE_RANGE: (f64, f64) = (1e-3, 1e3);
const VARIANCE_CEIL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    fn clamped(self) -> Self {
        Self {
            lengthscale: self.lengthscale.clamp(LENGTHSCALE_RANGE.0, LENGTHSCALE_RANGE.1),
            signal_variance: self.signal_variance.clamp(SIGNAL_FLOOR, VARIANCE_CEIL),
            noise_variance: self.noise_variance.clamp(NOISE_FLOOR, VARIANCE_CEIL),
        }
    }
}

/// Fitted regressor holding its training data and factorised kernel.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    xs: Vec<f64>,
    ys: Vec<f64>,
    y_mean: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel_matrix(xs: &[f64], hyper: &GpHyper) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = xs[i] - xs[j];
        let k = hyper.signal_variance * (-d * d / (2.0 * hyper.lengthscale * hyper.lengthscale)).exp();
        if i == j {
            k + hyper.noise_variance
        } else {
            k
        }
    })
}

fn factorise(xs: &[f64], hyper: &GpHyper) -> Option<Cholesky<f64, Dyn>> {
    let base = kernel_matrix(xs, hyper);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let k = if jitter > 0.0 {
            &base + DMatrix::<f64>::identity(xs.len(), xs.len()) * jitter
        } else {
            base.clone()
        };
        if let Some(chol) = k.cholesky() {
            return Some(chol);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            break;
        }
    }
    None
}

fn log_marginal(xs: &[f64], yc: &DVector<f64>, hyper: &GpHyper) -> f64 {
    let Some(chol) = factorise(xs, hyper) else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(yc);
    let n = xs.len() as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * yc.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn hyper_from_log(p: &[f64; 3]) -> GpHyper {
    GpHyper {
        lengthscale: p[0].exp(),
        signal_variance: p[1].exp(),
        noise_variance: p[2].exp(),
    }
    .clamped()
}

/// Deterministic Nelder-Mead on the negative log marginal likelihood.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(f: &F, start: [f64; 3], max_iter: usize) -> [f64; 3] {
    let step = 0.5;
    let mut simplex: Vec<[f64; 3]> = vec![start];
    for i in 0..3 {
        let mut p = start;
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(f).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let simplex_sorted: Vec<[f64; 3]> = order.iter().map(|&i| simplex[i]).collect();
        let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;

        if (values[3] - values[0]).abs() < 1e-12 {
            break;
        }

        let mut centroid = [0.0; 3];
        for p in simplex.iter().take(3) {
            for i in 0..3 {
                centroid[i] += p[i] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflect = |c: f64, w: f64| c + (c - w);
        let xr: [f64; 3] = std::array::from_fn(|i| reflect(centroid[i], worst[i]));
        let fr = f(&xr);

        if fr < values[0] {
            let xe: [f64; 3] = std::array::from_fn(|i| centroid[i] + 2.0 * (centroid[i] - worst[i]));
            let fe = f(&xe);
            if fe < fr {
                simplex[3] = xe;
                values[3] = fe;
            } else {
                simplex[3] = xr;
                values[3] = fr;
            }
        } else if fr < values[2] {
            simplex[3] = xr;
            values[3] = fr;
        } else {
            let xc: [f64; 3] = std::array::from_fn(|i| centroid[i] + 0.5 * (worst[i] - centroid[i]));
            let fc = f(&xc);
            if fc < values[3] {
                simplex[3] = xc;
                values[3] = fc;
            } else {
                for i in 1..4 {
                    for j in 0..3 {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    simplex[best]
}

impl GpRegressor {
    /// Fit hyper-parameters by maximum marginal likelihood with fixed
    /// multi-start initialisation; deterministic for a given dataset.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(EvitError::Validation(format!(
                "gp: {} inputs vs {} targets",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(EvitError::Precondition(
                "gp: at least 2 training points required".into(),
            ));
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(EvitError::Validation("gp: non-finite training value".into()));
        }

        let n = xs.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let yc = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - y_mean));
        let y_var = (yc.dot(&yc) / n).max(1e-4);
        let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x_range = (x_max - x_min).max(1e-2);

        let objective = |p: &[f64; 3]| -log_marginal(xs, &yc, &hyper_from_log(p));

        let mut starts = Vec::new();
        for ls in [0.1 * x_range, 0.3 * x_range, 1.0 * x_range] {
            for noise_frac in [1e-4, 1e-2] {
                starts.push([ls.ln(), y_var.ln(), (noise_frac * y_var).max(NOISE_FLOOR).ln()]);
            }
        }

        let mut best_p = starts[0];
        let mut best_f = f64::INFINITY;
        for start in starts {
            let p = nelder_mead(&objective, start, 200);
            let fv = objective(&p);
            if fv < best_f {
                best_f = fv;
                best_p = p;
            }
        }
        if !best_f.is_finite() {
            return Err(EvitError::Numerical("gp: marginal likelihood not finite for any candidate".into()));
        }
        let hyper = hyper_from_log(&best_p);
        Self::from_parts(xs.to_vec(), ys.to_vec(), hyper)
    }

    /// Rebuild a regressor from stored training data and hyper-parameters.
    pub fn from_parts(xs: Vec<f64>, ys: Vec<f64>, hyper: GpHyper) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(EvitError::Validation("gp: invalid stored model".into()));
        }
        let hyper = hyper.clamped();
        let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let yc = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - y_mean));
        let chol = factorise(&xs, &hyper)
            .ok_or_else(|| EvitError::Numerical("gp: kernel matrix not positive definite".into()))?;
        let alpha = chol.solve(&yc);
        Ok(Self { xs, ys, y_mean, hyper, chol, alpha })
    }

    /// Latent predictive mean and variance at `x` (noise-free).
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let k_star = DVector::from_fn(n, |i, _| {
            let d = self.xs[i] - x;
            self.hyper.signal_variance
                * (-d * d / (2.0 * self.hyper.lengthscale * self.hyper.lengthscale)).exp()
        });
        let mean = self.y_mean + k_star.dot(&self.alpha);
        let v = self.chol.solve(&k_star);
        let variance = (self.hyper.signal_variance - k_star.dot(&v)).max(0.0);
        (mean, variance)
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn training_inputs(&self) -> &[f64] {
        &self.xs
    }

    pub fn training_targets(&self) -> &[f64] {
        &self.ys
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_recover_constant_mean() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ys = vec![1.3862943611198906; 11]; // logit(0.8)
        let gp = GpRegressor::fit(&xs, &ys).unwrap();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let (m, v) = gp.predict(x);
            assert!((m - ys[0]).abs() < 1e-6, "mean {m} at {x}");
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn interpolates_smooth_function() {
        let xs: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        let gp = GpRegressor::fit(&xs, &ys).unwrap();
        for x in [0.2, 0.5, 0.8] {
            let (m, _) = gp.predict(x);
            assert!((m - (2.0 * x).sin()).abs() < 0.05, "mean {m} at {x}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let xs: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 + x * x).collect();
        let a = GpRegressor::fit(&xs, &ys).unwrap();
        let b = GpRegressor::fit(&xs, &ys).unwrap();
        assert_eq!(a.hyper(), b.hyper());
    }

    #[test]
    fn variance_shrinks_near_data() {
        let xs = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let ys = vec![0.1, 0.4, 0.2, -0.3, 0.5];
        let gp = GpRegressor::fit(&xs, &ys).unwrap();
        let (_, v_at_data) = gp.predict(0.5);
        let (_, v_far) = gp.predict(5.0);
        assert!(v_at_data <= v_far + 1e-12);
    }

    #[test]
    fn round_trips_through_parts() {
        let xs = vec![0.0, 0.3, 0.7, 1.0];
        let ys = vec![0.2, 0.5, 0.1, 0.9];
        let gp = GpRegressor::fit(&xs, &ys).unwrap();
        let rebuilt = GpRegressor::from_parts(
            gp.training_inputs().to_vec(),
            gp.training_targets().to_vec(),
            gp.hyper(),
        )
        .unwrap();
        for x in [0.0, 0.4, 1.2] {
            let (m1, v1) = gp.predict(x);
            let (m2, v2) = rebuilt.predict(x);
            assert_eq!(m1, m2);
            assert_eq!(v1, v2);
        }
    }
}
