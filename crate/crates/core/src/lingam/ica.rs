//! FastICA with symmetric decorrelation and random restarts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::{IcaConfig, Nonlinearity};
use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::seed::{rng_for, stream};

/// `E[log cosh(v)]` for standard normal `v`.
pub const GAUSS_LOGCOSH_MEAN: f64 = 0.374_567_207_491_438;
/// `Var[log cosh(v)]` for standard normal `v`.
pub const GAUSS_LOGCOSH_VAR: f64 = 0.189_767_449_172_365;
/// `E[v^4 / 4]` for standard normal `v`.
pub const GAUSS_QUARTIC_MEAN: f64 = 0.75;
/// `Var[v^4 / 4]` for standard normal `v`.
pub const GAUSS_QUARTIC_VAR: f64 = 6.0;

const EIGEN_REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Maps centered observations to unit-variance, uncorrelated components.
    pub unmixing: DMatrix<f64>,
    /// Sum over components of the negentropy approximation.
    pub objective: f64,
    /// Whether the selected restart met the convergence tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// Index of the restart that was kept.
    pub restart: usize,
    /// The objective is within sampling noise of a Gaussian source.
    pub low_nongaussianity: bool,
}

pub(crate) struct Whitened {
    /// Whitened samples, one component per row.
    pub z: DMatrix<f64>,
    /// `z` transposed, kept to avoid a copy per iteration.
    pub zt: DMatrix<f64>,
    pub whitening: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
}

pub(crate) fn center(data: &DataMatrix) -> DMatrix<f64> {
    let x = data.values();
    let n = x.ncols() as f64;
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    c
}

pub(crate) fn whiten(centered: &DMatrix<f64>) -> Result<Whitened> {
    let (m, n) = centered.shape();
    let cov = centered * centered.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max.is_nan() || max <= 0.0 || min < EIGEN_REL_FLOOR * max {
        return Err(Error::RankDeficient {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let mut whitening = eig.eigenvectors.transpose();
    for (i, mut row) in whitening.row_iter_mut().enumerate() {
        row /= eig.eigenvalues[i].sqrt();
    }
    let z = &whitening * centered;
    Ok(Whitened {
        zt: z.transpose(),
        z,
        whitening,
        m,
        n,
    })
}

/// `(W W^T)^{-1/2} W`.
pub(crate) fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let e = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(
        &eig.eigenvalues
            .map(|d| 1.0 / d.max(f64::MIN_POSITIVE).sqrt()),
    );
    e * inv_sqrt * e.transpose() * w
}

#[inline]
fn log_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// One fixed-point update `E[g(Wz) z^T] - diag(E[g'(Wz)]) W`, followed by
/// decorrelation.
fn fixed_point_step(wh: &Whitened, w: &DMatrix<f64>, g: Nonlinearity) -> DMatrix<f64> {
    let n = wh.n as f64;
    let mut y = w * &wh.z;
    let mut dg = vec![0.0; wh.m];
    for mut col in y.column_iter_mut() {
        for (i, v) in col.iter_mut().enumerate() {
            let (gy, gpy) = match g {
                Nonlinearity::Tanh => {
                    let t = v.tanh();
                    (t, 1.0 - t * t)
                }
                Nonlinearity::Cube => (*v * *v * *v, 3.0 * *v * *v),
            };
            dg[i] += gpy;
            *v = gy;
        }
    }
    let mut next = y * &wh.zt / n;
    for (i, mut row) in next.row_iter_mut().enumerate() {
        row -= w.row(i) * (dg[i] / n);
    }
    symmetric_decorrelation(&next)
}

/// Negentropy approximation `sum_i (E[G(y_i)] - E[G(v)])^2`.
pub(crate) fn objective(wh: &Whitened, w: &DMatrix<f64>, g: Nonlinearity) -> f64 {
    let y = w * &wh.z;
    let mut sums = vec![0.0; wh.m];
    for col in y.column_iter() {
        for (s, &v) in sums.iter_mut().zip(col.iter()) {
            *s += match g {
                Nonlinearity::Tanh => log_cosh(v),
                Nonlinearity::Cube => 0.25 * v * v * v * v,
            };
        }
    }
    let gauss = match g {
        Nonlinearity::Tanh => GAUSS_LOGCOSH_MEAN,
        Nonlinearity::Cube => GAUSS_QUARTIC_MEAN,
    };
    sums.iter().map(|s| (s / wh.n as f64 - gauss).powi(2)).sum()
}

/// Objective level a Gaussian source reaches by sampling noise alone (two
/// standard deviations per component).
pub fn gaussian_objective_floor(m: usize, n: usize, g: Nonlinearity) -> f64 {
    let var = match g {
        Nonlinearity::Tanh => GAUSS_LOGCOSH_VAR,
        Nonlinearity::Cube => GAUSS_QUARTIC_VAR,
    };
    m as f64 * 4.0 * var / n as f64
}

struct RestartOutcome {
    w: DMatrix<f64>,
    objective: f64,
    converged: bool,
    iterations: usize,
}

fn run_restart(wh: &Whitened, cfg: &IcaConfig, restart: usize) -> RestartOutcome {
    let m = wh.m;
    let mut rng = rng_for(cfg.seed, &[stream::RESTART, restart as u64]);
    let init = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let next = fixed_point_step(wh, &w, cfg.nonlinearity);
        let lim = (0..m)
            .map(|i| ((next.row(i).dot(&w.row(i))).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if lim < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    RestartOutcome {
        objective: objective(wh, &w, cfg.nonlinearity),
        w,
        converged,
        iterations,
    }
}

/// Estimates an unmixing matrix for the centered data, keeping the restart
/// with the largest objective (lowest restart index on ties).
pub fn fastica(data: &DataMatrix, cfg: &IcaConfig) -> Result<IcaResult> {
    cfg.validate()?;
    let wh = whiten(&center(data))?;
    let mut best: Option<(usize, RestartOutcome)> = None;
    for r in 0..cfg.restarts {
        let out = run_restart(&wh, cfg, r);
        if best
            .as_ref()
            .is_none_or(|(_, b)| out.objective > b.objective)
        {
            best = Some((r, out));
        }
    }
    let (restart, best) = best.expect("at least one restart");
    if !best.converged {
        log::debug!(
            "FastICA reached {} iterations without converging",
            cfg.max_iterations
        );
    }
    Ok(IcaResult {
        unmixing: &best.w * &wh.whitening,
        low_nongaussianity: best.objective < gaussian_objective_floor(wh.m, wh.n, cfg.nonlinearity),
        objective: best.objective,
        converged: best.converged,
        iterations: best.iterations,
        restart,
    })
}
