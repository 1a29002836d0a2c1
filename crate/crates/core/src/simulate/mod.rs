//! Synthetic LiNGAM data and calibration experiments.

mod experiment;
mod presets;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

pub use experiment::{
    ks_distance_uniform, rejection_probability, run_experiment, run_experiment_with,
    CalibrationReport, HypothesisCalibration, PvalueRecord, RejectionPoint, SimConfig,
};
pub use presets::{preset, preset_names, Preset};

use crate::error::{Error, Result};
use crate::model::{total_effects, ConnectionMatrix, DataMatrix};
use crate::seed::rng_for;

/// Inverse-CDF Laplace draws with location 0 and scale `scale_b`
/// (variance `2 * scale_b^2`).
pub fn sample_laplace(scale_b: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(scale_b > 0.0 && scale_b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Laplace scale must be positive, got {scale_b}"
        )));
    }
    let mut rng = rng_for(seed, &[]);
    Ok((0..count)
        .map(|_| laplace_draw(&mut rng, scale_b))
        .collect())
}

#[inline]
fn laplace_draw<R: Rng>(rng: &mut R, scale_b: f64) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -scale_b * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Distribution of the external influences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseModel {
    Laplace { variance: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Laplace { variance: 2.0 }
    }
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Laplace { variance } => *variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.variance();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {v}"
            )));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Laplace { variance } => laplace_draw(rng, (variance / 2.0).sqrt()),
        }
    }
}

/// Draws `n` samples of `x = (I - B)^-1 e`.
///
/// `B` needs `I - B` invertible; it does not have to be acyclic, so feedback
/// models read as equilibrium equations are accepted.
pub fn generate_dataset(
    b: &ConnectionMatrix,
    n: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<DataMatrix> {
    noise.validate()?;
    let a = total_effects(b)?;
    let m = b.dim();
    let mut rng = rng_for(seed, &[]);
    let e = DMatrix::from_fn(m, n, |_, _| noise.draw(&mut rng));
    DataMatrix::with_default_names(a.matrix() * e)
}

/// `[[0, b], [b, 0]]`: symmetric two-variable model.
pub fn two_var_model(b: f64) -> ConnectionMatrix {
    ConnectionMatrix::from_rows(&[vec![0.0, b], vec![b, 0.0]]).expect("valid model")
}

/// Six-variable DAG with every edge weight equal to `b`.
pub fn six_var_model(b: f64) -> ConnectionMatrix {
    let z = 0.0;
    ConnectionMatrix::from_rows(&[
        vec![z, z, z, z, z, z],
        vec![b, z, z, z, z, z],
        vec![b, z, z, z, z, z],
        vec![b, b, z, z, z, z],
        vec![z, b, z, b, z, z],
        vec![b, b, b, z, b, z],
    ])
    .expect("valid model")
}

/// Edges `(cause, effect)` of the six-variable model.
pub fn six_var_edges() -> Vec<(usize, usize)> {
    let b = six_var_model(1.0);
    let mut edges = Vec::new();
    for effect in 0..6 {
        for cause in 0..6 {
            if b.get(effect, cause) != 0.0 {
                edges.push((cause, effect));
            }
        }
    }
    edges
}

/// Population covariance `(I - B)^-1 diag(v) (I - B)^-T`.
pub fn model_covariance(b: &ConnectionMatrix, noise: &NoiseModel) -> Result<DMatrix<f64>> {
    let a = total_effects(b)?;
    Ok(a.matrix() * a.matrix().transpose() * noise.variance())
}
