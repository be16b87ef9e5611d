//! Recursive least squares over a linear utility model.
//!
//! The model keeps the weight vector `w` and the inverse of
//! `C = Σ x xᵀ + λI`. Each update is a rank-one correction of `C⁻¹`
//! (Sherman–Morrison / Woodbury), O(d²) per example.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineLinearModel {
    weights: Vec<f64>,
    /// Row-major `d × d`.
    c_inv: Vec<f64>,
    lambda: f64,
    updates: u64,
}

impl OnlineLinearModel {
    /// `C⁻¹ = I/λ`, weights drawn uniformly from `[-0.5, 0.5]`.
    pub fn new(dim: usize, lambda: f64, rng_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let weights = (0..dim).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        Self::with_weights(weights, lambda)
    }

    pub fn with_weights(weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidModel(format!("lambda must be positive, got {lambda}")));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        }
        let d = weights.len();
        let mut c_inv = vec![0.0; d * d];
        for i in 0..d {
            c_inv[i * d + i] = 1.0 / lambda;
        }
        Ok(Self {
            weights,
            c_inv,
            lambda,
            updates: 0,
        })
    }

    pub(crate) fn from_parts(weights: Vec<f64>, c_inv: Vec<f64>, lambda: f64, updates: u64) -> Result<Self> {
        let d = weights.len();
        if c_inv.len() != d * d {
            return Err(Error::Dimension {
                expected: d * d,
                got: c_inv.len(),
            });
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidModel(format!("lambda must be positive, got {lambda}")));
        }
        if weights.iter().chain(&c_inv).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            weights,
            c_inv,
            lambda,
            updates,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major inverse covariance.
    pub fn c_inv(&self) -> &[f64] {
        &self.c_inv
    }

    /// `xᵀw`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "feature dimension mismatch");
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }

        // k = C⁻¹x; C⁻¹ is symmetric so C⁻¹ x xᵀ C⁻¹ = k kᵀ.
        let mut k = vec![0.0; d];
        for (i, ki) in k.iter_mut().enumerate() {
            let row = &self.c_inv[i * d..(i + 1) * d];
            *ki = row.iter().zip(x).map(|(c, v)| c * v).sum();
        }
        let denom = 1.0 + x.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..d {
            for j in i..d {
                let v = self.c_inv[i * d + j] - k[i] * k[j] / denom;
                let u = self.c_inv[j * d + i] - k[j] * k[i] / denom;
                let s = 0.5 * (v + u);
                self.c_inv[i * d + j] = s;
                self.c_inv[j * d + i] = s;
            }
        }

        // Gain with the updated inverse, C_t⁻¹x = k / denom; residual with
        // the pre-update weights.
        let residual = y - self.predict(x);
        for (w, ki) in self.weights.iter_mut().zip(&k) {
            *w += ki / denom * residual;
        }
        self.updates += 1;
        Ok(())
    }
}
