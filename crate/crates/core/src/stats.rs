//! Two-sample rank test for comparing coverage across repetitions.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_SAMPLE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MannWhitney {
    /// Pairs `(x, y)` with `x > y`, ties counted as one half.
    pub u_a: f64,
    pub u_b: f64,
    pub z: f64,
    pub p_two_sided: f64,
    /// Probability under the null of a `U` at least as large as `u_a`.
    pub p_greater: f64,
}

/// Mann-Whitney U test of sample `a` against sample `b`, with the normal
/// approximation and the tie-corrected variance. No continuity correction.
/// Both samples need at least [`MIN_SAMPLE`] values.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.len().min(b.len()) < MIN_SAMPLE {
        return Err(Error::SampleSize {
            min: MIN_SAMPLE,
            got: a.len().min(b.len()),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += mid * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }

    let u_a = rank_sum_a - na * (na + 1.0) / 2.0;
    let u_b = na * nb - u_a;
    let mean = na * nb / 2.0;
    let var = if n > 1.0 {
        na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    } else {
        0.0
    };
    if var <= 0.0 {
        return Ok(MannWhitney {
            u_a,
            u_b,
            z: 0.0,
            p_two_sided: 1.0,
            p_greater: 0.5,
        });
    }
    let z = (u_a - mean) / var.sqrt();
    let normal = Normal::standard();
    Ok(MannWhitney {
        u_a,
        u_b,
        z,
        p_two_sided: (2.0 * normal.sf(z.abs())).min(1.0),
        p_greater: normal.sf(z),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
