//! Power bounds for the ratio tests and a Monte Carlo check of them.
//!
//! Expected spanning quantities (`mu_left`, `mu_right`, `mu_rem`) are
//! noncentralities in data units: a mean shift `δ` between the halves of a
//! window of half-length `n` gives `mu_rem = n‖δ‖²/2`, and halves with
//! identical means give `mu_left = mu_right = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::analytic_threshold_mu;
use crate::distributions::{fill_standard_normal, fisher_upper_quantile, stream_rng, FisherParams};
use crate::error::{check_probability, GsrError, Result};
use crate::graph::decompose_window;
use crate::gsr::compute_gsr;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub n: usize,
    pub d: usize,
    /// Per-window level.
    pub alpha: f64,
    /// Target type-II error.
    pub beta: f64,
    pub sigma2: f64,
    pub mu_left: f64,
    pub mu_right: f64,
    pub mu_rem: f64,
}

impl PowerQuery {
    /// Query with all expected spanning quantities zero.
    pub fn new(n: usize, d: usize, alpha: f64, beta: f64, sigma2: f64) -> Self {
        PowerQuery { n, d, alpha, beta, sigma2, mu_left: 0.0, mu_right: 0.0, mu_rem: 0.0 }
    }

    /// Sets `mu_rem` for a shift of `delta` in every coordinate.
    pub fn with_mean_shift(mut self, delta: f64) -> Self {
        self.mu_rem = mean_shift_noncentrality(self.n, self.d, delta);
        self
    }

    pub fn with_mu_rem(mut self, mu_rem: f64) -> Self {
        self.mu_rem = mu_rem;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GsrError::invalid("n", format!("half-length {} < 2", self.n)));
        }
        if self.d == 0 {
            return Err(GsrError::invalid("d", "dimension must be at least 1"));
        }
        check_probability("alpha", self.alpha)?;
        check_probability("beta", self.beta)?;
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(GsrError::invalid("sigma2", format!("{} is not positive", self.sigma2)));
        }
        for (name, v) in [("mu_left", self.mu_left), ("mu_right", self.mu_right), ("mu_rem", self.mu_rem)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GsrError::invalid(name, format!("{v} is not a nonnegative real")));
            }
        }
        Ok(())
    }

    /// Per-coordinate shift realising `mu_rem`.
    pub fn per_coordinate_shift(&self) -> f64 {
        (2.0 * self.mu_rem / (self.n * self.d) as f64).sqrt()
    }
}

/// `n · d · delta² / 2`.
pub fn mean_shift_noncentrality(n: usize, d: usize, delta: f64) -> f64 {
    0.5 * (n * d) as f64 * delta * delta
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Plus,
    Minus,
}

/// Constants `(C1, C2)` of the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
}

fn log_two_over(beta: f64) -> f64 {
    (2.0 / beta).ln()
}

pub fn mu_constants(q: &PowerQuery) -> Result<BoundConstants> {
    q.validate()?;
    let big_n = q.d as f64;
    let big_d = 2.0 * (q.n as f64 - 1.0) * q.d as f64;
    let l = log_two_over(q.beta);
    let f = fisher_upper_quantile(FisherParams::new(big_n, big_d)?, q.alpha)?;
    let c1 = 5.0 * big_n / big_d * f;
    let c2 = (big_d + 2.0 * (big_d * l).sqrt() + 4.0 * l) - 1.25 * (big_n - 2.0 * (big_n * l).sqrt() - 10.0 * l);
    Ok(BoundConstants { c1, c2 })
}

pub fn sigma_constants(q: &PowerQuery) -> Result<BoundConstants> {
    q.validate()?;
    let k = (q.n as f64 - 1.0) * q.d as f64;
    let l = log_two_over(q.beta);
    let f = fisher_upper_quantile(FisherParams::new(k, k)?, q.alpha)?;
    let c1 = 2.5 * f;
    let c2 = 1.25 * f * (k + 2.0 * (k * l).sqrt() + 4.0 * l) - 1.25 * (k - 2.0 * (k * l).sqrt() - 10.0 * l);
    Ok(BoundConstants { c1, c2 })
}

/// `Δ_mu(n) = C1 (mu_left + mu_right + C2 σ²)`, clamped at 0. A residual
/// spanning mean `mu_rem ≥ Δ_mu(n)` guarantees power at least `1 − β`.
pub fn delta_mu(q: &PowerQuery) -> Result<f64> {
    let BoundConstants { c1, c2 } = mu_constants(q)?;
    Ok((c1 * (q.mu_left + q.mu_right + c2 * q.sigma2)).max(0.0))
}

/// Bound on `mu_right` (plus) or `mu_left` (minus) for the variance tests:
/// `C1 · mu_other + C2 σ²`, clamped at 0.
pub fn delta_sigma(q: &PowerQuery, direction: Direction) -> Result<f64> {
    let BoundConstants { c1, c2 } = sigma_constants(q)?;
    let other = match direction {
        Direction::Plus => q.mu_left,
        Direction::Minus => q.mu_right,
    };
    Ok((c1 * other + c2 * q.sigma2).max(0.0))
}

/// `θ(α, β) = √(2 ln(1 + 4(1 − α − β)²))`.
pub fn theta(alpha: f64, beta: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    if !(beta > 0.0 && beta < 1.0 - alpha) {
        return Err(GsrError::invalid("beta", format!("{beta} is not in (0, 1 - alpha)")));
    }
    let gap = 1.0 - alpha - beta;
    Ok((2.0 * (4.0 * gap * gap).ln_1p()).sqrt())
}

/// `θ(α, β) √(nd) σ²`: below this separation no level-α test has power `1 − β`.
pub fn minimum_radius(n: usize, d: usize, alpha: f64, beta: f64, sigma2: f64) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(GsrError::invalid("n", "n and d must be positive"));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(GsrError::invalid("sigma2", format!("{sigma2} is not positive")));
    }
    Ok(theta(alpha, beta)? * ((n * d) as f64).sqrt() * sigma2)
}

/// `(β, Δ_mu)` pairs for a fixed query.
pub fn delta_mu_curve(base: &PowerQuery, betas: &[f64]) -> Result<Vec<(f64, f64)>> {
    betas.iter().map(|&beta| Ok((beta, delta_mu(&PowerQuery { beta, ..*base })?))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub standard_error: f64,
    pub detections: usize,
    pub replications: usize,
}

pub const MIN_POWER_REPLICATIONS: usize = 100;

/// Monte Carlo rejection rate of the single-window mean test at level
/// `q.alpha`. Each replication draws a window of `2n` observations with
/// variance `σ²` whose right half is shifted by `q.per_coordinate_shift()`.
pub fn empirical_power(q: &PowerQuery, replications: usize, seed: u64) -> Result<PowerEstimate> {
    q.validate()?;
    if replications < MIN_POWER_REPLICATIONS {
        return Err(GsrError::invalid("replications", format!("{replications} < {MIN_POWER_REPLICATIONS}")));
    }
    let (n, d) = (q.n, q.d);
    let rho = analytic_threshold_mu(n, d, q.alpha)?;
    let shift = q.per_coordinate_shift();
    let sd = q.sigma2.sqrt();
    let detections: usize = (0..replications)
        .into_par_iter()
        .map_init(
            || vec![0.0; 2 * n * d],
            |buf, k| {
                let mut rng = stream_rng(seed, k as u64);
                fill_standard_normal(&mut rng, buf);
                for v in buf.iter_mut() {
                    *v *= sd;
                }
                for v in buf[n * d..].iter_mut() {
                    *v += shift;
                }
                let rows: Vec<&[f64]> = buf.chunks_exact(d).collect();
                let decomp = decompose_window(&rows[..n], &rows[n..]).expect("finite draws");
                let fired = compute_gsr(&decomp, n as u64).r_mu.is_some_and(|r| r > rho);
                usize::from(fired)
            },
        )
        .sum();
    let p = detections as f64 / replications as f64;
    Ok(PowerEstimate {
        power: p,
        standard_error: (p * (1.0 - p) / replications as f64).sqrt(),
        detections,
        replications,
    })
}
