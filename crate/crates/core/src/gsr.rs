//! Spanning ratios and their null laws.

use serde::{Deserialize, Serialize};

use crate::distributions::FisherParams;
use crate::error::{GsrError, Result};
use crate::graph::SpanningDecomposition;

/// The three spanning ratios at one candidate change time.
///
/// A ratio whose denominator is zero is `None`; such a ratio never signals a
/// change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsrTriple {
    /// `w_full / (w_left + w_right)`; at least 2 up to rounding.
    pub r_mu: Option<f64>,
    /// `w_right / w_left`
    pub r_sigma_plus: Option<f64>,
    /// `w_left / w_right`
    pub r_sigma_minus: Option<f64>,
    /// Stream index of the first observation of the right half.
    pub t_index: u64,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn compute_gsr(decomp: &SpanningDecomposition, t_index: u64) -> GsrTriple {
    let within = decomp.w_left + decomp.w_right;
    let r_mu = ratio(decomp.w_full, within);
    debug_assert!(r_mu.is_none_or(|r| r >= 2.0 - 1e-9), "r_mu = {r_mu:?}");
    GsrTriple {
        r_mu,
        r_sigma_plus: ratio(decomp.w_right, decomp.w_left),
        r_sigma_minus: ratio(decomp.w_left, decomp.w_right),
        t_index,
    }
}

fn check_window(n: usize, d: usize) -> Result<()> {
    if n < 2 {
        return Err(GsrError::invalid("n", format!("half-length {n} < 2 has no null law")));
    }
    if d == 0 {
        return Err(GsrError::invalid("d", "dimension must be at least 1"));
    }
    Ok(())
}

/// Null law of `(R_mu − 2)(n − 1)`: `F(d, 2(n − 1)d)`.
pub fn null_law_mu(n: usize, d: usize) -> Result<FisherParams> {
    check_window(n, d)?;
    let (n, d) = (n as f64, d as f64);
    FisherParams::new(d, 2.0 * (n - 1.0) * d)
}

/// Null law of `R_sigma+` and `R_sigma-`: `F((n − 1)d, (n − 1)d)`.
pub fn null_law_sigma(n: usize, d: usize) -> Result<FisherParams> {
    check_window(n, d)?;
    let k = (n as f64 - 1.0) * d as f64;
    FisherParams::new(k, k)
}

/// Effective degrees of freedom `(Σσ²)² / Σσ⁴` for independent coordinates
/// with unequal variances.
pub fn effective_dof(variances: &[f64]) -> Result<f64> {
    if variances.is_empty() {
        return Err(GsrError::invalid("variances", "need at least one coordinate"));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(GsrError::invalid("variances", format!("{v} is not positive")));
    }
    let s: f64 = variances.iter().sum();
    let s2: f64 = variances.iter().map(|v| v * v).sum();
    Ok(s * s / s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{decompose_window, ObservationWindow};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn ratios_for_two_pairs() {
        let d = decompose_window(&pts(&[0.0, 1.0]), &pts(&[3.0, 4.0])).unwrap();
        let g = compute_gsr(&d, 2);
        assert_eq!(g.r_mu, Some(20.0));
        assert_eq!(g.r_sigma_plus, Some(1.0));
        assert_eq!(g.r_sigma_minus, Some(1.0));
        assert_eq!(g.t_index, 2);
    }

    #[test]
    fn identical_halves_have_unit_variance_ratios() {
        let d = decompose_window(&pts(&[0.3, -1.0, 2.0]), &pts(&[2.0, 0.3, -1.0])).unwrap();
        let g = compute_gsr(&d, 0);
        assert_relative_eq!(g.r_sigma_plus.unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(g.r_sigma_minus.unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_window_is_degenerate() {
        let d = decompose_window(&pts(&[4.0; 3]), &pts(&[4.0; 3])).unwrap();
        let g = compute_gsr(&d, 0);
        assert_eq!((g.r_mu, g.r_sigma_plus, g.r_sigma_minus), (None, None, None));
    }

    #[test]
    fn null_laws() {
        assert_eq!(null_law_mu(2, 1).unwrap(), FisherParams { df_num: 1.0, df_den: 2.0 });
        assert_eq!(null_law_mu(30, 100).unwrap(), FisherParams { df_num: 100.0, df_den: 5800.0 });
        assert_eq!(null_law_sigma(2, 1).unwrap(), FisherParams { df_num: 1.0, df_den: 1.0 });
        assert_eq!(null_law_sigma(30, 10).unwrap(), FisherParams { df_num: 290.0, df_den: 290.0 });
        assert!(null_law_mu(1, 3).is_err());
        assert!(null_law_sigma(5, 0).is_err());
    }

    #[test]
    fn null_mean_of_mu_excess_vanishes() {
        // E[R_mu − 2] = E[F] / (n − 1)
        let mean = |n: usize| null_law_mu(n, 3).unwrap().mean().unwrap() / (n as f64 - 1.0);
        assert!(mean(10) > mean(100));
        assert!(mean(10_000) < 1e-3);
    }

    #[test]
    fn effective_dof_values() {
        assert_eq!(effective_dof(&[1.0; 4]).unwrap(), 4.0);
        assert_relative_eq!(effective_dof(&[1.0, 4.0]).unwrap(), 25.0 / 17.0, max_relative = 1e-15);
        assert_eq!(effective_dof(&[3.7]).unwrap(), 1.0);
        assert!(effective_dof(&[1.0, 0.0]).is_err());
        assert!(effective_dof(&[]).is_err());
    }

    proptest! {
        #[test]
        fn effective_dof_bounded(v in prop::collection::vec(0.01f64..100.0, 1..20)) {
            let u = effective_dof(&v).unwrap();
            prop_assert!(u >= 1.0 - 1e-12 && u <= v.len() as f64 + 1e-12);
        }

        #[test]
        fn reciprocity_and_affine_invariance(
            seq in prop::collection::vec(-10.0f64..10.0, 24),
            a in prop::sample::select(vec![0.1, 0.5, 3.0, 10.0]),
            b in prop::collection::vec(-100.0f64..100.0, 2),
        ) {
            let obs: Vec<Vec<f64>> = seq.chunks(2).map(|c| c.to_vec()).collect();
            let moved: Vec<Vec<f64>> = obs.iter().map(|o| vec![a * o[0] + b[0], a * o[1] + b[1]]).collect();
            let g = compute_gsr(&ObservationWindow::from_observations(6, &obs).unwrap().decompose().unwrap(), 0);
            let h = compute_gsr(&ObservationWindow::from_observations(6, &moved).unwrap().decompose().unwrap(), 0);
            let (p, m) = (g.r_sigma_plus.unwrap(), g.r_sigma_minus.unwrap());
            prop_assert!((p * m - 1.0).abs() < 1e-12);
            prop_assert!(g.r_mu.unwrap() >= 2.0 - 1e-9);
            for (x, y) in [(g.r_mu, h.r_mu), (g.r_sigma_plus, h.r_sigma_plus), (g.r_sigma_minus, h.r_sigma_minus)] {
                let (x, y) = (x.unwrap(), y.unwrap());
                prop_assert!((x - y).abs() <= 1e-9 * x.abs());
            }
        }
    }
}
