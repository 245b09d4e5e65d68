//! Detection thresholds: analytic single-point critical values and Monte
//! Carlo critical values for the maximum over a scanning zone.
//!
//! For the Monte Carlo route each replication draws `N` Gaussian vectors and
//! records, per window half-length `n`, the largest value of each ratio over
//! every full window inside the sequence (candidate times `n+1 ..= N−n+1`).
//! The threshold for level `alpha` is the `⌈(1 − alpha) K⌉`-th order
//! statistic of the `K` maxima. One sequence per replication is shared by all
//! window lengths.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::AlphaAllocation;
use crate::distributions::{fill_standard_normal, fisher_upper_quantile, stream_rng};
use crate::error::{check_probability, GsrError, Result};
use crate::graph::ObservationWindow;
use crate::gsr::{compute_gsr, null_law_mu, null_law_sigma, GsrTriple};

pub const TABLE_VERSION: u32 = 1;

/// Statistic family. The declaration order is the reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Mu,
    SigmaPlus,
    SigmaMinus,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 3] = [StatisticKind::Mu, StatisticKind::SigmaPlus, StatisticKind::SigmaMinus];

    pub fn of(self, triple: &GsrTriple) -> Option<f64> {
        match self {
            StatisticKind::Mu => triple.r_mu,
            StatisticKind::SigmaPlus => triple.r_sigma_plus,
            StatisticKind::SigmaMinus => triple.r_sigma_minus,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatisticKind::Mu => "mu",
            StatisticKind::SigmaPlus => "sigma_plus",
            StatisticKind::SigmaMinus => "sigma_minus",
        })
    }
}

/// `2 + F⁻¹_{d, 2(n−1)d}(alpha) / (n − 1)`.
pub fn analytic_threshold_mu(n: usize, d: usize, alpha: f64) -> Result<f64> {
    let q = fisher_upper_quantile(null_law_mu(n, d)?, alpha)?;
    Ok(2.0 + q / (n as f64 - 1.0))
}

/// `F⁻¹_{(n−1)d, (n−1)d}(alpha)`.
pub fn analytic_threshold_sigma(n: usize, d: usize, alpha: f64) -> Result<f64> {
    fisher_upper_quantile(null_law_sigma(n, d)?, alpha)
}

pub fn analytic_threshold(kind: StatisticKind, n: usize, d: usize, alpha: f64) -> Result<f64> {
    match kind {
        StatisticKind::Mu => analytic_threshold_mu(n, d, alpha),
        StatisticKind::SigmaPlus | StatisticKind::SigmaMinus => analytic_threshold_sigma(n, d, alpha),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo { replications: usize, zone_length: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub kind: StatisticKind,
    pub n: usize,
    pub alpha: f64,
    pub rho: f64,
    pub provenance: Provenance,
}

/// Critical values keyed by `(kind, n)`, persisted as versioned JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub version: u32,
    pub dimension: usize,
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub replications: Option<usize>,
    #[serde(rename = "N")]
    pub zone_length: Option<usize>,
    pub entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    /// Analytic single-point thresholds for every cell of `alphas`.
    pub fn analytic(dimension: usize, alphas: &AlphaAllocation) -> Result<Self> {
        let entries = alphas
            .iter()
            .map(|((kind, n), alpha)| {
                Ok(ThresholdEntry {
                    kind,
                    n,
                    alpha,
                    rho: analytic_threshold(kind, n, dimension, alpha)?,
                    provenance: Provenance::Analytic,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ThresholdTable {
            version: TABLE_VERSION,
            dimension,
            seed: None,
            replications: None,
            zone_length: None,
            entries,
        })
    }

    pub fn get(&self, kind: StatisticKind, n: usize) -> Option<&ThresholdEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.n == n)
    }

    pub fn rho(&self, kind: StatisticKind, n: usize) -> Option<f64> {
        self.get(kind, n).map(|e| e.rho)
    }

    pub fn window_lengths(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.entries.iter().map(|e| e.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ThresholdTable = serde_json::from_str(text)?;
        if table.version != TABLE_VERSION {
            return Err(GsrError::Incompatible(format!(
                "threshold table version {} (expected {TABLE_VERSION})",
                table.version
            )));
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Monte Carlo calibration setup.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub window_lengths: Vec<usize>,
    pub dimension: usize,
    /// Length `N` of each simulated sequence.
    pub zone_length: usize,
    /// Number of replications `K`.
    pub replications: usize,
    pub alphas: AlphaAllocation,
    pub seed: u64,
    /// Simulated data are `mean + scale · N(0, I)`. The ratios are pivotal,
    /// so these only matter for checking that claim.
    pub data_mean: f64,
    pub data_scale: f64,
}

impl CalibrationConfig {
    pub const DEFAULT_REPLICATIONS: usize = 2000;

    /// Defaults: `K = 2000`, `N = 3 · 2 · max(n)`, seed 0, standard Gaussian data.
    pub fn new(dimension: usize, alphas: AlphaAllocation) -> Self {
        let window_lengths = alphas.windows();
        let max_n = window_lengths.iter().copied().max().unwrap_or(0);
        CalibrationConfig {
            window_lengths,
            dimension,
            zone_length: 6 * max_n,
            replications: Self::DEFAULT_REPLICATIONS,
            alphas,
            seed: 0,
            data_mean: 0.0,
            data_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_lengths.is_empty() {
            return Err(GsrError::invalid("window_lengths", "empty"));
        }
        if let Some(n) = self.window_lengths.iter().find(|&&n| n < 2) {
            return Err(GsrError::invalid("window_lengths", format!("half-length {n} < 2")));
        }
        if self.dimension == 0 {
            return Err(GsrError::invalid("dimension", "must be at least 1"));
        }
        let max_n = *self.window_lengths.iter().max().unwrap();
        if self.zone_length < 2 * max_n {
            return Err(GsrError::invalid("zone_length", format!("{} < 2 · max window {}", self.zone_length, max_n)));
        }
        if self.replications == 0 {
            return Err(GsrError::invalid("replications", "must be at least 1"));
        }
        if !(self.data_scale.is_finite() && self.data_scale > 0.0 && self.data_mean.is_finite()) {
            return Err(GsrError::invalid("data_scale", "must be positive and finite"));
        }
        for ((kind, n), alpha) in self.alphas.iter() {
            check_probability("alpha", alpha)?;
            if !self.window_lengths.contains(&n) {
                return Err(GsrError::invalid(
                    "alphas",
                    format!("{kind} level given for window {n} which is not calibrated"),
                ));
            }
        }
        Ok(())
    }
}

/// Per-replication zone maxima, `values[(kind, n)][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneMaxima {
    pub values: BTreeMap<(StatisticKind, usize), Vec<f64>>,
}

/// Maximum of each ratio over all full windows of every length in
/// `window_lengths`, for one sequence of `zone_length · dimension` draws.
fn replicate(config: &CalibrationConfig, k: usize, buffer: &mut Vec<f64>) -> Vec<[f64; 3]> {
    let d = config.dimension;
    let mut rng = stream_rng(config.seed, k as u64);
    buffer.resize(config.zone_length * d, 0.0);
    fill_standard_normal(&mut rng, buffer);
    for v in buffer.iter_mut() {
        *v = config.data_mean + config.data_scale * *v;
    }
    config
        .window_lengths
        .iter()
        .map(|&n| {
            let mut window = ObservationWindow::new(n, d).expect("validated window");
            let mut best = [f64::NEG_INFINITY; 3];
            for (t, obs) in buffer.chunks_exact(d).enumerate() {
                window.push(obs).expect("finite draws");
                if window.is_warm() {
                    let triple = compute_gsr(&window.decompose().expect("warm"), (t + 1 - n) as u64);
                    for kind in StatisticKind::ALL {
                        if let Some(r) = kind.of(&triple) {
                            best[kind.index()] = best[kind.index()].max(r);
                        }
                    }
                }
            }
            best
        })
        .collect()
}

/// Runs the replications (in parallel; the result does not depend on
/// scheduling) and returns the zone maxima.
pub fn simulate_zone_maxima(config: &CalibrationConfig) -> Result<ZoneMaxima> {
    config.validate()?;
    let per_rep: Vec<Vec<[f64; 3]>> =
        (0..config.replications).into_par_iter().map_init(Vec::new, |buf, k| replicate(config, k, buf)).collect();
    let mut values = BTreeMap::new();
    for (i, &n) in config.window_lengths.iter().enumerate() {
        for kind in StatisticKind::ALL {
            let v = per_rep.iter().map(|rep| rep[i][kind.index()]).collect();
            values.insert((kind, n), v);
        }
    }
    Ok(ZoneMaxima { values })
}

/// Order statistic `⌈(1 − alpha) K⌉` of `samples` (1-based), or `None` when
/// `K · alpha < 1`.
pub fn empirical_upper_quantile(samples: &[f64], alpha: f64) -> Option<f64> {
    let k = samples.len();
    if k == 0 || (k as f64) * alpha < 1.0 - 1e-9 {
        return None;
    }
    let rank = (((1.0 - alpha) * k as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[rank.min(k) - 1])
}

/// Bootstrap standard error of [`empirical_upper_quantile`].
pub fn bootstrap_quantile_se(samples: &[f64], alpha: f64, resamples: usize, seed: u64) -> Option<f64> {
    use rand::Rng;
    let k = samples.len();
    let mut rng = stream_rng(seed, u64::MAX);
    let mut estimates = Vec::with_capacity(resamples);
    let mut draw = vec![0.0; k];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = samples[rng.random_range(0..k)];
        }
        estimates.push(empirical_upper_quantile(&draw, alpha)?);
    }
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    Some((estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
}

/// Monte Carlo critical values for every cell of `config.alphas`.
pub fn calibrate_monte_carlo(config: &CalibrationConfig) -> Result<ThresholdTable> {
    config.validate()?;
    for ((kind, n), alpha) in config.alphas.iter() {
        if (config.replications as f64) * alpha < 1.0 - 1e-9 {
            return Err(GsrError::QuantileUnresolvable { kind, n, alpha, replications: config.replications });
        }
    }
    let maxima = simulate_zone_maxima(config)?;
    let provenance = Provenance::MonteCarlo {
        replications: config.replications,
        zone_length: config.zone_length,
        seed: config.seed,
    };
    let entries = config
        .alphas
        .iter()
        .map(|((kind, n), alpha)| ThresholdEntry {
            kind,
            n,
            alpha,
            rho: empirical_upper_quantile(&maxima.values[&(kind, n)], alpha).expect("resolvable"),
            provenance,
        })
        .collect();
    Ok(ThresholdTable {
        version: TABLE_VERSION,
        dimension: config.dimension,
        seed: Some(config.seed),
        replications: Some(config.replications),
        zone_length: Some(config.zone_length),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::allocate_alphas;
    use approx::assert_relative_eq;

    fn single(kind: StatisticKind, n: usize, alpha: f64) -> AlphaAllocation {
        AlphaAllocation::from_cells([((kind, n), alpha)]).unwrap()
    }

    #[test]
    fn analytic_thresholds_reference_values() {
        assert_relative_eq!(analytic_threshold_mu(2, 1, 0.05).unwrap(), 20.512_820_512_820_497, max_relative = 1e-9);
        assert_relative_eq!(
            analytic_threshold_mu(30, 100, 0.05).unwrap(),
            2.042_973_717_293_898_4,
            max_relative = 1e-10
        );
        assert_relative_eq!(analytic_threshold_sigma(2, 1, 0.05).unwrap(), 161.447_638_797_588_27, max_relative = 1e-9);
        for (n, d) in [(2, 1), (5, 3), (40, 20)] {
            assert_relative_eq!(analytic_threshold_sigma(n, d, 0.5).unwrap(), 1.0, max_relative = 1e-10);
            let prod = analytic_threshold_sigma(n, d, 0.1).unwrap() * analytic_threshold_sigma(n, d, 0.9).unwrap();
            assert_relative_eq!(prod, 1.0, max_relative = 1e-8);
        }
        // alpha → 1 sends the mean threshold down to 2
        let t = analytic_threshold_mu(10, 4, 1.0 - 1e-9).unwrap();
        assert!(t > 2.0 && t < 2.001);
    }

    #[test]
    fn empirical_quantile_is_order_statistic() {
        let xs: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(empirical_upper_quantile(&xs, 0.05), Some(950.0));
        assert_eq!(empirical_upper_quantile(&xs, 0.001), Some(999.0));
        assert_eq!(empirical_upper_quantile(&xs, 0.0009), None);
    }

    #[test]
    fn unresolvable_quantile_is_an_error() {
        let mut cfg = CalibrationConfig::new(2, single(StatisticKind::Mu, 5, 0.01));
        cfg.replications = 50;
        assert!(matches!(calibrate_monte_carlo(&cfg), Err(GsrError::QuantileUnresolvable { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let alphas = allocate_alphas(0.06, &StatisticKind::ALL, &[5, 10]).unwrap();
        let mut cfg = CalibrationConfig::new(3, alphas);
        cfg.zone_length = 15;
        assert!(cfg.validate().is_err());
        let mut cfg = CalibrationConfig::new(3, single(StatisticKind::Mu, 5, 0.1));
        cfg.window_lengths = vec![1, 5];
        assert!(cfg.validate().is_err());
        assert!(AlphaAllocation::from_cells([((StatisticKind::Mu, 1), 0.1)]).is_err());
    }

    #[test]
    fn calibration_is_deterministic_and_monotone_in_alpha() {
        let table = |alpha: f64| {
            let alphas = allocate_alphas(alpha, &StatisticKind::ALL, &[4, 7]).unwrap();
            let mut cfg = CalibrationConfig::new(3, alphas);
            cfg.replications = 400;
            cfg.seed = 11;
            calibrate_monte_carlo(&cfg).unwrap()
        };
        let a = table(0.3);
        assert_eq!(a, table(0.3));
        assert_eq!(a.entries.len(), 6);
        let b = table(0.06);
        for e in &a.entries {
            let tighter = b.rho(e.kind, e.n).unwrap();
            assert!(tighter >= e.rho);
            assert!(e.rho > 0.0);
            if e.kind == StatisticKind::Mu {
                assert!(e.rho > 2.0);
            }
        }
    }

    #[test]
    fn zone_maximum_dominates_single_point_threshold() {
        let alphas = allocate_alphas(0.15, &StatisticKind::ALL, &[5]).unwrap();
        let mut cfg = CalibrationConfig::new(2, alphas);
        cfg.replications = 2000;
        cfg.zone_length = 40;
        let table = calibrate_monte_carlo(&cfg).unwrap();
        for e in &table.entries {
            assert!(e.rho >= analytic_threshold(e.kind, e.n, 2, e.alpha).unwrap());
        }
    }

    #[test]
    fn table_json_round_trip() {
        let alphas = allocate_alphas(0.06, &StatisticKind::ALL, &[3, 5]).unwrap();
        let mut cfg = CalibrationConfig::new(2, alphas.clone());
        cfg.replications = 200;
        let table = calibrate_monte_carlo(&cfg).unwrap();
        let json = table.to_json().unwrap();
        assert!(json.contains("\"K\": 200"));
        assert_eq!(ThresholdTable::from_json(&json).unwrap(), table);
        let analytic = ThresholdTable::analytic(2, &alphas).unwrap();
        assert_eq!(ThresholdTable::from_json(&analytic.to_json().unwrap()).unwrap(), analytic);
        let bumped = json.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(ThresholdTable::from_json(&bumped), Err(GsrError::Incompatible(_))));
    }
}
